//! Guided decoding: re-weight the base model's next-token distribution by
//! `exp(gamma * score)` and pick tokens greedily, by beam lookahead, or
//! evaluate the resulting sampling distribution exactly.

use crate::error::{Error, Result};
use crate::value::{ensemble_scores, ExplicitValueModel, GuidanceScores, ImplicitValueModel};
use crate::world::{expected_rewards, Context, PromptRows, TabularPolicy, ToyTask};

/// Source of per-token guidance scores.
#[derive(Debug, Clone)]
pub enum Guidance {
    None,
    Explicit(ExplicitValueModel),
    Implicit(ImplicitValueModel),
    /// Weighted sum of the members' scores, computed per context.
    Ensemble { members: Vec<Guidance>, weights: Vec<f64> },
}

impl Guidance {
    pub fn ensemble(members: Vec<Guidance>, weights: Vec<f64>) -> Result<Self> {
        if members.len() != weights.len() || members.is_empty() {
            return Err(Error::DimensionMismatch { expected: members.len(), actual: weights.len() });
        }
        Ok(Guidance::Ensemble { members, weights })
    }

    /// Scores for `ctx`, or `None` when there is no guidance.
    pub fn scores(&self, ctx: Context) -> Result<Option<GuidanceScores>> {
        Ok(match self {
            Guidance::None => None,
            Guidance::Explicit(m) => Some(m.scores(ctx)),
            Guidance::Implicit(m) => Some(m.scores(ctx)?),
            Guidance::Ensemble { members, weights } => {
                let parts = members
                    .iter()
                    .map(|m| m.scores(ctx)?.ok_or_else(|| Error::InvalidArgument("ensemble member without scores".into())))
                    .collect::<Result<Vec<_>>>()?;
                Some(ensemble_scores(&parts, weights)?)
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub width: usize,
    pub expansion: usize,
    pub lookahead: usize,
}

impl BeamConfig {
    pub fn new(width: usize, expansion: usize, lookahead: usize) -> Result<Self> {
        if width == 0 || expansion == 0 || lookahead == 0 {
            return Err(Error::InvalidArgument(format!(
                "beam width, expansion and lookahead must be >= 1 (got {width}, {expansion}, {lookahead})"
            )));
        }
        Ok(Self { width, expansion, lookahead })
    }

    pub fn greedy() -> Self {
        Self { width: 1, expansion: 1, lookahead: 1 }
    }
}

/// Unnormalised guided weights `p[y] * exp(gamma * (s[y] - max s))`. The
/// shift by the maximum keeps `exp` in range and leaves the weights
/// bit-identical to `p` when the scores are constant or `gamma = 0`.
pub fn guided_weights(base_probs: &[f64], scores: Option<&GuidanceScores>, gamma: f64) -> Result<Vec<f64>> {
    if !gamma.is_finite() {
        return Err(Error::NonFinite("guidance strength".into()));
    }
    let Some(scores) = scores else {
        return Ok(base_probs.to_vec());
    };
    let s = scores.values();
    if s.len() != base_probs.len() {
        return Err(Error::DimensionMismatch { expected: base_probs.len(), actual: s.len() });
    }
    if s.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("guidance score".into()));
    }
    let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(base_probs
        .iter()
        .zip(s)
        .map(|(p, x)| p * (gamma * (x - top)).exp())
        .collect())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `k` largest entries, best first; ties by lower index.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// `argmax_y base_probs[y] * exp(gamma * scores[y])`.
pub fn guided_next_token(base_probs: &[f64], scores: &GuidanceScores, gamma: f64) -> Result<usize> {
    Ok(argmax(&guided_weights(base_probs, Some(scores), gamma)?))
}

/// Plain greedy decoding of the base policy.
pub fn greedy_decode(policy: &TabularPolicy, prompt: usize, horizon: usize) -> Result<Vec<usize>> {
    let mut seq = Vec::with_capacity(horizon);
    let mut ctx = Context::start(prompt);
    for _ in 0..horizon {
        let tok = argmax(&policy.probs(ctx)?);
        seq.push(tok);
        ctx = Context::after(prompt, tok);
    }
    Ok(seq)
}

/// Greedy decoding under guidance.
pub fn guided_decode(
    policy: &TabularPolicy,
    guidance: &Guidance,
    prompt: usize,
    gamma: f64,
    horizon: usize,
) -> Result<Vec<usize>> {
    let mut seq = Vec::with_capacity(horizon);
    let mut ctx = Context::start(prompt);
    for _ in 0..horizon {
        let w = guided_weights(&policy.probs(ctx)?, guidance.scores(ctx)?.as_ref(), gamma)?;
        let tok = argmax(&w);
        seq.push(tok);
        ctx = Context::after(prompt, tok);
    }
    Ok(seq)
}

#[derive(Debug, Clone)]
struct Beam {
    tokens: Vec<usize>,
    score: f64,
}

/// Beam search over guided weights. Every `lookahead` steps each beam is
/// expanded by its `expansion` best guided candidates and the `width` best
/// partial sequences survive; in between, each beam extends by its single
/// best candidate. Partial sequences are scored by the summed log guided
/// weight `log p + gamma * s`.
pub fn beam_guided_decode(
    policy: &TabularPolicy,
    guidance: &Guidance,
    prompt: usize,
    gamma: f64,
    beam: BeamConfig,
    horizon: usize,
) -> Result<Vec<usize>> {
    let beam = BeamConfig::new(beam.width, beam.expansion, beam.lookahead)?;
    let mut beams = vec![Beam { tokens: Vec::with_capacity(horizon), score: 0.0 }];
    for step in 0..horizon {
        let branch = if step % beam.lookahead == 0 { beam.expansion } else { 1 };
        let mut next = Vec::with_capacity(beams.len() * branch);
        for b in &beams {
            let ctx = match b.tokens.last() {
                None => Context::start(prompt),
                Some(&t) => Context::after(prompt, t),
            };
            let probs = policy.probs(ctx)?;
            let scores = guidance.scores(ctx)?;
            let w = guided_weights(&probs, scores.as_ref(), gamma)?;
            for tok in top_k(&w, branch) {
                let s = scores.as_ref().map_or(0.0, |s| s.values()[tok]);
                let mut tokens = b.tokens.clone();
                tokens.push(tok);
                next.push(Beam { tokens, score: b.score + probs[tok].ln() + gamma * s });
            }
        }
        next.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens)));
        next.truncate(beam.width);
        beams = next;
    }
    Ok(beams.into_iter().next().map(|b| b.tokens).unwrap_or_default())
}

/// Greedy decoding of the preference-weighted mixture of several policies'
/// next-token probabilities.
pub fn logit_ensemble_decode(policies: &[TabularPolicy], mu: &[f64], prompt: usize, horizon: usize) -> Result<Vec<usize>> {
    check_ensemble(policies, mu)?;
    let mut seq = Vec::with_capacity(horizon);
    let mut ctx = Context::start(prompt);
    for _ in 0..horizon {
        let tok = argmax(&mixture(policies, mu, ctx)?);
        seq.push(tok);
        ctx = Context::after(prompt, tok);
    }
    Ok(seq)
}

fn check_ensemble(policies: &[TabularPolicy], mu: &[f64]) -> Result<()> {
    let first = policies
        .first()
        .ok_or_else(|| Error::InvalidArgument("no policies to ensemble".into()))?;
    if policies.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: policies.len(), actual: mu.len() });
    }
    if policies.iter().any(|p| p.layout() != first.layout()) {
        return Err(Error::ShapeMismatch("ensembled policies differ in layout".into()));
    }
    Ok(())
}

fn mixture(policies: &[TabularPolicy], mu: &[f64], ctx: Context) -> Result<Vec<f64>> {
    let mut acc: Option<Vec<f64>> = None;
    for (p, &w) in policies.iter().zip(mu) {
        if w == 0.0 {
            continue;
        }
        let probs = p.probs(ctx)?;
        match acc.as_mut() {
            None => acc = Some(probs.iter().map(|x| w * x).collect()),
            Some(a) => a.iter_mut().zip(&probs).for_each(|(a, x)| *a += w * x),
        }
    }
    Ok(acc.unwrap_or_else(|| vec![0.0; policies[0].layout().vocab_size]))
}

/// A complete decoding system: either a (merged) base policy steered by
/// guidance, or a probability-level ensemble of several policies.
#[derive(Debug, Clone)]
pub enum DecodingSystem {
    Guided { policy: TabularPolicy, guidance: Guidance, gamma: f64 },
    LogitEnsemble { policies: Vec<TabularPolicy>, mu: Vec<f64> },
}

impl DecodingSystem {
    pub fn base(policy: TabularPolicy) -> Self {
        DecodingSystem::Guided { policy, guidance: Guidance::None, gamma: 0.0 }
    }

    /// Normalised next-token distribution of the system at `ctx`.
    pub fn distribution(&self, ctx: Context) -> Result<Vec<f64>> {
        match self {
            DecodingSystem::Guided { policy, guidance, gamma } => {
                let w = guided_weights(&policy.probs(ctx)?, guidance.scores(ctx)?.as_ref(), *gamma)?;
                let total: f64 = w.iter().sum();
                Ok(w.into_iter().map(|x| x / total).collect())
            }
            DecodingSystem::LogitEnsemble { policies, mu } => {
                check_ensemble(policies, mu)?;
                let m = mixture(policies, mu, ctx)?;
                let total: f64 = m.iter().sum();
                Ok(m.into_iter().map(|x| x / total).collect())
            }
        }
    }

    pub fn rows(&self, prompt: usize, vocab: usize) -> Result<PromptRows> {
        (0..=vocab)
            .map(|c| self.distribution(if c == vocab { Context::start(prompt) } else { Context::after(prompt, c) }))
            .collect()
    }

    pub fn greedy(&self, prompt: usize, horizon: usize) -> Result<Vec<usize>> {
        match self {
            DecodingSystem::Guided { policy, guidance, gamma } => guided_decode(policy, guidance, prompt, *gamma, horizon),
            DecodingSystem::LogitEnsemble { policies, mu } => logit_ensemble_decode(policies, mu, prompt, horizon),
        }
    }

    /// Exact expected rewards when sampling from the system's distribution.
    pub fn expected_rewards(&self, task: &ToyTask, prompt: usize) -> Result<Vec<f64>> {
        expected_rewards(task, &self.rows(prompt, task.vocab_size)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::{reward_vector, softmax, Objective, TableLayout};

    fn s(x: &[f64]) -> GuidanceScores {
        GuidanceScores::new(x.to_vec()).unwrap()
    }

    #[test]
    fn next_token_examples() {
        assert_eq!(guided_next_token(&[0.6, 0.4], &s(&[0.0, 1.0]), 0.0).unwrap(), 0);
        assert_eq!(guided_next_token(&[0.6, 0.4], &s(&[0.0, 1.0]), 2f64.ln()).unwrap(), 1);
        for gamma in [0.0, 0.3, 5.0, 100.0] {
            assert_eq!(guided_next_token(&[0.2, 0.5, 0.3], &s(&[4.0, 4.0, 4.0]), gamma).unwrap(), 1);
        }
        assert_eq!(guided_next_token(&[0.5, 0.5], &s(&[0.0, 0.0]), 1.0).unwrap(), 0);
        assert!(guided_next_token(&[0.5, 0.5], &s(&[0.0]), 1.0).is_err());
        assert!(guided_next_token(&[0.5, 0.5], &s(&[0.0, 0.0]), f64::NAN).is_err());
        assert!(GuidanceScores::new(vec![f64::INFINITY]).is_err());
    }

    fn policy(v: usize, seed: usize) -> TabularPolicy {
        let layout = TableLayout { num_prompts: 2, vocab_size: v };
        let logits = (0..layout.len()).map(|i| (((i + seed) * 2654435761) % 1000) as f64 / 250.0 - 2.0).collect();
        TabularPolicy::from_logits(layout, logits).unwrap()
    }

    #[test]
    fn no_guidance_is_base_greedy() {
        let p = policy(6, 3);
        for prompt in 0..2 {
            let base = greedy_decode(&p, prompt, 7).unwrap();
            assert_eq!(guided_decode(&p, &Guidance::None, prompt, 3.0, 7).unwrap(), base);
            let vm = ExplicitValueModel::from_table(p.layout(), (0..p.logits().len()).map(|i| i as f64).collect()).unwrap();
            assert_eq!(guided_decode(&p, &Guidance::Explicit(vm), prompt, 0.0, 7).unwrap(), base);
        }
    }

    /// V = 4, T = 2. The start row prefers token 0 slightly, but every
    /// continuation of 0 is poor while token 1 leads to a strong token 3.
    fn trap() -> (ToyTask, TabularPolicy, Guidance) {
        let task = ToyTask::new(
            "trap",
            4,
            2,
            1,
            1,
            vec![
                Objective::ClassFraction { name: "a".into(), class: 0 },
                Objective::ClassFraction { name: "b".into(), class: 1 },
            ],
            vec![0b10, 0b01, 0b10, 0b01],
        )
        .unwrap();
        let layout = TableLayout::for_task(&task);
        let mut table = vec![0.0; layout.len()];
        let row = |ctx| layout.row_index(ctx).unwrap() * 4;
        let r = row(Context::start(0));
        table[r] = 0.6;
        table[r + 1] = 0.5;
        table[row(Context::after(0, 0)) + 2] = 0.1;
        table[row(Context::after(0, 1)) + 3] = 2.0;
        let vm = ExplicitValueModel::from_table(layout, table).unwrap();
        (task, TabularPolicy::uniform(layout), Guidance::Explicit(vm))
    }

    #[test]
    fn beam_escapes_greedy_trap() {
        let (task, p, g) = trap();
        let greedy = guided_decode(&p, &g, 0, 1.0, 2).unwrap();
        assert_eq!(greedy, vec![0, 2]);
        let beam = beam_guided_decode(&p, &g, 0, 1.0, BeamConfig::new(2, 2, 1).unwrap(), 2).unwrap();
        assert_eq!(beam, vec![1, 3]);
        // one expansion of four, then greedy continuations ranked at the end
        let wide = beam_guided_decode(&p, &g, 0, 1.0, BeamConfig::new(4, 4, 2).unwrap(), 2).unwrap();
        assert_eq!(wide, vec![1, 3]);
        let rg = reward_vector(&task, 0, &greedy).unwrap()[0];
        let rb = reward_vector(&task, 0, &beam).unwrap()[0];
        assert!(rb > rg, "{rb} <= {rg}");
    }

    #[test]
    fn degenerate_beam_matches_greedy() {
        let (_, p, g) = trap();
        assert_eq!(
            beam_guided_decode(&p, &g, 0, 1.0, BeamConfig::greedy(), 2).unwrap(),
            guided_decode(&p, &g, 0, 1.0, 2).unwrap()
        );
        assert!(BeamConfig::new(0, 1, 1).is_err());
        assert!(beam_guided_decode(&p, &g, 0, 1.0, BeamConfig { width: 1, expansion: 0, lookahead: 1 }, 2).is_err());
    }

    #[test]
    fn logit_ensemble_examples() {
        let layout = TableLayout { num_prompts: 1, vocab_size: 2 };
        let mk = |p0: f64| {
            let mut pol = TabularPolicy::uniform(layout);
            let row = pol.row_mut(Context::start(0)).unwrap();
            row[0] = p0.ln();
            row[1] = (1.0 - p0).ln();
            pol
        };
        let a = mk(0.6);
        let b = mk(0.2);
        assert_eq!(logit_ensemble_decode(&[a.clone(), b.clone()], &[0.5, 0.5], 0, 1).unwrap(), vec![1]);
        assert_eq!(logit_ensemble_decode(std::slice::from_ref(&a), &[1.0], 0, 1).unwrap(), greedy_decode(&a, 0, 1).unwrap());
        let p = policy(5, 1);
        assert_eq!(
            logit_ensemble_decode(&[p.clone(), p.clone(), p.clone()], &[0.2, 0.3, 0.5], 1, 6).unwrap(),
            greedy_decode(&p, 1, 6).unwrap()
        );
        assert!(logit_ensemble_decode(&[a, b], &[1.0], 0, 1).is_err());
    }

    #[test]
    fn system_distribution_is_normalised() {
        let (_, p, g) = trap();
        let sys = DecodingSystem::Guided { policy: p, guidance: g, gamma: 2.0 };
        let d = sys.distribution(Context::start(0)).unwrap();
        assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(d[0] > d[1] && d[1] > d[2]);
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let p = policy(7, 9);
        for prompt in 0..2 {
            let d = softmax(p.row(Context::after(prompt, 3)).unwrap());
            assert!((d.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}
