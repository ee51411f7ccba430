//! A finite-vocabulary generation world with conflicting objectives.
//!
//! Responses are `horizon` tokens drawn from a vocabulary of `vocab_size`
//! tokens. Policies condition on the prompt id and the previous token
//! (order-1 context). Rewards are terminal and bounded in `[0, 1]`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::merge::{ParamVector, ShapeTag};

/// Logit magnitude treated as divergence during training.
pub const LOGIT_LIMIT: f64 = 50.0;

/// Largest effective step (learning rate times KL coefficient) applied to the
/// analytic KL gradient in one update.
pub const KL_STEP_CAP: f64 = 1.0;

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent sub-seed for stream `stream` of run `seed` (splitmix64).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Objective {
    /// Fraction of response tokens carrying the class bit.
    ClassFraction { name: String, class: usize },
    /// Distinct tokens divided by the horizon.
    Diversity { name: String },
}

impl Objective {
    pub fn name(&self) -> &str {
        match self {
            Objective::ClassFraction { name, .. } | Objective::Diversity { name } => name,
        }
    }
}

/// Conditioning context: prompt id and previous token (`None` at the start).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Context {
    pub prompt: usize,
    pub prev: Option<usize>,
}

impl Context {
    pub fn start(prompt: usize) -> Self {
        Self { prompt, prev: None }
    }

    pub fn after(prompt: usize, token: usize) -> Self {
        Self { prompt, prev: Some(token) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyTask {
    pub name: String,
    pub vocab_size: usize,
    pub horizon: usize,
    pub num_prompts: usize,
    /// Prompts `validation_from..num_prompts` form the held-out split.
    pub validation_from: usize,
    pub objectives: Vec<Objective>,
    /// Bitmask of classes per token.
    pub token_classes: Vec<u32>,
}

pub const AB_CONFLICT: &str = "ab-conflict";
const AB_PROMPTS: usize = 12;
const AB_VALIDATION_FROM: usize = 8;

impl ToyTask {
    pub fn new(
        name: impl Into<String>,
        vocab_size: usize,
        horizon: usize,
        num_prompts: usize,
        validation_from: usize,
        objectives: Vec<Objective>,
        token_classes: Vec<u32>,
    ) -> Result<Self> {
        if vocab_size < 4 || horizon < 2 || num_prompts < 1 || objectives.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "task needs V >= 4, T >= 2, >= 1 prompt, >= 2 objectives (got V={vocab_size}, T={horizon}, \
                 P={num_prompts}, n={})",
                objectives.len()
            )));
        }
        if token_classes.len() != vocab_size {
            return Err(Error::DimensionMismatch { expected: vocab_size, actual: token_classes.len() });
        }
        if validation_from > num_prompts {
            return Err(Error::InvalidArgument("validation split beyond prompt set".into()));
        }
        Ok(Self {
            name: name.into(),
            vocab_size,
            horizon,
            num_prompts,
            validation_from,
            objectives,
            token_classes,
        })
    }

    /// Eight tokens, eight steps. Tokens 0-3 are class A, 4-7 class B.
    /// Objectives: A fraction, B fraction and, with `n = 3`, diversity.
    pub fn ab_conflict(n_objectives: usize) -> Result<Self> {
        let mut objectives = vec![
            Objective::ClassFraction { name: "class_a".into(), class: 0 },
            Objective::ClassFraction { name: "class_b".into(), class: 1 },
        ];
        match n_objectives {
            2 => {}
            3 => objectives.push(Objective::Diversity { name: "diversity".into() }),
            n => return Err(Error::InvalidArgument(format!("{AB_CONFLICT} supports 2 or 3 objectives, got {n}"))),
        }
        let token_classes = (0..8).map(|t| if t < 4 { 0b01 } else { 0b10 }).collect();
        Self::new(AB_CONFLICT, 8, 8, AB_PROMPTS, AB_VALIDATION_FROM, objectives, token_classes)
    }

    pub fn by_name(name: &str, n_objectives: usize) -> Result<Self> {
        match name {
            AB_CONFLICT => Self::ab_conflict(n_objectives),
            other => Err(Error::Config(format!("unknown task {other:?}"))),
        }
    }

    pub fn n_objectives(&self) -> usize {
        self.objectives.len()
    }

    pub fn has_class(&self, token: usize, class: usize) -> bool {
        self.token_classes[token] & (1 << class) != 0
    }

    pub fn all_prompts(&self) -> Vec<usize> {
        (0..self.num_prompts).collect()
    }

    /// Prompts used for reporting.
    pub fn test_prompts(&self) -> Vec<usize> {
        (0..self.validation_from).collect()
    }

    /// Held-out prompts used for hyperparameter selection.
    pub fn validation_prompts(&self) -> Vec<usize> {
        (self.validation_from..self.num_prompts).collect()
    }

    fn check_sequence(&self, seq: &[usize]) -> Result<()> {
        if seq.len() != self.horizon {
            return Err(Error::DimensionMismatch { expected: self.horizon, actual: seq.len() });
        }
        if let Some(t) = seq.iter().find(|t| **t >= self.vocab_size) {
            return Err(Error::InvalidArgument(format!("token {t} outside vocabulary")));
        }
        Ok(())
    }
}

/// Terminal reward of objective `k` for a complete response.
pub fn terminal_reward(task: &ToyTask, k: usize, _prompt: usize, seq: &[usize]) -> Result<f64> {
    let objective = task
        .objectives
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("objective index {k} out of range")))?;
    task.check_sequence(seq)?;
    let t = task.horizon as f64;
    Ok(match objective {
        Objective::ClassFraction { class, .. } => {
            seq.iter().filter(|&&tok| task.has_class(tok, *class)).count() as f64 / t
        }
        Objective::Diversity { .. } => {
            let mut seen = vec![false; task.vocab_size];
            seq.iter().for_each(|&tok| seen[tok] = true);
            seen.iter().filter(|s| **s).count() as f64 / t
        }
    })
}

/// All objective rewards for one response.
pub fn reward_vector(task: &ToyTask, prompt: usize, seq: &[usize]) -> Result<Vec<f64>> {
    (0..task.n_objectives()).map(|k| terminal_reward(task, k, prompt, seq)).collect()
}

/// Backbone reward `w . r`.
pub fn backbone_reward(w: &[f64], rewards: &[f64]) -> Result<f64> {
    if w.len() != rewards.len() {
        return Err(Error::DimensionMismatch { expected: w.len(), actual: rewards.len() });
    }
    Ok(w.iter().zip(rewards).map(|(a, b)| a * b).sum())
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
    logits.iter().map(|z| z - lse).collect()
}

/// `KL(p || q)` for probability vectors.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi.ln() - qi.ln()))
        .sum()
}

/// Per-context table layout shared by policies and explicit value models:
/// `num_prompts x (vocab + 1) x vocab`, the extra context row being the
/// start marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TableLayout {
    pub num_prompts: usize,
    pub vocab_size: usize,
}

impl TableLayout {
    pub fn for_task(task: &ToyTask) -> Self {
        Self { num_prompts: task.num_prompts, vocab_size: task.vocab_size }
    }

    pub fn contexts_per_prompt(&self) -> usize {
        self.vocab_size + 1
    }

    pub fn rows(&self) -> usize {
        self.num_prompts * self.contexts_per_prompt()
    }

    pub fn len(&self) -> usize {
        self.rows() * self.vocab_size
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row_index(&self, ctx: Context) -> Option<usize> {
        if ctx.prompt >= self.num_prompts {
            return None;
        }
        let c = match ctx.prev {
            None => self.vocab_size,
            Some(t) if t < self.vocab_size => t,
            Some(_) => return None,
        };
        Some(ctx.prompt * self.contexts_per_prompt() + c)
    }

    pub fn shape_tag(&self, kind: &str) -> ShapeTag {
        ShapeTag::new(format!("{kind}:{}x{}x{}", self.num_prompts, self.contexts_per_prompt(), self.vocab_size))
    }

    /// Inverse of [`TableLayout::shape_tag`].
    pub fn parse_tag(tag: &ShapeTag, kind: &str) -> Result<Self> {
        let body = tag
            .as_str()
            .strip_prefix(kind)
            .and_then(|s| s.strip_prefix(':'))
            .ok_or_else(|| Error::ShapeMismatch(format!("expected a {kind} tag, got {tag}")))?;
        let dims: Vec<usize> = body
            .split('x')
            .map(|d| d.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::ShapeMismatch(format!("malformed tag {tag}")))?;
        match dims[..] {
            [p, c, v] if c == v + 1 => Ok(Self { num_prompts: p, vocab_size: v }),
            _ => Err(Error::ShapeMismatch(format!("malformed tag {tag}"))),
        }
    }
}

pub const POLICY_KIND: &str = "policy";

/// Context-indexed logit table; temperature is fixed at 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    layout: TableLayout,
    logits: Vec<f64>,
}

impl TabularPolicy {
    pub fn uniform(layout: TableLayout) -> Self {
        Self { layout, logits: vec![0.0; layout.len()] }
    }

    pub fn from_logits(layout: TableLayout, logits: Vec<f64>) -> Result<Self> {
        if logits.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), actual: logits.len() });
        }
        if logits.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("policy logit".into()));
        }
        Ok(Self { layout, logits })
    }

    pub fn layout(&self) -> TableLayout {
        self.layout
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    fn row_index(&self, ctx: Context) -> Result<usize> {
        self.layout
            .row_index(ctx)
            .ok_or_else(|| Error::InvalidArgument(format!("context {ctx:?} outside policy table")))
    }

    pub fn row(&self, ctx: Context) -> Result<&[f64]> {
        let r = self.row_index(ctx)?;
        let v = self.layout.vocab_size;
        Ok(&self.logits[r * v..(r + 1) * v])
    }

    pub fn row_mut(&mut self, ctx: Context) -> Result<&mut [f64]> {
        let r = self.row_index(ctx)?;
        let v = self.layout.vocab_size;
        Ok(&mut self.logits[r * v..(r + 1) * v])
    }

    pub fn probs(&self, ctx: Context) -> Result<Vec<f64>> {
        Ok(softmax(self.row(ctx)?))
    }

    pub fn log_probs(&self, ctx: Context) -> Result<Vec<f64>> {
        Ok(log_softmax(self.row(ctx)?))
    }

    /// Log-likelihood of a full response.
    pub fn sequence_log_prob(&self, prompt: usize, seq: &[usize]) -> Result<f64> {
        let mut ctx = Context::start(prompt);
        let mut total = 0.0;
        for &tok in seq {
            total += self.log_probs(ctx)?[tok];
            ctx = Context::after(prompt, tok);
        }
        Ok(total)
    }

    pub fn to_param(&self) -> ParamVector {
        ParamVector::new(self.layout.shape_tag(POLICY_KIND), self.logits.clone()).expect("finite logits")
    }

    pub fn from_param(p: &ParamVector) -> Result<Self> {
        let layout = TableLayout::parse_tag(p.shape(), POLICY_KIND)?;
        Self::from_logits(layout, p.values().to_vec())
    }

    /// Largest per-context `KL(self || other)` over all rows.
    pub fn max_row_kl(&self, other: &TabularPolicy) -> Result<f64> {
        if self.layout != other.layout {
            return Err(Error::ShapeMismatch("policies with different layouts".into()));
        }
        let v = self.layout.vocab_size;
        Ok(self
            .logits
            .chunks(v)
            .zip(other.logits.chunks(v))
            .map(|(a, b)| kl_divergence(&softmax(a), &softmax(b)))
            .fold(0.0, f64::max))
    }
}

/// Draw one token index from a probability vector.
pub fn sample_index(probs: &[f64], rng: &mut Rng64) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the cumulative sum; take the last non-zero entry
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// Sample a `horizon`-token response autoregressively.
pub fn sample_sequence(policy: &TabularPolicy, prompt: usize, horizon: usize, rng: &mut Rng64) -> Result<Vec<usize>> {
    let mut seq = Vec::with_capacity(horizon);
    let mut ctx = Context::start(prompt);
    for _ in 0..horizon {
        let tok = sample_index(&policy.probs(ctx)?, rng);
        seq.push(tok);
        ctx = Context::after(prompt, tok);
    }
    Ok(seq)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    /// Weight of the KL penalty towards the reference policy.
    pub kl_coefficient: f64,
    pub learning_rate: f64,
    /// Episodes for policy-gradient and value training; epochs for SFT.
    pub episodes: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub baseline: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self { kl_coefficient: 0.05, learning_rate: 0.5, episodes: 20_000, batch_size: 16, seed: 0, baseline: true }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<()> {
        if !(self.kl_coefficient >= 0.0 && self.kl_coefficient.is_finite()) {
            return Err(Error::InvalidArgument(format!("KL coefficient {} must be >= 0", self.kl_coefficient)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be > 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }
}

/// A demonstration: prompt id and response.
pub type Demo = (usize, Vec<usize>);

/// Uniform random responses per prompt, kept only when their class-A
/// fraction lies in `[0.4, 0.6]`.
pub fn balanced_demos(task: &ToyTask, per_prompt: usize, seed: u64) -> Vec<Demo> {
    let mut rng = rng_from_seed(seed);
    let mut demos = Vec::with_capacity(per_prompt * task.num_prompts);
    for prompt in 0..task.num_prompts {
        let mut kept = 0;
        while kept < per_prompt {
            let seq: Vec<usize> = (0..task.horizon).map(|_| rng.gen_range(0..task.vocab_size)).collect();
            let frac = seq.iter().filter(|&&t| task.has_class(t, 0)).count() as f64 / task.horizon as f64;
            if (0.4..=0.6).contains(&frac) {
                demos.push((prompt, seq));
                kept += 1;
            }
        }
    }
    demos
}

/// Unfiltered uniform random responses per prompt.
pub fn uniform_demos(task: &ToyTask, per_prompt: usize, seed: u64) -> Vec<Demo> {
    let mut rng = rng_from_seed(seed);
    (0..task.num_prompts)
        .flat_map(|prompt| (0..per_prompt).map(move |_| prompt))
        .map(|prompt| (prompt, (0..task.horizon).map(|_| rng.gen_range(0..task.vocab_size)).collect()))
        .collect()
}

#[derive(Debug, Clone)]
pub struct SftOutcome {
    pub policy: TabularPolicy,
    /// Mean per-token negative log-likelihood before each epoch and after the
    /// last one.
    pub nll: Vec<f64>,
}

/// Maximum-likelihood fit to demonstrations by full-batch gradient descent
/// on each context row's mean cross-entropy. Each row's loss is convex with
/// curvature at most 1/2, so any learning rate up to 4 decreases it
/// monotonically.
pub fn train_sft(task: &ToyTask, demos: &[Demo], config: &TrainingConfig) -> Result<SftOutcome> {
    config.validate()?;
    if demos.is_empty() {
        return Err(Error::InvalidArgument("no demonstrations".into()));
    }
    let layout = TableLayout::for_task(task);
    let v = layout.vocab_size;
    let mut counts = vec![0.0; layout.len()];
    for (prompt, seq) in demos {
        task.check_sequence(seq)?;
        let mut ctx = Context::start(*prompt);
        for &tok in seq {
            let r = layout
                .row_index(ctx)
                .ok_or_else(|| Error::InvalidArgument(format!("demo prompt {prompt} outside task")))?;
            counts[r * v + tok] += 1.0;
            ctx = Context::after(*prompt, tok);
        }
    }
    let row_totals: Vec<f64> = counts.chunks(v).map(|c| c.iter().sum()).collect();
    let total_tokens: f64 = row_totals.iter().sum();

    let mut policy = TabularPolicy::uniform(layout);
    let nll_of = |p: &TabularPolicy| -> f64 {
        p.logits
            .chunks(v)
            .zip(counts.chunks(v))
            .map(|(z, c)| {
                let lp = log_softmax(z);
                -c.iter().zip(&lp).map(|(ci, l)| ci * l).sum::<f64>()
            })
            .sum::<f64>()
            / total_tokens
    };
    let mut nll = Vec::with_capacity(config.episodes + 1);
    for _ in 0..config.episodes {
        nll.push(nll_of(&policy));
        for (r, total) in row_totals.iter().enumerate() {
            if *total == 0.0 {
                continue;
            }
            let row = &mut policy.logits[r * v..(r + 1) * v];
            let p = softmax(row);
            for k in 0..v {
                let target = counts[r * v + k] / total;
                row[k] -= config.learning_rate * (p[k] - target);
            }
        }
    }
    nll.push(nll_of(&policy));
    Ok(SftOutcome { policy, nll })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStats {
    /// Mean combined reward `w . r` over the batch.
    pub mean_reward: f64,
    /// Mean sequence-level `KL(pi || pi_ref)` over the batch.
    pub mean_kl: f64,
}

#[derive(Debug, Clone)]
pub struct PolicyOutcome {
    pub policy: TabularPolicy,
    pub curve: Vec<BatchStats>,
}

/// Policy-gradient ascent on `E[w . r] - eta * KL(pi || pi_ref)`, starting
/// from (and regularised towards) `init`.
///
/// The sequence KL decomposes over visited contexts, so each step combines a
/// REINFORCE term whose return is the combined reward minus the KL still to
/// come, and the analytic gradient of the current context's KL. A moving
/// average of the combined reward serves as baseline.
pub fn train_policy(init: &TabularPolicy, task: &ToyTask, w: &[f64], config: &TrainingConfig) -> Result<PolicyOutcome> {
    config.validate()?;
    if w.len() != task.n_objectives() {
        return Err(Error::DimensionMismatch { expected: task.n_objectives(), actual: w.len() });
    }
    if init.layout != TableLayout::for_task(task) {
        return Err(Error::ShapeMismatch("initial policy does not match task".into()));
    }
    let layout = init.layout;
    let v = layout.vocab_size;
    let reference = init;
    let mut policy = init.clone();
    let mut rng = rng_from_seed(config.seed);
    let eta = config.kl_coefficient;
    // Strong KL coefficients shrink the whole step so that lr * eta never
    // exceeds the cap; the stationary point of reward - eta * KL is unchanged.
    let lr = if config.learning_rate * eta > KL_STEP_CAP { KL_STEP_CAP / eta } else { config.learning_rate };
    let kl_step = lr * eta;
    let mut baseline: Option<f64> = None;
    let batches = config.episodes.div_ceil(config.batch_size);
    let mut curve = Vec::with_capacity(batches);
    let mut grad = vec![0.0; layout.len()];

    for _ in 0..batches {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut sum_h = 0.0;
        let mut sum_kl = 0.0;
        let b = baseline.unwrap_or(0.0);
        for _ in 0..config.batch_size {
            let prompt = rng.gen_range(0..task.num_prompts);
            let mut ctx = Context::start(prompt);
            let mut steps = Vec::with_capacity(task.horizon);
            for _ in 0..task.horizon {
                let r = layout.row_index(ctx).expect("valid context");
                let p = softmax(&policy.logits[r * v..(r + 1) * v]);
                let q = softmax(&reference.logits[r * v..(r + 1) * v]);
                let tok = sample_index(&p, &mut rng);
                let kl = kl_divergence(&p, &q);
                steps.push((r, tok, p, q, kl));
                ctx = Context::after(prompt, tok);
            }
            let seq: Vec<usize> = steps.iter().map(|s| s.1).collect();
            let h = backbone_reward(w, &reward_vector(task, prompt, &seq)?)?;
            let kl_seq: f64 = steps.iter().map(|s| s.4).sum();
            sum_h += h;
            sum_kl += kl_seq;

            let advantage = if config.baseline && baseline.is_some() { h - b } else { h };
            let mut kl_to_go = kl_seq;
            for (r, tok, p, q, kl) in &steps {
                kl_to_go -= kl;
                let adv = advantage - eta * kl_to_go;
                let g = &mut grad[r * v..(r + 1) * v];
                for k in 0..v {
                    let onehot = if k == *tok { 1.0 } else { 0.0 };
                    g[k] += lr * adv * (onehot - p[k]);
                    if eta > 0.0 {
                        let dkl = p[k] * (p[k].ln() - q[k].ln() - kl);
                        g[k] -= kl_step * dkl;
                    }
                }
            }
        }
        let scale = 1.0 / config.batch_size as f64;
        for (z, g) in policy.logits.iter_mut().zip(&grad) {
            *z += g * scale;
        }
        if let Some(z) = policy.logits.iter().find(|z| !z.is_finite() || z.abs() > LOGIT_LIMIT) {
            return Err(Error::Diverged(format!(
                "logit {z} beyond +/-{LOGIT_LIMIT} after {} batches (lr {lr}, eta {eta})",
                curve.len() + 1
            )));
        }
        let mean_h = sum_h * scale;
        curve.push(BatchStats { mean_reward: mean_h, mean_kl: sum_kl * scale });
        baseline = Some(match baseline {
            None => mean_h,
            Some(old) => 0.9 * old + 0.1 * mean_h,
        });
    }
    Ok(PolicyOutcome { policy, curve })
}

/// Next-token distribution for each context of one prompt: entries
/// `0..vocab` follow the previous token, entry `vocab` is the start row.
pub type PromptRows = Vec<Vec<f64>>;

pub fn policy_rows(policy: &TabularPolicy, prompt: usize) -> Result<PromptRows> {
    let v = policy.layout.vocab_size;
    (0..=v)
        .map(|c| policy.probs(if c == v { Context::start(prompt) } else { Context::after(prompt, c) }))
        .collect()
}

/// Exact expected reward of every objective when sampling responses from
/// the given per-context distributions. Class fractions follow from the
/// per-step token marginals; diversity from the probability that each token
/// never occurs.
pub fn expected_rewards(task: &ToyTask, rows: &PromptRows) -> Result<Vec<f64>> {
    let v = task.vocab_size;
    if rows.len() != v + 1 || rows.iter().any(|r| r.len() != v) {
        return Err(Error::DimensionMismatch { expected: v + 1, actual: rows.len() });
    }
    let t = task.horizon;
    let mut marginals = vec![0.0; v];
    let mut state = rows[v].clone();
    for step in 0..t {
        marginals.iter_mut().zip(&state).for_each(|(m, s)| *m += s);
        if step + 1 < t {
            state = advance(rows, &state, None);
        }
    }
    task.objectives
        .iter()
        .map(|obj| {
            Ok(match obj {
                Objective::ClassFraction { class, .. } => {
                    (0..v).filter(|&tok| task.has_class(tok, *class)).map(|tok| marginals[tok]).sum::<f64>() / t as f64
                }
                Objective::Diversity { .. } => {
                    let present: f64 = (0..v).map(|tok| 1.0 - never_emitted(rows, tok, t)).sum();
                    present / t as f64
                }
            })
        })
        .collect()
}

fn advance(rows: &PromptRows, state: &[f64], blocked: Option<usize>) -> Vec<f64> {
    let v = state.len();
    let mut next = vec![0.0; v];
    for (prev, mass) in state.iter().enumerate() {
        if *mass == 0.0 {
            continue;
        }
        for (tok, p) in rows[prev].iter().enumerate() {
            if Some(tok) != blocked {
                next[tok] += mass * p;
            }
        }
    }
    next
}

fn never_emitted(rows: &PromptRows, token: usize, horizon: usize) -> f64 {
    let v = rows.len() - 1;
    let mut state = rows[v].clone();
    state[token] = 0.0;
    for _ in 1..horizon {
        state = advance(rows, &state, Some(token));
    }
    state.iter().sum()
}
