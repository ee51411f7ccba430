//! Token-level guidance models.
//!
//! An explicit value model is a table regressed onto terminal rewards: one
//! lookup returns the predicted return of appending every candidate token.
//! An implicit value model is the log-ratio of a tuned policy to its
//! reference, which is proportional to a value difference and needs no
//! extra training.

use rand::Rng;

use crate::error::{Error, Result};
use crate::merge::{self, MergeCoefficients, ParamVector, Preference, WeightMatrix};
use crate::world::{
    log_softmax, reward_vector, rng_from_seed, sample_sequence, Context, TableLayout, TabularPolicy, ToyTask,
    TrainingConfig, POLICY_KIND,
};

pub const VALUE_KIND: &str = "value";

/// Value assigned to (context, token) pairs never seen in training.
pub const VALUE_PRIOR: f64 = 0.5;

/// Per-token guidance scores for one context.
#[derive(Debug, Clone, PartialEq)]
pub struct GuidanceScores(Vec<f64>);

impl GuidanceScores {
    pub fn new(scores: Vec<f64>) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("guidance score".into()));
        }
        Ok(Self(scores))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitValueModel {
    layout: TableLayout,
    table: Vec<f64>,
}

impl ExplicitValueModel {
    pub fn prior(layout: TableLayout) -> Self {
        Self { layout, table: vec![VALUE_PRIOR; layout.len()] }
    }

    pub fn from_table(layout: TableLayout, table: Vec<f64>) -> Result<Self> {
        if table.len() != layout.len() {
            return Err(Error::DimensionMismatch { expected: layout.len(), actual: table.len() });
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("value entry".into()));
        }
        Ok(Self { layout, table })
    }

    pub fn layout(&self) -> TableLayout {
        self.layout
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn to_param(&self) -> ParamVector {
        ParamVector::new(self.layout.shape_tag(VALUE_KIND), self.table.clone()).expect("finite values")
    }

    pub fn from_param(p: &ParamVector) -> Result<Self> {
        let layout = TableLayout::parse_tag(p.shape(), VALUE_KIND)?;
        Self::from_table(layout, p.values().to_vec())
    }

    /// Full per-token value row; contexts outside the table get the prior.
    pub fn scores(&self, ctx: Context) -> GuidanceScores {
        let v = self.layout.vocab_size;
        match self.layout.row_index(ctx) {
            Some(r) => GuidanceScores(self.table[r * v..(r + 1) * v].to_vec()),
            None => GuidanceScores(vec![VALUE_PRIOR; v]),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValueOutcome {
    pub model: ExplicitValueModel,
    /// Mean squared-error loss per batch of episodes, measured before update.
    pub loss: Vec<f64>,
}

/// Regress every visited `(context, token)` entry onto the terminal reward
/// of objective `k`, sampling responses from `sampler`. Each entry uses step
/// `max(learning_rate, 1 / visits)`: a running mean until the floor takes
/// over.
pub fn train_explicit_value(
    task: &ToyTask,
    k: usize,
    sampler: &TabularPolicy,
    config: &TrainingConfig,
) -> Result<ValueOutcome> {
    if k >= task.n_objectives() {
        return Err(Error::InvalidArgument(format!("objective index {k} out of range")));
    }
    let layout = TableLayout::for_task(task);
    if sampler.layout() != layout {
        return Err(Error::ShapeMismatch("sampler does not match task".into()));
    }
    if config.batch_size == 0 || config.learning_rate.is_nan() || config.learning_rate <= 0.0 {
        return Err(Error::InvalidArgument("value training needs batch_size >= 1 and learning_rate > 0".into()));
    }
    let v = layout.vocab_size;
    let mut model = ExplicitValueModel::prior(layout);
    let mut visits = vec![0u64; layout.len()];
    let mut rng = rng_from_seed(config.seed);
    let mut loss = Vec::new();
    let mut batch_loss = 0.0;
    let mut batch_terms = 0usize;
    for episode in 0..config.episodes {
        let prompt = rng.gen_range(0..task.num_prompts);
        let seq = sample_sequence(sampler, prompt, task.horizon, &mut rng)?;
        let target = reward_vector(task, prompt, &seq)?[k];
        let mut ctx = Context::start(prompt);
        for &tok in &seq {
            let idx = layout.row_index(ctx).expect("valid context") * v + tok;
            let err = model.table[idx] - target;
            batch_loss += 0.5 * err * err;
            batch_terms += 1;
            visits[idx] += 1;
            let step = config.learning_rate.max(1.0 / visits[idx] as f64);
            model.table[idx] -= step * err;
            ctx = Context::after(prompt, tok);
        }
        if (episode + 1) % config.batch_size == 0 || episode + 1 == config.episodes {
            loss.push(batch_loss / batch_terms.max(1) as f64);
            batch_loss = 0.0;
            batch_terms = 0;
        }
    }
    if let Some(x) = model.table.iter().find(|x| !x.is_finite()) {
        return Err(Error::Diverged(format!("value entry {x}")));
    }
    Ok(ValueOutcome { model, loss })
}

pub fn explicit_scores(model: &ExplicitValueModel, ctx: Context) -> GuidanceScores {
    model.scores(ctx)
}

/// Log-ratio of a tuned policy to a fixed reference.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitValueModel {
    tuned: TabularPolicy,
    reference: TabularPolicy,
}

impl ImplicitValueModel {
    pub fn new(tuned: TabularPolicy, reference: TabularPolicy) -> Result<Self> {
        if tuned.layout() != reference.layout() {
            return Err(Error::ShapeMismatch("tuned and reference policies differ in layout".into()));
        }
        Ok(Self { tuned, reference })
    }

    pub fn tuned(&self) -> &TabularPolicy {
        &self.tuned
    }

    pub fn reference(&self) -> &TabularPolicy {
        &self.reference
    }

    pub fn scores(&self, ctx: Context) -> Result<GuidanceScores> {
        let a = log_softmax(self.tuned.row(ctx)?);
        let b = log_softmax(self.reference.row(ctx)?);
        GuidanceScores::new(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
}

pub fn implicit_scores(model: &ImplicitValueModel, ctx: Context) -> Result<GuidanceScores> {
    model.scores(ctx)
}

#[derive(Debug, Clone, PartialEq)]
pub enum ValueMergeStrategy {
    /// `sum_i mu_i theta_i`.
    Linear,
    /// `lambda = B^-1 mu`, then optional extrapolation away from `sft` by
    /// `alpha`. Policies (implicit value models) only.
    Bone { matrix: WeightMatrix, alpha: f64, sft: Option<ParamVector> },
}

/// Merge value-model parameters under a preference.
pub fn merge_value_models(models: &[ParamVector], mu: &Preference, strategy: &ValueMergeStrategy) -> Result<ParamVector> {
    if models.len() != mu.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), actual: models.len() });
    }
    match strategy {
        ValueMergeStrategy::Linear => merge::merge_params(models, &MergeCoefficients::from_preference(mu)),
        ValueMergeStrategy::Bone { matrix, alpha, sft } => {
            let kind = models
                .first()
                .map(|m| m.shape().as_str().split(':').next().unwrap_or(""))
                .unwrap_or("");
            if kind != POLICY_KIND {
                return Err(Error::InvalidArgument(format!(
                    "backbone merging applies to tuned policies only, not {kind:?} models"
                )));
            }
            let lambda = merge::solve_coefficients(matrix, mu)?;
            let merged = merge::merge_params(models, &lambda)?;
            match sft {
                Some(base) if *alpha > 0.0 => merge::extrapolate(&merged, base, *alpha),
                _ => Ok(merged),
            }
        }
    }
}

/// Weighted sum of per-model score vectors.
pub fn ensemble_scores(scores: &[GuidanceScores], weights: &[f64]) -> Result<GuidanceScores> {
    if scores.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: scores.len(), actual: weights.len() });
    }
    let first = scores
        .first()
        .ok_or_else(|| Error::InvalidArgument("no score vectors to ensemble".into()))?;
    if let Some(s) = scores.iter().find(|s| s.len() != first.len()) {
        return Err(Error::DimensionMismatch { expected: first.len(), actual: s.len() });
    }
    let mut acc: Option<Vec<f64>> = None;
    for (s, &w) in scores.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        match acc.as_mut() {
            None => acc = Some(s.0.iter().map(|x| w * x).collect()),
            Some(a) => a.iter_mut().zip(&s.0).for_each(|(a, x)| *a += w * x),
        }
    }
    GuidanceScores::new(acc.unwrap_or_else(|| vec![0.0; first.len()]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::TabularPolicy;

    fn task() -> ToyTask {
        ToyTask::ab_conflict(2).unwrap()
    }

    fn saturated(task: &ToyTask, token_for: impl Fn(Option<usize>) -> usize) -> TabularPolicy {
        let layout = TableLayout::for_task(task);
        let mut p = TabularPolicy::uniform(layout);
        for prompt in 0..task.num_prompts {
            for prev in (0..task.vocab_size).map(Some).chain([None]) {
                let ctx = Context { prompt, prev };
                p.row_mut(ctx).unwrap()[token_for(prev)] = 40.0;
            }
        }
        p
    }

    #[test]
    fn deterministic_sampler_regresses_to_its_reward() {
        let t = task();
        // 0 1 4 2 3 5 0 1 -> six class-A tokens of eight
        let next = |prev: Option<usize>| match prev {
            Some(0) => 1,
            Some(1) => 4,
            Some(4) => 2,
            Some(2) => 3,
            Some(3) => 5,
            _ => 0,
        };
        let sampler = saturated(&t, next);
        let cfg = TrainingConfig { episodes: 300, learning_rate: 0.05, seed: 4, ..Default::default() };
        let m = train_explicit_value(&t, 0, &sampler, &cfg).unwrap().model;
        let mut seen = 0;
        for prompt in 0..t.num_prompts {
            let mut ctx = Context::start(prompt);
            for _ in 0..t.horizon {
                let tok = next(ctx.prev);
                assert!((m.scores(ctx).values()[tok] - 0.75).abs() < 1e-3);
                seen += 1;
                ctx = Context::after(prompt, tok);
            }
        }
        assert!(seen > 0);
    }

    #[test]
    fn constant_reward_everywhere() {
        // the diversity objective of a single repeated token is always 1/8
        let t = ToyTask::ab_conflict(3).unwrap();
        let sampler = saturated(&t, |_| 3);
        let cfg = TrainingConfig { episodes: 200, learning_rate: 0.05, seed: 1, ..Default::default() };
        let m = train_explicit_value(&t, 2, &sampler, &cfg).unwrap().model;
        let ctx = Context::after(0, 3);
        assert!((m.scores(ctx).values()[3] - 0.125).abs() < 1e-3);
        // unvisited entries keep the prior
        assert_eq!(m.scores(ctx).values()[0], VALUE_PRIOR);
    }

    #[test]
    fn hand_set_row_and_unknown_context() {
        let t = task();
        let layout = TableLayout::for_task(&t);
        let mut table = vec![VALUE_PRIOR; layout.len()];
        let row = [0.1, 0.9, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7];
        let r = layout.row_index(Context::after(1, 2)).unwrap();
        table[r * 8..r * 8 + 8].copy_from_slice(&row);
        let m = ExplicitValueModel::from_table(layout, table).unwrap();
        assert_eq!(explicit_scores(&m, Context::after(1, 2)).values(), &row);
        assert_eq!(explicit_scores(&m, Context::start(99)).values(), &[VALUE_PRIOR; 8]);
    }

    #[test]
    fn implicit_scores_examples() {
        let layout = TableLayout { num_prompts: 1, vocab_size: 2 };
        let reference = TabularPolicy::uniform(layout);
        let same = ImplicitValueModel::new(reference.clone(), reference.clone()).unwrap();
        assert!(implicit_scores(&same, Context::start(0)).unwrap().values().iter().all(|s| *s == 0.0));

        let mut tuned = reference.clone();
        tuned.row_mut(Context::start(0)).unwrap()[1] = 2f64.ln();
        let m = ImplicitValueModel::new(tuned, reference).unwrap();
        let s = implicit_scores(&m, Context::start(0)).unwrap();
        assert!((s.values()[0] - (-0.405_465)).abs() < 1e-6);
        assert!((s.values()[1] - 0.287_682).abs() < 1e-6);
    }

    #[test]
    fn merge_examples() {
        let layout = TableLayout { num_prompts: 1, vocab_size: 1 };
        let a = ExplicitValueModel::from_table(layout, vec![0.0, 2.0]).unwrap().to_param();
        let b = ExplicitValueModel::from_table(layout, vec![2.0, 0.0]).unwrap().to_param();
        let half = Preference::uniform(2).unwrap();
        let m = merge_value_models(&[a.clone(), b.clone()], &half, &ValueMergeStrategy::Linear).unwrap();
        assert_eq!(m.values(), &[1.0, 1.0]);
        let e2 = Preference::basis(2, 1).unwrap();
        assert_eq!(merge_value_models(&[a.clone(), b.clone()], &e2, &ValueMergeStrategy::Linear).unwrap(), b);

        let bone = ValueMergeStrategy::Bone { matrix: WeightMatrix::identity(2).unwrap(), alpha: 0.0, sft: None };
        assert!(merge_value_models(&[a, b], &half, &bone).is_err());
    }

    #[test]
    fn bone_identity_equals_linear_for_policies() {
        let layout = TableLayout { num_prompts: 1, vocab_size: 4 };
        let p1 = TabularPolicy::from_logits(layout, (0..20).map(|i| i as f64 * 0.1).collect()).unwrap();
        let p2 = TabularPolicy::from_logits(layout, (0..20).map(|i| -(i as f64) * 0.3).collect()).unwrap();
        let models = [p1.to_param(), p2.to_param()];
        let mu = Preference::pair(0.3).unwrap();
        let bone = ValueMergeStrategy::Bone { matrix: WeightMatrix::identity(2).unwrap(), alpha: 0.0, sft: None };
        assert_eq!(
            merge_value_models(&models, &mu, &bone).unwrap(),
            merge_value_models(&models, &mu, &ValueMergeStrategy::Linear).unwrap()
        );
    }

    #[test]
    fn ensemble_examples() {
        let v = |x: &[f64]| GuidanceScores::new(x.to_vec()).unwrap();
        assert_eq!(ensemble_scores(&[v(&[0.3, -1.0])], &[1.0]).unwrap(), v(&[0.3, -1.0]));
        assert_eq!(ensemble_scores(&[v(&[0.0, 1.0]), v(&[7.0, 8.0])], &[0.0, 1.0]).unwrap(), v(&[7.0, 8.0]));
        assert_eq!(ensemble_scores(&[v(&[0.0, 1.0]), v(&[1.0, 0.0])], &[0.5, 0.5]).unwrap(), v(&[0.5, 0.5]));
        assert!(ensemble_scores(&[v(&[0.0, 1.0]), v(&[1.0])], &[0.5, 0.5]).is_err());
        assert!(ensemble_scores(&[v(&[0.0, 1.0])], &[0.5, 0.5]).is_err());
    }
}
