//! The end-to-end pipeline: SFT, single-objective experts, dominance
//! selection, backbones, extrapolation selection, value models, guidance
//! strength selection, and the preference sweep over every method.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::decode::{DecodingSystem, Guidance};
use crate::error::{Error, Result};
use crate::merge::{self, Preference, WeightMatrix};
use crate::metrics::{hypervolume, reference_point, summarize, FrontPoint, FrontSet, FrontSummary, REFERENCE_MARGIN};
use crate::runner::checkpoint::{load_checkpoint, load_policy, load_value, save_policy, save_value, Provenance};
use crate::runner::config::{Decoding, ExperimentConfig, Method};
use crate::value::{
    merge_value_models, train_explicit_value, ExplicitValueModel, ImplicitValueModel, ValueMergeStrategy, VALUE_KIND,
};
use crate::world::{
    balanced_demos, derive_seed, reward_vector, train_policy, train_sft, TabularPolicy, ToyTask, TrainingConfig,
    POLICY_KIND,
};

/// Demonstrations per prompt for supervised fine-tuning.
pub const SFT_DEMOS_PER_PROMPT: usize = 64;
pub const SFT_EPOCHS: usize = 300;
pub const SFT_LEARNING_RATE: f64 = 2.0;
/// Fraction of the full episode budget spent on each dominance probe.
pub const PROBE_FRACTION: f64 = 0.2;

/// Everything trained for one seed.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub seed: u64,
    pub task: ToyTask,
    pub sft: TabularPolicy,
    /// Policies tuned on a single objective each.
    pub experts: Vec<TabularPolicy>,
    pub beta: f64,
    /// Validation hypervolume of each probed dominance value.
    pub beta_scores: Vec<(f64, f64)>,
    pub matrix: WeightMatrix,
    /// Policies tuned on the combined rewards in the columns of `matrix`.
    pub backbones: Vec<TabularPolicy>,
    /// One explicit value model per objective.
    pub values: Vec<ExplicitValueModel>,
}

/// Checkpoint directory for one seed. Artifacts found there are loaded;
/// missing ones are trained and written when allowed.
#[derive(Debug, Clone)]
pub struct ArtifactStore {
    dir: PathBuf,
    train_missing: bool,
}

impl ArtifactStore {
    pub fn new(dir: impl Into<PathBuf>, train_missing: bool) -> Self {
        Self { dir: dir.into(), train_missing }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, seed: u64, name: &str) -> PathBuf {
        self.dir.join(format!("seed_{seed}")).join(format!("{name}.ckpt"))
    }

    fn fresh(&self, path: &Path, prov: &Provenance, kind: &str) -> Result<bool> {
        if !path.exists() {
            return Ok(false);
        }
        let ck = load_checkpoint(path, Some(kind))?;
        if ck.provenance == *prov {
            return Ok(true);
        }
        if self.train_missing {
            return Ok(false);
        }
        Err(Error::Checkpoint(format!(
            "{} was produced by a different training setup (digest {}, expected {})",
            path.display(),
            ck.provenance.digest,
            prov.digest
        )))
    }

    fn missing(&self, path: &Path) -> Error {
        Error::MissingArtifact(format!("{} (training disabled)", path.display()))
    }

    pub fn policy(
        &self,
        seed: u64,
        name: &str,
        prov: &Provenance,
        train: impl FnOnce() -> Result<TabularPolicy>,
    ) -> Result<TabularPolicy> {
        let path = self.path(seed, name);
        if self.fresh(&path, prov, POLICY_KIND)? {
            return load_policy(&path);
        }
        if !self.train_missing {
            return Err(self.missing(&path));
        }
        let p = train()?;
        save_policy(&p, prov, &path)?;
        Ok(p)
    }

    pub fn value(
        &self,
        seed: u64,
        name: &str,
        prov: &Provenance,
        train: impl FnOnce() -> Result<ExplicitValueModel>,
    ) -> Result<ExplicitValueModel> {
        let path = self.path(seed, name);
        if self.fresh(&path, prov, VALUE_KIND)? {
            return load_value(&path);
        }
        if !self.train_missing {
            return Err(self.missing(&path));
        }
        let v = train()?;
        save_value(&v, prov, &path)?;
        Ok(v)
    }
}

fn beta_name(beta: f64) -> String {
    format!("{beta}").replace('.', "p")
}

/// The training stages for one seed. Each stage loads its artifacts from
/// the store when present.
pub struct Stages<'a> {
    config: &'a ExperimentConfig,
    store: Option<&'a ArtifactStore>,
    seed: u64,
    task: ToyTask,
    prov: Provenance,
}

/// Dominance value, its validation scores, the weight matrix and the
/// backbones trained on its columns.
pub type BackboneStage = (f64, Vec<(f64, f64)>, WeightMatrix, Vec<TabularPolicy>);

impl<'a> Stages<'a> {
    pub fn new(config: &'a ExperimentConfig, seed: u64, store: Option<&'a ArtifactStore>) -> Result<Self> {
        config.validate()?;
        let task = ToyTask::by_name(&config.task, config.objectives)?;
        let prov = Provenance { task: task.name.clone(), seed, digest: config.training_digest() };
        Ok(Self { config, store, seed, task, prov })
    }

    pub fn task(&self) -> &ToyTask {
        &self.task
    }

    fn policy(&self, name: &str, train: impl FnOnce() -> Result<TabularPolicy>) -> Result<TabularPolicy> {
        match self.store {
            Some(s) => s.policy(self.seed, name, &self.prov, train),
            None => train(),
        }
    }

    fn tune(&self, sft: &TabularPolicy, w: Vec<f64>, episodes: usize, stream: u64) -> Result<TabularPolicy> {
        let cfg = TrainingConfig {
            kl_coefficient: self.config.eta,
            learning_rate: self.config.rl_learning_rate,
            episodes,
            seed: derive_seed(self.seed, stream),
            ..TrainingConfig::default()
        };
        Ok(train_policy(sft, &self.task, &w, &cfg)?.policy)
    }

    /// Supervised fine-tuning on balanced demonstrations.
    pub fn sft(&self) -> Result<TabularPolicy> {
        self.policy("sft", || {
            let demos = balanced_demos(&self.task, SFT_DEMOS_PER_PROMPT, derive_seed(self.seed, 1));
            let cfg = TrainingConfig {
                learning_rate: SFT_LEARNING_RATE,
                episodes: SFT_EPOCHS,
                seed: self.seed,
                ..Default::default()
            };
            Ok(train_sft(&self.task, &demos, &cfg)?.policy)
        })
    }

    /// One policy per objective, tuned on that objective alone.
    pub fn experts(&self, sft: &TabularPolicy) -> Result<Vec<TabularPolicy>> {
        let n = self.task.n_objectives();
        (0..n)
            .into_par_iter()
            .map(|k| {
                let w = (0..n).map(|j| if j == k { 1.0 } else { 0.0 }).collect();
                self.policy(&format!("expert_{k}"), || self.tune(sft, w, self.config.rl_episodes, 100 + k as u64))
            })
            .collect()
    }

    fn columns(&self, sft: &TabularPolicy, matrix: &WeightMatrix, prefix: &str, episodes: usize, stream: u64) -> Result<Vec<TabularPolicy>> {
        (0..matrix.n())
            .into_par_iter()
            .map(|k| self.policy(&format!("{prefix}_{k}"), || self.tune(sft, matrix.column(k), episodes, stream + k as u64)))
            .collect()
    }

    /// Choose the dominance value by short training runs scored on the
    /// validation prompts, then train full backbones for it. `[1]` alone
    /// means identity weights, so the experts serve as backbones.
    pub fn backbones(&self, sft: &TabularPolicy, experts: &[TabularPolicy]) -> Result<BackboneStage> {
        let config = self.config;
        let n = self.task.n_objectives();
        if config.beta_candidates == [1.0] {
            return Ok((1.0, Vec::new(), WeightMatrix::identity(n)?, experts.to_vec()));
        }
        let (beta, scores) = if config.beta_candidates.len() == 1 {
            (config.beta_candidates[0], Vec::new())
        } else {
            let validation = self.task.validation_prompts();
            let prefs = config.preferences()?;
            let probe_episodes = ((config.rl_episodes as f64 * PROBE_FRACTION).round() as usize).max(1);
            let mut fronts = Vec::with_capacity(config.beta_candidates.len());
            for &b in &config.beta_candidates {
                let matrix = merge::build_weight_matrix(n, b)?;
                let probes = self.columns(sft, &matrix, &format!("probe_b{}", beta_name(b)), probe_episodes, 200)?;
                fronts.push(sweep_front(&prefs, "probe", self.seed, |mu| {
                    let theta = merged_policy(&probes, &matrix, mu, 0.0, sft)?;
                    evaluate(&DecodingSystem::base(theta), &self.task, &validation, config.decoding)
                })?);
            }
            let hv = shared_hypervolumes(&fronts)?;
            let beta = merge::select_beta(n, &config.beta_candidates, |b| {
                let i = config.beta_candidates.iter().position(|&c| c == b).expect("candidate");
                Ok(hv[i])
            })?;
            (beta, config.beta_candidates.iter().copied().zip(hv).collect())
        };
        let matrix = merge::build_weight_matrix(n, beta)?;
        let backbones = self.columns(sft, &matrix, &format!("backbone_b{}", beta_name(beta)), config.rl_episodes, 300)?;
        Ok((beta, scores, matrix, backbones))
    }

    /// One explicit value model per objective, regressed on responses
    /// sampled from SFT.
    pub fn values(&self, sft: &TabularPolicy) -> Result<Vec<ExplicitValueModel>> {
        (0..self.task.n_objectives())
            .into_par_iter()
            .map(|k| {
                let train = || {
                    let cfg = TrainingConfig {
                        learning_rate: self.config.value_learning_rate,
                        episodes: self.config.value_episodes,
                        seed: derive_seed(self.seed, 400 + k as u64),
                        ..Default::default()
                    };
                    Ok(train_explicit_value(&self.task, k, sft, &cfg)?.model)
                };
                match self.store {
                    Some(s) => s.value(self.seed, &format!("value_{k}"), &self.prov, train),
                    None => train(),
                }
            })
            .collect()
    }
}

/// Train (or load) SFT, experts, backbones and value models for one seed,
/// choosing the dominance value on validation prompts along the way.
pub fn prepare_artifacts(config: &ExperimentConfig, seed: u64, store: Option<&ArtifactStore>) -> Result<Artifacts> {
    let stages = Stages::new(config, seed, store)?;
    let sft = stages.sft()?;
    let experts = stages.experts(&sft)?;
    let (beta, beta_scores, matrix, backbones) = stages.backbones(&sft, &experts)?;
    let values = stages.values(&sft)?;
    Ok(Artifacts { seed, task: stages.task, sft, experts, beta, beta_scores, matrix, backbones, values })
}

/// `lambda = B^-1 mu` over `models`, then extrapolation away from `sft`.
pub fn merged_policy(
    models: &[TabularPolicy],
    matrix: &WeightMatrix,
    mu: &Preference,
    alpha: f64,
    sft: &TabularPolicy,
) -> Result<TabularPolicy> {
    let params: Vec<_> = models.iter().map(TabularPolicy::to_param).collect();
    let lambda = merge::solve_coefficients(matrix, mu)?;
    let merged = merge::merge_params(&params, &lambda)?;
    let merged = merge::extrapolate(&merged, &sft.to_param(), alpha)?;
    TabularPolicy::from_param(&merged)
}

/// Merge the per-objective explicit value tables linearly under `mu`.
pub fn merged_explicit(values: &[ExplicitValueModel], mu: &Preference) -> Result<ExplicitValueModel> {
    let params: Vec<_> = values.iter().map(ExplicitValueModel::to_param).collect();
    ExplicitValueModel::from_param(&merge_value_models(&params, mu, &ValueMergeStrategy::Linear)?)
}

/// Merge the experts' parameters linearly under `mu`, keeping SFT as the
/// reference.
pub fn merged_implicit(experts: &[TabularPolicy], sft: &TabularPolicy, mu: &Preference) -> Result<ImplicitValueModel> {
    let params: Vec<_> = experts.iter().map(TabularPolicy::to_param).collect();
    let tuned = TabularPolicy::from_param(&merge_value_models(&params, mu, &ValueMergeStrategy::Linear)?)?;
    ImplicitValueModel::new(tuned, sft.clone())
}

/// Guidance ensembling the per-objective explicit value models.
pub fn explicit_ensemble(values: &[ExplicitValueModel], mu: &Preference) -> Result<Guidance> {
    Guidance::ensemble(values.iter().cloned().map(Guidance::Explicit).collect(), mu.weights().to_vec())
}

/// Guidance ensembling the experts' implicit value models.
pub fn implicit_ensemble(experts: &[TabularPolicy], sft: &TabularPolicy, mu: &Preference) -> Result<Guidance> {
    let members = experts
        .iter()
        .map(|e| ImplicitValueModel::new(e.clone(), sft.clone()).map(Guidance::Implicit))
        .collect::<Result<Vec<_>>>()?;
    Guidance::ensemble(members, mu.weights().to_vec())
}

/// The decoding system `method` builds for preference `mu`.
pub fn build_system(method: Method, art: &Artifacts, alpha: f64, gamma: f64, mu: &Preference) -> Result<DecodingSystem> {
    let bone = || merged_policy(&art.backbones, &art.matrix, mu, alpha, &art.sft);
    let guided = |guidance: Guidance| -> Result<DecodingSystem> {
        Ok(DecodingSystem::Guided { policy: bone()?, guidance, gamma })
    };
    match method {
        Method::RewardedSoup => {
            let eye = WeightMatrix::identity(mu.len())?;
            Ok(DecodingSystem::base(merged_policy(&art.experts, &eye, mu, 0.0, &art.sft)?))
        }
        Method::BoneSoup => Ok(DecodingSystem::base(bone()?)),
        Method::MageE => guided(explicit_ensemble(&art.values, mu)?),
        Method::MageEM => guided(Guidance::Explicit(merged_explicit(&art.values, mu)?)),
        Method::MageI => guided(implicit_ensemble(&art.experts, &art.sft, mu)?),
        Method::MageIM => guided(Guidance::Implicit(merged_implicit(&art.experts, &art.sft, mu)?)),
        Method::LogitEnsemble => Ok(DecodingSystem::LogitEnsemble { policies: art.experts.clone(), mu: mu.weights().to_vec() }),
    }
}

/// Mean reward vector of `system` over `prompts`.
pub fn evaluate(system: &DecodingSystem, task: &ToyTask, prompts: &[usize], decoding: Decoding) -> Result<Vec<f64>> {
    if prompts.is_empty() {
        return Err(Error::InvalidArgument("no prompts to evaluate".into()));
    }
    let mut total = vec![0.0; task.n_objectives()];
    for &prompt in prompts {
        let r = match decoding {
            Decoding::Expected => system.expected_rewards(task, prompt)?,
            Decoding::Greedy => reward_vector(task, prompt, &system.greedy(prompt, task.horizon)?)?,
        };
        total.iter_mut().zip(&r).for_each(|(t, x)| *t += x);
    }
    Ok(total.into_iter().map(|t| t / prompts.len() as f64).collect())
}

/// Evaluate `eval` at every preference in parallel and collect the points
/// in grid order.
pub fn sweep_front<F>(prefs: &[Preference], method: &str, seed: u64, eval: F) -> Result<FrontSet>
where
    F: Fn(&Preference) -> Result<Vec<f64>> + Sync,
{
    let points = prefs
        .par_iter()
        .map(|mu| FrontPoint::new(mu.clone(), eval(mu)?, method, seed))
        .collect::<Result<Vec<_>>>()?;
    FrontSet::new(points)
}

/// Hypervolume of each front against one reference point derived from all
/// of them.
pub fn shared_hypervolumes(fronts: &[FrontSet]) -> Result<Vec<f64>> {
    let reference = reference_point(fronts, REFERENCE_MARGIN)?;
    fronts.iter().map(|f| hypervolume(&f.rewards(), &reference)).collect()
}

/// Candidate with the largest shared-reference hypervolume; ties go to the
/// smaller candidate.
fn select_by_hypervolume<F>(candidates: &[f64], front_for: F) -> Result<(f64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Result<FrontSet>,
{
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let fronts = sorted.iter().map(|&c| front_for(c)).collect::<Result<Vec<_>>>()?;
    let scores = shared_hypervolumes(&fronts)?;
    let mut best = 0;
    for i in 1..scores.len() {
        if scores[i] > scores[best] {
            best = i;
        }
    }
    Ok((sorted[best], sorted.into_iter().zip(scores).collect()))
}

/// Hyperparameters chosen for one seed, with the validation hypervolume of
/// every candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub seed: u64,
    pub beta: f64,
    pub beta_scores: Vec<(f64, f64)>,
    pub alpha: f64,
    pub alpha_scores: Vec<(f64, f64)>,
    /// Guidance strength per guided method.
    pub gammas: Vec<(Method, f64)>,
}

impl Selection {
    pub fn gamma(&self, method: Method) -> f64 {
        self.gammas.iter().find(|(m, _)| *m == method).map_or(0.0, |(_, g)| *g)
    }
}

/// Choose the extrapolation strength for bone soup and the guidance
/// strength for each guided method on the validation prompts.
pub fn select_hyperparameters(config: &ExperimentConfig, art: &Artifacts) -> Result<Selection> {
    let prefs = config.preferences()?;
    let validation = art.task.validation_prompts();
    let front = |method: Method, alpha: f64, gamma: f64| {
        sweep_front(&prefs, method.as_str(), art.seed, |mu| {
            evaluate(&build_system(method, art, alpha, gamma, mu)?, &art.task, &validation, config.decoding)
        })
    };
    let (alpha, alpha_scores) = if config.alpha_candidates.len() == 1 {
        (config.alpha_candidates[0], Vec::new())
    } else {
        select_by_hypervolume(&config.alpha_candidates, |a| front(Method::BoneSoup, a, 0.0))?
    };
    let mut gammas = Vec::new();
    for &m in config.methods.iter().filter(|m| m.is_guided()) {
        let g = if config.gamma_candidates.len() == 1 {
            config.gamma_candidates[0]
        } else {
            select_by_hypervolume(&config.gamma_candidates, |g| front(m, alpha, g))?.0
        };
        gammas.push((m, g));
    }
    gammas.sort_by_key(|(m, _)| *m);
    Ok(Selection { seed: art.seed, beta: art.beta, beta_scores: art.beta_scores.clone(), alpha, alpha_scores, gammas })
}

/// Fronts of every configured method on all prompts.
pub fn method_fronts(config: &ExperimentConfig, art: &Artifacts, sel: &Selection) -> Result<Vec<FrontSet>> {
    let prefs = config.preferences()?;
    let prompts = art.task.all_prompts();
    let mut methods = config.methods.clone();
    methods.sort();
    methods
        .iter()
        .map(|&m| {
            sweep_front(&prefs, m.as_str(), art.seed, |mu| {
                let system = build_system(m, art, sel.alpha, sel.gamma(m), mu)?;
                evaluate(&system, &art.task, &prompts, config.decoding)
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: ExperimentConfig,
    pub digest: String,
    pub selections: Vec<Selection>,
    /// One front per (method, seed), sorted by method then seed.
    pub fronts: Vec<FrontSet>,
    /// Shared hypervolume reference over all fronts.
    pub reference: Vec<f64>,
    /// Summary per front, aligned with `fronts`.
    pub summaries: Vec<FrontSummary>,
}

impl SweepResult {
    pub fn front(&self, method: Method, seed: u64) -> Option<&FrontSet> {
        self.fronts
            .iter()
            .find(|f| f.method() == Some(method.as_str()) && f.points().first().map(|p| p.seed) == Some(seed))
    }

    pub fn summary(&self, method: Method, seed: u64) -> Option<&FrontSummary> {
        let i = self
            .fronts
            .iter()
            .position(|f| f.method() == Some(method.as_str()) && f.points().first().map(|p| p.seed) == Some(seed))?;
        self.summaries.get(i)
    }
}

/// Run the whole pipeline for every seed. With `store`, trained artifacts
/// are read from and written to the checkpoint directory.
pub fn run_sweep(config: &ExperimentConfig, store: Option<&ArtifactStore>) -> Result<SweepResult> {
    let (result, _) = run_sweep_with_artifacts(config, store)?;
    Ok(result)
}

/// [`run_sweep`], also returning the per-seed artifacts.
pub fn run_sweep_with_artifacts(
    config: &ExperimentConfig,
    store: Option<&ArtifactStore>,
) -> Result<(SweepResult, Vec<Artifacts>)> {
    config.validate()?;
    let mut selections = Vec::new();
    let mut fronts = Vec::new();
    let mut artifacts = Vec::new();
    for &seed in &config.seeds {
        let art = prepare_artifacts(config, seed, store)?;
        let sel = select_hyperparameters(config, &art)?;
        fronts.extend(method_fronts(config, &art, &sel)?);
        selections.push(sel);
        artifacts.push(art);
    }
    fronts.sort_by(|a, b| {
        let key = |f: &FrontSet| (f.method().unwrap_or("").to_string(), f.points().first().map_or(0, |p| p.seed));
        key(a).cmp(&key(b))
    });
    let reference = reference_point(&fronts, REFERENCE_MARGIN)?;
    let summaries = fronts.iter().map(|f| summarize(f, &reference)).collect::<Result<Vec<_>>>()?;
    let result = SweepResult { config: config.clone(), digest: config.digest(), selections, fronts, reference, summaries };
    Ok((result, artifacts))
}
