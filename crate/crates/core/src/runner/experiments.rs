//! Experiments on value-model merging: mode connectivity along the merge
//! path, merged versus ensembled guidance, and their controllability.

use crate::decode::{DecodingSystem, Guidance};
use crate::error::{Error, Result};
use crate::merge::Preference;
use crate::metrics::{controllability, FrontSet};
use crate::runner::config::{Decoding, ExperimentConfig, Method};
use crate::runner::sweep::{build_system, evaluate, merged_explicit, sweep_front, Artifacts};

#[derive(Debug, Clone, PartialEq)]
pub struct LmcPoint {
    pub lambda: f64,
    pub rewards: Vec<f64>,
    /// Linear interpolation of the endpoint rewards.
    pub chord: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmcReport {
    pub gamma: f64,
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub points: Vec<LmcPoint>,
}

impl LmcReport {
    /// Smallest `reward - chord` over interior points and objectives.
    pub fn min_margin(&self) -> f64 {
        self.points
            .iter()
            .flat_map(|p| p.rewards.iter().zip(&p.chord).map(|(r, c)| r - c))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Guide the SFT policy with the explicit value model merged at weight
/// `lambda` on objective 0 and `1 - lambda` on objective 1, and compare
/// each objective's reward with the chord between `lambda = 0` and `1`.
pub fn lmc_experiment(art: &Artifacts, gamma: f64, lambdas: &[f64], decoding: Decoding) -> Result<LmcReport> {
    if art.values.len() != 2 {
        return Err(Error::InvalidArgument("the merge-path experiment needs exactly two value models".into()));
    }
    let prompts = art.task.all_prompts();
    let at = |lambda: f64| -> Result<Vec<f64>> {
        let guidance = Guidance::Explicit(merged_explicit(&art.values, &Preference::pair(lambda)?)?);
        let system = DecodingSystem::Guided { policy: art.sft.clone(), guidance, gamma };
        evaluate(&system, &art.task, &prompts, decoding)
    };
    let start = at(0.0)?;
    let end = at(1.0)?;
    let points = lambdas
        .iter()
        .map(|&lambda| {
            let chord = start.iter().zip(&end).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
            Ok(LmcPoint { lambda, rewards: at(lambda)?, chord })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LmcReport { gamma, start, end, points })
}

/// Merged guidance against prediction ensembling for one value kind.
#[derive(Debug, Clone)]
pub struct KindComparison {
    pub kind: &'static str,
    pub gamma: f64,
    pub merged: FrontSet,
    pub ensemble: FrontSet,
}

impl KindComparison {
    /// Largest per-objective reward gap over the grid.
    pub fn max_gap(&self) -> f64 {
        self.merged
            .points()
            .iter()
            .zip(self.ensemble.points())
            .flat_map(|(a, b)| a.rewards.iter().zip(&b.rewards).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn controllability(&self) -> Result<(f64, f64)> {
        let k = |f: &FrontSet| controllability(&f.preferences(), &f.rewards());
        Ok((k(&self.merged)?, k(&self.ensemble)?))
    }
}

/// For both value kinds, sweep the grid with merged and with ensembled
/// guidance on the same backbone at the same strength.
pub fn merge_vs_ensemble(
    config: &ExperimentConfig,
    art: &Artifacts,
    alpha: f64,
    gamma_explicit: f64,
    gamma_implicit: f64,
) -> Result<Vec<KindComparison>> {
    let prefs = config.preferences()?;
    let prompts = art.task.all_prompts();
    let front = |m: Method, gamma: f64| {
        sweep_front(&prefs, m.as_str(), art.seed, |mu| {
            evaluate(&build_system(m, art, alpha, gamma, mu)?, &art.task, &prompts, config.decoding)
        })
    };
    Ok(vec![
        KindComparison {
            kind: "explicit",
            gamma: gamma_explicit,
            merged: front(Method::MageEM, gamma_explicit)?,
            ensemble: front(Method::MageE, gamma_explicit)?,
        },
        KindComparison {
            kind: "implicit",
            gamma: gamma_implicit,
            merged: front(Method::MageIM, gamma_implicit)?,
            ensemble: front(Method::MageI, gamma_implicit)?,
        },
    ])
}
