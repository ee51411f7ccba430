//! Flat `key = value` experiment configuration.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::merge::Preference;
use crate::world::AB_CONFLICT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    RewardedSoup,
    BoneSoup,
    MageE,
    MageEM,
    MageI,
    MageIM,
    LogitEnsemble,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::RewardedSoup,
        Method::BoneSoup,
        Method::MageE,
        Method::MageEM,
        Method::MageI,
        Method::MageIM,
        Method::LogitEnsemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::RewardedSoup => "rewarded_soup",
            Method::BoneSoup => "bone_soup",
            Method::MageE => "mage_e",
            Method::MageEM => "mage_e_m",
            Method::MageI => "mage_i",
            Method::MageIM => "mage_i_m",
            Method::LogitEnsemble => "logit_ensemble",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }

    /// Methods that steer a merged backbone with value guidance.
    pub fn is_guided(self) -> bool {
        matches!(self, Method::MageE | Method::MageEM | Method::MageI | Method::MageIM)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How a decoding system is scored on a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decoding {
    /// Exact expected rewards under the system's next-token distribution.
    Expected,
    /// Rewards of the single greedy (argmax) response.
    Greedy,
}

impl Decoding {
    pub fn as_str(self) -> &'static str {
        match self {
            Decoding::Expected => "expected",
            Decoding::Greedy => "greedy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "expected" => Ok(Decoding::Expected),
            "greedy" => Ok(Decoding::Greedy),
            _ => Err(Error::Config(format!("unknown decoding mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub task: String,
    pub objectives: usize,
    pub beta_candidates: Vec<f64>,
    pub alpha_candidates: Vec<f64>,
    pub eta: f64,
    pub gamma_candidates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub preference_grid: Vec<Vec<f64>>,
    pub methods: Vec<Method>,
    /// Policy-gradient episodes per expert or backbone.
    pub rl_episodes: usize,
    pub rl_learning_rate: f64,
    /// Sampled responses per explicit value model.
    pub value_episodes: usize,
    pub value_learning_rate: f64,
    pub decoding: Decoding,
    /// Train artifacts absent from the checkpoint directory instead of failing.
    pub train_missing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: AB_CONFLICT.to_string(),
            objectives: 2,
            beta_candidates: vec![0.6, 0.7, 0.8],
            alpha_candidates: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            eta: 0.05,
            gamma_candidates: vec![0.1, 0.2, 1.0, 3.0, 5.0],
            seeds: vec![0],
            preference_grid: default_grid(2),
            methods: Method::ALL.to_vec(),
            rl_episodes: 20_000,
            rl_learning_rate: 0.5,
            value_episodes: 20_000,
            value_learning_rate: 0.01,
            decoding: Decoding::Expected,
            train_missing: true,
        }
    }
}

/// `{(i/10, 1 - i/10)}` for two objectives; the step-0.2 simplex lattice
/// otherwise.
pub fn default_grid(n: usize) -> Vec<Vec<f64>> {
    if n == 2 {
        return (0..=10).map(|i| vec![i as f64 / 10.0, (10 - i) as f64 / 10.0]).collect();
    }
    let mut out = Vec::new();
    let mut cur = vec![0usize; n];
    lattice(5, 0, &mut cur, &mut out);
    out.sort_by(|a, b| crate::metrics::lex_cmp(a, b));
    out
}

fn lattice(left: usize, i: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
    if i + 1 == cur.len() {
        cur[i] = left;
        out.push(cur.iter().map(|&c| c as f64 / 5.0).collect());
        return;
    }
    for c in 0..=left {
        cur[i] = c;
        lattice(left - c, i + 1, cur, out);
    }
}

fn list<T>(value: &str, parse: impl Fn(&str) -> Result<T>) -> Result<Vec<T>> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(parse).collect()
}

fn real(key: &str) -> impl Fn(&str) -> Result<f64> + '_ {
    move |s| {
        s.parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::Config(format!("{key}: {s:?} is not a finite number")))
    }
}

fn int<T: std::str::FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| Error::Config(format!("{key}: {s:?} is not a non-negative integer")))
}

fn join<T: fmt::Display>(xs: &[T]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Parse `key = value` lines over the defaults. `#` starts a comment.
    /// A config that sets `objectives` without `preference_grid` gets the
    /// default grid for that many objectives.
    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        let mut seen = BTreeSet::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key {key}", no + 1)));
            }
            match key {
                "task" => c.task = value.to_string(),
                "objectives" => c.objectives = int(key, value)?,
                "beta_candidates" => c.beta_candidates = list(value, real(key))?,
                "alpha_candidates" => c.alpha_candidates = list(value, real(key))?,
                "eta" => c.eta = real(key)(value)?,
                "gamma_candidates" => c.gamma_candidates = list(value, real(key))?,
                "seeds" => c.seeds = list(value, |s| int(key, s))?,
                "preference_grid" => {
                    c.preference_grid = value
                        .split(';')
                        .map(str::trim)
                        .filter(|s| !s.is_empty())
                        .map(|p| list(p, real(key)))
                        .collect::<Result<_>>()?
                }
                "methods" => c.methods = list(value, Method::parse)?,
                "rl_episodes" => c.rl_episodes = int(key, value)?,
                "rl_learning_rate" => c.rl_learning_rate = real(key)(value)?,
                "value_episodes" => c.value_episodes = int(key, value)?,
                "value_learning_rate" => c.value_learning_rate = real(key)(value)?,
                "decoding" => c.decoding = Decoding::parse(value)?,
                "train_missing" => {
                    c.train_missing = value
                        .parse()
                        .map_err(|_| Error::Config(format!("train_missing: {value:?} is not true/false")))?
                }
                _ => return Err(Error::Config(format!("line {}: unknown key {key}", no + 1))),
            }
        }
        if seen.contains("objectives") && !seen.contains("preference_grid") {
            c.preference_grid = default_grid(c.objectives);
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.objectives < 2 {
            return bad(format!("objectives must be >= 2, got {}", self.objectives));
        }
        for (name, empty) in [
            ("beta_candidates", self.beta_candidates.is_empty()),
            ("alpha_candidates", self.alpha_candidates.is_empty()),
            ("gamma_candidates", self.gamma_candidates.is_empty()),
            ("seeds", self.seeds.is_empty()),
            ("preference_grid", self.preference_grid.is_empty()),
            ("methods", self.methods.is_empty()),
        ] {
            if empty {
                return bad(format!("{name} must not be empty"));
            }
        }
        let lo = 1.0 / self.objectives as f64;
        let lone_one = self.beta_candidates == [1.0];
        if !lone_one && self.beta_candidates.iter().any(|&b| !(b > lo && b < 1.0)) {
            return bad(format!("beta candidates must lie in ({lo}, 1) or be exactly [1]"));
        }
        if self.alpha_candidates.iter().any(|&a| a < 0.0) {
            return bad("alpha candidates must be >= 0".into());
        }
        if self.gamma_candidates.iter().any(|&g| g < 0.0) {
            return bad("gamma candidates must be >= 0".into());
        }
        if self.eta < 0.0 {
            return bad("eta must be >= 0".into());
        }
        for mu in &self.preference_grid {
            if mu.len() != self.objectives {
                return bad(format!("preference {mu:?} does not have {} entries", self.objectives));
            }
            Preference::new(mu.clone()).map_err(|e| Error::Config(e.to_string()))?;
        }
        let mut methods = self.methods.clone();
        methods.sort();
        methods.dedup();
        if methods.len() != self.methods.len() {
            return bad("methods listed twice".into());
        }
        if self.rl_episodes == 0 || self.value_episodes == 0 {
            return bad("episode counts must be >= 1".into());
        }
        if !(self.rl_learning_rate > 0.0 && self.value_learning_rate > 0.0) {
            return bad("learning rates must be > 0".into());
        }
        Ok(())
    }

    pub fn preferences(&self) -> Result<Vec<Preference>> {
        self.preference_grid.iter().map(|m| Preference::new(m.clone())).collect()
    }

    /// Every field in a fixed order with shortest round-trip number
    /// formatting. Equal configs render equally regardless of how the source
    /// file spelled them.
    pub fn canonical(&self) -> String {
        let grid = self.preference_grid.iter().map(|m| join(m)).collect::<Vec<_>>().join(";");
        let methods = self.methods.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",");
        [
            format!("task = {}", self.task),
            format!("objectives = {}", self.objectives),
            format!("beta_candidates = {}", join(&self.beta_candidates)),
            format!("alpha_candidates = {}", join(&self.alpha_candidates)),
            format!("eta = {}", self.eta),
            format!("gamma_candidates = {}", join(&self.gamma_candidates)),
            format!("seeds = {}", join(&self.seeds)),
            format!("preference_grid = {grid}"),
            format!("methods = {methods}"),
            format!("rl_episodes = {}", self.rl_episodes),
            format!("rl_learning_rate = {}", self.rl_learning_rate),
            format!("value_episodes = {}", self.value_episodes),
            format!("value_learning_rate = {}", self.value_learning_rate),
            format!("decoding = {}", self.decoding.as_str()),
            format!("train_missing = {}", self.train_missing),
        ]
        .join("\n")
            + "\n"
    }

    /// Digest of the fields that determine trained artifacts. Checkpoints
    /// carry it so a changed setup is not silently reused.
    pub fn training_digest(&self) -> String {
        let text = format!(
            "task = {}\nobjectives = {}\neta = {}\nrl_episodes = {}\nrl_learning_rate = {}\nvalue_episodes = {}\nvalue_learning_rate = {}\n",
            self.task,
            self.objectives,
            self.eta,
            self.rl_episodes,
            self.rl_learning_rate,
            self.value_episodes,
            self.value_learning_rate
        );
        hex(&Sha256::digest(text.as_bytes()))
    }

    /// SHA-256 of [`canonical`](Self::canonical), lowercase hex.
    pub fn digest(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_canonical_text() {
        let c = ExperimentConfig::default();
        assert_eq!(ExperimentConfig::parse(&c.canonical()).unwrap(), c);
        assert_eq!(c.preference_grid.len(), 11);
        assert_eq!(c.preference_grid[3], vec![0.3, 0.7]);
    }

    #[test]
    fn digest_ignores_spelling_but_not_values() {
        let a = ExperimentConfig::parse("eta = 0.05\nseeds = 0\n").unwrap();
        let b = ExperimentConfig::parse("# same\nseeds=0\neta=5e-2").unwrap();
        assert_eq!(a.digest(), b.digest());
        let c = ExperimentConfig::parse("eta = 0.06").unwrap();
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }

    #[test]
    fn three_objective_grid() {
        let c = ExperimentConfig::parse("objectives = 3\nbeta_candidates = 0.6").unwrap();
        assert_eq!(c.preference_grid.len(), 21);
        assert!(c.preference_grid.iter().all(|m| (m.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "beta_candidates =",
            "beta_candidates = 0.4",
            "beta_candidates = 0.7, 1.0",
            "methods = bone_soup, nope",
            "methods = bone_soup, bone_soup",
            "preference_grid = 0.5,0.6",
            "preference_grid = 1,0,0",
            "eta = nan",
            "frobnicate = 1",
            "eta = 1\neta = 2",
            "no equals sign",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
        assert!(ExperimentConfig::parse("beta_candidates = 1\nalpha_candidates = 0").is_ok());
    }

    #[test]
    fn explicit_grid() {
        let c = ExperimentConfig::parse("preference_grid = 1,0; 0.25,0.75 ;0,1").unwrap();
        assert_eq!(c.preference_grid, vec![vec![1.0, 0.0], vec![0.25, 0.75], vec![0.0, 1.0]]);
    }
}
