//! Closed-form testbed with quadratic rewards.
//!
//! Each objective is `r_i(x) = peak_value_i - sum_j k_ij (x_j - peak_ij)^2`.
//! Weighted sums of such rewards stay quadratic, so every optimum the
//! merging pipeline needs (exact, backbone, merged) is available in closed
//! form and the two merging rules can be compared without any training
//! noise.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::merge::{self, MergeCoefficients, ParamVector, Preference, WeightMatrix};

/// Agreement required between closed-form and brute-force errors.
pub const CONSISTENCY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct QuadReward {
    peak: ParamVector,
    curvature: Vec<f64>,
    peak_value: f64,
}

impl QuadReward {
    pub fn new(peak: Vec<f64>, curvature: Vec<f64>, peak_value: f64) -> Result<Self> {
        if peak.len() != curvature.len() {
            return Err(Error::DimensionMismatch { expected: peak.len(), actual: curvature.len() });
        }
        if curvature.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::InvalidArgument("curvatures must be positive and finite".into()));
        }
        if !peak_value.is_finite() {
            return Err(Error::NonFinite("peak value".into()));
        }
        Ok(Self { peak: ParamVector::point(peak)?, curvature, peak_value })
    }

    /// Same curvature `k` in every dimension.
    pub fn isotropic(peak: Vec<f64>, k: f64) -> Result<Self> {
        let d = peak.len();
        Self::new(peak, vec![k; d], 0.0)
    }

    pub fn peak(&self) -> &ParamVector {
        &self.peak
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn dim(&self) -> usize {
        self.curvature.len()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let pen: f64 = x
            .iter()
            .zip(self.peak.values())
            .zip(&self.curvature)
            .map(|((xi, pi), k)| k * (xi - pi) * (xi - pi))
            .sum();
        self.peak_value - pen
    }
}

/// The two quadratic rewards used to motivate backbone merging:
/// `-(x-1)^2 - (y-1)^2` and `-(x-3)^2 - 4(y+1)^2`.
pub fn motivating_rewards() -> Vec<QuadReward> {
    vec![
        QuadReward::new(vec![1.0, 1.0], vec![1.0, 1.0], 0.0).expect("valid"),
        QuadReward::new(vec![3.0, -1.0], vec![1.0, 4.0], 0.0).expect("valid"),
    ]
}

/// Preference-weighted reward `sum_i mu_i r_i(x)`.
pub fn weighted_reward(rewards: &[QuadReward], mu: &[f64], x: &[f64]) -> f64 {
    rewards.iter().zip(mu).map(|(r, m)| m * r.eval(x)).sum()
}

fn check_rewards(rewards: &[QuadReward], n: usize) -> Result<usize> {
    let first = rewards
        .first()
        .ok_or_else(|| Error::InvalidArgument("no rewards".into()))?;
    if rewards.len() != n {
        return Err(Error::DimensionMismatch { expected: rewards.len(), actual: n });
    }
    let d = first.dim();
    if let Some(r) = rewards.iter().find(|r| r.dim() != d) {
        return Err(Error::DimensionMismatch { expected: d, actual: r.dim() });
    }
    Ok(d)
}

/// Maximiser of the weighted reward: per dimension, the curvature-weighted
/// mean of the peaks.
pub fn exact_optimum(rewards: &[QuadReward], mu: &Preference) -> Result<ParamVector> {
    let d = check_rewards(rewards, mu.len())?;
    let w = mu.weights();
    let mut out = Vec::with_capacity(d);
    for j in 0..d {
        let den: f64 = rewards.iter().zip(w).map(|(r, m)| m * r.curvature[j]).sum();
        if den <= 0.0 {
            return Err(Error::InvalidArgument(format!("zero total curvature in dimension {j}")));
        }
        let num: f64 = rewards
            .iter()
            .zip(w)
            .map(|(r, m)| m * r.curvature[j] * r.peak.values()[j])
            .sum();
        out.push(num / den);
    }
    ParamVector::point(out)
}

/// Preference-weighted average of the single-objective optima.
pub fn soup_solution(rewards: &[QuadReward], mu: &Preference) -> Result<ParamVector> {
    check_rewards(rewards, mu.len())?;
    let peaks: Vec<ParamVector> = rewards.iter().map(|r| r.peak.clone()).collect();
    merge::merge_params(&peaks, &MergeCoefficients::from_preference(mu))
}

/// Optima of each backbone reward `h_i = w_i^T r`.
pub fn backbone_optima(rewards: &[QuadReward], b: &WeightMatrix) -> Result<Vec<ParamVector>> {
    b.columns()
        .into_iter()
        .map(|w| exact_optimum(rewards, &Preference::new(w)?))
        .collect()
}

/// Merge the backbone optima with `lambda = B^-1 mu`.
pub fn bone_solution(rewards: &[QuadReward], b: &WeightMatrix, mu: &Preference) -> Result<ParamVector> {
    check_rewards(rewards, b.n())?;
    let backbones = backbone_optima(rewards, b)?;
    let lambda = merge::solve_coefficients(b, mu)?;
    merge::merge_params(&backbones, &lambda)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClosedFormErrors {
    /// Squared distance from the backbone-merged solution to the optimum.
    pub bone: f64,
    /// Squared distance from the preference-averaged solution to the optimum.
    pub soup: f64,
    /// Equal curvatures: both merging rules are exact.
    pub degenerate: bool,
}

/// Squared-distance errors of both merging rules for two isotropic
/// objectives, as closed-form functions of the curvatures, the dominance
/// value, and the preference `mu` on objective 1.
pub fn closed_form_errors(k1: f64, k2: f64, beta: f64, mu: f64, peak_distance: f64) -> Result<ClosedFormErrors> {
    if !(k1 > 0.0 && k2 > 0.0 && k1.is_finite() && k2.is_finite()) {
        return Err(Error::InvalidArgument("curvatures must be positive".into()));
    }
    if !(beta > 0.5 && beta <= 1.0) {
        return Err(Error::BetaOutOfRange { beta, lo: 0.5, n: 2 });
    }
    if !(0.0..=1.0).contains(&mu) {
        return Err(Error::InvalidArgument(format!("mu {mu} outside [0, 1]")));
    }
    if k1 == k2 {
        return Ok(ClosedFormErrors { bone: 0.0, soup: 0.0, degenerate: true });
    }
    let d2 = peak_distance * peak_distance;
    let mix = |a: f64| a * k1 + (1.0 - a) * k2;
    let bone = k1 * k2 * (k1 - k2) * (beta - mu) * (beta + mu - 1.0) / (mix(mu) * mix(beta) * mix(1.0 - beta));
    let soup = (k1 - k2) * (1.0 - mu) * mu / mix(mu);
    Ok(ClosedFormErrors { bone: bone * bone * d2, soup: soup * soup * d2, degenerate: false })
}

/// Open interval of preferences on which backbone merging provably beats
/// preference averaging: `((1 - L) / 2, (1 + L) / 2)` with
/// `L = sqrt(2 beta^2 - 2 beta + 1)`.
pub fn theorem_interval(beta: f64) -> Result<(f64, f64)> {
    if !(beta > 0.5 && beta < 1.0) {
        return Err(Error::BetaOutOfRange { beta, lo: 0.5, n: 2 });
    }
    let l = (2.0 * beta * beta - 2.0 * beta + 1.0).sqrt();
    Ok(((1.0 - l) / 2.0, (1.0 + l) / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridPoint {
    pub mu: f64,
    pub bone: f64,
    pub soup: f64,
    pub bone_brute: f64,
    pub soup_brute: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub k1: f64,
    pub k2: f64,
    pub beta: f64,
    pub interval: (f64, f64),
    pub grid: Vec<GridPoint>,
    pub degenerate: bool,
    /// Largest |closed form - brute force| over the grid.
    pub max_consistency_error: f64,
    /// Grid points inside the interval where backbone merging did not win.
    pub violations: Vec<f64>,
    /// Widest contiguous run of grid points (around mu = 1/2) where backbone
    /// merging wins, whether or not inside the proven interval.
    pub observed_region: Option<(f64, f64)>,
    pub pass: bool,
}

impl OracleReport {
    pub fn interval_length(&self) -> f64 {
        self.interval.1 - self.interval.0
    }
}

/// Peaks used for the isotropic verification runs.
const VERIFY_PEAKS: [[f64; 2]; 2] = [[1.0, 1.0], [3.0, -1.0]];

/// Check the backbone-merging advantage on a preference grid, comparing the
/// closed-form errors against errors measured from the merged solutions.
pub fn verify_theorem(k1: f64, k2: f64, beta: f64, grid_step: f64) -> Result<OracleReport> {
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::InvalidArgument(format!("grid step {grid_step} outside (0, 1]")));
    }
    let interval = theorem_interval(beta)?;
    let rewards = vec![
        QuadReward::isotropic(VERIFY_PEAKS[0].to_vec(), k1)?,
        QuadReward::isotropic(VERIFY_PEAKS[1].to_vec(), k2)?,
    ];
    let distance = VERIFY_PEAKS[0]
        .iter()
        .zip(&VERIFY_PEAKS[1])
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let b = merge::build_weight_matrix(2, beta)?;
    let steps = (1.0 / grid_step).round() as usize;
    let grid: Vec<GridPoint> = (0..=steps)
        .into_par_iter()
        .map(|i| -> Result<GridPoint> {
            let mu = (i as f64 * grid_step).min(1.0);
            let pref = Preference::pair(mu)?;
            let cf = closed_form_errors(k1, k2, beta, mu, distance)?;
            let opt = exact_optimum(&rewards, &pref)?;
            let bone = bone_solution(&rewards, &b, &pref)?;
            let soup = soup_solution(&rewards, &pref)?;
            Ok(GridPoint {
                mu,
                bone: cf.bone,
                soup: cf.soup,
                bone_brute: squared_distance(bone.values(), opt.values()),
                soup_brute: squared_distance(soup.values(), opt.values()),
                inside: mu > interval.0 && mu < interval.1,
            })
        })
        .collect::<Result<_>>()?;

    let degenerate = k1 == k2;
    let max_consistency_error = grid
        .iter()
        .map(|g| (g.bone - g.bone_brute).abs().max((g.soup - g.soup_brute).abs()))
        .fold(0.0, f64::max);
    let violations: Vec<f64> = grid
        .iter()
        .filter(|g| g.inside && g.bone.partial_cmp(&g.soup) != Some(std::cmp::Ordering::Less))
        .map(|g| g.mu)
        .collect();
    let observed_region = observed_region(&grid);
    let pass = !degenerate && violations.is_empty() && max_consistency_error <= CONSISTENCY_TOL;
    Ok(OracleReport {
        k1,
        k2,
        beta,
        interval,
        grid,
        degenerate,
        max_consistency_error,
        violations,
        observed_region,
        pass,
    })
}

fn observed_region(grid: &[GridPoint]) -> Option<(f64, f64)> {
    let centre = grid
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1.mu - 0.5).abs().total_cmp(&(b.1.mu - 0.5).abs()))?
        .0;
    let wins = |g: &GridPoint| g.bone < g.soup;
    if !wins(&grid[centre]) {
        return None;
    }
    let mut lo = centre;
    while lo > 0 && wins(&grid[lo - 1]) {
        lo -= 1;
    }
    let mut hi = centre;
    while hi + 1 < grid.len() && wins(&grid[hi + 1]) {
        hi += 1;
    }
    Some((grid[lo].mu, grid[hi].mu))
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn motivating_example_values() {
        let r = motivating_rewards();
        let half = Preference::uniform(2).unwrap();
        assert!(close(exact_optimum(&r, &half).unwrap().values(), &[2.0, -0.6], 1e-12));
        assert!(close(soup_solution(&r, &half).unwrap().values(), &[2.0, 0.0], 1e-12));

        let b = WeightMatrix::from_columns(&[vec![0.4, 0.6], vec![0.6, 0.4]]).unwrap();
        let bb = backbone_optima(&r, &b).unwrap();
        assert!(close(bb[0].values(), &[2.2, -5.0 / 7.0], 1e-12));
        assert!(close(bb[1].values(), &[1.8, -5.0 / 11.0], 1e-12));
        let merged = bone_solution(&r, &b, &half).unwrap();
        assert!(close(merged.values(), &[2.0, -45.0 / 77.0], 1e-12));

        // preference equal to a backbone's combination weight returns that backbone
        let direct = bone_solution(&r, &b, &Preference::new(vec![0.4, 0.6]).unwrap()).unwrap();
        assert!(close(direct.values(), &[2.2, -5.0 / 7.0], 1e-12));
    }

    #[test]
    fn single_objective_and_equal_curvature_cases() {
        let r = motivating_rewards();
        let e1 = Preference::basis(2, 0).unwrap();
        assert!(close(exact_optimum(&r, &e1).unwrap().values(), &[1.0, 1.0], 0.0));
        let e2 = Preference::basis(2, 1).unwrap();
        assert_eq!(soup_solution(&r, &e2).unwrap().values(), &[3.0, -1.0]);

        let iso = vec![
            QuadReward::isotropic(vec![0.0, 0.0], 2.0).unwrap(),
            QuadReward::isotropic(vec![4.0, 2.0], 2.0).unwrap(),
        ];
        let mu = Preference::pair(0.25).unwrap();
        let soup = soup_solution(&iso, &mu).unwrap();
        assert!(close(soup.values(), &[3.0, 1.5], 1e-15));
        assert!(close(exact_optimum(&iso, &mu).unwrap().values(), soup.values(), 1e-12));
    }

    #[test]
    fn identity_backbones_equal_soup() {
        let r = motivating_rewards();
        let id = WeightMatrix::identity(2).unwrap();
        for i in 0..=10 {
            let mu = Preference::pair(i as f64 / 10.0).unwrap();
            assert_eq!(bone_solution(&r, &id, &mu).unwrap(), soup_solution(&r, &mu).unwrap());
        }
    }

    #[test]
    fn closed_form_examples() {
        let e = closed_form_errors(1.0, 2.0, 0.7, 0.5, 1.0).unwrap();
        assert!((e.soup - 1.0 / 36.0).abs() < 1e-15);
        assert_eq!(closed_form_errors(1.0, 3.0, 0.7, 0.7, 2.0).unwrap().bone, 0.0);
        assert!(closed_form_errors(1.0, 3.0, 0.7, 0.3, 2.0).unwrap().bone < 1e-30);
        let d = closed_form_errors(2.0, 2.0, 0.7, 0.4, 1.0).unwrap();
        assert!(d.degenerate && d.bone == 0.0 && d.soup == 0.0);
        // beta = 1 collapses onto the averaging rule
        let one = closed_form_errors(1.0, 5.0, 1.0, 0.35, 1.5).unwrap();
        assert!((one.bone - one.soup).abs() < 1e-15);
        assert!(closed_form_errors(1.0, 2.0, 0.5, 0.3, 1.0).is_err());
        assert!(closed_form_errors(1.0, 2.0, 0.7, 1.3, 1.0).is_err());
    }

    #[test]
    fn interval_values() {
        let (lo, hi) = theorem_interval(0.6).unwrap();
        assert!((lo - 0.139_445).abs() < 1e-6 && (hi - 0.860_555).abs() < 1e-6);
        assert!(((hi - lo) - 0.52f64.sqrt()).abs() < 1e-15);
        let (lo, hi) = theorem_interval(0.5 + 1e-9).unwrap();
        assert!(((hi - lo) - 2f64.sqrt() / 2.0).abs() < 1e-8);
        let (lo, hi) = theorem_interval(1.0 - 1e-9).unwrap();
        assert!(lo < 1e-8 && hi > 1.0 - 1e-8);
        assert!(theorem_interval(0.5).is_err());
        assert!(theorem_interval(1.0).is_err());
    }

    #[test]
    fn verify_passes_and_excludes_outside_points() {
        let rep = verify_theorem(1.0, 3.0, 0.7, 0.01).unwrap();
        assert!(rep.pass, "{:?}", rep.violations);
        assert!(rep.max_consistency_error < CONSISTENCY_TOL);

        let rep = verify_theorem(1.0, 2.0, 0.6, 0.05).unwrap();
        let p = rep.grid.iter().find(|g| (g.mu - 0.05).abs() < 1e-12).unwrap();
        assert!(!p.inside);
        assert!(rep.pass);
    }

    #[test]
    fn verify_degenerate() {
        let rep = verify_theorem(2.0, 2.0, 0.7, 0.1).unwrap();
        assert!(rep.degenerate);
        assert!(rep.grid.iter().all(|g| g.bone == 0.0 && g.soup == 0.0));
        assert!(rep.grid.iter().all(|g| g.bone_brute < 1e-20 && g.soup_brute < 1e-20));
    }

    #[test]
    fn verify_rejects_bad_inputs() {
        assert!(verify_theorem(1.0, 2.0, 0.7, 0.0).is_err());
        assert!(verify_theorem(1.0, 2.0, 1.0, 0.1).is_err());
        assert!(verify_theorem(-1.0, 2.0, 0.7, 0.1).is_err());
    }
}
