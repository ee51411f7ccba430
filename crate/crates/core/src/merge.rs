//! Weight-space merging algebra.
//!
//! Backbone models are trained on rewards combined through the columns of a
//! column-stochastic [`WeightMatrix`]. A user preference `mu` is mapped to
//! merging coefficients by solving `B * lambda = mu`, and the backbones are
//! then merged linearly with `lambda`. `B = I` recovers plain preference
//! averaging of single-objective experts.

use std::fmt;

use crate::error::{Error, Result};

/// Smallest eigenvalue magnitude (or LU pivot, for non-circulant matrices)
/// accepted before a weight matrix is treated as singular.
pub const SINGULARITY_THRESHOLD: f64 = 1e-10;

const SIMPLEX_TOL: f64 = 1e-12;
const COLUMN_SUM_TOL: f64 = 1e-9;

/// A point on the probability simplex over `n >= 2` objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct Preference {
    weights: Vec<f64>,
}

impl Preference {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.len() < 2 {
            return Err(Error::InvalidPreference(format!(
                "need at least 2 objectives, got {}",
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidPreference(format!("entry {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidPreference(format!("entries sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    /// Two-objective preference `(mu, 1 - mu)`.
    pub fn pair(mu: f64) -> Result<Self> {
        Self::new(vec![mu, 1.0 - mu])
    }

    /// The `i`-th standard basis vector in `n` dimensions.
    pub fn basis(n: usize, i: usize) -> Result<Self> {
        if i >= n {
            return Err(Error::InvalidArgument(format!("basis index {i} out of range for n = {n}")));
        }
        let mut w = vec![0.0; n];
        w[i] = 1.0;
        Self::new(w)
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Column-stochastic `n x n` matrix whose columns are the backbone
/// combination weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    n: usize,
    /// Dominant value for the symmetric circulant form; `None` for matrices
    /// assembled from arbitrary columns.
    beta: Option<f64>,
    /// Row-major entries; `entries[row][col]`.
    entries: Vec<Vec<f64>>,
}

impl WeightMatrix {
    /// Symmetric circulant matrix with `beta` on the diagonal and
    /// `(1 - beta) / (n - 1)` elsewhere.
    pub fn circulant(n: usize, beta: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidArgument(format!("objective count must be >= 2, got {n}")));
        }
        let lo = 1.0 / n as f64;
        if !beta.is_finite() || beta <= lo || beta > 1.0 {
            return Err(Error::BetaOutOfRange { beta, lo, n });
        }
        let off = (1.0 - beta) / (n - 1) as f64;
        let entries = (0..n)
            .map(|r| (0..n).map(|c| if r == c { beta } else { off }).collect())
            .collect();
        Ok(Self { n, beta: Some(beta), entries })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::circulant(n, 1.0)
    }

    /// Assemble from explicit columns. Each column must be non-negative and
    /// sum to one.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let n = columns.len();
        if n < 2 {
            return Err(Error::InvalidArgument(format!("objective count must be >= 2, got {n}")));
        }
        for (i, col) in columns.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch { expected: n, actual: col.len() });
            }
            if col.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::InvalidArgument(format!("column {i} has a negative or non-finite entry")));
            }
            let s: f64 = col.iter().sum();
            if (s - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(Error::InvalidArgument(format!("column {i} sums to {s}, not 1")));
            }
        }
        let entries = (0..n).map(|r| columns.iter().map(|c| c[r]).collect()).collect();
        Ok(Self { n, beta: None, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn beta(&self) -> Option<f64> {
        self.beta
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.entries[row][col]
    }

    /// Combination weight `w_i` of backbone `i`.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.entries.iter().map(|row| row[i]).collect()
    }

    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n).map(|i| self.column(i)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.entries
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// Eigenvalues of the circulant form: `1` once and
    /// `beta - (1 - beta) / (n - 1)` with multiplicity `n - 1`.
    pub fn circulant_eigenvalues(&self) -> Option<(f64, f64)> {
        self.beta.map(|b| (1.0, b - (1.0 - b) / (self.n - 1) as f64))
    }

    pub fn is_identity(&self) -> bool {
        self.beta == Some(1.0)
    }
}

impl fmt::Display for WeightMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in &self.entries {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
            writeln!(f, "[{}]", cells.join(", "))?;
        }
        Ok(())
    }
}

/// Merging coefficients `lambda`; entries may be negative (extrapolation).
#[derive(Debug, Clone, PartialEq)]
pub struct MergeCoefficients {
    lambda: Vec<f64>,
}

impl MergeCoefficients {
    pub fn new(lambda: Vec<f64>) -> Result<Self> {
        if lambda.is_empty() {
            return Err(Error::InvalidArgument("empty coefficient vector".into()));
        }
        if lambda.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("merge coefficient".into()));
        }
        let s: f64 = lambda.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!("coefficients sum to {s}, not 1")));
        }
        Ok(Self { lambda })
    }

    /// `lambda = mu`, the preference-averaging rule.
    pub fn from_preference(mu: &Preference) -> Self {
        Self { lambda: mu.weights().to_vec() }
    }

    pub fn values(&self) -> &[f64] {
        &self.lambda
    }

    pub fn len(&self) -> usize {
        self.lambda.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
    }
}

/// Identifies which kind of model a flat parameter vector came from, and its
/// layout. Vectors only merge with vectors carrying the same tag.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ShapeTag(String);

impl ShapeTag {
    pub fn new(tag: impl Into<String>) -> Self {
        Self(tag.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ShapeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Flat, finite parameter vector with a shape tag.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    shape: ShapeTag,
    values: Vec<f64>,
}

impl ParamVector {
    pub fn new(shape: ShapeTag, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} of {shape}")));
        }
        Ok(Self { shape, values })
    }

    /// Untagged point in R^d, used by the analytic oracle.
    pub fn point(values: Vec<f64>) -> Result<Self> {
        let tag = ShapeTag::new(format!("point:{}", values.len()));
        Self::new(tag, values)
    }

    pub fn shape(&self) -> &ShapeTag {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_compatible(&self, other: &ParamVector) -> bool {
        self.shape == other.shape && self.values.len() == other.values.len()
    }

    fn check_compatible(&self, other: &ParamVector) -> Result<()> {
        if self.is_compatible(other) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(format!(
                "{} (len {}) vs {} (len {})",
                self.shape,
                self.len(),
                other.shape,
                other.len()
            )))
        }
    }
}

/// Build the symmetric circulant weight matrix for `n` objectives.
pub fn build_weight_matrix(n: usize, beta: f64) -> Result<WeightMatrix> {
    WeightMatrix::circulant(n, beta)
}

/// Solve `B * lambda = mu`.
pub fn solve_coefficients(b: &WeightMatrix, mu: &Preference) -> Result<MergeCoefficients> {
    if mu.len() != b.n() {
        return Err(Error::DimensionMismatch { expected: b.n(), actual: mu.len() });
    }
    if b.is_identity() {
        return Ok(MergeCoefficients::from_preference(mu));
    }
    if let Some((_, minor)) = b.circulant_eigenvalues() {
        if minor.abs() < SINGULARITY_THRESHOLD {
            return Err(Error::SingularMatrix { eigenvalue: minor, threshold: SINGULARITY_THRESHOLD });
        }
    }
    let lambda = solve_dense(&b.entries, mu.weights())?;
    Ok(MergeCoefficients { lambda })
}

/// Gaussian elimination with partial pivoting.
fn solve_dense(a: &[Vec<f64>], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = rhs.len();
    let mut m: Vec<Vec<f64>> = a
        .iter()
        .zip(rhs)
        .map(|(row, r)| {
            let mut v = row.clone();
            v.push(*r);
            v
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))
            .expect("non-empty range");
        if m[pivot][col].abs() < SINGULARITY_THRESHOLD {
            return Err(Error::SingularMatrix {
                eigenvalue: m[pivot][col],
                threshold: SINGULARITY_THRESHOLD,
            });
        }
        m.swap(col, pivot);
        let (top, rest) = m.split_at_mut(col + 1);
        let pivot_row = &top[col];
        for row in rest.iter_mut() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| m[row][k] * x[k]).sum();
        x[row] = (m[row][n] - tail) / m[row][row];
    }
    Ok(x)
}

/// Weighted sum of compatible parameter vectors. Zero weights are skipped so
/// that a basis-vector weighting reproduces its model bit for bit.
pub fn linear_combination(models: &[ParamVector], weights: &[f64]) -> Result<ParamVector> {
    if models.is_empty() {
        return Err(Error::InvalidArgument("no models to combine".into()));
    }
    if models.len() != weights.len() {
        return Err(Error::DimensionMismatch { expected: models.len(), actual: weights.len() });
    }
    let first = &models[0];
    for m in &models[1..] {
        first.check_compatible(m)?;
    }
    let mut acc: Option<Vec<f64>> = None;
    for (m, &w) in models.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        match acc.as_mut() {
            None => acc = Some(m.values.iter().map(|v| w * v).collect()),
            Some(a) => a.iter_mut().zip(&m.values).for_each(|(a, v)| *a += w * v),
        }
    }
    let values = acc.unwrap_or_else(|| vec![0.0; first.len()]);
    ParamVector::new(first.shape.clone(), values)
}

/// `sum_i lambda_i * theta_i`.
pub fn merge_params(models: &[ParamVector], lambda: &MergeCoefficients) -> Result<ParamVector> {
    linear_combination(models, lambda.values())
}

/// Move a merged model further away from the reference:
/// `theta_hat + alpha * (theta_hat - theta_sft)`.
pub fn extrapolate(theta_hat: &ParamVector, theta_sft: &ParamVector, alpha: f64) -> Result<ParamVector> {
    theta_hat.check_compatible(theta_sft)?;
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(theta_hat.clone());
    }
    let values = theta_hat
        .values
        .iter()
        .zip(&theta_sft.values)
        .map(|(h, s)| h + alpha * (h - s))
        .collect();
    ParamVector::new(theta_hat.shape.clone(), values)
}

/// Pick the dominance value whose short training run scores the largest
/// hypervolume. Ties go to the smaller beta.
pub fn select_beta<F>(n: usize, candidates: &[f64], mut evaluate: F) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    if candidates.is_empty() {
        return Err(Error::InvalidArgument("empty beta candidate set".into()));
    }
    let lo = 1.0 / n as f64;
    if let Some(&b) = candidates.iter().find(|&&b| !(b > lo && b < 1.0)) {
        return Err(Error::BetaOutOfRange { beta: b, lo, n });
    }
    let mut sorted = candidates.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    let mut best: Option<(f64, f64)> = None;
    for beta in sorted {
        let hv = evaluate(beta)?;
        if !hv.is_finite() {
            return Err(Error::NonFinite(format!("hypervolume for beta {beta}")));
        }
        // ascending order + strict comparison keeps the smallest beta on ties
        if best.is_none_or(|(_, h)| hv > h) {
            best = Some((beta, hv));
        }
    }
    Ok(best.expect("non-empty").0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pv(v: &[f64]) -> ParamVector {
        ParamVector::point(v.to_vec()).unwrap()
    }

    #[test]
    fn circulant_two_objectives() {
        let b = build_weight_matrix(2, 0.6).unwrap();
        assert_eq!(b.column(0), vec![0.6, 0.4]);
        assert_eq!(b.column(1), vec![0.4, 0.6]);
    }

    #[test]
    fn circulant_three_objectives() {
        let b = build_weight_matrix(3, 0.8).unwrap();
        for r in 0..3 {
            for c in 0..3 {
                let want = if r == c { 0.8 } else { 0.1 };
                assert!((b.entry(r, c) - want).abs() < 1e-15);
            }
            let s: f64 = b.column(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_one_is_identity() {
        let b = build_weight_matrix(2, 1.0).unwrap();
        assert_eq!(b.column(0), vec![1.0, 0.0]);
        assert_eq!(b.column(1), vec![0.0, 1.0]);
        assert!(b.is_identity());
    }

    #[test]
    fn rejects_beta_outside_rule() {
        assert!(matches!(build_weight_matrix(2, 0.5), Err(Error::BetaOutOfRange { .. })));
        assert!(matches!(build_weight_matrix(3, 0.3), Err(Error::BetaOutOfRange { .. })));
        assert!(matches!(build_weight_matrix(2, 1.01), Err(Error::BetaOutOfRange { .. })));
        assert!(build_weight_matrix(3, 0.34).is_ok());
        assert!(build_weight_matrix(1, 0.9).is_err());
    }

    #[test]
    fn near_singular_circulant_is_rejected() {
        // (n = 2) minor eigenvalue is 2*beta - 1
        let b = build_weight_matrix(2, 0.5 + 1e-12).unwrap();
        let mu = Preference::pair(0.3).unwrap();
        match solve_coefficients(&b, &mu) {
            Err(Error::SingularMatrix { eigenvalue, .. }) => assert!(eigenvalue.abs() < 1e-10),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn solve_examples() {
        let b = build_weight_matrix(2, 0.6).unwrap();
        let l = solve_coefficients(&b, &Preference::new(vec![0.4, 0.6]).unwrap()).unwrap();
        assert!(l.values()[0].abs() < 1e-12 && (l.values()[1] - 1.0).abs() < 1e-12);

        for beta in [0.55, 0.7, 0.9, 1.0] {
            let b = build_weight_matrix(2, beta).unwrap();
            let l = solve_coefficients(&b, &Preference::uniform(2).unwrap()).unwrap();
            assert!((l.values()[0] - 0.5).abs() < 1e-12);
            assert!((l.values()[1] - 0.5).abs() < 1e-12);
        }

        let b = build_weight_matrix(2, 0.75).unwrap();
        let l = solve_coefficients(&b, &Preference::basis(2, 0).unwrap()).unwrap();
        assert!((l.values()[0] - 1.5).abs() < 1e-12);
        assert!((l.values()[1] + 0.5).abs() < 1e-12);
    }

    #[test]
    fn solve_dimension_mismatch() {
        let b = build_weight_matrix(3, 0.8).unwrap();
        let err = solve_coefficients(&b, &Preference::pair(0.5).unwrap()).unwrap_err();
        assert_eq!(err, Error::DimensionMismatch { expected: 3, actual: 2 });
    }

    #[test]
    fn identity_returns_preference_exactly() {
        let b = WeightMatrix::identity(3).unwrap();
        let mu = Preference::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(solve_coefficients(&b, &mu).unwrap().values(), mu.weights());
    }

    #[test]
    fn merge_examples() {
        let half = MergeCoefficients::new(vec![0.5, 0.5]).unwrap();
        assert_eq!(merge_params(&[pv(&[1.0, 1.0]), pv(&[3.0, -1.0])], &half).unwrap().values(), &[2.0, 0.0]);

        let theta1 = pv(&[0.1, -0.0, 7.25e-300]);
        let e1 = MergeCoefficients::new(vec![1.0, 0.0]).unwrap();
        let merged = merge_params(&[theta1.clone(), pv(&[5.0, 5.0, 5.0])], &e1).unwrap();
        for (a, b) in merged.values().iter().zip(theta1.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }

        let l = MergeCoefficients::new(vec![1.5, -0.5]).unwrap();
        assert_eq!(merge_params(&[pv(&[2.0, 0.0]), pv(&[0.0, 2.0])], &l).unwrap().values(), &[3.0, -1.0]);
    }

    #[test]
    fn merge_rejects_shape_mismatch() {
        let a = ParamVector::new(ShapeTag::new("policy:1x9x8"), vec![0.0; 72]).unwrap();
        let b = ParamVector::new(ShapeTag::new("value:1x9x8"), vec![0.0; 72]).unwrap();
        let half = MergeCoefficients::new(vec![0.5, 0.5]).unwrap();
        assert!(matches!(merge_params(&[a.clone(), b], &half), Err(Error::ShapeMismatch(_))));
        let c = ParamVector::new(ShapeTag::new("policy:1x9x8"), vec![0.0; 71]).unwrap();
        assert!(matches!(merge_params(&[a.clone(), c], &half), Err(Error::ShapeMismatch(_))));
        assert!(merge_params(&[a], &half).is_err());
    }

    #[test]
    fn extrapolate_examples() {
        let h = pv(&[2.0, -3.5]);
        assert_eq!(extrapolate(&h, &pv(&[9.0, 9.0]), 0.0).unwrap(), h);
        assert_eq!(extrapolate(&pv(&[2.0, 2.0]), &pv(&[1.0, 1.0]), 1.0).unwrap().values(), &[3.0, 3.0]);
        let r = extrapolate(&pv(&[1.0, 1.0]), &pv(&[0.0, 0.0]), 0.3).unwrap();
        assert!(r.values().iter().all(|v| (v - 1.3).abs() < 1e-15));
        assert!(extrapolate(&h, &pv(&[1.0]), 0.1).is_err());
        assert!(extrapolate(&h, &pv(&[1.0, 1.0]), -0.1).is_err());
    }

    #[test]
    fn select_beta_cases() {
        assert_eq!(select_beta(2, &[0.7], |_| Ok(0.0)).unwrap(), 0.7);
        let hv = |b: f64| Ok(if b == 0.6 { 1.0 } else if b == 0.7 { 2.0 } else { 1.5 });
        assert_eq!(select_beta(2, &[0.8, 0.6, 0.7], hv).unwrap(), 0.7);
        assert_eq!(select_beta(2, &[0.8, 0.6, 0.7], |_| Ok(3.0)).unwrap(), 0.6);
        assert!(select_beta(2, &[], |_| Ok(0.0)).is_err());
        assert!(select_beta(2, &[1.0], |_| Ok(0.0)).is_err());
        assert!(select_beta(2, &[0.5], |_| Ok(0.0)).is_err());
    }

    #[test]
    fn preference_validation() {
        assert!(Preference::new(vec![1.0]).is_err());
        assert!(Preference::new(vec![0.6, 0.6]).is_err());
        assert!(Preference::new(vec![1.2, -0.2]).is_err());
        assert!(Preference::new(vec![0.3, 0.7]).is_ok());
    }
}
