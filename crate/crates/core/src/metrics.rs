//! Pareto-front quality metrics over preference-indexed solution sets.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::merge::Preference;

/// Margin subtracted from the componentwise minimum when deriving a shared
/// hypervolume reference point.
pub const REFERENCE_MARGIN: f64 = 0.01;

/// One evaluated system: the preference it was built for and the mean
/// rewards it achieved.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontPoint {
    pub preference: Preference,
    pub rewards: Vec<f64>,
    pub method: String,
    pub seed: u64,
}

impl FrontPoint {
    pub fn new(preference: Preference, rewards: Vec<f64>, method: impl Into<String>, seed: u64) -> Result<Self> {
        if preference.len() != rewards.len() {
            return Err(Error::DimensionMismatch { expected: preference.len(), actual: rewards.len() });
        }
        Ok(Self { preference, rewards, method: method.into(), seed })
    }
}

/// Points of one method, in preference-sweep order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrontSet {
    points: Vec<FrontPoint>,
}

impl FrontSet {
    pub fn new(points: Vec<FrontPoint>) -> Result<Self> {
        if let Some(first) = points.first() {
            for p in &points[1..] {
                if p.rewards.len() != first.rewards.len() {
                    return Err(Error::DimensionMismatch {
                        expected: first.rewards.len(),
                        actual: p.rewards.len(),
                    });
                }
                if p.method != first.method {
                    return Err(Error::InvalidArgument(format!(
                        "mixed method tags {:?} and {:?} in one front",
                        first.method, p.method
                    )));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[FrontPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn method(&self) -> Option<&str> {
        self.points.first().map(|p| p.method.as_str())
    }

    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.rewards.clone()).collect()
    }

    pub fn preferences(&self) -> Vec<Vec<f64>> {
        self.points.iter().map(|p| p.preference.weights().to_vec()).collect()
    }

    /// Points sorted lexicographically by preference vector.
    pub fn sweep_ordered(&self) -> FrontSet {
        let mut points = self.points.clone();
        points.sort_by(|a, b| lex_cmp(a.preference.weights(), b.preference.weights()));
        FrontSet { points }
    }
}

pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// `a` strictly dominates `b` under maximisation.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

/// Non-dominated subset, in input order. Exact duplicates do not eliminate
/// each other.
pub fn pareto_front(front: &FrontSet) -> FrontSet {
    let points = front
        .points
        .iter()
        .filter(|p| !front.points.iter().any(|q| dominates(&q.rewards, &p.rewards)))
        .cloned()
        .collect();
    FrontSet { points }
}

/// Volume of the union of boxes `[reference, p]`. Points not strictly above
/// the reference in every coordinate contribute nothing. Supports 2 and 3
/// objectives.
pub fn hypervolume(points: &[Vec<f64>], reference: &[f64]) -> Result<f64> {
    let n = reference.len();
    if !(2..=3).contains(&n) {
        return Err(Error::InvalidArgument(format!("hypervolume supports 2 or 3 objectives, got {n}")));
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: p.len() });
    }
    let live: Vec<&Vec<f64>> = points
        .iter()
        .filter(|p| p.iter().zip(reference).all(|(v, r)| v > r))
        .collect();
    Ok(match n {
        2 => hv2(live.iter().map(|p| (p[0], p[1])).collect(), (reference[0], reference[1])),
        _ => hv3(&live, reference),
    })
}

fn hv2(mut pts: Vec<(f64, f64)>, reference: (f64, f64)) -> f64 {
    // descending x; each point adds the strip of y above the best seen so far
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut area = 0.0;
    let mut y_cover = reference.1;
    for (x, y) in pts {
        if y > y_cover {
            area += (x - reference.0) * (y - y_cover);
            y_cover = y;
        }
    }
    area
}

fn hv3(pts: &[&Vec<f64>], reference: &[f64]) -> f64 {
    let mut by_z: Vec<&Vec<f64>> = pts.to_vec();
    by_z.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut volume = 0.0;
    for i in 0..by_z.len() {
        let top = by_z[i][2];
        let bottom = by_z.get(i + 1).map_or(reference[2], |p| p[2]);
        if top > bottom {
            let slice: Vec<(f64, f64)> = by_z[..=i].iter().map(|p| (p[0], p[1])).collect();
            volume += (top - bottom) * hv2(slice, (reference[0], reference[1]));
        }
    }
    volume
}

/// Componentwise minimum over every point of every front, minus `margin`.
pub fn reference_point(fronts: &[FrontSet], margin: f64) -> Result<Vec<f64>> {
    let mut it = fronts.iter().flat_map(|f| f.points.iter());
    let first = it
        .next()
        .ok_or_else(|| Error::InvalidArgument("no points to derive a reference from".into()))?;
    let mut lo = first.rewards.clone();
    for p in it {
        if p.rewards.len() != lo.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), actual: p.rewards.len() });
        }
        lo.iter_mut().zip(&p.rewards).for_each(|(l, v)| *l = l.min(*v));
    }
    Ok(lo.into_iter().map(|v| v - margin).collect())
}

/// Preference-weighted reward `mu . r`.
pub fn inner_product(mu: &[f64], rewards: &[f64]) -> Result<f64> {
    if mu.len() != rewards.len() {
        return Err(Error::DimensionMismatch { expected: mu.len(), actual: rewards.len() });
    }
    Ok(mu.iter().zip(rewards).map(|(a, b)| a * b).sum())
}

/// Mean squared distance between consecutive reward vectors.
pub fn sparsity(rewards: &[Vec<f64>]) -> Result<f64> {
    if rewards.len() < 2 {
        return Err(Error::InvalidArgument(format!("sparsity needs >= 2 points, got {}", rewards.len())));
    }
    let total: f64 = rewards.windows(2).map(|w| sq_dist(&w[1], &w[0])).sum();
    Ok(total / (rewards.len() - 1) as f64)
}

/// Standard deviation of nearest-neighbour distances.
pub fn spacing(rewards: &[Vec<f64>]) -> Result<f64> {
    let n = rewards.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!("spacing needs >= 2 points, got {n}")));
    }
    let nearest: Vec<f64> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i)
                .map(|j| sq_dist(&rewards[i], &rewards[j]).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let mean = nearest.iter().sum::<f64>() / n as f64;
    let var = nearest.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n as f64;
    Ok(var.sqrt())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// Fraction of ordered pairs `(i, j)` whose reward ordering matches the
/// preference ordering on every objective. A tie agrees only with a tie.
pub fn controllability(preferences: &[Vec<f64>], rewards: &[Vec<f64>]) -> Result<f64> {
    let n = preferences.len();
    if rewards.len() != n {
        return Err(Error::DimensionMismatch { expected: n, actual: rewards.len() });
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("controllability needs >= 2 points, got {n}")));
    }
    for (p, r) in preferences.iter().zip(rewards) {
        if p.len() != r.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), actual: r.len() });
        }
    }
    let mut agree = 0usize;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let ok = preferences[i]
                .iter()
                .zip(&preferences[j])
                .zip(rewards[i].iter().zip(&rewards[j]))
                .all(|((mi, mj), (ri, rj))| sign(mi - mj) == sign(ri - rj));
            agree += ok as usize;
        }
    }
    Ok(agree as f64 / (n * (n - 1)) as f64)
}

/// All six table metrics for one method's front.
#[derive(Debug, Clone, PartialEq)]
pub struct FrontSummary {
    pub method: String,
    pub hypervolume: f64,
    pub inner_product: f64,
    pub sparsity: f64,
    pub spacing: f64,
    pub front_length: usize,
    pub controllability: f64,
}

/// Summarise a front against a shared reference point. The inner product is
/// averaged over the front's points.
pub fn summarize(front: &FrontSet, reference: &[f64]) -> Result<FrontSummary> {
    if front.is_empty() {
        return Err(Error::InvalidArgument("empty front".into()));
    }
    let ordered = front.sweep_ordered();
    let rewards = ordered.rewards();
    let ip = ordered
        .points
        .iter()
        .map(|p| inner_product(p.preference.weights(), &p.rewards))
        .sum::<Result<f64>>()?
        / ordered.len() as f64;
    let (sp, sc, ctrl) = if ordered.len() >= 2 {
        (sparsity(&rewards)?, spacing(&rewards)?, controllability(&ordered.preferences(), &rewards)?)
    } else {
        (0.0, 0.0, 1.0)
    };
    Ok(FrontSummary {
        method: front.method().unwrap_or_default().to_string(),
        hypervolume: hypervolume(&rewards, reference)?,
        inner_product: ip,
        sparsity: sp,
        spacing: sc,
        front_length: pareto_front(&ordered).len(),
        controllability: ctrl,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn front(rewards: &[&[f64]]) -> FrontSet {
        let n = rewards.len();
        let pts = rewards
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let mu = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
                let mut pref = vec![mu, 1.0 - mu];
                pref.resize(r.len(), 0.0);
                if r.len() > 2 {
                    pref = vec![1.0 / r.len() as f64; r.len()];
                }
                FrontPoint::new(Preference::new(pref).unwrap(), r.to_vec(), "m", 0).unwrap()
            })
            .collect();
        FrontSet::new(pts).unwrap()
    }

    #[test]
    fn pareto_examples() {
        assert_eq!(pareto_front(&front(&[&[1.0, 0.0], &[0.0, 1.0], &[0.5, 0.5]])).len(), 3);
        let f = pareto_front(&front(&[&[1.0, 1.0], &[0.5, 0.5]]));
        assert_eq!(f.rewards(), vec![vec![1.0, 1.0]]);
        assert_eq!(pareto_front(&front(&[&[1.0, 0.0], &[1.0, 0.0]])).len(), 2);
    }

    #[test]
    fn hypervolume_examples() {
        let r = [0.0, 0.0];
        assert_eq!(hypervolume(&[vec![2.0, 1.0], vec![1.0, 2.0]], &r).unwrap(), 3.0);
        assert_eq!(hypervolume(&[vec![1.0, 1.0]], &r).unwrap(), 1.0);
        let with_dominated = [vec![2.0, 1.0], vec![1.0, 2.0], vec![0.5, 0.5]];
        assert_eq!(hypervolume(&with_dominated, &r).unwrap(), 3.0);
        assert_eq!(hypervolume(&[vec![-1.0, 5.0]], &r).unwrap(), 0.0);
        assert_eq!(hypervolume(&[], &r).unwrap(), 0.0);
        assert!(hypervolume(&[vec![1.0, 1.0, 1.0]], &r).is_err());
        assert!(hypervolume(&[vec![1.0]], &[0.0]).is_err());
    }

    #[test]
    fn hypervolume_3d_boxes() {
        let r = [0.0, 0.0, 0.0];
        assert_eq!(hypervolume(&[vec![1.0, 2.0, 3.0]], &r).unwrap(), 6.0);
        // two unit-overlap boxes: 2*1*1 + 1*2*1 - 1*1*1
        let v = hypervolume(&[vec![2.0, 1.0, 1.0], vec![1.0, 2.0, 1.0]], &r).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        let v = hypervolume(&[vec![1.0, 1.0, 2.0], vec![2.0, 2.0, 1.0]], &r).unwrap();
        assert!((v - (2.0 + 4.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn inner_product_examples() {
        assert_eq!(inner_product(&[0.5, 0.5], &[2.0, 4.0]).unwrap(), 3.0);
        assert_eq!(inner_product(&[1.0, 0.0], &[7.5, 4.0]).unwrap(), 7.5);
        assert_eq!(inner_product(&[0.3, 0.7], &[0.0, 0.0]).unwrap(), 0.0);
        assert!(inner_product(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&[vec![0.0, 0.0], vec![1.0, 1.0]]).unwrap(), 2.0);
        assert_eq!(sparsity(&vec![vec![0.3, 0.2]; 4]).unwrap(), 0.0);
        let d: f64 = 0.5;
        let pts: Vec<Vec<f64>> = (0..3).map(|i| vec![i as f64 * d, 0.0]).collect();
        assert!((sparsity(&pts).unwrap() - d * d).abs() < 1e-15);
        assert!(sparsity(&[vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn spacing_examples() {
        let even: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, -(i as f64)]).collect();
        assert!(spacing(&even).unwrap().abs() < 1e-12);
        assert_eq!(spacing(&[vec![0.0, 0.0], vec![3.0, 4.0]]).unwrap(), 0.0);
        let s = spacing(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![3.0, 0.0]]).unwrap();
        assert!((s - (2.0f64 / 9.0).sqrt()).abs() < 1e-12);
        assert!(spacing(&[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn controllability_examples() {
        let p = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        assert_eq!(controllability(&p, &[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(), 1.0);
        assert_eq!(controllability(&p, &[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap(), 0.0);
        let p3 = vec![vec![0.8, 0.2], vec![0.5, 0.5], vec![0.2, 0.8]];
        let r3 = vec![vec![3.0, 0.0], vec![1.0, 1.0], vec![2.0, 0.5]];
        assert!((controllability(&p3, &r3).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        // tied rewards under distinct preferences disagree; ties agree only with ties
        assert_eq!(controllability(&p, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), 0.0);
        let same = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert_eq!(controllability(&same, &[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap(), 1.0);
        assert!(controllability(&p, &[vec![1.0, 0.0]]).is_err());
    }

    #[test]
    fn reference_point_is_min_minus_margin() {
        let a = front(&[&[0.2, 0.9], &[0.7, 0.1]]);
        let b = front(&[&[0.05, 0.95]]);
        let r = reference_point(&[a, b], REFERENCE_MARGIN).unwrap();
        assert!((r[0] - 0.04).abs() < 1e-15 && (r[1] - 0.09).abs() < 1e-15);
    }

    #[test]
    fn summary_has_all_metrics() {
        let f = front(&[&[0.0, 1.0], &[0.5, 0.5], &[1.0, 0.0]]);
        let s = summarize(&f, &[-0.01, -0.01]).unwrap();
        assert_eq!(s.front_length, 3);
        assert_eq!(s.controllability, 1.0);
        assert!((s.hypervolume - 0.2701).abs() < 1e-12, "{}", s.hypervolume);
    }
}
