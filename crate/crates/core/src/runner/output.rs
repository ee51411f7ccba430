//! Front CSV files and plain-text metric reports.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::merge::Preference;
use crate::metrics::{lex_cmp, reference_point, summarize, FrontPoint, FrontSet, FrontSummary, REFERENCE_MARGIN};
use crate::runner::sweep::SweepResult;

/// `x` rounded to nine significant digits, printed in the shortest form
/// that reads back as the rounded value.
pub fn format_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let rounded: f64 = format!("{x:.8e}").parse().expect("float formatting parses");
    format!("{rounded}")
}

/// Header `method,seed,mu_1..mu_n,r_1..r_n`, then one row per point sorted
/// by method, preference and seed.
pub fn front_csv(fronts: &[FrontSet]) -> Result<String> {
    let mut points: Vec<&FrontPoint> = fronts.iter().flat_map(|f| f.points()).collect();
    let n = points.first().map_or(2, |p| p.rewards.len());
    if let Some(p) = points.iter().find(|p| p.rewards.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, actual: p.rewards.len() });
    }
    points.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then_with(|| lex_cmp(a.preference.weights(), b.preference.weights()))
            .then(a.seed.cmp(&b.seed))
    });
    let mut out = String::from("method,seed");
    (1..=n).for_each(|i| write!(out, ",mu_{i}").unwrap());
    (1..=n).for_each(|i| write!(out, ",r_{i}").unwrap());
    out.push('\n');
    for p in points {
        write!(out, "{},{}", p.method, p.seed).unwrap();
        for x in p.preference.weights().iter().chain(&p.rewards) {
            write!(out, ",{}", format_sig(*x)).unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn emit_front_csv(fronts: &[FrontSet], path: &Path) -> Result<()> {
    write_file(path, &front_csv(fronts)?)
}

/// Read a front CSV back into one front per (method, seed), in file order.
pub fn parse_front_csv(text: &str) -> Result<Vec<FrontSet>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Error::InvalidArgument("empty front CSV".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 6 || !cols.len().is_multiple_of(2) || cols[0] != "method" || cols[1] != "seed" {
        return Err(Error::InvalidArgument(format!("unexpected front CSV header {header:?}")));
    }
    let n = (cols.len() - 2) / 2;
    let mut groups: Vec<(String, u64, Vec<FrontPoint>)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != cols.len() {
            return Err(Error::InvalidArgument(format!("row {}: expected {} fields, got {}", i + 1, cols.len(), f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("row {}: {s:?} is not a number", i + 1)))
        };
        let seed: u64 = f[1]
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("row {}: bad seed {:?}", i + 1, f[1])))?;
        let mu = f[2..2 + n].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let r = f[2 + n..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
        let point = FrontPoint::new(Preference::new(mu)?, r, f[0], seed)?;
        match groups.iter_mut().find(|(m, s, _)| m == f[0] && *s == seed) {
            Some(g) => g.2.push(point),
            None => groups.push((f[0].to_string(), seed, vec![point])),
        }
    }
    groups.into_iter().map(|(_, _, pts)| FrontSet::new(pts)).collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

fn vector(xs: &[f64]) -> String {
    format!("({})", xs.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", "))
}

fn scores(xs: &[(f64, f64)]) -> String {
    xs.iter().map(|(c, h)| format!("{c}: {h:.6}")).collect::<Vec<_>>().join(", ")
}

/// Metric table with one row per front.
pub fn metrics_table(summaries: &[(FrontSummary, u64)]) -> String {
    let mut out = format!(
        "{:<16} {:>4} {:>12} {:>12} {:>12} {:>12} {:>6} {:>8}\n",
        "method", "seed", "hypervolume", "inner_prod", "sparsity", "spacing", "front", "ctrl"
    );
    for (s, seed) in summaries {
        writeln!(
            out,
            "{:<16} {:>4} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>6} {:>8.4}",
            s.method, seed, s.hypervolume, s.inner_product, s.sparsity, s.spacing, s.front_length, s.controllability
        )
        .unwrap();
    }
    out
}

fn seed_of(front: &FrontSet) -> u64 {
    front.points().first().map_or(0, |p| p.seed)
}

fn grid_note(points: usize) -> String {
    format!(
        "preference grid: {points} points per method; the front length column counts non-dominated points and is capped by the grid size\n"
    )
}

/// Report for fronts read from a CSV, without run metadata.
pub fn fronts_report(fronts: &[FrontSet]) -> Result<String> {
    let reference = reference_point(fronts, REFERENCE_MARGIN)?;
    let summaries = fronts
        .iter()
        .map(|f| Ok((summarize(f, &reference)?, seed_of(f))))
        .collect::<Result<Vec<_>>>()?;
    let mut out = String::from("front metrics\n");
    out.push_str(&grid_note(fronts.iter().map(FrontSet::len).max().unwrap_or(0)));
    writeln!(out, "hypervolume reference: {} (componentwise minimum minus {REFERENCE_MARGIN})", vector(&reference)).unwrap();
    out.push('\n');
    out.push_str(&metrics_table(&summaries));
    Ok(out)
}

/// Full sweep report: configuration digest, selected hyperparameters, the
/// shared reference point and the metric table.
pub fn render_report(result: &SweepResult) -> String {
    let c = &result.config;
    let mut out = String::from("sweep report\n");
    writeln!(out, "config digest: {}", result.digest).unwrap();
    writeln!(out, "task: {} ({} objectives)", c.task, c.objectives).unwrap();
    writeln!(
        out,
        "evaluation: {} rewards averaged over every built-in prompt for each preference",
        c.decoding.as_str()
    )
    .unwrap();
    out.push_str(&grid_note(c.preference_grid.len()));
    writeln!(
        out,
        "hypervolume reference: {} (componentwise minimum over all methods minus {REFERENCE_MARGIN})",
        vector(&result.reference)
    )
    .unwrap();
    for sel in &result.selections {
        writeln!(out, "\nseed {}", sel.seed).unwrap();
        if sel.beta_scores.is_empty() {
            writeln!(out, "  beta: {} (fixed)", sel.beta).unwrap();
        } else {
            writeln!(out, "  beta: {} (validation hypervolume {})", sel.beta, scores(&sel.beta_scores)).unwrap();
        }
        if sel.alpha_scores.is_empty() {
            writeln!(out, "  alpha: {} (fixed)", sel.alpha).unwrap();
        } else {
            writeln!(out, "  alpha: {} (validation hypervolume {})", sel.alpha, scores(&sel.alpha_scores)).unwrap();
        }
        for (m, g) in &sel.gammas {
            writeln!(out, "  gamma {m}: {g}").unwrap();
        }
    }
    out.push('\n');
    let rows: Vec<_> = result
        .summaries
        .iter()
        .cloned()
        .zip(result.fronts.iter().map(seed_of))
        .collect();
    out.push_str(&metrics_table(&rows));
    out
}

pub fn emit_report(result: &SweepResult, path: &Path) -> Result<()> {
    write_file(path, &render_report(result))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(mu: f64, r: [f64; 2], method: &str, seed: u64) -> FrontPoint {
        FrontPoint::new(Preference::pair(mu).unwrap(), r.to_vec(), method, seed).unwrap()
    }

    #[test]
    fn single_row_example() {
        let f = FrontSet::new(vec![point(0.5, [1.0, 2.0], "bs", 7)]).unwrap();
        assert_eq!(front_csv(&[f]).unwrap(), "method,seed,mu_1,mu_2,r_1,r_2\nbs,7,0.5,0.5,1,2\n");
    }

    #[test]
    fn empty_front_is_header_only() {
        assert_eq!(front_csv(&[FrontSet::default()]).unwrap(), "method,seed,mu_1,mu_2,r_1,r_2\n");
        assert_eq!(front_csv(&[]).unwrap(), "method,seed,mu_1,mu_2,r_1,r_2\n");
    }

    #[test]
    fn nine_significant_digits() {
        assert_eq!(format_sig(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig(123456789.4), "123456789");
        assert_eq!(format_sig(-2.0 / 3.0 * 1e-5), "-0.00000666666667");
        assert_eq!(format_sig(-0.0), "0");
        assert_eq!(format_sig(0.1 + 0.2), "0.3");
    }

    #[test]
    fn rows_sorted_and_parse_back() {
        let b = FrontSet::new(vec![point(0.9, [0.9, 0.1], "b", 0), point(0.1, [0.1, 0.9], "b", 0)]).unwrap();
        let a = FrontSet::new(vec![point(0.5, [0.5, 0.5], "a", 0)]).unwrap();
        let csv = front_csv(&[b, a]).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows, ["a,0,0.5,0.5,0.5,0.5", "b,0,0.1,0.9,0.1,0.9", "b,0,0.9,0.1,0.9,0.1"]);
        let back = parse_front_csv(&csv).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].rewards(), vec![vec![0.1, 0.9], vec![0.9, 0.1]]);
        assert!(parse_front_csv("method,seed,mu_1,mu_2,r_1,r_2\nx,0,0.5,0.5,1\n").is_err());
    }

    #[test]
    fn single_method_report_has_one_row() {
        let f = FrontSet::new(vec![point(0.2, [0.2, 0.8], "bone_soup", 0), point(0.8, [0.8, 0.2], "bone_soup", 0)]).unwrap();
        let text = fronts_report(std::slice::from_ref(&f)).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("bone_soup")).count(), 1);
        assert_eq!(text, fronts_report(&[f]).unwrap());
    }
}
