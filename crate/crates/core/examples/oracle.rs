//! Quadratic-reward testbed: two objectives with known peaks and
//! curvatures, so the best parameters for any preference are known exactly.
//! Compares plain averaging of single-objective optima with merging of
//! backbones trained on mixed rewards.

use merge_guide::merge::{build_weight_matrix, Preference};
use merge_guide::oracle::{
    backbone_optima, bone_solution, closed_form_errors, exact_optimum, motivating_rewards, soup_solution,
    theorem_interval, verify_theorem,
};

fn main() -> merge_guide::Result<()> {
    let rewards = motivating_rewards();
    let mu = Preference::pair(0.5)?;
    let b = build_weight_matrix(2, 0.6)?;

    let best = exact_optimum(&rewards, &mu)?;
    let soup = soup_solution(&rewards, &mu)?;
    let bone = bone_solution(&rewards, &b, &mu)?;
    println!("optimum       {:?}", best.values());
    println!("averaged      {:?}", soup.values());
    for (i, t) in backbone_optima(&rewards, &b)?.iter().enumerate() {
        println!("backbone {}    {:?}", i + 1, t.values());
    }
    println!("merged        {:?}", bone.values());

    // Squared distance to the optimum along the preference interval.
    let (lo, hi) = theorem_interval(0.6)?;
    println!("\nbeta 0.6, curvatures (1, 2): backbone merging wins on ({lo:.4}, {hi:.4})");
    for mu in [0.05, 0.2, 0.35, 0.5, 0.65, 0.8, 0.95] {
        let e = closed_form_errors(1.0, 2.0, 0.6, mu, 8.0)?;
        println!("  mu {mu:.2}: backbone error {:.5}  averaged error {:.5}", e.bone, e.soup);
    }

    let report = verify_theorem(3.0, 5.0, 0.8, 0.005)?;
    println!(
        "\ngrid check (k = 3, 5; beta 0.8): {} points, consistency {:.1e}, pass {}",
        report.grid.len(),
        report.max_consistency_error,
        report.pass
    );
    Ok(())
}
