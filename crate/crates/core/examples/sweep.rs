//! Full preference sweep on the built-in task: trains every artifact,
//! selects hyperparameters on held-out prompts, and prints the metric
//! report followed by the value-merging experiments.
//!
//! ```text
//! cargo run --release --example sweep [config-file]
//! ```

use merge_guide::runner::experiments::{lmc_experiment, merge_vs_ensemble};
use merge_guide::runner::{output, sweep, ExperimentConfig, Method};

fn main() -> merge_guide::Result<()> {
    let config = match std::env::args().nth(1) {
        Some(path) => ExperimentConfig::load(path.as_ref())?,
        None => ExperimentConfig::default(),
    };
    let start = std::time::Instant::now();
    let (result, artifacts) = sweep::run_sweep_with_artifacts(&config, None)?;
    print!("{}", output::render_report(&result));
    println!("\n(sweep took {:.1?})", start.elapsed());

    let (art, sel) = (&artifacts[0], &result.selections[0]);
    let lmc = lmc_experiment(art, sel.gamma(Method::MageEM), &[0.25, 0.5, 0.75], config.decoding)?;
    println!("\nmerge path (gamma {}): endpoints {:?} -> {:?}", lmc.gamma, lmc.start, lmc.end);
    for p in &lmc.points {
        println!("  lambda {:.2}: rewards {:?} chord {:?}", p.lambda, p.rewards, p.chord);
    }
    println!("  smallest margin over the chord: {:.4}", lmc.min_margin());

    let cmp = merge_vs_ensemble(&config, art, sel.alpha, sel.gamma(Method::MageEM), sel.gamma(Method::MageIM))?;
    for c in &cmp {
        let (km, ke) = c.controllability()?;
        println!(
            "{} guidance: max reward gap merged vs ensemble {:.2e}, controllability {km:.3} vs {ke:.3}",
            c.kind,
            c.max_gap()
        );
    }
    Ok(())
}
