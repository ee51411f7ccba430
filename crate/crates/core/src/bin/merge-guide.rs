use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use merge_guide::decode::{beam_guided_decode, guided_decode, BeamConfig, Guidance};
use merge_guide::merge::{self, Preference};
use merge_guide::oracle::{self, motivating_rewards};
use merge_guide::runner::checkpoint::{save_policy, Provenance};
use merge_guide::runner::sweep::{self, ArtifactStore, Stages};
use merge_guide::runner::{output, ExperimentConfig};
use merge_guide::world::reward_vector;
use merge_guide::{Error, Result};

#[derive(Parser)]
#[command(name = "merge-guide", version, about = "Preference-controllable merging and guided decoding on toy tasks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config file (flat key = value).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Task name; overrides the config.
    #[arg(long)]
    task: Option<String>,
    /// Single dominance value; overrides the candidates.
    #[arg(long)]
    beta: Option<f64>,
    /// Single extrapolation strength; overrides the candidates.
    #[arg(long)]
    alpha: Option<f64>,
    /// Single guidance strength; overrides the candidates.
    #[arg(long)]
    gamma: Option<f64>,
    /// Single seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Check the quadratic-reward oracle: the motivating example and the
    /// interval where backbone merging beats plain merging.
    Oracle {
        #[command(flatten)]
        common: Common,
        /// Grid step over the preference interval.
        #[arg(long, default_value_t = 0.005)]
        step: f64,
    },
    /// Train one stage and write its checkpoints under `<out>/checkpoints`.
    Train {
        stage: Stage,
        #[command(flatten)]
        common: Common,
    },
    /// Merge trained backbones for one preference and write the result.
    Merge {
        #[command(flatten)]
        common: Common,
        /// Preference, comma separated.
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
    },
    /// Decode every prompt with a merged backbone and merged guidance.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        mu: Vec<f64>,
        #[arg(long, value_enum, default_value_t = GuidanceKind::Implicit)]
        guidance: GuidanceKind,
        /// Beam width, expansion and lookahead, e.g. `2,2,1`.
        #[arg(long, value_delimiter = ',')]
        beam: Option<Vec<usize>>,
    },
    /// Run the full sweep; writes `front.csv`, `report.txt` and checkpoints.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Print the metric table for `<out>/front.csv`.
    Report {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Sft,
    Backbones,
    Values,
}

#[derive(Clone, Copy, ValueEnum)]
enum GuidanceKind {
    None,
    Explicit,
    Implicit,
}

fn load_config(c: &Common) -> Result<ExperimentConfig> {
    let mut config = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = &c.task {
        config.task = t.clone();
    }
    if let Some(b) = c.beta {
        config.beta_candidates = vec![b];
    }
    if let Some(a) = c.alpha {
        config.alpha_candidates = vec![a];
    }
    if let Some(g) = c.gamma {
        config.gamma_candidates = vec![g];
    }
    if let Some(s) = c.seed {
        config.seeds = vec![s];
    }
    config.validate()?;
    Ok(config)
}

fn checkpoints(c: &Common) -> PathBuf {
    c.out.join("checkpoints")
}

fn preference(mu: &[f64], n: usize) -> Result<Preference> {
    if mu.is_empty() {
        Preference::uniform(n)
    } else {
        Preference::new(mu.to_vec())
    }
}

fn run_oracle(c: &Common, step: f64) -> Result<()> {
    let rewards = motivating_rewards();
    let mu = Preference::pair(0.5)?;
    let b = merge::WeightMatrix::from_columns(&[vec![0.4, 0.6], vec![0.6, 0.4]])?;
    println!("motivating example, mu = (0.5, 0.5), backbone weights (0.4, 0.6) and (0.6, 0.4)");
    println!("  exact optimum   {:?}", oracle::exact_optimum(&rewards, &mu)?.values());
    println!("  soup solution   {:?}", oracle::soup_solution(&rewards, &mu)?.values());
    for (i, t) in oracle::backbone_optima(&rewards, &b)?.iter().enumerate() {
        println!("  backbone {}      {:?}", i + 1, t.values());
    }
    println!("  bone solution   {:?}", oracle::bone_solution(&rewards, &b, &mu)?.values());

    let betas: Vec<f64> = match c.beta {
        Some(b) => vec![b],
        None => (11..=19).map(|i| i as f64 * 0.05).collect(),
    };
    println!("\n{:>5} {:>4} {:>4} {:>18} {:>8} {:>10} {:>6}", "beta", "k1", "k2", "interval", "points", "max err", "pass");
    let mut all = true;
    for &beta in &betas {
        for (k1, k2) in [(1.0, 2.0), (1.0, 4.0), (3.0, 5.0)] {
            let r = oracle::verify_theorem(k1, k2, beta, step)?;
            all &= r.pass;
            println!(
                "{beta:>5.2} {k1:>4} {k2:>4} ({:>7.4}, {:>6.4}) {:>8} {:>10.2e} {:>6}",
                r.interval.0,
                r.interval.1,
                r.grid.iter().filter(|g| g.inside).count(),
                r.max_consistency_error,
                r.pass
            );
        }
    }
    println!("\nall checks {}", if all { "passed" } else { "FAILED" });
    if all {
        Ok(())
    } else {
        Err(Error::InvalidArgument("oracle verification failed".into()))
    }
}

fn run_train(c: &Common, stage: Stage) -> Result<()> {
    let config = load_config(c)?;
    let store = ArtifactStore::new(checkpoints(c), true);
    for &seed in &config.seeds {
        let stages = Stages::new(&config, seed, Some(&store))?;
        let sft = stages.sft()?;
        match stage {
            Stage::Sft => println!("seed {seed}: sft ready"),
            Stage::Backbones => {
                let experts = stages.experts(&sft)?;
                let (beta, scores, _, backbones) = stages.backbones(&sft, &experts)?;
                println!("seed {seed}: {} experts, {} backbones, beta {beta} {scores:?}", experts.len(), backbones.len());
            }
            Stage::Values => {
                let values = stages.values(&sft)?;
                println!("seed {seed}: {} value models", values.len());
            }
        }
    }
    println!("checkpoints in {}", store.dir().display());
    Ok(())
}

/// Artifacts for the first configured seed, loaded without training.
fn load_artifacts(c: &Common) -> Result<(ExperimentConfig, sweep::Artifacts)> {
    let config = load_config(c)?;
    let store = ArtifactStore::new(checkpoints(c), false);
    let art = sweep::prepare_artifacts(&config, config.seeds[0], Some(&store))?;
    Ok((config, art))
}

fn run_merge(c: &Common, mu: &[f64]) -> Result<()> {
    let (config, art) = load_artifacts(c)?;
    let mu = preference(mu, config.objectives)?;
    let alpha = config.alpha_candidates[0];
    let lambda = merge::solve_coefficients(&art.matrix, &mu)?;
    let merged = sweep::merged_policy(&art.backbones, &art.matrix, &mu, alpha, &art.sft)?;
    let path = c.out.join("merged.ckpt");
    let prov = Provenance { task: art.task.name.clone(), seed: art.seed, digest: config.training_digest() };
    save_policy(&merged, &prov, &path)?;
    println!("beta {} lambda {:?} alpha {alpha} -> {}", art.beta, lambda.values(), path.display());
    Ok(())
}

fn run_decode(c: &Common, mu: &[f64], kind: GuidanceKind, beam: Option<&[usize]>) -> Result<()> {
    let (config, art) = load_artifacts(c)?;
    let mu = preference(mu, config.objectives)?;
    let alpha = config.alpha_candidates[0];
    let gamma = config.gamma_candidates[0];
    let policy = sweep::merged_policy(&art.backbones, &art.matrix, &mu, alpha, &art.sft)?;
    let guidance = match kind {
        GuidanceKind::None => Guidance::None,
        GuidanceKind::Explicit => Guidance::Explicit(sweep::merged_explicit(&art.values, &mu)?),
        GuidanceKind::Implicit => Guidance::Implicit(sweep::merged_implicit(&art.experts, &art.sft, &mu)?),
    };
    let beam = match beam {
        Some([b, e, l]) => Some(BeamConfig::new(*b, *e, *l)?),
        Some(other) => return Err(Error::InvalidArgument(format!("--beam takes three numbers, got {other:?}"))),
        None => None,
    };
    println!("mu {:?} alpha {alpha} gamma {gamma}", mu.weights());
    for prompt in art.task.all_prompts() {
        let seq = match beam {
            Some(cfg) => beam_guided_decode(&policy, &guidance, prompt, gamma, cfg, art.task.horizon)?,
            None => guided_decode(&policy, &guidance, prompt, gamma, art.task.horizon)?,
        };
        println!("prompt {prompt:>2}: {seq:?} rewards {:?}", reward_vector(&art.task, prompt, &seq)?);
    }
    Ok(())
}

fn run_sweep(c: &Common) -> Result<()> {
    let config = load_config(c)?;
    let store = ArtifactStore::new(checkpoints(c), config.train_missing);
    let result = sweep::run_sweep(&config, Some(&store))?;
    output::emit_front_csv(&result.fronts, &c.out.join("front.csv"))?;
    output::emit_report(&result, &c.out.join("report.txt"))?;
    print!("{}", output::render_report(&result));
    Ok(())
}

fn run_report(c: &Common) -> Result<()> {
    let path: &Path = &c.out.join("front.csv");
    let text = std::fs::read_to_string(path).map_err(|e| Error::MissingArtifact(format!("{}: {e}", path.display())))?;
    print!("{}", output::fronts_report(&output::parse_front_csv(&text)?)?);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Oracle { common, step } => run_oracle(common, *step),
        Command::Train { stage, common } => run_train(common, *stage),
        Command::Merge { common, mu } => run_merge(common, mu),
        Command::Decode { common, mu, guidance, beam } => run_decode(common, mu, *guidance, beam.as_deref()),
        Command::Sweep { common } => run_sweep(common),
        Command::Report { common } => run_report(common),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
