//! Checkpoints and configuration: save and reload a policy bit for bit,
//! reject a value table loaded as a policy, and show how the config digest
//! reacts to edits.

use merge_guide::runner::checkpoint::{load_checkpoint, load_policy, save_policy, save_value, Provenance};
use merge_guide::runner::ExperimentConfig;
use merge_guide::value::ExplicitValueModel;
use merge_guide::world::{balanced_demos, train_sft, TableLayout, ToyTask, TrainingConfig};

fn main() -> merge_guide::Result<()> {
    let dir = std::env::temp_dir().join("merge-guide-persistence");
    let task = ToyTask::ab_conflict(2)?;
    let sft = train_sft(&task, &balanced_demos(&task, 16, 0), &TrainingConfig { learning_rate: 2.0, episodes: 50, ..Default::default() })?.policy;

    let config = ExperimentConfig::default();
    let prov = Provenance { task: task.name.clone(), seed: 0, digest: config.training_digest() };
    let path = dir.join("sft.ckpt");
    save_policy(&sft, &prov, &path)?;
    let back = load_policy(&path)?;
    let same = sft.logits().iter().zip(back.logits()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("{} round trip bit-exact: {same}", path.display());
    println!("header: {}", std::fs::read_to_string(&path)?.lines().next().unwrap_or(""));

    let vpath = dir.join("value.ckpt");
    save_value(&ExplicitValueModel::prior(TableLayout::for_task(&task)), &prov, &vpath)?;
    println!("value as policy: {}", load_policy(&vpath).unwrap_err());
    println!("kind on disk: {}", load_checkpoint(&vpath, None)?.kind());

    let edited = ExperimentConfig::parse("eta = 0.05\n# unchanged value, different spelling\nseeds = 0")?;
    let changed = ExperimentConfig::parse("eta = 0.1")?;
    println!("\ndefault digest   {}", config.digest());
    println!("respelled digest {}", edited.digest());
    println!("eta 0.1 digest   {}", changed.digest());
    print!("\ncanonical config:\n{}", config.canonical());
    Ok(())
}
