//! Training on the built-in task: supervised fine-tuning on balanced
//! demonstrations, KL-regularised policy gradient on a mixed reward, and
//! explicit value regression.

use merge_guide::value::train_explicit_value;
use merge_guide::world::{
    balanced_demos, policy_rows, expected_rewards, train_policy, train_sft, ToyTask, TrainingConfig,
};

fn mean_rewards(task: &ToyTask, policy: &merge_guide::world::TabularPolicy) -> merge_guide::Result<Vec<f64>> {
    let mut total = vec![0.0; task.n_objectives()];
    for p in task.all_prompts() {
        let r = expected_rewards(task, &policy_rows(policy, p)?)?;
        total.iter_mut().zip(r).for_each(|(t, x)| *t += x);
    }
    Ok(total.into_iter().map(|t| t / task.num_prompts as f64).collect())
}

fn main() -> merge_guide::Result<()> {
    let task = ToyTask::ab_conflict(2)?;
    let demos = balanced_demos(&task, 64, 1);
    let sft = train_sft(&task, &demos, &TrainingConfig { learning_rate: 2.0, episodes: 300, ..Default::default() })?;
    println!(
        "sft: nll {:.4} -> {:.4}, rewards {:.3?}",
        sft.nll[0],
        sft.nll.last().unwrap(),
        mean_rewards(&task, &sft.policy)?
    );

    for w in [[1.0, 0.0], [0.8, 0.2], [0.5, 0.5]] {
        let out = train_policy(&sft.policy, &task, &w, &TrainingConfig { seed: 7, ..Default::default() })?;
        let first = &out.curve[0];
        let last = out.curve.last().unwrap();
        println!(
            "w {w:?}: batch reward {:.3} -> {:.3}, KL {:.4} -> {:.4}, rewards {:.3?}",
            first.mean_reward,
            last.mean_reward,
            first.mean_kl,
            last.mean_kl,
            mean_rewards(&task, &out.policy)?
        );
    }

    let cfg = TrainingConfig { learning_rate: 0.01, episodes: 20_000, seed: 3, ..Default::default() };
    let value = train_explicit_value(&task, 0, &sft.policy, &cfg)?;
    let start = merge_guide::world::Context::start(0);
    println!(
        "\nvalue model for class A: loss {:.4} -> {:.4}",
        value.loss[0],
        value.loss.last().unwrap()
    );
    println!("  start-row values {:.3?}", value.model.scores(start).values());
    Ok(())
}
