//! Guided decoding on trained artifacts: a merged backbone re-weighted by
//! merged explicit or implicit value models, for a few preferences and
//! guidance strengths.

use merge_guide::decode::{guided_decode, DecodingSystem, Guidance};
use merge_guide::merge::Preference;
use merge_guide::runner::sweep::{merged_explicit, merged_implicit, merged_policy, prepare_artifacts};
use merge_guide::runner::ExperimentConfig;
use merge_guide::world::reward_vector;

fn main() -> merge_guide::Result<()> {
    let config = ExperimentConfig { beta_candidates: vec![0.8], ..Default::default() };
    let art = prepare_artifacts(&config, 0, None)?;
    let task = &art.task;

    for mu in [0.2, 0.5, 0.8] {
        let pref = Preference::pair(mu)?;
        let base = merged_policy(&art.backbones, &art.matrix, &pref, 0.3, &art.sft)?;
        println!("mu ({mu}, {:.1})", 1.0 - mu);
        for (name, guidance) in [
            ("none", Guidance::None),
            ("explicit", Guidance::Explicit(merged_explicit(&art.values, &pref)?)),
            ("implicit", Guidance::Implicit(merged_implicit(&art.experts, &art.sft, &pref)?)),
        ] {
            for gamma in [1.0, 3.0] {
                let system = DecodingSystem::Guided { policy: base.clone(), guidance: guidance.clone(), gamma };
                let expected = system.expected_rewards(task, 0)?;
                let seq = guided_decode(&base, &guidance, 0, gamma, task.horizon)?;
                println!(
                    "  {name:<8} gamma {gamma}: expected {:.3?}, greedy {seq:?} -> {:?}",
                    expected,
                    reward_vector(task, 0, &seq)?
                );
            }
        }
    }
    Ok(())
}
