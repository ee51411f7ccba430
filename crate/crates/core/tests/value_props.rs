use merge_guide::merge::{ParamVector, Preference};
use merge_guide::runner::sweep::prepare_artifacts;
use merge_guide::runner::ExperimentConfig;
use merge_guide::value::{
    ensemble_scores, merge_value_models, train_explicit_value, ExplicitValueModel, GuidanceScores, ImplicitValueModel,
    ValueMergeStrategy,
};
use merge_guide::world::{derive_seed, rng_from_seed, Context, TableLayout, TabularPolicy, ToyTask, TrainingConfig};
use proptest::prelude::*;
use rand::Rng;

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..x.len() {
        if x[i] > x[best] {
            best = i;
        }
    }
    best
}

#[test]
fn basis_merge_is_bit_identical_for_both_kinds() {
    let layout = TableLayout { num_prompts: 2, vocab_size: 5 };
    let mut rng = rng_from_seed(5);
    let mut table = || (0..layout.len()).map(|_| rng.gen_range(-2.0..2.0)).collect::<Vec<f64>>();
    let explicit: Vec<ParamVector> =
        (0..3).map(|_| ExplicitValueModel::from_table(layout, table()).unwrap().to_param()).collect();
    let implicit: Vec<ParamVector> =
        (0..3).map(|_| TabularPolicy::from_logits(layout, table()).unwrap().to_param()).collect();
    for i in 0..3 {
        let e = Preference::basis(3, i).unwrap();
        assert_eq!(merge_value_models(&explicit, &e, &ValueMergeStrategy::Linear).unwrap(), explicit[i]);
        assert_eq!(merge_value_models(&implicit, &e, &ValueMergeStrategy::Linear).unwrap(), implicit[i]);
    }
}

#[test]
fn implicit_argmax_survives_logit_shifts() {
    let layout = TableLayout { num_prompts: 1, vocab_size: 6 };
    let mut rng = rng_from_seed(17);
    for case in 0..1000u64 {
        let tuned: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let reference: Vec<f64> = (0..layout.len()).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let ctx = Context::after(0, (case % 6) as usize);
        let m = ImplicitValueModel::new(
            TabularPolicy::from_logits(layout, tuned.clone()).unwrap(),
            TabularPolicy::from_logits(layout, reference.clone()).unwrap(),
        )
        .unwrap();
        let c = rng.gen_range(-20.0..20.0);
        let which = case % 2 == 0;
        let shift = |v: &[f64]| v.iter().map(|x| x + c).collect::<Vec<_>>();
        let (t2, r2) = if which { (shift(&tuned), reference) } else { (tuned, shift(&reference)) };
        let m2 = ImplicitValueModel::new(
            TabularPolicy::from_logits(layout, t2).unwrap(),
            TabularPolicy::from_logits(layout, r2).unwrap(),
        )
        .unwrap();
        assert_eq!(argmax(m.scores(ctx).unwrap().values()), argmax(m2.scores(ctx).unwrap().values()));
    }
}

proptest! {
    #[test]
    fn ensemble_is_linear_in_weights(
        vs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 3),
        w1 in prop::collection::vec(0.0f64..1.0, 3),
        w2 in prop::collection::vec(0.0f64..1.0, 3),
        a in 0.0f64..1.0,
    ) {
        let scores: Vec<GuidanceScores> = vs.into_iter().map(|v| GuidanceScores::new(v).unwrap()).collect();
        let b = 1.0 - a;
        let mix: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
        let lhs = ensemble_scores(&scores, &mix).unwrap();
        let e1 = ensemble_scores(&scores, &w1).unwrap();
        let e2 = ensemble_scores(&scores, &w2).unwrap();
        for i in 0..4 {
            prop_assert!((lhs.values()[i] - (a * e1.values()[i] + b * e2.values()[i])).abs() < 1e-12);
        }
    }
}

#[test]
fn trained_values_stay_in_range() {
    let art = prepare_artifacts(&ExperimentConfig { beta_candidates: vec![0.8], ..Default::default() }, 0, None).unwrap();
    for v in &art.values {
        assert!(v.table().iter().all(|x| x.is_finite() && (-0.5..=1.5).contains(x)));
    }
    // a different sampler seed gives a different but equally bounded table
    let task = ToyTask::ab_conflict(2).unwrap();
    let cfg = TrainingConfig { learning_rate: 0.01, episodes: 5_000, seed: derive_seed(1, 2), ..Default::default() };
    let other = train_explicit_value(&task, 1, &art.sft, &cfg).unwrap().model;
    assert!(other.table().iter().all(|x| (-0.5..=1.5).contains(x)));
}
