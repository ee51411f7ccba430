//! Beam lookahead escaping a greedy trap. The value table makes token 0
//! look slightly better at the first step, but only token 1 leads to a
//! strongly valued continuation.

use merge_guide::decode::{beam_guided_decode, guided_decode, BeamConfig, Guidance};
use merge_guide::value::ExplicitValueModel;
use merge_guide::world::{reward_vector, Context, Objective, TableLayout, TabularPolicy, ToyTask};

fn main() -> merge_guide::Result<()> {
    // Tokens 1 and 3 are class A.
    let task = ToyTask::new(
        "trap",
        4,
        2,
        1,
        1,
        vec![
            Objective::ClassFraction { name: "a".into(), class: 0 },
            Objective::ClassFraction { name: "b".into(), class: 1 },
        ],
        vec![0b10, 0b01, 0b10, 0b01],
    )?;
    let layout = TableLayout::for_task(&task);
    let mut table = vec![0.0; layout.len()];
    let row = |ctx| layout.row_index(ctx).expect("context") * 4;
    table[row(Context::start(0))] = 0.6;
    table[row(Context::start(0)) + 1] = 0.5;
    table[row(Context::after(0, 0)) + 2] = 0.1;
    table[row(Context::after(0, 1)) + 3] = 2.0;
    let guidance = Guidance::Explicit(ExplicitValueModel::from_table(layout, table)?);
    let policy = TabularPolicy::uniform(layout);

    let greedy = guided_decode(&policy, &guidance, 0, 1.0, 2)?;
    println!("greedy           {greedy:?} -> {:?}", reward_vector(&task, 0, &greedy)?);
    for (b, c, l) in [(1, 1, 1), (2, 2, 1), (4, 4, 2)] {
        let seq = beam_guided_decode(&policy, &guidance, 0, 1.0, BeamConfig::new(b, c, l)?, 2)?;
        println!("beam b={b} c={c} l={l} {seq:?} -> {:?}", reward_vector(&task, 0, &seq)?);
    }
    Ok(())
}
