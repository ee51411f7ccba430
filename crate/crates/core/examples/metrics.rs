//! Front metrics on hand-made fronts, and the CSV round trip used by the
//! sweep output.

use merge_guide::merge::Preference;
use merge_guide::metrics::{
    controllability, hypervolume, pareto_front, reference_point, sparsity, spacing, summarize, FrontPoint, FrontSet,
    REFERENCE_MARGIN,
};
use merge_guide::runner::output::{front_csv, fronts_report, parse_front_csv};

fn front(method: &str, rewards: &[[f64; 2]]) -> merge_guide::Result<FrontSet> {
    let n = rewards.len() - 1;
    let points = rewards
        .iter()
        .enumerate()
        .map(|(i, r)| FrontPoint::new(Preference::pair(i as f64 / n as f64)?, r.to_vec(), method, 0))
        .collect::<merge_guide::Result<Vec<_>>>()?;
    FrontSet::new(points)
}

fn main() -> merge_guide::Result<()> {
    println!("hypervolume {{(2,1),(1,2)}} from origin: {}", hypervolume(&[vec![2.0, 1.0], vec![1.0, 2.0]], &[0.0, 0.0])?);
    println!("sparsity {{(0,0),(1,1)}}: {}", sparsity(&[vec![0.0, 0.0], vec![1.0, 1.0]])?);
    println!("spacing of 0, 1, 3 on a line: {:.4}", spacing(&[vec![0.0], vec![1.0], vec![3.0]])?);
    let prefs = [vec![0.8, 0.2], vec![0.2, 0.8]];
    println!("controllability aligned: {}", controllability(&prefs, &[vec![1.0, 0.0], vec![0.0, 1.0]])?);
    println!("controllability swapped: {}", controllability(&prefs, &[vec![0.0, 1.0], vec![1.0, 0.0]])?);

    let wide = front("wide", &[[0.1, 0.9], [0.3, 0.7], [0.5, 0.5], [0.7, 0.3], [0.9, 0.1]])?;
    let narrow = front("narrow", &[[0.3, 0.6], [0.4, 0.5], [0.45, 0.45], [0.5, 0.4], [0.6, 0.3]])?;
    let tangled = front("tangled", &[[0.5, 0.5], [0.2, 0.8], [0.6, 0.3], [0.3, 0.7], [0.8, 0.1]])?;
    let fronts = [wide, narrow, tangled];
    let reference = reference_point(&fronts, REFERENCE_MARGIN)?;
    println!("\nshared reference {reference:?}");
    for f in &fronts {
        let s = summarize(f, &reference)?;
        println!(
            "{:<8} hv {:.4} ip {:.4} spar {:.4} spac {:.4} front {} ctrl {:.3}",
            s.method, s.hypervolume, s.inner_product, s.sparsity, s.spacing, s.front_length, s.controllability
        );
    }
    println!("non-dominated points of 'narrow': {}", pareto_front(&fronts[1]).len());

    let csv = front_csv(&fronts)?;
    println!("\n{csv}");
    print!("{}", fronts_report(&parse_front_csv(&csv)?)?);
    Ok(())
}
