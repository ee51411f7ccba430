//! Merging algebra: the circulant dominance matrix, coefficients solved from
//! a preference (negative ones included), parameter merging and
//! extrapolation away from a reference.

use merge_guide::merge::{
    build_weight_matrix, extrapolate, merge_params, solve_coefficients, ParamVector, Preference, WeightMatrix,
};

fn main() -> merge_guide::Result<()> {
    let b = build_weight_matrix(3, 0.7)?;
    println!("dominance matrix (beta 0.7):\n{b}");
    let (one, other) = b.circulant_eigenvalues().expect("circulant");
    println!("eigenvalues {one} and {other} (x2)\n");

    for w in [vec![1.0, 0.0, 0.0], vec![0.5, 0.3, 0.2], vec![1.0 / 3.0; 3]] {
        let mu = Preference::new(w)?;
        let lambda = solve_coefficients(&b, &mu)?;
        println!(
            "mu {:?} -> lambda {:?} (sum {:.12})",
            mu.weights(),
            lambda.values(),
            lambda.values().iter().sum::<f64>()
        );
    }

    // Two-objective case from the closed form lambda = (beta + mu - 1) / (2 beta - 1).
    let b2 = build_weight_matrix(2, 0.75)?;
    let lambda = solve_coefficients(&b2, &Preference::basis(2, 0)?)?;
    let models = [ParamVector::point(vec![2.0, 0.0])?, ParamVector::point(vec![0.0, 2.0])?];
    let merged = merge_params(&models, &lambda)?;
    println!("\nbeta 0.75, mu = e1: lambda {:?}, merged {:?}", lambda.values(), merged.values());

    let sft = ParamVector::point(vec![1.0, 1.0])?;
    for alpha in [0.0, 0.3, 1.0] {
        println!("  extrapolated by {alpha}: {:?}", extrapolate(&merged, &sft, alpha)?.values());
    }

    let eye = WeightMatrix::identity(2)?;
    let mu = Preference::pair(0.3)?;
    println!("\nidentity weights reproduce the preference: {:?}", solve_coefficients(&eye, &mu)?.values());
    Ok(())
}
