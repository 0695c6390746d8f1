//! Exact, entropic and brute-force transport on one cost matrix, plus the
//! effect of the entropic regularization strength.

use otfuse::ot::{brute_force_ot, solve_exact, solve_sinkhorn, SinkhornParams};
use otfuse::tensor::row_distance_matrix;
use otfuse::Matrix;

pub fn run_example() -> otfuse::Result<()> {
    let a = Matrix::from_rows(&[[0.0, 1.0], [2.0, 0.5], [1.0, 1.0], [-1.0, 0.0]])?;
    let b = Matrix::from_rows(&[[1.1, 0.9], [-0.9, 0.1], [0.1, 1.0], [2.0, 0.4]])?;
    let cost = row_distance_matrix(&a, &b)?;

    let exact = solve_exact(&cost)?;
    let brute = brute_force_ot(&cost)?;
    println!("exact assignment {:?}, objective {:.6}", exact.map.as_permutation().unwrap(), exact.objective);
    println!("brute force over {} permutations, objective {:.6}", brute.iterations, brute.objective);
    assert!((exact.objective - brute.objective).abs() < 1e-12);

    let defaults = SinkhornParams::default();
    for eps in [1.0, 0.1, 0.01, 0.001] {
        let s = solve_sinkhorn(&cost, eps, defaults.tol, defaults.max_iter)?;
        println!(
            "sinkhorn eps {eps:<6} objective {:.6}  iterations {:>5}  marginal error {:.1e}",
            s.objective,
            s.iterations,
            s.map.marginal_error()
        );
        assert!(s.objective >= exact.objective - 1e-9);
    }

    let soft = solve_sinkhorn(&cost, 0.5, 1e-9, 10_000)?;
    println!("soft map at eps 0.5 (rows sum to 1/4):");
    for i in 0..4 {
        let row: Vec<String> = soft.map.matrix().row(i).iter().map(|v| format!("{v:.4}")).collect();
        println!("  [{}]", row.join(", "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().expect("ot_solvers example failed");
}
