//! Dense convex QP with equality, inequality and bound constraints.
//!
//! `cargo run --example qp_solver`

use lifted_lmpc::qp::{solve_qp, QuadraticProgram};
use nalgebra::{DMatrix, DVector};

pub fn run() -> lifted_lmpc::Result<f64> {
    // min (x0 - 1)^2 + (x1 - 2)^2 + x2^2  s.t.  x0 + x1 + x2 = 2,  x0 - x1 <= 0.5,  0 <= x <= 1.5
    let qp = QuadraticProgram::new(3)
        .with_hessian(DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 2.0, 2.0])))
        .with_linear(DVector::from_vec(vec![-2.0, -4.0, 0.0]))
        .with_equalities(DMatrix::from_row_slice(1, 3, &[1.0, 1.0, 1.0]), DVector::from_element(1, 2.0))
        .with_inequalities(DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]), DVector::from_element(1, 0.5))
        .with_bounds(DVector::zeros(3), DVector::from_element(3, 1.5));
    let sol = solve_qp(&qp, None)?;
    println!("status     {:?}", sol.status);
    println!("x          {:?}", sol.x.as_slice());
    println!("objective  {:.12}", sol.objective);
    println!("kkt        {:.2e}", sol.kkt.max());
    println!("iterations {}", sol.iterations);
    Ok(sol.objective)
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run().map(|_| ())
}
