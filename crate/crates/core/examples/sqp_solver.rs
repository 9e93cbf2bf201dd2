//! SQP with an l1 merit line search on a constrained Rosenbrock problem.
//!
//! `cargo run --example sqp_solver`

use lifted_lmpc::error::SystemError;
use lifted_lmpc::sqp::{solve_nlp, NonlinearProgram, SqpOptions};
use lifted_lmpc::system::Vector;

/// Rosenbrock restricted to the disk `x0^2 + x1^2 <= 1.5`.
struct DiskRosenbrock;

impl NonlinearProgram for DiskRosenbrock {
    fn dim(&self) -> usize {
        2
    }
    fn objective(&self, z: &Vector) -> Result<f64, SystemError> {
        Ok((1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2))
    }
    fn equalities(&self, _z: &Vector) -> Result<Vector, SystemError> {
        Ok(Vector::zeros(0))
    }
    fn inequalities(&self, z: &Vector) -> Result<Vector, SystemError> {
        Ok(Vector::from_element(1, z[0] * z[0] + z[1] * z[1] - 1.5))
    }
    fn bounds(&self) -> (Vector, Vector) {
        (Vector::from_element(2, f64::NEG_INFINITY), Vector::from_element(2, f64::INFINITY))
    }
}

pub fn run() -> lifted_lmpc::Result<Vector> {
    let sol = solve_nlp(&DiskRosenbrock, &Vector::from_vec(vec![-1.2, 1.0]), &SqpOptions::default())?;
    println!("status     {:?} after {} iterations", sol.status, sol.iterations);
    println!("z          {:?}", sol.z.as_slice());
    println!("objective  {:.3e}", sol.objective);
    println!("kkt        {:.2e}", sol.kkt);
    Ok(sol.z)
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run().map(|_| ())
}
