use lifted_lmpc::error::SystemError;
use lifted_lmpc::sqp::{solve_nlp, NlpStatus, NonlinearProgram, SqpOptions};
use lifted_lmpc::system::Vector;

struct Rosenbrock {
    constrained: bool,
}

impl NonlinearProgram for Rosenbrock {
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
        if self.constrained {
            Ok(Vector::from_element(1, z[0] * z[0] + z[1] * z[1] - 1.5))
        } else {
            Ok(Vector::zeros(0))
        }
    }
    fn bounds(&self) -> (Vector, Vector) {
        (Vector::from_element(2, -5.0), Vector::from_element(2, 5.0))
    }
}

#[test]
fn unconstrained_rosenbrock_reaches_the_valley_floor() {
    let sol = solve_nlp(&Rosenbrock { constrained: false }, &Vector::from_vec(vec![-1.2, 1.0]), &SqpOptions::default()).unwrap();
    assert_eq!(sol.status, NlpStatus::Converged);
    assert!((sol.z[0] - 1.0).abs() < 1e-5 && (sol.z[1] - 1.0).abs() < 1e-5, "{:?}", sol.z);
}

#[test]
fn disk_constrained_rosenbrock_meets_kkt() {
    let sol = solve_nlp(&Rosenbrock { constrained: true }, &Vector::from_vec(vec![-1.2, 1.0]), &SqpOptions::default()).unwrap();
    assert_eq!(sol.status, NlpStatus::Converged);
    let r2 = sol.z[0] * sol.z[0] + sol.z[1] * sol.z[1];
    assert!((r2 - 1.5).abs() < 1e-6, "active constraint");
    // Stationarity: the gradient is anti-parallel to the disk normal.
    let g = [-2.0 * (1.0 - sol.z[0]) - 400.0 * sol.z[0] * (sol.z[1] - sol.z[0] * sol.z[0]), 200.0 * (sol.z[1] - sol.z[0] * sol.z[0])];
    let cross = g[0] * sol.z[1] - g[1] * sol.z[0];
    assert!(cross.abs() < 1e-5, "{cross}");
    assert!(g[0] * sol.z[0] + g[1] * sol.z[1] < 0.0);
}

#[test]
fn never_worse_than_the_start() {
    let nlp = Rosenbrock { constrained: true };
    let z0 = Vector::from_vec(vec![0.9, 0.8]);
    let opts = SqpOptions { max_iter: 2, ..SqpOptions::default() };
    let sol = solve_nlp(&nlp, &z0, &opts).unwrap();
    assert!(sol.objective <= nlp.objective(&z0).unwrap() + 1e-12);
}
