//! Dense convex QP solver: primal active set on a null-space core, with a
//! phase-1 LP for infeasible starts. LPs are solved as `H = eps I` QPs.

mod active_set;
mod dump;
pub mod linalg;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::QpError;

pub use dump::write_debug;

/// `min 1/2 x^T H x + g^T x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  l <= x <= u`.
///
/// `hessian` may be smaller than the variable count; it then acts on the
/// leading variables and the remaining ones enter the objective linearly.
#[derive(Debug, Clone)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub a_in: DMatrix<f64>,
    pub b_in: DVector<f64>,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl QuadraticProgram {
    /// Unconstrained problem with zero objective in `nv` variables.
    pub fn new(nv: usize) -> Self {
        Self {
            hessian: DMatrix::zeros(0, 0),
            linear: DVector::zeros(nv),
            a_eq: DMatrix::zeros(0, nv),
            b_eq: DVector::zeros(0),
            a_in: DMatrix::zeros(0, nv),
            b_in: DVector::zeros(0),
            lower: DVector::from_element(nv, f64::NEG_INFINITY),
            upper: DVector::from_element(nv, f64::INFINITY),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    pub fn with_hessian(mut self, h: DMatrix<f64>) -> Self {
        self.hessian = h;
        self
    }

    pub fn with_linear(mut self, g: DVector<f64>) -> Self {
        self.linear = g;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        let nh = self.hessian.nrows();
        let xh = x.rows(0, nh);
        0.5 * xh.dot(&(&self.hessian * xh)) + self.linear.dot(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let nh = self.hessian.nrows();
        let mut g = self.linear.clone();
        let hx = &self.hessian * x.rows(0, nh);
        for i in 0..nh {
            g[i] += hx[i];
        }
        g
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let nv = self.num_vars();
        let dim = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(QpError::Dimension(format!("{what}: expected {want}, got {got}")))
            }
        };
        let nh = self.hessian.nrows();
        dim("hessian columns", self.hessian.ncols(), nh)?;
        if nh > nv {
            return Err(QpError::Dimension(format!("hessian block {nh} exceeds {nv} variables")));
        }
        dim("equality columns", self.a_eq.ncols(), nv)?;
        dim("equality rhs", self.b_eq.len(), self.a_eq.nrows())?;
        dim("inequality columns", self.a_in.ncols(), nv)?;
        dim("inequality rhs", self.b_in.len(), self.a_in.nrows())?;
        dim("lower bounds", self.lower.len(), nv)?;
        dim("upper bounds", self.upper.len(), nv)?;
        if nh > 0 {
            let scale = 1.0f64.max(self.hessian.amax());
            let asym = (&self.hessian - self.hessian.transpose()).amax();
            if asym > 1e-12 * scale {
                return Err(QpError::NotSymmetric(asym));
            }
            let eig = SymmetricEigen::new(self.hessian.clone()).eigenvalues.min();
            if eig < -1e-10 * scale {
                return Err(QpError::NotPsd(eig));
            }
        }
        for i in 0..nv {
            if self.lower[i] > self.upper[i] || self.lower[i].is_nan() || self.upper[i].is_nan() {
                return Err(QpError::Dimension(format!("empty bound interval for variable {i}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum QpStatus {
    Optimal,
    Infeasible,
    MaxIter,
}

/// Scaled KKT residuals of the returned point.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal: f64,
    pub dual: f64,
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.primal).max(self.dual).max(self.complementarity)
    }
}

/// Multipliers follow `grad + A_eq^T y + A_in^T z - z_l + z_u = 0` with
/// `z, z_l, z_u >= 0`.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub ineq_multipliers: DVector<f64>,
    pub lower_multipliers: DVector<f64>,
    pub upper_multipliers: DVector<f64>,
    pub status: QpStatus,
    pub objective: f64,
    pub kkt: KktResiduals,
    pub iterations: usize,
    /// Optimal phase-1 infeasibility, 0 when the start was already feasible.
    pub phase1_value: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    pub regularization: f64,
    pub max_iter: Option<usize>,
    pub feasibility_tol: f64,
    pub phase1_tol: f64,
    pub multiplier_tol: f64,
    /// Consecutive zero-length steps before falling back to lowest-index pivoting.
    pub bland_after: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        Self { regularization: 1e-10, max_iter: None, feasibility_tol: 1e-9, phase1_tol: 1e-8, multiplier_tol: 1e-11, bland_after: 25 }
    }
}

pub fn solve_qp(qp: &QuadraticProgram, warm_start: Option<&DVector<f64>>) -> Result<QpSolution, QpError> {
    solve_qp_with(qp, warm_start, &QpOptions::default())
}

pub fn solve_qp_with(qp: &QuadraticProgram, warm_start: Option<&DVector<f64>>, opts: &QpOptions) -> Result<QpSolution, QpError> {
    qp.validate()?;
    if let Some(w) = warm_start {
        if w.len() != qp.num_vars() {
            return Err(QpError::Dimension(format!("warm start: expected {}, got {}", qp.num_vars(), w.len())));
        }
    }
    Ok(active_set::solve(qp, warm_start, opts))
}

/// Phase-1 feasibility only: any point satisfying the constraints, or `None`.
pub fn find_feasible(qp: &QuadraticProgram, start: Option<&DVector<f64>>) -> Result<Option<DVector<f64>>, QpError> {
    let mut feas = qp.clone();
    feas.hessian = DMatrix::zeros(0, 0);
    feas.linear.fill(0.0);
    let sol = solve_qp(&feas, start)?;
    Ok(match sol.status {
        QpStatus::Infeasible => None,
        _ => Some(sol.x),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn scalar_with_lower_bound() {
        let qp = QuadraticProgram::new(1).with_hessian(DMatrix::from_element(1, 1, 2.0)).with_inequalities(DMatrix::from_element(1, 1, -1.0), v(&[-1.0]));
        let s = solve_qp(&qp, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x[0] - 1.0).abs() < 1e-9);
        assert!((s.objective - 1.0).abs() < 1e-9);
        assert!((s.ineq_multipliers[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn simplex_projection_is_symmetric() {
        let qp = QuadraticProgram::new(3).with_hessian(DMatrix::identity(3, 3) * 2.0).with_equalities(DMatrix::from_element(1, 3, 1.0), v(&[1.0]));
        let s = solve_qp(&qp, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        for i in 0..3 {
            assert!((s.x[i] - 1.0 / 3.0).abs() < 1e-9);
        }
        assert!(s.kkt.max() <= 1e-8);
    }

    #[test]
    fn linear_program_on_a_box() {
        let qp = QuadraticProgram::new(2)
            .with_linear(v(&[1.0, -2.0]))
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[1.0]))
            .with_bounds(v(&[0.0, 0.0]), v(&[f64::INFINITY, f64::INFINITY]));
        let s = solve_qp(&qp, None).unwrap();
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.x - v(&[0.0, 1.0])).amax() < 1e-8);
        assert!((s.objective + 2.0).abs() < 1e-8);
    }

    #[test]
    fn infeasible_problem_is_reported() {
        let qp = QuadraticProgram::new(1).with_equalities(DMatrix::from_element(1, 1, 1.0), v(&[3.0])).with_bounds(v(&[0.0]), v(&[1.0]));
        assert_eq!(solve_qp(&qp, None).unwrap().status, QpStatus::Infeasible);
        assert!(find_feasible(&qp, None).unwrap().is_none());
    }

    #[test]
    fn hessian_validation() {
        let qp = QuadraticProgram::new(2).with_hessian(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]));
        assert!(matches!(solve_qp(&qp, None), Err(QpError::NotPsd(_))));
        let qp = QuadraticProgram::new(2).with_hessian(DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]));
        assert!(matches!(solve_qp(&qp, None), Err(QpError::NotSymmetric(_))));
        let mut qp = QuadraticProgram::new(2);
        qp.b_eq = v(&[1.0]);
        assert!(matches!(solve_qp(&qp, None), Err(QpError::Dimension(_))));
    }

    #[test]
    fn partial_hessian_block() {
        // min x0^2 + x1 with x0 + x1 = 2, x1 >= 0 -> x0 = 0.5
        let qp = QuadraticProgram::new(2)
            .with_hessian(DMatrix::from_element(1, 1, 2.0))
            .with_linear(v(&[0.0, 1.0]))
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), v(&[2.0]))
            .with_bounds(v(&[f64::NEG_INFINITY, 0.0]), v(&[f64::INFINITY, f64::INFINITY]));
        let s = solve_qp(&qp, None).unwrap();
        assert!((s.x - v(&[0.5, 1.5])).amax() < 1e-8);
    }

    #[test]
    fn warm_start_is_deterministic_and_no_worse() {
        let qp = QuadraticProgram::new(3)
            .with_hessian(DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0]))
            .with_linear(v(&[-1.0, 0.3, 0.2]))
            .with_inequalities(DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, -1.0, 2.0, 0.0]), v(&[1.0, 0.5]))
            .with_bounds(v(&[-1.0, -1.0, -1.0]), v(&[1.0, 1.0, 1.0]));
        let cold = solve_qp(&qp, None).unwrap();
        let again = solve_qp(&qp, None).unwrap();
        assert_eq!(cold.x.as_slice(), again.x.as_slice());
        let warm = solve_qp(&qp, Some(&v(&[0.9, -0.2, 0.1]))).unwrap();
        assert!(warm.objective <= cold.objective + 1e-9);
    }
}
