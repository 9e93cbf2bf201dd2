//! Line-search SQP with damped BFGS and an l1 merit function.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{NlpError, SystemError};
use crate::qp::{solve_qp_with, QpOptions, QpStatus, QuadraticProgram};
use crate::system::fd_jacobian;

type Vector = DVector<f64>;
type Matrix = DMatrix<f64>;

/// `min f(z)  s.t.  c_E(z) = 0,  c_I(z) <= 0,  l <= z <= u`.
///
/// Variables past [`hessian_block`](Self::hessian_block) must enter the
/// objective and all constraints linearly.
pub trait NonlinearProgram {
    fn dim(&self) -> usize;
    fn objective(&self, z: &Vector) -> Result<f64, SystemError>;
    fn equalities(&self, z: &Vector) -> Result<Vector, SystemError>;
    fn inequalities(&self, z: &Vector) -> Result<Vector, SystemError>;
    fn bounds(&self) -> (Vector, Vector);

    fn hessian_block(&self) -> usize {
        self.dim()
    }

    fn gradient(&self, z: &Vector) -> Result<Vector, SystemError> {
        let j = fd_jacobian(|v| self.objective(v).map(|f| Vector::from_element(1, f)), z)?;
        Ok(j.row(0).transpose())
    }

    /// Exact objective Hessian on the leading block, used to seed BFGS.
    fn objective_hessian(&self, _z: &Vector) -> Option<Matrix> {
        None
    }

    fn equality_jacobian(&self, z: &Vector) -> Result<Matrix, SystemError> {
        fd_jacobian(|v| self.equalities(v), z)
    }

    fn inequality_jacobian(&self, z: &Vector) -> Result<Matrix, SystemError> {
        fd_jacobian(|v| self.inequalities(v), z)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SqpOptions {
    pub kkt_tol: f64,
    pub feasibility_tol: f64,
    pub step_tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub armijo: f64,
    /// Added to the seeded Hessian diagonal.
    pub hessian_shift: f64,
    pub qp: QpOptions,
}

impl Default for SqpOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-6,
            feasibility_tol: 1e-9,
            step_tol: 1e-9,
            max_iter: 100,
            max_halvings: 30,
            armijo: 1e-4,
            hessian_shift: 1e-6,
            qp: QpOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NlpStatus {
    Converged,
    MaxIter,
    /// The linearized constraints have no solution.
    Infeasible,
    LineSearchFailed,
    QpFailure,
}

#[derive(Debug, Clone, Serialize)]
pub struct SqpTraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub kkt: f64,
    pub violation: f64,
    pub step_length: f64,
    pub step_norm: f64,
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct NlpSolution {
    pub z: Vector,
    pub status: NlpStatus,
    pub objective: f64,
    pub kkt: f64,
    pub violation: f64,
    pub iterations: usize,
    pub eq_multipliers: Vector,
    pub ineq_multipliers: Vector,
    pub trace: Vec<SqpTraceRow>,
}

struct Eval {
    f: f64,
    g: Vector,
    ce: Vector,
    je: Matrix,
    ci: Vector,
    ji: Matrix,
}

fn evaluate(nlp: &dyn NonlinearProgram, z: &Vector) -> Result<Eval, SystemError> {
    Ok(Eval {
        f: nlp.objective(z)?,
        g: nlp.gradient(z)?,
        ce: nlp.equalities(z)?,
        je: nlp.equality_jacobian(z)?,
        ci: nlp.inequalities(z)?,
        ji: nlp.inequality_jacobian(z)?,
    })
}

fn infeasibility_l1(ce: &Vector, ci: &Vector) -> f64 {
    ce.iter().map(|v| v.abs()).sum::<f64>() + ci.iter().map(|v| v.max(0.0)).sum::<f64>()
}

fn violation(ce: &Vector, ci: &Vector, z: &Vector, lo: &Vector, hi: &Vector) -> f64 {
    let mut v = ce.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    v = ci.iter().fold(v, |m, x| m.max(*x));
    for i in 0..z.len() {
        v = v.max(lo[i] - z[i]).max(z[i] - hi[i]);
    }
    v.max(0.0)
}

fn lagrangian_gradient(e: &Eval, mu_e: &Vector, mu_i: &Vector) -> Vector {
    let mut g = e.g.clone();
    if !mu_e.is_empty() {
        g += e.je.transpose() * mu_e;
    }
    if !mu_i.is_empty() {
        g += e.ji.transpose() * mu_i;
    }
    g
}

/// Stationarity of the Lagrangian after absorbing bound multipliers of the
/// right sign at active bounds.
fn stationarity(grad_l: &Vector, z: &Vector, lo: &Vector, hi: &Vector) -> f64 {
    let mut r = 0.0f64;
    for i in 0..z.len() {
        let gi = grad_l[i];
        let at_lo = lo[i].is_finite() && z[i] <= lo[i] + 1e-12 * (1.0 + lo[i].abs());
        let at_hi = hi[i].is_finite() && z[i] >= hi[i] - 1e-12 * (1.0 + hi[i].abs());
        let res = if at_lo && at_hi {
            0.0
        } else if at_lo {
            (-gi).max(0.0)
        } else if at_hi {
            gi.max(0.0)
        } else {
            gi.abs()
        };
        r = r.max(res);
    }
    r
}

fn wrap(z: &Vector, source: SystemError) -> NlpError {
    NlpError::Evaluation { iterate: z.as_slice().to_vec(), source }
}

pub fn solve_nlp(nlp: &dyn NonlinearProgram, z0: &Vector, opts: &SqpOptions) -> Result<NlpSolution, NlpError> {
    let n = nlp.dim();
    if z0.len() != n {
        return Err(NlpError::Invalid(format!("initial point has {} entries, expected {n}", z0.len())));
    }
    let nh = nlp.hessian_block();
    let (lo, hi) = nlp.bounds();
    let mut z = z0.clone();
    for i in 0..n {
        z[i] = z[i].max(lo[i]).min(hi[i]);
    }
    let mut e = evaluate(nlp, &z).map_err(|s| wrap(&z, s))?;
    if !e.f.is_finite() || e.ce.iter().chain(e.ci.iter()).any(|v| !v.is_finite()) {
        return Err(NlpError::Invalid("non-finite values at the initial point".into()));
    }
    let mut b = match nlp.objective_hessian(&z) {
        Some(h) => h,
        None => Matrix::identity(nh, nh),
    };
    for i in 0..nh {
        b[(i, i)] += opts.hessian_shift;
    }
    let mut mu_e = Vector::zeros(e.ce.len());
    let mut mu_i = Vector::zeros(e.ci.len());
    let mut penalty = 1.0f64;
    let mut trace = Vec::new();
    let mut status = NlpStatus::MaxIter;
    let mut kkt = f64::INFINITY;
    let mut iterations = 0;

    for it in 0..opts.max_iter {
        iterations = it + 1;
        let lower = &lo - &z;
        let upper = &hi - &z;
        let qp = QuadraticProgram::new(n)
            .with_hessian(b.clone())
            .with_linear(e.g.clone())
            .with_equalities(e.je.clone(), -&e.ce)
            .with_inequalities(e.ji.clone(), -&e.ci)
            .with_bounds(lower, upper);
        let sol = solve_qp_with(&qp, Some(&Vector::zeros(n)), &opts.qp)?;
        match sol.status {
            QpStatus::Optimal => {}
            QpStatus::Infeasible => {
                status = NlpStatus::Infeasible;
                break;
            }
            QpStatus::MaxIter => {
                status = NlpStatus::QpFailure;
                break;
            }
        }
        let d = sol.x;
        mu_e = sol.eq_multipliers;
        mu_i = sol.ineq_multipliers;
        let viol = violation(&e.ce, &e.ci, &z, &lo, &hi);
        let grad_l = lagrangian_gradient(&e, &mu_e, &mu_i);
        let gscale = 1.0 + e.g.amax();
        kkt = (stationarity(&grad_l, &z, &lo, &hi) / gscale).max(viol);
        let dnorm = d.amax();
        trace.push(SqpTraceRow { iteration: it, objective: e.f, kkt, violation: viol, step_length: 0.0, step_norm: dnorm, penalty });
        let feasible = viol <= opts.feasibility_tol;
        if feasible && (dnorm <= opts.step_tol * (1.0 + z.amax()) || kkt <= opts.kkt_tol && dnorm <= 1e-6 * (1.0 + z.amax())) {
            status = NlpStatus::Converged;
            break;
        }

        let mult_max = mu_e.amax().max(if !mu_i.is_empty() { mu_i.amax() } else { 0.0 });
        if penalty < 1.1 * mult_max + 1e-3 {
            penalty = (1.5 * mult_max).max(penalty) + 1e-3;
        }
        let inf0 = infeasibility_l1(&e.ce, &e.ci);
        let merit0 = e.f + penalty * inf0;
        let slope = e.g.dot(&d) - penalty * inf0;

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let mut trial = &z + &d * alpha;
            for i in 0..n {
                trial[i] = trial[i].max(lo[i]).min(hi[i]);
            }
            if let Ok(et) = evaluate(nlp, &trial) {
                let merit = et.f + penalty * infeasibility_l1(&et.ce, &et.ci);
                let target = if slope < 0.0 { merit0 + opts.armijo * alpha * slope } else { merit0 + 1e-12 * (1.0 + merit0.abs()) };
                if merit.is_finite() && merit <= target {
                    accepted = Some((trial, et));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((z_new, e_new)) = accepted else {
            status = NlpStatus::LineSearchFailed;
            break;
        };
        if let Some(last) = trace.last_mut() {
            last.step_length = alpha;
        }

        let s = (&z_new - &z).rows(0, nh).into_owned();
        let y = (lagrangian_gradient(&e_new, &mu_e, &mu_i) - lagrangian_gradient(&e, &mu_e, &mu_i)).rows(0, nh).into_owned();
        damped_bfgs(&mut b, &s, &y);
        z = z_new;
        e = e_new;
    }

    let viol = violation(&e.ce, &e.ci, &z, &lo, &hi);
    Ok(NlpSolution { objective: e.f, z, status, kkt, violation: viol, iterations, eq_multipliers: mu_e, ineq_multipliers: mu_i, trace })
}

/// Powell-damped BFGS update; keeps `b` symmetric positive definite.
fn damped_bfgs(b: &mut Matrix, s: &Vector, y: &Vector) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if sbs <= 1e-16 * (1.0 + s.norm_squared()) {
        return;
    }
    let sy = s.dot(y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r = y * theta + &bs * (1.0 - theta);
    let sr = s.dot(&r);
    if sr <= 0.0 {
        return;
    }
    *b += &r * r.transpose() / sr - &bs * bs.transpose() / sbs;
    let sym = (&*b + b.transpose()) * 0.5;
    *b = sym;
}

pub fn write_trace_csv(trace: &[SqpTraceRow], out: impl Write) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in trace {
        w.serialize(row).map_err(io::Error::other)?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic1d;
    impl NonlinearProgram for Quadratic1d {
        fn dim(&self) -> usize {
            1
        }
        fn objective(&self, z: &Vector) -> Result<f64, SystemError> {
            Ok((z[0] - 1.0).powi(2))
        }
        fn equalities(&self, _z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::zeros(0))
        }
        fn inequalities(&self, _z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::zeros(0))
        }
        fn bounds(&self) -> (Vector, Vector) {
            (Vector::from_element(1, f64::NEG_INFINITY), Vector::from_element(1, f64::INFINITY))
        }
    }

    struct Projection;
    impl NonlinearProgram for Projection {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, z: &Vector) -> Result<f64, SystemError> {
            Ok(z.norm_squared())
        }
        fn equalities(&self, z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::from_element(1, z[0] + z[1] - 1.0))
        }
        fn inequalities(&self, _z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::zeros(0))
        }
        fn bounds(&self) -> (Vector, Vector) {
            (Vector::from_element(2, f64::NEG_INFINITY), Vector::from_element(2, f64::INFINITY))
        }
    }

    /// Unit circle constraint `x^2 + y^2 = 1` while minimizing `x + y`.
    struct Circle;
    impl NonlinearProgram for Circle {
        fn dim(&self) -> usize {
            2
        }
        fn objective(&self, z: &Vector) -> Result<f64, SystemError> {
            Ok(z[0] + z[1])
        }
        fn equalities(&self, z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::from_element(1, z.norm_squared() - 1.0))
        }
        fn inequalities(&self, _z: &Vector) -> Result<Vector, SystemError> {
            Ok(Vector::zeros(0))
        }
        fn bounds(&self) -> (Vector, Vector) {
            (Vector::from_element(2, -3.0), Vector::from_element(2, 3.0))
        }
    }

    #[test]
    fn unconstrained_quadratic() {
        let s = solve_nlp(&Quadratic1d, &Vector::zeros(1), &SqpOptions::default()).unwrap();
        assert_eq!(s.status, NlpStatus::Converged);
        assert!((s.z[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn equality_projection() {
        let s = solve_nlp(&Projection, &Vector::from_vec(vec![3.0, -1.0]), &SqpOptions::default()).unwrap();
        assert_eq!(s.status, NlpStatus::Converged);
        assert!((s.z[0] - 0.5).abs() < 1e-8 && (s.z[1] - 0.5).abs() < 1e-8);
    }

    #[test]
    fn nonlinear_equality() {
        let s = solve_nlp(&Circle, &Vector::from_vec(vec![-0.5, -0.9]), &SqpOptions::default()).unwrap();
        assert_eq!(s.status, NlpStatus::Converged);
        let r = -(0.5f64).sqrt();
        assert!((s.z[0] - r).abs() < 1e-6 && (s.z[1] - r).abs() < 1e-6, "{:?}", s.z);
        assert!(s.violation <= 1e-9);
    }

    #[test]
    fn trace_csv_has_header() {
        let s = solve_nlp(&Circle, &Vector::from_vec(vec![-0.5, -0.9]), &SqpOptions::default()).unwrap();
        let mut buf = Vec::new();
        write_trace_csv(&s.trace, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,objective,kkt,violation,step_length,step_norm,penalty"));
        assert_eq!(text.lines().count(), s.trace.len() + 1);
    }
}
