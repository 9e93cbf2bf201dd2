//! Two-mode piecewise-affine double integrator split at `x1 = -2`.

use nalgebra::{DMatrix, DVector};

use crate::error::{ConfigError, SystemError};
use crate::qp::{solve_qp, QpStatus, QuadraticProgram};
use crate::system::{Bound, LiftedOutput, LiftedSystem, Matrix, OutputWindow, PwaMode, Rollout, Vector};

pub const SWITCH: f64 = -2.0;

#[derive(Debug, Clone)]
pub struct PwaSystem {
    dt: f64,
    modes: [PwaMode; 2],
    state_bounds: Vec<Bound>,
    input_bounds: Vec<Bound>,
}

impl PwaSystem {
    pub fn new(dt: f64) -> Self {
        let a1 = Matrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let a2 = Matrix::from_row_slice(2, 2, &[1.0, dt, 0.5, 1.0]);
        let b = Matrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let left = PwaMode { a: a1, b: b.clone(), c: Vector::zeros(2), region_normal: Vector::from_vec(vec![1.0, 0.0]), region_offset: SWITCH };
        let right = PwaMode { a: a2, b, c: Vector::from_vec(vec![0.0, 1.0]), region_normal: Vector::from_vec(vec![-1.0, 0.0]), region_offset: -SWITCH };
        Self {
            dt,
            modes: [left, right],
            state_bounds: vec![Bound::interval(-5.0, 0.0), Bound::interval(0.0, 6.0)],
            input_bounds: vec![Bound::interval(-10.0, 2.0)],
        }
    }

    pub fn with_bounds(mut self, state: Vec<Bound>, input: Vec<Bound>) -> Self {
        self.state_bounds = state;
        self.input_bounds = input;
        self
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Index of the mode used by the simulator; the shared facet goes left.
    pub fn mode_of(&self, x: &Vector) -> usize {
        if x[0] <= SWITCH {
            0
        } else {
            1
        }
    }

    pub fn stage_weight(&self) -> Matrix {
        let dt = self.dt;
        Matrix::from_row_slice(2, 2, &[10.0, 5.0 * dt, 5.0 * dt, 5.0 * dt * dt])
    }
}

impl LiftedSystem for PwaSystem {
    fn name(&self) -> &str {
        "pwa"
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn lift_depth(&self) -> usize {
        2
    }

    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        self.modes[self.mode_of(x)].step(x, u)
    }

    fn dynamics_jacobian(&self, x: &Vector, _u: &Vector) -> (Matrix, Matrix) {
        let mode = &self.modes[self.mode_of(x)];
        (mode.a.clone(), mode.b.clone())
    }

    fn output(&self, x: &Vector) -> Vector {
        Vector::from_element(1, x[0])
    }

    fn state_map(&self, w: &OutputWindow) -> Result<Vector, SystemError> {
        check_width(w.ncols(), 2)?;
        Ok(Vector::from_vec(vec![w[(0, 0)], (w[(0, 1)] - w[(0, 0)]) / self.dt]))
    }

    fn state_map_jacobian(&self, w: &OutputWindow) -> Result<Matrix, SystemError> {
        check_width(w.ncols(), 2)?;
        Ok(Matrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0 / self.dt, 1.0 / self.dt]))
    }

    fn input_map(&self, y: &LiftedOutput) -> Result<Vector, SystemError> {
        check_width(y.ncols(), 3)?;
        let (y0, y1, y2) = (y[(0, 0)], y[(0, 1)], y[(0, 2)]);
        let mut u = (y0 - 2.0 * y1 + y2) / self.dt;
        if y0 > SWITCH {
            u -= 0.5 * y0 + 1.0;
        }
        Ok(Vector::from_element(1, u))
    }

    fn input_map_jacobian(&self, y: &LiftedOutput) -> Result<Matrix, SystemError> {
        check_width(y.ncols(), 3)?;
        let d0 = if y[(0, 0)] > SWITCH { 1.0 / self.dt - 0.5 } else { 1.0 / self.dt };
        Ok(Matrix::from_row_slice(1, 3, &[d0, -2.0 / self.dt, 1.0 / self.dt]))
    }

    fn state_bounds(&self) -> Vec<Bound> {
        self.state_bounds.clone()
    }

    fn input_bounds(&self) -> Vec<Bound> {
        self.input_bounds.clone()
    }

    fn equilibrium_state(&self) -> Vector {
        Vector::zeros(2)
    }

    fn equilibrium_input(&self) -> Vector {
        Vector::from_element(1, -1.0)
    }

    fn pwa_modes(&self) -> Option<&[PwaMode]> {
        Some(&self.modes)
    }
}

fn check_width(got: usize, expected: usize) -> Result<(), SystemError> {
    if got == expected {
        Ok(())
    } else {
        Err(SystemError::Dimension { expected, got })
    }
}

/// Point-to-point MPC from `x0` to the origin over `horizon` steps with a
/// heavy penalty `rho (u + 1)^2` on the deviation from the holding input,
/// followed by `hold` steps at `u = -1`.
///
/// The state cost pushes `x1` up monotonically, so only mode sequences that
/// leave the left region once are tried.
pub fn seed_trajectory(sys: &PwaSystem, x0: &Vector, horizon: usize, rho: f64, hold: usize) -> Result<Rollout, ConfigError> {
    let q = sys.stage_weight();
    let mut best: Option<(f64, DVector<f64>)> = None;
    let mut warm: Option<DVector<f64>> = None;
    for switch in (0..=horizon).rev() {
        let seq: Vec<usize> = (0..horizon).map(|k| usize::from(k >= switch)).collect();
        if !sys.modes[seq[0]].contains(x0, 0.0) {
            continue;
        }
        let qp = seed_qp(sys, x0, &seq, &q, rho);
        let sol = solve_qp(&qp, warm.as_ref()).map_err(|e| ConfigError::Seed(e.to_string()))?;
        if sol.status != QpStatus::Optimal {
            continue;
        }
        warm = Some(sol.x.clone());
        if best.as_ref().is_none_or(|(f, _)| sol.objective < *f) {
            best = Some((sol.objective, sol.x));
        }
    }
    let (_, z) = best.ok_or_else(|| ConfigError::Seed("no mode sequence reaches the origin".into()))?;
    let mut inputs: Vec<Vector> = (0..horizon).map(|k| Vector::from_element(1, z[k])).collect();
    inputs.extend(std::iter::repeat_n(sys.equilibrium_input(), hold));
    Ok(Rollout::from_inputs(sys, x0, inputs))
}

// Condensed in the inputs: x_k = M_k u + v_k.
fn seed_qp(sys: &PwaSystem, x0: &Vector, seq: &[usize], q: &Matrix, rho: f64) -> QuadraticProgram {
    let n = seq.len();
    let xb = sys.state_bounds();
    let ub = sys.input_bounds();
    let mut m = DMatrix::zeros(2, n);
    let mut v = x0.clone();
    let mut h = DMatrix::identity(n, n) * (2.0 * rho);
    let mut g = DVector::from_element(n, 2.0 * rho);
    let mut rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for k in 0..n {
        let mode = &sys.modes[seq[k]];
        if k > 0 {
            let normal = m.transpose() * &mode.region_normal;
            rows.push((normal, mode.region_offset - mode.region_normal.dot(&v)));
        }
        m = &mode.a * &m;
        for r in 0..2 {
            m[(r, k)] += mode.b[(r, 0)];
        }
        v = &mode.a * &v + &mode.c;
        h += m.transpose() * q * &m * 2.0;
        g += m.transpose() * q * &v * 2.0;
        if k + 1 < n {
            for c in 0..2 {
                let row = m.row(c).transpose();
                if xb[c].upper().is_finite() {
                    rows.push((row.clone(), xb[c].upper() - v[c]));
                }
                if xb[c].lower().is_finite() {
                    rows.push((-row, v[c] - xb[c].lower()));
                }
            }
        }
    }
    let a_in = DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]);
    let b_in = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    QuadraticProgram::new(n)
        .with_hessian(h)
        .with_linear(g)
        .with_equalities(m, -v)
        .with_inequalities(a_in, b_in)
        .with_bounds(DVector::from_element(n, ub[0].lower()), DVector::from_element(n, ub[0].upper()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{box_membership, lifted_from_rollout};

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    #[test]
    fn left_edge_window_maps_to_rest() {
        let sys = PwaSystem::new(0.2);
        let w = OutputWindow::from_matrix(Matrix::from_row_slice(1, 2, &[-5.0, -5.0]));
        assert_eq!(sys.state_map(&w).unwrap(), v(&[-5.0, 0.0]));
        let y = LiftedOutput::from_matrix(Matrix::from_row_slice(1, 3, &[-5.0, -5.0, -5.0]));
        assert_eq!(sys.input_map(&y).unwrap(), v(&[0.0]));
    }

    #[test]
    fn origin_drifts_without_holding_input() {
        let sys = PwaSystem::new(0.2);
        assert_eq!(sys.dynamics(&v(&[0.0, 0.0]), &v(&[0.0])), v(&[0.0, 1.0]));
        assert_eq!(sys.dynamics(&v(&[0.0, 0.0]), &v(&[-1.0])), v(&[0.0, 0.0]));
    }

    #[test]
    fn input_map_is_continuous_across_the_switch() {
        let sys = PwaSystem::new(0.2);
        let at = |y0: f64| {
            let y = LiftedOutput::from_matrix(Matrix::from_row_slice(1, 3, &[y0, -1.9, -1.7]));
            sys.input_map(&y).unwrap()[0]
        };
        assert!((at(SWITCH) - at(SWITCH + 1e-12)).abs() < 1e-10);
        let left = sys.modes[0].step(&v(&[SWITCH, 1.0]), &v(&[0.3]));
        let right = sys.modes[1].step(&v(&[SWITCH, 1.0]), &v(&[0.3]));
        assert!((left - right).amax() < 1e-15);
    }

    #[test]
    fn stage_weight_matches_window_cost() {
        let sys = PwaSystem::new(0.2);
        let x = v(&[-3.0, 2.5]);
        let y1 = x[0] + 0.2 * x[1];
        let direct = 5.0 * (x[0] * x[0] + y1 * y1);
        assert!((x.dot(&(sys.stage_weight() * &x)) - direct).abs() < 1e-12);
    }

    #[test]
    fn round_trip_in_both_modes() {
        let sys = PwaSystem::new(0.2);
        for (x, u) in [(v(&[-4.0, 1.0]), v(&[0.5])), (v(&[-1.0, 0.5]), v(&[-3.0]))] {
            let u2 = v(&[1.0]);
            let y = lifted_from_rollout(&sys, &x, &[u.clone(), u2]).unwrap();
            assert!((sys.state_map(&y.leading()).unwrap() - &x).amax() < 1e-12);
            assert!((sys.input_map(&y).unwrap() - &u).amax() < 1e-12);
        }
    }

    #[test]
    fn seed_reaches_origin_inside_the_box() {
        let sys = PwaSystem::new(0.2);
        let seed = seed_trajectory(&sys, &v(&[-5.0, 0.0]), 30, 100.0, 4).unwrap();
        assert!(seed.states.last().unwrap().amax() <= 1e-6);
        for (x, u) in seed.states.iter().zip(&seed.inputs) {
            assert!(box_membership(&sys.state_bounds(), x, 1e-8), "{x}");
            assert!(box_membership(&sys.input_bounds(), u, 1e-8));
        }
        let x1: Vec<f64> = seed.states.iter().map(|x| x[0]).collect();
        assert!(x1.windows(2).all(|p| p[1] >= p[0] - 1e-9));
    }
}
