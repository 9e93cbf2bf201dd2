//! Kinematic unicycle with position output. The heading is recovered from
//! the displacement direction, so windows that do not move carry no heading.

use std::f64::consts::FRAC_PI_2;

use crate::error::SystemError;
use crate::system::{box_membership, Bound, LiftedOutput, LiftedSystem, Matrix, OutputWindow, Rollout, TerminalCoupling, Vector};

/// Displacements shorter than this have no well-defined heading.
pub const MIN_DISPLACEMENT: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct Unicycle {
    dt: f64,
    target: (f64, f64),
    state_bounds: Vec<Bound>,
    input_bounds: Vec<Bound>,
}

impl Unicycle {
    pub fn new(dt: f64, target: (f64, f64)) -> Self {
        Self {
            dt,
            target,
            state_bounds: vec![Bound::interval(0.0, f64::INFINITY), Bound::interval(f64::NEG_INFINITY, 10.0), Bound::interval(-FRAC_PI_2, FRAC_PI_2)],
            input_bounds: vec![Bound::interval(0.0, 5.0), Bound::Free],
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

    pub fn target(&self) -> (f64, f64) {
        self.target
    }

    fn displacement(y: &Matrix, c: usize) -> (f64, f64) {
        (y[(0, c + 1)] - y[(0, c)], y[(1, c + 1)] - y[(1, c)])
    }

    fn heading(d: (f64, f64)) -> Result<f64, SystemError> {
        if d.0.hypot(d.1) < MIN_DISPLACEMENT {
            return Err(SystemError::Domain { map: "unicycle heading", reason: format!("displacement ({:e}, {:e}) has no direction", d.0, d.1) });
        }
        Ok(d.1.atan2(d.0))
    }

    fn position_feasibility(&self, y: &Matrix, slack: f64) -> Result<(), String> {
        let b = &self.state_bounds;
        let (g, h) = self.state_rows();
        for c in 0..y.ncols() {
            let (px, py) = (y[(0, c)], y[(1, c)]);
            if !b[0].contains(px, slack) || !b[1].contains(py, slack) || g[(0, 0)] * px + g[(0, 1)] * py > h[0] + slack {
                return Err(format!("position ({px}, {py}) outside the admissible region"));
            }
        }
        for c in 0..y.ncols().saturating_sub(1) {
            let d = Self::displacement(y, c);
            if d.0 < -slack {
                return Err(format!("displacement {d:?} points backwards"));
            }
            let v = d.0.hypot(d.1) / self.dt;
            if !self.input_bounds[0].contains(v, slack) {
                return Err(format!("speed {v} outside the input box"));
            }
        }
        Ok(())
    }
}

impl LiftedSystem for Unicycle {
    fn name(&self) -> &str {
        "unicycle"
    }

    fn state_dim(&self) -> usize {
        3
    }

    fn output_dim(&self) -> usize {
        2
    }

    fn lift_depth(&self) -> usize {
        2
    }

    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector {
        let (s, c) = x[2].sin_cos();
        Vector::from_vec(vec![x[0] + self.dt * u[0] * c, x[1] + self.dt * u[0] * s, x[2] + self.dt * u[1]])
    }

    fn dynamics_jacobian(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        let (s, c) = x[2].sin_cos();
        let dt = self.dt;
        let jx = Matrix::from_row_slice(3, 3, &[1.0, 0.0, -dt * u[0] * s, 0.0, 1.0, dt * u[0] * c, 0.0, 0.0, 1.0]);
        let ju = Matrix::from_row_slice(3, 2, &[dt * c, 0.0, dt * s, 0.0, 0.0, dt]);
        (jx, ju)
    }

    fn output(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0], x[1]])
    }

    fn state_map(&self, w: &OutputWindow) -> Result<Vector, SystemError> {
        check_width(w.ncols(), 2)?;
        let th = Self::heading(Self::displacement(w, 0))?;
        Ok(Vector::from_vec(vec![w[(0, 0)], w[(1, 0)], th]))
    }

    fn state_map_jacobian(&self, w: &OutputWindow) -> Result<Matrix, SystemError> {
        check_width(w.ncols(), 2)?;
        let (dx, dy) = Self::displacement(w, 0);
        Self::heading((dx, dy))?;
        let n2 = dx * dx + dy * dy;
        let mut j = Matrix::zeros(3, 4);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        // d atan2(dy, dx) = (dx ddy - dy ddx) / n2
        j[(2, 0)] = dy / n2;
        j[(2, 2)] = -dy / n2;
        j[(2, 1)] = -dx / n2;
        j[(2, 3)] = dx / n2;
        Ok(j)
    }

    fn input_map(&self, y: &LiftedOutput) -> Result<Vector, SystemError> {
        check_width(y.ncols(), 3)?;
        let d0 = Self::displacement(y, 0);
        let d1 = Self::displacement(y, 1);
        let v = d0.0.hypot(d0.1) / self.dt;
        let w = wrap(Self::heading(d1)? - Self::heading(d0)?) / self.dt;
        Ok(Vector::from_vec(vec![v, w]))
    }

    fn input_map_jacobian(&self, y: &LiftedOutput) -> Result<Matrix, SystemError> {
        check_width(y.ncols(), 3)?;
        let d0 = Self::displacement(y, 0);
        let d1 = Self::displacement(y, 1);
        Self::heading(d0)?;
        Self::heading(d1)?;
        let dt = self.dt;
        let n0 = d0.0.hypot(d0.1);
        let mut j = Matrix::zeros(2, 6);
        // Column-major vec: (X0, Y0, X1, Y1, X2, Y2).
        j[(0, 0)] = -d0.0 / n0 / dt;
        j[(0, 1)] = -d0.1 / n0 / dt;
        j[(0, 2)] = d0.0 / n0 / dt;
        j[(0, 3)] = d0.1 / n0 / dt;
        let h = |d: (f64, f64)| {
            let n2 = d.0 * d.0 + d.1 * d.1;
            (-d.1 / n2, d.0 / n2)
        };
        let (a0, b0) = h(d0);
        let (a1, b1) = h(d1);
        j[(1, 0)] = a0 / dt;
        j[(1, 1)] = b0 / dt;
        j[(1, 2)] = (-a1 - a0) / dt;
        j[(1, 3)] = (-b1 - b0) / dt;
        j[(1, 4)] = a1 / dt;
        j[(1, 5)] = b1 / dt;
        Ok(j)
    }

    fn state_bounds(&self) -> Vec<Bound> {
        self.state_bounds.clone()
    }

    fn input_bounds(&self) -> Vec<Bound> {
        self.input_bounds.clone()
    }

    fn state_rows(&self) -> (Matrix, Vector) {
        (Matrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]), Vector::from_element(1, 2.0))
    }

    fn equilibrium_state(&self) -> Vector {
        Vector::from_vec(vec![self.target.0, self.target.1, 0.0])
    }

    fn equilibrium_input(&self) -> Vector {
        Vector::zeros(2)
    }

    fn free_state_components(&self) -> Vec<usize> {
        vec![2]
    }

    /// Position equality plus alignment of the heading with the first
    /// displacement; stays smooth when the window does not move.
    fn terminal_coupling(&self, x: &Vector, s: &Matrix) -> Result<TerminalCoupling, SystemError> {
        let ns = s.nrows() * s.ncols();
        let (s_th, c_th) = x[2].sin_cos();
        let (dx, dy) = Self::displacement(s, 0);
        let mut eq_x = Matrix::zeros(3, 3);
        let mut eq_s = Matrix::zeros(3, ns);
        eq_x[(0, 0)] = 1.0;
        eq_x[(1, 1)] = 1.0;
        eq_s[(0, 0)] = -1.0;
        eq_s[(1, 1)] = -1.0;
        // sin(th) dx - cos(th) dy
        eq_x[(2, 2)] = c_th * dx + s_th * dy;
        eq_s[(2, 0)] = -s_th;
        eq_s[(2, 2)] = s_th;
        eq_s[(2, 1)] = c_th;
        eq_s[(2, 3)] = -c_th;
        // -(cos(th) dx + sin(th) dy) <= 0
        let mut ineq_x = Matrix::zeros(1, 3);
        let mut ineq_s = Matrix::zeros(1, ns);
        ineq_x[(0, 2)] = s_th * dx - c_th * dy;
        ineq_s[(0, 0)] = c_th;
        ineq_s[(0, 2)] = -c_th;
        ineq_s[(0, 1)] = s_th;
        ineq_s[(0, 3)] = -s_th;
        Ok(TerminalCoupling {
            eq: Vector::from_vec(vec![x[0] - s[(0, 0)], x[1] - s[(1, 0)], s_th * dx - c_th * dy]),
            ineq: Vector::from_element(1, -(c_th * dx + s_th * dy)),
            eq_x,
            eq_s,
            ineq_x,
            ineq_s,
        })
    }

    fn input_between(&self, x: &Vector, y: &LiftedOutput) -> Result<Vector, SystemError> {
        let d0 = Self::displacement(y, 0);
        let d1 = Self::displacement(y, 1);
        let v = d0.0.hypot(d0.1) / self.dt;
        let w = match Self::heading(d1) {
            Ok(th) => wrap(th - x[2]) / self.dt,
            Err(_) => 0.0,
        };
        Ok(Vector::from_vec(vec![v, w]))
    }

    fn cost_reconstruction(&self, y: &LiftedOutput) -> Result<(Vector, Vector), SystemError> {
        let d0 = Self::displacement(y, 0);
        let th = Self::heading(d0).unwrap_or(0.0);
        let x = Vector::from_vec(vec![y[(0, 0)], y[(1, 0)], th]);
        let u = self.input_between(&x, y)?;
        Ok((x, u))
    }

    fn window_feasibility(&self, w: &OutputWindow, slack: f64) -> Result<(), String> {
        self.position_feasibility(w, slack)
    }

    fn lifted_feasibility(&self, y: &LiftedOutput, slack: f64) -> Result<(), String> {
        self.position_feasibility(y, slack)
    }

    fn state_feasibility(&self, x: &Vector, slack: f64) -> Result<(), String> {
        if !box_membership(&self.state_bounds, x, slack) {
            return Err(format!("state {:?} outside the state box", x.as_slice()));
        }
        if x[0] - x[1] > 2.0 + slack {
            return Err(format!("state {:?} violates x - y <= 2", x.as_slice()));
        }
        Ok(())
    }
}

fn check_width(got: usize, expected: usize) -> Result<(), SystemError> {
    if got == expected {
        Ok(())
    } else {
        Err(SystemError::Dimension { expected, got })
    }
}

fn wrap(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut r = a % two_pi;
    if r > std::f64::consts::PI {
        r -= two_pi;
    } else if r <= -std::f64::consts::PI {
        r += two_pi;
    }
    r
}

/// Drive up the left wall at unit speed, turn in one step at `(0, 9.9)`,
/// drive right along the top to the target, then stop.
pub fn seed_trajectory(sys: &Unicycle, hold: usize) -> Rollout {
    let dt = sys.dt;
    let x0 = Vector::from_vec(vec![0.0, 0.0, FRAC_PI_2]);
    let up = (sys.target.1 / dt).round() as usize;
    let across = (sys.target.0 / dt).round() as usize;
    let mut inputs = Vec::with_capacity(up + across + hold);
    for k in 0..up {
        let w = if k + 1 == up { -FRAC_PI_2 / dt } else { 0.0 };
        inputs.push(Vector::from_vec(vec![1.0, w]));
    }
    inputs.extend((0..across).map(|_| Vector::from_vec(vec![1.0, 0.0])));
    inputs.extend((0..hold).map(|_| Vector::zeros(2)));
    Rollout::from_inputs(sys, &x0, inputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{fd_jacobian, unvectorize, vectorize};

    fn uni() -> Unicycle {
        Unicycle::new(0.1, (5.0, 10.0))
    }

    #[test]
    fn diagonal_window_examples() {
        let sys = uni();
        let w = OutputWindow::from_matrix(Matrix::from_row_slice(2, 2, &[0.0, 0.1, 0.0, 0.1]));
        let x = sys.state_map(&w).unwrap();
        assert!((x - Vector::from_vec(vec![0.0, 0.0, std::f64::consts::FRAC_PI_4])).amax() < 1e-12);
        let y = LiftedOutput::from_matrix(Matrix::from_row_slice(2, 3, &[0.0, 0.1, 0.2, 0.0, 0.1, 0.2]));
        let u = sys.input_map(&y).unwrap();
        assert!((u[0] - 2f64.sqrt()).abs() < 1e-12 && u[1].abs() < 1e-12);
        let next = sys.dynamics(&Vector::zeros(3), &Vector::from_vec(vec![1.0, 0.0]));
        assert!((next - Vector::from_vec(vec![0.1, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn standing_still_has_no_heading() {
        let w = OutputWindow::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]));
        assert!(matches!(uni().state_map(&w), Err(SystemError::Domain { .. })));
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let sys = uni();
        let y = LiftedOutput::from_matrix(Matrix::from_row_slice(2, 3, &[1.0, 1.1, 1.25, 2.0, 2.05, 2.02]));
        let fd = fd_jacobian(|v| sys.input_map(&LiftedOutput::from_matrix(unvectorize(v.as_slice(), 2))), &vectorize(&y)).unwrap();
        assert!((fd - sys.input_map_jacobian(&y).unwrap()).amax() < 1e-5);
        let w = y.leading();
        let fd = fd_jacobian(|v| sys.state_map(&OutputWindow::from_matrix(unvectorize(v.as_slice(), 2))), &vectorize(&w)).unwrap();
        assert!((fd - sys.state_map_jacobian(&w).unwrap()).amax() < 1e-5);
    }

    #[test]
    fn terminal_coupling_jacobians_match_differences() {
        let sys = uni();
        let x = Vector::from_vec(vec![1.0, 2.0, 0.3]);
        let s = Matrix::from_row_slice(2, 3, &[1.1, 1.3, 1.4, 2.1, 2.2, 2.4]);
        let tc = sys.terminal_coupling(&x, &s).unwrap();
        let eq = |x: &Vector, s: &Matrix| {
            let t = sys.terminal_coupling(x, s).unwrap();
            Vector::from_iterator(4, t.eq.iter().chain(t.ineq.iter()).copied())
        };
        let jx = fd_jacobian(|v| Ok::<_, ()>(eq(v, &s)), &x).unwrap();
        let js = fd_jacobian(|v| Ok::<_, ()>(eq(&x, &unvectorize(v.as_slice(), 2))), &vectorize(&s)).unwrap();
        assert!((jx.rows(0, 3) - &tc.eq_x).amax() < 1e-7 && (jx.rows(3, 1) - &tc.ineq_x).amax() < 1e-7);
        assert!((js.rows(0, 3) - &tc.eq_s).amax() < 1e-7 && (js.rows(3, 1) - &tc.ineq_s).amax() < 1e-7);
    }

    #[test]
    fn seed_path_respects_the_corridor_and_ends_at_the_target() {
        let sys = uni();
        let seed = seed_trajectory(&sys, 3);
        for x in &seed.states {
            sys.state_feasibility(x, 1e-9).unwrap();
        }
        let last = seed.states.last().unwrap();
        assert!((last[0] - 5.0).abs() < 1e-9 && (last[1] - 10.0).abs() < 1e-9 && last[2].abs() < 1e-12);
    }
}
