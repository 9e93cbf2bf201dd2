//! Bilinear DC motor: armature current `I`, angle `theta`, speed `omega`;
//! inputs field current `u1` and armature voltage `u2`.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, SystemError};
use crate::system::{Bound, LiftedOutput, LiftedSystem, Matrix, OutputWindow, Rollout, Vector};

/// Smallest armature current for which the field-current map is defined.
pub const MIN_CURRENT: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcParams {
    pub inductance: f64,
    pub resistance: f64,
    pub torque_constant: f64,
    pub inertia: f64,
    pub damping: f64,
    pub dt: f64,
}

impl Default for DcParams {
    fn default() -> Self {
        Self { inductance: 0.314, resistance: 12.345, torque_constant: 0.253, inertia: 0.00441, damping: 0.00732, dt: 0.01 }
    }
}

impl DcParams {
    fn a(&self) -> f64 {
        1.0 - self.dt * self.resistance / self.inductance
    }

    fn b(&self) -> f64 {
        1.0 - self.dt * self.damping / self.inertia
    }

    fn ki(&self) -> f64 {
        self.torque_constant * self.dt / self.inductance
    }

    fn kw(&self) -> f64 {
        self.torque_constant * self.dt / self.inertia
    }
}

#[derive(Debug, Clone)]
pub struct DcMotor {
    p: DcParams,
    current: f64,
    speed: f64,
    state_bounds: Vec<Bound>,
    input_bounds: Vec<Bound>,
}

impl DcMotor {
    /// Motor regulated to `speed` with armature current `current` at rest.
    pub fn new(p: DcParams, current: f64, speed: f64) -> Self {
        Self {
            p,
            current,
            speed,
            state_bounds: vec![Bound::interval(0.0, 5.0), Bound::Free, Bound::interval(-10.0, 10.0)],
            input_bounds: vec![Bound::interval(-5.0, 5.0), Bound::Free],
        }
    }

    pub fn with_bounds(mut self, state: Vec<Bound>, input: Vec<Bound>) -> Self {
        self.state_bounds = state;
        self.input_bounds = input;
        self
    }

    pub fn params(&self) -> &DcParams {
        &self.p
    }

    pub fn set_point(&self) -> f64 {
        self.speed
    }

    /// Inputs holding `(i, *, omega)` fixed.
    pub fn holding_input(&self, i: f64, omega: f64) -> Vector {
        let p = &self.p;
        let u1 = p.damping * omega / (p.torque_constant * i);
        Vector::from_vec(vec![u1, p.resistance * i + p.torque_constant * u1 * omega])
    }
}

impl LiftedSystem for DcMotor {
    fn name(&self) -> &str {
        "dc_motor"
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
        let p = &self.p;
        let (i, th, w) = (x[0], x[1], x[2]);
        Vector::from_vec(vec![p.a() * i - p.ki() * u[0] * w + p.dt / p.inductance * u[1], th + p.dt * w, p.b() * w + p.kw() * u[0] * i])
    }

    fn dynamics_jacobian(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        let p = &self.p;
        let jx = Matrix::from_row_slice(3, 3, &[p.a(), 0.0, -p.ki() * u[0], 0.0, 1.0, p.dt, p.kw() * u[0], 0.0, p.b()]);
        let ju = Matrix::from_row_slice(3, 2, &[-p.ki() * x[2], p.dt / p.inductance, 0.0, 0.0, p.kw() * x[0], 0.0]);
        (jx, ju)
    }

    fn output(&self, x: &Vector) -> Vector {
        Vector::from_vec(vec![x[0], x[1]])
    }

    fn state_map(&self, w: &OutputWindow) -> Result<Vector, SystemError> {
        check_width(w.ncols(), 2)?;
        Ok(Vector::from_vec(vec![w[(0, 0)], w[(1, 0)], (w[(1, 1)] - w[(1, 0)]) / self.p.dt]))
    }

    fn state_map_jacobian(&self, w: &OutputWindow) -> Result<Matrix, SystemError> {
        check_width(w.ncols(), 2)?;
        let dt = self.p.dt;
        let mut j = Matrix::zeros(3, 4);
        j[(0, 0)] = 1.0;
        j[(1, 1)] = 1.0;
        j[(2, 1)] = -1.0 / dt;
        j[(2, 3)] = 1.0 / dt;
        Ok(j)
    }

    fn input_map(&self, y: &LiftedOutput) -> Result<Vector, SystemError> {
        check_width(y.ncols(), 3)?;
        let p = &self.p;
        let (i0, i1) = (y[(0, 0)], y[(0, 1)]);
        let (t0, t1, t2) = (y[(1, 0)], y[(1, 1)], y[(1, 2)]);
        if i0 <= MIN_CURRENT {
            return Err(SystemError::Domain { map: "dc_motor input map", reason: format!("armature current {i0:e} is not positive") });
        }
        let w0 = (t1 - t0) / p.dt;
        let u1 = (t2 - (1.0 + p.b()) * t1 + p.b() * t0) / p.dt / (p.kw() * i0);
        let u2 = p.inductance / p.dt * (i1 - p.a() * i0) + p.torque_constant * u1 * w0;
        Ok(Vector::from_vec(vec![u1, u2]))
    }

    fn input_map_jacobian(&self, y: &LiftedOutput) -> Result<Matrix, SystemError> {
        check_width(y.ncols(), 3)?;
        let p = &self.p;
        let (i0, t0, t1, t2) = (y[(0, 0)], y[(1, 0)], y[(1, 1)], y[(1, 2)]);
        if i0 <= MIN_CURRENT {
            return Err(SystemError::Domain { map: "dc_motor input map", reason: format!("armature current {i0:e} is not positive") });
        }
        let b = p.b();
        let num = (t2 - (1.0 + b) * t1 + b * t0) / p.dt;
        let den = p.kw() * i0;
        let u1 = num / den;
        let w0 = (t1 - t0) / p.dt;
        // Column-major vec: (I0, t0, I1, t1, I2, t2).
        let mut du1 = [0.0; 6];
        du1[0] = -u1 / i0;
        du1[1] = b / p.dt / den;
        du1[3] = -(1.0 + b) / p.dt / den;
        du1[5] = 1.0 / p.dt / den;
        let mut dw0 = [0.0; 6];
        dw0[1] = -1.0 / p.dt;
        dw0[3] = 1.0 / p.dt;
        let mut j = Matrix::zeros(2, 6);
        for c in 0..6 {
            j[(0, c)] = du1[c];
            j[(1, c)] = p.torque_constant * (du1[c] * w0 + u1 * dw0[c]);
        }
        j[(1, 0)] += -p.inductance / p.dt * p.a();
        j[(1, 2)] += p.inductance / p.dt;
        Ok(j)
    }

    fn state_bounds(&self) -> Vec<Bound> {
        self.state_bounds.clone()
    }

    fn input_bounds(&self) -> Vec<Bound> {
        self.input_bounds.clone()
    }

    fn equilibrium_state(&self) -> Vector {
        Vector::from_vec(vec![self.current, 0.0, self.speed])
    }

    fn equilibrium_input(&self) -> Vector {
        self.holding_input(self.current, self.speed)
    }

    fn free_state_components(&self) -> Vec<usize> {
        vec![1]
    }

    fn normalize_window(&self, w: &mut Matrix) {
        let t0 = w[(1, 0)];
        for c in 0..w.ncols() {
            w[(1, c)] -= t0;
        }
    }

    fn anchored_equilibrium(&self, y: &Vector) -> Vector {
        Vector::from_vec(vec![self.current, y[1], self.speed])
    }
}

fn check_width(got: usize, expected: usize) -> Result<(), SystemError> {
    if got == expected {
        Ok(())
    } else {
        Err(SystemError::Dimension { expected, got })
    }
}

/// Speed ramp from `x0` (at the regulated current) to the set point along a
/// smoothstep profile over `ramp` steps, then `hold` steps at the holding
/// input. Inputs come from the flat maps and are checked by simulation.
pub fn seed_trajectory(sys: &DcMotor, x0: &Vector, ramp: usize, hold: usize) -> Result<Rollout, ConfigError> {
    let dt = sys.p.dt;
    let i = sys.current;
    let target = sys.speed;
    let w0 = x0[2];
    let speed = |k: usize| {
        let s = (k.min(ramp) as f64) / ramp as f64;
        w0 + (target - w0) * s * s * (3.0 - 2.0 * s)
    };
    let total = ramp + hold;
    let mut theta = vec![x0[1]];
    for k in 0..=total {
        theta.push(theta[k] + dt * speed(k));
    }
    let mut inputs = Vec::with_capacity(total);
    for k in 0..total {
        let y = LiftedOutput::from_matrix(Matrix::from_row_slice(2, 3, &[i, i, i, theta[k], theta[k + 1], theta[k + 2]]));
        inputs.push(sys.input_map(&y).map_err(|e| ConfigError::Seed(e.to_string()))?);
    }
    let roll = Rollout::from_inputs(sys, x0, inputs);
    for (k, x) in roll.states.iter().enumerate() {
        let expect = [i, theta[k], speed(k)];
        let err = (0..3).map(|c| (x[c] - expect[c]).abs()).fold(0.0, f64::max);
        if err > 1e-8 * (1.0 + theta[k].abs()) {
            return Err(ConfigError::Seed(format!("speed ramp diverges from its flat reconstruction at step {k} by {err:e}")));
        }
    }
    Ok(roll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{fd_jacobian, lifted_from_rollout, vectorize};

    fn motor() -> DcMotor {
        DcMotor::new(DcParams::default(), 0.5, 6.0)
    }

    #[test]
    fn window_state_example() {
        let w = OutputWindow::from_matrix(Matrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 0.06]));
        let x = motor().state_map(&w).unwrap();
        assert!((x - Vector::from_vec(vec![1.0, 0.0, 6.0])).amax() < 1e-12);
    }

    #[test]
    fn holding_input_is_an_equilibrium_up_to_the_angle() {
        let sys = motor();
        let x = sys.equilibrium_state();
        let next = sys.dynamics(&x, &sys.equilibrium_input());
        assert!((next[0] - x[0]).abs() < 1e-12 && (next[2] - x[2]).abs() < 1e-12);
        assert!((next[1] - 0.06).abs() < 1e-12);
    }

    #[test]
    fn input_map_inverts_the_dynamics() {
        let sys = motor();
        let x = Vector::from_vec(vec![1.2, 0.4, -3.0]);
        let u = Vector::from_vec(vec![2.0, -1.5]);
        let y = lifted_from_rollout(&sys, &x, &[u.clone(), Vector::from_vec(vec![0.1, 0.2])]).unwrap();
        assert!((sys.state_map(&y.leading()).unwrap() - &x).amax() < 1e-12);
        assert!((sys.input_map(&y).unwrap() - &u).amax() < 1e-9);
    }

    #[test]
    fn zero_current_is_outside_the_domain() {
        let y = LiftedOutput::from_matrix(Matrix::zeros(2, 3));
        assert!(matches!(motor().input_map(&y), Err(SystemError::Domain { .. })));
    }

    #[test]
    fn analytic_jacobians_match_differences() {
        let sys = motor();
        let y = LiftedOutput::from_matrix(Matrix::from_row_slice(2, 3, &[0.7, 0.8, 0.9, 0.1, 0.15, 0.22]));
        let fd = fd_jacobian(|v| sys.input_map(&LiftedOutput::from_matrix(crate::system::unvectorize(v.as_slice(), 2))), &vectorize(&y)).unwrap();
        let an = sys.input_map_jacobian(&y).unwrap();
        assert!((fd - an).amax() < 1e-5);
        let x = Vector::from_vec(vec![0.7, 0.1, 4.0]);
        let u = Vector::from_vec(vec![0.3, 6.0]);
        let (jx, ju) = sys.dynamics_jacobian(&x, &u);
        let fx = fd_jacobian(|v| Ok::<_, ()>(sys.dynamics(v, &u)), &x).unwrap();
        let fu = fd_jacobian(|v| Ok::<_, ()>(sys.dynamics(&x, v)), &u).unwrap();
        assert!((jx - fx).amax() < 1e-8 && (ju - fu).amax() < 1e-8);
    }

    #[test]
    fn seed_ramp_reaches_the_set_point() {
        let sys = motor();
        let seed = seed_trajectory(&sys, &Vector::from_vec(vec![0.5, 0.0, 0.0]), 100, 20).unwrap();
        let last = seed.states.last().unwrap();
        assert!((last[2] - 6.0).abs() < 1e-9 && (last[0] - 0.5).abs() < 1e-9);
        assert!(seed.inputs.iter().all(|u| u[0].abs() <= 5.0));
    }

    #[test]
    fn normalization_removes_the_angle_offset() {
        let sys = motor();
        let mut w = Matrix::from_row_slice(2, 2, &[0.5, 0.5, 3.0, 3.06]);
        sys.normalize_window(&mut w);
        assert_eq!(w[(1, 0)], 0.0);
        assert!((w[(1, 1)] - 0.06).abs() < 1e-12);
    }
}
