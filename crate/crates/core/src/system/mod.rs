//! System abstraction: dynamics, outputs, and the maps that rebuild states and
//! inputs from short windows of outputs.

mod augmented;
mod bounds;
mod monotone;
mod window;

use nalgebra::{DMatrix, DVector};

pub use augmented::AugmentedSystem;
pub use bounds::{box_membership, box_violation, Bound};
pub use monotone::{check_monotone_on_lines, ComponentReport, MonotoneReport, Segment};
pub use window::{backward_shift, forward_shift, unvectorize, vectorize, LiftedOutput, OutputWindow};

use crate::error::SystemError;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Central-difference step used for every numerical derivative in the crate.
pub const FD_STEP: f64 = 1e-6;

/// Residuals of the terminal condition tying `x_N` to the terminal window,
/// with Jacobians in the state and in the column-major window vector.
#[derive(Debug, Clone)]
pub struct TerminalCoupling {
    pub eq: Vector,
    pub ineq: Vector,
    pub eq_x: Matrix,
    pub eq_s: Matrix,
    pub ineq_x: Matrix,
    pub ineq_s: Matrix,
}

/// Affine pieces of a piecewise-affine system: `x+ = A_i x + B u + c_i` on
/// the closed half-space `a_i . x <= b_i`.
#[derive(Debug, Clone)]
pub struct PwaMode {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Vector,
    pub region_normal: Vector,
    pub region_offset: f64,
}

impl PwaMode {
    pub fn contains(&self, x: &Vector, slack: f64) -> bool {
        self.region_normal.dot(x) <= self.region_offset + slack
    }

    pub fn step(&self, x: &Vector, u: &Vector) -> Vector {
        &self.a * x + &self.b * u + &self.c
    }
}

/// A discrete-time system whose state and input can be rebuilt from `R` and
/// `R + 1` consecutive outputs. Input dimension equals output dimension.
pub trait LiftedSystem: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn lift_depth(&self) -> usize;

    fn dynamics(&self, x: &Vector, u: &Vector) -> Vector;
    fn output(&self, x: &Vector) -> Vector;
    fn state_map(&self, w: &OutputWindow) -> Result<Vector, SystemError>;
    fn input_map(&self, y: &LiftedOutput) -> Result<Vector, SystemError>;

    fn state_bounds(&self) -> Vec<Bound>;
    fn input_bounds(&self) -> Vec<Bound>;
    fn equilibrium_state(&self) -> Vector;
    /// Input holding the equilibrium. Zero for unforced equilibria.
    fn equilibrium_input(&self) -> Vector;

    fn input_dim(&self) -> usize {
        self.output_dim()
    }

    /// `(df/dx, df/du)`.
    fn dynamics_jacobian(&self, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        let n = self.state_dim();
        let jx = fd_jacobian(|v| Ok::<_, SystemError>(self.dynamics(v, u)), x).expect("total map");
        let ju = fd_jacobian(|v| Ok::<_, SystemError>(self.dynamics(x, v)), u).expect("total map");
        debug_assert_eq!(jx.nrows(), n);
        (jx, ju)
    }

    /// Jacobian of the state map in the column-major window vector.
    fn state_map_jacobian(&self, w: &OutputWindow) -> Result<Matrix, SystemError> {
        let m = w.nrows();
        fd_jacobian(|v| self.state_map(&OutputWindow::from_matrix(unvectorize(v.as_slice(), m))), &vectorize(w))
    }

    fn input_map_jacobian(&self, y: &LiftedOutput) -> Result<Matrix, SystemError> {
        let m = y.nrows();
        fd_jacobian(|v| self.input_map(&LiftedOutput::from_matrix(unvectorize(v.as_slice(), m))), &vectorize(y))
    }

    /// Extra linear state constraints `G x <= g` beyond the box.
    fn state_rows(&self) -> (Matrix, Vector) {
        (Matrix::zeros(0, self.state_dim()), Vector::zeros(0))
    }

    /// State components left unconstrained by the terminal condition and by
    /// convergence tests (e.g. a motor angle that grows at steady speed).
    fn free_state_components(&self) -> Vec<usize> {
        Vec::new()
    }

    /// Removes output directions the problem is invariant to. Must be linear.
    fn normalize_window(&self, _w: &mut Matrix) {}

    /// Equilibrium state consistent with the free components of output `y`.
    fn anchored_equilibrium(&self, _y: &Vector) -> Vector {
        self.equilibrium_state()
    }

    /// Terminal condition `x_N ~ F_x(s)`; `s` has at least `R` columns and only
    /// the first `R` are used. Default: equality on non-free components.
    fn terminal_coupling(&self, x: &Vector, s: &Matrix) -> Result<TerminalCoupling, SystemError> {
        let r = self.lift_depth();
        let m = self.output_dim();
        let n = self.state_dim();
        let lead = OutputWindow::from_matrix(s.columns(0, r).into_owned());
        let fx = self.state_map(&lead)?;
        let jac = self.state_map_jacobian(&lead)?;
        let free = self.free_state_components();
        let rows: Vec<usize> = (0..n).filter(|i| !free.contains(i)).collect();
        let mut eq = Vector::zeros(rows.len());
        let mut eq_x = Matrix::zeros(rows.len(), n);
        let mut eq_s = Matrix::zeros(rows.len(), m * s.ncols());
        for (k, &i) in rows.iter().enumerate() {
            eq[k] = x[i] - fx[i];
            eq_x[(k, i)] = 1.0;
            for c in 0..m * r {
                eq_s[(k, c)] = -jac[(i, c)];
            }
        }
        Ok(TerminalCoupling { eq, ineq: Vector::zeros(0), eq_x, eq_s, ineq_x: Matrix::zeros(0, n), ineq_s: Matrix::zeros(0, m * s.ncols()) })
    }

    /// Input taking `x` along the lifted output `y`. Differs from
    /// `input_map` only where the state map is singular.
    fn input_between(&self, _x: &Vector, y: &LiftedOutput) -> Result<Vector, SystemError> {
        self.input_map(y)
    }

    /// State and input used to price a lifted output.
    fn cost_reconstruction(&self, y: &LiftedOutput) -> Result<(Vector, Vector), SystemError> {
        Ok((self.state_map(&y.leading())?, self.input_map(y)?))
    }

    /// Checks that a stored window corresponds to an admissible state.
    fn window_feasibility(&self, w: &OutputWindow, slack: f64) -> Result<(), String> {
        let x = self.state_map(w).map_err(|e| e.to_string())?;
        self.state_feasibility(&x, slack)
    }

    /// Checks that a lifted output corresponds to an admissible state-input pair.
    fn lifted_feasibility(&self, y: &LiftedOutput, slack: f64) -> Result<(), String> {
        self.window_feasibility(&y.leading(), slack)?;
        let u = self.input_map(y).map_err(|e| e.to_string())?;
        if !box_membership(&self.input_bounds(), &u, slack) {
            return Err(format!("input {:?} outside the input box", u.as_slice()));
        }
        Ok(())
    }

    fn state_feasibility(&self, x: &Vector, slack: f64) -> Result<(), String> {
        if !box_membership(&self.state_bounds(), x, slack) {
            return Err(format!("state {:?} outside the state box", x.as_slice()));
        }
        let (g, h) = self.state_rows();
        if g.nrows() > 0 {
            let v = &g * x - &h;
            if v.max() > slack {
                return Err(format!("state {:?} violates a linear state constraint by {:e}", x.as_slice(), v.max()));
            }
        }
        Ok(())
    }

    fn pwa_modes(&self) -> Option<&[PwaMode]> {
        None
    }
}

/// `[h(x), h(f(x, u_1)), ...]`: the window generated from `x` by `R - 1` inputs.
pub fn window_from_rollout(sys: &dyn LiftedSystem, x: &Vector, inputs: &[Vector]) -> Result<OutputWindow, SystemError> {
    let r = sys.lift_depth();
    if inputs.len() != r - 1 {
        return Err(SystemError::Dimension { expected: r - 1, got: inputs.len() });
    }
    Ok(OutputWindow::from_columns(&rollout_outputs(sys, x, inputs)))
}

/// The lifted output generated from `x` by `R` inputs.
pub fn lifted_from_rollout(sys: &dyn LiftedSystem, x: &Vector, inputs: &[Vector]) -> Result<LiftedOutput, SystemError> {
    let r = sys.lift_depth();
    if inputs.len() != r {
        return Err(SystemError::Dimension { expected: r, got: inputs.len() });
    }
    Ok(LiftedOutput::from_columns(&rollout_outputs(sys, x, inputs)))
}

fn rollout_outputs(sys: &dyn LiftedSystem, x: &Vector, inputs: &[Vector]) -> Vec<Vector> {
    let mut cols = Vec::with_capacity(inputs.len() + 1);
    let mut state = x.clone();
    cols.push(sys.output(&state));
    for u in inputs {
        state = sys.dynamics(&state, u);
        cols.push(sys.output(&state));
    }
    cols
}

/// States `x_0..x_T` and the inputs `u_0..u_{T-1}` between them.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Rollout {
    pub states: Vec<Vector>,
    pub inputs: Vec<Vector>,
}

impl Rollout {
    pub fn from_inputs(sys: &dyn LiftedSystem, x0: &Vector, inputs: Vec<Vector>) -> Self {
        Self { states: simulate(sys, x0, &inputs), inputs }
    }

    pub fn outputs(&self, sys: &dyn LiftedSystem) -> Vec<Vector> {
        self.states.iter().map(|x| sys.output(x)).collect()
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// States `x_0..x_T` under the input sequence.
pub fn simulate(sys: &dyn LiftedSystem, x0: &Vector, inputs: &[Vector]) -> Vec<Vector> {
    let mut out = Vec::with_capacity(inputs.len() + 1);
    out.push(x0.clone());
    for u in inputs {
        let next = sys.dynamics(out.last().unwrap(), u);
        out.push(next);
    }
    out
}

/// Equilibrium window with the free output directions normalized away.
pub fn equilibrium_window(sys: &dyn LiftedSystem, width: usize) -> Matrix {
    let mut x = sys.equilibrium_state();
    let u = sys.equilibrium_input();
    let mut cols = Vec::with_capacity(width);
    for _ in 0..width {
        cols.push(sys.output(&x));
        x = sys.dynamics(&x, &u);
    }
    let mut w = Matrix::from_columns(&cols);
    sys.normalize_window(&mut w);
    w
}

/// Central-difference Jacobian with step [`FD_STEP`].
pub fn fd_jacobian<E>(f: impl Fn(&Vector) -> Result<Vector, E>, x: &Vector) -> Result<Matrix, E> {
    let f0 = f(x)?;
    let mut jac = Matrix::zeros(f0.len(), x.len());
    let mut xp = x.clone();
    for j in 0..x.len() {
        let orig = xp[j];
        xp[j] = orig + FD_STEP;
        let fp = f(&xp)?;
        xp[j] = orig - FD_STEP;
        let fm = f(&xp)?;
        xp[j] = orig;
        jac.set_column(j, &((fp - fm) / (2.0 * FD_STEP)));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_jacobian_of_linear_map_is_exact() {
        let a = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let j = fd_jacobian(|v| Ok::<_, ()>(&a * v), &Vector::from_vec(vec![0.3, -0.7])).unwrap();
        assert!((j - a).amax() < 1e-8);
    }
}
