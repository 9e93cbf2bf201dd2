//! The finite-horizon problem as a smooth program over
//! `z = [u_0..u_{N-1}, x_1..x_N, s, lambda]`.
//!
//! `s` is the column-major terminal window, tied to the weights by
//! `s = Y lambda`. Keeping it explicit leaves every nonlinear term inside
//! the leading block and lets `lambda` enter linearly.

use crate::cost::QuadraticStageCost;
use crate::error::SystemError;
use crate::qp::QuadraticProgram;
use crate::sqp::NonlinearProgram;
use crate::system::{unvectorize, Bound, LiftedSystem, Matrix, PwaMode, TerminalCoupling, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub n: usize,
    pub m: usize,
    pub horizon: usize,
    pub width: usize,
    pub points: usize,
}

impl Layout {
    pub fn u(&self, k: usize) -> usize {
        k * self.m
    }

    /// Offset of `x_k`, `1 <= k <= N`.
    pub fn x(&self, k: usize) -> usize {
        debug_assert!(k >= 1 && k <= self.horizon);
        self.horizon * self.m + (k - 1) * self.n
    }

    pub fn s(&self) -> usize {
        self.horizon * (self.m + self.n)
    }

    pub fn lambda(&self) -> usize {
        self.s() + self.m * self.width
    }

    pub fn dim(&self) -> usize {
        self.lambda() + self.points
    }
}

/// One instance of the horizon problem for a fixed initial state.
pub struct HorizonProblem<'a> {
    pub sys: &'a dyn LiftedSystem,
    pub cost: &'a QuadraticStageCost,
    /// Stored windows as columns, `(m * width) x K`.
    pub windows: &'a Matrix,
    pub costs: &'a Vector,
    pub x0: Vector,
    pub layout: Layout,
    /// Fixed PWA mode per step; `None` uses the system dynamics.
    pub modes: Option<Vec<usize>>,
    state_rows: (Matrix, Vector),
}

impl<'a> HorizonProblem<'a> {
    pub fn new(
        sys: &'a dyn LiftedSystem,
        cost: &'a QuadraticStageCost,
        windows: &'a Matrix,
        costs: &'a Vector,
        x0: Vector,
        horizon: usize,
        width: usize,
    ) -> Self {
        let layout = Layout { n: sys.state_dim(), m: sys.input_dim(), horizon, width, points: costs.len() };
        let state_rows = sys.state_rows();
        Self { sys, cost, windows, costs, x0, layout, modes: None, state_rows }
    }

    pub fn with_modes(mut self, modes: Vec<usize>) -> Self {
        assert_eq!(modes.len(), self.layout.horizon);
        self.modes = Some(modes);
        self
    }

    fn pwa(&self) -> Option<(&[PwaMode], &[usize])> {
        match (&self.modes, self.sys.pwa_modes()) {
            (Some(seq), Some(table)) => Some((table, seq.as_slice())),
            _ => None,
        }
    }

    pub fn state(&self, z: &Vector, k: usize) -> Vector {
        if k == 0 {
            self.x0.clone()
        } else {
            z.rows(self.layout.x(k), self.layout.n).into_owned()
        }
    }

    pub fn input(&self, z: &Vector, k: usize) -> Vector {
        z.rows(self.layout.u(k), self.layout.m).into_owned()
    }

    pub fn terminal(&self, z: &Vector) -> Matrix {
        let l = &self.layout;
        unvectorize(z.rows(l.s(), l.m * l.width).as_slice(), l.m)
    }

    pub fn weights<'z>(&self, z: &'z Vector) -> nalgebra::DVectorView<'z, f64> {
        z.rows(self.layout.lambda(), self.layout.points)
    }

    fn step(&self, k: usize, x: &Vector, u: &Vector) -> Vector {
        match self.pwa() {
            Some((table, seq)) => table[seq[k]].step(x, u),
            None => self.sys.dynamics(x, u),
        }
    }

    fn step_jacobian(&self, k: usize, x: &Vector, u: &Vector) -> (Matrix, Matrix) {
        match self.pwa() {
            Some((table, seq)) => (table[seq[k]].a.clone(), table[seq[k]].b.clone()),
            None => self.sys.dynamics_jacobian(x, u),
        }
    }

    fn coupling(&self, z: &Vector) -> Result<TerminalCoupling, SystemError> {
        self.sys.terminal_coupling(&self.state(z, self.layout.horizon), &self.terminal(z))
    }

    pub fn num_equalities(&self) -> usize {
        let l = &self.layout;
        let tc = self.coupling_shape();
        l.horizon * l.n + tc.0 + l.m * l.width + 1
    }

    fn coupling_shape(&self) -> (usize, usize) {
        let l = &self.layout;
        let eq = self.sys.equilibrium_state();
        let s = Matrix::from_fn(l.m, l.width, |r, c| (r + 2 * c) as f64 + 1.0);
        match self.sys.terminal_coupling(&eq, &s) {
            Ok(tc) => (tc.eq.len(), tc.ineq.len()),
            Err(_) => (l.n - self.sys.free_state_components().len(), 0),
        }
    }

    /// Objective, constraints and bounds as an exact QP in `z`. Only valid
    /// when every map is affine (fixed PWA modes); returns the constant
    /// objective offset alongside.
    pub fn as_qp(&self) -> Result<(QuadraticProgram, f64), SystemError> {
        let z0 = Vector::zeros(self.layout.dim());
        let h = self.objective_hessian(&z0).expect("quadratic objective");
        let (lo, hi) = self.bounds();
        let qp = QuadraticProgram::new(self.layout.dim())
            .with_hessian(h)
            .with_linear(self.gradient(&z0)?)
            .with_equalities(self.equality_jacobian(&z0)?, -self.equalities(&z0)?)
            .with_inequalities(self.inequality_jacobian(&z0)?, -self.inequalities(&z0)?)
            .with_bounds(lo, hi);
        Ok((qp, self.objective(&z0)?))
    }

    /// Largest violation of constraints and bounds at `z`.
    pub fn violation(&self, z: &Vector) -> Result<f64, SystemError> {
        let mut v = self.equalities(z)?.amax();
        let ci = self.inequalities(z)?;
        if !ci.is_empty() {
            v = v.max(ci.max());
        }
        let (lo, hi) = self.bounds();
        for i in 0..z.len() {
            v = v.max(lo[i] - z[i]).max(z[i] - hi[i]);
        }
        Ok(v.max(0.0))
    }
}

fn bound_pair(b: &Bound) -> (f64, f64) {
    (b.lower(), b.upper())
}

impl NonlinearProgram for HorizonProblem<'_> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn hessian_block(&self) -> usize {
        self.layout.lambda()
    }

    fn objective(&self, z: &Vector) -> Result<f64, SystemError> {
        let l = &self.layout;
        let mut f = 0.0;
        for k in 0..l.horizon {
            f += self.cost.eval(&self.state(z, k), &self.input(z, k));
        }
        Ok(f + self.costs.dot(&self.weights(z)))
    }

    fn gradient(&self, z: &Vector) -> Result<Vector, SystemError> {
        let l = &self.layout;
        let mut g = Vector::zeros(l.dim());
        for k in 0..l.horizon {
            g.rows_mut(l.u(k), l.m).copy_from(&self.cost.grad_u(&self.input(z, k)));
            if k > 0 {
                g.rows_mut(l.x(k), l.n).copy_from(&self.cost.grad_x(&self.state(z, k)));
            }
        }
        g.rows_mut(l.lambda(), l.points).copy_from(self.costs);
        Ok(g)
    }

    fn objective_hessian(&self, _z: &Vector) -> Option<Matrix> {
        let l = &self.layout;
        let nh = l.lambda();
        let mut h = Matrix::zeros(nh, nh);
        let hu = self.cost.hess_u();
        let hx = self.cost.hess_x();
        for k in 0..l.horizon {
            h.view_mut((l.u(k), l.u(k)), (l.m, l.m)).copy_from(&hu);
            if k > 0 {
                h.view_mut((l.x(k), l.x(k)), (l.n, l.n)).copy_from(&hx);
            }
        }
        Some(h)
    }

    fn equalities(&self, z: &Vector) -> Result<Vector, SystemError> {
        let l = &self.layout;
        let mut out = Vec::with_capacity(self.num_equalities());
        for k in 0..l.horizon {
            let r = self.state(z, k + 1) - self.step(k, &self.state(z, k), &self.input(z, k));
            out.extend(r.iter());
        }
        out.extend(self.coupling(z)?.eq.iter());
        let s = z.rows(l.s(), l.m * l.width);
        let r = s - self.windows * self.weights(z);
        out.extend(r.iter());
        out.push(self.weights(z).sum() - 1.0);
        Ok(Vector::from_vec(out))
    }

    fn equality_jacobian(&self, z: &Vector) -> Result<Matrix, SystemError> {
        let l = &self.layout;
        let tc = self.coupling(z)?;
        let rows = l.horizon * l.n + tc.eq.len() + l.m * l.width + 1;
        let mut j = Matrix::zeros(rows, l.dim());
        for k in 0..l.horizon {
            let r0 = k * l.n;
            let (jx, ju) = self.step_jacobian(k, &self.state(z, k), &self.input(z, k));
            for i in 0..l.n {
                j[(r0 + i, l.x(k + 1) + i)] = 1.0;
            }
            if k > 0 {
                j.view_mut((r0, l.x(k)), (l.n, l.n)).copy_from(&(-jx));
            }
            j.view_mut((r0, l.u(k)), (l.n, l.m)).copy_from(&(-ju));
        }
        let r0 = l.horizon * l.n;
        let ne = tc.eq.len();
        j.view_mut((r0, l.x(l.horizon)), (ne, l.n)).copy_from(&tc.eq_x);
        j.view_mut((r0, l.s()), (ne, l.m * l.width)).copy_from(&tc.eq_s);
        let r0 = r0 + ne;
        let ns = l.m * l.width;
        for i in 0..ns {
            j[(r0 + i, l.s() + i)] = 1.0;
        }
        j.view_mut((r0, l.lambda()), (ns, l.points)).copy_from(&(-self.windows));
        let r0 = r0 + ns;
        for c in 0..l.points {
            j[(r0, l.lambda() + c)] = 1.0;
        }
        Ok(j)
    }

    fn inequalities(&self, z: &Vector) -> Result<Vector, SystemError> {
        let l = &self.layout;
        let mut out: Vec<f64> = self.coupling(z)?.ineq.iter().copied().collect();
        let (g, h) = &self.state_rows;
        if g.nrows() > 0 {
            for k in 1..=l.horizon {
                out.extend((g * self.state(z, k) - h).iter());
            }
        }
        if let Some((table, seq)) = self.pwa() {
            for k in 0..l.horizon {
                let mode = &table[seq[k]];
                out.push(mode.region_normal.dot(&self.state(z, k)) - mode.region_offset);
            }
        }
        Ok(Vector::from_vec(out))
    }

    fn inequality_jacobian(&self, z: &Vector) -> Result<Matrix, SystemError> {
        let l = &self.layout;
        let tc = self.coupling(z)?;
        let (g, _) = &self.state_rows;
        let ni = tc.ineq.len();
        let ng = g.nrows() * l.horizon;
        let np = if self.pwa().is_some() { l.horizon } else { 0 };
        let mut j = Matrix::zeros(ni + ng + np, l.dim());
        j.view_mut((0, l.x(l.horizon)), (ni, l.n)).copy_from(&tc.ineq_x);
        j.view_mut((0, l.s()), (ni, l.m * l.width)).copy_from(&tc.ineq_s);
        for k in 1..=l.horizon {
            if g.nrows() > 0 {
                j.view_mut((ni + (k - 1) * g.nrows(), l.x(k)), (g.nrows(), l.n)).copy_from(g);
            }
        }
        if let Some((table, seq)) = self.pwa() {
            for k in 1..l.horizon {
                let normal = &table[seq[k]].region_normal;
                for i in 0..l.n {
                    j[(ni + ng + k, l.x(k) + i)] = normal[i];
                }
            }
        }
        Ok(j)
    }

    fn bounds(&self) -> (Vector, Vector) {
        let l = &self.layout;
        let mut lo = Vector::from_element(l.dim(), f64::NEG_INFINITY);
        let mut hi = Vector::from_element(l.dim(), f64::INFINITY);
        let ub = self.sys.input_bounds();
        let xb = self.sys.state_bounds();
        for k in 0..l.horizon {
            for (i, b) in ub.iter().enumerate() {
                (lo[l.u(k) + i], hi[l.u(k) + i]) = bound_pair(b);
            }
            for (i, b) in xb.iter().enumerate() {
                (lo[l.x(k + 1) + i], hi[l.x(k + 1) + i]) = bound_pair(b);
            }
        }
        for c in 0..l.points {
            lo[l.lambda() + c] = 0.0;
        }
        (lo, hi)
    }
}
