use std::sync::Arc;

use super::{Bound, LiftedOutput, LiftedSystem, OutputWindow, Vector};
use crate::error::SystemError;

/// Base system extended with the compensator `u+ = alpha u + beta z`.
/// State `(x, u)`, input `z`, lift depth `R + 1`.
pub struct AugmentedSystem {
    base: Arc<dyn LiftedSystem>,
    alpha: f64,
    beta: f64,
    name: String,
}

impl AugmentedSystem {
    pub fn new(base: Arc<dyn LiftedSystem>, alpha: f64, beta: f64) -> Result<Self, SystemError> {
        if beta == 0.0 || !beta.is_finite() || !alpha.is_finite() {
            return Err(SystemError::Domain { map: "compensator", reason: format!("beta must be finite and nonzero, got {beta}") });
        }
        let name = format!("{}-augmented", base.name());
        Ok(Self { base, alpha, beta, name })
    }

    /// `alpha = 0`, `beta = 1`: the input is the next base input.
    pub fn with_default_compensator(base: Arc<dyn LiftedSystem>) -> Self {
        Self::new(base, 0.0, 1.0).expect("beta = 1")
    }

    pub fn base(&self) -> &dyn LiftedSystem {
        self.base.as_ref()
    }

    pub fn compensator(&self) -> (f64, f64) {
        (self.alpha, self.beta)
    }

    fn split(&self, x: &Vector) -> (Vector, Vector) {
        let n = self.base.state_dim();
        (x.rows(0, n).into_owned(), x.rows(n, self.base.input_dim()).into_owned())
    }
}

impl LiftedSystem for AugmentedSystem {
    fn name(&self) -> &str {
        &self.name
    }

    fn state_dim(&self) -> usize {
        self.base.state_dim() + self.base.input_dim()
    }

    fn output_dim(&self) -> usize {
        self.base.output_dim()
    }

    fn lift_depth(&self) -> usize {
        self.base.lift_depth() + 1
    }

    fn dynamics(&self, x: &Vector, z: &Vector) -> Vector {
        let (xb, u) = self.split(x);
        let next_x = self.base.dynamics(&xb, &u);
        let next_u = &u * self.alpha + z * self.beta;
        Vector::from_iterator(self.state_dim(), next_x.iter().chain(next_u.iter()).copied())
    }

    fn output(&self, x: &Vector) -> Vector {
        self.base.output(&self.split(x).0)
    }

    fn state_map(&self, w: &OutputWindow) -> Result<Vector, SystemError> {
        let lifted = LiftedOutput::from_matrix(w.as_ref().clone());
        let x = self.base.state_map(&lifted.leading())?;
        let u = self.base.input_map(&lifted)?;
        Ok(Vector::from_iterator(self.state_dim(), x.iter().chain(u.iter()).copied()))
    }

    fn input_map(&self, y: &LiftedOutput) -> Result<Vector, SystemError> {
        let r1 = self.base.lift_depth() + 1;
        let now = self.base.input_map(&LiftedOutput::from_matrix(y.columns(0, r1).into_owned()))?;
        let next = self.base.input_map(&LiftedOutput::from_matrix(y.columns(1, r1).into_owned()))?;
        Ok((next - now * self.alpha) / self.beta)
    }

    fn state_bounds(&self) -> Vec<Bound> {
        let mut b = self.base.state_bounds();
        b.extend(self.base.input_bounds());
        b
    }

    fn input_bounds(&self) -> Vec<Bound> {
        vec![Bound::Free; self.base.input_dim()]
    }

    fn equilibrium_state(&self) -> Vector {
        let x = self.base.equilibrium_state();
        let u = self.base.equilibrium_input();
        Vector::from_iterator(self.state_dim(), x.iter().chain(u.iter()).copied())
    }

    fn equilibrium_input(&self) -> Vector {
        let u = self.base.equilibrium_input();
        &u * ((1.0 - self.alpha) / self.beta)
    }

    fn free_state_components(&self) -> Vec<usize> {
        self.base.free_state_components()
    }

    fn normalize_window(&self, w: &mut nalgebra::DMatrix<f64>) {
        self.base.normalize_window(w)
    }
}

impl AsRef<nalgebra::DMatrix<f64>> for OutputWindow {
    fn as_ref(&self) -> &nalgebra::DMatrix<f64> {
        self
    }
}
