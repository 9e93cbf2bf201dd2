//! Quadratic stage cost `(x - x_r)' Q (x - x_r) + (u - u_r)' R (u - u_r)`.

use serde::{Deserialize, Serialize};

use crate::error::SystemError;
use crate::system::{LiftedOutput, LiftedSystem, Matrix, Vector};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QuadraticStageCost {
    pub q: Matrix,
    pub r: Matrix,
    pub x_ref: Vector,
    pub u_ref: Vector,
}

impl QuadraticStageCost {
    pub fn new(q: Matrix, r: Matrix, x_ref: Vector, u_ref: Vector) -> Self {
        assert!(q.is_square() && q.nrows() == x_ref.len(), "state weight shape");
        assert!(r.is_square() && r.nrows() == u_ref.len(), "input weight shape");
        Self { q, r, x_ref, u_ref }
    }

    pub fn eval(&self, x: &Vector, u: &Vector) -> f64 {
        let dx = x - &self.x_ref;
        let du = u - &self.u_ref;
        dx.dot(&(&self.q * &dx)) + du.dot(&(&self.r * &du))
    }

    pub fn grad_x(&self, x: &Vector) -> Vector {
        (&self.q + self.q.transpose()) * (x - &self.x_ref)
    }

    pub fn grad_u(&self, u: &Vector) -> Vector {
        (&self.r + self.r.transpose()) * (u - &self.u_ref)
    }

    pub fn hess_x(&self) -> Matrix {
        &self.q + self.q.transpose()
    }

    pub fn hess_u(&self) -> Matrix {
        &self.r + self.r.transpose()
    }

    /// Lifted cost of a window: the stage cost at the reconstructed pair.
    pub fn lifted(&self, sys: &dyn LiftedSystem, y: &LiftedOutput) -> Result<f64, SystemError> {
        let (x, u) = sys.cost_reconstruction(y)?;
        Ok(self.eval(&x, &u))
    }
}
