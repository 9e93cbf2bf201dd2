use std::ops::Deref;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SystemError;

/// `m x R` matrix of consecutive outputs `[y_t, ..., y_{t+R-1}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputWindow(DMatrix<f64>);

/// `m x (R+1)` matrix of consecutive outputs `[y_t, ..., y_{t+R}]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftedOutput(DMatrix<f64>);

fn check_shape(data: &DMatrix<f64>, rows: usize, cols: usize) -> Result<(), SystemError> {
    if data.nrows() != rows {
        return Err(SystemError::Dimension { expected: rows, got: data.nrows() });
    }
    if data.ncols() != cols {
        return Err(SystemError::Dimension { expected: cols, got: data.ncols() });
    }
    Ok(())
}

impl OutputWindow {
    pub fn new(data: DMatrix<f64>, m: usize, r: usize) -> Result<Self, SystemError> {
        check_shape(&data, m, r)?;
        Ok(Self(data))
    }

    /// Wraps a matrix whose shape the caller has already validated.
    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        Self(data)
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Self {
        Self(DMatrix::from_columns(columns))
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn width(&self) -> usize {
        self.0.ncols()
    }

    /// Drops the first column and appends `y_next`.
    pub fn forward_shift(&self, y_next: &DVector<f64>) -> Result<Self, SystemError> {
        forward_shift(&self.0, y_next).map(Self)
    }

    /// Prepends `y_prev` and drops the last column.
    pub fn backward_shift(&self, y_prev: &DVector<f64>) -> Result<Self, SystemError> {
        backward_shift(&self.0, y_prev).map(Self)
    }

    /// Appends `y_next` without dropping anything.
    pub fn extend(&self, y_next: &DVector<f64>) -> Result<LiftedOutput, SystemError> {
        if y_next.len() != self.0.nrows() {
            return Err(SystemError::Dimension { expected: self.0.nrows(), got: y_next.len() });
        }
        let mut data = self.0.clone().insert_column(self.0.ncols(), 0.0);
        data.set_column(self.0.ncols(), y_next);
        Ok(LiftedOutput(data))
    }
}

impl LiftedOutput {
    pub fn new(data: DMatrix<f64>, m: usize, r: usize) -> Result<Self, SystemError> {
        check_shape(&data, m, r + 1)?;
        Ok(Self(data))
    }

    pub fn from_matrix(data: DMatrix<f64>) -> Self {
        Self(data)
    }

    pub fn from_columns(columns: &[DVector<f64>]) -> Self {
        Self(DMatrix::from_columns(columns))
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Columns `0..R`.
    pub fn leading(&self) -> OutputWindow {
        OutputWindow(self.0.columns(0, self.0.ncols() - 1).into_owned())
    }

    /// Columns `1..=R`.
    pub fn trailing(&self) -> OutputWindow {
        OutputWindow(self.0.columns(1, self.0.ncols() - 1).into_owned())
    }
}

impl Deref for OutputWindow {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl Deref for LiftedOutput {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

pub fn forward_shift(w: &DMatrix<f64>, y_next: &DVector<f64>) -> Result<DMatrix<f64>, SystemError> {
    if y_next.len() != w.nrows() {
        return Err(SystemError::Dimension { expected: w.nrows(), got: y_next.len() });
    }
    let r = w.ncols();
    let mut out = DMatrix::zeros(w.nrows(), r);
    if r > 1 {
        out.columns_mut(0, r - 1).copy_from(&w.columns(1, r - 1));
    }
    out.set_column(r - 1, y_next);
    Ok(out)
}

pub fn backward_shift(w: &DMatrix<f64>, y_prev: &DVector<f64>) -> Result<DMatrix<f64>, SystemError> {
    if y_prev.len() != w.nrows() {
        return Err(SystemError::Dimension { expected: w.nrows(), got: y_prev.len() });
    }
    let r = w.ncols();
    let mut out = DMatrix::zeros(w.nrows(), r);
    out.set_column(0, y_prev);
    if r > 1 {
        out.columns_mut(1, r - 1).copy_from(&w.columns(0, r - 1));
    }
    Ok(out)
}

/// Column-major flattening used wherever a window enters an optimization problem.
pub fn vectorize(w: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(w.as_slice())
}

pub fn unvectorize(v: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_column_slice(m, v.len() / m, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(m: usize, r: usize, vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(m, r, &vals[..m * r])
    }

    #[test]
    fn forward_shift_drops_first_column() {
        let w = OutputWindow::from_columns(&[DVector::from_vec(vec![0.0]), DVector::from_vec(vec![1.0])]);
        let s = w.forward_shift(&DVector::from_vec(vec![2.0])).unwrap();
        assert_eq!(s.as_slice(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_window_is_fixed_point() {
        let w = OutputWindow::from_matrix(DMatrix::zeros(2, 2));
        assert_eq!(w.forward_shift(&DVector::zeros(2)).unwrap(), w);
    }

    #[test]
    fn backward_shift_prepends() {
        let w = OutputWindow::from_columns(&[DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])]);
        let s = w.backward_shift(&DVector::from_vec(vec![0.0])).unwrap();
        assert_eq!(s.as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn equilibrium_window_is_fixed_under_backward_shift() {
        let yf = DVector::from_vec(vec![5.0, 10.0]);
        let w = OutputWindow::from_columns(&[yf.clone(), yf.clone()]);
        assert_eq!(w.backward_shift(&yf).unwrap(), w);
    }

    #[test]
    fn mismatched_output_is_rejected() {
        let w = OutputWindow::from_matrix(DMatrix::zeros(2, 3));
        assert_eq!(w.forward_shift(&DVector::zeros(3)), Err(SystemError::Dimension { expected: 2, got: 3 }));
    }

    #[test]
    fn lifted_output_halves_are_windows() {
        let y = LiftedOutput::from_matrix(mat(1, 3, &[1.0, 2.0, 3.0]));
        assert_eq!(y.leading().as_slice(), &[1.0, 2.0]);
        assert_eq!(y.trailing().as_slice(), &[2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn shifts_commute_with_convex_combination(
            w1 in proptest::collection::vec(-10.0f64..10.0, 6),
            w2 in proptest::collection::vec(-10.0f64..10.0, 6),
            a in proptest::collection::vec(-10.0f64..10.0, 2),
            b in proptest::collection::vec(-10.0f64..10.0, 2),
        ) {
            let lam = 0.3;
            let (w1, w2) = (mat(2, 3, &w1), mat(2, 3, &w2));
            let (a, b) = (DVector::from_vec(a), DVector::from_vec(b));
            let lhs = forward_shift(&w1, &a).unwrap() * lam + forward_shift(&w2, &b).unwrap() * (1.0 - lam);
            let rhs = forward_shift(&(&w1 * lam + &w2 * (1.0 - lam)), &(&a * lam + &b * (1.0 - lam))).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-12);
            let lhs = backward_shift(&w1, &a).unwrap() * lam + backward_shift(&w2, &b).unwrap() * (1.0 - lam);
            let rhs = backward_shift(&(&w1 * lam + &w2 * (1.0 - lam)), &(&a * lam + &b * (1.0 - lam))).unwrap();
            prop_assert!((lhs - rhs).amax() <= 1e-12);
        }

        #[test]
        fn backward_undoes_forward(w in proptest::collection::vec(-10.0f64..10.0, 6), a in proptest::collection::vec(-10.0f64..10.0, 2)) {
            let w = mat(2, 3, &w);
            let first = w.column(0).into_owned();
            let back = backward_shift(&forward_shift(&w, &DVector::from_vec(a)).unwrap(), &first).unwrap();
            prop_assert_eq!(back, w);
        }
    }
}
