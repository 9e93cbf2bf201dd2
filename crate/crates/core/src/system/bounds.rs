use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Per-component box constraint. `Free` marks an unconstrained component.
/// One-sided intervals use an infinite endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bound {
    Free,
    Interval { lower: f64, upper: f64 },
}

impl Bound {
    pub fn interval(lower: f64, upper: f64) -> Self {
        Bound::Interval { lower, upper }
    }

    pub fn lower(&self) -> f64 {
        match *self {
            Bound::Free => f64::NEG_INFINITY,
            Bound::Interval { lower, .. } => lower,
        }
    }

    pub fn upper(&self) -> f64 {
        match *self {
            Bound::Free => f64::INFINITY,
            Bound::Interval { upper, .. } => upper,
        }
    }

    pub fn is_free(&self) -> bool {
        matches!(self, Bound::Free)
    }

    pub fn contains(&self, v: f64, slack: f64) -> bool {
        v.is_finite() && v >= self.lower() - slack && v <= self.upper() + slack
    }

    /// Smallest distance by which `v` violates the bound (0 inside).
    pub fn violation(&self, v: f64) -> f64 {
        if !v.is_finite() {
            return f64::INFINITY;
        }
        (self.lower() - v).max(v - self.upper()).max(0.0)
    }

    /// Scaled form `|D v - d| <= 1` for a finite interval; `None` otherwise.
    pub fn scaled(&self) -> Option<(f64, f64)> {
        match *self {
            Bound::Interval { lower, upper } if lower.is_finite() && upper.is_finite() && upper > lower => {
                let half = 0.5 * (upper - lower);
                Some((1.0 / half, 0.5 * (upper + lower) / half))
            }
            _ => None,
        }
    }
}

pub fn box_membership(bounds: &[Bound], v: &DVector<f64>, slack: f64) -> bool {
    bounds.len() == v.len() && bounds.iter().zip(v.iter()).all(|(b, &x)| b.contains(x, slack))
}

pub fn box_violation(bounds: &[Bound], v: &DVector<f64>) -> f64 {
    bounds.iter().zip(v.iter()).map(|(b, &x)| b.violation(x)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_boxes_include_boundary() {
        let b = [Bound::interval(-5.0, 0.0), Bound::interval(0.0, 6.0)];
        assert!(box_membership(&b, &DVector::from_vec(vec![-5.0, 0.0]), 0.0));
        assert!(!box_membership(&b, &DVector::from_vec(vec![-5.0 - 1e-9, 0.0]), 0.0));
    }

    #[test]
    fn free_component_accepts_anything_finite() {
        let b = [Bound::interval(-5.0, 5.0), Bound::Free];
        assert!(box_membership(&b, &DVector::from_vec(vec![0.0, 1e6]), 0.0));
        assert!(!box_membership(&b, &DVector::from_vec(vec![0.0, f64::NAN]), 0.0));
    }

    #[test]
    fn scaled_form_matches_interval() {
        let (d, c) = Bound::interval(-10.0, 2.0).scaled().unwrap();
        assert!((d * 2.0 - c - 1.0).abs() < 1e-15);
        assert!((d * -10.0 - c + 1.0).abs() < 1e-15);
        assert!(Bound::Free.scaled().is_none());
    }
}
