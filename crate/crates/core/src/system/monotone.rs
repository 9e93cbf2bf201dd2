use rand::Rng;
use serde::Serialize;

use super::Vector;

/// A sampled segment on which some component misbehaves.
#[derive(Debug, Clone, Serialize)]
pub struct Segment {
    pub start: Vec<f64>,
    pub end: Vec<f64>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComponentReport {
    pub index: usize,
    /// Non-strictly monotone on every sampled segment.
    pub monotone: bool,
    /// Never exceeds the larger endpoint value (quasiconvex along lines).
    pub upper_preserved: bool,
    /// Never drops below the smaller endpoint value (quasiconcave along lines).
    pub lower_preserved: bool,
    pub monotone_witness: Option<Segment>,
    pub upper_witness: Option<Segment>,
    pub lower_witness: Option<Segment>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub lines_tested: usize,
    pub lines_rejected: usize,
    pub components: Vec<ComponentReport>,
}

impl MonotoneReport {
    pub fn all_monotone(&self) -> bool {
        self.lines_tested > 0 && self.components.iter().all(|c| c.monotone)
    }

    pub fn component(&self, i: usize) -> &ComponentReport {
        &self.components[i]
    }
}

/// Samples segments with endpoints uniform in `domain` and tests each
/// component of `map` along `n_points` equispaced points. `map` returns `None`
/// outside its domain; such segments are resampled up to a fixed budget.
pub fn check_monotone_on_lines(
    map: &dyn Fn(&Vector) -> Option<Vector>,
    domain: &[(f64, f64)],
    n_lines: usize,
    n_points: usize,
    tol: f64,
    rng: &mut impl Rng,
) -> MonotoneReport {
    assert!(n_lines > 0 && n_points >= 3, "sampling budget must be positive");
    let mut components: Vec<ComponentReport> = Vec::new();
    let mut tested = 0;
    let mut rejected = 0;
    let max_attempts = 20 * n_lines;
    let mut attempts = 0;
    while tested < n_lines && attempts < max_attempts {
        attempts += 1;
        let a = Vector::from_iterator(domain.len(), domain.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)));
        let b = Vector::from_iterator(domain.len(), domain.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)));
        let mut samples: Vec<Vector> = Vec::with_capacity(n_points);
        for k in 0..n_points {
            let t = k as f64 / (n_points - 1) as f64;
            match map(&(&a * (1.0 - t) + &b * t)) {
                Some(v) if v.iter().all(|x| x.is_finite()) => samples.push(v),
                _ => break,
            }
        }
        if samples.len() < n_points {
            rejected += 1;
            continue;
        }
        tested += 1;
        if components.is_empty() {
            components = (0..samples[0].len())
                .map(|index| ComponentReport {
                    index,
                    monotone: true,
                    upper_preserved: true,
                    lower_preserved: true,
                    monotone_witness: None,
                    upper_witness: None,
                    lower_witness: None,
                })
                .collect();
        }
        for c in components.iter_mut() {
            let vals: Vec<f64> = samples.iter().map(|s| s[c.index]).collect();
            let scale = 1.0 + vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let tol = tol * scale;
            let nondecreasing = vals.windows(2).all(|p| p[1] >= p[0] - tol);
            let nonincreasing = vals.windows(2).all(|p| p[1] <= p[0] + tol);
            let (first, last) = (vals[0], vals[n_points - 1]);
            let hi = first.max(last);
            let lo = first.min(last);
            let upper_ok = vals.iter().all(|&v| v <= hi + tol);
            let lower_ok = vals.iter().all(|&v| v >= lo - tol);
            let witness = || Segment { start: a.as_slice().to_vec(), end: b.as_slice().to_vec(), values: vals.clone() };
            if !(nondecreasing || nonincreasing) && c.monotone {
                c.monotone = false;
                c.monotone_witness = Some(witness());
            }
            if !upper_ok && c.upper_preserved {
                c.upper_preserved = false;
                c.upper_witness = Some(witness());
            }
            if !lower_ok && c.lower_preserved {
                c.lower_preserved = false;
                c.lower_witness = Some(witness());
            }
        }
    }
    MonotoneReport { lines_tested: tested, lines_rejected: rejected, components }
}
