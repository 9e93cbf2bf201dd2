//! Sampled checks of the lifted maps and of a stored safe set: round trips
//! from random feasible rollouts, feasibility of convex combinations,
//! monotonicity along lines and the decrease of the terminal cost.

use rand::Rng;
use serde::Serialize;

use crate::cases::{Example, ExampleId};
use crate::safe_set::OutputSafeSet;
use crate::system::{check_monotone_on_lines, lifted_from_rollout, vectorize, Bound, LiftedOutput, LiftedSystem, MonotoneReport, Vector};

/// Smallest unicycle speed in sampled rollouts; keeps every heading defined.
pub const UNICYCLE_MIN_SPEED: f64 = 1e-3;

/// Half-width used for free or half-infinite components when sampling.
const SPAN: f64 = 10.0;

fn sample_range(b: &Bound) -> (f64, f64) {
    match (b.lower().is_finite(), b.upper().is_finite()) {
        (true, true) => (b.lower(), b.upper()),
        (true, false) => (b.lower(), b.lower() + SPAN),
        (false, true) => (b.upper() - SPAN, b.upper()),
        (false, false) => (-SPAN, SPAN),
    }
}

fn state_box(sys: &dyn LiftedSystem) -> Vec<(f64, f64)> {
    sys.state_bounds().iter().map(sample_range).collect()
}

fn input_box(ex: &Example) -> Vec<(f64, f64)> {
    let mut b: Vec<(f64, f64)> = ex.system.input_bounds().iter().map(sample_range).collect();
    if ex.id == ExampleId::Unicycle {
        b[0].0 = b[0].0.max(UNICYCLE_MIN_SPEED);
    }
    b
}

fn draw(rng: &mut impl Rng, b: &[(f64, f64)]) -> Vector {
    Vector::from_iterator(b.len(), b.iter().map(|&(lo, hi)| rng.random_range(lo..=hi)))
}

/// A feasible state and `steps` inputs keeping every visited state feasible.
pub fn random_feasible_rollout(ex: &Example, steps: usize, rng: &mut impl Rng) -> Option<(Vector, Vec<Vector>)> {
    let sys = ex.system.as_ref();
    let xb = state_box(sys);
    let ub = input_box(ex);
    for _ in 0..10_000 {
        let x0 = draw(rng, &xb);
        if sys.state_feasibility(&x0, 0.0).is_err() {
            continue;
        }
        let mut x = x0.clone();
        let mut inputs = Vec::with_capacity(steps);
        let mut ok = true;
        for _ in 0..steps {
            let u = draw(rng, &ub);
            x = sys.dynamics(&x, &u);
            inputs.push(u);
            if sys.state_feasibility(&x, 0.0).is_err() {
                ok = false;
                break;
            }
        }
        if ok {
            return Some((x0, inputs));
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct RoundTripReport {
    pub samples: usize,
    pub max_state_error: f64,
    pub max_input_error: f64,
    pub tolerance: f64,
    pub failures: usize,
}

impl RoundTripReport {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.failures == 0 && self.max_state_error <= self.tolerance && self.max_input_error <= self.tolerance
    }
}

pub fn round_trip_tolerance(id: ExampleId) -> f64 {
    match id {
        ExampleId::Unicycle => 1e-6,
        _ => 1e-9,
    }
}

fn angle_aware_error(id: ExampleId, i: usize, a: f64, b: f64) -> f64 {
    let d = a - b;
    if id == ExampleId::Unicycle && i == 2 {
        d.sin().atan2(d.cos()).abs()
    } else {
        d.abs() / (1.0 + b.abs())
    }
}

/// Rebuilds state and first input from the outputs of random feasible
/// rollouts. Errors are relative to `1 + |value|`.
pub fn round_trip(ex: &Example, samples: usize, rng: &mut impl Rng) -> RoundTripReport {
    let sys = ex.system.as_ref();
    let r = sys.lift_depth();
    let mut rep = RoundTripReport { samples: 0, max_state_error: 0.0, max_input_error: 0.0, tolerance: round_trip_tolerance(ex.id), failures: 0 };
    for _ in 0..samples {
        let Some((x, inputs)) = random_feasible_rollout(ex, r, rng) else {
            rep.failures += 1;
            continue;
        };
        rep.samples += 1;
        let Ok(y) = lifted_from_rollout(sys, &x, &inputs) else {
            rep.failures += 1;
            continue;
        };
        match (sys.state_map(&y.leading()), sys.input_map(&y)) {
            (Ok(xr), Ok(ur)) => {
                for i in 0..x.len() {
                    rep.max_state_error = rep.max_state_error.max(angle_aware_error(ex.id, i, xr[i], x[i]));
                }
                for i in 0..ur.len() {
                    rep.max_input_error = rep.max_input_error.max((ur[i] - inputs[0][i]).abs() / (1.0 + inputs[0][i].abs()));
                }
            }
            _ => rep.failures += 1,
        }
    }
    rep
}

/// A convex combination whose reconstruction left the constraint set.
#[derive(Debug, Clone, Serialize)]
pub struct CombinationWitness {
    pub vertices: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub state: Vec<f64>,
    pub input: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoxPreservationReport {
    pub combinations: usize,
    /// Combinations whose state or input leaves the constraint set.
    pub violations: usize,
    pub max_violation: f64,
    /// Per reconstructed component (`x` then `u`): combinations where it leaves
    /// the interval spanned by the vertices.
    pub interval_violations: Vec<usize>,
    pub witness: Option<CombinationWitness>,
}

impl BoxPreservationReport {
    pub fn passed(&self) -> bool {
        self.combinations > 0 && self.violations == 0
    }
}

fn input_excess(ex: &Example, u: &Vector) -> f64 {
    let b = ex.system.input_bounds();
    if ex.id == ExampleId::Unicycle {
        return (u[0] - b[0].upper()).max(0.0);
    }
    b.iter().zip(u.iter()).map(|(b, &v)| b.violation(v)).fold(0.0, f64::max)
}

fn state_excess(sys: &dyn LiftedSystem, x: &Vector) -> f64 {
    let (g, h) = sys.state_rows();
    let rows = if g.nrows() > 0 { (g * x - h).max().max(0.0) } else { 0.0 };
    sys.state_bounds().iter().zip(x.iter()).map(|(b, &v)| b.violation(v)).fold(rows, f64::max)
}

/// Draws `combinations` convex combinations of 2 to 6 random feasible
/// lifted outputs and checks the reconstructed pair against the
/// constraints with slack `1e-9`. For the unicycle only the speed upper
/// limit is checked on the input.
pub fn box_preservation(ex: &Example, combinations: usize, rng: &mut impl Rng) -> BoxPreservationReport {
    let sys = ex.system.as_ref();
    let r = sys.lift_depth();
    let n = sys.state_dim();
    let mut rep =
        BoxPreservationReport { combinations: 0, violations: 0, max_violation: 0.0, interval_violations: vec![0; n + sys.input_dim()], witness: None };
    for _ in 0..combinations {
        let p = rng.random_range(2..=6);
        let mut vertices: Vec<LiftedOutput> = Vec::with_capacity(p);
        let mut recon: Vec<Vector> = Vec::with_capacity(p);
        while vertices.len() < p {
            let Some((x, inputs)) = random_feasible_rollout(ex, r, rng) else {
                continue;
            };
            let Ok(y) = lifted_from_rollout(sys, &x, &inputs) else {
                continue;
            };
            let (Ok(xr), Ok(ur)) = (sys.state_map(&y.leading()), sys.input_map(&y)) else {
                continue;
            };
            recon.push(Vector::from_iterator(n + ur.len(), xr.iter().chain(ur.iter()).copied()));
            vertices.push(y);
        }
        let raw: Vec<f64> = (0..p).map(|_| -rng.random::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mut comb = vertices[0].clone().into_inner() * weights[0];
        for (v, &w) in vertices.iter().zip(&weights).skip(1) {
            comb += v.clone().into_inner() * w;
        }
        let comb = LiftedOutput::from_matrix(comb);
        rep.combinations += 1;
        let (Ok(x), Ok(u)) = (sys.state_map(&comb.leading()), sys.input_map(&comb)) else {
            rep.violations += 1;
            continue;
        };
        let all: Vec<f64> = x.iter().chain(u.iter()).copied().collect();
        for (i, &v) in all.iter().enumerate() {
            let lo = recon.iter().map(|c| c[i]).fold(f64::INFINITY, f64::min);
            let hi = recon.iter().map(|c| c[i]).fold(f64::NEG_INFINITY, f64::max);
            let tol = 1e-9 * (1.0 + lo.abs().max(hi.abs()));
            if v < lo - tol || v > hi + tol {
                rep.interval_violations[i] += 1;
            }
        }
        let excess = state_excess(sys, &x).max(input_excess(ex, &u));
        rep.max_violation = rep.max_violation.max(excess);
        if excess > 1e-9 {
            rep.violations += 1;
            if rep.witness.is_none() {
                rep.witness = Some(CombinationWitness {
                    vertices: vertices.iter().map(|v| vectorize(v).as_slice().to_vec()).collect(),
                    weights,
                    state: x.as_slice().to_vec(),
                    input: u.as_slice().to_vec(),
                });
            }
        }
    }
    rep
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotonicityReport {
    pub state_map: MonotoneReport,
    pub input_map: MonotoneReport,
}

/// Line-restriction monotonicity of both reconstruction maps over the box
/// of lifted outputs spanned by the state box.
pub fn monotonicity(ex: &Example, n_lines: usize, n_points: usize, rng: &mut impl Rng) -> MonotonicityReport {
    let sys = ex.system.as_ref();
    let r = sys.lift_depth();
    let m = sys.output_dim();
    // Output ranges from the images of the state box corners.
    let xb = state_box(sys);
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for mask in 0..(1usize << xb.len()) {
        let x = Vector::from_iterator(xb.len(), xb.iter().enumerate().map(|(i, b)| if mask >> i & 1 == 1 { b.1 } else { b.0 }));
        let y = sys.output(&x);
        for k in 0..m {
            lo[k] = lo[k].min(y[k]);
            hi[k] = hi[k].max(y[k]);
        }
    }
    let domain = |cols: usize| -> Vec<(f64, f64)> { (0..cols * m).map(|i| (lo[i % m], hi[i % m])).collect() };
    let to_matrix = |v: &Vector| crate::system::unvectorize(v.as_slice(), m);
    let fx = |v: &Vector| sys.state_map(&crate::system::OutputWindow::from_matrix(to_matrix(v))).ok();
    let fu = |v: &Vector| sys.input_map(&LiftedOutput::from_matrix(to_matrix(v))).ok();
    MonotonicityReport {
        state_map: check_monotone_on_lines(&fx, &domain(r), n_lines, n_points, 1e-10, rng),
        input_map: check_monotone_on_lines(&fu, &domain(r + 1), n_lines, n_points, 1e-10, rng),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DecreaseReport {
    pub samples: usize,
    pub equilibrium_cost: f64,
    /// Largest `Q(y+) - Q(y) + C(y)`.
    pub max_excess: f64,
    pub violations: usize,
    pub tolerance: f64,
}

impl DecreaseReport {
    pub fn passed(&self) -> bool {
        self.samples > 0 && self.equilibrium_cost == 0.0 && self.violations == 0
    }
}

/// Samples hull points as random combinations of stored windows and checks
/// `Q(y+) - Q(y) <= -C(y) + tol`, with `y+` the combination of successors
/// under the optimal weights of `Q(y)`.
pub fn terminal_decrease(ex: &Example, ss: &OutputSafeSet, samples: usize, tol: f64, rng: &mut impl Rng) -> crate::Result<DecreaseReport> {
    let sys = ex.system.as_ref();
    let eq = crate::system::equilibrium_window(sys, ss.width());
    let equilibrium_cost = ss.terminal_cost(sys, &eq)?.value;
    let mut rep = DecreaseReport { samples: 0, equilibrium_cost, max_excess: f64::NEG_INFINITY, violations: 0, tolerance: tol };
    let k = ss.len();
    for _ in 0..samples {
        let p = rng.random_range(1..=6.min(k));
        let mut lambda = vec![0.0; k];
        for _ in 0..p {
            lambda[rng.random_range(0..k)] += rng.random::<f64>() + 1e-3;
        }
        let total: f64 = lambda.iter().sum();
        lambda.iter_mut().for_each(|l| *l /= total);
        let y = ss.combine(&lambda);
        let q = ss.terminal_cost(sys, &y)?;
        if !q.is_feasible() {
            rep.violations += 1;
            continue;
        }
        let stage = ex.cost.lifted(sys, &ss.combine_lifted(&q.lambda))?;
        let next = ss.combine(&ss.shift_weights(&q.lambda));
        let q_next = ss.terminal_cost(sys, &next)?;
        let excess = q_next.value - q.value + stage;
        rep.samples += 1;
        rep.max_excess = rep.max_excess.max(excess);
        if !(excess <= tol) {
            rep.violations += 1;
        }
    }
    Ok(rep)
}
