//! Stored output windows from converged iterations, their costs-to-go, and
//! the barycentric terminal cost over their convex hull.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cost::QuadraticStageCost;
use crate::error::SafeSetError;
use crate::qp::{find_feasible, solve_qp, QpStatus, QuadraticProgram};
use crate::system::{equilibrium_window, simulate, vectorize, LiftedOutput, LiftedSystem, Matrix, Vector};

/// Slack for the feasibility checks run on insertion.
pub const INSERTION_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafeSetPoint {
    /// Normalized window, `m x width`.
    pub window: Matrix,
    /// Output following the window, normalized with the same offset.
    pub successor: Vector,
    pub cost_to_go: f64,
    pub stage_cost: f64,
    pub iteration: usize,
    pub time: usize,
}

impl SafeSetPoint {
    /// The first `r + 1` columns of `[window, successor]`.
    pub fn lifted(&self, r: usize) -> LiftedOutput {
        let m = self.window.nrows();
        let w = self.window.ncols();
        let mut out = Matrix::zeros(m, r + 1);
        for c in 0..=r {
            if c < w {
                out.set_column(c, &self.window.column(c));
            } else {
                out.set_column(c, &self.successor);
            }
        }
        LiftedOutput::from_matrix(out)
    }

    /// `[window, successor]` without its first column.
    pub fn shifted(&self) -> Matrix {
        let w = self.window.ncols();
        let mut out = Matrix::zeros(self.window.nrows(), w);
        for c in 1..w {
            out.set_column(c - 1, &self.window.column(c));
        }
        out.set_column(w - 1, &self.successor);
        out
    }
}

/// Result of the barycentric terminal-cost LP.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalCost {
    /// `+inf` when the query is outside the hull.
    pub value: f64,
    pub lambda: Vec<f64>,
}

impl TerminalCost {
    pub fn is_feasible(&self) -> bool {
        self.value.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSafeSet {
    width: usize,
    lift_depth: usize,
    output_dim: usize,
    points: Vec<SafeSetPoint>,
    /// Index of each point's successor; the terminal point maps to itself.
    next: Vec<usize>,
    iterations: Vec<usize>,
}

impl OutputSafeSet {
    pub fn new(sys: &dyn LiftedSystem, width: usize) -> Self {
        let r = sys.lift_depth();
        assert!(width == r || width == r + 1, "width must be R or R + 1");
        Self { width, lift_depth: r, output_dim: sys.output_dim(), points: Vec::new(), next: Vec::new(), iterations: Vec::new() }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SafeSetPoint] {
        &self.points
    }

    pub fn successor(&self, k: usize) -> usize {
        self.next[k]
    }

    /// Iterations that contributed a trajectory.
    pub fn iterations(&self) -> &[usize] {
        &self.iterations
    }

    /// Points of one iteration, in time order.
    pub fn trajectory(&self, iteration: usize) -> impl Iterator<Item = (usize, &SafeSetPoint)> {
        self.points.iter().enumerate().filter(move |(_, p)| p.iteration == iteration)
    }

    /// Column-major windows stacked as columns, `(m * width) x K`.
    pub fn stacked_windows(&self) -> Matrix {
        let rows = self.output_dim * self.width;
        let mut y = Matrix::zeros(rows, self.points.len());
        for (k, p) in self.points.iter().enumerate() {
            y.set_column(k, &vectorize(&p.window));
        }
        y
    }

    pub fn costs(&self) -> Vector {
        Vector::from_iterator(self.points.len(), self.points.iter().map(|p| p.cost_to_go))
    }

    /// Weighted sum of the stored windows.
    pub fn combine(&self, lambda: &[f64]) -> Matrix {
        let mut out = Matrix::zeros(self.output_dim, self.width);
        for (p, &l) in self.points.iter().zip(lambda) {
            if l != 0.0 {
                out += &p.window * l;
            }
        }
        out
    }

    /// Weighted sum of the stored lifted outputs.
    pub fn combine_lifted(&self, lambda: &[f64]) -> LiftedOutput {
        let mut out = Matrix::zeros(self.output_dim, self.lift_depth + 1);
        for (p, &l) in self.points.iter().zip(lambda) {
            if l != 0.0 {
                out += p.lifted(self.lift_depth).into_inner() * l;
            }
        }
        LiftedOutput::from_matrix(out)
    }

    /// Weights moved from each point to its successor.
    pub fn shift_weights(&self, lambda: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; lambda.len()];
        for (k, &l) in lambda.iter().enumerate() {
            out[self.next[k]] += l;
        }
        out
    }

    /// Stores a converged closed-loop output sequence.
    ///
    /// Outputs from the convergence index on are replaced by the equilibrium
    /// continuation so the stored chain ends exactly in the equilibrium
    /// window, which is appended with zero cost-to-go.
    pub fn add_trajectory(
        &mut self,
        sys: &dyn LiftedSystem,
        outputs: &[Vector],
        cost: &QuadraticStageCost,
        tol_conv: f64,
        iteration: usize,
    ) -> Result<(), SafeSetError> {
        let w = self.width;
        let r = self.lift_depth;
        if let Some(y) = outputs.iter().find(|y| y.len() != self.output_dim) {
            return Err(SafeSetError::System(crate::error::SystemError::Dimension { expected: self.output_dim, got: y.len() }));
        }
        let t_conv = convergence_index(sys, outputs, w, tol_conv).ok_or_else(|| SafeSetError::NotConverged {
            distance: outputs.len().checked_sub(w).map_or(f64::INFINITY, |t| window_distance(sys, outputs, t, w)),
        })?;
        let mut ys: Vec<Vector> = outputs[..t_conv].to_vec();
        let anchor = sys.anchored_equilibrium(&outputs[t_conv]);
        let hold = vec![sys.equilibrium_input(); w];
        ys.extend(simulate(sys, &anchor, &hold).iter().map(|x| sys.output(x)));

        let mut new_points = Vec::with_capacity(t_conv + 1);
        for t in 0..t_conv {
            new_points.push(self.make_point(sys, &ys[t..=t + w], cost, iteration, t)?);
        }
        let eq = self.equilibrium_point(sys, cost, iteration, t_conv)?;
        new_points.push(eq);
        let mut to_go = 0.0;
        for p in new_points.iter_mut().rev().skip(1) {
            to_go += p.stage_cost;
            p.cost_to_go = to_go;
        }
        let base = self.points.len();
        let n = new_points.len();
        for (k, _) in new_points.iter().enumerate() {
            self.next.push(base + (k + 1).min(n - 1));
        }
        self.points.extend(new_points);
        self.iterations.push(iteration);
        debug_assert!(r <= w);
        Ok(())
    }

    fn make_point(
        &self,
        sys: &dyn LiftedSystem,
        cols: &[Vector],
        cost: &QuadraticStageCost,
        iteration: usize,
        time: usize,
    ) -> Result<SafeSetPoint, SafeSetError> {
        let w = self.width;
        let mut full = Matrix::from_columns(cols);
        sys.normalize_window(&mut full);
        let point =
            SafeSetPoint { window: full.columns(0, w).into_owned(), successor: full.column(w).into_owned(), cost_to_go: 0.0, stage_cost: 0.0, iteration, time };
        let lifted = point.lifted(self.lift_depth);
        sys.lifted_feasibility(&lifted, INSERTION_SLACK).map_err(|reason| SafeSetError::Infeasible { iteration, time, reason })?;
        let stage = cost.lifted(sys, &lifted)?;
        Ok(SafeSetPoint { stage_cost: stage, ..point })
    }

    fn equilibrium_point(&self, sys: &dyn LiftedSystem, cost: &QuadraticStageCost, iteration: usize, time: usize) -> Result<SafeSetPoint, SafeSetError> {
        let full = equilibrium_window(sys, self.width + 1);
        let cols: Vec<Vector> = full.column_iter().map(|c| c.into_owned()).collect();
        let mut p = self.make_point(sys, &cols, cost, iteration, time)?;
        p.stage_cost = 0.0;
        Ok(p)
    }

    /// Barycentric LP: minimize stored cost over weights reproducing `query`.
    pub fn terminal_cost(&self, sys: &dyn LiftedSystem, query: &Matrix) -> Result<TerminalCost, SafeSetError> {
        let qp = self.hull_lp(sys, query)?.with_linear(self.costs());
        // Stored costs are non-negative, so a stored zero-cost window equal
        // to the query is an exact minimizer.
        let mut q = query.clone();
        sys.normalize_window(&mut q);
        if let Some(i) = self.points.iter().position(|p| p.cost_to_go == 0.0 && p.window == q) {
            let mut lambda = vec![0.0; self.len()];
            lambda[i] = 1.0;
            return Ok(TerminalCost { value: 0.0, lambda });
        }
        let sol = solve_qp(&qp, None).map_err(|e| SafeSetError::Document(e.to_string()))?;
        Ok(match sol.status {
            QpStatus::Optimal => {
                let lambda: Vec<f64> = sol.x.iter().map(|&l| l.max(0.0)).collect();
                TerminalCost { value: sol.objective.max(0.0), lambda }
            }
            _ => TerminalCost { value: f64::INFINITY, lambda: vec![0.0; self.len()] },
        })
    }

    /// Any weights reproducing `query`, or `None` outside the hull.
    pub fn membership_certificate(&self, sys: &dyn LiftedSystem, query: &Matrix) -> Result<Option<Vec<f64>>, SafeSetError> {
        let qp = self.hull_lp(sys, query)?;
        let x = find_feasible(&qp, None).map_err(|e| SafeSetError::Document(e.to_string()))?;
        Ok(x.map(|v| v.iter().copied().collect()))
    }

    fn hull_lp(&self, sys: &dyn LiftedSystem, query: &Matrix) -> Result<QuadraticProgram, SafeSetError> {
        if self.is_empty() {
            return Err(SafeSetError::Empty);
        }
        if query.ncols() != self.width || query.nrows() != self.output_dim {
            return Err(SafeSetError::Width { expected: self.width, got: query.ncols() });
        }
        let mut q = query.clone();
        sys.normalize_window(&mut q);
        let k = self.len();
        let y = self.stacked_windows();
        let rows = y.nrows() + 1;
        let mut a = Matrix::zeros(rows, k);
        a.rows_mut(0, y.nrows()).copy_from(&y);
        a.row_mut(rows - 1).fill(1.0);
        let mut b = Vector::zeros(rows);
        b.rows_mut(0, y.nrows()).copy_from(&vectorize(&q));
        b[rows - 1] = 1.0;
        Ok(QuadraticProgram::new(k).with_equalities(a, b).with_bounds(Vector::zeros(k), Vector::from_element(k, f64::INFINITY)))
    }

    pub fn to_json(&self) -> Result<String, SafeSetError> {
        serde_json::to_string_pretty(self).map_err(|e| SafeSetError::Document(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, SafeSetError> {
        let s: Self = serde_json::from_str(text).map_err(|e| SafeSetError::Document(e.to_string()))?;
        if s.next.len() != s.points.len() || s.next.iter().any(|&n| n >= s.points.len()) {
            return Err(SafeSetError::Document("successor table does not match the points".into()));
        }
        if let Some(p) = s.points.iter().find(|p| p.window.ncols() != s.width || p.window.nrows() != s.output_dim) {
            return Err(SafeSetError::Width { expected: s.width, got: p.window.ncols() });
        }
        Ok(s)
    }

    /// Rows `(i, t, y..., cost)` with the window in column-major order.
    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["i".to_string(), "t".to_string()];
        for c in 0..self.width {
            for r in 0..self.output_dim {
                header.push(format!("y{r}_{c}"));
            }
        }
        header.push("cost".to_string());
        w.write_record(&header)?;
        for p in &self.points {
            let mut rec = vec![p.iteration.to_string(), p.time.to_string()];
            rec.extend(p.window.iter().map(|v| v.to_string()));
            rec.push(p.cost_to_go.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn window_distance(sys: &dyn LiftedSystem, outputs: &[Vector], t: usize, w: usize) -> f64 {
    let mut win = Matrix::from_columns(&outputs[t..t + w]);
    sys.normalize_window(&mut win);
    (win - equilibrium_window(sys, w)).amax()
}

/// First time from which every complete window is within `tol` of the
/// equilibrium window, with at least `R` such windows.
pub fn convergence_index(sys: &dyn LiftedSystem, outputs: &[Vector], width: usize, tol: f64) -> Option<usize> {
    if outputs.len() < width {
        return None;
    }
    let last = outputs.len() - width;
    let mut t = last + 1;
    while t > 0 && window_distance(sys, outputs, t - 1, width) <= tol {
        t -= 1;
    }
    if last + 1 - t >= sys.lift_depth() {
        Some(t)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{build_default, ExampleId};

    fn constant_outputs(n: usize) -> Vec<Vector> {
        vec![Vector::zeros(1); n]
    }

    #[test]
    fn equilibrium_trajectory_has_zero_costs() {
        let ex = build_default(ExampleId::Pwa);
        let mut ss = OutputSafeSet::new(ex.system.as_ref(), ex.width);
        ss.add_trajectory(ex.system.as_ref(), &constant_outputs(6), &ex.cost, 1e-6, 0).unwrap();
        assert_eq!(ss.len(), 1);
        assert!(ss.costs().iter().all(|&c| c == 0.0));
        let tc = ss.terminal_cost(ex.system.as_ref(), &Matrix::zeros(1, 2)).unwrap();
        assert_eq!(tc.value, 0.0);
    }

    #[test]
    fn costs_telescope_and_successors_chain() {
        let ex = build_default(ExampleId::Pwa);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        let ys = ex.seed.outputs(sys);
        ss.add_trajectory(sys, &ys, &ex.cost, 1e-6, 0).unwrap();
        let pts = ss.points();
        for k in 0..pts.len() - 1 {
            assert!((pts[k].cost_to_go - pts[k].stage_cost - pts[ss.successor(k)].cost_to_go).abs() < 1e-9);
            let shifted = pts[k].shifted();
            assert!((shifted - &pts[ss.successor(k)].window).amax() < 1e-12);
        }
        assert_eq!(pts.last().unwrap().cost_to_go, 0.0);
        let direct: f64 = ex.seed.states.iter().zip(&ex.seed.inputs).map(|(x, u)| ex.cost.eval(x, u)).sum();
        assert!((pts[0].cost_to_go - direct).abs() < 1e-6 * direct);
    }

    #[test]
    fn stored_point_terminal_cost_is_at_most_its_cost_to_go() {
        let ex = build_default(ExampleId::Pwa);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, 1e-6, 0).unwrap();
        for p in ss.points().iter().step_by(5) {
            let tc = ss.terminal_cost(sys, &p.window).unwrap();
            assert!(tc.value <= p.cost_to_go + 1e-9);
        }
        let far = Matrix::from_element(1, 2, 10.0);
        assert!(!ss.terminal_cost(sys, &far).unwrap().is_feasible());
        assert!(ss.membership_certificate(sys, &far).unwrap().is_none());
        assert!(ss.membership_certificate(sys, &ss.points()[3].window).unwrap().is_some());
    }

    #[test]
    fn non_converged_trajectory_is_rejected() {
        let ex = build_default(ExampleId::Pwa);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        let ys = ex.seed.outputs(sys);
        let err = ss.add_trajectory(sys, &ys[..10], &ex.cost, 1e-6, 0).unwrap_err();
        assert!(matches!(err, SafeSetError::NotConverged { .. }));
    }

    #[test]
    fn infeasible_point_is_rejected() {
        let ex = build_default(ExampleId::Pwa);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        let mut ys = constant_outputs(8);
        ys[0] = Vector::from_element(1, -6.0);
        let err = ss.add_trajectory(sys, &ys, &ex.cost, 1e-6, 0).unwrap_err();
        assert!(matches!(err, SafeSetError::Infeasible { time: 0, .. }));
    }

    #[test]
    fn json_round_trip() {
        let ex = build_default(ExampleId::DcMotor);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, 1e-6, 0).unwrap();
        let back = OutputSafeSet::from_json(&ss.to_json().unwrap()).unwrap();
        assert_eq!(back, ss);
        let mut csv = Vec::new();
        ss.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), ss.len() + 1);
    }

    #[test]
    fn dc_windows_are_stored_without_angle_offset() {
        let ex = build_default(ExampleId::DcMotor);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, 1e-6, 0).unwrap();
        assert!(ss.points().iter().all(|p| p.window[(1, 0)] == 0.0));
        let last = ss.points().last().unwrap();
        assert!((last.window[(1, 1)] - 0.06).abs() < 1e-12);
    }
}
