//! Receding-horizon controller over a frozen safe set.
//!
//! Every step starts from a certified candidate that follows the stored
//! safe set. PWA systems are solved exactly by enumerating mode sequences;
//! smooth systems go through SQP and fall back to the candidate whenever
//! the solver does not improve on it.

mod problem;

pub use problem::{HorizonProblem, Layout};

use serde::Serialize;

use crate::cases::Settings;
use crate::cost::QuadraticStageCost;
use crate::error::{Error, SystemError};
use crate::qp::{find_feasible, solve_qp, QpStatus};
use crate::safe_set::OutputSafeSet;
use crate::sqp::{solve_nlp, NlpStatus, NonlinearProgram, SqpOptions};
use crate::system::{vectorize, LiftedSystem, Matrix, Vector};

/// Predicted trajectory of one horizon problem.
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    /// `x_0..x_N`.
    pub states: Vec<Vector>,
    /// `u_0..u_{N-1}`.
    pub inputs: Vec<Vector>,
    /// Terminal window `s`, normalized like the stored windows.
    pub terminal: Matrix,
    pub lambda: Vec<f64>,
    pub objective: f64,
}

impl Plan {
    pub fn horizon(&self) -> usize {
        self.inputs.len()
    }

    /// Number of stored points with positive weight.
    pub fn support(&self) -> usize {
        self.lambda.iter().filter(|&&l| l > 0.0).count()
    }

    pub fn to_z(&self, l: &Layout) -> Vector {
        let mut z = Vector::zeros(l.dim());
        for k in 0..l.horizon {
            z.rows_mut(l.u(k), l.m).copy_from(&self.inputs[k]);
            z.rows_mut(l.x(k + 1), l.n).copy_from(&self.states[k + 1]);
        }
        z.rows_mut(l.s(), l.m * l.width).copy_from(&vectorize(&self.terminal));
        z.rows_mut(l.lambda(), l.points).copy_from_slice(&self.lambda);
        z
    }

    fn from_z(p: &HorizonProblem<'_>, z: &Vector, objective: f64) -> Self {
        let l = &p.layout;
        Self {
            states: (0..=l.horizon).map(|k| p.state(z, k)).collect(),
            inputs: (0..l.horizon).map(|k| p.input(z, k)).collect(),
            terminal: p.terminal(z),
            lambda: p.weights(z).iter().map(|&v| v.max(0.0)).collect(),
            objective,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanSource {
    /// Returned by the solver.
    Optimized,
    /// The certified candidate, kept because the solver did not beat it.
    Candidate,
}

/// Per-solve record written to the diagnostics stream.
#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub objective: f64,
    pub candidate_objective: Option<f64>,
    pub source: PlanSource,
    pub status: String,
    pub solver_iterations: usize,
    pub support: usize,
    pub violation: f64,
    pub mode_sequence: Option<Vec<usize>>,
    /// Objective of every enumerated sequence, `None` when infeasible.
    pub mode_objectives: Option<Vec<Option<f64>>>,
    /// The chosen sequence attains the minimum over all sequences.
    pub enumeration_consistent: Option<bool>,
}

#[derive(Debug, Clone)]
pub struct StepSolution {
    pub plan: Plan,
    pub report: SolveReport,
}

#[derive(Debug, Clone)]
pub enum StepOutcome {
    Solved(Box<StepSolution>),
    /// No feasible plan was found from this state.
    Infeasible(String),
}

/// Result of enumerating every PWA mode sequence.
#[derive(Debug, Clone)]
pub struct Enumeration {
    pub sequences: Vec<Vec<usize>>,
    pub objectives: Vec<Option<f64>>,
    pub best: Option<(usize, Plan)>,
    pub iterations: usize,
}

pub struct LmpcController<'a> {
    sys: &'a dyn LiftedSystem,
    cost: &'a QuadraticStageCost,
    ss: &'a OutputSafeSet,
    windows: Matrix,
    costs: Vector,
    horizon: usize,
    settings: Settings,
}

impl<'a> LmpcController<'a> {
    pub fn new(sys: &'a dyn LiftedSystem, cost: &'a QuadraticStageCost, ss: &'a OutputSafeSet, settings: Settings) -> Self {
        Self { sys, cost, ss, windows: ss.stacked_windows(), costs: ss.costs(), horizon: settings.horizon, settings }
    }

    pub fn safe_set(&self) -> &OutputSafeSet {
        self.ss
    }

    pub fn problem(&self, x0: &Vector) -> HorizonProblem<'_> {
        HorizonProblem::new(self.sys, self.cost, &self.windows, &self.costs, x0.clone(), self.horizon, self.ss.width())
    }

    fn mode_sequence(&self, states: &[Vector]) -> Option<Vec<usize>> {
        let table = self.sys.pwa_modes()?;
        Some(states[..self.horizon].iter().map(|x| table.iter().position(|m| m.contains(x, 0.0)).unwrap_or(0)).collect())
    }

    fn problem_for(&self, x0: &Vector, states: &[Vector]) -> HorizonProblem<'_> {
        let p = self.problem(x0);
        match self.mode_sequence(states) {
            Some(seq) => p.with_modes(seq),
            None => p,
        }
    }

    /// Rolls the system forward while following the safe set from weights
    /// `lambda` at `x`.
    pub fn follow(&self, x: &Vector, lambda: &[f64], steps: usize) -> Result<(Vec<Vector>, Vec<Vector>, Vec<f64>), SystemError> {
        let mut states = vec![x.clone()];
        let mut inputs = Vec::with_capacity(steps);
        let mut lam = lambda.to_vec();
        for _ in 0..steps {
            let xk = states.last().unwrap();
            let u = self.sys.input_between(xk, &self.ss.combine_lifted(&lam))?;
            states.push(self.sys.dynamics(xk, &u));
            inputs.push(u);
            lam = self.ss.shift_weights(&lam);
        }
        Ok((states, inputs, lam))
    }

    /// Evaluates a plan in the problem for `x0`; `Some` when it satisfies
    /// every constraint to the certification tolerance.
    pub fn certify(&self, mut plan: Plan) -> Option<Plan> {
        let x0 = plan.states[0].clone();
        let p = self.problem_for(&x0, &plan.states);
        let z = plan.to_z(&p.layout);
        let viol = p.violation(&z).ok()?;
        if !(viol <= self.settings.certify) {
            return None;
        }
        plan.objective = p.objective(&z).ok()?;
        Some(plan)
    }

    fn plan_from_weights(&self, x: &Vector, lambda: &[f64]) -> Option<Plan> {
        let (states, inputs, lam) = self.follow(x, lambda, self.horizon).ok()?;
        let terminal = self.ss.combine(&lam);
        self.certify(Plan { states, inputs, terminal, lambda: lam, objective: f64::NAN })
    }

    /// Candidate at a state that coincides with a stored point: follows the
    /// cheapest such point.
    pub fn cold_start(&self, x: &Vector) -> Option<Plan> {
        let free = self.sys.free_state_components();
        let mut best: Option<Plan> = None;
        let mut tried = 0;
        let mut order: Vec<usize> = (0..self.ss.len()).collect();
        order.sort_by(|&a, &b| self.costs[a].total_cmp(&self.costs[b]));
        for k in order {
            let p = &self.ss.points()[k];
            let Ok(xs) = self.sys.state_map(&p.lifted(self.sys.lift_depth()).leading()) else {
                continue;
            };
            let close = (0..x.len()).filter(|i| !free.contains(i)).all(|i| (xs[i] - x[i]).abs() <= 1e-9 * (1.0 + x[i].abs()));
            if !close {
                continue;
            }
            let mut lambda = vec![0.0; self.ss.len()];
            lambda[k] = 1.0;
            if let Some(plan) = self.plan_from_weights(x, &lambda) {
                if best.as_ref().is_none_or(|b| plan.objective < b.objective) {
                    best = Some(plan);
                }
            }
            tried += 1;
            if tried >= 8 {
                break;
            }
        }
        best
    }

    /// Shifted predecessor plan at the new state.
    pub fn shifted(&self, prev: &Plan, x_next: &Vector) -> Option<Plan> {
        let n_prev = prev.horizon();
        let last = prev.states[n_prev].clone();
        let (tail_states, tail_inputs, lam) = self.follow(&last, &prev.lambda, 1).ok()?;
        let mut states = vec![x_next.clone()];
        states.extend(prev.states[2..=n_prev].iter().cloned());
        states.push(tail_states[1].clone());
        let mut inputs: Vec<Vector> = prev.inputs[1..].to_vec();
        inputs.push(tail_inputs[0].clone());
        let terminal = self.ss.combine(&lam);
        self.certify(Plan { states, inputs, terminal, lambda: lam, objective: f64::NAN })
    }

    fn sqp_options(&self) -> SqpOptions {
        SqpOptions { kkt_tol: self.settings.kkt, ..SqpOptions::default() }
    }

    /// Solves every mode sequence as an exact QP.
    pub fn enumerate_modes(&self, x: &Vector, warm: Option<&Plan>) -> Result<Enumeration, Error> {
        let table = self.sys.pwa_modes().ok_or_else(|| Error::Solver("system has no affine modes".into()))?;
        let sequences = all_sequences(table.len(), self.horizon);
        let mut objectives = Vec::with_capacity(sequences.len());
        let mut best: Option<(usize, Plan)> = None;
        let mut iterations = 0;
        for (i, seq) in sequences.iter().enumerate() {
            let p = self.problem(x).with_modes(seq.clone());
            let (qp, offset) = p.as_qp()?;
            let start = warm.map(|w| w.to_z(&p.layout));
            let sol = solve_qp(&qp, start.as_ref())?;
            iterations += sol.iterations;
            if sol.status != QpStatus::Optimal {
                objectives.push(None);
                continue;
            }
            let value = sol.objective + offset;
            objectives.push(Some(value));
            if best.as_ref().is_none_or(|(_, b)| value < b.objective) {
                best = Some((i, Plan::from_z(&p, &sol.x, value)));
            }
        }
        Ok(Enumeration { sequences, objectives, best, iterations })
    }

    /// One receding-horizon solve. `candidate` must already be certified
    /// for `x`; without one a cold start is attempted.
    pub fn solve(&self, x: &Vector, candidate: Option<Plan>) -> Result<StepOutcome, Error> {
        if let Err(reason) = self.sys.state_feasibility(x, self.settings.certify) {
            return Ok(StepOutcome::Infeasible(reason));
        }
        let candidate = candidate.or_else(|| self.cold_start(x));
        let cand_obj = candidate.as_ref().map(|c| c.objective);
        if self.sys.pwa_modes().is_some() {
            return self.solve_pwa(x, candidate);
        }
        let p = self.problem(x);
        let start = match &candidate {
            Some(c) => c.to_z(&p.layout),
            None => match self.heuristic_start(x) {
                Some(z) => z,
                None => return Ok(StepOutcome::Infeasible("no starting point".into())),
            },
        };
        let sol = solve_nlp(&p, &start, &self.sqp_options());
        let accepted = match &sol {
            Ok(s) if s.violation <= self.settings.certify => {
                let plan = Plan::from_z(&p, &s.z, s.objective);
                let plan = self.certify(plan);
                match (plan, cand_obj) {
                    (Some(pl), Some(c)) if pl.objective <= c + self.settings.certify * (1.0 + c.abs()) => Some(pl),
                    (Some(pl), None) => Some(pl),
                    _ => None,
                }
            }
            _ => None,
        };
        let (status, iterations) = match &sol {
            Ok(s) => (status_name(s.status).to_string(), s.iterations),
            Err(e) => (format!("error: {e}"), 0),
        };
        let (plan, source) = match (accepted, candidate) {
            (Some(pl), _) => (pl, PlanSource::Optimized),
            (None, Some(c)) => (c, PlanSource::Candidate),
            (None, None) => return Ok(StepOutcome::Infeasible(format!("solver finished with {status}"))),
        };
        let violation = p.violation(&plan.to_z(&p.layout))?;
        let report = SolveReport {
            objective: plan.objective,
            candidate_objective: cand_obj,
            source,
            status,
            solver_iterations: iterations,
            support: plan.support(),
            violation,
            mode_sequence: None,
            mode_objectives: None,
            enumeration_consistent: None,
        };
        Ok(StepOutcome::Solved(Box::new(StepSolution { plan, report })))
    }

    fn solve_pwa(&self, x: &Vector, candidate: Option<Plan>) -> Result<StepOutcome, Error> {
        let cand_obj = candidate.as_ref().map(|c| c.objective);
        let en = self.enumerate_modes(x, candidate.as_ref())?;
        let min = en.objectives.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let (plan, source, seq) = match (en.best, candidate) {
            (Some((_, pl)), Some(c)) if pl.objective > c.objective + self.settings.certify * (1.0 + c.objective.abs()) => {
                let seq = self.mode_sequence(&c.states);
                (c, PlanSource::Candidate, seq)
            }
            (Some((i, pl)), _) => (pl, PlanSource::Optimized, Some(en.sequences[i].clone())),
            (None, Some(c)) => {
                let seq = self.mode_sequence(&c.states);
                (c, PlanSource::Candidate, seq)
            }
            (None, None) => return Ok(StepOutcome::Infeasible("every mode sequence is infeasible".into())),
        };
        let p = self.problem_for(x, &plan.states);
        let violation = p.violation(&plan.to_z(&p.layout))?;
        let consistent = source == PlanSource::Optimized && plan.objective == min;
        let report = SolveReport {
            objective: plan.objective,
            candidate_objective: cand_obj,
            source,
            status: "optimal".into(),
            solver_iterations: en.iterations,
            support: plan.support(),
            violation,
            mode_sequence: seq,
            mode_objectives: Some(en.objectives),
            enumeration_consistent: Some(consistent),
        };
        Ok(StepOutcome::Solved(Box::new(StepSolution { plan, report })))
    }

    /// Starting point when no candidate exists: hold the equilibrium input
    /// and weight the stored point whose state is closest to the end.
    fn heuristic_start(&self, x: &Vector) -> Option<Vector> {
        if self.ss.is_empty() {
            return None;
        }
        let u = self.sys.equilibrium_input();
        let mut states = vec![x.clone()];
        for _ in 0..self.horizon {
            let next = self.sys.dynamics(states.last().unwrap(), &u);
            states.push(next);
        }
        let free = self.sys.free_state_components();
        let end = &states[self.horizon];
        let mut best = (f64::INFINITY, 0);
        for (k, p) in self.ss.points().iter().enumerate() {
            if let Ok(xs) = self.sys.state_map(&p.lifted(self.sys.lift_depth()).leading()) {
                let d: f64 = (0..x.len()).filter(|i| !free.contains(i)).map(|i| (xs[i] - end[i]).powi(2)).sum();
                if d < best.0 {
                    best = (d, k);
                }
            }
        }
        let mut lambda = vec![0.0; self.ss.len()];
        lambda[best.1] = 1.0;
        let plan = Plan { states, inputs: vec![u; self.horizon], terminal: self.ss.points()[best.1].window.clone(), lambda, objective: f64::NAN };
        Some(plan.to_z(&self.problem(x).layout))
    }

    /// Whether the horizon problem from `x` is feasible.
    pub fn in_region_of_attraction(&self, x: &Vector) -> Result<bool, Error> {
        if self.sys.state_feasibility(x, self.settings.certify).is_err() {
            return Ok(false);
        }
        if let Some(table) = self.sys.pwa_modes() {
            for seq in all_sequences(table.len(), self.horizon) {
                let (qp, _) = self.problem(x).with_modes(seq).as_qp()?;
                if find_feasible(&qp, None)?.is_some() {
                    return Ok(true);
                }
            }
            return Ok(false);
        }
        if self.cold_start(x).is_some() {
            return Ok(true);
        }
        Ok(match self.solve(x, None)? {
            StepOutcome::Solved(s) => s.report.violation <= self.settings.certify,
            StepOutcome::Infeasible(_) => false,
        })
    }
}

fn status_name(s: NlpStatus) -> &'static str {
    match s {
        NlpStatus::Converged => "converged",
        NlpStatus::MaxIter => "max_iter",
        NlpStatus::Infeasible => "infeasible",
        NlpStatus::LineSearchFailed => "line_search_failed",
        NlpStatus::QpFailure => "qp_failure",
    }
}

/// Every sequence over `modes` symbols of length `len`, in lexicographic order.
pub fn all_sequences(modes: usize, len: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|s| {
                (0..modes).map(move |m| {
                    let mut t = s.clone();
                    t.push(m);
                    t
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases::{build_default, ExampleId};

    #[test]
    fn sequences_are_lexicographic() {
        let s = all_sequences(2, 3);
        assert_eq!(s.len(), 8);
        assert_eq!(s[0], vec![0, 0, 0]);
        assert_eq!(s[1], vec![0, 0, 1]);
        assert_eq!(s[7], vec![1, 1, 1]);
    }

    fn seeded(id: ExampleId) -> (crate::cases::Example, OutputSafeSet) {
        let ex = build_default(id);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, ex.settings.tol_conv, 0).unwrap();
        (ex, ss)
    }

    #[test]
    fn cold_start_reproduces_seed_cost() {
        for id in ExampleId::ALL {
            let (ex, ss) = seeded(id);
            let c = LmpcController::new(ex.system.as_ref(), &ex.cost, &ss, ex.settings);
            let plan = c.cold_start(&ex.x_start).unwrap_or_else(|| panic!("{id:?} no candidate"));
            let c0 = ss.points()[0].cost_to_go;
            assert!((plan.objective - c0).abs() <= 1e-8 * (1.0 + c0), "{id:?}: {} vs {c0}", plan.objective);
        }
    }

    #[test]
    fn first_solve_does_not_exceed_seed_cost() {
        for id in ExampleId::ALL {
            let (ex, ss) = seeded(id);
            let c = LmpcController::new(ex.system.as_ref(), &ex.cost, &ss, ex.settings);
            let StepOutcome::Solved(s) = c.solve(&ex.x_start, None).unwrap() else {
                panic!("{id:?} infeasible");
            };
            let c0 = ss.points()[0].cost_to_go;
            assert!(s.plan.objective <= c0 + 1e-8 * (1.0 + c0), "{id:?}");
            assert!(s.report.violation <= 1e-8, "{id:?}");
        }
    }

    #[test]
    fn states_outside_the_box_are_rejected() {
        let (ex, ss) = seeded(ExampleId::Pwa);
        let c = LmpcController::new(ex.system.as_ref(), &ex.cost, &ss, ex.settings);
        let x = Vector::from_vec(vec![0.0, 30.0]);
        assert!(!c.in_region_of_attraction(&x).unwrap());
        assert!(c.in_region_of_attraction(&ex.x_start).unwrap());
    }
}
