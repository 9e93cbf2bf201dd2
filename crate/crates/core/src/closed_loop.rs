//! Iterations of the learning controller from a fixed start, with the
//! feasibility, decrease, convergence and cost checks evaluated online.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::cases::{Example, ExampleConfig};
use crate::controller::{LmpcController, PlanSource, SolveReport, StepOutcome};
use crate::error::{Error, Result};
use crate::safe_set::{convergence_index, OutputSafeSet};
use crate::system::{box_violation, simulate, LiftedSystem, Vector};

/// Online checks of one iteration. Violations are counted, not raised, so
/// a failing run still produces complete artifacts.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationChecks {
    /// Every solve returned a plan.
    pub recursively_feasible: bool,
    pub converged: bool,
    /// Steps with `J(x+) > J(x) - C + slack`.
    pub decrease_violations: usize,
    pub max_decrease_excess: f64,
    /// Largest box violation over visited states and applied inputs.
    pub box_violation: f64,
    /// Largest violation of the linear state rows.
    pub row_violation: f64,
    pub enumeration_inconsistencies: usize,
    /// Steps whose shifted predecessor failed certification.
    pub candidate_failures: usize,
    /// Steps that kept the candidate instead of the solver output.
    pub fallbacks: usize,
    /// `J_0` minus the previous iteration's cost; never positive.
    pub initial_excess: f64,
    /// State distance to equilibrium at the convergence index.
    pub state_distance_at_convergence: f64,
    /// Closed-loop stage-cost sum minus the stored cost-to-go at `t = 0`.
    pub cost_mismatch: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub states: Vec<Vector>,
    /// One shorter than `states`.
    pub inputs: Vec<Vector>,
    pub outputs: Vec<Vector>,
    pub stage_costs: Vec<f64>,
    /// Stored cost-to-go of the first point.
    pub cost: f64,
    pub convergence_time: Option<usize>,
    pub checks: IterationChecks,
    #[serde(skip)]
    pub reports: Vec<SolveReport>,
}

fn max_abs_diff(free: &[usize], a: &Vector, b: &Vector) -> f64 {
    (0..a.len()).filter(|i| !free.contains(i)).map(|i| (a[i] - b[i]).abs()).fold(0.0, f64::max)
}

fn row_violation(sys: &dyn LiftedSystem, x: &Vector) -> f64 {
    let (g, h) = sys.state_rows();
    if g.nrows() == 0 {
        return 0.0;
    }
    (g * x - h).max().max(0.0)
}

/// State test: the last `R` states are within `tol` of equilibrium on
/// every non-free component.
fn states_settled(sys: &dyn LiftedSystem, states: &[Vector], tol: f64) -> bool {
    let r = sys.lift_depth();
    if states.len() < r {
        return false;
    }
    let free = sys.free_state_components();
    let eq = sys.equilibrium_state();
    states[states.len() - r..].iter().all(|x| max_abs_diff(&free, x, &eq) <= tol)
}

/// Closed-loop iteration `j` against the frozen safe set.
pub fn run_iteration(ex: &Example, ss: &OutputSafeSet, j: usize) -> Result<IterationRecord> {
    let sys = ex.system.as_ref();
    let s = &ex.settings;
    let ctl = LmpcController::new(sys, &ex.cost, ss, *s);
    let free = sys.free_state_components();
    let prev_cost = ss
        .points()
        .iter()
        .find(|p| p.iteration + 1 == j && p.time == 0)
        .map(|p| p.cost_to_go)
        .ok_or_else(|| Error::ClosedLoop(format!("no stored trajectory for iteration {}", j - 1)))?;

    let mut checks = IterationChecks { recursively_feasible: true, ..Default::default() };
    let mut x = ex.x_start.clone();
    let mut states = vec![x.clone()];
    let mut outputs = vec![sys.output(&x)];
    let mut inputs = Vec::new();
    let mut stage_costs = Vec::new();
    let mut reports = Vec::new();
    let mut candidate = None;
    let mut previous: Option<(f64, f64)> = None;
    checks.box_violation = box_violation(&sys.state_bounds(), &x);
    checks.row_violation = row_violation(sys, &x);

    let mut t_conv = None;
    let eq = sys.equilibrium_state();
    for t in 0..s.max_steps {
        if max_abs_diff(&free, &x, &eq) == 0.0 {
            t_conv = Some(t);
            break;
        }
        if let Some(tc) = convergence_index(sys, &outputs, ex.width, s.tol_conv) {
            if states_settled(sys, &states, s.tol_conv) {
                t_conv = Some(tc);
                break;
            }
        }
        let step = match ctl.solve(&x, candidate.take())? {
            StepOutcome::Solved(step) => step,
            StepOutcome::Infeasible(reason) => {
                log::warn!("iteration {j}, step {t}: no feasible plan ({reason})");
                checks.recursively_feasible = false;
                break;
            }
        };
        let objective = step.plan.objective;
        if t == 0 {
            checks.initial_excess = objective - prev_cost;
        }
        if let Some((j_prev, c_prev)) = previous {
            let excess = objective - (j_prev - c_prev);
            checks.max_decrease_excess = checks.max_decrease_excess.max(excess);
            if excess > s.cost_decrease {
                checks.decrease_violations += 1;
            }
        }
        if step.report.enumeration_consistent == Some(false) {
            checks.enumeration_inconsistencies += 1;
        }
        if step.report.source == PlanSource::Candidate {
            checks.fallbacks += 1;
        }
        let u = step.plan.inputs[0].clone();
        let stage = ex.cost.eval(&x, &u);
        let x_next = sys.dynamics(&x, &u);
        checks.box_violation = checks.box_violation.max(box_violation(&sys.input_bounds(), &u)).max(box_violation(&sys.state_bounds(), &x_next));
        checks.row_violation = checks.row_violation.max(row_violation(sys, &x_next));
        candidate = ctl.shifted(&step.plan, &x_next);
        if candidate.is_none() {
            checks.candidate_failures += 1;
        }
        log::debug!("iteration {j}, step {t}: J = {objective:.9e}, support {}", step.report.support);
        previous = Some((objective, stage));
        reports.push(step.report);
        inputs.push(u);
        stage_costs.push(stage);
        outputs.push(sys.output(&x_next));
        states.push(x_next.clone());
        x = x_next;
    }
    if t_conv.is_none() && checks.recursively_feasible {
        if let Some(tc) = convergence_index(sys, &outputs, ex.width, s.tol_conv) {
            if states_settled(sys, &states, s.tol_conv) {
                t_conv = Some(tc);
            }
        }
    }
    checks.converged = t_conv.is_some();
    if let Some(tc) = t_conv {
        checks.state_distance_at_convergence = max_abs_diff(&free, &states[tc], &sys.equilibrium_state());
    }
    Ok(IterationRecord { iteration: j, states, inputs, outputs, stage_costs, cost: f64::NAN, convergence_time: t_conv, checks, reports })
}

fn seed_record(ex: &Example, ss: &OutputSafeSet) -> IterationRecord {
    let sys = ex.system.as_ref();
    let states = simulate(sys, &ex.x_start, &ex.seed.inputs);
    let stage_costs = states.iter().zip(&ex.seed.inputs).map(|(x, u)| ex.cost.eval(x, u)).collect();
    let outputs = states.iter().map(|x| sys.output(x)).collect();
    let cost = ss.points().first().map_or(0.0, |p| p.cost_to_go);
    IterationRecord {
        iteration: 0,
        convergence_time: convergence_index(sys, &ex.seed.outputs(sys), ex.width, ex.settings.tol_conv),
        states,
        inputs: ex.seed.inputs.clone(),
        outputs,
        stage_costs,
        cost,
        checks: IterationChecks { recursively_feasible: true, converged: true, ..Default::default() },
        reports: Vec::new(),
    }
}

/// Iteration costs and records of a campaign. `failure` names the first
/// violated check; the campaign stops there.
#[derive(Debug, Clone)]
pub struct Campaign {
    pub records: Vec<IterationRecord>,
    pub safe_set: OutputSafeSet,
    pub failure: Option<String>,
}

impl Campaign {
    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.cost).collect()
    }

    pub fn passed(&self) -> bool {
        self.failure.is_none()
    }
}

/// Slack on consecutive iteration costs.
pub fn performance_slack(previous: f64) -> f64 {
    1e-6 * (1.0 + previous)
}

fn iteration_failure(ex: &Example, rec: &IterationRecord, previous: f64) -> Option<String> {
    let c = &rec.checks;
    let j = rec.iteration;
    if !c.recursively_feasible {
        return Some(format!("iteration {j}: horizon problem became infeasible"));
    }
    if !c.converged {
        return Some(format!("iteration {j}: no convergence within {} steps", ex.settings.max_steps));
    }
    if c.decrease_violations > 0 {
        return Some(format!("iteration {j}: {} one-step decrease violations (max excess {:e})", c.decrease_violations, c.max_decrease_excess));
    }
    if c.initial_excess > ex.settings.certify * (1.0 + previous) {
        return Some(format!("iteration {j}: first objective exceeds previous cost by {:e}", c.initial_excess));
    }
    if c.box_violation > 1e-8 || c.row_violation > 1e-8 {
        return Some(format!("iteration {j}: constraint violation {:e}", c.box_violation.max(c.row_violation)));
    }
    if c.enumeration_inconsistencies > 0 {
        return Some(format!("iteration {j}: {} inconsistent mode enumerations", c.enumeration_inconsistencies));
    }
    if c.state_distance_at_convergence > 100.0 * ex.settings.tol_conv {
        return Some(format!("iteration {j}: outputs settled but state is {:e} from equilibrium", c.state_distance_at_convergence));
    }
    if c.cost_mismatch.abs() > 1e-6 * (1.0 + rec.cost) {
        return Some(format!("iteration {j}: closed-loop cost differs from stored cost by {:e}", c.cost_mismatch));
    }
    if rec.cost > previous + performance_slack(previous) {
        return Some(format!("iteration {j}: cost {} exceeds previous {previous}", rec.cost));
    }
    None
}

/// Outputs of a record followed by the continuation under the equilibrium
/// input, long enough to close every stored window.
fn held_outputs(ex: &Example, rec: &IterationRecord) -> Vec<Vector> {
    let sys = ex.system.as_ref();
    let hold = vec![sys.equilibrium_input(); ex.width + sys.lift_depth()];
    let tail = simulate(sys, rec.states.last().expect("non-empty"), &hold);
    let mut out = rec.outputs.clone();
    out.extend(tail[1..].iter().map(|x| sys.output(x)));
    out
}

/// Runs the seed plus `j_max - 1` learning iterations from `x_start`.
pub fn run_campaign(ex: &Example, mut progress: impl FnMut(&IterationRecord)) -> Result<Campaign> {
    let sys = ex.system.as_ref();
    let s = &ex.settings;
    let mut ss = OutputSafeSet::new(sys, ex.width);
    ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, s.tol_conv, 0)?;
    let seed = seed_record(ex, &ss);
    progress(&seed);
    let mut records = vec![seed];
    let mut failure = None;
    for j in 1..s.j_max {
        let mut rec = run_iteration(ex, &ss, j)?;
        let previous = records.last().map_or(f64::INFINITY, |r| r.cost);
        if rec.checks.converged {
            let before = ss.len();
            ss.add_trajectory(sys, &held_outputs(ex, &rec), &ex.cost, s.tol_conv, j)?;
            rec.cost = ss.points()[before].cost_to_go;
            rec.checks.cost_mismatch = rec.stage_costs.iter().sum::<f64>() - rec.cost;
        }
        failure = iteration_failure(ex, &rec, previous);
        log::info!("iteration {j}: cost {:.9e}, {} steps", rec.cost, rec.inputs.len());
        progress(&rec);
        records.push(rec);
        if failure.is_some() {
            break;
        }
    }
    Ok(Campaign { records, safe_set: ss, failure })
}

/// Writes `trajectories.csv`, `costs.csv`, `diagnostics.jsonl`,
/// `summary.json`, `safe_set.json` and `config.json` into `dir`.
pub fn write_artifacts(dir: &Path, ex: &Example, config: &ExampleConfig, campaign: &Campaign) -> Result<()> {
    fs::create_dir_all(dir)?;
    let sys = ex.system.as_ref();
    let (n, m, p) = (sys.state_dim(), sys.input_dim(), sys.output_dim());

    let mut w = csv::Writer::from_path(dir.join("trajectories.csv"))?;
    let mut header = vec!["j".to_string(), "t".to_string()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend((0..m).map(|i| format!("u{i}")));
    header.extend((0..p).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    let u_eq = sys.equilibrium_input();
    for rec in &campaign.records {
        for (t, x) in rec.states.iter().enumerate() {
            let u = rec.inputs.get(t).unwrap_or(&u_eq);
            let y = &rec.outputs[t];
            let mut row = vec![rec.iteration.to_string(), t.to_string()];
            row.extend(x.iter().chain(u.iter()).chain(y.iter()).map(|v| v.to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush()?;

    fs::write(dir.join("costs.csv"), costs_csv(&campaign.costs()))?;

    let mut diag = fs::File::create(dir.join("diagnostics.jsonl"))?;
    for rec in &campaign.records {
        for (t, r) in rec.reports.iter().enumerate() {
            #[derive(Serialize)]
            struct Line<'a> {
                iteration: usize,
                t: usize,
                #[serde(flatten)]
                report: &'a SolveReport,
            }
            serde_json::to_writer(&mut diag, &Line { iteration: rec.iteration, t, report: r })?;
            diag.write_all(b"\n")?;
        }
    }

    #[derive(Serialize)]
    struct Summary<'a> {
        example: &'a str,
        passed: bool,
        failure: &'a Option<String>,
        iterations: Vec<IterationSummary<'a>>,
    }
    #[derive(Serialize)]
    struct IterationSummary<'a> {
        iteration: usize,
        cost: f64,
        steps: usize,
        convergence_time: Option<usize>,
        checks: &'a IterationChecks,
    }
    let summary = Summary {
        example: ex.id.as_str(),
        passed: campaign.passed(),
        failure: &campaign.failure,
        iterations: campaign
            .records
            .iter()
            .map(|r| IterationSummary { iteration: r.iteration, cost: r.cost, steps: r.inputs.len(), convergence_time: r.convergence_time, checks: &r.checks })
            .collect(),
    };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    fs::write(dir.join("safe_set.json"), campaign.safe_set.to_json()?)?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(config)?)?;
    Ok(())
}

/// `j,cost` rows with shortest round-trip formatting.
pub fn costs_csv(costs: &[f64]) -> String {
    let mut out = String::from("j,cost\n");
    for (j, c) in costs.iter().enumerate() {
        out.push_str(&format!("{j},{c:?}\n"));
    }
    out
}
