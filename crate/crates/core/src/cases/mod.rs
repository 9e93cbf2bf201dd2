//! The three benchmark systems, their configuration schema and seed
//! trajectories.

pub mod dc_motor;
pub mod pwa;
pub mod unicycle;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cost::QuadraticStageCost;
use crate::error::ConfigError;
use crate::system::{Bound, LiftedSystem, Matrix, Rollout, Vector};

pub use dc_motor::{DcMotor, DcParams};
pub use pwa::PwaSystem;
pub use unicycle::Unicycle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleId {
    Pwa,
    DcMotor,
    Unicycle,
}

impl ExampleId {
    pub const ALL: [ExampleId; 3] = [ExampleId::Pwa, ExampleId::DcMotor, ExampleId::Unicycle];

    pub fn as_str(self) -> &'static str {
        match self {
            ExampleId::Pwa => "pwa",
            ExampleId::DcMotor => "dc_motor",
            ExampleId::Unicycle => "unicycle",
        }
    }
}

impl std::str::FromStr for ExampleId {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ExampleId::ALL.into_iter().find(|e| e.as_str() == s).ok_or_else(|| ConfigError::UnknownExample(s.to_string()))
    }
}

/// `[lower, upper]`; `null` leaves a component unbounded.
pub type BoundSpec = Option<[f64; 2]>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsOverride {
    pub state: Option<Vec<BoundSpec>>,
    pub input: Option<Vec<BoundSpec>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverride {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol_conv: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_decrease: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<BoundsOverride>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    #[serde(rename = "N")]
    pub horizon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub j_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<ToleranceOverride>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExampleConfig {
    pub example: String,
    #[serde(default, skip_serializing_if = "is_default")]
    pub overrides: Overrides,
}

impl ExampleConfig {
    pub fn new(id: ExampleId) -> Self {
        Self { example: id.as_str().to_string(), overrides: Overrides::default() }
    }

    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        serde_json::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn id(&self) -> Result<ExampleId, ConfigError> {
        self.example.parse()
    }
}

fn is_default(o: &Overrides) -> bool {
    *o == Overrides::default()
}

/// Horizon, iteration count and numerical tolerances of a campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Settings {
    pub horizon: usize,
    pub j_max: usize,
    pub tol_conv: f64,
    pub max_steps: usize,
    /// Slack in the one-step decrease `J(x+) <= J(x) - C + slack`.
    pub cost_decrease: f64,
    /// Residual below which a shifted candidate counts as feasible.
    pub certify: f64,
    pub kkt: f64,
}

/// A fully built benchmark: system, cost, width of stored windows and the
/// iteration-0 trajectory.
#[derive(Clone)]
pub struct Example {
    pub id: ExampleId,
    pub system: Arc<dyn LiftedSystem>,
    pub cost: QuadraticStageCost,
    /// Stored window width: `R`, or `R + 1` when the cost prices inputs.
    pub width: usize,
    pub x_start: Vector,
    pub seed: Rollout,
    pub settings: Settings,
}

impl std::fmt::Debug for Example {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Example").field("id", &self.id).field("width", &self.width).field("settings", &self.settings).finish()
    }
}

pub const PWA_MAX_HORIZON: usize = 12;

pub fn build(config: &ExampleConfig) -> Result<Example, ConfigError> {
    let id = config.id()?;
    let o = &config.overrides;
    let ex = match id {
        ExampleId::Pwa => build_pwa(o)?,
        ExampleId::DcMotor => build_dc(o)?,
        ExampleId::Unicycle => build_unicycle(o)?,
    };
    if ex.settings.horizon == 0 {
        return Err(invalid("N", "horizon must be at least 1"));
    }
    if id == ExampleId::Pwa && ex.settings.horizon > PWA_MAX_HORIZON {
        return Err(invalid("N", format!("mode enumeration supports at most {PWA_MAX_HORIZON} steps")));
    }
    if ex.settings.j_max == 0 {
        return Err(invalid("j_max", "at least one iteration is required"));
    }
    Ok(ex)
}

pub fn build_default(id: ExampleId) -> Example {
    build(&ExampleConfig::new(id)).expect("default configuration is valid")
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::InvalidOverride { field: field.to_string(), reason: reason.into() }
}

fn settings(o: &Overrides, horizon: usize, tol_conv: f64, max_steps: usize) -> Result<Settings, ConfigError> {
    let t = o.tolerances.clone().unwrap_or_default();
    let s = Settings {
        horizon: o.horizon.unwrap_or(horizon),
        j_max: o.j_max.unwrap_or(10),
        tol_conv: t.tol_conv.unwrap_or(tol_conv),
        max_steps: t.max_steps.unwrap_or(max_steps),
        cost_decrease: t.cost_decrease.unwrap_or(1e-6),
        certify: t.certify.unwrap_or(1e-8),
        kkt: t.kkt.unwrap_or(1e-6),
    };
    for (name, v) in
        [("tolerances.tol_conv", s.tol_conv), ("tolerances.cost_decrease", s.cost_decrease), ("tolerances.certify", s.certify), ("tolerances.kkt", s.kkt)]
    {
        if !(v.is_finite() && v > 0.0) {
            return Err(invalid(name, format!("must be positive, got {v}")));
        }
    }
    if s.max_steps == 0 {
        return Err(invalid("tolerances.max_steps", "must be positive"));
    }
    Ok(s)
}

fn dt(o: &Overrides, default: f64) -> Result<f64, ConfigError> {
    let dt = o.dt.unwrap_or(default);
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid("dt", format!("must be positive, got {dt}")));
    }
    Ok(dt)
}

fn params(o: &Overrides, known: &[&str]) -> Result<BTreeMap<String, f64>, ConfigError> {
    let p = o.params.clone().unwrap_or_default();
    for (k, v) in &p {
        if !known.contains(&k.as_str()) {
            return Err(invalid(&format!("params.{k}"), format!("unknown parameter; expected one of {known:?}")));
        }
        if !v.is_finite() {
            return Err(invalid(&format!("params.{k}"), "must be finite"));
        }
    }
    Ok(p)
}

fn bounds(spec: Option<&Vec<BoundSpec>>, default: Vec<Bound>, what: &str) -> Result<Vec<Bound>, ConfigError> {
    let Some(spec) = spec else { return Ok(default) };
    if spec.len() != default.len() {
        return Err(invalid(&format!("bounds.{what}"), format!("expected {} entries, got {}", default.len(), spec.len())));
    }
    spec.iter()
        .map(|b| match b {
            None => Ok(Bound::Free),
            Some([lo, hi]) if lo <= hi && !lo.is_nan() && !hi.is_nan() => Ok(Bound::interval(*lo, *hi)),
            Some([lo, hi]) => Err(invalid(&format!("bounds.{what}"), format!("empty interval [{lo}, {hi}]"))),
        })
        .collect()
}

fn apply_bounds(o: &Overrides, sys: &dyn LiftedSystem) -> Result<(Vec<Bound>, Vec<Bound>), ConfigError> {
    let b = o.bounds.clone().unwrap_or_default();
    Ok((bounds(b.state.as_ref(), sys.state_bounds(), "state")?, bounds(b.input.as_ref(), sys.input_bounds(), "input")?))
}

fn check_start(sys: &dyn LiftedSystem, x: &Vector) -> Result<(), ConfigError> {
    sys.state_feasibility(x, 1e-9).map_err(|r| ConfigError::Seed(format!("initial state infeasible: {r}")))
}

fn check_seed(sys: &dyn LiftedSystem, seed: &Rollout) -> Result<(), ConfigError> {
    for (t, x) in seed.states.iter().enumerate() {
        sys.state_feasibility(x, 1e-7).map_err(|r| ConfigError::Seed(format!("step {t}: {r}")))?;
    }
    for (t, u) in seed.inputs.iter().enumerate() {
        if !crate::system::box_membership(&sys.input_bounds(), u, 1e-7) {
            return Err(ConfigError::Seed(format!("step {t}: input {:?} outside the input box", u.as_slice())));
        }
    }
    Ok(())
}

fn build_pwa(o: &Overrides) -> Result<Example, ConfigError> {
    let p = params(o, &["rho", "seed_horizon"])?;
    let base = PwaSystem::new(dt(o, 0.2)?);
    let (sb, ib) = apply_bounds(o, &base)?;
    let sys = base.with_bounds(sb, ib);
    let x_start = Vector::from_vec(vec![-5.0, 0.0]);
    check_start(&sys, &x_start)?;
    let st = settings(o, 3, 1e-6, 500)?;
    let seed_horizon = p.get("seed_horizon").copied().unwrap_or(30.0);
    if seed_horizon < 2.0 || seed_horizon.fract() != 0.0 {
        return Err(invalid("params.seed_horizon", "must be an integer of at least 2"));
    }
    let seed = pwa::seed_trajectory(&sys, &x_start, seed_horizon as usize, p.get("rho").copied().unwrap_or(100.0), sys.lift_depth() + 2)?;
    check_seed(&sys, &seed)?;
    let cost = QuadraticStageCost::new(sys.stage_weight(), Matrix::zeros(1, 1), Vector::zeros(2), sys.equilibrium_input());
    Ok(Example { id: ExampleId::Pwa, system: Arc::new(sys), cost, width: 2, x_start, seed, settings: st })
}

fn build_dc(o: &Overrides) -> Result<Example, ConfigError> {
    let p = params(o, &["inductance", "resistance", "torque_constant", "inertia", "damping", "current", "speed", "ramp_steps"])?;
    let d = DcParams::default();
    let get = |k: &str, v: f64| p.get(k).copied().unwrap_or(v);
    let dp = DcParams {
        inductance: get("inductance", d.inductance),
        resistance: get("resistance", d.resistance),
        torque_constant: get("torque_constant", d.torque_constant),
        inertia: get("inertia", d.inertia),
        damping: get("damping", d.damping),
        dt: dt(o, d.dt)?,
    };
    for (k, v) in [("inductance", dp.inductance), ("torque_constant", dp.torque_constant), ("inertia", dp.inertia)] {
        if v <= 0.0 {
            return Err(invalid(&format!("params.{k}"), "must be positive"));
        }
    }
    let current = get("current", 0.5);
    if current <= dc_motor::MIN_CURRENT {
        return Err(invalid("params.current", "must be positive"));
    }
    let speed = get("speed", 6.0);
    let ramp = get("ramp_steps", 100.0);
    if ramp < 1.0 || ramp.fract() != 0.0 {
        return Err(invalid("params.ramp_steps", "must be a positive integer"));
    }
    let base = DcMotor::new(dp, current, speed);
    let (sb, ib) = apply_bounds(o, &base)?;
    let sys = base.with_bounds(sb, ib);
    let x_start = Vector::from_vec(vec![current, 0.0, 0.0]);
    check_start(&sys, &x_start)?;
    let st = settings(o, 5, 1e-6, 3000)?;
    let seed = dc_motor::seed_trajectory(&sys, &x_start, ramp as usize, 20)?;
    check_seed(&sys, &seed)?;
    // Reference current and field current from the tail of the seed.
    let tail = 10.min(seed.inputs.len());
    let i_star = seed.states[seed.states.len() - tail..].iter().map(|x| x[0]).sum::<f64>() / tail as f64;
    let u1_star = seed.inputs[seed.inputs.len() - tail..].iter().map(|u| u[0]).sum::<f64>() / tail as f64;
    let cost = QuadraticStageCost::new(
        Matrix::from_diagonal(&Vector::from_vec(vec![20.0, 0.0, 20.0])),
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0])),
        Vector::from_vec(vec![i_star, 0.0, speed]),
        Vector::from_vec(vec![u1_star, 0.0]),
    );
    Ok(Example { id: ExampleId::DcMotor, system: Arc::new(sys), cost, width: 3, x_start, seed, settings: st })
}

fn build_unicycle(o: &Overrides) -> Result<Example, ConfigError> {
    let p = params(o, &["target_x", "target_y"])?;
    let target = (p.get("target_x").copied().unwrap_or(5.0), p.get("target_y").copied().unwrap_or(10.0));
    let base = Unicycle::new(dt(o, 0.1)?, target);
    let (sb, ib) = apply_bounds(o, &base)?;
    let sys = base.with_bounds(sb, ib);
    let seed = unicycle::seed_trajectory(&sys, sys.lift_depth() + 2);
    let x_start = seed.states[0].clone();
    check_start(&sys, &x_start)?;
    check_seed(&sys, &seed)?;
    let st = settings(o, 5, 1e-4, 500)?;
    let cost = QuadraticStageCost::new(
        Matrix::from_diagonal(&Vector::from_vec(vec![20.0, 20.0, 0.0])),
        Matrix::from_diagonal(&Vector::from_vec(vec![1.0, 0.0])),
        Vector::from_vec(vec![target.0, target.1, 0.0]),
        Vector::zeros(2),
    );
    Ok(Example { id: ExampleId::Unicycle, system: Arc::new(sys), cost, width: 3, x_start, seed, settings: st })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_case_studies() {
        let pwa = build_default(ExampleId::Pwa);
        assert_eq!(pwa.settings.horizon, 3);
        assert_eq!(pwa.system.input_bounds(), vec![Bound::interval(-10.0, 2.0)]);
        let uni = build_default(ExampleId::Unicycle);
        assert_eq!(uni.system.equilibrium_state().rows(0, 2).as_slice(), &[5.0, 10.0]);
        let dc = build_default(ExampleId::DcMotor);
        assert_eq!(dc.settings.horizon, 5);
        assert!((dc.cost.x_ref[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn zero_horizon_is_rejected() {
        let cfg = ExampleConfig::from_json(r#"{"example": "pwa", "overrides": {"N": 0}}"#).unwrap();
        assert!(matches!(build(&cfg), Err(ConfigError::InvalidOverride { .. })));
    }

    #[test]
    fn unknown_inputs_are_rejected() {
        assert!(matches!(build(&ExampleConfig::new(ExampleId::Pwa).tap_example("cartpole")), Err(ConfigError::UnknownExample(_))));
        assert!(matches!(ExampleConfig::from_json(r#"{"example": "pwa", "overrides": {"horizon": 3}}"#), Err(ConfigError::Parse(_))));
        let cfg = ExampleConfig::from_json(r#"{"example": "dc_motor", "overrides": {"params": {"mass": 1.0}}}"#).unwrap();
        assert!(matches!(build(&cfg), Err(ConfigError::InvalidOverride { .. })));
    }

    #[test]
    fn bound_overrides_apply() {
        let cfg = ExampleConfig::from_json(r#"{"example": "pwa", "overrides": {"bounds": {"input": [[-8.0, 2.0]]}, "N": 4}}"#).unwrap();
        let ex = build(&cfg).unwrap();
        assert_eq!(ex.system.input_bounds(), vec![Bound::interval(-8.0, 2.0)]);
        assert_eq!(ex.settings.horizon, 4);
    }

    impl ExampleConfig {
        fn tap_example(mut self, name: &str) -> Self {
            self.example = name.to_string();
            self
        }
    }
}
