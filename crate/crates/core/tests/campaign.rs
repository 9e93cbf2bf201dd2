use lifted_lmpc::cases::{build, build_default, ExampleConfig, ExampleId, Overrides};
use lifted_lmpc::closed_loop::{costs_csv, performance_slack, run_campaign};
use lifted_lmpc::controller::LmpcController;
use lifted_lmpc::qp::{solve_qp, QpStatus};
use lifted_lmpc::safe_set::OutputSafeSet;
use lifted_lmpc::system::Vector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn short(id: ExampleId, j_max: usize) -> ExampleConfig {
    ExampleConfig { overrides: Overrides { j_max: Some(j_max), ..Default::default() }, ..ExampleConfig::new(id) }
}

#[test]
fn short_campaigns_pass_their_checks() {
    for id in ExampleId::ALL {
        let ex = build(&short(id, 3)).unwrap();
        let campaign = run_campaign(&ex, |_| {}).unwrap();
        assert!(campaign.passed(), "{id:?}: {:?}", campaign.failure);
        assert_eq!(campaign.records.len(), 3);
        let costs = campaign.costs();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] + performance_slack(w[0]), "{id:?}: {costs:?}");
        }
        for r in &campaign.records {
            // Cost recomputed from the realized closed loop.
            let direct: f64 = r.stage_costs.iter().sum();
            assert!((direct - r.cost).abs() <= 1e-9 * (1.0 + r.cost), "{id:?}");
            assert_eq!(r.states.len(), r.inputs.len() + 1);
            let mut x = r.states[0].clone();
            for (k, u) in r.inputs.iter().enumerate() {
                x = ex.system.dynamics(&x, u);
                assert!((&x - &r.states[k + 1]).amax() <= 1e-9 * (1.0 + x.amax()), "{id:?}");
            }
        }
        // Every stored state of every iteration is in the region of attraction.
        let ctl = LmpcController::new(ex.system.as_ref(), &ex.cost, &campaign.safe_set, ex.settings);
        assert!(ctl.in_region_of_attraction(&ex.x_start).unwrap(), "{id:?}");
    }
}

#[test]
fn campaigns_are_deterministic() {
    let a = run_campaign(&build(&short(ExampleId::Pwa, 4)).unwrap(), |_| {}).unwrap();
    let b = run_campaign(&build(&short(ExampleId::Pwa, 4)).unwrap(), |_| {}).unwrap();
    assert_eq!(costs_csv(&a.costs()), costs_csv(&b.costs()));
}

#[test]
fn enumeration_beats_any_feasible_mode_sequence() {
    let ex = build_default(ExampleId::Pwa);
    let sys = ex.system.as_ref();
    let modes = sys.pwa_modes().unwrap();
    let mut ss = OutputSafeSet::new(sys, ex.width);
    ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, ex.settings.tol_conv, 0).unwrap();
    let ctl = LmpcController::new(sys, &ex.cost, &ss, ex.settings);
    let n = ex.settings.horizon;
    let mut rng = ChaCha8Rng::seed_from_u64(300);
    let mut compared = 0;
    for x in ex.seed.states.iter().take(12) {
        let en = ctl.enumerate_modes(x, None).unwrap();
        let Some((_, best)) = &en.best else { continue };
        for _ in 0..10 {
            let mut xk = x.clone();
            let mut seq = Vec::with_capacity(n);
            for _ in 0..n {
                let mode = modes.iter().position(|m| m.contains(&xk, 0.0)).unwrap();
                seq.push(mode);
                xk = modes[mode].step(&xk, &Vector::from_element(1, rng.random_range(-10.0..2.0)));
            }
            let p = ctl.problem(x).with_modes(seq.clone());
            let (qp, offset) = p.as_qp().unwrap();
            let sol = solve_qp(&qp, None).unwrap();
            if sol.status != QpStatus::Optimal {
                continue;
            }
            let external = sol.objective + offset;
            assert!(best.objective <= external + 1e-7 * (1.0 + external.abs()), "{seq:?}: {} > {external}", best.objective);
            compared += 1;
        }
    }
    assert!(compared > 0);
}

#[test]
fn mode_enumeration_is_internally_consistent() {
    let ex = build(&short(ExampleId::Pwa, 3)).unwrap();
    let campaign = run_campaign(&ex, |_| {}).unwrap();
    for r in &campaign.records[1..] {
        assert_eq!(r.checks.enumeration_inconsistencies, 0);
        for rep in &r.reports {
            let objs = rep.mode_objectives.as_ref().unwrap();
            assert_eq!(objs.len(), 8);
            let min = objs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            assert_eq!(rep.objective, min);
        }
    }
}
