//! One receding-horizon solve from the start state of each benchmark
//! against the safe set built from its seed trajectory.
//!
//! `cargo run --example horizon_step`

use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::controller::{LmpcController, StepOutcome};
use lifted_lmpc::safe_set::OutputSafeSet;

pub fn run() -> lifted_lmpc::Result<()> {
    for id in ExampleId::ALL {
        let ex = build_default(id);
        let sys = ex.system.as_ref();
        let mut ss = OutputSafeSet::new(sys, ex.width);
        ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, ex.settings.tol_conv, 0)?;
        let ctl = LmpcController::new(sys, &ex.cost, &ss, ex.settings);
        match ctl.solve(&ex.x_start, None)? {
            StepOutcome::Solved(s) => {
                println!(
                    "{}: J = {:.6} (seed cost {:.6}), source {:?}, support {}",
                    sys.name(),
                    s.plan.objective,
                    ss.points()[0].cost_to_go,
                    s.report.source,
                    s.report.support
                );
                println!("  first input {:?}", s.plan.inputs[0].as_slice());
                if let Some(seq) = &s.report.mode_sequence {
                    println!("  mode sequence {seq:?}");
                }
            }
            StepOutcome::Infeasible(why) => println!("{}: infeasible ({why})", sys.name()),
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run()
}
