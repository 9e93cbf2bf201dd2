//! Output windows, shifts and the state and input reconstruction maps of
//! the three benchmark systems.
//!
//! `cargo run --example lifted_maps`

use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::system::{lifted_from_rollout, Vector};

pub fn run() -> lifted_lmpc::Result<()> {
    for id in ExampleId::ALL {
        let ex = build_default(id);
        let sys = ex.system.as_ref();
        let r = sys.lift_depth();
        let x = ex.seed.states[3].clone();
        let inputs: Vec<Vector> = ex.seed.inputs[3..3 + r].to_vec();
        let y = lifted_from_rollout(sys, &x, &inputs)?;
        let x_rec = sys.state_map(&y.leading())?;
        let u_rec = sys.input_map(&y)?;
        println!("{}  (R = {r})", sys.name());
        println!("  x        {:?}", x.as_slice());
        println!("  F_x      {:?}", x_rec.as_slice());
        println!("  u        {:?}", inputs[0].as_slice());
        println!("  F_u      {:?}", u_rec.as_slice());
        let next = sys.output(&sys.dynamics(&sys.dynamics(&x, &inputs[0]), &inputs[1]));
        let shifted = y.leading().forward_shift(&next)?;
        println!("  shifted  {:?}", shifted.as_slice());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run()
}
