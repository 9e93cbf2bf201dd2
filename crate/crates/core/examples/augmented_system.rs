//! Extending a system with an input compensator raises the lift depth by
//! one and makes the base input part of the state.
//!
//! `cargo run --example augmented_system`

use std::sync::Arc;

use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::system::{lifted_from_rollout, AugmentedSystem, LiftedSystem, Vector};

pub fn run() -> lifted_lmpc::Result<f64> {
    let ex = build_default(ExampleId::DcMotor);
    let aug = AugmentedSystem::new(Arc::clone(&ex.system), 0.5, 1.0)?;
    println!("{}: state dim {}, lift depth {}", aug.name(), aug.state_dim(), aug.lift_depth());
    let u0 = ex.seed.inputs[10].clone();
    let x = Vector::from_iterator(aug.state_dim(), ex.seed.states[10].iter().chain(u0.iter()).copied());
    let r = aug.lift_depth();
    let inputs: Vec<Vector> = ex.seed.inputs[11..11 + r].iter().map(|u| u - &u0 * 0.5).collect();
    let y = lifted_from_rollout(&aug, &x, &inputs)?;
    let x_rec = aug.state_map(&y.leading())?;
    let z_rec = aug.input_map(&y)?;
    let err = (&x_rec - &x).amax().max((&z_rec - &inputs[0]).amax());
    println!("augmented state  {:?}", x.as_slice());
    println!("reconstructed    {:?}", x_rec.as_slice());
    println!("round-trip error {err:.2e}");
    Ok(err)
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run().map(|_| ())
}
