//! Barycentric terminal cost over the stored windows of the PWA seed
//! trajectory: zero at equilibrium, stored cost-to-go at stored windows,
//! interpolated inside the hull and infinite outside.
//!
//! `cargo run --example terminal_cost`

use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::safe_set::OutputSafeSet;
use lifted_lmpc::system::{equilibrium_window, Matrix};

pub fn run() -> lifted_lmpc::Result<Vec<f64>> {
    let ex = build_default(ExampleId::Pwa);
    let sys = ex.system.as_ref();
    let mut ss = OutputSafeSet::new(sys, ex.width);
    ss.add_trajectory(sys, &ex.seed.outputs(sys), &ex.cost, ex.settings.tol_conv, 0)?;
    println!("{} stored windows", ss.len());
    let stored = ss.points()[5].window.clone();
    let mid = (&ss.points()[5].window + &ss.points()[6].window) * 0.5;
    let queries = [
        ("equilibrium", equilibrium_window(sys, ex.width)),
        ("stored point 5", stored),
        ("midpoint of 5 and 6", mid),
        ("outside", Matrix::from_element(1, ex.width, 3.0)),
    ];
    let mut values = Vec::new();
    for (name, q) in queries {
        let tc = ss.terminal_cost(sys, &q)?;
        println!("{name:<22} Q = {:.6}", tc.value);
        values.push(tc.value);
    }
    println!("stored cost-to-go of point 5: {:.6}", ss.points()[5].cost_to_go);
    Ok(values)
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    run().map(|_| ())
}
