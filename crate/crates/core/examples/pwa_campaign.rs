//! Full campaign for the `pwa` benchmark: seed trajectory plus learning
//! iterations, with the cost table and the outcome of the online checks.
//!
//! `cargo run --example pwa_campaign [iterations]`

use lifted_lmpc::cases::{build, ExampleConfig, ExampleId, Overrides};
use lifted_lmpc::closed_loop::run_campaign;

pub fn run(iterations: usize) -> lifted_lmpc::Result<Vec<f64>> {
    let config = ExampleConfig { overrides: Overrides { j_max: Some(iterations), ..Default::default() }, ..ExampleConfig::new(ExampleId::Pwa) };
    let ex = build(&config)?;
    let campaign = run_campaign(&ex, |r| {
        let end = r.states.last().expect("non-empty");
        println!("iteration {:>2}  cost {:>16.6}  steps {:>4}  final state {:?}", r.iteration, r.cost, r.inputs.len(), end.as_slice());
    })?;
    match &campaign.failure {
        None => println!("all checks passed"),
        Some(why) => println!("check failed: {why}"),
    }
    Ok(campaign.costs())
}

#[allow(dead_code)]
fn main() -> lifted_lmpc::Result<()> {
    let iterations = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    run(iterations).map(|_| ())
}
