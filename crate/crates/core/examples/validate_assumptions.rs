//! Sampled checks of the reconstruction maps: round trips, feasibility of
//! convex combinations and monotonicity along lines.
//!
//! `cargo run --example validate_assumptions [combinations]`

use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::cli::validate;

pub fn run(combinations: usize) -> Vec<(ExampleId, bool, bool)> {
    let mut out = Vec::new();
    for id in ExampleId::ALL {
        let rep = validate(&build_default(id), 0, 1000, combinations);
        println!(
            "{:<9} round trip {:.1e}/{:.1e}  combinations {}/{} infeasible (max {:.2e})  interval escapes {:?}",
            id.as_str(),
            rep.round_trip.max_state_error,
            rep.round_trip.max_input_error,
            rep.combinations.violations,
            rep.combinations.combinations,
            rep.combinations.max_violation,
            rep.combinations.interval_violations,
        );
        let mono = |r: &lifted_lmpc::system::MonotoneReport| r.components.iter().map(|c| c.monotone).collect::<Vec<_>>();
        println!("          monotone on lines: F_x {:?}  F_u {:?}", mono(&rep.monotonicity.state_map), mono(&rep.monotonicity.input_map));
        out.push((id, rep.round_trip.passed(), rep.combinations.passed()));
    }
    out
}

#[allow(dead_code)]
fn main() {
    let n = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    run(n);
}
