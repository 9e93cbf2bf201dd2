use lifted_lmpc::cases::{build_default, ExampleId};
use lifted_lmpc::system::{fd_jacobian, lifted_from_rollout, LiftedOutput, OutputWindow, Vector};
use lifted_lmpc::validation::{box_preservation, monotonicity, random_feasible_rollout, round_trip, round_trip_tolerance};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn reconstruction_inverts_rollouts() {
    for id in ExampleId::ALL {
        let mut rng = ChaCha8Rng::seed_from_u64(100);
        let rep = round_trip(&build_default(id), 1000, &mut rng);
        assert_eq!(rep.samples, 1000, "{id:?}");
        assert!(rep.max_state_error <= round_trip_tolerance(id), "{id:?}: {rep:?}");
        assert!(rep.max_input_error <= round_trip_tolerance(id), "{id:?}: {rep:?}");
    }
}

#[test]
fn smooth_examples_keep_combinations_feasible() {
    for id in [ExampleId::DcMotor, ExampleId::Unicycle] {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let rep = box_preservation(&build_default(id), 10_000, &mut rng);
        assert_eq!(rep.violations, 0, "{id:?}: {rep:?}");
    }
}

#[test]
fn pwa_combinations_can_leave_the_input_box() {
    // The nominal input map is concave across the switching surface, so
    // some combinations of feasible windows demand u > 2.
    let ex = build_default(ExampleId::Pwa);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rep = box_preservation(&ex, 10_000, &mut rng);
    assert!(rep.violations > 0);
    let w = rep.witness.expect("violation has a witness");
    let as_y = |v: &[f64]| LiftedOutput::from_matrix(DMatrix::from_row_slice(1, 3, v));
    let mut comb = [0.0; 3];
    for (v, &l) in w.vertices.iter().zip(&w.weights) {
        assert!(ex.system.input_map(&as_y(v)).unwrap()[0] <= 2.0 + 1e-9);
        comb.iter_mut().zip(v).for_each(|(c, vi)| *c += l * vi);
    }
    let u = ex.system.input_map(&as_y(&comb)).unwrap()[0];
    assert!(u > 2.0 + 1e-9, "{u}");
}

#[test]
fn linear_state_maps_are_monotone_on_lines() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    let rep = monotonicity(&build_default(ExampleId::Pwa), 500, 50, &mut rng);
    assert!(rep.state_map.components.iter().all(|c| c.monotone));
    assert!(!rep.input_map.components[0].monotone);
    let rep = monotonicity(&build_default(ExampleId::DcMotor), 500, 50, &mut rng);
    assert!(rep.state_map.components.iter().all(|c| c.monotone));
}

#[test]
fn map_jacobians_match_central_differences() {
    for id in [ExampleId::DcMotor, ExampleId::Unicycle] {
        let ex = build_default(id);
        let sys = ex.system.as_ref();
        let r = sys.lift_depth();
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        for _ in 0..100 {
            let (x, us) = random_feasible_rollout(&ex, r, &mut rng).unwrap();
            let y = lifted_from_rollout(sys, &x, &us).unwrap();
            let (p, q) = (y.nrows(), y.ncols());
            let flat = Vector::from_column_slice(y.as_slice());
            let to_y = |v: &Vector| LiftedOutput::from_matrix(DMatrix::from_column_slice(p, q, v.as_slice()));
            let ju = sys.input_map_jacobian(&y).unwrap();
            let fu = fd_jacobian(|v| sys.input_map(&to_y(v)), &flat).unwrap();
            assert_close(&ju, &fu, id);
            let w = y.leading();
            let wflat = Vector::from_column_slice(w.as_slice());
            let wq = w.ncols();
            let jx = sys.state_map_jacobian(&w).unwrap();
            let fx = fd_jacobian(|v| sys.state_map(&OutputWindow::from_matrix(DMatrix::from_column_slice(p, wq, v.as_slice()))), &wflat).unwrap();
            assert_close(&jx, &fx, id);
        }
    }
}

fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, id: ExampleId) {
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() <= 1e-5 * (1.0 + y.abs()), "{id:?}: analytic {x} vs differences {y}");
    }
}
