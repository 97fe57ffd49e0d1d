use proptest::prelude::*;

use tsfuzzy::analysis::{box_grid, lambda_max_search, omega_region_check};
use tsfuzzy::conditions::build;
use tsfuzzy::sdp::{read_dump, solve_feasibility, write_dump, BarrierSolver};
use tsfuzzy::verify::{simulate_batch, verify_certificate};
use tsfuzzy::{Certificate, Exec, MethodKind, ModelBundle, SolverConfig, Status};

fn certify(b: &ModelBundle, method: MethodKind, lambda: f64) -> Certificate {
    let problem = build(&method, &b.model, b.jacobian.as_ref(), lambda).unwrap();
    let out = solve_feasibility(&problem, &SolverConfig::default()).unwrap();
    assert_eq!(out.status, Status::StrictlyFeasible);
    Certificate::from_assignment(method, lambda, out.t_star, &problem, out.assignment.as_ref().unwrap()).unwrap()
}

#[test]
fn json_model_to_verified_certificate() {
    let b = ModelBundle::from_json(ModelBundle::example1_json()).unwrap();
    for method in [
        MethodKind::Quadratic,
        MethodKind::Mozelli { phi: vec![1.0, 1.0] },
        MethodKind::AugmentedSlack,
    ] {
        let cert = certify(&b, method, 2.5);
        let back = Certificate::from_json(&cert.to_json().unwrap()).unwrap();
        assert_eq!(back, cert);
        let rep = verify_certificate(&back, &b.model, b.jacobian.as_ref(), 2.5, 1e-6).unwrap();
        assert!(rep.passed, "{}: {:?}", back.method, rep.margins);
    }
}

#[test]
fn certificate_does_not_transfer_past_threshold() {
    let b = ModelBundle::example1();
    let cert = certify(&b, MethodKind::Quadratic, 3.0);
    let rep = verify_certificate(&cert, &b.model, None, 4.5, 1e-6).unwrap();
    assert!(!rep.passed);
}

#[test]
fn dump_round_trip_keeps_verdict() {
    let b = ModelBundle::example1();
    let cfg = SolverConfig::default();
    for lambda in [1.0, 5.0] {
        let p = build(&MethodKind::Quadratic, &b.model, None, lambda).unwrap();
        let q = read_dump(&write_dump(&p)).unwrap();
        assert_eq!(q.num_scalars(), p.num_scalars());
        assert_eq!(q.total_rows(), p.total_rows());
        let (a, c) = (
            solve_feasibility(&p, &cfg).unwrap(),
            solve_feasibility(&q, &cfg).unwrap(),
        );
        assert_eq!(a.status, c.status);
        assert!((a.t_star - c.t_star).abs() <= 1e-6 * a.t_star.abs().max(1.0));
    }
}

#[test]
fn search_is_repeatable() {
    let b = ModelBundle::example1();
    let solver = BarrierSolver::default();
    let run = || lambda_max_search(&MethodKind::Quadratic, &b.model, None, (0.001, 100.0), 1e-3, &solver).unwrap();
    let (first, second) = (run(), run());
    assert_eq!(first.lambda_star, second.lambda_star);
    assert_eq!(first.history.len(), second.history.len());
}

#[test]
fn execution_modes_agree() {
    let b = ModelBundle::example1();
    let spec = b.memberships.as_ref().unwrap();
    let starts = vec![vec![1.0, 0.0], vec![-0.5, 1.0], vec![0.3, -2.0]];
    let seq = simulate_batch(&b.model, spec, 3.0, &starts, 2.0, 1e-3, Exec::Sequential);
    let par = simulate_batch(&b.model, spec, 3.0, &starts, 2.0, 1e-3, Exec::Parallel);
    for (s, p) in seq.iter().zip(&par) {
        assert_eq!(s.as_ref().unwrap().samples, p.as_ref().unwrap().samples);
    }
    let grid = box_grid(&[-1.5, -2.0], &[1.5, 2.0], &[30, 30]);
    let a = omega_region_check(&b.model, spec, &[1.0, 1.0], 3.0, &grid, 1e-4, Exec::Sequential).unwrap();
    let c = omega_region_check(&b.model, spec, &[1.0, 1.0], 3.0, &grid, 1e-4, Exec::Parallel).unwrap();
    assert_eq!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // The quadratic threshold for this model is about 3.83; every λ below
    // 3.7, and any fraction of it, must be certified.
    #[test]
    fn quadratic_feasible_below_threshold(hi in 0.1..3.7f64, frac in 0.0..1.0f64) {
        let b = ModelBundle::example1();
        let cfg = SolverConfig::default();
        let lo = hi * frac;
        let at = |l: f64| solve_feasibility(&build(&MethodKind::Quadratic, &b.model, None, l).unwrap(), &cfg).unwrap().status;
        prop_assert_eq!(at(hi), Status::StrictlyFeasible);
        prop_assert_eq!(at(lo), Status::StrictlyFeasible);
    }
}
