use epilab::design::{self, KypOutcome, Loss, DESIGN_EPS};
use epilab::linalg;
use epilab::model::*;
use epilab::passivity::{verify_linear_passivity, Verdict};
use epilab::presets;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

mod common;
use common::grid_oracle;

const DELTA: f64 = 1e-3;
const EPS: f64 = 1e-3;



fn hurwitz2(v: &[f64]) -> DMatrix<f64> {
    let m = DMatrix::from_row_slice(2, 2, &v[0..4]);
    let skew = 2.0 * (v[4] - v[5]);
    -(&m * m.transpose() + 0.5 * DMatrix::<f64>::identity(2, 2)) + DMatrix::from_row_slice(2, 2, &[0.0, skew, -skew, 0.0])
}

fn thm3_a() -> Mat6 {
    presets::thm3().system(&EpileptorParams::default()).unwrap().jacobian()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn two_by_two_design_matches_grid_oracle(
        v in prop::collection::vec(-1.0..1.0f64, 6),
        g in prop::array::uniform2(-1.0..1.0f64),
        t in prop::array::uniform2(-1.0..1.0f64),
    ) {
        prop_assume!(g[0].abs() + g[1].abs() > 0.3);
        let a = hurwitz2(&v);
        let res = design::design_output_n(
            &a,
            &DVector::from_column_slice(&g),
            &Loss::L1ToTarget { target: t.to_vec(), weights: None },
            DELTA,
            EPS,
        ).unwrap();
        let oracle = grid_oracle(&a, g, t, DELTA, EPS);
        prop_assert!(
            (res.objective_value - oracle).abs() <= 1e-3,
            "solver {} oracle {}", res.objective_value, oracle
        );
    }

    #[test]
    fn solved_designs_verify_strictly(
        v in prop::collection::vec(-1.0..1.0f64, 16),
        t in prop::collection::vec(-2.0..2.0f64, 4),
    ) {
        let m = DMatrix::from_row_slice(4, 4, &v);
        let a = -(&m * m.transpose() + DMatrix::identity(4, 4)) + (&m - m.transpose());
        let g = DVector::from_column_slice(&[1.0, 0.0, 1.0, 0.0]);
        let res = design::design_output_n(&a, &g, &Loss::L1ToTarget { target: t, weights: None }, 1e-6, 1e-4).unwrap();
        prop_assert_eq!(res.max_violation(), 0.0);
        let cert = verify_linear_passivity(&a, &g, &res.c, &res.p).unwrap();
        prop_assert_eq!(cert.verdict, Verdict::Strict);
    }
}

#[test]
fn known_two_by_two_optimum() {
    // A = -I, g = e1: Pg is the first column of P, so (1, 0) is reachable
    // and t = (-1, 0) needs p11 >= delta, costing 1 + delta.
    let a = -DMatrix::<f64>::identity(2, 2);
    let g = DVector::from_column_slice(&[1.0, 0.0]);
    let hit = design::design_output_n(&a, &g, &Loss::L1ToTarget { target: vec![1.0, 0.0], weights: None }, DELTA, EPS).unwrap();
    assert!(hit.objective_value.abs() < 1e-6, "{}", hit.objective_value);
    let miss = design::design_output_n(&a, &g, &Loss::L1ToTarget { target: vec![-1.0, 0.0], weights: None }, DELTA, EPS).unwrap();
    let expect = 1.0 + EPS.max(DELTA);
    assert!((miss.objective_value - expect).abs() < 1e-5, "{}", miss.objective_value);
    let oracle = grid_oracle(&a, [1.0, 0.0], [-1.0, 0.0], DELTA, EPS);
    assert!((oracle - expect).abs() < 1e-3, "{oracle}");
}

#[test]
fn loosening_delta_never_raises_objective() {
    let a = thm3_a();
    let loss = Loss::l1_to(&OutputMap::standard());
    let mut prev = f64::NEG_INFINITY;
    for delta in [1e-1, 3e-2, 1e-2, 1e-3, 1e-4, 1e-6] {
        let res = design::design_output(&a, &loss, delta, 0.0).unwrap();
        if prev.is_finite() {
            assert!(res.objective_value <= prev + 1e-6, "delta {delta}: {} > {prev}", res.objective_value);
        }
        prev = res.objective_value;
    }
}

#[test]
fn design_is_deterministic() {
    let a = thm3_a();
    let loss = Loss::l1_to(&OutputMap::standard());
    let r1 = design::design_output(&a, &loss, 1e-6, 0.0).unwrap();
    let r2 = design::design_output(&a, &loss, 1e-6, 0.0).unwrap();
    assert_eq!(r1, r2);
    let s1 = design::solve_sparse_lyapunov(&a, DESIGN_EPS, 1e-6).unwrap();
    let s2 = design::solve_sparse_lyapunov(&a, DESIGN_EPS, 1e-6).unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn unstable_closed_loop_is_rejected() {
    let sys = presets::thm1().system(&EpileptorParams::default()).unwrap();
    let a_cl = sys.jacobian();
    let alpha = linalg::spectral_abscissa6(&a_cl).unwrap();
    assert!(alpha < 0.0);
    let shifted = a_cl + (0.1 - alpha) * Mat6::identity();
    assert!(matches!(
        design::solve_sparse_lyapunov(&shifted, 1e-4, 1e-6),
        Err(epilab::Error::NotHurwitz(_))
    ));
    assert!(matches!(
        design::design_output(&shifted, &Loss::Zero, 1e-6, 0.0),
        Err(epilab::Error::NotHurwitz(_))
    ));
}

#[test]
fn nonconvex_requests_are_unsupported() {
    let a = thm3_a();
    assert!(matches!(design::design_output(&a, &Loss::Zero, 1e-6, 1.0), Err(epilab::Error::Unsupported(_))));
    let loss = Loss::L1ToTarget {
        target: vec![0.0; 6],
        weights: Some(vec![1.0, -1.0, 1.0, 1.0, 1.0, 1.0]),
    };
    assert!(matches!(design::design_output(&a, &loss, 1e-6, 0.0), Err(epilab::Error::Unsupported(_))));
}

#[test]
fn kyp_identity_case() {
    let a = -Mat6::identity();
    let c = OutputMap::new(InputVector::g().into());
    match design::kyp_feasibility(&a, &c).unwrap() {
        KypOutcome::Feasible { p, .. } => {
            let g = DVector::from_column_slice(InputVector::g().as_slice());
            let cert = verify_linear_passivity(&linalg::to_dynamic(&a), &g, &DVector::from_column_slice(c.c.as_slice()), &p).unwrap();
            assert!(cert.is_valid(), "{cert:?}");
        }
        other => panic!("{other:?}"),
    }
}
