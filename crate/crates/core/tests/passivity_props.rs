use epilab::design::{self, KypOutcome, Loss};
use epilab::model::*;
use epilab::ode::{dopri5, SolverOptions};
use epilab::passivity::*;
use epilab::presets;
use nalgebra::{DMatrix, DVector, SMatrix, SVector};
use proptest::prelude::*;

/// Hurwitz matrix `-(M M^T + I) + (S - S^T)`: the symmetric part is
/// negative definite, so every such matrix is stable.
fn hurwitz3(v: &[f64]) -> SMatrix<f64, 3, 3> {
    let m = SMatrix::<f64, 3, 3>::from_row_slice(&v[0..9]);
    let s = SMatrix::<f64, 3, 3>::from_row_slice(&v[9..18]);
    -(m * m.transpose() + SMatrix::identity()) + (s - s.transpose())
}

fn dyn3(m: &SMatrix<f64, 3, 3>) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |i, j| m[(i, j)])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Feasibility design gives a KYP certificate; closing the loop with
    /// `u = -y` must then make `V = x^T P x` non-increasing.
    #[test]
    fn kyp_storage_decreases_under_negative_output_feedback(
        v in prop::collection::vec(-1.0..1.0f64, 18),
        g in prop::array::uniform3(-1.0..1.0f64),
        x0 in prop::array::uniform3(-2.0..2.0f64),
    ) {
        let g = SVector::<f64, 3>::from(g);
        prop_assume!(g.norm() > 0.2);
        let a = hurwitz3(&v);
        let res = design::design_output_n(&dyn3(&a), &DVector::from_column_slice(g.as_slice()), &Loss::Zero, 1e-6, 1e-4).unwrap();
        let cert = verify_linear_passivity(&dyn3(&a), &DVector::from_column_slice(g.as_slice()), &res.c, &res.p).unwrap();
        prop_assert_eq!(cert.verdict, Verdict::Strict);

        let p = SMatrix::<f64, 3, 3>::from_fn(|i, j| res.p[(i, j)]);
        let c = SVector::<f64, 3>::from_column_slice(res.c.as_slice());
        let acl = a - g * c.transpose();
        let opts = SolverOptions::default().with_tolerances(1e-10, 1e-12);
        let sol = dopri5(|_t, x: &SVector<f64, 3>| acl * x, 0.0, 20.0, SVector::from(x0), &opts).unwrap();
        let vals: Vec<f64> = sol.states.iter().map(|x| x.dot(&(p * x))).collect();
        for w in vals.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-8 * vals[0].max(1.0), "V rose from {} to {}", w[0], w[1]);
        }
    }

    #[test]
    fn radius_scales_with_sqrt_of_level(rho in 1e-6..10.0f64, a in 0.1..10.0f64) {
        let s = presets::thm3().storage().unwrap();
        let r1 = roa_radius(&s, rho).unwrap();
        let r2 = roa_radius(&s, a * a * rho).unwrap();
        prop_assert!((r2 - a * r1).abs() <= 1e-12 * r2);
        let full = Storage::new(s.p, StorageScale::Full).unwrap();
        let rf = roa_radius(&full, rho).unwrap();
        prop_assert!((r1 - std::f64::consts::SQRT_2 * rf).abs() <= 1e-12 * r1);
    }

    /// With `Pg = c` and the 1/2 storage the supplied power cancels the
    /// input term exactly, so the margin does not depend on `u`.
    #[test]
    fn matched_passivity_margin_ignores_input(
        x in prop::array::uniform6(-0.5..0.5f64),
        u1 in -5.0..5.0f64,
        u2 in -5.0..5.0f64,
    ) {
        let pr = presets::thm3();
        let sys = pr.system(&EpileptorParams::default()).unwrap();
        let s = pr.storage().unwrap();
        let x = Vec6::from(x);
        let m1 = passivity_inequality_margin(&x, u1, &s, &sys);
        let m2 = passivity_inequality_margin(&x, u2, &s, &sys);
        let scale = s.gradient(&x).norm() * sys.field(&x, 0.0).norm() + (u1.abs() + u2.abs()) * x.norm();
        prop_assert!((m1 - m2).abs() <= 1e-12 * scale.max(1.0));
    }

    /// Samples inside the published ball satisfy the Thm-3 style passivity
    /// inequality with zero external power.
    #[test]
    fn summed_output_certificate_holds_in_ball(
        d in prop::array::uniform6(-1.0..1.0f64),
        r in 0.0..1.008f64,
        u in -2.0..2.0f64,
    ) {
        let d = Vec6::from(d);
        prop_assume!(d.norm() > 1e-3);
        let pr = presets::thm3();
        let sys = pr.system(&EpileptorParams::default()).unwrap();
        let s = pr.storage().unwrap();
        let x = d * (r / d.norm());
        prop_assert!(passivity_inequality_margin(&x, u, &s, &sys) <= 0.0);
        prop_assert!(lyapunov_decrease_margin(&x, &s, &sys) <= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    /// `g^T c <= 0` rules out any `P >= 0` with `Pg = c` when `c != 0`.
    #[test]
    fn obstruction_implies_kyp_infeasible(c in prop::array::uniform6(-1.0..1.0f64)) {
        let mut c = c;
        // Force g^T c = c1 + c3 below zero.
        c[X2] = -c[X1] - 0.2 - c[X2].abs();
        let out = OutputMap::new(c);
        let ob = matching_obstruction(&out);
        prop_assert!(!ob.passivation_possible);
        let a = -Mat6::identity();
        let outcome = design::kyp_feasibility(&a, &out).unwrap();
        prop_assert!(matches!(outcome, KypOutcome::Infeasible { .. }), "{:?}", outcome);
    }
}

#[test]
fn margin_vanishes_at_equilibrium() {
    let params = EpileptorParams::default();
    for name in presets::PRESET_NAMES {
        let pr = presets::preset(name).unwrap();
        let sys = pr.system(&params).unwrap();
        let s = pr.storage().unwrap();
        let z = Vec6::zeros();
        assert_eq!(lyapunov_decrease_margin(&z, &s, &sys), 0.0, "{name}");
        assert!(sys.equilibrium_residual() < 1e-10, "{name}");
    }
}

#[test]
fn roa_search_is_thread_count_independent() {
    let pr = presets::thm3();
    let sys = pr.system(&EpileptorParams::default()).unwrap();
    let s = pr.storage().unwrap();
    let opts = RoaOptions {
        n_samples: 4000,
        n_ascent: 8,
        ascent_steps: 30,
        seed: 7,
        ..RoaOptions::default()
    };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| check_roa_level(&s, &sys, 0.5, &opts).unwrap())
    };
    let one = run(1);
    let four = run(4);
    assert_eq!(one, four);
    assert_eq!(one.status, RoaStatus::CounterexampleFound);
}

#[test]
fn linear_check_rejects_indefinite_storage() {
    let pr = presets::thm3();
    let sys = pr.system(&EpileptorParams::default()).unwrap();
    let mut p = pr.p;
    p[(0, 0)] = -1.0;
    let s = Storage::new(p, StorageScale::Half).unwrap();
    assert!(matches!(linear_roa_check(&s, &sys), Err(epilab::Error::LinearCheckFailed(_))));
}
