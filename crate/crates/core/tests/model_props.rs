use epilab::analysis;
use epilab::linalg;
use epilab::model::*;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn state() -> impl Strategy<Value = Vec6> {
    (
        -3.0..3.0f64,
        -15.0..5.0f64,
        -3.0..3.0f64,
        -2.0..8.0f64,
        -1.0..1.0f64,
        -1.0..8.0f64,
    )
        .prop_map(|(a, b, c, d, e, f)| Vec6::new(a, b, c, d, e, f))
}

/// Away from the switching surfaces the field is smooth.
fn off_switching(x: &Vec6) -> bool {
    x[X1].abs() > 1e-3 && (x[X2] - F2_KNEE).abs() > 1e-3
}

fn fd_jacobian(x: &Vec6, u: f64, p: &EpileptorParams) -> Mat6 {
    let mut j = Mat6::zeros();
    for k in 0..6 {
        let h = 1e-6 * x[k].abs().max(1.0);
        let mut xp = *x;
        let mut xm = *x;
        xp[k] += h;
        xm[k] -= h;
        let col = (vector_field(&xp, u, p).unwrap() - vector_field(&xm, u, p).unwrap()) / (2.0 * h);
        j.set_column(k, &col);
    }
    j
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn jacobian_matches_finite_differences(x in state(), u in -3.0..1.0f64) {
        prop_assume!(off_switching(&x));
        let p = EpileptorParams::default();
        let ja = jacobian(&x, &p);
        let jf = fd_jacobian(&x, u, &p);
        let scale = ja.amax().max(1.0);
        prop_assert!((ja - jf).amax() <= 1e-5 * scale, "analytic {ja} fd {jf}");
    }

    #[test]
    fn input_enters_affinely(x in state(), u1 in -5.0..5.0f64, u2 in -5.0..5.0f64) {
        let p = EpileptorParams::default();
        let f0 = vector_field(&x, 0.0, &p).unwrap();
        let f1 = vector_field(&x, u1, &p).unwrap();
        let f2 = vector_field(&x, u2, &p).unwrap();
        let g = InputVector::g();
        let tol = 8.0 * f64::EPSILON * f0.amax().max(u1.abs()).max(u2.abs()).max(1.0);
        prop_assert!((f1 - f0 - g * u1).amax() <= tol);
        prop_assert!((f2 - f1 - g * (u2 - u1)).amax() <= tol);
    }

    #[test]
    fn output_is_linear(x in state(), z in state(), a in -3.0..3.0f64, c in prop::array::uniform6(-2.0..2.0f64)) {
        let out = OutputMap::new(c);
        let lhs = output(&(x * a + z), &out);
        let rhs = a * output(&x, &out) + output(&z, &out);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn abscissa_is_transpose_invariant(v in prop::collection::vec(-3.0..3.0f64, 36)) {
        let m = DMatrix::from_row_slice(6, 6, &v);
        let a = linalg::spectral_abscissa(&m).unwrap();
        let b = linalg::spectral_abscissa(&m.transpose()).unwrap();
        prop_assert!((a - b).abs() <= 1e-8 * (1.0 + a.abs()));
    }

    #[test]
    fn closed_loop_jacobian_is_rank_one_update(x in state(), k in 0.0..4.0f64) {
        let p = EpileptorParams::default();
        let c = OutputMap::standard();
        let law = FeedbackLaw::linear(-0.8, k, 0.0).unwrap();
        let jc = closed_loop_jacobian_at(&x, &law, &c, &p);
        let expect = jacobian(&x, &p) - k * InputVector::g() * c.c.transpose();
        prop_assert!((jc - expect).amax() <= 8.0 * f64::EPSILON * expect.amax().max(1.0));
    }
}

#[test]
fn equilibrium_signatures_match_coordinates() {
    let p = EpileptorParams::default();
    for u in [-2.0, -0.8, 0.0, 0.3] {
        for eq in analysis::find_equilibria(u, &p, None).unwrap() {
            assert!(analysis::signature_consistent(&eq));
            assert!(eq.residual_norm <= analysis::EQUILIBRIUM_TOL);
        }
    }
}

#[test]
fn unstable_equilibrium_is_left() {
    use epilab::dynamics::{integrate, Controller};
    use epilab::ode::SolverOptions;
    let p = EpileptorParams::default();
    let eqs = analysis::find_equilibria(0.0, &p, None).unwrap();
    let x1 = eqs
        .iter()
        .find(|e| (e.spectral_abscissa - 0.1766).abs() < 1e-3)
        .expect("the equilibrium with abscissa 0.1766");
    let run = |x0: Vec6| {
        let traj = integrate(
            &State::from_vector(x0).unwrap(),
            (0.0, 100.0),
            &Controller::Constant(0.0),
            &OutputMap::standard(),
            &p,
            &SolverOptions::default(),
        )
        .unwrap();
        (traj.final_state().unwrap() - x1.x_star.vector()).norm()
    };
    // From the polished point itself only round-off drives the departure,
    // which the 0.1766 growth rate amplifies to well below 1e-3 by t = 100.
    let exact = run(*x1.x_star.vector());
    println!("departure from the exact equilibrium at t = 100: {exact:.3e}");
    let nudged = run(x1.x_star.vector() + Vec6::new(1.0, 0.0, 1.0, 0.0, 0.0, 0.0) * 1e-9);
    assert!(nudged > 1e-3, "departure {nudged}");
}
