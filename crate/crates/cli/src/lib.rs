//! Command implementations behind the `epilab` binary.
//!
//! Each verb turns a [`RunConfig`] into a [`Report`]: an exportable table,
//! human-readable summary lines and an overall verdict.

use epilab::analysis::{self, Equilibrium, OPERATING_BRANCH};
use epilab::config::{DesignMode, LossKind, RunConfig, VerifyCheck, VerifyOutput};
use epilab::design::{self, Loss};
use epilab::dynamics::{self, Controller, CycleDetector};
use epilab::export::ExportTable;
use epilab::linalg;
use epilab::model::{FeedbackLaw, InputVector, OutputMap, Phi, State, Vec6, STATE_NAMES};
use epilab::passivity::{self, RoaStatus, ShiftedSystem, Storage};
use epilab::{Error, Result};

/// Simulation is integrated in pieces of this length so a failure still
/// leaves the rows computed so far.
const SIM_CHUNK: f64 = 500.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verb {
    Simulate,
    Equilibria,
    Sweep,
    Verify,
    Design,
    Roa,
}

impl Verb {
    pub fn name(self) -> &'static str {
        match self {
            Verb::Simulate => "simulate",
            Verb::Equilibria => "equilibria",
            Verb::Sweep => "sweep",
            Verb::Verify => "verify",
            Verb::Design => "design",
            Verb::Roa => "roa",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Report {
    pub table: ExportTable,
    pub summary: Vec<String>,
    /// False when the command ran but a verdict failed or a numerical step
    /// broke partway; the table is still written.
    pub success: bool,
}

/// 2 for usage and configuration errors, 1 for numerical failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Parse(_) => 2,
        _ => 1,
    }
}

pub fn execute(verb: Verb, cfg: &RunConfig) -> Result<Report> {
    let mut report = match verb {
        Verb::Simulate => simulate(cfg),
        Verb::Equilibria => equilibria(cfg),
        Verb::Sweep => sweep(cfg),
        Verb::Verify => verify(cfg),
        Verb::Design => design_cmd(cfg),
        Verb::Roa => roa(cfg),
    }?;
    let header = std::mem::take(&mut report.table.header);
    report.table = report
        .table
        .with_header("command", verb.name())
        .with_header("config_hash", cfg.hash())
        .with_header("epilab_version", epilab::VERSION)
        .with_header("preset", cfg.preset.as_deref().unwrap_or("none"));
    report.table.header.extend(header);
    Ok(report)
}

fn fmt_vec(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", items.join(", "))
}

/// The equilibrium the configured feedback is built around: the preset's
/// operating point, or the operating-branch equilibrium at `u_star`.
pub fn operating_point(cfg: &RunConfig) -> Result<Equilibrium> {
    if let Some(name) = &cfg.preset {
        return epilab::presets::preset(name)?.equilibrium(&cfg.params);
    }
    analysis::find_equilibria(cfg.u_star, &cfg.params, None)?
        .into_iter()
        .find(|e| e.branch() == OPERATING_BRANCH)
        .ok_or_else(|| Error::SolverStalled {
            iterations: 0,
            reason: format!("no equilibrium with x1 < 0, x2 < -0.25 at u_star = {}", cfg.u_star),
        })
}

/// Feedback law for `cfg` with `y_star = c^T x_star`.
pub fn feedback_law(cfg: &RunConfig, eq: &Equilibrium) -> Result<FeedbackLaw> {
    let phi = match cfg.saturation {
        Some(limit) => Phi::Saturated { k: cfg.k, limit },
        None => Phi::Linear { k: cfg.k },
    };
    FeedbackLaw::with_phi(cfg.u_star, phi, cfg.c.eval(eq.x_star.vector()))
}

fn storage(cfg: &RunConfig) -> Result<Storage> {
    let p = cfg
        .storage_p
        .ok_or_else(|| Error::Config("storage.p or a preset is required".into()))?;
    Storage::new(p, cfg.storage_scale)
}

fn simulate(cfg: &RunConfig) -> Result<Report> {
    let x0 = State::from_vector(cfg.x0)?;
    let (controller, x_star) = if cfg.feedback_enabled {
        let eq = operating_point(cfg)?;
        (Controller::feedback(feedback_law(cfg, &eq)?), Some(*eq.x_star.vector()))
    } else {
        (Controller::Constant(0.0), None)
    };

    let mut columns = vec!["t".to_string()];
    columns.extend(STATE_NAMES.iter().map(|s| s.to_string()));
    columns.extend(["u".to_string(), "y".to_string()]);
    let mut table = ExportTable::new(columns);
    let mut summary = Vec::new();

    let mut times = Vec::new();
    let mut states: Vec<Vec6> = Vec::new();
    let mut inputs = Vec::new();
    let mut outputs = Vec::new();
    let mut t = 0.0;
    let mut x = x0;
    let mut failure = None;
    while t < cfg.t_end {
        let t_next = (t + SIM_CHUNK).min(cfg.t_end);
        match dynamics::integrate(&x, (t, t_next), &controller, &cfg.c, &cfg.params, &cfg.solver) {
            Ok(piece) => {
                let skip = usize::from(!times.is_empty());
                times.extend(&piece.times[skip..]);
                states.extend(&piece.states[skip..]);
                inputs.extend(&piece.inputs[skip..]);
                outputs.extend(&piece.outputs[skip..]);
                x = State::from_vector(*piece.final_state().expect("non-empty trajectory"))?;
                t = t_next;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    for i in 0..times.len() {
        let mut row = vec![times[i]];
        row.extend(states[i].iter());
        row.push(inputs[i]);
        row.push(outputs[i]);
        table.push_row(row)?;
    }
    if let Some(e) = failure {
        summary.push(format!("integration failed: {e}"));
        table.failure = Some(e.to_string());
        return Ok(Report {
            table,
            summary,
            success: false,
        });
    }

    let traj = dynamics::Trajectory {
        times,
        states,
        inputs,
        outputs,
    };
    let xf = *traj.final_state().expect("non-empty trajectory");
    summary.push(format!("final state: {}", fmt_vec(xf.as_slice())));
    match dynamics::detect_cycles(&traj, &CycleDetector::default()) {
        Ok(r) => summary.push(format!(
            "cycles: {} seizures, mean period {}, ictal fraction {:.3}",
            r.n_seizures,
            r.mean_period.map_or("n/a".into(), |p| format!("{p:.1}")),
            r.ictal_fraction
        )),
        Err(e) => summary.push(format!("cycle report unavailable: {e}")),
    }
    if let Some(xs) = x_star {
        summary.push(format!("final distance to x_star: {:.3e}", (xf - xs).norm()));
        table = table.with_header("x_star", fmt_vec(xs.as_slice()));
    }
    Ok(Report {
        table,
        summary,
        success: true,
    })
}

fn equilibria(cfg: &RunConfig) -> Result<Report> {
    let eqs = analysis::find_equilibria(cfg.u_star, &cfg.params, None)?;
    let mut columns: Vec<String> = STATE_NAMES.iter().map(|s| s.to_string()).collect();
    columns.extend(
        ["residual", "abscissa_open", "abscissa_closed", "x1_negative", "x2_upper"]
            .iter()
            .map(|s| s.to_string()),
    );
    let mut table = ExportTable::new(columns)
        .with_header("u_star", cfg.u_star)
        .with_header("k", cfg.k)
        .with_header("c", fmt_vec(cfg.c.c.as_slice()));
    let mut summary = vec![format!("{} equilibria at u_star = {}", eqs.len(), cfg.u_star)];
    for eq in &eqs {
        let closed = linalg::spectral_abscissa6(&analysis::closed_loop_jacobian(eq, cfg.k, &cfg.c))?;
        let mut row: Vec<f64> = eq.x_star.to_array().to_vec();
        row.extend([
            eq.residual_norm,
            eq.spectral_abscissa,
            closed,
            f64::from(u8::from(eq.branch_signature.0)),
            f64::from(u8::from(eq.branch_signature.1)),
        ]);
        summary.push(format!(
            "  x* = {}  abscissa open {:.5} closed {:.5}",
            fmt_vec(&eq.x_star.to_array()),
            eq.spectral_abscissa,
            closed
        ));
        table.push_row(row)?;
    }
    Ok(Report {
        table,
        summary,
        success: true,
    })
}

fn sweep(cfg: &RunConfig) -> Result<Report> {
    let u = analysis::axis(cfg.u_axis.0, cfg.u_axis.1, cfg.u_axis.2)?;
    let k = analysis::axis(cfg.k_axis.0, cfg.k_axis.1, cfg.k_axis.2)?;
    let grid = analysis::stability_sweep(&u, &k, &cfg.c, &cfg.params)?;
    let mut table = ExportTable::new(["u_star", "k", "abscissa"])
        .with_header("c", fmt_vec(cfg.c.c.as_slice()))
        .with_header("missing", "nan marks cells without an operating-branch equilibrium");
    for (i, ui) in grid.u_star_axis.iter().enumerate() {
        for (j, kj) in grid.k_axis.iter().enumerate() {
            table.push_row(vec![*ui, *kj, grid.abscissa[i][j].unwrap_or(f64::NAN)])?;
        }
    }
    let summary = vec![format!(
        "{} x {} grid: {} stable cells, {} missing",
        u.len(),
        k.len(),
        grid.stable_count(),
        grid.missing_count()
    )];
    Ok(Report {
        table,
        summary,
        success: true,
    })
}

fn verify(cfg: &RunConfig) -> Result<Report> {
    let st = storage(cfg)?;
    let eq = operating_point(cfg)?;
    let a_cl = analysis::closed_loop_jacobian(&eq, cfg.k, &cfg.c);
    let check = cfg.verify_check.unwrap_or(VerifyCheck::Both);
    let mut table = ExportTable::new([
        "check",
        "psd_margin",
        "dissipation_margin",
        "matching_residual",
        "gtc",
        "valid",
        "strict",
    ])
    .with_header("check_ids", "0 = closed-loop Lyapunov, 1 = positive-real")
    .with_header("storage_scale", st.scale.name());
    let mut summary = vec![format!("x_star = {}", fmt_vec(eq.x_star.vector().as_slice()))];
    let mut success = true;
    let p = linalg::to_dynamic(&st.p);

    if matches!(check, VerifyCheck::Lyapunov | VerifyCheck::Both) {
        let psd = linalg::lambda_min(&p)?;
        let (margin, ok) = passivity::check_dissipation(&p, &linalg::to_dynamic(&a_cl), true)?;
        let valid = ok && psd > 0.0;
        success &= valid;
        summary.push(format!(
            "lyapunov: lambda_min(P) = {psd:.6e}, -lambda_max(A_cl^T P + P A_cl) = {margin:.6e} -> {}",
            if valid { "pass" } else { "FAIL" }
        ));
        table.push_row(vec![0.0, psd, margin, f64::NAN, f64::NAN, f64::from(u8::from(valid)), f64::from(u8::from(valid))])?;
    }

    if matches!(check, VerifyCheck::Passivity | VerifyCheck::Both) {
        let implied = OutputMap { c: st.p * InputVector::g() };
        let target = match cfg.verify_output.unwrap_or(VerifyOutput::Configured) {
            VerifyOutput::Configured => cfg.c,
            VerifyOutput::Implied => {
                summary.push(format!(
                    "checking against c := Pg = {}; configured c = {}, |Pg - c|_inf = {:.4}",
                    fmt_vec(implied.c.as_slice()),
                    fmt_vec(cfg.c.c.as_slice()),
                    (implied.c - cfg.c.c).amax()
                ));
                implied
            }
        };
        let obstruction = passivity::matching_obstruction(&target);
        summary.push(format!(
            "matching obstruction: g^T c = c1 + c3 = {:.6} -> {}",
            obstruction.gtc,
            if obstruction.passivation_possible {
                "passivation possible"
            } else {
                "not passivatable"
            }
        ));
        let cert = passivity::verify_linear_passivity6(&a_cl, &target, &st.p)?;
        let valid = cert.strict;
        success &= valid;
        summary.push(format!(
            "positive-real: lambda_min(P) = {:.6e}, dissipation margin = {:.6e}, |Pg - c|_inf = {:.6e} -> {}",
            cert.psd_margin,
            cert.dissipation_margin,
            cert.matching_residual,
            match cert.verdict {
                passivity::Verdict::Strict => "pass (strict)",
                passivity::Verdict::NonStrict => "FAIL (non-strict only)",
                passivity::Verdict::Invalid => "FAIL",
            }
        ));
        table.push_row(vec![
            1.0,
            cert.psd_margin,
            cert.dissipation_margin,
            cert.matching_residual,
            obstruction.gtc,
            f64::from(u8::from(cert.is_valid())),
            f64::from(u8::from(cert.strict)),
        ])?;
    }
    Ok(Report {
        table,
        summary,
        success,
    })
}

fn design_cmd(cfg: &RunConfig) -> Result<Report> {
    let eq = operating_point(cfg)?;
    let (result, label) = match cfg.design_mode {
        DesignMode::Output => {
            let loss = match cfg.loss {
                LossKind::L1 => Loss::l1_to(&cfg.target),
                LossKind::Zero => Loss::Zero,
            };
            (design::design_output(&eq.jacobian, &loss, cfg.delta, cfg.k)?, "output")
        }
        DesignMode::Sparse => {
            let a_cl = analysis::closed_loop_jacobian(&eq, cfg.k, &cfg.c);
            (design::solve_sparse_lyapunov(&a_cl, cfg.eps, cfg.delta)?, "sparse")
        }
    };
    let mut columns = vec!["row".to_string()];
    columns.extend(STATE_NAMES.iter().map(|s| format!("p_{s}")));
    columns.push("c".into());
    let mut table = ExportTable::new(columns)
        .with_header("mode", label)
        .with_header("objective", format!("{:.17e}", result.objective_value))
        .with_header("iterations", result.iterations);
    for m in &result.feasibility_residuals {
        table = table.with_header(&format!("margin_{}", m.name), format!("{:.6e}", m.margin));
    }
    for i in 0..6 {
        let mut row = vec![i as f64];
        row.extend(result.p.row(i).iter());
        row.push(result.c[i]);
        table.push_row(row)?;
    }
    let mut summary = vec![
        format!("objective = {:.6}", result.objective_value),
        format!("nonzero off-diagonal entries = {}", result.off_diagonal_nonzeros()),
        format!("max constraint violation = {:.3e}", result.max_violation()),
    ];
    if cfg.design_mode == DesignMode::Output {
        let c = result.output_map().expect("six-dimensional design");
        let o = passivity::matching_obstruction(&c);
        summary.push(format!("c = Pg = {}", fmt_vec(c.c.as_slice())));
        summary.push(format!("c1 + c3 = {:.6}", o.gtc));
    }
    Ok(Report {
        table,
        summary,
        success: true,
    })
}

fn roa(cfg: &RunConfig) -> Result<Report> {
    let st = storage(cfg)?;
    let eq = operating_point(cfg)?;
    let sys = ShiftedSystem::new(*eq.x_star.vector(), feedback_law(cfg, &eq)?, cfg.c, cfg.params)?;
    let est = match cfg.roa_rho {
        Some(rho) => passivity::check_roa_level(&st, &sys, rho, &cfg.roa)?,
        None => passivity::estimate_roa_level(&st, &sys, &cfg.roa)?,
    };
    let mut columns: Vec<String> = ["rho", "radius", "counterexample_found", "n_samples", "worst_margin", "failing_rho"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    columns.extend(STATE_NAMES.iter().map(|s| format!("cx_{s}")));
    let mut table = ExportTable::new(columns)
        .with_header("storage_scale", st.scale.name())
        .with_header("status", est.status.name())
        .with_header("seed", cfg.roa.seed);
    let mut row = vec![
        est.rho,
        est.radius,
        f64::from(u8::from(est.status == RoaStatus::CounterexampleFound)),
        est.n_samples as f64,
        est.worst_margin,
        est.failing_rho.unwrap_or(f64::NAN),
    ];
    match est.counterexample {
        Some(cx) => row.extend(cx.iter()),
        None => row.extend([f64::NAN; 6]),
    }
    table.push_row(row)?;
    let mut summary = vec![
        format!("status: {}", est.status.name()),
        format!("rho = {:.6e}, radius = {:.6}", est.rho, est.radius),
    ];
    if let Some(cx) = est.counterexample {
        summary.push(format!(
            "counterexample x_tilde = {} (V = {:.6e}, margin = {:.3e})",
            fmt_vec(cx.as_slice()),
            st.value(&cx),
            est.worst_margin
        ));
    }
    Ok(Report {
        table,
        summary,
        success: true,
    })
}
