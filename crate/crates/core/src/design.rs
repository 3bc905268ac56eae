//! Convex searches over quadratic storage matrices: sparse Lyapunov
//! certificates, output redesign through `c = P g`, and fixed-output KYP
//! feasibility.
//!
//! Every problem is posed over the symmetric coordinates of `P` and solved
//! by the barrier method in [`crate::sdp`]. The generic `_n` entry points
//! take any dimension; the plain ones are the 6-state wrappers.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{InputVector, Mat6, OutputMap};
use crate::sdp::{self, BarrierOptions, LinearRows, LmiBlock, LmiProblem};

/// Off-diagonal entries below this fraction of the largest diagonal entry
/// are set to zero when that keeps every constraint satisfied.
pub const SNAP_REL: f64 = 1e-6;
/// Allowed constraint violation for a solved design.
pub const RESIDUAL_TOL: f64 = 1e-7;
/// Strictness margin on the dissipation inequality in output design.
pub const DESIGN_EPS: f64 = 1e-7;
/// Phase-1 value above which a fixed-output KYP system is infeasible.
pub const PHASE1_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub enum Loss {
    /// Pure feasibility.
    Zero,
    /// `sum_i w_i |(Pg)_i - target_i|`; weights default to one and must be
    /// nonnegative.
    L1ToTarget { target: Vec<f64>, weights: Option<Vec<f64>> },
    /// `sum_{i != j} |P_ij|`.
    OffDiagonalL1,
}

impl Loss {
    pub fn l1_to(target: &OutputMap) -> Self {
        Loss::L1ToTarget {
            target: target.c.iter().copied().collect(),
            weights: None,
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if let Loss::L1ToTarget { target, weights } = self {
            if target.len() != n {
                return Err(Error::Dimension {
                    expected: n,
                    found: target.len(),
                });
            }
            if let Some(w) = weights {
                if w.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        found: w.len(),
                    });
                }
                if w.iter().any(|v| !(*v >= 0.0)) {
                    return Err(Error::Unsupported(
                        "negative loss weights make the objective non-convex".into(),
                    ));
                }
            }
            if target.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("loss target"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintMargin {
    pub name: &'static str,
    /// Smallest eigenvalue (or slack) of the constraint; negative is a
    /// violation.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DesignResult {
    pub p: DMatrix<f64>,
    /// Implied output `Pg`.
    pub c: DVector<f64>,
    pub objective_value: f64,
    pub feasibility_residuals: Vec<ConstraintMargin>,
    pub iterations: usize,
}

impl DesignResult {
    pub fn max_violation(&self) -> f64 {
        self.feasibility_residuals
            .iter()
            .map(|m| (-m.margin).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Nonzero entries strictly above the diagonal.
    pub fn off_diagonal_nonzeros(&self) -> usize {
        let n = self.p.nrows();
        (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.p[(i, j)] != 0.0)
            .count()
    }

    pub fn output_map(&self) -> Option<OutputMap> {
        (self.c.len() == 6).then(|| {
            let mut c = [0.0; 6];
            c.copy_from_slice(self.c.as_slice());
            OutputMap::new(c)
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KypOutcome {
    Feasible {
        p: DMatrix<f64>,
        /// Final phase-1 value; negative means both inequalities hold strictly.
        phase_one: f64,
    },
    Infeasible {
        /// Smallest uniform slack `s` found with `P + sI >= 0` and
        /// `-(A^T P + P A) + sI >= 0`.
        best_residual: f64,
    },
}

fn require_hurwitz(a: &DMatrix<f64>) -> Result<()> {
    let alpha = linalg::spectral_abscissa(a)?;
    if alpha >= 0.0 {
        return Err(Error::NotHurwitz(alpha));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::InvalidParameter(format!("{name} must be > 0, got {v}")));
    }
    Ok(())
}

/// Block `-(A^T P + P A) - eps I` over the first `m` variables.
fn lyapunov_block(a: &DMatrix<f64>, eps: f64, n_vars: usize) -> LmiBlock {
    let n = a.nrows();
    let basis = sdp::sym_basis(n);
    let mut fi = Vec::with_capacity(n_vars);
    for &(i, j) in &basis {
        let e = sdp::basis_matrix(n, i, j);
        fi.push(-(a.transpose() * &e + &e * a));
    }
    fi.resize(n_vars, DMatrix::zeros(n, n));
    LmiBlock {
        f0: -eps * DMatrix::identity(n, n),
        fi,
    }
}

/// Block `P - delta I` over the first `m` variables.
fn floor_block(n: usize, delta: f64, n_vars: usize) -> LmiBlock {
    let mut fi: Vec<DMatrix<f64>> = sdp::sym_basis(n)
        .iter()
        .map(|&(i, j)| sdp::basis_matrix(n, i, j))
        .collect();
    fi.resize(n_vars, DMatrix::zeros(n, n));
    LmiBlock {
        f0: -delta * DMatrix::identity(n, n),
        fi,
    }
}

fn margins(p: &DMatrix<f64>, a: &DMatrix<f64>, eps: f64, delta: f64) -> Result<Vec<ConstraintMargin>> {
    let n = p.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let lyap = -(a.transpose() * p + p * a) - eps * &id;
    Ok(vec![
        ConstraintMargin {
            name: "psd_floor",
            margin: linalg::lambda_min(&(p - delta * &id))?,
        },
        ConstraintMargin {
            name: "dissipation",
            margin: linalg::lambda_min(&lyap)?,
        },
    ])
}

/// Zeroes negligible off-diagonal entries if the constraints still hold.
fn snap(p: &DMatrix<f64>, a: &DMatrix<f64>, eps: f64, delta: f64) -> Result<DMatrix<f64>> {
    let n = p.nrows();
    let dmax = p.diagonal().amax();
    let mut q = p.clone();
    for i in 0..n {
        for j in (i + 1)..n {
            if q[(i, j)].abs() <= SNAP_REL * dmax {
                q[(i, j)] = 0.0;
                q[(j, i)] = 0.0;
            }
        }
    }
    let ok = margins(&q, a, eps, delta)?.iter().all(|m| m.margin >= -RESIDUAL_TOL);
    Ok(if ok { q } else { p.clone() })
}

/// Strictly feasible start: a scaled solution of `A^T X + X A = -I`.
fn lyapunov_start(a: &DMatrix<f64>, eps: f64, delta: f64, scale_hint: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let x = sdp::lyapunov_solve(a, &DMatrix::identity(n, n))?;
    let x = 0.5 * (&x + x.transpose());
    let lmin = linalg::lambda_min(&x)?;
    if !(lmin > 0.0) {
        return Err(Error::NotHurwitz(linalg::spectral_abscissa(a)?));
    }
    let s = (4.0 * eps).max(4.0 * delta / lmin).max(scale_hint / x.norm());
    Ok(s * x)
}

fn solve_with_trace_bound(
    a: &DMatrix<f64>,
    eps: f64,
    delta: f64,
    p0: &DMatrix<f64>,
    extra_vars: usize,
    build: &dyn Fn(&mut DVector<f64>, &mut LinearRows, &DVector<f64>) -> DVector<f64>,
) -> Result<(DMatrix<f64>, f64, usize)> {
    let n = a.nrows();
    let m = n * (n + 1) / 2;
    let nv = m + extra_vars;
    let p0c = DVector::from_vec(sdp::sym_to_coords(p0));
    let mut bound = (1e4f64).max(100.0 * p0.trace());
    let mut total_steps = 0;
    for _ in 0..4 {
        let mut objective = DVector::zeros(nv);
        let mut linear = LinearRows::empty(nv);
        let x0 = build(&mut objective, &mut linear, &p0c);
        let trace_coeffs: Vec<(usize, f64)> = sdp::sym_basis(n)
            .iter()
            .enumerate()
            .filter(|(_, &(i, j))| i == j)
            .map(|(k, _)| (k, -1.0))
            .collect();
        linear.push(&trace_coeffs, bound);
        let prob = LmiProblem {
            objective,
            blocks: vec![floor_block(n, delta, nv), lyapunov_block(a, eps, nv)],
            linear,
        };
        let sol = prob.solve_from(x0, &BarrierOptions::default())?;
        total_steps += sol.newton_steps;
        let p = sdp::sym_from_coords(n, &sol.x.as_slice()[..m]);
        if p.trace() < 0.99 * bound {
            return Ok((p, sol.objective, total_steps));
        }
        bound *= 100.0;
    }
    Err(Error::SolverStalled {
        iterations: total_steps,
        reason: "trace bound stays active; objective may be unbounded".into(),
    })
}

/// Minimizes `sum_{i != j} |P_ij|` subject to `P >= delta I` and
/// `A^T P + P A <= -eps I`.
pub fn solve_sparse_lyapunov_n(a: &DMatrix<f64>, eps: f64, delta: f64) -> Result<DesignResult> {
    check_positive("eps", eps)?;
    check_positive("delta", delta)?;
    require_hurwitz(a)?;
    let n = a.nrows();
    let m = n * (n + 1) / 2;
    let off: Vec<usize> = sdp::sym_basis(n)
        .iter()
        .enumerate()
        .filter(|(_, &(i, j))| i != j)
        .map(|(k, _)| k)
        .collect();
    let p0 = lyapunov_start(a, eps, delta, 0.0)?;
    let build = |obj: &mut DVector<f64>, lin: &mut LinearRows, p0c: &DVector<f64>| {
        let mut x0 = DVector::zeros(m + off.len());
        x0.rows_mut(0, m).copy_from(p0c);
        for (t, &k) in off.iter().enumerate() {
            // |P_ij| appears twice in the sum over i != j.
            obj[m + t] = 2.0;
            lin.push(&[(m + t, 1.0), (k, -1.0)], 0.0);
            lin.push(&[(m + t, 1.0), (k, 1.0)], 0.0);
            x0[m + t] = p0c[k].abs() + 1.0;
        }
        x0
    };
    let (p, _, steps) = solve_with_trace_bound(a, eps, delta, &p0, off.len(), &build)?;
    finish(p, a, eps, delta, steps, &Loss::OffDiagonalL1, None)
}

pub fn solve_sparse_lyapunov(a_cl: &Mat6, eps: f64, delta: f64) -> Result<DesignResult> {
    solve_sparse_lyapunov_n(&linalg::to_dynamic(a_cl), eps, delta)
}

fn loss_value(loss: &Loss, p: &DMatrix<f64>, g: &DVector<f64>) -> f64 {
    match loss {
        Loss::Zero => 0.0,
        Loss::OffDiagonalL1 => {
            let n = p.nrows();
            let mut s = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        s += p[(i, j)].abs();
                    }
                }
            }
            s
        }
        Loss::L1ToTarget { target, weights } => {
            let c = p * g;
            c.iter()
                .zip(target)
                .enumerate()
                .map(|(i, (ci, ti))| weights.as_ref().map_or(1.0, |w| w[i]) * (ci - ti).abs())
                .sum()
        }
    }
}

fn finish(
    p: DMatrix<f64>,
    a: &DMatrix<f64>,
    eps: f64,
    delta: f64,
    iterations: usize,
    loss: &Loss,
    g: Option<&DVector<f64>>,
) -> Result<DesignResult> {
    let p = snap(&(0.5 * (&p + p.transpose())), a, eps, delta)?;
    let n = p.nrows();
    let g = g.cloned().unwrap_or_else(|| DVector::zeros(n));
    let c = &p * &g;
    let feasibility_residuals = margins(&p, a, eps, delta)?;
    let result = DesignResult {
        objective_value: loss_value(loss, &p, &g),
        c,
        p,
        feasibility_residuals,
        iterations,
    };
    if result.max_violation() > RESIDUAL_TOL {
        return Err(Error::SolverStalled {
            iterations,
            reason: format!("constraint violation {:.3e} after solve", result.max_violation()),
        });
    }
    Ok(result)
}

/// Minimizes `loss(Pg)` subject to `P >= delta I` and
/// `A^T P + P A <= -eps I`; the designed output is `c = Pg`.
pub fn design_output_n(a: &DMatrix<f64>, g: &DVector<f64>, loss: &Loss, delta: f64, eps: f64) -> Result<DesignResult> {
    check_positive("eps", eps)?;
    check_positive("delta", delta)?;
    let n = a.nrows();
    if g.len() != n {
        return Err(Error::Dimension {
            expected: n,
            found: g.len(),
        });
    }
    loss.validate(n)?;
    require_hurwitz(a)?;
    let m = n * (n + 1) / 2;
    let basis = sdp::sym_basis(n);

    // (Pg)_r = sum over coordinates (i, j) of E_ij g.
    let mut pg = DMatrix::zeros(n, m);
    for (k, &(i, j)) in basis.iter().enumerate() {
        let col = sdp::basis_matrix(n, i, j) * g;
        pg.set_column(k, &col);
    }

    let hint = match loss {
        Loss::L1ToTarget { target, .. } => target.iter().fold(0.0f64, |a, b| a.max(b.abs())),
        _ => 0.0,
    };
    let p0 = lyapunov_start(a, eps, delta, hint)?;

    let extra = match loss {
        Loss::Zero => 0,
        Loss::L1ToTarget { .. } => n,
        Loss::OffDiagonalL1 => {
            return Err(Error::Unsupported(
                "off-diagonal loss belongs to the sparse Lyapunov search".into(),
            ))
        }
    };

    let build = |obj: &mut DVector<f64>, lin: &mut LinearRows, p0c: &DVector<f64>| {
        let mut x0 = DVector::zeros(m + extra);
        x0.rows_mut(0, m).copy_from(p0c);
        if let Loss::L1ToTarget { target, weights } = loss {
            let c0 = &pg * p0c;
            for r in 0..n {
                let w = weights.as_ref().map_or(1.0, |w| w[r]);
                obj[m + r] = w;
                let row: Vec<(usize, f64)> = (0..m).filter(|&k| pg[(r, k)] != 0.0).map(|k| (k, pg[(r, k)])).collect();
                // t_r >= (Pg)_r - target_r and t_r >= target_r - (Pg)_r.
                let mut up = vec![(m + r, 1.0)];
                up.extend(row.iter().map(|&(k, v)| (k, -v)));
                lin.push(&up, target[r]);
                let mut down = vec![(m + r, 1.0)];
                down.extend(row.iter().copied());
                lin.push(&down, -target[r]);
                x0[m + r] = (c0[r] - target[r]).abs() + 1.0;
            }
        }
        x0
    };
    let (p, _, steps) = solve_with_trace_bound(a, eps, delta, &p0, extra, &build)?;
    finish(p, a, eps, delta, steps, loss, Some(g))
}

/// Output design for the 6-state model with feedback gain `k`. Only the
/// convex `k = 0` case is supported.
pub fn design_output(a: &Mat6, loss: &Loss, delta: f64, k: f64) -> Result<DesignResult> {
    if k != 0.0 {
        return Err(Error::Unsupported(format!(
            "output design with feedback gain k = {k} is non-convex; only k = 0 is supported"
        )));
    }
    let g = InputVector::g();
    design_output_n(
        &linalg::to_dynamic(a),
        &DVector::from_column_slice(g.as_slice()),
        loss,
        delta,
        DESIGN_EPS,
    )
}

/// Searches `P >= 0`, `A^T P + P A <= 0` with `Pg = c` imposed exactly by
/// parametrizing `P` over the null space of the matching map.
pub fn kyp_feasibility_n(a: &DMatrix<f64>, g: &DVector<f64>, c: &DVector<f64>) -> Result<KypOutcome> {
    let n = a.nrows();
    if g.len() != n || c.len() != n || a.ncols() != n {
        return Err(Error::Dimension {
            expected: n,
            found: g.len().min(c.len()),
        });
    }
    if a.iter().chain(g.iter()).chain(c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("KYP data"));
    }
    let basis = sdp::sym_basis(n);
    let m = basis.len();
    let mut mm = DMatrix::zeros(n, m);
    for (k, &(i, j)) in basis.iter().enumerate() {
        mm.set_column(k, &(sdp::basis_matrix(n, i, j) * g));
    }
    // Null space and a particular solution from the eigenvectors of M^T M.
    let eig = SymmetricEigen::new(mm.transpose() * &mm);
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut null = Vec::new();
    let mut range = Vec::new();
    for k in 0..m {
        let v = eig.eigenvectors.column(k).into_owned();
        if eig.eigenvalues[k] <= 1e-12 * top {
            null.push(v);
        } else {
            range.push((eig.eigenvalues[k], v));
        }
    }
    let rhs = mm.transpose() * c;
    let mut p_part = DVector::zeros(m);
    for (lam, v) in &range {
        p_part += v * (v.dot(&rhs) / lam);
    }
    let resid = (&mm * &p_part - c).amax();
    if resid > 1e-9 * c.amax().max(1.0) {
        return Ok(KypOutcome::Infeasible { best_residual: resid });
    }

    let nz = null.len();
    let mat = |coords: &DVector<f64>| sdp::sym_from_coords(n, coords.as_slice());
    let p0 = mat(&p_part);
    let null_mats: Vec<DMatrix<f64>> = null.iter().map(mat).collect();
    let lyap = |p: &DMatrix<f64>| -(a.transpose() * p + p * a);
    let prob = LmiProblem {
        objective: DVector::zeros(nz),
        blocks: vec![
            LmiBlock {
                f0: p0.clone(),
                fi: null_mats.clone(),
            },
            LmiBlock {
                f0: lyap(&p0),
                fi: null_mats.iter().map(lyap).collect(),
            },
        ],
        linear: LinearRows::empty(nz),
    };
    let bound = 1e4 * c.amax().max(1.0);
    let (z, s) = prob.phase_one(&DVector::zeros(nz), bound, -PHASE1_TOL, &BarrierOptions::default())?;
    if s > PHASE1_TOL {
        return Ok(KypOutcome::Infeasible { best_residual: s });
    }
    let mut p = p0;
    for (zk, nk) in z.iter().zip(&null_mats) {
        p += *zk * nk;
    }
    let p = 0.5 * (&p + p.transpose());
    Ok(KypOutcome::Feasible { p, phase_one: s })
}

pub fn kyp_feasibility(a: &Mat6, c: &OutputMap) -> Result<KypOutcome> {
    let g = InputVector::g();
    kyp_feasibility_n(
        &linalg::to_dynamic(a),
        &DVector::from_column_slice(g.as_slice()),
        &DVector::from_column_slice(c.c.as_slice()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::passivity;

    #[test]
    fn sparse_lyapunov_on_negative_identity() {
        let a = -DMatrix::identity(6, 6);
        let r = solve_sparse_lyapunov_n(&a, 1e-4, 1e-6).unwrap();
        assert!(r.objective_value <= 1e-8, "{}", r.objective_value);
        assert_eq!(r.off_diagonal_nonzeros(), 0);
        assert!(r.max_violation() <= RESIDUAL_TOL);
    }

    #[test]
    fn sparse_lyapunov_rejects_unstable() {
        let mut a = -DMatrix::identity(3, 3);
        a[(0, 0)] = 0.1;
        assert!(matches!(solve_sparse_lyapunov_n(&a, 1e-4, 1e-6), Err(Error::NotHurwitz(_))));
    }

    #[test]
    fn zero_loss_design_is_strictly_passive() {
        let a = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, -3.0]);
        let g = DVector::from_vec(vec![1.0, 1.0]);
        let r = design_output_n(&a, &g, &Loss::Zero, 1e-6, 1e-7).unwrap();
        let cert = passivity::verify_linear_passivity(&a, &g, &r.c, &r.p).unwrap();
        assert!(cert.strict);
    }

    #[test]
    fn nonconvex_requests_are_rejected() {
        let a = -Mat6::identity();
        let loss = Loss::L1ToTarget {
            target: vec![1.0, 0.0, -1.0, 0.0, 0.0, 0.0],
            weights: Some(vec![1.0, -1.0, 1.0, 1.0, 1.0, 1.0]),
        };
        assert!(matches!(design_output(&a, &loss, 1e-6, 0.0), Err(Error::Unsupported(_))));
        assert!(matches!(design_output(&a, &Loss::Zero, 1e-6, 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kyp_trivial_feasible() {
        let a = -Mat6::identity();
        let c = OutputMap::new([1.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        match kyp_feasibility(&a, &c).unwrap() {
            KypOutcome::Feasible { p, phase_one } => {
                assert!(phase_one < 0.0);
                let cert = passivity::verify_linear_passivity6(&a, &c, &Mat6::from_iterator(p.iter().copied())).unwrap();
                assert!(cert.strict);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kyp_obstructed_output_is_infeasible() {
        // g^T c = 0 forces g^T P g = 0, incompatible with P > 0.
        let a = -Mat6::identity();
        let r = kyp_feasibility(&a, &OutputMap::standard()).unwrap();
        assert!(matches!(r, KypOutcome::Infeasible { best_residual } if best_residual > PHASE1_TOL));
    }
}
