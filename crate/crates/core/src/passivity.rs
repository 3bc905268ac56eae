//! Linear passivity certificates and sublevel-set region-of-attraction
//! estimates for quadratic storage functions.
//!
//! Storage functions are `V(x) = s * x^T P x` where `s` is 1 or 1/2
//! ([`StorageScale`]). Mixing the two changes radii by a factor of sqrt(2),
//! so every certificate carries its scale.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{self, EpileptorParams, FeedbackLaw, InputVector, Mat6, OutputMap, Vec6};

/// Required symmetry of any `P` handed to a check.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Weight of `|x|^2` in the decrease condition.
pub const DECREASE_EPS: f64 = 1e-6;
/// Floor used when a check needs `P` positive definite.
pub const PD_FLOOR: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StorageScale {
    /// `V = x^T P x`.
    Full,
    /// `V = x^T P x / 2`.
    Half,
}

impl StorageScale {
    pub fn factor(self) -> f64 {
        match self {
            StorageScale::Full => 1.0,
            StorageScale::Half => 0.5,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            StorageScale::Full => "full",
            StorageScale::Half => "half",
        }
    }
}

/// A quadratic storage function on the shifted state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Storage {
    pub p: Mat6,
    pub scale: StorageScale,
}

impl Storage {
    pub fn new(p: Mat6, scale: StorageScale) -> Result<Self> {
        linalg::require_symmetric(&linalg::to_dynamic(&p), SYMMETRY_TOL)?;
        Ok(Self { p, scale })
    }

    pub fn value(&self, xt: &Vec6) -> f64 {
        self.scale.factor() * xt.dot(&(self.p * xt))
    }

    pub fn gradient(&self, xt: &Vec6) -> Vec6 {
        2.0 * self.scale.factor() * (self.p * xt)
    }

    /// `s * P`, the Hessian-over-two of `V`.
    pub fn effective(&self) -> Mat6 {
        self.scale.factor() * self.p
    }
}

/// Closed-loop dynamics written in coordinates shifted to an equilibrium:
/// `x = x_star + x_tilde`, `u = law(c^T x) + v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShiftedSystem {
    pub x_star: Vec6,
    pub law: FeedbackLaw,
    pub c: OutputMap,
    pub params: EpileptorParams,
}

impl ShiftedSystem {
    pub fn new(x_star: Vec6, law: FeedbackLaw, c: OutputMap, params: EpileptorParams) -> Result<Self> {
        params.validate()?;
        law.validate()?;
        if x_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("x_star"));
        }
        Ok(Self {
            x_star,
            law,
            c,
            params,
        })
    }

    pub fn field(&self, xt: &Vec6, v: f64) -> Vec6 {
        let x = self.x_star + xt;
        let u = self.law.input(self.c.eval(&x), v);
        model::field_on_branch(&x, u, &self.params, model::Branch::of(&x))
    }

    /// Shifted output `c^T x_tilde`.
    pub fn output(&self, xt: &Vec6) -> f64 {
        self.c.eval(xt)
    }

    pub fn jacobian(&self) -> Mat6 {
        model::closed_loop_jacobian_at(&self.x_star, &self.law, &self.c, &self.params)
    }

    /// Residual of the equilibrium condition at `x_star`.
    pub fn equilibrium_residual(&self) -> f64 {
        self.field(&Vec6::zeros(), 0.0).norm()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Verdict {
    Strict,
    NonStrict,
    Invalid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PassivityCertificate {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    /// Verdict is strict.
    pub strict: bool,
    /// `|Pg - c|_inf`.
    pub matching_residual: f64,
    /// `-lambda_max(A^T P + P A)`.
    pub dissipation_margin: f64,
    /// `lambda_min(P)`.
    pub psd_margin: f64,
    /// `P = 0` or `c = 0`: trivially passive.
    pub degenerate: bool,
    pub verdict: Verdict,
}

impl PassivityCertificate {
    pub fn is_valid(&self) -> bool {
        self.verdict != Verdict::Invalid
    }
}

fn matching_tolerance(c: &DVector<f64>) -> f64 {
    1e-9 * c.amax().max(1.0)
}

/// `|Pg - c|_inf` and whether it is within `tol`.
pub fn check_matching(p: &DMatrix<f64>, g: &DVector<f64>, c: &DVector<f64>, tol: f64) -> Result<(f64, bool)> {
    linalg::require_symmetric(p, SYMMETRY_TOL)?;
    if g.len() != p.nrows() || c.len() != p.nrows() {
        return Err(Error::Dimension {
            expected: p.nrows(),
            found: if g.len() != p.nrows() { g.len() } else { c.len() },
        });
    }
    let r = (p * g - c).amax();
    Ok((r, r <= tol))
}

/// `-lambda_max(A^T P + P A)` and the strict or non-strict verdict.
pub fn check_dissipation(p: &DMatrix<f64>, a: &DMatrix<f64>, strict: bool) -> Result<(f64, bool)> {
    linalg::require_symmetric(p, SYMMETRY_TOL)?;
    if a.nrows() != p.nrows() || a.ncols() != p.ncols() {
        return Err(Error::Dimension {
            expected: p.nrows(),
            found: a.nrows(),
        });
    }
    let m = a.transpose() * p + p * a;
    let margin = -linalg::lambda_max(&m)?;
    let ok = if strict {
        margin > 0.0
    } else {
        margin >= -linalg::psd_tolerance(&m)
    };
    Ok((margin, ok))
}

/// Bundles the three positive-real conditions for `(A, g, c)` with storage
/// `x^T P x / 2`.
pub fn verify_linear_passivity(
    a: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DVector<f64>,
    p: &DMatrix<f64>,
) -> Result<PassivityCertificate> {
    let (matching_residual, matched) = check_matching(p, g, c, matching_tolerance(c))?;
    let (dissipation_margin, dissipative) = check_dissipation(p, a, false)?;
    let psd_margin = linalg::lambda_min(p)?;
    let psd = psd_margin >= -linalg::psd_tolerance(p);
    let degenerate = p.amax() == 0.0 || c.amax() == 0.0;
    let verdict = if !(matched && dissipative && psd) {
        Verdict::Invalid
    } else if psd_margin > 0.0 && dissipation_margin > 0.0 {
        Verdict::Strict
    } else {
        Verdict::NonStrict
    };
    Ok(PassivityCertificate {
        p: p.clone(),
        c: c.clone(),
        strict: verdict == Verdict::Strict,
        matching_residual,
        dissipation_margin,
        psd_margin,
        degenerate,
        verdict,
    })
}

/// 6-dimensional convenience wrapper over [`verify_linear_passivity`].
pub fn verify_linear_passivity6(a: &Mat6, c: &OutputMap, p: &Mat6) -> Result<PassivityCertificate> {
    let g = InputVector::g();
    verify_linear_passivity(
        &linalg::to_dynamic(a),
        &DVector::from_column_slice(g.as_slice()),
        &DVector::from_column_slice(c.c.as_slice()),
        &linalg::to_dynamic(p),
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Obstruction {
    /// `g^T c = c1 + c3`.
    pub gtc: f64,
    pub passivation_possible: bool,
}

/// Passivity with any quadratic storage needs `g^T P g = g^T c > 0`.
pub fn matching_obstruction(c: &OutputMap) -> Obstruction {
    let gtc = InputVector::g().dot(&c.c);
    Obstruction {
        gtc,
        passivation_possible: gtc > 0.0,
    }
}

/// `dV/dt + eps |x_tilde|^2` along the closed loop with `v = 0`. Negative
/// means the decrease condition holds at `x_tilde`.
pub fn lyapunov_decrease_margin(xt: &Vec6, storage: &Storage, sys: &ShiftedSystem) -> f64 {
    storage.gradient(xt).dot(&sys.field(xt, 0.0)) + DECREASE_EPS * xt.norm_squared()
}

/// `dV/dt - u * y_tilde` with exogenous input `u` entering through `g`.
pub fn passivity_inequality_margin(xt: &Vec6, u: f64, storage: &Storage, sys: &ShiftedSystem) -> f64 {
    storage.gradient(xt).dot(&sys.field(xt, u)) - u * sys.output(xt)
}

/// Radius of the largest Euclidean ball inside `{V <= rho}`.
pub fn roa_radius(storage: &Storage, rho: f64) -> Result<f64> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::InvalidParameter(format!("rho must be > 0, got {rho}")));
    }
    let lmin = linalg::lambda_min(&linalg::to_dynamic(&storage.effective()))?;
    if !(lmin > 0.0) {
        return Err(Error::Singular);
    }
    Ok((rho / lmin).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RoaStatus {
    FalsificationFree,
    CounterexampleFound,
}

impl RoaStatus {
    pub fn name(self) -> &'static str {
        match self {
            RoaStatus::FalsificationFree => "falsification-free",
            RoaStatus::CounterexampleFound => "counterexample-found",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoaEstimate {
    pub storage: Storage,
    pub rho: f64,
    pub radius: f64,
    pub status: RoaStatus,
    /// Shell samples drawn at the reported level.
    pub n_samples: usize,
    /// Shifted state violating the decrease condition inside `{V <= rho}`.
    pub counterexample: Option<Vec6>,
    /// Largest decrease margin seen at the reported level.
    pub worst_margin: f64,
    /// Smallest level at which a counterexample was found, if any was tried.
    pub failing_rho: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RoaOptions {
    pub n_samples: usize,
    pub n_ascent: usize,
    pub ascent_steps: usize,
    pub seed: u64,
    /// Bisection stops when `hi / lo <= 1 + rel_precision`.
    pub rel_precision: f64,
    /// First level tried; defaults to the level whose ball has radius 1.
    pub rho_init: Option<f64>,
    pub max_bracket: usize,
}

impl Default for RoaOptions {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            n_ascent: 100,
            ascent_steps: 200,
            seed: 0,
            rel_precision: 1e-3,
            rho_init: None,
            max_bracket: 60,
        }
    }
}

impl RoaOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || !(self.rel_precision > 0.0) {
            return Err(Error::InvalidParameter(
                "n_samples must be > 0 and rel_precision > 0".into(),
            ));
        }
        if let Some(r) = self.rho_init {
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::InvalidParameter(format!("rho_init must be > 0, got {r}")));
            }
        }
        Ok(())
    }
}

const HALTON_PRIMES: [u64; 7] = [2, 3, 5, 7, 11, 13, 17];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

/// Precomputed pieces of a level check: the Cholesky factor of `s P` and
/// the Cranley-Patterson shift of the Halton sequence.
struct Sampler {
    /// `x_tilde = l_inv_t * w` maps the `|w|^2 = V` ball to the sublevel set.
    l_inv_t: Mat6,
    shift: [f64; 7],
}

impl Sampler {
    fn new(storage: &Storage, seed: u64) -> Result<Self> {
        let chol = storage
            .effective()
            .cholesky()
            .ok_or_else(|| Error::LinearCheckFailed("P is not positive definite".into()))?;
        let l_inv_t = chol
            .l()
            .try_inverse()
            .ok_or(Error::Singular)?
            .transpose();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut shift = [0.0; 7];
        for s in &mut shift {
            *s = rng.random::<f64>();
        }
        Ok(Self { l_inv_t, shift })
    }

    fn halton(&self, i: usize, d: usize) -> f64 {
        (radical_inverse(i as u64 + 1, HALTON_PRIMES[d]) + self.shift[d]).fract()
    }

    /// Point `i` of the shell `{rho/2 <= V <= rho}` in `w` coordinates.
    fn shell_point(&self, i: usize, rho: f64) -> Vec6 {
        let mut w = Vec6::zeros();
        for k in 0..3 {
            let u1 = 1.0 - self.halton(i, 2 * k);
            let u2 = self.halton(i, 2 * k + 1);
            let r = (-2.0 * u1.ln()).sqrt();
            let th = std::f64::consts::TAU * u2;
            w[2 * k] = r * th.cos();
            w[2 * k + 1] = r * th.sin();
        }
        let n = w.norm();
        if n == 0.0 {
            w[0] = 1.0;
        } else {
            w /= n;
        }
        let v = rho * (0.5 + 0.5 * self.halton(i, 6));
        w * v.sqrt()
    }

    fn to_state(&self, w: &Vec6) -> Vec6 {
        self.l_inv_t * w
    }
}

fn margin_or_inf(xt: &Vec6, storage: &Storage, sys: &ShiftedSystem) -> f64 {
    let m = lyapunov_decrease_margin(xt, storage, sys);
    if m.is_finite() {
        m
    } else {
        f64::INFINITY
    }
}

/// Maximizes `margin / V` over `{V <= rho}` from `w0`, in `w` coordinates.
/// Returns the best point and its raw margin.
fn ascend(w0: Vec6, rho: f64, sampler: &Sampler, storage: &Storage, sys: &ShiftedSystem, steps: usize) -> (Vec6, f64) {
    let r_max = rho.sqrt();
    let r_min = 1e-3 * r_max;
    let score = |w: &Vec6| -> f64 {
        let n2 = w.norm_squared();
        let m = margin_or_inf(&sampler.to_state(w), storage, sys);
        if m.is_infinite() {
            m
        } else {
            m / n2
        }
    };
    let project = |mut w: Vec6| -> Vec6 {
        let n = w.norm();
        if n > r_max {
            w *= r_max / n;
        } else if n < r_min && n > 0.0 {
            w *= r_min / n;
        }
        w
    };
    let mut w = project(w0);
    let mut f = score(&w);
    let mut step = 0.05 * r_max;
    let h = 1e-6 * r_max;
    for _ in 0..steps {
        if f.is_infinite() || step < 1e-8 * r_max {
            break;
        }
        let mut grad = Vec6::zeros();
        for k in 0..6 {
            let mut wp = w;
            let mut wm = w;
            wp[k] += h;
            wm[k] -= h;
            grad[k] = (score(&wp) - score(&wm)) / (2.0 * h);
        }
        let gn = grad.norm();
        if !(gn > 0.0) || !gn.is_finite() {
            break;
        }
        let trial = project(w + grad * (step / gn));
        let ft = score(&trial);
        if ft > f {
            w = trial;
            f = ft;
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    (w, margin_or_inf(&sampler.to_state(&w), storage, sys))
}

struct LevelResult {
    worst_margin: f64,
    counterexample: Option<Vec6>,
}

fn check_level_with(sampler: &Sampler, storage: &Storage, sys: &ShiftedSystem, rho: f64, opts: &RoaOptions) -> LevelResult {
    let margins: Vec<f64> = (0..opts.n_samples)
        .into_par_iter()
        .map(|i| margin_or_inf(&sampler.to_state(&sampler.shell_point(i, rho)), storage, sys))
        .collect();

    let mut order: Vec<usize> = (0..margins.len()).collect();
    order.sort_by(|&a, &b| margins[b].total_cmp(&margins[a]).then(a.cmp(&b)));
    let worst = order[0];
    if margins[worst] > 0.0 {
        return LevelResult {
            worst_margin: margins[worst],
            counterexample: Some(sampler.to_state(&sampler.shell_point(worst, rho))),
        };
    }

    let starts: Vec<usize> = order.into_iter().take(opts.n_ascent).collect();
    let ascents: Vec<(Vec6, f64)> = starts
        .par_iter()
        .map(|&i| ascend(sampler.shell_point(i, rho), rho, sampler, storage, sys, opts.ascent_steps))
        .collect();

    let mut best_margin = margins[worst];
    let mut best_point = None;
    for (w, m) in ascents {
        if m > best_margin {
            best_margin = m;
            best_point = Some(w);
        }
    }
    let counterexample = match best_point {
        Some(w) if best_margin > 0.0 => Some(sampler.to_state(&w)),
        _ => None,
    };
    LevelResult {
        worst_margin: best_margin,
        counterexample,
    }
}

/// The linearization must be strictly Lyapunov-stable under `storage` and
/// `P` must be positive definite before any sampling.
pub fn linear_roa_check(storage: &Storage, sys: &ShiftedSystem) -> Result<()> {
    let p = linalg::to_dynamic(&storage.p);
    let lmin = linalg::lambda_min(&p)?;
    if !(lmin > PD_FLOOR * p.norm().max(1.0) * 1e-3) {
        return Err(Error::LinearCheckFailed(format!(
            "P is not positive definite (lambda_min = {lmin:.6e})"
        )));
    }
    let a = linalg::to_dynamic(&sys.jacobian());
    let (margin, ok) = check_dissipation(&p, &a, true)?;
    if !ok {
        return Err(Error::LinearCheckFailed(format!(
            "A^T P + P A is not negative definite at the equilibrium (lambda_max = {:.6e})",
            -margin
        )));
    }
    Ok(())
}

/// Runs the falsification search at a single level.
pub fn check_roa_level(storage: &Storage, sys: &ShiftedSystem, rho: f64, opts: &RoaOptions) -> Result<RoaEstimate> {
    opts.validate()?;
    linear_roa_check(storage, sys)?;
    let radius = roa_radius(storage, rho)?;
    let sampler = Sampler::new(storage, opts.seed)?;
    let res = check_level_with(&sampler, storage, sys, rho, opts);
    let status = if res.counterexample.is_some() {
        RoaStatus::CounterexampleFound
    } else {
        RoaStatus::FalsificationFree
    };
    Ok(RoaEstimate {
        storage: *storage,
        rho,
        radius,
        status,
        n_samples: opts.n_samples,
        failing_rho: res.counterexample.map(|_| rho),
        counterexample: res.counterexample,
        worst_margin: res.worst_margin,
    })
}

/// Largest falsification-free level of `storage`, by bracketing and
/// geometric bisection on `rho`.
pub fn estimate_roa_level(storage: &Storage, sys: &ShiftedSystem, opts: &RoaOptions) -> Result<RoaEstimate> {
    opts.validate()?;
    linear_roa_check(storage, sys)?;
    let sampler = Sampler::new(storage, opts.seed)?;
    let lmin = linalg::lambda_min(&linalg::to_dynamic(&storage.effective()))?;
    let check = |rho: f64| check_level_with(&sampler, storage, sys, rho, opts);

    let mut rho = opts.rho_init.unwrap_or(lmin);
    let first = check(rho);
    let (mut lo, mut lo_res, mut hi) = if first.counterexample.is_none() {
        let mut lo = rho;
        let mut lo_res = first;
        let mut hi = None;
        for _ in 0..opts.max_bracket {
            rho *= 2.0;
            let r = check(rho);
            if r.counterexample.is_some() {
                hi = Some(rho);
                break;
            }
            lo = rho;
            lo_res = r;
        }
        (lo, lo_res, hi)
    } else {
        let mut found = None;
        for _ in 0..opts.max_bracket {
            let prev = rho;
            rho *= 0.5;
            let r = check(rho);
            if r.counterexample.is_none() {
                found = Some((rho, r, prev));
                break;
            }
        }
        let (lo, r, hi) = found.ok_or_else(|| Error::SolverStalled {
            iterations: opts.max_bracket,
            reason: "no falsification-free level found while shrinking rho".into(),
        })?;
        (lo, r, Some(hi))
    };

    if let Some(mut h) = hi {
        while h / lo > 1.0 + opts.rel_precision {
            let mid = (lo * h).sqrt();
            let r = check(mid);
            if r.counterexample.is_none() {
                lo = mid;
                lo_res = r;
            } else {
                h = mid;
            }
        }
        hi = Some(h);
    }

    Ok(RoaEstimate {
        storage: *storage,
        rho: lo,
        radius: roa_radius(storage, lo)?,
        status: RoaStatus::FalsificationFree,
        n_samples: opts.n_samples,
        counterexample: None,
        worst_margin: lo_res.worst_margin,
        failing_rho: hi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(n: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(n, n, v)
    }

    #[test]
    fn matching_identity() {
        let p = DMatrix::identity(6, 6);
        let g = DVector::from_column_slice(InputVector::g().as_slice());
        let (r, ok) = check_matching(&p, &g, &g, 1e-12).unwrap();
        assert_eq!(r, 0.0);
        assert!(ok);
    }

    #[test]
    fn matching_rejects_asymmetric() {
        let mut p = DMatrix::identity(6, 6);
        p[(0, 1)] = 1e-6;
        let g = DVector::from_column_slice(InputVector::g().as_slice());
        assert!(matches!(check_matching(&p, &g, &g, 1e-9), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn dissipation_examples() {
        let (m, ok) = check_dissipation(&DMatrix::identity(3, 3), &(-DMatrix::identity(3, 3)), true).unwrap();
        assert!((m - 2.0).abs() < 1e-14 && ok);
        let rot = dm(2, &[0.0, 1.0, -1.0, 0.0]);
        let i2 = DMatrix::identity(2, 2);
        let (m, strict) = check_dissipation(&i2, &rot, true).unwrap();
        assert!(m.abs() < 1e-14 && !strict);
        assert!(check_dissipation(&i2, &rot, false).unwrap().1);
        assert!(check_dissipation(&i2, &DMatrix::identity(3, 3), false).is_err());
    }

    #[test]
    fn degenerate_zero_certificate() {
        let z = DMatrix::zeros(6, 6);
        let a = -DMatrix::identity(6, 6);
        let g = DVector::from_column_slice(InputVector::g().as_slice());
        let c = DVector::zeros(6);
        let cert = verify_linear_passivity(&a, &g, &c, &z).unwrap();
        assert_eq!(cert.verdict, Verdict::NonStrict);
        assert!(cert.degenerate && !cert.strict);
    }

    #[test]
    fn obstruction_values() {
        let o = matching_obstruction(&OutputMap::standard());
        assert_eq!(o.gtc, 0.0);
        assert!(!o.passivation_possible);
        assert_eq!(matching_obstruction(&OutputMap::summed()).gtc, 2.0);
        let o = matching_obstruction(&OutputMap::new([1.0, 0.0, -0.29, 0.0, 0.0, 0.0]));
        assert!((o.gtc - 0.71).abs() < 1e-15 && o.passivation_possible);
    }

    #[test]
    fn radius_examples() {
        let s = Storage::new(Mat6::identity(), StorageScale::Full).unwrap();
        assert_eq!(roa_radius(&s, 4.0).unwrap(), 2.0);
        let h = Storage::new(Mat6::identity(), StorageScale::Half).unwrap();
        assert!((roa_radius(&h, 4.0).unwrap() - 8f64.sqrt()).abs() < 1e-14);
        assert!(roa_radius(&s, 0.0).is_err());
        let z = Storage::new(Mat6::zeros(), StorageScale::Full).unwrap();
        assert!(roa_radius(&z, 1.0).is_err());
    }

    #[test]
    fn halton_is_in_unit_interval() {
        for i in 1..1000 {
            for &b in &HALTON_PRIMES {
                let r = radical_inverse(i, b);
                assert!((0.0..1.0).contains(&r));
            }
        }
        assert_eq!(radical_inverse(1, 2), 0.5);
        assert_eq!(radical_inverse(3, 2), 0.75);
    }

    #[test]
    fn shell_points_lie_in_shell() {
        let mut p = Mat6::identity();
        p[(0, 0)] = 3.0;
        p[(1, 2)] = 0.2;
        p[(2, 1)] = 0.2;
        let s = Storage::new(p, StorageScale::Half).unwrap();
        let sampler = Sampler::new(&s, 7).unwrap();
        for i in 0..500 {
            let x = sampler.to_state(&sampler.shell_point(i, 0.3));
            let v = s.value(&x);
            assert!(v >= 0.15 * (1.0 - 1e-12) && v <= 0.3 * (1.0 + 1e-12), "{v}");
        }
    }
}
