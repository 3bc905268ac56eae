//! Equilibria, linearization and the `(u_star, k)` stability sweeps.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{
    self, Branch, EpileptorParams, FeedbackLaw, InputVector, Mat6, OutputMap, State, Vec6, X1, X2,
};

/// Residual accepted for a polished equilibrium.
pub const EQUILIBRIUM_TOL: f64 = 1e-9;
/// Newton solutions closer than this are the same equilibrium.
pub const MERGE_DISTANCE: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Equilibrium {
    pub x_star: State,
    pub u_star: f64,
    pub residual_norm: f64,
    /// Open-loop Jacobian `A = df/dx` at `x_star`.
    pub jacobian: Mat6,
    /// Abscissa of `A - k g c^T` for the law the equilibrium was found with
    /// (`k = 0` for open-loop searches).
    pub spectral_abscissa: f64,
    /// `(x1 < 0, x2 >= -0.25)`.
    pub branch_signature: (bool, bool),
}

impl Equilibrium {
    pub fn branch(&self) -> Branch {
        Branch {
            x1_negative: self.branch_signature.0,
            x2_upper: self.branch_signature.1,
        }
    }
}

/// Residual map and its Jacobian on a fixed branch, for Newton.
struct Residual<'a> {
    p: &'a EpileptorParams,
    law: FeedbackLaw,
    c: OutputMap,
}

impl Residual<'_> {
    fn eval(&self, x: &Vec6, b: Branch) -> Vec6 {
        let u = self.law.input(self.c.eval(x), 0.0);
        model::field_on_branch(x, u, self.p, b)
    }

    fn jac(&self, x: &Vec6, b: Branch) -> Mat6 {
        let slope = self.law.phi.slope(self.c.eval(x) - self.law.y_star);
        model::jacobian_on_branch(x, self.p, b) - slope * InputVector::g() * self.c.c.transpose()
    }

    fn true_residual(&self, x: &Vec6) -> Vec6 {
        self.eval(x, Branch::of(x))
    }
}

/// Damped Newton on one branch. Returns `None` on divergence or if the
/// limit leaves the branch's domain.
fn newton_on_branch(r: &Residual, seed: Vec6, b: Branch) -> Option<Vec6> {
    let mut x = seed;
    let mut fx = r.eval(&x, b);
    let mut norm = fx.norm();
    for _ in 0..100 {
        if norm < 1e-13 {
            break;
        }
        let step = r.jac(&x, b).lu().solve(&(-fx))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut lambda = 1.0;
        loop {
            let trial = x + lambda * step;
            let ft = r.eval(&trial, b);
            let nt = ft.norm();
            if nt.is_finite() && nt < (1.0 - 1e-4 * lambda) * norm {
                x = trial;
                fx = ft;
                norm = nt;
                break;
            }
            lambda *= 0.5;
            if lambda < 1e-10 {
                return (norm < 1e-11 && b.contains(&x)).then_some(x);
            }
        }
        if step.norm() * lambda < 1e-15 * (1.0 + x.norm()) {
            break;
        }
        if x.norm() > 1e6 {
            return None;
        }
    }
    (b.contains(&x) && r.true_residual(&x).norm() <= EQUILIBRIUM_TOL).then_some(x)
}

/// Fills in the coordinates fixed by the equilibrium relations given `x1`,
/// `x2`: `y1 = y0 - 5 x1^2`, `zeta = x1 / 10`, `z = 4 (x1 - x0)`, `y2 = f2(x2)`.
fn lift_seed(x1: f64, x2: f64, b: Branch, p: &EpileptorParams) -> Vec6 {
    let y2 = if b.x2_upper { 6.0 * (x2 - model::F2_KNEE) } else { 0.0 };
    Vec6::new(x1, p.y0 - 5.0 * x1 * x1, x2, y2, 0.1 * x1, 4.0 * (x1 - p.x0))
}

/// Deterministic seed set: every branch combination crossed with a lattice
/// over `[-3, 3]^2` in `(x1, x2)`.
pub fn default_seeds(p: &EpileptorParams) -> Vec<(Branch, Vec6)> {
    const N: usize = 13;
    let lattice = |i: usize| -3.0 + 6.0 * i as f64 / (N - 1) as f64;
    let mut out = Vec::with_capacity(4 * N * N);
    for b in Branch::ALL {
        for i in 0..N {
            for j in 0..N {
                out.push((b, lift_seed(lattice(i), lattice(j), b, p)));
            }
        }
    }
    out
}

fn lexicographic(a: &Vec6, b: &Vec6) -> std::cmp::Ordering {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn make_equilibrium(x: Vec6, law: &FeedbackLaw, c: &OutputMap, p: &EpileptorParams) -> Result<Equilibrium> {
    let r = Residual { p, law: *law, c: *c };
    let a = model::jacobian(&x, p);
    let a_eff = r.jac(&x, Branch::of(&x));
    let b = Branch::of(&x);
    Ok(Equilibrium {
        x_star: State::from_vector(x)?,
        u_star: law.u_star,
        residual_norm: r.true_residual(&x).norm(),
        jacobian: a,
        spectral_abscissa: linalg::spectral_abscissa6(&a_eff)?,
        branch_signature: (b.x1_negative, b.x2_upper),
    })
}

/// Equilibria of `f(x) + g u` where `u` is produced by `law` from `y = c^T x`.
pub fn find_closed_loop_equilibria(
    law: &FeedbackLaw,
    c: &OutputMap,
    p: &EpileptorParams,
    seeds: Option<&[(Branch, Vec6)]>,
) -> Result<Vec<Equilibrium>> {
    p.validate()?;
    law.validate()?;
    let default;
    let seeds = match seeds {
        Some(s) => s,
        None => {
            default = default_seeds(p);
            &default
        }
    };
    let r = Residual { p, law: *law, c: *c };
    let mut found: Vec<Vec6> = Vec::new();
    for &(b, seed) in seeds {
        if let Some(x) = newton_on_branch(&r, seed, b) {
            if !found.iter().any(|y| (y - x).norm() < MERGE_DISTANCE) {
                found.push(x);
            }
        }
    }
    found.sort_by(lexicographic);
    found
        .into_iter()
        .map(|x| make_equilibrium(x, law, c, p))
        .collect()
}

/// Open-loop equilibria `0 = f(x) + g u_star`.
pub fn find_equilibria(
    u_star: f64,
    p: &EpileptorParams,
    seeds: Option<&[(Branch, Vec6)]>,
) -> Result<Vec<Equilibrium>> {
    if !u_star.is_finite() {
        return Err(Error::NonFinite("u_star"));
    }
    find_closed_loop_equilibria(&FeedbackLaw::open_loop(u_star), &OutputMap::standard(), p, seeds)
}

/// Refines a single equilibrium from `seed`, keeping `seed`'s branch.
pub fn refine_equilibrium(seed: &Vec6, u_star: f64, p: &EpileptorParams) -> Option<Equilibrium> {
    let law = FeedbackLaw::open_loop(u_star);
    let c = OutputMap::standard();
    let r = Residual { p, law, c };
    let x = newton_on_branch(&r, *seed, Branch::of(seed))?;
    make_equilibrium(x, &law, &c, p).ok()
}

pub fn spectral_abscissa(m: &DMatrix<f64>) -> Result<f64> {
    linalg::spectral_abscissa(m)
}

/// `A - k g c^T`.
pub fn closed_loop_jacobian(eq: &Equilibrium, k: f64, c: &OutputMap) -> Mat6 {
    eq.jacobian - k * InputVector::g() * c.c.transpose()
}

/// Uniformly spaced axis from `start` to `stop` inclusive.
pub fn axis(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(stop >= start) || !start.is_finite() || !stop.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "bad axis ({start}, {stop}, {step})"
        )));
    }
    let n = ((stop - start) / step).round() as usize + 1;
    Ok((0..n).map(|i| start + i as f64 * step).collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepGrid {
    pub u_star_axis: Vec<f64>,
    pub k_axis: Vec<f64>,
    /// `abscissa[i][j]` at `(u_star_axis[i], k_axis[j])`; `None` where no
    /// equilibrium on the tracked branch was found.
    pub abscissa: Vec<Vec<Option<f64>>>,
    pub c: OutputMap,
}

impl SweepGrid {
    pub fn stable_count(&self) -> usize {
        self.abscissa
            .iter()
            .flatten()
            .filter(|a| matches!(a, Some(v) if *v < 0.0))
            .count()
    }

    pub fn missing_count(&self) -> usize {
        self.abscissa.iter().flatten().filter(|a| a.is_none()).count()
    }

    pub fn at(&self, u_star: f64, k: f64) -> Option<Option<f64>> {
        let i = nearest(&self.u_star_axis, u_star)?;
        let j = nearest(&self.k_axis, k)?;
        Some(self.abscissa[i][j])
    }
}

fn nearest(axis: &[f64], v: f64) -> Option<usize> {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
}

/// The operating branch: cubic `f1`, flat `f2`. It carries the stabilized
/// equilibria of the nominal feedback designs.
pub const OPERATING_BRANCH: Branch = Branch {
    x1_negative: true,
    x2_upper: false,
};

/// Spectral abscissa of `A - k g c^T` over a `(u_star, k)` grid.
///
/// With `y_star = c^T x_star` the equilibrium depends on `u_star` only, so
/// each `u_star` row continues the operating-branch equilibrium from the
/// previous row and then evaluates every `k` cell of the row in parallel.
pub fn stability_sweep(
    u_axis: &[f64],
    k_axis: &[f64],
    c: &OutputMap,
    p: &EpileptorParams,
) -> Result<SweepGrid> {
    if u_axis.is_empty() || k_axis.is_empty() {
        return Err(Error::InvalidParameter("sweep axes must be non-empty".into()));
    }
    p.validate()?;
    let g = InputVector::g();
    let gc = g * c.c.transpose();

    let mut previous: Option<Vec6> = None;
    let mut rows = Vec::with_capacity(u_axis.len());
    for &u in u_axis {
        let continued = previous
            .and_then(|x| refine_equilibrium(&x, u, p))
            .filter(|e| e.branch() == OPERATING_BRANCH);
        let eq = match continued {
            Some(e) => Some(e),
            None => find_equilibria(u, p, None)?
                .into_iter()
                .filter(|e| e.branch() == OPERATING_BRANCH)
                .min_by(|a, b| a.spectral_abscissa.total_cmp(&b.spectral_abscissa)),
        };
        previous = eq.map(|e| *e.x_star.vector());
        let row: Vec<Option<f64>> = match eq {
            Some(e) => k_axis
                .par_iter()
                .map(|&k| linalg::spectral_abscissa6(&(e.jacobian - k * gc)).ok())
                .collect(),
            None => vec![None; k_axis.len()],
        };
        rows.push(row);
    }
    Ok(SweepGrid {
        u_star_axis: u_axis.to_vec(),
        k_axis: k_axis.to_vec(),
        abscissa: rows,
        c: *c,
    })
}

/// Default sweep axes: `u_star` in `[-3, 0.5]`, `k` in `[0, 4]`, step 0.05.
pub fn default_axes() -> (Vec<f64>, Vec<f64>) {
    (
        axis(-3.0, 0.5, 0.05).expect("static axis"),
        axis(0.0, 4.0, 0.05).expect("static axis"),
    )
}

/// Branch predicates re-evaluated on the stored state.
pub fn signature_consistent(eq: &Equilibrium) -> bool {
    let x = eq.x_star.vector();
    eq.branch_signature == (x[X1] < 0.0, x[X2] >= model::F2_KNEE)
}
