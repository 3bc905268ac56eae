//! A small dense log-det barrier solver for linear matrix inequalities.
//!
//! Problems have the form
//!
//! ```text
//! minimize    c^T x
//! subject to  F_b(x) = F_b0 + sum_i x_i F_bi  > 0   (each LMI block b)
//!             a_j^T x + b_j                  > 0   (each linear row j)
//! ```
//!
//! and are solved by a path-following barrier method with damped Newton
//! centering. Sizes here are a few dozen variables and 6x6 blocks, so every
//! quantity is formed densely.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct LmiBlock {
    pub f0: DMatrix<f64>,
    pub fi: Vec<DMatrix<f64>>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.f0.nrows()
    }

    pub fn eval(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let mut m = self.f0.clone();
        for (xi, fi) in x.iter().zip(&self.fi) {
            if *xi != 0.0 {
                m += *xi * fi;
            }
        }
        m
    }
}

/// Rows `a_j^T x + b_j > 0`.
#[derive(Clone, Debug)]
pub struct LinearRows {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl LinearRows {
    pub fn empty(n_vars: usize) -> Self {
        Self {
            a: DMatrix::zeros(0, n_vars),
            b: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    pub fn push(&mut self, coeffs: &[(usize, f64)], offset: f64) {
        let n = self.a.ncols();
        let m = self.a.nrows();
        let mut a = DMatrix::zeros(m + 1, n);
        a.rows_mut(0, m).copy_from(&self.a);
        for &(i, v) in coeffs {
            a[(m, i)] += v;
        }
        self.a = a;
        let mut b = DVector::zeros(m + 1);
        b.rows_mut(0, m).copy_from(&self.b);
        b[m] = offset;
        self.b = b;
    }

    pub fn slacks(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b
    }
}

#[derive(Clone, Debug)]
pub struct LmiProblem {
    pub objective: DVector<f64>,
    pub blocks: Vec<LmiBlock>,
    pub linear: LinearRows,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierOptions {
    /// Stop when the barrier duality-gap bound `m / t` falls below this.
    pub gap_tol: f64,
    pub t0: f64,
    pub mu: f64,
    pub max_newton: usize,
    pub max_outer: usize,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tol: 1e-9,
            t0: 1.0,
            mu: 20.0,
            max_newton: 200,
            max_outer: 60,
        }
    }
}

#[derive(Clone, Debug)]
pub struct BarrierSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub newton_steps: usize,
    pub gap_bound: f64,
}

impl LmiProblem {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    fn barrier_order(&self) -> f64 {
        (self.blocks.iter().map(|b| b.dim()).sum::<usize>() + self.linear.len()) as f64
    }

    /// Smallest eigenvalue over all blocks and linear slacks at `x`.
    pub fn min_margin(&self, x: &DVector<f64>) -> f64 {
        let mut m = f64::INFINITY;
        for b in &self.blocks {
            let f = b.eval(x);
            let f = 0.5 * (&f + f.transpose());
            let ev = f.symmetric_eigenvalues();
            m = m.min(ev.iter().copied().fold(f64::INFINITY, f64::min));
        }
        for s in self.linear.slacks(x).iter() {
            m = m.min(*s);
        }
        m
    }

    /// Whether `x` is strictly inside every constraint.
    pub fn strictly_feasible(&self, x: &DVector<f64>) -> bool {
        self.linear.slacks(x).iter().all(|s| *s > 0.0)
            && self.blocks.iter().all(|b| b.eval(x).cholesky().is_some())
    }

    /// Barrier value `t c^T x - sum log det F_b - sum log s_j`, or `None`
    /// outside the domain.
    fn barrier(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let mut v = t * self.objective.dot(x);
        for s in self.linear.slacks(x).iter() {
            if *s <= 0.0 {
                return None;
            }
            v -= s.ln();
        }
        for b in &self.blocks {
            let ch = b.eval(x).cholesky()?;
            let l = ch.l();
            v -= 2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>();
        }
        v.is_finite().then_some(v)
    }

    fn grad_hess(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let n = self.n_vars();
        let mut g = t * &self.objective;
        let mut h = DMatrix::zeros(n, n);
        for b in &self.blocks {
            let ch = b.eval(x).cholesky()?;
            // G_i = L^{-1} F_i L^{-T}; tr(F^{-1} F_i) = tr(G_i) and the
            // Hessian entry is <G_i, G_j>.
            let l = ch.l();
            let gs: Vec<DMatrix<f64>> = b
                .fi
                .iter()
                .map(|fi| {
                    let y = l.solve_lower_triangular(fi).expect("cholesky factor is nonsingular");
                    let yt = y.transpose();
                    l.solve_lower_triangular(&yt).expect("cholesky factor is nonsingular")
                })
                .collect();
            for i in 0..n {
                g[i] -= gs[i].trace();
                for j in 0..=i {
                    let v = gs[i].dot(&gs[j]);
                    h[(i, j)] += v;
                    if i != j {
                        h[(j, i)] += v;
                    }
                }
            }
        }
        if !self.linear.is_empty() {
            let s = self.linear.slacks(x);
            if s.iter().any(|v| *v <= 0.0) {
                return None;
            }
            for (j, sj) in s.iter().enumerate() {
                let row = self.linear.a.row(j);
                let inv = 1.0 / sj;
                for i in 0..n {
                    if row[i] == 0.0 {
                        continue;
                    }
                    g[i] -= row[i] * inv;
                    for k in 0..n {
                        if row[k] != 0.0 {
                            h[(i, k)] += row[i] * row[k] * inv * inv;
                        }
                    }
                }
            }
        }
        Some((g, h))
    }

    fn newton_direction(g: &DVector<f64>, h: &DMatrix<f64>) -> Option<DVector<f64>> {
        if let Some(ch) = h.clone().cholesky() {
            return Some(-ch.solve(g));
        }
        // Regularize a numerically indefinite Hessian.
        let scale = h.diagonal().amax().max(1e-300);
        let mut reg = 1e-12 * scale;
        for _ in 0..20 {
            let hr = h + DMatrix::identity(h.nrows(), h.ncols()) * reg;
            if let Some(ch) = hr.cholesky() {
                return Some(-ch.solve(g));
            }
            reg *= 10.0;
        }
        None
    }

    /// Minimizes the barrier at fixed `t` from a strictly feasible `x`.
    fn center(&self, mut x: DVector<f64>, t: f64, opts: &BarrierOptions, steps: &mut usize) -> Result<DVector<f64>> {
        let mut fx = self
            .barrier(&x, t)
            .ok_or_else(|| Error::InvalidParameter("barrier start is not strictly feasible".into()))?;
        for _ in 0..opts.max_newton {
            let (g, h) = self.grad_hess(&x, t).ok_or(Error::Singular)?;
            let dx = Self::newton_direction(&g, &h).ok_or(Error::Singular)?;
            let decrement = -g.dot(&dx);
            if decrement / 2.0 <= 1e-10 {
                return Ok(x);
            }
            let mut alpha = 1.0;
            let mut accepted = false;
            while alpha > 1e-14 {
                let trial = &x + alpha * &dx;
                if let Some(ft) = self.barrier(&trial, t) {
                    if ft <= fx - 0.01 * alpha * decrement {
                        x = trial;
                        fx = ft;
                        accepted = true;
                        break;
                    }
                }
                alpha *= 0.5;
            }
            *steps += 1;
            if !accepted {
                // No progress possible at this precision.
                return Ok(x);
            }
        }
        Ok(x)
    }

    /// Runs the barrier method from a strictly feasible point.
    pub fn solve_from(&self, x0: DVector<f64>, opts: &BarrierOptions) -> Result<BarrierSolution> {
        self.solve_until(x0, opts, |_| false)
    }

    /// As [`solve_from`](Self::solve_from), stopping early once `stop`
    /// accepts a centered iterate.
    pub fn solve_until<F>(&self, x0: DVector<f64>, opts: &BarrierOptions, stop: F) -> Result<BarrierSolution>
    where
        F: Fn(&DVector<f64>) -> bool,
    {
        if !self.strictly_feasible(&x0) {
            return Err(Error::InvalidParameter("barrier start is not strictly feasible".into()));
        }
        let m = self.barrier_order();
        let mut t = opts.t0;
        let mut x = x0;
        let mut steps = 0;
        for _ in 0..opts.max_outer {
            x = self.center(x, t, opts, &mut steps)?;
            if stop(&x) || m / t < opts.gap_tol {
                return Ok(BarrierSolution {
                    objective: self.objective.dot(&x),
                    x,
                    newton_steps: steps,
                    gap_bound: m / t,
                });
            }
            t *= opts.mu;
        }
        Err(Error::SolverStalled {
            iterations: steps,
            reason: format!("gap bound {:.3e} after {} outer iterations", m / t, opts.max_outer),
        })
    }

    /// Phase 1: minimize `s` subject to `F_b(x) + s I > 0`, `a^T x + b + s > 0`
    /// and a box `|x_i| <= bound`. Returns the final `(x, s)`; `stop_below`
    /// ends the search as soon as `s` is below that value.
    pub fn phase_one(
        &self,
        x0: &DVector<f64>,
        bound: f64,
        stop_below: f64,
        opts: &BarrierOptions,
    ) -> Result<(DVector<f64>, f64)> {
        let n = self.n_vars();
        let s_idx = n;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let mut fi = b.fi.clone();
            fi.push(DMatrix::identity(b.dim(), b.dim()));
            blocks.push(LmiBlock { f0: b.f0.clone(), fi });
        }
        let mut linear = LinearRows::empty(n + 1);
        for j in 0..self.linear.len() {
            let mut coeffs: Vec<(usize, f64)> = (0..n).map(|i| (i, self.linear.a[(j, i)])).collect();
            coeffs.push((s_idx, 1.0));
            linear.push(&coeffs, self.linear.b[j]);
        }
        for i in 0..n {
            linear.push(&[(i, -1.0)], bound);
            linear.push(&[(i, 1.0)], bound);
        }
        let mut objective = DVector::zeros(n + 1);
        objective[s_idx] = 1.0;
        let aux = LmiProblem {
            objective,
            blocks,
            linear,
        };

        let mut start = DVector::zeros(n + 1);
        start.rows_mut(0, n).copy_from(x0);
        if x0.iter().any(|v| v.abs() >= bound) {
            return Err(Error::InvalidParameter("phase-1 start outside the box".into()));
        }
        start[s_idx] = (-self.min_margin(x0)).max(0.0) + 1.0;

        let sol = aux.solve_until(start, opts, |x| x[s_idx] < stop_below)?;
        let s = sol.x[s_idx];
        Ok((sol.x.rows(0, n).into_owned(), s))
    }
}

/// Coordinates of symmetric `n x n` matrices: the basis matrices `E_ij`
/// (`i <= j`) with ones at `(i, j)` and `(j, i)`.
pub fn sym_basis(n: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(n * (n + 1) / 2);
    for i in 0..n {
        for j in i..n {
            out.push((i, j));
        }
    }
    out
}

pub fn sym_from_coords(n: usize, coords: &[f64]) -> DMatrix<f64> {
    let mut p = DMatrix::zeros(n, n);
    for (&(i, j), &v) in sym_basis(n).iter().zip(coords) {
        p[(i, j)] = v;
        p[(j, i)] = v;
    }
    p
}

pub fn sym_to_coords(p: &DMatrix<f64>) -> Vec<f64> {
    sym_basis(p.nrows()).iter().map(|&(i, j)| p[(i, j)]).collect()
}

pub fn basis_matrix(n: usize, i: usize, j: usize) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(n, n);
    e[(i, j)] = 1.0;
    e[(j, i)] = 1.0;
    e
}

/// Solves `A^T X + X A = -Q` for symmetric `X` by a dense linear solve over
/// the symmetric coordinates.
pub fn lyapunov_solve(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let basis = sym_basis(n);
    let m = basis.len();
    let mut lhs = DMatrix::zeros(m, m);
    for (col, &(i, j)) in basis.iter().enumerate() {
        let e = basis_matrix(n, i, j);
        let img = a.transpose() * &e + &e * a;
        for (row, &(r, s)) in basis.iter().enumerate() {
            lhs[(row, col)] = img[(r, s)];
        }
    }
    let rhs = DVector::from_iterator(m, basis.iter().map(|&(r, s)| -q[(r, s)]));
    let coords = lhs.lu().solve(&rhs).ok_or(Error::Singular)?;
    Ok(sym_from_coords(n, coords.as_slice()))
}
