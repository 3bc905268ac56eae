//! Brute-force oracle for 2x2 output design:
//! `min |Pg - t|_1` s.t. `P >= delta I`, `A^T P + P A <= -eps I`.
//!
//! The search runs over the output `c = Pg` on a shrinking 2-D grid. For a
//! fixed `c` the remaining freedom is `P = P0 + lam h h^T` with `h` normal to
//! `g`, and each constraint holds on an interval of `lam` computed exactly
//! from the trace and determinant.

#![allow(dead_code)]

use nalgebra::DMatrix;

type Sym2 = [f64; 3];

fn is_psd(m: Sym2) -> bool {
    m[0] >= 0.0 && m[2] >= 0.0 && m[0] * m[2] - m[1] * m[1] >= 0.0
}

/// `{lam : m0 + lam m1 >= 0}`, an interval since the set is convex.
fn psd_interval(m0: Sym2, m1: Sym2) -> Option<(f64, f64)> {
    let at = |l: f64| [m0[0] + l * m1[0], m0[1] + l * m1[1], m0[2] + l * m1[2]];
    let qa = m1[0] * m1[2] - m1[1] * m1[1];
    let qb = m0[0] * m1[2] + m1[0] * m0[2] - 2.0 * m0[1] * m1[1];
    let qc = m0[0] * m0[2] - m0[1] * m0[1];
    let mut pts = vec![f64::NEG_INFINITY, f64::INFINITY];
    if qa.abs() > 1e-300 {
        let disc = qb * qb - 4.0 * qa * qc;
        if disc >= 0.0 {
            let r = disc.sqrt();
            pts.push((-qb - r) / (2.0 * qa));
            pts.push((-qb + r) / (2.0 * qa));
        }
    } else if qb != 0.0 {
        pts.push(-qc / qb);
    }
    for k in [0, 2] {
        if m1[k] != 0.0 {
            pts.push(-m0[k] / m1[k]);
        }
    }
    pts.sort_by(f64::total_cmp);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for w in pts.windows(2) {
        let mid = match (w[0].is_finite(), w[1].is_finite()) {
            (true, true) => 0.5 * (w[0] + w[1]),
            (false, true) => w[1] - 1.0 - w[1].abs(),
            (true, false) => w[0] + 1.0 + w[0].abs(),
            _ => 0.0,
        };
        if is_psd(at(mid)) {
            lo = lo.min(w[0]);
            hi = hi.max(w[1]);
        }
    }
    for &x in &pts {
        if x.is_finite() && is_psd(at(x)) {
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (lo <= hi).then_some((lo, hi))
}

fn output_feasible(a: &DMatrix<f64>, g: [f64; 2], c: [f64; 2], delta: f64, eps: f64) -> bool {
    let gg = g[0] * g[0] + g[1] * g[1];
    let gc = g[0] * c[0] + g[1] * c[1];
    let p0 = |i: usize, j: usize| (c[i] * g[j] + g[i] * c[j]) / gg - gc * g[i] * g[j] / (gg * gg);
    let p0 = [p0(0, 0), p0(0, 1), p0(1, 1)];
    let hh = [g[1] * g[1], -g[0] * g[1], g[0] * g[0]];
    let lyap = |p: Sym2| {
        let pm = DMatrix::from_row_slice(2, 2, &[p[0], p[1], p[1], p[2]]);
        let q = -(a.transpose() * &pm + &pm * a);
        [q[(0, 0)], 0.5 * (q[(0, 1)] + q[(1, 0)]), q[(1, 1)]]
    };
    let (q0, q1) = (lyap(p0), lyap(hh));
    let i1 = psd_interval([p0[0] - delta, p0[1], p0[2] - delta], hh);
    let i2 = psd_interval([q0[0] - eps, q0[1], q0[2] - eps], q1);
    matches!((i1, i2), (Some(x), Some(y)) if x.0.max(y.0) <= x.1.min(y.1))
}

pub fn grid_oracle(a: &DMatrix<f64>, g: [f64; 2], t: [f64; 2], delta: f64, eps: f64) -> f64 {
    let n = 200;
    let mut center = [0.0, 0.0];
    let mut width = 64.0;
    let mut best = f64::INFINITY;
    for _ in 0..30 {
        let mut best_pt = center;
        for i in 0..=n {
            for j in 0..=n {
                let s = |c: f64, m: usize| c - width + 2.0 * width * m as f64 / n as f64;
                let c = [s(center[0], i), s(center[1], j)];
                let v = (c[0] - t[0]).abs() + (c[1] - t[1]).abs();
                if v < best && output_feasible(a, g, c, delta, eps) {
                    best = v;
                    best_pt = c;
                }
            }
        }
        center = best_pt;
        width *= 0.5;
    }
    best
}
