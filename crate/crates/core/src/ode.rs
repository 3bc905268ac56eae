//! Dormand-Prince 5(4) embedded Runge-Kutta pair with adaptive step control.
//!
//! Generic over the state dimension so the same stepper drives the model,
//! linearized systems and variational equations.

use nalgebra::SVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    /// Hard cap on attempted steps.
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
            max_step: 1.0,
            max_steps: 50_000_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0 && self.max_step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerances and max_step must be > 0 (rel {}, abs {}, max_step {})",
                self.rel_tol, self.abs_tol, self.max_step
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be > 0".into()));
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, rel_tol: f64, abs_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self.abs_tol = abs_tol;
        self
    }
}

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the 5th and 4th order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

/// Accepted steps of an integration, including the initial point.
#[derive(Clone, Debug)]
pub struct OdeSolution<const N: usize> {
    pub times: Vec<f64>,
    pub states: Vec<SVector<f64, N>>,
    pub rejected: usize,
}

fn error_norm<const N: usize>(
    err: &SVector<f64, N>,
    y0: &SVector<f64, N>,
    y1: &SVector<f64, N>,
    opts: &SolverOptions,
) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        let sc = opts.abs_tol + opts.rel_tol * y0[i].abs().max(y1[i].abs());
        let r = err[i] / sc;
        acc += r * r;
    }
    (acc / N as f64).sqrt()
}

fn initial_step<const N: usize, F>(
    f: &mut F,
    t0: f64,
    y0: &SVector<f64, N>,
    f0: &SVector<f64, N>,
    opts: &SolverOptions,
    t_end: f64,
) -> f64
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    let scale = |y: &SVector<f64, N>, i: usize| opts.abs_tol + opts.rel_tol * y[i].abs();
    let d0 = (0..N).map(|i| (y0[i] / scale(y0, i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let d1 = (0..N).map(|i| (f0[i] / scale(y0, i)).powi(2)).sum::<f64>().sqrt() / (N as f64).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(opts.max_step).min(t_end - t0);
    let y1 = y0 + h0 * f0;
    let f1 = f(t0 + h0, &y1);
    let d2 = (0..N)
        .map(|i| ((f1[i] - f0[i]) / scale(y0, i)).powi(2))
        .sum::<f64>()
        .sqrt()
        / (N as f64).sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(opts.max_step).min(t_end - t0)
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`, recording every
/// accepted step.
pub fn dopri5<const N: usize, F>(
    mut f: F,
    t0: f64,
    t_end: f64,
    y0: SVector<f64, N>,
    opts: &SolverOptions,
) -> Result<OdeSolution<N>>
where
    F: FnMut(f64, &SVector<f64, N>) -> SVector<f64, N>,
{
    opts.validate()?;
    if !(t0.is_finite() && t_end.is_finite()) || t_end <= t0 {
        return Err(Error::InvalidParameter(format!(
            "time span must be increasing, got ({t0}, {t_end})"
        )));
    }
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }

    let mut times = vec![t0];
    let mut states = vec![y0];
    let mut rejected = 0usize;

    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    let mut h = initial_step(&mut f, t, &y, &k1, opts, t_end);
    let mut last_rejected = false;

    let last6 = |y: &SVector<f64, N>| {
        let mut out = [0.0; 6];
        for (i, o) in out.iter_mut().enumerate().take(N.min(6)) {
            *o = y[i];
        }
        out
    };

    for _ in 0..opts.max_steps {
        if t >= t_end {
            break;
        }
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err(Error::StepSizeUnderflow {
                t,
                h,
                last_state: last6(&y),
            });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let k2 = f(t + C2 * h, &(y + h * (A21 * k1)));
        let k3 = f(t + C3 * h, &(y + h * (A31 * k1 + A32 * k2)));
        let k4 = f(t + C4 * h, &(y + h * (A41 * k1 + A42 * k2 + A43 * k3)));
        let k5 = f(t + C5 * h, &(y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4)));
        let k6 = f(
            t + h,
            &(y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5)),
        );
        let y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(t + h, &y_new);
        let err_vec = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let err = error_norm(&err_vec, &y, &y_new, opts);

        if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
            // Retry with a smaller step before declaring blow-up.
            if h > 1e-8 * t.abs().max(1.0) {
                h *= FAC_MIN;
                rejected += 1;
                last_rejected = true;
                continue;
            }
            return Err(Error::BlowUp {
                t,
                last_state: last6(&y),
            });
        }

        if err <= 1.0 {
            t = if last { t_end } else { t + h };
            y = y_new;
            k1 = k7;
            times.push(t);
            states.push(y);
            let mut fac = if err == 0.0 {
                FAC_MAX
            } else {
                (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, FAC_MAX)
            };
            if last_rejected {
                fac = fac.min(1.0);
            }
            h = (h * fac).min(opts.max_step);
            last_rejected = false;
        } else {
            rejected += 1;
            h *= (SAFETY * err.powf(-0.2)).clamp(FAC_MIN, 1.0);
            last_rejected = true;
        }
    }

    if t < t_end {
        return Err(Error::SolverStalled {
            iterations: opts.max_steps,
            reason: format!("step budget exhausted at t = {t}"),
        });
    }

    Ok(OdeSolution {
        times,
        states,
        rejected,
    })
}
