//! Open- and closed-loop trajectories and seizure-cycle statistics.

use crate::error::{Error, Result};
use crate::model::{self, EpileptorParams, FeedbackLaw, OutputMap, State, Vec6};
use crate::ode::{dopri5, SolverOptions};

/// How the input `u` is produced along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Controller {
    Constant(f64),
    /// `u = u_star - phi(y - y_star) + v` with a constant exogenous `v`.
    Feedback { law: FeedbackLaw, v: f64 },
}

impl Controller {
    pub fn feedback(law: FeedbackLaw) -> Self {
        Controller::Feedback { law, v: 0.0 }
    }

    pub fn input(&self, y: f64) -> f64 {
        match *self {
            Controller::Constant(u) => u,
            Controller::Feedback { law, v } => law.input(y, v),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec6>,
    pub inputs: Vec<f64>,
    pub outputs: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn span(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn final_state(&self) -> Option<&Vec6> {
        self.states.last()
    }

    /// The part of the trajectory at or after `t`.
    pub fn after(&self, t: f64) -> Trajectory {
        let start = self.times.partition_point(|&s| s < t);
        Trajectory {
            times: self.times[start..].to_vec(),
            states: self.states[start..].to_vec(),
            inputs: self.inputs[start..].to_vec(),
            outputs: self.outputs[start..].to_vec(),
        }
    }

    /// Checks the length, ordering and finiteness invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.states.len() != n || self.inputs.len() != n || self.outputs.len() != n {
            return Err(Error::InvalidParameter("trajectory arrays differ in length".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidParameter("trajectory times not strictly increasing".into()));
        }
        let finite = self.times.iter().all(|v| v.is_finite())
            && self.states.iter().all(|s| s.iter().all(|v| v.is_finite()))
            && self.inputs.iter().all(|v| v.is_finite())
            && self.outputs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite("trajectory"));
        }
        Ok(())
    }
}

pub fn integrate(
    x0: &State,
    t_span: (f64, f64),
    controller: &Controller,
    c: &OutputMap,
    p: &EpileptorParams,
    opts: &SolverOptions,
) -> Result<Trajectory> {
    p.validate()?;
    let rhs = |_t: f64, x: &Vec6| {
        let u = controller.input(c.eval(x));
        model::field_unchecked(x, u, p)
    };
    let sol = dopri5(rhs, t_span.0, t_span.1, *x0.vector(), opts)?;
    let outputs: Vec<f64> = sol.states.iter().map(|x| c.eval(x)).collect();
    let inputs = outputs.iter().map(|&y| controller.input(y)).collect();
    Ok(Trajectory {
        times: sol.times,
        states: sol.states,
        inputs,
        outputs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleReport {
    pub n_seizures: usize,
    /// Mean onset-to-onset interval; `None` with fewer than two episodes.
    pub mean_period: Option<f64>,
    pub ictal_fraction: f64,
}

/// Moving-window amplitude detector for ictal episodes on the output `y`.
///
/// A sample is ictal when the standard deviation of `y` over the surrounding
/// window exceeds `threshold_factor` times the baseline deviation, where the
/// baseline is the mean deviation of the quietest `baseline_quantile` of
/// window positions. `amplitude_floor` keeps flat signals from tripping the
/// detector on round-off.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleDetector {
    pub window: f64,
    pub threshold_factor: f64,
    pub baseline_quantile: f64,
    pub amplitude_floor: f64,
    /// Ictal runs separated by less than this are one episode.
    pub merge_gap: f64,
    /// Runs shorter than this are discarded.
    pub min_duration: f64,
    pub resample_dt: f64,
    pub min_span: f64,
}

impl Default for CycleDetector {
    fn default() -> Self {
        Self {
            window: 50.0,
            threshold_factor: 3.0,
            baseline_quantile: 0.1,
            amplitude_floor: 0.05,
            merge_gap: 300.0,
            min_duration: 25.0,
            resample_dt: 0.1,
            min_span: EpileptorParams::default().tau0,
        }
    }
}

/// Linear resampling of `(t, y)` onto a uniform grid.
fn resample(times: &[f64], ys: &[f64], dt: f64) -> Vec<f64> {
    let t0 = times[0];
    let n = ((times[times.len() - 1] - t0) / dt).floor() as usize + 1;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let t = t0 + i as f64 * dt;
        while j + 1 < times.len() - 1 && times[j + 1] < t {
            j += 1;
        }
        let (ta, tb) = (times[j], times[(j + 1).min(times.len() - 1)]);
        let (ya, yb) = (ys[j], ys[(j + 1).min(times.len() - 1)]);
        let w = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
        out.push(ya + w * (yb - ya));
    }
    out
}

/// Centered moving standard deviation with half-width `half` samples.
fn moving_std(y: &[f64], half: usize) -> Vec<f64> {
    let n = y.len();
    let mean = y.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &v) in y.iter().enumerate() {
        let d = v - mean;
        s1[i + 1] = s1[i] + d;
        s2[i + 1] = s2[i] + d * d;
    }
    (0..n)
        .map(|i| {
            let a = i.saturating_sub(half);
            let b = (i + half + 1).min(n);
            let m = (b - a) as f64;
            let mu = (s1[b] - s1[a]) / m;
            ((s2[b] - s2[a]) / m - mu * mu).max(0.0).sqrt()
        })
        .collect()
}

pub fn detect_cycles(traj: &Trajectory, det: &CycleDetector) -> Result<CycleReport> {
    if traj.len() < 2 || traj.span() < det.min_span {
        return Err(Error::TrajectoryTooShort {
            span: traj.span(),
            required: det.min_span,
        });
    }
    let y = resample(&traj.times, &traj.outputs, det.resample_dt);
    let half = ((det.window / det.resample_dt) / 2.0).round() as usize;
    let sd = moving_std(&y, half);

    let mut sorted = sd.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n_base = ((sorted.len() as f64 * det.baseline_quantile).ceil() as usize).max(1);
    let baseline = sorted[..n_base].iter().sum::<f64>() / n_base as f64;
    let threshold = (det.threshold_factor * baseline).max(det.amplitude_floor);

    // Runs of ictal samples as (start, end) indices, end exclusive.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut start = None;
    for (i, &s) in sd.iter().enumerate() {
        match (s > threshold, start) {
            (true, None) => start = Some(i),
            (false, Some(a)) => {
                runs.push((a, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(a) = start {
        runs.push((a, sd.len()));
    }

    let gap = (det.merge_gap / det.resample_dt).round() as usize;
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for r in runs {
        match merged.last_mut() {
            Some(last) if r.0 - last.1 < gap => last.1 = r.1,
            _ => merged.push(r),
        }
    }
    let min_len = (det.min_duration / det.resample_dt).round() as usize;
    merged.retain(|&(a, b)| b - a >= min_len);

    let ictal: usize = merged.iter().map(|&(a, b)| b - a).sum();
    let onsets: Vec<f64> = merged.iter().map(|&(a, _)| a as f64 * det.resample_dt).collect();
    let mean_period = if onsets.len() >= 2 {
        Some((onsets[onsets.len() - 1] - onsets[0]) / (onsets.len() - 1) as f64)
    } else {
        None
    };
    Ok(CycleReport {
        n_seizures: merged.len(),
        mean_period,
        ictal_fraction: ictal as f64 / sd.len() as f64,
    })
}

/// Projection of the states onto the coordinate pair `(i, j)`.
pub fn phase_plane(traj: &Trajectory, pair: (usize, usize)) -> Result<Vec<[f64; 2]>> {
    for idx in [pair.0, pair.1] {
        if idx >= 6 {
            return Err(Error::BadIndex(idx));
        }
    }
    Ok(traj.states.iter().map(|x| [x[pair.0], x[pair.1]]).collect())
}

/// Whether some point after `t_late` comes back within `tol` of a point from
/// the window `[t_early, t_late)`; a cheap closed-orbit test on a projection.
pub fn revisits(traj: &Trajectory, points: &[[f64; 2]], t_early: f64, t_late: f64, tol: f64) -> bool {
    let early: Vec<&[f64; 2]> = traj
        .times
        .iter()
        .zip(points)
        .filter(|(t, _)| **t >= t_early && **t < t_late)
        .map(|(_, p)| p)
        .collect();
    traj.times
        .iter()
        .zip(points)
        .filter(|(t, _)| **t >= t_late)
        .any(|(_, q)| early.iter().any(|p| (p[0] - q[0]).hypot(p[1] - q[1]) <= tol))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_trajectory(span: f64) -> Trajectory {
        let times: Vec<f64> = (0..=100).map(|i| i as f64 * span / 100.0).collect();
        let n = times.len();
        Trajectory {
            states: vec![Vec6::new(1.0, 2.0, 3.0, 4.0, 5.0, 6.0); n],
            inputs: vec![0.0; n],
            outputs: vec![-2.0; n],
            times,
        }
    }

    #[test]
    fn constant_has_no_seizures() {
        let r = detect_cycles(&constant_trajectory(3000.0), &CycleDetector::default()).unwrap();
        assert_eq!(r.n_seizures, 0);
        assert_eq!(r.ictal_fraction, 0.0);
        assert_eq!(r.mean_period, None);
    }

    #[test]
    fn short_trajectory_rejected() {
        let r = detect_cycles(&constant_trajectory(100.0), &CycleDetector::default());
        assert!(matches!(r, Err(Error::TrajectoryTooShort { .. })));
    }

    #[test]
    fn bursts_are_counted() {
        // Three bursts of a fast sine on a flat baseline.
        let times: Vec<f64> = (0..=60_000).map(|i| i as f64 * 0.1).collect();
        let outputs: Vec<f64> = times
            .iter()
            .map(|&t| {
                let phase = t % 2000.0;
                if phase > 500.0 && phase < 900.0 {
                    (t * 0.6).sin()
                } else {
                    0.001 * (t * 0.6).sin()
                }
            })
            .collect();
        let n = times.len();
        let traj = Trajectory {
            states: vec![Vec6::zeros(); n],
            inputs: vec![0.0; n],
            outputs,
            times,
        };
        let r = detect_cycles(&traj, &CycleDetector::default()).unwrap();
        assert_eq!(r.n_seizures, 3);
        assert!((r.mean_period.unwrap() - 2000.0).abs() < 1.0);
        assert!(r.ictal_fraction > 0.15 && r.ictal_fraction < 0.25);
    }

    #[test]
    fn phase_plane_projection() {
        let traj = constant_trajectory(10.0);
        let pts = phase_plane(&traj, (0, 1)).unwrap();
        assert!(pts.iter().all(|p| *p == [1.0, 2.0]));
        assert!(matches!(phase_plane(&traj, (0, 7)), Err(Error::BadIndex(7))));
    }

    #[test]
    fn after_slices_consistently() {
        let traj = constant_trajectory(10.0);
        let tail = traj.after(5.0);
        assert_eq!(tail.times[0], 5.0);
        assert_eq!(tail.len(), 51);
        tail.validate().unwrap();
    }
}
