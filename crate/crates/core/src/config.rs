//! Run configuration: flat `key = value` text with dotted sections.
//!
//! ```text
//! # comments run to end of line
//! feedback.u_star = -0.8
//! output.c = 1, 0, -1, 0, 0, 0
//! ```
//!
//! Unknown and repeated keys are errors. Every key is optional.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::analysis;
use crate::error::{Error, Result};
use crate::model::{EpileptorParams, Mat6, OutputMap, Vec6};
use crate::ode::SolverOptions;
use crate::passivity::{RoaOptions, StorageScale};
use crate::presets;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DesignMode {
    /// Output redesign through `c = Pg`.
    Output,
    /// Sparse Lyapunov certificate for the closed loop.
    Sparse,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LossKind {
    L1,
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyCheck {
    /// Lyapunov decrease of the closed-loop linearization.
    Lyapunov,
    /// Positive-real conditions for the output `c`.
    Passivity,
    Both,
}

/// Which output the passivity check is run against.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyOutput {
    /// `output.c` as configured.
    Configured,
    /// The output implied by the storage, `c = Pg`.
    Implied,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub preset: Option<String>,
    pub params: EpileptorParams,
    pub c: OutputMap,
    pub feedback_enabled: bool,
    pub u_star: f64,
    pub k: f64,
    pub saturation: Option<f64>,
    pub solver: SolverOptions,
    pub t_end: f64,
    pub x0: Vec6,
    pub u_axis: (f64, f64, f64),
    pub k_axis: (f64, f64, f64),
    pub roa: RoaOptions,
    /// Check this single level instead of searching.
    pub roa_rho: Option<f64>,
    pub storage_p: Option<Mat6>,
    pub storage_scale: StorageScale,
    pub design_mode: DesignMode,
    pub loss: LossKind,
    pub target: OutputMap,
    pub delta: f64,
    pub eps: f64,
    /// `None` defers to the preset, then to [`VerifyCheck::Both`].
    pub verify_check: Option<VerifyCheck>,
    pub verify_output: Option<VerifyOutput>,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = EpileptorParams::default();
        Self {
            preset: None,
            params: p,
            c: OutputMap::standard(),
            feedback_enabled: false,
            u_star: -0.8,
            k: 1.0,
            saturation: None,
            solver: SolverOptions::default(),
            t_end: 4.0 * p.tau0,
            x0: Vec6::new(0.0, -5.0, -5.0, 0.0, 0.0, 3.0),
            u_axis: (-3.0, 0.5, 0.05),
            k_axis: (0.0, 4.0, 0.05),
            roa: RoaOptions::default(),
            roa_rho: None,
            storage_p: None,
            storage_scale: StorageScale::Half,
            design_mode: DesignMode::Output,
            loss: LossKind::L1,
            target: OutputMap::standard(),
            delta: 1e-6,
            eps: 1e-4,
            verify_check: None,
            verify_output: None,
            seed: 0,
            threads: None,
            out: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "preset",
    "model.x0",
    "model.y0",
    "model.tau1",
    "model.tau0",
    "model.tau2",
    "model.i_rest1",
    "model.i_rest2",
    "model.gamma",
    "output.c",
    "feedback.enabled",
    "feedback.u_star",
    "feedback.k",
    "feedback.saturation",
    "solver.rel_tol",
    "solver.abs_tol",
    "solver.max_step",
    "simulate.t_end",
    "simulate.x0",
    "sweep.u_start",
    "sweep.u_stop",
    "sweep.u_step",
    "sweep.k_start",
    "sweep.k_stop",
    "sweep.k_step",
    "roa.n_samples",
    "roa.n_ascent",
    "roa.ascent_steps",
    "roa.rel_precision",
    "roa.rho",
    "roa.rho_init",
    "storage.p",
    "storage.scale",
    "design.mode",
    "design.loss",
    "design.target",
    "design.delta",
    "design.eps",
    "verify.check",
    "verify.output",
    "seed",
    "threads",
    "out",
];

fn bad(line: usize, key: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("line {line}: {key}: {msg}"))
}

fn parse_f64(line: usize, key: &str, v: &str) -> Result<f64> {
    let x: f64 = v.parse().map_err(|_| bad(line, key, format!("'{v}' is not a number")))?;
    if !x.is_finite() {
        return Err(bad(line, key, "value must be finite"));
    }
    Ok(x)
}

fn parse_list(line: usize, key: &str, v: &str, n: usize) -> Result<Vec<f64>> {
    let items: Vec<&str> = v.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.len() != n {
        return Err(bad(line, key, format!("expected {n} numbers, found {}", items.len())));
    }
    items.iter().map(|s| parse_f64(line, key, s)).collect()
}

fn parse_vec6(line: usize, key: &str, v: &str) -> Result<Vec6> {
    Ok(Vec6::from_vec(parse_list(line, key, v, 6)?))
}

fn parse_bool(line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(bad(line, key, format!("'{v}' is not a boolean"))),
    }
}

fn parse_usize(line: usize, key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| bad(line, key, format!("'{v}' is not a nonnegative integer")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {line}: expected 'key = value'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.contains(&key) {
                return Err(Error::Config(format!("line {line}: unknown key '{key}'")));
            }
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {line}: duplicate key '{key}'")));
            }
            cfg.set(line, key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, line: usize, key: &str, v: &str) -> Result<()> {
        let f = |v: &str| parse_f64(line, key, v);
        match key {
            "preset" => {
                presets::preset(v).map_err(|e| bad(line, key, e))?;
                self.preset = Some(v.to_string());
            }
            "model.x0" => self.params.x0 = f(v)?,
            "model.y0" => self.params.y0 = f(v)?,
            "model.tau1" => self.params.tau1 = f(v)?,
            "model.tau0" => self.params.tau0 = f(v)?,
            "model.tau2" => self.params.tau2 = f(v)?,
            "model.i_rest1" => self.params.i_rest1 = f(v)?,
            "model.i_rest2" => self.params.i_rest2 = f(v)?,
            "model.gamma" => self.params.gamma = f(v)?,
            "output.c" => self.c = OutputMap { c: parse_vec6(line, key, v)? },
            "feedback.enabled" => self.feedback_enabled = parse_bool(line, key, v)?,
            "feedback.u_star" => self.u_star = f(v)?,
            "feedback.k" => self.k = f(v)?,
            "feedback.saturation" => self.saturation = Some(f(v)?),
            "solver.rel_tol" => self.solver.rel_tol = f(v)?,
            "solver.abs_tol" => self.solver.abs_tol = f(v)?,
            "solver.max_step" => self.solver.max_step = f(v)?,
            "simulate.t_end" => self.t_end = f(v)?,
            "simulate.x0" => self.x0 = parse_vec6(line, key, v)?,
            "sweep.u_start" => self.u_axis.0 = f(v)?,
            "sweep.u_stop" => self.u_axis.1 = f(v)?,
            "sweep.u_step" => self.u_axis.2 = f(v)?,
            "sweep.k_start" => self.k_axis.0 = f(v)?,
            "sweep.k_stop" => self.k_axis.1 = f(v)?,
            "sweep.k_step" => self.k_axis.2 = f(v)?,
            "roa.n_samples" => self.roa.n_samples = parse_usize(line, key, v)?,
            "roa.n_ascent" => self.roa.n_ascent = parse_usize(line, key, v)?,
            "roa.ascent_steps" => self.roa.ascent_steps = parse_usize(line, key, v)?,
            "roa.rel_precision" => self.roa.rel_precision = f(v)?,
            "roa.rho" => self.roa_rho = Some(f(v)?),
            "roa.rho_init" => self.roa.rho_init = Some(f(v)?),
            "storage.p" => {
                let vals = parse_list(line, key, v, 36)?;
                self.storage_p = Some(Mat6::from_row_slice(&vals));
            }
            "storage.scale" => {
                self.storage_scale = match v {
                    "full" => StorageScale::Full,
                    "half" => StorageScale::Half,
                    _ => return Err(bad(line, key, "expected 'full' or 'half'")),
                }
            }
            "design.mode" => {
                self.design_mode = match v {
                    "output" => DesignMode::Output,
                    "sparse" => DesignMode::Sparse,
                    _ => return Err(bad(line, key, "expected 'output' or 'sparse'")),
                }
            }
            "design.loss" => {
                self.loss = match v {
                    "l1" => LossKind::L1,
                    "zero" => LossKind::Zero,
                    _ => return Err(bad(line, key, "expected 'l1' or 'zero'")),
                }
            }
            "design.target" => self.target = OutputMap { c: parse_vec6(line, key, v)? },
            "design.delta" => self.delta = f(v)?,
            "design.eps" => self.eps = f(v)?,
            "verify.check" => {
                self.verify_check = Some(match v {
                    "lyapunov" => VerifyCheck::Lyapunov,
                    "passivity" => VerifyCheck::Passivity,
                    "both" => VerifyCheck::Both,
                    _ => return Err(bad(line, key, "expected 'lyapunov', 'passivity' or 'both'")),
                })
            }
            "verify.output" => {
                self.verify_output = Some(match v {
                    "configured" => VerifyOutput::Configured,
                    "implied" => VerifyOutput::Implied,
                    _ => return Err(bad(line, key, "expected 'configured' or 'implied'")),
                })
            }
            "seed" => {
                self.seed = v.parse().map_err(|_| bad(line, key, format!("'{v}' is not a u64")))?;
                self.roa.seed = self.seed;
            }
            "threads" => {
                let n = parse_usize(line, key, v)?;
                if n == 0 {
                    return Err(bad(line, key, "must be >= 1"));
                }
                self.threads = Some(n);
            }
            "out" => self.out = Some(PathBuf::from(v)),
            _ => unreachable!("key list and setter disagree on '{key}'"),
        }
        Ok(())
    }

    /// Loads the operating point, output and storage of the named preset
    /// over the current values. Model parameters and solver settings are
    /// kept.
    pub fn apply_preset(&mut self, name: &str) -> Result<presets::Preset> {
        let p = presets::preset(name)?;
        self.preset = Some(name.to_string());
        self.u_star = p.u_star;
        self.k = p.k;
        self.c = p.c;
        self.feedback_enabled = p.k > 0.0;
        self.storage_p = Some(p.p);
        self.storage_scale = p.scale;
        if self.verify_check.is_none() {
            self.verify_check = Some(p.verify_check);
        }
        if self.verify_output.is_none() {
            self.verify_output = Some(p.verify_output);
        }
        Ok(p)
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.roa.seed = seed;
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.params.validate().map_err(wrap)?;
        self.solver.validate().map_err(wrap)?;
        self.roa.validate().map_err(wrap)?;
        if self.k < 0.0 {
            return Err(Error::Config(format!("feedback.k must be >= 0, got {}", self.k)));
        }
        if let Some(l) = self.saturation {
            if l <= 0.0 {
                return Err(Error::Config(format!("feedback.saturation must be > 0, got {l}")));
            }
        }
        if self.t_end <= 0.0 {
            return Err(Error::Config(format!("simulate.t_end must be > 0, got {}", self.t_end)));
        }
        if !(self.delta > 0.0 && self.eps > 0.0) {
            return Err(Error::Config("design.delta and design.eps must be > 0".into()));
        }
        if let Some(p) = &self.storage_p {
            if (p - p.transpose()).amax() > 1e-12 {
                return Err(Error::Config("storage.p must be symmetric".into()));
            }
        }
        if let Some(r) = self.roa_rho {
            if r <= 0.0 {
                return Err(Error::Config(format!("roa.rho must be > 0, got {r}")));
            }
        }
        analysis::axis(self.u_axis.0, self.u_axis.1, self.u_axis.2).map_err(wrap)?;
        analysis::axis(self.k_axis.0, self.k_axis.1, self.k_axis.2).map_err(wrap)?;
        Ok(())
    }

    /// Canonical `key=value` lines of every field that affects results.
    /// Output path and thread count are excluded.
    pub fn canonical(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let list = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "preset={}", self.preset.as_deref().unwrap_or(""));
        for (k, v) in [
            ("model.x0", p.x0),
            ("model.y0", p.y0),
            ("model.tau1", p.tau1),
            ("model.tau0", p.tau0),
            ("model.tau2", p.tau2),
            ("model.i_rest1", p.i_rest1),
            ("model.i_rest2", p.i_rest2),
            ("model.gamma", p.gamma),
        ] {
            let _ = writeln!(s, "{k}={v:?}");
        }
        let _ = writeln!(s, "output.c={}", list(self.c.c.as_slice()));
        let _ = writeln!(s, "feedback.enabled={}", self.feedback_enabled);
        let _ = writeln!(s, "feedback.u_star={:?}", self.u_star);
        let _ = writeln!(s, "feedback.k={:?}", self.k);
        let _ = writeln!(s, "feedback.saturation={:?}", self.saturation);
        let _ = writeln!(
            s,
            "solver={:?},{:?},{:?},{}",
            self.solver.rel_tol, self.solver.abs_tol, self.solver.max_step, self.solver.max_steps
        );
        let _ = writeln!(s, "simulate.t_end={:?}", self.t_end);
        let _ = writeln!(s, "simulate.x0={}", list(self.x0.as_slice()));
        let _ = writeln!(s, "sweep.u={:?}", self.u_axis);
        let _ = writeln!(s, "sweep.k={:?}", self.k_axis);
        let r = &self.roa;
        let _ = writeln!(
            s,
            "roa={},{},{},{:?},{:?},{:?}",
            r.n_samples, r.n_ascent, r.ascent_steps, r.rel_precision, r.rho_init, self.roa_rho
        );
        let storage = self
            .storage_p
            .map(|m| list(m.transpose().as_slice()))
            .unwrap_or_default();
        let _ = writeln!(s, "storage.p={storage}");
        let _ = writeln!(s, "storage.scale={}", self.storage_scale.name());
        let _ = writeln!(s, "design={:?},{:?}", self.design_mode, self.loss);
        let _ = writeln!(s, "design.target={}", list(self.target.c.as_slice()));
        let _ = writeln!(s, "design.delta={:?}", self.delta);
        let _ = writeln!(s, "design.eps={:?}", self.eps);
        let _ = writeln!(s, "verify={:?},{:?}", self.verify_check, self.verify_output);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    /// SHA-256 of [`canonical`](Self::canonical), hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
