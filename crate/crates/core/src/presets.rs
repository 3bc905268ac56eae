//! Compiled-in reference setups: operating point, output map and quadratic
//! storage for the three certificates the tools reproduce.

use crate::analysis::{self, Equilibrium};
use crate::config::{VerifyCheck, VerifyOutput};
use crate::error::{Error, Result};
use crate::model::{EpileptorParams, FeedbackLaw, Mat6, OutputMap, Vec6, X2, Y1};
use crate::passivity::{ShiftedSystem, Storage, StorageScale};

pub const PRESET_NAMES: [&str; 3] = ["thm1", "thm3", "example1"];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Preset {
    pub name: &'static str,
    pub u_star: f64,
    pub k: f64,
    pub c: OutputMap,
    pub p: Mat6,
    pub scale: StorageScale,
    /// Equilibrium as published, to two decimals; refined by Newton.
    pub x_star_approx: Vec6,
    /// Published sublevel bound, when one was given.
    pub rho: Option<f64>,
    /// Published ball radius.
    pub radius: f64,
    /// What the certificate is meant to establish.
    pub verify_check: VerifyCheck,
    pub verify_output: VerifyOutput,
}

fn diag(d: [f64; 6]) -> Mat6 {
    Mat6::from_diagonal(&Vec6::from(d))
}

/// Shunting feedback `u = -0.8 - (y - y_star)` on `y = x1 - x2` with the
/// sparse Lyapunov function `1.1 x1^2 + 0.12 y1^2 + 0.05 x2^2 + 59.3 y2^2
/// + 364 zeta^2 + 848 z^2 + 0.14 y1 x2` (no 1/2 factor).
pub fn thm1() -> Preset {
    let mut p = diag([1.1, 0.12, 0.05, 59.3, 364.0, 848.0]);
    p[(Y1, X2)] = 0.07;
    p[(X2, Y1)] = 0.07;
    Preset {
        name: "thm1",
        u_star: -0.8,
        k: 1.0,
        c: OutputMap::standard(),
        p,
        scale: StorageScale::Full,
        x_star_approx: Vec6::new(-1.03, -4.33, -1.08, 0.0, -0.10, 2.27),
        rho: Some(1.66561e-3),
        radius: 0.56,
        verify_check: VerifyCheck::Lyapunov,
        verify_output: VerifyOutput::Configured,
    }
}

/// Open loop at `u_star = -2` with the summed output `y = x1 + x2` and
/// diagonal storage `x^T P x / 2`.
pub fn thm3() -> Preset {
    Preset {
        name: "thm3",
        u_star: -2.0,
        k: 0.0,
        c: OutputMap::summed(),
        p: diag([1.0, 0.074, 1.0, 125.0, 143.0, 600.0]),
        scale: StorageScale::Half,
        x_star_approx: Vec6::new(-1.37, -8.39, -1.34, 0.0, -0.14, 0.92),
        rho: None,
        radius: 1.008,
        verify_check: VerifyCheck::Passivity,
        verify_output: VerifyOutput::Configured,
    }
}

/// Open loop at `u_star = -2` with the redesigned output `y = x1 - 0.29 x2`
/// and its published diagonal storage `x^T P x / 2`. That storage matches
/// `Pg = [0.97, 0, 0.48, 0, 0, 0]` rather than the output itself, so it is
/// checked against the implied output.
pub fn example1() -> Preset {
    Preset {
        name: "example1",
        u_star: -2.0,
        k: 0.0,
        c: OutputMap::new([1.0, 0.0, -0.29, 0.0, 0.0, 0.0]),
        p: diag([0.97, 0.08, 0.48, 2.26, 14.45, 458.0]),
        scale: StorageScale::Half,
        x_star_approx: Vec6::new(-1.37, -8.39, -1.34, 0.0, -0.14, 0.92),
        rho: None,
        radius: 1.08,
        verify_check: VerifyCheck::Passivity,
        verify_output: VerifyOutput::Implied,
    }
}

pub fn preset(name: &str) -> Result<Preset> {
    match name {
        "thm1" => Ok(thm1()),
        "thm3" => Ok(thm3()),
        "example1" => Ok(example1()),
        other => Err(Error::Config(format!(
            "unknown preset '{other}' (expected one of {})",
            PRESET_NAMES.join(", ")
        ))),
    }
}

impl Preset {
    pub fn storage(&self) -> Result<Storage> {
        Storage::new(self.p, self.scale)
    }

    /// Polished equilibrium near the published one.
    pub fn equilibrium(&self, params: &EpileptorParams) -> Result<Equilibrium> {
        let eq = analysis::refine_equilibrium(&self.x_star_approx, self.u_star, params).ok_or_else(|| {
            Error::SolverStalled {
                iterations: 0,
                reason: format!("no equilibrium near the {} operating point", self.name),
            }
        })?;
        Ok(eq)
    }

    /// The feedback law with `y_star = c^T x_star`.
    pub fn law(&self, eq: &Equilibrium) -> Result<FeedbackLaw> {
        FeedbackLaw::linear(self.u_star, self.k, self.c.eval(eq.x_star.vector()))
    }

    pub fn system(&self, params: &EpileptorParams) -> Result<ShiftedSystem> {
        let eq = self.equilibrium(params)?;
        ShiftedSystem::new(*eq.x_star.vector(), self.law(&eq)?, self.c, *params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_resolve() {
        for n in PRESET_NAMES {
            let p = preset(n).unwrap();
            assert_eq!(p.name, n);
            assert_eq!(p.p, p.p.transpose());
            let sys = p.system(&EpileptorParams::default()).unwrap();
            assert!(sys.equilibrium_residual() < 1e-9);
            assert!((sys.x_star - p.x_star_approx).amax() < 0.05);
        }
        assert!(matches!(preset("thm2"), Err(Error::Config(_))));
    }
}
