//! The six-state Epileptor vector field, its output map and analytic Jacobian.
//!
//! State ordering is `[x1, y1, x2, y2, zeta, z]`. The input `u` enters the
//! `x1` and `x2` equations only, so the field is input-affine,
//! `dx/dt = f(x) + g u` with `g = [1, 0, 1, 0, 0, 0]`.

use nalgebra::{Matrix6, Vector6};

use crate::error::{Error, Result};

pub type Vec6 = Vector6<f64>;
pub type Mat6 = Matrix6<f64>;

pub const X1: usize = 0;
pub const Y1: usize = 1;
pub const X2: usize = 2;
pub const Y2: usize = 3;
pub const ZETA: usize = 4;
pub const Z: usize = 5;

pub const STATE_NAMES: [&str; 6] = ["x1", "y1", "x2", "y2", "zeta", "z"];

/// Switching point of the slow-subsystem nonlinearity `f2`.
pub const F2_KNEE: f64 = -0.25;

/// Model constants. `Default` gives the standard Epileptor values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpileptorParams {
    pub x0: f64,
    pub y0: f64,
    pub tau1: f64,
    pub tau0: f64,
    pub tau2: f64,
    pub i_rest1: f64,
    pub i_rest2: f64,
    pub gamma: f64,
}

impl Default for EpileptorParams {
    fn default() -> Self {
        Self {
            x0: -1.6,
            y0: 1.0,
            tau1: 1.0,
            tau0: 2857.0,
            tau2: 10.0,
            i_rest1: 3.1,
            i_rest2: 0.45,
            gamma: 0.01,
        }
    }
}

impl EpileptorParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.x0,
            self.y0,
            self.tau1,
            self.tau0,
            self.tau2,
            self.i_rest1,
            self.i_rest2,
            self.gamma,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        for (name, v) in [
            ("tau0", self.tau0),
            ("tau1", self.tau1),
            ("tau2", self.tau2),
            ("gamma", self.gamma),
        ] {
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// A point in the six-dimensional state space. Always finite.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct State(Vec6);

impl State {
    pub fn new(x: [f64; 6]) -> Result<Self> {
        Self::from_vector(Vec6::from(x))
    }

    pub fn from_vector(v: Vec6) -> Result<Self> {
        if v.iter().all(|c| c.is_finite()) {
            Ok(Self(v))
        } else {
            Err(Error::NonFinite("state"))
        }
    }

    pub fn origin() -> Self {
        Self(Vec6::zeros())
    }

    pub fn vector(&self) -> &Vec6 {
        &self.0
    }

    pub fn into_vector(self) -> Vec6 {
        self.0
    }

    pub fn to_array(&self) -> [f64; 6] {
        self.0.into()
    }

    pub fn x1(&self) -> f64 {
        self.0[X1]
    }
    pub fn y1(&self) -> f64 {
        self.0[Y1]
    }
    pub fn x2(&self) -> f64 {
        self.0[X2]
    }
    pub fn y2(&self) -> f64 {
        self.0[Y2]
    }
    pub fn zeta(&self) -> f64 {
        self.0[ZETA]
    }
    pub fn z(&self) -> f64 {
        self.0[Z]
    }
}

impl std::ops::Index<usize> for State {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Linear output `y = c^T x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OutputMap {
    pub c: Vec6,
}

impl OutputMap {
    pub fn new(c: [f64; 6]) -> Self {
        Self { c: Vec6::from(c) }
    }

    /// `y = x1 - x2`, the usual LFP-like readout.
    pub fn standard() -> Self {
        Self::new([1.0, 0.0, -1.0, 0.0, 0.0, 0.0])
    }

    /// `y = x1 + x2`.
    pub fn summed() -> Self {
        Self::new([1.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    }

    pub fn eval(&self, x: &Vec6) -> f64 {
        self.c.dot(x)
    }
}

/// The constant input direction `g`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputVector;

impl InputVector {
    pub fn g() -> Vec6 {
        Vec6::new(1.0, 0.0, 1.0, 0.0, 0.0, 0.0)
    }
}

/// Static output nonlinearity used by the passive feedback law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phi {
    /// `phi(y) = k y`.
    Linear { k: f64 },
    /// `phi(y) = clamp(k y, -limit, limit)`.
    Saturated { k: f64, limit: f64 },
}

impl Phi {
    pub fn eval(&self, y: f64) -> f64 {
        match *self {
            Phi::Linear { k } => k * y,
            Phi::Saturated { k, limit } => (k * y).clamp(-limit, limit),
        }
    }

    pub fn gain(&self) -> f64 {
        match *self {
            Phi::Linear { k } | Phi::Saturated { k, .. } => k,
        }
    }

    /// Slope at `y`, used for linearization.
    pub fn slope(&self, y: f64) -> f64 {
        match *self {
            Phi::Linear { k } => k,
            Phi::Saturated { k, limit } => {
                if (k * y).abs() < limit {
                    k
                } else {
                    0.0
                }
            }
        }
    }
}

/// `u = u_star - phi(y - y_star) + v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeedbackLaw {
    pub u_star: f64,
    pub y_star: f64,
    pub phi: Phi,
}

impl FeedbackLaw {
    pub fn linear(u_star: f64, k: f64, y_star: f64) -> Result<Self> {
        Self::with_phi(u_star, Phi::Linear { k }, y_star)
    }

    pub fn with_phi(u_star: f64, phi: Phi, y_star: f64) -> Result<Self> {
        let law = Self { u_star, y_star, phi };
        law.validate()?;
        Ok(law)
    }

    /// Constant input `u_star`, no feedback.
    pub fn open_loop(u_star: f64) -> Self {
        Self {
            u_star,
            y_star: 0.0,
            phi: Phi::Linear { k: 0.0 },
        }
    }

    pub fn k(&self) -> f64 {
        self.phi.gain()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.u_star.is_finite() && self.y_star.is_finite()) {
            return Err(Error::NonFinite("feedback law"));
        }
        let k = self.phi.gain();
        if !k.is_finite() || k < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "feedback gain must be >= 0, got {k}"
            )));
        }
        if let Phi::Saturated { limit, .. } = self.phi {
            if !(limit > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "saturation limit must be > 0, got {limit}"
                )));
            }
        }
        if k > 0.0 && !self.sector_ok() {
            return Err(Error::InvalidParameter(
                "phi violates y*phi(y) > 0".to_string(),
            ));
        }
        Ok(())
    }

    /// Sampled check of `y * phi(y) > 0` for `y != 0`.
    pub fn sector_ok(&self) -> bool {
        (1..=200)
            .map(|i| 10f64.powf(-6.0 + 9.0 * i as f64 / 200.0))
            .flat_map(|m| [m, -m])
            .all(|y| y * self.phi.eval(y) > 0.0)
    }

    pub fn input(&self, y: f64, v: f64) -> f64 {
        self.u_star - self.phi.eval(y - self.y_star) + v
    }
}

/// Fast-subsystem nonlinearity.
pub fn f1(x1: f64, x2: f64, z: f64) -> f64 {
    if x1 < 0.0 {
        x1 * x1 * x1 - 3.0 * x1 * x1
    } else {
        (x2 - 0.6 * (z - 4.0) * (z - 4.0)) * x1
    }
}

/// Slow-subsystem nonlinearity.
pub fn f2(x2: f64) -> f64 {
    if x2 >= F2_KNEE {
        6.0 * (x2 - F2_KNEE)
    } else {
        0.0
    }
}

/// Which side of each switching surface a formula is taken from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Branch {
    /// `x1 < 0`: the cubic branch of `f1`.
    pub x1_negative: bool,
    /// `x2 >= -0.25`: the linear branch of `f2`.
    pub x2_upper: bool,
}

impl Branch {
    pub const ALL: [Branch; 4] = [
        Branch { x1_negative: true, x2_upper: false },
        Branch { x1_negative: true, x2_upper: true },
        Branch { x1_negative: false, x2_upper: false },
        Branch { x1_negative: false, x2_upper: true },
    ];

    pub fn of(x: &Vec6) -> Self {
        Self {
            x1_negative: x[X1] < 0.0,
            x2_upper: x[X2] >= F2_KNEE,
        }
    }

    pub fn contains(&self, x: &Vec6) -> bool {
        Self::of(x) == *self
    }
}

/// The field with both nonlinearities evaluated on a fixed branch.
pub fn field_on_branch(x: &Vec6, u: f64, p: &EpileptorParams, b: Branch) -> Vec6 {
    let (x1, y1, x2, y2, zeta, z) = (x[X1], x[Y1], x[X2], x[Y2], x[ZETA], x[Z]);
    let f1v = if b.x1_negative {
        x1 * x1 * x1 - 3.0 * x1 * x1
    } else {
        (x2 - 0.6 * (z - 4.0) * (z - 4.0)) * x1
    };
    let f2v = if b.x2_upper { 6.0 * (x2 - F2_KNEE) } else { 0.0 };
    Vec6::new(
        y1 - f1v - z + p.i_rest1 + u,
        (p.y0 - 5.0 * x1 * x1 - y1) / p.tau1,
        -y2 + x2 - x2 * x2 * x2 + 2.0 * zeta - 0.3 * (z - 3.5) + p.i_rest2 + u,
        (-y2 + f2v) / p.tau2,
        -p.gamma * (zeta - 0.1 * x1),
        (4.0 * (x1 - p.x0) - z) / p.tau0,
    )
}

/// The field without the finiteness check; used on hot integration paths.
pub(crate) fn field_unchecked(x: &Vec6, u: f64, p: &EpileptorParams) -> Vec6 {
    field_on_branch(x, u, p, Branch::of(x))
}

/// `f(x) + g u`.
pub fn vector_field(x: &Vec6, u: f64, p: &EpileptorParams) -> Result<Vec6> {
    if !u.is_finite() || x.iter().any(|c| !c.is_finite()) {
        return Err(Error::NonFinite("vector field input"));
    }
    Ok(field_unchecked(x, u, p))
}

pub fn output(x: &Vec6, c: &OutputMap) -> f64 {
    c.eval(x)
}

/// Analytic Jacobian of the autonomous field `f`. Branches are selected with
/// the same predicates as [`f1`] and [`f2`].
pub fn jacobian(x: &Vec6, p: &EpileptorParams) -> Mat6 {
    jacobian_on_branch(x, p, Branch::of(x))
}

pub fn jacobian_on_branch(x: &Vec6, p: &EpileptorParams, b: Branch) -> Mat6 {
    let (x1, x2, z) = (x[X1], x[X2], x[Z]);
    let (df1_dx1, df1_dx2, df1_dz) = if b.x1_negative {
        (3.0 * x1 * x1 - 6.0 * x1, 0.0, 0.0)
    } else {
        let w = z - 4.0;
        (x2 - 0.6 * w * w, x1, -1.2 * w * x1)
    };
    let df2 = if b.x2_upper { 6.0 } else { 0.0 };

    let mut a = Mat6::zeros();
    a[(X1, X1)] = -df1_dx1;
    a[(X1, Y1)] = 1.0;
    a[(X1, X2)] = -df1_dx2;
    a[(X1, Z)] = -df1_dz - 1.0;

    a[(Y1, X1)] = -10.0 * x1 / p.tau1;
    a[(Y1, Y1)] = -1.0 / p.tau1;

    a[(X2, X2)] = 1.0 - 3.0 * x2 * x2;
    a[(X2, Y2)] = -1.0;
    a[(X2, ZETA)] = 2.0;
    a[(X2, Z)] = -0.3;

    a[(Y2, X2)] = df2 / p.tau2;
    a[(Y2, Y2)] = -1.0 / p.tau2;

    a[(ZETA, X1)] = 0.1 * p.gamma;
    a[(ZETA, ZETA)] = -p.gamma;

    a[(Z, X1)] = 4.0 / p.tau0;
    a[(Z, Z)] = -1.0 / p.tau0;
    a
}

/// Field under `u = u_star - phi(c^T x - y_star) + v`.
pub fn closed_loop_field(
    x: &Vec6,
    law: &FeedbackLaw,
    c: &OutputMap,
    v: f64,
    p: &EpileptorParams,
) -> Result<Vec6> {
    let u = law.input(c.eval(x), v);
    vector_field(x, u, p)
}

/// Jacobian of the closed-loop field (linear phi gives `A - k g c^T`).
pub fn closed_loop_jacobian_at(
    x: &Vec6,
    law: &FeedbackLaw,
    c: &OutputMap,
    p: &EpileptorParams,
) -> Mat6 {
    let slope = law.phi.slope(c.eval(x) - law.y_star);
    jacobian(x, p) - slope * InputVector::g() * c.c.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference_x1_star() -> Vec6 {
        Vec6::new(-0.75, -1.82, -0.74, 0.0, -0.075, 3.39)
    }

    #[test]
    fn f1_examples() {
        assert_eq!(f1(0.0, 5.0, 4.0), 0.0);
        assert_eq!(f1(-1.0, 123.0, -7.0), -4.0);
        assert_eq!(f1(1.0, 2.0, 4.0), 2.0);
    }

    #[test]
    fn f2_examples() {
        assert_eq!(f2(-0.25), 0.0);
        assert_eq!(f2(0.0), 1.5);
        assert_eq!(f2(-1.0), 0.0);
    }

    #[test]
    fn branches_are_continuous() {
        for &(x2, z) in &[(0.3, 4.0), (-1.2, 2.0), (2.0, 7.5)] {
            let left = f1(-f64::MIN_POSITIVE, x2, z);
            assert!((left - f1(0.0, x2, z)).abs() < 1e-300);
        }
        assert!((f2(F2_KNEE - 1e-16) - f2(F2_KNEE)).abs() < 1e-14);
    }

    #[test]
    fn printed_equilibrium_has_small_residual() {
        let r = vector_field(&reference_x1_star(), 0.0, &EpileptorParams::default()).unwrap();
        assert!(r.norm() <= 0.05, "residual {}", r.norm());
    }

    #[test]
    fn rejects_non_finite() {
        let mut x = reference_x1_star();
        x[3] = f64::NAN;
        assert!(vector_field(&x, 0.0, &EpileptorParams::default()).is_err());
        assert!(vector_field(&reference_x1_star(), f64::INFINITY, &EpileptorParams::default()).is_err());
        assert!(State::new([0.0, 0.0, 0.0, 0.0, 0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn output_examples() {
        let x = Vec6::new(1.0, 0.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(output(&x, &OutputMap::standard()), 0.0);
        assert_eq!(output(&x, &OutputMap::summed()), 2.0);
        let xs = Vec6::new(-1.37, -8.39, -1.34, 0.0, -0.14, 0.92);
        let y = output(&xs, &OutputMap::new([1.0, 0.0, -0.29, 0.0, 0.0, 0.0]));
        assert!((y - (-1.37 + 0.29 * 1.34)).abs() < 1e-12);
        assert!((y + 0.98).abs() < 0.005);
    }

    #[test]
    fn jacobian_constant_entries() {
        let p = EpileptorParams::default();
        for x in [reference_x1_star(), Vec6::new(0.4, 0.1, 0.3, 1.0, 0.0, 8.0)] {
            let a = jacobian(&x, &p);
            assert_eq!(a[(X1, Y1)], 1.0);
            assert_eq!(a[(Z, X1)], 4.0 / 2857.0);
        }
    }

    #[test]
    fn open_loop_law_matches_constant_input() {
        let p = EpileptorParams::default();
        let x = reference_x1_star();
        let law = FeedbackLaw::linear(-0.8, 0.0, 3.0).unwrap();
        let a = closed_loop_field(&x, &law, &OutputMap::standard(), 0.0, &p).unwrap();
        let b = vector_field(&x, -0.8, &p).unwrap();
        assert_eq!(a, b);

        let shifted = closed_loop_field(&x, &law, &OutputMap::standard(), 0.1, &p).unwrap();
        // Exact up to the rounding of the two sums.
        let d = shifted - a - 0.1 * InputVector::g();
        assert!(d.amax() <= 4.0 * f64::EPSILON * a.amax().max(1.0));
    }

    #[test]
    fn feedback_law_validation() {
        assert!(FeedbackLaw::linear(0.0, -1.0, 0.0).is_err());
        assert!(FeedbackLaw::linear(0.0, 2.0, 0.0).unwrap().sector_ok());
        assert!(FeedbackLaw::with_phi(0.0, Phi::Saturated { k: 1.0, limit: 0.5 }, 0.0).is_ok());
        assert!(FeedbackLaw::with_phi(0.0, Phi::Saturated { k: 1.0, limit: 0.0 }, 0.0).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(EpileptorParams::default().validate().is_ok());
        let bad = EpileptorParams {
            tau0: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
