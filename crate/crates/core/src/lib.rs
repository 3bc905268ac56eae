//! Numerical analysis of the Epileptor seizure model under passive feedback:
//! equilibria and stability sweeps, trajectory simulation, linear passivity
//! certificates, region-of-attraction estimation and small LMI design
//! kernels for output (sensor) redesign.

pub mod analysis;
pub mod config;
pub mod design;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod passivity;
pub mod presets;
pub mod sdp;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
