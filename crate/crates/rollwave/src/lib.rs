//! Periodic roll waves of the viscous St. Venant equations in Lagrangian
//! coordinates, and their Bloch spectral stability by Hill's method and the
//! periodic Evans function.

pub mod error;
pub mod evans;
pub mod fourier;
pub mod hill;
pub mod kdv_limit;
pub mod linalg;
pub mod linearize;
pub mod model;
pub mod ode;
pub mod parallel;
pub mod profile;
pub mod sweep;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision parameter set.
pub type Params = model::PhysicalParams<f64>;
/// Single-precision parameter set.
pub type ParamsF32 = model::PhysicalParams<f32>;
/// Double-precision scaling family.
pub type Family = model::ScalingFamily<f64>;
/// Single-precision scaling family.
pub type FamilyF32 = model::ScalingFamily<f32>;
