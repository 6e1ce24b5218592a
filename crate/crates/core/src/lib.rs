//! Edge-of-chaos initialization for sparsifying activations.
//!
//! The crate is organised bottom-up:
//!
//! * [`gaussian`]: Gaussian expectations, quadrature and normal/erf utilities.
//! * [`activations`]: `CReLU_{τ,m}`, `CST_{τ,m}`, ReLU and their Gaussian moments.
//! * [`maps`]: the variance map `V`, its derivatives, the slope `χ₁` and the
//!   correlation map `R_φ`.
//! * [`solver`]: solving `(τ, m, σ_w², σ_b²)` from a target sparsity, fixed-point
//!   variance `q*` and slope, and locating all fixed points of `V`.
//! * [`finite_width`]: next-leading-order (1/n) recursions and their bound.
//! * [`jacobian`]: input–output Jacobian spectral moments and error growth.
//! * [`simulator`]: finite-width Monte Carlo networks checking the predictions.
//! * [`trainer`]: a small MLP trained with plain SGD from an EoC initialization.

pub mod activations;
pub mod error;
pub mod finite_width;
pub mod gaussian;
pub mod jacobian;
pub mod maps;
pub mod roots;
pub mod simulator;
pub mod solver;
pub mod tolerances;
pub mod trainer;

pub use activations::{ActivationKind, ActivationSpec};
pub use error::{EocError, Result};
pub use finite_width::NloState;
pub use maps::MapDiagnostics;
pub use solver::{EocInit, FixedPointReport};
pub use tolerances::Tolerances;
