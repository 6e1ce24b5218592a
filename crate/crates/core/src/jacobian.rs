//! Spectral moments of the input–output Jacobian `J = ∏ D(ℓ) W(ℓ)`.
//!
//! For the sparsifying activations `φ′` is an indicator of the linear segment,
//! so every Gaussian moment `μ_k = E[φ′(h)^k]` equals the linear-segment mass.

use serde::{Deserialize, Serialize};

use crate::error::{EocError, Result};
use crate::solver::EocInit;

/// First moment of the S-transform of `WWᵀ` for Gaussian weights.
pub const GAUSSIAN_S1: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JacobianMoments {
    pub mu1: f64,
    pub mu2: f64,
    pub m1: f64,
    pub m2: f64,
    pub sigma_jjt: f64,
    pub s1: f64,
    pub depth: usize,
}

/// `μ_k = E[φ′(√q* z)^k]`, identical for every `k ≥ 1`.
pub fn derivative_moment(init: &EocInit, k: u32) -> Result<f64> {
    if k == 0 {
        return Err(EocError::Config("moment order must be at least 1".into()));
    }
    Ok(init.spec.linear_mass(init.q_star))
}

/// `m₁`, `m₂` and `σ_{JJᵀ} = L (μ₂/μ₁² − 1 − s₁)` at an EoC initialization.
pub fn jacobian_moments(init: &EocInit, depth: usize) -> Result<JacobianMoments> {
    if depth == 0 {
        return Err(EocError::Config("depth must be at least 1".into()));
    }
    let mu1 = derivative_moment(init, 1)?;
    let mu2 = derivative_moment(init, 2)?;
    if !(mu1 > 0.0) {
        return Err(EocError::Degenerate(
            "activation derivative vanishes almost surely (mu1 = 0)".into(),
        ));
    }
    let chi = init.sw2 * mu1;
    if (chi - 1.0).abs() > 1e-9 {
        return Err(EocError::Precondition(format!(
            "JJ^T variance is only defined on the EoC (sigma_w^2 mu1 = {chi})"
        )));
    }
    let l = depth as f64;
    let s1 = GAUSSIAN_S1;
    let ratio = mu2 / (mu1 * mu1);
    let m1 = chi.powi(depth as i32);
    let m2 = chi.powi(2 * depth as i32) * l * (ratio + 1.0 / l - 1.0 - s1);
    Ok(JacobianMoments {
        mu1,
        mu2,
        m1,
        m2,
        sigma_jjt: l * (ratio - 1.0 - s1),
        s1,
        depth,
    })
}

/// Backward error second moments from the top layer down:
/// `ṽ(ℓ) = ṽ(ℓ+1) (N_{ℓ+1}/N_ℓ) χ₁(ℓ)`. Element `i` of the output is the
/// moment after `i` layers, starting from `v0`.
pub fn error_moment_trajectory(chi_values: &[f64], widths: &[usize], v0: f64) -> Result<Vec<f64>> {
    if widths.len() != chi_values.len() + 1 {
        return Err(EocError::Config(format!(
            "need one more width than chi values ({} vs {})",
            widths.len(),
            chi_values.len()
        )));
    }
    if widths.contains(&0) {
        return Err(EocError::Config("widths must be positive".into()));
    }
    if let Some(bad) = chi_values.iter().find(|c| !c.is_finite()) {
        return Err(EocError::domain("chi", *bad, "must be finite"));
    }
    let mut out = Vec::with_capacity(chi_values.len() + 1);
    let mut v = v0;
    out.push(v);
    for (i, chi) in chi_values.iter().enumerate() {
        v *= chi * widths[i] as f64 / widths[i + 1] as f64;
        out.push(v);
    }
    Ok(out)
}

/// [`error_moment_trajectory`] with equal widths.
pub fn error_moment_trajectory_equal(chi_values: &[f64], v0: f64) -> Vec<f64> {
    std::iter::once(v0)
        .chain(chi_values.iter().scan(v0, |v, chi| {
            *v *= chi;
            Some(*v)
        }))
        .collect()
}
