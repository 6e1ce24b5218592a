//! Infinite-width maps: the variance map `V(q) = σ_w² E[φ(√q z)²] + σ_b²`, its first
//! two derivatives, the slope `χ₁(q) = σ_w² E[φ′(√q z)²]` and its derivative, and
//! the two-input correlation map `R_φ(ρ)`.
//!
//! Every map takes `sw2`/`sb2` explicitly so diagnostics can be evaluated off the
//! EoC manifold. For CReLU and CST all quantities are closed forms; the CST
//! derivatives are the CReLU expressions multiplied by [`ActivationKind::branches`].

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationKind, ActivationSpec};
use crate::error::{require_positive, EocError, Result};
use crate::gaussian::{gauss_expect_piecewise, normal_interval, Convention, PanelRule, SQRT_2PI};

/// All scalar maps at one variance `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapDiagnostics {
    pub q: f64,
    pub v: f64,
    pub v_prime: f64,
    pub v_prime2: f64,
    pub chi1: f64,
    pub chi1_prime: f64,
}

/// One evaluation of the correlation map at a fixed point `q_star`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationPoint {
    pub rho: f64,
    pub r: f64,
    pub q_star: f64,
}

fn check(spec: &ActivationSpec, q: f64) -> Result<()> {
    spec.validate()?;
    require_positive("q", q)
}

/// Density of N(0, q) at `x`.
fn density(x: f64, q: f64) -> f64 {
    (-0.5 * x * x / q).exp() / (SQRT_2PI * q.sqrt())
}

pub fn v_map(spec: &ActivationSpec, sw2: f64, sb2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(sw2 * spec.even_moment(1, q) + sb2)
}

/// Quadrature evaluation of `V(q)`, split at the kinks. Cross-check path only.
pub fn v_map_quadrature(
    spec: &ActivationSpec,
    sw2: f64,
    sb2: f64,
    q: f64,
    rule: &PanelRule,
) -> Result<f64> {
    check(spec, q)?;
    let e2 = gauss_expect_piecewise(
        |x| spec.eval(x).powi(2),
        q,
        &spec.kinks(),
        rule,
        Convention::Standard,
    )?;
    Ok(sw2 * e2 + sb2)
}

/// Jump term `σ_w² m p_q(τ + m)` (times the branch count) separating `χ₁` from `V′`.
fn clip_term(spec: &ActivationSpec, sw2: f64, q: f64) -> f64 {
    match spec.kind {
        ActivationKind::Relu => 0.0,
        _ => spec.kind.branches() * sw2 * spec.m * density(spec.tau + spec.m, q),
    }
}

pub fn v_prime(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(match spec.kind {
        ActivationKind::Relu => 0.5 * sw2,
        kind => {
            let sd = q.sqrt();
            let (t, u, m) = (spec.tau, spec.tau + spec.m, spec.m);
            let crelu = sw2 * (normal_interval(t / sd, u / sd) - m * density(u, q));
            kind.branches() * crelu
        }
    })
}

pub fn v_prime2(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(match spec.kind {
        ActivationKind::Relu => 0.0,
        kind => {
            let (t, u, m) = (spec.tau, spec.tau + spec.m, spec.m);
            let et = (-t * t / (2.0 * q)).exp();
            let eu = (-u * u / (2.0 * q)).exp();
            let crelu = sw2 / (8.0 * std::f64::consts::PI * q.powi(3)).sqrt()
                * (t * et - u * eu + m * (1.0 - u * u / q) * eu);
            kind.branches() * crelu
        }
    })
}

pub fn chi1(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(sw2 * spec.linear_mass(q))
}

pub fn chi1_prime(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(match spec.kind {
        ActivationKind::Relu => 0.0,
        kind => {
            let (t, u) = (spec.tau, spec.tau + spec.m);
            let et = (-t * t / (2.0 * q)).exp();
            let eu = (-u * u / (2.0 * q)).exp();
            let crelu = sw2 / (8.0 * std::f64::consts::PI * q.powi(3)).sqrt() * (t * et - u * eu);
            kind.branches() * crelu
        }
    })
}

/// `χ₁(q) − V′(q)`: the right-hand side of the χ₁/V′ identity.
pub fn chi1_vprime_gap(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    Ok(clip_term(spec, sw2, q))
}

/// `χ₁′(q) − V″(q)`: the derivative of [`chi1_vprime_gap`] in `q`.
pub fn chi1_prime_v_prime2_gap(spec: &ActivationSpec, sw2: f64, q: f64) -> Result<f64> {
    check(spec, q)?;
    let u = spec.tau + spec.m;
    Ok(clip_term(spec, sw2, q) * (-0.5 / q + u * u / (2.0 * q * q)))
}

pub fn diagnostics(spec: &ActivationSpec, sw2: f64, sb2: f64, q: f64) -> Result<MapDiagnostics> {
    Ok(MapDiagnostics {
        q,
        v: v_map(spec, sw2, sb2, q)?,
        v_prime: v_prime(spec, sw2, q)?,
        v_prime2: v_prime2(spec, sw2, q)?,
        chi1: chi1(spec, sw2, q)?,
        chi1_prime: chi1_prime(spec, sw2, q)?,
    })
}

/// `R_φ(ρ) = (σ_w² E[φ(u₁)φ(u₂)] + σ_b²) / q*` with `u₁ = √q* z₁`,
/// `u₂ = √q* (ρ z₁ + √(1−ρ²) z₂)`.
///
/// The inner expectation over `z₂` is the closed-form conditional mean of φ under
/// a shifted Gaussian; the outer one over `z₁` uses the panel rule split at the
/// kinks of both factors. `|ρ| = 1` collapses to a one-dimensional integral.
pub fn correlation_map(
    spec: &ActivationSpec,
    sw2: f64,
    sb2: f64,
    q_star: f64,
    rho: f64,
    rule: &PanelRule,
) -> Result<f64> {
    check(spec, q_star)?;
    if !(rho.abs() <= 1.0) {
        return Err(EocError::domain("rho", rho, "must lie in [-1, 1]"));
    }
    let sd = q_star.sqrt();
    let kinks = spec.kinks();
    let mut cuts: Vec<f64> = kinks.iter().map(|k| k / sd).collect();
    let cross = if rho == 1.0 {
        spec.even_moment(1, q_star)
    } else if rho == -1.0 {
        cuts.extend(kinks.iter().map(|k| -k / sd));
        rule.integrate_split(|z| spec.eval(sd * z) * spec.eval(-sd * z), &cuts)?
    } else {
        let cond_sd = sd * (1.0 - rho * rho).sqrt();
        if rho != 0.0 {
            cuts.extend(kinks.iter().map(|k| k / (sd * rho)));
        }
        rule.integrate_split(
            |z| {
                let a = spec.eval(sd * z);
                if a == 0.0 {
                    0.0
                } else {
                    a * spec.conditional_mean(sd * rho * z, cond_sd)
                }
            },
            &cuts,
        )?
    };
    Ok((sw2 * cross + sb2) / q_star)
}

/// Correlation-map trajectory `ρ, R(ρ), R(R(ρ)), …` of length `steps + 1`.
pub fn correlation_trajectory(
    spec: &ActivationSpec,
    sw2: f64,
    sb2: f64,
    q_star: f64,
    rho0: f64,
    steps: usize,
    rule: &PanelRule,
) -> Result<Vec<CorrelationPoint>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut rho = rho0;
    out.push(CorrelationPoint {
        rho,
        r: correlation_map(spec, sw2, sb2, q_star, rho, rule)?,
        q_star,
    });
    for _ in 0..steps {
        // Guard against rounding pushing the iterate past 1.
        rho = out.last().map(|p| p.r).unwrap_or(rho).clamp(-1.0, 1.0);
        out.push(CorrelationPoint {
            rho,
            r: correlation_map(spec, sw2, sb2, q_star, rho, rule)?,
            q_star,
        });
    }
    Ok(out)
}
