//! Quadrature rules for Gaussian expectations.
//!
//! Two rules live here:
//!
//! * [`QuadratureRule`], a Gauss–Hermite rule normalised to the standard normal
//!   weight γ(dz) = e^{-z²/2}/√(2π). It is exact for polynomials up to degree
//!   `2·order − 1` and is the right tool for smooth integrands.
//! * [`PanelRule`], a composite Gauss–Legendre rule over panels that are split at
//!   caller-supplied breakpoints. Activation-derived integrands are only piecewise
//!   smooth, and splitting at their kinks restores spectral convergence.
//!
//! Expectations come in two conventions, see [`Convention`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::special::SQRT_2PI;
use crate::error::{require_positive, EocError, Result};

/// Default Gauss–Hermite order.
pub const DEFAULT_HERMITE_ORDER: usize = 101;
/// Default Gauss–Legendre order per panel.
pub const DEFAULT_PANEL_ORDER: usize = 32;

/// Standard-normal mass beyond this many standard deviations is below 1e-50 and
/// is dropped by the panel rule.
const Z_CUTOFF: f64 = 15.0;
/// Maximum panel width in standard deviations.
const PANEL_WIDTH: f64 = 1.0;

/// Normalisation of the Gaussian average `⟨f⟩_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Convention {
    /// `E[f(√q z)]` with `z ~ N(0, 1)`: the variance map, the slope χ₁, the
    /// correlation map and the finite-width recursions all use this one.
    Standard,
    /// The operator exactly as printed, `(2πq)^{-1/2} ∫ f(z) e^{-z²/q} dz`.
    /// This equals `E[f(√(q/2) z)] / √2`, so it does not reproduce `⟨1⟩ = 1`;
    /// it is exposed for comparison only.
    PrintedKernel,
}

impl Convention {
    /// Returns `(scale, prefactor)` such that the average is `prefactor · E[f(scale·z)]`.
    fn transform(self, q: f64) -> (f64, f64) {
        match self {
            Convention::Standard => (q.sqrt(), 1.0),
            Convention::PrintedKernel => ((0.5 * q).sqrt(), std::f64::consts::FRAC_1_SQRT_2),
        }
    }
}

/// Gauss–Hermite nodes and weights for the standard normal weight.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    pub order: usize,
}

impl QuadratureRule {
    /// Builds an `order`-point rule by Newton iteration on the orthonormal
    /// Hermite recurrence, then rescales from the e^{-x²} weight to γ(dz).
    pub fn gauss_hermite(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(EocError::Config("quadrature order must be positive".into()));
        }
        let n = order;
        let mut x = vec![0.0; n];
        let mut w = vec![0.0; n];
        let pim4 = PI.powf(-0.25);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * x[0],
                3 => 1.91 * z - 0.91 * x[1],
                _ => 2.0 * z - x[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let (p1, p2) = hermite_orthonormal(n, z, pim4);
                pp = (2.0 * nf).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, p2) = hermite_orthonormal(n, z, pim4);
            if pp == 0.0 {
                pp = (2.0 * nf).sqrt() * p2;
            }
            x[i] = z;
            x[n - 1 - i] = -z;
            w[i] = 2.0 / (pp * pp);
            w[n - 1 - i] = w[i];
        }
        if n % 2 == 1 {
            x[n / 2] = 0.0;
        }
        // e^{-x²} → γ(dz): z = √2 x, weights / √π. Renormalise to absorb rounding.
        let mut nodes: Vec<f64> = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
        let mut weights: Vec<f64> = w.iter().rev().copied().collect();
        let total: f64 = weights.iter().sum();
        for wi in &mut weights {
            *wi /= total;
        }
        for v in &mut nodes {
            if v.abs() < 1e-300 {
                *v = 0.0;
            }
        }
        Ok(QuadratureRule {
            nodes,
            weights,
            order: n,
        })
    }

    /// `E[g(z)]`, z standard normal.
    pub fn integrate<F: Fn(f64) -> f64>(&self, g: F) -> Result<f64> {
        let mut acc = 0.0;
        for (&z, &w) in self.nodes.iter().zip(&self.weights) {
            let v = g(z);
            if !v.is_finite() {
                return Err(EocError::Evaluation { node: z, value: v });
            }
            acc += w * v;
        }
        Ok(acc)
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::gauss_hermite(DEFAULT_HERMITE_ORDER).expect("default order is positive")
    }
}

/// Returns (p_n(z), p_{n-1}(z)) of the orthonormal Hermite family.
fn hermite_orthonormal(n: usize, z: f64, pim4: f64) -> (f64, f64) {
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    (p1, p2)
}

/// Gaussian expectation of `f` at variance `q` with the Hermite rule, in the
/// [`Convention::Standard`] normalisation.
pub fn gauss_expect<F: Fn(f64) -> f64>(f: F, q: f64, rule: &QuadratureRule) -> Result<f64> {
    gauss_expect_with(f, q, rule, Convention::Standard)
}

/// Gaussian expectation of `f` at variance `q` in either convention.
pub fn gauss_expect_with<F: Fn(f64) -> f64>(
    f: F,
    q: f64,
    rule: &QuadratureRule,
    convention: Convention,
) -> Result<f64> {
    require_positive("q", q)?;
    let (scale, pre) = convention.transform(q);
    Ok(pre * rule.integrate(|z| f(scale * z))?)
}

/// Composite Gauss–Legendre rule on [-1, 1], applied panel by panel.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    pub order: usize,
}

impl PanelRule {
    pub fn gauss_legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(EocError::Config("quadrature order must be positive".into()));
        }
        let n = order;
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() <= 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let wi = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = wi;
            weights[n - 1 - i] = wi;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(PanelRule {
            nodes,
            weights,
            order,
        })
    }

    /// ∫_a^b g(z) dz.
    fn panel<F: Fn(f64) -> f64>(&self, g: &F, a: f64, b: f64) -> Result<f64> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut acc = 0.0;
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            let z = mid + half * x;
            let v = g(z);
            if !v.is_finite() {
                return Err(EocError::Evaluation { node: z, value: v });
            }
            acc += w * v;
        }
        Ok(acc * half)
    }

    /// `E[g(z)]` for standard-normal `z`, with the real line split at `kinks`
    /// (given in z units). Mass beyond ±15 is ignored.
    pub fn integrate_split<F: Fn(f64) -> f64>(&self, g: F, kinks: &[f64]) -> Result<f64> {
        let mut cuts: Vec<f64> = kinks
            .iter()
            .copied()
            .filter(|k| k.is_finite() && k.abs() < Z_CUTOFF)
            .collect();
        cuts.push(-Z_CUTOFF);
        cuts.push(Z_CUTOFF);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let weighted = |z: f64| g(z) * (-0.5 * z * z).exp();
        let mut acc = 0.0;
        for pair in cuts.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            let pieces = ((b - a) / PANEL_WIDTH).ceil().max(1.0) as usize;
            let step = (b - a) / pieces as f64;
            for k in 0..pieces {
                let lo = a + step * k as f64;
                acc += self.panel(&weighted, lo, lo + step)?;
            }
        }
        Ok(acc / SQRT_2PI)
    }
}

impl Default for PanelRule {
    fn default() -> Self {
        Self::gauss_legendre(DEFAULT_PANEL_ORDER).expect("default order is positive")
    }
}

/// Legendre P_n(x) and its derivative.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p1 = 1.0;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = ((2.0 * jf + 1.0) * x * p2 - jf * p3) / (jf + 1.0);
    }
    let nf = n as f64;
    (p1, nf * (x * p1 - p2) / (x * x - 1.0))
}

/// Gaussian expectation of a piecewise-smooth `f` at variance `q`, split at
/// `breakpoints` given in the argument space of `f` (not z units).
pub fn gauss_expect_piecewise<F: Fn(f64) -> f64>(
    f: F,
    q: f64,
    breakpoints: &[f64],
    rule: &PanelRule,
    convention: Convention,
) -> Result<f64> {
    require_positive("q", q)?;
    let (scale, pre) = convention.transform(q);
    let kinks: Vec<f64> = breakpoints.iter().map(|b| b / scale).collect();
    Ok(pre * rule.integrate_split(|z| f(scale * z), &kinks)?)
}
