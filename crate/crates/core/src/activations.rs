//! Sparsifying activations and their Gaussian moments.
//!
//! `CReLU_{τ,m}(x) = min(max(x − τ, 0), m)` and its odd extension `CST_{τ,m}`, plus
//! plain ReLU as the unclipped baseline. Besides pointwise evaluation this module
//! owns the closed-form Gaussian integrals of the activations (even moments,
//! linear-segment mass, conditional means), computed by integrating each affine
//! branch analytically.

use serde::{Deserialize, Serialize};

use crate::error::{require_positive, EocError, Result};
use crate::gaussian::{normal_cdf, normal_interval, normal_pdf, normal_sf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    #[serde(alias = "ReLU")]
    Relu,
    #[serde(alias = "CReLU")]
    Crelu,
    #[serde(alias = "CST")]
    Cst,
}

impl ActivationKind {
    /// Multiplicity of the active branch: CST has two mirror-image copies of the
    /// CReLU segment, which is where every factor of 2 between the two comes from.
    pub fn branches(self) -> f64 {
        match self {
            ActivationKind::Cst => 2.0,
            _ => 1.0,
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = EocError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "relu" => Ok(ActivationKind::Relu),
            "crelu" => Ok(ActivationKind::Crelu),
            "cst" => Ok(ActivationKind::Cst),
            other => Err(EocError::Config(format!("unknown activation '{other}'"))),
        }
    }
}

impl std::fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ActivationKind::Relu => "relu",
            ActivationKind::Crelu => "crelu",
            ActivationKind::Cst => "cst",
        })
    }
}

/// An activation family with its threshold `tau` and clip width `m`.
/// Both shape parameters are ignored for ReLU.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActivationSpec {
    pub kind: ActivationKind,
    pub tau: f64,
    pub m: f64,
}

impl ActivationSpec {
    pub fn relu() -> Self {
        ActivationSpec {
            kind: ActivationKind::Relu,
            tau: 0.0,
            m: 0.0,
        }
    }

    pub fn crelu(tau: f64, m: f64) -> Result<Self> {
        Self::new(ActivationKind::Crelu, tau, m)
    }

    pub fn cst(tau: f64, m: f64) -> Result<Self> {
        Self::new(ActivationKind::Cst, tau, m)
    }

    pub fn new(kind: ActivationKind, tau: f64, m: f64) -> Result<Self> {
        let spec = ActivationSpec { kind, tau, m };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == ActivationKind::Relu {
            return Ok(());
        }
        if !(self.tau >= 0.0 && self.tau.is_finite()) {
            return Err(EocError::domain("tau", self.tau, "must be finite and >= 0"));
        }
        require_positive("m", self.m)
    }

    /// φ(x).
    pub fn eval(&self, x: f64) -> f64 {
        match self.kind {
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Crelu => (x - self.tau).clamp(0.0, self.m),
            ActivationKind::Cst => {
                let mag = (x.abs() - self.tau).clamp(0.0, self.m);
                if x < 0.0 {
                    -mag
                } else {
                    mag
                }
            }
        }
    }

    /// φ′(x): 1 on the open linear segment(s), 0 elsewhere including the kinks.
    pub fn eval_deriv(&self, x: f64) -> f64 {
        let on = match self.kind {
            ActivationKind::Relu => x > 0.0,
            ActivationKind::Crelu => x > self.tau && x < self.tau + self.m,
            ActivationKind::Cst => {
                let a = x.abs();
                a > self.tau && a < self.tau + self.m
            }
        };
        if on {
            1.0
        } else {
            0.0
        }
    }

    /// Points where φ is not differentiable.
    pub fn kinks(&self) -> Vec<f64> {
        let (t, u) = (self.tau, self.tau + self.m);
        match self.kind {
            ActivationKind::Relu => vec![0.0],
            ActivationKind::Crelu => vec![t, u],
            ActivationKind::Cst => vec![-u, -t, t, u],
        }
    }

    /// P(φ(h) = 0) for h ~ N(0, q).
    pub fn sparsity(&self, q: f64) -> f64 {
        let sd = q.sqrt();
        match self.kind {
            ActivationKind::Relu => 0.5,
            ActivationKind::Crelu => normal_cdf(self.tau / sd),
            ActivationKind::Cst => normal_interval(-self.tau / sd, self.tau / sd),
        }
    }

    /// P(φ′(h) = 1) for h ~ N(0, q), i.e. E[φ′(h)^k] for every k ≥ 1.
    pub fn linear_mass(&self, q: f64) -> f64 {
        let sd = q.sqrt();
        match self.kind {
            ActivationKind::Relu => 0.5,
            _ => {
                self.kind.branches()
                    * normal_interval(self.tau / sd, (self.tau + self.m) / sd)
            }
        }
    }

    /// E[φ(h)^{2k}] for h ~ N(0, q), k ∈ {1, 2}, by branch-wise integration.
    pub fn even_moment(&self, k: u32, q: f64) -> f64 {
        debug_assert!(k == 1 || k == 2);
        let p = 2 * k as usize;
        match self.kind {
            ActivationKind::Relu => {
                // Half of E|h|^{2k}: q/2 and 3q²/2.
                0.5 * if k == 1 { q } else { 3.0 * q * q }
            }
            _ => {
                let j = segment_moments(self.tau, self.m, q, p);
                let upper = normal_sf((self.tau + self.m) / q.sqrt());
                self.kind.branches() * (j[p] + self.m.powi(p as i32) * upper)
            }
        }
    }

    /// E[φ(X)] for X ~ N(mean, sd²); `sd = 0` gives φ(mean).
    pub fn conditional_mean(&self, mean: f64, sd: f64) -> f64 {
        if sd <= 0.0 {
            return self.eval(mean);
        }
        match self.kind {
            ActivationKind::Relu => {
                let r = mean / sd;
                mean * normal_cdf(r) + sd * normal_pdf(r)
            }
            ActivationKind::Crelu => crelu_mean(self.tau, self.m, mean, sd),
            ActivationKind::Cst => {
                crelu_mean(self.tau, self.m, mean, sd) - crelu_mean(self.tau, self.m, -mean, sd)
            }
        }
    }
}

/// E[CReLU_{τ,m}(X)] for X ~ N(mean, sd²).
fn crelu_mean(tau: f64, m: f64, mean: f64, sd: f64) -> f64 {
    let a = (tau - mean) / sd;
    let b = (tau + m - mean) / sd;
    (mean - tau) * normal_interval(a, b) + sd * (normal_pdf(a) - normal_pdf(b)) + m * normal_sf(b)
}

/// J_k = ∫_τ^{τ+m} (x − τ)^k p_q(x) dx for k = 0..=kmax, with p_q the N(0, q)
/// density. Integration by parts on y = x − τ gives
/// J_{k+1} = k q J_{k−1} − τ J_k − q m^k p_q(τ + m)   (k ≥ 1),
/// J_1 = q (p_q(τ) − p_q(τ + m)) − τ J_0.
pub(crate) fn segment_moments(tau: f64, m: f64, q: f64, kmax: usize) -> Vec<f64> {
    let sd = q.sqrt();
    let dens = |x: f64| normal_pdf(x / sd) / sd;
    let (p_lo, p_hi) = (dens(tau), dens(tau + m));
    let mut j = vec![0.0; kmax + 1];
    j[0] = normal_interval(tau / sd, (tau + m) / sd);
    if kmax >= 1 {
        j[1] = q * (p_lo - p_hi) - tau * j[0];
    }
    for k in 1..kmax {
        j[k + 1] = k as f64 * q * j[k - 1] - tau * j[k] - q * m.powi(k as i32) * p_hi;
    }
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{gauss_expect_piecewise, Convention, PanelRule};

    fn crelu11() -> ActivationSpec {
        ActivationSpec::crelu(1.0, 1.0).unwrap()
    }

    #[test]
    fn pointwise_values() {
        let c = crelu11();
        assert_eq!(c.eval(0.5), 0.0);
        assert_eq!(c.eval(2.5), 1.0);
        assert_eq!(c.eval(1.5), 0.5);
        let s = ActivationSpec::cst(1.0, 1.0).unwrap();
        assert_eq!(s.eval(-1.5), -0.5);
        assert_eq!(s.eval(1.5), 0.5);
        assert_eq!(s.eval(-9.0), -1.0);
        for spec in [c, s, ActivationSpec::relu()] {
            assert_eq!(spec.eval(0.0), 0.0);
        }
    }

    #[test]
    fn derivative_values() {
        let c = crelu11();
        assert_eq!(c.eval_deriv(1.5), 1.0);
        assert_eq!(c.eval_deriv(3.0), 0.0);
        assert_eq!(c.eval_deriv(1.0), 0.0);
        assert_eq!(c.eval_deriv(2.0), 0.0);
        assert_eq!(ActivationSpec::cst(1.0, 1.0).unwrap().eval_deriv(-1.2), 1.0);
        assert_eq!(ActivationSpec::relu().eval_deriv(0.0), 0.0);
    }

    #[test]
    fn rejects_invalid_shapes() {
        assert!(ActivationSpec::crelu(-0.1, 1.0).is_err());
        assert!(ActivationSpec::crelu(0.1, 0.0).is_err());
        assert!(ActivationSpec::cst(0.1, f64::NAN).is_err());
        assert!(ActivationSpec::new(ActivationKind::Relu, -5.0, -1.0).is_ok());
    }

    #[test]
    fn kind_parses_and_serialises() {
        assert_eq!("CReLU".parse::<ActivationKind>().unwrap(), ActivationKind::Crelu);
        assert!("tanh".parse::<ActivationKind>().is_err());
        let json = serde_json::to_string(&crelu11()).unwrap();
        assert_eq!(json, r#"{"kind":"crelu","tau":1.0,"m":1.0}"#);
        let back: ActivationSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, crelu11());
    }

    fn quad_moment(spec: &ActivationSpec, g: impl Fn(f64) -> f64, q: f64) -> f64 {
        gauss_expect_piecewise(g, q, &spec.kinks(), &PanelRule::default(), Convention::Standard)
            .unwrap()
    }

    #[test]
    fn closed_form_moments_match_split_quadrature() {
        for &(tau, m, q) in &[(0.0, 1.0, 1.0), (0.6, 1.3, 2.0), (1.9, 0.4, 0.7), (2.3, 3.9, 3.0)] {
            for spec in [
                ActivationSpec::crelu(tau, m).unwrap(),
                ActivationSpec::cst(tau, m).unwrap(),
            ] {
                let e2 = quad_moment(&spec, |x| spec.eval(x).powi(2), q);
                let e4 = quad_moment(&spec, |x| spec.eval(x).powi(4), q);
                let lin = quad_moment(&spec, |x| spec.eval_deriv(x), q);
                let zero = quad_moment(&spec, |x| f64::from(spec.eval(x) == 0.0), q);
                assert!((spec.even_moment(1, q) - e2).abs() < 1e-13, "{spec:?}");
                assert!((spec.even_moment(2, q) - e4).abs() < 1e-12, "{spec:?}");
                assert!((spec.linear_mass(q) - lin).abs() < 1e-13);
                assert!((spec.sparsity(q) - zero).abs() < 1e-13);
            }
        }
        let relu = ActivationSpec::relu();
        assert!((relu.even_moment(1, 2.0) - 1.0).abs() < 1e-15);
        assert!((relu.even_moment(2, 2.0) - 6.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_mean_matches_quadrature() {
        let rule = PanelRule::default();
        for spec in [
            ActivationSpec::crelu(0.7, 1.1).unwrap(),
            ActivationSpec::cst(0.7, 1.1).unwrap(),
            ActivationSpec::relu(),
        ] {
            for &(mu, sd) in &[(0.0, 1.0), (1.2, 0.3), (-0.8, 2.0)] {
                let kinks: Vec<f64> = spec.kinks().iter().map(|k| (k - mu) / sd).collect();
                let want = rule.integrate_split(|z| spec.eval(mu + sd * z), &kinks).unwrap();
                assert!((spec.conditional_mean(mu, sd) - want).abs() < 1e-13);
            }
            assert_eq!(spec.conditional_mean(1.3, 0.0), spec.eval(1.3));
        }
    }
}
