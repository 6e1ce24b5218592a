//! Next-leading-order (1/n) corrections to the layer variance.
//!
//! With `q` held at the fixed point `q*`, the fourth-moment deviation `r` and
//! the 1/n correction `q1` obey
//!
//! ```text
//! r(ℓ+1)  = V′² r(ℓ) + σ_w⁴ κ
//! q1(ℓ+1) = V′ q1(ℓ) + ½ V″ r(ℓ)
//! ```
//!
//! with `κ = ⟨φ⁴⟩ − ⟨φ²⟩²` and `r(1) = q1(1) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{EocError, Result};
use crate::maps;
use crate::solver::EocInit;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NloState {
    pub layer: usize,
    pub q: f64,
    pub r: f64,
    pub q1: f64,
}

/// Slopes and moments shared by the recursions and closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NloCoefficients {
    pub v_prime: f64,
    pub v_prime2: f64,
    /// `⟨φ⁴⟩ − ⟨φ²⟩²` at `q*`.
    pub kappa: f64,
    /// `σ_w⁴ κ`, the per-layer source term of `r`.
    pub source: f64,
}

impl NloCoefficients {
    pub fn at_fixed_point(init: &EocInit) -> Result<Self> {
        let (spec, q) = (&init.spec, init.q_star);
        let kappa = fourth_moment_excess(init);
        Ok(NloCoefficients {
            v_prime: maps::v_prime(spec, init.sw2, q)?,
            v_prime2: maps::v_prime2(spec, init.sw2, q)?,
            kappa,
            source: init.sw2 * init.sw2 * kappa,
        })
    }
}

/// `⟨φ⁴⟩ − ⟨φ²⟩²` under `N(0, q*)`.
pub fn fourth_moment_excess(init: &EocInit) -> f64 {
    let m2 = init.spec.even_moment(1, init.q_star);
    init.spec.even_moment(2, init.q_star) - m2 * m2
}

fn require_fixed_point(init: &EocInit) -> Result<()> {
    let dv = init.v(init.q_star)? - init.q_star;
    if dv.abs() > 1e-9 * init.q_star.max(1.0) {
        return Err(EocError::Precondition(format!(
            "q* = {} is not a fixed point (V(q*) - q* = {dv:.3e})",
            init.q_star
        )));
    }
    Ok(())
}

/// Layers `1..=depth` of the coupled recursions.
pub fn nlo_trajectory(init: &EocInit, depth: usize) -> Result<Vec<NloState>> {
    if depth == 0 {
        return Err(EocError::Config("depth must be at least 1".into()));
    }
    require_fixed_point(init)?;
    let c = NloCoefficients::at_fixed_point(init)?;
    let mut out = Vec::with_capacity(depth);
    let mut state = NloState {
        layer: 1,
        q: init.q_star,
        r: 0.0,
        q1: 0.0,
    };
    out.push(state);
    for layer in 2..=depth {
        state = NloState {
            layer,
            q: init.q_star,
            r: c.v_prime * c.v_prime * state.r + c.source,
            q1: c.v_prime * state.q1 + 0.5 * c.v_prime2 * state.r,
        };
        out.push(state);
    }
    Ok(out)
}

fn require_non_unit_slope(c: &NloCoefficients) -> Result<()> {
    if (c.v_prime - 1.0).abs() < 1e-12 {
        return Err(EocError::DegenerateSlope(c.v_prime));
    }
    Ok(())
}

fn r_closed(c: &NloCoefficients, layer: usize) -> f64 {
    let v2 = c.v_prime * c.v_prime;
    c.source * (1.0 - v2.powi(layer as i32 - 1)) / (1.0 - v2)
}

/// `r(ℓ) = σ_w⁴ κ (1 − V′^{2(ℓ−1)}) / (1 − V′²)` for `ℓ ≥ 2`.
pub fn lemma_r_closed_form(init: &EocInit, layer: usize) -> Result<f64> {
    if layer < 2 {
        return Err(EocError::Config(format!("layer must be >= 2, got {layer}")));
    }
    let c = NloCoefficients::at_fixed_point(init)?;
    require_non_unit_slope(&c)?;
    Ok(r_closed(&c, layer))
}

/// `q1(ℓ) = ½ V″ Σ_{i=0}^{ℓ−3} V′^i r(ℓ−i−1)` for `ℓ ≥ 3`.
pub fn lemma_q1_closed_form(init: &EocInit, layer: usize) -> Result<f64> {
    if layer < 3 {
        return Err(EocError::Config(format!("layer must be >= 3, got {layer}")));
    }
    let c = NloCoefficients::at_fixed_point(init)?;
    require_non_unit_slope(&c)?;
    let mut sum = 0.0;
    let mut power = 1.0;
    for i in 0..=layer - 3 {
        sum += power * r_closed(&c, layer - i - 1);
        power *= c.v_prime;
    }
    Ok(0.5 * c.v_prime2 * sum)
}

/// Depth-uniform bound on `|q1(ℓ)|`:
/// `(σ_w⁴/2) |V″| |κ| / ((1 − V′)² (1 + V′))`.
pub fn theorem1_bound(init: &EocInit) -> Result<f64> {
    let c = NloCoefficients::at_fixed_point(init)?;
    let v = c.v_prime;
    if !(v > 0.0 && v < 1.0) {
        return Err(EocError::Precondition(format!(
            "bound needs 0 < V'(q*) < 1, got {v}"
        )));
    }
    let sw4 = init.sw2 * init.sw2;
    Ok(0.5 * sw4 * c.v_prime2.abs() * c.kappa.abs() / ((1.0 - v).powi(2) * (1.0 + v)))
}

/// Natural log of [`theorem1_bound`]; `-inf` when the bound is zero.
pub fn theorem1_log_bound(init: &EocInit) -> Result<f64> {
    theorem1_bound(init).map(f64::ln)
}

/// Largest `|q1|` along a trajectory.
pub fn max_abs_q1(trajectory: &[NloState]) -> f64 {
    trajectory.iter().map(|s| s.q1.abs()).fold(0.0, f64::max)
}
