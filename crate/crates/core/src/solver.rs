//! Solving for a complete EoC initialization and locating fixed points of `V`.
//!
//! Given a sparsity `s` and fixed-point variance `q*`, the threshold is
//! `τ = √q* Φ⁻¹(s)` (CReLU) or `τ = √(2q*) erf⁻¹(s)` (CST). For each trial clip
//! width `m`, `σ_w²(m) = 1 / P(linear segment)` enforces `χ₁(q*) = 1`, and the
//! clip width is chosen by one of the [`MSelection`] rules. Finally
//! `σ_b² = q* − σ_w² E[φ(√q* z)²]` makes `q*` a fixed point.

use serde::{Deserialize, Serialize};

use crate::activations::{ActivationKind, ActivationSpec};
use crate::error::{require_positive, EocError, Result};
use crate::gaussian::{erf_inv, normal_quantile};
use crate::maps;
use crate::roots::{bisect, brent};
use crate::tolerances::Tolerances;

/// Bracket searched for the clip width.
pub const M_BRACKET: (f64, f64) = (1e-4, 50.0);

/// A complete initialization on the EoC manifold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EocInit {
    pub spec: ActivationSpec,
    pub q_star: f64,
    pub sw2: f64,
    pub sb2: f64,
    /// Target sparsity the threshold was derived from.
    pub s: f64,
    /// `V′(q*)` of the solved initialization.
    pub v_prime_at_fp: f64,
}

/// How the clip width `m` is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum MSelection {
    /// Solve `V′(q*) = target` for the requested activation.
    SlopeTarget(f64),
    /// Use this `m` as given.
    Fixed(f64),
    /// Take `m` from the CReLU solve of `V′(q*) = target` at the same `(s, q*)`;
    /// the threshold and variances are then solved for the requested activation.
    /// Compares CST with CReLU at equal clip width.
    CreluMatched(f64),
    /// Solve `V″(q*) = target`, taking the smallest `m` in the bracket.
    CurvatureTarget(f64),
}

/// One root of `V(q) − q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q: f64,
    pub slope: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointReport {
    pub points: Vec<FixedPoint>,
    pub search_interval: (f64, f64),
    /// Set when `V(q) = q` on the whole interval (ReLU at its EoC point).
    pub degenerate: bool,
}

impl FixedPointReport {
    /// Fixed points other than `q_star`.
    pub fn extras(&self, q_star: f64) -> impl Iterator<Item = &FixedPoint> {
        self.points
            .iter()
            .filter(move |p| (p.q - q_star).abs() > 1e-6 * q_star.max(1.0))
    }
}

/// Threshold that gives sparsity `s` at variance `q_star`.
pub fn sparsity_threshold(kind: ActivationKind, s: f64, q_star: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(EocError::domain("s", s, "must lie in (0, 1)"));
    }
    require_positive("q_star", q_star)?;
    match kind {
        ActivationKind::Crelu => Ok(q_star.sqrt() * normal_quantile(s)?),
        ActivationKind::Cst => Ok((2.0 * q_star).sqrt() * erf_inv(s)?),
        ActivationKind::Relu => Err(EocError::Config(
            "ReLU has no threshold; its sparsity is fixed at 1/2".into(),
        )),
    }
}

/// `σ_w²` making `χ₁(q*) = 1` for the given shape.
pub fn eoc_weight_variance(spec: &ActivationSpec, q_star: f64) -> Result<f64> {
    let mass = spec.linear_mass(q_star);
    if !(mass > 0.0) {
        return Err(EocError::Degenerate(format!(
            "activation has no linear mass at q* = {q_star}"
        )));
    }
    Ok(1.0 / mass)
}

/// Solve for `m` such that `V′(q*) = v_prime_target`.
pub fn solve_init(
    kind: ActivationKind,
    s: f64,
    q_star: f64,
    v_prime_target: f64,
) -> Result<EocInit> {
    solve_init_with(kind, s, q_star, MSelection::SlopeTarget(v_prime_target))
}

pub fn solve_init_with(
    kind: ActivationKind,
    s: f64,
    q_star: f64,
    rule: MSelection,
) -> Result<EocInit> {
    let tol = Tolerances::DEFAULT;
    if kind == ActivationKind::Relu {
        return Err(EocError::Infeasible {
            reason: "ReLU has V'(q*) = 1 at its only EoC point; use EocInit::relu".into(),
            sb2: None,
        });
    }
    let tau = sparsity_threshold(kind, s, q_star)?;
    if tau < 0.0 {
        return Err(EocError::domain(
            "s",
            s,
            "gives a negative threshold; CReLU needs s >= 0.5",
        ));
    }
    let shape = |m: f64| ActivationSpec { kind, tau, m };

    let m = match rule {
        MSelection::Fixed(m) => {
            require_positive("m", m)?;
            m
        }
        MSelection::SlopeTarget(target) => {
            if !(target > 0.0 && target < 1.0) {
                return Err(EocError::domain("v_prime_target", target, "must lie in (0, 1)"));
            }
            let g = |m: f64| slope_at_eoc(&shape(m), q_star) - target;
            let (lo, hi) = M_BRACKET;
            let (glo, ghi) = (g(lo), g(hi));
            if glo.signum() == ghi.signum() {
                return Err(EocError::Infeasible {
                    reason: format!(
                        "V'(q*) = {target} not reached for m in ({lo}, {hi}); \
                         V' ranges over [{:.6}, {:.6}]",
                        glo + target,
                        ghi + target
                    ),
                    sb2: None,
                });
            }
            brent(g, lo, hi, tol.root_m, tol.max_iter)?
        }
        MSelection::CreluMatched(target) => {
            solve_init(ActivationKind::Crelu, s, q_star, target)?.spec.m
        }
        MSelection::CurvatureTarget(target) => {
            let g = |m: f64| {
                let spec = shape(m);
                let sw2 = 1.0 / spec.linear_mass(q_star);
                maps::v_prime2(&spec, sw2, q_star).unwrap_or(f64::NAN) - target
            };
            first_sign_change(g, M_BRACKET, 4000, tol)?.ok_or_else(|| EocError::Infeasible {
                reason: format!("V''(q*) = {target} not reached for m in {M_BRACKET:?}"),
                sb2: None,
            })?
        }
    };

    let spec = ActivationSpec::new(kind, tau, m)?;
    let sw2 = eoc_weight_variance(&spec, q_star)?;
    let sb2 = q_star - sw2 * spec.even_moment(1, q_star);
    if sb2 < 0.0 {
        return Err(EocError::Infeasible {
            reason: format!("bias variance would be negative (sigma_b^2 = {sb2:.6e})"),
            sb2: Some(sb2),
        });
    }
    let init = EocInit {
        spec,
        q_star,
        sw2,
        sb2,
        s,
        v_prime_at_fp: maps::v_prime(&spec, sw2, q_star)?,
    };
    init.check_eoc(tol.eoc_residual)?;
    Ok(init)
}

/// `V′(q*)` on the EoC manifold: `σ_w²` re-solved from `χ₁ = 1` for this shape.
pub fn slope_at_eoc(spec: &ActivationSpec, q_star: f64) -> f64 {
    let sw2 = 1.0 / spec.linear_mass(q_star);
    maps::v_prime(spec, sw2, q_star).unwrap_or(f64::NAN)
}

fn first_sign_change<F: Fn(f64) -> f64>(
    g: F,
    (lo, hi): (f64, f64),
    steps: usize,
    tol: Tolerances,
) -> Result<Option<f64>> {
    let ratio = (hi / lo).powf(1.0 / steps as f64);
    let mut a = lo;
    let mut ga = g(a);
    for _ in 0..steps {
        let b = a * ratio;
        let gb = g(b);
        if ga == 0.0 {
            return Ok(Some(a));
        }
        if ga.is_finite() && gb.is_finite() && ga.signum() != gb.signum() {
            return brent(&g, a, b, tol.root_m, tol.max_iter).map(Some);
        }
        a = b;
        ga = gb;
    }
    Ok(None)
}

impl EocInit {
    /// ReLU at its unique EoC point, `σ_w² = 2`, `σ_b² = 0`; every `q` is fixed.
    pub fn relu(q_star: f64) -> Result<Self> {
        require_positive("q_star", q_star)?;
        Ok(EocInit {
            spec: ActivationSpec::relu(),
            q_star,
            sw2: 2.0,
            sb2: 0.0,
            s: 0.5,
            v_prime_at_fp: 1.0,
        })
    }

    /// Builds an initialization from explicit parameters, checking nothing.
    /// Used for deliberately off-manifold experiments.
    pub fn from_parts(spec: ActivationSpec, q_star: f64, sw2: f64, sb2: f64) -> Result<Self> {
        spec.validate()?;
        require_positive("q_star", q_star)?;
        Ok(EocInit {
            spec,
            q_star,
            sw2,
            sb2,
            s: spec.sparsity(q_star),
            v_prime_at_fp: maps::v_prime(&spec, sw2, q_star)?,
        })
    }

    /// Same shape and `q*`, weight variance multiplied by `factor`. The bias
    /// variance is re-solved so `q*` stays a fixed point when possible.
    pub fn with_scaled_weights(&self, factor: f64) -> Result<Self> {
        let sw2 = self.sw2 * factor;
        let sb2 = (self.q_star - sw2 * self.spec.even_moment(1, self.q_star)).max(0.0);
        Self::from_parts(self.spec, self.q_star, sw2, sb2)
    }

    /// Residuals `(χ₁(q*) − 1, V(q*) − q*)`.
    pub fn eoc_residuals(&self) -> Result<(f64, f64)> {
        Ok((
            maps::chi1(&self.spec, self.sw2, self.q_star)? - 1.0,
            maps::v_map(&self.spec, self.sw2, self.sb2, self.q_star)? - self.q_star,
        ))
    }

    pub fn check_eoc(&self, tol: f64) -> Result<()> {
        let (dchi, dv) = self.eoc_residuals()?;
        if dchi.abs() > tol || dv.abs() > tol {
            return Err(EocError::Precondition(format!(
                "not an EoC fixed point: chi1 - 1 = {dchi:.3e}, V(q*) - q* = {dv:.3e}"
            )));
        }
        Ok(())
    }

    pub fn diagnostics(&self) -> Result<maps::MapDiagnostics> {
        maps::diagnostics(&self.spec, self.sw2, self.sb2, self.q_star)
    }

    pub fn v(&self, q: f64) -> Result<f64> {
        maps::v_map(&self.spec, self.sw2, self.sb2, q)
    }
}

/// All roots of `V(q) − q` in `[lo, hi]`: sign-change scan on a log grid, then
/// bisection. `q*` is always reported.
pub fn find_fixed_points(init: &EocInit, lo: f64, hi: f64) -> Result<FixedPointReport> {
    let tol = Tolerances::DEFAULT;
    require_positive("lo", lo)?;
    if !(lo < init.q_star && init.q_star < hi) {
        return Err(EocError::Precondition(format!(
            "search interval [{lo}, {hi}] must contain q* = {}",
            init.q_star
        )));
    }
    let f = |q: f64| init.v(q).map(|v| v - q);
    let n = tol.fixed_point_grid;
    let ratio = (hi / lo).powf(1.0 / n as f64);
    let mut grid: Vec<f64> = (0..=n).map(|i| lo * ratio.powi(i as i32)).collect();
    grid.push(init.q_star);
    grid.sort_by(f64::total_cmp);
    let values = grid.iter().map(|&q| f(q)).collect::<Result<Vec<f64>>>()?;

    let residual_ok = |q: f64, r: f64| r.abs() <= 1e-12 * q.max(1.0);
    if grid.iter().zip(&values).all(|(&q, &r)| residual_ok(q, r)) {
        let slope = maps::v_prime(&init.spec, init.sw2, init.q_star)?;
        return Ok(FixedPointReport {
            points: vec![FixedPoint {
                q: init.q_star,
                slope,
                stable: slope.abs() < 1.0,
            }],
            search_interval: (lo, hi),
            degenerate: true,
        });
    }

    let mut roots = vec![init.q_star];
    for i in 0..grid.len() - 1 {
        let (a, b) = (grid[i], grid[i + 1]);
        let (fa, fb) = (values[i], values[i + 1]);
        if residual_ok(a, fa) {
            roots.push(a);
        } else if fa.signum() != fb.signum() && !residual_ok(b, fb) {
            let g = |q: f64| f(q).unwrap_or(f64::NAN);
            roots.push(bisect(g, a, b, tol.fixed_point_bisect * b, tol.max_iter)?);
        }
    }
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|a, b| (*a - *b).abs() <= 1e-7 * b.max(1.0));

    let mut points = Vec::with_capacity(roots.len());
    for q in roots {
        let r = f(q)?;
        if r.abs() > tol.fixed_point * q.max(1.0) {
            continue;
        }
        let slope = maps::v_prime(&init.spec, init.sw2, q)?;
        points.push(FixedPoint {
            q,
            slope,
            stable: slope.abs() < 1.0,
        });
    }
    Ok(FixedPointReport {
        points,
        search_interval: (lo, hi),
        degenerate: false,
    })
}

/// [`find_fixed_points`] on the default interval `[q*/20, 20 q*]`.
pub fn find_fixed_points_default(init: &EocInit) -> Result<FixedPointReport> {
    find_fixed_points(init, init.q_star / 20.0, init.q_star * 20.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_formulas() {
        assert_eq!(sparsity_threshold(ActivationKind::Crelu, 0.5, 3.7).unwrap(), 0.0);
        let t = sparsity_threshold(ActivationKind::Crelu, 0.85, 1.0).unwrap();
        assert!((t - 1.036_433_389_493_79).abs() < 1e-12);
        let t = sparsity_threshold(ActivationKind::Cst, 0.85, 2.0).unwrap();
        assert!((t - 2.035_805).abs() < 1e-6);
        assert!(sparsity_threshold(ActivationKind::Crelu, 1.0, 1.0).is_err());
        assert!(sparsity_threshold(ActivationKind::Crelu, 0.5, 0.0).is_err());
    }

    #[test]
    fn solved_init_satisfies_eoc_conditions() {
        let init = solve_init(ActivationKind::Crelu, 0.85, 3.0, 0.7).unwrap();
        let (dchi, dv) = init.eoc_residuals().unwrap();
        assert!(dchi.abs() < 1e-9 && dv.abs() < 1e-9);
        assert!((init.v_prime_at_fp - 0.7).abs() < 1e-10);
        assert!((init.spec.m - 2.03).abs() < 0.01);
        assert!((init.spec.sparsity(init.q_star) - 0.85).abs() < 1e-12);
    }

    #[test]
    fn infeasible_targets_are_errors() {
        assert!(matches!(
            solve_init(ActivationKind::Crelu, 0.85, 1.0, 1.0),
            Err(EocError::Domain { .. })
        ));
        assert!(matches!(
            solve_init(ActivationKind::Crelu, 0.85, 1.0, 1e-6),
            Err(EocError::Infeasible { .. })
        ));
        assert!(matches!(
            solve_init(ActivationKind::Relu, 0.5, 1.0, 0.5),
            Err(EocError::Infeasible { .. })
        ));
        assert!(solve_init(ActivationKind::Crelu, 0.3, 1.0, 0.5).is_err());
    }

    #[test]
    fn relu_has_a_line_of_fixed_points() {
        let init = EocInit::relu(1.0).unwrap();
        let rep = find_fixed_points(&init, 0.1, 10.0).unwrap();
        assert!(rep.degenerate);
    }

    #[test]
    fn fixed_point_interval_must_contain_q_star() {
        let init = solve_init(ActivationKind::Crelu, 0.85, 1.0, 0.7).unwrap();
        assert!(find_fixed_points(&init, 2.0, 10.0).is_err());
        let rep = find_fixed_points_default(&init).unwrap();
        assert!(rep.points.iter().any(|p| (p.q - 1.0).abs() < 1e-12 && p.stable));
    }
}
