//! Numerical tolerances shared by the solver, the fixed-point search and the
//! validation helpers.

/// Tolerance record. `Tolerances::DEFAULT` is what every public entry point uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Absolute tolerance on the root of the clip-width equation.
    pub root_m: f64,
    /// Residual allowed on the EoC conditions chi1(q*) = 1 and V(q*) = q*.
    pub eoc_residual: f64,
    /// Relative residual accepted for a reported fixed point, |V(q) - q| <= tol * max(1, q).
    pub fixed_point: f64,
    /// Bisection tolerance when refining a bracketed fixed point.
    pub fixed_point_bisect: f64,
    /// Grid resolution of the fixed-point sign-change scan.
    pub fixed_point_grid: usize,
    /// Maximum iterations for any bracketing root finder.
    pub max_iter: usize,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        root_m: 1e-12,
        eoc_residual: 1e-9,
        fixed_point: 1e-8,
        fixed_point_bisect: 1e-13,
        fixed_point_grid: 2000,
        max_iter: 500,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}
