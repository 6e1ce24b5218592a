//! Gaussian expectation engine: quadrature rules, the ⟨f⟩_q operator and the
//! normal/erf special functions used by every closed form in the crate.

mod quadrature;
mod special;

pub use quadrature::{
    gauss_expect, gauss_expect_piecewise, gauss_expect_with, Convention, PanelRule, QuadratureRule,
    DEFAULT_HERMITE_ORDER, DEFAULT_PANEL_ORDER,
};
pub use special::{
    erf, erf_inv, erfc, normal_cdf, normal_interval, normal_pdf, normal_quantile, normal_sf,
};
pub(crate) use special::SQRT_2PI;
