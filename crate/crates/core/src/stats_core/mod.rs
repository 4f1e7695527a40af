//! Scalar and small-matrix numerical primitives shared by every module.

mod bivariate;
mod matrix;
mod normal;
mod quadrature;
mod rng;

pub use bivariate::{bivariate_normal_cdf, BVN_ORDER};
pub use matrix::{cholesky, dot, symmetric_pinv, Matrix};
pub use normal::{
    std_normal_cdf, std_normal_pdf, std_normal_quantile, truncated_normal_draw, TAIL_SATURATION,
};
pub(crate) use normal::quantile_unchecked;
pub use quadrature::QuadratureRule;
pub use rng::{RngStream, StreamCursor};
