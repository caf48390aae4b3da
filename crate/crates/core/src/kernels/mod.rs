//! Numeric kernels behind the differentiable operators in [`crate::graph`].

pub mod conv;
pub(crate) mod gemm;
pub mod sample;

pub use conv::{ConvGeom, DECONV_KERNEL};
