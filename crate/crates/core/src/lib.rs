//! CrossNet: reference-based super-resolution with cross-scale warping.

pub mod checkpoint;
pub mod config;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod flow;
pub mod graph;
pub mod imaging;
pub mod io;
pub mod kernels;
pub mod lightfield;
pub mod model;
pub mod objectives;
pub mod optim;
pub mod params;
pub mod report;
pub mod synthetic;
pub mod tensor;
pub mod tiling;
pub mod train;

pub use error::{CrossNetError, Result};
pub use graph::{Grads, Graph, Var};
pub use imaging::{FeatureMap, FlowField, Image};
pub use model::{forward, forward_iw, init_params, CrossNetConfig, Variant};
pub use params::{count_params, ParameterStore};
pub use tensor::Tensor;
