//! Dual-kernel convolutional classifiers for thyroid lobe CT crops, the
//! label algebra that turns two lobe diagnoses into one of sixteen gland
//! diagnoses, and the training and cross-validated evaluation pipeline.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod labelfuse;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use labelfuse::{GlandClass, LobeClass};
pub use model::{GlandModel, LobeClassifier, ModelConfig};
pub use tensor::{ConvSpec, Dims, Padding, Tensor4};
