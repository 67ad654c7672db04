//! Reverse-mode differentiation over the tensor kernels, the weighted
//! categorical cross-entropy, Adam and the learning-rate schedule.

mod adam;
mod checkpoint;
mod graph;
mod loss;
mod params;
mod schedule;

pub use adam::Adam;
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use graph::{Gradients, Graph, NodeId};
pub use loss::{cce_loss, cce_loss_grad, ClassWeightMode, LossConfig};
pub use params::{ParamId, ParamStore, Parameter};
pub use schedule::LrSchedule;
