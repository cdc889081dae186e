//! Minimal dense-network substrate: tensors, linear layers, MLPs, SGD, and
//! the schedules that drive them. All math is f64.

pub mod linear;
pub mod mlp;
pub mod schedule;
pub mod sgd;
pub mod tensor;

pub use linear::{LayerGrads, LinearLayer};
pub use mlp::{Activation, Gradients, MlpNetwork, Topology};
pub use schedule::{cosine_lr, EmaMode, EmaSchedule};
pub use sgd::{SgdConfig, SgdState};
pub use tensor::{dot, l2_norm, Tensor};
