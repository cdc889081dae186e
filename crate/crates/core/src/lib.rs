//! Desk-scale self-supervised training engine: BYOL towers over small MLPs,
//! with closed-form per-batch influence scores used to mine additional
//! positive pairs during training.
//!
//! The crate is organised bottom-up:
//!
//! * [`nn`] — tensors, linear layers, MLPs, SGD, schedules
//! * [`byol`] — the loss, the online/target tower pair, the training loop
//! * [`tracin`] — closed-form last-layer influence scores and their oracles
//! * [`select`] — additional-positive selection policies
//! * [`data`] — synthetic blobs, IDX loading, augmentation, view building
//! * [`eval`] — linear probe, kNN, and multi-policy comparison
//! * [`config`] / [`checkpoint`] — run configuration and model persistence

pub mod byol;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod nn;
pub mod rng;
pub mod select;
pub mod tracin;

pub use byol::{byol_loss, Architecture, ByolTowers, Positives, StepReport, TrainLog};
pub use config::RunConfig;
pub use data::{BatchViews, DataMeta, Dataset, SampleShape};
pub use error::{Error, Result};
pub use nn::{Activation, MlpNetwork, Tensor, Topology};
pub use select::{PolicyKind, SelectionPolicy, SelectionReport};
pub use tracin::{TracInInputs, TracInMatrix};
