//! BYOL: online and target towers, the normalised regression loss, and the
//! training loop with optional mined additional positives.

pub mod loss;
pub mod towers;
pub mod trainer;

pub use loss::{byol_loss, byol_loss_grad_q, NORM_FLOOR};
pub use towers::{Architecture, ByolTowers};
pub use trainer::{
    pretrain, ByolEngine, NullObserver, Positives, StepRecord, StepReport, TrainLog, TrainObserver,
    TrainPlan,
};
