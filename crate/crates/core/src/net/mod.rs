//! The point-cloud face network: sampling plans, forward graph, training
//! loop with checkpoint selection, and inference.

mod embed;
mod meta;
mod model;
mod plan;
mod spec;
mod train;

pub use embed::{nose_tip_heuristic, prepare_cloud, Embedder};
pub use meta::CheckpointMeta;
pub use model::{forward, init_params, ForwardOutput, BN_UPDATES};
pub use plan::{plan_cloud, CloudPlan, LayerPlan};
pub use spec::{LayerSpec, NetworkSpec, ATTRIBUTE_CHANNELS, EMBEDDING_DIM};
pub use train::{
    fit, plan_batch, resample, step_on_plans, train_step, verify, BestState, EpochRecord, FitObserver,
    FitState, StepId, TrainConfig, TrainSample, VerificationSet,
};
