//! Model, optimizers, and the teacher/student training protocol.

pub mod mlp;
pub mod optim;
pub mod trainer;

pub use mlp::{ForwardCache, MlpModel, ParameterVector};
pub use optim::{Optimizer, OptimizerKind};
pub use trainer::{
    finetune, group_anchors_by_cluster, sample_anchor_batch, train_teacher, FinetuneOutput,
    StepRecord, TeacherArtifacts, TrainConfig,
};
