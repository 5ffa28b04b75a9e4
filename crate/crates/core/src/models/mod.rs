//! RPNet-W (classification) and RPNet-D (segmentation) networks, their
//! presets, training and evaluation.

mod eval;
mod net;
pub mod ops;
mod spec;
mod train;

pub use eval::{
    accuracy, argmax_rows, evaluate, mean_iou, predict_dataset, score, vote_predict, vote_probs, EvalResult,
    NearestCentroid, VOTE_SCALE,
};
pub use net::{canonical_seed, BlockParams, ForwardCache, RpNet, RpNetParams};
pub use spec::{
    apply_overrides, build_preset, build_rpnet_d, build_rpnet_w, set_path, BlockKind, GraTemplate, HeadSpec,
    InputFeatures, ModelSpec, Operator, StageShape, StageSpec,
};
pub use train::{loss_and_grad, train_epoch, Target, TrainConfig};
