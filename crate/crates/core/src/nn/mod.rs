//! Encrypted local-loss MLP training.

pub mod activation;
pub mod block;
pub mod container;
pub mod depth;
pub mod model;
pub mod schedule;
pub mod shadow;
pub mod update;

pub use activation::{loss_gradient, poly_relu, poly_relu_prime, rss};
pub use block::{BlockGradients, Derivative, ForwardTrace, LocalLossBlock};
pub use depth::{closed_form, depth_audit, DepthReport, LayerDepth};
pub use model::{
    argmax, init_weights, BlockWeights, EncryptedMlp, EncryptedSample, Hyperparams, IterationStats, TrainOptions,
    DEFAULT_MOMENTUM,
};
pub use schedule::BatchSchedule;
pub use shadow::ShadowMlp;
pub use update::{update_weights, UpdateRule};
