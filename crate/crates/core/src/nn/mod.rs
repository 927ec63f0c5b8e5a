//! From-scratch sequential neural networks: dense, 1-D/2-D/3-D convolution,
//! max pooling, batch normalization, ReLU and softmax, trained with SGD on
//! the cross-entropy loss.

mod error;
pub mod gradcheck;
mod layer;
mod model;
pub mod ops;
mod serialize;
mod tensor;
mod train;

pub use error::{NnError, Result};
pub use layer::{infer_shapes, LayerSpec, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM};
pub use model::{argmax, sgd_step, Gradients, Model, ParamSet, Prediction, FORMAT_VERSION};
pub use ops::{
    batchnorm_forward, conv_forward, dense_forward, maxpool_forward, softmax_cross_entropy, BnMode, RunningStats,
};
pub use serialize::{from_text, load_model, save_model, to_text};
pub use tensor::{Tensor, MAX_RANK};
pub use train::{evaluate, train, Dataset, EpochStats, TrainConfig, TrainOutcome};
