//! Minimal feed-forward ConvNet: conv/max-pool/fully connected layers,
//! backpropagation, minibatch SGD with momentum and binary checkpoints.

pub mod checkpoint;
mod layers;
mod network;
mod optim;
mod train;

pub use layers::{conv2d, fully_connected, maxpool2, relu, softmax, Activation, ConvLayer, FcLayer};
pub use network::{
    backprop_gradients, Architecture, BatchGradients, Gradients, InMemoryPatches, Layer, Network,
    ParamGrad, PatchSource, Standardizer, Workspace, MIN_STD, MOTH_CLASS, NUM_CLASSES,
};
pub use optim::{
    apply_momentum_step, glorot_bound, glorot_uniform_init, sgd_momentum_step, TrainConfig,
};
pub use train::{evaluate, predict, predict_inputs, train, EpochStats, TrainOutcome};

mod tensor;
pub use tensor::Tensor;
