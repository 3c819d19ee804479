//! Three-stream shallow regression network over (u, v, strain) inputs:
//! forward and backward passes, SGD training, GradCAM and model files.

mod io;
mod model;
mod network;
mod train;

pub use io::{model_from_bytes, model_to_bytes, read_model, write_model, MODEL_MAGIC, MODEL_VERSION};
pub use model::{
    layer_of, layers, Gradients, LayerSpec, SoftNetModel, CONCAT_CHANNELS, FILTERS, FLAT_LEN, HIDDEN, KERNEL,
    PARAMETER_COUNT, POOL1_SIDE, POOL2_SIDE,
};
pub use network::{
    backward, forward, forward_from_concat, grad_cam, predict, sgd_step, train_step, Activations, GradCam,
};
pub use train::{
    augment, build_training_set, flip_input, predict_scores, predict_series, train, TrainConfig, TrainReport,
    TrainingSample, VideoSamples, AUGMENT_BLUR_RADIUS, AUGMENT_BLUR_SIGMA,
};
