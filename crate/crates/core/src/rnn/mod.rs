//! The bias-free Elman RNN language model and its training primitives.

mod bptt;
mod grads;
mod nce;
mod network;
mod params;
mod rmsprop;

pub use bptt::{bptt_accumulate, bptt_grads, BpttConfig, BpttOutput, Objective, DEFAULT_CLIP};
pub use grads::{BlockGrad, Gradients};
pub use nce::{
    logistic, nce_loss, nce_loss_from_scores, softplus, NceConfig, NceLoss, NoiseSampler,
    DEFAULT_NOISE_SAMPLES, NOISE_FLOOR,
};
pub use network::{
    forward_batch, forward_step, initial_state, log_partition, scores, softmax, softmax_prob,
    Network,
};
pub use params::{
    bottleneck_param_count, param_count, Activation, BlockKind, BottleneckParams, RnnParams,
    INIT_SCALE,
};
pub use rmsprop::{
    rmsprop_update, Accumulator, RmspropConfig, RmspropState, DEFAULT_EPSILON, DEFAULT_RHO,
};
