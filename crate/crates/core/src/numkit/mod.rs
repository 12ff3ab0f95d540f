//! Dense numerical kernel: parameter storage, the two policy network shapes
//! with their reverse pass, AdamW, and log-space helpers.

mod adamw;
mod features;
mod logspace;
mod matrix;
mod net;
mod params;

pub use adamw::{adamw_step, AdamWConfig};
pub use features::{fourier_time_features, sinusoidal_position};
pub(crate) use features::{write_fourier_time_features, write_sinusoidal_position};
pub use logspace::{
    log_add_exp, log_mean_exp, log_sum_exp, logit, masked_log_softmax, sigmoid, softplus, MASKED_LOGIT,
};
pub use matrix::Matrix;
pub use net::{Arch, NetInput, Network, Tape};
pub use params::{Param, ParamGroup, ParamSet};
