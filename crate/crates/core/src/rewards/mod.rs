//! Reward functions for both environments.

mod grid;
mod seq;

pub use grid::{
    anchors_8g, anchors_moons, density_8g, density_moons, density_rings, gaussian_sum, grid_log_reward, GridFamily,
    GridRewardField, GRID_LAMBDA, MOONS_ANCHORS,
};
pub use seq::{
    seq_log_reward, MaxScorer, ProcessScorer, ProxyScorer, SeqReward, SeqRewardConfig, SyntheticScorer,
    DEFAULT_MOTIFS,
};

use crate::error::Result;

/// Log-reward over the terminals `X` of an environment.
pub trait RewardModel<X>: Send + Sync {
    fn log_reward(&self, x: &X) -> Result<f64>;
}

impl<X, F> RewardModel<X> for F
where
    F: Fn(&X) -> f64 + Send + Sync,
{
    fn log_reward(&self, x: &X) -> Result<f64> {
        Ok(self(x))
    }
}
