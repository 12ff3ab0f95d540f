//! Policies, rollouts, trajectory log-probabilities and trajectory balance training.

mod sampling;
mod train;

pub use sampling::{
    draw_action, induced_log_estimate, masked_policy_distribution, sample_backward, sample_forward, score,
    trajectory_log_pb, trajectory_log_pf, unique_backward_trajectory, Scored,
};
pub use train::{
    accumulate_gradients, tb_loss, tb_term, train_step, train_step_with, Branch, BranchCounts, LossTerm, StepStats,
    TrainConfig,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::{BackwardKind, Environment, PolicyConfig};
use crate::error::{Error, Result};
use crate::numkit::{Network, ParamGroup, ParamSet};

pub const LOG_Z_NAME: &str = "log_z";

/// One ensemble member: forward policy, optional learned backward policy and `log Z`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub id: usize,
    pub params: ParamSet,
    pub pf: Network,
    pub pb: Option<Network>,
    log_z: usize,
    pub frozen: bool,
    /// Seed the initial parameters were drawn from.
    pub init_seed: u64,
}

impl Stage {
    /// Fresh stage with parameters drawn deterministically from `seed`; `log Z = 0`.
    pub fn new<E: Environment>(env: &E, policy: &PolicyConfig, id: usize, seed: u64) -> Result<Stage> {
        let arch = env.policy_arch(policy);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        let pf = Network::register(&mut params, "pf", arch.forward, ParamGroup::Forward, &mut rng)?;
        let pb = match (env.backward_kind(), arch.backward) {
            (BackwardKind::Learned, Some(a)) => {
                Some(Network::register(&mut params, "pb", a, ParamGroup::Backward, &mut rng)?)
            }
            (BackwardKind::Learned, None) => {
                return Err(Error::config("policy", "learned backward policy needs an architecture"))
            }
            (BackwardKind::Deterministic, _) => None,
        };
        let log_z = params.add(LOG_Z_NAME, ParamGroup::LogZ, vec![1], vec![0.0])?;
        Ok(Stage {
            id,
            params,
            pf,
            pb,
            log_z,
            frozen: false,
            init_seed: seed,
        })
    }

    /// Checks that a deserialised stage matches the networks `env` would build.
    pub fn check_compatible<E: Environment>(&self, env: &E, policy: &PolicyConfig) -> Result<()> {
        let arch = env.policy_arch(policy);
        Network::bind(&self.params, "pf", arch.forward)?;
        match (env.backward_kind(), arch.backward, &self.pb) {
            (BackwardKind::Learned, Some(a), Some(_)) => {
                Network::bind(&self.params, "pb", a)?;
            }
            (BackwardKind::Deterministic, _, None) => {}
            _ => return Err(Error::Usage("backward policy kind does not match the environment".into())),
        }
        if self.params.lookup(LOG_Z_NAME) != Some(self.log_z) {
            return Err(Error::Usage("stage has no log_z parameter".into()));
        }
        Ok(())
    }

    pub fn log_z(&self) -> f64 {
        self.params.get(self.log_z).value[0]
    }

    pub fn set_log_z(&mut self, v: f64) {
        self.params.get_mut(self.log_z).value[0] = v;
    }

    pub(crate) fn log_z_index(&self) -> usize {
        self.log_z
    }
}

/// One rollout. States run from `s_0` to the terminal state; `actions[t]` leads
/// from `states[t]` to `states[t + 1]`.
///
/// `log_pf` is measured under the unmixed forward policy, `log_pb` under the
/// backward policy (0 for deterministic backward). `log_reward` is `NaN` when
/// no reward was attached.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S, X> {
    pub states: Vec<S>,
    pub actions: Vec<usize>,
    pub log_pf: f64,
    pub log_pb: f64,
    pub terminal: X,
    pub log_reward: f64,
}

pub type TrajectoryOf<E> = Trajectory<<E as Environment>::State, <E as Environment>::Terminal>;

impl<S, X> Trajectory<S, X> {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

impl<S: std::fmt::Debug, X: std::fmt::Debug> Trajectory<S, X> {
    /// Multi-line description used in numeric abort messages.
    pub fn dump(&self) -> String {
        format!(
            "terminal {:?}; actions {:?}; log_pf {}; log_pb {}; log_reward {}; states {:?}",
            self.terminal, self.actions, self.log_pf, self.log_pb, self.log_reward, self.states
        )
    }
}
