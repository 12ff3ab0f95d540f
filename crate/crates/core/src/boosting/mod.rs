//! Ensembles of frozen stages, residual-reward estimation, the boosted losses and
//! two-step ensemble sampling.

mod loss;

pub use loss::{boosted_loss, boosted_term, clamp_alpha, effective_delta, nabla_loss, nabla_term, select_loss};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::env::{BackwardKind, Environment, PolicyConfig};
use crate::error::{Error, Result};
use crate::gfn::{
    induced_log_estimate, sample_backward, sample_forward, train_step_with, Stage, StepStats, TrainConfig, TrajectoryOf,
};
use crate::numkit::{log_mean_exp, log_sum_exp};
use crate::rewards::RewardModel;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub alpha: f64,
    /// Floor on the boosted denominator, in reward space.
    pub delta: f64,
    /// Backward samples per member when estimating `R_old` during training.
    pub k_train: usize,
    /// Backward samples per member at evaluation.
    pub b_eval: usize,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            alpha: 1.0,
            delta: 1e-12,
            k_train: 1,
            b_eval: 10,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("boost.alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.delta > 0.0) {
            return Err(Error::config("boost.delta", "must be > 0"));
        }
        if self.k_train == 0 {
            return Err(Error::config("boost.k_train", "must be >= 1"));
        }
        if self.b_eval == 0 {
            return Err(Error::config("boost.b_eval", "must be >= 1"));
        }
        Ok(())
    }
}

/// Frozen stages plus the one being trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub frozen: Vec<Stage>,
    pub active: Stage,
}

impl Ensemble {
    pub fn new(active: Stage) -> Self {
        Ensemble {
            frozen: Vec::new(),
            active,
        }
    }

    /// Frozen stages in order, then the active one.
    pub fn stages(&self) -> Vec<&Stage> {
        self.frozen.iter().chain(std::iter::once(&self.active)).collect()
    }

    pub fn len(&self) -> usize {
        self.frozen.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Freezes the active stage and starts a new one drawn from `seed`.
    pub fn freeze_and_spawn<E: Environment>(&mut self, env: &E, policy: &PolicyConfig, seed: u64) -> Result<()> {
        let next = Stage::new(env, policy, self.len(), seed)?;
        let mut old = std::mem::replace(&mut self.active, next);
        old.frozen = true;
        self.frozen.push(old);
        Ok(())
    }
}

/// `R_old(x)` with the contribution of every frozen member.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualEstimate<X> {
    pub terminal: X,
    pub log_rold: f64,
    pub members: Vec<f64>,
}

/// `log R̂_k(x)` for each `x`: log of the mean of `Z P_F(τ) / P_B(τ | x)` over
/// `k` backward samples. Deterministic-backward members are exact and draw nothing.
pub fn estimate_member_reward<E, R>(member: &Stage, env: &E, xs: &[E::Terminal], k: usize, rng: &mut R) -> Result<Vec<f64>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    if k == 0 {
        return Err(Error::Usage("need at least one backward sample".into()));
    }
    let log_z = member.log_z();
    if env.backward_kind() == BackwardKind::Deterministic {
        let trajs = sample_backward(member, env, xs, rng)?;
        return Ok(trajs.iter().map(|t| induced_log_estimate(log_z, t.log_pf, t.log_pb)).collect());
    }
    let repeated: Vec<E::Terminal> = xs.iter().flat_map(|x| std::iter::repeat_n(x.clone(), k)).collect();
    let trajs = sample_backward(member, env, &repeated, rng)?;
    let est: Vec<f64> = trajs.iter().map(|t| induced_log_estimate(log_z, t.log_pf, t.log_pb)).collect();
    est.chunks(k).map(log_mean_exp).collect()
}

/// `R_old(x) = Σ_k R̂_k(x)` over `members`; `−∞` when there are none.
pub fn estimate_rold<E, R>(
    members: &[&Stage],
    env: &E,
    xs: &[E::Terminal],
    k: usize,
    rng: &mut R,
) -> Result<Vec<ResidualEstimate<E::Terminal>>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let per_member = members
        .iter()
        .map(|m| estimate_member_reward(m, env, xs, k, rng))
        .collect::<Result<Vec<_>>>()?;
    xs.iter()
        .enumerate()
        .map(|(i, x)| {
            let contrib: Vec<f64> = per_member.iter().map(|m| m[i]).collect();
            let log_rold = if contrib.is_empty() {
                f64::NEG_INFINITY
            } else {
                log_sum_exp(&contrib)?
            };
            Ok(ResidualEstimate {
                terminal: x.clone(),
                log_rold,
                members: contrib,
            })
        })
        .collect()
}

/// Source of `log R_old` for the terminals of a training batch.
pub trait ResidualModel<E: Environment> {
    fn log_rold(&mut self, env: &E, trajs: &[TrajectoryOf<E>], rng: &mut dyn RngCore) -> Result<Vec<f64>>;
}

/// Estimates from frozen members with `k` backward samples each.
pub struct FrozenResidual<'a> {
    pub members: &'a [Stage],
    pub k: usize,
}

impl<E: Environment> ResidualModel<E> for FrozenResidual<'_> {
    fn log_rold(&mut self, env: &E, trajs: &[TrajectoryOf<E>], rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        if self.members.is_empty() {
            return Ok(vec![f64::NEG_INFINITY; trajs.len()]);
        }
        let xs: Vec<E::Terminal> = trajs.iter().map(|t| t.terminal.clone()).collect();
        let members: Vec<&Stage> = self.members.iter().collect();
        Ok(estimate_rold(&members, env, &xs, self.k, rng)?
            .into_iter()
            .map(|r| r.log_rold)
            .collect())
    }
}

/// A known `log R_old`, bypassing estimation.
pub struct InjectedResidual<F>(pub F);

impl<E, F> ResidualModel<E> for InjectedResidual<F>
where
    E: Environment,
    F: Fn(&E::Terminal) -> f64,
{
    fn log_rold(&mut self, _env: &E, trajs: &[TrajectoryOf<E>], _rng: &mut dyn RngCore) -> Result<Vec<f64>> {
        Ok(trajs.iter().map(|t| (self.0)(&t.terminal)).collect())
    }
}

/// One boosted step on `active` against the residual left by `residual`.
///
/// Training rollouts draw from `rng`; residual estimation draws from `residual_rng`.
#[allow(clippy::too_many_arguments)]
pub fn boosted_train_step<E, R>(
    active: &mut Stage,
    env: &E,
    reward: &dyn RewardModel<E::Terminal>,
    cfg: &TrainConfig,
    boost: &BoostConfig,
    residual: &mut dyn ResidualModel<E>,
    rng: &mut R,
    residual_rng: &mut dyn RngCore,
) -> Result<StepStats>
where
    E: Environment,
    R: Rng + ?Sized,
{
    train_step_with(active, env, reward, cfg, rng, |trajs, u| {
        let rold = residual.log_rold(env, trajs, residual_rng)?;
        trajs
            .iter()
            .zip(u)
            .zip(rold)
            .map(|((t, &u), r)| select_loss(u, t.log_reward, r, boost))
            .collect()
    })
}

/// Stage-selection probabilities `Z_i / Σ_j Z_j`.
pub fn stage_weights(stages: &[&Stage]) -> Result<Vec<f64>> {
    let lz: Vec<f64> = stages.iter().map(|s| s.log_z()).collect();
    if let Some(i) = lz.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("stage {i} log_z"), format!("non-finite value {}", lz[i])));
    }
    let total = log_sum_exp(&lz)?;
    Ok(lz.iter().map(|v| (v - total).exp()).collect())
}

/// `count` terminals from the two-step sampler: a stage drawn with probability
/// `∝ Z_i`, then an ε = 0 rollout of that stage. Returns `(stage index, terminal)`.
pub fn ensemble_sample<E, R>(stages: &[&Stage], env: &E, count: usize, rng: &mut R) -> Result<Vec<(usize, E::Terminal)>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let w = stage_weights(stages)?;
    let picks: Vec<usize> = (0..count)
        .map(|_| {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, wi) in w.iter().enumerate() {
                acc += wi;
                if u < acc {
                    return i;
                }
            }
            w.len() - 1
        })
        .collect();
    let mut out: Vec<Option<(usize, E::Terminal)>> = vec![None; count];
    for (i, stage) in stages.iter().enumerate() {
        let slots: Vec<usize> = (0..count).filter(|&j| picks[j] == i).collect();
        if slots.is_empty() {
            continue;
        }
        let trajs = sample_forward(stage, env, None, slots.len(), 0.0, rng)?;
        for (slot, t) in slots.into_iter().zip(trajs) {
            out[slot] = Some((i, t.terminal));
        }
    }
    Ok(out.into_iter().map(|o| o.expect("every slot sampled")).collect())
}
