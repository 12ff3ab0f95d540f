use rand::Rng;
use serde::{Deserialize, Serialize};

use super::sampling::{sample_forward, score, induced_log_estimate, PolicyPass, Scored};
use super::{Stage, TrajectoryOf};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::numkit::{adamw_step, AdamWConfig, Matrix, Network, ParamSet};
use crate::rewards::RewardModel;

/// Which loss formula produced a term.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Tb,
    Boosted,
    Nabla,
    Clamped,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub tb: usize,
    pub boosted: usize,
    pub nabla: usize,
    pub clamped: usize,
}

impl BranchCounts {
    pub fn record(&mut self, b: Branch) {
        match b {
            Branch::Tb => self.tb += 1,
            Branch::Boosted => self.boosted += 1,
            Branch::Nabla => self.nabla += 1,
            Branch::Clamped => self.clamped += 1,
        }
    }
}

/// Per-trajectory loss and its derivative with respect to
/// `u = log Z + log P_F(τ) − log P_B(τ | x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossTerm {
    pub loss: f64,
    pub dl_du: f64,
    pub branch: Branch,
}

/// Trajectory balance term for a given `u`.
pub fn tb_term(u: f64, log_r: f64) -> LossTerm {
    let d = u - log_r;
    LossTerm {
        loss: d * d,
        dl_du: 2.0 * d,
        branch: Branch::Tb,
    }
}

/// `(log Z + log P_F − log R − log P_B)²`.
pub fn tb_loss(log_z: f64, log_pf: f64, log_pb: f64, log_r: f64) -> f64 {
    tb_term(induced_log_estimate(log_z, log_pf, log_pb), log_r).loss
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch: usize,
    pub epsilon: f64,
    pub opt: AdamWConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch == 0 {
            return Err(Error::config("train.batch", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::config("train.epsilon", "must lie in [0, 1]"));
        }
        self.opt.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub mean_loss: f64,
    pub mean_log_reward: f64,
    pub log_z: f64,
    pub branches: BranchCounts,
}

fn pass_gradients(net: &Network, params: &mut ParamSet, pass: &PolicyPass, coeffs: &[f64], sign: f64) -> Result<()> {
    for chunk in &pass.chunks {
        let k = chunk.probs.cols();
        let mut g = Matrix::zeros(chunk.rows.len(), k);
        for (r, &(i, a)) in chunk.rows.iter().enumerate() {
            let c = sign * coeffs[i];
            let row = g.row_mut(r);
            for (j, (gv, &p)) in row.iter_mut().zip(chunk.probs.row(r)).enumerate() {
                let onehot = if j == a { 1.0 } else { 0.0 };
                *gv = c * (onehot - p);
            }
        }
        net.backward(params, &chunk.tape, &g)?;
    }
    Ok(())
}

/// Adds `Σ_i coeffs[i] · ∂u_i/∂θ` into the gradient buffers of `stage`.
pub fn accumulate_gradients(stage: &mut Stage, scored: &Scored, coeffs: &[f64]) -> Result<()> {
    if let Some(pass) = &scored.pf {
        pass_gradients(&stage.pf, &mut stage.params, pass, coeffs, 1.0)?;
    }
    if let (Some(pass), Some(pb)) = (&scored.pb, &stage.pb) {
        pass_gradients(pb, &mut stage.params, pass, coeffs, -1.0)?;
    }
    let gz: f64 = coeffs.iter().sum();
    let iz = stage.log_z_index();
    stage.params.get_mut(iz).grad[0] += gz;
    Ok(())
}

/// One optimiser step on a fresh on-policy batch with a caller-supplied loss.
///
/// `loss_fn` receives the batch and `u` per trajectory and returns one term per
/// trajectory. The batch loss is the mean of the terms.
pub fn train_step_with<E, R, F>(
    stage: &mut Stage,
    env: &E,
    reward: &dyn RewardModel<E::Terminal>,
    cfg: &TrainConfig,
    rng: &mut R,
    mut loss_fn: F,
) -> Result<StepStats>
where
    E: Environment,
    R: Rng + ?Sized,
    F: FnMut(&[TrajectoryOf<E>], &[f64]) -> Result<Vec<LossTerm>>,
{
    if stage.frozen {
        return Err(Error::Frozen(stage.id));
    }
    let trajs = sample_forward(stage, env, Some(reward), cfg.batch, cfg.epsilon, rng)?;
    let scored = score(stage, env, &trajs, true)?;
    let log_z = stage.log_z();
    let u: Vec<f64> = scored
        .log_pf
        .iter()
        .zip(&scored.log_pb)
        .map(|(&pf, &pb)| induced_log_estimate(log_z, pf, pb))
        .collect();
    let terms = loss_fn(&trajs, &u)?;
    if terms.len() != trajs.len() {
        return Err(Error::Shape {
            context: "loss terms".into(),
            expected: trajs.len(),
            actual: terms.len(),
        });
    }
    let n = trajs.len() as f64;
    let mut branches = BranchCounts::default();
    let mut total = 0.0;
    let mut coeffs = Vec::with_capacity(terms.len());
    for (i, t) in terms.iter().enumerate() {
        if !t.loss.is_finite() || !t.dl_du.is_finite() {
            return Err(Error::numeric(
                format!("loss[{i}] ({:?})", t.branch),
                format!("loss {} grad {}; u {}; {}", t.loss, t.dl_du, u[i], trajs[i].dump()),
            ));
        }
        branches.record(t.branch);
        total += t.loss;
        coeffs.push(t.dl_du / n);
    }
    stage.params.zero_grad();
    accumulate_gradients(stage, &scored, &coeffs)?;
    adamw_step(&mut stage.params, &cfg.opt)?;
    let mean_log_reward = trajs.iter().map(|t| t.log_reward).sum::<f64>() / n;
    Ok(StepStats {
        mean_loss: total / n,
        mean_log_reward,
        log_z: stage.log_z(),
        branches,
    })
}

/// One trajectory balance step.
pub fn train_step<E, R>(
    stage: &mut Stage,
    env: &E,
    reward: &dyn RewardModel<E::Terminal>,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepStats>
where
    E: Environment,
    R: Rng + ?Sized,
{
    train_step_with(stage, env, reward, cfg, rng, |trajs, u| {
        Ok(trajs.iter().zip(u).map(|(t, &u)| tb_term(u, t.log_reward)).collect())
    })
}
