//! Evaluation: lattice L1 against the normalised target and cumulative counts of
//! unique high-scoring sequences.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::{ensemble_sample, estimate_member_reward};
use crate::env::{Environment, GridEnv, SeqEnv, Sequence};
use crate::error::{Error, Result};
use crate::gfn::Stage;
use crate::numkit::log_sum_exp;
use crate::rewards::{GridRewardField, ProxyScorer};

/// Per-member `log R̂_k(x)` with `B` backward samples each; rows are members.
pub fn member_masses<E, R>(stages: &[&Stage], env: &E, xs: &[E::Terminal], b: usize, rng: &mut R) -> Result<Vec<Vec<f64>>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    stages.iter().map(|s| estimate_member_reward(s, env, xs, b, rng)).collect()
}

/// `log R̂(x) = log Σ_k R̂_k(x)`; `−∞` for an empty ensemble.
pub fn estimate_terminal_mass<E, R>(stages: &[&Stage], env: &E, xs: &[E::Terminal], b: usize, rng: &mut R) -> Result<Vec<f64>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let per = member_masses(stages, env, xs, b, rng)?;
    sum_members(&per, xs.len())
}

fn sum_members(per: &[Vec<f64>], n: usize) -> Result<Vec<f64>> {
    (0..n)
        .map(|i| {
            if per.is_empty() {
                return Ok(f64::NEG_INFINITY);
            }
            let col: Vec<f64> = per.iter().map(|m| m[i]).collect();
            log_sum_exp(&col)
        })
        .collect()
}

/// Normalises a log table to probabilities.
pub fn normalize_log(log_table: &[f64]) -> Result<Vec<f64>> {
    if log_table.iter().any(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(Error::Degenerate("log table has NaN or +inf entries".into()));
    }
    if log_table.iter().all(|v| *v == f64::NEG_INFINITY) {
        return Err(Error::Degenerate("estimated total mass is zero".into()));
    }
    let total = log_sum_exp(log_table)?;
    Ok(log_table.iter().map(|v| (v - total).exp()).collect())
}

fn normalize(table: &[f64], which: &str) -> Result<Vec<f64>> {
    if table.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Degenerate(format!("{which} has negative or non-finite entries")));
    }
    let z: f64 = table.iter().sum();
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::Degenerate(format!("{which} has total mass {z}")));
    }
    Ok(table.iter().map(|v| v / z).collect())
}

/// `(1/|X|) Σ_x |p(x) − q(x)|` after normalising both tables.
pub fn l1_metric(p_hat: &[f64], target: &[f64]) -> Result<f64> {
    if p_hat.len() != target.len() {
        return Err(Error::Shape {
            context: "l1 tables".into(),
            expected: target.len(),
            actual: p_hat.len(),
        });
    }
    let p = normalize(p_hat, "estimate")?;
    let q = normalize(target, "target")?;
    let n = p.len() as f64;
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).abs()).sum::<f64>() / n)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L1Report {
    pub epoch: u64,
    /// Normalised estimate, in terminal enumeration order.
    pub p_hat: Vec<f64>,
    pub l1: f64,
    pub b: usize,
    /// `log Σ_x R̂_k(x)` per member.
    pub member_log_z: Vec<f64>,
}

/// Estimates every terminal's mass from the ensemble and compares with the target.
pub fn evaluate_l1<R: Rng + ?Sized>(
    stages: &[&Stage],
    env: &GridEnv,
    field: &GridRewardField,
    b: usize,
    epoch: u64,
    rng: &mut R,
) -> Result<L1Report> {
    let xs = env.enumerate_terminals();
    let per = member_masses(stages, env, &xs, b, rng)?;
    let member_log_z = per.iter().map(|m| log_sum_exp(m)).collect::<Result<Vec<_>>>()?;
    let p_hat = normalize_log(&sum_members(&per, xs.len())?)?;
    let l1 = l1_metric(&p_hat, &field.target_distribution())?;
    Ok(L1Report {
        epoch,
        p_hat,
        l1,
        b,
        member_log_z,
    })
}

/// Unique sequences that ever reached the threshold.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HighRewardArchive {
    pub seen: BTreeSet<Sequence>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniqueCountReport {
    pub epoch: u64,
    pub cumulative: usize,
    pub new: usize,
    /// Distinct sequences of admissible length in this draw.
    pub sampled_unique: usize,
}

/// Samples `n` sequences from the ensemble at `ε = 0`, keeps lengths `1..=max_len`,
/// and adds every distinct one scoring at least `threshold` to `archive`.
#[allow(clippy::too_many_arguments)]
pub fn unique_high_reward<R: Rng + ?Sized>(
    stages: &[&Stage],
    env: &SeqEnv,
    scorer: &dyn ProxyScorer,
    n: usize,
    threshold: f64,
    archive: &mut HighRewardArchive,
    epoch: u64,
    rng: &mut R,
) -> Result<UniqueCountReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Usage(format!("threshold must lie in (0, 1), got {threshold}")));
    }
    let max_len = env.cfg.max_len;
    let distinct: BTreeSet<Sequence> = ensemble_sample(stages, env, n, rng)?
        .into_iter()
        .map(|(_, x)| x)
        .filter(|x| (1..=max_len).contains(&x.len()))
        .collect();
    let mut new = 0;
    for x in &distinct {
        if archive.seen.contains(x) {
            continue;
        }
        if scorer.score(x)? >= threshold {
            archive.seen.insert(x.clone());
            new += 1;
        }
    }
    Ok(UniqueCountReport {
        epoch,
        cumulative: archive.seen.len(),
        new,
        sampled_unique: distinct.len(),
    })
}
