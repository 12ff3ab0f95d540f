//! Exhaustive computations on small instances, used as ground truth in tests.

use std::collections::{BTreeMap, BTreeSet};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::gfn::{induced_log_estimate, score, Stage, Trajectory, TrajectoryOf};
use crate::numkit::log_sum_exp;

pub const TRAJECTORY_CAP: usize = 1_000_000;

/// Every mask-valid trajectory from the initial state, depth first in action order.
///
/// `log_pf`, `log_pb` and `log_reward` are left `NaN`.
pub fn enumerate_all_trajectories<E: Environment>(env: &E, cap: usize) -> Result<Vec<TrajectoryOf<E>>> {
    let mut out = Vec::new();
    let mut states = vec![env.initial_state()];
    let mut actions = Vec::new();
    walk(env, cap, &mut states, &mut actions, &mut out)?;
    Ok(out)
}

fn walk<E: Environment>(
    env: &E,
    cap: usize,
    states: &mut Vec<E::State>,
    actions: &mut Vec<usize>,
    out: &mut Vec<TrajectoryOf<E>>,
) -> Result<()> {
    let s = states.last().expect("path is never empty").clone();
    if env.is_terminal(&s) {
        if out.len() == cap {
            return Err(Error::InstanceTooLarge { cap });
        }
        out.push(Trajectory {
            states: states.clone(),
            actions: actions.clone(),
            log_pf: f64::NAN,
            log_pb: f64::NAN,
            terminal: env.terminal(&s),
            log_reward: f64::NAN,
        });
        return Ok(());
    }
    for (a, ok) in env.forward_mask(&s).into_iter().enumerate() {
        if !ok {
            continue;
        }
        states.push(env.step(&s, a)?);
        actions.push(a);
        walk(env, cap, states, actions, out)?;
        states.pop();
        actions.pop();
    }
    Ok(())
}

/// Trajectories with `log_pf` and `log_pb` filled in under `stage`.
pub fn scored_trajectories<E: Environment>(stage: &Stage, env: &E) -> Result<Vec<TrajectoryOf<E>>> {
    let mut trajs = enumerate_all_trajectories(env, TRAJECTORY_CAP)?;
    let sc = score(stage, env, &trajs, false)?;
    for (t, (pf, pb)) in trajs.iter_mut().zip(sc.log_pf.iter().zip(&sc.log_pb)) {
        t.log_pf = *pf;
        t.log_pb = *pb;
    }
    Ok(trajs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExactMarginals<X> {
    /// `P_F(x)` for every reachable terminal, including those with zero mass.
    pub p: BTreeMap<X, f64>,
    pub trajectory_count: usize,
    /// Terminals with `P_F(x) > 0`.
    pub support: BTreeSet<X>,
}

pub fn exact_marginals<E: Environment>(stage: &Stage, env: &E) -> Result<ExactMarginals<E::Terminal>> {
    let trajs = scored_trajectories(stage, env)?;
    let mut p: BTreeMap<E::Terminal, f64> = BTreeMap::new();
    for t in &trajs {
        *p.entry(t.terminal.clone()).or_insert(0.0) += t.log_pf.exp();
    }
    let support = p.iter().filter(|(_, &v)| v > 0.0).map(|(x, _)| x.clone()).collect();
    Ok(ExactMarginals {
        p,
        trajectory_count: trajs.len(),
        support,
    })
}

/// `p̂(x) = Σ_i Z_i P_F^{(i)}(x) / Σ_j Z_j`.
pub fn exact_mixture<E: Environment>(stages: &[&Stage], env: &E) -> Result<BTreeMap<E::Terminal, f64>> {
    let lz: Vec<f64> = stages.iter().map(|s| s.log_z()).collect();
    let total = log_sum_exp(&lz)?;
    let mut out: BTreeMap<E::Terminal, f64> = BTreeMap::new();
    for (s, l) in stages.iter().zip(&lz) {
        let w = (l - total).exp();
        for (x, p) in exact_marginals(s, env)?.p {
            *out.entry(x).or_insert(0.0) += w * p;
        }
    }
    Ok(out)
}

/// Mean and variance of `R̂(x; τ) = Z P_F(τ) / P_B(τ | x)` under `τ ~ P_B(· | x)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EstimatorMoments {
    pub mean: f64,
    pub variance: f64,
}

/// Exact estimator moments for every reachable terminal.
pub fn exact_estimator_distribution<E: Environment>(
    stage: &Stage,
    env: &E,
) -> Result<BTreeMap<E::Terminal, EstimatorMoments>> {
    let trajs = scored_trajectories(stage, env)?;
    let log_z = stage.log_z();
    let mut groups: BTreeMap<E::Terminal, Vec<(f64, f64)>> = BTreeMap::new();
    for t in &trajs {
        let r = induced_log_estimate(log_z, t.log_pf, t.log_pb).exp();
        groups.entry(t.terminal.clone()).or_default().push((t.log_pb.exp(), r));
    }
    Ok(groups
        .into_iter()
        .map(|(x, g)| {
            let mean: f64 = g.iter().map(|(w, r)| w * r).sum();
            let variance: f64 = g.iter().map(|(w, r)| w * (r - mean).powi(2)).sum();
            (x, EstimatorMoments { mean, variance })
        })
        .collect())
}
