use rand::Rng;

use super::{Stage, Trajectory, TrajectoryOf};
use crate::env::{BackwardKind, Environment};
use crate::error::{Error, Result};
use crate::numkit::{masked_log_softmax, Matrix, Network, ParamSet, Tape};
use crate::rewards::RewardModel;

/// Rows per network call when no tape is kept.
const CHUNK_ROWS: usize = 8192;

fn log_probs_row(logits: &[f64], mask: &[bool], out: &mut [f64], what: &str) -> Result<()> {
    if !mask.iter().any(|&m| m) {
        return Err(Error::Env(format!("{what}: no valid action")));
    }
    masked_log_softmax(logits, mask, out);
    Ok(())
}

/// Softmax over the masked forward logits of `stage` at `s`.
pub fn masked_policy_distribution<E: Environment>(stage: &Stage, env: &E, s: &E::State) -> Result<Vec<f64>> {
    let mask = env.forward_mask(s);
    let logits = stage.pf.infer(&stage.params, env.forward_input(&[s]))?;
    let mut lp = vec![0.0; mask.len()];
    log_probs_row(logits.row(0), &mask, &mut lp, "forward policy")?;
    Ok(lp.into_iter().map(f64::exp).collect())
}

/// Draws from `(1 − ε)·exp(logp) + ε·Uniform(valid)` by inversion of `u ∈ [0, 1)`.
pub fn draw_action(logp: &[f64], mask: &[bool], eps: f64, u: f64) -> usize {
    let n_valid = mask.iter().filter(|&&m| m).count() as f64;
    let mut acc = 0.0;
    let mut last = 0;
    for (a, (&lp, &m)) in logp.iter().zip(mask).enumerate() {
        if !m {
            continue;
        }
        let q = if eps > 0.0 {
            (1.0 - eps) * lp.exp() + eps / n_valid
        } else {
            lp.exp()
        };
        acc += q;
        last = a;
        if u < acc {
            return a;
        }
    }
    last
}

struct Partial<S> {
    states: Vec<S>,
    actions: Vec<usize>,
    log_p: f64,
}

/// `n` forward rollouts from the initial state with ε-mixed action choice.
///
/// One uniform draw is consumed per trajectory per step, in batch order.
pub fn sample_forward<E, R>(
    stage: &Stage,
    env: &E,
    reward: Option<&dyn RewardModel<E::Terminal>>,
    n: usize,
    eps: f64,
    rng: &mut R,
) -> Result<Vec<TrajectoryOf<E>>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    if !(0.0..=1.0).contains(&eps) {
        return Err(Error::config("train.epsilon", format!("must lie in [0, 1], got {eps}")));
    }
    let s0 = env.initial_state();
    let mut parts: Vec<Partial<E::State>> = (0..n)
        .map(|_| Partial {
            states: vec![s0.clone()],
            actions: Vec::new(),
            log_p: 0.0,
        })
        .collect();
    let mut active: Vec<usize> = if env.is_terminal(&s0) { Vec::new() } else { (0..n).collect() };
    let k = env.num_actions();
    let mut lp = vec![0.0; k];
    while !active.is_empty() {
        let logits = {
            let refs: Vec<&E::State> = active.iter().map(|&i| parts[i].states.last().unwrap()).collect();
            stage.pf.infer(&stage.params, env.forward_input(&refs))?
        };
        for (row, &i) in active.iter().enumerate() {
            let p = &mut parts[i];
            let s = p.states.last().unwrap();
            let mask = env.forward_mask(s);
            log_probs_row(logits.row(row), &mask, &mut lp, "forward rollout")?;
            let a = draw_action(&lp, &mask, eps, rng.random::<f64>());
            p.log_p += lp[a];
            let next = env.step(s, a)?;
            p.states.push(next);
            p.actions.push(a);
        }
        active.retain(|&i| !env.is_terminal(parts[i].states.last().unwrap()));
    }
    parts
        .into_iter()
        .map(|p| {
            let terminal = env.terminal(p.states.last().unwrap());
            let log_reward = match reward {
                Some(r) => r.log_reward(&terminal)?,
                None => f64::NAN,
            };
            Ok(Trajectory {
                states: p.states,
                actions: p.actions,
                log_pf: p.log_p,
                log_pb: 0.0,
                terminal,
                log_reward,
            })
        })
        .collect()
}

/// One backward rollout per entry of `xs`, returned in forward order with `log_pf` filled in.
///
/// Learned backward policies consume one uniform draw per trajectory per step;
/// deterministic ones consume none.
pub fn sample_backward<E, R>(stage: &Stage, env: &E, xs: &[E::Terminal], rng: &mut R) -> Result<Vec<TrajectoryOf<E>>>
where
    E: Environment,
    R: Rng + ?Sized,
{
    let mut parts: Vec<Partial<E::State>> = xs
        .iter()
        .map(|x| Partial {
            states: vec![env.terminal_state(x)],
            actions: Vec::new(),
            log_p: 0.0,
        })
        .collect();
    let mut active: Vec<usize> = (0..xs.len())
        .filter(|&i| !env.is_initial(&parts[i].states[0]))
        .collect();
    let k = env.num_actions();
    let mut lp = vec![0.0; k];
    let kind = env.backward_kind();
    while !active.is_empty() {
        let logits = match (kind, &stage.pb) {
            (BackwardKind::Learned, Some(pb)) => {
                let refs: Vec<&E::State> = active.iter().map(|&i| parts[i].states.last().unwrap()).collect();
                Some(pb.infer(&stage.params, env.backward_input(&refs))?)
            }
            (BackwardKind::Learned, None) => {
                return Err(Error::Usage("environment needs a learned backward policy".into()))
            }
            (BackwardKind::Deterministic, _) => None,
        };
        for (row, &i) in active.iter().enumerate() {
            let p = &mut parts[i];
            let s = p.states.last().unwrap();
            let mask = env.backward_mask(s);
            let a = match &logits {
                Some(l) => {
                    log_probs_row(l.row(row), &mask, &mut lp, "backward rollout")?;
                    let a = draw_action(&lp, &mask, 0.0, rng.random::<f64>());
                    p.log_p += lp[a];
                    a
                }
                None => unique_action(&mask)?,
            };
            let prev = env.step_back(s, a)?;
            p.states.push(prev);
            p.actions.push(a);
        }
        active.retain(|&i| !env.is_initial(parts[i].states.last().unwrap()));
    }
    let mut out: Vec<TrajectoryOf<E>> = parts
        .into_iter()
        .zip(xs)
        .map(|(mut p, x)| {
            p.states.reverse();
            p.actions.reverse();
            Trajectory {
                states: p.states,
                actions: p.actions,
                log_pf: f64::NAN,
                log_pb: p.log_p,
                terminal: x.clone(),
                log_reward: f64::NAN,
            }
        })
        .collect();
    let (log_pf, _) = trajectory_log_pf(stage, env, &out, false)?;
    for (t, lp) in out.iter_mut().zip(log_pf) {
        t.log_pf = lp;
    }
    Ok(out)
}

fn unique_action(mask: &[bool]) -> Result<usize> {
    let mut it = mask.iter().enumerate().filter(|(_, &m)| m).map(|(a, _)| a);
    match (it.next(), it.next()) {
        (Some(a), None) => Ok(a),
        _ => Err(Error::Env("deterministic backward needs exactly one valid parent".into())),
    }
}

/// The single trajectory ending in `x` for environments with deterministic backward.
pub fn unique_backward_trajectory<E: Environment>(stage: &Stage, env: &E, x: &E::Terminal) -> Result<TrajectoryOf<E>> {
    if env.backward_kind() != BackwardKind::Deterministic {
        return Err(Error::Usage("unique backward path needs deterministic backward".into()));
    }
    // Deterministic backward never draws from the generator.
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
    Ok(sample_backward(stage, env, std::slice::from_ref(x), &mut rng)?.remove(0))
}

/// Recorded passes of one policy network over a batch, kept for the reverse pass.
pub struct PolicyPass {
    pub(crate) chunks: Vec<PassChunk>,
}

pub(crate) struct PassChunk {
    pub(crate) tape: Tape,
    pub(crate) probs: Matrix,
    /// `(trajectory index, chosen action)` per row.
    pub(crate) rows: Vec<(usize, usize)>,
}

/// Log-probability of each `(state, action)` row, summed per trajectory in row order.
fn policy_pass<S>(
    net: &Network,
    params: &ParamSet,
    rows: Vec<(usize, &S, Vec<bool>, usize)>,
    n_traj: usize,
    input: impl Fn(&[&S]) -> crate::numkit::NetInput,
    keep: bool,
    what: &str,
) -> Result<(Vec<f64>, Option<PolicyPass>)> {
    let mut sums = vec![0.0; n_traj];
    let mut chunks = Vec::new();
    let k = net.out_dim();
    let chunk_rows = if keep { usize::MAX } else { CHUNK_ROWS };
    let mut start = 0;
    while start < rows.len() {
        let end = rows.len().min(start.saturating_add(chunk_rows));
        let slice = &rows[start..end];
        let refs: Vec<&S> = slice.iter().map(|r| r.1).collect();
        let (logits, tape) = net.forward(params, input(&refs))?;
        let mut probs = Matrix::zeros(slice.len(), k);
        for (r, (i, _, mask, a)) in slice.iter().enumerate() {
            let out = probs.row_mut(r);
            log_probs_row(logits.row(r), mask, out, what)?;
            sums[*i] += out[*a];
            if keep {
                out.iter_mut().for_each(|v| *v = v.exp());
            }
        }
        if keep {
            chunks.push(PassChunk {
                tape,
                probs,
                rows: slice.iter().map(|r| (r.0, r.3)).collect(),
            });
        }
        start = end;
    }
    Ok((sums, keep.then_some(PolicyPass { chunks })))
}

/// `log P_F(τ)` for each trajectory, summed from the first step to the last.
pub fn trajectory_log_pf<E: Environment>(
    stage: &Stage,
    env: &E,
    trajs: &[TrajectoryOf<E>],
    keep: bool,
) -> Result<(Vec<f64>, Option<PolicyPass>)> {
    let rows = trajs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| {
            t.actions
                .iter()
                .enumerate()
                .map(move |(step, &a)| (i, &t.states[step], a))
        })
        .map(|(i, s, a)| (i, s, env.forward_mask(s), a))
        .collect();
    policy_pass(&stage.pf, &stage.params, rows, trajs.len(), |r| env.forward_input(r), keep, "forward policy")
}

/// `log P_B(τ | x)` for each trajectory, summed from the terminal backwards.
pub fn trajectory_log_pb<E: Environment>(
    stage: &Stage,
    env: &E,
    trajs: &[TrajectoryOf<E>],
    keep: bool,
) -> Result<(Vec<f64>, Option<PolicyPass>)> {
    match (env.backward_kind(), &stage.pb) {
        (BackwardKind::Deterministic, _) => Ok((vec![0.0; trajs.len()], None)),
        (BackwardKind::Learned, None) => Err(Error::Usage("environment needs a learned backward policy".into())),
        (BackwardKind::Learned, Some(pb)) => {
            let rows = trajs
                .iter()
                .enumerate()
                .flat_map(|(i, t)| {
                    (0..t.actions.len())
                        .rev()
                        .map(move |step| (i, &t.states[step + 1], t.actions[step]))
                })
                .map(|(i, s, a)| (i, s, env.backward_mask(s), a))
                .collect();
            policy_pass(pb, &stage.params, rows, trajs.len(), |r| env.backward_input(r), keep, "backward policy")
        }
    }
}

/// Forward and backward log-probabilities of a batch, optionally with tapes for training.
pub struct Scored {
    pub log_pf: Vec<f64>,
    pub log_pb: Vec<f64>,
    pub(crate) pf: Option<PolicyPass>,
    pub(crate) pb: Option<PolicyPass>,
}

pub fn score<E: Environment>(stage: &Stage, env: &E, trajs: &[TrajectoryOf<E>], keep: bool) -> Result<Scored> {
    let (log_pf, pf) = trajectory_log_pf(stage, env, trajs, keep)?;
    let (log_pb, pb) = trajectory_log_pb(stage, env, trajs, keep)?;
    Ok(Scored { log_pf, log_pb, pf, pb })
}

/// `log Z + log P_F(τ) − log P_B(τ | x)`.
pub fn induced_log_estimate(log_z: f64, log_pf: f64, log_pb: f64) -> f64 {
    (log_z + log_pf) - log_pb
}
