//! Acceptance criteria. Each test writes one `criterion N: PASS|FAIL` line to
//! stderr (bypassing capture) before asserting.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use bgfn::boosting::{boosted_train_step, select_loss, BoostConfig, FrozenResidual, InjectedResidual};
use bgfn::env::{Environment, GridEnv, GridPos, PolicyConfig, SeqConfig, SeqEnv};
use bgfn::eval::l1_metric;
use bgfn::gfn::{
    accumulate_gradients, induced_log_estimate, sample_backward, sample_forward, score, tb_term, train_step, Branch,
    LossTerm, Stage, TrainConfig, TrajectoryOf,
};
use bgfn::numkit::AdamWConfig;
use bgfn::oracle::{exact_estimator_distribution, exact_marginals, exact_mixture, scored_trajectories};
use bgfn::rewards::{GridFamily, GridRewardField, RewardModel, SeqReward, SeqRewardConfig, SyntheticScorer};
use bgfn::runner::{self, metrics, LossKind, Problem, RunConfig, RunState, Session};

fn report(n: u32, pass: bool, detail: &str) {
    let line = format!("criterion {n}: {} - {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn within(start: Instant, budget_s: u64) -> (bool, f64) {
    let t = start.elapsed();
    (t <= Duration::from_secs(budget_s), t.as_secs_f64())
}

fn grid_train_cfg(batch: usize, opt: AdamWConfig) -> TrainConfig {
    TrainConfig {
        batch,
        epsilon: 0.0,
        opt,
    }
}

#[test]
fn criterion_01_residual_focus_bit_equality() {
    let start = Instant::now();
    let env = GridEnv::new(7).unwrap();
    let field = GridRewardField::new(&env, GridFamily::Rings);
    let policy = PolicyConfig::default();
    let cfg = TrainConfig {
        batch: 64,
        epsilon: 0.1,
        opt: AdamWConfig::default(),
    };
    let boost = BoostConfig {
        alpha: 0.5,
        ..BoostConfig::default()
    };
    let mut tb = Stage::new(&env, &policy, 0, 10).unwrap();
    let mut bo = tb.clone();
    let mut rng_tb = ChaCha8Rng::seed_from_u64(11);
    let mut rng_bo = ChaCha8Rng::seed_from_u64(11);
    let mut residual_rng = ChaCha8Rng::seed_from_u64(12);
    let mut first_diff = None;
    for step in 0..500 {
        train_step(&mut tb, &env, &field, &cfg, &mut rng_tb).unwrap();
        let mut residual = FrozenResidual { members: &[], k: 1 };
        boosted_train_step(&mut bo, &env, &field, &cfg, &boost, &mut residual, &mut rng_bo, &mut residual_rng).unwrap();
        let same = tb.params.flat_values().iter().zip(bo.params.flat_values()).all(|(a, b)| a.to_bits() == b.to_bits());
        if !same && first_diff.is_none() {
            first_diff = Some(step);
        }
    }
    let (fast, secs) = within(start, 60);
    let pass = first_diff.is_none() && fast;
    report(1, pass, &format!("first differing step {first_diff:?} over 500 steps, {secs:.1}s"));
    assert!(pass);
}

#[test]
fn criterion_02_no_degradation() {
    let start = Instant::now();
    let env = GridEnv::new(2).unwrap();
    let field = GridRewardField::new(&env, GridFamily::Rings);
    let mut stage = Stage::new(&env, &PolicyConfig::default(), 0, 10).unwrap();
    let cfg = grid_train_cfg(128, AdamWConfig::default());
    let boost = BoostConfig {
        alpha: 1.0,
        ..BoostConfig::default()
    };
    let exact = |x: &GridPos| field.log_reward(x).unwrap();
    let mut residual = InjectedResidual(exact);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut residual_rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..2000 {
        boosted_train_step(&mut stage, &env, &field, &cfg, &boost, &mut residual, &mut rng, &mut residual_rng).unwrap();
    }
    let ratio = (stage.log_z() - field.log_partition()).exp();
    let (fast, secs) = within(start, 120);
    let pass = ratio < 0.05 && fast;
    report(2, pass, &format!("Z_active / Z_true = {ratio:.3e} (need < 0.05), {secs:.1}s"));
    assert!(pass);
}

/// `E_{τ ~ P_F}[(u − log R)²]` by enumeration.
fn expected_tb_loss<E: Environment>(stage: &Stage, env: &E, reward: &dyn RewardModel<E::Terminal>) -> f64 {
    let trajs = scored_trajectories(stage, env).unwrap();
    trajs
        .iter()
        .map(|t| {
            let u = induced_log_estimate(stage.log_z(), t.log_pf, t.log_pb);
            let d = u - reward.log_reward(&t.terminal).unwrap();
            t.log_pf.exp() * d * d
        })
        .sum()
}

fn train_decayed<E: Environment>(
    stage: &mut Stage,
    env: &E,
    reward: &dyn RewardModel<E::Terminal>,
    steps: usize,
    final_scale: f64,
    rng: &mut ChaCha8Rng,
) {
    let base = AdamWConfig::default();
    for s in 0..steps {
        let cfg = grid_train_cfg(128, base.scaled(final_scale.powf(s as f64 / steps as f64)));
        train_step(stage, env, reward, &cfg, rng).unwrap();
    }
}

#[test]
fn criterion_03_zero_variance_at_optimum() {
    let start = Instant::now();
    let env = GridEnv::new(2).unwrap();
    let field = GridRewardField::new(&env, GridFamily::Rings);
    let mut stage = Stage::new(&env, &PolicyConfig::default(), 0, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    train_decayed(&mut stage, &env, &field, 20_000, 1e-3, &mut rng);
    let loss = expected_tb_loss(&stage, &env, &field);

    let marg = exact_marginals(&stage, &env).unwrap();
    let mut worst_rsd: f64 = 0.0;
    let mut worst_bias: f64 = 0.0;
    let mut brng = ChaCha8Rng::seed_from_u64(3);
    for x in &marg.support {
        let xs = vec![*x; 100];
        let trajs = sample_backward(&stage, &env, &xs, &mut brng).unwrap();
        let r: Vec<f64> = trajs
            .iter()
            .map(|t| induced_log_estimate(stage.log_z(), t.log_pf, t.log_pb).exp())
            .collect();
        let mean = r.iter().sum::<f64>() / r.len() as f64;
        let sd = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r.len() - 1) as f64).sqrt();
        let target = field.log_reward(x).unwrap().exp();
        worst_rsd = worst_rsd.max(sd / mean);
        worst_bias = worst_bias.max((mean / target - 1.0).abs());
    }
    let (fast, secs) = within(start, 300);
    let pass = loss < 1e-6 && worst_rsd < 1e-2 && worst_bias < 0.02 && fast;
    report(
        3,
        pass,
        &format!(
            "exact TB loss {loss:.2e}, {} terminals in support, max rel sd {worst_rsd:.2e}, max |mean/R - 1| {worst_bias:.2e}, {secs:.1}s",
            marg.support.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_ensemble_mixture_matches_target() {
    let start = Instant::now();
    let env = GridEnv::new(2).unwrap();
    // Four corner modes over a low background.
    let log_r: Vec<f64> = env
        .enumerate_terminals()
        .iter()
        .map(|p| if p.x.abs() == 2 && p.y.abs() == 2 { 0.0 } else { 0.01f64.ln() })
        .collect();
    let field = GridRewardField::from_log_rewards(&env, log_r).unwrap();
    // Stage 1 sees the two left modes (and the centre column) in full and the rest at 1e-3.
    let left = |p: &GridPos| p.x <= 0;
    let half = |p: &GridPos| field.log_reward(p).unwrap() + if left(p) { 0.0 } else { 1e-3f64.ln() };
    let policy = PolicyConfig::default();
    let mut s1 = Stage::new(&env, &policy, 0, 10).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    train_decayed(&mut s1, &env, &half, 8000, 1e-3, &mut rng);
    let loss1 = expected_tb_loss(&s1, &env, &half);
    s1.frozen = true;

    // Stage 2 trains on the residual with the boosted loss at α = 0.
    let mut s2 = Stage::new(&env, &policy, 1, 10).unwrap();
    let frozen = vec![s1.clone()];
    let boost = BoostConfig {
        alpha: 0.0,
        ..BoostConfig::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut residual_rng = ChaCha8Rng::seed_from_u64(2);
    let base = AdamWConfig::default();
    let steps = 8000;
    let mut clamped = 0;
    for s in 0..steps {
        let cfg = grid_train_cfg(128, base.scaled(1e-3f64.powf(s as f64 / steps as f64)));
        let mut residual = FrozenResidual { members: &frozen, k: 1 };
        let st = boosted_train_step(&mut s2, &env, &field, &cfg, &boost, &mut residual, &mut rng, &mut residual_rng)
            .unwrap();
        clamped += st.branches.clamped;
    }
    let mix = exact_mixture(&[&s1, &s2], &env).unwrap();
    let xs = env.enumerate_terminals();
    let p_hat: Vec<f64> = xs.iter().map(|x| mix[x]).collect();
    let l1 = l1_metric(&p_hat, &field.target_distribution()).unwrap();
    let m1 = exact_marginals(&s1, &env).unwrap();
    let l1_single = l1_metric(&xs.iter().map(|x| m1.p[x]).collect::<Vec<_>>(), &field.target_distribution()).unwrap();
    let (fast, secs) = within(start, 600);
    let pass = l1 < 0.02 && fast;
    report(
        4,
        pass,
        &format!(
            "mixture L1 {l1:.2e} (stage 1 alone {l1_single:.2e}, stage 1 loss {loss1:.1e}, clamped terms {clamped}), {secs:.1}s"
        ),
    );
    assert!(pass);
}

struct Variant {
    name: &'static str,
    alpha: f64,
    /// `log R_old − log R` injected per trajectory.
    offset: f64,
    branch: Branch,
}

const VARIANTS: [Variant; 6] = [
    Variant {
        name: "tb",
        alpha: 1.0,
        offset: f64::NEG_INFINITY,
        branch: Branch::Tb,
    },
    Variant {
        name: "boosted a=1",
        alpha: 1.0,
        offset: 0.3,
        branch: Branch::Boosted,
    },
    Variant {
        name: "boosted a=0.5",
        alpha: 0.5,
        offset: -0.4,
        branch: Branch::Boosted,
    },
    Variant {
        name: "boosted a=0",
        alpha: 0.0,
        offset: -1.5,
        branch: Branch::Boosted,
    },
    Variant {
        name: "nabla a=0.3",
        alpha: 0.3,
        offset: 1.0,
        branch: Branch::Nabla,
    },
    Variant {
        name: "clamped a=0",
        alpha: 0.0,
        offset: 0.5,
        branch: Branch::Clamped,
    },
];

fn variant_terms(v: &Variant, u: &[f64], log_r: &[f64]) -> Vec<LossTerm> {
    let cfg = BoostConfig {
        alpha: v.alpha,
        ..BoostConfig::default()
    };
    u.iter()
        .zip(log_r)
        .map(|(&u, &r)| {
            if v.branch == Branch::Tb {
                tb_term(u, r)
            } else {
                select_loss(u, r, r + v.offset, &cfg).unwrap()
            }
        })
        .collect()
}

/// Worst relative finite-difference mismatch over every parameter.
fn gradient_check<E: Environment>(stage: &Stage, env: &E, trajs: &[TrajectoryOf<E>], v: &Variant) -> (f64, usize) {
    let log_r: Vec<f64> = trajs.iter().map(|t| t.log_reward).collect();
    let n = trajs.len() as f64;
    let loss_at = |s: &Stage| -> f64 {
        let sc = score(s, env, trajs, false).unwrap();
        let u: Vec<f64> = (0..trajs.len())
            .map(|i| induced_log_estimate(s.log_z(), sc.log_pf[i], sc.log_pb[i]))
            .collect();
        variant_terms(v, &u, &log_r).iter().map(|t| t.loss).sum::<f64>() / n
    };
    let mut st = stage.clone();
    let sc = score(&st, env, trajs, true).unwrap();
    let u: Vec<f64> = (0..trajs.len())
        .map(|i| induced_log_estimate(st.log_z(), sc.log_pf[i], sc.log_pb[i]))
        .collect();
    let terms = variant_terms(v, &u, &log_r);
    assert!(terms.iter().all(|t| t.branch == v.branch), "{}: wrong branch", v.name);
    let coeffs: Vec<f64> = terms.iter().map(|t| t.dl_du / n).collect();
    st.params.zero_grad();
    accumulate_gradients(&mut st, &sc, &coeffs).unwrap();
    let analytic = st.params.flat_grads();
    let base = st.params.flat_values();
    let trainable = st.params.flat_trainable();
    // Fourth-order central stencil; entries whose difference is below the
    // rounding floor of the loss evaluation are compared against that floor.
    let h = 1e-5;
    let l0 = loss_at(&st);
    let floor = 4.0 * f64::EPSILON * l0.abs().max(1.0) / h;
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (i, &g) in analytic.iter().enumerate() {
        if !trainable[i] {
            assert_eq!(g, 0.0);
            continue;
        }
        let mut s = st.clone();
        let mut at = |d: f64| {
            s.params.set_flat(i, base[i] + d);
            loss_at(&s)
        };
        let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        let err = (fd - g).abs();
        let scale = g.abs().max(fd.abs()).max(floor / 1e-4);
        worst = worst.max(err / scale);
        checked += 1;
    }
    (worst, checked)
}

#[test]
fn criterion_05_gradient_fidelity() {
    let start = Instant::now();
    let policy = PolicyConfig {
        hidden: 32,
        layers: 2,
        embed_dim: 8,
    };
    let mut lines = Vec::new();
    let mut worst_all: f64 = 0.0;

    let grid = GridEnv::new(2).unwrap();
    let field = GridRewardField::new(&grid, GridFamily::EightGaussians);
    let mut gs = Stage::new(&grid, &policy, 0, 5).unwrap();
    gs.set_log_z(0.8);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let gt = sample_forward(&gs, &grid, Some(&field), 20, 0.3, &mut rng).unwrap();

    let seq = SeqEnv::new(SeqConfig {
        max_len: 6,
        ..SeqConfig::default()
    })
    .unwrap();
    let reward = SeqReward::new(std::sync::Arc::new(SyntheticScorer::default()), SeqRewardConfig::default()).unwrap();
    let mut ss = Stage::new(&seq, &policy, 0, 7).unwrap();
    ss.set_log_z(-0.5);
    let st = sample_forward(&ss, &seq, Some(&reward), 20, 0.3, &mut rng).unwrap();

    for v in &VARIANTS {
        let (wg, ng) = gradient_check(&gs, &grid, &gt, v);
        let (ws, ns) = gradient_check(&ss, &seq, &st, v);
        worst_all = worst_all.max(wg).max(ws);
        lines.push(format!("{}: grid {wg:.1e} over {ng}, seq {ws:.1e} over {ns}", v.name));
    }
    let (fast, secs) = within(start, 60);
    let pass = worst_all <= 1e-4 && fast;
    report(5, pass, &format!("worst relative error {worst_all:.2e} [{}], {secs:.1}s", lines.join("; ")));
    assert!(pass);
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn final_metric(dir: &Path, metric: &str) -> f64 {
    let rows = metrics::read_rows(&dir.join(metrics::METRICS_FILE)).unwrap();
    rows.iter().rev().find(|r| r.metric == metric).expect("final metric row").value
}

/// Runs the single model and the one-booster variant from shared baseline epochs.
fn paired_runs(single: &RunConfig, boosted: &RunConfig, root: &Path) -> (f64, f64, String) {
    let at = boosted.boost.epochs[0];
    let problem = Problem::build(single).unwrap();
    let mut state: RunState = problem.fresh_state(single).unwrap();
    let s_single = Session {
        cfg: single,
        problem: &problem,
        dir: root.join("single"),
        verbose: false,
    };
    s_single.run(&mut state, at).unwrap();
    let mut branch_state = state.clone();
    std::fs::create_dir_all(root.join("boosted")).unwrap();
    std::fs::copy(root.join("single").join(metrics::METRICS_FILE), root.join("boosted").join(metrics::METRICS_FILE))
        .unwrap();
    s_single.run(&mut state, u64::MAX).unwrap();
    let s_boost = Session {
        cfg: boosted,
        problem: &problem,
        dir: root.join("boosted"),
        verbose: false,
    };
    s_boost.run(&mut branch_state, u64::MAX).unwrap();
    let metric = match single.env {
        runner::EnvSection::Grid(_) => "final_l1",
        runner::EnvSection::Sequence(_) => "final_unique_high",
    };
    let a = final_metric(&root.join("single"), metric);
    let b = final_metric(&root.join("boosted"), metric);
    (a, b, metric.to_string())
}

fn grid_pair(half_width: i32, epochs: u64, booster: u64, seed: u64) -> (RunConfig, RunConfig) {
    let mut single = RunConfig::default_for("grid").unwrap();
    single.env = runner::EnvSection::Grid(bgfn::env::GridConfig::new(half_width).unwrap());
    single.seed = seed;
    single.run_id = format!("w{half_width}-s{seed}");
    single.train.epochs = epochs;
    single.train.checkpoint_every = 0;
    single.boost.epochs = Vec::new();
    single.eval.every = epochs;
    let mut boosted = single.clone();
    boosted.boost.epochs = vec![booster];
    boosted.boost.alpha = 1.0;
    boosted.boost.loss = LossKind::Boosted;
    single.validate().unwrap();
    boosted.validate().unwrap();
    (single, boosted)
}

#[test]
fn criterion_06_scaled_grid_trend() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut singles = Vec::new();
    let mut boosted = Vec::new();
    for seed in [10, 11, 12] {
        let (s, b) = grid_pair(7, 2000, 800, seed);
        let (a, c, _) = paired_runs(&s, &b, &tmp.path().join(seed.to_string()));
        singles.push(a);
        boosted.push(c);
    }
    let ms = median(singles.clone());
    let mb = median(boosted.clone());
    let (fast, secs) = within(start, 1200);
    let pass = mb <= 0.6 * ms && fast;
    report(
        6,
        pass,
        &format!(
            "median final L1 single {ms:.3e} vs BGFN-2 {mb:.3e} (ratio {:.3}, need <= 0.6); per seed single {singles:.3?} boosted {boosted:.3?}, {secs:.1}s",
            mb / ms
        ),
    );
    assert!(pass);
}

#[test]
#[ignore = "full-scale reproduction takes hours"]
fn criterion_07_full_scale_reproduction() {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let mut singles = Vec::new();
    let mut boosted = Vec::new();
    for seed in 10..=15 {
        let (mut s, mut b) = grid_pair(15, 10_000, 3000, seed);
        s.eval.every = 100;
        b.eval.every = 100;
        let (a, c, _) = paired_runs(&s, &b, &tmp.path().join(seed.to_string()));
        singles.push(a);
        boosted.push(c);
    }
    let ms = singles.iter().sum::<f64>() / singles.len() as f64;
    let mb = boosted.iter().sum::<f64>() / boosted.len() as f64;
    let pass = (1e-3..=3e-3).contains(&ms) && (1e-4..=8e-4).contains(&mb);
    report(
        7,
        pass,
        &format!(
            "mean final L1 single {ms:.3e} (need [1e-3, 3e-3]), BGFN-2 {mb:.3e} (need [1e-4, 8e-4]); {:.0}s",
            start.elapsed().as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_08_sequence_exploration_trend() {
    let start = Instant::now();
    let scorer = SyntheticScorer::default();
    let reachable = scorer.high_set(0.94, 1).unwrap().len();
    let tmp = tempfile::tempdir().unwrap();
    let mut singles = Vec::new();
    let mut boosted = Vec::new();
    for seed in [10, 11, 12] {
        let mut single = RunConfig::default_for("sequence").unwrap();
        single.seed = seed;
        single.run_id = format!("seq-s{seed}");
        single.train.epochs = 600;
        single.train.batch = 512;
        // Exploration noise 0.3; at ε = 0 and this batch size both arms
        // collapse onto the reward floor before finding any motif.
        single.train.epsilon = 0.3;
        single.train.checkpoint_every = 0;
        single.boost.epochs = Vec::new();
        let mut b = single.clone();
        b.boost.epochs = vec![300];
        b.boost.alpha = 0.0;
        let (a, c, _) = paired_runs(&single, &b, &tmp.path().join(seed.to_string()));
        singles.push(a);
        boosted.push(c);
    }
    let ms = median(singles.clone());
    let mb = median(boosted.clone());
    let (fast, secs) = within(start, 900);
    let pass = reachable >= 200 && mb > 0.0 && mb >= 1.5 * ms && fast;
    report(
        8,
        pass,
        &format!(
            "{reachable} reachable high sequences; median cumulative unique single {ms} vs boosted {mb} (need >= 1.5x); per seed {singles:?} vs {boosted:?}, {secs:.1}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_09_oracle_consistency() {
    let start = Instant::now();
    let env = GridEnv::new(2).unwrap();
    let mut stage = Stage::new(&env, &PolicyConfig::default(), 0, 21).unwrap();
    stage.set_log_z(0.6);
    let marg = exact_marginals(&stage, &env).unwrap();
    let total: f64 = marg.p.values().sum();
    let moments = exact_estimator_distribution(&stage, &env).unwrap();
    let xs = env.enumerate_terminals();
    let k = 10_000;
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let est = bgfn::boosting::estimate_member_reward(&stage, &env, &xs, k, &mut rng).unwrap();
    let mut worst_z: f64 = 0.0;
    let mut identity_err: f64 = 0.0;
    for (x, e) in xs.iter().zip(&est) {
        let m = moments[x];
        let exact = stage.log_z().exp() * marg.p[x];
        identity_err = identity_err.max((m.mean - exact).abs());
        let se = (m.variance / k as f64).sqrt();
        worst_z = worst_z.max((e.exp() - exact).abs() / se);
    }
    let (fast, secs) = within(start, 120);
    let pass = (total - 1.0).abs() <= 1e-10 && worst_z <= 3.0 && identity_err <= 1e-10 && fast;
    report(
        9,
        pass,
        &format!(
            "sum P_F = 1 + {:.1e}; worst |MC - Z P_F| = {worst_z:.2} SE over {} terminals at K = {k}; oracle mean identity error {identity_err:.1e}, {secs:.1}s",
            total - 1.0,
            xs.len()
        ),
    );
    assert!(pass);
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn criterion_10_determinism_and_resume() {
    let start = Instant::now();
    let mut grid = RunConfig::default_for("grid").unwrap();
    grid.env = runner::EnvSection::Grid(bgfn::env::GridConfig::new(2).unwrap());
    grid.run_id = "det-grid".into();
    grid.train.epochs = 120;
    grid.train.epsilon = 0.1;
    grid.train.checkpoint_every = 0;
    grid.boost.epochs = vec![40, 80];
    grid.boost.alphas = vec![1.0, 0.0];
    grid.eval.every = 20;

    let mut seq = RunConfig::default_for("sequence").unwrap();
    seq.run_id = "det-seq".into();
    seq.train.epochs = 60;
    seq.train.batch = 64;
    seq.train.epsilon = 0.2;
    seq.train.checkpoint_every = 0;
    seq.boost.epochs = vec![20, 40];
    seq.boost.alpha = 0.0;
    seq.eval.every = 10;
    seq.eval.n_samples = 200;

    let mut results = BTreeMap::new();
    for cfg in [&grid, &seq] {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let c = tempfile::tempdir().unwrap();
        runner::train(cfg, a.path(), false, None, false).unwrap();
        runner::train(cfg, b.path(), false, None, false).unwrap();
        runner::train(cfg, c.path(), false, Some(50), false).unwrap();
        runner::train(cfg, c.path(), true, None, false).unwrap();
        let file = |d: &Path| read(&runner::run_dir(d, cfg).join(metrics::METRICS_FILE));
        let same_rerun = file(a.path()) == file(b.path());
        let same_resume = file(a.path()) == file(c.path());
        results.insert(cfg.run_id.clone(), (same_rerun, same_resume));
    }
    let (fast, secs) = within(start, 120);
    let pass = results.values().all(|&(x, y)| x && y) && fast;
    report(10, pass, &format!("(rerun identical, resume identical) per config {results:?}, {secs:.1}s"));
    assert!(pass);
}
