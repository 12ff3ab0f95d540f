//! Run harness: configuration, the baseline-plus-boosters schedule, checkpoints,
//! metrics and the operations behind each CLI subcommand.

pub mod checkpoint;
pub mod config;
pub mod metrics;

pub use checkpoint::{stream, Checkpoint, Pending, RunState, STREAM_EVAL, STREAM_RESIDUAL, STREAM_ROLLOUT};
pub use config::{
    BoostSection, EnvSection, EvalSection, GridRewardSection, LossKind, RewardSection, RunConfig, SeqRewardSection,
    TrainSection,
};
pub use metrics::{export_plotdata, MetricRow, PlotFilter, METRICS_FILE};

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::boosting::{boosted_train_step, ensemble_sample, Ensemble, FrozenResidual};
use crate::env::{Environment, GridEnv, SeqEnv};
use crate::error::{Error, Result};
use crate::eval::{evaluate_l1, unique_high_reward, HighRewardArchive, L1Report, UniqueCountReport};
use crate::gfn::{train_step, Stage, TrainConfig};
use crate::rewards::{GridFamily, GridRewardField, ProcessScorer, ProxyScorer, RewardModel, SeqReward, SyntheticScorer};

pub const OUTPUT_ROOT_VAR: &str = "BGFN_OUTPUT_ROOT";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Environment and reward built from a configuration.
pub enum Problem {
    Grid {
        env: GridEnv,
        field: GridRewardField,
    },
    Sequence {
        env: SeqEnv,
        reward: SeqReward,
        scorer: Arc<dyn ProxyScorer>,
    },
}

impl Problem {
    pub fn build(cfg: &RunConfig) -> Result<Problem> {
        match (&cfg.env, &cfg.reward) {
            (EnvSection::Grid(g), RewardSection::Grid(r)) => {
                let mut env = GridEnv::new(g.half_width)?;
                env.cfg.n_freq = g.n_freq;
                let family: GridFamily = r.family.parse()?;
                let field = GridRewardField::new(&env, family);
                Ok(Problem::Grid { env, field })
            }
            (EnvSection::Sequence(s), RewardSection::Sequence(r)) => {
                let env = SeqEnv::new(*s)?;
                let scorer: Arc<dyn ProxyScorer> = match r.scorer.as_str() {
                    "command" => Arc::new(ProcessScorer::spawn(&r.command[0], &r.command[1..])?),
                    _ => {
                        let base = SyntheticScorer::default();
                        Arc::new(SyntheticScorer::new(base.motifs, s.vocab))
                    }
                };
                let reward = SeqReward::new(scorer.clone(), r.shaping())?;
                Ok(Problem::Sequence { env, reward, scorer })
            }
            _ => Err(Error::config("reward", "reward section does not match env.kind")),
        }
    }

    /// Fresh state: stage 0 from the run seed and every stream at its start.
    pub fn fresh_state(&self, cfg: &RunConfig) -> Result<RunState> {
        let stage = match self {
            Problem::Grid { env, .. } => Stage::new(env, &cfg.policy, 0, cfg.seed)?,
            Problem::Sequence { env, .. } => Stage::new(env, &cfg.policy, 0, cfg.seed)?,
        };
        Ok(RunState {
            epoch: 0,
            ensemble: Ensemble::new(stage),
            rollout_rng: stream(cfg.seed, STREAM_ROLLOUT),
            residual_rng: stream(cfg.seed, STREAM_RESIDUAL),
            eval_rng: stream(cfg.seed, STREAM_EVAL),
            archive: HighRewardArchive::default(),
            pending: Pending::default(),
        })
    }

    pub fn check_state(&self, cfg: &RunConfig, state: &RunState) -> Result<()> {
        for s in state.ensemble.stages() {
            match self {
                Problem::Grid { env, .. } => s.check_compatible(env, &cfg.policy)?,
                Problem::Sequence { env, .. } => s.check_compatible(env, &cfg.policy)?,
            }
        }
        Ok(())
    }
}

/// `root/output_dir/run_id`; an absolute `output_dir` ignores `root`.
pub fn run_dir(root: &Path, cfg: &RunConfig) -> PathBuf {
    root.join(&cfg.output_dir).join(&cfg.run_id)
}

pub fn checkpoint_path(dir: &Path, epoch: u64) -> PathBuf {
    dir.join(CHECKPOINT_DIR).join(format!("epoch_{epoch:07}.json"))
}

/// Most recent checkpoint in a run directory.
pub fn latest_checkpoint(dir: &Path) -> Result<Option<PathBuf>> {
    let d = dir.join(CHECKPOINT_DIR);
    if !d.is_dir() {
        return Ok(None);
    }
    let mut found: Vec<PathBuf> = fs::read_dir(&d)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    found.sort();
    Ok(found.pop())
}

/// Evaluation outcome for one ensemble.
#[derive(Clone, Debug, PartialEq)]
pub enum Report {
    L1(L1Report),
    Unique(UniqueCountReport),
}

impl Report {
    /// `(metric, value)` pairs; the first is the headline metric.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        match self {
            Report::L1(r) => {
                let mut m = vec![("l1".to_string(), r.l1)];
                for (i, z) in r.member_log_z.iter().enumerate() {
                    m.push((format!("member_log_zhat_{}", i + 1), *z));
                }
                m
            }
            Report::Unique(r) => vec![
                ("unique_high".into(), r.cumulative as f64),
                ("unique_high_new".into(), r.new as f64),
                ("sampled_unique".into(), r.sampled_unique as f64),
            ],
        }
    }
}

fn evaluate(
    problem: &Problem,
    cfg: &RunConfig,
    stages: &[&Stage],
    epoch: u64,
    rng: &mut ChaCha8Rng,
    archive: &mut HighRewardArchive,
) -> Result<Report> {
    match problem {
        Problem::Grid { env, field } => Ok(Report::L1(evaluate_l1(stages, env, field, cfg.boost.b_eval, epoch, rng)?)),
        Problem::Sequence { env, scorer, .. } => Ok(Report::Unique(unique_high_reward(
            stages,
            env,
            scorer.as_ref(),
            cfg.eval.n_samples,
            cfg.eval.threshold,
            archive,
            epoch,
            rng,
        )?)),
    }
}

/// Drives a run: baseline, boosters at their activation epochs, evaluation,
/// metrics and checkpoints.
pub struct Session<'a> {
    pub cfg: &'a RunConfig,
    pub problem: &'a Problem,
    pub dir: PathBuf,
    /// Echo evaluation lines to stderr.
    pub verbose: bool,
}

impl Session<'_> {
    fn metrics_path(&self) -> PathBuf {
        self.dir.join(METRICS_FILE)
    }

    /// Stage count the schedule calls for once `done` epochs are complete.
    fn scheduled_stages(&self, done: u64) -> usize {
        1 + self.cfg.boost.epochs.iter().filter(|&&a| a <= done).count()
    }

    fn alpha_column(&self, stage_count: usize) -> Option<f64> {
        let j = stage_count - 1;
        (j > 0 && self.cfg.boost.loss == LossKind::Boosted).then(|| self.cfg.boost.alpha_of(j))
    }

    fn row(&self, epoch: u64, metric: &str, value: f64, stage_count: usize) -> MetricRow {
        MetricRow {
            run_id: self.cfg.run_id.clone(),
            epoch,
            metric: metric.to_string(),
            value,
            seed: self.cfg.seed,
            epsilon: self.cfg.train.epsilon,
            alpha: self.alpha_column(stage_count),
            stage_count,
        }
    }

    fn save(&self, state: &RunState) -> Result<PathBuf> {
        let path = checkpoint_path(&self.dir, state.epoch);
        Checkpoint::new(self.cfg.to_toml(), state.clone()).save(&path)?;
        Ok(path)
    }

    fn one_epoch<E: Environment>(&self, env: &E, reward: &dyn RewardModel<E::Terminal>, state: &mut RunState) -> Result<()> {
        let want = self.scheduled_stages(state.epoch);
        while state.ensemble.len() < want {
            // Boosters repeat the baseline's initialisation and rollout stream.
            state.ensemble.freeze_and_spawn(env, &self.cfg.policy, self.cfg.seed)?;
            state.rollout_rng = stream(self.cfg.seed, STREAM_ROLLOUT);
            state.residual_rng = stream(self.cfg.seed, STREAM_RESIDUAL);
        }
        let j = state.ensemble.len() - 1;
        let tcfg = TrainConfig {
            batch: self.cfg.train.batch,
            epsilon: self.cfg.train.epsilon,
            opt: self.cfg.train.optimizer().scaled(self.cfg.train.lr_scale(state.epoch)),
        };
        let RunState {
            ensemble: Ensemble { frozen, active },
            rollout_rng,
            residual_rng,
            ..
        } = state;
        let stats = if j == 0 || self.cfg.boost.loss == LossKind::Tb {
            train_step(active, env, reward, &tcfg, rollout_rng)?
        } else {
            let mut residual = FrozenResidual {
                members: frozen,
                k: self.cfg.boost.k_train,
            };
            boosted_train_step(
                active,
                env,
                reward,
                &tcfg,
                &self.cfg.boost.boost_config(j),
                &mut residual,
                rollout_rng,
                residual_rng,
            )?
        };
        state.pending.add(&stats);
        state.epoch += 1;
        Ok(())
    }

    fn after_epoch(&self, state: &mut RunState) -> Result<()> {
        let e = state.epoch;
        let total = self.cfg.train.epochs;
        if e.is_multiple_of(self.cfg.eval.every) || e == total {
            let n = state.ensemble.len();
            let mut rows = Vec::new();
            let p = std::mem::take(&mut state.pending);
            if p.steps > 0 {
                rows.push(self.row(e, "train_loss", p.loss_sum / p.steps as f64, n));
            }
            rows.push(self.row(e, "log_z", state.ensemble.active.log_z(), n));
            if self.alpha_column(n).is_some() {
                rows.push(self.row(e, "branch_boosted", p.branches.boosted as f64, n));
                rows.push(self.row(e, "branch_nabla", p.branches.nabla as f64, n));
                rows.push(self.row(e, "branch_clamped", p.branches.clamped as f64, n));
            }
            let stages = state.ensemble.stages();
            let report = evaluate(self.problem, self.cfg, &stages, e, &mut state.eval_rng, &mut state.archive)?;
            let metrics = report.metrics();
            for (k, v) in &metrics {
                rows.push(self.row(e, k, *v, n));
            }
            if e == total {
                let (k, v) = &metrics[0];
                rows.push(self.row(e, &format!("final_{k}"), *v, n));
            }
            if self.verbose {
                let (k, v) = &metrics[0];
                eprintln!("epoch {e}: stages {n}, {k} {v}, log_z {}", state.ensemble.active.log_z());
            }
            metrics::append_rows(&self.metrics_path(), &rows)?;
        }
        let every = self.cfg.train.checkpoint_every;
        if self.cfg.boost.epochs.contains(&e) || e == total || (every > 0 && e.is_multiple_of(every)) {
            self.save(state)?;
        }
        Ok(())
    }

    /// Trains until `until` epochs are complete (capped at the configured total)
    /// and checkpoints there.
    pub fn run(&self, state: &mut RunState, until: u64) -> Result<()> {
        fs::create_dir_all(&self.dir)?;
        fs::write(self.dir.join("config.toml"), self.cfg.to_toml())?;
        let stop = until.min(self.cfg.train.epochs);
        if !self.metrics_path().exists() {
            metrics::append_rows(&self.metrics_path(), &[])?;
        }
        while state.epoch < stop {
            match self.problem {
                Problem::Grid { env, field } => self.one_epoch(env, field, state)?,
                Problem::Sequence { env, reward, .. } => self.one_epoch(env, reward, state)?,
            }
            self.after_epoch(state)?;
        }
        self.save(state)?;
        Ok(())
    }
}

/// Starts a run, or continues it from its latest checkpoint with `resume`.
pub fn train(cfg: &RunConfig, root: &Path, resume: bool, until: Option<u64>, verbose: bool) -> Result<RunState> {
    let problem = Problem::build(cfg)?;
    let dir = run_dir(root, cfg);
    let mut state = match (resume, latest_checkpoint(&dir)?) {
        (true, Some(path)) => {
            let ck = Checkpoint::load(&path)?;
            let saved = RunConfig::parse(&ck.config, &[], &path.display().to_string())?;
            if saved.env != cfg.env || saved.seed != cfg.seed {
                return Err(Error::Usage(format!(
                    "{} was written for env {:?} seed {}; config has env {:?} seed {}",
                    path.display(),
                    saved.env,
                    saved.seed,
                    cfg.env,
                    cfg.seed
                )));
            }
            problem.check_state(cfg, &ck.state)?;
            metrics::truncate_after(&dir.join(METRICS_FILE), ck.state.epoch)?;
            ck.state
        }
        _ => {
            if dir.join(CHECKPOINT_DIR).is_dir() {
                fs::remove_dir_all(dir.join(CHECKPOINT_DIR))?;
            }
            let m = dir.join(METRICS_FILE);
            if m.exists() {
                fs::remove_file(m)?;
            }
            problem.fresh_state(cfg)?
        }
    };
    let session = Session {
        cfg,
        problem: &problem,
        dir,
        verbose,
    };
    session.run(&mut state, until.unwrap_or(u64::MAX))?;
    Ok(state)
}

/// Continues from `checkpoint` with a booster spawned at its epoch. Metrics up
/// to that epoch are carried over from the checkpoint's run when present.
pub fn boost(cfg: &RunConfig, checkpoint: &Path, root: &Path, verbose: bool) -> Result<RunState> {
    let ck = Checkpoint::load(checkpoint)?;
    let saved = RunConfig::parse(&ck.config, &[], &checkpoint.display().to_string())?;
    if saved.env != cfg.env {
        return Err(Error::Usage(format!(
            "checkpoint environment {:?} does not match config environment {:?}",
            saved.env, cfg.env
        )));
    }
    let mut cfg = cfg.clone();
    let at = ck.state.epoch;
    if !cfg.boost.epochs.contains(&at) {
        let pos = cfg.boost.epochs.partition_point(|&a| a < at);
        cfg.boost.epochs.insert(pos, at);
        if !cfg.boost.alphas.is_empty() {
            cfg.boost.alphas.insert(pos, cfg.boost.alpha);
        }
    }
    cfg.validate()?;
    let problem = Problem::build(&cfg)?;
    problem.check_state(&cfg, &ck.state)?;
    let dir = run_dir(root, &cfg);
    fs::create_dir_all(&dir)?;
    let target = dir.join(METRICS_FILE);
    let source = checkpoint
        .parent()
        .and_then(Path::parent)
        .map(|d| d.join(METRICS_FILE))
        .filter(|p| p.exists());
    let carried: Vec<MetricRow> = match &source {
        Some(p) => metrics::read_rows(p)?
            .into_iter()
            // The source's end-of-run rows are not final for the boosted run.
            .filter(|r| r.epoch <= at && !r.metric.starts_with("final_"))
            .map(|mut r| {
                r.run_id = cfg.run_id.clone();
                r
            })
            .collect(),
        None => Vec::new(),
    };
    if target.exists() {
        fs::remove_file(&target)?;
    }
    metrics::append_rows(&target, &carried)?;
    let mut state = ck.state;
    let session = Session {
        cfg: &cfg,
        problem: &problem,
        dir,
        verbose,
    };
    session.run(&mut state, u64::MAX)?;
    Ok(state)
}

/// A checkpoint with the configuration it was written under.
pub struct Loaded {
    pub cfg: RunConfig,
    pub problem: Problem,
    pub state: RunState,
}

/// Loads a checkpoint; `expected` must describe the same environment when given.
pub fn load_checkpoint(path: &Path, expected: Option<&RunConfig>) -> Result<Loaded> {
    let ck = Checkpoint::load(path)?;
    let cfg = RunConfig::parse(&ck.config, &[], &path.display().to_string())?;
    if let Some(exp) = expected {
        if exp.env != cfg.env || exp.reward != cfg.reward || exp.policy != cfg.policy {
            return Err(Error::Usage(format!(
                "checkpoint {} holds env {:?} with policy {:?}; config expects env {:?} with policy {:?}",
                path.display(),
                cfg.env,
                cfg.policy,
                exp.env,
                exp.policy
            )));
        }
    }
    let problem = Problem::build(&cfg)?;
    problem.check_state(&cfg, &ck.state)?;
    Ok(Loaded {
        cfg,
        problem,
        state: ck.state,
    })
}

/// Evaluates a checkpoint with a fresh evaluation stream from `seed`.
pub fn eval_checkpoint(loaded: &Loaded, seed: u64, b: Option<usize>) -> Result<(Report, Vec<MetricRow>)> {
    let mut cfg = loaded.cfg.clone();
    if let Some(b) = b {
        if b == 0 {
            return Err(Error::config("--b", "must be >= 1"));
        }
        cfg.boost.b_eval = b;
    }
    let mut rng = stream(seed, STREAM_EVAL);
    let mut archive = loaded.state.archive.clone();
    let stages = loaded.state.ensemble.stages();
    let epoch = loaded.state.epoch;
    let report = evaluate(&loaded.problem, &cfg, &stages, epoch, &mut rng, &mut archive)?;
    let session = Session {
        cfg: &cfg,
        problem: &loaded.problem,
        dir: PathBuf::new(),
        verbose: false,
    };
    let n = stages.len();
    let rows = report
        .metrics()
        .into_iter()
        .map(|(k, v)| MetricRow {
            seed,
            ..session.row(epoch, &format!("eval_{k}"), v, n)
        })
        .collect();
    Ok((report, rows))
}

/// Writes `n` ensemble samples, one per line, each followed by a tab and the
/// 1-based stage index.
pub fn sample_checkpoint<W: Write>(loaded: &Loaded, n: usize, seed: u64, out: &mut W) -> Result<()> {
    let mut rng = stream(seed, STREAM_EVAL);
    let stages = loaded.state.ensemble.stages();
    match &loaded.problem {
        Problem::Grid { env, .. } => {
            for (i, x) in ensemble_sample(&stages, env, n, &mut rng)? {
                writeln!(out, "{} {}\t{}", x.x, x.y, i + 1)?;
            }
        }
        Problem::Sequence { env, .. } => {
            for (i, x) in ensemble_sample(&stages, env, n, &mut rng)? {
                writeln!(out, "{x}\t{}", i + 1)?;
            }
        }
    }
    out.flush()?;
    Ok(())
}
