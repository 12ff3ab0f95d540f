//! Run configuration: TOML with dotted sections, merged over per-environment defaults.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::boosting::BoostConfig;
use crate::env::{GridConfig, PolicyConfig, SeqConfig};
use crate::error::{Error, Result};
use crate::numkit::AdamWConfig;
use crate::rewards::{GridFamily, SeqRewardConfig};

#[derive(Clone, Debug, PartialEq)]
pub enum EnvSection {
    Grid(GridConfig),
    Sequence(SeqConfig),
}

impl EnvSection {
    pub fn kind(&self) -> &'static str {
        match self {
            EnvSection::Grid(_) => "grid",
            EnvSection::Sequence(_) => "sequence",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRewardSection {
    pub family: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqRewardSection {
    pub cutoff: f64,
    pub temperature: f64,
    pub clip_min: f64,
    pub clip_max: f64,
    /// `synthetic` or `command`.
    pub scorer: String,
    /// Program and arguments of an external scorer.
    pub command: Vec<String>,
}

impl SeqRewardSection {
    pub fn shaping(&self) -> SeqRewardConfig {
        SeqRewardConfig {
            cutoff: self.cutoff,
            temperature: self.temperature,
            clip_min: self.clip_min,
            clip_max: self.clip_max,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RewardSection {
    Grid(GridRewardSection),
    Sequence(SeqRewardSection),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSection {
    pub epochs: u64,
    pub batch: usize,
    pub epsilon: f64,
    pub lr_pf: f64,
    pub lr_pb: f64,
    pub lr_log_z: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Learning rates decay geometrically to this fraction by the last epoch.
    pub lr_final_scale: f64,
    /// Extra checkpoint cadence in epochs; 0 keeps only schedule checkpoints.
    pub checkpoint_every: u64,
}

impl TrainSection {
    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig {
            lr_forward: self.lr_pf,
            lr_backward: self.lr_pb,
            lr_log_z: self.lr_log_z,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    /// Learning-rate multiplier for the step that starts after `done` epochs.
    pub fn lr_scale(&self, done: u64) -> f64 {
        if self.lr_final_scale == 1.0 || self.epochs == 0 {
            return 1.0;
        }
        self.lr_final_scale.powf(done as f64 / self.epochs as f64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Tb,
    Boosted,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostSection {
    /// Loss used by boosters; `tb` trains them independently.
    pub loss: LossKind,
    /// Epochs after which a booster is spawned.
    pub epochs: Vec<u64>,
    pub alpha: f64,
    /// Optional per-booster α; empty means `alpha` for all.
    pub alphas: Vec<f64>,
    pub delta: f64,
    pub k_train: usize,
    pub b_eval: usize,
}

impl BoostSection {
    /// α of booster `j` (1-based; 0 is the baseline).
    pub fn alpha_of(&self, j: usize) -> f64 {
        if j >= 1 && !self.alphas.is_empty() {
            self.alphas[j - 1]
        } else {
            self.alpha
        }
    }

    pub fn boost_config(&self, j: usize) -> BoostConfig {
        BoostConfig {
            alpha: self.alpha_of(j),
            delta: self.delta,
            k_train: self.k_train,
            b_eval: self.b_eval,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSection {
    pub every: u64,
    /// Sequences drawn per evaluation.
    pub n_samples: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub run_id: String,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub env: EnvSection,
    pub reward: RewardSection,
    pub policy: PolicyConfig,
    pub train: TrainSection,
    pub boost: BoostSection,
    pub eval: EvalSection,
}

fn to_value<T: Serialize>(v: &T) -> Value {
    Value::try_from(v).expect("config sections serialise to TOML")
}

impl RunConfig {
    pub fn default_for(kind: &str) -> Result<RunConfig> {
        match kind {
            "grid" => Ok(RunConfig {
                run_id: "grid".into(),
                output_dir: "runs".into(),
                seed: 10,
                env: EnvSection::Grid(GridConfig::new(15)?),
                reward: RewardSection::Grid(GridRewardSection {
                    family: GridFamily::Rings.to_string(),
                }),
                policy: PolicyConfig::default(),
                train: TrainSection {
                    epochs: 10_000,
                    batch: 128,
                    epsilon: 0.0,
                    lr_pf: 1e-2,
                    lr_pb: 1e-2,
                    lr_log_z: 5e-2,
                    beta1: 0.9,
                    beta2: 0.999,
                    adam_eps: 1e-8,
                    weight_decay: 0.0,
                    lr_final_scale: 1.0,
                    checkpoint_every: 1000,
                },
                boost: BoostSection {
                    loss: LossKind::Boosted,
                    epochs: vec![3000, 6000],
                    alpha: 1.0,
                    alphas: Vec::new(),
                    delta: 1e-12,
                    k_train: 1,
                    b_eval: 10,
                },
                eval: EvalSection {
                    every: 100,
                    n_samples: 1000,
                    threshold: 0.94,
                },
            }),
            "sequence" => {
                let shaping = SeqRewardConfig::default();
                Ok(RunConfig {
                    run_id: "sequence".into(),
                    output_dir: "runs".into(),
                    seed: 10,
                    env: EnvSection::Sequence(SeqConfig::default()),
                    reward: RewardSection::Sequence(SeqRewardSection {
                        cutoff: shaping.cutoff,
                        temperature: shaping.temperature,
                        clip_min: shaping.clip_min,
                        clip_max: shaping.clip_max,
                        scorer: "synthetic".into(),
                        command: Vec::new(),
                    }),
                    policy: PolicyConfig {
                        hidden: 128,
                        layers: 1,
                        embed_dim: 64,
                    },
                    train: TrainSection {
                        epochs: 3000,
                        batch: 4096,
                        epsilon: 0.0,
                        lr_pf: 5e-2,
                        lr_pb: 0.0,
                        lr_log_z: 1e-1,
                        beta1: 0.9,
                        beta2: 0.999,
                        adam_eps: 1e-8,
                        weight_decay: 0.0,
                        lr_final_scale: 1.0,
                        checkpoint_every: 600,
                    },
                    boost: BoostSection {
                        loss: LossKind::Boosted,
                        epochs: vec![1200, 2400],
                        alpha: 1.0,
                        alphas: Vec::new(),
                        delta: 1e-12,
                        k_train: 1,
                        b_eval: 10,
                    },
                    eval: EvalSection {
                        every: 50,
                        n_samples: 1000,
                        threshold: 0.94,
                    },
                })
            }
            other => Err(Error::config("env.kind", format!("unknown environment `{other}` (grid | sequence)"))),
        }
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new();
        t.insert("run_id".into(), Value::String(self.run_id.clone()));
        t.insert("output_dir".into(), Value::String(self.output_dir.to_string_lossy().into_owned()));
        t.insert("seed".into(), Value::Integer(self.seed as i64));
        let mut env = match &self.env {
            EnvSection::Grid(g) => to_value(g),
            EnvSection::Sequence(s) => to_value(s),
        };
        env.as_table_mut()
            .expect("table")
            .insert("kind".into(), Value::String(self.env.kind().into()));
        t.insert("env".into(), env);
        t.insert(
            "reward".into(),
            match &self.reward {
                RewardSection::Grid(r) => to_value(r),
                RewardSection::Sequence(r) => to_value(r),
            },
        );
        t.insert("policy".into(), to_value(&self.policy));
        t.insert("train".into(), to_value(&self.train));
        t.insert("boost".into(), to_value(&self.boost));
        t.insert("eval".into(), to_value(&self.eval));
        t
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(&self.to_table()).expect("config serialises")
    }

    /// Parses `text`, applies `key=value` overrides and validates.
    pub fn parse(text: &str, overrides: &[String], origin: &str) -> Result<RunConfig> {
        let mut user: Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config(origin, e.message().to_string()))?;
        for o in overrides {
            apply_override(&mut user, o)?;
        }
        let kind = match user.get("env").and_then(|e| e.get("kind")) {
            None => "grid".to_string(),
            Some(Value::String(s)) => s.clone(),
            Some(other) => return Err(Error::config("env.kind", format!("expected a string, got {}", other.type_str()))),
        };
        let mut merged = RunConfig::default_for(&kind)?.to_table();
        merge(&mut merged, &user, "")?;
        let cfg = RunConfig::from_table(&merged)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read: {e}")))?;
        RunConfig::parse(&text, overrides, &path.display().to_string())
    }

    fn from_table(t: &Table) -> Result<RunConfig> {
        let env_t = t["env"].as_table().expect("merged table").clone();
        let kind = env_t["kind"].as_str().expect("merged kind").to_string();
        let mut env_fields = env_t;
        env_fields.remove("kind");
        let env_v = Value::Table(env_fields);
        let (env, reward) = match kind.as_str() {
            "grid" => (
                EnvSection::Grid(section(&env_v, "env")?),
                RewardSection::Grid(section(&t["reward"], "reward")?),
            ),
            _ => (
                EnvSection::Sequence(section(&env_v, "env")?),
                RewardSection::Sequence(section(&t["reward"], "reward")?),
            ),
        };
        Ok(RunConfig {
            run_id: section(&t["run_id"], "run_id")?,
            output_dir: section(&t["output_dir"], "output_dir")?,
            seed: section(&t["seed"], "seed")?,
            env,
            reward,
            policy: section(&t["policy"], "policy")?,
            train: section(&t["train"], "train")?,
            boost: section(&t["boost"], "boost")?,
            eval: section(&t["eval"], "eval")?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.run_id.is_empty() || self.run_id.contains(['/', '\\']) {
            return Err(Error::config("run_id", "must be a non-empty name without path separators"));
        }
        match &self.env {
            EnvSection::Grid(g) => {
                GridConfig::new(g.half_width)?;
                if g.n_freq == 0 {
                    return Err(Error::config("env.n_freq", "must be >= 1"));
                }
            }
            EnvSection::Sequence(s) => s.validate()?,
        }
        match &self.reward {
            RewardSection::Grid(r) => {
                r.family.parse::<GridFamily>()?;
            }
            RewardSection::Sequence(r) => {
                r.shaping().validate()?;
                match r.scorer.as_str() {
                    "synthetic" => {}
                    "command" if !r.command.is_empty() => {}
                    "command" => return Err(Error::config("reward.command", "needs a program to run")),
                    other => {
                        return Err(Error::config("reward.scorer", format!("unknown scorer `{other}` (synthetic | command)")))
                    }
                }
            }
        }
        if self.policy.hidden == 0 || self.policy.layers == 0 || self.policy.embed_dim == 0 {
            return Err(Error::config("policy", "hidden, layers and embed_dim must be >= 1"));
        }
        let t = &self.train;
        if t.batch == 0 {
            return Err(Error::config("train.batch", "must be >= 1"));
        }
        if !(0.0..=1.0).contains(&t.epsilon) {
            return Err(Error::config("train.epsilon", "must lie in [0, 1]"));
        }
        if !(t.lr_final_scale > 0.0 && t.lr_final_scale <= 1.0) {
            return Err(Error::config("train.lr_final_scale", "must lie in (0, 1]"));
        }
        t.optimizer().validate()?;
        let b = &self.boost;
        for (i, w) in b.epochs.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::config(format!("boost.epochs[{}]", i + 1), "activation epochs must be strictly increasing"));
            }
        }
        if let Some(&last) = b.epochs.last() {
            if last >= t.epochs {
                return Err(Error::config("boost.epochs", format!("activation {last} must be < train.epochs = {}", t.epochs)));
            }
        }
        if b.epochs.first() == Some(&0) {
            return Err(Error::config("boost.epochs[0]", "a booster needs a trained baseline; use an epoch >= 1"));
        }
        if !b.alphas.is_empty() && b.alphas.len() != b.epochs.len() {
            return Err(Error::config(
                "boost.alphas",
                format!("has {} entries for {} boosters", b.alphas.len(), b.epochs.len()),
            ));
        }
        for (i, &a) in b.alphas.iter().enumerate() {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::config(format!("boost.alphas[{i}]"), "must lie in [0, 1]"));
            }
        }
        b.boost_config(0).validate()?;
        if self.eval.every == 0 {
            return Err(Error::config("eval.every", "must be >= 1"));
        }
        if !(self.eval.threshold > 0.0 && self.eval.threshold < 1.0) {
            return Err(Error::config("eval.threshold", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

fn section<T: DeserializeOwned>(v: &Value, path: &str) -> Result<T> {
    v.clone()
        .try_into()
        .map_err(|e: toml::de::Error| Error::config(path, e.message().to_string()))
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

/// Overlays `user` onto `base`, rejecting unknown keys and type changes.
fn merge(base: &mut Table, user: &Table, prefix: &str) -> Result<()> {
    for (k, v) in user {
        let path = join(prefix, k);
        let Some(slot) = base.get_mut(k) else {
            return Err(Error::config(path, "unknown key"));
        };
        match (slot, v) {
            (Value::Table(b), Value::Table(u)) => merge(b, u, &path)?,
            (slot @ Value::Float(_), Value::Integer(i)) => *slot = Value::Float(*i as f64),
            (slot, v) if std::mem::discriminant(slot) == std::mem::discriminant(v) => *slot = v.clone(),
            (slot, v) => {
                return Err(Error::config(
                    path,
                    format!("expected {}, got {}", slot.type_str(), v.type_str()),
                ))
            }
        }
    }
    Ok(())
}

/// `a.b.c=value`; the value is read as TOML, falling back to a bare string.
fn apply_override(t: &mut Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let value = match format!("v = {raw}").parse::<Table>() {
        Ok(mut parsed) => parsed.remove("v").expect("parsed key"),
        Err(_) => Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.split('.').collect();
    let mut cur = t;
    for p in &parts[..parts.len() - 1] {
        let next = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = next
            .as_table_mut()
            .ok_or_else(|| Error::config(key, format!("`{p}` is not a section")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        for kind in ["grid", "sequence"] {
            let cfg = RunConfig::default_for(kind).unwrap();
            cfg.validate().unwrap();
            let again = RunConfig::parse(&cfg.to_toml(), &[], "test").unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn overrides_and_partial_files() {
        let cfg = RunConfig::parse(
            "[env]\nkind = \"grid\"\nhalf_width = 2\n[train]\nepochs = 50\n",
            &["boost.epochs=[]".into(), "train.epsilon=0.2".into(), "run_id=abc".into()],
            "inline",
        )
        .unwrap();
        assert_eq!(cfg.env, EnvSection::Grid(GridConfig::new(2).unwrap()));
        assert_eq!(cfg.train.epochs, 50);
        assert_eq!(cfg.train.epsilon, 0.2);
        assert!(cfg.boost.epochs.is_empty());
        assert_eq!(cfg.run_id, "abc");
        assert_eq!(cfg.train.batch, 128);
    }

    fn field_of(r: Result<RunConfig>) -> String {
        match r {
            Err(Error::Config { path, .. }) => path,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        assert_eq!(field_of(RunConfig::parse("[train]\nbatchh = 3\n", &[], "x")), "train.batchh");
        assert_eq!(field_of(RunConfig::parse("[train]\nbatch = \"big\"\n", &[], "x")), "train.batch");
        assert_eq!(field_of(RunConfig::parse("[reward]\nfamily = \"spiral\"\n", &[], "x")), "reward.family");
        assert_eq!(
            field_of(RunConfig::parse("[boost]\nepochs = [3000, 2000]\n", &[], "x")),
            "boost.epochs[1]"
        );
        assert_eq!(
            field_of(RunConfig::parse("[boost]\nepochs = [3000, 20000]\n", &[], "x")),
            "boost.epochs"
        );
        assert_eq!(field_of(RunConfig::parse("[env]\nkind = \"maze\"\n", &[], "x")), "env.kind");
        assert_eq!(
            field_of(RunConfig::parse("[env]\nkind = \"sequence\"\n[reward]\nfamily = \"rings\"\n", &[], "x")),
            "reward.family"
        );
    }

    #[test]
    fn sequence_defaults_follow_the_peptide_setup() {
        let cfg = RunConfig::parse("[env]\nkind = \"sequence\"\n", &[], "x").unwrap();
        assert_eq!(cfg.train.batch, 4096);
        assert_eq!(cfg.train.lr_pf, 5e-2);
        assert_eq!(cfg.train.lr_log_z, 1e-1);
        assert_eq!(cfg.boost.epochs, vec![1200, 2400]);
        assert_eq!(cfg.eval.every, 50);
    }

    #[test]
    fn lr_scale_is_geometric() {
        let mut t = RunConfig::default_for("grid").unwrap().train;
        assert_eq!(t.lr_scale(500), 1.0);
        t.lr_final_scale = 1e-2;
        t.epochs = 100;
        assert!((t.lr_scale(50) - 0.1).abs() < 1e-12);
        assert_eq!(t.lr_scale(0), 1.0);
    }
}
