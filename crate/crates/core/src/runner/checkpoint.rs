use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::boosting::Ensemble;
use crate::error::{Error, Result};
use crate::eval::HighRewardArchive;
use crate::gfn::{BranchCounts, StepStats};

pub const CHECKPOINT_FORMAT: &str = "bgfn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Stream ids carved out of one seed.
pub const STREAM_ROLLOUT: u64 = 1;
pub const STREAM_RESIDUAL: u64 = 2;
pub const STREAM_EVAL: u64 = 3;

pub fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Training statistics accumulated since the last evaluation.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pending {
    pub loss_sum: f64,
    pub steps: u64,
    pub branches: BranchCounts,
}

impl Pending {
    pub fn add(&mut self, s: &StepStats) {
        self.loss_sum += s.mean_loss;
        self.steps += 1;
        self.branches.tb += s.branches.tb;
        self.branches.boosted += s.branches.boosted;
        self.branches.nabla += s.branches.nabla;
        self.branches.clamped += s.branches.clamped;
    }
}

/// Everything needed to continue a run exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    /// Completed epochs.
    pub epoch: u64,
    pub ensemble: Ensemble,
    pub rollout_rng: ChaCha8Rng,
    pub residual_rng: ChaCha8Rng,
    pub eval_rng: ChaCha8Rng,
    pub archive: HighRewardArchive,
    pub pending: Pending,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// Resolved configuration as TOML.
    pub config: String,
    pub state: RunState,
}

impl Checkpoint {
    pub fn new(config: String, state: RunState) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config,
            state,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let err = |m: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message: m,
        };
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        for s in self.state.ensemble.stages() {
            s.params.check_finite()?;
        }
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text)?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let err = |m: String| Error::Checkpoint {
            path: path.to_path_buf(),
            message: m,
        };
        let text = fs::read_to_string(path).map_err(|e| err(format!("cannot read: {e}")))?;
        let head: serde_json::Value = serde_json::from_str(&text).map_err(|e| err(format!("not JSON: {e}")))?;
        let format = head.get("format").and_then(|v| v.as_str()).unwrap_or("<missing>");
        let version = head.get("version").and_then(|v| v.as_u64());
        if format != CHECKPOINT_FORMAT || version != Some(CHECKPOINT_VERSION as u64) {
            return Err(err(format!(
                "found format {format:?} version {}, this build reads {CHECKPOINT_FORMAT:?} version {CHECKPOINT_VERSION}",
                version.map_or("<missing>".to_string(), |v| v.to_string())
            )));
        }
        serde_json::from_value(head).map_err(|e| err(format!("malformed: {e}")))
    }
}
