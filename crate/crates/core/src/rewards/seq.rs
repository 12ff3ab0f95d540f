//! Sequence rewards: the logit-margin mapping and pluggable probability scorers.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::RewardModel;
use crate::env::Sequence;
use crate::error::{Error, Result};
use crate::numkit::{logit, sigmoid};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqRewardConfig {
    pub cutoff: f64,
    pub temperature: f64,
    pub clip_min: f64,
    pub clip_max: f64,
}

impl Default for SeqRewardConfig {
    fn default() -> Self {
        SeqRewardConfig {
            cutoff: 0.94,
            temperature: 0.3,
            clip_min: -30.0,
            clip_max: 0.0,
        }
    }
}

impl SeqRewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff < 1.0) {
            return Err(Error::config("reward.cutoff", "must lie in (0, 1)"));
        }
        if self.temperature <= 0.0 {
            return Err(Error::config("reward.temperature", "must be > 0"));
        }
        if self.clip_min >= self.clip_max {
            return Err(Error::config("reward.clip_min", "must be below reward.clip_max"));
        }
        Ok(())
    }
}

/// `log R` for probability `p` and length `len`; length 0 gets the lower clip.
pub fn seq_log_reward(p: f64, len: usize, cfg: &SeqRewardConfig) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("probability {p} outside (0, 1)")));
    }
    if len == 0 {
        return Ok(cfg.clip_min);
    }
    if p >= cfg.cutoff {
        return Ok(0.0_f64.clamp(cfg.clip_min, cfg.clip_max));
    }
    let margin = logit(p) - logit(cfg.cutoff);
    Ok((len as f64 / cfg.temperature * margin).clamp(cfg.clip_min, cfg.clip_max))
}

/// Deterministic map from a sequence to a probability in `(0, 1)`.
pub trait ProxyScorer: Send + Sync {
    fn score(&self, seq: &Sequence) -> Result<f64>;
}

/// Maximum over several scorers.
pub struct MaxScorer(pub Vec<Box<dyn ProxyScorer>>);

impl ProxyScorer for MaxScorer {
    fn score(&self, seq: &Sequence) -> Result<f64> {
        let mut best = f64::NEG_INFINITY;
        for s in &self.0 {
            best = best.max(s.score(seq)?);
        }
        if best.is_finite() {
            Ok(best)
        } else {
            Err(Error::Scorer("max over an empty scorer list".into()))
        }
    }
}

/// Motif-matching scorer used in place of a trained classifier.
///
/// Against each motif `m`, a sequence `y` gets
/// `s = base − mismatch·(position mismatches over the overlap) − length·| |y| − |m| |`
/// and the score is `max_m sigmoid(s)`. With the defaults, `y` clears the 0.94
/// cutoff exactly when it has a motif's length and differs from it in at most one position.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScorer {
    pub motifs: Vec<Sequence>,
    pub base: f64,
    pub mismatch_penalty: f64,
    pub length_penalty: f64,
    pub vocab: usize,
}

pub const DEFAULT_MOTIFS: [&str; 8] = ["KLW", "FRY", "GIKR", "WWHP", "AMVD", "RRLKE", "NPSTQ", "HYKFG"];

impl Default for SyntheticScorer {
    fn default() -> Self {
        SyntheticScorer::new(DEFAULT_MOTIFS.iter().map(|m| m.parse().expect("valid motif")).collect(), 20)
    }
}

impl SyntheticScorer {
    pub fn new(motifs: Vec<Sequence>, vocab: usize) -> Self {
        SyntheticScorer {
            motifs,
            base: 4.0,
            mismatch_penalty: 1.2,
            length_penalty: 1.5,
            vocab,
        }
    }

    fn logit_against(&self, y: &[u8], m: &[u8]) -> f64 {
        let mismatches = y.iter().zip(m).filter(|(a, b)| a != b).count();
        let len_diff = y.len().abs_diff(m.len());
        self.base - self.mismatch_penalty * mismatches as f64 - self.length_penalty * len_diff as f64
    }

    /// Every sequence scoring at least `threshold` within `radius` substitutions
    /// and `radius` length changes of some motif.
    pub fn high_set(&self, threshold: f64, radius: usize) -> Result<BTreeSet<Sequence>> {
        let mut out = BTreeSet::new();
        for m in &self.motifs {
            let lo = m.len().saturating_sub(radius).max(1);
            for len in lo..=m.len() + radius {
                let mut cand = vec![0u8; len];
                self.grow(&m.0, &mut cand, 0, 0, radius, threshold, &mut out)?;
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &self,
        motif: &[u8],
        cand: &mut Vec<u8>,
        pos: usize,
        changed: usize,
        radius: usize,
        threshold: f64,
        out: &mut BTreeSet<Sequence>,
    ) -> Result<()> {
        if pos == cand.len() {
            let seq = Sequence(cand.clone());
            if self.score(&seq)? >= threshold {
                out.insert(seq);
            }
            return Ok(());
        }
        for l in 1..self.vocab as u8 {
            let cost = match motif.get(pos) {
                Some(&orig) => usize::from(l != orig),
                None => 0,
            };
            if changed + cost > radius {
                continue;
            }
            cand[pos] = l;
            self.grow(motif, cand, pos + 1, changed + cost, radius, threshold, out)?;
        }
        Ok(())
    }
}

impl ProxyScorer for SyntheticScorer {
    fn score(&self, seq: &Sequence) -> Result<f64> {
        if let Some(&bad) = seq.0.iter().find(|&&t| t == 0 || t as usize >= self.vocab) {
            return Err(Error::Scorer(format!("token {bad} is not a letter")));
        }
        let best = self
            .motifs
            .iter()
            .map(|m| self.logit_against(&seq.0, &m.0))
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(sigmoid(best))
    }
}

struct ProcessIo {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
    cache: HashMap<Sequence, f64>,
}

/// External scorer: a child process reading one sequence per line on stdin and
/// answering one decimal probability per line on stdout.
///
/// Answers are clamped to `[1e-6, 1 − 1e-6]` and cached per sequence.
pub struct ProcessScorer {
    io: Mutex<ProcessIo>,
}

impl ProcessScorer {
    pub fn spawn(program: &str, args: &[String]) -> Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Scorer(format!("cannot start {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ProcessScorer {
            io: Mutex::new(ProcessIo {
                _child: child,
                stdin,
                stdout,
                cache: HashMap::new(),
            }),
        })
    }
}

impl ProxyScorer for ProcessScorer {
    fn score(&self, seq: &Sequence) -> Result<f64> {
        let mut io = self.io.lock().map_err(|_| Error::Scorer("scorer lock poisoned".into()))?;
        if let Some(&p) = io.cache.get(seq) {
            return Ok(p);
        }
        writeln!(io.stdin, "{seq}")?;
        io.stdin.flush()?;
        let mut line = String::new();
        if io.stdout.read_line(&mut line)? == 0 {
            return Err(Error::Scorer("scorer process closed its output".into()));
        }
        let p: f64 = line
            .trim()
            .parse()
            .map_err(|_| Error::Scorer(format!("unparseable answer {:?} for {seq}", line.trim())))?;
        if !p.is_finite() {
            return Err(Error::Scorer(format!("non-finite answer for {seq}")));
        }
        let p = p.clamp(1e-6, 1.0 - 1e-6);
        io.cache.insert(seq.clone(), p);
        Ok(p)
    }
}

/// Sequence reward: scorer probability passed through [`seq_log_reward`].
#[derive(Clone)]
pub struct SeqReward {
    pub scorer: Arc<dyn ProxyScorer>,
    pub cfg: SeqRewardConfig,
}

impl SeqReward {
    pub fn new(scorer: Arc<dyn ProxyScorer>, cfg: SeqRewardConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SeqReward { scorer, cfg })
    }
}

impl RewardModel<Sequence> for SeqReward {
    fn log_reward(&self, x: &Sequence) -> Result<f64> {
        if x.is_empty() {
            return Ok(self.cfg.clip_min);
        }
        seq_log_reward(self.scorer.score(x)?, x.len(), &self.cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(s: &str) -> Sequence {
        s.parse().unwrap()
    }

    #[test]
    fn mapping_examples() {
        let cfg = SeqRewardConfig::default();
        assert_eq!(seq_log_reward(0.97, 4, &cfg).unwrap(), 0.0);
        assert_eq!(seq_log_reward(0.94, 4, &cfg).unwrap(), 0.0);
        let delta = 0.0 - (0.94f64 / 0.06).ln();
        assert!((delta + 2.7515).abs() < 1e-4);
        assert!((5.0 / 0.3 * delta + 45.86).abs() < 1e-2);
        assert_eq!(seq_log_reward(0.5, 5, &cfg).unwrap(), -30.0);
        assert!(matches!(seq_log_reward(1.0, 3, &cfg), Err(Error::Domain(_))));
        assert!(matches!(seq_log_reward(0.0, 3, &cfg), Err(Error::Domain(_))));
        assert_eq!(seq_log_reward(0.6, 0, &cfg).unwrap(), -30.0);
    }

    #[test]
    fn synthetic_scorer_examples() {
        let s = SyntheticScorer::default();
        for m in DEFAULT_MOTIFS {
            assert!(s.score(&seq(m)).unwrap() >= 0.95);
        }
        assert!(s.score(&seq("D")).unwrap() <= 0.5);
        let x = seq("KLWAAMD");
        assert_eq!(s.score(&x).unwrap(), s.score(&x).unwrap());
        assert!(s.score(&seq("KLY")).unwrap() >= 0.94);
        assert!(s.score(&seq("KAY")).unwrap() < 0.94);
        assert!(s.score(&seq("KLWA")).unwrap() < 0.94);
    }

    #[test]
    fn high_set_matches_brute_force_on_small_vocab() {
        let motifs = vec![Sequence(vec![1, 2, 3]), Sequence(vec![3, 3, 1, 2])];
        let s = SyntheticScorer::new(motifs, 5);
        let mut brute = BTreeSet::new();
        for len in 1..=6 {
            let total = 4usize.pow(len as u32);
            for code in 0..total {
                let mut c = code;
                let toks: Vec<u8> = (0..len)
                    .map(|_| {
                        let t = (c % 4) as u8 + 1;
                        c /= 4;
                        t
                    })
                    .collect();
                let sq = Sequence(toks);
                if s.score(&sq).unwrap() >= 0.94 {
                    brute.insert(sq);
                }
            }
        }
        assert_eq!(s.high_set(0.94, 2).unwrap(), brute);
    }

    #[test]
    fn default_high_set_is_large_enough() {
        let s = SyntheticScorer::default();
        let high = s.high_set(0.94, 2).unwrap();
        assert!(high.len() >= 200, "{}", high.len());
        assert!(high.iter().all(|x| (3..=5).contains(&x.len())));
    }
}
