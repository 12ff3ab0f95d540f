//! Variable-length token sequences built left to right. Action 0 writes STOP
//! (and doubles as the padding token); actions `1..vocab` append a token.
//! Every state has exactly one parent, so the backward policy is fixed.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{BackwardKind, Environment, PolicyArch, PolicyConfig};
use crate::error::{Error, Result};
use crate::numkit::{write_sinusoidal_position, Arch, Matrix, NetInput};

pub const STOP: u8 = 0;

/// Letters for token indices `1..=19` (amino acids without cysteine).
pub const AMINO_ALPHABET: &str = "ADEFGHIKLMNPQRSTVWY";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqConfig {
    /// Number of actions including STOP.
    pub vocab: usize,
    pub max_len: usize,
    pub window: usize,
    pub pos_dim: usize,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig {
            vocab: 20,
            max_len: 10,
            window: 6,
            pos_dim: 16,
        }
    }
}

impl SeqConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab < 2 || self.vocab > AMINO_ALPHABET.len() + 1 {
            return Err(Error::config("env.vocab", format!("must be in 2..=20, got {}", self.vocab)));
        }
        if self.max_len == 0 {
            return Err(Error::config("env.max_len", "must be >= 1"));
        }
        if self.window == 0 || self.window > self.max_len {
            return Err(Error::config("env.window", "must satisfy 1 <= window <= max_len"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeqState {
    pub tokens: Vec<u8>,
    pub terminated: bool,
}

impl SeqState {
    pub fn t(&self) -> usize {
        self.tokens.len()
    }

    /// Fixed-width buffer, right-padded with 0.
    pub fn buffer(&self, max_len: usize) -> Vec<u8> {
        let mut b = self.tokens.clone();
        b.resize(max_len, 0);
        b
    }
}

/// A finished sequence of non-STOP tokens.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Sequence(pub Vec<u8>);

impl Sequence {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn tokens(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Display for Sequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let letters = AMINO_ALPHABET.as_bytes();
        for &t in &self.0 {
            let c = letters.get(t as usize - 1).copied().unwrap_or(b'?');
            write!(f, "{}", c as char)?;
        }
        Ok(())
    }
}

impl FromStr for Sequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| {
                AMINO_ALPHABET
                    .find(c.to_ascii_uppercase())
                    .map(|i| (i + 1) as u8)
                    .ok_or_else(|| Error::Usage(format!("letter {c:?} not in alphabet {AMINO_ALPHABET}")))
            })
            .collect::<Result<Vec<_>>>()
            .map(Sequence)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeqEnv {
    pub cfg: SeqConfig,
}

impl SeqEnv {
    pub fn new(cfg: SeqConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(SeqEnv { cfg })
    }

    pub fn seq_step(&self, s: &SeqState, a: u8) -> Result<SeqState> {
        if s.terminated {
            return Err(Error::Env("step on a terminated sequence".into()));
        }
        if a as usize >= self.cfg.vocab {
            return Err(Error::Env(format!("token {a} outside vocabulary of {}", self.cfg.vocab)));
        }
        if s.t() == self.cfg.max_len && a != STOP {
            return Err(Error::Env(format!("buffer full at length {}; only STOP allowed", s.t())));
        }
        let mut next = s.clone();
        if a == STOP {
            next.terminated = true;
        } else {
            next.tokens.push(a);
        }
        Ok(next)
    }

    /// Log-probability of the unique backward move; always `0`.
    pub fn seq_backward_logprob(&self, s: &SeqState) -> Result<f64> {
        if s.t() == 0 && !s.terminated {
            return Err(Error::Env("the empty prefix has no parent".into()));
        }
        Ok(0.0)
    }

    /// Last `window` written tokens, left-filled with the padding index.
    pub fn context_window(&self, s: &SeqState) -> Vec<u8> {
        let w = self.cfg.window;
        let mut out = vec![0u8; w];
        let take = s.t().min(w);
        out[w - take..].copy_from_slice(&s.tokens[s.t() - take..]);
        out
    }

    pub fn terminal_force_mask(&self, s: &SeqState) -> Vec<bool> {
        let mut m = vec![true; self.cfg.vocab];
        if s.t() >= self.cfg.max_len {
            m.iter_mut().skip(1).for_each(|v| *v = false);
        }
        m
    }

    /// Forward action sequence (including the final STOP) that produces `x`.
    pub fn actions_for(&self, x: &Sequence) -> Vec<usize> {
        x.0.iter().map(|&t| t as usize).chain(std::iter::once(STOP as usize)).collect()
    }
}

impl Environment for SeqEnv {
    type State = SeqState;
    type Terminal = Sequence;

    fn num_actions(&self) -> usize {
        self.cfg.vocab
    }

    fn initial_state(&self) -> SeqState {
        SeqState::default()
    }

    fn is_terminal(&self, s: &SeqState) -> bool {
        s.terminated
    }

    fn forward_mask(&self, s: &SeqState) -> Vec<bool> {
        if s.terminated {
            return vec![false; self.cfg.vocab];
        }
        self.terminal_force_mask(s)
    }

    fn step(&self, s: &SeqState, action: usize) -> Result<SeqState> {
        let a = u8::try_from(action).map_err(|_| Error::Env(format!("action {action} out of range")))?;
        self.seq_step(s, a)
    }

    fn terminal(&self, s: &SeqState) -> Sequence {
        Sequence(s.tokens.clone())
    }

    fn terminal_state(&self, x: &Sequence) -> SeqState {
        SeqState {
            tokens: x.0.clone(),
            terminated: true,
        }
    }

    fn is_initial(&self, s: &SeqState) -> bool {
        s.t() == 0 && !s.terminated
    }

    fn forward_input(&self, states: &[&SeqState]) -> NetInput {
        let w = self.cfg.window;
        let mut ids = Vec::with_capacity(states.len() * w);
        let mut extra = Matrix::zeros(states.len(), self.cfg.pos_dim);
        for (r, s) in states.iter().enumerate() {
            ids.extend(self.context_window(s).into_iter().map(usize::from));
            write_sinusoidal_position(s.t(), extra.row_mut(r));
        }
        NetInput::Tokens { ids, extra }
    }

    fn backward_kind(&self) -> BackwardKind {
        BackwardKind::Deterministic
    }

    fn backward_mask(&self, s: &SeqState) -> Vec<bool> {
        let mut m = vec![false; self.cfg.vocab];
        if s.terminated {
            m[STOP as usize] = true;
        } else if let Some(&last) = s.tokens.last() {
            m[last as usize] = true;
        }
        m
    }

    fn step_back(&self, s: &SeqState, action: usize) -> Result<SeqState> {
        if !self.backward_mask(s).get(action).copied().unwrap_or(false) {
            return Err(Error::Env(format!("backward action {action} invalid at {s:?}")));
        }
        let mut prev = s.clone();
        if s.terminated {
            prev.terminated = false;
        } else {
            prev.tokens.pop();
        }
        Ok(prev)
    }

    fn policy_arch(&self, cfg: &PolicyConfig) -> PolicyArch {
        PolicyArch {
            forward: Arch::Token {
                vocab: self.cfg.vocab,
                embed_dim: cfg.embed_dim,
                window: self.cfg.window,
                extra_dim: self.cfg.pos_dim,
                hidden: vec![cfg.hidden; cfg.layers],
                out: self.cfg.vocab,
            },
            backward: None,
        }
    }
}
