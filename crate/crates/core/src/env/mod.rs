//! Environments: state DAGs with forward/backward masks and policy encodings.

pub mod grid;
pub mod seq;

use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::numkit::{Arch, NetInput};

pub use grid::{GridAction, GridConfig, GridEnv, GridPos, GridState};
pub use seq::{SeqConfig, SeqEnv, SeqState, Sequence, AMINO_ALPHABET, STOP};

/// How `P_B` is obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BackwardKind {
    /// A learned, masked categorical backward policy.
    Learned,
    /// Exactly one parent per state, so `log P_B = 0`.
    Deterministic,
}

/// Network sizes shared by all environments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    pub hidden: usize,
    pub layers: usize,
    pub embed_dim: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            hidden: 128,
            layers: 2,
            embed_dim: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyArch {
    pub forward: Arch,
    pub backward: Option<Arch>,
}

/// A finite DAG of states rooted at a single initial state.
///
/// Backward action `a` at state `s` undoes the forward action `a` that led into `s`,
/// so a backward path read in reverse is a forward action sequence.
pub trait Environment: Send + Sync {
    type State: Clone + Debug + PartialEq + Send + Sync;
    type Terminal: Clone + Debug + Eq + Ord + Hash + Send + Sync;

    fn num_actions(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    fn is_terminal(&self, s: &Self::State) -> bool;
    fn forward_mask(&self, s: &Self::State) -> Vec<bool>;
    fn step(&self, s: &Self::State, action: usize) -> Result<Self::State>;
    /// Terminal object of a finished state.
    fn terminal(&self, s: &Self::State) -> Self::Terminal;
    fn terminal_state(&self, x: &Self::Terminal) -> Self::State;
    fn is_initial(&self, s: &Self::State) -> bool;
    fn forward_input(&self, states: &[&Self::State]) -> NetInput;

    fn backward_kind(&self) -> BackwardKind;
    fn backward_mask(&self, s: &Self::State) -> Vec<bool>;
    fn step_back(&self, s: &Self::State, action: usize) -> Result<Self::State>;
    fn backward_input(&self, states: &[&Self::State]) -> NetInput {
        self.forward_input(states)
    }

    fn policy_arch(&self, cfg: &PolicyConfig) -> PolicyArch;
}
