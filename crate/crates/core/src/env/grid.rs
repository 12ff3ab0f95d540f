//! Time-indexed square lattice. Positions span `-W..=W` per axis, every
//! episode takes exactly `T = 2W` steps, and the fifth action stays in place.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BackwardKind, Environment, PolicyArch, PolicyConfig};
use crate::error::{Error, Result};
use crate::numkit::{write_fourier_time_features, Arch, Matrix, NetInput};

pub const GRID_NUM_ACTIONS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridConfig {
    pub half_width: i32,
    pub n_freq: usize,
}

impl GridConfig {
    pub fn new(half_width: i32) -> Result<Self> {
        if half_width < 1 {
            return Err(Error::config("env.half_width", format!("must be >= 1, got {half_width}")));
        }
        Ok(GridConfig { half_width, n_freq: 8 })
    }

    pub fn horizon(&self) -> i32 {
        2 * self.half_width
    }

    pub fn side(&self) -> usize {
        (2 * self.half_width + 1) as usize
    }

    pub fn num_terminals(&self) -> usize {
        self.side() * self.side()
    }

    /// Observation width: `[x/W, y/W, t/T]` plus `2 * n_freq` Fourier features.
    pub fn feature_width(&self) -> usize {
        3 + 2 * self.n_freq
    }

    pub fn in_bounds(&self, x: i32, y: i32) -> bool {
        x.abs() <= self.half_width && y.abs() <= self.half_width
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridState {
    pub x: i32,
    pub y: i32,
    pub t: i32,
}

impl GridState {
    pub fn new(x: i32, y: i32, t: i32) -> Self {
        GridState { x, y, t }
    }
}

/// Terminal position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GridPos {
    pub x: i32,
    pub y: i32,
}

impl fmt::Display for GridPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.x, self.y)
    }
}

/// Action indices are fixed: right, left, up, down, stay.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GridAction {
    Right = 0,
    Left = 1,
    Up = 2,
    Down = 3,
    Stay = 4,
}

impl GridAction {
    pub const ALL: [GridAction; GRID_NUM_ACTIONS] =
        [GridAction::Right, GridAction::Left, GridAction::Up, GridAction::Down, GridAction::Stay];

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn delta(self) -> (i32, i32) {
        match self {
            GridAction::Right => (1, 0),
            GridAction::Left => (-1, 0),
            GridAction::Up => (0, 1),
            GridAction::Down => (0, -1),
            GridAction::Stay => (0, 0),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridEnv {
    pub cfg: GridConfig,
}

impl GridEnv {
    pub fn new(half_width: i32) -> Result<Self> {
        Ok(GridEnv {
            cfg: GridConfig::new(half_width)?,
        })
    }

    pub fn forward_mask_of(&self, s: &GridState) -> [bool; GRID_NUM_ACTIONS] {
        let mut m = [false; GRID_NUM_ACTIONS];
        if s.t >= self.cfg.horizon() {
            return m;
        }
        for a in GridAction::ALL {
            let (dx, dy) = a.delta();
            m[a as usize] = self.cfg.in_bounds(s.x + dx, s.y + dy);
        }
        m
    }

    pub fn backward_mask_of(&self, s: &GridState) -> [bool; GRID_NUM_ACTIONS] {
        let mut m = [false; GRID_NUM_ACTIONS];
        if s.t <= 0 {
            return m;
        }
        for a in GridAction::ALL {
            let (dx, dy) = a.delta();
            let (px, py) = (s.x - dx, s.y - dy);
            m[a as usize] = self.cfg.in_bounds(px, py) && px.abs() + py.abs() < s.t;
        }
        m
    }

    pub fn step_forward(&self, s: &GridState, a: GridAction) -> Result<GridState> {
        if !self.forward_mask_of(s)[a as usize] {
            return Err(Error::Env(format!("forward action {a:?} masked at {s:?}")));
        }
        let (dx, dy) = a.delta();
        Ok(GridState::new(s.x + dx, s.y + dy, s.t + 1))
    }

    pub fn step_backward(&self, s: &GridState, a: GridAction) -> Result<GridState> {
        if !self.backward_mask_of(s)[a as usize] {
            return Err(Error::Env(format!("backward action {a:?} masked at {s:?}")));
        }
        let (dx, dy) = a.delta();
        Ok(GridState::new(s.x - dx, s.y - dy, s.t - 1))
    }

    /// Writes `[x/W, y/W, t/T, fourier(t/T)]` into `out`.
    pub fn encode_into(&self, s: &GridState, out: &mut [f64]) {
        let w = self.cfg.half_width as f64;
        let u = s.t as f64 / self.cfg.horizon() as f64;
        out[0] = s.x as f64 / w;
        out[1] = s.y as f64 / w;
        out[2] = u;
        write_fourier_time_features(u, &mut out[3..]);
    }

    pub fn encode_observation(&self, s: &GridState) -> Vec<f64> {
        let mut v = vec![0.0; self.cfg.feature_width()];
        self.encode_into(s, &mut v);
        v
    }

    /// All `(2W+1)²` terminal positions, x-major.
    pub fn enumerate_terminals(&self) -> Vec<GridPos> {
        let w = self.cfg.half_width;
        let mut out = Vec::with_capacity(self.cfg.num_terminals());
        for x in -w..=w {
            for y in -w..=w {
                out.push(GridPos { x, y });
            }
        }
        out
    }

    /// Position of `p` in [`Self::enumerate_terminals`].
    pub fn terminal_index(&self, p: &GridPos) -> usize {
        let w = self.cfg.half_width;
        ((p.x + w) as usize) * self.cfg.side() + (p.y + w) as usize
    }

    fn encode_batch(&self, states: &[&GridState]) -> NetInput {
        let width = self.cfg.feature_width();
        let mut m = Matrix::zeros(states.len(), width);
        for (r, s) in states.iter().enumerate() {
            self.encode_into(s, m.row_mut(r));
        }
        NetInput::Dense(m)
    }

    fn action(a: usize) -> Result<GridAction> {
        GridAction::from_index(a).ok_or_else(|| Error::Env(format!("grid action index {a} out of range")))
    }
}

impl Environment for GridEnv {
    type State = GridState;
    type Terminal = GridPos;

    fn num_actions(&self) -> usize {
        GRID_NUM_ACTIONS
    }

    fn initial_state(&self) -> GridState {
        GridState::new(0, 0, 0)
    }

    fn is_terminal(&self, s: &GridState) -> bool {
        s.t == self.cfg.horizon()
    }

    fn forward_mask(&self, s: &GridState) -> Vec<bool> {
        self.forward_mask_of(s).to_vec()
    }

    fn step(&self, s: &GridState, action: usize) -> Result<GridState> {
        self.step_forward(s, Self::action(action)?)
    }

    fn terminal(&self, s: &GridState) -> GridPos {
        GridPos { x: s.x, y: s.y }
    }

    fn terminal_state(&self, x: &GridPos) -> GridState {
        GridState::new(x.x, x.y, self.cfg.horizon())
    }

    fn is_initial(&self, s: &GridState) -> bool {
        s.t == 0
    }

    fn forward_input(&self, states: &[&GridState]) -> NetInput {
        self.encode_batch(states)
    }

    fn backward_kind(&self) -> BackwardKind {
        BackwardKind::Learned
    }

    fn backward_mask(&self, s: &GridState) -> Vec<bool> {
        self.backward_mask_of(s).to_vec()
    }

    fn step_back(&self, s: &GridState, action: usize) -> Result<GridState> {
        self.step_backward(s, Self::action(action)?)
    }

    fn policy_arch(&self, cfg: &PolicyConfig) -> PolicyArch {
        let mut sizes = vec![self.cfg.feature_width()];
        sizes.extend(std::iter::repeat_n(cfg.hidden, cfg.layers));
        sizes.push(GRID_NUM_ACTIONS);
        let arch = Arch::Dense { sizes };
        PolicyArch {
            forward: arch.clone(),
            backward: Some(arch),
        }
    }
}
