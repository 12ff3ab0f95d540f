//! Grid target densities and the smoothed log-reward table.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::RewardModel;
use crate::env::{GridEnv, GridPos};
use crate::error::{Error, Result};

/// Floor mixed into every density so that `log R` stays finite.
pub const GRID_LAMBDA: f64 = 1e-6;

pub const MOONS_ANCHORS: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridFamily {
    #[serde(rename = "8g")]
    EightGaussians,
    Rings,
    Moons,
}

impl fmt::Display for GridFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GridFamily::EightGaussians => "8g",
            GridFamily::Rings => "rings",
            GridFamily::Moons => "moons",
        })
    }
}

impl FromStr for GridFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "8g" | "eight_gaussians" => Ok(GridFamily::EightGaussians),
            "rings" => Ok(GridFamily::Rings),
            "moons" => Ok(GridFamily::Moons),
            other => Err(Error::config("reward.family", format!("unknown family {other:?}"))),
        }
    }
}

impl GridFamily {
    pub fn density(self, x: f64, y: f64, half_width: i32) -> f64 {
        match self {
            GridFamily::EightGaussians => density_8g(x, y, half_width),
            GridFamily::Rings => density_rings(x, y, half_width),
            GridFamily::Moons => density_moons(x, y, half_width),
        }
    }
}

/// Anchors of the eight-Gaussian family, `R = 0.8 W`, at angles `2πm/8`.
pub fn anchors_8g(half_width: i32) -> Vec<(f64, f64)> {
    let r = 0.8 * half_width as f64;
    (0..8)
        .map(|m| {
            let th = 2.0 * PI * m as f64 / 8.0;
            (r * th.cos(), r * th.sin())
        })
        .collect()
}

pub fn gaussian_sum(x: f64, y: f64, anchors: &[(f64, f64)], sigma: f64) -> f64 {
    let s2 = 2.0 * sigma * sigma;
    anchors
        .iter()
        .map(|&(ax, ay)| (-((x - ax).powi(2) + (y - ay).powi(2)) / s2).exp())
        .sum()
}

pub fn density_8g(x: f64, y: f64, half_width: i32) -> f64 {
    gaussian_sum(x, y, &anchors_8g(half_width), 1.0)
}

/// Two rings at radii `0.4 W` and `0.8 W`, unit radial width and weight.
pub fn density_rings(x: f64, y: f64, half_width: i32) -> f64 {
    let w = half_width as f64;
    let r = x.hypot(y);
    [0.4 * w, 0.8 * w]
        .iter()
        .map(|rl| (-(r - rl).powi(2) / 2.0).exp())
        .sum()
}

/// Anchors of the two-moons family: 128 per arc, angles evenly spaced with both ends included.
pub fn anchors_moons(half_width: i32) -> Vec<(f64, f64)> {
    let r = 0.6 * half_width as f64;
    let shift = 0.03 * r;
    let gap = 0.018 * r;
    let per_arc = MOONS_ANCHORS / 2;
    let angle = |i: usize, start: f64| start + PI * i as f64 / (per_arc - 1) as f64;
    let upper = (0..per_arc).map(|i| {
        let th = angle(i, 0.0);
        (-shift + r * th.cos(), r * th.sin())
    });
    let lower = (0..per_arc).map(|i| {
        let th = angle(i, PI);
        (shift + r * th.cos(), -gap + r * th.sin())
    });
    upper.chain(lower).collect()
}

pub fn density_moons(x: f64, y: f64, half_width: i32) -> f64 {
    gaussian_sum(x, y, &anchors_moons(half_width), 1.0)
}

/// `log((1 − λ)ρ + λ)`.
pub fn grid_log_reward(rho: f64) -> f64 {
    ((1.0 - GRID_LAMBDA) * rho + GRID_LAMBDA).ln()
}

/// Log-reward for every terminal, indexed like [`GridEnv::enumerate_terminals`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRewardField {
    pub family: Option<GridFamily>,
    pub half_width: i32,
    log_r: Vec<f64>,
}

impl GridRewardField {
    pub fn new(env: &GridEnv, family: GridFamily) -> Self {
        let w = env.cfg.half_width;
        let mut field = Self::from_density(env, |x, y| family.density(x, y, w));
        field.family = Some(family);
        field
    }

    /// Builds the table from an arbitrary nonnegative density.
    pub fn from_density(env: &GridEnv, rho: impl Fn(f64, f64) -> f64) -> Self {
        let log_r = env
            .enumerate_terminals()
            .iter()
            .map(|p| grid_log_reward(rho(p.x as f64, p.y as f64)))
            .collect();
        GridRewardField {
            family: None,
            half_width: env.cfg.half_width,
            log_r,
        }
    }

    pub fn from_log_rewards(env: &GridEnv, log_r: Vec<f64>) -> Result<Self> {
        if log_r.len() != env.cfg.num_terminals() {
            return Err(Error::Shape {
                context: "grid reward table".into(),
                expected: env.cfg.num_terminals(),
                actual: log_r.len(),
            });
        }
        Ok(GridRewardField {
            family: None,
            half_width: env.cfg.half_width,
            log_r,
        })
    }

    pub fn log_rewards(&self) -> &[f64] {
        &self.log_r
    }

    fn index(&self, p: &GridPos) -> Option<usize> {
        let w = self.half_width;
        if p.x.abs() > w || p.y.abs() > w {
            return None;
        }
        let side = (2 * w + 1) as usize;
        Some((p.x + w) as usize * side + (p.y + w) as usize)
    }

    /// Normalised target `R(x) / Σ R`.
    pub fn target_distribution(&self) -> Vec<f64> {
        let m = self.log_r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = self.log_r.iter().map(|l| (l - m).exp()).collect();
        let total: f64 = w.iter().sum();
        w.into_iter().map(|v| v / total).collect()
    }

    /// `log Σ_x R(x)`.
    pub fn log_partition(&self) -> f64 {
        crate::numkit::log_sum_exp(&self.log_r).unwrap_or(f64::NEG_INFINITY)
    }
}

impl RewardModel<GridPos> for GridRewardField {
    fn log_reward(&self, x: &GridPos) -> Result<f64> {
        self.index(x)
            .map(|i| self.log_r[i])
            .ok_or_else(|| Error::Domain(format!("terminal {x} outside the reward table")))
    }
}
