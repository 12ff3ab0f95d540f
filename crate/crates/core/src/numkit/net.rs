//! The two fixed policy shapes: a dense ReLU MLP over float features, and a
//! token-window MLP (embedding lookup + extra features, then the same MLP).
//!
//! Forward passes are batched over rows and record a [`Tape`]; the reverse
//! pass takes `∂loss/∂logits` for every row and accumulates parameter
//! gradients into the owning [`ParamSet`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{matmul, matmul_a_bt, matmul_at_b_acc, Matrix};
use super::params::{ParamGroup, ParamSet};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Arch {
    /// Layer widths including input and output, e.g. `[19, 128, 128, 5]`.
    Dense { sizes: Vec<usize> },
    /// Embedded token window concatenated with `extra_dim` float features.
    Token {
        vocab: usize,
        embed_dim: usize,
        window: usize,
        extra_dim: usize,
        hidden: Vec<usize>,
        out: usize,
    },
}

impl Arch {
    /// Widths of the dense part, input first.
    pub fn mlp_sizes(&self) -> Vec<usize> {
        match self {
            Arch::Dense { sizes } => sizes.clone(),
            Arch::Token {
                embed_dim,
                window,
                extra_dim,
                hidden,
                out,
                ..
            } => {
                let mut s = vec![window * embed_dim + extra_dim];
                s.extend(hidden);
                s.push(*out);
                s
            }
        }
    }

    pub fn out_dim(&self) -> usize {
        *self.mlp_sizes().last().expect("non-empty arch")
    }

    fn validate(&self) -> Result<()> {
        let sizes = self.mlp_sizes();
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::config("policy", format!("invalid layer sizes {sizes:?}")));
        }
        if let Arch::Token { vocab, window, .. } = self {
            if *vocab == 0 || *window == 0 {
                return Err(Error::config("policy", "token arch needs vocab >= 1 and window >= 1"));
            }
        }
        Ok(())
    }
}

/// A batch of network inputs.
#[derive(Clone, Debug)]
pub enum NetInput {
    Dense(Matrix),
    /// `ids` holds `window` token indices per row, row-major.
    Tokens { ids: Vec<usize>, extra: Matrix },
}

impl NetInput {
    pub fn rows(&self) -> usize {
        match self {
            NetInput::Dense(m) => m.rows(),
            NetInput::Tokens { extra, .. } => extra.rows(),
        }
    }
}

/// Activations recorded by a forward pass.
#[derive(Clone, Debug)]
pub struct Tape {
    /// Input of each dense layer (post-activation of the previous one).
    acts: Vec<Matrix>,
    ids: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    prefix: String,
    arch: Arch,
    layers: Vec<(usize, usize)>,
    embed: Option<usize>,
}

impl Network {
    /// Registers freshly initialised parameters under `prefix` and returns the bound network.
    ///
    /// Weights and biases are uniform in `±1/sqrt(fan_in)`; embeddings are
    /// uniform with unit variance and row 0 pinned to zero.
    pub fn register<R: Rng>(
        params: &mut ParamSet,
        prefix: &str,
        arch: Arch,
        group: ParamGroup,
        rng: &mut R,
    ) -> Result<Network> {
        arch.validate()?;
        let mut embed = None;
        if let Arch::Token { vocab, embed_dim, .. } = &arch {
            let bound = 3f64.sqrt();
            let values = (0..vocab * embed_dim)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let idx = params.add(&format!("{prefix}.embed"), group, vec![*vocab, *embed_dim], values)?;
            params.pin_rows(idx, vec![0]);
            embed = Some(idx);
        }
        let sizes = arch.mlp_sizes();
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (l, w) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let weights = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..bound))
                .collect();
            let bias = (0..fan_out).map(|_| rng.random_range(-bound..bound)).collect();
            let wi = params.add(&format!("{prefix}.l{l}.weight"), group, vec![fan_in, fan_out], weights)?;
            let bi = params.add(&format!("{prefix}.l{l}.bias"), group, vec![fan_out], bias)?;
            layers.push((wi, bi));
        }
        Ok(Network {
            prefix: prefix.to_string(),
            arch,
            layers,
            embed,
        })
    }

    /// Binds to parameters already present in `params`, checking shapes against `arch`.
    pub fn bind(params: &ParamSet, prefix: &str, arch: Arch) -> Result<Network> {
        arch.validate()?;
        let check = |idx: usize, shape: &[usize]| -> Result<()> {
            let p = params.get(idx);
            if p.shape != shape {
                return Err(Error::Shape {
                    context: format!("{} shape {:?} vs arch {:?}", p.name, p.shape, shape),
                    expected: shape.iter().product(),
                    actual: p.len(),
                });
            }
            Ok(())
        };
        let mut embed = None;
        if let Arch::Token { vocab, embed_dim, .. } = &arch {
            let idx = params.require(&format!("{prefix}.embed"))?;
            check(idx, &[*vocab, *embed_dim])?;
            embed = Some(idx);
        }
        let sizes = arch.mlp_sizes();
        let mut layers = Vec::new();
        for (l, w) in sizes.windows(2).enumerate() {
            let wi = params.require(&format!("{prefix}.l{l}.weight"))?;
            let bi = params.require(&format!("{prefix}.l{l}.bias"))?;
            check(wi, &[w[0], w[1]])?;
            check(bi, &[w[1]])?;
            layers.push((wi, bi));
        }
        Ok(Network {
            prefix: prefix.to_string(),
            arch,
            layers,
            embed,
        })
    }

    pub fn arch(&self) -> &Arch {
        &self.arch
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn out_dim(&self) -> usize {
        self.arch.out_dim()
    }

    fn assemble(&self, params: &ParamSet, input: NetInput) -> Result<(Matrix, Option<Vec<usize>>)> {
        let width = self.arch.mlp_sizes()[0];
        match (input, &self.arch) {
            (NetInput::Dense(m), Arch::Dense { .. }) => {
                if m.cols() != width {
                    return Err(Error::Shape {
                        context: format!("{} input width", self.prefix),
                        expected: width,
                        actual: m.cols(),
                    });
                }
                Ok((m, None))
            }
            (
                NetInput::Tokens { ids, extra },
                Arch::Token {
                    vocab,
                    embed_dim,
                    window,
                    extra_dim,
                    ..
                },
            ) => {
                let rows = extra.rows();
                if extra.cols() != *extra_dim || ids.len() != rows * window {
                    return Err(Error::Shape {
                        context: format!("{} token input", self.prefix),
                        expected: rows * window,
                        actual: ids.len(),
                    });
                }
                if let Some(&bad) = ids.iter().find(|&&t| t >= *vocab) {
                    return Err(Error::Usage(format!("token id {bad} outside vocabulary of {vocab}")));
                }
                let table = &params.get(self.embed.expect("token arch has embedding")).value;
                let mut x = Matrix::zeros(rows, width);
                for r in 0..rows {
                    let row = x.row_mut(r);
                    for j in 0..*window {
                        let t = ids[r * window + j];
                        row[j * embed_dim..(j + 1) * embed_dim]
                            .copy_from_slice(&table[t * embed_dim..(t + 1) * embed_dim]);
                    }
                    row[window * embed_dim..].copy_from_slice(extra.row(r));
                }
                Ok((x, Some(ids)))
            }
            _ => Err(Error::Usage(format!(
                "input kind does not match architecture of {}",
                self.prefix
            ))),
        }
    }

    /// Batched forward pass returning raw (unmasked) logits and the tape.
    pub fn forward(&self, params: &ParamSet, input: NetInput) -> Result<(Matrix, Tape)> {
        let (mut x, ids) = self.assemble(params, input)?;
        let sizes = self.arch.mlp_sizes();
        let rows = x.rows();
        let mut acts = Vec::with_capacity(self.layers.len());
        for (l, &(wi, bi)) in self.layers.iter().enumerate() {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let mut z = Matrix::zeros(rows, fan_out);
            matmul(x.as_slice(), &params.get(wi).value, z.as_mut_slice(), rows, fan_in, fan_out);
            let bias = &params.get(bi).value;
            let hidden = l + 1 < self.layers.len();
            for r in 0..rows {
                for (v, b) in z.row_mut(r).iter_mut().zip(bias) {
                    *v += b;
                    if hidden && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(x);
            x = z;
        }
        if let Some(pos) = x.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("{}.logits[row {}]", self.prefix, pos / x.cols()),
                format!("non-finite logit {}", x.as_slice()[pos]),
            ));
        }
        Ok((x, Tape { acts, ids }))
    }

    /// Forward pass without keeping activations.
    pub fn infer(&self, params: &ParamSet, input: NetInput) -> Result<Matrix> {
        Ok(self.forward(params, input)?.0)
    }

    /// Single dense input row.
    pub fn forward_one(&self, params: &ParamSet, input: &[f64]) -> Result<Vec<f64>> {
        let m = Matrix::from_vec(1, input.len(), input.to_vec())?;
        Ok(self.infer(params, NetInput::Dense(m))?.into_vec())
    }

    /// Reverse pass: accumulates `∂loss/∂θ` given `∂loss/∂logits` for every row of the tape.
    pub fn backward(&self, params: &mut ParamSet, tape: &Tape, grad_logits: &Matrix) -> Result<()> {
        let sizes = self.arch.mlp_sizes();
        let rows = grad_logits.rows();
        if rows != tape.acts[0].rows() || grad_logits.cols() != self.out_dim() {
            return Err(Error::Shape {
                context: format!("{} logit gradient", self.prefix),
                expected: tape.acts[0].rows() * self.out_dim(),
                actual: grad_logits.as_slice().len(),
            });
        }
        if let Some(pos) = grad_logits.as_slice().iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(
                format!("{}.logits.grad[row {}]", self.prefix, pos / grad_logits.cols()),
                "non-finite upstream gradient",
            ));
        }
        let mut g = grad_logits.clone();
        for l in (0..self.layers.len()).rev() {
            let (wi, bi) = self.layers[l];
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let a = &tape.acts[l];
            matmul_at_b_acc(a.as_slice(), g.as_slice(), &mut params.get_mut(wi).grad, rows, fan_in, fan_out);
            {
                let db = &mut params.get_mut(bi).grad;
                for r in 0..rows {
                    for (d, v) in db.iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
            }
            let need_input_grad = l > 0 || self.embed.is_some();
            if !need_input_grad {
                break;
            }
            let mut dx = Matrix::zeros(rows, fan_in);
            matmul_a_bt(g.as_slice(), &params.get(wi).value, dx.as_mut_slice(), rows, fan_in, fan_out);
            if l > 0 {
                for (d, &act) in dx.as_mut_slice().iter_mut().zip(a.as_slice()) {
                    if act <= 0.0 {
                        *d = 0.0;
                    }
                }
            }
            g = dx;
        }
        if let (Some(ei), Some(ids), Arch::Token { embed_dim, window, .. }) = (self.embed, &tape.ids, &self.arch) {
            let pinned = params.get(ei).pinned_rows.clone();
            let eg = &mut params.get_mut(ei).grad;
            for r in 0..rows {
                let row = g.row(r);
                for j in 0..*window {
                    let t = ids[r * window + j];
                    if pinned.contains(&t) {
                        continue;
                    }
                    for (d, v) in eg[t * embed_dim..(t + 1) * embed_dim]
                        .iter_mut()
                        .zip(&row[j * embed_dim..(j + 1) * embed_dim])
                    {
                        *d += v;
                    }
                }
            }
        }
        let names: Vec<usize> = self.layers.iter().flat_map(|&(w, b)| [w, b]).chain(self.embed).collect();
        for idx in names {
            let p = params.get(idx);
            if let Some(pos) = p.grad.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(format!("grad {}[{pos}]", p.name), "non-finite gradient"));
            }
        }
        Ok(())
    }
}
