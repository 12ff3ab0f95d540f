//! Named parameter storage with gradient and optimizer-moment buffers.

use std::collections::HashMap;
use std::hash::{Hash, Hasher};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimizer group; each group gets its own learning rate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamGroup {
    Forward,
    Backward,
    LogZ,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub value: Vec<f64>,
    #[serde(skip)]
    pub grad: Vec<f64>,
    /// First-moment estimate.
    pub m: Vec<f64>,
    /// Second-moment estimate.
    pub v: Vec<f64>,
    /// Rows of a 2-D parameter whose value and gradient stay pinned at zero.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pinned_rows: Vec<usize>,
}

impl Param {
    fn new(name: &str, group: ParamGroup, shape: Vec<usize>, value: Vec<f64>) -> Self {
        let n = value.len();
        Param {
            name: name.to_string(),
            group,
            shape,
            value,
            grad: vec![0.0; n],
            m: vec![0.0; n],
            v: vec![0.0; n],
            pinned_rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(from = "ParamSetRepr", into = "ParamSetRepr")]
pub struct ParamSet {
    params: Vec<Param>,
    step: u64,
    index: HashMap<String, usize>,
}

#[derive(Serialize, Deserialize)]
struct ParamSetRepr {
    step: u64,
    params: Vec<Param>,
}

impl From<ParamSetRepr> for ParamSet {
    fn from(repr: ParamSetRepr) -> Self {
        let mut set = ParamSet {
            params: repr.params,
            step: repr.step,
            index: HashMap::new(),
        };
        for (i, p) in set.params.iter_mut().enumerate() {
            p.grad = vec![0.0; p.value.len()];
            set.index.insert(p.name.clone(), i);
        }
        set
    }
}

impl From<ParamSet> for ParamSetRepr {
    fn from(set: ParamSet) -> Self {
        ParamSetRepr {
            step: set.step,
            params: set.params,
        }
    }
}

impl PartialEq for ParamSet {
    fn eq(&self, other: &Self) -> bool {
        self.step == other.step && self.params == other.params
    }
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn add(
        &mut self,
        name: &str,
        group: ParamGroup,
        shape: Vec<usize>,
        value: Vec<f64>,
    ) -> Result<usize> {
        let expected: usize = shape.iter().product();
        if expected != value.len() {
            return Err(Error::Shape {
                context: format!("parameter {name}"),
                expected,
                actual: value.len(),
            });
        }
        if self.index.contains_key(name) {
            return Err(Error::Usage(format!("duplicate parameter {name}")));
        }
        let idx = self.params.len();
        self.params.push(Param::new(name, group, shape, value));
        self.index.insert(name.to_string(), idx);
        Ok(idx)
    }

    pub fn pin_rows(&mut self, idx: usize, rows: Vec<usize>) {
        let p = &mut self.params[idx];
        let width = p.shape.get(1).copied().unwrap_or(1);
        for &r in &rows {
            p.value[r * width..(r + 1) * width].fill(0.0);
        }
        p.pinned_rows = rows;
    }

    pub fn lookup(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<usize> {
        self.lookup(name)
            .ok_or_else(|| Error::Usage(format!("missing parameter {name}")))
    }

    pub fn get(&self, idx: usize) -> &Param {
        &self.params[idx]
    }

    pub fn get_mut(&mut self, idx: usize) -> &mut Param {
        &mut self.params[idx]
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn bump_step(&mut self) -> u64 {
        self.step += 1;
        self.step
    }

    pub fn num_values(&self) -> usize {
        self.params.iter().map(Param::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    /// Flat view of every value, in registration order.
    pub fn flat_values(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn flat_grads(&self) -> Vec<f64> {
        self.params.iter().flat_map(|p| p.grad.iter().copied()).collect()
    }

    /// False at pinned entries, which are constants rather than parameters.
    pub fn flat_trainable(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.num_values());
        for p in &self.params {
            let width = p.shape.get(1).copied().unwrap_or(1);
            out.extend((0..p.len()).map(|i| !p.pinned_rows.contains(&(i / width))));
        }
        out
    }

    /// Sets the value at flat position `i` (same ordering as [`Self::flat_values`]).
    pub fn set_flat(&mut self, mut i: usize, value: f64) {
        for p in &mut self.params {
            if i < p.len() {
                p.value[i] = value;
                return;
            }
            i -= p.len();
        }
        panic!("flat index out of range");
    }

    /// Content hash over names, shapes and value bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for p in &self.params {
            p.name.hash(&mut h);
            p.shape.hash(&mut h);
            for v in &p.value {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn check_finite(&self) -> Result<()> {
        for p in &self.params {
            if let Some(pos) = p.value.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    format!("{}[{pos}]", p.name),
                    format!("parameter value {}", p.value[pos]),
                ));
            }
        }
        Ok(())
    }

    pub fn check_grads_finite(&self) -> Result<()> {
        for p in &self.params {
            if let Some(pos) = p.grad.iter().position(|v| !v.is_finite()) {
                return Err(Error::numeric(
                    format!("grad {}[{pos}]", p.name),
                    format!("gradient value {}", p.grad[pos]),
                ));
            }
        }
        Ok(())
    }
}
