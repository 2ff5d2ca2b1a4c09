//! Parameter storage and the small layer vocabulary shared by every model
//! component: affine maps, two-layer MLPs, the LSTM cell, and multi-head
//! attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Flat, ordered, named collection of learnable tensors.
///
/// A tape produced by [`ParamSet::bind`] holds parameter `k` at `Var(k)`,
/// which lets layers refer to their weights by [`ParamId`] alone.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, tensor: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Fresh tape whose first `len()` nodes are these parameters, tracked.
    pub fn bind(&self) -> Tape {
        let mut tape = Tape::new();
        for t in &self.tensors {
            tape.param(t.clone());
        }
        tape
    }

    /// Gradients of every parameter after `tape.backward`, zero where unused.
    pub fn grads(&self, tape: &Tape) -> Vec<Tensor> {
        self.tensors
            .iter()
            .enumerate()
            .map(|(i, t)| tape.grad(Var(i)).unwrap_or_else(|| Tensor::zeros(t.shape().to_vec())))
            .collect()
    }

    /// Replaces tensor values by name; every name and shape must match.
    pub fn load_from(&mut self, other: &ParamSet) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Config(format!(
                "parameter count mismatch: expected {}, found {}",
                self.len(),
                other.len()
            )));
        }
        for (name, tensor) in other.iter() {
            let id = self
                .find(name)
                .ok_or_else(|| Error::Config(format!("unknown parameter `{name}`")))?;
            if self.tensors[id.0].shape() != tensor.shape() {
                return Err(Error::shape("load_params", self.tensors[id.0].shape(), tensor.shape()));
            }
            self.tensors[id.0] = tensor.clone();
        }
        Ok(())
    }
}

/// Weight of shape `[fan_in × fan_out]` drawn from U(−1/√fan_in, 1/√fan_in).
pub fn uniform_weight(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("weight shape")
}

/// `x·W + b` applied row-wise to `x: [m × in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = ps.add(format!("{name}.weight"), uniform_weight(rng, in_dim, out_dim));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(vec![out_dim]));
        Self {
            weight,
            bias: Some(bias),
            in_dim,
            out_dim,
        }
    }

    pub fn without_bias(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let weight = ps.add(format!("{name}.weight"), uniform_weight(rng, in_dim, out_dim));
        Self {
            weight,
            bias: None,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let y = tape.matmul(x, Var(self.weight.0))?;
        match self.bias {
            Some(b) => tape.add_row(y, Var(b.0)),
            None => Ok(y),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        std::iter::once(self.weight).chain(self.bias).collect()
    }
}

/// `affine(x, W, b)` on raw vars; the shape checks of `matmul`/`add_row` apply.
pub fn affine(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = tape.matmul(x, w)?;
    tape.add_row(y, b)
}

/// Two affine layers with a relu between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        in_dim: usize,
        hidden_dim: usize,
        out_dim: usize,
    ) -> Self {
        Self {
            hidden: Linear::new(ps, rng, &format!("{name}.0"), in_dim, hidden_dim),
            output: Linear::new(ps, rng, &format!("{name}.1"), hidden_dim, out_dim),
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = tape.relu(h);
        self.output.forward(tape, h)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.hidden.params();
        p.extend(self.output.params());
        p
    }
}

/// Standard LSTM cell over row-batched states.
///
/// The fused weight maps `concat(h, input)` (width `hidden + input`) to the
/// four gate pre-activations laid out as `[i | f | g | o]`.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub weight: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl LstmCell {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, input_dim: usize, hidden_dim: usize) -> Self {
        let fan_in = hidden_dim + input_dim;
        let weight = ps.add(format!("{name}.weight"), uniform_weight(rng, fan_in, 4 * hidden_dim));
        let bias = ps.add(format!("{name}.bias"), Tensor::zeros(vec![4 * hidden_dim]));
        Self {
            weight,
            bias,
            input_dim,
            hidden_dim,
        }
    }

    /// One step for `m` rows: `h, c: [m × hidden]`, `input: [m × input_dim]`.
    pub fn forward(&self, tape: &mut Tape, h: Var, c: Var, input: Var) -> Result<(Var, Var)> {
        let d = self.hidden_dim;
        if tape.shape(h).last() != Some(&d) || tape.shape(c) != tape.shape(h) {
            return Err(Error::shape("lstm_cell", tape.shape(h), tape.shape(c)));
        }
        if tape.shape(input).last() != Some(&self.input_dim) {
            return Err(Error::shape("lstm_cell", tape.shape(input), &[self.input_dim]));
        }
        let z = tape.concat(&[h, input], 1)?;
        let z = affine(tape, z, Var(self.weight.0), Var(self.bias.0))?;
        let gate = |tape: &mut Tape, k: usize| tape.slice(z, 1, k * d, d);
        let i = gate(tape, 0)?;
        let f = gate(tape, 1)?;
        let g = gate(tape, 2)?;
        let o = gate(tape, 3)?;
        let i = tape.sigmoid(i);
        let f = tape.sigmoid(f);
        let g = tape.tanh(g);
        let o = tape.sigmoid(o);
        let keep = tape.mul(f, c)?;
        let write = tape.mul(i, g)?;
        let c_next = tape.add(keep, write)?;
        let squashed = tape.tanh(c_next);
        let h_next = tape.mul(o, squashed)?;
        Ok((h_next, c_next))
    }

    pub fn params(&self) -> Vec<ParamId> {
        vec![self.weight, self.bias]
    }
}

/// Multi-head scaled dot-product attention with bias-free projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub heads: usize,
    pub dim: usize,
}

impl MultiHeadAttention {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, dim: usize, heads: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!(
                "attention width {dim} is not divisible by {heads} heads"
            )));
        }
        Ok(Self {
            query: Linear::without_bias(ps, rng, &format!("{name}.query"), dim, dim),
            key: Linear::without_bias(ps, rng, &format!("{name}.key"), dim, dim),
            value: Linear::without_bias(ps, rng, &format!("{name}.value"), dim, dim),
            output: Linear::without_bias(ps, rng, &format!("{name}.output"), dim, dim),
            heads,
            dim,
        })
    }

    /// Attends `q: [Lq × dim]` over `k, v: [Lk × dim]`.
    ///
    /// `mask`, when given, is added to every head's `[Lq × Lk]` score matrix;
    /// use `-inf` to forbid a query–key pair.
    pub fn forward(&self, tape: &mut Tape, q: Var, k: Var, v: Var, mask: Option<&Tensor>) -> Result<Var> {
        let qp = self.query.forward(tape, q)?;
        let kp = self.key.forward(tape, k)?;
        let vp = self.value.forward(tape, v)?;
        let dk = self.dim / self.heads;
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let qh = tape.slice(qp, 1, h * dk, dk)?;
            let kh = tape.slice(kp, 1, h * dk, dk)?;
            let vh = tape.slice(vp, 1, h * dk, dk)?;
            let kt = tape.transpose(kh)?;
            let scores = tape.matmul(qh, kt)?;
            let mut scores = tape.scale(scores, scale);
            if let Some(mask) = mask {
                scores = tape.add_const(scores, mask)?;
            }
            let weights = tape.softmax(scores, 1)?;
            outs.push(tape.matmul(weights, vh)?);
        }
        let joined = if outs.len() == 1 { outs[0] } else { tape.concat(&outs, 1)? };
        self.output.forward(tape, joined)
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.query, &self.key, &self.value, &self.output]
            .iter()
            .flat_map(|l| l.params())
            .collect()
    }

    /// Sets all four projections to the identity.
    pub fn set_identity(&self, ps: &mut ParamSet) {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            *ps.get_mut(l.weight) = Tensor::eye(self.dim);
        }
    }
}
