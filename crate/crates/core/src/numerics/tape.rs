//! Reverse-mode differentiation over a dynamic operation tape.
//!
//! Every operation appends one node holding its forward value. Nodes are
//! created in topological order, so the backward pass is a single sweep from
//! the loss node down to index 0.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    ScaleRows(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Softmax { x: Var, axis: usize },
    Concat { parts: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Transpose(Var),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    SumAxis { x: Var, axis: usize },
    GatherRows { x: Var, index: Vec<usize> },
    ScatterRows { x: Var, index: Vec<usize> },
    Bce { x: Var, targets: Vec<f64>, pos_weight: f64 },
}

/// Ordered record of primitive operations.
///
/// Values are kept for every node; gradient buffers are allocated lazily
/// during [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    values: Vec<Tensor>,
    ops: Vec<Op>,
    tracked: Vec<bool>,
    grads: Vec<Option<Vec<f64>>>,
    kinks: Option<u64>,
}

/// `(outer, extent, inner)` decomposition of a shape around `axis`.
fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Records relu sign patterns so finite-difference checks can detect
    /// when a perturbation crosses a kink.
    pub fn track_kinks(&mut self) {
        self.kinks = Some(0xcbf2_9ce4_8422_2325);
    }

    /// Hash of every relu input's sign class seen so far, if tracking is on.
    pub fn kink_signature(&self) -> Option<u64> {
        self.kinks
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.values.push(value);
        self.ops.push(op);
        self.tracked.push(tracked);
        self.grads.push(None);
        Var(self.values.len() - 1)
    }

    fn any_tracked(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.tracked[v.0])
    }

    pub fn leaf(&mut self, value: Tensor, tracked: bool) -> Var {
        self.push(value, Op::Leaf, tracked)
    }

    /// Differentiable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// Non-differentiable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.values[v.0]
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.values[v.0].shape()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.tracked[v.0]
    }

    /// Gradient of the last backward pass with respect to `v`.
    pub fn grad(&self, v: Var) -> Option<Tensor> {
        let g = self.grads[v.0].as_ref()?;
        Some(Tensor::new(self.values[v.0].shape().to_vec(), g.clone()).expect("grad shape"))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let (av, bv) = (self.values[a.0].data(), self.values[b.0].data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let x = av[i * k + p];
                let brow = &bv[p * n..(p + 1) * n];
                for (o, y) in row.iter_mut().zip(brow) {
                    *o += x * y;
                }
            }
        }
        let t = self.any_tracked(&[a, b]);
        Ok(self.push(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b), t))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::shape(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let (av, bv) = (&self.values[a.0], &self.values[b.0]);
        let data = av.data().iter().zip(bv.data()).map(|(x, y)| f(*x, *y)).collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let t = self.any_tracked(&[a, b]);
        self.push(value, op, t)
    }

    fn map(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let xv = &self.values[x.0];
        let value = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|v| f(*v)).collect())
            .expect("same shape");
        let t = self.tracked[x.0];
        self.push(value, op, t)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// `x [m×n] + b` with `b` of `n` elements broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (sx, sb) = (self.shape(x), self.shape(b));
        if sx.len() != 2 || self.values[b.0].len() != sx[1] {
            return Err(Error::shape("add_row", sx, sb));
        }
        let n = sx[1];
        let bv = self.values[b.0].data();
        let data = self.values[x.0]
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v + bv[i % n])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        let t = self.any_tracked(&[x, b]);
        Ok(self.push(value, Op::AddRow(x, b), t))
    }

    /// Multiplies row `i` of `x [m×n]` by `c[i]`, where `c` has `m` elements.
    pub fn scale_rows(&mut self, x: Var, c: Var) -> Result<Var> {
        let (sx, sc) = (self.shape(x), self.shape(c));
        if sx.len() != 2 || self.values[c.0].len() != sx[0] {
            return Err(Error::shape("scale_rows", sx, sc));
        }
        let n = sx[1];
        let cv = self.values[c.0].data();
        let data = self.values[x.0]
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * cv[i / n.max(1)])
            .collect();
        let value = Tensor::new(sx.to_vec(), data)?;
        let t = self.any_tracked(&[x, c]);
        Ok(self.push(value, Op::ScaleRows(x, c), t))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.map(x, Op::Scale(x, c), |v| v * c)
    }

    /// Adds a fixed tensor (for example an attention mask); only `x` receives gradient.
    pub fn add_const(&mut self, x: Var, c: &Tensor) -> Result<Var> {
        if self.shape(x) != c.shape() {
            return Err(Error::shape("add_const", self.shape(x), c.shape()));
        }
        let xv = &self.values[x.0];
        let data = xv.data().iter().zip(c.data()).map(|(a, b)| a + b).collect();
        let value = Tensor::new(xv.shape().to_vec(), data)?;
        let t = self.tracked[x.0];
        Ok(self.push(value, Op::AddConst(x), t))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.map(x, Op::Sigmoid(x), sigmoid_scalar)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.map(x, Op::Tanh(x), f64::tanh)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        if let Some(mut h) = self.kinks {
            for v in self.values[x.0].data() {
                let class: u64 = if *v > 0.0 {
                    2
                } else if *v < 0.0 {
                    1
                } else {
                    3
                };
                h = (h ^ class).wrapping_mul(0x0100_0000_01b3);
            }
            self.kinks = Some(h);
        }
        self.map(x, Op::Relu(x), |v| v.max(0.0))
    }

    /// Max-stabilized softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("softmax", &shape, &[axis]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xv = self.values[x.0].data();
        let mut out = vec![0.0; xv.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| o * dim * inner + k * inner + i;
                let max = (0..dim).map(|k| xv[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..dim {
                    let e = (xv[at(k)] - max).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..dim {
                    out[at(k)] /= total;
                }
            }
        }
        let t = self.tracked[x.0];
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis }, t))
    }

    pub fn concat(&mut self, parts: &[Var], axis: usize) -> Result<Var> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Usage("concat of zero tensors".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", &base, &[axis]));
        }
        let mut total = 0;
        for p in parts {
            let s = self.shape(*p);
            let compatible = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (a, b))| d == axis || a == b);
            if !compatible {
                return Err(Error::shape("concat", &base, s));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = split_axis(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for p in parts {
                let v = &self.values[p.0];
                let chunk = v.shape()[axis] * inner;
                out.extend_from_slice(&v.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let t = self.any_tracked(parts);
        Ok(self.push(
            Tensor::new(shape, out)?,
            Op::Concat {
                parts: parts.to_vec(),
                axis,
            },
            t,
        ))
    }

    /// Contiguous range `[start, start + len)` along `axis`.
    pub fn slice(&mut self, x: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() || start + len > shape[axis] {
            return Err(Error::shape("slice", &shape, &[axis, start, len]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xv = self.values[x.0].data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * dim * inner + start * inner;
            out.extend_from_slice(&xv[base..base + len * inner]);
        }
        let mut new_shape = shape;
        new_shape[axis] = len;
        let t = self.tracked[x.0];
        Ok(self.push(Tensor::new(new_shape, out)?, Op::Slice { x, axis, start }, t))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(Error::shape("transpose", s, &[2]));
        }
        let (m, n) = (s[0], s[1]);
        let xv = self.values[x.0].data();
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xv[i * n + j];
            }
        }
        let t = self.tracked[x.0];
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::Transpose(x), t))
    }

    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let value = self.values[x.0].clone().reshape(shape)?;
        let t = self.tracked[x.0];
        Ok(self.push(value, Op::Reshape(x), t))
    }

    /// Sum of all elements as a rank-0 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.values[x.0].data().iter().sum();
        let t = self.tracked[x.0];
        self.push(Tensor::scalar(s), Op::Sum(x), t)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = &self.values[x.0];
        let s = v.data().iter().sum::<f64>() / v.len().max(1) as f64;
        let t = self.tracked[x.0];
        self.push(Tensor::scalar(s), Op::Mean(x), t)
    }

    /// Sums out `axis`, dropping it from the shape.
    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape("sum_axis", &shape, &[axis]));
        }
        let (outer, dim, inner) = split_axis(&shape, axis);
        let xv = self.values[x.0].data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for k in 0..dim {
                let src = &xv[o * dim * inner + k * inner..o * dim * inner + (k + 1) * inner];
                add_into(&mut out[o * inner..(o + 1) * inner], src);
            }
        }
        let mut new_shape = shape;
        new_shape.remove(axis);
        let t = self.tracked[x.0];
        Ok(self.push(Tensor::new(new_shape, out)?, Op::SumAxis { x, axis }, t))
    }

    /// Rows `x[index[k]]` stacked in order.
    pub fn gather_rows(&mut self, x: Var, index: &[usize]) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(Error::shape("gather_rows", &s, &[2]));
        }
        let (m, n) = (s[0], s[1]);
        if let Some(bad) = index.iter().find(|&&i| i >= m) {
            return Err(Error::shape("gather_rows", &s, &[*bad]));
        }
        let xv = self.values[x.0].data();
        let mut out = Vec::with_capacity(index.len() * n);
        for &i in index {
            out.extend_from_slice(&xv[i * n..(i + 1) * n]);
        }
        let t = self.tracked[x.0];
        Ok(self.push(
            Tensor::new(vec![index.len(), n], out)?,
            Op::GatherRows {
                x,
                index: index.to_vec(),
            },
            t,
        ))
    }

    /// `out[index[k]] += x[k]` into a zeroed `[rows × n]` matrix.
    pub fn scatter_add_rows(&mut self, x: Var, index: &[usize], rows: usize) -> Result<Var> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || s[0] != index.len() || index.iter().any(|&i| i >= rows) {
            return Err(Error::shape("scatter_add_rows", &s, &[index.len(), rows]));
        }
        let n = s[1];
        let xv = self.values[x.0].data();
        let mut out = vec![0.0; rows * n];
        for (k, &i) in index.iter().enumerate() {
            add_into(&mut out[i * n..(i + 1) * n], &xv[k * n..(k + 1) * n]);
        }
        let t = self.tracked[x.0];
        Ok(self.push(
            Tensor::new(vec![rows, n], out)?,
            Op::ScatterRows {
                x,
                index: index.to_vec(),
            },
            t,
        ))
    }

    /// Mean positive-weighted binary cross entropy over all elements of the
    /// logits `x`, with `targets` in {0, 1}.
    ///
    /// Each element contributes `p·y·softplus(−x) + (1−y)·softplus(x)`,
    /// which equals `−[p·y·log σ(x) + (1−y)·log(1−σ(x))]`.
    pub fn bce_with_logits(&mut self, x: Var, targets: &Tensor, pos_weight: f64) -> Result<Var> {
        if self.shape(x) != targets.shape() {
            return Err(Error::shape("bce_with_logits", self.shape(x), targets.shape()));
        }
        if let Some(bad) = targets.data().iter().find(|y| **y != 0.0 && **y != 1.0) {
            return Err(Error::Usage(format!("bce target {bad} is not binary")));
        }
        let xv = self.values[x.0].data();
        let n = xv.len().max(1) as f64;
        let total: f64 = xv
            .iter()
            .zip(targets.data())
            .map(|(&x, &y)| pos_weight * y * softplus(-x) + (1.0 - y) * softplus(x))
            .sum();
        let t = self.tracked[x.0];
        Ok(self.push(
            Tensor::scalar(total / n),
            Op::Bce {
                x,
                targets: targets.data().to_vec(),
                pos_weight,
            },
            t,
        ))
    }

    /// Accumulates `∂loss/∂v` into every tracked node that feeds `loss`.
    ///
    /// Tracked leaves that do not influence the loss receive a zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.values[loss.0].len() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        if !self.tracked[loss.0] {
            return Err(Error::Usage("backward on an untracked loss".into()));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if !self.tracked[idx] {
                continue;
            }
            let Some(g) = self.grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        for idx in 0..self.values.len() {
            if self.tracked[idx] && matches!(self.ops[idx], Op::Leaf) && self.grads[idx].is_none() {
                self.grads[idx] = Some(vec![0.0; self.values[idx].len()]);
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, delta: Vec<f64>) {
        if !self.tracked[v.0] {
            return;
        }
        match &mut self.grads[v.0] {
            Some(g) => add_into(g, &delta),
            slot @ None => *slot = Some(delta),
        }
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        let op = std::mem::replace(&mut self.ops[idx], Op::Leaf);
        let out = &self.values[idx];
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                let (ad, bd) = (av.data(), bv.data());
                let ga = self.tracked[a.0].then(|| {
                    let mut ga = vec![0.0; m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &bd[p * n..(p + 1) * n];
                            ga[i * k + p] = g[i * n..(i + 1) * n]
                                .iter()
                                .zip(brow)
                                .map(|(x, y)| x * y)
                                .sum();
                        }
                    }
                    ga
                });
                let gb = self.tracked[b.0].then(|| {
                    let mut gb = vec![0.0; k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let x = ad[i * k + p];
                            for (o, y) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += x * y;
                            }
                        }
                    }
                    gb
                });
                let (a, b) = (*a, *b);
                if let Some(ga) = ga {
                    self.accumulate(a, ga);
                }
                if let Some(gb) = gb {
                    self.accumulate(b, gb);
                }
            }
            Op::Add(a, b) => {
                let (a, b) = (*a, *b);
                self.accumulate(a, g.to_vec());
                self.accumulate(b, g.to_vec());
            }
            Op::AddRow(x, b) => {
                let n = self.values[b.0].len();
                let mut gb = vec![0.0; n];
                for (i, v) in g.iter().enumerate() {
                    gb[i % n] += v;
                }
                let (x, b) = (*x, *b);
                self.accumulate(x, g.to_vec());
                self.accumulate(b, gb);
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.values[a.0].data(), self.values[b.0].data());
                let ga = g.iter().zip(bd).map(|(g, y)| g * y).collect();
                let gb = g.iter().zip(ad).map(|(g, x)| g * x).collect();
                let (a, b) = (*a, *b);
                self.accumulate(a, ga);
                self.accumulate(b, gb);
            }
            Op::ScaleRows(x, c) => {
                let (xd, cd) = (self.values[x.0].data(), self.values[c.0].data());
                let n = self.values[x.0].shape()[1].max(1);
                let gx = g.iter().enumerate().map(|(i, g)| g * cd[i / n]).collect();
                let mut gc = vec![0.0; cd.len()];
                for (i, (g, v)) in g.iter().zip(xd).enumerate() {
                    gc[i / n] += g * v;
                }
                let (x, c) = (*x, *c);
                self.accumulate(x, gx);
                self.accumulate(c, gc);
            }
            Op::Scale(x, c) => {
                let gx = g.iter().map(|g| g * c).collect();
                self.accumulate(*x, gx);
            }
            Op::AddConst(x) | Op::Reshape(x) => self.accumulate(*x, g.to_vec()),
            Op::Sigmoid(x) => {
                let gx = g.iter().zip(out.data()).map(|(g, s)| g * s * (1.0 - s)).collect();
                self.accumulate(*x, gx);
            }
            Op::Tanh(x) => {
                let gx = g.iter().zip(out.data()).map(|(g, y)| g * (1.0 - y * y)).collect();
                self.accumulate(*x, gx);
            }
            Op::Relu(x) => {
                let xd = self.values[x.0].data();
                let gx = g
                    .iter()
                    .zip(xd)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(*x, gx);
            }
            Op::Softmax { x, axis } => {
                let (outer, dim, inner) = split_axis(out.shape(), *axis);
                let s = out.data();
                let mut gx = vec![0.0; s.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| o * dim * inner + k * inner + i;
                        let dot: f64 = (0..dim).map(|k| g[at(k)] * s[at(k)]).sum();
                        for k in 0..dim {
                            gx[at(k)] = s[at(k)] * (g[at(k)] - dot);
                        }
                    }
                }
                self.accumulate(*x, gx);
            }
            Op::Concat { parts, axis } => {
                let (outer, total, inner) = split_axis(out.shape(), *axis);
                let mut offset = 0;
                let mut pieces = Vec::with_capacity(parts.len());
                for p in parts {
                    let ext = self.values[p.0].shape()[*axis];
                    let mut gp = Vec::with_capacity(outer * ext * inner);
                    for o in 0..outer {
                        let base = o * total * inner + offset * inner;
                        gp.extend_from_slice(&g[base..base + ext * inner]);
                    }
                    offset += ext;
                    pieces.push((*p, gp));
                }
                for (p, gp) in pieces {
                    self.accumulate(p, gp);
                }
            }
            Op::Slice { x, axis, start } => {
                let src_shape = self.values[x.0].shape();
                let (outer, dim, inner) = split_axis(src_shape, *axis);
                let len = out.shape()[*axis];
                let mut gx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    let dst = o * dim * inner + start * inner;
                    let src = o * len * inner;
                    gx[dst..dst + len * inner].copy_from_slice(&g[src..src + len * inner]);
                }
                self.accumulate(*x, gx);
            }
            Op::Transpose(x) => {
                let (m, n) = (self.values[x.0].shape()[0], self.values[x.0].shape()[1]);
                let mut gx = vec![0.0; m * n];
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] = g[j * m + i];
                    }
                }
                self.accumulate(*x, gx);
            }
            Op::Sum(x) => {
                let n = self.values[x.0].len();
                self.accumulate(*x, vec![g[0]; n]);
            }
            Op::Mean(x) => {
                let n = self.values[x.0].len();
                self.accumulate(*x, vec![g[0] / n.max(1) as f64; n]);
            }
            Op::SumAxis { x, axis } => {
                let (outer, dim, inner) = split_axis(self.values[x.0].shape(), *axis);
                let mut gx = vec![0.0; outer * dim * inner];
                for o in 0..outer {
                    for k in 0..dim {
                        let dst = o * dim * inner + k * inner;
                        gx[dst..dst + inner].copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.accumulate(*x, gx);
            }
            Op::GatherRows { x, index } => {
                let xs = self.values[x.0].shape();
                let n = xs[1];
                let mut gx = vec![0.0; xs[0] * n];
                for (k, &i) in index.iter().enumerate() {
                    add_into(&mut gx[i * n..(i + 1) * n], &g[k * n..(k + 1) * n]);
                }
                self.accumulate(*x, gx);
            }
            Op::ScatterRows { x, index } => {
                let n = self.values[x.0].shape()[1];
                let mut gx = Vec::with_capacity(index.len() * n);
                for &i in index {
                    gx.extend_from_slice(&g[i * n..(i + 1) * n]);
                }
                self.accumulate(*x, gx);
            }
            Op::Bce {
                x,
                targets,
                pos_weight,
            } => {
                let xd = self.values[x.0].data();
                let n = xd.len().max(1) as f64;
                let gx = xd
                    .iter()
                    .zip(targets)
                    .map(|(&x, &y)| {
                        let s = sigmoid_scalar(x);
                        g[0] * (pos_weight * y * (s - 1.0) + (1.0 - y) * s) / n
                    })
                    .collect();
                self.accumulate(*x, gx);
            }
        }
        self.ops[idx] = op;
    }
}
