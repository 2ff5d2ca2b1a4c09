//! Mini-batch training with Adam.
//!
//! Per-document gradients are computed against read-only parameters (in
//! parallel when enabled) and summed in document order, so the update is
//! bit-identical for any thread count.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::doc::FeatureDoc;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::graph::SynopsisGraph;
use crate::mulcom::{build_graphs, MulCom};
use crate::numerics::{ParamSet, Tensor};
use crate::rng::derived;

fn default_lr() -> f64 {
    1e-3
}
fn default_epochs() -> usize {
    30
}
fn default_batch_size() -> usize {
    16
}
fn default_threshold() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    /// Linear learning-rate ramp over the first updates; 0 disables it.
    #[serde(default)]
    pub warmup_steps: usize,
    #[serde(default)]
    pub seed: u64,
    /// `p`; `None` uses [`default_pos_weight`] on the training split.
    #[serde(default)]
    pub pos_weight: Option<f64>,
    /// `τ` for binarizing scores.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: default_lr(),
            warmup_steps: 0,
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed: 0,
            pos_weight: None,
            threshold: default_threshold(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be finite and ≥ 0", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(p) = self.pos_weight {
            if !(p > 0.0 && p.is_finite()) {
                return Err(Error::Config(format!("positive weight {p} must be > 0")));
            }
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        Ok(())
    }
}

/// Negative-to-positive label ratio of `docs`, clamped to `[1, 20]`.
pub fn default_pos_weight(docs: &[FeatureDoc], num_tropes: usize) -> f64 {
    let pos: usize = docs.iter().map(|d| d.labels.len()).sum();
    let total = docs.len() * num_tropes;
    if pos == 0 {
        return if total == 0 { 1.0 } else { 20.0 };
    }
    ((total - pos) as f64 / pos as f64).clamp(1.0, 20.0)
}

/// Adam with bias correction.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut ParamSet, grads: &[Tensor]) {
        debug_assert_eq!(grads.len(), params.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (k, p) in params.tensors_mut().iter_mut().enumerate() {
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (i, (w, g)) in p.data_mut().iter_mut().zip(grads[k].data()).enumerate() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch loss over the epoch.
    pub mean_loss: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub pos_weight: f64,
    pub epochs: Vec<EpochRecord>,
}

/// Multiplier for the `update`-th step (1-based) under a linear ramp.
pub fn warmup_factor(update: usize, warmup_steps: usize) -> f64 {
    if warmup_steps == 0 {
        1.0
    } else {
        (update as f64 / warmup_steps as f64).min(1.0)
    }
}

/// Loss and summed gradients of one batch, averaged over its documents.
pub fn batch_gradients(
    model: &MulCom,
    batch: &[(&FeatureDoc, &SynopsisGraph)],
    pos_weight: f64,
    exec: Exec,
) -> Result<(f64, Vec<Tensor>)> {
    let per_doc = exec.try_map(batch, |_, (doc, graph)| model.doc_loss_and_grads(doc, graph, pos_weight))?;
    let scale = 1.0 / batch.len() as f64;
    let mut iter = per_doc.into_iter();
    let (mut loss, mut grads) = iter.next().ok_or_else(|| Error::Usage("empty batch".into()))?;
    for (l, g) in iter {
        loss += l;
        for (acc, x) in grads.iter_mut().zip(&g) {
            for (a, b) in acc.data_mut().iter_mut().zip(x.data()) {
                *a += b;
            }
        }
    }
    for g in &mut grads {
        for a in g.data_mut() {
            *a *= scale;
        }
    }
    Ok((loss * scale, grads))
}

/// Trains in place; `on_epoch` sees each record as it completes.
pub fn train(
    model: &mut MulCom,
    docs: &[FeatureDoc],
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    cfg.validate()?;
    if docs.is_empty() {
        return Err(Error::Usage("training split is empty".into()));
    }
    let pos_weight = cfg
        .pos_weight
        .unwrap_or_else(|| default_pos_weight(docs, model.num_tropes()));
    let graphs = build_graphs(docs);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut rng = derived(cfg.seed, 1);
    let mut adam = Adam::new(&model.params, cfg.learning_rate);
    let mut report = TrainReport {
        pos_weight,
        epochs: Vec::with_capacity(cfg.epochs),
    };
    let mut updates = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut steps = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<_> = chunk.iter().map(|&k| (&docs[k], &graphs[k])).collect();
            let (loss, grads) = batch_gradients(model, &batch, pos_weight, exec)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                let ids: Vec<&str> = chunk.iter().map(|&k| docs[k].doc_id.as_str()).collect();
                return Err(Error::NonFinite(format!(
                    "loss {loss} at epoch {epoch}, step {steps}, batch {ids:?}"
                )));
            }
            updates += 1;
            adam.lr = cfg.learning_rate * warmup_factor(updates, cfg.warmup_steps);
            adam.step(&mut model.params, &grads);
            total += loss;
            steps += 1;
        }
        let record = EpochRecord {
            epoch,
            mean_loss: total / steps as f64,
            steps,
        };
        log::info!("epoch {epoch}: mean loss {:.6}", record.mean_loss);
        on_epoch(&record);
        report.epochs.push(record);
    }
    Ok(report)
}

/// Scores `[docs × |T|]` with read-only parameters.
pub fn predict(model: &MulCom, docs: &[FeatureDoc], exec: Exec) -> Result<Vec<Vec<f64>>> {
    exec.try_map(docs, |_, doc| model.scores(doc))
}
