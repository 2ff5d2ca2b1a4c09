//! Gradient checks of every parameterized component of a tiny model, each
//! differentiated through the full batch loss, plus the whole model at once.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::{EntityMentions, FeatureDoc};
use crate::error::Result;
use crate::mulcom::{build_graphs, ModelConfig, MulCom};
use crate::numerics::{grad_check, GradCheckConfig, ParamSet, Tensor};
use crate::rng::{derived, Rng as ChaCha};

/// Relative-error bound every component must meet.
pub const GRAD_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradCheckSuite {
    pub tropes: usize,
    pub trope_dim: usize,
    pub feat_dim: usize,
    pub steps: usize,
    pub heads: usize,
    /// Parameters are redrawn from U(−scale, scale) so gradients are not
    /// vanishingly small at the check point.
    pub param_scale: f64,
    pub pos_weight: f64,
    pub eps: f64,
    pub max_coords_per_tensor: usize,
}

impl Default for GradCheckSuite {
    fn default() -> Self {
        Self {
            tropes: 3,
            trope_dim: 8,
            feat_dim: 3,
            steps: 2,
            heads: 2,
            param_scale: 0.6,
            pos_weight: 1.5,
            eps: 1e-5,
            max_coords_per_tensor: 64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComponentCheck {
    pub component: String,
    pub max_relative_error: f64,
    pub checked: usize,
    pub noise_limited: usize,
    pub skipped_kinks: usize,
    pub worst_param: Option<String>,
    /// Analytic and central-difference derivative at the worst coordinate.
    pub worst_values: Option<(f64, f64)>,
    pub pass: bool,
}

/// Uniform(−1, 1) tensor.
pub fn random_tensor(rng: &mut ChaCha, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).expect("shape")
}

/// Overwrites every parameter with U(−scale, scale) draws, biases included.
pub fn randomize(ps: &mut ParamSet, rng: &mut ChaCha, scale: f64) {
    for t in ps.tensors_mut() {
        for v in t.data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// Random features with three tokens per sentence; each entity is
/// mentioned in each sentence with probability `mention_p`.
pub fn random_doc(rng: &mut ChaCha, entities: usize, sents: usize, dim: usize, mention_p: f64) -> FeatureDoc {
    let sent_feats = random_tensor(rng, &[sents, dim]);
    let word_feats = random_tensor(rng, &[sents * 3, dim]);
    let entities = (0..entities)
        .map(|k| EntityMentions {
            id: format!("e{k}"),
            sents: (0..sents).filter(|_| rng.random_bool(mention_p)).collect(),
        })
        .collect();
    FeatureDoc {
        doc_id: "rand".into(),
        word_feats,
        sent_feats,
        entities,
        labels: vec![],
    }
}

impl GradCheckSuite {
    pub fn model_config(&self) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.tropes, self.feat_dim, self.feat_dim);
        cfg.trope_dim = self.trope_dim;
        cfg.attn_dim = self.trope_dim;
        cfg.hidden_dim = self.trope_dim;
        cfg.steps = self.steps;
        cfg.heads = self.heads;
        cfg
    }

    /// One row per component, then `mulcom` covering all parameters.
    pub fn run(&self, seed: u64) -> Result<Vec<ComponentCheck>> {
        let mut model = MulCom::new(self.model_config(), seed)?;
        randomize(&mut model.params, &mut derived(seed, 1), self.param_scale);
        let mut rng = derived(seed, 2);
        let docs: Vec<FeatureDoc> = (0..2)
            .map(|k| {
                let mut d = random_doc(&mut rng, 3, 4, self.feat_dim, 0.5);
                d.doc_id = format!("probe-{k}");
                d.labels = (0..self.tropes).filter(|t| (t + k) % 2 == 0).collect();
                d
            })
            .collect();
        let graphs = build_graphs(&docs);
        let batch: Vec<_> = docs.iter().zip(&graphs).collect();
        let cfg = GradCheckConfig {
            eps: self.eps,
            max_coords_per_tensor: self.max_coords_per_tensor,
            seed,
            ..GradCheckConfig::default()
        };
        let mut groups = model.components();
        groups.push(("mulcom".into(), model.params.ids().collect()));
        groups
            .into_iter()
            .map(|(name, ids)| {
                let r = grad_check(
                    &model.params,
                    Some(&ids),
                    |tape| model.batch_loss(tape, &batch, self.pos_weight),
                    &cfg,
                )?;
                Ok(ComponentCheck {
                    component: name,
                    pass: r.max_relative_error < GRAD_TOLERANCE && r.checked > 0,
                    max_relative_error: r.max_relative_error,
                    checked: r.checked,
                    noise_limited: r.noise_limited,
                    skipped_kinks: r.skipped_kinks,
                    worst_param: r.worst.map(|(n, _)| n),
                    worst_values: r.worst_values,
                })
            })
            .collect()
    }
}
