//! One synopsis as precomputed features plus its gold trope labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityMentions {
    pub id: String,
    /// Ordinals of the sentences mentioning this entity.
    pub sents: Vec<usize>,
}

/// A synopsis: word features `[tokens × d_w]`, sentence features
/// `[sentences × d_s]`, coreference entities, and label indices.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDoc {
    pub doc_id: String,
    pub word_feats: Tensor,
    pub sent_feats: Tensor,
    pub entities: Vec<EntityMentions>,
    pub labels: Vec<usize>,
}

/// On-disk record, one JSON object per line.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DocRecord {
    pub doc_id: String,
    pub word_feats: Vec<Vec<f64>>,
    pub sent_feats: Vec<Vec<f64>>,
    pub entities: Vec<EntityMentions>,
    pub labels: Vec<usize>,
}

fn rows_to_tensor(doc_id: &str, what: &str, rows: &[Vec<f64>]) -> Result<Tensor> {
    Tensor::from_rows(rows).map_err(|_| Error::InvalidDocument {
        doc_id: doc_id.to_string(),
        reason: format!("{what} rows have differing lengths"),
    })
}

fn tensor_to_rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

impl FeatureDoc {
    pub fn num_tokens(&self) -> usize {
        self.word_feats.rows()
    }

    pub fn num_sentences(&self) -> usize {
        self.sent_feats.rows()
    }

    pub fn num_mentions(&self) -> usize {
        self.entities.iter().map(|e| e.sents.len()).sum()
    }

    pub fn word_dim(&self) -> usize {
        self.word_feats.shape().get(1).copied().unwrap_or(0)
    }

    pub fn sent_dim(&self) -> usize {
        self.sent_feats.shape().get(1).copied().unwrap_or(0)
    }

    /// Dense `{0,1}` target vector of length `num_tropes`.
    pub fn label_vector(&self, num_tropes: usize) -> Vec<f64> {
        let mut y = vec![0.0; num_tropes];
        for &l in &self.labels {
            y[l] = 1.0;
        }
        y
    }

    pub fn has_label(&self, trope: usize) -> bool {
        self.labels.binary_search(&trope).is_ok()
    }

    /// Sorts and deduplicates labels and mention lists (both are sets).
    pub fn normalize(&mut self) {
        self.labels.sort_unstable();
        self.labels.dedup();
        for e in &mut self.entities {
            e.sents.sort_unstable();
            e.sents.dedup();
        }
    }

    /// Checks mention bounds, label bounds, and the one-sentence minimum.
    pub fn validate(&self, num_tropes: usize) -> Result<()> {
        let invalid = |reason: String| Error::InvalidDocument {
            doc_id: self.doc_id.clone(),
            reason,
        };
        let n = self.num_sentences();
        if n == 0 {
            return Err(invalid("document has no sentences".into()));
        }
        for e in &self.entities {
            if let Some(s) = e.sents.iter().find(|&&s| s >= n) {
                return Err(invalid(format!(
                    "entity `{}` mentions sentence {s} but only {n} sentences exist",
                    e.id
                )));
            }
        }
        if let Some(l) = self.labels.iter().find(|&&l| l >= num_tropes) {
            return Err(invalid(format!(
                "label index {l} out of range for {num_tropes} tropes"
            )));
        }
        Ok(())
    }

    pub fn from_record(rec: DocRecord) -> Result<Self> {
        let word_feats = rows_to_tensor(&rec.doc_id, "word_feats", &rec.word_feats)?;
        let sent_feats = rows_to_tensor(&rec.doc_id, "sent_feats", &rec.sent_feats)?;
        let mut doc = Self {
            doc_id: rec.doc_id,
            word_feats,
            sent_feats,
            entities: rec.entities,
            labels: rec.labels,
        };
        doc.normalize();
        Ok(doc)
    }

    pub fn to_record(&self) -> DocRecord {
        DocRecord {
            doc_id: self.doc_id.clone(),
            word_feats: tensor_to_rows(&self.word_feats),
            sent_feats: tensor_to_rows(&self.sent_feats),
            entities: self.entities.clone(),
            labels: self.labels.clone(),
        }
    }
}
