//! Datasets: manifest-driven JSONL ingestion, corpus statistics, trope
//! co-occurrence, and a planted-pattern synthetic generator.

mod io;
mod stats;
mod synth;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::doc::FeatureDoc;
use crate::error::{Error, Result};

pub use io::{load_dataset, parse_jsonl, save_dataset, Manifest};
pub use stats::{
    corpus_stats, cooccurrence_iou, prevalence_report, summarize, trope_prevalence, CorpusStats, PairIou,
    PrevalenceReport, Summary, TropeShare,
};
pub use synth::{synth_generate, synth_generate_raw, PlantedRule, RawDoc, SynthSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" | "valid" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TropeCategory {
    CharacterTrait,
    RoleInteraction,
    Situation,
    Storyline,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub trope_names: Vec<String>,
    pub trope_categories: Option<BTreeMap<String, TropeCategory>>,
    pub splits: BTreeMap<Split, Vec<FeatureDoc>>,
}

impl Dataset {
    pub fn num_tropes(&self) -> usize {
        self.trope_names.len()
    }

    /// Documents of `split`; empty when the split is absent.
    pub fn split(&self, split: Split) -> &[FeatureDoc] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn docs(&self) -> impl Iterator<Item = &FeatureDoc> {
        self.splits.values().flatten()
    }

    /// `(word_dim, sent_dim)`; the word width comes from the first
    /// document that has tokens.
    pub fn feature_dims(&self) -> Option<(usize, usize)> {
        let first = self.docs().next()?;
        let word = self.docs().find(|d| d.num_tokens() > 0).map_or(0, |d| d.word_dim());
        Some((word, first.sent_dim()))
    }

    /// Label bounds, per-document invariants, consistent feature widths,
    /// and unique document ids across splits.
    pub fn validate(&self) -> Result<()> {
        let t = self.num_tropes();
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        let dims = self.feature_dims();
        for (&split, docs) in &self.splits {
            for doc in docs {
                doc.validate(t)?;
                if let Some(prev) = seen.insert(&doc.doc_id, split) {
                    return Err(Error::InvalidDocument {
                        doc_id: doc.doc_id.clone(),
                        reason: format!("duplicate document id (also in {prev})"),
                    });
                }
                let (w, s) = dims.expect("non-empty");
                let word_ok = doc.num_tokens() == 0 || doc.word_dim() == w;
                if !word_ok || doc.sent_dim() != s {
                    return Err(Error::InvalidDocument {
                        doc_id: doc.doc_id.clone(),
                        reason: format!(
                            "feature widths ({}, {}) differ from the dataset's ({w}, {s})",
                            doc.word_dim(),
                            doc.sent_dim()
                        ),
                    });
                }
            }
        }
        if let Some(cats) = &self.trope_categories {
            if let Some(name) = cats.keys().find(|k| !self.trope_names.contains(k)) {
                return Err(Error::Config(format!("category given for unknown trope `{name}`")));
            }
        }
        Ok(())
    }
}
