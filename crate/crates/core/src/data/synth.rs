//! Planted-pattern synthetic synopses.
//!
//! Tokens `0..num_entities` are entity names. A token rule labels a trope
//! exactly when its trigger token occurs; trigger tokens never appear as
//! filler. A motif rule labels a trope exactly when its two entities are
//! mentioned in one sentence. Negative motif documents are often decoys
//! that mention both entities in different sentences, so bag-of-words
//! evidence cannot separate them from positives.
//!
//! Every mention inserts the entity's name token into the sentence. Word
//! features are fixed per-token embeddings; a sentence feature is the sum
//! of its token embeddings divided by `√len`.

use std::collections::BTreeSet;

use rand::seq::index::sample;
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Dataset, Split, TropeCategory};
use crate::doc::{EntityMentions, FeatureDoc};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::{derived, Rng as ChaCha};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PlantedRule {
    Token { trope: usize, token: usize },
    Motif { trope: usize, entities: (usize, usize) },
}

impl PlantedRule {
    pub fn trope(&self) -> usize {
        match *self {
            PlantedRule::Token { trope, .. } | PlantedRule::Motif { trope, .. } => trope,
        }
    }
}

fn d_docs() -> usize {
    2000
}
fn d_vocab() -> usize {
    256
}
fn d_dim() -> usize {
    16
}
fn d_entities() -> usize {
    12
}
fn d_trigger() -> f64 {
    0.3
}
fn d_decoy() -> f64 {
    0.8
}
fn d_sentences() -> (usize, usize) {
    (6, 12)
}
fn d_sentence_len() -> (usize, usize) {
    (5, 10)
}
fn d_embedding_norm() -> f64 {
    1.0
}
fn d_comentions() -> usize {
    1
}
fn d_extra_mention() -> f64 {
    0.5
}
fn d_name_norm() -> f64 {
    1.0
}
fn d_test() -> f64 {
    0.2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    #[serde(default = "d_docs")]
    pub docs: usize,
    #[serde(default = "d_vocab")]
    pub vocab: usize,
    /// Feature width of both words and sentences.
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_entities")]
    pub num_entities: usize,
    /// One rule per trope; the trope count is `rules.len()`.
    #[serde(default = "default_rules")]
    pub rules: Vec<PlantedRule>,
    /// Probability that a rule's trigger is planted.
    #[serde(default = "d_trigger")]
    pub trigger_prob: f64,
    /// Probability that an unplanted motif becomes a separated-mention decoy.
    #[serde(default = "d_decoy")]
    pub decoy_prob: f64,
    /// Inclusive range of sentences per document.
    #[serde(default = "d_sentences")]
    pub sentences: (usize, usize),
    /// Inclusive range of filler tokens per sentence.
    #[serde(default = "d_sentence_len")]
    pub sentence_len: (usize, usize),
    /// Expected L2 norm of a token embedding.
    #[serde(default = "d_embedding_norm")]
    pub embedding_norm: f64,
    /// Sentences shared by a planted motif pair; a decoy mentions each
    /// entity in as many separate sentences.
    #[serde(default = "d_comentions")]
    pub comentions: usize,
    /// Probability that a mentioned motif entity gets one more mention in a
    /// sentence without its partner.
    #[serde(default = "d_extra_mention")]
    pub extra_mention_prob: f64,
    /// Expected L2 norm of an entity-name token embedding.
    #[serde(default = "d_name_norm")]
    pub name_norm: f64,
    #[serde(default = "d_test")]
    pub test_fraction: f64,
    #[serde(default)]
    pub val_fraction: f64,
}

/// Four token rules (tropes 0–3) and four motif rules (tropes 4–7) over
/// entity pairs (0,1), (2,3), (4,5), (6,7).
pub fn default_rules() -> Vec<PlantedRule> {
    let mut rules: Vec<PlantedRule> = (0..4)
        .map(|t| PlantedRule::Token {
            trope: t,
            token: d_entities() + 5 + t,
        })
        .collect();
    rules.extend((0..4).map(|k| PlantedRule::Motif {
        trope: 4 + k,
        entities: (2 * k, 2 * k + 1),
    }));
    rules
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            docs: d_docs(),
            vocab: d_vocab(),
            dim: d_dim(),
            num_entities: d_entities(),
            rules: default_rules(),
            trigger_prob: d_trigger(),
            decoy_prob: d_decoy(),
            sentences: d_sentences(),
            sentence_len: d_sentence_len(),
            embedding_norm: d_embedding_norm(),
            comentions: d_comentions(),
            extra_mention_prob: d_extra_mention(),
            name_norm: d_name_norm(),
            test_fraction: d_test(),
            val_fraction: 0.0,
        }
    }
}

impl SynthSpec {
    pub fn num_tropes(&self) -> usize {
        self.rules.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = self.num_tropes();
        let tropes: BTreeSet<usize> = self.rules.iter().map(|r| r.trope()).collect();
        if tropes.len() != t || tropes.iter().any(|&x| x >= t) {
            return bad(format!("rules must cover tropes 0..{t} exactly once"));
        }
        let mut triggers = BTreeSet::new();
        let mut used = BTreeSet::new();
        for r in &self.rules {
            match *r {
                PlantedRule::Token { trope, token } => {
                    if token < self.num_entities || token >= self.vocab {
                        return bad(format!(
                            "trope {trope}: trigger token {token} must lie in {}..{}",
                            self.num_entities, self.vocab
                        ));
                    }
                    if !triggers.insert(token) {
                        return bad(format!("trigger token {token} is used twice"));
                    }
                }
                PlantedRule::Motif { trope, entities: (a, b) } => {
                    if a == b || a >= self.num_entities || b >= self.num_entities {
                        return bad(format!("trope {trope}: motif entities ({a}, {b}) are invalid"));
                    }
                    if !used.insert(a) || !used.insert(b) {
                        return bad(format!("trope {trope}: motif entities must not be shared between rules"));
                    }
                }
            }
        }
        if self.vocab <= self.num_entities + triggers.len() {
            return bad("vocabulary leaves no filler tokens".into());
        }
        let (s0, s1) = self.sentences;
        let (l0, l1) = self.sentence_len;
        if s0 < 2 || s0 > s1 || l0 == 0 || l0 > l1 {
            return bad("sentence ranges must be non-empty with at least 2 sentences".into());
        }
        if self.comentions == 0 || 2 * self.comentions > s0 {
            return bad(format!("comentions must lie in 1..={} for at least {s0} sentences", s0 / 2));
        }
        for (name, p) in [
            ("trigger_prob", self.trigger_prob),
            ("decoy_prob", self.decoy_prob),
            ("extra_mention_prob", self.extra_mention_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1]"));
            }
        }
        if self.test_fraction < 0.0 || self.val_fraction < 0.0 || self.test_fraction + self.val_fraction > 1.0 {
            return bad("split fractions must be non-negative and sum to at most 1".into());
        }
        if self.dim == 0 || ![self.embedding_norm, self.name_norm].iter().all(|n| *n > 0.0 && n.is_finite()) {
            return bad("dim and embedding norms must be positive".into());
        }
        Ok(())
    }
}

/// A generated document before featurization.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDoc {
    pub doc_id: String,
    /// Token ids per sentence.
    pub sentences: Vec<Vec<usize>>,
    /// Entity kinds mentioned per sentence.
    pub mentions: Vec<BTreeSet<usize>>,
    pub labels: Vec<usize>,
}

impl RawDoc {
    /// Labels recomputed from content by the rules.
    pub fn rule_labels(&self, rules: &[PlantedRule]) -> Vec<usize> {
        let mut out: Vec<usize> = rules
            .iter()
            .filter(|r| match **r {
                PlantedRule::Token { token, .. } => self.sentences.iter().any(|s| s.contains(&token)),
                PlantedRule::Motif { entities: (a, b), .. } => {
                    self.mentions.iter().any(|m| m.contains(&a) && m.contains(&b))
                }
            })
            .map(|r| r.trope())
            .collect();
        out.sort_unstable();
        out
    }
}

fn mention(doc: &mut RawDoc, rng: &mut ChaCha, entity: usize, sentence: usize) {
    if doc.mentions[sentence].insert(entity) {
        let s = &mut doc.sentences[sentence];
        let pos = rng.random_range(0..=s.len());
        s.insert(pos, entity);
    }
}

/// A sentence index not mentioning `avoid`, if any.
fn free_sentence(doc: &RawDoc, rng: &mut ChaCha, avoid: usize) -> Option<usize> {
    let free: Vec<usize> = (0..doc.sentences.len())
        .filter(|&s| !doc.mentions[s].contains(&avoid))
        .collect();
    free.choose(rng).copied()
}

fn generate_one(spec: &SynthSpec, rng: &mut ChaCha, filler: &[usize], doc_id: String) -> RawDoc {
    let n = rng.random_range(spec.sentences.0..=spec.sentences.1);
    let sentences = (0..n)
        .map(|_| {
            let len = rng.random_range(spec.sentence_len.0..=spec.sentence_len.1);
            (0..len).map(|_| *filler.choose(rng).expect("filler")).collect()
        })
        .collect();
    let mut doc = RawDoc {
        doc_id,
        sentences,
        mentions: vec![BTreeSet::new(); n],
        labels: Vec::new(),
    };
    let mut motif_entities = BTreeSet::new();
    for rule in &spec.rules {
        match *rule {
            PlantedRule::Token { token, .. } => {
                if rng.random_bool(spec.trigger_prob) {
                    let s = rng.random_range(0..n);
                    let pos = rng.random_range(0..=doc.sentences[s].len());
                    doc.sentences[s].insert(pos, token);
                }
            }
            PlantedRule::Motif { entities: (a, b), .. } => {
                motif_entities.extend([a, b]);
                let k = spec.comentions;
                let present: Vec<usize> = if rng.random_bool(spec.trigger_prob) {
                    for s in sample(rng, n, k) {
                        mention(&mut doc, rng, a, s);
                        mention(&mut doc, rng, b, s);
                    }
                    vec![a, b]
                } else if rng.random_bool(spec.decoy_prob) {
                    // Same mention counts as a planted motif, never together.
                    let picked = sample(rng, n, 2 * k).into_vec();
                    for (j, &s) in picked.iter().enumerate() {
                        mention(&mut doc, rng, if j < k { a } else { b }, s);
                    }
                    vec![a, b]
                } else if rng.random_bool(0.5) {
                    let one = if rng.random_bool(0.5) { a } else { b };
                    let s = rng.random_range(0..n);
                    mention(&mut doc, rng, one, s);
                    vec![one]
                } else {
                    vec![]
                };
                // Extra solo mentions never join a partner's sentence.
                for &e in &present {
                    let partner = if e == a { b } else { a };
                    if rng.random_bool(spec.extra_mention_prob) {
                        if let Some(s) = free_sentence(&doc, rng, partner) {
                            mention(&mut doc, rng, e, s);
                        }
                    }
                }
            }
        }
    }
    for e in 0..spec.num_entities {
        if motif_entities.contains(&e) || !rng.random_bool(0.5) {
            continue;
        }
        for _ in 0..rng.random_range(1..=3) {
            let s = rng.random_range(0..n);
            mention(&mut doc, rng, e, s);
        }
    }
    doc.labels = doc.rule_labels(&spec.rules);
    doc
}

fn embeddings(spec: &SynthSpec, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = derived(seed, 2);
    let unit = 1.0 / (spec.dim as f64).sqrt();
    (0..spec.vocab)
        .map(|tok| {
            let norm = if tok < spec.num_entities { spec.name_norm } else { spec.embedding_norm };
            let scale = norm * unit;
            (0..spec.dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect()
        })
        .collect()
}

fn featurize(raw: &RawDoc, emb: &[Vec<f64>], dim: usize) -> FeatureDoc {
    let tokens: Vec<usize> = raw.sentences.iter().flatten().copied().collect();
    let word_feats = Tensor::new(
        vec![tokens.len(), dim],
        tokens.iter().flat_map(|&t| emb[t].iter().copied()).collect(),
    )
    .expect("word feature shape");
    let sent_feats = Tensor::new(
        vec![raw.sentences.len(), dim],
        raw.sentences
            .iter()
            .flat_map(|s| {
                let norm = 1.0 / (s.len() as f64).sqrt();
                let mut acc = vec![0.0; dim];
                for &t in s {
                    for (a, v) in acc.iter_mut().zip(&emb[t]) {
                        *a += v;
                    }
                }
                acc.into_iter().map(move |a| a * norm)
            })
            .collect(),
    )
    .expect("sentence feature shape");
    let kinds: BTreeSet<usize> = raw.mentions.iter().flatten().copied().collect();
    let entities = kinds
        .into_iter()
        .map(|k| EntityMentions {
            id: format!("entity-{k}"),
            sents: (0..raw.mentions.len()).filter(|&s| raw.mentions[s].contains(&k)).collect(),
        })
        .collect();
    FeatureDoc {
        doc_id: raw.doc_id.clone(),
        word_feats,
        sent_feats,
        entities,
        labels: raw.labels.clone(),
    }
}

/// Raw documents in generation order; deterministic in `seed`.
pub fn synth_generate_raw(spec: &SynthSpec, seed: u64) -> Result<Vec<RawDoc>> {
    spec.validate()?;
    let triggers: BTreeSet<usize> = spec
        .rules
        .iter()
        .filter_map(|r| match *r {
            PlantedRule::Token { token, .. } => Some(token),
            PlantedRule::Motif { .. } => None,
        })
        .collect();
    let filler: Vec<usize> = (spec.num_entities..spec.vocab).filter(|t| !triggers.contains(t)).collect();
    let mut rng = derived(seed, 1);
    Ok((0..spec.docs)
        .map(|k| generate_one(spec, &mut rng, &filler, format!("synth-{k:05}")))
        .collect())
}

/// Featurized dataset; the first documents form train, then val, then test.
pub fn synth_generate(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    let raw = synth_generate_raw(spec, seed)?;
    let emb = embeddings(spec, seed);
    let docs: Vec<FeatureDoc> = raw.iter().map(|r| featurize(r, &emb, spec.dim)).collect();
    let n = docs.len();
    let n_test = (spec.test_fraction * n as f64).round() as usize;
    let n_val = (spec.val_fraction * n as f64).round() as usize;
    let n_train = n.saturating_sub(n_test + n_val);
    let mut it = docs.into_iter();
    let mut splits = std::collections::BTreeMap::new();
    splits.insert(Split::Train, it.by_ref().take(n_train).collect());
    if n_val > 0 {
        splits.insert(Split::Val, it.by_ref().take(n_val).collect());
    }
    splits.insert(Split::Test, it.collect());
    let names: Vec<String> = (0..spec.num_tropes())
        .map(|t| match spec.rules.iter().find(|r| r.trope() == t) {
            Some(PlantedRule::Token { token, .. }) => format!("token-{t}-w{token}"),
            Some(PlantedRule::Motif { entities: (a, b), .. }) => format!("motif-{t}-e{a}-e{b}"),
            None => unreachable!("validated"),
        })
        .collect();
    let categories = spec
        .rules
        .iter()
        .map(|r| {
            let cat = match r {
                PlantedRule::Token { .. } => TropeCategory::Situation,
                PlantedRule::Motif { .. } => TropeCategory::RoleInteraction,
            };
            (names[r.trope()].clone(), cat)
        })
        .collect();
    let ds = Dataset {
        trope_names: names,
        trope_categories: Some(categories),
        splits,
    };
    ds.validate()?;
    Ok(ds)
}
