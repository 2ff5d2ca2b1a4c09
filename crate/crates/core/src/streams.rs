//! Comprehension streams: word-, sentence-, and relation-level instance
//! processors, each pooled per trope by trope-query attention.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::doc::FeatureDoc;
use crate::error::{Error, Result};
use crate::graph::SynopsisGraph;
use crate::msrrn::{Reasoner, ReasonerConfig, ReasonerMode};
use crate::numerics::{Linear, LstmCell, ParamId, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    Word,
    Sentence,
    Relation,
}

impl StreamKind {
    pub const ALL: [StreamKind; 3] = [StreamKind::Word, StreamKind::Sentence, StreamKind::Relation];

    pub fn label(self) -> &'static str {
        match self {
            StreamKind::Word => "Word",
            StreamKind::Sentence => "Sent",
            StreamKind::Relation => "MSRRN",
        }
    }
}

impl std::str::FromStr for StreamKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "word" => Ok(StreamKind::Word),
            "sent" | "sentence" => Ok(StreamKind::Sentence),
            "relation" | "msrrn" | "graph" => Ok(StreamKind::Relation),
            other => Err(Error::Config(format!("unknown stream `{other}`"))),
        }
    }
}

/// Trope-query attention: the trope memory projector maps `E` to queries,
/// the instance projections map document features to keys and values, and
/// an output map returns to the trope embedding width. Keys carry no bias:
/// a key bias shifts every score of a query equally and cancels in softmax.
#[derive(Clone, Debug)]
pub struct TropeAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub out: Linear,
    pub attn_dim: usize,
}

impl TropeAttention {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        name: &str,
        trope_dim: usize,
        feat_dim: usize,
        attn_dim: usize,
    ) -> Self {
        Self {
            query: Linear::new(ps, rng, &format!("{name}.query"), trope_dim, attn_dim),
            key: Linear::without_bias(ps, rng, &format!("{name}.key"), feat_dim, attn_dim),
            value: Linear::new(ps, rng, &format!("{name}.value"), feat_dim, attn_dim),
            out: Linear::new(ps, rng, &format!("{name}.out"), attn_dim, trope_dim),
            attn_dim,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        [&self.query, &self.key, &self.value, &self.out]
            .iter()
            .flat_map(|l| l.params())
            .collect()
    }

    /// Returns `(r: [|T| × d_f], weights: [|T| × L])`.
    pub fn attend_with_weights(&self, tape: &mut Tape, tropes: Var, feats: Var) -> Result<(Var, Var)> {
        let q = self.query.forward(tape, tropes)?;
        let k = self.key.forward(tape, feats)?;
        let v = self.value.forward(tape, feats)?;
        let kt = tape.transpose(k)?;
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.attn_dim as f64).sqrt());
        let weights = tape.softmax(scores, 1)?;
        let pooled = tape.matmul(weights, v)?;
        Ok((self.out.forward(tape, pooled)?, weights))
    }

    pub fn attend(&self, tape: &mut Tape, tropes: Var, feats: Var) -> Result<Var> {
        Ok(self.attend_with_weights(tape, tropes, feats)?.0)
    }
}

/// Attention directly over word features.
#[derive(Clone, Debug)]
pub struct WordStream {
    pub attn: TropeAttention,
    pub max_tokens: usize,
}

impl WordStream {
    pub fn forward(&self, tape: &mut Tape, doc: &FeatureDoc, tropes: Var) -> Result<Var> {
        let n = doc.num_tokens().min(self.max_tokens);
        if n == 0 {
            return Err(Error::EmptyDocument {
                doc_id: doc.doc_id.clone(),
                what: "no word features",
            });
        }
        let all = tape.constant(doc.word_feats.clone());
        let feats = if n < doc.num_tokens() {
            tape.slice(all, 0, 0, n)?
        } else {
            all
        };
        self.attn.attend(tape, tropes, feats)
    }
}

/// Forward LSTM over sentence features, then attention over its states.
#[derive(Clone, Debug)]
pub struct SentenceStream {
    pub rnn: LstmCell,
    pub attn: TropeAttention,
}

impl SentenceStream {
    /// Contextual states `[sentences × d_a]`.
    pub fn encode(&self, tape: &mut Tape, doc: &FeatureDoc) -> Result<Var> {
        let n = doc.num_sentences();
        if n == 0 {
            return Err(Error::EmptyDocument {
                doc_id: doc.doc_id.clone(),
                what: "no sentence features",
            });
        }
        let feats = tape.constant(doc.sent_feats.clone());
        let d = self.rnn.hidden_dim;
        let mut h = tape.constant(Tensor::zeros(vec![1, d]));
        let mut c = tape.constant(Tensor::zeros(vec![1, d]));
        let mut states = Vec::with_capacity(n);
        for s in 0..n {
            let x = tape.slice(feats, 0, s, 1)?;
            (h, c) = self.rnn.forward(tape, h, c, x)?;
            states.push(h);
        }
        if states.len() == 1 {
            Ok(states[0])
        } else {
            tape.concat(&states, 0)
        }
    }

    pub fn forward(&self, tape: &mut Tape, doc: &FeatureDoc, tropes: Var) -> Result<Var> {
        let states = self.encode(tape, doc)?;
        self.attn.attend(tape, tropes, states)
    }
}

/// Relational reasoning over the entity graph, then attention over nodes.
#[derive(Clone, Debug)]
pub struct RelationStream {
    pub reasoner: Reasoner,
    pub mode: ReasonerMode,
    pub attn: TropeAttention,
}

/// Output of one stream; `present` is false when the stream had nothing to
/// read (a document without entities) and emitted zeros.
#[derive(Clone, Copy, Debug)]
pub struct StreamOutput {
    pub value: Var,
    pub present: bool,
}

impl RelationStream {
    pub fn forward(&self, tape: &mut Tape, graph: &SynopsisGraph, tropes: Var) -> Result<StreamOutput> {
        if graph.num_nodes() == 0 {
            let shape = tape.shape(tropes).to_vec();
            return Ok(StreamOutput {
                value: tape.constant(Tensor::zeros(shape)),
                present: false,
            });
        }
        let states = self.reasoner.run(tape, graph, self.mode)?;
        Ok(StreamOutput {
            value: self.attn.attend(tape, tropes, states)?,
            present: true,
        })
    }
}

/// Dimensions shared by the stream constructors.
#[derive(Clone, Copy, Debug)]
pub struct StreamDims {
    pub trope_dim: usize,
    pub attn_dim: usize,
    pub word_dim: usize,
    pub sent_dim: usize,
}

impl WordStream {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, dims: StreamDims, max_tokens: usize) -> Self {
        Self {
            attn: TropeAttention::new(ps, rng, "word.attn", dims.trope_dim, dims.word_dim, dims.attn_dim),
            max_tokens,
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        self.attn.params()
    }
}

impl SentenceStream {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, dims: StreamDims) -> Self {
        Self {
            rnn: LstmCell::new(ps, rng, "sentence.rnn", dims.sent_dim, dims.attn_dim),
            attn: TropeAttention::new(ps, rng, "sentence.attn", dims.trope_dim, dims.attn_dim, dims.attn_dim),
        }
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.rnn.params();
        p.extend(self.attn.params());
        p
    }
}

impl RelationStream {
    pub fn new(
        ps: &mut ParamSet,
        rng: &mut impl Rng,
        dims: StreamDims,
        reasoner: ReasonerConfig,
        mode: ReasonerMode,
    ) -> Result<Self> {
        let hidden = reasoner.hidden_dim;
        Ok(Self {
            reasoner: Reasoner::new(ps, rng, "relation.reasoner", reasoner)?,
            mode,
            attn: TropeAttention::new(ps, rng, "relation.attn", dims.trope_dim, hidden, dims.attn_dim),
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.reasoner.params();
        p.extend(self.attn.params());
        p
    }
}
