//! The full model: a learned trope memory `E`, the enabled comprehension
//! streams, a per-trope mixture over streams, and a shared binary predictor.

use serde::{Deserialize, Serialize};

use crate::doc::FeatureDoc;
use crate::error::{Error, Result};
use crate::graph::{build_graph, SynopsisGraph};
use crate::msrrn::{ReasonerConfig, ReasonerMode};
use crate::numerics::{sigmoid_scalar, Mlp, ParamId, ParamSet, Tape, Tensor, Var};
use crate::rng::seeded;
use crate::streams::{RelationStream, SentenceStream, StreamDims, StreamKind, WordStream};

fn default_trope_dim() -> usize {
    64
}
fn default_attn_dim() -> usize {
    64
}
fn default_hidden_dim() -> usize {
    64
}
fn default_steps() -> usize {
    3
}
fn default_heads() -> usize {
    4
}
fn default_streams() -> Vec<StreamKind> {
    StreamKind::ALL.to_vec()
}
fn default_max_tokens() -> usize {
    4096
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub num_tropes: usize,
    pub word_dim: usize,
    pub sent_dim: usize,
    /// `d_f`: trope embedding and stream output width.
    #[serde(default = "default_trope_dim")]
    pub trope_dim: usize,
    /// `d_a`: attention width inside each stream.
    #[serde(default = "default_attn_dim")]
    pub attn_dim: usize,
    /// `d_h`: reasoner hidden width.
    #[serde(default = "default_hidden_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_heads")]
    pub heads: usize,
    #[serde(default = "default_streams")]
    pub streams: Vec<StreamKind>,
    #[serde(default)]
    pub reasoner: ReasonerMode,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
}

impl ModelConfig {
    pub fn new(num_tropes: usize, word_dim: usize, sent_dim: usize) -> Self {
        Self {
            num_tropes,
            word_dim,
            sent_dim,
            trope_dim: default_trope_dim(),
            attn_dim: default_attn_dim(),
            hidden_dim: default_hidden_dim(),
            steps: default_steps(),
            heads: default_heads(),
            streams: default_streams(),
            reasoner: ReasonerMode::default(),
            max_tokens: default_max_tokens(),
        }
    }

    /// Enabled streams in canonical order, duplicates removed.
    pub fn enabled_streams(&self) -> Vec<StreamKind> {
        StreamKind::ALL.into_iter().filter(|s| self.streams.contains(s)).collect()
    }

    pub fn reasoner_config(&self) -> ReasonerConfig {
        ReasonerConfig {
            feat_dim: self.sent_dim,
            hidden_dim: self.hidden_dim,
            steps: self.steps,
            heads: self.heads,
        }
    }

    /// Ablation label such as `MSRRN+Word+Sent`.
    pub fn ablation_name(&self) -> String {
        let mut parts: Vec<&str> = Vec::new();
        let streams = self.enabled_streams();
        if streams.contains(&StreamKind::Relation) {
            parts.push(match self.reasoner {
                ReasonerMode::Msrrn => "MSRRN",
                ReasonerMode::Rrn => "RRN",
            });
        }
        for s in [StreamKind::Word, StreamKind::Sentence] {
            if streams.contains(&s) {
                parts.push(s.label());
            }
        }
        parts.join("+")
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("num_tropes", self.num_tropes),
            ("word_dim", self.word_dim),
            ("sent_dim", self.sent_dim),
            ("trope_dim", self.trope_dim),
            ("attn_dim", self.attn_dim),
            ("max_tokens", self.max_tokens),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.enabled_streams().is_empty() {
            return Err(Error::Config("at least one stream must be enabled".into()));
        }
        if self.streams.contains(&StreamKind::Relation) {
            self.reasoner_config().validate()?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MulCom {
    pub config: ModelConfig,
    pub params: ParamSet,
    /// `E: [|T| × d_f]`.
    pub embedding: ParamId,
    pub word: Option<WordStream>,
    pub sentence: Option<SentenceStream>,
    pub relation: Option<RelationStream>,
    /// `d_f → d_f → |S|`.
    pub stream_attn: Mlp,
    /// `2·d_f → d_f → 1`, shared across tropes.
    pub predictor: Mlp,
}

impl MulCom {
    /// Initializes every parameter from a single seeded stream, in a fixed order.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut ps = ParamSet::new();
        let df = config.trope_dim;
        let embedding = ps.add("trope_embedding", trope_embedding(&mut rng, config.num_tropes, df));
        let dims = StreamDims {
            trope_dim: df,
            attn_dim: config.attn_dim,
            word_dim: config.word_dim,
            sent_dim: config.sent_dim,
        };
        let streams = config.enabled_streams();
        let word = streams
            .contains(&StreamKind::Word)
            .then(|| WordStream::new(&mut ps, &mut rng, dims, config.max_tokens));
        let sentence = streams
            .contains(&StreamKind::Sentence)
            .then(|| SentenceStream::new(&mut ps, &mut rng, dims));
        let relation = if streams.contains(&StreamKind::Relation) {
            Some(RelationStream::new(
                &mut ps,
                &mut rng,
                dims,
                config.reasoner_config(),
                config.reasoner,
            )?)
        } else {
            None
        };
        let stream_attn = Mlp::new(&mut ps, &mut rng, "stream_attn", df, df, streams.len());
        let predictor = Mlp::new(&mut ps, &mut rng, "predictor", 2 * df, df, 1);
        Ok(Self {
            config,
            params: ps,
            embedding,
            word,
            sentence,
            relation,
            stream_attn,
            predictor,
        })
    }

    pub fn num_tropes(&self) -> usize {
        self.config.num_tropes
    }

    pub fn streams(&self) -> Vec<StreamKind> {
        self.config.enabled_streams()
    }

    /// `A = softmax(MLP(E))` row-wise: `[|T| × |S|]`.
    pub fn stream_attention(&self, tape: &mut Tape, e: Var) -> Result<Var> {
        let logits = self.stream_attn.forward(tape, e)?;
        tape.softmax(logits, 1)
    }

    /// Current stream mixture `A` as values; it depends on no document.
    pub fn stream_weights(&self) -> Result<Tensor> {
        let mut tape = self.params.bind();
        let a = self.stream_attention(&mut tape, Var(self.embedding.index()))?;
        Ok(tape.value(a).clone())
    }

    /// `r_t = Σ_s A[t,s] · r_t^s`; `outputs` follow the column order of `a`.
    pub fn organize(&self, tape: &mut Tape, outputs: &[Var], a: Var) -> Result<Var> {
        let shape = tape.shape(a).to_vec();
        if shape.len() != 2 || shape[1] != outputs.len() {
            return Err(Error::Internal(format!(
                "stream attention has shape {shape:?} but {} stream outputs were given",
                outputs.len()
            )));
        }
        let t = shape[0];
        let mut acc: Option<Var> = None;
        for (s, &r) in outputs.iter().enumerate() {
            let col = tape.slice(a, 1, s, 1)?;
            let col = tape.reshape(col, vec![t])?;
            let weighted = tape.scale_rows(r, col)?;
            acc = Some(match acc {
                None => weighted,
                Some(prev) => tape.add(prev, weighted)?,
            });
        }
        acc.ok_or_else(|| Error::Internal("no stream outputs to organize".into()))
    }

    /// `x_t = predictor(concat(r_t, e_t))`: `[|T|]`.
    pub fn predict_logits(&self, tape: &mut Tape, r: Var, e: Var) -> Result<Var> {
        let joined = tape.concat(&[r, e], 1)?;
        let x = self.predictor.forward(tape, joined)?;
        let t = tape.shape(x)[0];
        tape.reshape(x, vec![t])
    }

    /// Per-stream outputs `[|T| × d_f]` in canonical stream order.
    pub fn stream_outputs(&self, tape: &mut Tape, doc: &FeatureDoc, graph: &SynopsisGraph, e: Var) -> Result<Vec<Var>> {
        let mut out = Vec::with_capacity(3);
        if let Some(w) = &self.word {
            out.push(w.forward(tape, doc, e)?);
        }
        if let Some(s) = &self.sentence {
            out.push(s.forward(tape, doc, e)?);
        }
        if let Some(r) = &self.relation {
            out.push(r.forward(tape, graph, e)?.value);
        }
        Ok(out)
    }

    /// Logits `[|T|]` for one document on a tape bound to `self.params`.
    pub fn logits(&self, tape: &mut Tape, doc: &FeatureDoc, graph: &SynopsisGraph) -> Result<Var> {
        let e = Var(self.embedding.index());
        let outputs = self.stream_outputs(tape, doc, graph, e)?;
        let a = self.stream_attention(tape, e)?;
        let r = self.organize(tape, &outputs, a)?;
        self.predict_logits(tape, r, e)
    }

    /// Scores in (0, 1) for each trope.
    pub fn scores_with_graph(&self, doc: &FeatureDoc, graph: &SynopsisGraph) -> Result<Vec<f64>> {
        let mut tape = self.params.bind();
        let x = self.logits(&mut tape, doc, graph)?;
        let scores: Vec<f64> = tape.value(x).data().iter().map(|&v| sigmoid_scalar(v)).collect();
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite(format!("scores for document `{}`", doc.doc_id)));
        }
        Ok(scores)
    }

    pub fn scores(&self, doc: &FeatureDoc) -> Result<Vec<f64>> {
        self.scores_with_graph(doc, &build_graph(doc))
    }

    /// Batch loss on one tape: logits stacked to `[B × |T|]`.
    pub fn batch_loss(&self, tape: &mut Tape, batch: &[(&FeatureDoc, &SynopsisGraph)], pos_weight: f64) -> Result<Var> {
        if batch.is_empty() {
            return Err(Error::Usage("empty batch".into()));
        }
        let t = self.num_tropes();
        let mut rows = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len() * t);
        for (doc, graph) in batch {
            let x = self.logits(tape, doc, graph)?;
            rows.push(tape.reshape(x, vec![1, t])?);
            targets.extend(doc.label_vector(t));
        }
        let x = if rows.len() == 1 { rows[0] } else { tape.concat(&rows, 0)? };
        let y = Tensor::new(vec![batch.len(), t], targets)?;
        bce_loss(tape, x, &y, pos_weight)
    }

    /// Loss of one document and the gradient of every parameter.
    pub fn doc_loss_and_grads(&self, doc: &FeatureDoc, graph: &SynopsisGraph, pos_weight: f64) -> Result<(f64, Vec<Tensor>)> {
        let mut tape = self.params.bind();
        let loss = self.batch_loss(&mut tape, &[(doc, graph)], pos_weight)?;
        let value = tape.value(loss).data()[0];
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("loss {value} on document `{}`", doc.doc_id)));
        }
        tape.backward(loss)?;
        Ok((value, self.params.grads(&tape)))
    }

    /// Parameter ids per component, for targeted gradient checks.
    pub fn components(&self) -> Vec<(String, Vec<ParamId>)> {
        let mut out = vec![("trope_embedding".to_string(), vec![self.embedding])];
        if let Some(w) = &self.word {
            out.push(("word_stream".into(), w.params()));
        }
        if let Some(s) = &self.sentence {
            out.push(("sentence_stream".into(), s.params()));
        }
        if let Some(r) = &self.relation {
            let reasoner = &r.reasoner;
            out.push(("message_mlp".into(), reasoner.message.params()));
            out.push(("lstm_cell".into(), reasoner.lstm.params()));
            out.push(("step_attention".into(), reasoner.step_attention.params()));
            out.push(("relation_stream".into(), r.params()));
        }
        out.push(("stream_attention".into(), self.stream_attn.params()));
        out.push(("predictor".into(), self.predictor.params()));
        out
    }
}

/// `(1/B) Σ_b (1/|T|) Σ_t −[p·y·log σ(x) + (1−y)·log(1−σ(x))]` over `[B × |T|]`.
pub fn bce_loss(tape: &mut Tape, logits: Var, targets: &Tensor, pos_weight: f64) -> Result<Var> {
    if !(pos_weight > 0.0 && pos_weight.is_finite()) {
        return Err(Error::Config(format!("positive weight must be a positive number, got {pos_weight}")));
    }
    tape.bce_with_logits(logits, targets, pos_weight)
}

/// `[|T| × d_f]` drawn from U(−1/√d_f, 1/√d_f).
fn trope_embedding(rng: &mut impl rand::Rng, tropes: usize, dim: usize) -> Tensor {
    let bound = 1.0 / (dim as f64).sqrt();
    let data = (0..tropes * dim).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::new(vec![tropes, dim], data).expect("embedding shape")
}

/// Graphs for a document list, index-aligned.
pub fn build_graphs(docs: &[FeatureDoc]) -> Vec<SynopsisGraph> {
    docs.iter().map(build_graph).collect()
}
