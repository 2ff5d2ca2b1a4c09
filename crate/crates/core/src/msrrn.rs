//! Recurrent relational reasoning over a [`SynopsisGraph`].
//!
//! Each step computes a message for every directed neighbor pair,
//! `m_ij = MLP(e_ij, h_i, h_j)`, sums them per target node, and feeds
//! `concat(x_i, m_i)` into a shared LSTM cell. The multi-step variant keeps
//! every step's hidden matrix and fuses them per node with multi-head self
//! attention over the step axis; the single-step baseline returns the last
//! hidden matrix.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::SynopsisGraph;
use crate::numerics::{Linear, LstmCell, Mlp, MultiHeadAttention, ParamId, ParamSet, Tape, Tensor, Var};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReasonerMode {
    /// Fuse all steps with self-attention.
    #[default]
    Msrrn,
    /// Last step only.
    Rrn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReasonerConfig {
    pub feat_dim: usize,
    pub hidden_dim: usize,
    pub steps: usize,
    pub heads: usize,
}

impl ReasonerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("reasoning steps must be at least 1".into()));
        }
        if self.heads == 0 || !self.hidden_dim.is_multiple_of(self.heads) {
            return Err(Error::Config(format!(
                "hidden width {} is not divisible by {} heads",
                self.hidden_dim, self.heads
            )));
        }
        Ok(())
    }
}

/// Learned parameters of the reasoner; shared across steps.
#[derive(Clone, Debug)]
pub struct Reasoner {
    pub cfg: ReasonerConfig,
    pub node_in: Linear,
    pub edge_in: Linear,
    pub message: Mlp,
    pub lstm: LstmCell,
    pub step_attention: MultiHeadAttention,
}

/// Per-step hidden matrices `(H¹, …, H^T)`, each `[n × d_h]`.
#[derive(Clone, Debug)]
pub struct StepTrace {
    pub hidden: Vec<Var>,
}

/// Graph constants placed on a tape once per forward pass.
pub struct GraphInputs {
    pub num_nodes: usize,
    pub nodes: Var,
    pub edges: Var,
    pub targets: Vec<usize>,
    pub sources: Vec<usize>,
    pub pair_edges: Vec<usize>,
}

impl GraphInputs {
    pub fn new(tape: &mut Tape, graph: &SynopsisGraph) -> Self {
        let pairs = graph.message_pairs();
        Self {
            num_nodes: graph.num_nodes(),
            nodes: tape.constant(graph.node_features()),
            edges: tape.constant(graph.edge_features()),
            targets: pairs.targets,
            sources: pairs.sources,
            pair_edges: pairs.edges,
        }
    }
}

impl Reasoner {
    pub fn new(ps: &mut ParamSet, rng: &mut impl Rng, name: &str, cfg: ReasonerConfig) -> Result<Self> {
        cfg.validate()?;
        let (ds, dh) = (cfg.feat_dim, cfg.hidden_dim);
        Ok(Self {
            node_in: Linear::new(ps, rng, &format!("{name}.node_in"), ds, dh),
            edge_in: Linear::new(ps, rng, &format!("{name}.edge_in"), ds, dh),
            message: Mlp::new(ps, rng, &format!("{name}.message"), 3 * dh, dh, dh),
            lstm: LstmCell::new(ps, rng, &format!("{name}.lstm"), 2 * dh, dh),
            step_attention: MultiHeadAttention::new(ps, rng, &format!("{name}.step_attention"), dh, cfg.heads)?,
            cfg,
        })
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = self.node_in.params();
        p.extend(self.edge_in.params());
        p.extend(self.message.params());
        p.extend(self.lstm.params());
        p.extend(self.step_attention.params());
        p
    }

    /// Aggregated messages `M_t: [n × d_h]`; rows of isolated nodes are zero.
    ///
    /// `edges_proj` is the projected edge feature matrix `[edges × d_h]`.
    pub fn message_pass(&self, tape: &mut Tape, g: &GraphInputs, edges_proj: Var, h: Var) -> Result<Var> {
        let e = tape.gather_rows(edges_proj, &g.pair_edges)?;
        let hi = tape.gather_rows(h, &g.targets)?;
        let hj = tape.gather_rows(h, &g.sources)?;
        let input = tape.concat(&[e, hi, hj], 1)?;
        let m = self.message.forward(tape, input)?;
        tape.scatter_add_rows(m, &g.targets, g.num_nodes)
    }

    /// One reasoning step: `h_i ← LSTM(h_i, concat(x_i, m_i))`.
    pub fn reason_step(
        &self,
        tape: &mut Tape,
        g: &GraphInputs,
        x_proj: Var,
        edges_proj: Var,
        h: Var,
        c: Var,
    ) -> Result<(Var, Var)> {
        let m = self.message_pass(tape, g, edges_proj, h)?;
        let input = tape.concat(&[x_proj, m], 1)?;
        self.lstm.forward(tape, h, c, input)
    }

    /// Runs all `T` steps from zero hidden and cell states.
    pub fn trace(&self, tape: &mut Tape, g: &GraphInputs) -> Result<StepTrace> {
        let n = g.num_nodes;
        let dh = self.cfg.hidden_dim;
        let x_proj = self.node_in.forward(tape, g.nodes)?;
        let edges_proj = self.edge_in.forward(tape, g.edges)?;
        let mut h = tape.constant(Tensor::zeros(vec![n, dh]));
        let mut c = tape.constant(Tensor::zeros(vec![n, dh]));
        let mut hidden = Vec::with_capacity(self.cfg.steps);
        for _ in 0..self.cfg.steps {
            (h, c) = self.reason_step(tape, g, x_proj, edges_proj, h, c)?;
            hidden.push(h);
        }
        Ok(StepTrace { hidden })
    }

    /// Multi-step output `H̃ = Σ_t Ω′_t` where `Ω′ = MultiHead(Ω, Ω, Ω)` and
    /// every node attends only over its own `T` hidden states.
    pub fn fuse_steps(&self, tape: &mut Tape, trace: &StepTrace, n: usize) -> Result<Var> {
        let steps = trace.hidden.len();
        let dh = self.cfg.hidden_dim;
        let omega = if steps == 1 {
            trace.hidden[0]
        } else {
            tape.concat(&trace.hidden, 0)?
        };
        let mask = step_mask(steps, n);
        let fused = self
            .step_attention
            .forward(tape, omega, omega, omega, Some(&mask))?;
        let fused = tape.reshape(fused, vec![steps, n, dh])?;
        tape.sum_axis(fused, 0)
    }

    pub fn run_msrrn(&self, tape: &mut Tape, graph: &SynopsisGraph) -> Result<Var> {
        let g = GraphInputs::new(tape, graph);
        let trace = self.trace(tape, &g)?;
        self.fuse_steps(tape, &trace, g.num_nodes)
    }

    pub fn run_rrn(&self, tape: &mut Tape, graph: &SynopsisGraph) -> Result<Var> {
        let g = GraphInputs::new(tape, graph);
        let trace = self.trace(tape, &g)?;
        Ok(*trace.hidden.last().expect("at least one step"))
    }

    pub fn run(&self, tape: &mut Tape, graph: &SynopsisGraph, mode: ReasonerMode) -> Result<Var> {
        match mode {
            ReasonerMode::Msrrn => self.run_msrrn(tape, graph),
            ReasonerMode::Rrn => self.run_rrn(tape, graph),
        }
    }
}

/// Additive mask over step-major rows `t·n + i`: zero where two rows belong
/// to the same node, `-inf` elsewhere.
pub fn step_mask(steps: usize, n: usize) -> Tensor {
    let rows = steps * n;
    let mut data = vec![f64::NEG_INFINITY; rows * rows];
    for r in 0..rows {
        for c in 0..rows {
            if r % n == c % n {
                data[r * rows + c] = 0.0;
            }
        }
    }
    Tensor::new(vec![rows, rows], data).expect("mask shape")
}
