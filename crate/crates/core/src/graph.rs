//! Entity-relation graph of a synopsis.
//!
//! Nodes are coreference entities. Two entities are joined by an edge when
//! at least one sentence mentions both; the edge feature is the sum of the
//! features of all such sentences. A sentence mentioning exactly one entity
//! contributes to that entity's self-loop.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::doc::FeatureDoc;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GraphNode {
    pub entity_id: String,
    pub x: Vec<f64>,
}

/// Undirected edge with `i <= j`; `i == j` is a self-loop.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphEdge {
    pub i: usize,
    pub j: usize,
    pub e: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynopsisGraph {
    pub feat_dim: usize,
    pub nodes: Vec<GraphNode>,
    pub edges: Vec<GraphEdge>,
    /// `neighbors[i]` lists `(j, edge index)`, self-loops included.
    pub neighbors: Vec<Vec<(usize, usize)>>,
}

/// Flattened directed message pairs: message `k` flows from `sources[k]`
/// into `targets[k]` along edge `edges[k]`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessagePairs {
    pub targets: Vec<usize>,
    pub sources: Vec<usize>,
    pub edges: Vec<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub density: f64,
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Builds the graph for `doc`. Sums run in ascending sentence order.
pub fn build_graph(doc: &FeatureDoc) -> SynopsisGraph {
    let d = doc.sent_dim();
    let n_sents = doc.num_sentences();
    let mut per_sentence: Vec<Vec<usize>> = vec![Vec::new(); n_sents];
    for (k, ent) in doc.entities.iter().enumerate() {
        for &s in &ent.sents {
            if s < n_sents && per_sentence[s].last() != Some(&k) {
                per_sentence[s].push(k);
            }
        }
    }
    let mut nodes: Vec<GraphNode> = doc
        .entities
        .iter()
        .map(|e| GraphNode {
            entity_id: e.id.clone(),
            x: vec![0.0; d],
        })
        .collect();
    let mut edge_feats: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for (s, ents) in per_sentence.iter_mut().enumerate() {
        ents.sort_unstable();
        ents.dedup();
        let feat = doc.sent_feats.row(s);
        for &k in ents.iter() {
            add_into(&mut nodes[k].x, feat);
        }
        if ents.len() == 1 {
            let k = ents[0];
            add_into(edge_feats.entry((k, k)).or_insert_with(|| vec![0.0; d]), feat);
        }
        for (a, &i) in ents.iter().enumerate() {
            for &j in &ents[a + 1..] {
                add_into(edge_feats.entry((i, j)).or_insert_with(|| vec![0.0; d]), feat);
            }
        }
    }
    for (k, ent) in doc.entities.iter().enumerate() {
        if ent.sents.is_empty() {
            log::warn!(
                "document `{}`: entity `{}` has no mentions; keeping it as an isolated node",
                doc.doc_id,
                ent.id
            );
            debug_assert!(nodes[k].x.iter().all(|v| *v == 0.0));
        }
    }
    let mut neighbors = vec![Vec::new(); nodes.len()];
    let edges: Vec<GraphEdge> = edge_feats
        .into_iter()
        .enumerate()
        .map(|(idx, ((i, j), e))| {
            neighbors[i].push((j, idx));
            if i != j {
                neighbors[j].push((i, idx));
            }
            GraphEdge { i, j, e }
        })
        .collect();
    for list in &mut neighbors {
        list.sort_unstable();
    }
    SynopsisGraph {
        feat_dim: d,
        nodes,
        edges,
        neighbors,
    }
}

impl SynopsisGraph {
    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Node features stacked as `[n × d_s]`.
    pub fn node_features(&self) -> Tensor {
        let data = self.nodes.iter().flat_map(|n| n.x.iter().copied()).collect();
        Tensor::new(vec![self.nodes.len(), self.feat_dim], data).expect("node feature shape")
    }

    /// Edge features stacked as `[edges × d_s]`.
    pub fn edge_features(&self) -> Tensor {
        let data = self.edges.iter().flat_map(|e| e.e.iter().copied()).collect();
        Tensor::new(vec![self.edges.len(), self.feat_dim], data).expect("edge feature shape")
    }

    /// Both directions of every edge, and each self-loop once.
    pub fn message_pairs(&self) -> MessagePairs {
        let mut pairs = MessagePairs::default();
        for (target, list) in self.neighbors.iter().enumerate() {
            for &(source, edge) in list {
                pairs.targets.push(target);
                pairs.sources.push(source);
                pairs.edges.push(edge);
            }
        }
        pairs
    }

    pub fn edge_between(&self, a: usize, b: usize) -> Option<&GraphEdge> {
        let (i, j) = if a <= b { (a, b) } else { (b, a) };
        self.edges.iter().find(|e| e.i == i && e.j == j)
    }

    /// Node count and the fraction of possible non-loop edges present.
    pub fn stats(&self) -> GraphStats {
        let n = self.nodes.len();
        let links = self.edges.iter().filter(|e| e.i != e.j).count();
        let density = if n >= 2 {
            links as f64 / (n * (n - 1) / 2) as f64
        } else {
            0.0
        };
        GraphStats {
            node_count: n,
            density,
        }
    }
}

pub fn graph_stats(graph: &SynopsisGraph) -> GraphStats {
    graph.stats()
}
