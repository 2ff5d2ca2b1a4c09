//! Plain-loop reference implementations used as test oracles. Nothing here
//! touches the tape.

pub use crate::diagnostics::{random_doc, random_tensor, randomize};
use crate::doc::FeatureDoc;
use crate::graph::SynopsisGraph;
use crate::msrrn::Reasoner;
use crate::numerics::{Linear, LstmCell, Mlp, MultiHeadAttention, ParamSet, Tensor};
use crate::rng::Rng as ChaCha;

/// `x·W + b` for a single row.
pub fn lin(ps: &ParamSet, l: &Linear, x: &[f64]) -> Vec<f64> {
    let w = ps.get(l.weight);
    let mut out: Vec<f64> = match l.bias {
        Some(b) => ps.get(b).data().to_vec(),
        None => vec![0.0; l.out_dim],
    };
    for (j, o) in out.iter_mut().enumerate() {
        for (i, xi) in x.iter().enumerate() {
            *o += xi * w.at(i, j);
        }
    }
    out
}

pub fn mlp(ps: &ParamSet, m: &Mlp, x: &[f64]) -> Vec<f64> {
    let h: Vec<f64> = lin(ps, &m.hidden, x).into_iter().map(|v| v.max(0.0)).collect();
    lin(ps, &m.output, &h)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

pub fn lstm(ps: &ParamSet, cell: &LstmCell, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let d = cell.hidden_dim;
    let w = ps.get(cell.weight);
    let b = ps.get(cell.bias).data();
    let input: Vec<f64> = h.iter().chain(x).copied().collect();
    let z: Vec<f64> = (0..4 * d)
        .map(|j| b[j] + input.iter().enumerate().map(|(i, v)| v * w.at(i, j)).sum::<f64>())
        .collect();
    let mut h2 = vec![0.0; d];
    let mut c2 = vec![0.0; d];
    for k in 0..d {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[d + k]);
        let g = z[2 * d + k].tanh();
        let o = sigmoid(z[3 * d + k]);
        c2[k] = f * c[k] + i * g;
        h2[k] = o * c2[k].tanh();
    }
    (h2, c2)
}

/// Self-attention over a short sequence of rows with per-head softmax.
pub fn self_attention(ps: &ParamSet, mha: &MultiHeadAttention, seq: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let q: Vec<Vec<f64>> = seq.iter().map(|x| lin(ps, &mha.query, x)).collect();
    let k: Vec<Vec<f64>> = seq.iter().map(|x| lin(ps, &mha.key, x)).collect();
    let v: Vec<Vec<f64>> = seq.iter().map(|x| lin(ps, &mha.value, x)).collect();
    let dk = mha.dim / mha.heads;
    let scale = 1.0 / (dk as f64).sqrt();
    seq.iter()
        .enumerate()
        .map(|(a, _)| {
            let mut joined = vec![0.0; mha.dim];
            for h in 0..mha.heads {
                let r = h * dk..(h + 1) * dk;
                let scores: Vec<f64> = (0..seq.len())
                    .map(|b| q[a][r.clone()].iter().zip(&k[b][r.clone()]).map(|(x, y)| x * y).sum::<f64>() * scale)
                    .collect();
                let w = softmax(&scores);
                for (b, wb) in w.iter().enumerate() {
                    for c in r.clone() {
                        joined[c] += wb * v[b][c];
                    }
                }
            }
            lin(ps, &mha.output, &joined)
        })
        .collect()
}

/// Random document: `entities` entities, each mentioned in a random subset
/// of `sents` sentences.
/// Same document with entities reordered: new entity `k` is old `perm[k]`.
pub fn permute_entities(doc: &FeatureDoc, perm: &[usize]) -> FeatureDoc {
    let mut out = doc.clone();
    out.entities = perm.iter().map(|&k| doc.entities[k].clone()).collect();
    out
}

pub fn random_perm(rng: &mut ChaCha, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Straight-line re-implementation: per-node loops over the edge list.
pub fn oracle_trace(ps: &ParamSet, r: &Reasoner, g: &SynopsisGraph) -> Vec<Vec<Vec<f64>>> {
    let n = g.num_nodes();
    let dh = r.cfg.hidden_dim;
    let xp: Vec<Vec<f64>> = g.nodes.iter().map(|node| lin(ps, &r.node_in, &node.x)).collect();
    let ep: Vec<Vec<f64>> = g.edges.iter().map(|e| lin(ps, &r.edge_in, &e.e)).collect();
    let mut h = vec![vec![0.0; dh]; n];
    let mut c = vec![vec![0.0; dh]; n];
    let mut steps = Vec::new();
    for _ in 0..r.cfg.steps {
        let mut next_h = Vec::with_capacity(n);
        let mut next_c = Vec::with_capacity(n);
        for i in 0..n {
            let mut m = vec![0.0; dh];
            for (k, e) in g.edges.iter().enumerate() {
                let other = if e.i == i {
                    e.j
                } else if e.j == i {
                    e.i
                } else {
                    continue;
                };
                let input: Vec<f64> = ep[k].iter().chain(&h[i]).chain(&h[other]).copied().collect();
                for (a, b) in m.iter_mut().zip(mlp(ps, &r.message, &input)) {
                    *a += b;
                }
            }
            let input: Vec<f64> = xp[i].iter().chain(&m).copied().collect();
            let (h2, c2) = lstm(ps, &r.lstm, &h[i], &c[i], &input);
            next_h.push(h2);
            next_c.push(c2);
        }
        h = next_h;
        c = next_c;
        steps.push(h.clone());
    }
    steps
}

pub fn oracle_msrrn(ps: &ParamSet, r: &Reasoner, g: &SynopsisGraph) -> Vec<Vec<f64>> {
    let steps = oracle_trace(ps, r, g);
    (0..g.num_nodes())
        .map(|i| {
            let seq: Vec<Vec<f64>> = steps.iter().map(|s| s[i].clone()).collect();
            let att = self_attention(ps, &r.step_attention, &seq);
            let mut sum = vec![0.0; r.cfg.hidden_dim];
            for row in att {
                for (a, b) in sum.iter_mut().zip(row) {
                    *a += b;
                }
            }
            sum
        })
        .collect()
}

/// Trope-query attention by the formula: per trope, softmax of scaled
/// query·key dot products, weighted value sum, output map.
pub fn oracle_attend(
    ps: &ParamSet,
    a: &crate::streams::TropeAttention,
    tropes: &[Vec<f64>],
    feats: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let keys: Vec<Vec<f64>> = feats.iter().map(|f| lin(ps, &a.key, f)).collect();
    let values: Vec<Vec<f64>> = feats.iter().map(|f| lin(ps, &a.value, f)).collect();
    let scale = 1.0 / (a.attn_dim as f64).sqrt();
    let mut outs = Vec::new();
    let mut weights = Vec::new();
    for e in tropes {
        let q = lin(ps, &a.query, e);
        let scores: Vec<f64> = keys
            .iter()
            .map(|k| q.iter().zip(k).map(|(x, y)| x * y).sum::<f64>() * scale)
            .collect();
        let w = softmax(&scores);
        let mut pooled = vec![0.0; a.attn_dim];
        for (wi, v) in w.iter().zip(&values) {
            for (p, x) in pooled.iter_mut().zip(v) {
                *p += wi * x;
            }
        }
        outs.push(lin(ps, &a.out, &pooled));
        weights.push(w);
    }
    (outs, weights)
}

pub fn rows(t: &Tensor) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

pub fn assert_rows_close(t: &Tensor, want: &[Vec<f64>], tol: f64) {
    assert_eq!(t.rows(), want.len(), "row count");
    for (i, row) in want.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            assert!((t.at(i, j) - v).abs() < tol, "({i},{j}): {} vs {v}", t.at(i, j));
        }
    }
}
