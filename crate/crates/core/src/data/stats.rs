use serde::Serialize;

use crate::doc::FeatureDoc;
use crate::error::{Error, Result};

/// Order statistics of a sample; `std` is the population deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub median: f64,
    pub average: f64,
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

/// `None` for an empty sample. An even count takes the mean of the two
/// middle values as the median.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let average = v.iter().sum::<f64>() / n as f64;
    let var = v.iter().map(|x| (x - average).powi(2)).sum::<f64>() / n as f64;
    Some(Summary {
        median,
        average,
        min: v[0],
        max: v[n - 1],
        std: var.sqrt(),
    })
}

/// Per-document counts summarized over one split. `roles` counts
/// coreference entities; `corefs` counts their sentence-level mentions.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CorpusStats {
    pub docs: usize,
    pub tropes: Summary,
    pub words: Summary,
    pub sentences: Summary,
    pub roles: Summary,
    pub corefs: Summary,
}

pub fn corpus_stats(docs: &[FeatureDoc]) -> Result<CorpusStats> {
    let col = |f: &dyn Fn(&FeatureDoc) -> usize| {
        let v: Vec<f64> = docs.iter().map(|d| f(d) as f64).collect();
        summarize(&v).ok_or_else(|| Error::Usage("statistics need at least one document".into()))
    };
    Ok(CorpusStats {
        docs: docs.len(),
        tropes: col(&|d| d.labels.len())?,
        words: col(&|d| d.num_tokens())?,
        sentences: col(&|d| d.num_sentences())?,
        roles: col(&|d| d.entities.len())?,
        corefs: col(&|d| d.num_mentions())?,
    })
}

/// Percentage of documents labelled with each trope.
pub fn trope_prevalence(docs: &[FeatureDoc], num_tropes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; num_tropes];
    for d in docs {
        for &l in &d.labels {
            counts[l] += 1;
        }
    }
    let n = docs.len().max(1) as f64;
    counts.into_iter().map(|c| 100.0 * c as f64 / n).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TropeShare {
    pub trope: String,
    pub percent: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PrevalenceReport {
    pub per_trope: Vec<TropeShare>,
    pub summary: Option<Summary>,
}

pub fn prevalence_report(docs: &[FeatureDoc], trope_names: &[String]) -> PrevalenceReport {
    let p = trope_prevalence(docs, trope_names.len());
    PrevalenceReport {
        summary: summarize(&p),
        per_trope: trope_names
            .iter()
            .zip(&p)
            .map(|(name, &percent)| TropeShare {
                trope: name.clone(),
                percent,
            })
            .collect(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairIou {
    pub a: usize,
    pub b: usize,
    /// Documents labelled with both tropes.
    pub both: usize,
    /// Documents labelled with either trope.
    pub either: usize,
    pub iou: f64,
}

/// Jaccard overlap of document sets for every pair `a < b`, highest first;
/// ties keep `(a, b)` order. A pair that never occurs has IoU 0.
pub fn cooccurrence_iou(docs: &[FeatureDoc], num_tropes: usize) -> Vec<PairIou> {
    let mut has = vec![vec![false; docs.len()]; num_tropes];
    for (k, d) in docs.iter().enumerate() {
        for &l in &d.labels {
            has[l][k] = true;
        }
    }
    let mut out = Vec::with_capacity(num_tropes * num_tropes.saturating_sub(1) / 2);
    for a in 0..num_tropes {
        for b in a + 1..num_tropes {
            let (mut both, mut either) = (0, 0);
            for (&x, &y) in has[a].iter().zip(&has[b]) {
                both += (x && y) as usize;
                either += (x || y) as usize;
            }
            let iou = if either == 0 { 0.0 } else { both as f64 / either as f64 };
            out.push(PairIou { a, b, both, either, iou });
        }
    }
    out.sort_by(|x, y| y.iou.total_cmp(&x.iou).then((x.a, x.b).cmp(&(y.a, y.b))));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Tensor;
    use proptest::prelude::*;

    fn labelled(labels: Vec<usize>) -> FeatureDoc {
        FeatureDoc {
            doc_id: String::new(),
            word_feats: Tensor::zeros(vec![0, 0]),
            sent_feats: Tensor::zeros(vec![1, 1]),
            entities: vec![],
            labels,
        }
    }

    #[test]
    fn summary_cases() {
        let one = summarize(&[4.0]).unwrap();
        assert_eq!((one.median, one.average, one.min, one.max, one.std), (4.0, 4.0, 4.0, 4.0, 0.0));
        assert_eq!(summarize(&[68.0, 1.0, 8.0]).unwrap().median, 8.0);
        assert_eq!(summarize(&[1.0, 2.0, 3.0, 10.0]).unwrap().median, 2.5);
        assert_eq!(summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap().std, 2.0);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn prevalence_extremes() {
        let docs = vec![labelled(vec![0, 1]), labelled(vec![0])];
        assert_eq!(trope_prevalence(&docs, 3), vec![100.0, 50.0, 0.0]);
    }

    #[test]
    fn iou_extremes() {
        let docs = vec![labelled(vec![0, 1]), labelled(vec![0, 1]), labelled(vec![2])];
        let pairs = cooccurrence_iou(&docs, 3);
        assert_eq!((pairs[0].a, pairs[0].b, pairs[0].iou), (0, 1, 1.0));
        assert!(pairs[1..].iter().all(|p| p.iou == 0.0));
        assert_eq!((pairs[1].a, pairs[1].b), (0, 2));
    }

    /// Direct set-based recomputation.
    fn iou_oracle(docs: &[Vec<usize>], a: usize, b: usize) -> f64 {
        let sa: Vec<usize> = (0..docs.len()).filter(|&k| docs[k].contains(&a)).collect();
        let sb: Vec<usize> = (0..docs.len()).filter(|&k| docs[k].contains(&b)).collect();
        let inter = sa.iter().filter(|k| sb.contains(k)).count();
        let union = sa.len() + sb.len() - inter;
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    fn label_sets() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::btree_set(0usize..4, 0..=4), 1..=10)
            .prop_map(|v| v.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    proptest! {
        #[test]
        fn iou_matches_oracle_and_is_symmetric(sets in label_sets()) {
            let docs: Vec<FeatureDoc> = sets.iter().cloned().map(labelled).collect();
            let pairs = cooccurrence_iou(&docs, 4);
            prop_assert_eq!(pairs.len(), 6);
            for p in &pairs {
                prop_assert_eq!(p.iou, iou_oracle(&sets, p.a, p.b));
                prop_assert_eq!(iou_oracle(&sets, p.a, p.b), iou_oracle(&sets, p.b, p.a));
            }
            for w in pairs.windows(2) {
                prop_assert!(w[0].iou >= w[1].iou);
            }
        }

        #[test]
        fn stats_match_naive_recount(counts in prop::collection::vec((0usize..40, 1usize..9, 0usize..5), 1..=10)) {
            let docs: Vec<FeatureDoc> = counts.iter().map(|&(w, s, e)| FeatureDoc {
                doc_id: String::new(),
                word_feats: Tensor::zeros(vec![w, 2]),
                sent_feats: Tensor::zeros(vec![s, 2]),
                entities: (0..e).map(|k| crate::doc::EntityMentions { id: k.to_string(), sents: (0..s).filter(|x| (x + k) % 2 == 0).collect() }).collect(),
                labels: (0..(w % 5)).collect(),
            }).collect();
            let st = corpus_stats(&docs).unwrap();
            let words: Vec<usize> = counts.iter().map(|c| c.0).collect();
            let mut sorted = words.clone();
            sorted.sort();
            let n = sorted.len();
            let median = if n % 2 == 1 { sorted[n / 2] as f64 } else { (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0 };
            prop_assert_eq!(st.words.median, median);
            prop_assert_eq!(st.words.min, sorted[0] as f64);
            prop_assert_eq!(st.words.max, sorted[n - 1] as f64);
            let mean = words.iter().sum::<usize>() as f64 / n as f64;
            prop_assert!((st.words.average - mean).abs() < 1e-12);
            let var = words.iter().map(|&w| (w as f64 - mean).powi(2)).sum::<f64>() / n as f64;
            prop_assert!((st.words.std - var.sqrt()).abs() < 1e-12);
            prop_assert!(st.sentences.min <= st.sentences.median && st.sentences.median <= st.sentences.max);
            let mentions: usize = docs.iter().map(|d| d.num_mentions()).sum();
            prop_assert!((st.corefs.average * n as f64 - mentions as f64).abs() < 1e-9);
        }
    }
}
