//! Multi-label evaluation. F1 values and mAP are percentages.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::seeded;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Average {
    Micro,
    Macro,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }

    /// Fraction in [0, 1]; 0 when there are no gold positives.
    pub fn f1(&self) -> f64 {
        if self.support() == 0 {
            return 0.0;
        }
        2.0 * self.tp as f64 / (2 * self.tp + self.fp + self.fn_) as f64
    }

    pub fn precision(&self) -> f64 {
        let p = self.tp + self.fp;
        if p == 0 {
            0.0
        } else {
            self.tp as f64 / p as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.support() == 0 {
            0.0
        } else {
            self.tp as f64 / self.support() as f64
        }
    }

    fn add(&mut self, pred: bool, gold: bool) {
        match (pred, gold) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => {}
        }
    }
}

fn check_shapes<A, B>(a: &[Vec<A>], b: &[Vec<B>]) -> Result<usize> {
    if a.len() != b.len() {
        return Err(Error::shape("metrics", &[a.len()], &[b.len()]));
    }
    let t = b.first().map_or(0, Vec::len);
    for (x, y) in a.iter().zip(b) {
        if x.len() != t || y.len() != t {
            return Err(Error::shape("metrics", &[x.len()], &[y.len()]));
        }
    }
    Ok(t)
}

/// Per-trope confusion counts over `[N × |T|]` decisions.
pub fn confusions(preds: &[Vec<bool>], labels: &[Vec<bool>]) -> Result<Vec<Confusion>> {
    let t = check_shapes(preds, labels)?;
    let mut out = vec![Confusion::default(); t];
    for (p, y) in preds.iter().zip(labels) {
        for k in 0..t {
            out[k].add(p[k], y[k]);
        }
    }
    Ok(out)
}

/// Micro pools every decision; macro averages per-trope F1 over tropes
/// with at least one gold positive. Either is 0 without gold positives.
pub fn f1(preds: &[Vec<bool>], labels: &[Vec<bool>], mode: Average) -> Result<f64> {
    let per = confusions(preds, labels)?;
    Ok(100.0 * f1_from(&per, mode))
}

fn f1_from(per: &[Confusion], mode: Average) -> f64 {
    match mode {
        Average::Micro => {
            let mut all = Confusion::default();
            for c in per {
                all.tp += c.tp;
                all.fp += c.fp;
                all.fn_ += c.fn_;
            }
            all.f1()
        }
        Average::Macro => {
            let scored: Vec<f64> = per.iter().filter(|c| c.support() > 0).map(Confusion::f1).collect();
            if scored.is_empty() {
                0.0
            } else {
                scored.iter().sum::<f64>() / scored.len() as f64
            }
        }
    }
}

/// Mean of precision@k over the ranks k of the positives, ranking by
/// descending score with ties in input order. `None` without positives.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let positives = labels.iter().filter(|&&y| y).count();
    if positives == 0 || scores.len() != labels.len() {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in order.iter().enumerate() {
        if labels[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

fn column<T: Copy>(m: &[Vec<T>], k: usize) -> Vec<T> {
    m.iter().map(|r| r[k]).collect()
}

/// Per-trope AP (fractions), `None` for tropes without positives.
pub fn per_trope_ap(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<Vec<Option<f64>>> {
    let t = check_shapes(scores, labels)?;
    Ok((0..t).map(|k| average_precision(&column(scores, k), &column(labels, k))).collect())
}

/// Mean AP over tropes with a positive, as a percentage; 0 when none has one.
pub fn map_score(scores: &[Vec<f64>], labels: &[Vec<bool>]) -> Result<f64> {
    Ok(map_from(&per_trope_ap(scores, labels)?))
}

fn map_from(aps: &[Option<f64>]) -> f64 {
    let vals: Vec<f64> = aps.iter().flatten().copied().collect();
    if vals.is_empty() {
        0.0
    } else {
        100.0 * vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// `score ≥ τ`.
pub fn binarize(scores: &[Vec<f64>], threshold: f64) -> Vec<Vec<bool>> {
    scores
        .iter()
        .map(|r| r.iter().map(|&s| s >= threshold).collect())
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TropeMetrics {
    pub trope: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `null` when the trope has no gold positives.
    #[serde(rename = "AP")]
    pub ap: Option<f64>,
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub micro_f1: f64,
    pub macro_f1: f64,
    #[serde(rename = "mAP")]
    pub map: f64,
    pub per_trope: Vec<TropeMetrics>,
    /// Tropes left out of mAP and macro F1 for lack of gold positives.
    pub skipped_tropes: Vec<String>,
}

pub fn evaluate(scores: &[Vec<f64>], labels: &[Vec<bool>], threshold: f64, names: &[String]) -> Result<Metrics> {
    let t = check_shapes(scores, labels)?;
    if !labels.is_empty() && names.len() != t {
        return Err(Error::shape("evaluate", &[names.len()], &[t]));
    }
    let preds = binarize(scores, threshold);
    let conf = confusions(&preds, labels)?;
    let aps = per_trope_ap(scores, labels)?;
    let per_trope = conf
        .iter()
        .zip(&aps)
        .zip(names)
        .map(|((c, ap), name)| TropeMetrics {
            trope: name.clone(),
            precision: 100.0 * c.precision(),
            recall: 100.0 * c.recall(),
            f1: 100.0 * c.f1(),
            ap: ap.map(|v| 100.0 * v),
            support: c.support(),
        })
        .collect();
    Ok(Metrics {
        micro_f1: 100.0 * f1_from(&conf, Average::Micro),
        macro_f1: 100.0 * f1_from(&conf, Average::Macro),
        map: map_from(&aps),
        per_trope,
        skipped_tropes: conf
            .iter()
            .zip(names)
            .filter(|(c, _)| c.support() == 0)
            .map(|(_, n)| n.clone())
            .collect(),
    })
}

/// Mean and half-width of a normal 95% interval over trials.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci95: f64,
}

impl Estimate {
    fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            ci95: 1.96 * sd / n.sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomBaseline {
    pub trials: usize,
    pub micro_f1: Estimate,
    pub macro_f1: Estimate,
    #[serde(rename = "mAP")]
    pub map: Estimate,
}

/// Bernoulli(0.5) decisions and U(0, 1) scores, independently per trial.
pub fn random_baseline(labels: &[Vec<bool>], seed: u64, trials: usize) -> Result<RandomBaseline> {
    if labels.is_empty() || trials == 0 {
        return Err(Error::Usage("random baseline needs labels and at least one trial".into()));
    }
    let mut rng = seeded(seed);
    let (mut micro, mut macro_, mut map) = (Vec::new(), Vec::new(), Vec::new());
    for _ in 0..trials {
        let preds: Vec<Vec<bool>> = labels
            .iter()
            .map(|r| r.iter().map(|_| rng.random_bool(0.5)).collect())
            .collect();
        let scores: Vec<Vec<f64>> = labels
            .iter()
            .map(|r| r.iter().map(|_| rng.random::<f64>()).collect())
            .collect();
        let conf = confusions(&preds, labels)?;
        micro.push(100.0 * f1_from(&conf, Average::Micro));
        macro_.push(100.0 * f1_from(&conf, Average::Macro));
        map.push(map_score(&scores, labels)?);
    }
    Ok(RandomBaseline {
        trials,
        micro_f1: Estimate::from_samples(&micro),
        macro_f1: Estimate::from_samples(&macro_),
        map: Estimate::from_samples(&map),
    })
}
