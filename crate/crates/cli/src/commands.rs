use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;
use mulcom::checkpoint;
use mulcom::data::{
    cooccurrence_iou, corpus_stats, load_dataset, prevalence_report, save_dataset, synth_generate, CorpusStats,
    Dataset, PrevalenceReport, Split,
};
use mulcom::diagnostics::{ComponentCheck, GRAD_TOLERANCE};
use mulcom::doc::FeatureDoc;
use mulcom::exec::Exec;
use mulcom::fsutil::{read_to_string, write_json_atomic};
use mulcom::metrics::{evaluate, random_baseline, Metrics, RandomBaseline};
use mulcom::mulcom::{ModelConfig, MulCom};
use mulcom::train::{predict, train as fit, EpochRecord};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

/// Every report carries the command, the seed and the resolved config.
#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    command: &'static str,
    seed: u64,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn write_report<T: Serialize>(cfg: &RunConfig, command: &'static str, body: T) -> Result<PathBuf, CliError> {
    let path = cfg.out.join(format!("{command}_report.json"));
    let report = Report {
        command,
        seed: cfg.seed,
        config: cfg,
        body,
    };
    write_json_atomic(&path, &report)?;
    info!("wrote {}", path.display());
    Ok(path)
}

fn load(cfg: &RunConfig) -> Result<Dataset, CliError> {
    let path = cfg.manifest()?;
    let ds = load_dataset(path).map_err(|e| CliError::Runtime(e.to_string()))?;
    info!(
        "loaded {} ({} tropes, {} documents)",
        path.display(),
        ds.num_tropes(),
        ds.docs().count()
    );
    Ok(ds)
}

fn label_matrix(docs: &[FeatureDoc], num_tropes: usize) -> Vec<Vec<bool>> {
    docs.iter()
        .map(|d| (0..num_tropes).map(|t| d.has_label(t)).collect())
        .collect()
}

#[derive(Serialize)]
struct SplitSize {
    split: Split,
    docs: usize,
    percent: f64,
}

fn split_sizes(ds: &Dataset) -> Vec<SplitSize> {
    let total = ds.docs().count().max(1) as f64;
    ds.splits
        .iter()
        .map(|(&split, docs)| SplitSize {
            split,
            docs: docs.len(),
            percent: 100.0 * docs.len() as f64 / total,
        })
        .collect()
}

#[derive(Serialize)]
struct SynthBody {
    manifest: PathBuf,
    trope_names: Vec<String>,
    splits: Vec<SplitSize>,
}

pub fn synth(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = synth_generate(&cfg.synth, cfg.seed)?;
    let manifest = save_dataset(&ds, &cfg.out)?;
    info!("wrote {}", manifest.display());
    write_report(
        cfg,
        "synth",
        SynthBody {
            manifest,
            trope_names: ds.trope_names.clone(),
            splits: split_sizes(&ds),
        },
    )?;
    Ok(())
}

fn model_config(cfg: &RunConfig, ds: &Dataset) -> Result<ModelConfig, CliError> {
    let (w, s) = ds
        .feature_dims()
        .ok_or_else(|| CliError::Runtime("dataset has no documents".into()))?;
    let mc = cfg.model.resolve(ds.num_tropes(), w, s);
    mc.validate().map_err(CliError::usage)?;
    Ok(mc)
}

#[derive(Serialize)]
struct TrainBody<'a> {
    model: &'a ModelConfig,
    ablation: String,
    checkpoint: PathBuf,
    train_docs: usize,
    pos_weight: f64,
    final_loss: Option<f64>,
    epochs: Vec<EpochRecord>,
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load(cfg)?;
    let docs = ds.split(Split::Train);
    if docs.is_empty() {
        return Err(CliError::Usage("the manifest has no train split".into()));
    }
    let mc = model_config(cfg, &ds)?;
    let mut model = MulCom::new(mc.clone(), cfg.seed)?;
    info!("training {} on {} documents", mc.ablation_name(), docs.len());
    let report = fit(&mut model, docs, &cfg.train, Exec::from_threads(cfg.threads), |r| {
        info!("epoch {} loss {:.6}", r.epoch, r.mean_loss)
    })?;
    let path = cfg.out.join("checkpoint.json");
    checkpoint::save(&model, &path)?;
    info!("wrote {}", path.display());
    write_report(
        cfg,
        "train",
        TrainBody {
            model: &mc,
            ablation: mc.ablation_name(),
            checkpoint: path,
            train_docs: docs.len(),
            pos_weight: report.pos_weight,
            final_loss: report.epochs.last().map(|e| e.mean_loss),
            epochs: report.epochs,
        },
    )?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DocScores {
    pub doc_id: String,
    pub scores: Vec<f64>,
}

/// Interchange format for `--scores`: one probability per trope per document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreFile {
    pub docs: Vec<DocScores>,
}

/// Scores aligned with `docs` by id.
fn read_scores(path: &Path, docs: &[FeatureDoc], num_tropes: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let file: ScoreFile = serde_json::from_str(&read_to_string(path)?)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let mut by_id: BTreeMap<&str, &Vec<f64>> = BTreeMap::new();
    for d in &file.docs {
        if d.scores.len() != num_tropes {
            return Err(CliError::Runtime(format!(
                "{}: document `{}` has {} scores, expected {num_tropes}",
                path.display(),
                d.doc_id,
                d.scores.len()
            )));
        }
        by_id.insert(&d.doc_id, &d.scores);
    }
    docs.iter()
        .map(|doc| {
            by_id
                .get(doc.doc_id.as_str())
                .map(|s| s.to_vec())
                .ok_or_else(|| CliError::Runtime(format!("{}: no scores for `{}`", path.display(), doc.doc_id)))
        })
        .collect()
}

#[derive(Serialize)]
struct EvalBody {
    split: Split,
    docs: usize,
    source: Option<PathBuf>,
    ablation: Option<String>,
    model: Option<ModelConfig>,
    threshold: f64,
    metrics: Option<Metrics>,
    random_baseline: Option<RandomBaseline>,
}

pub fn eval(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load(cfg)?;
    let docs = ds.split(cfg.split);
    if docs.is_empty() {
        return Err(CliError::Usage(format!("the manifest has no {} split", cfg.split)));
    }
    let t = ds.num_tropes();
    let labels = label_matrix(docs, t);
    let (source, model_cfg, scores) = match (&cfg.scores, &cfg.checkpoint) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage("give either a checkpoint or a scores file, not both".into()));
        }
        (Some(path), None) => (Some(path.clone()), None, Some(read_scores(path, docs, t)?)),
        (None, Some(path)) => {
            let model = checkpoint::load(path).map_err(|e| CliError::Runtime(e.to_string()))?;
            if model.num_tropes() != t {
                return Err(CliError::Runtime(format!(
                    "checkpoint predicts {} tropes but the dataset has {t}",
                    model.num_tropes()
                )));
            }
            let scores = predict(&model, docs, Exec::from_threads(cfg.threads))?;
            let out = ScoreFile {
                docs: docs
                    .iter()
                    .zip(&scores)
                    .map(|(d, s)| DocScores {
                        doc_id: d.doc_id.clone(),
                        scores: s.clone(),
                    })
                    .collect(),
            };
            write_json_atomic(&cfg.out.join("scores.json"), &out)?;
            (Some(path.clone()), Some(model.config.clone()), Some(scores))
        }
        (None, None) if cfg.baseline_trials > 0 => (None, None, None),
        (None, None) => {
            return Err(CliError::Usage(
                "eval needs --checkpoint, --scores, or --baseline-trials > 0".into(),
            ));
        }
    };
    let metrics = scores
        .map(|s| evaluate(&s, &labels, cfg.train.threshold, &ds.trope_names))
        .transpose()?;
    if let Some(m) = &metrics {
        info!("micro-F1 {:.2} macro-F1 {:.2} mAP {:.2}", m.micro_f1, m.macro_f1, m.map);
    }
    let baseline = if cfg.baseline_trials > 0 {
        let b = random_baseline(&labels, cfg.seed, cfg.baseline_trials)?;
        info!("random baseline micro-F1 {:.2} mAP {:.2}", b.micro_f1.mean, b.map.mean);
        Some(b)
    } else {
        None
    };
    write_report(
        cfg,
        "eval",
        EvalBody {
            split: cfg.split,
            docs: docs.len(),
            source,
            ablation: model_cfg.as_ref().map(ModelConfig::ablation_name),
            model: model_cfg,
            threshold: cfg.train.threshold,
            metrics,
            random_baseline: baseline,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SplitStats {
    split: Split,
    stats: CorpusStats,
    prevalence: PrevalenceReport,
}

#[derive(Serialize)]
struct NamedPair {
    a: String,
    b: String,
    both: usize,
    either: usize,
    iou: f64,
}

fn top_pairs(ds: &Dataset, k: usize) -> Vec<NamedPair> {
    let docs: Vec<FeatureDoc> = ds.docs().cloned().collect();
    cooccurrence_iou(&docs, ds.num_tropes())
        .into_iter()
        .take(k)
        .map(|p| NamedPair {
            a: ds.trope_names[p.a].clone(),
            b: ds.trope_names[p.b].clone(),
            both: p.both,
            either: p.either,
            iou: p.iou,
        })
        .collect()
}

#[derive(Serialize)]
struct StatsBody {
    tropes: usize,
    sizes: Vec<SplitSize>,
    splits: Vec<SplitStats>,
    prevalence_all: PrevalenceReport,
    cooccurrence: Vec<NamedPair>,
}

pub fn stats(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load(cfg)?;
    let mut splits = Vec::new();
    for (&split, docs) in &ds.splits {
        if docs.is_empty() {
            continue;
        }
        let stats = corpus_stats(docs)?;
        info!(
            "{split}: {} documents, median tropes {}, median words {}",
            stats.docs, stats.tropes.median, stats.words.median
        );
        splits.push(SplitStats {
            split,
            stats,
            prevalence: prevalence_report(docs, &ds.trope_names),
        });
    }
    let all: Vec<FeatureDoc> = ds.docs().cloned().collect();
    write_report(
        cfg,
        "stats",
        StatsBody {
            tropes: ds.num_tropes(),
            sizes: split_sizes(&ds),
            splits,
            prevalence_all: prevalence_report(&all, &ds.trope_names),
            cooccurrence: top_pairs(&ds, cfg.top_k),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct CooccurBody {
    docs: usize,
    top_k: usize,
    pairs: Vec<NamedPair>,
}

pub fn cooccur(cfg: &RunConfig) -> Result<(), CliError> {
    let ds = load(cfg)?;
    let pairs = top_pairs(&ds, cfg.top_k);
    for (rank, p) in pairs.iter().enumerate() {
        info!("{:>3}. {} / {}: IoU {:.4}", rank + 1, p.a, p.b, p.iou);
    }
    write_report(
        cfg,
        "cooccur",
        CooccurBody {
            docs: ds.docs().count(),
            top_k: cfg.top_k,
            pairs,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct GradcheckBody {
    tolerance: f64,
    pass: bool,
    components: Vec<ComponentCheck>,
}

pub fn gradcheck(cfg: &RunConfig) -> Result<(), CliError> {
    let rows = cfg.gradcheck.run(cfg.seed)?;
    for r in &rows {
        info!(
            "{:<17} max rel err {:.3e} over {} coordinates{}",
            r.component,
            r.max_relative_error,
            r.checked,
            if r.pass { "" } else { "  FAIL" }
        );
    }
    let failed: Vec<String> = rows.iter().filter(|r| !r.pass).map(|r| r.component.clone()).collect();
    write_report(
        cfg,
        "gradcheck",
        GradcheckBody {
            tolerance: GRAD_TOLERANCE,
            pass: failed.is_empty(),
            components: rows,
        },
    )?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("gradient check failed for {}", failed.join(", "))))
    }
}
