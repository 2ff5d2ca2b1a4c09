use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Dataset, Split, TropeCategory};
use crate::doc::{DocRecord, FeatureDoc};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic, write_json_atomic};

/// Split files are resolved relative to the manifest's directory.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub trope_names: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trope_categories: Option<BTreeMap<String, TropeCategory>>,
    #[serde(default)]
    pub splits: BTreeMap<Split, Vec<PathBuf>>,
}

/// Parses one JSONL file; blank lines are skipped.
pub fn parse_jsonl(path: &Path, text: &str) -> Result<Vec<FeatureDoc>> {
    let mut docs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: DocRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: k + 1,
            message: e.to_string(),
        })?;
        docs.push(FeatureDoc::from_record(rec)?);
    }
    Ok(docs)
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = read_to_string(manifest_path)?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut splits = BTreeMap::new();
    for (split, files) in &manifest.splits {
        let mut docs = Vec::new();
        for file in files {
            let path = base.join(file);
            let text = read_to_string(&path)?;
            docs.extend(parse_jsonl(&path, &text)?);
        }
        splits.insert(*split, docs);
    }
    let ds = Dataset {
        trope_names: manifest.trope_names,
        trope_categories: manifest.trope_categories,
        splits,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `<split>.jsonl` files and `manifest.json` into `dir`; returns
/// the manifest path.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<PathBuf> {
    let mut manifest = Manifest {
        trope_names: ds.trope_names.clone(),
        trope_categories: ds.trope_categories.clone(),
        splits: BTreeMap::new(),
    };
    for (split, docs) in &ds.splits {
        let name = PathBuf::from(format!("{split}.jsonl"));
        let mut out = Vec::new();
        for doc in docs {
            serde_json::to_writer(&mut out, &doc.to_record())?;
            out.push(b'\n');
        }
        write_atomic(&dir.join(&name), &out)?;
        manifest.splits.insert(*split, vec![name]);
    }
    let path = dir.join("manifest.json");
    write_json_atomic(&path, &manifest)?;
    Ok(path)
}
