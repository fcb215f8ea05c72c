//! Corpus ingestion, deduplication and file-level scoring.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

use crate::analysis::{analyze, Analysis};
use crate::dockerfile::Keyword;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CorpusEntry {
    pub path: PathBuf,
    pub content_hash: String,
    /// Non-blank lines of the normalized content.
    pub line_count: usize,
    pub has_run: bool,
    pub has_control_flow: bool,
    pub parse_ok: bool,
}

impl CorpusEntry {
    /// Why the entry is excluded from the gold set; empty when eligible.
    pub fn ineligibility(&self) -> Vec<&'static str> {
        let mut reasons = Vec::new();
        if !self.parse_ok {
            reasons.push("parse-error");
        }
        if self.has_control_flow {
            reasons.push("control-flow");
        }
        if self.line_count < 4 && !self.has_run {
            reasons.push("too-short-without-run");
        }
        reasons
    }

    pub fn gold_eligible(&self) -> bool {
        self.ineligibility().is_empty()
    }

    /// One manifest record.
    pub fn manifest_line(&self) -> String {
        serde_json::json!({
            "path": self.path.display().to_string(),
            "hash": self.content_hash,
            "gold_eligible": self.gold_eligible(),
            "reasons": self.ineligibility(),
        })
        .to_string()
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("prediction and annotation file sets differ")]
    KeyMismatch,
    #[error("{path}:{line}: {reason}")]
    Annotation {
        path: String,
        line: usize,
        reason: String,
    },
}

/// CRLF to LF and trailing whitespace removed from every line.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for line in text.replace("\r\n", "\n").split('\n') {
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out.truncate(out.trim_end_matches('\n').len());
    out
}

pub fn content_hash(normalized: &str) -> String {
    Sha256::digest(normalized.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn is_dockerfile_name(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n == "Dockerfile" || n.ends_with(".Dockerfile"))
}

/// Dockerfiles under `root` in path order.
pub fn discover(root: &Path) -> Vec<PathBuf> {
    if root.is_file() {
        return vec![root.to_path_buf()];
    }
    let mut paths: Vec<PathBuf> = WalkDir::new(root)
        .sort_by_file_name()
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file() && is_dockerfile_name(e.path()))
        .map(|e| e.into_path())
        .collect();
    paths.sort();
    paths
}

/// Builds the entry of one file's text, with its analysis when it parses.
pub fn entry_for(path: &Path, text: &str) -> (CorpusEntry, Option<Analysis>) {
    let norm = normalize(text);
    let analysis = analyze(&path.display().to_string(), &norm).ok();
    let entry = CorpusEntry {
        path: path.to_path_buf(),
        content_hash: content_hash(&norm),
        line_count: norm.lines().filter(|l| !l.trim().is_empty()).count(),
        has_run: analysis.as_ref().is_some_and(|a| {
            a.ast
                .instructions
                .iter()
                .any(|i| i.keyword == Keyword::Run)
        }),
        has_control_flow: analysis.as_ref().is_some_and(|a| a.has_control_flow()),
        parse_ok: analysis.is_some(),
    };
    (entry, analysis)
}

pub struct Ingested {
    pub entries: Vec<CorpusEntry>,
    /// Analyses of the parsed entries, keyed by path.
    pub analyses: BTreeMap<PathBuf, Analysis>,
    pub errors: Vec<CorpusError>,
}

/// Reads every Dockerfile under `root`, keeping the first file of each
/// content hash.
pub fn ingest(root: &Path) -> Ingested {
    let paths = discover(root);
    let read: Vec<Result<(CorpusEntry, Option<Analysis>), CorpusError>> = paths
        .par_iter()
        .map(|p| {
            std::fs::read_to_string(p)
                .map(|text| entry_for(p, &text))
                .map_err(|source| CorpusError::Io {
                    path: p.clone(),
                    source,
                })
        })
        .collect();
    let mut seen = BTreeSet::new();
    let mut out = Ingested {
        entries: Vec::new(),
        analyses: BTreeMap::new(),
        errors: Vec::new(),
    };
    for r in read {
        match r {
            Ok((entry, analysis)) => {
                if !seen.insert(entry.content_hash.clone()) {
                    continue;
                }
                if let Some(a) = analysis {
                    out.analyses.insert(entry.path.clone(), a);
                }
                out.entries.push(entry);
            }
            Err(e) => out.errors.push(e),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f_measure: Option<f64>,
}

impl EvalReport {
    pub fn from_counts(tp: usize, fp: usize, tn: usize, fn_: usize) -> EvalReport {
        let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
        let precision = ratio(tp, fp);
        let recall = ratio(tp, fn_);
        let f_measure = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        EvalReport {
            tp,
            fp,
            tn,
            fn_,
            precision,
            recall,
            f_measure,
        }
    }
}

/// File-level confusion matrix of `predictions` against `annotations`.
pub fn evaluate<K: Ord>(
    predictions: &BTreeMap<K, bool>,
    annotations: &BTreeMap<K, bool>,
) -> Result<EvalReport, CorpusError> {
    if predictions.len() != annotations.len()
        || !predictions.keys().all(|k| annotations.contains_key(k))
    {
        return Err(CorpusError::KeyMismatch);
    }
    let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
    for (k, &pred) in predictions {
        match (pred, annotations[k]) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fn_ += 1,
        }
    }
    Ok(EvalReport::from_counts(tp, fp, tn, fn_))
}

/// Reads `<path>\t<0|1>` lines.
pub fn parse_annotations(label: &str, text: &str) -> Result<BTreeMap<String, bool>, CorpusError> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| CorpusError::Annotation {
            path: label.to_string(),
            line: i + 1,
            reason: reason.to_string(),
        };
        let (path, flag) = line.rsplit_once('\t').ok_or_else(|| err("expected <path>\\t<0|1>"))?;
        let v = match flag.trim() {
            "0" => false,
            "1" => true,
            _ => return Err(err("label must be 0 or 1")),
        };
        out.insert(path.to_string(), v);
    }
    Ok(out)
}
