//! Clip-level scoring: predictions, confusion matrix and summary metrics.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufReader};
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::DetectorConfig;
use crate::detector::{run_reader, FallEvent, RunError};
use crate::pose::{ClipManifestEntry, Label};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read stream {path}: {source}")]
    StreamUnreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("clip {clip_id}: {source}")]
    Stream {
        clip_id: String,
        #[source]
        source: RunError,
    },
    #[error("prediction for unknown clip `{0}`")]
    UnknownClip(String),
    #[error("clip `{0}` appears more than once")]
    DuplicateClip(String),
    #[error("no prediction for clip `{0}`")]
    MissingPrediction(String),
    #[error("invalid replay file: {0}")]
    BadReplay(String),
}

impl EvalError {
    /// True for errors that stem from the manifest/prediction pairing rather than I/O.
    pub fn is_manifest_error(&self) -> bool {
        matches!(
            self,
            EvalError::UnknownClip(_)
                | EvalError::DuplicateClip(_)
                | EvalError::MissingPrediction(_)
                | EvalError::BadReplay(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipPrediction {
    pub clip_id: String,
    pub predicted: Label,
    pub events: Vec<FallEvent>,
}

impl ClipPrediction {
    /// A clip is a fall iff at least one event was emitted in it.
    pub fn from_events(clip_id: impl Into<String>, events: Vec<FallEvent>) -> Self {
        let predicted = if events.is_empty() { Label::Adl } else { Label::Fall };
        ClipPrediction {
            clip_id: clip_id.into(),
            predicted,
            events,
        }
    }
}

/// A precomputed clip outcome, as read from a replay file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayPrediction {
    pub clip_id: String,
    pub predicted: Label,
}

impl From<&ClipPrediction> for ReplayPrediction {
    fn from(p: &ClipPrediction) -> Self {
        ReplayPrediction {
            clip_id: p.clip_id.clone(),
            predicted: p.predicted,
        }
    }
}

/// Accepts either a JSON array or one JSON object per line.
pub fn parse_replay(text: &str) -> Result<Vec<ReplayPrediction>, EvalError> {
    let bad = |e: serde_json::Error| EvalError::BadReplay(e.to_string());
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(bad);
    }
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(bad))
        .collect()
}

pub fn predict_clip(entry: &ClipManifestEntry, cfg: &DetectorConfig) -> Result<ClipPrediction, EvalError> {
    let file = File::open(&entry.stream_path).map_err(|source| EvalError::StreamUnreadable {
        path: entry.stream_path.clone(),
        source,
    })?;
    let mut events = Vec::new();
    run_reader(BufReader::new(file), cfg, |e| events.push(e.clone())).map_err(|source| {
        EvalError::Stream {
            clip_id: entry.clip_id.clone(),
            source,
        }
    })?;
    Ok(ClipPrediction::from_events(entry.clip_id.clone(), events))
}

pub fn check_unique_clips(manifest: &[ClipManifestEntry]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for e in manifest {
        if !seen.insert(e.clip_id.as_str()) {
            return Err(EvalError::DuplicateClip(e.clip_id.clone()));
        }
    }
    Ok(())
}

/// Runs every clip, in parallel, returning predictions in manifest order.
pub fn predict_manifest(
    manifest: &[ClipManifestEntry],
    cfg: &DetectorConfig,
) -> Result<Vec<ClipPrediction>, EvalError> {
    check_unique_clips(manifest)?;
    manifest.par_iter().map(|e| predict_clip(e, cfg)).collect()
}

/// Per-clip result as reported by `evaluate`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipOutcome {
    pub clip_id: String,
    pub predicted: Label,
    /// Events emitted in the clip; zero in replay mode.
    pub events: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub matrix: ConfusionMatrix,
    pub metrics: MetricsReport,
    pub outcomes: Vec<ClipOutcome>,
}

/// Runs the detector over every clip and scores the outcomes.
pub fn evaluate(manifest: &[ClipManifestEntry], cfg: &DetectorConfig) -> Result<Evaluation, EvalError> {
    let preds = predict_manifest(manifest, cfg)?;
    let matrix = confusion(preds.iter().map(|p| (p.clip_id.as_str(), p.predicted)), manifest)?;
    Ok(Evaluation {
        matrix,
        metrics: compute_metrics(&matrix),
        outcomes: preds
            .iter()
            .map(|p| ClipOutcome {
                clip_id: p.clip_id.clone(),
                predicted: p.predicted,
                events: p.events.len(),
            })
            .collect(),
    })
}

/// Scores precomputed predictions without touching any stream.
pub fn evaluate_replay(manifest: &[ClipManifestEntry], replay: &[ReplayPrediction]) -> Result<Evaluation, EvalError> {
    let matrix = confusion(replay.iter().map(|p| (p.clip_id.as_str(), p.predicted)), manifest)?;
    Ok(Evaluation {
        matrix,
        metrics: compute_metrics(&matrix),
        outcomes: replay
            .iter()
            .map(|p| ClipOutcome {
                clip_id: p.clip_id.clone(),
                predicted: p.predicted,
                events: 0,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fn_: u64, fp: u64, tn: u64) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn record(&mut self, actual: Label, predicted: Label) {
        match (actual, predicted) {
            (Label::Fall, Label::Fall) => self.tp += 1,
            (Label::Fall, Label::Adl) => self.fn_ += 1,
            (Label::Adl, Label::Fall) => self.fp += 1,
            (Label::Adl, Label::Adl) => self.tn += 1,
        }
    }
}

/// Tallies predictions against manifest labels, FALL being the positive class.
/// Each manifest clip must be predicted exactly once.
pub fn confusion<'a, I>(predictions: I, manifest: &[ClipManifestEntry]) -> Result<ConfusionMatrix, EvalError>
where
    I: IntoIterator<Item = (&'a str, Label)>,
{
    let mut labels: HashMap<&str, (Label, bool)> = HashMap::with_capacity(manifest.len());
    for e in manifest {
        if labels.insert(e.clip_id.as_str(), (e.label, false)).is_some() {
            return Err(EvalError::DuplicateClip(e.clip_id.clone()));
        }
    }
    let mut m = ConfusionMatrix::default();
    for (clip_id, predicted) in predictions {
        let (actual, seen) = labels
            .get_mut(clip_id)
            .ok_or_else(|| EvalError::UnknownClip(clip_id.to_string()))?;
        if *seen {
            return Err(EvalError::DuplicateClip(clip_id.to_string()));
        }
        *seen = true;
        m.record(*actual, predicted);
    }
    if let Some(e) = manifest.iter().find(|e| !labels[e.clip_id.as_str()].1) {
        return Err(EvalError::MissingPrediction(e.clip_id.clone()));
    }
    Ok(m)
}

/// Accuracy, precision, recall, specificity and F1. `None` where a
/// denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn compute_metrics(m: &ConfusionMatrix) -> MetricsReport {
    let precision = ratio(m.tp, m.tp + m.fp);
    let recall = ratio(m.tp, m.tp + m.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricsReport {
        accuracy: ratio(m.tp + m.tn, m.total()),
        precision,
        recall,
        specificity: ratio(m.tn, m.tn + m.fp),
        f1,
    }
}

pub fn round4(x: f64) -> f64 {
    (x * 10_000.0).round() / 10_000.0
}

/// Machine-readable report: counts plus metrics rounded to 4 decimals, `null`
/// when undefined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsJson {
    pub tp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub fp: u64,
    pub tn: u64,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub specificity: Option<f64>,
    pub f1: Option<f64>,
}

impl MetricsJson {
    pub fn new(report: &MetricsReport, m: &ConfusionMatrix) -> Self {
        MetricsJson {
            tp: m.tp,
            fn_: m.fn_,
            fp: m.fp,
            tn: m.tn,
            accuracy: report.accuracy.map(round4),
            precision: report.precision.map(round4),
            recall: report.recall.map(round4),
            specificity: report.specificity.map(round4),
            f1: report.f1.map(round4),
        }
    }

    pub fn confusion(&self) -> ConfusionMatrix {
        ConfusionMatrix::new(self.tp, self.fn_, self.fp, self.tn)
    }
}

pub fn render_json(report: &MetricsReport, m: &ConfusionMatrix) -> String {
    serde_json::to_string(&MetricsJson::new(report, m)).expect("metrics always serialize")
}

fn pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:.2}%", v * 100.0),
        None => "n/a".to_string(),
    }
}

pub fn render_text(report: &MetricsReport, m: &ConfusionMatrix) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "clips evaluated: {}", m.total());
    let _ = writeln!(out, "{:<14}{:>16}{:>16}", "", "predicted FALL", "predicted ADL");
    let _ = writeln!(out, "{:<14}{:>16}{:>16}", "actual FALL", m.tp, m.fn_);
    let _ = writeln!(out, "{:<14}{:>16}{:>16}", "actual ADL", m.fp, m.tn);
    let _ = writeln!(out);
    for (name, v) in [
        ("accuracy", report.accuracy),
        ("precision", report.precision),
        ("recall", report.recall),
        ("specificity", report.specificity),
        ("f1", report.f1),
    ] {
        let _ = writeln!(out, "{name:<14}{:>10}", pct(v));
    }
    out
}
