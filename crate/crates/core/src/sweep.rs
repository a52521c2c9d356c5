//! Grid sweeps over detector parameters.
//!
//! A grid spec lists fields and candidate values:
//!
//! ```text
//! vote_threshold=3,4,5;persistence_fraction=0.4,0.5
//! ```
//!
//! `weights` values are six colon-separated numbers, e.g.
//! `weights=1:1:1:1:1:1,2:2:1:1:1:1`. Points are enumerated with the first
//! field varying slowest, each field's values in the order given.

use std::io;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, DetectorConfig, CONFIG_KEYS};
use crate::evaluation::{
    check_unique_clips, compute_metrics, confusion, predict_manifest, EvalError, MetricsJson,
};
use crate::pose::ClipManifestEntry;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("invalid grid spec: {0}")]
    Grid(String),
    #[error("unknown grid field `{0}`")]
    UnknownField(String),
    #[error("grid point {point}: {source}")]
    Config {
        point: String,
        #[source]
        source: ConfigError,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `(field, value)` pairs naming one grid point.
pub type Params = Vec<(String, String)>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridAxis {
    pub field: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub axes: Vec<GridAxis>,
}

impl Grid {
    pub fn parse(spec: &str) -> Result<Self, SweepError> {
        let mut axes: Vec<GridAxis> = Vec::new();
        for part in spec.split([';', '\n']).map(str::trim).filter(|p| !p.is_empty()) {
            let (field, values) = part
                .split_once('=')
                .ok_or_else(|| SweepError::Grid(format!("expected `field=v1,v2`, found `{part}`")))?;
            let field = field.trim();
            if !CONFIG_KEYS.contains(&field) {
                return Err(SweepError::UnknownField(field.to_string()));
            }
            if axes.iter().any(|a| a.field == field) {
                return Err(SweepError::Grid(format!("field `{field}` listed twice")));
            }
            let values: Vec<String> = values
                .split(',')
                .map(|v| v.trim().to_string())
                .filter(|v| !v.is_empty())
                .collect();
            if values.is_empty() {
                return Err(SweepError::Grid(format!("field `{field}` has no values")));
            }
            axes.push(GridAxis {
                field: field.to_string(),
                values,
            });
        }
        if axes.is_empty() {
            return Err(SweepError::Grid("grid is empty".into()));
        }
        Ok(Grid { axes })
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// All assignments in odometer order, last axis fastest.
    pub fn points(&self) -> Vec<Vec<(String, String)>> {
        let mut out = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |v| {
                        let mut p = prefix.clone();
                        p.push((axis.field.clone(), v.clone()));
                        p
                    })
                })
                .collect();
        }
        out
    }

    /// Applies every point on top of `base`, validating each result.
    pub fn configs(&self, base: &DetectorConfig) -> Result<Vec<(Params, DetectorConfig)>, SweepError> {
        self.points()
            .into_iter()
            .map(|point| {
                let label = || {
                    point
                        .iter()
                        .map(|(k, v)| format!("{k}={v}"))
                        .collect::<Vec<_>>()
                        .join(";")
                };
                let mut cfg = base.clone();
                for (k, v) in &point {
                    cfg.set(k, v).map_err(|source| SweepError::Config {
                        point: label(),
                        source,
                    })?;
                }
                cfg.validate().map_err(|source| SweepError::Config {
                    point: label(),
                    source,
                })?;
                Ok((point, cfg))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub params: Vec<(String, String)>,
    pub metrics: MetricsJson,
}

/// Evaluates the manifest at every grid point. Rows come back in grid order.
pub fn run_sweep(
    manifest: &[ClipManifestEntry],
    base: &DetectorConfig,
    grid: &Grid,
) -> Result<Vec<SweepRow>, SweepError> {
    check_unique_clips(manifest)?;
    let configs = grid.configs(base)?;
    configs
        .into_par_iter()
        .map(|(params, cfg)| {
            let preds = predict_manifest(manifest, &cfg)?;
            let m = confusion(preds.iter().map(|p| (p.clip_id.as_str(), p.predicted)), manifest)?;
            Ok(SweepRow {
                params,
                metrics: MetricsJson::new(&compute_metrics(&m), &m),
            })
        })
        .collect()
}

const METRIC_COLUMNS: [&str; 9] = [
    "tp",
    "fn",
    "fp",
    "tn",
    "accuracy",
    "precision",
    "recall",
    "specificity",
    "f1",
];

/// One header row (grid fields, then counts and metrics) and one row per point.
pub fn write_csv<W: io::Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if let Some(first) = rows.first() {
        let header: Vec<&str> = first
            .params
            .iter()
            .map(|(k, _)| k.as_str())
            .chain(METRIC_COLUMNS)
            .collect();
        w.write_record(header)?;
    }
    let metric = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    for row in rows {
        let m = &row.metrics;
        let mut rec: Vec<String> = row.params.iter().map(|(_, v)| v.clone()).collect();
        rec.extend([m.tp, m.fn_, m.fp, m.tn].map(|c| c.to_string()));
        rec.extend([m.accuracy, m.precision, m.recall, m.specificity, m.f1].map(metric));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
