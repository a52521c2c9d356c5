//! JSON bodies exchanged with the HTTP service.

use serde::{Deserialize, Serialize};

use crate::config::DetectorConfig;
use crate::detector::EventRecord;
use crate::evaluation::{ClipOutcome, MetricsJson, ReplayPrediction};
use crate::pose::ClipManifestEntry;
use crate::sweep::SweepRow;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub config: Option<DetectorConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub frames_processed: u64,
    pub calibrated: bool,
    pub cooldown_remaining: u64,
    pub events_emitted: u64,
    pub config: DetectorConfig,
}

/// Reply to a batch of JSONL frames posted to a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramesAccepted {
    pub frames_accepted: u64,
    pub frames_processed: u64,
    pub events: Vec<EventRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    pub manifest: Vec<ClipManifestEntry>,
    #[serde(default)]
    pub config: Option<DetectorConfig>,
    /// When present, these outcomes are scored instead of running the detector.
    #[serde(default)]
    pub replay: Option<Vec<ReplayPrediction>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateResponse {
    pub metrics: MetricsJson,
    pub clips: Vec<ClipOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub manifest: Vec<ClipManifestEntry>,
    #[serde(default)]
    pub config: Option<DetectorConfig>,
    pub grid: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub rows: Vec<SweepRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    BadRequest,
    InvalidConfig,
    MalformedRecord,
    OrderViolation,
    NotFound,
    Io,
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub error: String,
}
