//! Fall detection from streamed pose landmarks.
//!
//! Frames arrive as 33-point landmark sets ([`pose`]). Each frame yields six
//! posture and motion measurements ([`features`]) which are thresholded into
//! indicator firings. A per-indicator persistence window and a weighted vote
//! decide when a fall event is emitted ([`detector`]). [`evaluation`] scores
//! clip-level outcomes against labelled manifests and [`sweep`] repeats that
//! over parameter grids.

pub mod buffer;
pub mod config;
pub mod detector;
pub mod evaluation;
pub mod features;
pub mod pose;
pub mod sweep;
pub mod synthetic;
pub mod wire;

pub use buffer::IndicatorBuffer;
pub use config::{ConfigError, DetectorConfig};
pub use detector::{
    evaluate_indicators, run_reader, run_stream, vote_score, Detector, DetectorError, DetectorOutput, EventRecord,
    FallEvent, Indicator, RunError, NUM_INDICATORS,
};
pub use evaluation::{
    compute_metrics, confusion, evaluate, evaluate_replay, predict_clip, predict_manifest, ClipOutcome, ClipPrediction,
    ConfusionMatrix, EvalError, Evaluation, MetricsJson, MetricsReport, ReplayPrediction,
};
pub use features::{extract_features, Calibration, FeatureVector, VisibilityGate};
pub use pose::{
    load_manifest, parse_frame_line, read_stream, write_frame_line, ClipManifestEntry, Label, Landmark,
    LandmarkIndex, PoseFrame, StreamError,
};
pub use sweep::{run_sweep, Grid, SweepError, SweepRow};
