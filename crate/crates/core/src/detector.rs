//! Indicator firing, per-indicator persistence windows, weighted voting and
//! fall-event emission.
//!
//! Every frame runs the same loop: refresh calibration, extract features,
//! threshold each feature into a firing, push the firings into their windows,
//! then vote. An indicator votes only while it fired in at least
//! `ceil(persistence_fraction * buffer_len)` of its last `buffer_len` frames.
//! A fall event is emitted when the weighted vote reaches `vote_threshold`,
//! calibration is complete and no cooldown is pending.

use std::fmt;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::buffer::IndicatorBuffer;
use crate::config::{ConfigError, DetectorConfig};
use crate::features::{extract_features, Calibration, FeatureVector, VisibilityGate};
use crate::pose::{read_stream, OrderCheck, PoseFrame, StreamError};

pub const NUM_INDICATORS: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Indicator {
    HeightRatio,
    TorsoLegAngle,
    KneeAnkle,
    HeadFloor,
    UpperBodyAlignment,
    Movement,
}

impl Indicator {
    pub const ALL: [Indicator; NUM_INDICATORS] = [
        Indicator::HeightRatio,
        Indicator::TorsoLegAngle,
        Indicator::KneeAnkle,
        Indicator::HeadFloor,
        Indicator::UpperBodyAlignment,
        Indicator::Movement,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Indicator::HeightRatio => "height_ratio",
            Indicator::TorsoLegAngle => "torso_leg_angle",
            Indicator::KneeAnkle => "knee_ankle",
            Indicator::HeadFloor => "head_floor",
            Indicator::UpperBodyAlignment => "upper_body_alignment",
            Indicator::Movement => "movement",
        }
    }
}

impl fmt::Display for Indicator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub type Firings = [bool; NUM_INDICATORS];

/// Per-frame threshold checks. Undefined features never fire.
pub fn evaluate_indicators(fv: &FeatureVector, cfg: &DetectorConfig) -> Firings {
    [
        fv.height_ratio.is_some_and(|r| r < cfg.height_ratio_max),
        fv.torso_leg_angle_deg
            .is_some_and(|a| a >= cfg.angle_low_deg && a <= cfg.angle_high_deg),
        fv.knee_ankle_gap.is_some_and(|g| g < cfg.knee_ankle_max),
        fv.head_floor_distance.is_some_and(|d| d < cfg.head_floor_max),
        fv.upper_body_misaligned.unwrap_or(false),
        fv.descent_rate.is_some_and(|v| v > cfg.speed_min),
    ]
}

/// Which indicators have persisted long enough to vote.
pub fn active_indicators(buffers: &[IndicatorBuffer; NUM_INDICATORS], cfg: &DetectorConfig) -> Firings {
    let required = cfg.required_firings();
    std::array::from_fn(|i| buffers[i].fire_count() >= required)
}

pub fn weighted_vote(active: &Firings, weights: &[f64; NUM_INDICATORS]) -> f64 {
    active
        .iter()
        .zip(weights)
        .filter(|(on, _)| **on)
        .map(|(_, w)| *w)
        .sum()
}

pub fn vote_score(buffers: &[IndicatorBuffer; NUM_INDICATORS], cfg: &DetectorConfig) -> f64 {
    weighted_vote(&active_indicators(buffers, cfg), &cfg.weights)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FallEvent {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub vote_score: f64,
    pub active_indicators: Vec<Indicator>,
    pub feature_snapshot: FeatureVector,
}

/// The one-line JSON form of a [`FallEvent`] written by `detect`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub frame: u64,
    pub t: f64,
    pub score: f64,
    pub indicators: Vec<Indicator>,
}

impl From<&FallEvent> for EventRecord {
    fn from(e: &FallEvent) -> Self {
        EventRecord {
            frame: e.frame_index,
            t: e.timestamp_s,
            score: e.vote_score,
            indicators: e.active_indicators.clone(),
        }
    }
}

impl FallEvent {
    pub fn record_line(&self) -> String {
        serde_json::to_string(&EventRecord::from(self)).expect("event records always serialize")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorOutput {
    pub features: FeatureVector,
    pub firings: Firings,
    pub active: Firings,
    pub vote_score: f64,
    pub event: Option<FallEvent>,
}

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("order violation: {0}")]
    OrderViolation(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

/// Streaming fall detector for a single landmark stream.
#[derive(Debug, Clone)]
pub struct Detector {
    cfg: DetectorConfig,
    calibration: Calibration,
    buffers: [IndicatorBuffer; NUM_INDICATORS],
    prev_frame: Option<PoseFrame>,
    cooldown_remaining: u64,
    frames_processed: u64,
    order: OrderCheck,
}

impl Detector {
    pub fn new(cfg: DetectorConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        Ok(Detector {
            calibration: Calibration::new(cfg.warmup_frames),
            buffers: std::array::from_fn(|_| IndicatorBuffer::new(cfg.buffer_len)),
            prev_frame: None,
            cooldown_remaining: 0,
            frames_processed: 0,
            order: OrderCheck::new(),
            cfg,
        })
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.cfg
    }

    pub fn calibration(&self) -> &Calibration {
        &self.calibration
    }

    pub fn buffers(&self) -> &[IndicatorBuffer; NUM_INDICATORS] {
        &self.buffers
    }

    pub fn cooldown_remaining(&self) -> u64 {
        self.cooldown_remaining
    }

    pub fn frames_processed(&self) -> u64 {
        self.frames_processed
    }

    /// Discards all stream state, keeping the configuration.
    pub fn reset(&mut self) {
        self.calibration = Calibration::new(self.cfg.warmup_frames);
        self.buffers.iter_mut().for_each(IndicatorBuffer::clear);
        self.prev_frame = None;
        self.cooldown_remaining = 0;
        self.frames_processed = 0;
        self.order = OrderCheck::new();
    }

    pub fn update(&mut self, frame: PoseFrame) -> Result<DetectorOutput, DetectorError> {
        self.order.admit(&frame).map_err(DetectorError::OrderViolation)?;

        let gate = VisibilityGate(self.cfg.visibility_min);
        self.calibration.observe(&frame, gate);
        let features = extract_features(&frame, self.prev_frame.as_ref(), &self.calibration, gate);
        // absent frames yield undefined features, so they push all-false here
        let firings = evaluate_indicators(&features, &self.cfg);
        for (buf, fired) in self.buffers.iter_mut().zip(firings) {
            buf.push(fired);
        }
        let active = active_indicators(&self.buffers, &self.cfg);
        let vote_score = weighted_vote(&active, &self.cfg.weights);

        if self.cooldown_remaining > 0 {
            self.cooldown_remaining -= 1;
        }
        let event = (vote_score >= self.cfg.vote_threshold
            && self.calibration.is_calibrated()
            && self.cooldown_remaining == 0)
            .then(|| {
                self.cooldown_remaining = self.cfg.cooldown_frames;
                FallEvent {
                    frame_index: frame.frame_index(),
                    timestamp_s: frame.timestamp_s(),
                    vote_score,
                    active_indicators: Indicator::ALL
                        .into_iter()
                        .zip(active)
                        .filter_map(|(ind, on)| on.then_some(ind))
                        .collect(),
                    feature_snapshot: features,
                }
            });

        self.frames_processed += 1;
        self.prev_frame = Some(frame);
        Ok(DetectorOutput {
            features,
            firings,
            active,
            vote_score,
            event,
        })
    }
}

/// Runs a fresh detector over a whole stream and collects its events.
pub fn run_stream<I>(frames: I, cfg: &DetectorConfig) -> Result<Vec<FallEvent>, DetectorError>
where
    I: IntoIterator<Item = PoseFrame>,
{
    let mut det = Detector::new(cfg.clone())?;
    let mut events = Vec::new();
    for frame in frames {
        if let Some(e) = det.update(frame)?.event {
            events.push(e);
        }
    }
    Ok(events)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
}

/// Streams frames from a JSONL reader through a detector, reporting each
/// event as it is found. Stops at the first malformed or out-of-order record.
/// Returns the number of frames processed.
pub fn run_reader<R, F>(source: R, cfg: &DetectorConfig, mut on_event: F) -> Result<u64, RunError>
where
    R: BufRead,
    F: FnMut(&FallEvent),
{
    let mut det = Detector::new(cfg.clone()).map_err(DetectorError::from)?;
    for frame in read_stream(source) {
        if let Some(e) = det.update(frame?)?.event {
            on_event(&e);
        }
    }
    Ok(det.frames_processed())
}
