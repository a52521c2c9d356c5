//! Per-frame posture and motion measurements.
//!
//! All measurements use normalized image coordinates (y grows downward). A
//! landmark takes part only when its visibility clears the [`VisibilityGate`];
//! a measurement whose landmarks fail the gate is `None`. Bilateral points
//! (shoulders, hips, knees, ankles) use the midpoint when both sides pass the
//! gate, otherwise whichever side does.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pose::{Landmark, LandmarkIndex, PoseFrame};

/// Hysteresis for the head-versus-shoulder comparison.
pub const ALIGN_EPSILON: f64 = 0.02;
/// Smallest vector norm accepted by [`angle_between`].
pub const MIN_NORM: f64 = 1e-9;
pub const DEFAULT_FLOOR_Y: f64 = 1.0;
pub const MAX_FLOOR_Y: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn midpoint(self, other: Vec2) -> Vec2 {
        Vec2::new((self.x + other.x) * 0.5, (self.y + other.y) * 0.5)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl From<&Landmark> for Vec2 {
    fn from(lm: &Landmark) -> Self {
        Vec2::new(lm.x, lm.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum GeometryError {
    #[error("vector norm too small to define an angle")]
    DegenerateVector,
    #[error("time delta between frames is not positive")]
    NonPositiveTimeDelta,
}

/// Unsigned angle between two vectors, in degrees within [0, 180].
pub fn angle_between(v1: Vec2, v2: Vec2) -> Result<f64, GeometryError> {
    let (n1, n2) = (v1.norm(), v2.norm());
    if !(n1 > MIN_NORM && n2 > MIN_NORM) {
        return Err(GeometryError::DegenerateVector);
    }
    let cos = (v1.dot(v2) / (n1 * n2)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees())
}

/// Minimum visibility for a landmark to take part in a measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VisibilityGate(pub f64);

impl Default for VisibilityGate {
    fn default() -> Self {
        VisibilityGate(0.5)
    }
}

impl VisibilityGate {
    #[inline]
    pub fn passes(self, lm: &Landmark) -> bool {
        lm.visibility >= self.0
    }

    fn point(self, frame: &PoseFrame, idx: LandmarkIndex) -> Option<Vec2> {
        if !frame.person_present() {
            return None;
        }
        let lm = frame.landmark(idx);
        self.passes(lm).then(|| Vec2::from(lm))
    }

    fn bilateral(self, frame: &PoseFrame, left: LandmarkIndex, right: LandmarkIndex) -> Option<Vec2> {
        match (self.point(frame, left), self.point(frame, right)) {
            (Some(l), Some(r)) => Some(l.midpoint(r)),
            (l, r) => l.or(r),
        }
    }
}

fn shoulder(frame: &PoseFrame, gate: VisibilityGate) -> Option<Vec2> {
    gate.bilateral(frame, LandmarkIndex::LeftShoulder, LandmarkIndex::RightShoulder)
}

fn hip(frame: &PoseFrame, gate: VisibilityGate) -> Option<Vec2> {
    gate.bilateral(frame, LandmarkIndex::LeftHip, LandmarkIndex::RightHip)
}

fn knee(frame: &PoseFrame, gate: VisibilityGate) -> Option<Vec2> {
    gate.bilateral(frame, LandmarkIndex::LeftKnee, LandmarkIndex::RightKnee)
}

fn ankle(frame: &PoseFrame, gate: VisibilityGate) -> Option<Vec2> {
    gate.bilateral(frame, LandmarkIndex::LeftAnkle, LandmarkIndex::RightAnkle)
}

/// Shoulder-to-hip distance, the body "height" that the height ratio tracks.
pub fn torso_length(frame: &PoseFrame, gate: VisibilityGate) -> Option<f64> {
    Some((shoulder(frame, gate)? - hip(frame, gate)?).norm())
}

/// Standing height and floor line, learned from the start of a stream.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    initial_height: Option<f64>,
    floor_y: f64,
    frames_seen: usize,
    warmup_frames: usize,
    samples: Vec<f64>,
}

impl Calibration {
    pub fn new(warmup_frames: usize) -> Self {
        Calibration {
            initial_height: None,
            floor_y: DEFAULT_FLOOR_Y,
            frames_seen: 0,
            warmup_frames: warmup_frames.max(1),
            samples: Vec::with_capacity(warmup_frames.max(1)),
        }
    }

    /// A calibration that is already complete. Mostly useful in tests.
    pub fn fixed(initial_height: f64, floor_y: f64) -> Self {
        Calibration {
            initial_height: Some(initial_height),
            floor_y: floor_y.clamp(0.0, MAX_FLOOR_Y),
            frames_seen: 0,
            warmup_frames: 0,
            samples: Vec::new(),
        }
    }

    pub fn is_calibrated(&self) -> bool {
        self.initial_height.is_some()
    }

    pub fn initial_height(&self) -> Option<f64> {
        self.initial_height
    }

    pub fn floor_y(&self) -> f64 {
        self.floor_y
    }

    /// Warm-up frames consumed so far.
    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    /// Folds one frame into the calibration.
    ///
    /// The floor is the running maximum of visible ankle heights. Until the
    /// warm-up completes, each frame with a usable torso contributes one
    /// length sample; the initial height is the median of the samples.
    pub fn observe(&mut self, frame: &PoseFrame, gate: VisibilityGate) {
        for idx in [LandmarkIndex::LeftAnkle, LandmarkIndex::RightAnkle] {
            if let Some(p) = gate.point(frame, idx) {
                if p.y > self.floor_y {
                    self.floor_y = p.y.min(MAX_FLOOR_Y);
                }
            }
        }
        if self.is_calibrated() {
            return;
        }
        let Some(len) = torso_length(frame, gate) else {
            return;
        };
        if len <= MIN_NORM {
            return;
        }
        self.samples.push(len);
        self.frames_seen += 1;
        if self.frames_seen >= self.warmup_frames {
            self.initial_height = Some(median(&mut self.samples));
            self.samples = Vec::new();
        }
    }

    /// By-value form of [`Calibration::observe`].
    pub fn updated(mut self, frame: &PoseFrame, gate: VisibilityGate) -> Self {
        self.observe(frame, gate);
        self
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) * 0.5
    }
}

pub fn height_ratio(frame: &PoseFrame, cal: &Calibration, gate: VisibilityGate) -> Option<f64> {
    let initial = cal.initial_height()?;
    let len = torso_length(frame, gate)?;
    (len > MIN_NORM).then(|| len / initial)
}

/// Angle at the hip between hip->shoulder and hip->knee. Upright is about 180.
pub fn torso_leg_angle(frame: &PoseFrame, gate: VisibilityGate) -> Option<f64> {
    let h = hip(frame, gate)?;
    let s = shoulder(frame, gate)?;
    let k = knee(frame, gate)?;
    angle_between(s - h, k - h).ok()
}

pub fn knee_ankle_gap(frame: &PoseFrame, gate: VisibilityGate) -> Option<f64> {
    Some((knee(frame, gate)?.y - ankle(frame, gate)?.y).abs())
}

/// Vertical clearance between the nose and the floor line, clamped at zero.
pub fn head_floor_distance(frame: &PoseFrame, cal: &Calibration, gate: VisibilityGate) -> Option<f64> {
    let nose = gate.point(frame, LandmarkIndex::Nose)?;
    Some((cal.floor_y() - nose.y).max(0.0))
}

/// True when the head is not above the shoulder line. Needs both shoulders.
pub fn upper_body_misaligned(frame: &PoseFrame, gate: VisibilityGate) -> Option<bool> {
    let nose = gate.point(frame, LandmarkIndex::Nose)?;
    let l = gate.point(frame, LandmarkIndex::LeftShoulder)?;
    let r = gate.point(frame, LandmarkIndex::RightShoulder)?;
    let shoulder_y = (l.y + r.y) * 0.5;
    Some(nose.y >= shoulder_y - ALIGN_EPSILON)
}

/// Hip-midpoint velocity between two frames, in normalized units per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Motion {
    pub velocity: Vec2,
}

impl Motion {
    pub fn speed(&self) -> f64 {
        self.velocity.norm()
    }

    /// Vertical velocity component; positive means moving toward the floor.
    pub fn descent_rate(&self) -> f64 {
        self.velocity.y
    }
}

/// `Ok(None)` when either frame lacks usable hips.
pub fn movement(
    curr: &PoseFrame,
    prev: &PoseFrame,
    gate: VisibilityGate,
) -> Result<Option<Motion>, GeometryError> {
    let dt = curr.timestamp_s() - prev.timestamp_s();
    if dt.is_nan() || dt <= 0.0 {
        return Err(GeometryError::NonPositiveTimeDelta);
    }
    let (Some(a), Some(b)) = (hip(prev, gate), hip(curr, gate)) else {
        return Ok(None);
    };
    Ok(Some(Motion {
        velocity: (b - a) * (1.0 / dt),
    }))
}

pub fn movement_speed(
    curr: &PoseFrame,
    prev: &PoseFrame,
    gate: VisibilityGate,
) -> Result<Option<f64>, GeometryError> {
    Ok(movement(curr, prev, gate)?.map(|m| m.speed()))
}

/// The six indicator measurements for one frame. `None` means undefined.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub height_ratio: Option<f64>,
    pub torso_leg_angle_deg: Option<f64>,
    pub knee_ankle_gap: Option<f64>,
    pub head_floor_distance: Option<f64>,
    pub upper_body_misaligned: Option<bool>,
    pub speed: Option<f64>,
    /// Downward component of the hip velocity; defined together with `speed`.
    pub descent_rate: Option<f64>,
}

impl FeatureVector {
    pub const UNDEFINED: FeatureVector = FeatureVector {
        height_ratio: None,
        torso_leg_angle_deg: None,
        knee_ankle_gap: None,
        head_floor_distance: None,
        upper_body_misaligned: None,
        speed: None,
        descent_rate: None,
    };
}

pub fn extract_features(
    curr: &PoseFrame,
    prev: Option<&PoseFrame>,
    cal: &Calibration,
    gate: VisibilityGate,
) -> FeatureVector {
    if !curr.person_present() {
        return FeatureVector::UNDEFINED;
    }
    let motion = prev.and_then(|p| movement(curr, p, gate).ok().flatten());
    FeatureVector {
        height_ratio: height_ratio(curr, cal, gate),
        torso_leg_angle_deg: torso_leg_angle(curr, gate),
        knee_ankle_gap: knee_ankle_gap(curr, gate),
        head_floor_distance: head_floor_distance(curr, cal, gate),
        upper_body_misaligned: upper_body_misaligned(curr, gate),
        speed: motion.map(|m| m.speed()),
        descent_rate: motion.map(|m| m.descent_rate()),
    }
}
