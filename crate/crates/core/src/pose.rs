//! Landmark data model and the JSONL landmark stream format.
//!
//! One record per line:
//!
//! ```text
//! {"frame": 0, "t": 0.0, "present": true, "landmarks": [[x, y, z, visibility], ...]}
//! ```
//!
//! Coordinates are normalized image coordinates with `y` increasing downward.
//! Every record carries all 33 landmarks in [`LandmarkIndex`] order. Frames in
//! which the pose model found nobody are written as `present: false` with the
//! all-zero landmark sentinel.

use std::fmt;
use std::fs;
use std::io::{self, BufRead};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NUM_LANDMARKS: usize = 33;

/// Slots of the 33-point full-body pose topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum LandmarkIndex {
    Nose = 0,
    LeftEyeInner = 1,
    LeftEye = 2,
    LeftEyeOuter = 3,
    RightEyeInner = 4,
    RightEye = 5,
    RightEyeOuter = 6,
    LeftEar = 7,
    RightEar = 8,
    MouthLeft = 9,
    MouthRight = 10,
    LeftShoulder = 11,
    RightShoulder = 12,
    LeftElbow = 13,
    RightElbow = 14,
    LeftWrist = 15,
    RightWrist = 16,
    LeftPinky = 17,
    RightPinky = 18,
    LeftIndex = 19,
    RightIndex = 20,
    LeftThumb = 21,
    RightThumb = 22,
    LeftHip = 23,
    RightHip = 24,
    LeftKnee = 25,
    RightKnee = 26,
    LeftAnkle = 27,
    RightAnkle = 28,
    LeftHeel = 29,
    RightHeel = 30,
    LeftFootIndex = 31,
    RightFootIndex = 32,
}

impl LandmarkIndex {
    pub const ALL: [LandmarkIndex; NUM_LANDMARKS] = {
        use LandmarkIndex::*;
        [
            Nose,
            LeftEyeInner,
            LeftEye,
            LeftEyeOuter,
            RightEyeInner,
            RightEye,
            RightEyeOuter,
            LeftEar,
            RightEar,
            MouthLeft,
            MouthRight,
            LeftShoulder,
            RightShoulder,
            LeftElbow,
            RightElbow,
            LeftWrist,
            RightWrist,
            LeftPinky,
            RightPinky,
            LeftIndex,
            RightIndex,
            LeftThumb,
            RightThumb,
            LeftHip,
            RightHip,
            LeftKnee,
            RightKnee,
            LeftAnkle,
            RightAnkle,
            LeftHeel,
            RightHeel,
            LeftFootIndex,
            RightFootIndex,
        ]
    };

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Landmark {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub visibility: f64,
}

impl Landmark {
    pub const ZERO: Landmark = Landmark {
        x: 0.0,
        y: 0.0,
        z: 0.0,
        visibility: 0.0,
    };

    pub fn new(x: f64, y: f64, z: f64, visibility: f64) -> Self {
        Landmark { x, y, z, visibility }
    }

    fn check(&self, slot: usize) -> Result<(), MalformedRecord> {
        if !(self.x.is_finite() && self.y.is_finite() && self.z.is_finite()) {
            return Err(MalformedRecord::new(format!(
                "landmark {slot} has a non-finite coordinate"
            )));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(MalformedRecord::new(format!(
                "landmark {slot} visibility {} outside [0, 1]",
                self.visibility
            )));
        }
        Ok(())
    }

    fn is_zero(&self) -> bool {
        self.x == 0.0 && self.y == 0.0 && self.z == 0.0 && self.visibility == 0.0
    }
}

/// One video frame's worth of landmarks.
///
/// Constructed only through [`PoseFrame::new`], [`PoseFrame::absent`] or
/// [`parse_frame_line`], all of which enforce the per-frame invariants.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseFrame {
    frame_index: u64,
    timestamp_s: f64,
    landmarks: [Landmark; NUM_LANDMARKS],
    person_present: bool,
}

impl PoseFrame {
    /// A frame with a detected person.
    pub fn new(
        frame_index: u64,
        timestamp_s: f64,
        landmarks: [Landmark; NUM_LANDMARKS],
    ) -> Result<Self, MalformedRecord> {
        check_timestamp(timestamp_s)?;
        for (slot, lm) in landmarks.iter().enumerate() {
            lm.check(slot)?;
        }
        let person_present = !landmarks.iter().all(Landmark::is_zero);
        Ok(PoseFrame {
            frame_index,
            timestamp_s,
            landmarks,
            person_present,
        })
    }

    /// A frame in which no person was found.
    pub fn absent(frame_index: u64, timestamp_s: f64) -> Result<Self, MalformedRecord> {
        check_timestamp(timestamp_s)?;
        Ok(PoseFrame {
            frame_index,
            timestamp_s,
            landmarks: [Landmark::ZERO; NUM_LANDMARKS],
            person_present: false,
        })
    }

    pub fn frame_index(&self) -> u64 {
        self.frame_index
    }

    pub fn timestamp_s(&self) -> f64 {
        self.timestamp_s
    }

    pub fn person_present(&self) -> bool {
        self.person_present
    }

    pub fn landmarks(&self) -> &[Landmark; NUM_LANDMARKS] {
        &self.landmarks
    }

    #[inline]
    pub fn landmark(&self, idx: LandmarkIndex) -> &Landmark {
        &self.landmarks[idx.index()]
    }
}

fn check_timestamp(t: f64) -> Result<(), MalformedRecord> {
    if !t.is_finite() || t < 0.0 {
        return Err(MalformedRecord::new(format!(
            "timestamp {t} must be finite and nonnegative"
        )));
    }
    Ok(())
}

/// A record that could not be turned into a [`PoseFrame`].
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed record: {reason}")]
pub struct MalformedRecord {
    pub reason: String,
}

impl MalformedRecord {
    fn new(reason: impl Into<String>) -> Self {
        MalformedRecord {
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("line {line}: {source}")]
    Malformed {
        line: usize,
        #[source]
        source: MalformedRecord,
    },
    #[error("line {line}: order violation: {reason}")]
    OrderViolation { line: usize, reason: String },
    #[error("failed to read landmark stream: {0}")]
    Io(#[from] io::Error),
}

#[derive(Deserialize)]
struct FrameRecordIn {
    frame: u64,
    t: f64,
    #[serde(default = "default_present")]
    present: bool,
    landmarks: Vec<[f64; 4]>,
}

fn default_present() -> bool {
    true
}

#[derive(Serialize)]
struct FrameRecordOut<'a> {
    frame: u64,
    t: f64,
    present: bool,
    landmarks: LandmarksOut<'a>,
}

struct LandmarksOut<'a>(&'a [Landmark; NUM_LANDMARKS]);

impl Serialize for LandmarksOut<'_> {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = serializer.serialize_seq(Some(NUM_LANDMARKS))?;
        for lm in self.0 {
            seq.serialize_element(&[lm.x, lm.y, lm.z, lm.visibility])?;
        }
        seq.end()
    }
}

/// Parses one JSONL record.
///
/// `present` defaults to `true` when omitted. A `present: false` record may
/// carry either the 33-entry zero sentinel or an empty landmark array; its
/// landmarks are normalized to the sentinel either way.
pub fn parse_frame_line(line: &str) -> Result<PoseFrame, MalformedRecord> {
    let rec: FrameRecordIn =
        serde_json::from_str(line).map_err(|e| MalformedRecord::new(e.to_string()))?;
    if !rec.present && rec.landmarks.is_empty() {
        return PoseFrame::absent(rec.frame, rec.t);
    }
    if rec.landmarks.len() != NUM_LANDMARKS {
        return Err(MalformedRecord::new(format!(
            "expected {NUM_LANDMARKS} landmarks, found {}",
            rec.landmarks.len()
        )));
    }
    let mut landmarks = [Landmark::ZERO; NUM_LANDMARKS];
    for (slot, (dst, [x, y, z, v])) in landmarks.iter_mut().zip(rec.landmarks).enumerate() {
        *dst = Landmark::new(x, y, z, v);
        dst.check(slot)?;
    }
    if !rec.present {
        return PoseFrame::absent(rec.frame, rec.t);
    }
    PoseFrame::new(rec.frame, rec.t, landmarks)
}

/// Serializes a frame as one JSONL record, without the trailing newline.
pub fn write_frame_line(frame: &PoseFrame) -> String {
    let rec = FrameRecordOut {
        frame: frame.frame_index,
        t: frame.timestamp_s,
        present: frame.person_present,
        landmarks: LandmarksOut(&frame.landmarks),
    };
    serde_json::to_string(&rec).expect("frame records always serialize")
}

/// Enforces the cross-frame ordering contract of a landmark stream.
#[derive(Debug, Clone, Default)]
pub struct OrderCheck {
    last: Option<(u64, f64)>,
}

impl OrderCheck {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts `frame` if it continues the stream, otherwise describes the regression.
    pub fn admit(&mut self, frame: &PoseFrame) -> Result<(), String> {
        if let Some((idx, t)) = self.last {
            if frame.frame_index <= idx {
                return Err(format!(
                    "frame index {} does not follow {idx}",
                    frame.frame_index
                ));
            }
            if frame.timestamp_s < t {
                return Err(format!(
                    "timestamp {} precedes {t}",
                    frame.timestamp_s
                ));
            }
        }
        self.last = Some((frame.frame_index, frame.timestamp_s));
        Ok(())
    }
}

/// Iterator over the frames of a newline-delimited landmark stream.
///
/// Blank lines are skipped. Errors are yielded in place; the caller decides
/// whether to stop or skip. A rejected frame does not advance the ordering
/// check.
pub struct StreamReader<R> {
    source: R,
    buf: String,
    line: usize,
    order: OrderCheck,
}

impl<R: BufRead> StreamReader<R> {
    pub fn new(source: R) -> Self {
        StreamReader {
            source,
            buf: String::new(),
            line: 0,
            order: OrderCheck::new(),
        }
    }

    /// 1-based number of the last line read.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for StreamReader<R> {
    type Item = Result<PoseFrame, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.source.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {}
                Err(e) => return Some(Err(StreamError::Io(e))),
            }
            self.line += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            let line = self.line;
            let frame = match parse_frame_line(text) {
                Ok(f) => f,
                Err(source) => return Some(Err(StreamError::Malformed { line, source })),
            };
            return Some(match self.order.admit(&frame) {
                Ok(()) => Ok(frame),
                Err(reason) => Err(StreamError::OrderViolation { line, reason }),
            });
        }
    }
}

pub fn read_stream<R: BufRead>(source: R) -> StreamReader<R> {
    StreamReader::new(source)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "FALL")]
    Fall,
    #[serde(rename = "ADL")]
    Adl,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Fall => "FALL",
            Label::Adl => "ADL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipManifestEntry {
    pub clip_id: String,
    #[serde(rename = "path")]
    pub stream_path: PathBuf,
    pub label: Label,
    pub fps: f64,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Unreadable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid manifest: {0}")]
    Invalid(String),
}

/// Parses manifest JSON and checks per-entry invariants.
pub fn parse_manifest(text: &str) -> Result<Vec<ClipManifestEntry>, ManifestError> {
    let entries: Vec<ClipManifestEntry> =
        serde_json::from_str(text).map_err(|e| ManifestError::Invalid(e.to_string()))?;
    for e in &entries {
        if !(e.fps.is_finite() && e.fps > 0.0) {
            return Err(ManifestError::Invalid(format!(
                "clip {}: fps must be positive, got {}",
                e.clip_id, e.fps
            )));
        }
    }
    Ok(entries)
}

/// Loads a manifest file. Relative stream paths are resolved against the
/// manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ClipManifestEntry>, ManifestError> {
    let text = fs::read_to_string(path).map_err(|source| ManifestError::Unreadable {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = parse_manifest(&text)?;
    let base = path.parent().unwrap_or_else(|| Path::new(""));
    for e in &mut entries {
        if e.stream_path.is_relative() {
            e.stream_path = base.join(&e.stream_path);
        }
    }
    Ok(entries)
}
