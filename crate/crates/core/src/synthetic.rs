//! Scripted landmark trajectories.
//!
//! A [`Script`] strings together holds, interpolated moves, walking and
//! absent-person stretches over a handful of key poses, and renders them into
//! a dense stream of [`PoseFrame`]s. [`standard_suite`] is the labelled
//! twelve-clip corpus used by the evaluation tests and the `synth` command.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::Vec2;
use crate::pose::{write_frame_line, ClipManifestEntry, Label, Landmark, LandmarkIndex, PoseFrame, NUM_LANDMARKS};

/// Body midpoints of one pose plus per-side visibility.
///
/// Left and right landmarks are placed symmetrically about the midpoints, so
/// every bilateral feature sees exactly these points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Skeleton {
    pub nose: Vec2,
    pub shoulder: Vec2,
    pub hip: Vec2,
    pub knee: Vec2,
    pub ankle: Vec2,
    pub left_visibility: f64,
    pub right_visibility: f64,
}

const SHOULDER_HALF_WIDTH: f64 = 0.05;
const HIP_HALF_WIDTH: f64 = 0.04;
const LEG_HALF_WIDTH: f64 = 0.035;

impl Skeleton {
    pub fn new(nose: (f64, f64), shoulder: (f64, f64), hip: (f64, f64), knee: (f64, f64), ankle: (f64, f64)) -> Self {
        let v = |(x, y): (f64, f64)| Vec2::new(x, y);
        Skeleton {
            nose: v(nose),
            shoulder: v(shoulder),
            hip: v(hip),
            knee: v(knee),
            ankle: v(ankle),
            left_visibility: 0.95,
            right_visibility: 0.95,
        }
    }

    pub fn translated(mut self, dx: f64, dy: f64) -> Self {
        let d = Vec2::new(dx, dy);
        for p in [&mut self.nose, &mut self.shoulder, &mut self.hip, &mut self.knee, &mut self.ankle] {
            *p = *p + d;
        }
        self
    }

    pub fn with_visibility(mut self, left: f64, right: f64) -> Self {
        self.left_visibility = left;
        self.right_visibility = right;
        self
    }

    pub fn lerp(&self, to: &Skeleton, s: f64) -> Skeleton {
        let l = |a: Vec2, b: Vec2| a + (b - a) * s;
        let f = |a: f64, b: f64| a + (b - a) * s;
        Skeleton {
            nose: l(self.nose, to.nose),
            shoulder: l(self.shoulder, to.shoulder),
            hip: l(self.hip, to.hip),
            knee: l(self.knee, to.knee),
            ankle: l(self.ankle, to.ankle),
            left_visibility: f(self.left_visibility, to.left_visibility),
            right_visibility: f(self.right_visibility, to.right_visibility),
        }
    }

    /// Full 33-point landmark set. `swing` displaces the legs in opposite
    /// directions, as in a walking gait.
    pub fn landmarks(&self, swing: f64) -> [Landmark; NUM_LANDMARKS] {
        use LandmarkIndex::*;
        let (lv, rv) = (self.left_visibility, self.right_visibility);
        let cv = lv.max(rv);
        let mut out = [Landmark::ZERO; NUM_LANDMARKS];
        let mut put = |idx: LandmarkIndex, p: Vec2, vis: f64| {
            out[idx.index()] = Landmark::new(p.x, p.y, 0.0, vis);
        };
        let side = |mid: Vec2, half: f64| (mid + Vec2::new(half, 0.0), mid - Vec2::new(half, 0.0));

        let n = self.nose;
        put(Nose, n, cv);
        put(LeftEyeInner, n + Vec2::new(0.008, -0.012), lv);
        put(LeftEye, n + Vec2::new(0.014, -0.013), lv);
        put(LeftEyeOuter, n + Vec2::new(0.020, -0.012), lv);
        put(RightEyeInner, n + Vec2::new(-0.008, -0.012), rv);
        put(RightEye, n + Vec2::new(-0.014, -0.013), rv);
        put(RightEyeOuter, n + Vec2::new(-0.020, -0.012), rv);
        put(LeftEar, n + Vec2::new(0.035, -0.005), lv);
        put(RightEar, n + Vec2::new(-0.035, -0.005), rv);
        put(MouthLeft, n + Vec2::new(0.010, 0.015), lv);
        put(MouthRight, n + Vec2::new(-0.010, 0.015), rv);

        let (ls, rs) = side(self.shoulder, SHOULDER_HALF_WIDTH);
        let (lh, rh) = side(self.hip, HIP_HALF_WIDTH);
        put(LeftShoulder, ls, lv);
        put(RightShoulder, rs, rv);
        put(LeftHip, lh, lv);
        put(RightHip, rh, rv);

        // arms hang along the torso
        let arm = |s: Vec2, h: Vec2, k: f64| s + (h - s) * k;
        put(LeftElbow, arm(ls, lh, 0.5) + Vec2::new(0.02, 0.0), lv);
        put(RightElbow, arm(rs, rh, 0.5) - Vec2::new(0.02, 0.0), rv);
        let (lw, rw) = (arm(ls, lh, 0.95), arm(rs, rh, 0.95));
        put(LeftWrist, lw, lv);
        put(RightWrist, rw, rv);
        for (idx, base, dx, vis) in [
            (LeftPinky, lw, 0.010, lv),
            (LeftIndex, lw, 0.005, lv),
            (LeftThumb, lw, -0.005, lv),
            (RightPinky, rw, -0.010, rv),
            (RightIndex, rw, -0.005, rv),
            (RightThumb, rw, 0.005, rv),
        ] {
            put(idx, base + Vec2::new(dx, 0.015), vis);
        }

        let sw = Vec2::new(swing, 0.0);
        let (lk, rk) = side(self.knee, LEG_HALF_WIDTH);
        let (la, ra) = side(self.ankle, LEG_HALF_WIDTH);
        put(LeftKnee, lk + sw * 0.5, lv);
        put(RightKnee, rk - sw * 0.5, rv);
        let (la, ra) = (la + sw, ra - sw);
        put(LeftAnkle, la, lv);
        put(RightAnkle, ra, rv);
        put(LeftHeel, la + Vec2::new(-0.01, 0.01), lv);
        put(RightHeel, ra + Vec2::new(0.01, 0.01), rv);
        put(LeftFootIndex, la + Vec2::new(0.03, 0.015), lv);
        put(RightFootIndex, ra + Vec2::new(0.03, 0.015), rv);
        out
    }
}

/// Key poses. Midpoint coordinates; torso (shoulder-hip) length noted where
/// it matters for the height ratio.
pub mod poses {
    use super::Skeleton;

    /// Upright, torso 0.27.
    pub fn standing() -> Skeleton {
        Skeleton::new((0.50, 0.20), (0.50, 0.35), (0.50, 0.62), (0.50, 0.78), (0.50, 0.95))
    }

    /// On a chair: thighs horizontal, torso 0.23.
    pub fn sitting() -> Skeleton {
        Skeleton::new((0.50, 0.33), (0.50, 0.47), (0.50, 0.70), (0.62, 0.70), (0.62, 0.93))
    }

    /// Deep forward bend at the hips, head below the shoulder line.
    pub fn bending() -> Skeleton {
        Skeleton::new((0.72, 0.58), (0.63, 0.52), (0.50, 0.62), (0.50, 0.78), (0.50, 0.95))
    }

    /// Squat with thighs forward.
    pub fn crouching() -> Skeleton {
        Skeleton::new((0.55, 0.42), (0.53, 0.55), (0.50, 0.78), (0.61, 0.76), (0.58, 0.95))
    }

    /// Curled on the floor, torso foreshortened to about 0.122.
    pub fn lying_curled() -> Skeleton {
        Skeleton::new((0.30, 0.90), (0.40, 0.86), (0.52, 0.88), (0.54, 0.76), (0.66, 0.80))
    }

    /// On the back with knees raised.
    pub fn lying_supine() -> Skeleton {
        Skeleton::new((0.72, 0.89), (0.64, 0.87), (0.46, 0.90), (0.40, 0.76), (0.30, 0.84))
    }

    /// On the side, legs slightly bent.
    pub fn lying_side() -> Skeleton {
        Skeleton::new((0.25, 0.88), (0.33, 0.87), (0.50, 0.89), (0.56, 0.77), (0.70, 0.83))
    }

    /// Face down and stretched out, pointing away from the camera.
    pub fn lying_prone() -> Skeleton {
        Skeleton::new((0.38, 0.87), (0.45, 0.85), (0.55, 0.87), (0.63, 0.86), (0.72, 0.88))
    }
}

#[derive(Debug, Clone)]
enum Segment {
    Hold(usize),
    Move { to: Skeleton, frames: usize, gait: bool },
    Absent(usize),
}

/// A sequence of pose segments rendered at a fixed frame rate.
#[derive(Debug, Clone)]
pub struct Script {
    fps: f64,
    start: Skeleton,
    segments: Vec<Segment>,
    jitter: f64,
    seed: u64,
}

impl Script {
    pub fn new(fps: f64, start: Skeleton) -> Self {
        Script {
            fps,
            start,
            segments: Vec::new(),
            jitter: 0.0,
            seed: 0,
        }
    }

    pub fn hold(mut self, frames: usize) -> Self {
        self.segments.push(Segment::Hold(frames));
        self
    }

    /// Linear interpolation to `to`; the last frame of the move is exactly `to`.
    pub fn move_to(mut self, to: Skeleton, frames: usize) -> Self {
        self.segments.push(Segment::Move { to, frames, gait: false });
        self
    }

    pub fn walk_to(mut self, to: Skeleton, frames: usize) -> Self {
        self.segments.push(Segment::Move { to, frames, gait: true });
        self
    }

    pub fn absent(mut self, frames: usize) -> Self {
        self.segments.push(Segment::Absent(frames));
        self
    }

    /// Uniform noise of +/- `amplitude` on every coordinate, reproducible from `seed`.
    pub fn jitter(mut self, amplitude: f64, seed: u64) -> Self {
        self.jitter = amplitude;
        self.seed = seed;
        self
    }

    pub fn frame_count(&self) -> usize {
        self.segments
            .iter()
            .map(|s| match s {
                Segment::Hold(n) | Segment::Absent(n) => *n,
                Segment::Move { frames, .. } => *frames,
            })
            .sum()
    }

    pub fn render(&self) -> Vec<PoseFrame> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.frame_count());
        let mut current = self.start;
        let mut stride_phase = 0.0f64;
        let mut emit = |skel: Option<(&Skeleton, f64)>, out: &mut Vec<PoseFrame>| {
            let idx = out.len() as u64;
            let t = idx as f64 / self.fps;
            let frame = match skel {
                None => PoseFrame::absent(idx, t),
                Some((s, swing)) => {
                    let mut lms = s.landmarks(swing);
                    if self.jitter > 0.0 {
                        for lm in lms.iter_mut() {
                            lm.x += rng.random_range(-self.jitter..=self.jitter);
                            lm.y += rng.random_range(-self.jitter..=self.jitter);
                        }
                    }
                    PoseFrame::new(idx, t, lms)
                }
            };
            out.push(frame.expect("scripted frames are well formed"));
        };
        for seg in &self.segments {
            match seg {
                Segment::Hold(n) => {
                    for _ in 0..*n {
                        emit(Some((&current, 0.0)), &mut out);
                    }
                }
                Segment::Absent(n) => {
                    for _ in 0..*n {
                        emit(None, &mut out);
                    }
                }
                Segment::Move { to, frames, gait } => {
                    let from = current;
                    for k in 1..=*frames {
                        let s = k as f64 / *frames as f64;
                        let skel = from.lerp(to, s);
                        let swing = if *gait {
                            stride_phase += std::f64::consts::PI / 15.0;
                            0.04 * stride_phase.sin()
                        } else {
                            0.0
                        };
                        emit(Some((&skel, swing)), &mut out);
                    }
                    current = *to;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticClip {
    pub clip_id: String,
    pub label: Label,
    pub fps: f64,
    pub frames: Vec<PoseFrame>,
}

pub const SUITE_FPS: f64 = 30.0;
const SUITE_JITTER: f64 = 0.002;

/// Six fall scripts and six everyday-activity scripts, 30 fps.
///
/// Each fall ends in a floor pose that fires at least four indicators and is
/// held well past the persistence window. Each everyday script either stays
/// below four simultaneous indicators or fires for fewer frames than the
/// persistence requirement.
pub fn standard_suite() -> Vec<SyntheticClip> {
    use poses::*;
    let occluded = |s: Skeleton| s.with_visibility(0.95, 0.2);
    let scripts: Vec<(&str, Label, Script)> = vec![
        (
            "fall_forward_curled",
            Label::Fall,
            Script::new(SUITE_FPS, standing()).hold(40).move_to(lying_curled(), 6).hold(60),
        ),
        (
            "fall_backward",
            Label::Fall,
            Script::new(SUITE_FPS, standing()).hold(40).move_to(lying_supine(), 8).hold(60),
        ),
        (
            "fall_sideways",
            Label::Fall,
            Script::new(SUITE_FPS, standing()).hold(40).move_to(lying_side(), 5).hold(60),
        ),
        (
            "fall_after_walking",
            Label::Fall,
            Script::new(SUITE_FPS, standing())
                .hold(15)
                .walk_to(standing().translated(0.12, 0.0), 45)
                .move_to(lying_prone(), 6)
                .hold(60),
        ),
        (
            "fall_right_side_occluded",
            Label::Fall,
            Script::new(SUITE_FPS, occluded(standing()))
                .hold(40)
                .move_to(occluded(lying_curled()), 7)
                .hold(60),
        ),
        (
            "fall_slow_collapse",
            Label::Fall,
            Script::new(SUITE_FPS, standing()).hold(40).move_to(lying_side(), 15).hold(60),
        ),
        (
            "adl_sit_down",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(40)
                .move_to(sitting(), 20)
                .hold(80)
                .move_to(standing(), 20)
                .hold(20),
        ),
        (
            "adl_bend_over",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(40)
                .move_to(bending(), 15)
                .hold(60)
                .move_to(standing(), 15)
                .hold(20),
        ),
        (
            "adl_walk",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(20)
                .walk_to(standing().translated(0.25, 0.0), 60)
                .walk_to(standing().translated(-0.15, 0.0), 90)
                .hold(10),
        ),
        (
            "adl_crouch",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(40)
                .move_to(crouching(), 15)
                .hold(60)
                .move_to(standing(), 15)
                .hold(20),
        ),
        (
            "adl_stumble_recover",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(40)
                .move_to(lying_curled(), 3)
                .hold(2)
                .move_to(standing(), 3)
                .hold(60),
        ),
        (
            "adl_leave_camera",
            Label::Adl,
            Script::new(SUITE_FPS, standing())
                .hold(30)
                .walk_to(standing().translated(0.6, 0.0).with_visibility(0.3, 0.3), 40)
                .absent(60),
        ),
    ];
    scripts
        .into_iter()
        .enumerate()
        .map(|(i, (id, label, script))| SyntheticClip {
            clip_id: id.to_string(),
            label,
            fps: SUITE_FPS,
            frames: script.jitter(SUITE_JITTER, 0x5eed + i as u64).render(),
        })
        .collect()
}

pub fn write_stream<W: Write>(frames: &[PoseFrame], mut out: W) -> io::Result<()> {
    for f in frames {
        out.write_all(write_frame_line(f).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Writes one `<clip_id>.jsonl` per clip plus `manifest.json` (with relative
/// paths) into `dir`. Returns the manifest path.
pub fn write_suite(clips: &[SyntheticClip], dir: &Path) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = Vec::with_capacity(clips.len());
    for c in clips {
        let name = format!("{}.jsonl", c.clip_id);
        let file = fs::File::create(dir.join(&name))?;
        write_stream(&c.frames, io::BufWriter::new(file))?;
        manifest.push(ClipManifestEntry {
            clip_id: c.clip_id.clone(),
            stream_path: PathBuf::from(name),
            label: c.label,
            fps: c.fps,
        });
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
    fs::write(&path, text + "\n")?;
    Ok(path)
}
