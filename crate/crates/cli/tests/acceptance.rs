//! Acceptance checks, one PASS/FAIL line each. Exits non-zero if any fails.

use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use falldet::detector::{weighted_vote, Firings};
use falldet::features::{angle_between, height_ratio, Vec2};
use falldet::synthetic::{poses, standard_suite, write_stream, write_suite, Script, Skeleton};
use falldet::{
    compute_metrics, confusion, parse_frame_line, run_reader, run_stream, write_frame_line, Calibration,
    ClipManifestEntry, ConfusionMatrix, Detector, DetectorConfig, IndicatorBuffer, Label, Landmark, PoseFrame,
    VisibilityGate,
};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn falldet(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_falldet"))
        .args(args)
        .env_remove("FALLDET_SERVER")
        .stdin(Stdio::null())
        .output()
        .expect("run falldet")
}

fn ms(d: Duration) -> String {
    format!("{:.1} ms", d.as_secs_f64() * 1e3)
}

fn metric_reproduction() -> Outcome {
    let start = Instant::now();
    let r = compute_metrics(&ConfusionMatrix::new(75, 1, 10, 44));
    let checks = [
        ("accuracy", r.accuracy, 0.9154),
        ("precision", r.precision, 0.8824),
        ("recall", r.recall, 0.9868),
        ("specificity", r.specificity, 0.8148),
        ("f1", r.f1, 0.9317),
    ];
    let bad: Vec<String> = checks
        .iter()
        .filter(|(_, got, want)| !got.is_some_and(|g| (g - want).abs() <= 1e-4))
        .map(|(name, got, want)| format!("{name}={got:?} want {want}"))
        .collect();
    let elapsed = start.elapsed();
    let detail = checks
        .iter()
        .map(|(n, g, _)| format!("{n}={:.4}", g.unwrap_or(f64::NAN)))
        .collect::<Vec<_>>()
        .join(" ");
    if bad.is_empty() {
        outcome(true, format!("{detail} ({})", ms(elapsed)))
    } else {
        outcome(false, bad.join(", "))
    }
}

fn end_to_end_report(dir: &Path) -> Outcome {
    let manifest = match write_suite(&standard_suite(), &dir.join("e2e")) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let report = dir.join("e2e_report.json");
    let o = falldet(&["evaluate", "--manifest", manifest.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    let json = std::fs::read_to_string(&report).unwrap_or_default();
    let parsed: Option<serde_json::Value> = serde_json::from_str(&json).ok();
    let has_keys = parsed.as_ref().is_some_and(|v| {
        ["tp", "fn", "fp", "tn", "accuracy", "precision", "recall", "specificity", "f1"]
            .iter()
            .all(|k| v.get(k).is_some())
    });
    let ok = o.status.success() && has_keys && String::from_utf8_lossy(&o.stdout).contains("clips evaluated");
    outcome(
        ok,
        "evaluate ran end to end and wrote a JSON report; the recorded dataset is not available here, so it ran on on-disk landmark streams",
    )
}

fn synthetic_suite(dir: &Path) -> Outcome {
    let start = Instant::now();
    let manifest = match write_suite(&standard_suite(), &dir.join("suite")) {
        Ok(p) => p,
        Err(e) => return outcome(false, e.to_string()),
    };
    let report = dir.join("suite_report.json");
    let o = falldet(&["evaluate", "--manifest", manifest.to_str().unwrap(), "--report", report.to_str().unwrap()]);
    let elapsed = start.elapsed();
    let v: serde_json::Value = match std::fs::read_to_string(&report).ok().and_then(|t| serde_json::from_str(&t).ok()) {
        Some(v) if o.status.success() => v,
        _ => return outcome(false, String::from_utf8_lossy(&o.stderr).into_owned()),
    };
    let got = [&v["tp"], &v["fn"], &v["fp"], &v["tn"]].map(|x| x.as_u64().unwrap_or(u64::MAX));
    let falls = standard_suite().iter().filter(|c| c.label == Label::Fall).count();
    let ok = got == [6, 0, 0, 6] && falls >= 6 && elapsed < Duration::from_secs(5);
    outcome(ok, format!("confusion {got:?} over 12 clips in {}", ms(elapsed)))
}

fn oracle_equivalence() -> Outcome {
    const SEQUENCES: usize = 120;
    const FRAMES: usize = 1000;
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xfa11);
    let mut mismatches = 0usize;
    for _ in 0..SEQUENCES {
        let cap = rng.random_range(1..=40usize);
        let p = rng.random_range(0.05..0.95f64);
        let seq: Vec<bool> = (0..FRAMES).map(|_| rng.random_bool(p)).collect();
        let mut buf = IndicatorBuffer::new(cap);
        for (t, &fired) in seq.iter().enumerate() {
            buf.push(fired);
            let lo = (t + 1).saturating_sub(cap);
            let window = &seq[lo..=t];
            let brute = window.iter().filter(|&&b| b).count();
            let contents: Vec<bool> = buf.iter().collect();
            if buf.fire_count() != brute || buf.len() != window.len() || contents != window {
                mismatches += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{SEQUENCES} sequences x {FRAMES} frames, {mismatches} mismatching frames, {}", ms(elapsed)),
    )
}

fn arb_pose() -> impl Strategy<Value = Skeleton> {
    prop_oneof![
        Just(poses::standing()),
        Just(poses::sitting()),
        Just(poses::bending()),
        Just(poses::crouching()),
        Just(poses::lying_curled()),
        Just(poses::lying_supine()),
        Just(poses::lying_side()),
        Just(poses::lying_prone()),
    ]
}

/// Random pose scripts: holds, transitions and gaps with no person.
fn arb_script() -> impl Strategy<Value = Vec<PoseFrame>> {
    (
        prop::collection::vec((arb_pose(), 1usize..8, 1usize..90, 0u8..10), 1..8),
        any::<u64>(),
    )
        .prop_map(|(segments, seed)| {
            let mut script = Script::new(30.0, poses::standing()).hold(12);
            for (pose, transition, hold, roll) in segments {
                script = if roll == 0 {
                    script.absent(hold)
                } else {
                    script.move_to(pose, transition).hold(hold)
                };
            }
            script.jitter(0.003, seed).render()
        })
}

fn arb_landmark() -> impl Strategy<Value = Landmark> {
    (-0.5..1.5f64, -0.5..1.5f64, -3.0..3.0f64, 0.0..=1.0f64).prop_map(|(x, y, z, v)| Landmark::new(x, y, z, v))
}

fn arb_frame() -> impl Strategy<Value = PoseFrame> {
    (0u64..10_000_000, 0.0..1e6f64, prop::collection::vec(arb_landmark(), 33)).prop_map(|(i, t, lms)| {
        let mut arr = [Landmark::ZERO; 33];
        arr.copy_from_slice(&lms);
        PoseFrame::new(i, t, arr).unwrap()
    })
}

fn arb_vec() -> impl Strategy<Value = Vec2> {
    (-10.0..10.0f64, -10.0..10.0f64)
        .prop_map(|(x, y)| Vec2::new(x, y))
        .prop_filter("non-degenerate", |v| v.norm() > 1e-3)
}

fn check<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let mut runner = TestRunner::new(Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    });
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn event_lines(events: &[falldet::FallEvent]) -> Vec<String> {
    events.iter().map(|e| e.record_line()).collect()
}

fn property_suite(dir: &Path) -> Outcome {
    let start = Instant::now();
    let mut results: Vec<(&str, Result<(), String>)> = Vec::new();

    results.push((
        "angle symmetry/scale/range",
        check(2000, (arb_vec(), arb_vec(), 0.01..100.0f64, 0.01..100.0f64), |(a, b, k, m)| {
            let ab = angle_between(a, b).unwrap();
            let ba = angle_between(b, a).unwrap();
            let scaled = angle_between(a * k, b * m).unwrap();
            prop_assert!((0.0..=180.0).contains(&ab));
            prop_assert!((ab - ba).abs() < 1e-9);
            prop_assert!((ab - scaled).abs() < 1e-6, "{ab} vs {scaled}");
            Ok(())
        }),
    ));

    results.push((
        "height_ratio translation invariance",
        check(1000, (arb_pose(), arb_pose(), 0.0..1.0f64, -0.3..0.3f64, -0.3..0.3f64), |(p, q, s, dx, dy)| {
            let sk = p.lerp(&q, s);
            let cal = Calibration::fixed(0.27, 1.0);
            let gate = VisibilityGate::default();
            let a = PoseFrame::new(0, 0.0, sk.landmarks(0.0)).unwrap();
            let b = PoseFrame::new(0, 0.0, sk.translated(dx, dy).landmarks(0.0)).unwrap();
            match (height_ratio(&a, &cal, gate), height_ratio(&b, &cal, gate)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-9),
                (x, y) => prop_assert_eq!(x.is_some(), y.is_some()),
            }
            Ok(())
        }),
    ));

    results.push((
        "streaming/batch equivalence",
        check(64, arb_script(), |frames| {
            let cfg = DetectorConfig::default();
            let batch = event_lines(&run_stream(frames.clone(), &cfg).unwrap());
            let text: String = frames.iter().map(|f| write_frame_line(f) + "\n").collect();
            let mut streamed = Vec::new();
            run_reader(text.as_bytes(), &cfg, |e| streamed.push(e.record_line())).unwrap();
            prop_assert_eq!(batch, streamed);
            Ok(())
        }),
    ));

    results.push(("determinism", determinism(dir)));

    results.push((
        "cooldown separation and calibration gate",
        check(64, (arb_script(), 1u64..120, 1usize..30, 2.0..6.0f64), |(frames, cooldown, warmup, threshold)| {
            let cfg = DetectorConfig {
                cooldown_frames: cooldown,
                warmup_frames: warmup,
                vote_threshold: threshold,
                ..Default::default()
            };
            let mut det = Detector::new(cfg).unwrap();
            let mut last: Option<u64> = None;
            for f in frames {
                let out = det.update(f).unwrap();
                if let Some(e) = out.event {
                    prop_assert!(det.calibration().is_calibrated());
                    if let Some(prev) = last {
                        prop_assert!(e.frame_index - prev >= cooldown, "{prev} -> {}", e.frame_index);
                    }
                    last = Some(e.frame_index);
                }
            }
            Ok(())
        }),
    ));

    results.push((
        "vote monotonicity",
        check(2000, (any::<[bool; 6]>(), prop::array::uniform6(0.0..5.0f64), 0usize..6), |(active, weights, i)| {
            let mut flipped: Firings = active;
            flipped[i] = true;
            prop_assert!(weighted_vote(&flipped, &weights) >= weighted_vote(&active, &weights));
            Ok(())
        }),
    ));

    results.push((
        "metrics permutation invariance",
        check(500, (prop::collection::vec((any::<bool>(), any::<bool>()), 0..80), any::<u64>()), |(pairs, seed)| {
            let label = |b: bool| if b { Label::Fall } else { Label::Adl };
            let manifest: Vec<ClipManifestEntry> = pairs
                .iter()
                .enumerate()
                .map(|(i, (a, _))| ClipManifestEntry {
                    clip_id: format!("c{i}"),
                    stream_path: format!("c{i}.jsonl").into(),
                    label: label(*a),
                    fps: 30.0,
                })
                .collect();
            let preds: Vec<(String, Label)> = pairs.iter().enumerate().map(|(i, (_, p))| (format!("c{i}"), label(*p))).collect();
            let mut shuffled = preds.clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for i in (1..shuffled.len()).rev() {
                shuffled.swap(i, rng.random_range(0..=i));
            }
            let a = confusion(preds.iter().map(|(c, l)| (c.as_str(), *l)), &manifest).unwrap();
            let b = confusion(shuffled.iter().map(|(c, l)| (c.as_str(), *l)), &manifest).unwrap();
            prop_assert_eq!(a, b);
            prop_assert_eq!(compute_metrics(&a), compute_metrics(&b));
            Ok(())
        }),
    ));

    results.push((
        "JSONL round trip",
        check(2000, arb_frame(), |f| {
            let back = parse_frame_line(&write_frame_line(&f)).unwrap();
            prop_assert_eq!(back.frame_index(), f.frame_index());
            prop_assert!((back.timestamp_s() - f.timestamp_s()).abs() <= 1e-9);
            for (p, q) in f.landmarks().iter().zip(back.landmarks()) {
                let d = [(p.x - q.x), (p.y - q.y), (p.z - q.z), (p.visibility - q.visibility)];
                prop_assert!(d.iter().all(|x| x.abs() <= 1e-9));
            }
            Ok(())
        }),
    ));

    let failed: Vec<String> = results
        .iter()
        .filter_map(|(name, r)| r.as_ref().err().map(|e| format!("{name}: {e}")))
        .collect();
    let elapsed = start.elapsed();
    if failed.is_empty() {
        outcome(true, format!("{} properties held ({})", results.len(), ms(elapsed)))
    } else {
        outcome(false, failed.join("; "))
    }
}

/// Same inputs twice through the binary must give the same bytes.
fn determinism(dir: &Path) -> Result<(), String> {
    let manifest = write_suite(&standard_suite(), &dir.join("det")).map_err(|e| e.to_string())?;
    let m = manifest.to_str().unwrap();
    let stream = dir.join("det").join("fall_after_walking.jsonl");
    let runs: Vec<Vec<u8>> = (0..2)
        .map(|_| {
            let mut out = falldet(&["detect", "--input", stream.to_str().unwrap()]).stdout;
            out.extend(falldet(&["evaluate", "--manifest", m]).stdout);
            out.extend(falldet(&["sweep", "--manifest", m, "--grid", "vote_threshold=3,4,5;buffer_len=10,20"]).stdout);
            out
        })
        .collect();
    if runs[0].is_empty() {
        return Err("no output".into());
    }
    if runs[0] != runs[1] {
        return Err("reruns differ".into());
    }
    Ok(())
}

fn throughput(dir: &Path) -> Outcome {
    const FRAMES: usize = 100_000;
    let mut script = Script::new(30.0, poses::standing());
    let cycle = [poses::standing(), poses::sitting(), poses::standing(), poses::lying_side(), poses::crouching()];
    while script.frame_count() < FRAMES {
        for pose in &cycle {
            script = script.walk_to(*pose, 20).hold(80);
        }
    }
    let mut frames = script.jitter(0.002, 7).render();
    frames.truncate(FRAMES);
    let path = dir.join("long.jsonl");
    let file = std::io::BufWriter::new(std::fs::File::create(&path).unwrap());
    write_stream(&frames, file).unwrap();

    let start = Instant::now();
    let o = falldet(&["detect", "--input", path.to_str().unwrap()]);
    let elapsed = start.elapsed();
    let fps = FRAMES as f64 / elapsed.as_secs_f64();
    let events = String::from_utf8_lossy(&o.stdout).lines().count();
    outcome(
        o.status.success() && fps >= 1000.0,
        format!("{FRAMES} frames in {} = {fps:.0} frames/s, single thread, {events} events", ms(elapsed)),
    )
}

fn main() {
    // libtest passes flags such as --nocapture or a filter; none apply here.
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<(&str, Outcome)> = vec![
        ("metric reproduction from the published confusion matrix", metric_reproduction()),
        ("end-to-end evaluate produces a report", end_to_end_report(dir.path())),
        ("synthetic trajectory suite scores {6,0,0,6} in < 5 s", synthetic_suite(dir.path())),
        ("incremental buffer matches brute-force windows", oracle_equivalence()),
        ("property suite", property_suite(dir.path())),
        ("detect throughput >= 1000 frames/s on 100k frames", throughput(dir.path())),
    ];
    let mut failures = 0;
    for (name, o) in &criteria {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failures += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
