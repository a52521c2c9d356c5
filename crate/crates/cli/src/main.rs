//! `falldet`: run the detector on landmark streams, score labeled clips and
//! sweep thresholds. Work runs in-process unless `--server` points at a
//! running `falldet-server`, in which case the same operations go over HTTP.

mod error;

use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use falldet::evaluation::{parse_replay, render_json, render_text, ReplayPrediction};
use falldet::sweep::{write_csv, Grid};
use falldet::synthetic::{standard_suite, write_suite};
use falldet::wire::{EvaluateRequest, SweepRequest};
use falldet::{
    compute_metrics, evaluate, evaluate_replay, load_manifest, run_reader, run_sweep, ClipManifestEntry,
    ConfusionMatrix, DetectorConfig, MetricsJson,
};
use falldet_client::Client;

use crate::error::{CliError, Kind};

/// Frames per request when streaming to a server.
const REMOTE_BATCH: usize = 2000;

#[derive(Debug, Parser)]
#[command(name = "falldet", version, about = "Pose-landmark fall detection")]
struct Cli {
    /// Base URL of a falldet-server to run against instead of in-process.
    #[arg(long, global = true, env = "FALLDET_SERVER")]
    server: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print one JSON record per fall event found in a landmark stream.
    Detect {
        /// JSONL landmark stream, or `-` for stdin.
        #[arg(long)]
        input: String,
        /// Key/value detector config file.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score a labeled manifest of clips.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the metrics as JSON here.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Score these precomputed predictions instead of running the detector.
        #[arg(long)]
        replay: Option<PathBuf>,
    },
    /// Evaluate a manifest at every point of a parameter grid, as CSV.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        /// e.g. `vote_threshold=3,4,5;buffer_len=10,20`
        #[arg(long)]
        grid: String,
        /// Base config the grid values are applied on top of.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Metrics for a confusion matrix given directly.
    Metrics {
        #[arg(long)]
        tp: u64,
        #[arg(long = "fn")]
        fn_: u64,
        #[arg(long)]
        fp: u64,
        #[arg(long)]
        tn: u64,
    },
    /// Write the scripted fall/ADL clips and their manifest.
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("falldet: {e}");
            e.kind.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let remote = cli.server.map(Client::new);
    match cli.command {
        Command::Detect { input, config } => {
            let cfg = load_config(config.as_deref())?;
            let source: Box<dyn BufRead> = if input == "-" {
                Box::new(io::stdin().lock())
            } else {
                let f = File::open(&input).map_err(|e| CliError::io(format!("cannot open {input}: {e}")))?;
                Box::new(BufReader::with_capacity(1 << 16, f))
            };
            let (frames, events) = match remote {
                Some(client) => block_on(detect_remote(&client, source, cfg))?,
                None => detect_local(source, &cfg)?,
            };
            eprintln!("{events} event(s) in {frames} frame(s)");
            Ok(())
        }
        Command::Evaluate {
            manifest,
            config,
            report,
            replay,
        } => {
            let cfg = load_config(config.as_deref())?;
            let entries = load_manifest(&manifest)?;
            let replay = replay.as_deref().map(read_replay).transpose()?;
            let metrics = match remote {
                Some(client) => {
                    let req = EvaluateRequest {
                        manifest: absolute(entries)?,
                        config: Some(cfg),
                        replay,
                    };
                    block_on(client.evaluate(&req))?.metrics
                }
                None => {
                    let ev = match &replay {
                        Some(r) => evaluate_replay(&entries, r)?,
                        None => evaluate(&entries, &cfg)?,
                    };
                    MetricsJson::new(&ev.metrics, &ev.matrix)
                }
            };
            let matrix = metrics.confusion();
            let full = compute_metrics(&matrix);
            print!("{}", render_text(&full, &matrix));
            if let Some(path) = report {
                fs::write(&path, render_json(&full, &matrix) + "\n")
                    .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))?;
            }
            Ok(())
        }
        Command::Sweep { manifest, grid, config } => {
            let base = load_config(config.as_deref())?;
            let grid_parsed = Grid::parse(&grid)?;
            let entries = load_manifest(&manifest)?;
            let rows = match remote {
                Some(client) => {
                    let req = SweepRequest {
                        manifest: absolute(entries)?,
                        config: Some(base),
                        grid,
                    };
                    block_on(client.sweep(&req))?.rows
                }
                None => run_sweep(&entries, &base, &grid_parsed)?,
            };
            write_csv(&rows, io::stdout().lock()).map_err(CliError::io)?;
            Ok(())
        }
        Command::Metrics { tp, fn_, fp, tn } => {
            let m = ConfusionMatrix::new(tp, fn_, fp, tn);
            let metrics = match remote {
                Some(client) => block_on(client.metrics(&m))?,
                None => MetricsJson::new(&compute_metrics(&m), &m),
            };
            println!("{}", serde_json::to_string(&metrics).expect("metrics always serialize"));
            Ok(())
        }
        Command::Synth { out_dir } => {
            let path = write_suite(&standard_suite(), &out_dir)
                .map_err(|e| CliError::io(format!("cannot write suite to {}: {e}", out_dir.display())))?;
            println!("{}", path.display());
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<DetectorConfig, CliError> {
    let Some(path) = path else {
        return Ok(DetectorConfig::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    DetectorConfig::from_kv_str(&text).map_err(|e| CliError::new(Kind::Config, format!("{}: {e}", path.display())))
}

fn read_replay(path: &Path) -> Result<Vec<ReplayPrediction>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read replay {}: {e}", path.display())))?;
    Ok(parse_replay(&text)?)
}

/// The server resolves paths on its side, so send them absolute.
fn absolute(entries: Vec<ClipManifestEntry>) -> Result<Vec<ClipManifestEntry>, CliError> {
    let cwd = std::env::current_dir()?;
    Ok(entries
        .into_iter()
        .map(|mut e| {
            if e.stream_path.is_relative() {
                e.stream_path = cwd.join(&e.stream_path);
            }
            e
        })
        .collect())
}

fn block_on<F: std::future::Future>(fut: F) -> F::Output {
    tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime")
        .block_on(fut)
}

/// Events are flushed as they are found so the output can be piped live.
fn detect_local(source: Box<dyn BufRead>, cfg: &DetectorConfig) -> Result<(u64, u64), CliError> {
    let mut out = BufWriter::new(io::stdout().lock());
    let mut events = 0u64;
    let mut write_err = None;
    let result = run_reader(source, cfg, |e| {
        events += 1;
        if write_err.is_none() {
            if let Err(err) = writeln!(out, "{}", e.record_line()).and_then(|_| out.flush()) {
                write_err = Some(err);
            }
        }
    });
    if let Some(e) = write_err {
        return Err(e.into());
    }
    let frames = result?;
    out.flush()?;
    Ok((frames, events))
}

async fn detect_remote(
    client: &Client,
    source: Box<dyn BufRead>,
    cfg: DetectorConfig,
) -> Result<(u64, u64), CliError> {
    cfg.validate()?;
    let session = client.create_session(Some(cfg)).await?;
    let result = stream_to_session(client, &session.session_id, source).await;
    let _ = client.delete_session(&session.session_id).await;
    result
}

async fn stream_to_session(client: &Client, id: &str, source: Box<dyn BufRead>) -> Result<(u64, u64), CliError> {
    let mut out = io::stdout().lock();
    let mut lines = source.lines();
    let (mut frames, mut events) = (0u64, 0u64);
    loop {
        let mut batch = String::new();
        let mut n = 0;
        for line in lines.by_ref() {
            let line = line?;
            batch.push_str(&line);
            batch.push('\n');
            n += 1;
            if n == REMOTE_BATCH {
                break;
            }
        }
        if n == 0 {
            return Ok((frames, events));
        }
        let reply = client.push_frames(id, batch).await?;
        frames = reply.frames_processed;
        for e in &reply.events {
            writeln!(out, "{}", serde_json::to_string(e).expect("event records always serialize"))?;
            events += 1;
        }
        out.flush()?;
    }
}
