use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lbt_core::config::{DetectorKind, Overrides, RunConfig};
use lbt_core::harness::{self, Inputs};
use lbt_core::io::{self, ground_truth_to_records, histories_from_records, histories_to_records, parse_mot_file};
use lbt_core::metrics::clear_mot;
use lbt_core::simulator::generate_scene_seeded;
use lbt_core::tracker::TrackerMode;
use lbt_core::Error;

#[derive(Parser)]
#[command(name = "lbt", version, about = "Localization-based multi-object tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic scene and write its ground truth.
    Simulate(Common),
    /// Track one sequence and write the result plus a per-frame timing log.
    Track(Common),
    /// Score a result file against ground truth.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Result file to score.
        #[arg(long)]
        hyp: PathBuf,
        /// Sequence length when ground truth ends before the last result frame.
        #[arg(long)]
        frames: Option<usize>,
    },
    /// Run every configured d and tabulate speed and accuracy.
    Sweep(Common),
    /// Measure wall-clock throughput per d.
    Bench(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Frames between detections.
    #[arg(long)]
    d: Option<usize>,
    /// Crop expansion ratio.
    #[arg(long)]
    beta: Option<f64>,
    /// Localizer input side in pixels.
    #[arg(long)]
    localizer_size: Option<f64>,
    /// Base tracker.
    #[arg(long, value_parser = parse_mode)]
    tracker: Option<TrackerMode>,
    #[arg(long, value_enum)]
    detector: Option<DetectorKind>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth MOT file (instead of a simulated scene).
    #[arg(long)]
    gt: Option<PathBuf>,
    /// Detection MOT file for the file detector.
    #[arg(long)]
    detections: Option<PathBuf>,
}

fn parse_mode(s: &str) -> Result<TrackerMode, String> {
    s.parse::<TrackerMode>().map_err(|e| e.to_string())
}

impl Common {
    fn resolve(&self) -> Result<RunConfig, Error> {
        let overrides = Overrides {
            d: self.d,
            beta: self.beta,
            localizer_size: self.localizer_size,
            tracker: self.tracker,
            detector: self.detector,
            seed: self.seed,
            out: self.out.clone(),
        };
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(p) = &self.gt {
            cfg.run.gt = Some(p.clone());
        }
        if let Some(p) = &self.detections {
            cfg.run.detections = Some(p.clone());
        }
        cfg.apply(&overrides);
        cfg.validate()?;
        Ok(cfg)
    }
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), Error> {
    match out {
        Some(p) => std::fs::write(p, text)
            .map_err(|source| Error::Output(io::IoError::Io { path: p.to_path_buf(), source })),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// `dir/name.ext` -> `dir/name.timing.csv`
fn timing_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.timing.csv"))
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Simulate(c) => {
            let cfg = c.resolve()?;
            let gt = generate_scene_seeded(&cfg.scene);
            emit(cfg.run.out.as_deref(), &io::format_mot(&ground_truth_to_records(&gt)))
        }
        Command::Track(c) => {
            let cfg = c.resolve()?;
            let inputs = Inputs::load(&cfg)?;
            let run = harness::track(&cfg, &inputs, &cfg.lbt, &cfg.tracker)?;
            let out = cfg.run.out.as_deref();
            emit(out, &io::format_mot(&histories_to_records(&run.histories)))?;
            match out {
                Some(p) => emit(Some(&timing_path(p)), &harness::timing_csv(&run.timing)),
                None => {
                    let fps = harness::simulated_fps(&run.timing, &cfg.cost);
                    eprintln!("{} frames, simulated {:.2} FPS, wall {:.1} FPS", run.timing.len(), fps, harness::wall_fps(&run.timing));
                    Ok(())
                }
            }
        }
        Command::Eval { common, hyp, frames } => {
            let cfg = common.resolve()?;
            let gt_path = cfg.run.gt.clone().ok_or_else(|| Error::Config("eval needs --gt".into()))?;
            let gt_recs = parse_mot_file(&gt_path).map_err(Error::Input)?;
            let gt = io::ground_truth_from_records(&gt_recs, cfg.scene.dims(), frames).map_err(Error::Input)?;
            let hyp = histories_from_records(&parse_mot_file(&hyp).map_err(Error::Input)?).map_err(Error::Input)?;
            let report = clear_mot(&gt, &hyp, cfg.run.match_iou)?;
            emit(cfg.run.out.as_deref(), &report.to_csv())
        }
        Command::Sweep(c) => {
            let cfg = c.resolve()?;
            let inputs = Inputs::load(&cfg)?;
            let rows = harness::sweep(&cfg, &inputs)?;
            let table = harness::sweep_table(&rows);
            let timing = harness::sweep_timing_table(&rows);
            match cfg.run.out.as_deref() {
                Some(p) => {
                    emit(Some(p), &table.to_csv())?;
                    emit(Some(&timing_path(p)), &timing.to_csv())?;
                    print!("{}", table.to_text());
                    eprint!("{}", timing.to_text());
                }
                None => {
                    print!("{}", table.to_text());
                    eprint!("{}", timing.to_text());
                }
            }
            Ok(())
        }
        Command::Bench(c) => {
            let cfg = c.resolve()?;
            let inputs = Inputs::load(&cfg)?;
            let table = harness::bench_table(&harness::bench(&cfg, &inputs)?);
            if let Some(p) = cfg.run.out.as_deref() {
                emit(Some(p), &table.to_csv())?;
            }
            print!("{}", table.to_text());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
