use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;

use whisker_core::estimators::Method;
use whisker_core::experiments::config::{ExperimentConfig, InitRule};
use whisker_core::experiments::report::{emit_outline, emit_plotdata, emit_report, read_jsonl_report, ReportFormat};
use whisker_core::experiments::run::{run_estimator, MetricsReport, RunOutput};
use whisker_core::experiments::suite::{self, PreparedTrial};
use whisker_core::experiments::trial::ingest_log;
use whisker_core::sensor_model::{save_model, write_calibration_csv};

#[derive(Parser)]
#[command(name = "whisker", version, about = "Whisker contact localization: calibrate, simulate, track, report, replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed for trial generation (overrides [trials] seed).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct Tracking {
    #[arg(long, default_value = "ukf")]
    method: Method,
    /// Keep every k-th estimate in plot files.
    #[arg(long, default_value_t = 20)]
    downsample: usize,
    #[arg(long, default_value = "table")]
    format: ReportFormat,
    /// Include per-step wall time in the report (not reproducible).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Fit sensor models and write them, with the calibration data, to --out.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Generate synthetic trials as CSV files in --out.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Run an estimator over the config's trials (or the given trial files).
    Track {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tracking: Tracking,
        /// Trial CSV files to track instead of generating trials.
        #[arg(long, num_args = 1..)]
        input: Vec<PathBuf>,
    },
    /// Re-render a JSON-lines report.
    Report {
        /// Report written by `track --format jsonl`.
        input: PathBuf,
        #[arg(long, default_value = "table")]
        format: ReportFormat,
    },
    /// Track a recorded log as a live system would: no ground truth is used
    /// for initialization.
    Replay {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        tracking: Tracking,
        log: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.trials.seed = s;
    }
    Ok(cfg)
}

fn out_dir(common: &Common) -> Result<Option<&Path>> {
    match &common.out {
        Some(d) => {
            fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
            Ok(Some(d.as_path()))
        }
        None => Ok(None),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn calibrate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let cal = suite::calibrate(&cfg)?;
    let out = out_dir(common)?;
    let mut stdout = io::stdout().lock();
    writeln!(stdout, "side,samples,degree,r_squared,rmse")?;
    for (k, m) in cal.models.models().iter().enumerate() {
        writeln!(
            stdout,
            "{},{},{},{:.6},{:.6}",
            m.side.as_str(),
            m.stats.n_samples,
            m.degree,
            m.stats.r_squared,
            m.stats.rmse
        )?;
        if let Some(dir) = out {
            save_model(m, dir.join(format!("model_{}.txt", m.side.as_str())))?;
            if let Some(set) = cal.sets.get(k) {
                write_calibration_csv(&set.samples, create(&dir.join(format!("calibration_{}.csv", set.side.as_str())))?)?;
            }
        }
    }
    Ok(())
}

fn simulate(common: &Common) -> Result<()> {
    let cfg = load_config(common)?;
    let Some(dir) = out_dir(common)? else {
        bail!("simulate needs --out");
    };
    let trials = suite::generate_trials(&cfg)?;
    for t in &trials {
        let path = dir.join(format!("trial_{:03}.csv", t.index));
        t.record.save(&path)?;
        info!("wrote {} ({} samples)", path.display(), t.record.len());
    }
    println!("{} trials written to {}", trials.len(), dir.display());
    Ok(())
}

fn write_outputs(
    dir: Option<&Path>,
    report: &MetricsReport,
    runs: &[RunOutput],
    trials: &[PreparedTrial],
    tracking: &Tracking,
) -> Result<()> {
    emit_report(report, tracking.format, io::stdout().lock())?;
    let Some(dir) = dir else { return Ok(()) };
    let method = tracking.method.as_str();
    emit_report(
        report,
        tracking.format,
        create(&dir.join(format!("report_{method}.{}", tracking.format.extension())))?,
    )?;
    for (run, t) in runs.iter().zip(trials) {
        emit_plotdata(
            &run.estimates,
            tracking.downsample,
            create(&dir.join(format!("plot_{method}_{:03}.csv", t.index)))?,
        )?;
        if let Some(c) = &t.contour {
            emit_outline(c, 720, create(&dir.join(format!("outline_{:03}.csv", t.index)))?)?;
        }
    }
    Ok(())
}

fn track(common: &Common, tracking: &Tracking, input: &[PathBuf]) -> Result<()> {
    let cfg = load_config(common)?;
    let cal = suite::calibrate(&cfg)?;
    let trials = if input.is_empty() {
        suite::generate_trials(&cfg)?
    } else {
        input
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let log = ingest_log(p).with_context(|| format!("reading {}", p.display()))?;
                Ok(PreparedTrial {
                    index,
                    label: p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
                    seed: cfg.trials.seed + index as u64,
                    contour: cfg.scripted_object(),
                    record: log.record,
                })
            })
            .collect::<Result<Vec<_>>>()?
    };
    let (report, runs) = suite::run_suite(&cfg, tracking.method, &trials, &cal.models, tracking.timing)?;
    write_outputs(out_dir(common)?, &report, &runs, &trials, tracking)
}

fn replay(common: &Common, tracking: &Tracking, log: &Path) -> Result<()> {
    let mut cfg = load_config(common)?;
    cfg.run.init = InitRule::Fixed;
    let cal = suite::calibrate(&cfg)?;
    let ingested = ingest_log(log).with_context(|| format!("reading {}", log.display()))?;
    if !ingested.gaps.is_empty() {
        log::warn!("{} timestamp gaps in {}", ingested.gaps.len(), log.display());
    }
    let trial = PreparedTrial {
        index: 0,
        label: log.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default(),
        seed: cfg.trials.seed,
        contour: cfg.scripted_object(),
        record: ingested.record,
    };
    let rc = suite::run_config(&cfg, tracking.method, &cal.models, trial.seed, tracking.timing);
    let run = run_estimator(&trial.record, &cal.models, &rc, trial.contour.as_ref(), 0, &trial.label)?;
    let report = MetricsReport::pool(tracking.method, std::slice::from_ref(&run));
    write_outputs(out_dir(common)?, &report, &[run], &[trial], tracking)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match &cli.command {
        Command::Calibrate { common } => calibrate(common),
        Command::Simulate { common } => simulate(common),
        Command::Track { common, tracking, input } => track(common, tracking, input),
        Command::Report { input, format } => {
            let f = File::open(input).with_context(|| format!("reading {}", input.display()))?;
            let report = read_jsonl_report(BufReader::new(f))?;
            emit_report(&report, *format, io::stdout().lock())?;
            Ok(())
        }
        Command::Replay { common, tracking, log } => replay(common, tracking, log),
    }
}
