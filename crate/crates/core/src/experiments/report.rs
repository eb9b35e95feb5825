//! Report rendering and plot data.

use std::fmt::Write as _;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::run::{AggregateMetrics, EstimatePoint, MetricsReport, TrialMetrics};
use super::ExperimentError;
use crate::beam_oracle::ObjectContour;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Table,
    Csv,
    Jsonl,
}

impl FromStr for ReportFormat {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(ReportFormat::Table),
            "csv" => Ok(ReportFormat::Csv),
            "jsonl" | "json-lines" => Ok(ReportFormat::Jsonl),
            _ => Err(ExperimentError::Config(format!(
                "unknown format `{s}` (expected table, csv or jsonl)"
            ))),
        }
    }
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Table => "txt",
            ReportFormat::Csv => "csv",
            ReportFormat::Jsonl => "jsonl",
        }
    }
}

struct Row {
    cells: Vec<String>,
}

fn columns(timing: bool) -> Vec<&'static str> {
    let mut c = vec![
        "trial", "label", "method", "samples", "mean_mm", "std_mm", "max_mm", "min_mm", "conv_s", "contour_mean_mm",
        "contour_std_mm", "corner_frac",
    ];
    if timing {
        c.extend(["step_ms_mean", "step_ms_max"]);
    }
    c
}

fn cell(x: Option<f64>, missing: &str) -> String {
    match x {
        Some(v) => format!("{v:.4}"),
        None => missing.to_string(),
    }
}

fn trial_row(m: &TrialMetrics, timing: bool, missing: &str) -> Row {
    let mut cells = vec![
        m.trial.to_string(),
        m.label.clone(),
        m.method.to_string(),
        m.samples.to_string(),
    ];
    for x in [
        m.mean_error,
        m.std_error,
        m.max_error,
        m.min_error,
        m.convergence_time,
        m.contour_mean,
        m.contour_std,
        m.corner_fraction,
    ] {
        cells.push(cell(x, missing));
    }
    if timing {
        cells.push(cell(m.step_ms_mean, missing));
        cells.push(cell(m.step_ms_max, missing));
    }
    Row { cells }
}

fn aggregate_row(a: &AggregateMetrics, timing: bool, missing: &str) -> Row {
    let mut cells = vec![
        "all".to_string(),
        format!("{} trials", a.trials),
        a.method.to_string(),
        a.samples.to_string(),
    ];
    for x in [
        a.mean_error,
        a.std_error,
        a.max_error,
        a.min_error,
        a.convergence_max,
        a.contour_mean,
        a.contour_std,
        a.corner_fraction,
    ] {
        cells.push(cell(x, missing));
    }
    if timing {
        cells.push(cell(a.step_ms_mean, missing));
        cells.push(cell(a.step_ms_max, missing));
    }
    Row { cells }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Trial(TrialMetrics),
    Aggregate(AggregateMetrics),
}

/// Renders `report`. Timing columns appear only when the report carries
/// wall-time measurements. The aggregate row's `conv_s` is the slowest
/// trial's convergence time.
pub fn render_report(report: &MetricsReport, format: ReportFormat) -> String {
    let timing = report.aggregate.step_ms_mean.is_some();
    let mut out = String::new();
    match format {
        ReportFormat::Table => {
            let header: Vec<String> = columns(timing).iter().map(|s| s.to_string()).collect();
            let mut rows = vec![Row { cells: header }];
            rows.extend(report.trials.iter().map(|m| trial_row(m, timing, "-")));
            rows.push(aggregate_row(&report.aggregate, timing, "-"));
            let ncol = rows[0].cells.len();
            let widths: Vec<usize> = (0..ncol)
                .map(|c| rows.iter().map(|r| r.cells[c].len()).max().unwrap_or(0))
                .collect();
            for (i, r) in rows.iter().enumerate() {
                let line: Vec<String> = r
                    .cells
                    .iter()
                    .zip(&widths)
                    .enumerate()
                    .map(|(c, (s, &w))| if c == 1 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                    .collect();
                let _ = writeln!(out, "{}", line.join("  ").trim_end());
                if i == 0 {
                    let total = widths.iter().sum::<usize>() + 2 * (ncol - 1);
                    let _ = writeln!(out, "{}", "-".repeat(total));
                }
            }
        }
        ReportFormat::Csv => {
            let _ = writeln!(out, "{}", columns(timing).join(","));
            let rows = report
                .trials
                .iter()
                .map(|m| trial_row(m, timing, ""))
                .chain(std::iter::once(aggregate_row(&report.aggregate, timing, "")));
            for r in rows {
                let _ = writeln!(out, "{}", r.cells.join(","));
            }
        }
        ReportFormat::Jsonl => {
            for m in &report.trials {
                let _ = writeln!(out, "{}", serde_json::to_string(&Line::Trial(m.clone())).expect("serializable"));
            }
            let agg = Line::Aggregate(report.aggregate.clone());
            let _ = writeln!(out, "{}", serde_json::to_string(&agg).expect("serializable"));
        }
    }
    out
}

pub fn emit_report<W: Write>(report: &MetricsReport, format: ReportFormat, mut w: W) -> Result<(), ExperimentError> {
    w.write_all(render_report(report, format).as_bytes())?;
    w.flush()?;
    Ok(())
}

/// Reads a JSON-lines report back.
pub fn read_jsonl_report<R: BufRead>(reader: R) -> Result<MetricsReport, ExperimentError> {
    let mut trials = Vec::new();
    let mut aggregate = None;
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Line = serde_json::from_str(&line).map_err(|e| ExperimentError::Parse {
            row: k + 1,
            column: "json".into(),
            message: e.to_string(),
        })?;
        match parsed {
            Line::Trial(m) => trials.push(m),
            Line::Aggregate(a) => {
                if aggregate.replace(a).is_some() {
                    return Err(ExperimentError::Parse {
                        row: k + 1,
                        column: "kind".into(),
                        message: "more than one aggregate line".into(),
                    });
                }
            }
        }
    }
    let aggregate = aggregate.ok_or_else(|| ExperimentError::Parse {
        row: 0,
        column: "kind".into(),
        message: "no aggregate line".into(),
    })?;
    Ok(MetricsReport { trials, aggregate })
}

pub const PLOT_HEADER: &str = "t,est_x,est_y,gt_x,gt_y";

/// World-frame estimates and ground truth, keeping every `downsample`-th
/// estimate starting with the first.
pub fn emit_plotdata<W: Write>(estimates: &[EstimatePoint], downsample: usize, mut w: W) -> Result<(), ExperimentError> {
    let step = downsample.max(1);
    writeln!(w, "{PLOT_HEADER}")?;
    for e in estimates.iter().step_by(step) {
        let (gx, gy) = match e.truth_world {
            Some(g) => (g[0].to_string(), g[1].to_string()),
            None => (String::new(), String::new()),
        };
        writeln!(w, "{},{},{},{},{}", e.t, e.world[0], e.world[1], gx, gy)?;
    }
    w.flush()?;
    Ok(())
}

/// Closed outline of a contour as `x,y` rows.
pub fn emit_outline<W: Write>(contour: &ObjectContour, samples: usize, mut w: W) -> Result<(), ExperimentError> {
    writeln!(w, "x,y")?;
    for p in contour.outline(samples) {
        writeln!(w, "{},{}", p.x, p.y)?;
    }
    w.flush()?;
    Ok(())
}
