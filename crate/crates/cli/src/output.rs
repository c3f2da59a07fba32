//! Result files: per-run CSV, per-cell summary, traces and plot data.
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! re-reading any file reproduces the in-memory values exactly.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use mfris_core::optimizer::ArchitecturePreset;
use serde::{Deserialize, Serialize};

use crate::config::SweepVariable;
use crate::sweep::{SweepResult, TrialResult};

pub const RESULTS_HEADER: [&str; 8] = [
    "sweep_var",
    "sweep_value",
    "preset",
    "trial",
    "sum_rate_bps_hz",
    "converged",
    "iters",
    "wall_ms",
];

/// One row of `results.csv`. A failed run has `sum_rate_bps_hz = NaN`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub preset: String,
    pub trial: usize,
    pub sum_rate_bps_hz: f64,
    pub converged: bool,
    pub iters: usize,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub preset: String,
    pub mean_sum_rate_bps_hz: f64,
    pub stderr: f64,
    pub runs: usize,
    pub failures: usize,
    pub converged: usize,
    pub mean_iters: f64,
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, e)
}

fn result_row(variable: SweepVariable, t: &TrialResult) -> ResultRow {
    ResultRow {
        sweep_var: variable.name().to_string(),
        sweep_value: t.sweep_value,
        preset: t.preset.name().to_string(),
        trial: t.trial,
        sum_rate_bps_hz: t.sum_rate.unwrap_or(f64::NAN),
        converged: t.converged,
        iters: t.iterations,
        wall_ms: t.wall_ms,
    }
}

pub fn write_results<W: Write>(result: &SweepResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for t in &result.trials {
        w.serialize(result_row(result.variable, t)).map_err(csv_err)?;
    }
    if result.trials.is_empty() {
        w.write_record(RESULTS_HEADER).map_err(csv_err)?;
    }
    w.flush()
}

pub fn write_summary<W: Write>(result: &SweepResult, out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for c in &result.cells {
        w.serialize(SummaryRow {
            sweep_var: result.variable.name().to_string(),
            sweep_value: c.sweep_value,
            preset: c.preset.name().to_string(),
            mean_sum_rate_bps_hz: c.mean,
            stderr: c.stderr,
            runs: c.rates.len() + c.failures,
            failures: c.failures,
            converged: c.converged,
            mean_iters: c.mean_iterations,
        })
        .map_err(csv_err)?;
    }
    w.flush()
}

pub fn read_results<R: io::Read>(input: R) -> io::Result<Vec<ResultRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

pub fn read_summary<R: io::Read>(input: R) -> io::Result<Vec<SummaryRow>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(csv_err)
}

/// Two columns per line: sweep value and mean sum rate.
pub fn write_plotdata<W: Write>(result: &SweepResult, preset: ArchitecturePreset, mut out: W) -> io::Result<()> {
    writeln!(out, "# {} mean_sum_rate_bps_hz", result.variable)?;
    for c in result.cells.iter().filter(|c| c.preset == preset) {
        writeln!(out, "{} {}", c.sweep_value, c.mean)?;
    }
    Ok(())
}

pub fn read_plotdata(text: &str) -> Vec<(f64, f64)> {
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .filter_map(|l| {
            let mut it = l.split_whitespace().map(str::parse::<f64>);
            Some((it.next()?.ok()?, it.next()?.ok()?))
        })
        .collect()
}

pub fn trace_file_name(variable: SweepVariable, t: &TrialResult) -> String {
    format!("{}_{}={}_trial{}.json", t.preset.name(), variable, t.sweep_value, t.trial)
}

/// Writes `results.csv`, `summary.csv`, `plotdata/<preset>.dat` and, when
/// `traces` is set, `trace/<cell>.json` under `dir`.
pub fn write_all(dir: &Path, result: &SweepResult, traces: bool) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    write_results(result, BufWriter::new(File::create(dir.join("results.csv"))?))?;
    write_summary(result, BufWriter::new(File::create(dir.join("summary.csv"))?))?;

    let plot_dir = dir.join("plotdata");
    fs::create_dir_all(&plot_dir)?;
    let mut presets: Vec<ArchitecturePreset> = Vec::new();
    for c in &result.cells {
        if !presets.contains(&c.preset) {
            presets.push(c.preset);
        }
    }
    for p in presets {
        let f = File::create(plot_dir.join(format!("{}.dat", p.name())))?;
        write_plotdata(result, p, BufWriter::new(f))?;
    }

    if traces {
        let trace_dir = dir.join("trace");
        fs::create_dir_all(&trace_dir)?;
        for t in &result.trials {
            if let Some(trace) = &t.trace {
                let f = BufWriter::new(File::create(trace_dir.join(trace_file_name(result.variable, t)))?);
                serde_json::to_writer_pretty(f, trace).map_err(io::Error::from)?;
            }
        }
    }
    Ok(())
}
