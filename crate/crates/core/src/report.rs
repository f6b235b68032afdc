//! CSV output and read-back.
//!
//! Every file starts with the resolved scenario config, one `# `-prefixed
//! line per TOML line, so a CSV alone is enough to rerun or re-check it.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{parse_config, render_config, ConfigError, ScenarioConfig};
use crate::metrics::{average_global_error, peak_global_error, steady_state_window, ErrorSample};
use crate::protocols::ProtocolKind;
use crate::radio::ChannelCounters;
use crate::sim::RunOutput;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("embedded config: {0}")]
    Config(#[from] ConfigError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ReportError + '_ {
    move |source| ReportError::Io { path: path.display().to_string(), source }
}

pub const TIMESERIES_HEADER: [&str; 5] = ["t", "global_error_us", "mean_abs_error_us", "max_node", "min_node"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SampleRow {
    t: f64,
    global_error_us: f64,
    mean_abs_error_us: f64,
    max_node: u32,
    min_node: u32,
}

/// One row of a run summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scenario: String,
    pub protocol: ProtocolKind,
    pub seed: u64,
    /// Mean global error over the steady-state window; empty when the run
    /// produced no samples there.
    pub steady_state_avg_us: Option<f64>,
    pub peak_us: Option<f64>,
    pub sent: u64,
    pub delivered: u64,
    pub lost_by_channel: u64,
    pub corrupted_by_collision: u64,
    pub dropped_by_mac: u64,
}

impl SummaryRow {
    pub fn from_run(scenario: &str, cfg: &ScenarioConfig, out: &RunOutput) -> Self {
        let (from, to) = steady_state_window(cfg.duration, cfg.metrics.steady_state_fraction);
        let c: ChannelCounters = out.counters;
        Self {
            scenario: scenario.to_string(),
            protocol: cfg.protocol,
            seed: cfg.seed,
            steady_state_avg_us: average_global_error(&out.samples, from, to).ok(),
            peak_us: peak_global_error(&out.samples, 0.0, cfg.duration).ok(),
            sent: c.sent,
            delivered: c.delivered,
            lost_by_channel: c.lost_by_channel,
            corrupted_by_collision: c.corrupted_by_collision,
            dropped_by_mac: c.dropped_by_mac,
        }
    }

    /// Sort key for combined summaries: protocol name, seed, scenario.
    pub fn key(&self) -> (&'static str, u64, &str) {
        (self.protocol.name(), self.seed, self.scenario.as_str())
    }
}

fn write_comment_block<W: Write>(w: &mut W, text: &str) -> io::Result<()> {
    for line in text.lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(())
}

/// Writes the time series for one run.
pub fn write_timeseries<W: Write>(mut w: W, cfg: &ScenarioConfig, samples: &[ErrorSample]) -> Result<(), ReportError> {
    write_comment_block(&mut w, &render_config(cfg)?).map_err(io_err(Path::new("<timeseries>")))?;
    let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    csv.write_record(TIMESERIES_HEADER)?;
    for s in samples {
        csv.serialize(SampleRow {
            t: s.t,
            global_error_us: s.global_error,
            mean_abs_error_us: s.mean_abs_error,
            max_node: s.max_node,
            min_node: s.min_node,
        })?;
    }
    csv.flush().map_err(io_err(Path::new("<timeseries>")))?;
    Ok(())
}

/// Writes summary rows, preceded by `header` as comment lines.
pub fn write_summary<W: Write>(mut w: W, header: &str, rows: &[SummaryRow]) -> Result<(), ReportError> {
    write_comment_block(&mut w, header).map_err(io_err(Path::new("<summary>")))?;
    let mut csv = csv::WriterBuilder::new().has_headers(true).from_writer(w);
    if rows.is_empty() {
        csv.write_record([
            "scenario",
            "protocol",
            "seed",
            "steady_state_avg_us",
            "peak_us",
            "sent",
            "delivered",
            "lost_by_channel",
            "corrupted_by_collision",
            "dropped_by_mac",
        ])?;
    }
    for r in rows {
        csv.serialize(r)?;
    }
    csv.flush().map_err(io_err(Path::new("<summary>")))?;
    Ok(())
}

pub fn write_timeseries_file(path: &Path, cfg: &ScenarioConfig, samples: &[ErrorSample]) -> Result<(), ReportError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_timeseries(BufWriter::new(f), cfg, samples)
}

pub fn write_summary_file(path: &Path, header: &str, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let f = File::create(path).map_err(io_err(path))?;
    write_summary(BufWriter::new(f), header, rows)
}

/// A time-series CSV read back from disk.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    pub config: ScenarioConfig,
    pub samples: Vec<ErrorSample>,
}

fn split_comment_header<R: BufRead>(r: R) -> io::Result<(String, String)> {
    let (mut header, mut body) = (String::new(), String::new());
    for line in r.lines() {
        let line = line?;
        if body.is_empty() && line.starts_with('#') {
            let text = line.strip_prefix("# ").or_else(|| line.strip_prefix('#')).unwrap_or("");
            header.push_str(text);
            header.push('\n');
        } else {
            body.push_str(&line);
            body.push('\n');
        }
    }
    Ok((header, body))
}

pub fn read_timeseries<R: BufRead>(r: R) -> Result<TimeSeries, ReportError> {
    let (header, body) = split_comment_header(r).map_err(io_err(Path::new("<timeseries>")))?;
    let config = parse_config(&header)?;
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    let samples = csv
        .deserialize::<SampleRow>()
        .map(|row| {
            row.map(|r| ErrorSample {
                t: r.t,
                global_error: r.global_error_us,
                mean_abs_error: r.mean_abs_error_us,
                max_node: r.max_node,
                min_node: r.min_node,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TimeSeries { config, samples })
}

pub fn read_timeseries_file(path: &Path) -> Result<TimeSeries, ReportError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_timeseries(BufReader::new(f))
}

pub fn read_summary<R: BufRead>(r: R) -> Result<Vec<SummaryRow>, ReportError> {
    let (_, body) = split_comment_header(r).map_err(io_err(Path::new("<summary>")))?;
    let mut csv = csv::Reader::from_reader(body.as_bytes());
    Ok(csv.deserialize().collect::<Result<Vec<_>, _>>()?)
}

pub fn read_summary_file(path: &Path) -> Result<Vec<SummaryRow>, ReportError> {
    let f = File::open(path).map_err(io_err(path))?;
    read_summary(BufReader::new(f))
}
