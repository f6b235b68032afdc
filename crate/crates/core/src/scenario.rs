//! Running scenarios to files, singly or as a parallel sweep.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use thiserror::Error;

use crate::config::ScenarioConfig;
use crate::protocols::ProtocolKind;
use crate::report::{write_summary_file, write_timeseries_file, ReportError, SummaryRow};
use crate::sim::{simulate, SimError};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot prepare output directory {path}: {source}")]
    OutputDir { path: String, source: std::io::Error },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// A named scenario to run.
#[derive(Debug, Clone)]
pub struct Job {
    pub name: String,
    pub config: ScenarioConfig,
}

impl Job {
    pub fn new(name: impl Into<String>, config: ScenarioConfig) -> Self {
        Self { name: name.into(), config }
    }

    /// File stem shared by this run's outputs.
    pub fn stem(&self) -> String {
        format!("{}_{}_s{}", self.name, self.config.protocol, self.config.seed)
    }
}

/// Paths written by [`run_scenario`].
#[derive(Debug, Clone)]
pub struct RunFiles {
    pub timeseries: PathBuf,
    pub summary: PathBuf,
    pub trace: Option<PathBuf>,
}

fn ensure_dir(dir: &Path) -> Result<(), ScenarioError> {
    fs::create_dir_all(dir).map_err(|source| ScenarioError::OutputDir { path: dir.display().to_string(), source })
}

/// Runs one scenario and writes `<stem>.csv` (time series) and
/// `<stem>_summary.csv` into `out_dir`; with `trace`, also `<stem>.trace`.
pub fn run_scenario(job: &Job, out_dir: &Path, trace: bool) -> Result<(SummaryRow, RunFiles), ScenarioError> {
    ensure_dir(out_dir)?;
    let stem = job.stem();
    let trace_path = trace.then(|| out_dir.join(format!("{stem}.trace")));
    let output = match &trace_path {
        Some(p) => {
            let f = File::create(p).map_err(|source| ReportError::Io { path: p.display().to_string(), source })?;
            let mut w = BufWriter::new(f);
            simulate(&job.config, Some(&mut w))?
        }
        None => simulate(&job.config, None)?,
    };
    let files = RunFiles {
        timeseries: out_dir.join(format!("{stem}.csv")),
        summary: out_dir.join(format!("{stem}_summary.csv")),
        trace: trace_path,
    };
    write_timeseries_file(&files.timeseries, &job.config, &output.samples)?;
    let row = SummaryRow::from_run(&job.name, &job.config, &output);
    let header = crate::config::render_config(&job.config).map_err(ReportError::from)?;
    write_summary_file(&files.summary, &header, std::slice::from_ref(&row))?;
    Ok((row, files))
}

#[derive(Debug, Clone)]
pub struct Failure {
    pub scenario: String,
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub message: String,
}

/// Outcome of a sweep. `rows` are sorted by (protocol, seed, scenario).
#[derive(Debug, Clone, Default)]
pub struct SweepReport {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<Failure>,
}

pub const SWEEP_SUMMARY: &str = "summary.csv";

/// Runs every job on up to `parallelism` worker threads and writes the
/// combined `summary.csv`. Runs share nothing, so the result does not
/// depend on `parallelism` or on job order. A failed run is reported and
/// the rest still complete.
pub fn sweep(jobs: &[Job], out_dir: &Path, parallelism: usize) -> Result<SweepReport, ScenarioError> {
    ensure_dir(out_dir)?;
    let workers = parallelism.clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SummaryRow, String>>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = run_scenario(job, out_dir, false).map(|(row, _)| row).map_err(|e| e.to_string());
                results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
            });
        }
    });

    let mut report = SweepReport::default();
    for (job, r) in jobs.iter().zip(results.into_inner().expect("workers joined")) {
        match r.expect("every job ran") {
            Ok(row) => report.rows.push(row),
            Err(message) => report.failures.push(Failure {
                scenario: job.name.clone(),
                protocol: job.config.protocol,
                seed: job.config.seed,
                message,
            }),
        }
    }
    report.rows.sort_by(|a, b| a.key().cmp(&b.key()));
    report
        .failures
        .sort_by(|a, b| (a.protocol.name(), a.seed, &a.scenario).cmp(&(b.protocol.name(), b.seed, &b.scenario)));

    let header = format!("combined summary: {} runs, {} failed", jobs.len(), report.failures.len());
    write_summary_file(&out_dir.join(SWEEP_SUMMARY), &header, &report.rows)?;
    Ok(report)
}

/// One job per (scenario, seed): the scenario's config with the seed
/// replaced.
pub fn expand_seeds(base: &[Job], seeds: impl IntoIterator<Item = u64> + Clone) -> Vec<Job> {
    base.iter()
        .flat_map(|job| {
            seeds.clone().into_iter().map(move |seed| {
                let mut config = job.config.clone();
                config.seed = seed;
                Job::new(job.name.clone(), config)
            })
        })
        .collect()
}
