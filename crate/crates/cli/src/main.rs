//! `mobisync` command line.
//!
//! Exit status: 0 on success, 1 for configuration errors, 2 for runtime
//! failures. The output directory is `--out`, else `$MOBISYNC_OUT`, else
//! `./out`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use mobisync::repro::{run_suite, Scale};
use mobisync::scenario::{expand_seeds, run_scenario, sweep, Job};
use mobisync::{parse_config, ScenarioConfig};

const OUT_ENV: &str = "MOBISYNC_OUT";

#[derive(Parser)]
#[command(name = "mobisync", version, about = "Clock synchronization simulator for mobile sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write a per-event trace.
        #[arg(long)]
        trace: bool,
    },
    /// Run every `*.toml` scenario in a directory over seeds 1..=N.
    Sweep {
        config_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads.
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
    /// Parse and validate a scenario, printing the resolved config.
    Validate { config: PathBuf },
    /// Run the packaged reproduction suite.
    Repro {
        #[arg(value_enum)]
        scale: ReproScale,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = default_jobs())]
        jobs: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReproScale {
    Desk,
    Full,
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Failure with its exit status.
enum Fail {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Fail {
    fn code(&self) -> u8 {
        match self {
            Fail::Config(_) => 1,
            Fail::Runtime(_) => 2,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Fail::Config(e) | Fail::Runtime(e) => e,
        }
    }
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn load(path: &Path) -> Result<ScenarioConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn scenario_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}

fn dispatch(cmd: Command) -> Result<(), Fail> {
    match cmd {
        Command::Validate { config } => {
            let cfg = load(&config).map_err(Fail::Config)?;
            let text = mobisync::render_config(&cfg).map_err(|e| Fail::Runtime(e.into()))?;
            print!("{text}");
            Ok(())
        }
        Command::Run { config, out, trace } => {
            let cfg = load(&config).map_err(Fail::Config)?;
            let job = Job::new(scenario_name(&config), cfg);
            let dir = out_dir(out);
            let (row, files) = run_scenario(&job, &dir, trace).map_err(|e| Fail::Runtime(e.into()))?;
            println!("time series: {}", files.timeseries.display());
            println!("summary:     {}", files.summary.display());
            if let Some(t) = files.trace {
                println!("trace:       {}", t.display());
            }
            match row.steady_state_avg_us {
                Some(v) => println!("steady-state global error: {v:.3} us"),
                None => println!("steady-state global error: no samples"),
            }
            Ok(())
        }
        Command::Sweep { config_dir, seeds, out, jobs } => run_sweep(&config_dir, seeds, out_dir(out), jobs),
        Command::Repro { scale, seeds, out, jobs } => {
            let scale = match scale {
                ReproScale::Desk => Scale::Desk,
                ReproScale::Full => Scale::Full,
            };
            let seeds: Vec<u64> = (1..=seeds).collect();
            let dir = out_dir(out).join(format!("repro-{}", scale.name()));
            let report = run_suite(scale, &seeds, &dir, jobs).map_err(|e| Fail::Runtime(e.into()))?;
            print!("{}", report.text);
            println!("report:   {}", report.report_path.display());
            println!("verdicts: {}", report.verdict_path.display());
            Ok(())
        }
    }
}

fn run_sweep(config_dir: &Path, seeds: u64, dir: PathBuf, jobs: usize) -> Result<(), Fail> {
    let entries =
        fs::read_dir(config_dir).with_context(|| format!("reading {}", config_dir.display())).map_err(Fail::Config)?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Fail::Config(anyhow::anyhow!("no *.toml scenarios in {}", config_dir.display())));
    }

    let mut base = Vec::new();
    let mut bad_configs = Vec::new();
    for p in &paths {
        match load(p) {
            Ok(cfg) => base.push(Job::new(scenario_name(p), cfg)),
            Err(e) => {
                eprintln!("config error: {e:#}");
                bad_configs.push(p.display().to_string());
            }
        }
    }
    let all = expand_seeds(&base, 1..=seeds);
    let report = sweep(&all, &dir, jobs.max(1)).map_err(|e| Fail::Runtime(e.into()))?;
    for f in &report.failures {
        eprintln!("run failed: {} {} seed {}: {}", f.scenario, f.protocol, f.seed, f.message);
    }
    println!(
        "{} runs ok, {} failed; summary: {}",
        report.rows.len(),
        report.failures.len(),
        dir.join(mobisync::scenario::SWEEP_SUMMARY).display()
    );
    if !bad_configs.is_empty() {
        return Err(Fail::Config(anyhow::anyhow!("invalid scenario(s): {}", bad_configs.join(", "))));
    }
    if !report.failures.is_empty() {
        return Err(Fail::Runtime(anyhow::anyhow!("{} run(s) failed", report.failures.len())));
    }
    Ok(())
}
