//! Packaged experiment suite and claim checks.
//!
//! Two claims are checked, both only from CSV files the runs emitted:
//!
//! * ordering: median steady-state global error over at least five seeds
//!   satisfies `gtsp > avt_p2p > max(avt_flood, pulsesync)`;
//! * disconnection: with a node subset held out of range for a window,
//!   PulseSync's in-window peak is at least `factor` times AVT-flood's, and
//!   both settle back afterwards.
//!
//! Desk and full scale run the same checks with different configs.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::config::{CourierConfig, PartitionConfig, ScenarioConfig};
use crate::metrics::{average_global_error, peak_global_error, MetricsError};
use crate::protocols::ProtocolKind;
use crate::report::{read_summary_file, read_timeseries_file, ReportError, SummaryRow, TimeSeries};
use crate::scenario::{expand_seeds, sweep, Job, ScenarioError, SWEEP_SUMMARY};
use crate::world::{Position, Rect};

pub const MIN_SEEDS: usize = 5;
pub const DEFAULT_SPIKE_FACTOR: f64 = 2.0;
/// Margin (s) kept clear of the window edges when measuring baseline and
/// recovery.
pub const SETTLE_MARGIN: f64 = 500.0;
/// A protocol has recovered when its post-window mean is within this
/// factor of its pre-window mean.
pub const RECOVERY_FACTOR: f64 = 2.0;

#[derive(Debug, Error)]
pub enum ReproError {
    #[error("protocol {0} has no rows")]
    MissingProtocol(ProtocolKind),
    #[error("protocol {protocol} has {have} seeds with a steady-state value, need at least {need}")]
    TooFewSeeds { protocol: ProtocolKind, have: usize, need: usize },
    #[error("seed sets differ between protocols")]
    SeedMismatch,
    #[error("time series for {0} has no partition window")]
    NoPartition(ProtocolKind),
    #[error("expected a {want} trace, got {got}")]
    WrongProtocol { want: ProtocolKind, got: ProtocolKind },
    #[error("partition windows differ between the two traces")]
    WindowMismatch,
    #[error("{0} run(s) failed: {1}")]
    RunsFailed(usize, String),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Desk,
    Full,
}

impl Scale {
    pub fn name(self) -> &'static str {
        match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        }
    }
}

/// Base config for the ordering experiment.
pub fn ordering_config(scale: Scale, protocol: ProtocolKind, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig { protocol, seed, ..Default::default() };
    if scale == Scale::Desk {
        c.node_count = 20;
        c.field.width = 100.0;
        c.field.height = 100.0;
        c.duration = 5000.0;
    }
    c
}

/// Config for the disconnection experiment. Nodes roam the left part of
/// the field; during the window a subset is held at an island on the right,
/// out of range of everyone except a courier that shuttles between a
/// harbor inside the roam area and the island.
pub fn partition_config(scale: Scale, protocol: ProtocolKind, seed: u64) -> ScenarioConfig {
    let mut c = ScenarioConfig { protocol, seed, ..Default::default() };
    let (w, h, roam, start, end) = match scale {
        Scale::Desk => {
            c.node_count = 20;
            c.duration = 7000.0;
            (200.0, 100.0, 100.0, 2000.0, 5000.0)
        }
        Scale::Full => (400.0, 300.0, 300.0, 13_000.0, 17_000.0),
    };
    let n = c.node_count as u32;
    c.field.width = w;
    c.field.height = h;
    c.mobility.roam = Some(Rect { x0: 0.0, y0: 0.0, x1: roam, y1: h });
    c.partition = Some(PartitionConfig {
        start,
        end,
        nodes: (n - 5..n).collect(),
        island: Position::new(w - 15.0, h / 2.0),
        island_radius: 4.0,
        courier: Some(CourierConfig {
            node: n - 6,
            harbor: Position::new(roam - 10.0, h / 2.0),
            speed: 1.0,
            pause: 60.0,
        }),
    });
    c
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderingVerdict {
    pub medians: BTreeMap<ProtocolKind, f64>,
    pub seeds: usize,
    pub pass: bool,
}

/// Median steady-state error per protocol and the ordering predicate.
pub fn check_protocol_ordering(rows: &[SummaryRow]) -> Result<OrderingVerdict, ReproError> {
    let mut per: BTreeMap<ProtocolKind, BTreeMap<u64, f64>> = BTreeMap::new();
    for r in rows {
        if let Some(v) = r.steady_state_avg_us {
            per.entry(r.protocol).or_default().insert(r.seed, v);
        }
    }
    let mut seed_set = None;
    let mut medians = BTreeMap::new();
    for p in ProtocolKind::ALL {
        let by_seed = per.get(&p).ok_or(ReproError::MissingProtocol(p))?;
        if by_seed.len() < MIN_SEEDS {
            return Err(ReproError::TooFewSeeds { protocol: p, have: by_seed.len(), need: MIN_SEEDS });
        }
        let seeds: Vec<u64> = by_seed.keys().copied().collect();
        if seed_set.get_or_insert_with(|| seeds.clone()) != &seeds {
            return Err(ReproError::SeedMismatch);
        }
        medians.insert(p, median(by_seed.values().copied().collect()));
    }
    let m = |p| medians[&p];
    let flooding = m(ProtocolKind::AvtFlood).max(m(ProtocolKind::PulseSync));
    let pass = m(ProtocolKind::Gtsp) > m(ProtocolKind::AvtP2p) && m(ProtocolKind::AvtP2p) > flooding;
    Ok(OrderingVerdict { medians, seeds: seed_set.map_or(0, |s| s.len()), pass })
}

/// Window statistics for one trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowStats {
    pub baseline: f64,
    pub peak: f64,
    pub after: f64,
}

impl WindowStats {
    pub fn recovered(&self) -> bool {
        self.after <= RECOVERY_FACTOR * self.baseline
    }
}

fn window_stats(ts: &TimeSeries) -> Result<(WindowStats, (f64, f64)), ReproError> {
    let p = ts.config.partition.as_ref().ok_or(ReproError::NoPartition(ts.config.protocol))?;
    let (start, end) = (p.start, p.end);
    let stats = WindowStats {
        baseline: average_global_error(&ts.samples, start - SETTLE_MARGIN, start - 1e-9)?,
        peak: peak_global_error(&ts.samples, start, end)?,
        after: average_global_error(&ts.samples, end + SETTLE_MARGIN, ts.config.duration)?,
    };
    Ok((stats, (start, end)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisconnectionVerdict {
    pub window: (f64, f64),
    pub pulsesync: Vec<WindowStats>,
    pub avt_flood: Vec<WindowStats>,
    /// Median in-window peak over seeds, PulseSync then AVT-flood.
    pub median_peaks: (f64, f64),
    pub factor: f64,
    pub spike_pass: bool,
    pub recovery_pass: bool,
    pub pass: bool,
}

/// Compares paired PulseSync / AVT-flood traces (one pair per seed). The
/// spike predicate uses the median in-window peak over seeds; recovery
/// requires every trace to settle.
pub fn check_disconnection_robustness(
    pulsesync: &[TimeSeries],
    avt_flood: &[TimeSeries],
    factor: f64,
) -> Result<DisconnectionVerdict, ReproError> {
    let mut window = None;
    let mut collect = |set: &[TimeSeries], want: ProtocolKind| -> Result<Vec<WindowStats>, ReproError> {
        if set.is_empty() {
            return Err(ReproError::MissingProtocol(want));
        }
        set.iter()
            .map(|ts| {
                if ts.config.protocol != want {
                    return Err(ReproError::WrongProtocol { want, got: ts.config.protocol });
                }
                let (stats, w) = window_stats(ts)?;
                if *window.get_or_insert(w) != w {
                    return Err(ReproError::WindowMismatch);
                }
                Ok(stats)
            })
            .collect()
    };
    let ps = collect(pulsesync, ProtocolKind::PulseSync)?;
    let af = collect(avt_flood, ProtocolKind::AvtFlood)?;
    let median_peaks = (median(ps.iter().map(|s| s.peak).collect()), median(af.iter().map(|s| s.peak).collect()));
    let spike_pass = median_peaks.0 >= factor * median_peaks.1;
    let recovery_pass = ps.iter().chain(&af).all(WindowStats::recovered);
    Ok(DisconnectionVerdict {
        window: window.expect("both sets non-empty"),
        pulsesync: ps,
        avt_flood: af,
        median_peaks,
        factor,
        spike_pass,
        recovery_pass,
        pass: spike_pass && recovery_pass,
    })
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub ordering: OrderingVerdict,
    pub disconnection: DisconnectionVerdict,
    pub text: String,
    pub report_path: PathBuf,
    pub verdict_path: PathBuf,
}

impl SuiteReport {
    pub fn pass(&self) -> bool {
        self.ordering.pass && self.disconnection.pass
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReproError + '_ {
    move |source| ReproError::Io { path: path.display().to_string(), source }
}

/// Runs both experiments at `scale` over `seeds`, re-reads the emitted
/// CSVs, and writes `report.txt` and `verdicts.csv` under `out_dir`.
pub fn run_suite(scale: Scale, seeds: &[u64], out_dir: &Path, parallelism: usize) -> Result<SuiteReport, ReproError> {
    let ordering_dir = out_dir.join("ordering");
    let partition_dir = out_dir.join("partition");

    let base: Vec<Job> = ProtocolKind::ALL
        .iter()
        .map(|&p| Job::new(format!("{}-ordering", scale.name()), ordering_config(scale, p, 0)))
        .collect();
    let jobs = expand_seeds(&base, seeds.iter().copied());
    let ordering_sweep = sweep(&jobs, &ordering_dir, parallelism)?;
    let partition_base = [ProtocolKind::PulseSync, ProtocolKind::AvtFlood]
        .map(|p| Job::new(format!("{}-partition", scale.name()), partition_config(scale, p, 0)));
    let partition_jobs = expand_seeds(&partition_base, seeds.iter().copied());
    let partition_sweep = sweep(&partition_jobs, &partition_dir, parallelism)?;

    let failures: Vec<_> = ordering_sweep.failures.iter().chain(&partition_sweep.failures).collect();
    if !failures.is_empty() {
        let msg = failures.iter().map(|f| format!("{} {} seed {}: {}", f.scenario, f.protocol, f.seed, f.message));
        return Err(ReproError::RunsFailed(failures.len(), msg.collect::<Vec<_>>().join("; ")));
    }

    // verdicts come from the files, not from in-memory results
    let rows = read_summary_file(&ordering_dir.join(SWEEP_SUMMARY))?;
    let ordering = check_protocol_ordering(&rows)?;
    let read = |p: ProtocolKind| -> Result<Vec<TimeSeries>, ReproError> {
        partition_jobs
            .iter()
            .filter(|j| j.config.protocol == p)
            .map(|j| Ok(read_timeseries_file(&partition_dir.join(format!("{}.csv", j.stem())))?))
            .collect()
    };
    let disconnection = check_disconnection_robustness(
        &read(ProtocolKind::PulseSync)?,
        &read(ProtocolKind::AvtFlood)?,
        DEFAULT_SPIKE_FACTOR,
    )?;

    let text = render_report(scale, &ordering, &disconnection);
    let report_path = out_dir.join("report.txt");
    fs::write(&report_path, &text).map_err(io_err(&report_path))?;
    let verdict_path = out_dir.join("verdicts.csv");
    write_verdicts(&verdict_path, scale, &ordering, &disconnection)?;
    Ok(SuiteReport { ordering, disconnection, text, report_path, verdict_path })
}

fn mark(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn render_report(scale: Scale, o: &OrderingVerdict, d: &DisconnectionVerdict) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "reproduction suite, {} scale", scale.name());
    let _ = writeln!(s);
    let _ = writeln!(s, "[{}] protocol ordering over {} seeds", mark(o.pass), o.seeds);
    let _ = writeln!(s, "    predicate: gtsp > avt_p2p > max(avt_flood, pulsesync)");
    for (p, v) in &o.medians {
        let _ = writeln!(s, "    median steady-state error {:<10} {:>12.3} us", p.name(), v);
    }
    let _ = writeln!(s);
    let _ = writeln!(s, "[{}] disconnection robustness, window [{}, {}]", mark(d.pass), d.window.0, d.window.1);
    let _ = writeln!(
        s,
        "    median in-window peak: pulsesync {:.3} us, avt_flood {:.3} us (need ratio >= {})  [{}]",
        d.median_peaks.0,
        d.median_peaks.1,
        d.factor,
        mark(d.spike_pass)
    );
    let _ = writeln!(
        s,
        "    recovery (post-window mean <= {RECOVERY_FACTOR} x pre-window mean)  [{}]",
        mark(d.recovery_pass)
    );
    for (name, set) in [("pulsesync", &d.pulsesync), ("avt_flood", &d.avt_flood)] {
        for (i, w) in set.iter().enumerate() {
            let _ = writeln!(
                s,
                "    {name:<10} run {i}: before {:.3}  peak {:.3}  after {:.3}",
                w.baseline, w.peak, w.after
            );
        }
    }
    s
}

fn write_verdicts(path: &Path, scale: Scale, o: &OrderingVerdict, d: &DisconnectionVerdict) -> Result<(), ReproError> {
    let f = fs::File::create(path).map_err(io_err(path))?;
    let mut w = csv::Writer::from_writer(f);
    let csv_err = |e: csv::Error| ReproError::Report(ReportError::Csv(e));
    w.write_record(["scale", "claim", "statistic", "value", "verdict"]).map_err(csv_err)?;
    for (p, v) in &o.medians {
        w.write_record([scale.name(), "ordering", &format!("median_{}", p.name()), &v.to_string(), mark(o.pass)])
            .map_err(csv_err)?;
    }
    let rows = [
        ("median_peak_pulsesync", d.median_peaks.0, d.spike_pass),
        ("median_peak_avt_flood", d.median_peaks.1, d.spike_pass),
        ("recovered", if d.recovery_pass { 1.0 } else { 0.0 }, d.recovery_pass),
    ];
    for (stat, v, ok) in rows {
        w.write_record([scale.name(), "disconnection", stat, &v.to_string(), mark(ok)]).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::ErrorSample;

    fn rows(medians: [(ProtocolKind, f64); 4], seeds: u64) -> Vec<SummaryRow> {
        let mut out = Vec::new();
        for (p, v) in medians {
            for seed in 1..=seeds {
                out.push(SummaryRow {
                    scenario: "x".into(),
                    protocol: p,
                    seed,
                    // spread around the target so the median is exactly `v`
                    steady_state_avg_us: Some(v + (seed as f64 - (seeds as f64 + 1.0) / 2.0)),
                    peak_us: None,
                    sent: 0,
                    delivered: 0,
                    lost_by_channel: 0,
                    corrupted_by_collision: 0,
                    dropped_by_mac: 0,
                });
            }
        }
        out
    }

    use ProtocolKind::*;

    #[test]
    fn ordering_examples() {
        let ok = rows([(Gtsp, 900.0), (AvtP2p, 300.0), (AvtFlood, 60.0), (PulseSync, 50.0)], 5);
        let v = check_protocol_ordering(&ok).unwrap();
        assert!(v.pass);
        assert_eq!(v.medians[&Gtsp], 900.0);
        let bad = rows([(Gtsp, 100.0), (AvtP2p, 300.0), (AvtFlood, 60.0), (PulseSync, 50.0)], 5);
        assert!(!check_protocol_ordering(&bad).unwrap().pass);
        let short = rows([(Gtsp, 900.0), (AvtP2p, 300.0), (AvtFlood, 60.0), (PulseSync, 50.0)], 4);
        assert!(matches!(check_protocol_ordering(&short), Err(ReproError::TooFewSeeds { have: 4, .. })));
        let missing: Vec<_> = ok.iter().filter(|r| r.protocol != PulseSync).cloned().collect();
        assert!(matches!(check_protocol_ordering(&missing), Err(ReproError::MissingProtocol(PulseSync))));
    }

    fn trace(protocol: ProtocolKind, f: impl Fn(f64) -> f64, partition: bool) -> TimeSeries {
        let mut config = partition_config(Scale::Desk, protocol, 1);
        if !partition {
            config.partition = None;
        }
        let samples = (1..=700)
            .map(|k| {
                let t = 10.0 * k as f64;
                ErrorSample { t, global_error: f(t), mean_abs_error: 0.0, max_node: 0, min_node: 1 }
            })
            .collect();
        TimeSeries { config, samples }
    }

    fn in_window(t: f64) -> bool {
        (2000.0..=5000.0).contains(&t)
    }

    #[test]
    fn disconnection_examples() {
        let ps = trace(PulseSync, |t| if in_window(t) { 500.0 } else { 20.0 }, true);
        let af = trace(AvtFlood, |t| if in_window(t) { 100.0 } else { 30.0 }, true);
        let v = check_disconnection_robustness(std::slice::from_ref(&ps), std::slice::from_ref(&af), 2.0).unwrap();
        assert!(v.spike_pass && v.recovery_pass && v.pass);
        assert_eq!(v.median_peaks, (500.0, 100.0));

        let stuck = trace(PulseSync, |t| if t >= 2000.0 { 500.0 } else { 20.0 }, true);
        let stuck_af = trace(AvtFlood, |t| if t >= 2000.0 { 100.0 } else { 30.0 }, true);
        let v = check_disconnection_robustness(&[stuck], &[stuck_af], 2.0).unwrap();
        assert!(!v.recovery_pass && !v.pass);

        let plain = trace(PulseSync, |_| 1.0, false);
        assert!(matches!(
            check_disconnection_robustness(&[plain], &[af], 2.0),
            Err(ReproError::NoPartition(PulseSync))
        ));
        assert!(matches!(
            check_disconnection_robustness(std::slice::from_ref(&ps), std::slice::from_ref(&ps), 2.0),
            Err(ReproError::WrongProtocol { .. })
        ));
    }

    #[test]
    fn packaged_configs_validate() {
        for scale in [Scale::Desk, Scale::Full] {
            for p in ProtocolKind::ALL {
                ordering_config(scale, p, 1).validate().unwrap();
                partition_config(scale, p, 1).validate().unwrap();
            }
        }
        let d = ordering_config(Scale::Desk, Gtsp, 1);
        assert_eq!((d.node_count, d.field.width, d.duration), (20, 100.0, 5000.0));
        assert_eq!(ordering_config(Scale::Full, Gtsp, 1), ScenarioConfig { protocol: Gtsp, ..Default::default() });
    }
}
