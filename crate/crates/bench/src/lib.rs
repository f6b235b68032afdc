//! Shared fixtures for the benchmarks.

use mobisync::clocks::{Micros, Ticks};
use mobisync::repro::{ordering_config, Scale};
use mobisync::{ProtocolKind, ScenarioConfig};

/// Eight noiseless samples on a line with 40 ppm slope error.
pub fn regression_points() -> Vec<(Ticks, Micros)> {
    (0..8)
        .map(|i| {
            let x = 1_000_000 + i * 30_000_000;
            (x, 1.00004 * x as f64 + 250.0)
        })
        .collect()
}

/// Desk-scale ordering scenario shortened to `duration` seconds.
pub fn desk_run(protocol: ProtocolKind, duration: f64) -> ScenarioConfig {
    let mut c = ordering_config(Scale::Desk, protocol, 1);
    c.duration = duration;
    c
}
