//! Global synchronization error: the largest logical-clock difference over
//! all node pairs at one instant, and its average over a time window.

use thiserror::Error;

use crate::clocks::Micros;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("need at least two nodes to measure, have {0}")]
    TooFewNodes(usize),
    #[error("no samples in window [{0}, {1}]")]
    EmptyWindow(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub global_error: Micros,
    /// Mean absolute deviation of the readings from their mean.
    pub mean_abs_error: Micros,
    pub max_node: u32,
    pub min_node: u32,
}

/// Builds a sample from every node's logical reading taken at time `t`.
/// Ties for max/min go to the lowest node id.
pub fn sample_global_error(readings: &[Micros], t: f64) -> Result<ErrorSample, MetricsError> {
    if readings.len() < 2 {
        return Err(MetricsError::TooFewNodes(readings.len()));
    }
    let (mut max_node, mut min_node) = (0usize, 0usize);
    for (i, &r) in readings.iter().enumerate().skip(1) {
        if r > readings[max_node] {
            max_node = i;
        }
        if r < readings[min_node] {
            min_node = i;
        }
    }
    let n = readings.len() as f64;
    let mean = readings.iter().sum::<f64>() / n;
    let mean_abs_error = readings.iter().map(|r| (r - mean).abs()).sum::<f64>() / n;
    Ok(ErrorSample {
        t,
        global_error: readings[max_node] - readings[min_node],
        mean_abs_error,
        max_node: max_node as u32,
        min_node: min_node as u32,
    })
}

/// Mean global error over samples with `t` in `[from, to]`.
pub fn average_global_error(samples: &[ErrorSample], from: f64, to: f64) -> Result<Micros, MetricsError> {
    let (sum, count) = samples
        .iter()
        .filter(|s| s.t >= from && s.t <= to)
        .fold((0.0, 0usize), |(sum, c), s| (sum + s.global_error, c + 1));
    if count == 0 {
        return Err(MetricsError::EmptyWindow(from, to));
    }
    Ok(sum / count as f64)
}

/// Largest global error over samples with `t` in `[from, to]`.
pub fn peak_global_error(samples: &[ErrorSample], from: f64, to: f64) -> Result<Micros, MetricsError> {
    samples
        .iter()
        .filter(|s| s.t >= from && s.t <= to)
        .map(|s| s.global_error)
        .reduce(f64::max)
        .ok_or(MetricsError::EmptyWindow(from, to))
}

/// Window covering the final `fraction` of a run of length `duration`.
pub fn steady_state_window(duration: f64, fraction: f64) -> (f64, f64) {
    (duration * (1.0 - fraction), duration)
}
