//! Pulse-based flooding with least-squares clock estimation.

use std::collections::VecDeque;

use thiserror::Error;

use crate::clocks::{LogicalClock, Micros, Ticks};

use super::{Beacon, Outgoing, ProtocolError, Reaction, SyncParams};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FitError {
    #[error("need at least two points, have {0}")]
    TooFewPoints(usize),
    #[error("all points share one x value")]
    DegenerateX,
}

/// Ordinary least-squares line `y = intercept + slope * x`.
///
/// The fit is anchored at the data centroid; [`LineFit::eval`] uses that
/// anchor so evaluating near the data does not lose precision to a large
/// intercept.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    x_anchor: Ticks,
    x_mean: f64,
    y_mean: f64,
}

impl LineFit {
    pub fn eval(&self, x: Ticks) -> f64 {
        self.y_mean + self.slope * ((x - self.x_anchor) as f64 - self.x_mean)
    }
}

/// Least-squares fit of `y` on `x`.
pub fn least_squares_fit(points: &[(Ticks, Micros)]) -> Result<LineFit, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints(points.len()));
    }
    // Shift x by an exact integer so the f64 arithmetic stays small.
    let anchor = points[0].0;
    let n = points.len() as f64;
    let x_mean = points.iter().map(|&(x, _)| (x - anchor) as f64).sum::<f64>() / n;
    let y_mean = points.iter().map(|&(_, y)| y).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in points {
        let dx = (x - anchor) as f64 - x_mean;
        sxx += dx * dx;
        sxy += dx * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(FitError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * (anchor as f64 + x_mean);
    Ok(LineFit { slope, intercept, x_anchor: anchor, x_mean, y_mean })
}

/// Bounded FIFO of `(local hardware, remote logical)` samples.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTable {
    capacity: usize,
    entries: VecDeque<(Ticks, Micros)>,
}

impl RegressionTable {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "regression table needs room for one entry");
        Self { capacity, entries: VecDeque::with_capacity(capacity) }
    }

    pub fn push(&mut self, local_hw: Ticks, remote: Micros) {
        if self.entries.len() == self.capacity {
            self.entries.pop_front();
        }
        self.entries.push_back((local_hw, remote));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = &(Ticks, Micros)> {
        self.entries.iter()
    }

    pub fn fit(&self) -> Result<LineFit, FitError> {
        let pts: Vec<_> = self.entries.iter().copied().collect();
        least_squares_fit(&pts)
    }
}

/// PulseSync node. The reference emits a numbered pulse on its timer; other
/// nodes accept each pulse once, refit their clock to the regression table
/// and forward the pulse straight away.
#[derive(Debug, Clone)]
pub struct PulseSync {
    is_reference: bool,
    table: RegressionTable,
    highest_seq: Option<u64>,
}

impl PulseSync {
    pub fn new(is_reference: bool, params: &SyncParams) -> Self {
        Self { is_reference, table: RegressionTable::new(params.regression_entries), highest_seq: None }
    }

    pub fn table(&self) -> &RegressionTable {
        &self.table
    }

    pub fn highest_seq(&self) -> Option<u64> {
        self.highest_seq
    }

    pub fn on_beacon_timer(&mut self) -> Option<Outgoing> {
        if !self.is_reference {
            return None;
        }
        let seq = self.highest_seq.map_or(1, |s| s + 1);
        self.highest_seq = Some(seq);
        Some(Outgoing { seq, urgent: false })
    }

    pub fn on_receive(
        &mut self,
        clock: &mut LogicalClock,
        hw_now: Ticks,
        beacon: &Beacon,
        remote: Micros,
    ) -> Result<Reaction, ProtocolError> {
        if self.is_reference || self.highest_seq.is_some_and(|h| beacon.seq <= h) {
            return Ok(Reaction::IGNORED);
        }
        self.highest_seq = Some(beacon.seq);
        self.table.push(hw_now, remote);
        match self.table.fit() {
            Ok(fit) => clock.set(hw_now, fit.eval(hw_now), fit.slope - 1.0),
            // offset-only until the table can support a slope
            Err(_) => clock.set(hw_now, remote, 0.0),
        }
        Ok(Reaction { accepted: true, forward: Some(Outgoing { seq: beacon.seq, urgent: true }) })
    }
}
