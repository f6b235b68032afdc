//! Clock synchronization protocols behind one per-node interface.
//!
//! Every protocol reacts to two stimuli: its own beacon timer and the
//! uncorrupted reception of a [`Beacon`]. Handlers mutate the node's
//! [`LogicalClock`] in place and report whether a frame should go out.

mod avt_flood;
mod avt_p2p;
mod gtsp;
mod pulsesync;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avt::{AvtError, AvtParams, Feedback};
use crate::clocks::{ClockError, LogicalClock, Micros, Ticks};

pub use avt_flood::AvtFlood;
pub use avt_p2p::AvtP2p;
pub use gtsp::{Gtsp, Neighbor};
pub use pulsesync::{least_squares_fit, FitError, LineFit, PulseSync, RegressionTable};

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Avt(#[from] AvtError),
    #[error("unknown protocol {0:?} (expected avt_flood, avt_p2p, pulsesync or gtsp)")]
    UnknownProtocol(String),
}

/// The synchronization message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beacon {
    pub sender: u32,
    pub seq: u64,
    /// Sender's logical clock when the frame completes, in microseconds.
    pub logical_time: Micros,
    /// Sender's hardware clock at the same instant.
    pub hw_time: Ticks,
}

/// Received time minus local logical reading; positive means the local
/// clock is behind the sender.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SyncError(pub Micros);

impl SyncError {
    pub fn measure(remote: Micros, local: Micros) -> Self {
        SyncError(remote - local)
    }
}

/// Speed feedback for a tracker from one error sample. Errors within
/// `dead_band` microseconds of zero count as good.
pub fn derive_feedback(error: SyncError, dead_band: f64) -> Feedback {
    if error.0.abs() <= dead_band {
        Feedback::Good
    } else if error.0 > 0.0 {
        Feedback::Up
    } else {
        Feedback::Down
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ProtocolKind {
    #[serde(rename = "avt_flood")]
    AvtFlood,
    #[serde(rename = "avt_p2p")]
    AvtP2p,
    #[serde(rename = "pulsesync")]
    PulseSync,
    #[serde(rename = "gtsp")]
    Gtsp,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [Self::AvtFlood, Self::AvtP2p, Self::PulseSync, Self::Gtsp];

    pub fn name(self) -> &'static str {
        match self {
            Self::AvtFlood => "avt_flood",
            Self::AvtP2p => "avt_p2p",
            Self::PulseSync => "pulsesync",
            Self::Gtsp => "gtsp",
        }
    }

    /// Flooding protocols have a reference node whose clock is never steered.
    pub fn has_reference(self) -> bool {
        matches!(self, Self::AvtFlood | Self::PulseSync)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| ProtocolError::UnknownProtocol(s.to_owned()))
    }
}

/// Protocol tuning shared by all nodes of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyncParams {
    pub v_min: f64,
    pub v_max: f64,
    pub v0: f64,
    pub avt: AvtParams,
    /// Errors at or below this magnitude (us) are reported to the tracker as good.
    pub good_band: f64,
    pub regression_entries: usize,
    pub gtsp_max_neighbors: usize,
    pub gtsp_eviction_periods: u64,
}

impl Default for SyncParams {
    fn default() -> Self {
        Self {
            v_min: -2e-4,
            v_max: 2e-4,
            v0: 0.0,
            avt: AvtParams::default(),
            good_band: 1.0,
            regression_entries: 8,
            gtsp_max_neighbors: 10,
            gtsp_eviction_periods: 5,
        }
    }
}

/// A frame the protocol wants to send; stamping happens at transmit time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Outgoing {
    pub seq: u64,
    /// Forwarded pulses skip the beacon period and go to the MAC at once.
    pub urgent: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Reaction {
    pub accepted: bool,
    pub forward: Option<Outgoing>,
}

impl Reaction {
    pub const IGNORED: Reaction = Reaction { accepted: false, forward: None };
    pub const ACCEPTED: Reaction = Reaction { accepted: true, forward: None };
}

/// Per-node protocol state.
#[derive(Debug, Clone)]
pub enum ProtocolState {
    AvtFlood(AvtFlood),
    AvtP2p(AvtP2p),
    PulseSync(PulseSync),
    Gtsp(Gtsp),
}

impl ProtocolState {
    pub fn new(kind: ProtocolKind, is_reference: bool, params: &SyncParams) -> Result<Self, ProtocolError> {
        Ok(match kind {
            ProtocolKind::AvtFlood => Self::AvtFlood(AvtFlood::new(is_reference, params)?),
            ProtocolKind::AvtP2p => Self::AvtP2p(AvtP2p::new(params)?),
            ProtocolKind::PulseSync => Self::PulseSync(PulseSync::new(is_reference, params)),
            ProtocolKind::Gtsp => Self::Gtsp(Gtsp::new(params)),
        })
    }

    pub fn kind(&self) -> ProtocolKind {
        match self {
            Self::AvtFlood(_) => ProtocolKind::AvtFlood,
            Self::AvtP2p(_) => ProtocolKind::AvtP2p,
            Self::PulseSync(_) => ProtocolKind::PulseSync,
            Self::Gtsp(_) => ProtocolKind::Gtsp,
        }
    }

    pub fn on_beacon_timer(
        &mut self,
        clock: &mut LogicalClock,
        hw_now: Ticks,
    ) -> Result<Option<Outgoing>, ProtocolError> {
        match self {
            Self::AvtFlood(p) => Ok(p.on_beacon_timer()),
            Self::AvtP2p(p) => Ok(p.on_beacon_timer()),
            Self::PulseSync(p) => Ok(p.on_beacon_timer()),
            Self::Gtsp(p) => p.on_beacon_timer(clock, hw_now),
        }
    }

    /// `remote` is the sender's timestamp as measured by this node
    /// (including any timestamping noise).
    pub fn on_receive(
        &mut self,
        clock: &mut LogicalClock,
        hw_now: Ticks,
        beacon: &Beacon,
        remote: Micros,
    ) -> Result<Reaction, ProtocolError> {
        match self {
            Self::AvtFlood(p) => p.on_receive(clock, hw_now, beacon, remote),
            Self::AvtP2p(p) => p.on_receive(clock, hw_now, remote),
            Self::PulseSync(p) => p.on_receive(clock, hw_now, beacon, remote),
            Self::Gtsp(p) => p.on_receive(clock, hw_now, beacon, remote),
        }
    }
}
