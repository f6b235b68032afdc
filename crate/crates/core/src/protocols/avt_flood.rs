use crate::avt::Avt;
use crate::clocks::{LogicalClock, Micros, Ticks};

use super::{derive_feedback, Beacon, Outgoing, ProtocolError, Reaction, SyncError, SyncParams};

/// Flooding synchronization with a speed tracker.
///
/// The reference numbers its beacons. Everyone else relays the freshest
/// sequence number it holds on its own timer, stamped with its own clock,
/// and accepts only strictly newer numbers. An accepted beacon corrects the
/// whole offset and feeds the sign of the error to the tracker.
#[derive(Debug, Clone, Copy)]
pub struct AvtFlood {
    is_reference: bool,
    avt: Avt,
    highest_seq: Option<u64>,
    good_band: f64,
}

impl AvtFlood {
    pub fn new(is_reference: bool, params: &SyncParams) -> Result<Self, ProtocolError> {
        Ok(Self {
            is_reference,
            avt: Avt::with_params(params.v_min, params.v_max, params.v0, &params.avt)?,
            highest_seq: None,
            good_band: params.good_band,
        })
    }

    pub fn highest_seq(&self) -> Option<u64> {
        self.highest_seq
    }

    pub fn tracker(&self) -> &Avt {
        &self.avt
    }

    pub fn on_beacon_timer(&mut self) -> Option<Outgoing> {
        if self.is_reference {
            let next = self.highest_seq.map_or(1, |s| s + 1);
            self.highest_seq = Some(next);
        }
        self.highest_seq.map(|seq| Outgoing { seq, urgent: false })
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
        let error = SyncError::measure(remote, clock.read(hw_now)?);
        clock.adjust_offset(hw_now, error.0)?;
        self.avt.adjust(derive_feedback(error, self.good_band));
        let (lo, hi) = self.avt.bounds();
        clock.set_rate_bounded(hw_now, self.avt.value(), lo, hi)?;
        self.highest_seq = Some(beacon.seq);
        Ok(Reaction::ACCEPTED)
    }
}
