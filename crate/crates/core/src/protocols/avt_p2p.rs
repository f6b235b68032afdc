use crate::avt::Avt;
use crate::clocks::{LogicalClock, Micros, Ticks};

use super::{derive_feedback, Outgoing, ProtocolError, Reaction, SyncError, SyncParams};

/// Peer-to-peer synchronization with a speed tracker. Every beacon from any
/// neighbour is processed the same way: half the error goes into the offset
/// and its sign drives the tracker. No per-neighbour state is kept.
#[derive(Debug, Clone, Copy)]
pub struct AvtP2p {
    avt: Avt,
    sent: u64,
    good_band: f64,
}

impl AvtP2p {
    pub fn new(params: &SyncParams) -> Result<Self, ProtocolError> {
        Ok(Self {
            avt: Avt::with_params(params.v_min, params.v_max, params.v0, &params.avt)?,
            sent: 0,
            good_band: params.good_band,
        })
    }

    pub fn tracker(&self) -> &Avt {
        &self.avt
    }

    pub fn on_beacon_timer(&mut self) -> Option<Outgoing> {
        self.sent += 1;
        Some(Outgoing { seq: self.sent, urgent: false })
    }

    pub fn on_receive(
        &mut self,
        clock: &mut LogicalClock,
        hw_now: Ticks,
        remote: Micros,
    ) -> Result<Reaction, ProtocolError> {
        let error = SyncError::measure(remote, clock.read(hw_now)?);
        clock.adjust_offset(hw_now, error.0 / 2.0)?;
        self.avt.adjust(derive_feedback(error, self.good_band));
        let (lo, hi) = self.avt.bounds();
        clock.set_rate_bounded(hw_now, self.avt.value(), lo, hi)?;
        Ok(Reaction::ACCEPTED)
    }
}
