//! Gradient-style synchronization by distributed averaging over a bounded
//! neighbour table.

use crate::clocks::{LogicalClock, Micros, Ticks};

use super::{Beacon, Outgoing, ProtocolError, Reaction, SyncParams};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub id: u32,
    pub last_remote: Micros,
    pub last_local: Ticks,
    /// Neighbour's logical rate measured against our hardware clock, from
    /// the two most recent readings. `None` until two readings exist.
    pub rate: Option<f64>,
    /// Value of our period counter when the neighbour was last heard.
    pub last_heard: u64,
}

impl Neighbor {
    fn projected(&self, hw_now: Ticks, fallback_rate: f64) -> Micros {
        self.last_remote + (hw_now - self.last_local) as f64 * self.rate.unwrap_or(fallback_rate)
    }
}

#[derive(Debug, Clone)]
pub struct Gtsp {
    neighbors: Vec<Neighbor>,
    max_neighbors: usize,
    eviction_periods: u64,
    period: u64,
}

impl Gtsp {
    pub fn new(params: &SyncParams) -> Self {
        Self {
            neighbors: Vec::with_capacity(params.gtsp_max_neighbors),
            max_neighbors: params.gtsp_max_neighbors,
            eviction_periods: params.gtsp_eviction_periods,
            period: 0,
        }
    }

    pub fn neighbors(&self) -> &[Neighbor] {
        &self.neighbors
    }

    pub fn period(&self) -> u64 {
        self.period
    }

    pub fn on_receive(
        &mut self,
        _clock: &mut LogicalClock,
        hw_now: Ticks,
        beacon: &Beacon,
        remote: Micros,
    ) -> Result<Reaction, ProtocolError> {
        if let Some(n) = self.neighbors.iter_mut().find(|n| n.id == beacon.sender) {
            if hw_now > n.last_local {
                n.rate = Some((remote - n.last_remote) / (hw_now - n.last_local) as f64);
            }
            n.last_remote = remote;
            n.last_local = hw_now;
            n.last_heard = self.period;
            return Ok(Reaction::ACCEPTED);
        }
        if self.neighbors.len() >= self.max_neighbors {
            return Ok(Reaction::IGNORED);
        }
        self.neighbors.push(Neighbor {
            id: beacon.sender,
            last_remote: remote,
            last_local: hw_now,
            rate: None,
            last_heard: self.period,
        });
        Ok(Reaction::ACCEPTED)
    }

    /// Starts a new period: evicts silent neighbours, then moves both rate
    /// and offset to the mean over this node and its table.
    pub fn on_beacon_timer(
        &mut self,
        clock: &mut LogicalClock,
        hw_now: Ticks,
    ) -> Result<Option<Outgoing>, ProtocolError> {
        self.period += 1;
        let (period, limit) = (self.period, self.eviction_periods);
        self.neighbors.retain(|n| period - n.last_heard < limit);

        if !self.neighbors.is_empty() {
            let own_rate = 1.0 + clock.rate_corr;
            let own_time = clock.read(hw_now)?;
            let count = (self.neighbors.len() + 1) as f64;
            let (mut rate_sum, mut offset_sum) = (0.0, 0.0);
            for n in &self.neighbors {
                rate_sum += n.rate.unwrap_or(own_rate) - own_rate;
                offset_sum += n.projected(hw_now, own_rate) - own_time;
            }
            clock.adjust_offset(hw_now, offset_sum / count)?;
            clock.set_rate(hw_now, clock.rate_corr + rate_sum / count)?;
        }
        Ok(Some(Outgoing { seq: self.period, urgent: false }))
    }
}
