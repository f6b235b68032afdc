//! Probabilistic broadcast channel and a carrier-sense MAC.
//!
//! Reception is decided per receiver with an independent draw against
//! [`reception_probability`]. A frame is corrupted at a receiver when any
//! other frame overlaps it in time and that frame's sender is within range
//! of the receiver. A node hears its own transmissions at distance zero, so
//! a node that is transmitting cannot receive (half duplex).

use serde::{Deserialize, Serialize};

use crate::engine::{SimRng, SimTime};
use crate::protocols::Beacon;
use crate::world::{in_range, Position};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationModel {
    UnitDisk,
    GaussianEdge,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    pub range: f64,
    pub loss_prob: f64,
    pub fade_width: f64,
    pub model: PropagationModel,
}

impl ChannelParams {
    pub fn is_valid(&self) -> bool {
        self.range > 0.0 && (0.0..=1.0).contains(&self.loss_prob) && self.fade_width >= 0.0
    }
}

/// Probability that a frame sent over `distance` meters is received.
///
/// Unit disk: `1 - loss_prob` inside range, zero outside. Gaussian edge: the
/// same plateau inside range, then a Gaussian tail
/// `exp(-(d - range)^2 / (2 fade_width^2))` beyond it.
pub fn reception_probability(distance: f64, p: &ChannelParams) -> f64 {
    let base = 1.0 - p.loss_prob;
    match p.model {
        PropagationModel::UnitDisk => {
            if distance <= p.range {
                base
            } else {
                0.0
            }
        }
        PropagationModel::GaussianEdge => {
            let excess = (distance - p.range).max(0.0);
            if excess == 0.0 {
                base
            } else if p.fade_width == 0.0 {
                0.0
            } else {
                base * (-(excess * excess) / (2.0 * p.fade_width * p.fade_width)).exp()
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TxId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub id: TxId,
    pub sender: u32,
    pub sender_pos: Position,
    pub start: SimTime,
    pub duration: f64,
    pub payload: Beacon,
}

impl Transmission {
    pub fn end(&self) -> f64 {
        self.start.secs() + self.duration
    }

    pub fn active_at(&self, t: SimTime) -> bool {
        self.start <= t && t.secs() < self.end()
    }

    /// Half-open interval intersection.
    pub fn overlaps(&self, other: &Transmission) -> bool {
        self.start.secs() < other.end() && other.start.secs() < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub receiver: u32,
    pub at: SimTime,
}

/// Result of one broadcast: the deliveries that survived the channel draw
/// (collisions are judged later, at delivery time) and the number of
/// in-range receivers that lost the frame to the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BroadcastOutcome {
    pub deliveries: Vec<Delivery>,
    pub lost_in_range: u64,
}

/// Draws reception for every node other than `tx.sender`. `positions` holds
/// every node's position at `tx.start`.
pub fn broadcast(
    tx: &Transmission,
    positions: &[Position],
    params: &ChannelParams,
    rng: &mut SimRng,
) -> BroadcastOutcome {
    let at = tx.start.after(tx.duration);
    let mut deliveries = Vec::new();
    let mut lost_in_range = 0;
    for (i, pos) in positions.iter().enumerate() {
        let receiver = i as u32;
        if receiver == tx.sender {
            continue;
        }
        let p = reception_probability(tx.sender_pos.distance(pos), params);
        if p <= 0.0 {
            continue;
        }
        if rng.bernoulli(p) {
            deliveries.push(Delivery { receiver, at });
        } else if in_range(&tx.sender_pos, pos, params.range) {
            lost_in_range += 1;
        }
    }
    BroadcastOutcome { deliveries, lost_in_range }
}

/// Whether `tx` is corrupted at a receiver located at `receiver_pos`.
pub fn is_corrupted<'a>(
    tx: &Transmission,
    others: impl IntoIterator<Item = &'a Transmission>,
    receiver_pos: &Position,
    range: f64,
) -> bool {
    others.into_iter().any(|o| o.id != tx.id && o.overlaps(tx) && in_range(&o.sender_pos, receiver_pos, range))
}

/// Corruption flag for each transmission in `active` as seen by a receiver
/// at `receiver_pos`.
pub fn detect_collisions(active: &[Transmission], receiver_pos: &Position, range: f64) -> Vec<bool> {
    active.iter().map(|tx| is_corrupted(tx, active, receiver_pos, range)).collect()
}

/// Frames on the air, kept until they can no longer overlap anything new.
#[derive(Debug, Default)]
pub struct Airspace {
    frames: Vec<Transmission>,
    next_id: u64,
}

impl Airspace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_id(&mut self) -> TxId {
        let id = TxId(self.next_id);
        self.next_id += 1;
        id
    }

    pub fn push(&mut self, tx: Transmission) {
        self.frames.push(tx);
    }

    pub fn get(&self, id: TxId) -> Option<&Transmission> {
        self.frames.iter().find(|t| t.id == id)
    }

    pub fn frames(&self) -> &[Transmission] {
        &self.frames
    }

    /// Drops frames that ended more than `horizon` seconds before `now`.
    pub fn prune(&mut self, now: SimTime, horizon: f64) {
        let cutoff = now.secs() - horizon;
        self.frames.retain(|t| t.end() > cutoff);
    }

    /// Carrier sense at `pos`: any frame on the air from a sender in range.
    pub fn busy(&self, pos: &Position, t: SimTime, range: f64) -> bool {
        self.frames.iter().any(|f| f.active_at(t) && in_range(&f.sender_pos, pos, range))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MacParams {
    pub frame_duration: f64,
    pub backoff_min: f64,
    pub backoff_max: f64,
    pub max_retries: u32,
}

impl Default for MacParams {
    fn default() -> Self {
        Self { frame_duration: 0.002, backoff_min: 0.001, backoff_max: 0.010, max_retries: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MacDecision {
    Transmit,
    Backoff(f64),
    Drop,
}

/// One carrier-sense step. `attempt` counts prior busy senses for this frame.
pub fn mac_step(busy: bool, attempt: u32, params: &MacParams, rng: &mut SimRng) -> MacDecision {
    if !busy {
        MacDecision::Transmit
    } else if attempt >= params.max_retries {
        MacDecision::Drop
    } else {
        let d = rng.uniform(params.backoff_min, params.backoff_max).expect("validated backoff window");
        MacDecision::Backoff(d)
    }
}

/// Start time for a frame offered at `t` against a fixed set of frames on
/// the air, or `None` when the MAC gives up.
pub fn csma_defer(
    sender_pos: &Position,
    t: SimTime,
    air: &Airspace,
    range: f64,
    params: &MacParams,
    rng: &mut SimRng,
) -> Option<SimTime> {
    let mut at = t;
    let mut attempt = 0;
    loop {
        match mac_step(air.busy(sender_pos, at, range), attempt, params, rng) {
            MacDecision::Transmit => return Some(at),
            MacDecision::Drop => return None,
            MacDecision::Backoff(d) => {
                at = at.after(d);
                attempt += 1;
            }
        }
    }
}

/// Per-run channel counters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost_by_channel: u64,
    pub corrupted_by_collision: u64,
    pub dropped_by_mac: u64,
}
