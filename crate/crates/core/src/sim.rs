//! One simulation run: nodes, radio, mobility and sampling wired onto the
//! event queue.
//!
//! Every random draw comes from a stream forked off the run seed by
//! subsystem label, so adding draws in one subsystem never shifts another.

use std::io::Write;

use thiserror::Error;

use crate::clocks::{ClockError, HardwareClock, LogicalClock, Ticks};
use crate::config::{MobilityModel, ScenarioConfig};
use crate::engine::{Digest, EngineError, Event, EventQueue, RunSummary, SimRng, SimTime, Target};
use crate::metrics::{sample_global_error, ErrorSample, MetricsError};
use crate::protocols::{Beacon, Outgoing, ProtocolError, ProtocolState};
use crate::radio::{
    broadcast, is_corrupted, mac_step, Airspace, ChannelCounters, ChannelParams, MacDecision, MacParams, Transmission,
    TxId,
};
use crate::world::{next_leg, place_nodes, MobilityState, Phase, Position, WorldError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("invalid scenario: {0}")]
    Config(#[from] crate::config::ConfigError),
    #[error("frame {0:?} vanished before delivery")]
    LostFrame(TxId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScriptAction {
    PartitionStart,
    PartitionEnd,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    Script(ScriptAction),
    PauseExpiry { node: u32, leg: u64 },
    WaypointArrival { node: u32, leg: u64 },
    MessageDelivery { receiver: u32, tx: TxId },
    MacAttempt { node: u32, attempt: u32, out: Outgoing },
    BeaconTimer { node: u32 },
    MetricSample { index: u64 },
}

impl Event for SimEvent {
    fn rank(&self) -> u8 {
        match self {
            SimEvent::Script(_) => 0,
            SimEvent::PauseExpiry { .. } => 1,
            SimEvent::WaypointArrival { .. } => 2,
            SimEvent::MessageDelivery { .. } => 3,
            SimEvent::MacAttempt { .. } => 4,
            SimEvent::BeaconTimer { .. } => 5,
            SimEvent::MetricSample { .. } => 6,
        }
    }

    fn target(&self) -> Target {
        match *self {
            SimEvent::Script(_) | SimEvent::MetricSample { .. } => Target::Global,
            SimEvent::PauseExpiry { node, .. }
            | SimEvent::WaypointArrival { node, .. }
            | SimEvent::MacAttempt { node, .. }
            | SimEvent::BeaconTimer { node } => Target::Node(node),
            SimEvent::MessageDelivery { receiver, .. } => Target::Node(receiver),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            SimEvent::Script(_) => "script",
            SimEvent::PauseExpiry { .. } => "pause_expiry",
            SimEvent::WaypointArrival { .. } => "waypoint_arrival",
            SimEvent::MessageDelivery { .. } => "message_delivery",
            SimEvent::MacAttempt { .. } => "mac_attempt",
            SimEvent::BeaconTimer { .. } => "beacon_timer",
            SimEvent::MetricSample { .. } => "metric_sample",
        }
    }

    fn digest(&self) -> u64 {
        let mut d = Digest::new();
        match *self {
            SimEvent::Script(a) => d.u64(a as u64),
            SimEvent::PauseExpiry { leg, .. } | SimEvent::WaypointArrival { leg, .. } => d.u64(leg),
            SimEvent::MessageDelivery { tx, .. } => d.u64(tx.0),
            SimEvent::MacAttempt { attempt, out, .. } => d.u64(attempt as u64).u64(out.seq).u64(out.urgent as u64),
            SimEvent::BeaconTimer { .. } => &mut d,
            SimEvent::MetricSample { index } => d.u64(index),
        };
        d.finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Mode {
    Static,
    Waypoint,
    Pinned,
    Shuttle { to_island: bool },
}

#[derive(Debug, Clone)]
struct Node {
    hw: HardwareClock,
    clock: LogicalClock,
    proto: ProtocolState,
    mobility: MobilityState,
    mode: Mode,
    /// Bumped whenever the mobility plan changes; events from older legs
    /// are ignored.
    leg: u64,
}

struct Streams {
    mobility: SimRng,
    channel: SimRng,
    mac: SimRng,
    timers: SimRng,
    stamps: SimRng,
    forward: SimRng,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub samples: Vec<ErrorSample>,
    pub counters: ChannelCounters,
    pub events: RunSummary,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    queue: EventQueue<SimEvent>,
    nodes: Vec<Node>,
    air: Airspace,
    counters: ChannelCounters,
    channel: ChannelParams,
    mac: MacParams,
    rng: Streams,
    samples: Vec<ErrorSample>,
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let root = SimRng::new(cfg.seed);
        let mut placement = root.fork("placement");
        let mut drift = root.fork("drift");
        let mut offsets = root.fork("offsets");
        let mut rng = Streams {
            mobility: root.fork("mobility"),
            channel: root.fork("channel"),
            mac: root.fork("mac"),
            timers: root.fork("timers"),
            stamps: root.fork("stamps"),
            forward: root.fork("forward"),
        };

        let params = cfg.sync_params();
        let positions = place_nodes(cfg.node_count, &cfg.roam_rect(), &mut placement)?;
        let mut queue = EventQueue::new();
        let mut nodes = Vec::with_capacity(cfg.node_count);
        for (i, pos) in positions.into_iter().enumerate() {
            let id = i as u32;
            let rho = drift.uniform(-cfg.clock.max_drift, cfg.clock.max_drift)?;
            let offset = offsets.uniform(0.0, cfg.clock.max_start_offset as f64)?.floor() as Ticks;
            let hw = HardwareClock::new(rho, offset)?;
            let clock = LogicalClock::tracking(hw.read(SimTime::ZERO));
            let is_reference = cfg.protocol.has_reference() && id == 0;
            let proto = ProtocolState::new(cfg.protocol, is_reference, &params)?;
            let (mode, mobility) = match cfg.mobility.model {
                MobilityModel::Static => (Mode::Static, MobilityState::paused(pos, SimTime::ZERO, f64::INFINITY)),
                MobilityModel::RandomWaypoint => {
                    let dwell = rng.mobility.uniform(cfg.mobility.pause_min, cfg.mobility.pause_max)?;
                    queue.schedule(SimTime::from_secs(dwell)?, SimEvent::PauseExpiry { node: id, leg: 0 })?;
                    (Mode::Waypoint, MobilityState::paused(pos, SimTime::ZERO, dwell))
                }
            };
            nodes.push(Node { hw, clock, proto, mobility, mode, leg: 0 });
            let first = rng.timers.uniform(0.0, cfg.beacon_period)?;
            queue.schedule(SimTime::from_secs(first)?, SimEvent::BeaconTimer { node: id })?;
        }
        if let Some(p) = &cfg.partition {
            queue.schedule(SimTime::from_secs(p.start)?, SimEvent::Script(ScriptAction::PartitionStart))?;
            queue.schedule(SimTime::from_secs(p.end)?, SimEvent::Script(ScriptAction::PartitionEnd))?;
        }
        queue.schedule(SimTime::from_secs(cfg.metrics.sample_interval)?, SimEvent::MetricSample { index: 1 })?;

        Ok(Self {
            channel: cfg.channel_params(),
            mac: cfg.mac_params(),
            cfg,
            queue,
            nodes,
            air: Airspace::new(),
            counters: ChannelCounters::default(),
            rng,
            samples: Vec::new(),
        })
    }

    /// Runs to the configured duration. With `trace` set, one line per
    /// processed event is written to it.
    pub fn run(mut self, trace: Option<&mut dyn Write>) -> Result<RunOutput, SimError> {
        let horizon = SimTime::from_secs(self.cfg.duration)?;
        let mut queue = std::mem::take(&mut self.queue);
        let events = queue.run_until(horizon, trace, |q, ev| self.handle(q, ev))?;
        Ok(RunOutput { samples: self.samples, counters: self.counters, events })
    }

    fn handle(&mut self, q: &mut EventQueue<SimEvent>, ev: SimEvent) -> Result<(), SimError> {
        let now = q.now();
        match ev {
            SimEvent::Script(action) => self.on_script(q, action, now),
            SimEvent::PauseExpiry { node, leg } => self.on_pause_expiry(q, node, leg, now),
            SimEvent::WaypointArrival { node, leg } => self.on_arrival(q, node, leg, now),
            SimEvent::MessageDelivery { receiver, tx } => self.on_delivery(q, receiver, tx, now),
            SimEvent::MacAttempt { node, attempt, out } => self.on_mac_attempt(q, node, attempt, out, now),
            SimEvent::BeaconTimer { node } => self.on_beacon_timer(q, node, now),
            SimEvent::MetricSample { index } => self.on_sample(q, index, now),
        }
    }

    fn position(&self, node: u32, now: SimTime) -> Result<Position, SimError> {
        Ok(self.nodes[node as usize].mobility.position_at(now)?)
    }

    fn on_beacon_timer(&mut self, q: &mut EventQueue<SimEvent>, node: u32, now: SimTime) -> Result<(), SimError> {
        let n = &mut self.nodes[node as usize];
        let hw = n.hw.read(now);
        if let Some(out) = n.proto.on_beacon_timer(&mut n.clock, hw)? {
            self.on_mac_attempt(q, node, 0, out, now)?;
        }
        let gap = self.cfg.beacon_period + self.rng.timers.uniform(0.0, self.cfg.beacon_jitter)?;
        q.schedule(now.after(gap), SimEvent::BeaconTimer { node })?;
        Ok(())
    }

    fn on_mac_attempt(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        node: u32,
        attempt: u32,
        out: Outgoing,
        now: SimTime,
    ) -> Result<(), SimError> {
        let pos = self.position(node, now)?;
        let busy = self.air.busy(&pos, now, self.channel.range);
        match mac_step(busy, attempt, &self.mac, &mut self.rng.mac) {
            MacDecision::Transmit => self.transmit(q, node, pos, out, now),
            MacDecision::Backoff(d) => {
                q.schedule(now.after(d), SimEvent::MacAttempt { node, attempt: attempt + 1, out })?;
                Ok(())
            }
            MacDecision::Drop => {
                self.counters.dropped_by_mac += 1;
                Ok(())
            }
        }
    }

    fn transmit(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        node: u32,
        pos: Position,
        out: Outgoing,
        now: SimTime,
    ) -> Result<(), SimError> {
        let duration = self.mac.frame_duration;
        // stamped as the last bit leaves, so the receiver sees zero latency
        let end = now.after(duration);
        let n = &self.nodes[node as usize];
        let hw_time = n.hw.read(end);
        let payload = Beacon { sender: node, seq: out.seq, logical_time: n.clock.read(hw_time)?, hw_time };

        self.air.prune(now, 2.0 * duration);
        let tx = Transmission { id: self.air.next_id(), sender: node, sender_pos: pos, start: now, duration, payload };
        let positions = self.nodes.iter().map(|n| n.mobility.position_at(now)).collect::<Result<Vec<_>, _>>()?;
        let outcome = broadcast(&tx, &positions, &self.channel, &mut self.rng.channel);
        self.counters.sent += 1;
        self.counters.lost_by_channel += outcome.lost_in_range;
        for d in outcome.deliveries {
            q.schedule(d.at, SimEvent::MessageDelivery { receiver: d.receiver, tx: tx.id })?;
        }
        self.air.push(tx);
        Ok(())
    }

    fn on_delivery(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        receiver: u32,
        id: TxId,
        now: SimTime,
    ) -> Result<(), SimError> {
        let pos = self.position(receiver, now)?;
        let tx = self.air.get(id).ok_or(SimError::LostFrame(id))?;
        if is_corrupted(tx, self.air.frames(), &pos, self.channel.range) {
            self.counters.corrupted_by_collision += 1;
            return Ok(());
        }
        self.counters.delivered += 1;
        let beacon = tx.payload;
        let remote = beacon.logical_time + self.rng.stamps.normal(0.0, self.cfg.radio.timestamp_jitter_us);
        let n = &mut self.nodes[receiver as usize];
        let hw = n.hw.read(now);
        let reaction = n.proto.on_receive(&mut n.clock, hw, &beacon, remote)?;
        if let Some(out) = reaction.forward {
            let delay = self.rng.forward.uniform(0.0, self.cfg.pulsesync.forward_jitter)?;
            q.schedule(now.after(delay), SimEvent::MacAttempt { node: receiver, attempt: 0, out })?;
        }
        Ok(())
    }

    fn schedule_phase_end(&self, q: &mut EventQueue<SimEvent>, node: u32) -> Result<(), SimError> {
        let n = &self.nodes[node as usize];
        if n.mobility.phase_end.is_finite() {
            let at = SimTime::from_secs(n.mobility.phase_end)?;
            let ev = match n.mobility.phase {
                Phase::Moving => SimEvent::WaypointArrival { node, leg: n.leg },
                Phase::Paused => SimEvent::PauseExpiry { node, leg: n.leg },
            };
            q.schedule(at, ev)?;
        }
        Ok(())
    }

    fn on_pause_expiry(
        &mut self,
        q: &mut EventQueue<SimEvent>,
        node: u32,
        leg: u64,
        now: SimTime,
    ) -> Result<(), SimError> {
        let roam = self.cfg.roam_rect();
        let speed = (self.cfg.mobility.speed_min, self.cfg.mobility.speed_max);
        let courier = self.cfg.partition.as_ref().and_then(|p| p.courier.map(|c| (c, p.island)));
        let n = &mut self.nodes[node as usize];
        if n.leg != leg {
            return Ok(());
        }
        n.mobility = match n.mode {
            Mode::Static | Mode::Pinned => return Ok(()),
            Mode::Waypoint => next_leg(&n.mobility, now, &mut self.rng.mobility, &roam, speed)?,
            Mode::Shuttle { to_island } => {
                let (c, island) = courier.expect("shuttle mode implies a courier");
                let to = if to_island { island } else { c.harbor };
                n.mode = Mode::Shuttle { to_island: !to_island };
                MobilityState::moving(n.mobility.position_at(now)?, to, c.speed, now)
            }
        };
        n.leg += 1;
        self.schedule_phase_end(q, node)
    }

    fn on_arrival(&mut self, q: &mut EventQueue<SimEvent>, node: u32, leg: u64, now: SimTime) -> Result<(), SimError> {
        let pause = (self.cfg.mobility.pause_min, self.cfg.mobility.pause_max);
        let courier_pause = self.cfg.partition.as_ref().and_then(|p| p.courier.map(|c| c.pause));
        let n = &mut self.nodes[node as usize];
        if n.leg != leg {
            return Ok(());
        }
        n.mobility = match n.mode {
            Mode::Shuttle { .. } => {
                let dwell = courier_pause.expect("shuttle mode implies a courier");
                MobilityState::paused(n.mobility.target, now, now.secs() + dwell)
            }
            Mode::Waypoint => n.mobility.begin_pause(now, &mut self.rng.mobility, pause)?,
            Mode::Static | Mode::Pinned => MobilityState::paused(n.mobility.target, now, f64::INFINITY),
        };
        n.leg += 1;
        self.schedule_phase_end(q, node)
    }

    fn on_script(&mut self, q: &mut EventQueue<SimEvent>, action: ScriptAction, now: SimTime) -> Result<(), SimError> {
        let Some(p) = self.cfg.partition.clone() else {
            return Ok(());
        };
        let base = match self.cfg.mobility.model {
            MobilityModel::Static => Mode::Static,
            MobilityModel::RandomWaypoint => Mode::Waypoint,
        };
        match action {
            ScriptAction::PartitionStart => {
                for (k, &id) in p.nodes.iter().enumerate() {
                    let n = &mut self.nodes[id as usize];
                    n.mode = Mode::Pinned;
                    n.mobility = MobilityState::paused(p.pin_position(k), now, f64::INFINITY);
                    n.leg += 1;
                }
                if let Some(c) = p.courier {
                    let n = &mut self.nodes[c.node as usize];
                    n.mode = Mode::Shuttle { to_island: true };
                    n.mobility = MobilityState::paused(c.harbor, now, now.secs() + c.pause);
                    n.leg += 1;
                    self.schedule_phase_end(q, c.node)?;
                }
            }
            ScriptAction::PartitionEnd => {
                for &id in &p.nodes {
                    let n = &mut self.nodes[id as usize];
                    n.mode = base;
                    n.leg += 1;
                    if base == Mode::Waypoint {
                        n.mobility = MobilityState::paused(n.mobility.position_at(now)?, now, now.secs());
                        self.schedule_phase_end(q, id)?;
                    }
                }
                // the courier finishes its current leg or pause, then
                // continues under the normal model
                if let Some(c) = p.courier {
                    self.nodes[c.node as usize].mode = base;
                }
            }
        }
        Ok(())
    }

    fn on_sample(&mut self, q: &mut EventQueue<SimEvent>, index: u64, now: SimTime) -> Result<(), SimError> {
        let readings = self.nodes.iter().map(|n| n.clock.read(n.hw.read(now))).collect::<Result<Vec<_>, _>>()?;
        self.samples.push(sample_global_error(&readings, now.secs())?);
        let next = SimTime::from_secs(self.cfg.metrics.sample_interval * (index + 1) as f64)?;
        q.schedule(next, SimEvent::MetricSample { index: index + 1 })?;
        Ok(())
    }
}

/// Convenience wrapper: build and run.
pub fn simulate(cfg: &ScenarioConfig, trace: Option<&mut dyn Write>) -> Result<RunOutput, SimError> {
    Simulation::new(cfg.clone())?.run(trace)
}
