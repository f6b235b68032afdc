//! Deterministic discrete-event scheduling and seeded randomness.
//!
//! The queue orders events by `(time, kind rank, target, insertion counter)`,
//! which is a total order, so two runs over the same inputs dequeue the same
//! sequence on every platform.
//!
//! Randomness comes from ChaCha12 (`rand_chacha`). A run owns one root seed;
//! each subsystem forks its own generator with [`SimRng::fork`], which seeds
//! a ChaCha12 instance from the root seed (via `SeedableRng::seed_from_u64`)
//! and selects the ChaCha stream number `fnv1a64(label)`. Draws in one
//! subsystem therefore never shift the sequence seen by another.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::io::Write;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("event scheduled at {at} s, before current time {now} s")]
    ScheduleInPast { at: f64, now: f64 },
    #[error("invalid interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },
    #[error("invalid time {0} s")]
    InvalidTime(f64),
    #[error("trace output failed: {0}")]
    Trace(#[from] std::io::Error),
}

/// Simulation wall time in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    pub fn from_secs(secs: f64) -> Result<Self, EngineError> {
        if secs.is_finite() && secs >= 0.0 {
            Ok(SimTime(secs))
        } else {
            Err(EngineError::InvalidTime(secs))
        }
    }

    pub fn secs(self) -> f64 {
        self.0
    }

    /// `self + dt`, for a non-negative finite `dt`.
    pub fn after(self, dt: f64) -> SimTime {
        debug_assert!(dt.is_finite() && dt >= 0.0, "bad delay {dt}");
        SimTime(self.0 + dt)
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Who an event is addressed to. `Global` sorts before every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Target {
    Global,
    Node(u32),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Global => f.write_str("global"),
            Target::Node(n) => write!(f, "{n}"),
        }
    }
}

/// Payload contract for events held in an [`EventQueue`].
pub trait Event {
    /// Tie-break rank among events at the same instant; lower runs first.
    fn rank(&self) -> u8;
    fn target(&self) -> Target;
    fn kind_name(&self) -> &'static str;
    /// Stable digest of the payload, used only for trace diffing.
    fn digest(&self) -> u64;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(u64);

struct Scheduled<E> {
    time: SimTime,
    rank: u8,
    target: Target,
    seq: u64,
    event: E,
}

impl<E> Scheduled<E> {
    fn key(&self) -> (SimTime, u8, Target, u64) {
        (self.time, self.rank, self.target, self.seq)
    }
}

impl<E> PartialEq for Scheduled<E> {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl<E> Eq for Scheduled<E> {}

impl<E> PartialOrd for Scheduled<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Scheduled<E> {
    // Reversed: BinaryHeap is a max-heap and we want the smallest key on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

/// Per-kind event counts for one `run_until` call.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RunSummary {
    pub processed: u64,
    pub by_kind: BTreeMap<&'static str, u64>,
}

pub struct EventQueue<E> {
    heap: BinaryHeap<Scheduled<E>>,
    now: SimTime,
    counter: u64,
}

impl<E: Event> Default for EventQueue<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Event> EventQueue<E> {
    pub fn new() -> Self {
        Self { heap: BinaryHeap::new(), now: SimTime::ZERO, counter: 0 }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn peek_time(&self) -> Option<SimTime> {
        self.heap.peek().map(|s| s.time)
    }

    /// Queues `event` at `time`. Scheduling into the past is a logic error
    /// in the caller and is rejected.
    pub fn schedule(&mut self, time: SimTime, event: E) -> Result<EventHandle, EngineError> {
        if time < self.now {
            return Err(EngineError::ScheduleInPast { at: time.secs(), now: self.now.secs() });
        }
        let seq = self.counter;
        self.counter += 1;
        self.heap.push(Scheduled { time, rank: event.rank(), target: event.target(), seq, event });
        Ok(EventHandle(seq))
    }

    /// Removes the next event and advances the clock to its time.
    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let s = self.heap.pop()?;
        self.now = s.time;
        Some((s.time, s.event))
    }

    /// Processes every event with `time <= horizon` in queue order. When
    /// `trace` is set, one tab-separated line per event is written to it.
    pub fn run_until<F, Er>(
        &mut self,
        horizon: SimTime,
        mut trace: Option<&mut dyn Write>,
        mut handler: F,
    ) -> Result<RunSummary, Er>
    where
        F: FnMut(&mut Self, E) -> Result<(), Er>,
        Er: From<EngineError>,
    {
        let mut summary = RunSummary::default();
        while let Some(t) = self.peek_time() {
            if t > horizon {
                break;
            }
            let (time, event) = self.pop().expect("peeked");
            if let Some(w) = trace.as_deref_mut() {
                writeln!(w, "{}\t{}\t{}\t{:016x}", time, event.kind_name(), event.target(), event.digest())
                    .map_err(EngineError::from)?;
            }
            *summary.by_kind.entry(event.kind_name()).or_default() += 1;
            summary.processed += 1;
            handler(self, event)?;
        }
        if horizon > self.now {
            self.now = horizon;
        }
        Ok(summary)
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut d = Digest::new();
    d.write(bytes);
    d.finish()
}

/// Incremental FNV-1a hasher with explicit little-endian encodings, so the
/// result does not depend on the platform.
#[derive(Debug, Clone, Copy)]
pub struct Digest(u64);

impl Default for Digest {
    fn default() -> Self {
        Self::new()
    }
}

impl Digest {
    pub fn new() -> Self {
        Digest(0xcbf2_9ce4_8422_2325)
    }

    pub fn write(&mut self, bytes: &[u8]) -> &mut Self {
        for b in bytes {
            self.0 ^= u64::from(*b);
            self.0 = self.0.wrapping_mul(0x0000_0100_0000_01b3);
        }
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.write(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn finish(&self) -> u64 {
        self.0
    }
}

/// Seeded generator for one subsystem of a run.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    inner: ChaCha12Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        Self { seed, inner: ChaCha12Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent generator for the subsystem named `label`.
    pub fn fork(&self, label: &str) -> SimRng {
        let mut inner = ChaCha12Rng::seed_from_u64(self.seed);
        inner.set_stream(fnv1a64(label.as_bytes()));
        SimRng { seed: self.seed, inner }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`; `lo` when the interval is degenerate.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64, EngineError> {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(EngineError::InvalidInterval { lo, hi });
        }
        if lo == hi {
            return Ok(lo);
        }
        loop {
            let x = lo + (hi - lo) * self.next_f64();
            // rounding can land exactly on `hi`
            if x < hi {
                return Ok(x);
            }
        }
    }

    /// True with probability `p` (clamped to [0, 1]).
    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    /// Gaussian draw; `sd == 0` returns `mean` without consuming randomness.
    pub fn normal(&mut self, mean: f64, sd: f64) -> f64 {
        if sd == 0.0 {
            return mean;
        }
        Normal::new(mean, sd).expect("finite non-negative sd").sample(&mut self.inner)
    }
}
