//! Deployment field, node placement and random-waypoint mobility.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, SimRng, SimTime};

// Float slack when checking a query time against a phase boundary.
const PHASE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("node count must be at least 1")]
    NoNodes,
    #[error("time {t} s outside current phase [{start}, {end}]")]
    OutsidePhase { t: f64, start: f64, end: f64 },
    #[error("invalid region: {0}")]
    BadRegion(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    /// The field `[0, width] x [0, height]`.
    pub fn field(width: f64, height: f64) -> Self {
        Self { x0: 0.0, y0: 0.0, x1: width, y1: height }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        let ok = [self.x0, self.y0, self.x1, self.y1].iter().all(|v| v.is_finite())
            && self.x0 <= self.x1
            && self.y0 <= self.y1;
        if ok {
            Ok(())
        } else {
            Err(WorldError::BadRegion(format!("{self:?}")))
        }
    }

    pub fn contains(&self, p: &Position) -> bool {
        (self.x0..=self.x1).contains(&p.x) && (self.y0..=self.y1).contains(&p.y)
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        self.x0 <= other.x0 && self.y0 <= other.y0 && other.x1 <= self.x1 && other.y1 <= self.y1
    }

    pub fn uniform_point(&self, rng: &mut SimRng) -> Result<Position, WorldError> {
        Ok(Position { x: rng.uniform(self.x0, self.x1)?, y: rng.uniform(self.y0, self.y1)? })
    }
}

/// `count` positions drawn uniformly over `field`.
pub fn place_nodes(count: usize, field: &Rect, rng: &mut SimRng) -> Result<Vec<Position>, WorldError> {
    if count == 0 {
        return Err(WorldError::NoNodes);
    }
    field.validate()?;
    (0..count).map(|_| field.uniform_point(rng)).collect()
}

/// Euclidean range test, inclusive at the boundary.
pub fn in_range(a: &Position, b: &Position, range: f64) -> bool {
    let (dx, dy) = (a.x - b.x, a.y - b.y);
    dx * dx + dy * dy <= range * range
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Moving,
    Paused,
}

/// One straight-line leg or one pause. `phase_end` is the arrival time while
/// moving and the pause expiry while paused (`f64::INFINITY` for a node that
/// never moves again).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityState {
    pub origin: Position,
    pub target: Position,
    pub speed: f64,
    pub phase: Phase,
    pub phase_start: SimTime,
    pub phase_end: f64,
}

impl MobilityState {
    /// Resting at `at` from `since` until `until`.
    pub fn paused(at: Position, since: SimTime, until: f64) -> Self {
        Self { origin: at, target: at, speed: 0.0, phase: Phase::Paused, phase_start: since, phase_end: until }
    }

    /// Straight-line leg from `from` to `to` starting at `now`.
    pub fn moving(from: Position, to: Position, speed: f64, now: SimTime) -> Self {
        let dist = from.distance(&to);
        let duration = if dist == 0.0 { 0.0 } else { dist / speed };
        Self {
            origin: from,
            target: to,
            speed,
            phase: Phase::Moving,
            phase_start: now,
            phase_end: now.secs() + duration,
        }
    }

    pub fn position_at(&self, t: SimTime) -> Result<Position, WorldError> {
        let (start, end) = (self.phase_start.secs(), self.phase_end);
        let t = t.secs();
        if t < start - PHASE_EPS || t > end + PHASE_EPS {
            return Err(WorldError::OutsidePhase { t, start, end });
        }
        match self.phase {
            Phase::Paused => Ok(self.origin),
            Phase::Moving => {
                if t >= end {
                    return Ok(self.target);
                }
                let frac = ((t - start) / (end - start)).clamp(0.0, 1.0);
                let lerp = |a: f64, b: f64| (a + (b - a) * frac).clamp(a.min(b), a.max(b));
                Ok(Position { x: lerp(self.origin.x, self.target.x), y: lerp(self.origin.y, self.target.y) })
            }
        }
    }

    /// Pause drawn from `pause` (seconds), starting at the current target.
    pub fn begin_pause(&self, now: SimTime, rng: &mut SimRng, pause: (f64, f64)) -> Result<Self, WorldError> {
        let dwell = rng.uniform(pause.0, pause.1)?;
        Ok(Self::paused(self.target, now, now.secs() + dwell))
    }
}

/// New leg after a pause: target uniform over `region`, speed uniform in
/// `speed` (m/s). Arrival is at `phase_end` of the returned state.
pub fn next_leg(
    state: &MobilityState,
    now: SimTime,
    rng: &mut SimRng,
    region: &Rect,
    speed: (f64, f64),
) -> Result<MobilityState, WorldError> {
    let from = state.position_at(now)?;
    let target = region.uniform_point(rng)?;
    let v = rng.uniform(speed.0, speed.1)?;
    Ok(MobilityState::moving(from, target, v, now))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s).unwrap()
    }

    #[test]
    fn placement_stays_in_field() {
        let field = Rect::field(300.0, 300.0);
        let mut rng = SimRng::new(3);
        let one = place_nodes(1, &field, &mut rng).unwrap();
        assert_eq!(one.len(), 1);
        assert!(field.contains(&one[0]));
        let many = place_nodes(100, &field, &mut rng).unwrap();
        assert!(many.iter().all(|p| field.contains(p)));
        assert!(matches!(place_nodes(0, &field, &mut rng), Err(WorldError::NoNodes)));
    }

    #[test]
    fn placement_is_seed_deterministic() {
        let field = Rect::field(300.0, 300.0);
        let a = place_nodes(10, &field, &mut SimRng::new(9)).unwrap();
        let b = place_nodes(10, &field, &mut SimRng::new(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn leg_arithmetic() {
        let s = MobilityState::moving(Position::new(0.0, 0.0), Position::new(10.0, 0.0), 1.0, t(0.0));
        assert_eq!(s.phase_end, 10.0);
        assert_eq!(s.position_at(t(5.0)).unwrap(), Position::new(5.0, 0.0));
        assert_eq!(s.position_at(t(10.0)).unwrap(), Position::new(10.0, 0.0));
        assert!(s.position_at(t(11.0)).is_err());
    }

    #[test]
    fn zero_length_leg_arrives_at_once() {
        let p = Position::new(4.0, 4.0);
        let s = MobilityState::moving(p, p, 1.0, t(7.0));
        assert_eq!(s.phase_end, 7.0);
        assert_eq!(s.position_at(t(7.0)).unwrap(), p);
    }

    #[test]
    fn paused_is_constant() {
        let s = MobilityState::paused(Position::new(3.0, 4.0), t(1.0), 50.0);
        for x in [1.0, 20.0, 50.0] {
            assert_eq!(s.position_at(t(x)).unwrap(), Position::new(3.0, 4.0));
        }
        assert!(s.position_at(t(0.5)).is_err());
    }

    #[test]
    fn next_leg_draws_in_region_with_fixed_speed() {
        let region = Rect::field(300.0, 300.0);
        let mut rng = SimRng::new(5);
        let rest = MobilityState::paused(Position::new(1.0, 1.0), t(0.0), 10.0);
        let leg = next_leg(&rest, t(10.0), &mut rng, &region, (1.0, 1.0)).unwrap();
        assert_eq!(leg.phase, Phase::Moving);
        assert!(region.contains(&leg.target));
        let d = leg.origin.distance(&leg.target);
        assert!((leg.phase_end - (10.0 + d)).abs() < 1e-9);

        let mut r1 = SimRng::new(77);
        let mut r2 = SimRng::new(77);
        let a = next_leg(&rest, t(10.0), &mut r1, &region, (0.5, 1.5)).unwrap();
        let b = next_leg(&rest, t(10.0), &mut r2, &region, (0.5, 1.5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn range_boundary_is_inclusive() {
        let o = Position::new(0.0, 0.0);
        assert!(in_range(&o, &Position::new(25.0, 0.0), 25.0));
        assert!(!in_range(&o, &Position::new(25.001, 0.0), 25.0));
        assert!(in_range(&o, &Position::new(3.0, 4.0), 5.0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn in_range_is_symmetric(ax in -500.0..500.0f64, ay in -500.0..500.0f64,
                                     bx in -500.0..500.0f64, by in -500.0..500.0f64,
                                     r in 0.0..100.0f64) {
                let (a, b) = (Position::new(ax, ay), Position::new(bx, by));
                prop_assert_eq!(in_range(&a, &b, r), in_range(&b, &a, r));
            }

            #[test]
            fn legs_never_leave_the_field(seed in any::<u64>(), legs in 1usize..40) {
                let field = Rect::field(300.0, 300.0);
                let mut rng = SimRng::new(seed);
                let start = place_nodes(1, &field, &mut rng).unwrap()[0];
                let mut st = MobilityState::paused(start, t(0.0), 0.0);
                for _ in 0..legs {
                    let now = t(st.phase_end);
                    st = next_leg(&st, now, &mut rng, &field, (0.5, 1.5)).unwrap();
                    let (a, b) = (st.phase_start.secs(), st.phase_end);
                    for k in 0..=4 {
                        let p = st.position_at(t(a + (b - a) * k as f64 / 4.0)).unwrap();
                        prop_assert!(field.contains(&p));
                    }
                    let d = st.origin.distance(&st.target);
                    prop_assert!(((b - a) - d / st.speed).abs() < 1e-6);
                    st = st.begin_pause(t(b), &mut rng, (0.0, 60.0)).unwrap();
                }
            }
        }
    }
}
