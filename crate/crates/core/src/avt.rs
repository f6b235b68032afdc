//! Adaptive value tracker.
//!
//! An [`Avt`] proposes a value inside a bounded interval and moves it in
//! response to directional feedback. Consecutive feedback in the same
//! direction grows the step geometrically (`accel`); a reversal or a
//! [`Feedback::Good`] shrinks it (`decel`). The step always stays inside
//! `[delta_min, delta_max]` and the value inside `[v_min, v_max]`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Feedback {
    Up,
    Down,
    Good,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    None,
    Up,
    Down,
}

#[derive(Debug, Error, PartialEq)]
pub enum AvtError {
    #[error("empty search space [{v_min}, {v_max}]")]
    EmptySpace { v_min: f64, v_max: f64 },
    #[error("initial value {v0} outside [{v_min}, {v_max}]")]
    StartOutside { v0: f64, v_min: f64, v_max: f64 },
    #[error("bad step parameters: {0}")]
    BadParams(String),
}

/// Step-size parameters. Unset step bounds are derived from the search space
/// width: `delta_max = width / 4`, `delta_min = width * 1e-6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvtParams {
    pub accel: f64,
    pub decel: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
}

impl Default for AvtParams {
    fn default() -> Self {
        Self { accel: 2.0, decel: 1.0 / 3.0, delta_min: None, delta_max: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Avt {
    v: f64,
    v_min: f64,
    v_max: f64,
    delta: f64,
    delta_min: f64,
    delta_max: f64,
    accel: f64,
    decel: f64,
    last_dir: Direction,
}

impl Avt {
    /// Tracker over `[v_min, v_max]` starting at `v0` with default parameters.
    pub fn new(v_min: f64, v_max: f64, v0: f64) -> Result<Self, AvtError> {
        Self::with_params(v_min, v_max, v0, &AvtParams::default())
    }

    pub fn with_params(v_min: f64, v_max: f64, v0: f64, p: &AvtParams) -> Result<Self, AvtError> {
        if !(v_min < v_max) || !v_min.is_finite() || !v_max.is_finite() {
            return Err(AvtError::EmptySpace { v_min, v_max });
        }
        if !(v_min <= v0 && v0 <= v_max) {
            return Err(AvtError::StartOutside { v0, v_min, v_max });
        }
        let width = v_max - v_min;
        let delta_max = p.delta_max.unwrap_or(width / 4.0);
        let delta_min = p.delta_min.unwrap_or(width * 1e-6);
        if !(p.accel > 1.0) || !(p.decel > 0.0 && p.decel < 1.0) {
            return Err(AvtError::BadParams(format!("accel {} decel {}", p.accel, p.decel)));
        }
        if !(delta_min > 0.0 && delta_min <= delta_max) {
            return Err(AvtError::BadParams(format!("delta range [{delta_min}, {delta_max}]")));
        }
        Ok(Self {
            v: v0,
            v_min,
            v_max,
            delta: delta_max,
            delta_min,
            delta_max,
            accel: p.accel,
            decel: p.decel,
            last_dir: Direction::None,
        })
    }

    pub fn value(&self) -> f64 {
        self.v
    }

    pub fn step(&self) -> f64 {
        self.delta
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.v_min, self.v_max)
    }

    pub fn step_bounds(&self) -> (f64, f64) {
        (self.delta_min, self.delta_max)
    }

    pub fn adjust(&mut self, f: Feedback) {
        match f {
            Feedback::Up => {
                self.resize_step(Direction::Up);
                self.v = (self.v + self.delta).min(self.v_max);
                self.last_dir = Direction::Up;
            }
            Feedback::Down => {
                self.resize_step(Direction::Down);
                self.v = (self.v - self.delta).max(self.v_min);
                self.last_dir = Direction::Down;
            }
            Feedback::Good => {
                self.shrink();
                self.last_dir = Direction::None;
            }
        }
    }

    fn resize_step(&mut self, dir: Direction) {
        if self.last_dir == dir {
            self.delta = (self.delta * self.accel).min(self.delta_max);
        } else {
            self.shrink();
        }
    }

    fn shrink(&mut self) {
        self.delta = (self.delta * self.decel).max(self.delta_min);
    }
}
