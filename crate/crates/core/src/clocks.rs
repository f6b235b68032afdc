//! Drifting hardware clocks and the software logical clock built on them.
//!
//! Hardware clocks tick at a nominal 1 MHz, so one tick is one microsecond
//! of nominal time. The logical clock is piecewise linear in hardware ticks:
//! `value = base_value + (hw - base_hw) * (1 + rate_corr)`.

use thiserror::Error;

use crate::engine::SimTime;

pub const NOMINAL_FREQ_HZ: f64 = 1_000_000.0;

pub type Ticks = i64;
/// Logical time in microseconds.
pub type Micros = f64;

#[derive(Debug, Error, PartialEq)]
pub enum ClockError {
    #[error("hardware reading {hw_now} precedes logical clock base {base_hw}")]
    HardwareRewind { hw_now: Ticks, base_hw: Ticks },
    #[error("rate correction {rate} outside [{lo}, {hi}]")]
    RateOutOfBounds { rate: f64, lo: f64, hi: f64 },
    #[error("drift {0} exceeds the +/-100 ppm model")]
    DriftOutOfBounds(f64),
}

/// Free-running oscillator with a constant fractional frequency error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HardwareClock {
    pub drift: f64,
    pub start_offset: Ticks,
}

impl HardwareClock {
    pub const MAX_DRIFT: f64 = 1e-4;

    pub fn new(drift: f64, start_offset: Ticks) -> Result<Self, ClockError> {
        if !(drift.abs() <= Self::MAX_DRIFT) {
            return Err(ClockError::DriftOutOfBounds(drift));
        }
        Ok(Self { drift, start_offset })
    }

    pub fn read(&self, t: SimTime) -> Ticks {
        self.start_offset + (NOMINAL_FREQ_HZ * (1.0 + self.drift) * t.secs()).round() as Ticks
    }
}

/// Software clock: an offset and a rate multiplier over hardware ticks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicalClock {
    pub base_value: Micros,
    pub base_hw: Ticks,
    pub rate_corr: f64,
}

impl LogicalClock {
    /// Logical clock equal to the hardware clock at `hw_now`.
    pub fn tracking(hw_now: Ticks) -> Self {
        Self { base_value: hw_now as Micros, base_hw: hw_now, rate_corr: 0.0 }
    }

    pub fn read(&self, hw_now: Ticks) -> Result<Micros, ClockError> {
        if hw_now < self.base_hw {
            return Err(ClockError::HardwareRewind { hw_now, base_hw: self.base_hw });
        }
        Ok(self.base_value + (hw_now - self.base_hw) as f64 * (1.0 + self.rate_corr))
    }

    fn rebase(&mut self, hw_now: Ticks) -> Result<(), ClockError> {
        self.base_value = self.read(hw_now)?;
        self.base_hw = hw_now;
        Ok(())
    }

    /// Adds `delta` microseconds at `hw_now`; the rate is untouched.
    pub fn adjust_offset(&mut self, hw_now: Ticks, delta: Micros) -> Result<(), ClockError> {
        self.rebase(hw_now)?;
        self.base_value += delta;
        Ok(())
    }

    /// Changes the slope to `1 + rate` from `hw_now` on, keeping the reading
    /// at `hw_now` continuous.
    pub fn set_rate(&mut self, hw_now: Ticks, rate: f64) -> Result<(), ClockError> {
        self.rebase(hw_now)?;
        self.rate_corr = rate;
        Ok(())
    }

    /// [`set_rate`](Self::set_rate) for a clock steered by a bounded tracker.
    pub fn set_rate_bounded(&mut self, hw_now: Ticks, rate: f64, lo: f64, hi: f64) -> Result<(), ClockError> {
        if !(lo <= rate && rate <= hi) {
            return Err(ClockError::RateOutOfBounds { rate, lo, hi });
        }
        self.set_rate(hw_now, rate)
    }

    /// Re-anchors the clock so that it reads `value` at `hw_now` with the
    /// given slope correction.
    pub fn set(&mut self, hw_now: Ticks, value: Micros, rate: f64) {
        self.base_hw = hw_now;
        self.base_value = value;
        self.rate_corr = rate;
    }
}
