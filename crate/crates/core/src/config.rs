//! Scenario configuration.
//!
//! A scenario is a TOML document: a few top-level keys plus one table per
//! subsystem. Every key is optional; omitted keys take the defaults below,
//! and unknown keys are rejected.
//!
//! ```toml
//! seed = 1
//! protocol = "avt_flood"     # avt_flood | avt_p2p | pulsesync | gtsp
//! node_count = 100
//! duration = 25000.0         # s
//! beacon_period = 30.0       # s
//! beacon_jitter = 0.1        # s, uniform extra delay per timer
//!
//! [field]
//! width = 300.0
//! height = 300.0
//!
//! [clock]
//! max_drift = 1e-4           # drift ~ U[-max_drift, max_drift]
//! max_start_offset = 1000000 # ticks, offset ~ U[0, max_start_offset]
//!
//! [radio]
//! range = 25.0
//! loss_prob = 0.05
//! model = "gaussian_edge"    # or "unit_disk"
//! fade_width = 2.0
//! frame_duration = 0.002
//! backoff_min = 0.001
//! backoff_max = 0.01
//! max_retries = 5
//! timestamp_jitter_us = 5.0
//!
//! [mobility]
//! model = "random_waypoint"  # or "static"
//! speed_min = 0.5
//! speed_max = 1.5
//! pause_min = 0.0
//! pause_max = 60.0
//! # roam = { x0 = 0.0, y0 = 0.0, x1 = 100.0, y1 = 100.0 }
//!
//! [avt]
//! v_min = -2e-4
//! v_max = 2e-4
//! accel = 2.0
//! decel = 0.3333333333333333
//! good_band_us = 1.0
//!
//! [pulsesync]
//! table_size = 8
//! forward_jitter = 0.01
//!
//! [gtsp]
//! max_neighbors = 10
//! eviction_periods = 5
//!
//! [metrics]
//! sample_interval = 10.0
//! steady_state_fraction = 0.5
//! ```
//!
//! An optional `[partition]` table scripts a disconnection window; see
//! [`PartitionConfig`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avt::AvtParams;
use crate::clocks::HardwareClock;
use crate::protocols::{ProtocolKind, SyncParams};
use crate::radio::{ChannelParams, MacParams, PropagationModel};
use crate::world::{Position, Rect};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("render error: {0}")]
    Render(#[from] toml::ser::Error),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { key, reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub protocol: ProtocolKind,
    pub node_count: usize,
    pub duration: f64,
    pub beacon_period: f64,
    pub beacon_jitter: f64,
    pub field: FieldConfig,
    pub clock: ClockConfig,
    pub radio: RadioConfig,
    pub mobility: MobilityConfig,
    pub avt: AvtConfig,
    pub pulsesync: PulseSyncConfig,
    pub gtsp: GtspConfig,
    pub metrics: MetricsConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub partition: Option<PartitionConfig>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            protocol: ProtocolKind::AvtFlood,
            node_count: 100,
            duration: 25_000.0,
            beacon_period: 30.0,
            beacon_jitter: 0.1,
            field: FieldConfig::default(),
            clock: ClockConfig::default(),
            radio: RadioConfig::default(),
            mobility: MobilityConfig::default(),
            avt: AvtConfig::default(),
            pulsesync: PulseSyncConfig::default(),
            gtsp: GtspConfig::default(),
            metrics: MetricsConfig::default(),
            partition: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    pub width: f64,
    pub height: f64,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self { width: 300.0, height: 300.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClockConfig {
    pub max_drift: f64,
    pub max_start_offset: i64,
}

impl Default for ClockConfig {
    fn default() -> Self {
        Self { max_drift: 1e-4, max_start_offset: 1_000_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioConfig {
    pub range: f64,
    pub loss_prob: f64,
    pub model: PropagationModel,
    pub fade_width: f64,
    pub frame_duration: f64,
    pub backoff_min: f64,
    pub backoff_max: f64,
    pub max_retries: u32,
    pub timestamp_jitter_us: f64,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let mac = MacParams::default();
        Self {
            range: 25.0,
            loss_prob: 0.05,
            model: PropagationModel::GaussianEdge,
            fade_width: 2.0,
            frame_duration: mac.frame_duration,
            backoff_min: mac.backoff_min,
            backoff_max: mac.backoff_max,
            max_retries: mac.max_retries,
            timestamp_jitter_us: 5.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MobilityModel {
    RandomWaypoint,
    Static,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilityConfig {
    pub model: MobilityModel,
    pub speed_min: f64,
    pub speed_max: f64,
    pub pause_min: f64,
    pub pause_max: f64,
    /// Region for initial placement and waypoints; the whole field if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roam: Option<Rect>,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self {
            model: MobilityModel::RandomWaypoint,
            speed_min: 0.5,
            speed_max: 1.5,
            pause_min: 0.0,
            pause_max: 60.0,
            roam: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AvtConfig {
    pub v_min: f64,
    pub v_max: f64,
    /// Start value; the middle of the search space if unset.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v0: Option<f64>,
    pub accel: f64,
    pub decel: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_max: Option<f64>,
    pub good_band_us: f64,
}

impl Default for AvtConfig {
    fn default() -> Self {
        let p = SyncParams::default();
        Self {
            v_min: p.v_min,
            v_max: p.v_max,
            v0: None,
            accel: p.avt.accel,
            decel: p.avt.decel,
            delta_min: None,
            delta_max: None,
            good_band_us: p.good_band,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PulseSyncConfig {
    pub table_size: usize,
    /// Upper bound (s) of the uniform delay before a pulse is forwarded.
    pub forward_jitter: f64,
}

impl Default for PulseSyncConfig {
    fn default() -> Self {
        Self { table_size: 8, forward_jitter: 0.01 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GtspConfig {
    pub max_neighbors: usize,
    pub eviction_periods: u64,
}

impl Default for GtspConfig {
    fn default() -> Self {
        Self { max_neighbors: 10, eviction_periods: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    pub sample_interval: f64,
    pub steady_state_fraction: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { sample_interval: 10.0, steady_state_fraction: 0.5 }
    }
}

/// Scripted disconnection. During `[start, end)` the listed nodes are held
/// on a small circle around `island`; when the window closes they resume
/// normal mobility. An optional courier shuttles between `harbor` and the
/// island for the duration of the window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartitionConfig {
    pub start: f64,
    pub end: f64,
    pub nodes: Vec<u32>,
    pub island: Position,
    #[serde(default = "default_island_radius")]
    pub island_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub courier: Option<CourierConfig>,
}

fn default_island_radius() -> f64 {
    4.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CourierConfig {
    pub node: u32,
    pub harbor: Position,
    pub speed: f64,
    pub pause: f64,
}

impl PartitionConfig {
    /// Where pinned node number `k` (of `self.nodes`) is held.
    pub fn pin_position(&self, k: usize) -> Position {
        let angle = std::f64::consts::TAU * k as f64 / self.nodes.len().max(1) as f64;
        Position::new(
            self.island.x + self.island_radius * angle.cos(),
            self.island.y + self.island_radius * angle.sin(),
        )
    }
}

/// Parses and validates a scenario document.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let cfg: ScenarioConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Renders a config as a TOML document that [`parse_config`] reads back to
/// an equal value.
pub fn render_config(cfg: &ScenarioConfig) -> Result<String, ConfigError> {
    Ok(toml::to_string(cfg)?)
}

fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be positive, got {v}")))
    }
}

fn non_negative(key: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(key, format!("must be non-negative, got {v}")))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count < 2 {
            return Err(invalid("node_count", "need at least two nodes"));
        }
        non_negative("duration", self.duration)?;
        positive("beacon_period", self.beacon_period)?;
        non_negative("beacon_jitter", self.beacon_jitter)?;
        positive("field.width", self.field.width)?;
        positive("field.height", self.field.height)?;

        let c = &self.clock;
        if !(c.max_drift >= 0.0 && c.max_drift <= HardwareClock::MAX_DRIFT) {
            return Err(invalid("clock.max_drift", format!("must lie in [0, 1e-4], got {}", c.max_drift)));
        }
        if c.max_start_offset < 0 {
            return Err(invalid("clock.max_start_offset", "must be non-negative"));
        }

        let r = &self.radio;
        positive("radio.range", r.range)?;
        if !(0.0..=1.0).contains(&r.loss_prob) {
            return Err(invalid("radio.loss_prob", format!("must lie in [0, 1], got {}", r.loss_prob)));
        }
        non_negative("radio.fade_width", r.fade_width)?;
        positive("radio.frame_duration", r.frame_duration)?;
        positive("radio.backoff_min", r.backoff_min)?;
        if !(r.backoff_max >= r.backoff_min && r.backoff_max.is_finite()) {
            return Err(invalid("radio.backoff_max", "must be finite and >= backoff_min"));
        }
        non_negative("radio.timestamp_jitter_us", r.timestamp_jitter_us)?;

        let m = &self.mobility;
        positive("mobility.speed_min", m.speed_min)?;
        if !(m.speed_max >= m.speed_min && m.speed_max.is_finite()) {
            return Err(invalid("mobility.speed_max", "must be finite and >= speed_min"));
        }
        non_negative("mobility.pause_min", m.pause_min)?;
        if !(m.pause_max >= m.pause_min && m.pause_max.is_finite()) {
            return Err(invalid("mobility.pause_max", "must be finite and >= pause_min"));
        }
        if let Some(roam) = &m.roam {
            if roam.validate().is_err() || !self.field_rect().contains_rect(roam) {
                return Err(invalid("mobility.roam", "must be a rectangle inside the field"));
            }
        }

        let a = &self.avt;
        if !(a.v_min < a.v_max) {
            return Err(invalid("avt.v_min", "must be below avt.v_max"));
        }
        if let Some(v0) = a.v0 {
            if !(a.v_min..=a.v_max).contains(&v0) {
                return Err(invalid("avt.v0", "must lie inside [v_min, v_max]"));
            }
        }
        if !(a.accel > 1.0 && a.accel.is_finite()) {
            return Err(invalid("avt.accel", "must be greater than 1"));
        }
        if !(a.decel > 0.0 && a.decel < 1.0) {
            return Err(invalid("avt.decel", "must lie in (0, 1)"));
        }
        let (dmin, dmax) = self.avt_step_bounds();
        if !(dmin > 0.0 && dmin <= dmax) {
            return Err(invalid("avt.delta_min", "must satisfy 0 < delta_min <= delta_max"));
        }
        non_negative("avt.good_band_us", a.good_band_us)?;

        if self.pulsesync.table_size == 0 {
            return Err(invalid("pulsesync.table_size", "must be at least 1"));
        }
        non_negative("pulsesync.forward_jitter", self.pulsesync.forward_jitter)?;
        if self.gtsp.max_neighbors == 0 {
            return Err(invalid("gtsp.max_neighbors", "must be at least 1"));
        }
        if self.gtsp.eviction_periods == 0 {
            return Err(invalid("gtsp.eviction_periods", "must be at least 1"));
        }

        positive("metrics.sample_interval", self.metrics.sample_interval)?;
        let f = self.metrics.steady_state_fraction;
        if !(f > 0.0 && f <= 1.0) {
            return Err(invalid("metrics.steady_state_fraction", "must lie in (0, 1]"));
        }

        if let Some(p) = &self.partition {
            self.validate_partition(p)?;
        }
        Ok(())
    }

    fn validate_partition(&self, p: &PartitionConfig) -> Result<(), ConfigError> {
        non_negative("partition.start", p.start)?;
        if !(p.end > p.start && p.end.is_finite()) {
            return Err(invalid("partition.end", "must be after partition.start"));
        }
        if p.nodes.is_empty() {
            return Err(invalid("partition.nodes", "must list at least one node"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for &n in &p.nodes {
            if n as usize >= self.node_count || !seen.insert(n) {
                return Err(invalid("partition.nodes", format!("bad or repeated node {n}")));
            }
        }
        non_negative("partition.island_radius", p.island_radius)?;
        let field = self.field_rect();
        if !(0..p.nodes.len()).all(|k| field.contains(&p.pin_position(k))) {
            return Err(invalid("partition.island", "pinned positions must lie inside the field"));
        }
        if let Some(c) = &p.courier {
            if c.node as usize >= self.node_count || seen.contains(&c.node) {
                return Err(invalid("partition.courier.node", "must be a node outside partition.nodes"));
            }
            if !field.contains(&c.harbor) {
                return Err(invalid("partition.courier.harbor", "must lie inside the field"));
            }
            positive("partition.courier.speed", c.speed)?;
            non_negative("partition.courier.pause", c.pause)?;
        }
        Ok(())
    }

    pub fn field_rect(&self) -> Rect {
        Rect::field(self.field.width, self.field.height)
    }

    pub fn roam_rect(&self) -> Rect {
        self.mobility.roam.unwrap_or_else(|| self.field_rect())
    }

    fn avt_step_bounds(&self) -> (f64, f64) {
        let width = self.avt.v_max - self.avt.v_min;
        (self.avt.delta_min.unwrap_or(width * 1e-6), self.avt.delta_max.unwrap_or(width / 4.0))
    }

    pub fn sync_params(&self) -> SyncParams {
        let a = &self.avt;
        SyncParams {
            v_min: a.v_min,
            v_max: a.v_max,
            v0: a.v0.unwrap_or((a.v_min + a.v_max) / 2.0),
            avt: AvtParams { accel: a.accel, decel: a.decel, delta_min: a.delta_min, delta_max: a.delta_max },
            good_band: a.good_band_us,
            regression_entries: self.pulsesync.table_size,
            gtsp_max_neighbors: self.gtsp.max_neighbors,
            gtsp_eviction_periods: self.gtsp.eviction_periods,
        }
    }

    pub fn channel_params(&self) -> ChannelParams {
        ChannelParams {
            range: self.radio.range,
            loss_prob: self.radio.loss_prob,
            fade_width: self.radio.fade_width,
            model: self.radio.model,
        }
    }

    pub fn mac_params(&self) -> MacParams {
        MacParams {
            frame_duration: self.radio.frame_duration,
            backoff_min: self.radio.backoff_min,
            backoff_max: self.radio.backoff_max,
            max_retries: self.radio.max_retries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, ScenarioConfig::default());
        assert_eq!(c.beacon_period, 30.0);
        assert_eq!(c.radio.range, 25.0);
        assert_eq!((c.field.width, c.field.height), (300.0, 300.0));
        assert_eq!(c.duration, 25_000.0);
        assert_eq!(c.clock.max_drift, 1e-4);
        assert_eq!(c.pulsesync.table_size, 8);
        assert_eq!(c.protocol, ProtocolKind::AvtFlood);
    }

    #[test]
    fn negative_beacon_period_rejected() {
        let e = parse_config("beacon_period = -1").unwrap_err();
        assert!(matches!(e, ConfigError::Invalid { key: "beacon_period", .. }), "{e}");
    }

    #[test]
    fn gtsp_selection_keeps_table_defaults() {
        let c = parse_config("protocol = \"gtsp\"").unwrap();
        assert_eq!(c.protocol, ProtocolKind::Gtsp);
        assert_eq!(c.gtsp.max_neighbors, 10);
        assert_eq!(c.gtsp.eviction_periods, 5);
    }

    #[test]
    fn unknown_keys_and_protocols_fail() {
        assert!(matches!(parse_config("protocol = \"ftsp\""), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("nodes = 3"), Err(ConfigError::Parse(_))));
        assert!(matches!(parse_config("[radio]\nrange2 = 3.0"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn out_of_range_values_fail() {
        for doc in [
            "[radio]\nloss_prob = 1.5",
            "[clock]\nmax_drift = 3e-4",
            "node_count = 1",
            "[avt]\nv_min = 1.0\nv_max = 0.0",
            "[mobility]\nroam = { x0 = 0.0, y0 = 0.0, x1 = 500.0, y1 = 10.0 }",
            "[metrics]\nsample_interval = 0.0",
        ] {
            assert!(matches!(parse_config(doc), Err(ConfigError::Invalid { .. })), "{doc}");
        }
    }

    #[test]
    fn partition_is_checked() {
        let ok = r#"
            node_count = 10
            [partition]
            start = 100.0
            end = 200.0
            nodes = [8, 9]
            island = { x = 280.0, y = 150.0 }
            courier = { node = 7, harbor = { x = 150.0, y = 150.0 }, speed = 1.0, pause = 30.0 }
        "#;
        let c = parse_config(ok).unwrap();
        assert_eq!(c.partition.as_ref().unwrap().island_radius, 4.0);
        let bad = ok.replace("node = 7", "node = 9");
        assert!(parse_config(&bad).is_err());
        let bad = ok.replace("end = 200.0", "end = 50.0");
        assert!(parse_config(&bad).is_err());
    }

    #[test]
    fn render_round_trips_with_partition() {
        let mut c = ScenarioConfig {
            partition: Some(PartitionConfig {
                start: 1.0,
                end: 2.0,
                nodes: vec![3],
                island: Position::new(10.0, 10.0),
                island_radius: 1.0,
                courier: Some(CourierConfig { node: 4, harbor: Position::new(50.0, 50.0), speed: 1.0, pause: 5.0 }),
            }),
            ..Default::default()
        };
        c.mobility.roam = Some(Rect { x0: 0.0, y0: 0.0, x1: 100.0, y1: 100.0 });
        c.avt.v0 = Some(1e-6);
        let text = render_config(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn protocol() -> impl Strategy<Value = ProtocolKind> {
            prop::sample::select(ProtocolKind::ALL.to_vec())
        }

        proptest! {
            #[test]
            fn parse_render_round_trip(seed in any::<u64>(), proto in protocol(),
                                       nodes in 2usize..500, duration in 0.0..1e5f64,
                                       period in 0.1..100.0f64, range in 1.0..100.0f64,
                                       loss in 0.0..=1.0f64, drift in 0.0..=1e-4f64,
                                       accel in 1.01..4.0f64, decel in 0.01..0.99f64,
                                       static_nodes in any::<bool>()) {
                let mut c = ScenarioConfig {
                    seed, protocol: proto, node_count: nodes, duration, beacon_period: period,
                    ..ScenarioConfig::default()
                };
                c.radio.range = range;
                c.radio.loss_prob = loss;
                c.clock.max_drift = drift;
                c.avt.accel = accel;
                c.avt.decel = decel;
                if static_nodes {
                    c.mobility.model = MobilityModel::Static;
                }
                let text = render_config(&c).unwrap();
                prop_assert_eq!(parse_config(&text).unwrap(), c);
            }
        }
    }
}
