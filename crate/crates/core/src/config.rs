//! Scenario description: TOML schema, presets and validation.

use serde::{Deserialize, Serialize};

use crate::controller::{DelayBudget, TuningPolicy};
use crate::error::ConfigError;
use crate::mac::{Ac, AmpduLimit, EdcaParams, MacTiming};
use crate::metrics::DelayAveraging;
use crate::mobility::{grid_positions, Arena, Position};
use crate::phy::{noise_floor_dbm, BerCurve, ChannelPlan, LinkBudget, McsTable};
use crate::sim::SimTime;
use crate::traffic::{Direction, TcpConfig};

pub const SCHEMA_VERSION: u32 = 1;

pub const PRESETS: [&str; 2] = ["single-ap", "grid-16ap"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    /// TCP STAs and UDP STAs each number `n` (2·n STAs in total).
    pub n: u32,
    pub duration_s: f64,
    pub seeds: Vec<u64>,
    /// Required; there is no default budget.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget_ms: Option<f64>,
    pub monitoring_interval_ms: f64,
    pub policy: TuningPolicy,
    pub arena: ArenaConfig,
    pub aps: ApGridConfig,
    pub phy: PhyConfig,
    pub mac: MacConfig,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub metrics: MetricsConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArenaConfig {
    pub width_m: f64,
    pub height_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApGridConfig {
    pub rows: u32,
    pub cols: u32,
    pub spacing_m: f64,
    pub margin_m: f64,
    /// One channel per AP in row-major order; empty means 36, 40, 44, ...
    #[serde(default)]
    pub channels: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhyConfig {
    pub tx_power_dbm: f64,
    pub noise_figure_db: f64,
    pub bandwidth_hz: f64,
    pub min_distance_m: f64,
    /// MCS0..MCS8 thresholds.
    pub mcs_min_snr_db: Vec<f64>,
    pub ber: BerCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacConfig {
    pub slot_us: u64,
    pub sifs_us: u64,
    pub queue_capacity: usize,
    pub retry_limit: u8,
    pub sta_uplink_limit_bytes: u32,
    /// STAs follow their AP's tuned limit instead of the fixed uplink limit.
    pub tune_sta_uplink: bool,
    pub vo: EdcaParams,
    pub be: EdcaParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MobilityConfig {
    pub speed_mps: f64,
    pub pause_s: f64,
    pub association_interval_s: f64,
    pub hysteresis_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrafficConfig {
    pub udp_payload_bytes: u32,
    pub udp_rate_pps: u32,
    pub udp_direction: Direction,
    pub udp_ac: Ac,
    pub tcp_mss_bytes: u32,
    pub tcp_packet_bytes: u32,
    pub tcp_ack_bytes: u32,
    pub wired_latency_ms: f64,
    pub tcp_initial_cwnd: f64,
    pub tcp_initial_rto_ms: f64,
    pub tcp_min_rto_ms: f64,
    pub tcp_max_rto_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    pub udp_delay_averaging: DelayAveraging,
}

/// Link budget shipped with the presets.
///
/// At 16 dBm every position in either arena clears the top MCS threshold, so
/// aggregates stay short, real-time delay rarely reaches the budget and the
/// tuning methods behave like `AlwaysOn`. The presets lower the transmit power
/// so that the cell edge falls to the middle of the MCS table.
pub const PRESET_TX_POWER_DBM: f64 = -4.0;

impl ScenarioConfig {
    pub fn preset(name: &str) -> Result<Self, ConfigError> {
        match name {
            "single-ap" => Ok(Self::base(
                "single-ap",
                1,
                ArenaConfig {
                    width_m: 50.0,
                    height_m: 50.0,
                },
                ApGridConfig {
                    rows: 1,
                    cols: 1,
                    spacing_m: 50.0,
                    margin_m: 25.0,
                    channels: vec![36],
                },
            )),
            "grid-16ap" => Ok(Self::base(
                "grid-16ap",
                10,
                ArenaConfig {
                    width_m: 200.0,
                    height_m: 200.0,
                },
                ApGridConfig {
                    rows: 4,
                    cols: 4,
                    spacing_m: 50.0,
                    margin_m: 25.0,
                    channels: ChannelPlan::available().take(16).collect(),
                },
            )),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    fn base(name: &str, n: u32, arena: ArenaConfig, aps: ApGridConfig) -> Self {
        let tcp = TcpConfig::default();
        ScenarioConfig {
            schema_version: SCHEMA_VERSION,
            name: name.to_string(),
            n,
            duration_s: 60.0,
            seeds: (1..=15).collect(),
            budget_ms: Some(10.0),
            monitoring_interval_ms: 250.0,
            policy: TuningPolicy::method1(),
            arena,
            aps,
            phy: PhyConfig {
                tx_power_dbm: PRESET_TX_POWER_DBM,
                noise_figure_db: 7.0,
                bandwidth_hz: 20e6,
                min_distance_m: 1.0,
                mcs_min_snr_db: vec![2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0],
                ber: BerCurve::default(),
            },
            mac: MacConfig {
                slot_us: 9,
                sifs_us: 16,
                queue_capacity: 500,
                retry_limit: 7,
                sta_uplink_limit_bytes: AmpduLimit::MAX_BYTES,
                tune_sta_uplink: false,
                vo: EdcaParams::VO,
                be: EdcaParams::BE,
            },
            mobility: MobilityConfig {
                speed_mps: 1.5,
                pause_s: 2.0,
                association_interval_s: 1.0,
                hysteresis_db: 3.0,
            },
            traffic: TrafficConfig {
                udp_payload_bytes: 60,
                udp_rate_pps: 50,
                udp_direction: Direction::Uplink,
                udp_ac: Ac::Vo,
                tcp_mss_bytes: 1460,
                tcp_packet_bytes: 1500,
                tcp_ack_bytes: 40,
                wired_latency_ms: 10.0,
                tcp_initial_cwnd: tcp.initial_cwnd,
                tcp_initial_rto_ms: tcp.initial_rto.as_millis_f64(),
                tcp_min_rto_ms: tcp.min_rto.as_millis_f64(),
                tcp_max_rto_s: tcp.max_rto.as_secs_f64(),
            },
            metrics: MetricsConfig {
                udp_delay_averaging: DelayAveraging::PerPacket,
            },
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        #[derive(Deserialize)]
        struct Version {
            schema_version: Option<u32>,
        }
        let v: Version = toml::from_str(text)?;
        match v.schema_version {
            None => return Err(ConfigError::Missing("schema_version")),
            Some(found) if found != SCHEMA_VERSION => {
                return Err(ConfigError::SchemaVersion {
                    found,
                    expected: SCHEMA_VERSION,
                })
            }
            Some(_) => {}
        }
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn budget(&self) -> Result<DelayBudget, ConfigError> {
        let ms = self.budget_ms.ok_or(ConfigError::Missing("budget_ms"))?;
        if !(ms.is_finite() && ms > 0.0) {
            return Err(invalid(format!("budget_ms must be > 0, got {ms}")));
        }
        DelayBudget::new(SimTime::from_millis_f64(ms))
            .ok_or_else(|| invalid(format!("budget_ms {ms} rounds to zero")))
    }

    pub fn duration(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration_s)
    }

    pub fn monitoring_interval(&self) -> SimTime {
        SimTime::from_millis_f64(self.monitoring_interval_ms)
    }

    pub fn ap_count(&self) -> usize {
        (self.aps.rows * self.aps.cols) as usize
    }

    pub fn ap_positions(&self) -> Vec<Position> {
        grid_positions(self.aps.rows, self.aps.cols, self.aps.spacing_m, self.aps.margin_m)
    }

    pub fn arena(&self) -> Arena {
        Arena {
            width_m: self.arena.width_m,
            height_m: self.arena.height_m,
        }
    }

    pub fn channel_plan(&self) -> Result<ChannelPlan, ConfigError> {
        let plan = if self.aps.channels.is_empty() {
            ChannelPlan::sequential(self.ap_count())?
        } else {
            ChannelPlan::from_channels(self.aps.channels.clone())?
        };
        if plan.len() != self.ap_count() {
            return Err(invalid(format!(
                "{} channels listed for {} APs",
                plan.len(),
                self.ap_count()
            )));
        }
        Ok(plan)
    }

    pub fn mcs_table(&self) -> Result<McsTable, ConfigError> {
        McsTable::vht20(&self.phy.mcs_min_snr_db, self.phy.ber)
    }

    pub fn link_budget(&self) -> LinkBudget {
        LinkBudget {
            tx_power_dbm: self.phy.tx_power_dbm,
            noise_floor_dbm: noise_floor_dbm(self.phy.bandwidth_hz, self.phy.noise_figure_db),
        }
    }

    pub fn mac_timing(&self) -> MacTiming {
        MacTiming {
            slot: SimTime::from_micros(self.mac.slot_us),
            sifs: SimTime::from_micros(self.mac.sifs_us),
        }
    }

    pub fn edca(&self, ac: Ac) -> EdcaParams {
        match ac {
            Ac::Vo => self.mac.vo,
            Ac::Be => self.mac.be,
        }
    }

    pub fn tcp_config(&self) -> TcpConfig {
        TcpConfig {
            initial_cwnd: self.traffic.tcp_initial_cwnd,
            initial_ssthresh: TcpConfig::default().initial_ssthresh,
            initial_rto: SimTime::from_millis_f64(self.traffic.tcp_initial_rto_ms),
            min_rto: SimTime::from_millis_f64(self.traffic.tcp_min_rto_ms),
            max_rto: SimTime::from_secs_f64(self.traffic.tcp_max_rto_s),
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion {
                found: self.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        if self.name.is_empty() || self.name.contains([',', '\n']) {
            return Err(invalid("name must be non-empty and free of commas".into()));
        }
        if self.n == 0 {
            return Err(invalid("n must be >= 1".into()));
        }
        positive("duration_s", self.duration_s)?;
        positive("monitoring_interval_ms", self.monitoring_interval_ms)?;
        self.budget()?;
        self.policy.validate()?;
        positive("arena.width_m", self.arena.width_m)?;
        positive("arena.height_m", self.arena.height_m)?;
        if self.ap_count() == 0 {
            return Err(invalid("the AP grid is empty".into()));
        }
        let arena = self.arena();
        if let Some(p) = self.ap_positions().iter().find(|p| !arena.contains(p)) {
            return Err(invalid(format!("AP at ({}, {}) lies outside the arena", p.x, p.y)));
        }
        self.channel_plan()?;
        self.mcs_table()?;
        positive("phy.bandwidth_hz", self.phy.bandwidth_hz)?;
        positive("phy.min_distance_m", self.phy.min_distance_m)?;
        if !self.phy.tx_power_dbm.is_finite() || !self.phy.noise_figure_db.is_finite() {
            return Err(invalid("phy powers must be finite".into()));
        }
        if self.mac.slot_us == 0 || self.mac.sifs_us == 0 {
            return Err(invalid("slot and SIFS must be > 0".into()));
        }
        if self.mac.queue_capacity == 0 {
            return Err(invalid("queue_capacity must be >= 1".into()));
        }
        if AmpduLimit::new(self.mac.sta_uplink_limit_bytes).is_none() {
            return Err(invalid(format!(
                "sta_uplink_limit_bytes must lie in [{}, {}]",
                AmpduLimit::MIN_BYTES,
                AmpduLimit::MAX_BYTES
            )));
        }
        for (name, p) in [("mac.vo", self.mac.vo), ("mac.be", self.mac.be)] {
            if p.aifsn == 0 || p.cw_min > p.cw_max {
                return Err(invalid(format!("{name}: need aifsn >= 1 and cw_min <= cw_max")));
            }
        }
        if !(self.mobility.speed_mps.is_finite() && self.mobility.speed_mps >= 0.0) {
            return Err(invalid("mobility.speed_mps must be >= 0".into()));
        }
        if !(self.mobility.pause_s.is_finite() && self.mobility.pause_s >= 0.0) {
            return Err(invalid("mobility.pause_s must be >= 0".into()));
        }
        positive("mobility.association_interval_s", self.mobility.association_interval_s)?;
        if !(self.mobility.hysteresis_db >= 0.0) {
            return Err(invalid("mobility.hysteresis_db must be >= 0".into()));
        }
        let t = &self.traffic;
        if t.udp_payload_bytes == 0 || t.udp_rate_pps == 0 || t.tcp_ack_bytes == 0 {
            return Err(invalid("traffic sizes and rates must be > 0".into()));
        }
        if t.tcp_mss_bytes == 0 || t.tcp_packet_bytes < t.tcp_mss_bytes {
            return Err(invalid("tcp_packet_bytes must be >= tcp_mss_bytes > 0".into()));
        }
        if !(t.wired_latency_ms.is_finite() && t.wired_latency_ms >= 0.0) {
            return Err(invalid("wired_latency_ms must be >= 0".into()));
        }
        if !(t.tcp_initial_cwnd >= 1.0) {
            return Err(invalid("tcp_initial_cwnd must be >= 1".into()));
        }
        positive("traffic.tcp_initial_rto_ms", t.tcp_initial_rto_ms)?;
        positive("traffic.tcp_min_rto_ms", t.tcp_min_rto_ms)?;
        positive("traffic.tcp_max_rto_s", t.tcp_max_rto_s)?;
        Ok(())
    }
}

fn invalid(msg: String) -> ConfigError {
    ConfigError::Invalid(msg)
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be > 0, got {v}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_match_the_scenarios() {
        let s = ScenarioConfig::preset("single-ap").unwrap();
        assert_eq!((s.arena.width_m, s.arena.height_m, s.ap_count(), s.n), (50.0, 50.0, 1, 1));
        assert_eq!(s.ap_positions(), vec![Position::new(25.0, 25.0)]);

        let mut g = ScenarioConfig::preset("grid-16ap").unwrap();
        assert_eq!((g.arena.width_m, g.arena.height_m, g.ap_count()), (200.0, 200.0, 16));
        assert_eq!(g.ap_positions()[5], Position::new(75.0, 75.0));
        g.n = 50;
        g.validate().unwrap();
        assert_eq!(2 * g.n, 100);
        assert_eq!(g.channel_plan().unwrap().channel(15), 96);
    }

    #[test]
    fn table_defaults_are_explicit() {
        let s = ScenarioConfig::preset("grid-16ap").unwrap();
        assert_eq!(s.duration_s, 60.0);
        assert_eq!(s.monitoring_interval_ms, 250.0);
        assert_eq!(s.seeds.len(), 15);
        assert_eq!((s.traffic.udp_payload_bytes, s.traffic.udp_rate_pps), (60, 50));
        assert_eq!(s.traffic.tcp_packet_bytes, 1500);
        assert_eq!((s.mobility.speed_mps, s.mobility.pause_s), (1.5, 2.0));
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(
            ScenarioConfig::preset("mesh"),
            Err(ConfigError::UnknownPreset(_))
        ));
    }

    #[test]
    fn round_trip() {
        for name in PRESETS {
            let mut cfg = ScenarioConfig::preset(name).unwrap();
            cfg.policy = TuningPolicy::method2();
            let text = cfg.to_toml().unwrap();
            let back = ScenarioConfig::from_toml(&text).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(back.to_toml().unwrap(), text);
        }
    }

    #[test]
    fn missing_budget_is_rejected() {
        let mut cfg = ScenarioConfig::preset("single-ap").unwrap();
        cfg.budget_ms = None;
        let text = cfg.to_toml().unwrap();
        assert!(!text.contains("budget_ms"));
        assert!(matches!(
            ScenarioConfig::from_toml(&text),
            Err(ConfigError::Missing("budget_ms"))
        ));
    }

    #[test]
    fn schema_version_is_checked() {
        let cfg = ScenarioConfig::preset("single-ap").unwrap();
        let text = cfg.to_toml().unwrap().replace("schema_version = 1", "schema_version = 7");
        assert!(matches!(
            ScenarioConfig::from_toml(&text),
            Err(ConfigError::SchemaVersion { found: 7, .. })
        ));
        let text = cfg.to_toml().unwrap().replace("schema_version = 1\n", "");
        assert!(matches!(
            ScenarioConfig::from_toml(&text),
            Err(ConfigError::Missing("schema_version"))
        ));
    }

    #[test]
    fn invalid_values_are_rejected() {
        let base = ScenarioConfig::preset("grid-16ap").unwrap();
        let cases: Vec<Box<dyn Fn(&mut ScenarioConfig)>> = vec![
            Box::new(|c| c.n = 0),
            Box::new(|c| c.duration_s = 0.0),
            Box::new(|c| c.budget_ms = Some(-1.0)),
            Box::new(|c| c.aps.channels[3] = 132),
            Box::new(|c| c.aps.channels[3] = 36),
            Box::new(|c| c.aps.channels.pop().map(|_| ()).unwrap()),
            Box::new(|c| c.aps.rows = 5),
            Box::new(|c| c.mac.sta_uplink_limit_bytes = 1000),
            Box::new(|c| c.policy = TuningPolicy::Method2 { down_factor: 1.2, up_factor: 1.6 }),
            Box::new(|c| c.phy.mcs_min_snr_db.swap(0, 1)),
        ];
        for (i, mutate) in cases.iter().enumerate() {
            let mut c = base.clone();
            mutate(&mut c);
            assert!(c.validate().is_err(), "case {i} accepted");
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = ScenarioConfig::preset("single-ap").unwrap().to_toml().unwrap();
        let text = text.replacen("n = 1\n", "n = 1\nbogus = 3\n", 1);
        assert!(matches!(ScenarioConfig::from_toml(&text), Err(ConfigError::Parse(_))));
    }
}
