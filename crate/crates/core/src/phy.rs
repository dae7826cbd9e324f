//! Propagation, link budget, rate selection and frame error model.
//!
//! The PHY is VHT 20 MHz, one spatial stream, long guard interval. Loss is
//! free-space Friis; the rate manager is ideal (it knows the receiver SNR) and
//! picks the fastest MCS whose threshold is met.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// OFDM symbol duration with the long guard interval, in microseconds.
pub const SYMBOL_US: u64 = 4;

/// Free-space path loss in dB: `20·log10(4π·d·f/c)`.
///
/// Distances below `min_distance_m` are clamped to it.
pub fn path_loss_db(distance_m: f64, frequency_hz: f64, min_distance_m: f64) -> f64 {
    assert!(
        frequency_hz > 0.0 && frequency_hz.is_finite(),
        "non-positive carrier frequency {frequency_hz}"
    );
    let d = distance_m.max(min_distance_m);
    20.0 * (4.0 * std::f64::consts::PI * d * frequency_hz / SPEED_OF_LIGHT).log10()
}

/// Center frequency of a 5 GHz channel number.
pub fn channel_frequency_hz(channel: u16) -> f64 {
    (5_000.0 + 5.0 * f64::from(channel)) * 1e6
}

/// Thermal noise over `bandwidth_hz` plus a receiver noise figure.
pub fn noise_floor_dbm(bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    -174.0 + 10.0 * bandwidth_hz.log10() + noise_figure_db
}

/// Assigns distinct 20 MHz channels (36, 40, ..., 128) to APs in order.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelPlan {
    channels: Vec<u16>,
}

impl ChannelPlan {
    pub const FIRST: u16 = 36;
    pub const LAST: u16 = 128;

    pub fn available() -> impl Iterator<Item = u16> {
        (Self::FIRST..=Self::LAST).step_by(4)
    }

    pub fn sequential(n_aps: usize) -> Result<Self, ConfigError> {
        let channels: Vec<u16> = Self::available().take(n_aps).collect();
        if channels.len() < n_aps {
            return Err(ConfigError::Invalid(format!(
                "{n_aps} APs need distinct channels but only {} exist in 36..=128",
                Self::available().count()
            )));
        }
        Ok(ChannelPlan { channels })
    }

    pub fn from_channels(channels: Vec<u16>) -> Result<Self, ConfigError> {
        let mut seen = channels.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != channels.len() {
            return Err(ConfigError::Invalid("AP channels must be distinct".into()));
        }
        if let Some(bad) = channels
            .iter()
            .find(|c| !Self::available().any(|a| a == **c))
        {
            return Err(ConfigError::Invalid(format!(
                "channel {bad} is not a 20 MHz channel in 36..=128"
            )));
        }
        Ok(ChannelPlan { channels })
    }

    pub fn channel(&self, ap: usize) -> u16 {
        self.channels[ap]
    }

    pub fn frequency_hz(&self, ap: usize) -> f64 {
        channel_frequency_hz(self.channels[ap])
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McsEntry {
    pub index: u8,
    pub label: String,
    pub data_bits_per_symbol: u32,
    pub min_snr_db: f64,
}

impl McsEntry {
    pub fn phy_rate_bps(&self) -> f64 {
        f64::from(self.data_bits_per_symbol) / (SYMBOL_US as f64 * 1e-6)
    }
}

/// Outcome of rate selection. `usable == false` means even MCS0 misses its
/// threshold and the link must not carry data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsChoice<'a> {
    pub mcs: &'a McsEntry,
    pub usable: bool,
}

/// Error-rate curve parameters shared by all MCS entries.
///
/// Bit error rate is `0.5 / (1 + 10^((snr − (threshold − center_offset)) / decade))`:
/// a logistic waterfall centered `center_offset_db` below each MCS threshold
/// that falls one decade every `decade_db`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BerCurve {
    pub center_offset_db: f64,
    pub decade_db: f64,
}

impl Default for BerCurve {
    fn default() -> Self {
        BerCurve {
            center_offset_db: 3.0,
            decade_db: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McsTable {
    entries: Vec<McsEntry>,
    ber: BerCurve,
}

impl McsTable {
    /// VHT 20 MHz, 1 SS, long GI, MCS0..8.
    pub fn vht20(min_snr_db: &[f64], ber: BerCurve) -> Result<Self, ConfigError> {
        const DBPS: [u32; 9] = [26, 52, 78, 104, 156, 208, 234, 260, 312];
        const LABELS: [&str; 9] = [
            "BPSK 1/2",
            "QPSK 1/2",
            "QPSK 3/4",
            "16-QAM 1/2",
            "16-QAM 3/4",
            "64-QAM 2/3",
            "64-QAM 3/4",
            "64-QAM 5/6",
            "256-QAM 3/4",
        ];
        if min_snr_db.len() != DBPS.len() {
            return Err(ConfigError::Invalid(format!(
                "MCS threshold table needs {} entries, got {}",
                DBPS.len(),
                min_snr_db.len()
            )));
        }
        let entries = (0..DBPS.len())
            .map(|i| McsEntry {
                index: i as u8,
                label: LABELS[i].to_string(),
                data_bits_per_symbol: DBPS[i],
                min_snr_db: min_snr_db[i],
            })
            .collect();
        Self::new(entries, ber)
    }

    pub fn new(entries: Vec<McsEntry>, ber: BerCurve) -> Result<Self, ConfigError> {
        if entries.is_empty() {
            return Err(ConfigError::Invalid("MCS table is empty".into()));
        }
        let increasing = entries.windows(2).all(|w| {
            w[0].data_bits_per_symbol < w[1].data_bits_per_symbol
                && w[0].min_snr_db < w[1].min_snr_db
        });
        if !increasing {
            return Err(ConfigError::Invalid(
                "MCS entries must be strictly increasing in rate and SNR threshold".into(),
            ));
        }
        if !(ber.decade_db > 0.0) {
            return Err(ConfigError::Invalid("BER decade width must be > 0".into()));
        }
        Ok(McsTable { entries, ber })
    }

    pub fn entries(&self) -> &[McsEntry] {
        &self.entries
    }

    pub fn get(&self, index: usize) -> &McsEntry {
        &self.entries[index]
    }

    pub fn lowest(&self) -> &McsEntry {
        &self.entries[0]
    }

    /// Highest entry whose threshold is met (inclusive).
    pub fn select(&self, snr_db: f64) -> McsChoice<'_> {
        match self.entries.iter().rposition(|e| e.min_snr_db <= snr_db) {
            Some(i) => McsChoice {
                mcs: &self.entries[i],
                usable: true,
            },
            None => McsChoice {
                mcs: &self.entries[0],
                usable: false,
            },
        }
    }

    pub fn ber(&self, snr_db: f64, mcs: &McsEntry) -> f64 {
        let center = mcs.min_snr_db - self.ber.center_offset_db;
        let x = (snr_db - center) / self.ber.decade_db;
        // 10^x overflows to inf for large x, which correctly yields 0.
        0.5 / (1.0 + 10f64.powf(x))
    }

    /// Probability that an MPDU of `length_bytes` is received in error.
    pub fn mpdu_error_prob(&self, snr_db: f64, mcs: &McsEntry, length_bytes: u32) -> f64 {
        assert!(length_bytes > 0, "zero-length MPDU");
        frame_error_prob(self.ber(snr_db, mcs), length_bytes)
    }
}

/// `1 − (1 − ber)^(8·length)`, evaluated without cancellation for tiny BER.
pub fn frame_error_prob(ber: f64, length_bytes: u32) -> f64 {
    let bits = 8.0 * f64::from(length_bytes);
    let p = -(bits * (-ber).ln_1p()).exp_m1();
    p.clamp(0.0, 1.0)
}

/// Transmit power and receiver noise; `snr = tx − loss − noise`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub noise_floor_dbm: f64,
}

impl LinkBudget {
    pub fn snr_db(&self, path_loss_db: f64) -> f64 {
        self.tx_power_dbm - path_loss_db - self.noise_floor_dbm
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const F36: f64 = 5.18e9;

    fn table() -> McsTable {
        McsTable::vht20(
            &[2.0, 5.0, 9.0, 11.0, 15.0, 18.0, 20.0, 25.0, 29.0],
            BerCurve::default(),
        )
        .unwrap()
    }

    #[test]
    fn friis_matches_closed_form() {
        // Oracle: 20*log10(4*pi*d*f/c) evaluated in double precision outside Rust.
        assert!((path_loss_db(1.0, F36, 1.0) - 46.73437841678804).abs() < 1e-9);
        assert!((path_loss_db(50.0, F36, 1.0) - 80.71377850350841).abs() < 1e-9);
    }

    #[test]
    fn friis_decade_is_twenty_db() {
        let d = path_loss_db(100.0, F36, 1.0) - path_loss_db(10.0, F36, 1.0);
        assert!((d - 20.0).abs() < 1e-12);
    }

    #[test]
    fn friis_clamps_short_distances() {
        assert_eq!(path_loss_db(0.0, F36, 1.0), path_loss_db(1.0, F36, 1.0));
        assert_eq!(path_loss_db(0.3, F36, 1.0), path_loss_db(1.0, F36, 1.0));
    }

    #[test]
    #[should_panic(expected = "non-positive carrier frequency")]
    fn friis_rejects_zero_frequency() {
        path_loss_db(10.0, 0.0, 1.0);
    }

    #[test]
    fn channel_plan_fits_sixteen_aps() {
        let plan = ChannelPlan::sequential(16).unwrap();
        assert_eq!(plan.channel(0), 36);
        assert_eq!(plan.channel(15), 96);
        assert_eq!(plan.frequency_hz(0), 5.18e9);
        assert_eq!(ChannelPlan::available().count(), 24);
        assert!(ChannelPlan::sequential(25).is_err());
        assert!(ChannelPlan::from_channels(vec![36, 36]).is_err());
        assert!(ChannelPlan::from_channels(vec![38]).is_err());
    }

    #[test]
    fn noise_floor_default() {
        assert!((noise_floor_dbm(20e6, 7.0) - (-93.98970004336019)).abs() < 1e-9);
    }

    #[test]
    fn phy_rates() {
        let t = table();
        assert_eq!(t.get(8).phy_rate_bps(), 78e6);
        assert_eq!(t.get(0).phy_rate_bps(), 6.5e6);
    }

    #[test]
    fn select_top_boundary_and_down() {
        let t = table();
        assert_eq!(t.select(1e6).mcs.index, 8);
        let c = t.select(15.0);
        assert_eq!((c.mcs.index, c.usable), (4, true));
        let c = t.select(1.99);
        assert_eq!((c.mcs.index, c.usable), (0, false));
    }

    #[test]
    fn error_prob_asymptotes() {
        let t = table();
        for m in t.entries() {
            assert!(t.mpdu_error_prob(m.min_snr_db + 30.0, m, 1500) < 1e-6);
            assert!(t.mpdu_error_prob(m.min_snr_db - 30.0, m, 1500) > 1.0 - 1e-9);
        }
    }

    #[test]
    fn error_prob_at_threshold_is_small() {
        let t = table();
        let m = t.get(5);
        let p = t.mpdu_error_prob(m.min_snr_db, m, 1534);
        assert!(p > 1e-4 && p < 0.01, "p = {p}");
    }

    #[test]
    fn doubling_length_composes() {
        let t = table();
        let m = t.get(3);
        for snr in [6.0, 8.0, 9.5, 11.0] {
            let p1 = t.mpdu_error_prob(snr, m, 700);
            let p2 = t.mpdu_error_prob(snr, m, 1400);
            let expected = 1.0 - (1.0 - p1) * (1.0 - p1);
            assert!((p2 - expected).abs() < 1e-12, "snr {snr}: {p2} vs {expected}");
        }
    }

    #[test]
    fn table_validation() {
        assert!(McsTable::vht20(&[1.0; 9], BerCurve::default()).is_err());
        assert!(McsTable::vht20(&[1.0, 2.0], BerCurve::default()).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn friis_reciprocal(ax in 0.0..200.0f64, ay in 0.0..200.0f64, bx in 0.0..200.0f64, by in 0.0..200.0f64) {
                let d_ab = ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt();
                let d_ba = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
                prop_assert_eq!(path_loss_db(d_ab, F36, 1.0), path_loss_db(d_ba, F36, 1.0));
            }

            #[test]
            fn mcs_monotone(a in -10.0..50.0f64, b in -10.0..50.0f64) {
                let t = table();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(t.select(lo).mcs.index <= t.select(hi).mcs.index);
            }

            #[test]
            fn error_monotone(a in -10.0..50.0f64, b in -10.0..50.0f64, m in 0usize..9, l1 in 1u32..4000, l2 in 1u32..4000) {
                let t = table();
                let mcs = t.get(m);
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                prop_assert!(t.mpdu_error_prob(lo, mcs, 1500) >= t.mpdu_error_prob(hi, mcs, 1500));
                let (short, long) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
                prop_assert!(t.mpdu_error_prob(a, mcs, short) <= t.mpdu_error_prob(a, mcs, long));
                let p = t.mpdu_error_prob(a, mcs, l1);
                prop_assert!((0.0..=1.0).contains(&p));
            }
        }
    }
}
