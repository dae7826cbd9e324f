use serde::{Deserialize, Serialize};

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Uplink,
    Downlink,
}

/// Constant-bit-rate real-time source.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdpFlowSpec {
    pub payload_bytes: u32,
    pub rate_pps: u32,
    pub direction: Direction,
    pub start_offset: SimTime,
}

impl UdpFlowSpec {
    pub fn interval(&self) -> SimTime {
        SimTime::from_nanos(1_000_000_000 / u64::from(self.rate_pps))
    }

    pub fn next_departure(&self, now: SimTime) -> SimTime {
        now + self.interval()
    }

    pub fn offered_load_bps(&self) -> f64 {
        f64::from(self.payload_bytes) * 8.0 * f64::from(self.rate_pps)
    }

    /// Departures in `[0, horizon]`.
    pub fn departures(&self, horizon: SimTime) -> impl Iterator<Item = SimTime> + '_ {
        std::iter::successors(Some(self.start_offset), move |t| Some(self.next_departure(*t)))
            .take_while(move |t| *t <= horizon)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(offset_ms: u64) -> UdpFlowSpec {
        UdpFlowSpec {
            payload_bytes: 60,
            rate_pps: 50,
            direction: Direction::Uplink,
            start_offset: SimTime::from_millis(offset_ms),
        }
    }

    #[test]
    fn departures_every_twenty_ms() {
        let s = spec(3);
        let d: Vec<SimTime> = s.departures(SimTime::from_millis(50)).collect();
        assert_eq!(d, vec![SimTime::from_millis(3), SimTime::from_millis(23), SimTime::from_millis(43)]);
        assert_eq!(s.next_departure(SimTime::from_millis(43)), SimTime::from_millis(63));
    }

    #[test]
    fn sixty_seconds_is_three_thousand_packets() {
        for off in [0, 7, 19] {
            let n = spec(off).departures(SimTime::from_secs(60)).count();
            assert!((2_999..=3_001).contains(&n), "{n}");
        }
    }

    #[test]
    fn offered_load() {
        assert_eq!(spec(0).offered_load_bps(), 24_000.0);
    }
}
