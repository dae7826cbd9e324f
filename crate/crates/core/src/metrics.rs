//! Per-flow KPIs, per-run reports and cross-run summaries.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::mac::FlowId;
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowClass {
    TcpData,
    TcpAck,
    Udp,
}

/// RFC 3550 interarrival jitter: `J += (|D| − J) / 16`, where `D` is the
/// change in transit time between consecutive packets.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct JitterEstimator {
    last_transit_ms: Option<f64>,
    jitter_ms: f64,
}

impl JitterEstimator {
    pub fn update(&mut self, transit_ms: f64) -> f64 {
        if let Some(prev) = self.last_transit_ms {
            let d = (transit_ms - prev).abs();
            self.jitter_ms += (d - self.jitter_ms) / 16.0;
        }
        self.last_transit_ms = Some(transit_ms);
        self.jitter_ms
    }

    pub fn value_ms(&self) -> f64 {
        self.jitter_ms
    }
}

/// Counters for one MAC-level flow.
///
/// `generated` counts frames offered to the sender's MAC queue; every such
/// frame ends up delivered, dropped at the queue, dropped after the retry
/// limit, or still queued / in flight when the run stops.
#[derive(Debug, Clone)]
pub struct FlowRecord {
    pub id: FlowId,
    pub class: FlowClass,
    /// STA index this flow belongs to.
    pub sta: u32,
    pub generated: u64,
    pub delivered: u64,
    pub dropped_queue: u64,
    pub dropped_retry: u64,
    /// Application payload delivered in order, excluding duplicates.
    pub delivered_payload_bytes: u64,
    pub delays: Vec<SimTime>,
    pub jitter: JitterEstimator,
    /// Sum of the running jitter estimate over delivered packets.
    pub jitter_sum_ms: f64,
}

impl FlowRecord {
    pub fn new(id: FlowId, class: FlowClass, sta: u32) -> Self {
        FlowRecord {
            id,
            class,
            sta,
            generated: 0,
            delivered: 0,
            dropped_queue: 0,
            dropped_retry: 0,
            delivered_payload_bytes: 0,
            delays: Vec::new(),
            jitter: JitterEstimator::default(),
            jitter_sum_ms: 0.0,
        }
    }

    pub fn lost(&self) -> u64 {
        self.dropped_queue + self.dropped_retry
    }

    /// Delivery of one packet. Real-time flows also track delay and jitter.
    pub fn record_delivery(&mut self, enqueue_t: SimTime, deliver_t: SimTime) {
        assert!(deliver_t >= enqueue_t, "delivery before enqueue");
        self.delivered += 1;
        if self.class == FlowClass::Udp {
            let delay = deliver_t - enqueue_t;
            self.delays.push(delay);
            self.jitter_sum_ms += self.jitter.update(delay.as_millis_f64());
        }
    }

    pub fn mean_delay_ms(&self) -> Option<f64> {
        (!self.delays.is_empty()).then(|| {
            self.delays.iter().map(|d| d.as_millis_f64()).sum::<f64>() / self.delays.len() as f64
        })
    }
}

/// How UDP latency is averaged within a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DelayAveraging {
    /// Mean over all delivered packets of all UDP flows.
    #[default]
    PerPacket,
    /// Mean of per-STA means.
    PerSta,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub scenario: String,
    pub seed: u64,
    pub policy: String,
    pub n_sta: u32,
    pub tcp_throughput_bps: f64,
    pub udp_delay_ms: f64,
    pub udp_jitter_ms: f64,
    pub udp_loss_rate: f64,
}

pub const RUN_CSV_HEADER: &str =
    "scenario,seed,policy,n_sta,tcp_throughput_mbps,udp_delay_ms,udp_jitter_ms,udp_loss_rate";

impl RunReport {
    pub fn from_flows(
        scenario: &str,
        seed: u64,
        policy: &str,
        n_sta: u32,
        flows: &[FlowRecord],
        duration: SimTime,
        averaging: DelayAveraging,
    ) -> Self {
        let secs = duration.as_secs_f64();
        let tcp_bytes: u64 = flows
            .iter()
            .filter(|f| f.class == FlowClass::TcpData)
            .map(|f| f.delivered_payload_bytes)
            .sum();
        let udp: Vec<&FlowRecord> = flows.iter().filter(|f| f.class == FlowClass::Udp).collect();
        let n_delays: usize = udp.iter().map(|f| f.delays.len()).sum();
        let udp_delay_ms = match averaging {
            DelayAveraging::PerPacket if n_delays > 0 => {
                udp.iter()
                    .flat_map(|f| f.delays.iter())
                    .map(|d| d.as_millis_f64())
                    .sum::<f64>()
                    / n_delays as f64
            }
            DelayAveraging::PerSta => {
                let means: Vec<f64> = udp.iter().filter_map(|f| f.mean_delay_ms()).collect();
                if means.is_empty() {
                    0.0
                } else {
                    means.iter().sum::<f64>() / means.len() as f64
                }
            }
            _ => 0.0,
        };
        let udp_jitter_ms = if n_delays > 0 {
            udp.iter().map(|f| f.jitter_sum_ms).sum::<f64>() / n_delays as f64
        } else {
            0.0
        };
        let generated: u64 = udp.iter().map(|f| f.generated).sum();
        let delivered: u64 = udp.iter().map(|f| f.delivered).sum();
        let udp_loss_rate = if generated > 0 {
            (generated - delivered) as f64 / generated as f64
        } else {
            0.0
        };
        RunReport {
            scenario: scenario.to_string(),
            seed,
            policy: policy.to_string(),
            n_sta,
            tcp_throughput_bps: if secs > 0.0 { tcp_bytes as f64 * 8.0 / secs } else { 0.0 },
            udp_delay_ms,
            udp_jitter_ms,
            udp_loss_rate,
        }
    }

    pub fn tcp_throughput_mbps(&self) -> f64 {
        self.tcp_throughput_bps / 1e6
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.scenario,
            self.seed,
            self.policy,
            self.n_sta,
            self.tcp_throughput_mbps(),
            self.udp_delay_ms,
            self.udp_jitter_ms,
            self.udp_loss_rate
        )
    }

    pub fn metric(&self, m: Metric) -> f64 {
        match m {
            Metric::TcpThroughputMbps => self.tcp_throughput_mbps(),
            Metric::UdpDelayMs => self.udp_delay_ms,
            Metric::UdpJitterMs => self.udp_jitter_ms,
            Metric::UdpLossRate => self.udp_loss_rate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    TcpThroughputMbps,
    UdpDelayMs,
    UdpJitterMs,
    UdpLossRate,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::TcpThroughputMbps,
        Metric::UdpDelayMs,
        Metric::UdpJitterMs,
        Metric::UdpLossRate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::TcpThroughputMbps => "tcp_throughput_mbps",
            Metric::UdpDelayMs => "udp_delay_ms",
            Metric::UdpJitterMs => "udp_jitter_ms",
            Metric::UdpLossRate => "udp_loss_rate",
        }
    }
}

/// Sample mean and Student-t 95% confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub n: usize,
    pub mean: f64,
    /// `None` when fewer than two samples make the interval undefined.
    pub ci95_half_width: Option<f64>,
}

impl MetricSummary {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        let mean = if n == 0 { f64::NAN } else { values.iter().sum::<f64>() / n as f64 };
        let ci95_half_width = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            t_quantile_975(n - 1) * var.sqrt() / (n as f64).sqrt()
        });
        MetricSummary {
            n,
            mean,
            ci95_half_width,
        }
    }

    pub fn lower(&self) -> f64 {
        self.mean - self.ci95_half_width.unwrap_or(0.0)
    }

    pub fn upper(&self) -> f64 {
        self.mean + self.ci95_half_width.unwrap_or(0.0)
    }

    /// True when the two 95% intervals do not overlap and `self` lies below.
    pub fn clearly_below(&self, other: &MetricSummary) -> bool {
        self.upper() < other.lower()
    }
}

/// Two-sided 95% Student-t critical value.
pub fn t_quantile_975(dof: usize) -> f64 {
    StudentsT::new(0.0, 1.0, dof as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub scenario: String,
    pub policy: String,
    pub n_sta: u32,
    pub metrics: Vec<(Metric, MetricSummary)>,
}

pub const SUMMARY_CSV_HEADER: &str = "scenario,policy,n_sta,metric,runs,mean,ci95_half_width";

impl BatchSummary {
    pub fn get(&self, m: Metric) -> &MetricSummary {
        &self
            .metrics
            .iter()
            .find(|(k, _)| *k == m)
            .expect("all metrics summarized")
            .1
    }

    pub fn csv_rows(&self) -> Vec<String> {
        self.metrics
            .iter()
            .map(|(m, s)| {
                let ci = s
                    .ci95_half_width
                    .map(|c| format!("{c:.6}"))
                    .unwrap_or_else(|| "undefined".to_string());
                format!(
                    "{},{},{},{},{},{:.6},{}",
                    self.scenario,
                    self.policy,
                    self.n_sta,
                    m.name(),
                    s.n,
                    s.mean,
                    ci
                )
            })
            .collect()
    }
}

/// Summarizes runs of one configuration. With fewer than two runs the
/// confidence intervals are reported as undefined.
pub fn summarize(runs: &[RunReport]) -> BatchSummary {
    let first = runs.first();
    let metrics = Metric::ALL
        .iter()
        .map(|m| {
            let values: Vec<f64> = runs.iter().map(|r| r.metric(*m)).collect();
            (*m, MetricSummary::from_samples(&values))
        })
        .collect();
    BatchSummary {
        scenario: first.map(|r| r.scenario.clone()).unwrap_or_default(),
        policy: first.map(|r| r.policy.clone()).unwrap_or_default(),
        n_sta: first.map(|r| r.n_sta).unwrap_or(0),
        metrics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn udp_flow() -> FlowRecord {
        FlowRecord::new(FlowId(0), FlowClass::Udp, 0)
    }

    #[test]
    fn first_packet_has_zero_jitter() {
        let mut f = udp_flow();
        f.record_delivery(SimTime::ZERO, SimTime::from_millis(5));
        assert_eq!(f.jitter.value_ms(), 0.0);
    }

    #[test]
    fn constant_transit_has_zero_jitter() {
        let mut f = udp_flow();
        for k in 0..100 {
            let t = SimTime::from_millis(20 * k);
            f.record_delivery(t, t + SimTime::from_millis(3));
        }
        assert_eq!(f.jitter.value_ms(), 0.0);
    }

    #[test]
    fn jitter_hand_iteration() {
        let mut j = JitterEstimator::default();
        j.update(5.0);
        j.update(9.0);
        assert_eq!(j.update(5.0), 0.484375);
    }

    #[test]
    fn two_run_interval() {
        let s = MetricSummary::from_samples(&[10.0, 14.0]);
        assert_eq!(s.mean, 12.0);
        // t(0.975, 1) = 12.7062..., s = 2.8284..., sqrt(2) = 1.4142...
        let hw = s.ci95_half_width.unwrap();
        assert!((hw - 25.412).abs() < 0.01, "{hw}");
        assert!((t_quantile_975(1) - 12.706_204_736).abs() < 1e-6);
        assert!((t_quantile_975(14) - 2.144_786_688).abs() < 1e-6);
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let s = MetricSummary::from_samples(&[3.5; 15]);
        assert_eq!(s.ci95_half_width, Some(0.0));
    }

    #[test]
    fn single_run_interval_is_undefined() {
        let s = MetricSummary::from_samples(&[1.0]);
        assert_eq!(s.ci95_half_width, None);
    }

    fn report(seed: u64, thr: f64) -> RunReport {
        RunReport {
            scenario: "x".into(),
            seed,
            policy: "method1:step=3000".into(),
            n_sta: 2,
            tcp_throughput_bps: thr,
            udp_delay_ms: 1.0,
            udp_jitter_ms: 0.5,
            udp_loss_rate: 0.0,
        }
    }

    #[test]
    fn summary_is_order_invariant() {
        let runs: Vec<RunReport> = (0..5).map(|s| report(s, 1e6 * (s as f64 + 1.0))).collect();
        let mut rev = runs.clone();
        rev.reverse();
        let a = summarize(&runs);
        let b = summarize(&rev);
        let (ma, mb) = (a.get(Metric::TcpThroughputMbps).mean, b.get(Metric::TcpThroughputMbps).mean);
        assert!((ma - mb).abs() < 1e-12);
        assert!((ma - 3.0).abs() < 1e-12);
        assert_eq!(a.csv_rows().len(), 4);
    }

    #[test]
    fn report_from_flows() {
        let mut tcp = FlowRecord::new(FlowId(0), FlowClass::TcpData, 0);
        tcp.delivered_payload_bytes = 7_500_000;
        let mut u = FlowRecord::new(FlowId(1), FlowClass::Udp, 1);
        u.generated = 4;
        u.record_delivery(SimTime::ZERO, SimTime::from_millis(2));
        u.record_delivery(SimTime::ZERO, SimTime::from_millis(4));
        u.record_delivery(SimTime::ZERO, SimTime::from_millis(6));
        let r = RunReport::from_flows("s", 1, "p", 2, &[tcp, u], SimTime::from_secs(60), DelayAveraging::PerPacket);
        assert!((r.tcp_throughput_mbps() - 1.0).abs() < 1e-12);
        assert!((r.udp_delay_ms - 4.0).abs() < 1e-12);
        assert!((r.udp_loss_rate - 0.25).abs() < 1e-12);
        // Running jitter 0, 0.125, 0.2421875 averaged over three packets.
        assert_eq!(r.csv_row(), "s,1,p,2,1.000000,4.000000,0.122396,0.250000");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn jitter_matches_stepwise_recomputation(transits in prop::collection::vec(0u64..50_000_000, 1..200)) {
                let mut f = udp_flow();
                for (i, t) in transits.iter().enumerate() {
                    let sent = SimTime::from_millis(20 * i as u64);
                    f.record_delivery(sent, sent + SimTime::from_nanos(*t));
                }
                // Independent recomputation straight from the definition.
                let mut j = 0.0f64;
                for w in transits.windows(2) {
                    let d = (w[1] as f64 / 1e6 - w[0] as f64 / 1e6).abs();
                    j += (d - j) / 16.0;
                }
                prop_assert_eq!(f.jitter.value_ms(), j);
            }
        }
    }
}
