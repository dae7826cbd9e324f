//! Segment-granular New Reno sender and cumulative-ACK receiver.
//!
//! Sequence numbers count segments, not bytes. The receiver window never binds
//! and the source always has data.

use std::collections::BTreeSet;

use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpConfig {
    pub initial_cwnd: f64,
    pub initial_ssthresh: f64,
    pub initial_rto: SimTime,
    pub min_rto: SimTime,
    pub max_rto: SimTime,
}

impl Default for TcpConfig {
    fn default() -> Self {
        TcpConfig {
            initial_cwnd: 10.0,
            initial_ssthresh: 1e9,
            initial_rto: SimTime::from_secs(1),
            min_rto: SimTime::from_secs(1),
            max_rto: SimTime::from_secs(60),
        }
    }
}

/// Sender-side congestion state.
#[derive(Debug, Clone, PartialEq)]
pub struct NewReno {
    pub cwnd: f64,
    pub ssthresh: f64,
    /// Oldest unacknowledged segment.
    pub snd_una: u32,
    /// Next segment to send.
    pub snd_nxt: u32,
    /// Highest segment ever sent, plus one.
    pub snd_max: u32,
    pub dup_acks: u32,
    pub in_recovery: bool,
    /// `snd_max − 1` when recovery (or the last timeout) began.
    pub recover: Option<u32>,
    pub rto: SimTime,
    pub srtt: Option<SimTime>,
    pub rttvar: SimTime,
    pub rto_deadline: Option<SimTime>,
    timed: Option<(u32, SimTime)>,
    /// A partial ACK has already restarted the timer in this recovery.
    partial_acked: bool,
    cfg: TcpConfig,
}

impl NewReno {
    pub fn new(cfg: TcpConfig) -> Self {
        NewReno {
            cwnd: cfg.initial_cwnd,
            ssthresh: cfg.initial_ssthresh,
            snd_una: 0,
            snd_nxt: 0,
            snd_max: 0,
            dup_acks: 0,
            in_recovery: false,
            recover: None,
            rto: cfg.initial_rto,
            srtt: None,
            rttvar: SimTime::ZERO,
            rto_deadline: None,
            timed: None,
            partial_acked: false,
            cfg,
        }
    }

    pub fn in_flight(&self) -> u32 {
        self.snd_nxt - self.snd_una
    }

    fn window(&self) -> u32 {
        self.cwnd.max(1.0).floor() as u32
    }

    /// Segments the window allows right now, in order.
    pub fn poll_send(&mut self, now: SimTime) -> Vec<u32> {
        let mut out = Vec::new();
        while self.in_flight() < self.window() {
            let seg = self.snd_nxt;
            if seg >= self.snd_max {
                self.snd_max = seg + 1;
                if self.timed.is_none() {
                    self.timed = Some((seg, now));
                }
            }
            self.snd_nxt += 1;
            out.push(seg);
        }
        if !out.is_empty() && self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        out
    }

    /// Processes one cumulative ACK (next expected segment). Returns a
    /// segment to retransmit immediately, if any.
    pub fn on_ack(&mut self, ackno: u32, now: SimTime) -> Option<u32> {
        if ackno > self.snd_una {
            self.on_new_ack(ackno, now)
        } else if ackno == self.snd_una && self.snd_max > self.snd_una {
            self.on_dup_ack(now)
        } else {
            None
        }
    }

    fn on_new_ack(&mut self, ackno: u32, now: SimTime) -> Option<u32> {
        let ackno = ackno.min(self.snd_max);
        let acked = ackno - self.snd_una;
        self.snd_una = ackno;
        if self.snd_nxt < self.snd_una {
            self.snd_nxt = self.snd_una;
        }
        if let Some((seg, sent)) = self.timed {
            if ackno > seg {
                self.rtt_sample(now - sent);
                self.timed = None;
            }
        }
        self.dup_acks = 0;
        let mut retransmit = None;
        let mut restart_timer = true;
        if self.in_recovery {
            if self.recover.is_none_or(|r| ackno > r) {
                self.cwnd = self.ssthresh;
                self.in_recovery = false;
            } else {
                // Partial ACK: resend the next hole, deflate by what was acked.
                // Only the first one restarts the timer, so a window with many
                // holes falls back to a timeout (RFC 6582 "impatient" variant).
                retransmit = Some(self.snd_una);
                self.cwnd = (self.cwnd - f64::from(acked) + 1.0).max(1.0);
                restart_timer = !self.partial_acked;
                self.partial_acked = true;
            }
        } else if self.cwnd < self.ssthresh {
            self.cwnd += 1.0;
        } else {
            self.cwnd += 1.0 / self.cwnd;
        }
        if self.snd_max == self.snd_una {
            self.rto_deadline = None;
        } else if restart_timer || self.rto_deadline.is_none() {
            self.rto_deadline = Some(now + self.rto);
        }
        retransmit
    }

    fn on_dup_ack(&mut self, _now: SimTime) -> Option<u32> {
        self.dup_acks += 1;
        if self.in_recovery {
            self.cwnd += 1.0;
            return None;
        }
        // Only one fast retransmit per window of data (RFC 6582 `recover` check).
        if self.dup_acks == 3 && self.recover.is_none_or(|r| self.snd_una > r) {
            self.ssthresh = (self.cwnd / 2.0).max(2.0);
            self.cwnd = self.ssthresh + 3.0;
            self.recover = Some(self.snd_max - 1);
            self.in_recovery = true;
            self.partial_acked = false;
            self.timed = None;
            return Some(self.snd_una);
        }
        None
    }

    /// Retransmission timeout: collapse the window and go back to `snd_una`.
    pub fn on_timeout(&mut self, now: SimTime) {
        // Duplicate ACKs inflate the window during recovery; halve what was
        // actually outstanding instead.
        let base = if self.in_recovery {
            self.cwnd.min(f64::from(self.in_flight()))
        } else {
            self.cwnd
        };
        self.ssthresh = (base / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.recover = self.snd_max.checked_sub(1);
        self.in_recovery = false;
        self.dup_acks = 0;
        self.snd_nxt = self.snd_una;
        self.timed = None;
        self.rto = self.rto.times(2).min(self.cfg.max_rto);
        self.rto_deadline = Some(now + self.rto);
    }

    fn rtt_sample(&mut self, r: SimTime) {
        let r_ns = r.as_nanos() as f64;
        match self.srtt {
            None => {
                self.srtt = Some(r);
                self.rttvar = SimTime::from_nanos((r_ns / 2.0) as u64);
            }
            Some(srtt) => {
                let s = srtt.as_nanos() as f64;
                let var = 0.75 * self.rttvar.as_nanos() as f64 + 0.25 * (s - r_ns).abs();
                self.rttvar = SimTime::from_nanos(var as u64);
                self.srtt = Some(SimTime::from_nanos((0.875 * s + 0.125 * r_ns) as u64));
            }
        }
        let rto = self.srtt.unwrap() + self.rttvar.times(4);
        self.rto = rto.max(self.cfg.min_rto).min(self.cfg.max_rto);
    }
}

/// Receiver: in-order delivery with an unbounded out-of-order buffer.
#[derive(Debug, Clone, Default)]
pub struct TcpReceiver {
    pub rcv_nxt: u32,
    out_of_order: BTreeSet<u32>,
}

impl TcpReceiver {
    /// Returns `(cumulative ack, segments newly delivered in order)`.
    pub fn on_segment(&mut self, seg: u32) -> (u32, u32) {
        let before = self.rcv_nxt;
        if seg == self.rcv_nxt {
            self.rcv_nxt += 1;
            while self.out_of_order.remove(&self.rcv_nxt) {
                self.rcv_nxt += 1;
            }
        } else if seg > self.rcv_nxt {
            self.out_of_order.insert(seg);
        }
        (self.rcv_nxt, self.rcv_nxt - before)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(cwnd: f64, ssthresh: f64) -> NewReno {
        let mut s = NewReno::new(TcpConfig::default());
        s.cwnd = cwnd;
        s.ssthresh = ssthresh;
        s
    }

    #[test]
    fn slow_start_adds_one_per_ack() {
        let mut s = at(2.0, 64.0);
        s.poll_send(SimTime::ZERO);
        s.on_ack(1, SimTime::from_millis(30));
        assert_eq!(s.cwnd, 3.0);
    }

    #[test]
    fn congestion_avoidance_adds_inverse_cwnd() {
        let mut s = at(10.0, 10.0);
        s.poll_send(SimTime::ZERO);
        s.on_ack(1, SimTime::from_millis(30));
        assert!((s.cwnd - 10.1).abs() < 1e-12);
    }

    #[test]
    fn third_dup_ack_enters_fast_recovery() {
        let mut s = at(16.0, 1e9);
        let sent = s.poll_send(SimTime::ZERO);
        assert_eq!(sent.len(), 16);
        s.on_ack(1, SimTime::from_millis(1));
        s.cwnd = 16.0;
        assert_eq!(s.on_ack(1, SimTime::from_millis(2)), None);
        assert_eq!(s.on_ack(1, SimTime::from_millis(2)), None);
        assert_eq!(s.on_ack(1, SimTime::from_millis(2)), Some(1));
        assert_eq!(s.ssthresh, 8.0);
        assert_eq!(s.cwnd, 11.0);
        assert!(s.in_recovery);
        // Further dups inflate.
        s.on_ack(1, SimTime::from_millis(3));
        assert_eq!(s.cwnd, 12.0);
    }

    #[test]
    fn partial_then_full_ack() {
        let mut s = at(16.0, 1e9);
        s.poll_send(SimTime::ZERO);
        s.poll_send(SimTime::ZERO);
        for _ in 0..3 {
            s.on_ack(0, SimTime::from_millis(1));
        }
        assert!(s.in_recovery);
        let recover = s.recover.unwrap();
        // Partial ACK retransmits the next hole.
        assert_eq!(s.on_ack(5, SimTime::from_millis(2)), Some(5));
        assert!(s.in_recovery);
        assert_eq!(s.on_ack(recover + 1, SimTime::from_millis(3)), None);
        assert!(!s.in_recovery);
        assert_eq!(s.cwnd, s.ssthresh);
    }

    #[test]
    fn timeout_halves_and_resets() {
        let mut s = at(20.0, 1e9);
        s.poll_send(SimTime::ZERO);
        s.on_timeout(SimTime::from_secs(1));
        assert_eq!((s.ssthresh, s.cwnd), (10.0, 1.0));
        assert_eq!(s.poll_send(SimTime::from_secs(1)), vec![0]);

        let mut s = at(1.0, 1e9);
        s.poll_send(SimTime::ZERO);
        s.on_timeout(SimTime::from_secs(1));
        assert_eq!((s.ssthresh, s.cwnd), (2.0, 1.0));
    }

    #[test]
    fn rto_backoff_caps_at_sixty_seconds() {
        let mut s = at(4.0, 1e9);
        s.poll_send(SimTime::ZERO);
        let mut rtos = vec![];
        for k in 0..8 {
            s.on_timeout(SimTime::from_secs(k));
            rtos.push(s.rto.as_nanos() / 1_000_000_000);
        }
        assert_eq!(rtos, vec![2, 4, 8, 16, 32, 60, 60, 60]);
    }

    #[test]
    fn rtt_sampling_sets_rto_floor() {
        let mut s = at(1.0, 1e9);
        s.poll_send(SimTime::ZERO);
        s.on_ack(1, SimTime::from_millis(40));
        assert_eq!(s.srtt, Some(SimTime::from_millis(40)));
        assert_eq!(s.rto, SimTime::from_secs(1));
    }

    #[test]
    fn never_more_than_cwnd_in_flight() {
        let mut s = at(7.5, 1e9);
        s.poll_send(SimTime::ZERO);
        assert_eq!(s.in_flight(), 7);
    }

    #[test]
    fn receiver_reorders() {
        let mut r = TcpReceiver::default();
        assert_eq!(r.on_segment(0), (1, 1));
        assert_eq!(r.on_segment(2), (1, 0));
        assert_eq!(r.on_segment(3), (1, 0));
        assert_eq!(r.on_segment(1), (4, 3));
        assert_eq!(r.on_segment(1), (4, 0));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// New data only leaves while the flight fits inside the window.
            #[test]
            fn flight_bounded_by_cwnd(ops in prop::collection::vec(0u8..6, 1..300)) {
                let mut s = NewReno::new(TcpConfig::default());
                let mut now = SimTime::ZERO;
                s.poll_send(now);
                for op in ops {
                    now += SimTime::from_millis(1);
                    match op {
                        0 => s.on_timeout(now),
                        1 | 2 => { let a = s.snd_una; s.on_ack(a, now); }
                        _ => { let a = (s.snd_una + u32::from(op)).min(s.snd_nxt); s.on_ack(a, now); }
                    }
                    let sent = s.poll_send(now);
                    prop_assert!(s.cwnd >= 1.0);
                    if !sent.is_empty() {
                        prop_assert!(f64::from(s.in_flight()) <= s.cwnd.max(1.0));
                    }
                }
            }
        }
    }
}
