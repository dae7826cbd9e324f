//! EDCA medium access, A-MPDU assembly and RTS/CTS + Block Ack exchange timing.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::phy::{McsEntry, SYMBOL_US};
use crate::sim::{RngStream, SimTime};

/// MAC header plus FCS carried by every MPDU.
pub const MAC_HEADER_BYTES: u32 = 34;
/// A-MPDU subframe delimiter.
pub const DELIMITER_BYTES: u32 = 4;
pub const MAX_SUBFRAMES: usize = 64;

pub const VHT_PREAMBLE_US: u64 = 40;
const SERVICE_BITS: u64 = 16;
const TAIL_BITS: u64 = 6;

pub const LEGACY_PREAMBLE_US: u64 = 20;
pub const LEGACY_BITS_PER_SYMBOL: u64 = 24;
pub const RTS_BYTES: u32 = 20;
pub const CTS_BYTES: u32 = 14;
pub const BLOCK_ACK_BYTES: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowId(pub u32);

/// Access category. Ordered by priority: `Vo` beats `Be`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ac {
    Vo,
    Be,
}

impl Ac {
    pub const ALL: [Ac; 2] = [Ac::Vo, Ac::Be];

    pub fn index(self) -> usize {
        match self {
            Ac::Vo => 0,
            Ac::Be => 1,
        }
    }
}

impl fmt::Display for Ac {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ac::Vo => "AC_VO",
            Ac::Be => "AC_BE",
        })
    }
}

/// Maximum A-MPDU size in bytes, the controller's actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AmpduLimit(u32);

impl AmpduLimit {
    pub const MIN_BYTES: u32 = 1_600;
    pub const MAX_BYTES: u32 = 65_535;
    pub const MIN: AmpduLimit = AmpduLimit(Self::MIN_BYTES);
    pub const MAX: AmpduLimit = AmpduLimit(Self::MAX_BYTES);

    pub fn new(bytes: u32) -> Option<Self> {
        (Self::MIN_BYTES..=Self::MAX_BYTES)
            .contains(&bytes)
            .then_some(AmpduLimit(bytes))
    }

    pub fn clamped(bytes: i64) -> Self {
        AmpduLimit(bytes.clamp(Self::MIN_BYTES as i64, Self::MAX_BYTES as i64) as u32)
    }

    pub fn bytes(self) -> u32 {
        self.0
    }
}

impl fmt::Display for AmpduLimit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One MAC frame waiting for, or undergoing, transmission.
#[derive(Debug, Clone, PartialEq)]
pub struct Mpdu {
    pub flow: FlowId,
    /// Per-flow MAC sequence number, assigned at enqueue.
    pub seq: u32,
    pub payload_bytes: u32,
    pub enqueue_time: SimTime,
    pub retries: u8,
    pub ac: Ac,
    pub dest: NodeId,
    /// Upper-layer reference: TCP segment / ACK number or UDP packet index.
    pub tag: u32,
}

impl Mpdu {
    pub fn mpdu_bytes(&self) -> u32 {
        self.payload_bytes + MAC_HEADER_BYTES
    }
}

/// Bytes one subframe adds to an aggregate. Every subframe except the last is
/// padded to a 4-byte boundary.
pub fn subframe_bytes(mpdu_bytes: u32, last: bool) -> u32 {
    let raw = mpdu_bytes + DELIMITER_BYTES;
    if last {
        raw
    } else {
        raw.div_ceil(4) * 4
    }
}

/// Drop-tail FIFO for one access category. Frames handed to an ongoing
/// exchange still count against capacity until they are settled.
#[derive(Debug, Clone)]
pub struct AcQueue {
    pub ac: Ac,
    frames: VecDeque<Mpdu>,
    capacity: usize,
    in_flight: usize,
}

impl AcQueue {
    pub fn new(ac: Ac, capacity: usize) -> Self {
        AcQueue {
            ac,
            frames: VecDeque::new(),
            capacity,
            in_flight: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn in_flight(&self) -> usize {
        self.in_flight
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &Mpdu> {
        self.frames.iter()
    }

    pub fn front(&self) -> Option<&Mpdu> {
        self.frames.front()
    }

    /// Appends at the tail; hands the frame back if the queue is full.
    pub fn push(&mut self, mpdu: Mpdu) -> Result<(), Mpdu> {
        if self.frames.len() + self.in_flight >= self.capacity {
            return Err(mpdu);
        }
        self.frames.push_back(mpdu);
        Ok(())
    }

    /// Returns settled frames of an exchange to the head, preserving order.
    pub fn requeue_front(&mut self, frames: Vec<Mpdu>) {
        for f in frames.into_iter().rev() {
            self.frames.push_front(f);
        }
    }

    /// Marks `n` frames of an exchange as settled (delivered, dropped or requeued).
    pub fn settle(&mut self, n: usize) {
        self.in_flight -= n;
    }

    /// Removes every frame for `dest`, keeping their relative order.
    pub fn take_for(&mut self, dest: NodeId) -> Vec<Mpdu> {
        let mut taken = Vec::new();
        let mut kept = VecDeque::with_capacity(self.frames.len());
        for f in self.frames.drain(..) {
            if f.dest == dest {
                taken.push(f);
            } else {
                kept.push_back(f);
            }
        }
        self.frames = kept;
        taken
    }

    /// Points every queued frame at a new receiver (uplink after a handover).
    pub fn retarget(&mut self, dest: NodeId) {
        for f in self.frames.iter_mut() {
            f.dest = dest;
        }
    }

    /// Like [`push`](Self::push) but for frames migrating from another queue.
    pub fn extend_moved(&mut self, frames: Vec<Mpdu>) -> Vec<Mpdu> {
        let mut rejected = Vec::new();
        for f in frames {
            if let Err(f) = self.push(f) {
                rejected.push(f);
            }
        }
        rejected
    }
}

/// Back-to-back aggregate of MPDUs for one receiver and access category.
#[derive(Debug, Clone, PartialEq)]
pub struct Ampdu {
    pub subframes: Vec<Mpdu>,
    pub total_bytes: u32,
}

impl Ampdu {
    pub fn len(&self) -> usize {
        self.subframes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subframes.is_empty()
    }
}

/// Greedily packs queued frames for `dest` in FIFO order under `limit`.
///
/// A lone frame is always taken even when it exceeds the limit on its own.
/// Returns `None` when no frame for `dest` is queued. Taken frames move to the
/// in-flight count of the queue.
pub fn build_ampdu(queue: &mut AcQueue, limit: AmpduLimit, dest: NodeId) -> Option<Ampdu> {
    let mut picked: Vec<usize> = Vec::new();
    // Size of the picked subframes if the most recent one is the last.
    let mut total = 0u32;
    for (i, f) in queue.frames.iter().enumerate() {
        if f.dest != dest {
            continue;
        }
        let candidate = match picked.len() {
            0 => subframe_bytes(f.mpdu_bytes(), true),
            _ => {
                let prev_last = queue.frames[*picked.last().unwrap()].mpdu_bytes();
                total - subframe_bytes(prev_last, true)
                    + subframe_bytes(prev_last, false)
                    + subframe_bytes(f.mpdu_bytes(), true)
            }
        };
        if !picked.is_empty() && candidate > limit.bytes() {
            break;
        }
        picked.push(i);
        total = candidate;
        if picked.len() == MAX_SUBFRAMES {
            break;
        }
    }
    if picked.is_empty() {
        return None;
    }
    let mut subframes = Vec::with_capacity(picked.len());
    if picked.len() == *picked.last().unwrap() + 1 {
        // Common case: a contiguous run at the head.
        subframes.extend(queue.frames.drain(..picked.len()));
    } else {
        let end = *picked.last().unwrap() + 1;
        let mut rest: Vec<Mpdu> = Vec::new();
        let mut next = picked.iter().peekable();
        for (i, f) in queue.frames.drain(..end).enumerate() {
            if next.peek() == Some(&&i) {
                next.next();
                subframes.push(f);
            } else {
                rest.push(f);
            }
        }
        for f in rest.into_iter().rev() {
            queue.frames.push_front(f);
        }
    }
    queue.in_flight += subframes.len();
    Some(Ampdu {
        subframes,
        total_bytes: total,
    })
}

/// VHT PPDU duration: preamble plus whole OFDM symbols for SERVICE + PSDU + tail.
pub fn tx_duration_us(total_bytes: u32, mcs: &McsEntry) -> u64 {
    assert!(total_bytes > 0, "empty PSDU");
    let bits = SERVICE_BITS + 8 * u64::from(total_bytes) + TAIL_BITS;
    VHT_PREAMBLE_US + SYMBOL_US * bits.div_ceil(u64::from(mcs.data_bits_per_symbol))
}

/// Non-HT 6 Mbit/s duration for control frames.
pub fn legacy_duration_us(bytes: u32) -> u64 {
    let bits = SERVICE_BITS + 8 * u64::from(bytes) + TAIL_BITS;
    LEGACY_PREAMBLE_US + SYMBOL_US * bits.div_ceil(LEGACY_BITS_PER_SYMBOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdcaParams {
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
}

impl EdcaParams {
    pub const VO: EdcaParams = EdcaParams {
        aifsn: 2,
        cw_min: 3,
        cw_max: 7,
    };
    pub const BE: EdcaParams = EdcaParams {
        aifsn: 3,
        cw_min: 15,
        cw_max: 1023,
    };

    /// Window after `failures` consecutive failures.
    pub fn cw_after(&self, failures: u32) -> u32 {
        let grown = (u64::from(self.cw_min) + 1)
            .checked_shl(failures.min(32))
            .unwrap_or(u64::MAX)
            - 1;
        grown.min(u64::from(self.cw_max)) as u32
    }
}

/// Slot and SIFS timing plus the derived control-frame airtimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacTiming {
    pub slot: SimTime,
    pub sifs: SimTime,
}

impl Default for MacTiming {
    fn default() -> Self {
        MacTiming {
            slot: SimTime::from_micros(9),
            sifs: SimTime::from_micros(16),
        }
    }
}

impl MacTiming {
    pub fn aifs(&self, p: &EdcaParams) -> SimTime {
        self.sifs + self.slot.times(u64::from(p.aifsn))
    }

    pub fn rts(&self) -> SimTime {
        SimTime::from_micros(legacy_duration_us(RTS_BYTES))
    }

    pub fn cts(&self) -> SimTime {
        SimTime::from_micros(legacy_duration_us(CTS_BYTES))
    }

    pub fn block_ack(&self) -> SimTime {
        SimTime::from_micros(legacy_duration_us(BLOCK_ACK_BYTES))
    }

    pub fn cts_timeout(&self) -> SimTime {
        self.sifs + self.slot + self.cts()
    }

    /// RTS, CTS, A-MPDU and Block Ack separated by SIFS.
    pub fn exchange_airtime(&self, data: SimTime) -> SimTime {
        self.rts() + self.sifs + self.cts() + self.sifs + data + self.sifs + self.block_ack()
    }

    /// Failed RTS (lost or collided): RTS plus the CTS timeout.
    pub fn failed_rts_airtime(&self) -> SimTime {
        self.rts() + self.cts_timeout()
    }
}

/// Delay from the medium turning idle until this access category may transmit:
/// AIFS plus a uniform backoff of `[0, cw]` slots.
pub fn contend(params: &EdcaParams, cw: u32, timing: &MacTiming, rng: &mut RngStream) -> SimTime {
    let backoff = rng.uniform_inclusive(cw);
    timing.aifs(params) + timing.slot.times(u64::from(backoff))
}

/// Backoff state of one EDCA function (one access category of one station).
#[derive(Debug, Clone)]
pub struct EdcaFunction {
    pub params: EdcaParams,
    pub cw: u32,
    pub failures: u32,
    /// Remaining backoff slots, drawn when a frame becomes pending.
    pub counter: Option<u32>,
    /// First slot (counted from SIFS after the medium went idle) at which this
    /// function started sensing, for arrivals on an already idle medium.
    pub join_slot: u32,
}

impl EdcaFunction {
    pub fn new(params: EdcaParams) -> Self {
        EdcaFunction {
            params,
            cw: params.cw_min,
            failures: 0,
            counter: None,
            join_slot: 0,
        }
    }

    pub fn draw(&mut self, rng: &mut RngStream) {
        self.counter = Some(rng.uniform_inclusive(self.cw));
    }

    pub fn on_failure(&mut self) {
        self.failures += 1;
        self.cw = self.params.cw_after(self.failures);
    }

    pub fn on_success(&mut self) {
        self.failures = 0;
        self.cw = self.params.cw_min;
    }

    /// Slot index at which the backoff expires, if a counter is pending.
    pub fn expiry_slot(&self) -> Option<u32> {
        self.counter
            .map(|c| self.params.aifsn.max(self.join_slot) + c)
    }

    /// Counts down the slots that elapsed up to `slot` without this function winning.
    pub fn freeze_at(&mut self, slot: u32) {
        if let Some(c) = self.counter.as_mut() {
            let start = self.params.aifsn.max(self.join_slot);
            *c -= slot.saturating_sub(start).min(*c);
        }
        self.join_slot = 0;
    }
}

/// Per-subframe settlement of a Block Ack.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Settlement {
    pub delivered: Vec<Mpdu>,
    pub requeue: Vec<Mpdu>,
    pub dropped: Vec<Mpdu>,
}

/// Splits an exchange's subframes by outcome. Failed frames get `retries + 1`
/// and are dropped once that exceeds `retry_limit`.
pub fn settle_block_ack(subframes: Vec<Mpdu>, success: &[bool], retry_limit: u8) -> Settlement {
    assert_eq!(subframes.len(), success.len());
    let mut out = Settlement::default();
    for (mut f, ok) in subframes.into_iter().zip(success) {
        if *ok {
            out.delivered.push(f);
        } else if f.retries >= retry_limit {
            out.dropped.push(f);
        } else {
            f.retries += 1;
            out.requeue.push(f);
        }
    }
    out
}
