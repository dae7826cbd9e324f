//! Deterministic discrete-event engine.
//!
//! Time is kept in integer nanoseconds so that ties are exact and runs are
//! reproducible across platforms. Events with the same timestamp dispatch in
//! the order they were scheduled.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashSet};
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

/// Simulation time in nanoseconds since the start of the run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us * 1_000)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000_000)
    }

    /// Rounds to the nearest nanosecond; negative and NaN inputs map to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            SimTime(0)
        } else {
            SimTime((s * 1e9).round() as u64)
        }
    }

    pub fn from_millis_f64(ms: f64) -> Self {
        Self::from_secs_f64(ms / 1e3)
    }

    pub const fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }

    pub fn checked_sub(self, other: SimTime) -> Option<SimTime> {
        self.0.checked_sub(other.0).map(SimTime)
    }

    pub fn times(self, k: u64) -> SimTime {
        SimTime(self.0 * k)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("SimTime subtraction underflow"),
        )
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.9}s", self.as_secs_f64())
    }
}

/// Opaque handle returned by [`Engine::schedule`], used for cancellation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EventHandle(u64);

struct Entry<A> {
    fire_at: SimTime,
    sequence: u64,
    action: A,
}

impl<A> PartialEq for Entry<A> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.sequence == other.sequence
    }
}

impl<A> Eq for Entry<A> {}

impl<A> PartialOrd for Entry<A> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<A> Ord for Entry<A> {
    // BinaryHeap is a max-heap; invert so the earliest (time, sequence) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_at
            .cmp(&self.fire_at)
            .then_with(|| other.sequence.cmp(&self.sequence))
    }
}

/// Time-ordered event queue with a virtual clock.
pub struct Engine<A> {
    now: SimTime,
    next_sequence: u64,
    queue: BinaryHeap<Entry<A>>,
    cancelled: HashSet<u64>,
    dispatched: u64,
}

impl<A> Default for Engine<A> {
    fn default() -> Self {
        Self::new()
    }
}

impl<A> Engine<A> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_sequence: 0,
            queue: BinaryHeap::new(),
            cancelled: HashSet::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events dispatched so far (cancelled events excluded).
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn pending(&self) -> usize {
        self.queue.len() - self.cancelled.len()
    }

    /// Schedules `action` at absolute time `at`.
    ///
    /// Panics if `at` lies in the past: that is a logic error in the model and
    /// continuing would silently corrupt causality.
    pub fn schedule(&mut self, at: SimTime, action: A) -> EventHandle {
        assert!(
            at >= self.now,
            "event scheduled in the past: at={} now={}",
            at,
            self.now
        );
        let sequence = self.next_sequence;
        self.next_sequence += 1;
        self.queue.push(Entry {
            fire_at: at,
            sequence,
            action,
        });
        EventHandle(sequence)
    }

    pub fn schedule_in(&mut self, delay: SimTime, action: A) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, action)
    }

    /// Cancels a pending event. Cancelling an already dispatched event is a no-op.
    pub fn cancel(&mut self, handle: EventHandle) {
        if handle.0 < self.next_sequence {
            self.cancelled.insert(handle.0);
        }
    }

    /// Pops the next event with `fire_at <= end`, advancing the clock to it.
    /// Returns `None` once the horizon is reached; the clock is then left at `end`.
    pub fn next_until(&mut self, end: SimTime) -> Option<(SimTime, A)> {
        while let Some(top) = self.queue.peek() {
            if top.fire_at > end {
                break;
            }
            let entry = self.queue.pop().expect("peeked");
            if self.cancelled.remove(&entry.sequence) {
                continue;
            }
            self.now = entry.fire_at;
            self.dispatched += 1;
            return Some((entry.fire_at, entry.action));
        }
        if end > self.now {
            self.now = end;
        }
        None
    }

    /// Dispatches every event up to and including `end`, in order.
    pub fn run_until<F>(&mut self, end: SimTime, mut handler: F)
    where
        F: FnMut(&mut Engine<A>, SimTime, A),
    {
        while let Some((t, action)) = self.next_until(end) {
            handler(self, t, action);
        }
    }
}

/// Named random streams, one per stochastic subsystem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamId {
    Mobility(u32),
    Backoff,
    ChannelErrors,
    TrafficOffsets,
}

impl StreamId {
    fn raw(self) -> u64 {
        match self {
            StreamId::Backoff => 1,
            StreamId::ChannelErrors => 2,
            StreamId::TrafficOffsets => 3,
            StreamId::Mobility(sta) => 0x1_0000_0000 | u64::from(sta),
        }
    }
}

/// A reproducible random stream identified by `(seed, stream)`.
#[derive(Clone)]
pub struct RngStream {
    rng: ChaCha12Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: StreamId) -> Self {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        rng.set_stream(stream.raw());
        RngStream { rng }
    }

    /// Uniform integer in `[0, upper]`.
    pub fn uniform_inclusive(&mut self, upper: u32) -> u32 {
        self.rng.gen_range(0..=upper)
    }

    /// Uniform float in `[0, 1)`.
    pub fn unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    pub fn uniform_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        if p <= 0.0 {
            false
        } else if p >= 1.0 {
            true
        } else {
            self.unit() < p
        }
    }
}
