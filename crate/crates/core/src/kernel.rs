//! Discrete-event kernel: oracle time, a deterministic event queue and
//! seeded random streams.
//!
//! Events are ordered by `(at, seq)` where `seq` is the insertion counter, so
//! two events scheduled for the same instant are always delivered in the order
//! they were scheduled. Time only moves forward, either to the `at` of the next
//! event or to the end of the run.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::SimError;

/// Oracle (global) time in integer nanoseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> Self {
        SimTime((secs * 1e9).round() as u64)
    }

    pub fn as_nanos(self) -> u64 {
        self.0
    }

    pub fn saturating_add(self, ns: u64) -> Self {
        SimTime(self.0.saturating_add(ns))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ns", self.0)
    }
}

/// Identifier returned by [`Kernel::schedule`]; equal to the insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventId(pub u64);

#[derive(Debug, Clone, PartialEq)]
pub struct Event<P> {
    pub at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct Queued<P> {
    at: SimTime,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// Time-ordered event queue with a monotone clock.
pub struct Kernel<P> {
    now: SimTime,
    next_seq: u64,
    processed: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
}

impl<P> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: SimTime::ZERO,
            next_seq: 0,
            processed: 0,
            queue: BinaryHeap::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events handed out by [`Kernel::pop_until`] so far.
    pub fn processed(&self) -> u64 {
        self.processed
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Enqueue `payload` at `at`. Scheduling before the current time is rejected.
    pub fn schedule(&mut self, at: SimTime, payload: P) -> Result<EventId, SimError> {
        if at < self.now {
            return Err(SimError::ScheduleInPast { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued { at, seq, payload }));
        Ok(EventId(seq))
    }

    /// Pop the next event if it is due at or before `t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Option<Event<P>> {
        match self.queue.peek() {
            Some(Reverse(head)) if head.at <= t_end => {}
            _ => return None,
        }
        let Reverse(q) = self.queue.pop()?;
        self.now = q.at;
        self.processed += 1;
        Some(Event {
            at: q.at,
            seq: q.seq,
            payload: q.payload,
        })
    }

    /// Move the clock to `t`; never backwards.
    pub fn advance_to(&mut self, t: SimTime) -> Result<(), SimError> {
        if t < self.now {
            return Err(SimError::ScheduleInPast { at: t, now: self.now });
        }
        self.now = t;
        Ok(())
    }

    /// Process every event due at or before `t_end` in `(at, seq)` order, then
    /// leave the clock at `t_end`.
    pub fn run_until<F, E>(&mut self, t_end: SimTime, mut handler: F) -> Result<(), E>
    where
        F: FnMut(&mut Kernel<P>, Event<P>) -> Result<(), E>,
        E: From<SimError>,
    {
        if t_end < self.now {
            return Err(SimError::ScheduleInPast { at: t_end, now: self.now }.into());
        }
        while let Some(ev) = self.pop_until(t_end) {
            handler(self, ev)?;
        }
        self.advance_to(t_end)?;
        Ok(())
    }
}

/// 64-bit FNV-1a, used to turn stream labels into ChaCha stream ids.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Words reserved per keyed draw; a gaussian sample rarely needs more than two.
const WORDS_PER_INDEX: u128 = 64;

/// A labelled ChaCha8 stream.
///
/// The key is expanded from the master seed and the 64-bit ChaCha stream id
/// is the FNV-1a hash of the label, so every `(seed, label)` pair addresses a
/// distinct, platform-independent sequence. Besides sequential draws the
/// stream supports keyed draws (`*_at(index)`) that read a fixed window of the
/// keystream, which lets different configurations share random numbers for the
/// same slot or event index.
#[derive(Clone, Debug)]
pub struct RngStream {
    label: String,
    seed: u64,
    rng: ChaCha8Rng,
}

/// Open the stream `label` under `master_seed`.
pub fn stream(label: &str, master_seed: u64) -> Result<RngStream, SimError> {
    if label.is_empty() {
        return Err(SimError::EmptyStreamLabel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(fnv1a64(label.as_bytes()));
    Ok(RngStream {
        label: label.to_owned(),
        seed: master_seed,
        rng,
    })
}

impl RngStream {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    fn positioned(&self, index: u64) -> ChaCha8Rng {
        let mut r = self.rng.clone();
        r.set_word_pos(u128::from(index) * WORDS_PER_INDEX);
        r
    }

    /// Keyed uniform draw; independent of how many sequential draws were made.
    pub fn uniform_at(&self, index: u64) -> f64 {
        let mut r = self.positioned(index);
        (r.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Keyed standard-normal draw.
    pub fn gaussian_at(&self, index: u64) -> f64 {
        let mut r = self.positioned(index);
        r.sample(StandardNormal)
    }
}
