//! One hermetic simulation run: two nodes, one link, optional BLE traffic.
//!
//! Per-slot randomness (grant jitter, cancellation, capture noise, delivery)
//! is drawn by slot index from labelled streams, so changing one component's
//! parameters does not reshuffle the draws of another.

use crate::channel::{arrival_time, ChannelModel};
use crate::clock::LocalClock;
use crate::config::RunConfig;
use crate::error::Error;
use crate::kernel::{stream, Kernel, RngStream, SimTime};
use crate::metrics::{
    accumulate_energy, sample_error, CounterSnapshot, ErrorSample, ModeTimeline, RunMetrics,
};
use crate::scheduler::{Occupancy, SlotGrant, SlotOutcome, SlotScheduler};
use crate::sync::{Beacon, Initiator, Receiver};
use crate::traffic::occupancy_stream;

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    TimeslotStart(SlotGrant),
    BeaconTx(SlotGrant),
    BeaconRx { beacon: Beacon, index: u64 },
    CompareTick(u64),
    ConnectionEventStart(usize),
    ConnectionEventEnd(usize),
    MetricsSample,
}

struct Streams {
    scheduler: RngStream,
    scheduler_rx: RngStream,
    channel: RngStream,
    clock_initiator: RngStream,
    clock_receiver: RngStream,
    traffic: RngStream,
    metrics: RngStream,
}

impl Streams {
    fn open(seed: u64) -> Result<Self, Error> {
        Ok(Streams {
            scheduler: stream("scheduler", seed)?,
            scheduler_rx: stream("scheduler-rx", seed)?,
            channel: stream("channel", seed)?,
            clock_initiator: stream("clock-initiator", seed)?,
            clock_receiver: stream("clock-receiver", seed)?,
            traffic: stream("traffic", seed)?,
            metrics: stream("metrics", seed)?,
        })
    }
}

struct World {
    cfg: RunConfig,
    t_end: SimTime,
    bias_ns: u64,
    streams: Streams,
    occupancy: Occupancy,
    scheduler: SlotScheduler,
    /// Receiver listening windows when it only listens in its own timeslots.
    rx_windows: Option<Vec<SlotGrant>>,
    channel: ChannelModel,
    init_clock: LocalClock,
    recv_clock: LocalClock,
    initiator: Initiator,
    receiver: Receiver,
    m: RunMetrics,
}

impl World {
    fn compare_time(&self, k: u64) -> SimTime {
        let period = self.cfg.metrics.period_ns();
        let offset = if self.cfg.metrics.stratified {
            (self.streams.metrics.uniform_at(k) * period as f64) as u64
        } else {
            period
        };
        SimTime(k * period + offset)
    }

    fn schedule_next_grant(&mut self, k: &mut Kernel<EventKind>) -> Result<(), Error> {
        if let Some(g) = self
            .scheduler
            .next_grant(&self.occupancy, &self.streams.scheduler, self.t_end)
        {
            if g.start <= self.t_end {
                k.schedule(g.start, EventKind::TimeslotStart(g))?;
            }
        }
        Ok(())
    }

    fn receiver_listening(&self, at: SimTime) -> bool {
        match &self.rx_windows {
            None => true,
            Some(w) => {
                let i = w.partition_point(|g| g.end() <= at);
                w.get(i).is_some_and(|g| g.contains(at))
            }
        }
    }

    fn handle(&mut self, k: &mut Kernel<EventKind>, ev: EventKind) -> Result<(), Error> {
        match ev {
            EventKind::TimeslotStart(g) => {
                let ready = SimTime(g.start.0 + self.cfg.sync.ramp_up_ns);
                k.schedule(ready, EventKind::BeaconTx(g))?;
                self.schedule_next_grant(k)?;
            }
            EventKind::BeaconTx(g) => {
                let arrival = arrival_time(k.now(), self.cfg.sync.air_time_ns, self.bias_ns);
                if arrival > self.t_end {
                    return Ok(());
                }
                let noise = self
                    .init_clock
                    .noise_ns(self.streams.clock_initiator.gaussian_at(g.index));
                let beacon = self.initiator.on_tx_slot(
                    &self.init_clock,
                    k.now(),
                    noise,
                    self.cfg.sync.air_time_ns,
                );
                self.m.tx_count += 1;
                self.m.granted.push(g);
                if self.channel.delivered_at(g.index, &self.streams.channel) {
                    self.m.delivered_count += 1;
                    if self.receiver_listening(arrival) {
                        k.schedule(
                            arrival,
                            EventKind::BeaconRx {
                                beacon,
                                index: g.index,
                            },
                        )?;
                    }
                }
            }
            EventKind::BeaconRx { beacon, index } => {
                let noise = self
                    .recv_clock
                    .noise_ns(self.streams.clock_receiver.gaussian_at(index));
                self.receiver
                    .on_beacon_received(&mut self.recv_clock, &beacon, k.now(), noise);
                self.m.rx_count += 1;
            }
            EventKind::CompareTick(n) => {
                if self.receiver.is_synced() {
                    self.m.error_samples.push(ErrorSample {
                        oracle_ns: k.now().0,
                        error_ns: sample_error(&self.init_clock, &self.recv_clock, k.now()),
                    });
                } else {
                    self.m.warnings.unsynced_samples += 1;
                }
                let next = self.compare_time(n + 1);
                if next < self.t_end {
                    k.schedule(next, EventKind::CompareTick(n + 1))?;
                }
            }
            EventKind::ConnectionEventStart(i) => {
                let end = self.occupancy.intervals()[i].end;
                k.schedule(end, EventKind::ConnectionEventEnd(i))?;
            }
            EventKind::ConnectionEventEnd(i) => {
                self.m.connection_events += 1;
                if let Some(next) = self.occupancy.intervals().get(i + 1) {
                    k.schedule(next.start, EventKind::ConnectionEventStart(i + 1))?;
                }
            }
            EventKind::MetricsSample => {
                self.m.counters.push(CounterSnapshot {
                    oracle_ns: k.now().0,
                    tx_count: self.m.tx_count,
                    rx_count: self.m.rx_count,
                });
                let next = k.now().saturating_add(1_000_000_000);
                if next <= self.t_end {
                    k.schedule(next, EventKind::MetricsSample)?;
                }
            }
        }
        Ok(())
    }
}

/// Receiver-side grants for slotted listening: same request, own jitter and
/// cancellation draws, same protocol occupancy.
fn receiver_windows(cfg: &RunConfig, occ: &Occupancy, rng: &RngStream, t_end: SimTime) -> Result<Vec<SlotGrant>, Error> {
    let mut s = SlotScheduler::new(cfg.scheduler.clone(), cfg.sync.request())?;
    let mut out = Vec::new();
    while s.nominal_start(s.next_index()) <= t_end.0 {
        if let SlotOutcome::Granted(g) = s.attempt(occ, rng) {
            if g.start < t_end {
                out.push(g);
            }
        }
    }
    Ok(out)
}

/// Validate `cfg` and run it to completion.
pub fn simulate(cfg: &RunConfig) -> Result<RunMetrics, Error> {
    cfg.validate()?;
    let t_end = SimTime(cfg.duration_ns());
    let streams = Streams::open(cfg.seed)?;
    let occupancy = if cfg.connection.enabled {
        occupancy_stream(&cfg.connection, &cfg.traffic, t_end, &streams.traffic)?
    } else {
        Occupancy::empty()
    };
    let rx_windows = if cfg.sync.rx_continuous {
        None
    } else {
        Some(receiver_windows(cfg, &occupancy, &streams.scheduler_rx, t_end)?)
    };
    let channel = ChannelModel::new(cfg.channel.effective_rssi_dbm()?, cfg.channel.curve.clone())?;

    let mut w = World {
        t_end,
        bias_ns: cfg.effective_bias_ns(),
        scheduler: SlotScheduler::new(cfg.scheduler.clone(), cfg.sync.request())?,
        occupancy,
        rx_windows,
        channel,
        init_clock: LocalClock::new(cfg.initiator.clone())?,
        recv_clock: LocalClock::new(cfg.receiver.clone())?,
        initiator: Initiator::new(),
        receiver: Receiver::new(),
        m: RunMetrics {
            duration_ns: t_end.0,
            ..RunMetrics::default()
        },
        streams,
        cfg: cfg.clone(),
    };

    let mut k: Kernel<EventKind> = Kernel::new();
    w.schedule_next_grant(&mut k)?;
    let first = w.compare_time(0);
    if first < t_end {
        k.schedule(first, EventKind::CompareTick(0))?;
    }
    k.schedule(SimTime(1_000_000_000).min(t_end), EventKind::MetricsSample)?;
    if let Some(iv) = w.occupancy.intervals().first() {
        k.schedule(iv.start, EventKind::ConnectionEventStart(0))?;
    }
    k.run_until(t_end, |k, ev| w.handle(k, ev.payload))?;

    let counts = w.scheduler.counts();
    w.m.blocked_count = counts.blocked;
    w.m.cancelled_count = counts.cancelled;
    w.m.warnings.clamped_corrections = w.recv_clock.clamped_corrections();
    w.m.corrections = w.receiver.into_records();

    w.m.initiator_timeline = ModeTimeline {
        total_ns: t_end.0,
        tx_ns: w.m.tx_count * cfg.energy.tx_on_ns,
        rx_ns: 0,
    };
    let rx_ns = match &w.rx_windows {
        None => t_end.0,
        Some(win) => win.iter().map(|g| g.end().min(t_end).0 - g.start.0).sum(),
    };
    w.m.receiver_timeline = ModeTimeline {
        total_ns: t_end.0,
        tx_ns: 0,
        rx_ns,
    };
    w.m.initiator_energy = accumulate_energy(&w.m.initiator_timeline, &cfg.energy);
    w.m.receiver_energy = accumulate_energy(&w.m.receiver_timeline, &cfg.energy);
    Ok(w.m)
}
