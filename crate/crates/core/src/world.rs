//! One simulation run: BSS media, stations, flows and the per-AP controllers.

use std::collections::BTreeMap;

use crate::config::ScenarioConfig;
use crate::controller::{ApController, TraceRecord};
use crate::error::ConfigError;
use crate::mac::{
    build_ampdu, settle_block_ack, tx_duration_us, Ac, AcQueue, AmpduLimit, EdcaFunction, FlowId,
    MacTiming, Mpdu, NodeId, RTS_BYTES,
};
use crate::metrics::{FlowClass, FlowRecord, RunReport};
use crate::mobility::{evaluate_association, ApSite, Position, RandomWaypoint};
use crate::phy::{path_loss_db, LinkBudget, McsTable};
use crate::sim::{Engine, EventHandle, RngStream, SimTime, StreamId};
use crate::traffic::{Direction, NewReno, TcpReceiver, UdpFlowSpec};

/// How long a transmitter waits before retrying a link that is below MCS0.
pub const LINK_RECHECK: SimTime = SimTime::from_millis(100);
/// Width of the time-series bins.
pub const SAMPLE_INTERVAL: SimTime = SimTime::from_millis(250);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub timeseries: bool,
    pub exchange_log: bool,
}

/// One data exchange as seen on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExchangeEntry {
    pub time: SimTime,
    pub tx: NodeId,
    pub rx: NodeId,
    pub subframes: u16,
    pub total_bytes: u32,
    pub mcs: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesRow {
    pub time: SimTime,
    pub sta: u32,
    pub metric: &'static str,
    pub value: f64,
}

pub const TIMESERIES_CSV_HEADER: &str = "time_s,sta_id,metric,value";

impl TimeSeriesRow {
    pub fn csv_row(&self) -> String {
        format!("{:.3},{},{},{:.6}", self.time.as_secs_f64(), self.sta, self.metric, self.value)
    }
}

/// Per-flow accounting at the end of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowBalance {
    pub flow: FlowId,
    pub generated: u64,
    pub delivered: u64,
    pub dropped_queue: u64,
    pub dropped_retry: u64,
    /// Queued, in flight, or received but held for reordering.
    pub residual: u64,
}

impl FlowBalance {
    pub fn holds(&self) -> bool {
        self.generated == self.delivered + self.dropped_queue + self.dropped_retry + self.residual
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub report: RunReport,
    pub trace: Vec<TraceRecord>,
    pub timeseries: Vec<TimeSeriesRow>,
    pub exchanges: Vec<ExchangeEntry>,
    pub balances: Vec<FlowBalance>,
    /// Busy fraction of each BSS channel.
    pub busy_fraction: Vec<f64>,
    pub flows: Vec<FlowRecord>,
    pub events: u64,
}

#[derive(Debug)]
enum Ev {
    Contention(u32),
    ExchangeEnd(u32),
    Udp(u32),
    SegmentsAtAp { tcp: u32, segs: Vec<u32> },
    AcksAtServer { tcp: u32, acks: Vec<u32> },
    Rto(u32),
    ControllerTick,
    Association,
    LinkRecheck(u32),
    Sample,
}

struct Node {
    bss: usize,
    edca: [EdcaFunction; 2],
    queues: [AcQueue; 2],
    deferred_until: [Option<SimTime>; 2],
}

enum Kind {
    /// Collided or lost RTS; no data on the air.
    Failed,
    Data {
        rx: usize,
        subframes: Vec<Mpdu>,
        success: Vec<bool>,
    },
}

struct Exchange {
    tx: usize,
    ac: Ac,
    involved: Vec<usize>,
    kind: Kind,
}

struct Bss {
    ap_node: usize,
    site: ApSite,
    members: Vec<usize>,
    idle_since: Option<SimTime>,
    contention: Option<(EventHandle, SimTime)>,
    exchange: Option<Exchange>,
    busy_started: SimTime,
    busy: SimTime,
    realtime_members: usize,
}

#[derive(Default)]
struct Reorder {
    next: u32,
    held: BTreeMap<u32, Option<Mpdu>>,
}

impl Reorder {
    /// Accepts frame `seq` (or its loss when `mpdu` is `None`) and returns the
    /// frames now deliverable in order.
    fn settle(&mut self, seq: u32, mpdu: Option<Mpdu>) -> Vec<Mpdu> {
        self.held.insert(seq, mpdu);
        let mut out = Vec::new();
        while let Some(slot) = self.held.remove(&self.next) {
            out.extend(slot);
            self.next += 1;
        }
        out
    }

    fn held_frames(&self) -> u64 {
        self.held.values().filter(|m| m.is_some()).count() as u64
    }
}

struct TcpConn {
    sta: usize,
    data_flow: usize,
    ack_flow: usize,
    sender: NewReno,
    receiver: TcpReceiver,
    rto_timer: Option<SimTime>,
}

struct UdpSource {
    sta: usize,
    flow: usize,
    spec: UdpFlowSpec,
}

struct Sta {
    node: usize,
    walker: RandomWaypoint,
    realtime: bool,
}

#[derive(Default, Clone, Copy)]
struct Bin {
    tcp_bytes: u64,
    delay_sum_ms: f64,
    delay_count: u64,
}

pub struct World {
    cfg: ScenarioConfig,
    seed: u64,
    options: RunOptions,
    engine: Engine<Ev>,
    timing: MacTiming,
    mcs: McsTable,
    link: LinkBudget,
    retry_limit: u8,
    sta_limit: AmpduLimit,
    nodes: Vec<Node>,
    bss: Vec<Bss>,
    stas: Vec<Sta>,
    flows: Vec<FlowRecord>,
    reorder: Vec<Reorder>,
    next_seq: Vec<u32>,
    tcp: Vec<TcpConn>,
    udp: Vec<UdpSource>,
    controllers: Vec<ApController>,
    trace: Vec<TraceRecord>,
    backoff_rng: RngStream,
    error_rng: RngStream,
    exchanges: Vec<ExchangeEntry>,
    bins: Vec<Bin>,
    timeseries: Vec<TimeSeriesRow>,
}

impl World {
    pub fn new(cfg: &ScenarioConfig, seed: u64, options: RunOptions) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let budget = cfg.budget()?;
        let plan = cfg.channel_plan()?;
        let n_ap = cfg.ap_count();
        let n = cfg.n as usize;
        let arena = cfg.arena();
        let pause = SimTime::from_secs_f64(cfg.mobility.pause_s);

        let mut nodes = Vec::with_capacity(n_ap + 2 * n);
        let mut bss = Vec::with_capacity(n_ap);
        for (i, pos) in cfg.ap_positions().into_iter().enumerate() {
            nodes.push(new_node(cfg, i));
            bss.push(Bss {
                ap_node: i,
                site: ApSite {
                    position: pos,
                    frequency_hz: plan.frequency_hz(i),
                },
                members: Vec::new(),
                idle_since: Some(SimTime::ZERO),
                contention: None,
                exchange: None,
                busy_started: SimTime::ZERO,
                busy: SimTime::ZERO,
                realtime_members: 0,
            });
        }

        let mut stas = Vec::with_capacity(2 * n);
        for s in 0..2 * n {
            let rng = RngStream::new(seed, StreamId::Mobility(s as u32));
            nodes.push(new_node(cfg, 0));
            stas.push(Sta {
                node: n_ap + s,
                walker: RandomWaypoint::new(arena, cfg.mobility.speed_mps, pause, rng),
                realtime: s >= n,
            });
        }

        let mut flows = Vec::new();
        let mut tcp = Vec::with_capacity(n);
        for s in 0..n {
            let data_flow = flows.len();
            flows.push(FlowRecord::new(FlowId(data_flow as u32), FlowClass::TcpData, s as u32));
            flows.push(FlowRecord::new(FlowId(data_flow as u32 + 1), FlowClass::TcpAck, s as u32));
            tcp.push(TcpConn {
                sta: s,
                data_flow,
                ack_flow: data_flow + 1,
                sender: NewReno::new(cfg.tcp_config()),
                receiver: TcpReceiver::default(),
                rto_timer: None,
            });
        }
        let mut offsets = RngStream::new(seed, StreamId::TrafficOffsets);
        let mut udp = Vec::with_capacity(n);
        for s in n..2 * n {
            let flow = flows.len();
            flows.push(FlowRecord::new(FlowId(flow as u32), FlowClass::Udp, s as u32));
            let mut spec = UdpFlowSpec {
                payload_bytes: cfg.traffic.udp_payload_bytes,
                rate_pps: cfg.traffic.udp_rate_pps,
                direction: cfg.traffic.udp_direction,
                start_offset: SimTime::ZERO,
            };
            let gap = spec.interval().as_nanos();
            spec.start_offset = SimTime::from_nanos((offsets.unit() * gap as f64) as u64 % gap);
            udp.push(UdpSource { sta: s, flow, spec });
        }

        let controllers = (0..n_ap)
            .map(|i| ApController::new(i as u32, cfg.policy, budget))
            .collect();
        let n_flows = flows.len();
        Ok(World {
            cfg: cfg.clone(),
            seed,
            options,
            engine: Engine::new(),
            timing: cfg.mac_timing(),
            mcs: cfg.mcs_table()?,
            link: cfg.link_budget(),
            retry_limit: cfg.mac.retry_limit,
            sta_limit: AmpduLimit::new(cfg.mac.sta_uplink_limit_bytes).expect("validated"),
            nodes,
            bss,
            stas,
            flows,
            reorder: (0..n_flows).map(|_| Reorder::default()).collect(),
            next_seq: vec![0; n_flows],
            tcp,
            udp,
            controllers,
            trace: Vec::new(),
            backoff_rng: RngStream::new(seed, StreamId::Backoff),
            error_rng: RngStream::new(seed, StreamId::ChannelErrors),
            exchanges: Vec::new(),
            bins: vec![Bin::default(); 2 * n],
            timeseries: Vec::new(),
        })
    }

    pub fn run(mut self) -> RunOutput {
        let end = self.cfg.duration();
        self.start();
        while let Some((now, ev)) = self.engine.next_until(end) {
            self.dispatch(now, ev);
        }
        self.finish(end)
    }

    fn start(&mut self) {
        let now = SimTime::ZERO;
        let sites: Vec<ApSite> = self.bss.iter().map(|b| b.site).collect();
        for s in 0..self.stas.len() {
            let pos = self.stas[s].walker.position_at(now);
            let ap = evaluate_association(
                pos,
                &sites,
                None,
                self.cfg.mobility.hysteresis_db,
                self.cfg.phy.min_distance_m,
            );
            self.join_bss(s, ap);
        }
        for ap in 0..self.bss.len() {
            let present = self.bss[ap].realtime_members > 0;
            self.controllers[ap].on_occupancy(present);
        }
        for i in 0..self.tcp.len() {
            self.server_send(i, now);
        }
        for i in 0..self.udp.len() {
            let at = self.udp[i].spec.start_offset;
            self.engine.schedule(at, Ev::Udp(i as u32));
        }
        self.engine.schedule(self.cfg.monitoring_interval(), Ev::ControllerTick);
        let assoc = SimTime::from_secs_f64(self.cfg.mobility.association_interval_s);
        self.engine.schedule(assoc, Ev::Association);
        if self.options.timeseries {
            self.engine.schedule(SAMPLE_INTERVAL, Ev::Sample);
        }
    }

    fn dispatch(&mut self, now: SimTime, ev: Ev) {
        match ev {
            Ev::Contention(b) => self.on_contention(b as usize, now),
            Ev::ExchangeEnd(b) => self.on_exchange_end(b as usize, now),
            Ev::Udp(i) => self.on_udp(i as usize, now),
            Ev::SegmentsAtAp { tcp, segs } => self.on_segments_at_ap(tcp as usize, segs, now),
            Ev::AcksAtServer { tcp, acks } => self.on_acks_at_server(tcp as usize, acks, now),
            Ev::Rto(i) => self.on_rto(i as usize, now),
            Ev::ControllerTick => {
                for c in self.controllers.iter_mut() {
                    self.trace.push(c.on_period_tick(now));
                }
                self.engine.schedule(now + self.cfg.monitoring_interval(), Ev::ControllerTick);
            }
            Ev::Association => {
                self.on_association(now);
                let assoc = SimTime::from_secs_f64(self.cfg.mobility.association_interval_s);
                self.engine.schedule(now + assoc, Ev::Association);
            }
            Ev::LinkRecheck(node) => {
                let node = node as usize;
                for ac in Ac::ALL {
                    if self.nodes[node].deferred_until[ac.index()].is_some_and(|t| t <= now) {
                        self.nodes[node].deferred_until[ac.index()] = None;
                        self.on_became_eligible(node, ac, now);
                    }
                }
                self.reschedule(self.nodes[node].bss, now);
            }
            Ev::Sample => self.on_sample(now),
        }
    }

    // ---- medium access ----

    fn slot_index(&self, b: usize, now: SimTime) -> u32 {
        let Some(idle) = self.bss[b].idle_since else {
            return 0;
        };
        let start = idle + self.timing.sifs;
        if now <= start {
            0
        } else {
            let slot = self.timing.slot.as_nanos();
            ((now - start).as_nanos().div_ceil(slot)) as u32
        }
    }

    fn transmitting(&self, node: usize, ac: Ac) -> bool {
        self.bss[self.nodes[node].bss]
            .exchange
            .as_ref()
            .is_some_and(|e| e.tx == node && e.ac == ac)
    }

    fn expiry(&self, node: usize, ac: Ac, now: SimTime) -> Option<u32> {
        let nd = &self.nodes[node];
        let i = ac.index();
        if nd.queues[i].is_empty() || nd.deferred_until[i].is_some_and(|t| t > now) {
            return None;
        }
        nd.edca[i].expiry_slot()
    }

    fn contenders(&self, b: usize, now: SimTime) -> Vec<(usize, Ac, u32)> {
        let bss = &self.bss[b];
        let mut out = Vec::new();
        for &node in std::iter::once(&bss.ap_node).chain(bss.members.iter()) {
            for ac in Ac::ALL {
                if let Some(e) = self.expiry(node, ac, now) {
                    out.push((node, ac, e));
                }
            }
        }
        out
    }

    /// Re-arms the contention event of an idle BSS at the earliest expiry.
    fn reschedule(&mut self, b: usize, now: SimTime) {
        let Some(idle) = self.bss[b].idle_since else {
            return;
        };
        let next = self.contenders(b, now).iter().map(|c| c.2).min();
        let at = next.map(|m| idle + self.timing.sifs + self.timing.slot.times(u64::from(m)));
        match (self.bss[b].contention, at) {
            (Some((_, t)), Some(a)) if t == a => {}
            (old, at) => {
                if let Some((h, _)) = old {
                    self.engine.cancel(h);
                }
                self.bss[b].contention = at.map(|a| {
                    let a = a.max(now);
                    (self.engine.schedule(a, Ev::Contention(b as u32)), a)
                });
            }
        }
    }

    /// A function that was not sensing (empty queue or deferred) starts now.
    fn on_became_eligible(&mut self, node: usize, ac: Ac, now: SimTime) {
        if self.transmitting(node, ac) {
            return;
        }
        let b = self.nodes[node].bss;
        let slot = self.slot_index(b, now);
        let idle = self.bss[b].idle_since.is_some();
        let f = &mut self.nodes[node].edca[ac.index()];
        if f.counter.is_none() {
            f.draw(&mut self.backoff_rng);
        }
        f.join_slot = if idle { slot } else { 0 };
    }

    fn on_contention(&mut self, b: usize, now: SimTime) {
        self.bss[b].contention = None;
        if self.bss[b].idle_since.is_none() {
            return;
        }
        loop {
            let all = self.contenders(b, now);
            let Some(m) = all.iter().map(|c| c.2).min() else {
                return;
            };
            let winners: Vec<(usize, Ac)> =
                all.iter().filter(|c| c.2 == m).map(|c| (c.0, c.1)).collect();
            let mut tx_nodes: Vec<usize> = winners.iter().map(|w| w.0).collect();
            tx_nodes.dedup();
            // Each winning node sends its highest-priority winning AC.
            let primary = |node: usize| {
                if winners.contains(&(node, Ac::Vo)) {
                    Ac::Vo
                } else {
                    Ac::Be
                }
            };

            if tx_nodes.len() == 1 {
                let node = tx_nodes[0];
                let ac = primary(node);
                let Some((rx, snr, mcs_idx)) = self.plan_link(node, ac, now) else {
                    self.nodes[node].deferred_until[ac.index()] = Some(now + LINK_RECHECK);
                    self.engine.schedule(now + LINK_RECHECK, Ev::LinkRecheck(node as u32));
                    continue;
                };
                self.resolve_losers(&all, &winners, m, now);
                self.start_exchange(b, node, ac, rx, snr, mcs_idx, now);
            } else {
                self.resolve_losers(&all, &winners, m, now);
                for &node in &tx_nodes {
                    let f = &mut self.nodes[node].edca[primary(node).index()];
                    f.on_failure();
                    f.draw(&mut self.backoff_rng);
                }
                let end = now + self.timing.failed_rts_airtime();
                self.begin_busy(
                    b,
                    Exchange {
                        tx: usize::MAX,
                        ac: Ac::Be,
                        involved: tx_nodes,
                        kind: Kind::Failed,
                    },
                    now,
                    end,
                );
            }
            return;
        }
    }

    /// Freezes every contender that did not win and handles internal collisions.
    fn resolve_losers(&mut self, all: &[(usize, Ac, u32)], winners: &[(usize, Ac)], m: u32, _now: SimTime) {
        for &(node, ac, _) in all {
            if !winners.contains(&(node, ac)) {
                self.nodes[node].edca[ac.index()].freeze_at(m);
            }
        }
        for &(node, ac) in winners {
            // A lower AC that expired together with a higher one of the same station.
            if ac == Ac::Be && winners.contains(&(node, Ac::Vo)) {
                let f = &mut self.nodes[node].edca[ac.index()];
                f.on_failure();
                f.draw(&mut self.backoff_rng);
            }
        }
    }

    fn position(&mut self, node: usize, now: SimTime) -> Position {
        let n_ap = self.bss.len();
        if node < n_ap {
            self.bss[node].site.position
        } else {
            self.stas[node - n_ap].walker.position_at(now)
        }
    }

    fn snr_between(&mut self, a: usize, b: usize, bss: usize, now: SimTime) -> f64 {
        let pa = self.position(a, now);
        let pb = self.position(b, now);
        let loss = path_loss_db(pa.distance(&pb), self.bss[bss].site.frequency_hz, self.cfg.phy.min_distance_m);
        self.link.snr_db(loss)
    }

    /// Receiver, SNR and MCS for the next transmission of `node`/`ac`, or
    /// `None` when every candidate receiver is below MCS0.
    fn plan_link(&mut self, node: usize, ac: Ac, now: SimTime) -> Option<(usize, f64, usize)> {
        let b = self.nodes[node].bss;
        let mut tried: Vec<usize> = Vec::new();
        let candidates: Vec<usize> = if node == self.bss[b].ap_node {
            let mut d = Vec::new();
            for f in self.nodes[node].queues[ac.index()].iter() {
                let dest = f.dest.0 as usize;
                if !d.contains(&dest) {
                    d.push(dest);
                }
            }
            d
        } else {
            vec![self.bss[b].ap_node]
        };
        for rx in candidates {
            if tried.contains(&rx) {
                continue;
            }
            tried.push(rx);
            let snr = self.snr_between(node, rx, b, now);
            let choice = self.mcs.select(snr);
            if choice.usable {
                return Some((rx, snr, choice.mcs.index as usize));
            }
        }
        None
    }

    #[allow(clippy::too_many_arguments)]
    fn start_exchange(&mut self, b: usize, node: usize, ac: Ac, rx: usize, snr: f64, mcs_idx: usize, now: SimTime) {
        let i = ac.index();
        let rts_lost = {
            let p = self.mcs.mpdu_error_prob(snr, self.mcs.lowest(), RTS_BYTES);
            self.error_rng.bernoulli(p)
        };
        if rts_lost {
            let f = &mut self.nodes[node].edca[i];
            f.on_failure();
            f.draw(&mut self.backoff_rng);
            let end = now + self.timing.failed_rts_airtime();
            let ex = Exchange {
                tx: usize::MAX,
                ac,
                involved: vec![node, rx],
                kind: Kind::Failed,
            };
            self.begin_busy(b, ex, now, end);
            return;
        }
        let limit = if node == self.bss[b].ap_node || self.cfg.mac.tune_sta_uplink {
            self.controllers[b].limit()
        } else {
            self.sta_limit
        };
        let ampdu = build_ampdu(&mut self.nodes[node].queues[i], limit, NodeId(rx as u32))
            .expect("planned receiver has queued frames");
        let mcs = self.mcs.get(mcs_idx).clone();
        let success: Vec<bool> = ampdu
            .subframes
            .iter()
            .map(|f| {
                let p = self.mcs.mpdu_error_prob(snr, &mcs, f.mpdu_bytes());
                !self.error_rng.bernoulli(p)
            })
            .collect();
        let data = SimTime::from_micros(tx_duration_us(ampdu.total_bytes, &mcs));
        let end = now + self.timing.exchange_airtime(data);
        if self.options.exchange_log {
            self.exchanges.push(ExchangeEntry {
                time: now,
                tx: NodeId(node as u32),
                rx: NodeId(rx as u32),
                subframes: ampdu.subframes.len() as u16,
                total_bytes: ampdu.total_bytes,
                mcs: mcs.index,
            });
        }
        self.nodes[node].edca[i].counter = None;
        let ex = Exchange {
            tx: node,
            ac,
            involved: vec![node, rx],
            kind: Kind::Data {
                rx,
                subframes: ampdu.subframes,
                success,
            },
        };
        self.begin_busy(b, ex, now, end);
    }

    fn begin_busy(&mut self, b: usize, ex: Exchange, now: SimTime, end: SimTime) {
        let bss = &mut self.bss[b];
        debug_assert!(bss.exchange.is_none());
        if let Some((h, _)) = bss.contention.take() {
            self.engine.cancel(h);
        }
        bss.idle_since = None;
        bss.busy_started = now;
        bss.exchange = Some(ex);
        self.engine.schedule(end, Ev::ExchangeEnd(b as u32));
    }

    fn on_exchange_end(&mut self, b: usize, now: SimTime) {
        let ex = self.bss[b].exchange.take().expect("exchange in progress");
        {
            let bss = &mut self.bss[b];
            bss.busy += now - bss.busy_started;
            bss.idle_since = Some(now);
        }
        let members = self.bss[b].members.clone();
        for node in std::iter::once(self.bss[b].ap_node).chain(members) {
            for f in self.nodes[node].edca.iter_mut() {
                f.join_slot = 0;
            }
        }
        if let Kind::Data { rx, subframes, success } = ex.kind {
            let i = ex.ac.index();
            let n = subframes.len();
            let s = settle_block_ack(subframes, &success, self.retry_limit);
            let node = ex.tx;
            self.nodes[node].queues[i].settle(n);
            {
                let f = &mut self.nodes[node].edca[i];
                if s.delivered.is_empty() {
                    f.on_failure();
                } else {
                    f.on_success();
                }
            }
            self.nodes[node].queues[i].requeue_front(s.requeue);
            if !self.nodes[node].queues[i].is_empty() {
                self.nodes[node].edca[i].draw(&mut self.backoff_rng);
            }
            let mut released = Vec::new();
            for f in s.dropped {
                let flow = f.flow.0 as usize;
                self.flows[flow].dropped_retry += 1;
                released.extend(self.reorder[flow].settle(f.seq, None));
            }
            for f in s.delivered {
                let flow = f.flow.0 as usize;
                released.extend(self.reorder[flow].settle(f.seq, Some(f)));
            }
            self.deliver(released, b, rx, now);
        }
        self.reschedule(b, now);
    }

    // ---- queues and applications ----

    fn enqueue(&mut self, node: usize, mut mpdu: Mpdu, now: SimTime) {
        let flow = mpdu.flow.0 as usize;
        let ac = mpdu.ac;
        self.flows[flow].generated += 1;
        let was_eligible = self.expiry(node, ac, now).is_some();
        mpdu.seq = self.next_seq[flow];
        match self.nodes[node].queues[ac.index()].push(mpdu) {
            Ok(()) => {
                self.next_seq[flow] += 1;
                if !was_eligible {
                    self.on_became_eligible(node, ac, now);
                    self.reschedule(self.nodes[node].bss, now);
                }
            }
            Err(_) => self.flows[flow].dropped_queue += 1,
        }
    }

    /// Hands in-order frames to their applications.
    fn deliver(&mut self, frames: Vec<Mpdu>, b: usize, _rx: usize, now: SimTime) {
        let mut acks: Vec<(usize, Vec<u32>)> = Vec::new();
        for f in frames {
            let flow = f.flow.0 as usize;
            let class = self.flows[flow].class;
            self.flows[flow].record_delivery(f.enqueue_time, now);
            match class {
                FlowClass::TcpData => {
                    let t = self.flows[flow].sta as usize;
                    let (ackno, newly) = self.tcp[t].receiver.on_segment(f.tag);
                    let bytes = u64::from(newly) * u64::from(self.cfg.traffic.tcp_mss_bytes);
                    self.flows[flow].delivered_payload_bytes += bytes;
                    self.bins[t].tcp_bytes += bytes;
                    let sta_node = self.stas[t].node;
                    let ap = self.bss[self.nodes[sta_node].bss].ap_node;
                    let ack = Mpdu {
                        flow: FlowId(self.tcp[t].ack_flow as u32),
                        seq: 0,
                        payload_bytes: self.cfg.traffic.tcp_ack_bytes,
                        enqueue_time: now,
                        retries: 0,
                        ac: Ac::Be,
                        dest: NodeId(ap as u32),
                        tag: ackno,
                    };
                    self.enqueue(sta_node, ack, now);
                }
                FlowClass::TcpAck => {
                    let t = self.flows[flow].sta as usize;
                    match acks.iter_mut().find(|(i, _)| *i == t) {
                        Some((_, v)) => v.push(f.tag),
                        None => acks.push((t, vec![f.tag])),
                    }
                }
                FlowClass::Udp => {
                    let delay = now - f.enqueue_time;
                    self.controllers[b].record_delay(f.flow, delay);
                    let s = self.flows[flow].sta as usize;
                    self.bins[s].delay_sum_ms += delay.as_millis_f64();
                    self.bins[s].delay_count += 1;
                }
            }
        }
        let wired = SimTime::from_millis_f64(self.cfg.traffic.wired_latency_ms);
        for (t, acks) in acks {
            self.engine.schedule(now + wired, Ev::AcksAtServer { tcp: t as u32, acks });
        }
    }

    fn on_udp(&mut self, i: usize, now: SimTime) {
        let src = &self.udp[i];
        let sta_node = self.stas[src.sta].node;
        let ap = self.bss[self.nodes[sta_node].bss].ap_node;
        let (from, to) = match src.spec.direction {
            Direction::Uplink => (sta_node, ap),
            Direction::Downlink => (ap, sta_node),
        };
        let mpdu = Mpdu {
            flow: FlowId(src.flow as u32),
            seq: 0,
            payload_bytes: src.spec.payload_bytes,
            enqueue_time: now,
            retries: 0,
            ac: self.cfg.traffic.udp_ac,
            dest: NodeId(to as u32),
            tag: 0,
        };
        let next = src.spec.next_departure(now);
        self.enqueue(from, mpdu, now);
        self.engine.schedule(next, Ev::Udp(i as u32));
    }

    fn server_send(&mut self, t: usize, now: SimTime) {
        let segs = self.tcp[t].sender.poll_send(now);
        self.send_segments(t, segs, now);
    }

    fn send_segments(&mut self, t: usize, segs: Vec<u32>, now: SimTime) {
        if !segs.is_empty() {
            let wired = SimTime::from_millis_f64(self.cfg.traffic.wired_latency_ms);
            self.engine.schedule(now + wired, Ev::SegmentsAtAp { tcp: t as u32, segs });
        }
        self.arm_rto(t);
    }

    fn arm_rto(&mut self, t: usize) {
        let conn = &mut self.tcp[t];
        if let (Some(d), None) = (conn.sender.rto_deadline, conn.rto_timer) {
            conn.rto_timer = Some(d);
            self.engine.schedule(d, Ev::Rto(t as u32));
        }
    }

    fn on_acks_at_server(&mut self, t: usize, acks: Vec<u32>, now: SimTime) {
        let mut segs = Vec::new();
        for a in acks {
            if let Some(r) = self.tcp[t].sender.on_ack(a, now) {
                segs.push(r);
            }
        }
        segs.extend(self.tcp[t].sender.poll_send(now));
        self.send_segments(t, segs, now);
    }

    fn on_rto(&mut self, t: usize, now: SimTime) {
        self.tcp[t].rto_timer = None;
        match self.tcp[t].sender.rto_deadline {
            Some(d) if d <= now => {
                self.tcp[t].sender.on_timeout(now);
                self.server_send(t, now);
            }
            Some(_) => self.arm_rto(t),
            None => {}
        }
    }

    fn on_segments_at_ap(&mut self, t: usize, segs: Vec<u32>, now: SimTime) {
        let sta_node = self.stas[self.tcp[t].sta].node;
        let ap = self.bss[self.nodes[sta_node].bss].ap_node;
        let flow = FlowId(self.tcp[t].data_flow as u32);
        let payload = self.cfg.traffic.tcp_packet_bytes;
        for seg in segs {
            let mpdu = Mpdu {
                flow,
                seq: 0,
                payload_bytes: payload,
                enqueue_time: now,
                retries: 0,
                ac: Ac::Be,
                dest: NodeId(sta_node as u32),
                tag: seg,
            };
            self.enqueue(ap, mpdu, now);
        }
    }

    // ---- mobility ----

    fn join_bss(&mut self, s: usize, ap: usize) {
        let node = self.stas[s].node;
        self.nodes[node].bss = ap;
        self.bss[ap].members.push(node);
        if self.stas[s].realtime {
            self.bss[ap].realtime_members += 1;
        }
    }

    fn on_association(&mut self, now: SimTime) {
        if self.bss.len() < 2 {
            return;
        }
        let sites: Vec<ApSite> = self.bss.iter().map(|b| b.site).collect();
        for s in 0..self.stas.len() {
            let node = self.stas[s].node;
            let old = self.nodes[node].bss;
            let pos = self.stas[s].walker.position_at(now);
            let new = evaluate_association(
                pos,
                &sites,
                Some(old),
                self.cfg.mobility.hysteresis_db,
                self.cfg.phy.min_distance_m,
            );
            if new == old {
                continue;
            }
            let busy = self.bss[old]
                .exchange
                .as_ref()
                .is_some_and(|e| e.involved.contains(&node));
            if busy {
                continue;
            }
            self.handover(s, old, new, now);
        }
    }

    fn handover(&mut self, s: usize, old: usize, new: usize, now: SimTime) {
        let node = self.stas[s].node;
        self.bss[old].members.retain(|&m| m != node);
        if self.stas[s].realtime {
            self.bss[old].realtime_members -= 1;
        }
        self.join_bss(s, new);
        if self.stas[s].realtime {
            if self.bss[old].realtime_members == 0 {
                self.controllers[old].on_occupancy(false);
            }
            if self.bss[new].realtime_members == 1 {
                self.controllers[new].on_occupancy(true);
            }
        }
        let old_ap = self.bss[old].ap_node;
        let new_ap = self.bss[new].ap_node;
        for ac in Ac::ALL {
            let i = ac.index();
            // Uplink frames now go to the new AP.
            self.nodes[node].queues[i].retarget(NodeId(new_ap as u32));
            if self.expiry(node, ac, now).is_some() {
                self.on_became_eligible(node, ac, now);
            }
            // Pending downlink frames move with the STA.
            let moved = self.nodes[old_ap].queues[i].take_for(NodeId(node as u32));
            if moved.is_empty() {
                continue;
            }
            let was_eligible = self.expiry(new_ap, ac, now).is_some();
            let rejected = self.nodes[new_ap].queues[i].extend_moved(moved);
            for f in rejected {
                let flow = f.flow.0 as usize;
                self.flows[flow].dropped_queue += 1;
                let released = self.reorder[flow].settle(f.seq, None);
                self.deliver(released, new, node, now);
            }
            if !was_eligible && self.expiry(new_ap, ac, now).is_some() {
                self.on_became_eligible(new_ap, ac, now);
            }
        }
        self.reschedule(old, now);
        self.reschedule(new, now);
    }

    // ---- sampling and wrap-up ----

    fn on_sample(&mut self, now: SimTime) {
        let secs = SAMPLE_INTERVAL.as_secs_f64();
        let n = self.tcp.len();
        for s in 0..self.stas.len() {
            let node = self.stas[s].node;
            let b = self.nodes[node].bss;
            let ap = self.bss[b].ap_node;
            let pos = self.position(node, now);
            let dist = pos.distance(&self.bss[b].site.position);
            let snr = self.snr_between(ap, node, b, now);
            let choice = self.mcs.select(snr);
            let mcs = if choice.usable { f64::from(choice.mcs.index) } else { -1.0 };
            let bin = std::mem::take(&mut self.bins[s]);
            let sta = s as u32;
            let mut push = |metric, value| {
                self.timeseries.push(TimeSeriesRow { time: now, sta, metric, value });
            };
            push("ap_id", b as f64);
            push("distance_m", dist);
            push("mcs", mcs);
            if s < n {
                push("tcp_throughput_mbps", bin.tcp_bytes as f64 * 8.0 / secs / 1e6);
            } else if bin.delay_count > 0 {
                push("udp_delay_ms", bin.delay_sum_ms / bin.delay_count as f64);
            }
        }
        self.engine.schedule(now + SAMPLE_INTERVAL, Ev::Sample);
    }

    fn finish(mut self, end: SimTime) -> RunOutput {
        for bss in self.bss.iter_mut() {
            if bss.exchange.is_some() {
                bss.busy += end - bss.busy_started;
            }
        }
        let mut residual = vec![0u64; self.flows.len()];
        for node in &self.nodes {
            for q in &node.queues {
                for f in q.iter() {
                    residual[f.flow.0 as usize] += 1;
                }
            }
        }
        for bss in &self.bss {
            if let Some(Exchange {
                kind: Kind::Data { subframes, .. },
                ..
            }) = &bss.exchange
            {
                for f in subframes {
                    residual[f.flow.0 as usize] += 1;
                }
            }
        }
        for (i, r) in self.reorder.iter().enumerate() {
            residual[i] += r.held_frames();
        }
        let balances = self
            .flows
            .iter()
            .zip(&residual)
            .map(|(f, r)| FlowBalance {
                flow: f.id,
                generated: f.generated,
                delivered: f.delivered,
                dropped_queue: f.dropped_queue,
                dropped_retry: f.dropped_retry,
                residual: *r,
            })
            .collect();
        let secs = end.as_secs_f64();
        let busy_fraction = self
            .bss
            .iter()
            .map(|b| if secs > 0.0 { b.busy.as_secs_f64() / secs } else { 0.0 })
            .collect();
        let report = RunReport::from_flows(
            &self.cfg.name,
            self.seed,
            &self.cfg.policy.to_string(),
            self.cfg.n,
            &self.flows,
            end,
            self.cfg.metrics.udp_delay_averaging,
        );
        RunOutput {
            report,
            trace: self.trace,
            timeseries: self.timeseries,
            exchanges: self.exchanges,
            balances,
            busy_fraction,
            flows: self.flows,
            events: self.engine.dispatched(),
        }
    }
}

fn new_node(cfg: &ScenarioConfig, bss: usize) -> Node {
    Node {
        bss,
        edca: [EdcaFunction::new(cfg.edca(Ac::Vo)), EdcaFunction::new(cfg.edca(Ac::Be))],
        queues: [
            AcQueue::new(Ac::Vo, cfg.mac.queue_capacity),
            AcQueue::new(Ac::Be, cfg.mac.queue_capacity),
        ],
        deferred_until: [None, None],
    }
}

/// Runs one scenario with one seed.
pub fn run(cfg: &ScenarioConfig, seed: u64, options: RunOptions) -> Result<RunOutput, ConfigError> {
    Ok(World::new(cfg, seed, options)?.run())
}
