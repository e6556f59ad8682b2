//! Deterministic discrete-event simulation of message forwarding.
//!
//! Contacts come either from per-edge exponential meeting processes or from a
//! replayed trace. Events are processed in `(time, sequence number)` order, so
//! a `(scenario, protocol, seed)` triple always yields the same event log.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::fmt::Write as _;

use fixedbitset::FixedBitSet;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::baselines::{make_router, BufferedMessage, MessageId, ProtocolKind, Router};
use crate::contact::{empirical_rates, ContactGraph, ContactTrace, NodeId, RateMatrix};
use crate::error::{Error, Result};
use crate::meetings::{Instant, Meeting, MeetingProcess};

/// RNG stream for drawing message sources.
pub const WORKLOAD_STREAM: u64 = 2;

/// Header of the per-run metrics CSV.
pub const METRICS_HEADER: &str = "protocol,seed,delivery_rate,avg_latency,avg_hops,avg_buffer";

/// Marker for metrics with nothing to average.
pub const NOT_AVAILABLE: &str = "NA";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Constraints {
    /// Message lifetime in seconds.
    pub ttl: Option<f64>,
    /// Messages a node can hold.
    pub buffer_capacity: Option<usize>,
    /// Messages crossing per contact, both directions together.
    pub exchange_limit: Option<usize>,
}

impl Constraints {
    pub fn unconstrained() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(ttl) = self.ttl {
            if !(ttl > 0.0) {
                return Err(Error::InvalidParameters(format!("ttl must be positive, got {ttl}")));
            }
        }
        if self.buffer_capacity == Some(0) {
            return Err(Error::InvalidParameters("buffer capacity must be positive".into()));
        }
        if self.exchange_limit == Some(0) {
            return Err(Error::InvalidParameters("exchange limit must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MessageSpec {
    pub source: NodeId,
    pub created_at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Explicit(Vec<MessageSpec>),
    /// `batches` rounds, `batch_interval` seconds apart from `start`, each of
    /// `count` messages every `spacing` seconds. Every message comes from a
    /// uniformly drawn source other than the destination.
    Uniform {
        count: usize,
        spacing: f64,
        start: f64,
        /// Candidate sources; all nodes when `None`.
        sources: Option<Vec<NodeId>>,
        batches: usize,
        batch_interval: f64,
    },
}

impl Workload {
    pub fn uniform(count: usize, spacing: f64) -> Self {
        Workload::Uniform { count, spacing, start: 0.0, sources: None, batches: 1, batch_interval: 0.0 }
    }

    /// Concrete messages for a run; sources depend only on `seed`.
    pub fn materialize(&self, node_count: usize, destination: NodeId, seed: u64) -> Result<Vec<MessageSpec>> {
        match self {
            Workload::Explicit(specs) => {
                for s in specs {
                    if s.source.0 >= node_count {
                        return Err(Error::UnknownNode(s.source.0));
                    }
                    if s.source == destination {
                        return Err(Error::InvalidParameters(format!("message source {} is the destination", s.source.0)));
                    }
                }
                Ok(specs.clone())
            }
            Workload::Uniform { count, spacing, start, sources, batches, batch_interval } => {
                let pool: Vec<NodeId> = match sources {
                    Some(list) => list.iter().copied().filter(|&s| s != destination).collect(),
                    None => (0..node_count).map(NodeId).filter(|&s| s != destination).collect(),
                };
                if let Some(bad) = pool.iter().find(|s| s.0 >= node_count) {
                    return Err(Error::UnknownNode(bad.0));
                }
                if pool.is_empty() && *count > 0 {
                    return Err(Error::InvalidParameters("no node can source messages".into()));
                }
                if !(*spacing >= 0.0) || !(*batch_interval >= 0.0) {
                    return Err(Error::InvalidParameters("message spacing and batch interval must be nonnegative".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(WORKLOAD_STREAM);
                Ok((0..*batches)
                    .flat_map(|b| (0..*count).map(move |k| start + b as f64 * batch_interval + k as f64 * spacing))
                    .map(|created_at| MessageSpec { source: pool[rng.random_range(0..pool.len())], created_at })
                    .collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ContactSource {
    /// Sampled meetings on the graph's edges.
    Synthetic,
    /// Replayed contacts; each contact is a meeting at its start time.
    Trace(ContactTrace),
}

/// Everything but the protocol and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    /// Rates used for synthetic meetings and by MinLat; its destination is
    /// the destination of every message.
    pub graph: ContactGraph<f64>,
    pub contacts: ContactSource,
    pub workload: Workload,
    pub constraints: Constraints,
    pub start: f64,
    pub horizon: f64,
}

impl Scenario {
    pub fn synthetic(graph: ContactGraph<f64>, workload: Workload, constraints: Constraints, horizon: f64) -> Self {
        Self { graph, contacts: ContactSource::Synthetic, workload, constraints, start: 0.0, horizon }
    }

    /// Trace replay with MinLat rates estimated from the whole trace.
    pub fn from_trace(trace: ContactTrace, destination: NodeId, workload: Workload, constraints: Constraints) -> Result<Self> {
        let graph = empirical_rates(&trace).support_graph(destination)?;
        let horizon = trace.horizon();
        Ok(Self { graph, contacts: ContactSource::Trace(trace), workload, constraints, start: 0.0, horizon })
    }

    pub fn destination(&self) -> NodeId {
        self.graph.destination()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > self.start) {
            return Err(Error::InvalidParameters(format!("horizon {} must exceed start {}", self.horizon, self.start)));
        }
        if let ContactSource::Trace(trace) = &self.contacts {
            if trace.node_count() > self.graph.node_count() {
                return Err(Error::InvalidParameters("trace has more nodes than the rate graph".into()));
            }
        }
        self.constraints.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delivery {
    pub latency: f64,
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MessageStatus {
    Scheduled,
    Live,
    Delivered(Delivery),
    DroppedTtl,
    DroppedBuffer,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub protocol: ProtocolKind,
    pub seed: u64,
    pub generated: usize,
    pub delivered: usize,
    pub dropped_ttl: usize,
    pub dropped_buffer: usize,
    pub delivery_rate: f64,
    /// Over this run's delivered messages.
    pub avg_latency: Option<f64>,
    pub avg_hops: Option<f64>,
    /// Copies held per node, averaged over nodes and time.
    pub avg_buffer: f64,
    /// Per message, in workload order.
    pub deliveries: Vec<Option<Delivery>>,
    pub meetings: u64,
    /// SHA-256 of the event log.
    pub checksum: String,
}

impl MetricsReport {
    /// One CSV row under [`METRICS_HEADER`].
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.protocol.key(),
            self.seed,
            self.delivery_rate,
            fmt_opt(self.avg_latency),
            fmt_opt(self.avg_hops),
            self.avg_buffer
        )
    }

    pub fn delivered_mask(&self) -> Vec<bool> {
        self.deliveries.iter().map(Option::is_some).collect()
    }
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| NOT_AVAILABLE.to_string(), |x| x.to_string())
}

/// Event log lines `time kind fields...`, hashed as they are appended.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    lines: Option<Vec<String>>,
    hasher: Sha256,
    scratch: String,
}

impl EventLog {
    pub fn new(keep_lines: bool) -> Self {
        Self { lines: keep_lines.then(Vec::new), ..Self::default() }
    }

    fn record(&mut self, time: f64, kind: &str, fields: std::fmt::Arguments<'_>) {
        self.scratch.clear();
        let _ = write!(self.scratch, "{time} {kind} {fields}");
        self.hasher.update(self.scratch.as_bytes());
        self.hasher.update(b"\n");
        if let Some(lines) = &mut self.lines {
            lines.push(self.scratch.clone());
        }
    }

    pub fn lines(&self) -> Option<&[String]> {
        self.lines.as_deref()
    }

    pub fn checksum(&self) -> String {
        hex(&self.hasher.clone().finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::with_capacity(bytes.len() * 2), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

#[derive(Debug, Clone)]
pub struct SimOutcome {
    pub report: MetricsReport,
    pub log: EventLog,
    pub statuses: Vec<MessageStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Generate(usize),
    Expire(usize),
    Meet(NodeId, NodeId),
}

pub fn run_simulation(scenario: &Scenario, protocol: ProtocolKind, seed: u64) -> Result<MetricsReport> {
    Ok(run_simulation_logged(scenario, protocol, seed, false)?.report)
}

/// As [`run_simulation`], optionally keeping every event log line.
pub fn run_simulation_logged(scenario: &Scenario, protocol: ProtocolKind, seed: u64, keep_lines: bool) -> Result<SimOutcome> {
    scenario.validate()?;
    let router = make_router(protocol, &scenario.graph);
    let meetings: Box<dyn Iterator<Item = Meeting>> = match &scenario.contacts {
        ContactSource::Synthetic => Box::new(MeetingProcess::new(&scenario.graph, scenario.horizon, seed)?),
        ContactSource::Trace(trace) => {
            let (start, horizon) = (scenario.start, scenario.horizon);
            Box::new(
                trace
                    .events()
                    .iter()
                    .filter(move |e| e.start >= start && e.start <= horizon)
                    .map(|e| Meeting { time: e.start, a: e.a.min(e.b), b: e.a.max(e.b) })
                    .collect::<Vec<_>>()
                    .into_iter(),
            )
        }
    };
    let specs = scenario.workload.materialize(scenario.graph.node_count(), scenario.destination(), seed)?;
    if let Some(bad) = specs.iter().find(|s| s.created_at < scenario.start || s.created_at > scenario.horizon) {
        return Err(Error::InvalidParameters(format!("message created at {} outside the simulated window", bad.created_at)));
    }
    let mut engine = Engine::new(scenario, router, specs, seed, keep_lines);
    engine.run(meetings);
    Ok(engine.finish())
}

struct Engine<'a> {
    scenario: &'a Scenario,
    router: Box<dyn Router>,
    kind: ProtocolKind,
    seed: u64,
    destination: NodeId,
    specs: Vec<MessageSpec>,
    statuses: Vec<MessageStatus>,
    copies: Vec<u32>,
    buffers: Vec<Vec<BufferedMessage>>,
    seen: Vec<FixedBitSet>,
    queue: BinaryHeap<Reverse<(Instant, u64, Event)>>,
    seq: u64,
    log: EventLog,
    now: f64,
    held_copies: usize,
    occupancy_area: f64,
    meetings: u64,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, router: Box<dyn Router>, specs: Vec<MessageSpec>, seed: u64, keep_lines: bool) -> Self {
        let n = scenario.graph.node_count();
        let m = specs.len();
        let mut engine = Self {
            scenario,
            kind: router.kind(),
            router,
            seed,
            destination: scenario.destination(),
            statuses: vec![MessageStatus::Scheduled; m],
            copies: vec![0; m],
            buffers: vec![Vec::new(); n],
            seen: vec![FixedBitSet::with_capacity(m); n],
            queue: BinaryHeap::new(),
            seq: 0,
            log: EventLog::new(keep_lines),
            now: scenario.start,
            held_copies: 0,
            occupancy_area: 0.0,
            meetings: 0,
            specs,
        };
        for k in 0..m {
            let created = engine.specs[k].created_at;
            engine.schedule(created, Event::Generate(k));
        }
        if let Some(ttl) = scenario.constraints.ttl {
            for k in 0..m {
                let expiry = engine.specs[k].created_at + ttl;
                if expiry <= scenario.horizon {
                    engine.schedule(expiry, Event::Expire(k));
                }
            }
        }
        engine
    }

    fn schedule(&mut self, time: f64, event: Event) {
        self.queue.push(Reverse((Instant(time), self.seq, event)));
        self.seq += 1;
    }

    fn advance(&mut self, time: f64) {
        self.occupancy_area += self.held_copies as f64 * (time - self.now);
        self.now = time;
    }

    fn run(&mut self, mut meetings: Box<dyn Iterator<Item = Meeting>>) {
        let mut push_next = |engine: &mut Self| {
            if let Some(m) = meetings.next() {
                engine.schedule(m.time, Event::Meet(m.a, m.b));
            }
        };
        push_next(self);
        while let Some(Reverse((Instant(time), _, event))) = self.queue.pop() {
            if time > self.scenario.horizon {
                break;
            }
            self.advance(time);
            match event {
                Event::Generate(k) => self.generate(k),
                Event::Expire(k) => self.expire(k),
                Event::Meet(a, b) => {
                    self.contact(a, b);
                    push_next(self);
                }
            }
            #[cfg(debug_assertions)]
            self.check_conservation();
        }
        self.advance(self.scenario.horizon);
    }

    fn generate(&mut self, k: usize) {
        let spec = self.specs[k];
        self.log.record(self.now, "gen", format_args!("m{k} {} {}", spec.source.0, self.destination.0));
        if self.is_full(spec.source) {
            self.statuses[k] = MessageStatus::DroppedBuffer;
            self.log.record(self.now, "drop_buf", format_args!("m{k} {}", spec.source.0));
            return;
        }
        self.statuses[k] = MessageStatus::Live;
        let copy = BufferedMessage { id: MessageId(k), destination: self.destination, created_at: spec.created_at, hops: 0 };
        self.store(spec.source, copy);
    }

    fn expire(&mut self, k: usize) {
        self.remove_all_copies(k);
        if self.statuses[k] == MessageStatus::Live {
            self.statuses[k] = MessageStatus::DroppedTtl;
            self.log.record(self.now, "drop_ttl", format_args!("m{k}"));
        }
    }

    fn is_full(&self, node: NodeId) -> bool {
        node != self.destination
            && self.scenario.constraints.buffer_capacity.is_some_and(|cap| self.buffers[node.0].len() >= cap)
    }

    fn store(&mut self, node: NodeId, copy: BufferedMessage) {
        self.seen[node.0].insert(copy.id.0);
        self.buffers[node.0].push(copy);
        self.copies[copy.id.0] += 1;
        self.held_copies += 1;
    }

    fn take(&mut self, node: NodeId, id: MessageId) -> Option<BufferedMessage> {
        let pos = self.buffers[node.0].iter().position(|m| m.id == id)?;
        let copy = self.buffers[node.0].remove(pos);
        self.copies[id.0] -= 1;
        self.held_copies -= 1;
        Some(copy)
    }

    fn remove_all_copies(&mut self, k: usize) {
        if self.copies[k] == 0 {
            return;
        }
        for buffer in &mut self.buffers {
            let before = buffer.len();
            buffer.retain(|m| m.id.0 != k);
            self.held_copies -= before - buffer.len();
        }
        self.copies[k] = 0;
    }

    /// Messages `carrier` would push to `peer`, in send order.
    fn offers(&self, carrier: NodeId, peer: NodeId) -> Vec<(MessageId, bool)> {
        if carrier == self.destination {
            return Vec::new();
        }
        let buffer = &self.buffers[carrier.0];
        if peer == self.destination {
            let mut direct: Vec<&BufferedMessage> =
                buffer.iter().filter(|m| m.destination == peer && !self.seen[peer.0].contains(m.id.0)).collect();
            direct.sort_by(|a, b| a.created_at.total_cmp(&b.created_at).then(a.id.cmp(&b.id)));
            let keep = !self.kind.is_single_copy();
            return direct.into_iter().map(|m| (m.id, keep)).collect();
        }
        self.router
            .decide(carrier, peer, buffer, &self.seen[peer.0])
            .forwards
            .into_iter()
            .map(|f| (f.message, f.keep_copy))
            .collect()
    }

    fn contact(&mut self, a: NodeId, b: NodeId) {
        self.meetings += 1;
        self.log.record(self.now, "meet", format_args!("{} {}", a.0, b.0));
        self.router.on_contact(a, b, self.now);
        let directions = [(a, b, self.offers(a, b)), (b, a, self.offers(b, a))];
        let limit = self.scenario.constraints.exchange_limit.unwrap_or(usize::MAX);
        let mut cursors = [0usize; 2];
        let mut sent = 0;
        let mut side = 0;
        while sent < limit {
            let other = 1 - side;
            if cursors[side] >= directions[side].2.len() {
                if cursors[other] >= directions[other].2.len() {
                    break;
                }
                side = other;
                continue;
            }
            let (carrier, peer, list) = &directions[side];
            let (id, keep) = list[cursors[side]];
            cursors[side] += 1;
            if self.transfer(*carrier, *peer, id, keep) {
                sent += 1;
                side = other;
            }
        }
    }

    /// Moves or copies one message; `false` if it could not cross.
    fn transfer(&mut self, carrier: NodeId, peer: NodeId, id: MessageId, keep_copy: bool) -> bool {
        let Some(pos) = self.buffers[carrier.0].iter().position(|m| m.id == id) else {
            return false;
        };
        if self.seen[peer.0].contains(id.0) && (peer == self.destination || !self.kind.is_single_copy()) {
            return false;
        }
        if self.buffers[peer.0].iter().any(|m| m.id == id) || self.is_full(peer) {
            return false;
        }
        let mut copy = self.buffers[carrier.0][pos];
        copy.hops += 1;
        if !keep_copy {
            self.take(carrier, id);
        }
        if peer == self.destination {
            self.seen[peer.0].insert(id.0);
            let latency = self.now - copy.created_at;
            self.log.record(self.now, "dlv", format_args!("{id} {} {} {}", carrier.0, copy.hops, latency));
            if self.statuses[id.0] == MessageStatus::Live {
                self.statuses[id.0] = MessageStatus::Delivered(Delivery { latency, hops: copy.hops });
            }
            if self.router.purges_on_delivery() {
                self.remove_all_copies(id.0);
            }
        } else {
            self.log.record(self.now, "fwd", format_args!("{id} {} {} {}", carrier.0, peer.0, copy.hops));
            self.store(peer, copy);
        }
        if self.kind.is_single_copy() {
            assert!(self.copies[id.0] <= 1, "single-copy message {id} duplicated");
        }
        true
    }

    #[cfg(debug_assertions)]
    fn check_conservation(&self) {
        let held: usize = self.buffers.iter().map(Vec::len).sum();
        assert_eq!(held, self.held_copies);
        for (k, status) in self.statuses.iter().enumerate() {
            let copies = self.copies[k];
            match status {
                MessageStatus::Live => {
                    assert!(copies >= 1, "live message m{k} has no copy");
                    if self.kind.is_single_copy() {
                        assert_eq!(copies, 1, "single-copy message m{k} has {copies} copies");
                    }
                }
                MessageStatus::Scheduled | MessageStatus::DroppedTtl | MessageStatus::DroppedBuffer => {
                    assert_eq!(copies, 0, "message m{k} in state {status:?} still buffered")
                }
                MessageStatus::Delivered(_) => {
                    if self.kind.is_single_copy() {
                        assert_eq!(copies, 0, "delivered single-copy message m{k} still buffered");
                    }
                }
            }
        }
    }

    fn finish(self) -> SimOutcome {
        let generated = self.statuses.iter().filter(|s| **s != MessageStatus::Scheduled).count();
        let deliveries: Vec<Option<Delivery>> = self
            .statuses
            .iter()
            .map(|s| match s {
                MessageStatus::Delivered(d) => Some(*d),
                _ => None,
            })
            .collect();
        let delivered: Vec<Delivery> = deliveries.iter().flatten().copied().collect();
        let count = |target: MessageStatus| self.statuses.iter().filter(|s| **s == target).count();
        let span = self.scenario.horizon - self.scenario.start;
        let nodes = self.buffers.len() as f64;
        let report = MetricsReport {
            protocol: self.kind,
            seed: self.seed,
            generated,
            delivered: delivered.len(),
            dropped_ttl: count(MessageStatus::DroppedTtl),
            dropped_buffer: count(MessageStatus::DroppedBuffer),
            delivery_rate: if generated == 0 { 0.0 } else { delivered.len() as f64 / generated as f64 },
            avg_latency: mean(delivered.iter().map(|d| d.latency)),
            avg_hops: mean(delivered.iter().map(|d| d.hops as f64)),
            avg_buffer: self.occupancy_area / span / nodes,
            deliveries,
            meetings: self.meetings,
            checksum: self.log.checksum(),
        };
        SimOutcome { report, log: self.log, statuses: self.statuses }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Mean with a 95% normal-approximation half width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub mean: f64,
    pub half_width: f64,
    pub samples: usize,
}

impl Interval {
    pub fn from_samples(values: &[f64]) -> Option<Self> {
        let n = values.len();
        let mean = mean(values.iter().copied())?;
        let half_width = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            1.96 * (var / n as f64).sqrt()
        } else {
            0.0
        };
        Some(Self { mean, half_width, samples: n })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSummary {
    pub protocol: ProtocolKind,
    /// One per seed, in seed order.
    pub reports: Vec<MetricsReport>,
    /// Mean latency over messages every compared protocol delivered, per seed.
    pub common_latency: Vec<Option<f64>>,
    pub delivery_rate: Option<Interval>,
    pub latency: Option<Interval>,
    pub hops: Option<Interval>,
    pub buffer: Option<Interval>,
}

/// Runs every protocol on the same workload and contact realization per seed.
pub fn compare_protocols(scenario: &Scenario, protocols: &[ProtocolKind], seeds: &[u64]) -> Result<Vec<ProtocolSummary>> {
    let mut per_protocol: Vec<Vec<MetricsReport>> = vec![Vec::with_capacity(seeds.len()); protocols.len()];
    for &seed in seeds {
        for (slot, &kind) in per_protocol.iter_mut().zip(protocols) {
            slot.push(run_simulation(scenario, kind, seed)?);
        }
    }
    let common: Vec<Vec<bool>> = (0..seeds.len())
        .map(|s| {
            let masks: Vec<Vec<bool>> = per_protocol.iter().map(|r| r[s].delivered_mask()).collect();
            (0..masks.first().map_or(0, Vec::len)).map(|k| masks.iter().all(|m| m[k])).collect()
        })
        .collect();
    Ok(protocols
        .iter()
        .zip(per_protocol)
        .map(|(&protocol, reports)| {
            let common_latency: Vec<Option<f64>> = reports
                .iter()
                .zip(&common)
                .map(|(r, mask)| {
                    mean(r.deliveries.iter().zip(mask).filter(|(_, &c)| c).filter_map(|(d, _)| d.map(|d| d.latency)))
                })
                .collect();
            let collect = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Vec<f64> { reports.iter().filter_map(f).collect() };
            ProtocolSummary {
                protocol,
                delivery_rate: Interval::from_samples(&collect(&|r| Some(r.delivery_rate))),
                latency: Interval::from_samples(&common_latency.iter().flatten().copied().collect::<Vec<_>>()),
                hops: Interval::from_samples(&collect(&|r| r.avg_hops)),
                buffer: Interval::from_samples(&collect(&|r| Some(r.avg_buffer))),
                common_latency,
                reports,
            }
        })
        .collect())
}

/// One fixed-length window of a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSlot {
    pub index: usize,
    pub start: f64,
    pub end: f64,
    /// Nodes with at least one contact in the window.
    pub nodes: Vec<NodeId>,
    pub rates: RateMatrix<f64>,
    pub contacts: usize,
    /// No contacts in the window.
    pub degenerate: bool,
    /// Only the first four windows originate messages.
    pub generates_messages: bool,
}

impl TraceSlot {
    /// `count` messages every `spacing` seconds from the window start, sourced
    /// from nodes present in the window.
    pub fn workload(&self, count: usize, spacing: f64) -> Workload {
        Workload::Uniform {
            count,
            spacing,
            start: self.start,
            sources: Some(self.nodes.clone()),
            batches: 1,
            batch_interval: 0.0,
        }
    }

    /// Replays the trace from this window to its end, with MinLat rates taken
    /// from the window.
    pub fn scenario(&self, trace: &ContactTrace, destination: NodeId, workload: Workload, constraints: Constraints) -> Result<Scenario> {
        Ok(Scenario {
            graph: self.rates.support_graph(destination)?,
            contacts: ContactSource::Trace(trace.clone()),
            workload,
            constraints,
            start: self.start,
            horizon: trace.horizon(),
        })
    }
}

/// Number of windows that generate messages.
pub const MESSAGE_SLOTS: usize = 4;

/// Twelve hours.
pub const DEFAULT_SLOT: f64 = 43_200.0;

/// Cuts a trace into windows `[k * slot, (k + 1) * slot)` with per-window rates.
pub fn infocom_slotting(trace: &ContactTrace, slot: f64) -> Result<Vec<TraceSlot>> {
    if !(slot > 0.0) {
        return Err(Error::InvalidParameters(format!("slot length must be positive, got {slot}")));
    }
    if trace.horizon() < slot {
        return Err(Error::InvalidParameters(format!("trace horizon {} shorter than one slot", trace.horizon())));
    }
    let count = (trace.horizon() / slot).ceil() as usize;
    (0..count)
        .map(|index| {
            let start = index as f64 * slot;
            let end = start + slot;
            let events: Vec<_> = trace.events().iter().filter(|e| e.start >= start && e.start < end).copied().collect();
            let mut present = vec![false; trace.node_count()];
            for e in &events {
                present[e.a.0] = true;
                present[e.b.0] = true;
            }
            let contacts = events.len();
            let window = ContactTrace::new(trace.node_count(), events, trace.horizon())?;
            Ok(TraceSlot {
                index,
                start,
                end,
                nodes: (0..present.len()).filter(|&i| present[i]).map(NodeId).collect(),
                rates: empirical_rates(&window),
                contacts,
                degenerate: contacts == 0,
                generates_messages: index < MESSAGE_SLOTS,
            })
        })
        .collect()
}
