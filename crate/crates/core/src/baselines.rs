//! Forwarding protocols behind one router interface.
//!
//! At every contact the simulator calls [`Router::on_contact`] so both nodes
//! can update protocol state, then asks each side for an ordered
//! [`ProtocolDecision`] given its buffer and the peer's summary of messages
//! it holds or has held.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;

use crate::contact::{ContactGraph, NodeId};
use crate::decentralized::{MinLatNetwork, RateMode};
use crate::error::{Error, Result};
use crate::meetings::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MessageId(pub usize);

impl fmt::Display for MessageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "m{}", self.0)
    }
}

/// A message copy as seen by the node holding it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferedMessage {
    pub id: MessageId,
    pub destination: NodeId,
    pub created_at: f64,
    /// Hops this copy has taken so far.
    pub hops: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    MinLat,
    MinLatE,
    Epidemic,
    ProphetV2,
    MaxPropS,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] =
        [ProtocolKind::MinLat, ProtocolKind::MinLatE, ProtocolKind::Epidemic, ProtocolKind::ProphetV2, ProtocolKind::MaxPropS];

    /// Name used in configs and CLI flags.
    pub fn key(self) -> &'static str {
        match self {
            ProtocolKind::MinLat => "minlat",
            ProtocolKind::MinLatE => "minlat-e",
            ProtocolKind::Epidemic => "epidemic",
            ProtocolKind::ProphetV2 => "prophetv2",
            ProtocolKind::MaxPropS => "maxprop-s",
        }
    }

    /// Name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            ProtocolKind::MinLat => "MinLat",
            ProtocolKind::MinLatE => "MinLat-E",
            ProtocolKind::Epidemic => "Epidemic",
            ProtocolKind::ProphetV2 => "PRoPHETv2",
            ProtocolKind::MaxPropS => "MaxProp-S",
        }
    }

    pub fn is_single_copy(self) -> bool {
        matches!(self, ProtocolKind::MinLat | ProtocolKind::MinLatE | ProtocolKind::ProphetV2)
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.key().eq_ignore_ascii_case(s) || k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown protocol `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Forward {
    pub message: MessageId,
    /// Multi-copy protocols keep their copy; single-copy ones hand it over.
    pub keep_copy: bool,
}

/// Ordered list of messages the carrier wants to push to the peer.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProtocolDecision {
    pub forwards: Vec<Forward>,
}

impl ProtocolDecision {
    pub fn is_empty(&self) -> bool {
        self.forwards.is_empty()
    }

    pub fn message_ids(&self) -> Vec<MessageId> {
        self.forwards.iter().map(|f| f.message).collect()
    }
}

/// Forwards every buffered message the peer has never held, oldest first.
pub fn epidemic_decide(buffer: &[BufferedMessage], peer_seen: &FixedBitSet) -> ProtocolDecision {
    let mut fresh: Vec<&BufferedMessage> = buffer.iter().filter(|m| !peer_seen.contains(m.id.0)).collect();
    fresh.sort_by(|a, b| by_age(a, b));
    ProtocolDecision { forwards: fresh.into_iter().map(|m| Forward { message: m.id, keep_copy: true }).collect() }
}

fn by_age(a: &BufferedMessage, b: &BufferedMessage) -> Ordering {
    a.created_at.total_cmp(&b.created_at).then(a.id.cmp(&b.id))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProphetParams {
    pub p_init: f64,
    pub beta: f64,
    pub gamma: f64,
    /// Seconds per aging unit.
    pub time_step: f64,
}

impl Default for ProphetParams {
    fn default() -> Self {
        Self { p_init: 0.75, beta: 0.25, gamma: 0.98, time_step: 1.0 }
    }
}

/// Delivery predictabilities of one node towards every other node.
#[derive(Debug, Clone, PartialEq)]
pub struct ProphetState {
    predictability: Vec<f64>,
    last_aging: f64,
}

impl ProphetState {
    pub fn new(node_count: usize) -> Self {
        Self { predictability: vec![0.0; node_count], last_aging: 0.0 }
    }

    pub fn predictability(&self, target: NodeId) -> f64 {
        self.predictability[target.0]
    }

    pub fn predictabilities(&self) -> &[f64] {
        &self.predictability
    }

    pub fn last_aging(&self) -> f64 {
        self.last_aging
    }

    /// Multiplies every predictability by `gamma^(elapsed / time_step)`.
    pub fn age(&mut self, now: f64, params: &ProphetParams) {
        let elapsed = (now - self.last_aging).max(0.0);
        if elapsed > 0.0 {
            let factor = params.gamma.powf(elapsed / params.time_step);
            for p in &mut self.predictability {
                *p *= factor;
            }
        }
        self.last_aging = self.last_aging.max(now);
    }
}

/// Updates both states for an encounter of `a` and `b` at `now`: aging,
/// direct update, then transitive update from the peer's vector.
pub fn prophet_encounter(
    a: NodeId,
    state_a: &mut ProphetState,
    b: NodeId,
    state_b: &mut ProphetState,
    now: f64,
    params: &ProphetParams,
) {
    state_a.age(now, params);
    state_b.age(now, params);
    let direct = |p: f64| p + (1.0 - p) * params.p_init;
    state_a.predictability[b.0] = direct(state_a.predictability[b.0]);
    state_b.predictability[a.0] = direct(state_b.predictability[a.0]);
    let snapshot_a = state_a.predictability.clone();
    let snapshot_b = state_b.predictability.clone();
    transitive(a, b, &mut state_a.predictability, &snapshot_b, params.beta);
    transitive(b, a, &mut state_b.predictability, &snapshot_a, params.beta);
}

fn transitive(own: NodeId, peer: NodeId, mine: &mut [f64], theirs: &[f64], beta: f64) {
    let via = mine[peer.0];
    for (c, p) in mine.iter_mut().enumerate() {
        if c == own.0 || c == peer.0 {
            continue;
        }
        *p = p.max(via * theirs[c] * beta);
    }
}

/// Hands over each message whose destination the peer predicts strictly
/// better than the carrier.
pub fn prophet_decide(carrier: &ProphetState, peer: &ProphetState, buffer: &[BufferedMessage]) -> ProtocolDecision {
    let mut chosen: Vec<&BufferedMessage> = buffer
        .iter()
        .filter(|m| peer.predictability(m.destination) > carrier.predictability(m.destination))
        .collect();
    chosen.sort_by(|a, b| by_age(a, b));
    ProtocolDecision { forwards: chosen.into_iter().map(|m| Forward { message: m.id, keep_copy: false }).collect() }
}

#[allow(clippy::too_many_arguments)]
/// Encounter update followed by the decisions in both directions
/// (`a` to `b`, then `b` to `a`).
pub fn prophet_update_and_decide(
    a: NodeId,
    state_a: &mut ProphetState,
    buffer_a: &[BufferedMessage],
    b: NodeId,
    state_b: &mut ProphetState,
    buffer_b: &[BufferedMessage],
    now: f64,
    params: &ProphetParams,
) -> (ProtocolDecision, ProtocolDecision) {
    prophet_encounter(a, state_a, b, state_b, now, params);
    (prophet_decide(state_a, state_b, buffer_a), prophet_decide(state_b, state_a, buffer_b))
}

/// Simplified MaxProp view held by one node: its own meeting likelihoods plus
/// the freshest copy it has seen of every other node's table.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxPropState {
    id: NodeId,
    /// `tables[k]` is (version, likelihoods of k); own table at `tables[id]`.
    tables: Vec<(u64, Vec<f64>)>,
}

impl MaxPropState {
    pub fn new(id: NodeId, node_count: usize) -> Self {
        let tables = (0..node_count).map(|k| (0, uniform_likelihoods(k, node_count))).collect();
        Self { id, tables }
    }

    pub fn likelihoods(&self) -> &[f64] {
        &self.tables[self.id.0].1
    }

    /// Incremental averaging: add one to the met peer, then renormalize.
    pub fn record_meeting(&mut self, peer: NodeId) {
        let (version, table) = &mut self.tables[self.id.0];
        table[peer.0] += 1.0;
        let total: f64 = table.iter().sum();
        for f in table.iter_mut() {
            *f /= total;
        }
        *version += 1;
    }

    /// Adopts every table of `other` that is newer than the local copy.
    pub fn merge_from(&mut self, other: &MaxPropState) {
        for (mine, theirs) in self.tables.iter_mut().zip(&other.tables) {
            if theirs.0 > mine.0 {
                mine.clone_from(theirs);
            }
        }
    }

    /// Cost of the direct hop `from -> to`: one minus the likelihood.
    pub fn link_cost(&self, from: NodeId, to: NodeId) -> f64 {
        1.0 - self.tables[from.0].1[to.0]
    }

    /// Cheapest total link cost from `from` to every node (Dijkstra).
    pub fn path_costs(&self, from: NodeId) -> Vec<f64> {
        let n = self.tables.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        dist[from.0] = 0.0;
        heap.push(std::cmp::Reverse((Instant(0.0), from.0)));
        while let Some(std::cmp::Reverse((Instant(d), u))) = heap.pop() {
            if done[u] {
                continue;
            }
            done[u] = true;
            for v in 0..n {
                if v == u || done[v] {
                    continue;
                }
                let next = d + self.link_cost(NodeId(u), NodeId(v));
                if next < dist[v] {
                    dist[v] = next;
                    heap.push(std::cmp::Reverse((Instant(next), v)));
                }
            }
        }
        dist
    }
}

fn uniform_likelihoods(own: usize, n: usize) -> Vec<f64> {
    let share = if n > 1 { 1.0 / (n - 1) as f64 } else { 0.0 };
    (0..n).map(|k| if k == own { 0.0 } else { share }).collect()
}

/// Epidemic-style copies ordered by the peer's path cost to each message's
/// destination, ties broken by age.
pub fn maxprop_decide(
    carrier: &MaxPropState,
    peer: NodeId,
    buffer: &[BufferedMessage],
    peer_seen: &FixedBitSet,
) -> ProtocolDecision {
    if buffer.is_empty() {
        return ProtocolDecision::default();
    }
    let costs = carrier.path_costs(peer);
    let mut fresh: Vec<&BufferedMessage> = buffer.iter().filter(|m| !peer_seen.contains(m.id.0)).collect();
    fresh.sort_by(|a, b| costs[a.destination.0].total_cmp(&costs[b.destination.0]).then_with(|| by_age(a, b)));
    ProtocolDecision { forwards: fresh.into_iter().map(|m| Forward { message: m.id, keep_copy: true }).collect() }
}

/// Protocol side of a simulation.
pub trait Router {
    fn kind(&self) -> ProtocolKind;

    /// State exchange when `a` and `b` meet at `now`.
    fn on_contact(&mut self, a: NodeId, b: NodeId, now: f64);

    /// Ordered messages `carrier` pushes to `peer`; called after
    /// [`on_contact`](Self::on_contact) for the same meeting.
    fn decide(&self, carrier: NodeId, peer: NodeId, buffer: &[BufferedMessage], peer_seen: &FixedBitSet) -> ProtocolDecision;

    /// Whether all copies disappear once the destination has the message.
    fn purges_on_delivery(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone)]
pub struct EpidemicRouter;

impl Router for EpidemicRouter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::Epidemic
    }

    fn on_contact(&mut self, _a: NodeId, _b: NodeId, _now: f64) {}

    fn decide(&self, _carrier: NodeId, _peer: NodeId, buffer: &[BufferedMessage], peer_seen: &FixedBitSet) -> ProtocolDecision {
        epidemic_decide(buffer, peer_seen)
    }
}

#[derive(Debug, Clone)]
pub struct ProphetRouter {
    params: ProphetParams,
    states: Vec<ProphetState>,
}

impl ProphetRouter {
    pub fn new(node_count: usize, params: ProphetParams) -> Self {
        Self { params, states: vec![ProphetState::new(node_count); node_count] }
    }

    pub fn state(&self, i: NodeId) -> &ProphetState {
        &self.states[i.0]
    }
}

impl Router for ProphetRouter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::ProphetV2
    }

    fn on_contact(&mut self, a: NodeId, b: NodeId, now: f64) {
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        let (left, right) = self.states.split_at_mut(hi);
        prophet_encounter(NodeId(lo), &mut left[lo], NodeId(hi), &mut right[0], now, &self.params);
    }

    fn decide(&self, carrier: NodeId, peer: NodeId, buffer: &[BufferedMessage], _peer_seen: &FixedBitSet) -> ProtocolDecision {
        prophet_decide(&self.states[carrier.0], &self.states[peer.0], buffer)
    }
}

#[derive(Debug, Clone)]
pub struct MaxPropRouter {
    states: Vec<MaxPropState>,
}

impl MaxPropRouter {
    pub fn new(node_count: usize) -> Self {
        Self { states: (0..node_count).map(|i| MaxPropState::new(NodeId(i), node_count)).collect() }
    }

    pub fn state(&self, i: NodeId) -> &MaxPropState {
        &self.states[i.0]
    }
}

impl Router for MaxPropRouter {
    fn kind(&self) -> ProtocolKind {
        ProtocolKind::MaxPropS
    }

    fn on_contact(&mut self, a: NodeId, b: NodeId, _now: f64) {
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        let (left, right) = self.states.split_at_mut(hi);
        let (sa, sb) = (&mut left[lo], &mut right[0]);
        sa.record_meeting(NodeId(hi));
        sb.record_meeting(NodeId(lo));
        sa.merge_from(sb);
        sb.merge_from(sa);
    }

    fn decide(&self, carrier: NodeId, peer: NodeId, buffer: &[BufferedMessage], peer_seen: &FixedBitSet) -> ProtocolDecision {
        maxprop_decide(&self.states[carrier.0], peer, buffer, peer_seen)
    }

    fn purges_on_delivery(&self) -> bool {
        true
    }
}

/// MinLat or MinLat-E for the single destination of a contact graph.
#[derive(Debug, Clone)]
pub struct MinLatRouter {
    network: MinLatNetwork,
}

impl MinLatRouter {
    pub fn new(graph: &ContactGraph<f64>, mode: RateMode) -> Self {
        Self { network: MinLatNetwork::new(graph, mode) }
    }

    pub fn network(&self) -> &MinLatNetwork {
        &self.network
    }
}

impl Router for MinLatRouter {
    fn kind(&self) -> ProtocolKind {
        match self.network.mode() {
            RateMode::Exact => ProtocolKind::MinLat,
            RateMode::Estimated => ProtocolKind::MinLatE,
        }
    }

    fn on_contact(&mut self, a: NodeId, b: NodeId, now: f64) {
        self.network.meet(a, b, now);
    }

    fn decide(&self, carrier: NodeId, peer: NodeId, buffer: &[BufferedMessage], _peer_seen: &FixedBitSet) -> ProtocolDecision {
        let mut chosen: Vec<&BufferedMessage> = buffer
            .iter()
            .filter(|m| m.destination == self.network.destination() && self.network.forwards_to(carrier, peer))
            .collect();
        chosen.sort_by(|a, b| by_age(a, b));
        ProtocolDecision { forwards: chosen.into_iter().map(|m| Forward { message: m.id, keep_copy: false }).collect() }
    }
}

/// Builds the router for `kind`. MinLat variants need the contact graph and
/// route only towards its destination.
pub fn make_router(kind: ProtocolKind, graph: &ContactGraph<f64>) -> Box<dyn Router> {
    let n = graph.node_count();
    match kind {
        ProtocolKind::MinLat => Box::new(MinLatRouter::new(graph, RateMode::Exact)),
        ProtocolKind::MinLatE => Box::new(MinLatRouter::new(graph, RateMode::Estimated)),
        ProtocolKind::Epidemic => Box::new(EpidemicRouter),
        ProtocolKind::ProphetV2 => Box::new(ProphetRouter::new(n, ProphetParams::default())),
        ProtocolKind::MaxPropS => Box::new(MaxPropRouter::new(n)),
    }
}
