//! Decentralized latency minimization driven by pairwise meetings.
//!
//! Each node keeps an estimate of its own latency and a cached estimate for
//! every neighbor. When two nodes meet they swap their current self-estimates
//! and both re-solve their relay-subset problem. Rates are either known to a
//! node from its first meeting with a neighbor ([`RateMode::Exact`]) or learned
//! online from intermeeting gaps ([`RateMode::Estimated`]).

use std::collections::BTreeMap;

use crate::centralized::centralized_minlat;
use crate::contact::{ContactGraph, NodeId};
use crate::error::Result;
use crate::latency::{DecisionMatrix, LatencySolver};
use crate::meetings::{Meeting, MeetingProcess};
use crate::relay::{best_relay_subset, RelayCandidate};
use crate::scalar::approx_eq;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RateMode {
    /// A node knows `rate(i, j)` once it has met `j`.
    Exact,
    /// Rates come from the recursive maximum-likelihood estimator.
    Estimated,
}

/// Online exponential-rate MLE from successive meeting times of one pair.
///
/// After gaps `x_1 .. x_n` the estimate equals `n / sum(x)`, maintained
/// recursively as `r_n = n r_{n-1} / (n - 1 + r_{n-1} x_n)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateEstimator {
    meetings: u64,
    last_meeting: Option<f64>,
    estimate: Option<f64>,
}

impl RateEstimator {
    /// Gaps shorter than this (duplicate events) are clamped to it.
    pub const MIN_GAP: f64 = 1e-6;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn meetings(&self) -> u64 {
        self.meetings
    }

    pub fn last_meeting(&self) -> Option<f64> {
        self.last_meeting
    }

    /// Defined once two meetings have been seen.
    pub fn estimate(&self) -> Option<f64> {
        self.estimate
    }

    /// Records a meeting at `now`.
    pub fn observe(&mut self, now: f64) {
        if let Some(last) = self.last_meeting {
            let gap = (now - last).max(Self::MIN_GAP);
            // gaps observed so far, including this one
            let n = self.meetings as f64;
            self.estimate = Some(match self.estimate {
                None => 1.0 / gap,
                Some(prev) => n * prev / (n - 1.0 + prev * gap),
            });
        }
        self.meetings += 1;
        self.last_meeting = Some(now);
    }

    /// Functional form of [`observe`](Self::observe).
    pub fn updated(mut self, now: f64) -> Self {
        self.observe(now);
        self
    }
}

/// Batch exponential MLE `n / sum(x)`; `None` for no gaps.
pub fn batch_rate_mle(gaps: &[f64]) -> Option<f64> {
    if gaps.is_empty() {
        return None;
    }
    Some(gaps.len() as f64 / gaps.iter().sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
enum NeighborRates {
    Exact { rates: BTreeMap<NodeId, f64>, met: BTreeMap<NodeId, bool> },
    Estimated { estimators: BTreeMap<NodeId, RateEstimator> },
}

/// Protocol state held by one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    id: NodeId,
    is_destination: bool,
    self_latency: f64,
    neighbor_latencies: BTreeMap<NodeId, f64>,
    decision_row: Vec<NodeId>,
    rates: NeighborRates,
}

impl NodeState {
    pub fn new(graph: &ContactGraph<f64>, id: NodeId, mode: RateMode) -> Self {
        let destination = graph.destination();
        let neighbor_latencies = graph
            .neighbors(id)
            .iter()
            .map(|&(k, _)| (k, if k == destination { 0.0 } else { f64::INFINITY }))
            .collect();
        let rates = match mode {
            RateMode::Exact => NeighborRates::Exact {
                rates: graph.neighbors(id).iter().copied().collect(),
                met: graph.neighbors(id).iter().map(|&(k, _)| (k, false)).collect(),
            },
            RateMode::Estimated => NeighborRates::Estimated {
                estimators: graph.neighbors(id).iter().map(|&(k, _)| (k, RateEstimator::new())).collect(),
            },
        };
        Self {
            id,
            is_destination: id == destination,
            self_latency: if id == destination { 0.0 } else { f64::INFINITY },
            neighbor_latencies,
            decision_row: Vec::new(),
            rates,
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn self_latency(&self) -> f64 {
        self.self_latency
    }

    pub fn neighbor_latency(&self, k: NodeId) -> Option<f64> {
        self.neighbor_latencies.get(&k).copied()
    }

    /// Relays this node currently forwards to, sorted by id.
    pub fn decision_row(&self) -> &[NodeId] {
        &self.decision_row
    }

    pub fn is_neighbor(&self, k: NodeId) -> bool {
        self.neighbor_latencies.contains_key(&k)
    }

    /// Rate this node currently uses for neighbor `k`, if any.
    pub fn known_rate(&self, k: NodeId) -> Option<f64> {
        match &self.rates {
            NeighborRates::Exact { rates, met } => met.get(&k).copied().unwrap_or(false).then(|| rates[&k]),
            NeighborRates::Estimated { estimators } => estimators.get(&k).and_then(RateEstimator::estimate),
        }
    }

    pub fn estimator(&self, k: NodeId) -> Option<&RateEstimator> {
        match &self.rates {
            NeighborRates::Estimated { estimators } => estimators.get(&k),
            NeighborRates::Exact { .. } => None,
        }
    }

    fn observe_meeting(&mut self, peer: NodeId, now: f64) {
        match &mut self.rates {
            NeighborRates::Exact { met, .. } => {
                if let Some(flag) = met.get_mut(&peer) {
                    *flag = true;
                }
            }
            NeighborRates::Estimated { estimators } => {
                if let Some(est) = estimators.get_mut(&peer) {
                    est.observe(now);
                }
            }
        }
    }

    /// Re-solves the relay subset over the current neighbor estimates.
    fn recompute(&mut self) {
        if self.is_destination {
            return;
        }
        let candidates: Vec<RelayCandidate<f64>> = self
            .neighbor_latencies
            .iter()
            .filter_map(|(&k, &latency)| self.known_rate(k).map(|rate| RelayCandidate { id: k, rate, latency }))
            .collect();
        let selection = best_relay_subset(&candidates);
        self.self_latency = selection.value;
        self.decision_row = selection.chosen;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeetingOutcome {
    Updated,
    /// The pair is not in the contact graph; nothing changed.
    NotNeighbors,
}

/// One meeting between `a` and `b`: swap the pre-meeting self-estimates,
/// update rate knowledge, then both nodes re-solve.
pub fn on_meeting(a: &mut NodeState, b: &mut NodeState, now: f64) -> MeetingOutcome {
    if a.id == b.id || !a.is_neighbor(b.id) || !b.is_neighbor(a.id) {
        return MeetingOutcome::NotNeighbors;
    }
    let (from_a, from_b) = (a.self_latency, b.self_latency);
    a.observe_meeting(b.id, now);
    b.observe_meeting(a.id, now);
    a.neighbor_latencies.insert(b.id, from_b);
    b.neighbor_latencies.insert(a.id, from_a);
    a.recompute();
    b.recompute();
    MeetingOutcome::Updated
}

/// All node states of one network.
#[derive(Debug, Clone)]
pub struct MinLatNetwork {
    destination: NodeId,
    mode: RateMode,
    nodes: Vec<NodeState>,
    ignored_meetings: u64,
}

impl MinLatNetwork {
    pub fn new(graph: &ContactGraph<f64>, mode: RateMode) -> Self {
        Self {
            destination: graph.destination(),
            mode,
            nodes: graph.nodes().map(|i| NodeState::new(graph, i, mode)).collect(),
            ignored_meetings: 0,
        }
    }

    pub fn mode(&self) -> RateMode {
        self.mode
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    pub fn node(&self, i: NodeId) -> &NodeState {
        &self.nodes[i.0]
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    /// Meetings between non-neighbors that were ignored.
    pub fn ignored_meetings(&self) -> u64 {
        self.ignored_meetings
    }

    pub fn meet(&mut self, a: NodeId, b: NodeId, now: f64) -> MeetingOutcome {
        if a == b || a.0 >= self.nodes.len() || b.0 >= self.nodes.len() {
            self.ignored_meetings += 1;
            return MeetingOutcome::NotNeighbors;
        }
        let (lo, hi) = (a.0.min(b.0), a.0.max(b.0));
        let (left, right) = self.nodes.split_at_mut(hi);
        let outcome = on_meeting(&mut left[lo], &mut right[0], now);
        if outcome == MeetingOutcome::NotNeighbors {
            self.ignored_meetings += 1;
        }
        outcome
    }

    pub fn forwards_to(&self, carrier: NodeId, peer: NodeId) -> bool {
        self.nodes[carrier.0].decision_row.binary_search(&peer).is_ok()
    }

    pub fn decision_matrix(&self) -> DecisionMatrix<f64> {
        let mut b = DecisionMatrix::zeros(self.nodes.len(), self.destination);
        for node in &self.nodes {
            b.set_binary_row(node.id, &node.decision_row).expect("rows stay on graph edges");
        }
        b
    }

    /// Each node's estimate of its own latency.
    pub fn estimated_latencies(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.self_latency).collect()
    }
}

/// Network-average error terms at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSample {
    pub time: f64,
    /// `mean_k |estimated L_k - optimal L_k|`
    pub estimated_error: f64,
    /// `mean_k |L_k(current matrix) - optimal L_k|`
    pub achieved_error: f64,
    /// `mean_k optimal L_k`, for relative thresholds.
    pub mean_optimal: f64,
}

#[derive(Debug, Clone)]
pub struct ProtocolSnapshot {
    pub time: f64,
    pub self_latencies: Vec<f64>,
    pub decisions: DecisionMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    /// First time the decision matrix matched the centralized optimum and
    /// kept matching through the horizon; `+inf` if it never settled.
    pub convergence_time: f64,
    pub meetings: u64,
    pub network: MinLatNetwork,
    /// With exact rates, the time every node held its optimal relay set and
    /// latency. No later meeting can change that state, so the run stops there.
    pub absorbed_at: Option<f64>,
    pub history: Vec<ProtocolSnapshot>,
    pub samples: Vec<ConvergenceSample>,
}

/// Runs the protocol on sampled exponential meetings until `horizon`.
pub fn run_protocol(graph: &ContactGraph<f64>, mode: RateMode, horizon: f64, seed: u64) -> Result<ProtocolRun> {
    run_protocol_sampled(graph, mode, horizon, seed, &[])
}

/// As [`run_protocol`], also recording snapshots and error terms at each of
/// `sample_times` (ascending).
pub fn run_protocol_sampled(
    graph: &ContactGraph<f64>,
    mode: RateMode,
    horizon: f64,
    seed: u64,
    sample_times: &[f64],
) -> Result<ProtocolRun> {
    let optimum = centralized_minlat(graph);
    let n = graph.node_count();
    let optimal = optimum.latencies.as_slice().to_vec();
    let mean_optimal = optimal.iter().sum::<f64>() / n as f64;
    let mut solver = LatencySolver::new(n);
    let mut history = Vec::with_capacity(sample_times.len());
    let mut samples = Vec::with_capacity(sample_times.len());
    let mut next_sample = 0;

    let mut record = |network: &MinLatNetwork, time: f64, solver: &mut LatencySolver<f64>| {
        let decisions = network.decision_matrix();
        let estimated = network.estimated_latencies();
        let achieved = solver.solve(graph, &decisions);
        let estimated_error = mean_abs_diff(&estimated, &optimal);
        let achieved_error = mean_abs_diff(achieved, &optimal);
        samples.push(ConvergenceSample { time, estimated_error, achieved_error, mean_optimal });
        history.push(ProtocolSnapshot { time, self_latencies: estimated, decisions });
    };

    let mut convergence = ConvergenceTracker::new(&optimum.decisions, &optimal);
    let mut network = MinLatNetwork::new(graph, mode);
    convergence.refresh_all(&network);
    let mut meetings = 0;
    let mut absorbed_at = None;
    for Meeting { time, a, b } in MeetingProcess::new(graph, horizon, seed)? {
        while next_sample < sample_times.len() && sample_times[next_sample] < time {
            record(&network, sample_times[next_sample], &mut solver);
            next_sample += 1;
        }
        meetings += 1;
        network.meet(a, b, time);
        convergence.refresh(&network, a, time);
        convergence.refresh(&network, b, time);
        // estimates never drop below the optimum and rates are fixed
        if mode == RateMode::Exact && convergence.unsettled == 0 {
            absorbed_at = Some(time);
            break;
        }
    }
    while next_sample < sample_times.len() && sample_times[next_sample] <= horizon {
        record(&network, sample_times[next_sample], &mut solver);
        next_sample += 1;
    }
    Ok(ProtocolRun { convergence_time: convergence.converged_at(), meetings, network, absorbed_at, history, samples })
}

/// Drives the protocol like [`run_protocol`], handing every processed meeting
/// and the resulting network to `observe`.
pub fn run_protocol_observed<F>(
    graph: &ContactGraph<f64>,
    mode: RateMode,
    horizon: f64,
    seed: u64,
    mut observe: F,
) -> Result<MinLatNetwork>
where
    F: FnMut(&Meeting, &MinLatNetwork),
{
    let mut network = MinLatNetwork::new(graph, mode);
    for meeting in MeetingProcess::new(graph, horizon, seed)? {
        network.meet(meeting.a, meeting.b, meeting.time);
        observe(&meeting, &network);
    }
    Ok(network)
}

fn mean_abs_diff(values: &[f64], reference: &[f64]) -> f64 {
    let total: f64 = values.iter().zip(reference).map(|(v, r)| if v == r { 0.0 } else { (v - r).abs() }).sum();
    total / values.len() as f64
}

/// Counts rows that differ from a target matrix, and nodes whose row or
/// latency estimate is still off.
#[derive(Debug)]
struct ConvergenceTracker<'a> {
    target: &'a DecisionMatrix<f64>,
    latencies: &'a [f64],
    matches: Vec<bool>,
    mismatched: usize,
    settled: Vec<bool>,
    unsettled: usize,
    since: Option<f64>,
}

impl<'a> ConvergenceTracker<'a> {
    fn new(target: &'a DecisionMatrix<f64>, latencies: &'a [f64]) -> Self {
        let n = target.node_count();
        Self {
            target,
            latencies,
            matches: vec![false; n],
            mismatched: n,
            settled: vec![false; n],
            unsettled: n,
            since: None,
        }
    }

    fn refresh_all(&mut self, network: &MinLatNetwork) {
        for i in 0..self.matches.len() {
            self.refresh(network, NodeId(i), 0.0);
        }
    }

    fn refresh(&mut self, network: &MinLatNetwork, i: NodeId, now: f64) {
        let row = network.node(i).decision_row();
        let target_row = self.target.row(i);
        let ok = target_row.iter().filter(|&&v| v > 0.0).count() == row.len()
            && row.iter().all(|j| target_row[j.0] > 0.0);
        let estimate = network.node(i).self_latency();
        let optimal = self.latencies[i.0];
        let settled = ok && (estimate == optimal || approx_eq(estimate, optimal, 1e-12));
        if settled != self.settled[i.0] {
            self.settled[i.0] = settled;
            if settled {
                self.unsettled -= 1;
            } else {
                self.unsettled += 1;
            }
        }
        if ok != self.matches[i.0] {
            self.matches[i.0] = ok;
            if ok {
                self.mismatched -= 1;
            } else {
                self.mismatched += 1;
            }
        }
        if self.mismatched == 0 {
            self.since.get_or_insert(now);
        } else {
            self.since = None;
        }
    }

    fn converged_at(&self) -> f64 {
        self.since.unwrap_or(f64::INFINITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimator_recursion_matches_batch() {
        let mut est = RateEstimator::new();
        est.observe(0.0);
        assert_eq!(est.estimate(), None);
        est.observe(2.0);
        assert_eq!(est.estimate(), Some(0.5));
        est.observe(6.0);
        assert!(approx_eq(est.estimate().unwrap(), 1.0 / 3.0, 1e-15));
        assert_eq!(batch_rate_mle(&[2.0, 4.0]), Some(1.0 / 3.0));
        assert_eq!(est.meetings(), 3);
    }

    #[test]
    fn estimator_unit_gaps() {
        let est = (0..5).fold(RateEstimator::new(), |e, t| e.updated(t as f64));
        assert!(approx_eq(est.estimate().unwrap(), 1.0, 1e-15));
    }

    #[test]
    fn estimator_clamps_duplicate_events() {
        let est = RateEstimator::new().updated(5.0).updated(5.0);
        assert_eq!(est.estimate(), Some(1.0 / RateEstimator::MIN_GAP));
    }

    fn star() -> ContactGraph<f64> {
        ContactGraph::from_edges(3, NodeId(0), [(0, 1, 1.0), (0, 2, 0.1), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn first_meeting_with_destination() {
        let g = ContactGraph::from_edges(2, NodeId(0), [(0, 1, 0.5)]).unwrap();
        let mut net = MinLatNetwork::new(&g, RateMode::Exact);
        assert!(net.node(NodeId(1)).self_latency().is_infinite());
        net.meet(NodeId(1), NodeId(0), 3.0);
        assert_eq!(net.node(NodeId(1)).self_latency(), 2.0);
        assert_eq!(net.node(NodeId(1)).decision_row(), &[NodeId(0)]);
        assert_eq!(net.node(NodeId(0)).self_latency(), 0.0);
        assert!(net.node(NodeId(0)).decision_row().is_empty());
    }

    #[test]
    fn relay_learned_through_neighbor() {
        let g = star();
        let mut net = MinLatNetwork::new(&g, RateMode::Exact);
        net.meet(NodeId(0), NodeId(1), 1.0);
        net.meet(NodeId(0), NodeId(2), 2.0);
        assert_eq!(net.node(NodeId(2)).self_latency(), 10.0);
        net.meet(NodeId(1), NodeId(2), 3.0);
        let node2 = net.node(NodeId(2));
        assert!(approx_eq(node2.self_latency(), 20.0 / 11.0, 1e-15));
        assert_eq!(node2.decision_row(), &[NodeId(0), NodeId(1)]);
    }

    #[test]
    fn infinite_peer_estimate_changes_nothing() {
        let g = star();
        let mut net = MinLatNetwork::new(&g, RateMode::Exact);
        net.meet(NodeId(0), NodeId(2), 1.0);
        let before = net.node(NodeId(2)).self_latency();
        net.meet(NodeId(1), NodeId(2), 2.0);
        assert_eq!(net.node(NodeId(2)).self_latency(), before);
        assert_eq!(net.node(NodeId(2)).decision_row(), &[NodeId(0)]);
    }

    #[test]
    fn non_neighbor_meetings_are_counted() {
        let g = ContactGraph::from_edges(3, NodeId(0), [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let mut net = MinLatNetwork::new(&g, RateMode::Estimated);
        assert_eq!(net.meet(NodeId(0), NodeId(2), 1.0), MeetingOutcome::NotNeighbors);
        assert_eq!(net.ignored_meetings(), 1);
        assert!(net.node(NodeId(2)).estimator(NodeId(1)).unwrap().meetings() == 0);
    }

    #[test]
    fn estimated_mode_needs_two_meetings() {
        let g = ContactGraph::from_edges(2, NodeId(0), [(0, 1, 0.5)]).unwrap();
        let mut net = MinLatNetwork::new(&g, RateMode::Estimated);
        net.meet(NodeId(0), NodeId(1), 1.0);
        assert!(net.node(NodeId(1)).self_latency().is_infinite());
        net.meet(NodeId(0), NodeId(1), 5.0);
        assert_eq!(net.node(NodeId(1)).self_latency(), 4.0);
    }

    #[test]
    fn two_node_convergence_is_first_meeting() {
        let g = ContactGraph::from_edges(2, NodeId(0), [(0, 1, 0.5)]).unwrap();
        let run = run_protocol(&g, RateMode::Exact, 100.0, 3).unwrap();
        let first = MeetingProcess::new(&g, 100.0, 3).unwrap().next().unwrap();
        assert_eq!(run.convergence_time, first.time);
    }

    #[test]
    fn samples_track_errors() {
        let g = star();
        let run = run_protocol_sampled(&g, RateMode::Exact, 200.0, 1, &[0.0, 100.0, 200.0]).unwrap();
        assert_eq!(run.samples.len(), 3);
        assert!(run.samples[0].estimated_error.is_infinite());
        assert_eq!(run.samples[2].achieved_error, 0.0);
        assert!(run.samples.iter().all(|s| s.estimated_error >= 0.0 && s.achieved_error >= 0.0));
    }
}
