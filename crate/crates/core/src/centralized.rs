//! Centralized greedy latency minimization.
//!
//! Grows a settled set outward from the destination, one node per round: each
//! unsettled node solves its relay-subset problem over settled neighbors and the
//! node with the smallest resulting latency is finalized.

use crate::contact::{ContactGraph, NodeId};
use crate::latency::{DecisionMatrix, LatencyVector};
use crate::relay::{best_relay_subset, RelayCandidate};
use crate::scalar::Real;

/// Snapshot of the greedy after a settlement round.
#[derive(Debug, Clone, PartialEq)]
pub struct GreedyState<T> {
    pub settled: Vec<bool>,
    /// Finalized latency for settled nodes, `+inf` elsewhere.
    pub latencies: Vec<T>,
    pub decisions: DecisionMatrix<T>,
    /// Settlement order excluding the destination.
    pub order: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedSolution<T> {
    pub decisions: DecisionMatrix<T>,
    pub latencies: LatencyVector<T>,
    /// Non-destination nodes in the order they were settled (ascending latency).
    pub settlement_order: Vec<NodeId>,
}

pub fn centralized_minlat<T: Real>(graph: &ContactGraph<T>) -> CentralizedSolution<T> {
    centralized_minlat_observed(graph, |_| {})
}

/// Same as [`centralized_minlat`], calling `observe` after every settlement.
pub fn centralized_minlat_observed<T: Real, F>(graph: &ContactGraph<T>, mut observe: F) -> CentralizedSolution<T>
where
    F: FnMut(&GreedyState<T>),
{
    let n = graph.node_count();
    let d = graph.destination();
    let mut state = GreedyState {
        settled: vec![false; n],
        latencies: vec![T::infinity(); n],
        decisions: DecisionMatrix::zeros(n, d),
        order: Vec::with_capacity(n.saturating_sub(1)),
    };
    state.settled[d.0] = true;
    state.latencies[d.0] = T::zero();

    let mut candidates = Vec::new();
    loop {
        let mut best: Option<(NodeId, T, Vec<NodeId>)> = None;
        for i in graph.nodes().filter(|i| !state.settled[i.0]) {
            candidates.clear();
            candidates.extend(
                graph
                    .neighbors(i)
                    .iter()
                    .filter(|(j, _)| state.settled[j.0])
                    .map(|&(j, rate)| RelayCandidate { id: j, rate, latency: state.latencies[j.0] }),
            );
            let selection = best_relay_subset(&candidates);
            if !selection.value.is_finite() {
                continue;
            }
            // strict comparison keeps the smallest id on ties
            if best.as_ref().is_none_or(|(_, value, _)| selection.value < *value) {
                best = Some((i, selection.value, selection.chosen));
            }
        }
        let Some((v, value, relays)) = best else {
            break;
        };
        state.settled[v.0] = true;
        state.latencies[v.0] = value;
        state
            .decisions
            .set_binary_row(v, &relays)
            .expect("relays are settled neighbors");
        state.order.push(v);
        observe(&state);
    }

    CentralizedSolution {
        decisions: state.decisions,
        latencies: LatencyVector::new(state.latencies),
        settlement_order: state.order,
    }
}

/// Upper bound on the expected time for the decentralized protocol to reach
/// the optimal matrix, given the greedy settlement order:
///
/// ```text
/// 1 / r(v_1, d) + sum_{l >= 2} (l - 1) / min { r(v_l, u) : u settled before v_l, u adjacent }
/// ```
///
/// The destination counts as settled before every node. Returns `+inf` when the
/// order does not cover every non-destination node.
pub fn convergence_time_bound<T: Real>(graph: &ContactGraph<T>, settlement_order: &[NodeId]) -> T {
    let d = graph.destination();
    if settlement_order.len() + 1 != graph.node_count() {
        return T::infinity();
    }
    let mut earlier = vec![false; graph.node_count()];
    earlier[d.0] = true;
    let mut bound = T::zero();
    for (idx, &v) in settlement_order.iter().enumerate() {
        let term = if idx == 0 {
            graph.rate(v, d).map_or(T::infinity(), |rate| T::one() / rate)
        } else {
            let slowest = graph
                .neighbors(v)
                .iter()
                .filter(|(u, _)| earlier[u.0])
                .map(|&(_, rate)| rate)
                .fold(T::infinity(), T::min);
            T::lit(idx as f64) / slowest
        };
        if !term.is_finite() {
            return T::infinity();
        }
        bound += term;
        earlier[v.0] = true;
    }
    bound
}
