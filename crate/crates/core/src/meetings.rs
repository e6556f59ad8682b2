//! Pairwise exponential meeting processes and small random test graphs.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contact::{sample_intermeeting, ContactGraph, NodeId};
use crate::error::Result;
use crate::scalar::Real;

/// Totally ordered `f64` timestamp for event queues.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instant(pub f64);

impl Eq for Instant {}

impl PartialOrd for Instant {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Instant {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// An instantaneous meeting of `a < b` at `time` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Meeting {
    pub time: f64,
    pub a: NodeId,
    pub b: NodeId,
}

/// Superposition of independent Poisson meeting processes, one per graph edge,
/// yielded in time order up to a horizon.
///
/// Simultaneous meetings come out in edge order.
#[derive(Debug, Clone)]
pub struct MeetingProcess {
    edges: Vec<(NodeId, NodeId, f64)>,
    queue: BinaryHeap<Reverse<(Instant, usize)>>,
    rng: ChaCha8Rng,
    horizon: f64,
}

/// RNG stream reserved for contact sampling, so every consumer of a seed
/// sees the same contact realization.
pub const CONTACT_STREAM: u64 = 1;

impl MeetingProcess {
    pub fn new(graph: &ContactGraph<f64>, horizon: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(CONTACT_STREAM);
        let edges: Vec<(NodeId, NodeId, f64)> = graph.edges().collect();
        let mut queue = BinaryHeap::with_capacity(edges.len());
        for (idx, &(_, _, rate)) in edges.iter().enumerate() {
            let first = sample_intermeeting(rate, &mut rng)?;
            queue.push(Reverse((Instant(first), idx)));
        }
        Ok(Self { edges, queue, rng, horizon })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

impl Iterator for MeetingProcess {
    type Item = Meeting;

    fn next(&mut self) -> Option<Meeting> {
        let Reverse((Instant(time), idx)) = self.queue.pop()?;
        if time > self.horizon {
            self.queue.clear();
            return None;
        }
        let (a, b, rate) = self.edges[idx];
        let gap = sample_intermeeting(rate, &mut self.rng).expect("graph rates are positive");
        self.queue.push(Reverse((Instant(time + gap), idx)));
        Some(Meeting { time, a, b })
    }
}

/// Random connected graph on `n` nodes: a random spanning tree plus each other
/// pair with probability `extra_edge_prob`; rates uniform on `[rate_lo, rate_hi)`;
/// destination uniform.
pub fn random_connected_graph<T: Real, R: Rng + ?Sized>(
    n: usize,
    extra_edge_prob: f64,
    rate_lo: f64,
    rate_hi: f64,
    rng: &mut R,
) -> ContactGraph<T> {
    assert!(n >= 2, "need at least two nodes");
    assert!(rate_lo > 0.0 && rate_hi > rate_lo, "rate range must be positive");
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut adjacent = vec![false; n * n];
    for k in 1..n {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        adjacent[parent * n + child] = true;
        adjacent[child * n + parent] = true;
    }
    for i in 0..n {
        for j in i + 1..n {
            if !adjacent[i * n + j] && rng.random_bool(extra_edge_prob) {
                adjacent[i * n + j] = true;
            }
        }
    }
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if adjacent[i * n + j] || adjacent[j * n + i] {
                edges.push((i, j, T::lit(rng.random_range(rate_lo..rate_hi))));
            }
        }
    }
    let destination = NodeId(rng.random_range(0..n));
    ContactGraph::from_edges(n, destination, edges).expect("spanning tree keeps the graph connected")
}
