//! Expected delivery latency of a forwarding matrix.
//!
//! For a decision matrix `P` the latencies satisfy, at every node that can
//! deliver,
//!
//! ```text
//! L_i * sum_j p_ij l_ij - sum_j p_ij l_ij L_j = 1,     L_d = 0
//! ```
//!
//! where `l_ij` is the pairwise meeting rate. Nodes whose message can be
//! absorbed anywhere other than the destination get `+inf`.

use std::collections::VecDeque;
use std::ops::Index;

use crate::contact::{ContactGraph, NodeId};
use crate::error::{Error, Result};
use crate::linalg::lu_solve_in_place;
use crate::scalar::Real;

/// Forwarding probabilities `p_ij` in `[0, 1]`, row-major. The destination row
/// stays zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionMatrix<T> {
    n: usize,
    destination: NodeId,
    entries: Vec<T>,
}

impl<T: Real> DecisionMatrix<T> {
    pub fn zeros(n: usize, destination: NodeId) -> Self {
        assert!(destination.0 < n, "destination out of range");
        Self { n, destination, entries: vec![T::zero(); n * n] }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    #[inline]
    pub fn get(&self, i: NodeId, j: NodeId) -> T {
        self.entries[i.0 * self.n + j.0]
    }

    pub fn set(&mut self, i: NodeId, j: NodeId, value: T) -> Result<()> {
        let bad = || Error::InvalidDecision { from: i, to: j, value: value.as_f64() };
        if i.0 >= self.n || j.0 >= self.n {
            return Err(Error::UnknownNode(i.0.max(j.0)));
        }
        if !(value >= T::zero() && value <= T::one()) {
            return Err(bad());
        }
        if (i == self.destination || i == j) && value != T::zero() {
            return Err(bad());
        }
        self.entries[i.0 * self.n + j.0] = value;
        Ok(())
    }

    pub fn row(&self, i: NodeId) -> &[T] {
        &self.entries[i.0 * self.n..(i.0 + 1) * self.n]
    }

    /// Overwrites row `i` with ones on `targets` and zeros elsewhere.
    pub fn set_binary_row(&mut self, i: NodeId, targets: &[NodeId]) -> Result<()> {
        for j in 0..self.n {
            self.set(i, NodeId(j), T::zero())?;
        }
        for &j in targets {
            self.set(i, j, T::one())?;
        }
        Ok(())
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn is_binary(&self) -> bool {
        self.entries.iter().all(|&v| v == T::zero() || v == T::one())
    }

    /// Nodes `j` with `p_ij > 0`.
    pub fn forwarding_set(&self, i: NodeId) -> Vec<NodeId> {
        self.row(i)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > T::zero())
            .map(|(j, _)| NodeId(j))
            .collect()
    }

    /// Every positive entry must sit on a contact-graph edge.
    pub fn check_support(&self, graph: &ContactGraph<T>) -> Result<()> {
        if graph.node_count() != self.n {
            return Err(Error::InvalidParameters(format!(
                "matrix has {} nodes, graph has {}",
                self.n,
                graph.node_count()
            )));
        }
        for i in 0..self.n {
            for j in 0..self.n {
                if self.entries[i * self.n + j] > T::zero() && graph.rate(NodeId(i), NodeId(j)).is_none() {
                    return Err(Error::SupportViolation { from: NodeId(i), to: NodeId(j) });
                }
            }
        }
        Ok(())
    }
}

/// Expected latency (seconds) from each node to the destination.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyVector<T> {
    values: Vec<T>,
}

impl<T: Real> LatencyVector<T> {
    pub fn new(values: Vec<T>) -> Self {
        Self { values }
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().copied()
    }

    /// Sum over all nodes; `+inf` if any entry is infinite.
    pub fn total(&self) -> T {
        self.values.iter().copied().sum()
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }
}

impl<T> Index<NodeId> for LatencyVector<T> {
    type Output = T;

    fn index(&self, i: NodeId) -> &T {
        &self.values[i.0]
    }
}

/// Solves the latency system for `p`. Fails if `p` forwards off the graph.
pub fn expected_latencies<T: Real>(graph: &ContactGraph<T>, p: &DecisionMatrix<T>) -> Result<LatencyVector<T>> {
    p.check_support(graph)?;
    if p.destination() != graph.destination() {
        return Err(Error::InvalidParameters("matrix and graph disagree on the destination".into()));
    }
    let mut solver = LatencySolver::new(graph.node_count());
    Ok(LatencyVector::new(solver.solve(graph, p).to_vec()))
}

/// Total expected latency over all nodes (the destination contributes zero).
pub fn utility<T: Real>(graph: &ContactGraph<T>, p: &DecisionMatrix<T>) -> Result<T> {
    Ok(expected_latencies(graph, p)?.total())
}

/// Relative residual of the latency recursion at each node with finite latency;
/// zero at the destination and at infinite nodes.
pub fn latency_residuals<T: Real>(graph: &ContactGraph<T>, p: &DecisionMatrix<T>, latencies: &LatencyVector<T>) -> Vec<T> {
    graph
        .nodes()
        .map(|i| {
            let li = latencies[i];
            if i == graph.destination() || li.is_infinite() {
                return T::zero();
            }
            let (mut num, mut den) = (T::one(), T::zero());
            for &(j, rate) in graph.neighbors(i) {
                let w = p.get(i, j) * rate;
                if w > T::zero() {
                    num += w * latencies[j];
                    den += w;
                }
            }
            ((num / den - li) / li).abs()
        })
        .collect()
}

/// Reusable scratch space for repeated latency solves on graphs of one size.
#[derive(Debug, Clone)]
pub struct LatencySolver<T> {
    reaches_dest: Vec<bool>,
    tainted: Vec<bool>,
    queue: VecDeque<usize>,
    slot: Vec<usize>,
    system: Vec<T>,
    rhs: Vec<T>,
    out: Vec<T>,
}

impl<T: Real> LatencySolver<T> {
    pub fn new(n: usize) -> Self {
        Self {
            reaches_dest: vec![false; n],
            tainted: vec![false; n],
            queue: VecDeque::with_capacity(n),
            slot: vec![usize::MAX; n],
            system: Vec::with_capacity(n * n),
            rhs: Vec::with_capacity(n),
            out: vec![T::zero(); n],
        }
    }

    /// Latencies for `p`, assuming its support has been checked.
    pub fn solve(&mut self, graph: &ContactGraph<T>, p: &DecisionMatrix<T>) -> &[T] {
        let n = graph.node_count();
        let d = graph.destination().0;
        let weight = |i: usize, j: NodeId, rate: T| p.get(NodeId(i), j) * rate;

        // nodes with a forwarding path to d
        self.reaches_dest.iter_mut().for_each(|x| *x = false);
        self.reaches_dest[d] = true;
        self.queue.clear();
        self.queue.push_back(d);
        while let Some(j) = self.queue.pop_front() {
            for &(i, rate) in graph.neighbors(NodeId(j)) {
                if !self.reaches_dest[i.0] && i.0 != d && weight(i.0, NodeId(j), rate) > T::zero() {
                    self.reaches_dest[i.0] = true;
                    self.queue.push_back(i.0);
                }
            }
        }
        // nodes that can be absorbed somewhere other than d
        self.queue.clear();
        for i in 0..n {
            self.tainted[i] = !self.reaches_dest[i];
            if self.tainted[i] {
                self.queue.push_back(i);
            }
        }
        while let Some(j) = self.queue.pop_front() {
            for &(i, rate) in graph.neighbors(NodeId(j)) {
                if !self.tainted[i.0] && i.0 != d && weight(i.0, NodeId(j), rate) > T::zero() {
                    self.tainted[i.0] = true;
                    self.queue.push_back(i.0);
                }
            }
        }

        let mut m = 0;
        for i in 0..n {
            if i != d && !self.tainted[i] {
                self.slot[i] = m;
                m += 1;
            } else {
                self.slot[i] = usize::MAX;
            }
        }
        self.system.clear();
        self.system.resize(m * m, T::zero());
        self.rhs.clear();
        self.rhs.resize(m, T::one());
        for i in 0..n {
            let row = self.slot[i];
            if row == usize::MAX {
                continue;
            }
            let mut total = T::zero();
            for &(j, rate) in graph.neighbors(NodeId(i)) {
                let w = weight(i, j, rate);
                if w > T::zero() {
                    total += w;
                    let col = self.slot[j.0];
                    if col != usize::MAX {
                        self.system[row * m + col] -= w;
                    }
                }
            }
            self.system[row * m + row] += total;
        }
        let solved = lu_solve_in_place(&mut self.system, &mut self.rhs, m);
        for i in 0..n {
            self.out[i] = if i == d {
                T::zero()
            } else if self.slot[i] == usize::MAX || !solved {
                T::infinity()
            } else {
                self.rhs[self.slot[i]]
            };
        }
        &self.out
    }
}

/// Largest instance [`brute_force_optimal`] accepts, in bits of decision entries.
pub const BRUTE_FORCE_MAX_BITS: u32 = 24;

/// Exhaustive minimizer of total latency over all binary matrices supported
/// on the graph.
///
/// Ties are broken towards the lexicographically smallest flattened matrix.
pub fn brute_force_optimal<T: Real>(graph: &ContactGraph<T>) -> Result<(DecisionMatrix<T>, LatencyVector<T>)> {
    let n = graph.node_count();
    let d = graph.destination();
    let senders: Vec<NodeId> = graph.nodes().filter(|&i| i != d).collect();
    let bits: u32 = senders.iter().map(|&i| graph.degree(i) as u32).sum();
    if bits > BRUTE_FORCE_MAX_BITS {
        return Err(Error::InstanceTooLarge { bits });
    }

    let mut solver = LatencySolver::new(n);
    let mut current = DecisionMatrix::zeros(n, d);
    let mut masks = vec![0u32; senders.len()];
    let mut best: Option<(T, DecisionMatrix<T>, Vec<T>)> = None;

    loop {
        let has_idle_row = senders.iter().zip(&masks).any(|(&i, &m)| m == 0 && graph.degree(i) > 0);
        let total = if has_idle_row {
            T::infinity()
        } else {
            solver.solve(graph, &current).iter().copied().sum::<T>()
        };
        let better = match &best {
            None => true,
            Some((best_total, best_matrix, _)) => {
                total < *best_total || (total == *best_total && lexicographically_less(&current, best_matrix))
            }
        };
        if better {
            let values = solver.solve(graph, &current).to_vec();
            best = Some((total, current.clone(), values));
        }

        // mixed-radix increment over per-row subsets
        let mut pos = 0;
        loop {
            if pos == senders.len() {
                let (_, matrix, values) = best.expect("at least one matrix enumerated");
                return Ok((matrix, LatencyVector::new(values)));
            }
            let i = senders[pos];
            let limit = 1u32 << graph.degree(i);
            masks[pos] += 1;
            let wrapped = masks[pos] == limit;
            if wrapped {
                masks[pos] = 0;
            }
            write_mask_row(&mut current, graph, i, masks[pos]);
            if !wrapped {
                break;
            }
            pos += 1;
        }
    }
}

fn write_mask_row<T: Real>(matrix: &mut DecisionMatrix<T>, graph: &ContactGraph<T>, i: NodeId, mask: u32) {
    for (k, &(j, _)) in graph.neighbors(i).iter().enumerate() {
        let v = if mask & (1 << k) != 0 { T::one() } else { T::zero() };
        matrix.entries[i.0 * matrix.n + j.0] = v;
    }
}

fn lexicographically_less<T: Real>(a: &DecisionMatrix<T>, b: &DecisionMatrix<T>) -> bool {
    for (x, y) in a.entries.iter().zip(&b.entries) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_node() -> ContactGraph<f64> {
        ContactGraph::from_edges(2, NodeId(0), [(0, 1, 0.5)]).unwrap()
    }

    // d = 0, chain d - 1 (1.0), 1 - 2 (0.5)
    fn chain() -> ContactGraph<f64> {
        ContactGraph::from_edges(3, NodeId(0), [(0, 1, 1.0), (1, 2, 0.5)]).unwrap()
    }

    #[test]
    fn two_node_latency_is_inverse_rate() {
        let g = two_node();
        let mut p = DecisionMatrix::zeros(2, NodeId(0));
        p.set(NodeId(1), NodeId(0), 1.0).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert_eq!(l.as_slice(), &[0.0, 2.0]);
        assert_eq!(utility(&g, &p).unwrap(), 2.0);
    }

    #[test]
    fn chain_latencies() {
        let g = chain();
        let mut p = DecisionMatrix::zeros(3, NodeId(0));
        p.set(NodeId(1), NodeId(0), 1.0).unwrap();
        p.set(NodeId(2), NodeId(1), 1.0).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert!((l[NodeId(1)] - 1.0).abs() < 1e-15);
        assert!((l[NodeId(2)] - 3.0).abs() < 1e-15);
        assert!((utility(&g, &p).unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn idle_node_is_infinite() {
        let g = chain();
        let mut p = DecisionMatrix::zeros(3, NodeId(0));
        p.set(NodeId(1), NodeId(0), 1.0).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert_eq!(l[NodeId(2)], f64::INFINITY);
        assert_eq!(utility(&g, &p).unwrap(), f64::INFINITY);
    }

    #[test]
    fn forwarding_into_a_sink_is_infinite() {
        // 1 forwards to both d and 2, but 2 never forwards
        let g = ContactGraph::<f64>::from_edges(3, NodeId(0), [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let mut p = DecisionMatrix::zeros(3, NodeId(0));
        p.set(NodeId(1), NodeId(0), 1.0).unwrap();
        p.set(NodeId(1), NodeId(2), 1.0).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert!(l[NodeId(1)].is_infinite());
        assert!(l[NodeId(2)].is_infinite());
    }

    #[test]
    fn off_graph_forwarding_is_rejected() {
        let g = chain();
        let mut p = DecisionMatrix::zeros(3, NodeId(0));
        p.set(NodeId(2), NodeId(0), 1.0).unwrap();
        assert_eq!(
            expected_latencies(&g, &p),
            Err(Error::SupportViolation { from: NodeId(2), to: NodeId(0) })
        );
    }

    #[test]
    fn destination_row_stays_zero() {
        let mut p = DecisionMatrix::<f64>::zeros(3, NodeId(0));
        assert!(p.set(NodeId(0), NodeId(1), 1.0).is_err());
        assert!(p.set(NodeId(1), NodeId(0), 1.5).is_err());
        assert!(p.set(NodeId(1), NodeId(1), 0.5).is_err());
    }

    #[test]
    fn fractional_matrix_solution_satisfies_recursion() {
        let g = ContactGraph::from_edges(4, NodeId(3), [(0, 1, 0.3), (0, 3, 0.2), (1, 2, 0.9), (2, 3, 0.4), (1, 3, 0.05)])
            .unwrap();
        let mut p = DecisionMatrix::zeros(4, NodeId(3));
        p.set(NodeId(0), NodeId(1), 0.4).unwrap();
        p.set(NodeId(0), NodeId(3), 0.7).unwrap();
        p.set(NodeId(1), NodeId(0), 0.2).unwrap();
        p.set(NodeId(1), NodeId(2), 0.9).unwrap();
        p.set(NodeId(2), NodeId(1), 0.5).unwrap();
        p.set(NodeId(2), NodeId(3), 0.3).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert!(l.iter().all(f64::is_finite));
        for r in latency_residuals(&g, &p, &l) {
            assert!(r < 1e-12, "{r}");
        }
    }

    #[test]
    fn brute_force_two_node() {
        let (b, l) = brute_force_optimal(&two_node()).unwrap();
        assert_eq!(b.forwarding_set(NodeId(1)), vec![NodeId(0)]);
        assert_eq!(l.total(), 2.0);
    }

    #[test]
    fn brute_force_chain() {
        let (b, l) = brute_force_optimal(&chain()).unwrap();
        assert_eq!(b.forwarding_set(NodeId(1)), vec![NodeId(0)]);
        assert_eq!(b.forwarding_set(NodeId(2)), vec![NodeId(1)]);
        assert!((l[NodeId(2)] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn brute_force_rejects_large_instances() {
        let edges: Vec<(usize, usize, f64)> =
            (0..8).flat_map(|i| (i + 1..8).map(move |j| (i, j, 1.0 + (i * 8 + j) as f64))).collect();
        let g = ContactGraph::from_edges(8, NodeId(0), edges).unwrap();
        assert!(matches!(brute_force_optimal(&g), Err(Error::InstanceTooLarge { bits: 49 })));
    }

    #[test]
    fn works_in_single_precision() {
        let g = chain().cast::<f32>();
        let mut p = DecisionMatrix::<f32>::zeros(3, NodeId(0));
        p.set(NodeId(1), NodeId(0), 1.0).unwrap();
        p.set(NodeId(2), NodeId(1), 1.0).unwrap();
        let l = expected_latencies(&g, &p).unwrap();
        assert!((l[NodeId(2)] - 3.0).abs() < 1e-6);
    }
}
