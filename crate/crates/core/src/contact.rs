//! Contact graphs, synthetic network generators and contact-trace ingestion.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Index of a node in `[0, N)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i)
    }
}

/// Undirected contact graph with pairwise exponential meeting rates (1/s)
/// and a designated destination.
///
/// Rates are strictly positive, symmetric and there are no self-edges.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactGraph<T> {
    destination: NodeId,
    // sorted by neighbor id
    adjacency: Vec<Vec<(NodeId, T)>>,
}

impl<T: Real> ContactGraph<T> {
    /// Builds a graph and rejects it unless it is connected.
    pub fn from_edges<I>(n: usize, destination: NodeId, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        let graph = Self::from_edges_partial(n, destination, edges)?;
        let components = graph.component_count();
        if components != 1 {
            return Err(Error::Disconnected { components });
        }
        Ok(graph)
    }

    /// Builds a graph without requiring connectivity. Unreachable nodes end up
    /// with infinite latency downstream.
    pub fn from_edges_partial<I>(n: usize, destination: NodeId, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize, T)>,
    {
        if n == 0 {
            return Err(Error::InvalidParameters("graph needs at least one node".into()));
        }
        if destination.0 >= n {
            return Err(Error::UnknownNode(destination.0));
        }
        let mut adjacency: Vec<Vec<(NodeId, T)>> = vec![Vec::new(); n];
        for (i, j, rate) in edges {
            if i >= n {
                return Err(Error::UnknownNode(i));
            }
            if j >= n {
                return Err(Error::UnknownNode(j));
            }
            if i == j {
                return Err(Error::InvalidParameters(format!("self-edge on node {i}")));
            }
            if !(rate > T::zero()) || !rate.is_finite() {
                return Err(Error::NonpositiveRate(rate.as_f64()));
            }
            if adjacency[i].iter().any(|(k, _)| k.0 == j) {
                return Err(Error::InvalidParameters(format!("duplicate edge ({i}, {j})")));
            }
            adjacency[i].push((NodeId(j), rate));
            adjacency[j].push((NodeId(i), rate));
        }
        for row in &mut adjacency {
            row.sort_by_key(|(k, _)| *k);
        }
        Ok(Self { destination, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    pub fn with_destination(mut self, destination: NodeId) -> Result<Self> {
        if destination.0 >= self.node_count() {
            return Err(Error::UnknownNode(destination.0));
        }
        self.destination = destination;
        Ok(self)
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.node_count()).map(NodeId)
    }

    /// Neighbor set with rates, sorted by neighbor id.
    pub fn neighbors(&self, i: NodeId) -> &[(NodeId, T)] {
        &self.adjacency[i.0]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adjacency[i.0].len()
    }

    pub fn rate(&self, i: NodeId, j: NodeId) -> Option<T> {
        let row = &self.adjacency[i.0];
        row.binary_search_by_key(&j, |(k, _)| *k).ok().map(|pos| row[pos].1)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Each undirected edge once, as `(i, j, rate)` with `i < j`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId, T)> + '_ {
        self.adjacency.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .filter(move |(j, _)| j.0 > i)
                .map(move |&(j, rate)| (NodeId(i), j, rate))
        })
    }

    pub fn mean_rate(&self) -> T {
        let m = self.edge_count();
        if m == 0 {
            return T::zero();
        }
        self.edges().map(|(_, _, r)| r).sum::<T>() / T::lit(m as f64)
    }

    pub fn component_count(&self) -> usize {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut components = 0;
        for start in 0..n {
            if seen[start] {
                continue;
            }
            components += 1;
            seen[start] = true;
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                for &(v, _) in &self.adjacency[u] {
                    if !seen[v.0] {
                        seen[v.0] = true;
                        queue.push_back(v.0);
                    }
                }
            }
        }
        components
    }

    pub fn is_connected(&self) -> bool {
        self.component_count() == 1
    }

    /// Converts the rate type, e.g. `f64` to `f32`.
    pub fn cast<U: Real>(&self) -> ContactGraph<U> {
        ContactGraph {
            destination: self.destination,
            adjacency: self
                .adjacency
                .iter()
                .map(|row| row.iter().map(|&(j, r)| (j, U::lit(r.as_f64()))).collect())
                .collect(),
        }
    }

    /// Adjacency-list text: header `nodes N dest D`, then one `i j lambda` line per edge.
    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "nodes {} dest {}", self.node_count(), self.destination)?;
        for (i, j, rate) in self.edges() {
            writeln!(out, "{i} {j} {}", rate.as_f64())?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<(usize, usize)> = None;
        let mut edges = Vec::new();
        for (idx, line) in input.lines().enumerate() {
            let lineno = idx + 1;
            let line = line?;
            let line = strip_comment(&line);
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match header {
                None => {
                    if fields.len() != 4 || fields[0] != "nodes" || fields[2] != "dest" {
                        return Err(parse_err(lineno, "expected header `nodes N dest D`"));
                    }
                    let n = parse_field::<usize>(fields[1], lineno, "node count")?;
                    let d = parse_field::<usize>(fields[3], lineno, "destination")?;
                    header = Some((n, d));
                }
                Some(_) => {
                    if fields.len() != 3 {
                        return Err(parse_err(lineno, "expected `i j lambda`"));
                    }
                    let i = parse_field::<usize>(fields[0], lineno, "node")?;
                    let j = parse_field::<usize>(fields[1], lineno, "node")?;
                    let rate = parse_field::<f64>(fields[2], lineno, "rate")?;
                    edges.push((i, j, T::lit(rate)));
                }
            }
        }
        let (n, d) = header.ok_or_else(|| parse_err(0, "missing header `nodes N dest D`"))?;
        Self::from_edges_partial(n, NodeId(d), edges)
    }
}

/// Dense symmetric matrix of pairwise meeting rates; zero means "never meet".
#[derive(Debug, Clone, PartialEq)]
pub struct RateMatrix<T> {
    n: usize,
    values: Vec<T>,
}

impl<T: Real> RateMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self { n, values: vec![T::zero(); n * n] }
    }

    /// Row-major `n x n` values; must be symmetric, nonnegative, zero diagonal.
    pub fn from_rows(n: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::InvalidParameters(format!(
                "expected {} entries, got {}",
                n * n,
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != T::zero() {
                return Err(Error::InvalidParameters(format!("nonzero diagonal at {i}")));
            }
            for j in 0..n {
                let v = values[i * n + j];
                if !(v >= T::zero()) || !v.is_finite() {
                    return Err(Error::InvalidParameters(format!("bad rate at ({i}, {j})")));
                }
                if v != values[j * n + i] {
                    return Err(Error::InvalidParameters(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.values[i * self.n + j]
    }

    /// Sets both `(i, j)` and `(j, i)`.
    pub fn set(&mut self, i: usize, j: usize, rate: T) {
        assert!(i != j, "diagonal rates are fixed at zero");
        assert!(rate >= T::zero(), "rates are nonnegative");
        self.values[i * self.n + j] = rate;
        self.values[j * self.n + i] = rate;
    }

    /// Graph on the positive-rate support.
    pub fn support_graph(&self, destination: NodeId) -> Result<ContactGraph<T>> {
        let n = self.n;
        let edges = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| self.get(i, j) > T::zero())
            .map(|(i, j)| (i, j, self.get(i, j)));
        ContactGraph::from_edges_partial(n, destination, edges)
    }
}

/// Error from [`sparsify_top_k`] carrying the disconnected result so the caller
/// can still choose to use it.
#[derive(Debug, Clone, PartialEq)]
pub struct DisconnectedGraph<T> {
    pub graph: ContactGraph<T>,
    pub components: usize,
}

impl<T> fmt::Display for DisconnectedGraph<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sparsified graph has {} components", self.components)
    }
}

impl<T: fmt::Debug> std::error::Error for DisconnectedGraph<T> {}

/// Keeps edge `(i, j)` iff its rate is among the `k` largest positive rates of
/// node `i` or of node `j`. Ties in rank are broken by the smaller neighbor id.
pub fn sparsify_top_k<T: Real>(
    rates: &RateMatrix<T>,
    k: usize,
    destination: NodeId,
) -> Result<ContactGraph<T>, DisconnectedGraph<T>> {
    let n = rates.size();
    let mut keep = BTreeSet::new();
    for i in 0..n {
        let mut ranked: Vec<(usize, T)> = (0..n)
            .filter(|&j| j != i && rates.get(i, j) > T::zero())
            .map(|j| (j, rates.get(i, j)))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        for &(j, _) in ranked.iter().take(k) {
            keep.insert((i.min(j), i.max(j)));
        }
    }
    let edges = keep.into_iter().map(|(i, j)| (i, j, rates.get(i, j)));
    let graph = ContactGraph::from_edges_partial(n, destination, edges)
        .expect("rate matrix entries already validated");
    let components = graph.component_count();
    if components == 1 {
        Ok(graph)
    } else {
        Err(DisconnectedGraph { graph, components })
    }
}

/// Evolving preferential-attachment contact graph.
///
/// Starts from an `m0`-clique; every later vertex links to `m` distinct existing
/// vertices, each picked with probability proportional to its current degree.
/// Edge rates are uniform on `(0, 2 * rate_mean)`. The destination is node 0.
pub fn generate_preferential_attachment<T: Real, R: Rng + ?Sized>(
    n: usize,
    m0: usize,
    m: usize,
    rate_mean: T,
    rng: &mut R,
) -> Result<ContactGraph<T>> {
    if m == 0 || m > m0 || n <= m0 {
        return Err(Error::InvalidParameters(format!(
            "preferential attachment requires 1 <= m <= m0 < n (n={n}, m0={m0}, m={m})"
        )));
    }
    if !(rate_mean > T::zero()) || !rate_mean.is_finite() {
        return Err(Error::NonpositiveRate(rate_mean.as_f64()));
    }
    let mut pairs: Vec<(usize, usize)> = Vec::with_capacity(m0 * (m0 - 1) / 2 + (n - m0) * m);
    let mut degree = vec![0usize; n];
    for i in 0..m0 {
        for j in i + 1..m0 {
            pairs.push((i, j));
            degree[i] += 1;
            degree[j] += 1;
        }
    }
    let mut chosen = Vec::with_capacity(m);
    for v in m0..n {
        chosen.clear();
        // degrees frozen at the start of this step
        let weights: Vec<usize> = degree[..v].to_vec();
        for _ in 0..m {
            let total: usize = (0..v).filter(|u| !chosen.contains(u)).map(|u| weights[u]).sum();
            let pick = if total == 0 {
                // only possible when m0 == 1
                let free: Vec<usize> = (0..v).filter(|u| !chosen.contains(u)).collect();
                free[rng.random_range(0..free.len())]
            } else {
                let mut target = rng.random_range(0..total);
                let mut pick = None;
                for u in (0..v).filter(|u| !chosen.contains(u)) {
                    if target < weights[u] {
                        pick = Some(u);
                        break;
                    }
                    target -= weights[u];
                }
                pick.expect("target below total weight")
            };
            chosen.push(pick);
        }
        for &u in &chosen {
            pairs.push((u, v));
            degree[u] += 1;
            degree[v] += 1;
        }
    }
    let upper = 2.0 * rate_mean.as_f64();
    let edges: Vec<(usize, usize, T)> = pairs
        .into_iter()
        .map(|(i, j)| {
            let rate = loop {
                let r: f64 = rng.random_range(0.0..upper);
                if r > 0.0 {
                    break r;
                }
            };
            (i, j, T::lit(rate))
        })
        .collect();
    ContactGraph::from_edges(n, NodeId(0), edges)
}

/// One exponential intermeeting time with the given rate.
pub fn sample_intermeeting<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::NonpositiveRate(rate));
    }
    let exp = Exp::new(rate).map_err(|_| Error::NonpositiveRate(rate))?;
    Ok(exp.sample(rng))
}

/// A recorded contact between two nodes over `[start, end]` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactEvent {
    pub a: NodeId,
    pub b: NodeId,
    pub start: f64,
    pub end: f64,
}

/// Time-ordered contact events over `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ContactTrace {
    events: Vec<ContactEvent>,
    horizon: f64,
    node_count: usize,
    /// Original label of each compacted node id.
    labels: Vec<i64>,
}

impl ContactTrace {
    /// Builds a trace from already-compacted events; sorts them by start time.
    pub fn new(node_count: usize, mut events: Vec<ContactEvent>, horizon: f64) -> Result<Self> {
        for e in &events {
            check_event(e, 0)?;
            if e.a.0 >= node_count || e.b.0 >= node_count {
                return Err(Error::UnknownNode(e.a.0.max(e.b.0)));
            }
            if e.end > horizon {
                return Err(Error::InvalidParameters(format!(
                    "event ends at {} after horizon {horizon}",
                    e.end
                )));
            }
        }
        sort_events(&mut events);
        Ok(Self { events, horizon, node_count, labels: (0..node_count as i64).collect() })
    }

    pub fn events(&self) -> &[ContactEvent] {
        &self.events
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn labels(&self) -> &[i64] {
        &self.labels
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

fn sort_events(events: &mut [ContactEvent]) {
    events.sort_by(|x, y| {
        x.start
            .total_cmp(&y.start)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
            .then(x.end.total_cmp(&y.end))
    });
}

fn check_event(e: &ContactEvent, line: usize) -> Result<()> {
    if e.a == e.b {
        return Err(parse_err(line, "contact of a node with itself"));
    }
    if !e.start.is_finite() || !e.end.is_finite() || e.start < 0.0 {
        return Err(parse_err(line, "times must be finite and nonnegative"));
    }
    if e.end < e.start {
        return Err(parse_err(line, "contact ends before it starts"));
    }
    Ok(())
}

/// Parses `a b start end [ack]` lines. `#` starts a comment. Events with
/// `ack = 0` are dropped; node labels are compacted to `[0, N)` in label order.
pub fn parse_trace<R: BufRead>(input: R) -> Result<ContactTrace> {
    let mut raw: Vec<(i64, i64, f64, f64)> = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = strip_comment(&line);
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 && fields.len() != 5 {
            return Err(parse_err(lineno, "expected `a b start end [ack]`"));
        }
        let a = parse_field::<i64>(fields[0], lineno, "node id")?;
        let b = parse_field::<i64>(fields[1], lineno, "node id")?;
        let start = parse_field::<f64>(fields[2], lineno, "start time")?;
        let end = parse_field::<f64>(fields[3], lineno, "end time")?;
        let acked = match fields.get(4) {
            None | Some(&"1") => true,
            Some(&"0") => false,
            Some(_) => return Err(parse_err(lineno, "ack column must be 0 or 1")),
        };
        let probe = ContactEvent { a: NodeId(0), b: NodeId(usize::from(a != b)), start, end };
        check_event(&probe, lineno)?;
        if acked {
            raw.push((a, b, start, end));
        }
    }
    let labels: Vec<i64> = raw
        .iter()
        .flat_map(|&(a, b, _, _)| [a, b])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: BTreeMap<i64, usize> = labels.iter().enumerate().map(|(i, &l)| (l, i)).collect();
    let mut events: Vec<ContactEvent> = raw
        .into_iter()
        .map(|(a, b, start, end)| ContactEvent { a: NodeId(index[&a]), b: NodeId(index[&b]), start, end })
        .collect();
    sort_events(&mut events);
    let horizon = events.iter().map(|e| e.end).fold(0.0, f64::max);
    Ok(ContactTrace { events, horizon, node_count: labels.len(), labels })
}

/// Maximum-likelihood pairwise rates from a trace.
///
/// Contacts count as instantaneous at their start time. A pair met at distinct
/// times `t_1 < ... < t_k` gets `(k - 1) / (t_k - t_1)`; pairs with fewer than
/// two distinct meeting times get zero.
pub fn empirical_rates(trace: &ContactTrace) -> RateMatrix<f64> {
    let n = trace.node_count();
    let mut starts: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
    for e in trace.events() {
        let key = (e.a.0.min(e.b.0), e.a.0.max(e.b.0));
        starts.entry(key).or_default().push(e.start);
    }
    let mut rates = RateMatrix::zeros(n);
    for ((i, j), mut times) in starts {
        times.sort_by(f64::total_cmp);
        times.dedup();
        if times.len() >= 2 {
            let span = times[times.len() - 1] - times[0];
            rates.set(i, j, (times.len() - 1) as f64 / span);
        }
    }
    rates
}

fn strip_comment(line: &str) -> &str {
    match line.find('#') {
        Some(pos) => line[..pos].trim(),
        None => line.trim(),
    }
}

fn parse_err(line: usize, message: &str) -> Error {
    Error::Parse { line, message: message.to_string() }
}

fn parse_field<F: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<F> {
    s.parse().map_err(|_| parse_err(line, &format!("invalid {what} `{s}`")))
}
