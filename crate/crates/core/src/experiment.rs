//! Experiment configuration and the batch jobs behind the command line.
//!
//! A config is a TOML file with the sections `[scenario]`, `[workload]`,
//! `[simulation]`, `[constraints]`, `[sweep]`, `[convergence]` and `[output]`.
//! Unknown keys are rejected. Every output row is a function of the config
//! text and a seed; CSV outputs start with a `# config-sha256` comment.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::ProtocolKind;
use crate::centralized::{centralized_minlat, convergence_time_bound};
use crate::contact::{generate_preferential_attachment, parse_trace, sparsify_top_k, ContactGraph, ContactTrace, NodeId};
use crate::decentralized::{run_protocol_sampled, RateMode};
use crate::error::{Error, Result};
use crate::latency::{brute_force_optimal, expected_latencies};
use crate::meetings::random_connected_graph;
use crate::relay::{best_relay_subset, charnes_cooper_transform, exhaustive_relay_subset, solve_lp_small, LfpProblem, RelayCandidate};
use crate::scalar::approx_eq;
use crate::sim::{fmt_opt, hex, infocom_slotting, run_simulation, Constraints, ContactSource, MetricsReport, Scenario, Workload, METRICS_HEADER};

/// RNG stream for drawing synthetic contact graphs.
pub const GRAPH_STREAM: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Preferential-attachment graph with uniform rates.
    #[default]
    Net1,
    /// Top-k sparsified trace rates, sampled meetings.
    Net2,
    /// Top-k sparsified trace, replayed contacts.
    Net3,
    /// Graph file or inline edges.
    Custom,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub nodes: usize,
    pub m0: usize,
    pub m: usize,
    /// Rates are uniform on `(0, 2 * rate_mean)`.
    pub rate_mean: f64,
    pub destination: usize,
    pub trace: Option<PathBuf>,
    /// Strongest edges kept per node when sparsifying a trace.
    pub k: usize,
    pub slot: usize,
    pub slot_length: f64,
    pub graph: Option<PathBuf>,
    pub edges: Option<Vec<(usize, usize, f64)>>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            kind: ScenarioKind::Net1,
            nodes: 41,
            m0: 5,
            m: 5,
            rate_mean: 1e-4,
            destination: 0,
            trace: None,
            k: 10,
            slot: 0,
            slot_length: crate::sim::DEFAULT_SLOT,
            graph: None,
            edges: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorkloadConfig {
    /// Messages per batch.
    pub messages: usize,
    pub spacing: f64,
    /// Defaults to the scenario start.
    pub start: Option<f64>,
    pub batches: usize,
    pub batch_interval: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self { messages: 1000, spacing: 5.0, start: None, batches: 1, batch_interval: crate::sim::DEFAULT_SLOT }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    pub protocols: Vec<String>,
    /// Explicit seeds; otherwise `seed_count` seeds from the base seed.
    pub seeds: Option<Vec<u64>>,
    pub seed_count: usize,
    pub horizon: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            protocols: ["minlat", "prophetv2", "epidemic", "maxprop-s"].map(String::from).to_vec(),
            seeds: None,
            seed_count: 1,
            horizon: 259_200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ConstraintsConfig {
    pub ttl: Option<f64>,
    pub buffer: Option<usize>,
    pub exchange: Option<usize>,
}

impl ConstraintsConfig {
    pub fn to_constraints(self) -> Constraints {
        Constraints { ttl: self.ttl, buffer_capacity: self.buffer, exchange_limit: self.exchange }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepParameter {
    Ttl,
    Buffer,
    Exchange,
}

impl SweepParameter {
    pub fn key(self) -> &'static str {
        match self {
            SweepParameter::Ttl => "ttl",
            SweepParameter::Buffer => "buffer",
            SweepParameter::Exchange => "exchange",
        }
    }

    fn apply(self, base: Constraints, value: f64) -> Result<Constraints> {
        let count = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{} values must be positive integers, got {value}", self.key())))
            }
        };
        Ok(match self {
            SweepParameter::Ttl => Constraints { ttl: Some(value), ..base },
            SweepParameter::Buffer => Constraints { buffer_capacity: Some(count()?), ..base },
            SweepParameter::Exchange => Constraints { exchange_limit: Some(count()?), ..base },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceConfig {
    /// `exact` and/or `estimated`.
    pub modes: Vec<String>,
    pub horizon: f64,
    pub sample_interval: f64,
}

impl Default for ConvergenceConfig {
    fn default() -> Self {
        Self { modes: vec!["estimated".into(), "exact".into()], horizon: 5e4, sample_interval: 1000.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub graph: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
    pub sweep: Option<PathBuf>,
    pub convergence: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scenario: ScenarioConfig,
    pub workload: WorkloadConfig,
    pub simulation: SimulationConfig,
    pub constraints: ConstraintsConfig,
    pub sweep: Option<SweepConfig>,
    pub convergence: ConvergenceConfig,
    pub output: OutputConfig,
}

/// A validated config with the hash of its source text.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub sha256: String,
    /// Relative paths in the config resolve against this directory.
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(Self { config, sha256: hex(&Sha256::digest(text.as_bytes())), base_dir: base_dir.into() })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn header_comment(&self) -> String {
        format!("# config-sha256 {}", self.sha256)
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        let s = &self.scenario;
        match s.kind {
            ScenarioKind::Net1 => {
                if s.m == 0 || s.m > s.m0 || s.nodes <= s.m0 {
                    return bad(format!("net1 needs 1 <= m <= m0 < nodes, got m={} m0={} nodes={}", s.m, s.m0, s.nodes));
                }
                if !(s.rate_mean > 0.0) {
                    return bad(format!("rate_mean must be positive, got {}", s.rate_mean));
                }
                if s.destination >= s.nodes {
                    return bad(format!("destination {} out of range", s.destination));
                }
            }
            ScenarioKind::Net2 | ScenarioKind::Net3 => {
                if s.trace.is_none() {
                    return bad("net2/net3 scenarios need `trace`".into());
                }
                if s.k == 0 {
                    return bad("k must be positive".into());
                }
                if !(s.slot_length > 0.0) {
                    return bad("slot_length must be positive".into());
                }
            }
            ScenarioKind::Custom => {
                if s.graph.is_some() == s.edges.is_some() {
                    return bad("custom scenarios need exactly one of `graph` or `edges`".into());
                }
            }
        }
        if !(self.simulation.horizon > 0.0) {
            return bad(format!("horizon must be positive, got {}", self.simulation.horizon));
        }
        self.protocols()?;
        if self.simulation.seeds.as_ref().is_some_and(Vec::is_empty) || self.simulation.seed_count == 0 {
            return bad("at least one seed is required".into());
        }
        if !(self.workload.spacing >= 0.0) || !(self.workload.batch_interval >= 0.0) {
            return bad("workload spacing and batch_interval must be nonnegative".into());
        }
        if self.workload.batches == 0 {
            return bad("workload needs at least one batch".into());
        }
        self.constraints.to_constraints().validate().map_err(|e| Error::Config(e.to_string()))?;
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return bad("sweep needs at least one value".into());
            }
            for &v in &sweep.values {
                sweep.parameter.apply(Constraints::default(), v)?.validate().map_err(|e| Error::Config(e.to_string()))?;
            }
        }
        self.rate_modes()?;
        let c = &self.convergence;
        if !(c.horizon > 0.0) || !(c.sample_interval > 0.0) {
            return bad("convergence horizon and sample_interval must be positive".into());
        }
        Ok(())
    }

    pub fn protocols(&self) -> Result<Vec<ProtocolKind>> {
        if self.simulation.protocols.is_empty() {
            return Err(Error::Config("no protocols listed".into()));
        }
        self.simulation.protocols.iter().map(|p| p.parse()).collect()
    }

    pub fn rate_modes(&self) -> Result<Vec<RateMode>> {
        self.convergence
            .modes
            .iter()
            .map(|m| match m.as_str() {
                "exact" => Ok(RateMode::Exact),
                "estimated" => Ok(RateMode::Estimated),
                other => Err(Error::Config(format!("unknown rate mode `{other}`"))),
            })
            .collect()
    }

    /// Run seeds; `base` (from the command line) overrides the config.
    pub fn seeds(&self, base: Option<u64>) -> Vec<u64> {
        match (base, &self.simulation.seeds) {
            (None, Some(list)) => list.clone(),
            (Some(b), Some(list)) => (b..b + list.len() as u64).collect(),
            (b, None) => {
                let b = b.unwrap_or(1);
                (b..b + self.simulation.seed_count as u64).collect()
            }
        }
    }
}

/// Contact graph plus, for trace scenarios, the replayed contacts.
#[derive(Debug, Clone)]
pub struct BuiltScenario {
    pub graph: ContactGraph<f64>,
    pub trace: Option<ContactTrace>,
    pub start: f64,
    pub sources: Option<Vec<NodeId>>,
}

/// Builds the scenario network; synthetic graphs depend on `seed`.
pub fn build_network(loaded: &LoadedConfig, seed: u64, replay: bool) -> Result<BuiltScenario> {
    let s = &loaded.config.scenario;
    match s.kind {
        ScenarioKind::Net1 => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(GRAPH_STREAM);
            let graph = generate_preferential_attachment(s.nodes, s.m0, s.m, s.rate_mean, &mut rng)?
                .with_destination(NodeId(s.destination))?;
            Ok(BuiltScenario { graph, trace: None, start: 0.0, sources: None })
        }
        ScenarioKind::Net2 | ScenarioKind::Net3 => {
            let path = loaded.resolve(s.trace.as_ref().expect("validated"));
            let file = File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            let trace = parse_trace(BufReader::new(file))?;
            let slots = infocom_slotting(&trace, s.slot_length)?;
            let slot = slots
                .get(s.slot)
                .ok_or_else(|| Error::Config(format!("slot {} out of range ({} slots)", s.slot, slots.len())))?;
            if slot.degenerate {
                return Err(Error::InvalidParameters(format!("slot {} has no contacts", s.slot)));
            }
            if s.destination >= trace.node_count() {
                return Err(Error::Config(format!("destination {} out of range", s.destination)));
            }
            let graph = match sparsify_top_k(&slot.rates, s.k, NodeId(s.destination)) {
                Ok(g) => g,
                // nodes absent from the slot stay isolated
                Err(disconnected) => disconnected.graph,
            };
            let replayed = (s.kind == ScenarioKind::Net3 && replay).then(|| restrict_trace(&trace, &graph)).transpose()?;
            Ok(BuiltScenario { graph, trace: replayed, start: slot.start, sources: Some(slot.nodes.clone()) })
        }
        ScenarioKind::Custom => {
            let graph = if let Some(path) = &s.graph {
                let path = loaded.resolve(path);
                let file = File::open(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                ContactGraph::read_from(BufReader::new(file))?
            } else {
                let edges = s.edges.as_ref().expect("validated");
                let n = edges.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0);
                ContactGraph::from_edges_partial(n, NodeId(s.destination), edges.iter().copied())?
            };
            Ok(BuiltScenario { graph, trace: None, start: 0.0, sources: None })
        }
    }
}

/// Keeps only contacts on edges of `graph`.
fn restrict_trace(trace: &ContactTrace, graph: &ContactGraph<f64>) -> Result<ContactTrace> {
    let events = trace.events().iter().filter(|e| graph.rate(e.a, e.b).is_some()).copied().collect();
    ContactTrace::new(trace.node_count(), events, trace.horizon())
}

/// Full simulation scenario for one seed.
pub fn build_scenario(loaded: &LoadedConfig, seed: u64) -> Result<Scenario> {
    let cfg = &loaded.config;
    let built = build_network(loaded, seed, true)?;
    let start = built.start;
    let workload = Workload::Uniform {
        count: cfg.workload.messages,
        spacing: cfg.workload.spacing,
        start: cfg.workload.start.unwrap_or(start),
        sources: built.sources,
        batches: cfg.workload.batches,
        batch_interval: cfg.workload.batch_interval,
    };
    let (contacts, horizon) = match built.trace {
        Some(trace) => {
            let horizon = trace.horizon().min(start + cfg.simulation.horizon);
            (ContactSource::Trace(trace), horizon)
        }
        None => (ContactSource::Synthetic, start + cfg.simulation.horizon),
    };
    Ok(Scenario {
        graph: built.graph,
        contacts,
        workload,
        constraints: cfg.constraints.to_constraints(),
        start,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphSummary {
    pub nodes: usize,
    pub edges: usize,
    pub mean_rate: f64,
    pub destination: usize,
    pub components: usize,
}

impl GraphSummary {
    pub fn of(graph: &ContactGraph<f64>) -> Self {
        Self {
            nodes: graph.node_count(),
            edges: graph.edge_count(),
            mean_rate: graph.mean_rate(),
            destination: graph.destination().0,
            components: graph.component_count(),
        }
    }
}

pub fn generate(loaded: &LoadedConfig, seed: u64) -> Result<(ContactGraph<f64>, GraphSummary)> {
    let built = build_network(loaded, seed, false)?;
    let summary = GraphSummary::of(&built.graph);
    Ok((built.graph, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub passed: bool,
    pub max_latency_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub nodes: usize,
    pub destination: usize,
    pub settlement_order: Vec<usize>,
    /// Per node; `null` for unreachable nodes.
    pub latencies: Vec<Option<f64>>,
    /// Relay set of each node.
    pub relays: Vec<Vec<usize>>,
    pub total_latency: Option<f64>,
    pub convergence_bound: Option<f64>,
    pub oracle: Option<OracleCheck>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

/// Centralized optimum of a connected graph, optionally checked against
/// exhaustive enumeration.
pub fn solve(graph: &ContactGraph<f64>, verify: bool) -> Result<SolveReport> {
    if !graph.is_connected() {
        return Err(Error::Disconnected { components: graph.component_count() });
    }
    let sol = centralized_minlat(graph);
    let oracle = if verify {
        let (b, l) = brute_force_optimal(graph)?;
        let max_latency_error = graph
            .nodes()
            .map(|i| rel_error(l[i], sol.latencies[i]))
            .fold(0.0, f64::max);
        Some(OracleCheck { passed: b == sol.decisions && max_latency_error <= 1e-9, max_latency_error })
    } else {
        None
    };
    Ok(SolveReport {
        nodes: graph.node_count(),
        destination: graph.destination().0,
        settlement_order: sol.settlement_order.iter().map(|v| v.0).collect(),
        latencies: sol.latencies.iter().map(finite).collect(),
        relays: graph.nodes().map(|i| sol.decisions.forwarding_set(i).into_iter().map(|j| j.0).collect()).collect(),
        total_latency: finite(sol.latencies.total()),
        convergence_bound: finite(convergence_time_bound(graph, &sol.settlement_order)),
        oracle,
    })
}

fn rel_error(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }
}

/// Metrics for every (seed, protocol), seed-major, protocols in config order.
pub fn run(loaded: &LoadedConfig, base_seed: Option<u64>, jobs: Option<usize>) -> Result<Vec<MetricsReport>> {
    let protocols = loaded.config.protocols()?;
    let seeds = loaded.config.seeds(base_seed);
    let per_seed = in_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&seed| {
                let scenario = build_scenario(loaded, seed)?;
                protocols.iter().map(|&p| run_simulation(&scenario, p, seed)).collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    Ok(per_seed.into_iter().flatten().collect())
}

pub fn metrics_csv(loaded: &LoadedConfig, reports: &[MetricsReport]) -> String {
    let mut out = format!("{}\n{METRICS_HEADER}\n", loaded.header_comment());
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub const SWEEP_PREFIX: &str = "sweep_param,sweep_value";

/// Runs the `[sweep]` grid: one row per (value, seed, protocol).
pub fn sweep(loaded: &LoadedConfig, base_seed: Option<u64>, jobs: Option<usize>) -> Result<String> {
    let grid = loaded.config.sweep.as_ref().ok_or_else(|| Error::Config("missing [sweep] section".into()))?;
    let protocols = loaded.config.protocols()?;
    let seeds = loaded.config.seeds(base_seed);
    let base = loaded.config.constraints.to_constraints();
    let points: Vec<(f64, u64)> = grid.values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let rows = in_pool(jobs, || {
        points
            .par_iter()
            .map(|&(value, seed)| {
                let mut scenario = build_scenario(loaded, seed)?;
                scenario.constraints = grid.parameter.apply(base, value)?;
                protocols
                    .iter()
                    .map(|&p| {
                        let report = run_simulation(&scenario, p, seed)?;
                        Ok(format!("{},{value},{}", grid.parameter.key(), report.csv_row()))
                    })
                    .collect::<Result<Vec<String>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = format!("{}\n{SWEEP_PREFIX},{METRICS_HEADER}\n", loaded.header_comment());
    for row in rows.into_iter().flatten() {
        out.push_str(&row);
        out.push('\n');
    }
    Ok(out)
}

pub const CONVERGENCE_HEADER: &str = "mode,seed,time,estimated_error,achieved_error,mean_optimal_latency,converged_at";

/// Error series of the decentralized protocol at regular sample times.
pub fn convergence(loaded: &LoadedConfig, base_seed: Option<u64>, jobs: Option<usize>) -> Result<String> {
    let cfg = &loaded.config;
    let modes = cfg.rate_modes()?;
    let seeds = cfg.seeds(base_seed);
    let c = &cfg.convergence;
    let steps = (c.horizon / c.sample_interval).floor() as usize;
    let times: Vec<f64> = (0..=steps).map(|k| k as f64 * c.sample_interval).collect();
    let points: Vec<(RateMode, u64)> = modes.iter().flat_map(|&m| seeds.iter().map(move |&s| (m, s))).collect();
    let blocks = in_pool(jobs, || {
        points
            .par_iter()
            .map(|&(mode, seed)| {
                let graph = build_network(loaded, seed, false)?.graph;
                if !graph.is_connected() {
                    return Err(Error::Disconnected { components: graph.component_count() });
                }
                let run = run_protocol_sampled(&graph, mode, c.horizon, seed, &times)?;
                let label = match mode {
                    RateMode::Exact => "exact",
                    RateMode::Estimated => "estimated",
                };
                Ok(run
                    .samples
                    .iter()
                    .map(|s| {
                        format!(
                            "{label},{seed},{},{},{},{},{}",
                            s.time,
                            s.estimated_error,
                            s.achieved_error,
                            s.mean_optimal,
                            fmt_opt(finite(run.convergence_time))
                        )
                    })
                    .collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = format!("{}\n{CONVERGENCE_HEADER}\n", loaded.header_comment());
    for line in blocks.into_iter().flatten() {
        out.push_str(&line);
        out.push('\n');
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub graphs_checked: usize,
    pub graph_mismatches: usize,
    pub relay_instances: usize,
    pub relay_mismatches: usize,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.graph_mismatches == 0 && self.relay_mismatches == 0
    }
}

/// Oracle comparisons on random small instances: centralized greedy against
/// exhaustive enumeration, and the three relay-subset solvers against each
/// other.
pub fn verify(graphs: usize, max_nodes: usize, relay_instances: usize, seed: u64) -> Result<VerifyReport> {
    if !(2..=8).contains(&max_nodes) {
        return Err(Error::InvalidParameters(format!("max nodes must be in [2, 8], got {max_nodes}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut graph_mismatches = 0;
    let mut checked = 0;
    while checked < graphs {
        let n = rng.random_range(2..=max_nodes);
        let graph: ContactGraph<f64> = random_connected_graph(n, 0.4, 0.01, 1.0, &mut rng);
        let report = match solve(&graph, true) {
            Ok(r) => r,
            Err(Error::InstanceTooLarge { .. }) => continue,
            Err(e) => return Err(e),
        };
        checked += 1;
        let sol = centralized_minlat(&graph);
        let exact = expected_latencies(&graph, &sol.decisions)?;
        let consistent = graph.nodes().all(|i| approx_eq(exact[i], sol.latencies[i], 1e-9));
        if !report.oracle.is_some_and(|o| o.passed) || !consistent {
            graph_mismatches += 1;
        }
    }
    let mut relay_mismatches = 0;
    for _ in 0..relay_instances {
        let size = rng.random_range(1..=10);
        let candidates: Vec<RelayCandidate<f64>> = (0..size)
            .map(|k| RelayCandidate::new(k, rng.random_range(0.01..1.0), rng.random_range(0.0..100.0)))
            .collect();
        let greedy = best_relay_subset(&candidates);
        let oracle = exhaustive_relay_subset(&candidates);
        let lp = solve_lp_small(&charnes_cooper_transform(&LfpProblem::from_candidates(&candidates)))?;
        if !approx_eq(greedy.value, oracle.value, 1e-9) || !approx_eq(lp.objective, greedy.value, 1e-9) {
            relay_mismatches += 1;
        }
    }
    Ok(VerifyReport { graphs_checked: checked, graph_mismatches, relay_instances, relay_mismatches })
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => work(),
        Some(0) => Err(Error::InvalidParameters("--jobs must be positive".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidParameters(e.to_string()))?
            .install(work),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> LoadedConfig {
        LoadedConfig::parse(text, ".").unwrap()
    }

    #[test]
    fn defaults_are_net1() {
        let cfg = load("");
        assert_eq!(cfg.config.scenario.kind, ScenarioKind::Net1);
        let (graph, summary) = generate(&cfg, 1).unwrap();
        assert_eq!(summary.nodes, 41);
        assert_eq!(summary.edges, 190);
        assert!(graph.is_connected());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(LoadedConfig::parse("[scenario]\nkind = \"net1\"\nbogus = 3\n", ".").is_err());
        assert!(LoadedConfig::parse("[nonsense]\n", ".").is_err());
        assert!(LoadedConfig::parse("[simulation]\nprotocols = [\"spray\"]\n", ".").is_err());
        assert!(LoadedConfig::parse("[simulation]\nhorizon = -1.0\n", ".").is_err());
    }

    #[test]
    fn custom_two_node() {
        let cfg = load("[scenario]\nkind = \"custom\"\nedges = [[0, 1, 0.5]]\n");
        let (graph, summary) = generate(&cfg, 1).unwrap();
        assert_eq!(summary.edges, 1);
        let report = solve(&graph, true).unwrap();
        assert_eq!(report.latencies[1], Some(2.0));
        assert!(report.oracle.unwrap().passed);
    }

    #[test]
    fn seeds_resolution() {
        let cfg = load("[simulation]\nseed_count = 3\n");
        assert_eq!(cfg.config.seeds(None), vec![1, 2, 3]);
        assert_eq!(cfg.config.seeds(Some(10)), vec![10, 11, 12]);
        let cfg = load("[simulation]\nseeds = [7, 9]\n");
        assert_eq!(cfg.config.seeds(None), vec![7, 9]);
    }

    #[test]
    fn hash_tracks_text() {
        assert_ne!(load("").sha256, load("# comment\n").sha256);
        assert!(load("").header_comment().starts_with("# config-sha256 "));
    }

    #[test]
    fn sweep_rows_are_ordered() {
        let cfg = load(
            "[scenario]\nkind = \"custom\"\nedges = [[0, 1, 0.01], [1, 2, 0.02]]\n\
             [workload]\nmessages = 5\n[simulation]\nprotocols = [\"minlat\", \"epidemic\"]\nseed_count = 2\nhorizon = 2000.0\n\
             [sweep]\nparameter = \"ttl\"\nvalues = [10.0, 1000.0]\n",
        );
        let csv = sweep(&cfg, None, Some(2)).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "sweep_param,sweep_value,protocol,seed,delivery_rate,avg_latency,avg_hops,avg_buffer");
        assert_eq!(lines.len(), 2 + 2 * 2 * 2);
        assert!(lines[2].starts_with("ttl,10,minlat,1,"));
        assert!(lines[9].starts_with("ttl,1000,epidemic,2,"));
        assert_eq!(csv, sweep(&cfg, None, Some(1)).unwrap());
    }

    #[test]
    fn verify_small() {
        let report = verify(10, 5, 50, 3).unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.graphs_checked, 10);
    }

    #[test]
    fn disconnected_graph_cannot_be_solved() {
        let g = ContactGraph::from_edges_partial(3, NodeId(0), [(0, 1, 1.0)]).unwrap();
        assert_eq!(solve(&g, false), Err(Error::Disconnected { components: 2 }));
    }
}
