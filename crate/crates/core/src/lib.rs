//! Latency-optimal single-copy forwarding in opportunistic networks.
//!
//! Nodes meet pairwise as independent Poisson processes. A message carried by
//! node `i` is handed to the first neighbor met among a chosen relay set, and
//! the goal is to pick relay sets minimizing the expected delivery latency to a
//! single destination. The crate provides the latency evaluator, the exact
//! per-node relay choice, a centralized greedy optimum, the decentralized
//! protocol, baseline routers and a discrete-event simulator to compare them.
//!
//! The numerical core is generic over [`Real`] (`f32` or `f64`); the
//! simulator works in `f64`.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod centralized;
pub mod contact;
pub mod decentralized;
pub mod error;
pub mod experiment;
pub mod latency;
pub mod linalg;
pub mod lp;
pub mod meetings;
pub mod relay;
pub mod scalar;
pub mod sim;

pub use centralized::{centralized_minlat, convergence_time_bound, CentralizedSolution};
pub use contact::{ContactGraph, ContactTrace, NodeId, RateMatrix};
pub use decentralized::{MinLatNetwork, RateEstimator, RateMode};
pub use error::{Error, Result};
pub use latency::{brute_force_optimal, expected_latencies, utility, DecisionMatrix, LatencyVector};
pub use relay::{best_relay_subset, RelayCandidate, RelaySelection};
pub use scalar::Real;

pub type Graph = ContactGraph<f64>;
pub type Graph32 = ContactGraph<f32>;
pub type Decisions = DecisionMatrix<f64>;
pub type Decisions32 = DecisionMatrix<f32>;
pub type Latencies = LatencyVector<f64>;
pub type Latencies32 = LatencyVector<f32>;
