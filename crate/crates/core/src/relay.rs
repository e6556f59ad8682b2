//! Best relay subset for a single node.
//!
//! A node with candidate relays `k` (meeting rate `r_k`, relay latency `L_k`)
//! wants the subset minimizing
//!
//! ```text
//! G = (1 + sum_k r_k L_k) / (sum_k r_k)
//! ```
//!
//! The optimum is the threshold set `{k : L_k < G}`, found by scanning
//! candidates in ascending latency. The same problem is also exposed as a
//! linear-fractional program and its Charnes-Cooper linear program.

use crate::contact::NodeId;
use crate::error::Result;
use crate::lp::{solve_dense, LinearProgram};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelayCandidate<T> {
    pub id: NodeId,
    pub rate: T,
    /// Candidate's own latency to the destination; may be `+inf`.
    pub latency: T,
}

impl<T> RelayCandidate<T> {
    pub fn new(id: impl Into<NodeId>, rate: T, latency: T) -> Self {
        Self { id: id.into(), rate, latency }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelaySelection<T> {
    /// Chosen relays, sorted by id.
    pub chosen: Vec<NodeId>,
    pub value: T,
}

impl<T: Real> RelaySelection<T> {
    pub fn none() -> Self {
        Self { chosen: Vec::new(), value: T::infinity() }
    }
}

/// Exact minimizer of the relay ratio.
///
/// Candidates with infinite latency or nonpositive rate are ignored; an empty
/// effective candidate list gives value `+inf` and no relays.
pub fn best_relay_subset<T: Real>(candidates: &[RelayCandidate<T>]) -> RelaySelection<T> {
    let mut usable: Vec<&RelayCandidate<T>> = candidates
        .iter()
        .filter(|c| c.latency.is_finite() && c.rate > T::zero())
        .collect();
    if usable.is_empty() {
        return RelaySelection::none();
    }
    usable.sort_by(|a, b| a.latency.partial_cmp(&b.latency).unwrap().then(a.id.cmp(&b.id)));
    let mut numerator = T::one();
    let mut denominator = T::zero();
    let mut chosen = Vec::new();
    for c in usable {
        if denominator > T::zero() && !(c.latency < numerator / denominator) {
            break;
        }
        numerator += c.rate * c.latency;
        denominator += c.rate;
        chosen.push(c.id);
    }
    chosen.sort();
    RelaySelection { chosen, value: numerator / denominator }
}

/// Reference minimizer by enumerating every nonempty subset of the finite
/// candidates. Exponential; meant for checking [`best_relay_subset`].
pub fn exhaustive_relay_subset<T: Real>(candidates: &[RelayCandidate<T>]) -> RelaySelection<T> {
    let usable: Vec<&RelayCandidate<T>> = candidates
        .iter()
        .filter(|c| c.latency.is_finite() && c.rate > T::zero())
        .collect();
    assert!(usable.len() < 31, "exhaustive enumeration limited to 30 candidates");
    let mut best = RelaySelection::none();
    for mask in 1u32..(1u32 << usable.len()) {
        let (mut num, mut den) = (T::one(), T::zero());
        for (k, c) in usable.iter().enumerate() {
            if mask & (1 << k) != 0 {
                num += c.rate * c.latency;
                den += c.rate;
            }
        }
        let value = num / den;
        if value < best.value {
            let mut chosen: Vec<NodeId> =
                usable.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, c)| c.id).collect();
            chosen.sort();
            best = RelaySelection { chosen, value };
        }
    }
    best
}

/// `min (c^T p + alpha) / (d^T p + beta)` over the box `0 <= p <= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LfpProblem<T> {
    pub ids: Vec<NodeId>,
    pub c: Vec<T>,
    pub d: Vec<T>,
    pub alpha: T,
    pub beta: T,
}

impl<T: Real> LfpProblem<T> {
    /// `c_k = r_k L_k`, `d_k = r_k`, `alpha = 1`, `beta = 0`, over the finite-latency candidates.
    pub fn from_candidates(candidates: &[RelayCandidate<T>]) -> Self {
        let usable: Vec<&RelayCandidate<T>> = candidates
            .iter()
            .filter(|c| c.latency.is_finite() && c.rate > T::zero())
            .collect();
        Self {
            ids: usable.iter().map(|c| c.id).collect(),
            c: usable.iter().map(|c| c.rate * c.latency).collect(),
            d: usable.iter().map(|c| c.rate).collect(),
            alpha: T::one(),
            beta: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    /// Objective at a given `p`.
    pub fn ratio(&self, p: &[T]) -> T {
        let num = self.c.iter().zip(p).map(|(&c, &p)| c * p).sum::<T>() + self.alpha;
        let den = self.d.iter().zip(p).map(|(&d, &p)| d * p).sum::<T>() + self.beta;
        num / den
    }
}

/// Charnes-Cooper change of variables `x = p / (d^T p + beta)`, `y = 1 / (d^T p + beta)`:
///
/// ```text
/// min c^T x + alpha y   s.t.  d^T x + beta y = 1,  x <= y,  x >= 0,  y >= 0
/// ```
///
/// Variables are laid out as `[x_1 .. x_n, y]`.
pub fn charnes_cooper_transform<T: Real>(problem: &LfpProblem<T>) -> LinearProgram<T> {
    let n = problem.len();
    let mut objective = problem.c.clone();
    objective.push(problem.alpha);
    let mut normalization = problem.d.clone();
    normalization.push(problem.beta);
    let le_rows = (0..n)
        .map(|k| {
            let mut row = vec![T::zero(); n + 1];
            row[k] = T::one();
            row[n] = -T::one();
            (row, T::zero())
        })
        .collect();
    LinearProgram { objective, eq_rows: vec![(normalization, T::one())], le_rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution<T> {
    pub objective: T,
    pub x: Vec<T>,
    pub y: T,
}

impl<T: Real> LpSolution<T> {
    /// Recovered decision vector `p = x / y`.
    pub fn decisions(&self) -> Vec<T> {
        self.x.iter().map(|&x| x / self.y).collect()
    }
}

/// Solves a transformed program from [`charnes_cooper_transform`].
pub fn solve_lp_small<T: Real>(lp: &LinearProgram<T>) -> Result<LpSolution<T>> {
    let opt = solve_dense(lp)?;
    let mut x = opt.values;
    let y = x.pop().expect("transformed program has a y variable");
    Ok(LpSolution { objective: opt.objective, x, y })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::approx_eq;

    fn c(id: usize, rate: f64, latency: f64) -> RelayCandidate<f64> {
        RelayCandidate::new(id, rate, latency)
    }

    #[test]
    fn two_candidates_both_chosen() {
        let sel = best_relay_subset(&[c(0, 0.1, 0.0), c(1, 1.0, 1.0)]);
        assert_eq!(sel.chosen, vec![NodeId(0), NodeId(1)]);
        assert!(approx_eq(sel.value, 20.0 / 11.0, 1e-15));
    }

    #[test]
    fn single_candidate() {
        let sel = best_relay_subset(&[c(0, 0.5, 0.0)]);
        assert_eq!(sel.chosen, vec![NodeId(0)]);
        assert_eq!(sel.value, 2.0);
    }

    #[test]
    fn slow_relay_is_excluded() {
        let sel = best_relay_subset(&[c(0, 1.0, 0.0), c(7, 5.0, 10.0)]);
        assert_eq!(sel.chosen, vec![NodeId(0)]);
        assert_eq!(sel.value, 1.0);
    }

    #[test]
    fn empty_and_infinite_candidates() {
        assert_eq!(best_relay_subset::<f64>(&[]), RelaySelection::none());
        assert_eq!(best_relay_subset(&[c(3, 1.0, f64::INFINITY)]), RelaySelection::none());
        let sel = best_relay_subset(&[c(3, 1.0, f64::INFINITY), c(4, 2.0, 1.0)]);
        assert_eq!(sel.chosen, vec![NodeId(4)]);
        assert_eq!(sel.value, 1.5);
    }

    #[test]
    fn lp_examples_agree_with_greedy() {
        for cands in [vec![c(0, 0.5, 0.0)], vec![c(0, 0.1, 0.0), c(1, 1.0, 1.0)], vec![c(0, 1.0, 0.0), c(7, 5.0, 10.0)]] {
            let greedy = best_relay_subset(&cands);
            let oracle = exhaustive_relay_subset(&cands);
            let lp = charnes_cooper_transform(&LfpProblem::from_candidates(&cands));
            let sol = solve_lp_small(&lp).unwrap();
            assert!(approx_eq(greedy.value, oracle.value, 1e-12));
            assert!(approx_eq(sol.objective, greedy.value, 1e-9), "{} vs {}", sol.objective, greedy.value);
        }
    }

    #[test]
    fn single_candidate_lp_solution() {
        let lp = charnes_cooper_transform(&LfpProblem::from_candidates(&[c(0, 0.5, 0.0)]));
        let sol = solve_lp_small(&lp).unwrap();
        assert!(approx_eq(sol.objective, 2.0, 1e-12));
        assert!(approx_eq(sol.x[0], 2.0, 1e-12));
        assert!(approx_eq(sol.y, 2.0, 1e-12));
        assert!(approx_eq(sol.decisions()[0], 1.0, 1e-12));
    }

    #[test]
    fn lp_optimum_bounded_by_all_ones() {
        let cands = [c(0, 0.3, 2.0), c(1, 0.7, 9.0), c(2, 0.2, 1.0)];
        let problem = LfpProblem::from_candidates(&cands);
        let sol = solve_lp_small(&charnes_cooper_transform(&problem)).unwrap();
        assert!(sol.objective <= problem.ratio(&[1.0, 1.0, 1.0]) + 1e-12);
    }
}
