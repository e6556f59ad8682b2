//! Dense two-phase simplex for small linear programs.
//!
//! Problems are `min c^T z` subject to `A_eq z = b_eq`, `A_le z <= b_le`,
//! `z >= 0`, with nonnegative right-hand sides. Bland's rule keeps the highly
//! degenerate fractional-program reformulations from cycling.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Maximum structural variables accepted by [`solve_dense`].
pub const MAX_VARIABLES: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram<T> {
    pub objective: Vec<T>,
    pub eq_rows: Vec<(Vec<T>, T)>,
    pub le_rows: Vec<(Vec<T>, T)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpOptimum<T> {
    pub objective: T,
    pub values: Vec<T>,
}

pub fn solve_dense<T: Real>(lp: &LinearProgram<T>) -> Result<LpOptimum<T>> {
    let nvars = lp.objective.len();
    if nvars > MAX_VARIABLES {
        return Err(Error::InvalidParameters(format!("{nvars} variables exceed {MAX_VARIABLES}")));
    }
    for (row, rhs) in lp.eq_rows.iter().chain(&lp.le_rows) {
        if row.len() != nvars || *rhs < T::zero() {
            return Err(Error::InvalidParameters("malformed constraint row".into()));
        }
    }
    let n_le = lp.le_rows.len();
    let n_eq = lp.eq_rows.len();
    let rows = n_le + n_eq;
    // columns: structural | slacks | artificials | rhs
    let slack0 = nvars;
    let art0 = nvars + n_le;
    let cols = art0 + n_eq + 1;
    let rhs_col = cols - 1;
    let mut tab = Tableau { data: vec![T::zero(); rows * cols], rows, cols, basis: vec![0; rows] };

    for (r, (coeffs, rhs)) in lp.le_rows.iter().enumerate() {
        for (c, &v) in coeffs.iter().enumerate() {
            tab.set(r, c, v);
        }
        tab.set(r, slack0 + r, T::one());
        tab.set(r, rhs_col, *rhs);
        tab.basis[r] = slack0 + r;
    }
    for (k, (coeffs, rhs)) in lp.eq_rows.iter().enumerate() {
        let r = n_le + k;
        for (c, &v) in coeffs.iter().enumerate() {
            tab.set(r, c, v);
        }
        tab.set(r, art0 + k, T::one());
        tab.set(r, rhs_col, *rhs);
        tab.basis[r] = art0 + k;
    }

    // phase 1: minimize the sum of artificials
    if n_eq > 0 {
        let mut cost = vec![T::zero(); cols - 1];
        for c in cost.iter_mut().skip(art0) {
            *c = T::one();
        }
        tab.optimize(&cost, cols - 1)?;
        let infeasibility: T = (0..rows)
            .filter(|&r| tab.basis[r] >= art0)
            .map(|r| tab.get(r, rhs_col))
            .sum();
        let scale = T::one().max(lp.eq_rows.iter().map(|(_, b)| b.abs()).fold(T::zero(), T::max));
        if infeasibility > T::lit(1e-9) * scale {
            return Err(Error::Infeasible);
        }
        // drive zero-valued artificials out of the basis where possible
        for r in 0..rows {
            if tab.basis[r] >= art0 {
                if let Some(c) = (0..art0).find(|&c| tab.get(r, c).abs() > T::tolerance()) {
                    tab.pivot(r, c);
                }
            }
        }
    }

    // phase 2 with artificial columns barred from entering
    let mut cost = vec![T::zero(); cols - 1];
    cost[..nvars].copy_from_slice(&lp.objective);
    tab.optimize(&cost, art0)?;

    let mut values = vec![T::zero(); nvars];
    for r in 0..rows {
        if tab.basis[r] < nvars {
            values[tab.basis[r]] = tab.get(r, rhs_col);
        }
    }
    let objective = lp.objective.iter().zip(&values).map(|(&c, &v)| c * v).sum();
    Ok(LpOptimum { objective, values })
}

struct Tableau<T> {
    data: Vec<T>,
    rows: usize,
    cols: usize,
    basis: Vec<usize>,
}

impl<T: Real> Tableau<T> {
    #[inline]
    fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    fn set(&mut self, r: usize, c: usize, v: T) {
        self.data[r * self.cols + c] = v;
    }

    fn pivot(&mut self, pr: usize, pc: usize) {
        let cols = self.cols;
        let p = self.get(pr, pc);
        for c in 0..cols {
            self.data[pr * cols + c] /= p;
        }
        for r in 0..self.rows {
            if r == pr {
                continue;
            }
            let f = self.get(r, pc);
            if f == T::zero() {
                continue;
            }
            for c in 0..cols {
                let v = self.data[pr * cols + c];
                self.data[r * cols + c] -= f * v;
            }
        }
        self.basis[pr] = pc;
    }

    /// Minimizes `cost` over the current basis. Only columns `< allowed` may enter.
    fn optimize(&mut self, cost: &[T], allowed: usize) -> Result<()> {
        let rhs = self.cols - 1;
        let tol = T::tolerance();
        for _ in 0..10_000 {
            // reduced cost of column c: cost_c - sum_r cost_basis(r) * a_rc
            let entering = (0..allowed).find(|&c| {
                if self.basis.contains(&c) {
                    return false;
                }
                let reduced = cost[c] - (0..self.rows).map(|r| cost[self.basis[r]] * self.get(r, c)).sum::<T>();
                reduced < -tol
            });
            let Some(pc) = entering else {
                return Ok(());
            };
            let mut leaving: Option<(usize, T)> = None;
            for r in 0..self.rows {
                let a = self.get(r, pc);
                if a > tol {
                    let ratio = self.get(r, rhs) / a;
                    let better = match leaving {
                        None => true,
                        Some((lr, best)) => ratio < best - tol || (ratio <= best + tol && self.basis[r] < self.basis[lr]),
                    };
                    if better {
                        leaving = Some((r, ratio));
                    }
                }
            }
            let Some((pr, _)) = leaving else {
                return Err(Error::Unbounded);
            };
            self.pivot(pr, pc);
        }
        Err(Error::InvalidParameters("simplex iteration limit reached".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn textbook_problem() {
        // max 2x + 3y + 4z  s.t. 3x + 2y + z <= 10, 2x + 5y + 3z <= 15
        let lp = LinearProgram {
            objective: vec![-2.0f64, -3.0, -4.0],
            eq_rows: vec![],
            le_rows: vec![(vec![3.0, 2.0, 1.0], 10.0), (vec![2.0, 5.0, 3.0], 15.0)],
        };
        let opt = solve_dense(&lp).unwrap();
        assert!((opt.objective + 20.0).abs() < 1e-12);
        assert!((opt.values[2] - 5.0).abs() < 1e-12);
    }

    #[test]
    fn equality_and_infeasibility() {
        let lp = LinearProgram {
            objective: vec![1.0f64, 1.0],
            eq_rows: vec![(vec![1.0, 2.0], 4.0)],
            le_rows: vec![],
        };
        let opt = solve_dense(&lp).unwrap();
        assert!((opt.objective - 2.0).abs() < 1e-12);

        let infeasible = LinearProgram {
            objective: vec![1.0],
            eq_rows: vec![(vec![1.0], 4.0)],
            le_rows: vec![(vec![1.0], 1.0)],
        };
        assert_eq!(solve_dense(&infeasible), Err(Error::Infeasible));
    }

    #[test]
    fn unbounded_is_reported() {
        let lp = LinearProgram { objective: vec![-1.0], eq_rows: vec![], le_rows: vec![] };
        assert_eq!(solve_dense(&lp), Err(Error::Unbounded));
    }
}
