//! Dense LU factorization with partial pivoting.

use crate::scalar::Real;

/// Solves `a * x = b` in place for a row-major `n x n` matrix. On success `b`
/// holds `x`. Returns `false` if a pivot vanishes.
pub fn lu_solve_in_place<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> bool {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot_row = col;
        let mut pivot_abs = a[col * n + col].abs();
        for row in col + 1..n {
            let v = a[row * n + col].abs();
            if v > pivot_abs {
                pivot_abs = v;
                pivot_row = row;
            }
        }
        if !(pivot_abs > T::zero()) {
            return false;
        }
        if pivot_row != col {
            for k in 0..n {
                a.swap(col * n + k, pivot_row * n + k);
            }
            b.swap(col, pivot_row);
        }
        let pivot = a[col * n + col];
        for row in col + 1..n {
            let factor = a[row * n + col] / pivot;
            if factor == T::zero() {
                continue;
            }
            a[row * n + col] = T::zero();
            for k in col + 1..n {
                let upper = a[col * n + k];
                a[row * n + k] -= factor * upper;
            }
            let bc = b[col];
            b[row] -= factor * bc;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_with_pivoting() {
        // first pivot is zero, forcing a swap
        let mut a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 2.0, 0.0, 3.0];
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|r| (0..3).map(|c| a[r * 3 + c] * x[c]).sum()).collect();
        assert!(lu_solve_in_place(&mut a, &mut b, 3));
        for (got, want) in b.iter().zip(x) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_is_reported() {
        let mut a = vec![1.0f32, 2.0, 2.0, 4.0];
        let mut b = vec![1.0f32, 2.0];
        assert!(!lu_solve_in_place(&mut a, &mut b, 2));
    }
}
