//! Dense LU solve with partial pivoting, for the slab Newton system.

use crate::error::{Error, Result};
use crate::real::Real;

/// Solves `A x = b` in place for a row-major `n x n` matrix. `b` is
/// overwritten with the solution.
pub fn lu_solve<T: Real>(a: &mut [T], b: &mut [T], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    debug_assert_eq!(b.len(), n);
    for col in 0..n {
        let mut pivot = col;
        let mut best = a[col * n + col].abs();
        for row in (col + 1)..n {
            let v = a[row * n + col].abs();
            if v > best {
                best = v;
                pivot = row;
            }
        }
        if !(best > T::zero()) || !best.is_finite() {
            return Err(Error::SingularJacobian);
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        for row in (col + 1)..n {
            let factor = a[row * n + col] / diag;
            if factor == T::zero() {
                continue;
            }
            a[row * n + col] = T::zero();
            for k in (col + 1)..n {
                let v = a[col * n + k];
                a[row * n + k] = a[row * n + k] - factor * v;
            }
            b[row] = b[row] - factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut sum = b[col];
        for k in (col + 1)..n {
            sum = sum - a[col * n + k] * b[k];
        }
        b[col] = sum / a[col * n + col];
    }
    Ok(())
}
