//! Dense LU with partial pivoting for the KKT systems.

use crate::scalar::Real;

/// Solves `A x = b` in place for a row-major `n x n` matrix; returns `None`
/// when a zero pivot or a non-finite value appears.
pub fn lu_solve<T: Real>(mut a: Vec<T>, mut b: Vec<T>, n: usize) -> Option<Vec<T>> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let (piv, pmax) =
            (col..n)
                .map(|r| (r, a[r * n + col].abs()))
                .fold(
                    (col, -T::one()),
                    |best, cur| if cur.1 > best.1 { cur } else { best },
                );
        if !(pmax > T::zero()) || !pmax.is_finite() {
            return None;
        }
        if piv != col {
            for c in 0..n {
                a.swap(col * n + c, piv * n + c);
            }
            b.swap(col, piv);
        }
        let d = a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] / d;
            if f == T::zero() {
                continue;
            }
            a[r * n + col] = T::zero();
            for c in col + 1..n {
                let v = a[col * n + c];
                a[r * n + c] -= f * v;
            }
            let bv = b[col];
            b[r] -= f * bv;
        }
    }
    for r in (0..n).rev() {
        let mut acc = b[r];
        for c in r + 1..n {
            acc -= a[r * n + c] * b[c];
        }
        b[r] = acc / a[r * n + r];
    }
    b.iter().all(|v| v.is_finite()).then_some(b)
}
