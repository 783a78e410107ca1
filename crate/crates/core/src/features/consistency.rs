use num_complex::Complex;

use super::Rejection;
use crate::scalar::Real;

/// Cosine similarity between `[1, c_fwd]` and `[1, 1 / c_swp]` under the
/// Hermitian inner product.
pub fn consistency_test<T: Real>(c_fwd: Complex<T>, c_swp: Complex<T>) -> Result<T, Rejection> {
    let finite = |c: Complex<T>| c.re.is_finite() && c.im.is_finite();
    if !finite(c_fwd) || !finite(c_swp) {
        return Err(Rejection::NonFinite);
    }
    if c_swp.norm_sqr() == T::zero() {
        return Err(Rejection::ZeroSwap);
    }
    let inv = c_swp.inv();
    if !finite(inv) {
        return Err(Rejection::NonFinite);
    }
    let one = T::one();
    let inner = Complex::new(one, T::zero()) + c_fwd.conj() * inv;
    let norms = ((one + c_fwd.norm_sqr()) * (one + inv.norm_sqr())).sqrt();
    Ok((inner.norm() / norms).min(one).max(T::zero()))
}

/// Maps a DP-RTF into the open unit disk, `m / (1 + |m|)`.
pub fn normalize_feature<T: Real>(m: Complex<T>) -> Complex<T> {
    m / (T::one() + m.norm())
}

/// Averaged forward and reciprocal swapped estimate.
pub fn fused_estimate<T: Real>(c_fwd: Complex<T>, c_swp: Complex<T>) -> Complex<T> {
    (c_fwd + c_swp.inv()) / (T::one() + T::one())
}
