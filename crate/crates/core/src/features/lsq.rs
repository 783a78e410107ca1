//! Dense complex least squares by Householder QR with column equilibration.

use num_complex::Complex;

use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LsqFailure {
    /// Fewer rows than columns.
    Underdetermined,
    NonFinite,
    /// Diagonal-ratio condition estimate of the equilibrated R factor.
    RankDeficient {
        condition: f64,
    },
}

/// Minimizes `||A g - b||_2` for a row-major `rows x cols` matrix `A`.
pub fn solve_least_squares<T: Real>(
    a: &[Complex<T>],
    rows: usize,
    cols: usize,
    b: &[Complex<T>],
    max_condition: f64,
) -> Result<Vec<Complex<T>>, LsqFailure> {
    assert_eq!(a.len(), rows * cols);
    assert_eq!(b.len(), rows);
    if rows < cols {
        return Err(LsqFailure::Underdetermined);
    }
    if a.iter()
        .chain(b)
        .any(|c| !c.re.is_finite() || !c.im.is_finite())
    {
        return Err(LsqFailure::NonFinite);
    }

    let zero = Complex::new(T::zero(), T::zero());
    let mut scale = vec![T::zero(); cols];
    for j in 0..cols {
        scale[j] = (0..rows)
            .map(|i| a[i * cols + j].norm_sqr())
            .sum::<T>()
            .sqrt();
        if scale[j] == T::zero() {
            return Err(LsqFailure::RankDeficient {
                condition: f64::INFINITY,
            });
        }
    }
    let mut m: Vec<Complex<T>> = a
        .iter()
        .enumerate()
        .map(|(idx, v)| v / scale[idx % cols])
        .collect();
    let mut rhs = b.to_vec();

    for j in 0..cols {
        let norm = (j..rows)
            .map(|i| m[i * cols + j].norm_sqr())
            .sum::<T>()
            .sqrt();
        if norm == T::zero() {
            continue;
        }
        let head = m[j * cols + j];
        let phase = if head.norm() > T::zero() {
            head / head.norm()
        } else {
            Complex::new(T::one(), T::zero())
        };
        let alpha = -phase * norm;
        let mut v: Vec<Complex<T>> = (j..rows).map(|i| m[i * cols + j]).collect();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|c| c.norm_sqr()).sum();
        if vnorm2 == T::zero() {
            continue;
        }
        let two_over = (T::one() + T::one()) / vnorm2;
        for c in j..cols {
            let dot: Complex<T> = v
                .iter()
                .enumerate()
                .map(|(r, vr)| vr.conj() * m[(j + r) * cols + c])
                .fold(zero, |acc, x| acc + x);
            let f = dot * two_over;
            for (r, vr) in v.iter().enumerate() {
                m[(j + r) * cols + c] -= vr * f;
            }
        }
        let dot: Complex<T> = v
            .iter()
            .enumerate()
            .map(|(r, vr)| vr.conj() * rhs[j + r])
            .fold(zero, |acc, x| acc + x);
        let f = dot * two_over;
        for (r, vr) in v.iter().enumerate() {
            rhs[j + r] -= vr * f;
        }
    }

    let diag: Vec<T> = (0..cols).map(|j| m[j * cols + j].norm()).collect();
    let dmax = diag.iter().copied().fold(T::zero(), T::max);
    let dmin = diag.iter().copied().fold(T::infinity(), T::min);
    let condition = if dmin > T::zero() {
        (dmax / dmin).to_f64().unwrap_or(f64::INFINITY)
    } else {
        f64::INFINITY
    };
    if !(condition <= max_condition) {
        return Err(LsqFailure::RankDeficient { condition });
    }

    let mut g = vec![zero; cols];
    for j in (0..cols).rev() {
        let mut acc = rhs[j];
        for c in j + 1..cols {
            acc -= m[j * cols + c] * g[c];
        }
        g[j] = acc / m[j * cols + j];
    }
    for (gj, s) in g.iter_mut().zip(&scale) {
        *gj = *gj / *s;
    }
    if g.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(LsqFailure::NonFinite);
    }
    Ok(g)
}
