use crate::cgmm::ProbMatrix;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, Real};

/// Mixture likelihoods `G alpha`, one per row.
pub fn mixture_likelihoods<T: Real>(g: &ProbMatrix<T>, alpha: &[T]) -> Result<Vec<T>> {
    assert_eq!(alpha.len(), g.cols());
    (0..g.rows())
        .map(|i| {
            let v: T = g.row(i).iter().zip(alpha).map(|(&a, &b)| a * b).sum();
            if v > T::zero() && v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Infeasible(i))
            }
        })
        .collect()
}

/// Normalized negative log-likelihood `-(1/C) sum_c log(g_c alpha)`.
pub fn neg_loglik<T: Real>(g: &ProbMatrix<T>, alpha: &[T]) -> Result<T> {
    let lik = mixture_likelihoods(g, alpha)?;
    let total: T = lik.iter().map(|v| v.ln()).sum();
    Ok(-total / from_usize::<T>(g.rows()))
}

/// Gradient of [`neg_loglik`], plus an optional constant linear term.
pub fn gradient<T: Real>(g: &ProbMatrix<T>, alpha: &[T], linear: Option<&[T]>) -> Result<Vec<T>> {
    let lik = mixture_likelihoods(g, alpha)?;
    Ok(gradient_from(g, &lik, linear))
}

pub(crate) fn gradient_from<T: Real>(g: &ProbMatrix<T>, lik: &[T], linear: Option<&[T]>) -> Vec<T> {
    let s = g.cols();
    let inv_c = T::one() / from_usize::<T>(g.rows());
    let mut grad = vec![T::zero(); s];
    for (i, &l) in lik.iter().enumerate() {
        let w = inv_c / l;
        for (acc, &gij) in grad.iter_mut().zip(g.row(i)) {
            *acc -= gij * w;
        }
    }
    if let Some(lin) = linear {
        for (acc, &l) in grad.iter_mut().zip(lin) {
            *acc += l;
        }
    }
    grad
}

/// Row-major `S x S` Hessian of [`neg_loglik`]; linear terms do not contribute.
pub fn hessian<T: Real>(g: &ProbMatrix<T>, alpha: &[T]) -> Result<Vec<T>> {
    let lik = mixture_likelihoods(g, alpha)?;
    Ok(hessian_from(g, &lik))
}

pub(crate) fn hessian_from<T: Real>(g: &ProbMatrix<T>, lik: &[T]) -> Vec<T> {
    let s = g.cols();
    let inv_c = T::one() / from_usize::<T>(g.rows());
    let mut h = vec![T::zero(); s * s];
    for (i, &l) in lik.iter().enumerate() {
        let w = inv_c / (l * l);
        let row = g.row(i);
        for a in 0..s {
            let ga = row[a] * w;
            if ga == T::zero() {
                continue;
            }
            for b in a..s {
                h[a * s + b] += ga * row[b];
            }
        }
    }
    for a in 0..s {
        for b in 0..a {
            h[a * s + b] = h[b * s + a];
        }
    }
    h
}

/// Shannon entropy with `0 log 0 = 0`.
pub fn entropy<T: Real>(alpha: &[T]) -> T {
    alpha
        .iter()
        .filter(|&&a| a > T::zero())
        .map(|&a| -a * a.ln())
        .sum()
}

/// First-order expansion of [`entropy`] around `at`, evaluated at `alpha`.
pub fn entropy_taylor<T: Real>(alpha: &[T], at: &[T]) -> Result<T> {
    assert_eq!(alpha.len(), at.len());
    if at.iter().any(|&a| !(a > T::zero())) {
        return Err(Error::Config(
            "expansion point must be strictly positive".into(),
        ));
    }
    let h: T = at.iter().map(|&a| -a * a.ln()).sum();
    let slope: T = alpha
        .iter()
        .zip(at)
        .map(|(&a, &b)| (a - b) * (T::one() + b.ln()))
        .sum();
    Ok(h - slope)
}

/// Linear coefficients `-gamma (1 + log at)` of the linearized entropy penalty.
pub fn entropy_linear_term<T: Real>(at: &[T], gamma: T) -> Vec<T> {
    at.iter().map(|&a| -gamma * (T::one() + a.ln())).collect()
}

/// Penalized objective `neg_loglik + gamma * entropy`.
pub fn penalized_objective<T: Real>(g: &ProbMatrix<T>, alpha: &[T], gamma: T) -> Result<T> {
    Ok(neg_loglik(g, alpha)? + gamma * entropy(alpha))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn simplex(raw: &[f64]) -> Vec<f64> {
        let s: f64 = raw.iter().sum();
        raw.iter().map(|v| v / s).collect()
    }

    #[test]
    fn all_ones_matrix() {
        let g = ProbMatrix::from_rows(vec![1.0f64; 12], 4, 3).unwrap();
        assert!(neg_loglik(&g, &[0.2, 0.3, 0.5]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn identity_matrix() {
        let g = ProbMatrix::from_rows(vec![1.0, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let v = neg_loglik(&g, &[0.5, 0.5]).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(matches!(
            neg_loglik(&g, &[1.0, 0.0]),
            Err(Error::Infeasible(1))
        ));
    }

    #[test]
    fn entropy_values() {
        assert!((entropy(&[0.25f64; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.5, 0.5, 0.0, 0.0]) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn taylor_examples() {
        let at = [0.1f64, 0.2, 0.3, 0.4];
        assert!((entropy_taylor(&at, &at).unwrap() - entropy(&at)).abs() < 1e-15);
        let t = entropy_taylor(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((t - std::f64::consts::LN_2).abs() < 1e-15);
        assert!(entropy_taylor(&[1.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn f32_instantiation() {
        let g = ProbMatrix::from_rows(vec![1.0f32, 0.0, 0.0, 1.0], 2, 2).unwrap();
        let v = neg_loglik(&g, &[0.5f32, 0.5]).unwrap();
        assert!((v - std::f32::consts::LN_2).abs() < 1e-6);
    }

    proptest! {
        #[test]
        fn tangent_overestimates(raw in prop::collection::vec(0.0f64..1.0, 5),
                                 at_raw in prop::collection::vec(0.01f64..1.0, 5)) {
            prop_assume!(raw.iter().sum::<f64>() > 1e-3);
            let a = simplex(&raw);
            let at = simplex(&at_raw);
            prop_assert!(entropy_taylor(&a, &at).unwrap() >= entropy(&a) - 1e-12);
        }

        #[test]
        fn matches_double_loop(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (c, s) = (10, 4);
            let data: Vec<f64> = (0..c * s).map(|_| rng.random_range(0.01..2.0)).collect();
            let alpha = simplex(&(0..s).map(|_| rng.random_range(0.01..1.0)).collect::<Vec<_>>());
            let g = ProbMatrix::from_rows(data.clone(), c, s).unwrap();
            let mut total = 0.0;
            for i in 0..c {
                let mut acc = 0.0;
                for j in 0..s {
                    acc += data[i * s + j] * alpha[j];
                }
                total += acc.ln();
            }
            prop_assert!((neg_loglik(&g, &alpha).unwrap() + total / c as f64).abs() < 1e-12);
        }
    }
}
