use super::linalg::lu_solve;
use super::objective::{gradient_from, hessian_from, mixture_likelihoods};
use super::{KktState, SolverConfig, TraceRow};
use crate::cgmm::ProbMatrix;
use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Stacked KKT residual `[dual; centrality; primal]` at barrier parameter `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual<T> {
    pub dual: Vec<T>,
    pub cent: Vec<T>,
    pub primal: T,
}

impl<T: Real> KktResidual<T> {
    pub fn dual_norm(&self) -> T {
        self.dual.iter().map(|v| *v * *v).sum::<T>().sqrt()
    }

    pub fn norm(&self) -> T {
        let sq = |v: &[T]| v.iter().map(|x| *x * *x).sum::<T>();
        (sq(&self.dual) + sq(&self.cent) + self.primal * self.primal).sqrt()
    }
}

/// Evaluates the KKT residual of `min f0(alpha) s.t. alpha >= 0, 1'alpha = 1`.
pub fn kkt_residual<T: Real>(
    g: &ProbMatrix<T>,
    linear: Option<&[T]>,
    alpha: &[T],
    lambda: &[T],
    nu: T,
    t: T,
) -> Result<KktResidual<T>> {
    let lik = mixture_likelihoods(g, alpha)?;
    Ok(residual_from(g, &lik, linear, alpha, lambda, nu, t))
}

fn residual_from<T: Real>(
    g: &ProbMatrix<T>,
    lik: &[T],
    linear: Option<&[T]>,
    alpha: &[T],
    lambda: &[T],
    nu: T,
    t: T,
) -> KktResidual<T> {
    let grad = gradient_from(g, lik, linear);
    let inv_t = T::one() / t;
    KktResidual {
        dual: grad
            .iter()
            .zip(lambda)
            .map(|(&gr, &l)| gr - l + nu)
            .collect(),
        cent: lambda
            .iter()
            .zip(alpha)
            .map(|(&l, &a)| l * a - inv_t)
            .collect(),
        primal: alpha.iter().copied().sum::<T>() - T::one(),
    }
}

/// Newton direction `(d_alpha, d_lambda, d_nu)` of the KKT system.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction<T> {
    pub alpha: Vec<T>,
    pub lambda: Vec<T>,
    pub nu: T,
}

fn newton_direction<T: Real>(
    hess: &[T],
    alpha: &[T],
    lambda: &[T],
    r: &KktResidual<T>,
    regularization: f64,
) -> Result<Direction<T>> {
    let s = alpha.len();
    let n = 2 * s + 1;
    let mut m = vec![T::zero(); n * n];
    for i in 0..s {
        for j in 0..s {
            m[i * n + j] = hess[i * s + j];
        }
        m[i * n + s + i] = -T::one();
        m[i * n + 2 * s] = T::one();
        m[(s + i) * n + i] = lambda[i];
        m[(s + i) * n + s + i] = alpha[i];
        m[2 * s * n + i] = T::one();
    }
    let rhs: Vec<T> = r
        .dual
        .iter()
        .chain(&r.cent)
        .chain(std::iter::once(&r.primal))
        .map(|v| -*v)
        .collect();
    let sol = lu_solve(m.clone(), rhs.clone(), n).or_else(|| {
        let eps = lit::<T>(regularization);
        for i in 0..n {
            m[i * n + i] += eps;
        }
        lu_solve(m, rhs, n)
    });
    let sol = sol.ok_or(Error::SingularKkt)?;
    Ok(Direction {
        alpha: sol[..s].to_vec(),
        lambda: sol[s..2 * s].to_vec(),
        nu: sol[2 * s],
    })
}

/// Largest step in `[0, 1]` keeping `lambda + step * d_lambda >= 0`.
pub fn max_dual_step<T: Real>(lambda: &[T], d_lambda: &[T]) -> T {
    lambda
        .iter()
        .zip(d_lambda)
        .filter(|(_, &d)| d < T::zero())
        .map(|(&l, &d)| -l / d)
        .fold(T::one(), T::min)
}

/// Backtracking step length: start at `0.99` of the dual ratio-test bound
/// and shrink by `beta` until the primal iterate stays positive and the KKT
/// residual norm drops by at least the factor `1 - eta * step`.
pub fn line_search<T: Real>(
    g: &ProbMatrix<T>,
    linear: Option<&[T]>,
    state: &KktState<T>,
    dir: &Direction<T>,
    t: T,
    cfg: &SolverConfig,
) -> Result<T> {
    let r0 = kkt_residual(g, linear, &state.alpha, &state.lambda, state.nu, t)?.norm();
    let beta = lit::<T>(cfg.backtrack);
    let eta = lit::<T>(cfg.sufficient_decrease);
    let min_step = lit::<T>(cfg.min_step);
    let mut step = lit::<T>(0.99) * max_dual_step(&state.lambda, &dir.lambda);
    let mut alpha = vec![T::zero(); state.alpha.len()];
    let mut lambda = vec![T::zero(); state.lambda.len()];
    loop {
        if step < min_step {
            return Err(Error::StalledLineSearch { iteration: 0 });
        }
        for i in 0..alpha.len() {
            alpha[i] = state.alpha[i] + step * dir.alpha[i];
            lambda[i] = state.lambda[i] + step * dir.lambda[i];
        }
        if alpha.iter().all(|&a| a > T::zero()) {
            if let Ok(lik) = mixture_likelihoods(g, &alpha) {
                let nu = state.nu + step * dir.nu;
                let r = residual_from(g, &lik, linear, &alpha, &lambda, nu, t).norm();
                if r <= (T::one() - eta * step) * r0 {
                    return Ok(step);
                }
            }
        }
        step = step * beta;
    }
}

/// Result of one interior-point solve.
#[derive(Debug, Clone, PartialEq)]
pub struct PdipmReport<T> {
    pub state: KktState<T>,
    pub iterations: usize,
    pub dual_residual: T,
    pub primal_residual: T,
    pub trace: Vec<TraceRow>,
}

/// Primal-dual interior-point solve of the simplex-constrained problem
/// `min -(1/C) 1' log(G alpha) + linear' alpha`.
pub fn pdipm_solve<T: Real>(
    g: &ProbMatrix<T>,
    cfg: &SolverConfig,
    linear: Option<&[T]>,
    init: KktState<T>,
) -> Result<PdipmReport<T>> {
    cfg.validate()?;
    let s = g.cols();
    assert_eq!(init.alpha.len(), s);
    if let Some(l) = linear {
        assert_eq!(l.len(), s);
    }
    if init
        .alpha
        .iter()
        .chain(&init.lambda)
        .any(|&v| !(v > T::zero()))
    {
        return Err(Error::Config(
            "initial point must be strictly feasible".into(),
        ));
    }
    let mu = lit::<T>(cfg.barrier_factor);
    let gap_tol = lit::<T>(cfg.gap_tol);
    let feas_tol = lit::<T>(cfg.feas_tol);
    let s_t = from_usize::<T>(s);

    let mut state = init;
    let mut trace = Vec::new();
    let mut best: Option<(T, KktState<T>)> = None;
    for iteration in 0..=cfg.max_pdipm_iter {
        let lik = mixture_likelihoods(g, &state.alpha)?;
        state.gap = state
            .alpha
            .iter()
            .zip(&state.lambda)
            .map(|(&a, &l)| a * l)
            .sum();
        state.t = mu * s_t / state.gap;
        let r = residual_from(
            g,
            &lik,
            linear,
            &state.alpha,
            &state.lambda,
            state.nu,
            state.t,
        );
        let dual = r.dual_norm();
        let primal = r.primal.abs();
        let objective: T = -lik.iter().map(|v| v.ln()).sum::<T>() / from_usize::<T>(g.rows())
            + linear.map_or(T::zero(), |l| {
                l.iter().zip(&state.alpha).map(|(&a, &b)| a * b).sum()
            });

        if state.gap <= gap_tol && primal <= feas_tol && dual <= feas_tol {
            trace.push(TraceRow::new(iteration, objective, state.gap, 0.0, dual));
            return Ok(PdipmReport {
                state,
                iterations: iteration,
                dual_residual: dual,
                primal_residual: primal,
                trace,
            });
        }
        let merit = state.gap + dual + primal;
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            best = Some((merit, state.clone()));
        }
        if iteration == cfg.max_pdipm_iter {
            break;
        }

        let hess = hessian_from(g, &lik);
        let dir = newton_direction(
            &hess,
            &state.alpha,
            &state.lambda,
            &r,
            cfg.kkt_regularization,
        )?;
        let step = line_search(g, linear, &state, &dir, state.t, cfg).map_err(|e| match e {
            Error::StalledLineSearch { .. } => Error::StalledLineSearch { iteration },
            other => other,
        })?;
        trace.push(TraceRow::new(
            iteration,
            objective,
            state.gap,
            to_f64(step),
            dual,
        ));
        for i in 0..s {
            state.alpha[i] += step * dir.alpha[i];
            state.lambda[i] += step * dir.lambda[i];
        }
        state.nu += step * dir.nu;
    }
    let (_, best) = best.expect("at least one iterate");
    let lik = mixture_likelihoods(g, &best.alpha)?;
    let r = residual_from(g, &lik, linear, &best.alpha, &best.lambda, best.nu, best.t);
    Err(Error::MaxIterations {
        iterations: cfg.max_pdipm_iter,
        gap: to_f64(best.gap),
        dual: to_f64(r.dual_norm()),
        best: best.alpha.iter().map(|&a| to_f64(a)).collect(),
    })
}
