//! Simplex-constrained (penalized) maximum likelihood for the mixture weights.

mod ccp;
mod linalg;
mod objective;
mod pdipm;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use ccp::{ep_mle, EpMleReport};
pub use linalg::lu_solve;
pub use objective::{
    entropy, entropy_linear_term, entropy_taylor, gradient, hessian, mixture_likelihoods,
    neg_loglik, penalized_objective,
};
pub use pdipm::{
    kkt_residual, line_search, max_dual_step, pdipm_solve, Direction, KktResidual, PdipmReport,
};

use crate::error::{Error, Result};
use crate::scalar::{from_usize, lit, Real};

/// Mixture weights on the probability simplex.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightVector<T>(Vec<T>);

impl<T: Real> WeightVector<T> {
    pub fn uniform(s: usize) -> Self {
        Self(vec![T::one() / from_usize::<T>(s); s])
    }

    /// Checks nonnegativity and `|sum - 1| <= tol`.
    pub fn new(values: Vec<T>, tol: f64) -> Result<Self> {
        let sum: T = values.iter().copied().sum();
        if values.iter().any(|&v| !(v >= T::zero())) || (sum - T::one()).abs() > lit(tol) {
            return Err(Error::Config("weights are not on the simplex".into()));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_interior(values: Vec<T>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Entropy penalty weight.
    pub gamma: f64,
    /// Barrier growth factor `mu`.
    pub barrier_factor: f64,
    /// Outer-loop stopping threshold on the objective decrease.
    pub ccp_tol: f64,
    /// Surrogate duality gap tolerance.
    pub gap_tol: f64,
    pub feas_tol: f64,
    pub backtrack: f64,
    pub sufficient_decrease: f64,
    pub max_pdipm_iter: usize,
    pub max_ccp_iter: usize,
    pub kkt_regularization: f64,
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            gamma: 0.2,
            barrier_factor: 20.0,
            ccp_tol: 1e-3,
            gap_tol: 1e-6,
            feas_tol: 1e-6,
            backtrack: 0.5,
            sufficient_decrease: 0.05,
            max_pdipm_iter: 200,
            max_ccp_iter: 50,
            kkt_regularization: 1e-12,
            min_step: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let checks = [
            (self.gamma >= 0.0, "gamma >= 0"),
            (self.barrier_factor > 1.0, "mu > 1"),
            (self.ccp_tol > 0.0, "delta > 0"),
            (self.gap_tol > 0.0, "epsilon > 0"),
            (self.feas_tol > 0.0, "epsilon_feas > 0"),
            (
                self.backtrack > 0.0 && self.backtrack < 1.0,
                "beta in (0, 1)",
            ),
            (
                self.sufficient_decrease > 0.0 && self.sufficient_decrease < 0.5,
                "eta in (0, 0.5)",
            ),
            (self.max_pdipm_iter > 0, "PDIPM iterations > 0"),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(Error::Config(format!("solver config violates {msg}"))),
            None => Ok(()),
        }
    }
}

/// Primal-dual iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct KktState<T> {
    pub alpha: Vec<T>,
    pub lambda: Vec<T>,
    pub nu: T,
    /// Barrier parameter of the last iteration.
    pub t: T,
    /// Surrogate duality gap `alpha' lambda`.
    pub gap: T,
}

impl<T: Real> KktState<T> {
    /// `alpha = 1/S`, `lambda = 10`, `nu = 0`.
    pub fn initial(s: usize) -> Self {
        let alpha = vec![T::one() / from_usize::<T>(s); s];
        let lambda = vec![lit::<T>(10.0); s];
        let gap = lit::<T>(10.0);
        Self {
            alpha,
            lambda,
            nu: T::zero(),
            t: lit::<T>(20.0) * from_usize::<T>(s) / gap,
            gap,
        }
    }
}

/// One solver iteration for the optional CSV trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub objective: f64,
    pub gap: f64,
    pub step: f64,
    pub dual_residual: f64,
}

impl TraceRow {
    fn new<T: Real>(iteration: usize, objective: T, gap: T, step: f64, dual: T) -> Self {
        Self {
            iteration,
            objective: crate::scalar::to_f64(objective),
            gap: crate::scalar::to_f64(gap),
            step,
            dual_residual: crate::scalar::to_f64(dual),
        }
    }
}

pub fn write_trace_csv(trace: &[TraceRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "iteration,objective,gap,step,dual_residual")?;
    for r in trace {
        writeln!(
            out,
            "{},{:.12e},{:.6e},{:.6e},{:.6e}",
            r.iteration, r.objective, r.gap, r.step, r.dual_residual
        )?;
    }
    Ok(())
}
