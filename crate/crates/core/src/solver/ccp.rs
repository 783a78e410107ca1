use super::objective::{entropy_linear_term, penalized_objective};
use super::pdipm::{pdipm_solve, PdipmReport};
use super::{KktState, SolverConfig, TraceRow, WeightVector};
use crate::cgmm::ProbMatrix;
use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct EpMleReport<T> {
    /// Penalized estimate (equal to `basic` when `gamma == 0`).
    pub alpha: WeightVector<T>,
    /// Unpenalized maximum-likelihood weights used as the starting point.
    pub basic: WeightVector<T>,
    /// Penalized objective at each accepted iterate, starting from `basic`.
    pub objective: Vec<T>,
    pub ccp_iterations: usize,
    pub pdipm_iterations: usize,
    pub trace: Vec<TraceRow>,
}

/// Entropy-penalized maximum likelihood by the convex-concave procedure.
///
/// Starts from the unpenalized optimum and repeatedly solves the convex
/// subproblem where the entropy is replaced by its tangent at the previous
/// iterate, warm-starting each interior-point solve from the previous
/// primal-dual state (falling back to the cold start if that solve fails).
/// Stops once the penalized objective decreases by less
/// than `ccp_tol`; an iterate that would increase it is discarded.
pub fn ep_mle<T: Real>(g: &ProbMatrix<T>, cfg: &SolverConfig) -> Result<EpMleReport<T>> {
    cfg.validate()?;
    let basic: PdipmReport<T> = pdipm_solve(g, cfg, None, KktState::initial(g.cols()))?;
    let basic_alpha = WeightVector::from_interior(basic.state.alpha.clone());
    let mut trace = basic.trace.clone();
    let mut pdipm_iterations = basic.iterations;
    if cfg.gamma == 0.0 {
        return Ok(EpMleReport {
            alpha: basic_alpha.clone(),
            basic: basic_alpha,
            objective: vec![penalized_objective(g, &basic.state.alpha, T::zero())?],
            ccp_iterations: 0,
            pdipm_iterations,
            trace,
        });
    }

    let gamma = lit::<T>(cfg.gamma);
    let delta = lit::<T>(cfg.ccp_tol);
    let mut state = basic.state;
    let mut current = penalized_objective(g, &state.alpha, gamma)?;
    let mut objective = vec![current];
    let mut ccp_iterations = 0;
    for m in 1..=cfg.max_ccp_iter {
        let linear = entropy_linear_term(&state.alpha, gamma);
        // A warm start whose gap has collapsed can stall; the cold start always
        // begins well centered.
        let report = pdipm_solve(g, cfg, Some(&linear), state.clone())
            .or_else(|_| pdipm_solve(g, cfg, Some(&linear), KktState::initial(g.cols())))
            .map_err(|e| Error::Ccp {
                iteration: m,
                source: Box::new(e),
            })?;
        pdipm_iterations += report.iterations;
        trace.extend(report.trace);
        let next = penalized_objective(g, &report.state.alpha, gamma)?;
        if next > current {
            break;
        }
        ccp_iterations = m;
        objective.push(next);
        state = report.state;
        let decrease = current - next;
        current = next;
        if decrease < delta {
            break;
        }
    }
    Ok(EpMleReport {
        alpha: WeightVector::from_interior(state.alpha),
        basic: basic_alpha,
        objective,
        ccp_iterations,
        pdipm_iterations,
        trace,
    })
}
