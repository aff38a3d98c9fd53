//! Inverse solver: recover the m-body interaction whose canonical ensemble
//! reproduces a prescribed m-particle density.
//!
//! The solver maximizes the concave log-objective
//! `log_f(u) = -C(N,m)·⟨target, u⟩ - log Z(u)` by safeguarded ascent. The
//! objective is invariant under adding a constant to `u` (the gauge freedom
//! of the problem), so iterates and results are pinned to the weighted-mean
//! -zero representative by [`gauge_fix`]. Convergence is declared on the
//! density residual `sup|density(u) - target|`, which is the optimality
//! condition of the problem itself: the gradient is a positive multiple of
//! the density mismatch.
//!
//! Two engines share the loop: the exact engine evaluates densities by full
//! enumeration and supports Newton steps from the subset-count covariance
//! Hessian, while the sampled engine uses Monte Carlo density estimates with
//! a fixed step size and statistical convergence tests for instances beyond
//! the enumeration budget.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::ensemble::{CanonicalSystem, ConfigEvaluator, EnsembleError, Scratch};
use crate::sampler::{run_chain, ChainConfig, SamplerError};
use crate::space::{multiset_masses, multisets, SpaceError, SymmetricTable};

/// Errors from solver configuration and execution.
#[derive(Debug, Error)]
pub enum SolverError {
    /// Convergence tolerance must be positive.
    #[error("solver tolerance must be positive and finite, got {0}")]
    BadTolerance(f64),
    /// Backtracking shrink factor must lie strictly between 0 and 1.
    #[error("line-search shrink factor must lie in (0,1), got {0}")]
    BadShrink(f64),
    /// Sufficient-increase constant must lie strictly between 0 and 1.
    #[error("line-search sufficient-increase constant must lie in (0,1), got {0}")]
    BadSufficientIncrease(f64),
    /// Initial step must be positive and finite.
    #[error("line-search initial step must be positive and finite, got {0}")]
    BadInitialStep(f64),
    /// Closed-form inversion only exists at full order.
    #[error("closed-form inversion needs interaction order equal to the particle count, got m={m}, n={n}")]
    NotFullOrder { m: usize, n: usize },
    /// Underlying ensemble error (budget, validation, arithmetic domains).
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// Underlying table error.
    #[error(transparent)]
    Space(#[from] SpaceError),
    /// Underlying sampler error (sampled engine only).
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

/// Ascent direction strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// Steepest ascent in the weighted inner product, with backtracking.
    GradientAscent,
    /// Ridge-regularized Newton steps on the covariance Hessian.
    Newton,
}

/// Density evaluation engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Engine {
    /// Exact enumeration (requires the instance within the budget).
    Exact,
    /// Metropolis Monte Carlo estimates.
    Sampled,
}

/// Backtracking line-search parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineSearch {
    /// First step length tried (also the fixed step of the sampled engine).
    pub initial_step: f64,
    /// Multiplier applied after each rejected step.
    pub shrink: f64,
    /// Armijo sufficient-increase constant.
    pub sufficient_increase: f64,
    /// Rejections tolerated before declaring stagnation.
    pub max_backtracks: u32,
}

impl Default for LineSearch {
    fn default() -> Self {
        Self {
            initial_step: 1.0,
            shrink: 0.5,
            sufficient_increase: 1e-4,
            max_backtracks: 60,
        }
    }
}

/// Solver configuration.
#[derive(Clone, Debug)]
pub struct SolverConfig {
    /// Direction strategy.
    pub method: Method,
    /// Density evaluation engine.
    pub engine: Engine,
    /// Convergence threshold on `sup|density(u) - target|`.
    pub tol: f64,
    /// Accepted-step budget.
    pub max_iters: usize,
    /// Starting interaction; zero when absent.
    pub initial_u: Option<SymmetricTable>,
    /// Backtracking parameters.
    pub line_search: LineSearch,
    /// Chain schedule for the sampled engine.
    pub chain: ChainConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Newton,
            engine: Engine::Exact,
            tol: 1e-10,
            max_iters: 500,
            initial_u: None,
            line_search: LineSearch::default(),
            chain: ChainConfig::default(),
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<(), SolverError> {
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(SolverError::BadTolerance(self.tol));
        }
        let ls = &self.line_search;
        if !(ls.shrink > 0.0 && ls.shrink < 1.0) {
            return Err(SolverError::BadShrink(ls.shrink));
        }
        if !(ls.sufficient_increase > 0.0 && ls.sufficient_increase < 1.0) {
            return Err(SolverError::BadSufficientIncrease(ls.sufficient_increase));
        }
        if !(ls.initial_step.is_finite() && ls.initial_step > 0.0) {
            return Err(SolverError::BadInitialStep(ls.initial_step));
        }
        Ok(())
    }
}

/// Inversion result and diagnostics.
#[derive(Clone, Debug)]
pub struct SolveReport {
    /// The recovered interaction, gauge-fixed to weighted mean zero.
    pub u: SymmetricTable,
    /// Accepted steps taken.
    pub iterations: usize,
    /// Final density residual. Exact engine: `sup|density(u) - target|`.
    /// Sampled engine: the worst statistical excess
    /// `max(0, |mean - target| - 3·stderr)` over entries, so that zero means
    /// the mismatch is within noise.
    pub final_residual: f64,
    /// Integral of `|density(u) - target|` (exact) or its sampled analogue.
    pub final_l1: f64,
    /// Objective value at every visited iterate (exact engine only; the
    /// sampled engine has no exact objective and leaves this empty).
    /// Nondecreasing by construction: steps are accepted only when they do
    /// not decrease the objective.
    pub log_f_trace: Vec<f64>,
    /// Whether the residual criterion was met.
    pub converged: bool,
    /// Log partition function at the returned `u` (exact engine only).
    pub log_z: Option<f64>,
}

/// Returns the weighted-mean-zero representative of `u`'s gauge class:
/// `u - ⟨1, u⟩/⟨1, 1⟩`.
pub fn gauge_fix(u: &SymmetricTable) -> SymmetricTable {
    let mean = u.weighted_mean();
    u.shift(-mean)
        .expect("centering a finite table keeps it finite")
}

/// Recovers the interaction reproducing `target` by maximizing the concave
/// log-objective.
///
/// Exhausting `max_iters` yields `converged = false` with full diagnostics,
/// not an error. Non-positive or unnormalized targets are input errors: the
/// problem statement requires a strictly positive density and nothing is
/// renormalized silently.
pub fn invert(
    sys: &CanonicalSystem,
    target: &SymmetricTable,
    cfg: &SolverConfig,
) -> Result<SolveReport, SolverError> {
    cfg.validate()?;
    sys.check_target(target)?;
    let initial = match &cfg.initial_u {
        Some(u) => {
            sys.check_interaction(u)?;
            gauge_fix(u)
        }
        None => SymmetricTable::zeros(sys.space().clone(), sys.interaction_order())?,
    };
    match cfg.engine {
        Engine::Exact => invert_exact(sys, target, cfg, initial),
        Engine::Sampled => invert_sampled(sys, target, cfg, initial),
    }
}

fn invert_exact(
    sys: &CanonicalSystem,
    target: &SymmetricTable,
    cfg: &SolverConfig,
    initial: SymmetricTable,
) -> Result<SolveReport, SolverError> {
    let m = sys.interaction_order();
    let c = sys.subset_count();
    let mut u = initial;
    let (mut density, mut log_z) = sys.density_with_log_partition(&u, m)?;
    let mut trace = Vec::new();
    let mut iterations = 0usize;
    let mut converged = false;

    loop {
        let log_f = -c * target.weighted_inner(&u)? - log_z;
        trace.push(log_f);
        let residual = density.sup_distance(target)?;
        if residual <= cfg.tol {
            converged = true;
            break;
        }
        if iterations >= cfg.max_iters {
            break;
        }
        let grad = density.zip_with(target, |a, b| c * (a - b))?;
        let direction = match cfg.method {
            Method::GradientAscent => grad.clone(),
            Method::Newton => newton_direction(sys, &u, &grad)?.unwrap_or_else(|| grad.clone()),
        };
        let slope = grad.weighted_inner(&direction)?;
        if !(slope.is_finite() && slope > 0.0) {
            break;
        }
        match line_search(sys, target, &u, &direction, slope, log_f, &cfg.line_search)? {
            Some(accepted) => {
                u = accepted.u;
                density = accepted.density;
                log_z = accepted.log_z;
                iterations += 1;
            }
            None => break,
        }
    }

    let final_residual = density.sup_distance(target)?;
    let final_l1 = density.l1_weighted_distance(target)?;
    Ok(SolveReport {
        u,
        iterations,
        final_residual,
        final_l1,
        log_f_trace: trace,
        converged,
        log_z: Some(log_z),
    })
}

struct AcceptedStep {
    u: SymmetricTable,
    density: SymmetricTable,
    log_z: f64,
}

/// Backtracking Armijo search along `direction`, evaluating candidates at
/// their gauge-fixed representatives.
///
/// Near the maximum the predicted increase drops below what floating point
/// can resolve; in that regime a step is accepted as long as it does not
/// decrease the objective, which preserves the nondecreasing trace without
/// stalling one backtrack short of convergence.
fn line_search(
    sys: &CanonicalSystem,
    target: &SymmetricTable,
    u: &SymmetricTable,
    direction: &SymmetricTable,
    slope: f64,
    f_current: f64,
    params: &LineSearch,
) -> Result<Option<AcceptedStep>, SolverError> {
    let m = sys.interaction_order();
    let c = sys.subset_count();
    let noise_floor = 16.0 * f64::EPSILON * f_current.abs().max(1.0);
    let mut step = params.initial_step;
    for _ in 0..=params.max_backtracks {
        let candidate = gauge_fix(&u.axpy(step, direction)?);
        let (density, log_z) = sys.density_with_log_partition(&candidate, m)?;
        let f_new = -c * target.weighted_inner(&candidate)? - log_z;
        let required = params.sufficient_increase * step * slope;
        let accepted = if required >= noise_floor {
            f_new >= f_current + required
        } else {
            f_new >= f_current
        };
        if accepted {
            return Ok(Some(AcceptedStep {
                u: candidate,
                density,
                log_z,
            }));
        }
        step *= params.shrink;
    }
    Ok(None)
}

/// Solves the ridge-regularized Newton system on multiset coordinates.
///
/// The Hessian has the all-ones vector in its null space (gauge direction),
/// so the system adds a tiny ridge plus a rank-one term along that direction;
/// the solution is then re-centered. Returns `None` when the factorization
/// fails or produces non-finite values, in which case the caller falls back
/// to the gradient direction.
fn newton_direction(
    sys: &CanonicalSystem,
    u: &SymmetricTable,
    grad: &SymmetricTable,
) -> Result<Option<SymmetricTable>, SolverError> {
    let hessian = sys.hessian_log_f(u)?;
    let dim = hessian.nrows();
    let masses = multiset_masses(sys.space(), sys.interaction_order());
    let g_coord = DVector::from_iterator(
        dim,
        grad.values()
            .iter()
            .zip(&masses)
            .map(|(&g, &mass)| g * mass),
    );
    let mut system = DMatrix::<f64>::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            system[(a, b)] = -hessian[(a, b)];
        }
    }
    let ridge = 1e-10 * system.trace() / dim as f64;
    for a in 0..dim {
        system[(a, a)] += ridge;
        for b in 0..dim {
            system[(a, b)] += ridge;
        }
    }
    let solution = match system.lu().solve(&g_coord) {
        Some(solution) => solution,
        None => return Ok(None),
    };
    let mean = solution.mean();
    let values: Vec<f64> = solution.iter().map(|&v| v - mean).collect();
    match SymmetricTable::new(sys.space().clone(), sys.interaction_order(), values) {
        Ok(table) => Ok(Some(table)),
        Err(_) => Ok(None),
    }
}

fn invert_sampled(
    sys: &CanonicalSystem,
    target: &SymmetricTable,
    cfg: &SolverConfig,
    initial: SymmetricTable,
) -> Result<SolveReport, SolverError> {
    let c = sys.subset_count();
    let step = cfg.line_search.initial_step;
    let mut u = initial;
    let mut iterations = 0usize;
    let mut converged = false;
    let (final_residual, final_l1) = loop {
        let chain = ChainConfig {
            seed: cfg
                .chain
                .seed
                .wrapping_add((iterations as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
            ..cfg.chain.clone()
        };
        let estimate = run_chain(sys, &u, &chain)?;
        let excess = statistical_excess(&estimate.mean, &estimate.stderr, target)?;
        let l1 = estimate.mean.l1_weighted_distance(target)?;
        if excess <= cfg.tol {
            converged = true;
            break (excess, l1);
        }
        if iterations >= cfg.max_iters {
            break (excess, l1);
        }
        let grad = estimate.mean.zip_with(target, |a, b| c * (a - b))?;
        u = gauge_fix(&u.axpy(step, &grad)?);
        iterations += 1;
    };
    Ok(SolveReport {
        u,
        iterations,
        final_residual,
        final_l1,
        log_f_trace: Vec::new(),
        converged,
        log_z: None,
    })
}

/// Worst entrywise mismatch beyond three standard errors:
/// `max over entries of (|mean - target| - 3·stderr)_+`.
fn statistical_excess(
    mean: &SymmetricTable,
    stderr: &SymmetricTable,
    target: &SymmetricTable,
) -> Result<f64, SolverError> {
    let mut worst = 0.0f64;
    for rank in 0..mean.num_entries() {
        let excess =
            (mean.value(rank) - target.value(rank)).abs() - 3.0 * stderr.value(rank);
        worst = worst.max(excess);
    }
    Ok(worst.max(0.0))
}

/// Closed-form full-order inversion: when `m = N` the canonical density
/// determines the potential directly, `u = -log target - W` up to the gauge
/// constant.
pub fn trivial_invert(
    sys: &CanonicalSystem,
    target: &SymmetricTable,
) -> Result<SymmetricTable, SolverError> {
    let n = sys.n_particles();
    if sys.interaction_order() != n {
        return Err(SolverError::NotFullOrder {
            m: sys.interaction_order(),
            n,
        });
    }
    sys.check_target(target)?;
    let space = sys.space().clone();
    let evaluator = ConfigEvaluator::new(&space, n, sys.internal_potential(), None)?;
    let mut scratch = Scratch::default();
    let values: Vec<f64> = multisets(&space, n)
        .zip(target.values())
        .map(|(index, &p)| -p.ln() - evaluator.potential(index.cells(), &mut scratch))
        .collect();
    let table = SymmetricTable::new(space, n, values)?;
    Ok(gauge_fix(&table))
}
