//! Metropolis Monte Carlo estimation of particle densities for instances too
//! large to enumerate exactly.
//!
//! The chain walks over ordered configurations with single-site proposals:
//! pick a coordinate uniformly, propose a uniformly random *different* cell,
//! and accept with probability `min(1, ratio)`, where the ratio compares the
//! Boltzmann masses `exp(-W-U) · Π w` of the new and old configurations. The
//! energy change is computed incrementally from the coordinate subsets that
//! contain the proposed site, so a move costs `O(C(N-1, k-1))` table lookups
//! per interaction term instead of a full re-evaluation.
//!
//! Density estimates come from per-sweep subset counts; statistical errors
//! use batch means with [`BATCHES_PER_CHAIN`] batches per chain, pooled
//! across independent chains. Everything is deterministic given the seed:
//! chain `i` draws from its own stream of one counter-based generator.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::ensemble::{combinations, CanonicalSystem, EnsembleError};
use crate::space::{multiset_masses, SpaceError, SymmetricTable, TupleRanker};

/// Batches per chain used by the batch-means error estimator.
pub const BATCHES_PER_CHAIN: usize = 20;

/// Errors from chain configuration and execution.
#[derive(Debug, Error)]
pub enum SamplerError {
    /// Sweeps must exceed burn-in so measurement sweeps remain.
    #[error("sweeps ({sweeps}) must exceed burn-in ({burn_in})")]
    BadSchedule { sweeps: usize, burn_in: usize },
    /// Batch means need at least one sweep per batch.
    #[error("need at least {needed} measurement sweeps for {BATCHES_PER_CHAIN} batches, got {got}")]
    TooFewSweeps { needed: usize, got: usize },
    /// At least one chain.
    #[error("chain count must be at least 1")]
    NoChains,
    /// Single-site resampling needs somewhere to move.
    #[error("single-site proposals need at least 2 cells")]
    TooFewCells,
    /// The chain never moved during burn-in; the potential traps the initial
    /// configuration and estimates would be meaningless.
    #[error("no proposal accepted during burn-in (acceptance rate {rate}); the potential traps the chain")]
    ZeroAcceptance { rate: f64 },
    /// Underlying ensemble error.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    /// Underlying table error.
    #[error(transparent)]
    Space(#[from] SpaceError),
}

/// Markov chain schedule and seeding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    /// Independent chains to pool.
    pub num_chains: usize,
    /// Total sweeps per chain (one sweep = N proposals).
    pub sweeps: usize,
    /// Sweeps discarded before measurement.
    pub burn_in: usize,
    /// Master seed; chain `i` uses stream `i` of this seed.
    pub seed: u64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            num_chains: 4,
            sweeps: 10_000,
            burn_in: 1_000,
            seed: 0,
        }
    }
}

impl ChainConfig {
    fn validate(&self) -> Result<usize, SamplerError> {
        if self.num_chains == 0 {
            return Err(SamplerError::NoChains);
        }
        if self.sweeps <= self.burn_in {
            return Err(SamplerError::BadSchedule {
                sweeps: self.sweeps,
                burn_in: self.burn_in,
            });
        }
        let measurement = self.sweeps - self.burn_in;
        if measurement < BATCHES_PER_CHAIN {
            return Err(SamplerError::TooFewSweeps {
                needed: BATCHES_PER_CHAIN,
                got: measurement,
            });
        }
        Ok(measurement)
    }
}

/// A pooled density estimate with per-entry statistical errors.
#[derive(Clone, Debug)]
pub struct DensityEstimate {
    /// Estimated m-particle density (per ordered-tuple values).
    pub mean: SymmetricTable,
    /// Batch-means standard error of each entry.
    pub stderr: SymmetricTable,
    /// Accepted proposals over all proposals, burn-in included.
    pub acceptance_rate: f64,
}

/// A sampled gradient of the log-objective with statistical errors.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    /// Estimated gradient table, `C(N,m) · (density - target)`.
    pub mean: SymmetricTable,
    /// Standard error of each entry.
    pub stderr: SymmetricTable,
    /// Accepted proposals over all proposals, burn-in included.
    pub acceptance_rate: f64,
}

/// Estimates the m-particle density of the canonical distribution at `u` by
/// Metropolis sampling.
pub fn run_chain(
    sys: &CanonicalSystem,
    u: &SymmetricTable,
    cfg: &ChainConfig,
) -> Result<DensityEstimate, SamplerError> {
    let measurement_sweeps = cfg.validate()?;
    sys.check_interaction(u)?;
    if sys.space().num_cells() < 2 {
        return Err(SamplerError::TooFewCells);
    }

    let space = sys.space().clone();
    let m = sys.interaction_order();
    let dim = space.multiset_count(m);
    let subset_count = sys.subset_count();
    let move_terms = MoveTerms::new(sys, u);
    let measure_subsets = combinations(sys.n_particles(), m);
    let measure_ranker = TupleRanker::new(space.num_cells(), m);

    // Balanced batch sizes: the first `remainder` batches get one extra sweep.
    let base = measurement_sweeps / BATCHES_PER_CHAIN;
    let remainder = measurement_sweeps % BATCHES_PER_CHAIN;
    let batch_sweeps: Vec<usize> = (0..BATCHES_PER_CHAIN)
        .map(|b| base + usize::from(b < remainder))
        .collect();

    let mut batch_means: Vec<Vec<f64>> = Vec::with_capacity(cfg.num_chains * BATCHES_PER_CHAIN);
    let mut total_counts = vec![0.0f64; dim];
    let mut accepted_total = 0u64;
    let mut proposed_total = 0u64;

    for chain in 0..cfg.num_chains {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(chain as u64);
        let mut state = ChainState::new(sys);

        let mut accepted_burn_in = 0u64;
        for _ in 0..cfg.burn_in {
            accepted_burn_in += state.sweep(&move_terms, &mut rng);
        }
        if cfg.burn_in > 0 && accepted_burn_in == 0 {
            return Err(SamplerError::ZeroAcceptance { rate: 0.0 });
        }
        accepted_total += accepted_burn_in;
        proposed_total += (cfg.burn_in * sys.n_particles()) as u64;

        let mut gather = Vec::with_capacity(m);
        let mut sort_buf = Vec::with_capacity(m);
        for &sweeps_in_batch in &batch_sweeps {
            let mut counts = vec![0.0f64; dim];
            for _ in 0..sweeps_in_batch {
                accepted_total += state.sweep(&move_terms, &mut rng);
                proposed_total += sys.n_particles() as u64;
                for subset in &measure_subsets {
                    gather.clear();
                    gather.extend(subset.iter().map(|&pos| state.x[pos]));
                    counts[measure_ranker.rank(&gather, &mut sort_buf)] += 1.0;
                }
            }
            let normalizer = sweeps_in_batch as f64 * subset_count;
            for (total, &count) in total_counts.iter_mut().zip(&counts) {
                *total += count;
            }
            batch_means.push(counts.iter().map(|&count| count / normalizer).collect());
        }
    }

    // Pooled mean per multiset in mass scale (probability of the multiset),
    // then batch-means variance of that mean across all batches.
    let total_sweeps = (measurement_sweeps * cfg.num_chains) as f64;
    let mean_mass: Vec<f64> = total_counts
        .iter()
        .map(|&count| count / (total_sweeps * subset_count))
        .collect();
    let num_batches = batch_means.len() as f64;
    let stderr_mass: Vec<f64> = (0..dim)
        .map(|rank| {
            let variance = batch_means
                .iter()
                .map(|batch| {
                    let delta = batch[rank] - mean_mass[rank];
                    delta * delta
                })
                .sum::<f64>()
                / (num_batches - 1.0);
            (variance / num_batches).sqrt()
        })
        .collect();

    // Convert mass-scale entries to per-ordered-tuple density values.
    let masses = multiset_masses(&space, m);
    let mean_values: Vec<f64> = mean_mass.iter().zip(&masses).map(|(&p, &w)| p / w).collect();
    let stderr_values: Vec<f64> = stderr_mass.iter().zip(&masses).map(|(&s, &w)| s / w).collect();

    Ok(DensityEstimate {
        mean: SymmetricTable::new(space.clone(), m, mean_values)?,
        stderr: SymmetricTable::new(space, m, stderr_values)?,
        acceptance_rate: accepted_total as f64 / proposed_total as f64,
    })
}

/// Estimates the gradient of the log-objective at `u` for a target density:
/// `C(N,m) · (sampled density - target)`, with elementwise error propagation.
pub fn estimate_gradient(
    sys: &CanonicalSystem,
    u: &SymmetricTable,
    target: &SymmetricTable,
    cfg: &ChainConfig,
) -> Result<GradientEstimate, SamplerError> {
    sys.check_target(target)?;
    let estimate = run_chain(sys, u, cfg)?;
    let c = sys.subset_count();
    let mean = estimate.mean.zip_with(target, |a, b| c * (a - b))?;
    let stderr = estimate.stderr.scale(c)?;
    Ok(GradientEstimate {
        mean,
        stderr,
        acceptance_rate: estimate.acceptance_rate,
    })
}

/// One interaction term prepared for incremental moves: for every site, the
/// coordinate subsets of the term's order that contain that site.
struct MoveTerm<'a> {
    values: &'a [f64],
    ranker: TupleRanker,
    by_site: Vec<Vec<Vec<usize>>>,
}

struct MoveTerms<'a> {
    terms: Vec<MoveTerm<'a>>,
    log_weights: &'a [f64],
}

impl<'a> MoveTerms<'a> {
    fn new(sys: &'a CanonicalSystem, u: &'a SymmetricTable) -> Self {
        let n = sys.n_particles();
        let num_cells = sys.space().num_cells();
        let mut terms = Vec::new();
        let mut add = |values: &'a [f64], order: usize| {
            let all = combinations(n, order);
            let by_site: Vec<Vec<Vec<usize>>> = (0..n)
                .map(|site| {
                    all.iter()
                        .filter(|subset| subset.contains(&site))
                        .cloned()
                        .collect()
                })
                .collect();
            terms.push(MoveTerm {
                values,
                ranker: TupleRanker::new(num_cells, order),
                by_site,
            });
        };
        for term in sys.internal_potential().terms() {
            add(term.table().values(), term.order());
        }
        if let Some(full) = sys.internal_potential().full_table() {
            add(full.values(), full.order());
        }
        add(u.values(), u.order());
        MoveTerms {
            terms,
            log_weights: sys.space().log_weights(),
        }
    }
}

/// Mutable chain state: the current configuration plus scratch buffers.
struct ChainState {
    x: Vec<usize>,
    num_cells: usize,
    gather: Vec<usize>,
    sort_buf: Vec<usize>,
}

impl ChainState {
    fn new(sys: &CanonicalSystem) -> Self {
        // Deterministic start: every particle in cell 0. Burn-in moves the
        // chain into the bulk of the distribution (or fails loudly if the
        // potential traps this corner).
        Self {
            x: vec![0; sys.n_particles()],
            num_cells: sys.space().num_cells(),
            gather: Vec::new(),
            sort_buf: Vec::new(),
        }
    }

    /// One sweep: `N` single-site proposals. Returns how many were accepted.
    fn sweep(&mut self, terms: &MoveTerms<'_>, rng: &mut ChaCha8Rng) -> u64 {
        let n = self.x.len();
        let mut accepted = 0u64;
        for _ in 0..n {
            let site = rng.random_range(0..n);
            let old_cell = self.x[site];
            let mut new_cell = rng.random_range(0..self.num_cells - 1);
            if new_cell >= old_cell {
                new_cell += 1;
            }
            let mut delta_potential = 0.0f64;
            for term in &terms.terms {
                for subset in &term.by_site[site] {
                    self.gather.clear();
                    self.gather.extend(subset.iter().map(|&pos| self.x[pos]));
                    let old_value = term.values[term.ranker.rank(&self.gather, &mut self.sort_buf)];
                    self.gather.clear();
                    self.gather.extend(subset.iter().map(|&pos| {
                        if pos == site {
                            new_cell
                        } else {
                            self.x[pos]
                        }
                    }));
                    let new_value = term.values[term.ranker.rank(&self.gather, &mut self.sort_buf)];
                    delta_potential += new_value - old_value;
                }
            }
            let log_ratio =
                -delta_potential + terms.log_weights[new_cell] - terms.log_weights[old_cell];
            let accept = log_ratio >= 0.0 || rng.random::<f64>() < log_ratio.exp();
            if accept {
                self.x[site] = new_cell;
                accepted += 1;
            }
        }
        accepted
    }
}
