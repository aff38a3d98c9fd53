//! Canonical ensembles of identical particles on finite weighted state
//! spaces: exact forward computations, Markov chain sampling, and the inverse
//! problem of recovering the m-body interaction that reproduces a prescribed
//! m-particle density.
//!
//! The forward map takes a symmetric interaction table `u` to the m-particle
//! density of the Gibbs distribution `exp(-W(x) - U(x))` over configurations
//! `x` of `N` identical particles, where `U` sums `u` over all coordinate
//! m-subsets. The inverse map is the interesting one: the log-objective
//! `-C(N,m) <target, u> - log Z(u)` is concave and gauge invariant, its
//! stationary points are exactly the interactions whose density matches the
//! target, and [`solver::invert`] climbs it with damped Newton steps or plain
//! gradient ascent.
//!
//! # Module map
//!
//! - [`space`]: weighted cells, multiset indexing, symmetric tables.
//! - [`ensemble`]: exact partition functions, densities, gradients, Hessians,
//!   marginal reduction, and the objective's upper bound.
//! - [`sampler`]: Metropolis estimation of densities and gradients with
//!   batch-means error bars, for systems too large to enumerate.
//! - [`solver`]: the inverse solver, gauge fixing, and the closed form at
//!   full interaction order.
//! - [`verify`]: self-contained diagnostic checks (concavity, boundedness,
//!   gradient consistency, uniqueness, marginal consistency, minorization).
//! - [`doc`]: JSON instance and result documents shared by the thin CLI.
//! - [`cli`]: the `canens` binary's argument parsing and subcommands.
//!
//! # Running the examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --example forward_density
//! cargo run --example invert_round_trip
//! cargo run --example full_order_closed_form
//! cargo run --example sample_vs_exact
//! cargo run --example verify_suite
//! cargo run --example instance_files
//! ```

pub mod cli;
pub mod doc;
pub mod ensemble;
pub mod sampler;
pub mod solver;
pub mod space;
pub mod verify;

pub use ensemble::{CanonicalSystem, PotentialSpec};
pub use sampler::ChainConfig;
pub use solver::{invert, SolveReport, SolverConfig};
pub use space::{StateSpace, SymmetricTable};
