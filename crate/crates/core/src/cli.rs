//! Command-line interface: instance generation, forward density
//! computation, inversion, sampling, and verification over the JSON file
//! formats of [`crate::doc`].
//!
//! Exit statuses: 0 for success (including converged solves and fully
//! passing verifications), 1 for input errors, 2 for non-convergence or
//! inconclusive verification, 3 for verification failure.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::doc::{
    write_json, DocError, EngineDoc, ForwardDoc, FullDensityDoc, InstanceDocument,
    MethodDoc, PotentialTermDoc, SampleDoc, SamplerDoc, SolveDoc, SolverDoc, SpaceDoc, SystemDoc,
    TableDoc, TargetDoc, VerifyDoc,
};
use crate::ensemble::{CanonicalSystem, EnsembleError, PotentialSpec};
use crate::sampler::{run_chain, SamplerError};
use crate::solver::{invert, SolverError};
use crate::space::{SpaceError, StateSpace, SymmetricTable};
use crate::verify::{run_suite, Outcome, SuiteConfig, VerifyError};

/// Success.
pub const EXIT_OK: u8 = 0;
/// Malformed inputs: unreadable files, invalid flags, inconsistent documents.
pub const EXIT_INPUT: u8 = 1;
/// The computation ran but did not reach its goal: a solve that exhausted
/// its budget, a trapped chain, an inconclusive verification.
pub const EXIT_NO_CONVERGENCE: u8 = 2;
/// At least one verification check failed.
pub const EXIT_VERIFY_FAILED: u8 = 3;

#[derive(Debug, Error)]
enum CliError {
    #[error("instance has no target density; add a `target` block or run `generate`")]
    MissingTarget,
    #[error(transparent)]
    Doc(#[from] DocError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Space(#[from] SpaceError),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Sampler(SamplerError::ZeroAcceptance { .. }) => EXIT_NO_CONVERGENCE,
            _ => EXIT_INPUT,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "canens",
    version,
    about = "Canonical-ensemble computations on finite weighted state spaces: \
             generate instances, compute densities, invert for potentials, \
             sample, and verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a feasible inverse instance with a known ground-truth potential
    Generate(GenerateArgs),
    /// Compute the m-particle density and log partition function exactly
    Forward(ForwardArgs),
    /// Recover the interaction reproducing the instance's target density
    Invert(InvertArgs),
    /// Estimate the m-particle density by Metropolis Monte Carlo
    Sample(SampleArgs),
    /// Run every applicable property check on the instance
    Verify(VerifyArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Number of cells in the state space
    #[arg(long)]
    cells: usize,
    /// Number of particles N
    #[arg(long)]
    particles: usize,
    /// Interaction order m
    #[arg(long)]
    order: usize,
    /// Seed for every random draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cell weights (comma separated); uniform when omitted
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Range for the ground-truth interaction entries
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    potential_range: Vec<f64>,
    /// Range for the internal potential entries
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true, default_values_t = [-1.0, 1.0])]
    internal_range: Vec<f64>,
    /// Instance output path
    #[arg(long, default_value = "instance.json")]
    out: PathBuf,
    /// Ground-truth potential output path; defaults next to the instance
    #[arg(long)]
    answer: Option<PathBuf>,
    /// Solver method recorded in the instance
    #[arg(long, value_enum, default_value_t = MethodDoc::Newton)]
    method: MethodDoc,
    /// Density engine recorded in the instance
    #[arg(long, value_enum, default_value_t = EngineDoc::Exact)]
    engine: EngineDoc,
    /// Solver tolerance recorded in the instance
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Solver iteration budget recorded in the instance
    #[arg(long, default_value_t = 500)]
    max_iters: usize,
    /// Chain count recorded in the instance
    #[arg(long, default_value_t = 4)]
    chains: usize,
    /// Measurement sweeps recorded in the instance
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    /// Burn-in sweeps recorded in the instance
    #[arg(long, default_value_t = 1_000)]
    burn_in: usize,
}

#[derive(Args)]
struct ForwardArgs {
    /// Instance document
    instance: PathBuf,
    /// Interaction table to evaluate; defaults to the sidecar answer file
    /// when present, else the zero interaction
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Explicit answer-file path
    #[arg(long)]
    answer: Option<PathBuf>,
    /// Output path
    #[arg(long, default_value = "forward.json")]
    out: PathBuf,
}

#[derive(Args)]
struct InvertArgs {
    /// Instance document (must carry a target density)
    instance: PathBuf,
    /// Initial interaction table; zero when omitted
    #[arg(long)]
    init: Option<PathBuf>,
    /// Override the instance's solver method
    #[arg(long, value_enum)]
    method: Option<MethodDoc>,
    /// Override the instance's density engine
    #[arg(long, value_enum)]
    engine: Option<EngineDoc>,
    /// Override the instance's solver tolerance
    #[arg(long)]
    tol: Option<f64>,
    /// Override the instance's iteration budget
    #[arg(long)]
    max_iters: Option<usize>,
    /// Output path
    #[arg(long, default_value = "solve.json")]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Instance document
    instance: PathBuf,
    /// Interaction table to sample under; defaults to the sidecar answer
    /// file when present, else the zero interaction
    #[arg(long)]
    potential: Option<PathBuf>,
    /// Explicit answer-file path
    #[arg(long)]
    answer: Option<PathBuf>,
    /// Override the instance's chain count
    #[arg(long)]
    chains: Option<usize>,
    /// Override the instance's measurement sweeps
    #[arg(long)]
    sweeps: Option<usize>,
    /// Override the instance's burn-in sweeps
    #[arg(long)]
    burn_in: Option<usize>,
    /// Override the instance's chain seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output path
    #[arg(long, default_value = "sample.json")]
    out: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Instance document (needs a target or a full-order density)
    instance: PathBuf,
    /// Override the suite seed (defaults to the instance's solver seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Random interactions thrown at the upper-bound check
    #[arg(long, default_value_t = 20)]
    bound_samples: usize,
    /// Output path
    #[arg(long, default_value = "verify.json")]
    out: PathBuf,
}

/// Parses arguments and runs the selected subcommand; the returned code
/// follows the module-level exit-status contract.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match cli.command {
        Command::Generate(args) => cmd_generate(&args),
        Command::Forward(args) => cmd_forward(&args),
        Command::Invert(args) => cmd_invert(&args),
        Command::Sample(args) => cmd_sample(&args),
        Command::Verify(args) => cmd_verify(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}

/// The answer file that `generate` writes beside an instance path.
pub fn default_answer_path(instance: &Path) -> PathBuf {
    instance.with_extension("answer.json")
}

fn cmd_generate(args: &GenerateArgs) -> Result<u8, CliError> {
    let weights = match &args.weights {
        Some(w) => w.clone(),
        None => vec![1.0; args.cells],
    };
    if weights.len() != args.cells {
        return Err(DocError::CellCount {
            declared: args.cells,
            got: weights.len(),
        }
        .into());
    }
    let space = std::sync::Arc::new(StateSpace::new(weights.clone())?);
    let w_table = SymmetricTable::random(
        space.clone(),
        args.order,
        args.internal_range[0],
        args.internal_range[1],
        args.seed,
    )?;
    let u_star = SymmetricTable::random(
        space.clone(),
        args.order,
        args.potential_range[0],
        args.potential_range[1],
        args.seed.wrapping_add(1),
    )?;
    let sys = CanonicalSystem::new(
        space,
        args.particles,
        args.order,
        PotentialSpec::from_terms([w_table.clone()]),
    )?;
    let target = sys.m_density(&u_star)?;
    let full = sys.marginal_density(&u_star, args.particles)?;

    let doc = InstanceDocument {
        space: SpaceDoc {
            num_cells: args.cells,
            weights,
        },
        system: SystemDoc {
            n: args.particles,
            m: args.order,
        },
        w: vec![PotentialTermDoc::Term {
            order: args.order,
            values: w_table.values().to_vec(),
        }],
        target: Some(TargetDoc {
            order: args.order,
            values: target.values().to_vec(),
        }),
        p: Some(FullDensityDoc {
            values: full.values().to_vec(),
        }),
        solver: SolverDoc {
            method: args.method,
            tol: args.tol,
            max_iters: args.max_iters,
            seed: args.seed,
            engine: args.engine,
        },
        sampler: SamplerDoc {
            num_chains: args.chains,
            sweeps: args.sweeps,
            burn_in: args.burn_in,
            seed: args.seed,
        },
    };
    doc.to_path(&args.out)?;
    let answer_path = args
        .answer
        .clone()
        .unwrap_or_else(|| default_answer_path(&args.out));
    TableDoc::from_table(&u_star).to_path(&answer_path)?;
    println!(
        "wrote {} and {}",
        args.out.display(),
        answer_path.display()
    );
    Ok(EXIT_OK)
}

/// Loads the interaction for forward/sample runs: an explicit table, the
/// answer sidecar when one exists, or zero.
fn resolve_interaction(
    doc: &InstanceDocument,
    sys: &CanonicalSystem,
    instance: &Path,
    potential: &Option<PathBuf>,
    answer: &Option<PathBuf>,
) -> Result<SymmetricTable, CliError> {
    if let Some(path) = potential {
        let table = TableDoc::from_path(path)?.to_table_on(sys.space())?;
        return Ok(table);
    }
    if let Some(path) = answer {
        let table = TableDoc::from_path(path)?.to_table_on(sys.space())?;
        return Ok(table);
    }
    let default_answer = default_answer_path(instance);
    if default_answer.is_file() {
        let table = TableDoc::from_path(&default_answer)?.to_table_on(sys.space())?;
        return Ok(table);
    }
    Ok(SymmetricTable::zeros(
        sys.space().clone(),
        doc.system.m,
    )?)
}

fn cmd_forward(args: &ForwardArgs) -> Result<u8, CliError> {
    let doc = InstanceDocument::from_path(&args.instance)?;
    let sys = doc.build_system()?;
    let u = resolve_interaction(&doc, &sys, &args.instance, &args.potential, &args.answer)?;
    let space = doc.build_space()?;
    let target = doc.target_table(&space)?;
    let full = doc.full_density_table(&space)?;
    let summary = sys.summarize(&u, target.as_ref(), full.as_ref())?;
    let out = ForwardDoc {
        density: TableDoc::from_table(&summary.density),
        log_z: summary.log_z,
        log_f: summary.log_f,
        upper_bound_log: summary.upper_bound_log,
    };
    write_json(&args.out, &out)?;
    match summary.log_f {
        Some(log_f) => println!(
            "log_z = {}, log_f = {log_f}, density written to {}",
            summary.log_z,
            args.out.display()
        ),
        None => println!(
            "log_z = {}, density written to {}",
            summary.log_z,
            args.out.display()
        ),
    }
    Ok(EXIT_OK)
}

fn cmd_invert(args: &InvertArgs) -> Result<u8, CliError> {
    let doc = InstanceDocument::from_path(&args.instance)?;
    let sys = doc.build_system()?;
    let space = doc.build_space()?;
    let target = doc.target_table(&space)?.ok_or(CliError::MissingTarget)?;
    let mut cfg = doc.solver_config();
    if let Some(method) = args.method {
        cfg.method = method.into();
    }
    if let Some(engine) = args.engine {
        cfg.engine = engine.into();
    }
    if let Some(tol) = args.tol {
        cfg.tol = tol;
    }
    if let Some(max_iters) = args.max_iters {
        cfg.max_iters = max_iters;
    }
    if let Some(path) = &args.init {
        cfg.initial_u = Some(TableDoc::from_path(path)?.to_table_on(sys.space())?);
    }
    let report = invert(&sys, &target, &cfg)?;
    write_json(&args.out, &SolveDoc::from_report(&report))?;
    if report.converged {
        println!(
            "converged in {} iterations, residual {}, written to {}",
            report.iterations,
            report.final_residual,
            args.out.display()
        );
        Ok(EXIT_OK)
    } else {
        println!(
            "did not converge within {} iterations, residual {}, written to {}",
            report.iterations,
            report.final_residual,
            args.out.display()
        );
        Ok(EXIT_NO_CONVERGENCE)
    }
}

fn cmd_sample(args: &SampleArgs) -> Result<u8, CliError> {
    let doc = InstanceDocument::from_path(&args.instance)?;
    let sys = doc.build_system()?;
    let u = resolve_interaction(&doc, &sys, &args.instance, &args.potential, &args.answer)?;
    let mut chain = doc.sampler.to_chain_config();
    if let Some(chains) = args.chains {
        chain.num_chains = chains;
    }
    if let Some(sweeps) = args.sweeps {
        chain.sweeps = sweeps;
    }
    if let Some(burn_in) = args.burn_in {
        chain.burn_in = burn_in;
    }
    if let Some(seed) = args.seed {
        chain.seed = seed;
    }
    let estimate = run_chain(&sys, &u, &chain)?;
    let out = SampleDoc {
        mean: TableDoc::from_table(&estimate.mean),
        stderr: TableDoc::from_table(&estimate.stderr),
        acceptance_rate: estimate.acceptance_rate,
    };
    write_json(&args.out, &out)?;
    println!(
        "acceptance rate {:.4}, estimate written to {}",
        estimate.acceptance_rate,
        args.out.display()
    );
    Ok(EXIT_OK)
}

fn cmd_verify(args: &VerifyArgs) -> Result<u8, CliError> {
    let doc = InstanceDocument::from_path(&args.instance)?;
    let sys = doc.build_system()?;
    let space = doc.build_space()?;
    let target = doc.target_table(&space)?;
    let full = doc.full_density_table(&space)?;
    let cfg = SuiteConfig {
        seed: args.seed.unwrap_or(doc.solver.seed),
        solver: doc.solver_config(),
        bound_samples: args.bound_samples,
        ..SuiteConfig::default()
    };
    let reports = run_suite(&sys, target.as_ref(), full.as_ref(), &cfg)?;
    let mut any_fail = false;
    let mut any_inconclusive = false;
    for report in &reports {
        let tag = match report.outcome {
            Outcome::Pass => "pass",
            Outcome::Fail => {
                any_fail = true;
                "FAIL"
            }
            Outcome::Inconclusive => {
                any_inconclusive = true;
                "inconclusive"
            }
        };
        println!("[{tag}] {}: {}", report.name, report.witness);
    }
    let passed = !any_fail && !any_inconclusive;
    write_json(
        &args.out,
        &VerifyDoc {
            passed,
            reports,
        },
    )?;
    if any_fail {
        println!("verification FAILED, report written to {}", args.out.display());
        Ok(EXIT_VERIFY_FAILED)
    } else if any_inconclusive {
        println!(
            "verification inconclusive, report written to {}",
            args.out.display()
        );
        Ok(EXIT_NO_CONVERGENCE)
    } else {
        println!("all checks passed, report written to {}", args.out.display());
        Ok(EXIT_OK)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_path_sits_beside_the_instance() {
        assert_eq!(
            default_answer_path(Path::new("runs/instance.json")),
            Path::new("runs/instance.answer.json")
        );
        assert_eq!(
            default_answer_path(Path::new("bare")),
            Path::new("bare.answer.json")
        );
    }

    #[test]
    fn cli_parses_all_subcommands() {
        for args in [
            vec!["canens", "generate", "--cells", "3", "--particles", "3", "--order", "2"],
            vec!["canens", "forward", "instance.json"],
            vec!["canens", "invert", "instance.json", "--method", "gradient-ascent"],
            vec!["canens", "sample", "instance.json", "--sweeps", "100"],
            vec!["canens", "verify", "instance.json", "--seed", "9"],
        ] {
            Cli::try_parse_from(&args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
        }
    }

    #[test]
    fn cli_rejects_malformed_invocations() {
        for args in [
            vec!["canens"],
            vec!["canens", "generate"],
            vec!["canens", "generate", "--cells", "three"],
            vec!["canens", "invert"],
            vec!["canens", "frobnicate", "instance.json"],
        ] {
            assert!(Cli::try_parse_from(&args).is_err(), "{args:?} parsed");
        }
    }

    #[test]
    fn generate_accepts_negative_ranges() {
        let cli = Cli::try_parse_from([
            "canens",
            "generate",
            "--cells",
            "4",
            "--particles",
            "3",
            "--order",
            "2",
            "--potential-range",
            "-2",
            "0.5",
        ])
        .unwrap();
        match cli.command {
            Command::Generate(args) => {
                assert_eq!(args.potential_range, vec![-2.0, 0.5]);
                assert_eq!(args.internal_range, vec![-1.0, 1.0]);
            }
            _ => panic!("wrong subcommand"),
        }
    }
}
