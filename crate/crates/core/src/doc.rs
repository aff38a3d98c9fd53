//! File formats: the self-contained instance document consumed by every
//! subcommand, the table format used for potentials and densities, and the
//! result documents written by forward, invert, sample, and verify runs.
//!
//! Everything is JSON with floats printed in shortest round-trip decimal, so
//! writing and re-reading a document reproduces it bit-exactly and
//! regenerating with the same inputs yields byte-identical files. All value
//! arrays are in multiset rank order (lexicographic over sorted tuples).

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::{CanonicalSystem, EnsembleError, PotentialSpec};
use crate::sampler::ChainConfig;
use crate::solver::{Engine, Method, SolveReport, SolverConfig};
use crate::space::{SpaceError, StateSpace, SymmetricTable};

/// Errors from reading, writing, and validating documents.
#[derive(Debug, Error)]
pub enum DocError {
    /// File could not be read.
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    /// File could not be written.
    #[error("writing {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    /// File exists but does not parse as the expected document.
    #[error("parsing {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    /// Serialization failure (non-finite floats cannot be encoded as JSON).
    #[error("encoding document: {0}")]
    Encode(#[from] serde_json::Error),
    /// The declared cell count disagrees with the weight list.
    #[error("space declares {declared} cells but lists {got} weights")]
    CellCount { declared: usize, got: usize },
    /// A table file's weights disagree with the instance's space.
    #[error("table weights do not match the instance state space")]
    ForeignTable,
    /// Underlying table error.
    #[error(transparent)]
    Space(#[from] SpaceError),
    /// Underlying ensemble error.
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
}

/// Reads any JSON document from a file.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, DocError> {
    let text = fs::read_to_string(path).map_err(|source| DocError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| DocError::Parse {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes any JSON document to a file, pretty-printed with a trailing
/// newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DocError> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|source| DocError::Write {
        path: path.to_path_buf(),
        source,
    })
}

/// State-space block of an instance document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceDoc {
    pub num_cells: usize,
    pub weights: Vec<f64>,
}

/// Particle-count block of an instance document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDoc {
    #[serde(rename = "N")]
    pub n: usize,
    pub m: usize,
}

/// One internal-potential entry: a subset-summed term of some order, or a
/// single table over all `N` coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PotentialTermDoc {
    Term { order: usize, values: Vec<f64> },
    Full { full: Vec<f64> },
}

/// Target density block: the m-particle density to invert for.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetDoc {
    pub order: usize,
    pub values: Vec<f64>,
}

/// Full-order density block (order `N` is implied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FullDensityDoc {
    pub values: Vec<f64>,
}

/// Serialized solver method.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MethodDoc {
    Newton,
    GradientAscent,
}

impl From<MethodDoc> for Method {
    fn from(doc: MethodDoc) -> Self {
        match doc {
            MethodDoc::Newton => Method::Newton,
            MethodDoc::GradientAscent => Method::GradientAscent,
        }
    }
}

/// Serialized density engine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EngineDoc {
    Exact,
    Sampled,
}

impl From<EngineDoc> for Engine {
    fn from(doc: EngineDoc) -> Self {
        match doc {
            EngineDoc::Exact => Engine::Exact,
            EngineDoc::Sampled => Engine::Sampled,
        }
    }
}

/// Solver block of an instance document. The seed drives every random draw
/// tied to the instance (generation and the verification suite).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverDoc {
    pub method: MethodDoc,
    pub tol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub engine: EngineDoc,
}

impl Default for SolverDoc {
    fn default() -> Self {
        let cfg = SolverConfig::default();
        Self {
            method: MethodDoc::Newton,
            tol: cfg.tol,
            max_iters: cfg.max_iters,
            seed: 0,
            engine: EngineDoc::Exact,
        }
    }
}

/// Sampler block of an instance document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerDoc {
    pub num_chains: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for SamplerDoc {
    fn default() -> Self {
        let cfg = ChainConfig::default();
        Self {
            num_chains: cfg.num_chains,
            sweeps: cfg.sweeps,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
        }
    }
}

impl SamplerDoc {
    pub fn to_chain_config(&self) -> ChainConfig {
        ChainConfig {
            num_chains: self.num_chains,
            sweeps: self.sweeps,
            burn_in: self.burn_in,
            seed: self.seed,
        }
    }

    pub fn from_chain_config(cfg: &ChainConfig) -> Self {
        Self {
            num_chains: cfg.num_chains,
            sweeps: cfg.sweeps,
            burn_in: cfg.burn_in,
            seed: cfg.seed,
        }
    }
}

/// One self-contained run description: state space, particle counts,
/// internal potential, optional target and full-order densities, and the
/// solver and sampler settings to use on them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDocument {
    pub space: SpaceDoc,
    pub system: SystemDoc,
    #[serde(rename = "W", default)]
    pub w: Vec<PotentialTermDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetDoc>,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<FullDensityDoc>,
    #[serde(default)]
    pub solver: SolverDoc,
    #[serde(default)]
    pub sampler: SamplerDoc,
}

impl InstanceDocument {
    pub fn from_path(path: &Path) -> Result<Self, DocError> {
        read_json(path)
    }

    pub fn to_path(&self, path: &Path) -> Result<(), DocError> {
        write_json(path, self)
    }

    /// Builds the state space, checking the declared cell count.
    pub fn build_space(&self) -> Result<Arc<StateSpace>, DocError> {
        if self.space.num_cells != self.space.weights.len() {
            return Err(DocError::CellCount {
                declared: self.space.num_cells,
                got: self.space.weights.len(),
            });
        }
        Ok(Arc::new(StateSpace::new(self.space.weights.clone())?))
    }

    /// Builds the canonical system described by the document.
    pub fn build_system(&self) -> Result<CanonicalSystem, DocError> {
        let space = self.build_space()?;
        let mut spec = PotentialSpec::zero();
        for entry in &self.w {
            match entry {
                PotentialTermDoc::Term { order, values } => {
                    let table = SymmetricTable::new(space.clone(), *order, values.clone())?;
                    spec = spec.with_term(table);
                }
                PotentialTermDoc::Full { full } => {
                    let table =
                        SymmetricTable::new(space.clone(), self.system.n, full.clone())?;
                    spec = spec.with_full_table(table);
                }
            }
        }
        Ok(CanonicalSystem::new(
            space,
            self.system.n,
            self.system.m,
            spec,
        )?)
    }

    /// The target density as a table, when present.
    pub fn target_table(&self, space: &Arc<StateSpace>) -> Result<Option<SymmetricTable>, DocError> {
        match &self.target {
            Some(t) => Ok(Some(SymmetricTable::new(
                space.clone(),
                t.order,
                t.values.clone(),
            )?)),
            None => Ok(None),
        }
    }

    /// The full-order density as a table, when present.
    pub fn full_density_table(
        &self,
        space: &Arc<StateSpace>,
    ) -> Result<Option<SymmetricTable>, DocError> {
        match &self.p {
            Some(p) => Ok(Some(SymmetricTable::new(
                space.clone(),
                self.system.n,
                p.values.clone(),
            )?)),
            None => Ok(None),
        }
    }

    /// The solver configuration described by the solver and sampler blocks.
    pub fn solver_config(&self) -> SolverConfig {
        SolverConfig {
            method: self.solver.method.into(),
            engine: self.solver.engine.into(),
            tol: self.solver.tol,
            max_iters: self.solver.max_iters,
            chain: self.sampler.to_chain_config(),
            ..SolverConfig::default()
        }
    }
}

/// A symmetric table with its own space, self-contained in one file:
/// potentials, densities, and sampler outputs all use this shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    pub order: usize,
    pub num_cells: usize,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
}

impl TableDoc {
    pub fn from_table(table: &SymmetricTable) -> Self {
        Self {
            order: table.order(),
            num_cells: table.space().num_cells(),
            weights: table.space().weights().to_vec(),
            values: table.values().to_vec(),
        }
    }

    /// Rebuilds the table on its own freshly constructed space.
    pub fn to_table(&self) -> Result<SymmetricTable, DocError> {
        if self.num_cells != self.weights.len() {
            return Err(DocError::CellCount {
                declared: self.num_cells,
                got: self.weights.len(),
            });
        }
        let space = Arc::new(StateSpace::new(self.weights.clone())?);
        Ok(SymmetricTable::new(space, self.order, self.values.clone())?)
    }

    /// Rebuilds the table on an existing space, requiring identical weights.
    pub fn to_table_on(&self, space: &Arc<StateSpace>) -> Result<SymmetricTable, DocError> {
        if self.weights != space.weights() {
            return Err(DocError::ForeignTable);
        }
        Ok(SymmetricTable::new(
            space.clone(),
            self.order,
            self.values.clone(),
        )?)
    }

    pub fn from_path(path: &Path) -> Result<Self, DocError> {
        read_json(path)
    }

    pub fn to_path(&self, path: &Path) -> Result<(), DocError> {
        write_json(path, self)
    }
}

/// Output of a forward run: the m-particle density with the log partition
/// function, plus objective values when the instance carries the densities
/// they need.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardDoc {
    pub density: TableDoc,
    pub log_z: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_f: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bound_log: Option<f64>,
}

/// Output of an inversion run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveDoc {
    pub u: TableDoc,
    pub iterations: usize,
    pub final_residual: f64,
    pub final_l1: f64,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_z: Option<f64>,
    pub log_f_trace: Vec<f64>,
}

impl SolveDoc {
    pub fn from_report(report: &SolveReport) -> Self {
        Self {
            u: TableDoc::from_table(&report.u),
            iterations: report.iterations,
            final_residual: report.final_residual,
            final_l1: report.final_l1,
            converged: report.converged,
            log_z: report.log_z,
            log_f_trace: report.log_f_trace.clone(),
        }
    }
}

/// Output of a sampling run: batch-means density estimate with one standard
/// error per entry and the pooled acceptance rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleDoc {
    pub mean: TableDoc,
    pub stderr: TableDoc,
    pub acceptance_rate: f64,
}

/// Output of a verification run: every checker report plus the aggregate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyDoc {
    pub passed: bool,
    pub reports: Vec<crate::verify::CheckReport>,
}
