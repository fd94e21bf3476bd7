//! Batch pipeline behind the `polyscale` binary:
//! recode → fit → score → compare → summarize, plus simulate.
//!
//! Every command reads its inputs, writes files into `--out` and never
//! touches anything else. CSV outputs open with a `#` comment block naming
//! the tool version, a hash of the run configuration, checksums of every
//! input file and the seed, so rerunning with the same inputs reproduces
//! byte-identical files. JSON outputs (parameter files, schemes) have no
//! comment syntax and carry no provenance block; they are fully determined
//! by their inputs.
//!
//! Exit status: 0 success, 2 configuration error, 3 data error,
//! 4 at least one model failed to converge (all outputs are still written).

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use polyscale_core::ModelKind;

pub mod args;
mod commands;

pub use args::Cli;
pub use commands::{
    cmd_compare, cmd_fit, cmd_recode, cmd_score, cmd_simulate, cmd_summarize, CompareOptions, RecodeOptions,
    ScoreOptions, SimulateOptions, SummarizeOptions,
};

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NOT_CONVERGED: u8 = 4;

/// Seed printed into headers when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Data(#[from] polyscale_core::Error),

    #[error("no convergence for: {}", .0.join(", "))]
    NotConverged(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Output { .. } => EXIT_CONFIG,
            CliError::Data(polyscale_core::Error::Io { .. }) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
            CliError::NotConverged(_) => EXIT_NOT_CONVERGED,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Settings shared by all commands. Fields a command does not use are
/// ignored by it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub input: Option<PathBuf>,
    pub scheme: Option<PathBuf>,
    /// Item columns; empty means every item of the coding scheme.
    pub items: Vec<String>,
    pub id: Option<String>,
    pub weight: Option<String>,
    pub groups: Vec<String>,
    /// Persons missing on all of these are excluded; empty means `items`.
    pub required: Vec<String>,
    pub models: Vec<ModelKind>,
    pub grid_points: usize,
    pub grid_bound: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub seed: Option<u64>,
    // neither changes any result, so both stay out of the config hash
    #[serde(skip)]
    pub threads: Option<usize>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            input: None,
            scheme: None,
            items: Vec::new(),
            id: None,
            weight: None,
            groups: Vec::new(),
            required: Vec::new(),
            models: ModelKind::ALL.to_vec(),
            grid_points: 61,
            grid_bound: 6.0,
            tol: 1e-5,
            max_iter: 500,
            seed: None,
            threads: None,
            out: PathBuf::from("."),
        }
    }
}

impl RunConfig {
    pub(crate) fn input(&self) -> Result<&Path> {
        let p = self.input.as_deref().ok_or_else(|| CliError::Config("--input is required".into()))?;
        existing(p)
    }

    pub(crate) fn scheme(&self) -> Result<&Path> {
        let p = self.scheme.as_deref().ok_or_else(|| CliError::Config("--scheme is required".into()))?;
        existing(p)
    }

    pub(crate) fn check_estimation(&self) -> Result<()> {
        if self.models.is_empty() {
            return Err(CliError::Config("select at least one model with --models".into()));
        }
        if self.grid_points < 11 || !(self.grid_bound.is_finite() && self.grid_bound > 0.0) {
            return Err(CliError::Config(format!(
                "grid needs at least 11 points and a positive bound, got {} and {}",
                self.grid_points, self.grid_bound
            )));
        }
        if !(self.tol > 0.0) || self.max_iter == 0 {
            return Err(CliError::Config("--tol must be positive and --max-iter at least 1".into()));
        }
        Ok(())
    }
}

pub(crate) fn existing(p: &Path) -> Result<&Path> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::Config(format!("{} does not exist or is not a file", p.display())))
    }
}

/// Files written by a command and warnings worth showing the user.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub written: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(0) => Err(CliError::Config("--threads must be at least 1".into())),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// The `#` comment block that opens every CSV output.
pub(crate) struct Provenance {
    lines: Vec<String>,
}

impl Provenance {
    pub(crate) fn new(command: &str, cfg: &RunConfig, options: &impl Serialize, seed: u64) -> Result<Self> {
        let canonical = serde_json::json!({ "command": command, "config": cfg, "options": options });
        let hash = hex::encode(Sha256::digest(canonical.to_string().as_bytes()));
        Ok(Provenance {
            lines: vec![
                format!("polyscale {}", env!("CARGO_PKG_VERSION")),
                format!("command: {command}"),
                format!("config: sha256:{hash}"),
                format!("seed: {seed}"),
            ],
        })
    }

    pub(crate) fn input(&mut self, path: &Path) -> Result<()> {
        let sum = sha256_file(path)?;
        self.lines.push(format!("input: {} sha256:{sum}", path.display()));
        Ok(())
    }

    pub(crate) fn note(&mut self, line: impl Into<String>) {
        self.lines.push(line.into());
    }

    fn render(&self) -> String {
        self.lines.iter().map(|l| format!("# {l}\n")).collect()
    }
}

pub(crate) fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
        path: dir.to_path_buf(),
        source,
    })
}

pub(crate) fn write_file(path: PathBuf, bytes: &[u8], report: &mut Report) -> Result<()> {
    std::fs::write(&path, bytes).map_err(|source| CliError::Output {
        path: path.clone(),
        source,
    })?;
    report.written.push(path);
    Ok(())
}

/// Writes a CSV body produced by `body` under the provenance block.
pub(crate) fn write_csv_output(
    path: PathBuf,
    prov: &Provenance,
    report: &mut Report,
    body: impl FnOnce(&mut Vec<u8>) -> polyscale_core::Result<()>,
) -> Result<()> {
    let mut buf = prov.render().into_bytes();
    body(&mut buf)?;
    write_file(path, &buf, report)
}

/// Dispatches a parsed command line.
pub fn run(cli: Cli) -> Result<Report> {
    let (cfg, cmd) = cli.into_parts();
    let threads = cfg.threads;
    with_threads(threads, move || match cmd {
        args::Action::Recode(o) => cmd_recode(&cfg, &o),
        args::Action::Fit => cmd_fit(&cfg),
        args::Action::Score(o) => cmd_score(&cfg, &o),
        args::Action::Compare(o) => cmd_compare(&cfg, &o),
        args::Action::Summarize(o) => cmd_summarize(&cfg, &o),
        args::Action::Simulate(o) => cmd_simulate(&cfg, &o),
    })?
}
