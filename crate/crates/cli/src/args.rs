use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use polyscale_core::ModelKind;

use crate::commands::{CompareOptions, RecodeOptions, ScoreOptions, SimulateOptions, SummarizeOptions};
use crate::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "polyscale", version, about = "Latent-trait scaling of categorical survey responses")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Survey CSV with a header row
    #[arg(long)]
    pub input: PathBuf,
    /// JSON coding scheme (raw code → category, missing codes)
    #[arg(long)]
    pub scheme: Option<PathBuf>,
    /// Item columns, comma separated; defaults to the scheme's items
    #[arg(long, value_delimiter = ',')]
    pub items: Vec<String>,
    /// Person identifier column; row numbers when absent
    #[arg(long)]
    pub id: Option<String>,
    /// Survey weight column
    #[arg(long)]
    pub weight: Option<String>,
    /// Group label columns, comma separated
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<String>,
    /// Items used by the all-missing exclusion rule; defaults to --items
    #[arg(long, value_delimiter = ',')]
    pub required: Vec<String>,
}

#[derive(Debug, Args)]
pub struct EstimationArgs {
    /// Models to fit, comma separated
    #[arg(long, value_delimiter = ',', default_value = "grm,ggum,nrm")]
    pub models: Vec<ModelKind>,
    #[arg(long, default_value_t = 61)]
    pub grid_points: usize,
    #[arg(long, default_value_t = 6.0)]
    pub grid_bound: f64,
    /// EM stops when the log-likelihood moves less than this
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iter: usize,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Output directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Recode raw answers and drop respondents missing every required item
    Recode {
        #[command(flatten)]
        data: DataArgs,
        /// Items to crosstabulate against each group column
        #[arg(long, value_delimiter = ',')]
        crosstab: Vec<String>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Fit item response models and write parameter files plus fit metrics
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        est: EstimationArgs,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score persons by posterior mode under a parameter file
    Score {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        params: PathBuf,
        /// Add the two classical z-score columns
        #[arg(long)]
        classical: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Rank the models of one metrics file, or difference two of them
    Compare {
        #[arg(long)]
        metrics_a: PathBuf,
        #[arg(long)]
        metrics_b: Option<PathBuf>,
        #[arg(long, default_value_t = polyscale_core::compare::DEFAULT_DELTA_THRESHOLD)]
        threshold: f64,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Weighted subgroup means with confidence intervals
    Summarize {
        /// Scores CSV written by `score`
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        weight: Option<String>,
        #[arg(long, value_delimiter = ',', required = true)]
        groups: Vec<String>,
        /// Score columns; defaults to theta and any classical columns present
        #[arg(long, value_delimiter = ',')]
        scores: Vec<String>,
        /// Use the Kish effective sample size in standard errors
        #[arg(long)]
        kish: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Simulate responses from known parameters, optionally refit them
    Simulate {
        /// JSON simulation spec
        #[arg(long)]
        spec: PathBuf,
        /// Refit the generating model and report parameter recovery
        #[arg(long)]
        recovery: bool,
        /// For nominal items, match categories by the best permutation
        #[arg(long)]
        permutations: bool,
        #[command(flatten)]
        est: EstimationArgs,
        #[command(flatten)]
        run: RunArgs,
    },
}

pub(crate) enum Action {
    Recode(RecodeOptions),
    Fit,
    Score(ScoreOptions),
    Compare(CompareOptions),
    Summarize(SummarizeOptions),
    Simulate(SimulateOptions),
}

fn apply_data(cfg: &mut RunConfig, d: DataArgs) {
    cfg.input = Some(d.input);
    cfg.scheme = d.scheme;
    cfg.items = d.items;
    cfg.id = d.id;
    cfg.weight = d.weight;
    cfg.groups = d.groups;
    cfg.required = d.required;
}

fn apply_estimation(cfg: &mut RunConfig, e: EstimationArgs) {
    cfg.models = e.models;
    cfg.grid_points = e.grid_points;
    cfg.grid_bound = e.grid_bound;
    cfg.tol = e.tol;
    cfg.max_iter = e.max_iter;
}

fn apply_run(cfg: &mut RunConfig, r: RunArgs) {
    cfg.out = r.out;
    cfg.seed = r.seed;
    cfg.threads = r.threads;
}

impl Cli {
    pub(crate) fn into_parts(self) -> (RunConfig, Action) {
        let mut cfg = RunConfig::default();
        let action = match self.command {
            Command::Recode { data, crosstab, run } => {
                apply_data(&mut cfg, data);
                apply_run(&mut cfg, run);
                Action::Recode(RecodeOptions { crosstab })
            }
            Command::Fit { data, est, run } => {
                apply_data(&mut cfg, data);
                apply_estimation(&mut cfg, est);
                apply_run(&mut cfg, run);
                Action::Fit
            }
            Command::Score {
                data,
                params,
                classical,
                run,
            } => {
                apply_data(&mut cfg, data);
                apply_run(&mut cfg, run);
                Action::Score(ScoreOptions { params, classical })
            }
            Command::Compare {
                metrics_a,
                metrics_b,
                threshold,
                run,
            } => {
                apply_run(&mut cfg, run);
                Action::Compare(CompareOptions {
                    metrics_a,
                    metrics_b,
                    threshold,
                })
            }
            Command::Summarize {
                input,
                weight,
                groups,
                scores,
                kish,
                run,
            } => {
                cfg.input = Some(input);
                cfg.weight = weight;
                cfg.groups = groups;
                apply_run(&mut cfg, run);
                Action::Summarize(SummarizeOptions { scores, kish })
            }
            Command::Simulate {
                spec,
                recovery,
                permutations,
                est,
                run,
            } => {
                apply_estimation(&mut cfg, est);
                apply_run(&mut cfg, run);
                Action::Simulate(SimulateOptions {
                    spec,
                    recovery,
                    permutations,
                })
            }
        };
        (cfg, action)
    }
}
