//! Item calibration by marginal maximum likelihood, person scoring by
//! posterior mode, and the odds reading of the logit scale.

mod em;
mod grid;
mod map;
mod mstep;
mod odds;
mod optim;
pub(crate) mod params_file;

pub use em::{fit_em, marginal_loglik, response_indices, FitOptions, FitResult};
pub use grid::{make_grid, QuadratureGrid};
pub use map::{map_score, score_matrix, MapOptions, PersonScore};
pub use odds::{odds, odds_ratio};
pub use params_file::{export_params, import_params, layout_checksum, FitSummary, ParamsFile, Prior};
