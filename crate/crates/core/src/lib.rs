//! Interval-level scaling of categorical survey responses.
//!
//! The crate turns recoded questionnaire answers into latent-trait scores
//! (logits) under three item response models: the graded response model,
//! the generalized graded unfolding model and the nominal response model.
//! Item parameters are estimated by marginal maximum likelihood with a
//! Bock–Aitkin EM over a fixed quadrature grid, persons are scored by their
//! posterior mode, and the results can be compared across models (AIC/BIC)
//! and summarized for survey-weighted subgroups.
//!
//! Pipeline: [`ingest`] → [`estimate`] → [`analytics`], with [`classical`]
//! z-score baselines, [`compare`] for model selection, and [`simulate`] for
//! synthetic data with known parameters.

pub mod analytics;
pub mod classical;
pub mod compare;
pub mod error;
pub mod estimate;
pub mod ingest;
pub mod models;
mod numeric;
pub mod simulate;

pub use error::{Error, Result};
pub use estimate::{FitOptions, FitResult, PersonScore, QuadratureGrid};
pub use ingest::{CodingScheme, ColumnSpec, ItemLayout, RawTable, ResponseMatrix};
pub use models::{CalibratedItem, CategoryDistribution, ItemParams, ModelKind};
