//! Category probability kernels for the graded response, generalized graded
//! unfolding and nominal response models, and the per-person likelihood
//! built from them.
//!
//! Categories are addressed by zero-based index into an item's ordered
//! category list. Every kernel works in log space.

pub mod ggum;
pub mod grm;
pub mod nrm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use ggum::GgumItemParams;
pub use grm::GrmItemParams;
pub use nrm::NrmItemParams;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Grm,
    Ggum,
    Nrm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Grm, ModelKind::Ggum, ModelKind::Nrm];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Grm => "grm",
            ModelKind::Ggum => "ggum",
            ModelKind::Nrm => "nrm",
        }
    }

    /// Free parameters of one item with `m` categories: GRM `1 + (m-1)`,
    /// GGUM `2 + C` with `C = m-1`, NRM `2 (m-1)` after identification.
    pub fn item_free_params(self, m: usize) -> usize {
        match self {
            ModelKind::Grm => m,
            ModelKind::Ggum => m + 1,
            ModelKind::Nrm => 2 * (m - 1),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "grm" => Ok(ModelKind::Grm),
            "ggum" => Ok(ModelKind::Ggum),
            "nrm" => Ok(ModelKind::Nrm),
            other => Err(Error::InvalidInput(format!("unknown model {other:?}"))),
        }
    }
}

/// Parameters of one item under one of the three models.
#[derive(Debug, Clone, PartialEq)]
pub enum ItemParams {
    Grm(GrmItemParams),
    Ggum(GgumItemParams),
    Nrm(NrmItemParams),
}

impl ItemParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ItemParams::Grm(_) => ModelKind::Grm,
            ItemParams::Ggum(_) => ModelKind::Ggum,
            ItemParams::Nrm(_) => ModelKind::Nrm,
        }
    }

    pub fn n_categories(&self) -> usize {
        match self {
            ItemParams::Grm(p) => p.n_categories(),
            ItemParams::Ggum(p) => p.n_categories(),
            ItemParams::Nrm(p) => p.n_categories(),
        }
    }

    pub fn validate(&self, item: &str) -> Result<()> {
        match self {
            ItemParams::Grm(p) => p.validate(item),
            ItemParams::Ggum(p) => p.validate(item),
            ItemParams::Nrm(p) => p.validate(item),
        }
    }

    /// Writes `ln P(category k | θ)` for every category into `out`.
    pub fn log_probs_into(&self, theta: f64, out: &mut [f64]) {
        match self {
            ItemParams::Grm(p) => p.log_probs_into(theta, out),
            ItemParams::Ggum(p) => p.log_probs_into(theta, out),
            ItemParams::Nrm(p) => p.log_probs_into(theta, out),
        }
    }

    pub fn log_probs(&self, theta: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.n_categories()];
        self.log_probs_into(theta, &mut out);
        out
    }

    pub fn probs(&self, theta: f64) -> CategoryDistribution {
        CategoryDistribution(self.log_probs(theta).into_iter().map(f64::exp).collect())
    }

    /// `∂/∂θ ln P(category k | θ)`.
    pub fn dlog_prob(&self, theta: f64, k: usize) -> f64 {
        match self {
            ItemParams::Grm(p) => p.dlog_prob(theta, k),
            ItemParams::Ggum(p) => p.dlog_prob(theta, k),
            ItemParams::Nrm(p) => p.dlog_prob(theta, k),
        }
    }

    pub fn free_params(&self) -> usize {
        self.kind().item_free_params(self.n_categories())
    }
}

/// Probabilities over an item's categories.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryDistribution(pub Vec<f64>);

impl CategoryDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    /// Category whose cumulative probability first exceeds `u ∈ [0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return k;
            }
        }
        // u landed in the rounding slack above the last partial sum
        self.0.iter().rposition(|&p| p > 0.0).unwrap_or(self.0.len() - 1)
    }
}

/// `P(X ≥ k | θ)` under the graded response model.
pub fn grm_cumulative(p: &GrmItemParams, theta: f64, k: usize) -> f64 {
    p.cumulative(theta, k)
}

pub fn grm_category_probs(p: &GrmItemParams, theta: f64) -> CategoryDistribution {
    ItemParams::Grm(p.clone()).probs(theta)
}

pub fn ggum_category_probs(p: &GgumItemParams, theta: f64) -> CategoryDistribution {
    ItemParams::Ggum(p.clone()).probs(theta)
}

pub fn nrm_category_probs(p: &NrmItemParams, theta: f64) -> CategoryDistribution {
    ItemParams::Nrm(p.clone()).probs(theta)
}

/// An item with its identity, category layout and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibratedItem {
    pub id: String,
    pub categories: Vec<i64>,
    pub params: ItemParams,
}

impl CalibratedItem {
    pub fn new(id: impl Into<String>, categories: Vec<i64>, params: ItemParams) -> Result<Self> {
        let id = id.into();
        if categories.len() != params.n_categories() {
            return Err(Error::params(
                &id,
                format!(
                    "{} category labels for {} modelled categories",
                    categories.len(),
                    params.n_categories()
                ),
            ));
        }
        if categories.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::params(&id, "category labels must be strictly ascending"));
        }
        params.validate(&id)?;
        Ok(CalibratedItem { id, categories, params })
    }

    pub fn index_of(&self, code: i64) -> Option<usize> {
        self.categories.binary_search(&code).ok()
    }
}

fn check_response(params: &ItemParams, i: usize, k: usize) -> Result<()> {
    let m = params.n_categories();
    if k >= m {
        return Err(Error::CategoryOutOfRange {
            item: format!("#{i}"),
            category: k,
            n_categories: m,
        });
    }
    Ok(())
}

/// `Σ_i ln P(U_i | θ)` over observed items; missing items contribute 0.
pub fn person_loglik(items: &[ItemParams], responses: &[Option<usize>], theta: f64) -> Result<f64> {
    if items.len() != responses.len() {
        return Err(Error::InvalidInput(format!(
            "{} responses for {} items",
            responses.len(),
            items.len()
        )));
    }
    let mut total = 0.0;
    let mut buf = Vec::new();
    for (i, (params, resp)) in items.iter().zip(responses).enumerate() {
        if let Some(k) = *resp {
            check_response(params, i, k)?;
            buf.resize(params.n_categories(), 0.0);
            params.log_probs_into(theta, &mut buf);
            total += buf[k];
        }
    }
    Ok(total)
}

/// `∂/∂θ` of [`person_loglik`].
pub fn person_loglik_dtheta(items: &[ItemParams], responses: &[Option<usize>], theta: f64) -> Result<f64> {
    if items.len() != responses.len() {
        return Err(Error::InvalidInput(format!(
            "{} responses for {} items",
            responses.len(),
            items.len()
        )));
    }
    let mut total = 0.0;
    for (i, (params, resp)) in items.iter().zip(responses).enumerate() {
        if let Some(k) = *resp {
            check_response(params, i, k)?;
            total += params.dlog_prob(theta, k);
        }
    }
    Ok(total)
}
