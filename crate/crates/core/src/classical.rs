//! Classical standardized composite scales.
//!
//! `z_score_b` standardizes the summed composite; `z_score_w` standardizes
//! each item first and averages the item z-scores. Both operate on recoded
//! codes and use only the items a person actually answered. Standard
//! deviations use the `n - 1` denominator.

use crate::error::{Error, Result};
use crate::ingest::ResponseMatrix;

/// A standardized score column. `None` marks persons with no observed item.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreColumn {
    pub scores: Vec<Option<f64>>,
}

impl ScoreColumn {
    pub fn scored(&self) -> impl Iterator<Item = f64> + '_ {
        self.scores.iter().flatten().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalScores {
    pub z_score_b: ScoreColumn,
    pub z_score_w: ScoreColumn,
    /// Mean and SD of the composite.
    pub composite_mean: f64,
    pub composite_sd: f64,
    /// Per-item means and SDs over observed responses.
    pub item_means: Vec<f64>,
    pub item_sds: Vec<f64>,
}

/// Sample mean and `n - 1` standard deviation.
fn moments(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((mean, (ss / (n - 1.0)).sqrt()))
}

fn positions(m: &ResponseMatrix, items: &[String]) -> Result<Vec<usize>> {
    if items.is_empty() {
        return Err(Error::InvalidInput("no items selected for the composite".into()));
    }
    items
        .iter()
        .map(|id| m.item_position(id).ok_or_else(|| Error::UnknownColumn(id.clone())))
        .collect()
}

fn composite_b(m: &ResponseMatrix, cols: &[usize]) -> Result<(ScoreColumn, f64, f64)> {
    let composites: Vec<Option<f64>> = (0..m.n_persons())
        .map(|p| {
            let observed: Vec<f64> = cols.iter().filter_map(|&i| m.code(p, i)).map(|c| c as f64).collect();
            (!observed.is_empty()).then(|| observed.iter().sum())
        })
        .collect();
    let present: Vec<f64> = composites.iter().flatten().copied().collect();
    let (mean, sd) = moments(&present)
        .ok_or_else(|| Error::InvalidInput("fewer than two persons with a composite".into()))?;
    if !(sd > 0.0) {
        return Err(Error::ZeroVariance("composite scores are all equal".into()));
    }
    let scores = composites.iter().map(|c| c.map(|x| (x - mean) / sd)).collect();
    Ok((ScoreColumn { scores }, mean, sd))
}

fn composite_w(m: &ResponseMatrix, cols: &[usize]) -> Result<(ScoreColumn, Vec<f64>, Vec<f64>)> {
    let mut means = Vec::with_capacity(cols.len());
    let mut sds = Vec::with_capacity(cols.len());
    for &i in cols {
        let observed: Vec<f64> = (0..m.n_persons()).filter_map(|p| m.code(p, i)).map(|c| c as f64).collect();
        let item = &m.items()[i].id;
        let (mean, sd) = moments(&observed).ok_or_else(|| {
            Error::ZeroVariance(format!("item {item} has fewer than two observed responses"))
        })?;
        if !(sd > 0.0) {
            return Err(Error::ZeroVariance(format!("item {item} has identical responses")));
        }
        means.push(mean);
        sds.push(sd);
    }

    let scores = (0..m.n_persons())
        .map(|p| {
            let z: Vec<f64> = cols
                .iter()
                .enumerate()
                .filter_map(|(j, &i)| m.code(p, i).map(|c| (c as f64 - means[j]) / sds[j]))
                .collect();
            (!z.is_empty()).then(|| z.iter().sum::<f64>() / z.len() as f64)
        })
        .collect();
    Ok((ScoreColumn { scores }, means, sds))
}

/// Standardizes the composite (sum of codes over observed items).
pub fn z_score_b(m: &ResponseMatrix, items: &[String]) -> Result<ScoreColumn> {
    let cols = positions(m, items)?;
    composite_b(m, &cols).map(|(s, _, _)| s)
}

/// Averages per-item z-scores over the items each person answered.
pub fn z_score_w(m: &ResponseMatrix, items: &[String]) -> Result<ScoreColumn> {
    let cols = positions(m, items)?;
    composite_w(m, &cols).map(|(s, _, _)| s)
}

/// Both classical scores plus the moments they were built from.
pub fn classical_scores(m: &ResponseMatrix, items: &[String]) -> Result<ClassicalScores> {
    let cols = positions(m, items)?;
    let (z_score_b, composite_mean, composite_sd) = composite_b(m, &cols)?;
    let (z_score_w, item_means, item_sds) = composite_w(m, &cols)?;
    Ok(ClassicalScores {
        z_score_b,
        z_score_w,
        composite_mean,
        composite_sd,
        item_means,
        item_sds,
    })
}
