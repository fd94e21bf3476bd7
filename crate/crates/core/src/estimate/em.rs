//! Bock–Aitkin EM for marginal maximum likelihood item calibration.
//!
//! The population distribution is the standard normal carried by the
//! quadrature grid and is not re-estimated. Identical response patterns are
//! collapsed before iterating; per-pattern posteriors are computed in
//! parallel and reduced in a fixed order, so results do not depend on the
//! number of worker threads.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::compare::information_criteria;
use crate::error::{Error, Result};
use crate::ingest::ResponseMatrix;
use crate::models::{CalibratedItem, GgumItemParams, GrmItemParams, ItemParams, ModelKind, NrmItemParams};
use crate::numeric::{compensated_sum, logsumexp};

use super::grid::QuadratureGrid;
use super::mstep::{improve_item, ItemCounts};

/// Logistic-to-normal scale factor used to turn cumulative proportions
/// into starting boundaries: `sqrt(1 + 1.702²)`.
const START_SCALE: f64 = 1.974;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Stop once the marginal log-likelihood changes by less than this.
    pub tol_ll: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol_ll: 1e-5,
            max_iter: 500,
        }
    }
}

/// Calibrated item parameters with fit statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: ModelKind,
    pub items: Vec<CalibratedItem>,
    pub loglik: f64,
    pub n_params: usize,
    pub n_persons: usize,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Marginal log-likelihood after each E-step; the last entry belongs
    /// to `items`.
    pub ll_trace: Vec<f64>,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn item_params(&self) -> Vec<ItemParams> {
        self.items.iter().map(|it| it.params.clone()).collect()
    }
}

/// Response patterns in category-index form with their multiplicities.
#[derive(Debug, Clone)]
pub(crate) struct Patterns {
    pub rows: Vec<Vec<Option<usize>>>,
    pub counts: Vec<f64>,
}

impl Patterns {
    pub fn collapse(rows: impl IntoIterator<Item = Vec<Option<usize>>>) -> Self {
        let mut map: BTreeMap<Vec<Option<usize>>, usize> = BTreeMap::new();
        for row in rows {
            *map.entry(row).or_default() += 1;
        }
        let (rows, counts) = map.into_iter().map(|(r, c)| (r, c as f64)).unzip();
        Patterns { rows, counts }
    }
}

/// Maps every person's responses onto the category layout of `items`,
/// matching items to matrix columns by id.
pub fn response_indices(items: &[CalibratedItem], m: &ResponseMatrix) -> Result<Vec<Vec<Option<usize>>>> {
    let cols = items
        .iter()
        .map(|it| m.item_position(&it.id).ok_or_else(|| Error::UnknownColumn(it.id.clone())))
        .collect::<Result<Vec<_>>>()?;
    (0..m.n_persons())
        .map(|p| {
            items
                .iter()
                .zip(&cols)
                .map(|(it, &c)| match m.code(p, c) {
                    None => Ok(None),
                    Some(code) => it.index_of(code).map(Some).ok_or_else(|| Error::CodeNotInLayout {
                        item: it.id.clone(),
                        code,
                    }),
                })
                .collect()
        })
        .collect()
}

fn log_prob_tables(items: &[ItemParams], grid: &QuadratureGrid) -> Vec<Vec<f64>> {
    items
        .iter()
        .map(|it| {
            let m = it.n_categories();
            let mut table = vec![0.0; grid.len() * m];
            for (q, &theta) in grid.nodes().iter().enumerate() {
                it.log_probs_into(theta, &mut table[q * m..(q + 1) * m]);
            }
            table
        })
        .collect()
}

struct EStep {
    loglik: f64,
    /// Per item, row-major `nodes × categories` expected counts.
    counts: Vec<Vec<f64>>,
}

fn e_step(items: &[ItemParams], patterns: &Patterns, grid: &QuadratureGrid, log_w: &[f64]) -> EStep {
    let tables = log_prob_tables(items, grid);
    let n_q = grid.len();

    let per_pattern: Vec<(f64, Vec<f64>)> = patterns
        .rows
        .par_iter()
        .map(|row| {
            let mut lq = log_w.to_vec();
            for ((resp, table), it) in row.iter().zip(&tables).zip(items) {
                if let Some(k) = *resp {
                    let m = it.n_categories();
                    for (q, l) in lq.iter_mut().enumerate() {
                        *l += table[q * m + k];
                    }
                }
            }
            let lse = logsumexp(&lq);
            let post = lq.iter().map(|l| (l - lse).exp()).collect();
            (lse, post)
        })
        .collect();

    let loglik = compensated_sum(per_pattern.iter().zip(&patterns.counts).map(|((l, _), c)| c * l));

    let mut counts: Vec<Vec<f64>> = items.iter().map(|it| vec![0.0; n_q * it.n_categories()]).collect();
    for ((row, (_, post)), &c) in patterns.rows.iter().zip(&per_pattern).zip(&patterns.counts) {
        for (i, resp) in row.iter().enumerate() {
            if let Some(k) = *resp {
                let m = items[i].n_categories();
                for (q, p) in post.iter().enumerate() {
                    counts[i][q * m + k] += c * p;
                }
            }
        }
    }
    EStep { loglik, counts }
}

/// `Σ_n ln Σ_q w_q L_n(θ_q)` for the given items on the given grid.
pub fn marginal_loglik(items: &[CalibratedItem], m: &ResponseMatrix, grid: &QuadratureGrid) -> Result<f64> {
    let rows = response_indices(items, m)?;
    let patterns = Patterns::collapse(rows);
    let params: Vec<ItemParams> = items.iter().map(|it| it.params.clone()).collect();
    Ok(e_step(&params, &patterns, grid, &grid.log_weights()).loglik)
}

fn inverse_normal(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p.clamp(0.005, 0.995))
}

/// Deterministic starting values from observed category counts. `rest` is
/// the mean standardized rest score of the persons in each category.
fn start_values(kind: ModelKind, counts: &[f64], rest: &[f64]) -> ItemParams {
    let m = counts.len();
    let total: f64 = counts.iter().sum();
    match kind {
        ModelKind::Grm => {
            let mut below = 0.0;
            let mut d: Vec<f64> = Vec::with_capacity(m - 1);
            for &n in &counts[..m - 1] {
                below += n;
                let mut b = START_SCALE * inverse_normal(below / total);
                if let Some(&prev) = d.last() {
                    b = b.max(prev + 0.05);
                }
                d.push(b);
            }
            ItemParams::Grm(GrmItemParams::new(1.0, d).expect("increasing by construction"))
        }
        ModelKind::Ggum => {
            let c = (m - 1) as f64;
            let mean_index: f64 = counts.iter().enumerate().map(|(k, n)| k as f64 * n).sum::<f64>() / total;
            let location = START_SCALE * inverse_normal(mean_index / c);
            let tau = (1..m).map(|k| -0.5 * (m - k) as f64).collect();
            ItemParams::Ggum(GgumItemParams::new(1.0, location, tau).expect("finite start"))
        }
        ModelKind::Nrm => {
            let c = counts.iter().map(|n| (n + 0.5).ln()).collect();
            let mean = rest.iter().sum::<f64>() / m as f64;
            let spread = rest.iter().map(|r| (r - mean).abs()).fold(0.0, f64::max);
            let a = if spread > 1e-8 {
                rest.iter().map(|r| (r - mean) / spread).collect()
            } else {
                // no signal from the other items: linear in category position
                (0..m).map(|k| (k as f64 - (m - 1) as f64 / 2.0) / (m - 1) as f64).collect()
            };
            ItemParams::Nrm(NrmItemParams::new(a, c).expect("finite start"))
        }
    }
}

/// Mean standardized rest score per item and category.
fn rest_scores(rows: &[Vec<Option<usize>>], layouts: &[usize]) -> Vec<Vec<f64>> {
    let n_items = layouts.len();
    let mut moments = vec![(0.0, 0.0, 0.0); n_items];
    for row in rows {
        for (i, r) in row.iter().enumerate() {
            if let Some(k) = r {
                let x = *k as f64;
                moments[i].0 += 1.0;
                moments[i].1 += x;
                moments[i].2 += x * x;
            }
        }
    }
    let stats: Vec<(f64, f64)> = moments
        .iter()
        .map(|&(n, s, ss)| {
            let mean = s / n;
            let var = (ss / n - mean * mean).max(0.0);
            (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
        })
        .collect();

    let mut sums: Vec<Vec<(f64, f64)>> = layouts.iter().map(|&m| vec![(0.0, 0.0); m]).collect();
    for row in rows {
        let z: Vec<Option<f64>> = row
            .iter()
            .zip(&stats)
            .map(|(r, (mean, sd))| r.map(|k| (k as f64 - mean) / sd))
            .collect();
        for (i, r) in row.iter().enumerate() {
            let Some(k) = r else { continue };
            let others: Vec<f64> = z.iter().enumerate().filter(|(j, _)| *j != i).filter_map(|(_, v)| *v).collect();
            if others.is_empty() {
                continue;
            }
            let rest = others.iter().sum::<f64>() / others.len() as f64;
            sums[i][*k].0 += rest;
            sums[i][*k].1 += 1.0;
        }
    }
    sums.iter()
        .map(|cats| cats.iter().map(|&(s, n)| if n > 0.0 { s / n } else { 0.0 }).collect())
        .collect()
}

/// Fits `model` to every item of `m` by marginal maximum likelihood.
///
/// Categories nobody chose are dropped from an item's layout (with a
/// warning); an item with fewer than two observed categories is an error.
/// Hitting `max_iter` is not an error: the result comes back with
/// `converged == false`.
pub fn fit_em(m: &ResponseMatrix, model: ModelKind, grid: &QuadratureGrid, options: &FitOptions) -> Result<FitResult> {
    let mut warnings = Vec::new();

    // fitted layout: observed categories only
    let mut layouts: Vec<Vec<i64>> = Vec::with_capacity(m.n_items());
    let mut remaps: Vec<Vec<Option<usize>>> = Vec::with_capacity(m.n_items());
    for (i, item) in m.items().iter().enumerate() {
        let counts = m.category_counts(i);
        let observed: Vec<usize> = (0..counts.len()).filter(|&k| counts[k] > 0).collect();
        if observed.len() < 2 {
            return Err(Error::DegenerateItem {
                item: item.id.clone(),
                reason: format!("{} observed categories; at least two are needed", observed.len()),
            });
        }
        if observed.len() < counts.len() {
            let dropped: Vec<String> = (0..counts.len())
                .filter(|&k| counts[k] == 0)
                .map(|k| item.categories[k].to_string())
                .collect();
            warnings.push(format!(
                "item {}: unobserved categories {} dropped from the fitted layout",
                item.id,
                dropped.join(",")
            ));
        }
        let mut remap = vec![None; counts.len()];
        for (new, &old) in observed.iter().enumerate() {
            remap[old] = Some(new);
        }
        layouts.push(observed.iter().map(|&k| item.categories[k]).collect());
        remaps.push(remap);
    }

    let rows: Vec<Vec<Option<usize>>> = (0..m.n_persons())
        .map(|p| {
            (0..m.n_items())
                .map(|i| m.category_index(p, i).map(|k| remaps[i][k].expect("observed")))
                .collect()
        })
        .collect();

    let n_params: usize = layouts.iter().map(|l| model.item_free_params(l.len())).sum();
    let n_persons = m.n_persons();
    if n_persons < 10 * n_params {
        warnings.push(format!(
            "{n_persons} persons for {n_params} free parameters; fewer than 10 per parameter"
        ));
    }

    let sizes: Vec<usize> = layouts.iter().map(Vec::len).collect();
    let rest = rest_scores(&rows, &sizes);
    let mut params: Vec<ItemParams> = (0..m.n_items())
        .map(|i| {
            let mut counts = vec![0.0; sizes[i]];
            for row in &rows {
                if let Some(k) = row[i] {
                    counts[k] += 1.0;
                }
            }
            start_values(model, &counts, &rest[i])
        })
        .collect();

    let patterns = Patterns::collapse(rows);
    let log_w = grid.log_weights();
    let restarts = [-grid.bound() / 2.0, 0.0, grid.bound() / 2.0];

    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut last = e_step(&params, &patterns, grid, &log_w);
    trace.push(last.loglik);

    while iterations < options.max_iter {
        iterations += 1;
        let item_restarts: &[f64] = if iterations == 1 { &restarts } else { &[] };
        params = params
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let data = ItemCounts {
                    nodes: grid.nodes(),
                    counts: &last.counts[i],
                    m: sizes[i],
                };
                improve_item(p, &data, item_restarts)
            })
            .collect();
        let next = e_step(&params, &patterns, grid, &log_w);
        let change = next.loglik - last.loglik;
        trace.push(next.loglik);
        last = next;
        if change.abs() < options.tol_ll {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("EM did not converge within {} iterations", options.max_iter));
    }

    let items = m
        .items()
        .iter()
        .zip(layouts)
        .zip(params)
        .map(|((item, layout), p)| CalibratedItem::new(item.id.clone(), layout, p))
        .collect::<Result<Vec<_>>>()?;

    let loglik = last.loglik;
    let (aic, bic) = information_criteria(loglik, n_params, n_persons);
    Ok(FitResult {
        model,
        items,
        loglik,
        n_params,
        n_persons,
        aic,
        bic,
        iterations,
        converged,
        ll_trace: trace,
        warnings,
    })
}
