//! Information criteria and the Δ > 10 model-difference rule.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::ModelKind;

/// Differences above this are read as strong evidence that two fits differ.
pub const DEFAULT_DELTA_THRESHOLD: f64 = 10.0;

/// `(AIC, BIC)` with `AIC = 2k − 2LL` and `BIC = k ln n − 2LL`, where `n`
/// counts persons.
pub fn information_criteria(loglik: f64, n_params: usize, n_persons: usize) -> (f64, f64) {
    let k = n_params as f64;
    let aic = 2.0 * k - 2.0 * loglik;
    let bic = if n_params == 0 {
        -2.0 * loglik
    } else {
        k * (n_persons.max(1) as f64).ln() - 2.0 * loglik
    };
    (aic, bic)
}

/// Free parameters for a model over items with the given category counts.
pub fn free_param_count(model: ModelKind, categories: &[usize]) -> usize {
    categories.iter().map(|&m| model.item_free_params(m)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    EquivalentSupport,
    Distinct,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::EquivalentSupport => "equivalent-support",
            Verdict::Distinct => "distinct",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Delta {
    pub delta: f64,
    pub verdict: Verdict,
}

impl Delta {
    /// Δ as reported, to two decimals.
    pub fn reported(&self) -> String {
        format!("{:.2}", self.delta)
    }
}

pub fn delta_verdict(a: f64, b: f64, threshold: f64) -> Delta {
    let delta = (a - b).abs();
    let verdict = if delta > threshold {
        Verdict::Distinct
    } else {
        Verdict::EquivalentSupport
    };
    Delta { delta, verdict }
}

/// One row of a fit-metrics file. Only `model`, `aic` and `bic` are
/// required when reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub model: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loglik: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_params: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_persons: Option<usize>,
    pub aic: f64,
    pub bic: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
}

impl ModelMetrics {
    pub fn from_fit(model: ModelKind, loglik: f64, n_params: usize, n_persons: usize, converged: bool) -> Self {
        let (aic, bic) = information_criteria(loglik, n_params, n_persons);
        ModelMetrics {
            model,
            loglik: Some(loglik),
            n_params: Some(n_params),
            n_persons: Some(n_persons),
            aic,
            bic,
            converged: Some(converged),
        }
    }
}

pub fn write_metrics<W: std::io::Write>(out: W, rows: &[ModelMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "loglik", "n_params", "n_persons", "aic", "bic", "converged"])?;
    for r in rows {
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            r.model.to_string(),
            opt(r.loglik.map(|x| x.to_string())),
            opt(r.n_params.map(|x| x.to_string())),
            opt(r.n_persons.map(|x| x.to_string())),
            r.aic.to_string(),
            r.bic.to_string(),
            opt(r.converged.map(|x| x.to_string())),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<metrics>", e))?;
    Ok(())
}

/// Reads a metrics CSV; lines starting with `#` are ignored.
pub fn read_metrics<R: std::io::Read>(input: R) -> Result<Vec<ModelMetrics>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// A metrics table ranked by AIC with deltas against the best model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelComparison {
    pub rows: Vec<ComparisonRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub aic: f64,
    pub bic: f64,
    pub delta_aic: Delta,
    pub delta_bic: Delta,
}

impl ModelComparison {
    /// Rows are ordered by AIC, best first; ties keep input order.
    pub fn rank(metrics: &[ModelMetrics], threshold: f64) -> Result<Self> {
        if metrics.is_empty() {
            return Err(Error::EmptyResult);
        }
        let best_aic = metrics.iter().map(|m| m.aic).fold(f64::INFINITY, f64::min);
        let best_bic = metrics.iter().map(|m| m.bic).fold(f64::INFINITY, f64::min);
        let mut rows: Vec<ComparisonRow> = metrics
            .iter()
            .map(|m| ComparisonRow {
                model: m.model,
                aic: m.aic,
                bic: m.bic,
                delta_aic: delta_verdict(m.aic, best_aic, threshold),
                delta_bic: delta_verdict(m.bic, best_bic, threshold),
            })
            .collect();
        rows.sort_by(|a, b| a.aic.total_cmp(&b.aic));
        Ok(ModelComparison { rows })
    }

    pub fn best(&self) -> ModelKind {
        self.rows[0].model
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["model", "aic", "bic", "delta_aic", "delta_bic", "verdict"])?;
        for r in &self.rows {
            w.write_record([
                r.model.to_string(),
                format!("{:.2}", r.aic),
                format!("{:.2}", r.bic),
                r.delta_aic.reported(),
                r.delta_bic.reported(),
                r.delta_aic.verdict.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<comparison>", e))?;
        Ok(())
    }
}

/// Per-model differences between two fits of the same models, e.g. one
/// dataset under two coding schemes.
#[derive(Debug, Clone, PartialEq)]
pub struct CodingDelta {
    pub model: ModelKind,
    pub aic_a: f64,
    pub aic_b: f64,
    pub bic_a: f64,
    pub bic_b: f64,
    pub delta_aic: Delta,
    pub delta_bic: Delta,
}

pub fn compare_metric_sets(a: &[ModelMetrics], b: &[ModelMetrics], threshold: f64) -> Result<Vec<CodingDelta>> {
    let set = |rows: &[ModelMetrics]| -> Result<BTreeSet<ModelKind>> {
        let mut s = BTreeSet::new();
        for r in rows {
            if !s.insert(r.model) {
                return Err(Error::ModelSetMismatch(format!("model {} listed twice", r.model)));
            }
        }
        Ok(s)
    };
    let (sa, sb) = (set(a)?, set(b)?);
    if sa != sb {
        let names = |s: &BTreeSet<ModelKind>| s.iter().map(|m| m.as_str()).collect::<Vec<_>>().join(",");
        return Err(Error::ModelSetMismatch(format!("{} vs {}", names(&sa), names(&sb))));
    }
    Ok(a.iter()
        .map(|ra| {
            let rb = b.iter().find(|r| r.model == ra.model).expect("same model set");
            CodingDelta {
                model: ra.model,
                aic_a: ra.aic,
                aic_b: rb.aic,
                bic_a: ra.bic,
                bic_b: rb.bic,
                delta_aic: delta_verdict(ra.aic, rb.aic, threshold),
                delta_bic: delta_verdict(ra.bic, rb.bic, threshold),
            }
        })
        .collect())
}

pub fn write_coding_deltas<W: std::io::Write>(out: W, rows: &[CodingDelta]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "model",
        "aic_a",
        "aic_b",
        "delta_aic",
        "verdict_aic",
        "bic_a",
        "bic_b",
        "delta_bic",
        "verdict_bic",
    ])?;
    for r in rows {
        w.write_record([
            r.model.to_string(),
            format!("{:.2}", r.aic_a),
            format!("{:.2}", r.aic_b),
            r.delta_aic.reported(),
            r.delta_aic.verdict.to_string(),
            format!("{:.2}", r.bic_a),
            format!("{:.2}", r.bic_b),
            r.delta_bic.reported(),
            r.delta_bic.verdict.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<comparison>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn criteria_worked_values() {
        assert_eq!(information_criteria(0.0, 0, 10), (0.0, 0.0));
        let (aic, bic) = information_criteria(-100.0, 5, 100);
        assert_eq!(aic, 210.0);
        assert!((bic - 223.0259).abs() < 1e-4);
    }

    #[test]
    fn free_params_for_mixed_layout() {
        let layout = [4, 4, 4, 6];
        assert_eq!(free_param_count(ModelKind::Grm, &layout), 18);
        assert_eq!(free_param_count(ModelKind::Ggum, &layout), 22);
        assert_eq!(free_param_count(ModelKind::Nrm, &layout), 28);
        assert_eq!(free_param_count(ModelKind::Grm, &[2]), 2);
    }

    #[test]
    fn verdicts_follow_threshold() {
        let d = delta_verdict(14199.43, 14199.49, DEFAULT_DELTA_THRESHOLD);
        assert_eq!(d.reported(), "0.06");
        assert_eq!(d.verdict, Verdict::EquivalentSupport);
        let d = delta_verdict(0.0, 2736.83, DEFAULT_DELTA_THRESHOLD);
        assert_eq!(d.verdict, Verdict::Distinct);
        assert_eq!(delta_verdict(5.0, 5.0, 10.0).delta, 0.0);
        // exactly at the threshold is not distinct
        assert_eq!(delta_verdict(0.0, 10.0, 10.0).verdict, Verdict::EquivalentSupport);
    }

    #[test]
    fn published_metrics_rank_nrm_first() {
        let text = "model,aic,bic\ngrm,14527.03,14622.60\nnrm,14199.43,14348.12\n";
        let rows = read_metrics(text.as_bytes()).unwrap();
        let cmp = ModelComparison::rank(&rows, DEFAULT_DELTA_THRESHOLD).unwrap();
        assert_eq!(cmp.best(), ModelKind::Nrm);
        assert_eq!(cmp.rows[1].model, ModelKind::Grm);
        assert_eq!(cmp.rows[1].delta_aic.reported(), "327.60");
    }

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            ModelMetrics::from_fit(ModelKind::Grm, -7245.5, 18, 1494, true),
            ModelMetrics::from_fit(ModelKind::Nrm, -7071.25, 28, 1494, false),
        ];
        let mut buf = Vec::new();
        write_metrics(&mut buf, &rows).unwrap();
        assert_eq!(read_metrics(buf.as_slice()).unwrap(), rows);
    }

    #[test]
    fn mismatched_model_sets_rejected() {
        let a = vec![ModelMetrics::from_fit(ModelKind::Grm, -1.0, 2, 10, true)];
        let b = vec![ModelMetrics::from_fit(ModelKind::Nrm, -1.0, 2, 10, true)];
        assert!(matches!(compare_metric_sets(&a, &b, 10.0), Err(Error::ModelSetMismatch(_))));
        let same = compare_metric_sets(&a, &a, 10.0).unwrap();
        assert_eq!(same[0].delta_aic.delta, 0.0);
    }

    proptest! {
        #[test]
        fn verdict_is_symmetric(a in -1e5f64..1e5, b in -1e5f64..1e5) {
            prop_assert_eq!(delta_verdict(a, b, 10.0), delta_verdict(b, a, 10.0));
        }

        #[test]
        fn equal_k_gives_equal_rankings(l1 in -1e4f64..-1.0, l2 in -1e4f64..-1.0, k in 0usize..50, n in 1usize..5000) {
            let (a1, b1) = information_criteria(l1, k, n);
            let (a2, b2) = information_criteria(l2, k, n);
            prop_assert_eq!(a1 < a2, b1 < b2);
        }
    }
}
