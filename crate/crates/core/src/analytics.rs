//! Survey-weighted subgroup summaries, CI-overlap flags and crosstabs.
//!
//! For a group with weights `w` and scores `x`, `W = Σw`,
//! `μ = Σwx / W`, `s² = Σw(x - μ)² / (W - 1)`, `SE = sqrt(s² / W)` and the
//! interval is `μ ± 1.96 SE`. Groups with `W ≤ 1` have no variance
//! estimate and are reported as suppressed. The optional Kish effective
//! size `W² / Σw²` replaces `W` in the SE.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::ResponseMatrix;

pub const Z_95: f64 = 1.96;
pub const OVERALL: &str = "overall";

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SummaryOptions {
    pub kish_effective_n: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub group: String,
    pub n_unweighted: usize,
    pub n_weighted: f64,
    pub mean: f64,
    /// `None` when the group is suppressed.
    pub se: Option<f64>,
    pub ci_lo: Option<f64>,
    pub ci_hi: Option<f64>,
}

impl GroupSummary {
    pub fn suppressed(&self) -> bool {
        self.se.is_none()
    }

    fn ci(&self) -> Option<(f64, f64)> {
        Some((self.ci_lo?, self.ci_hi?))
    }
}

fn summarize(group: String, xs: &[f64], ws: &[f64], opts: SummaryOptions) -> GroupSummary {
    let w_total: f64 = ws.iter().sum();
    let mean = if w_total > 0.0 {
        xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / w_total
    } else {
        f64::NAN
    };
    let size = if opts.kish_effective_n {
        let sq: f64 = ws.iter().map(|w| w * w).sum();
        if sq > 0.0 {
            w_total * w_total / sq
        } else {
            0.0
        }
    } else {
        w_total
    };
    let (se, ci_lo, ci_hi) = if w_total > 1.0 && size > 1.0 {
        let ss: f64 = xs.iter().zip(ws).map(|(x, w)| w * (x - mean).powi(2)).sum();
        let se = (ss / (w_total - 1.0) / size).sqrt();
        (Some(se), Some(mean - Z_95 * se), Some(mean + Z_95 * se))
    } else {
        (None, None, None)
    };
    GroupSummary {
        group,
        n_unweighted: xs.len(),
        n_weighted: w_total,
        mean,
        se,
        ci_lo,
        ci_hi,
    }
}

fn check_lengths(scores: usize, weights: usize, labels: Option<usize>) -> Result<()> {
    if scores != weights || labels.is_some_and(|l| l != scores) {
        return Err(Error::InvalidInput(format!(
            "{scores} scores, {weights} weights and {} labels do not align",
            labels.unwrap_or(scores)
        )));
    }
    Ok(())
}

fn check_weights(weights: &[f64]) -> Result<()> {
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return Err(Error::InvalidInput(format!("weight {w} is not positive")));
    }
    Ok(())
}

/// Summary of every person with a score.
pub fn overall_summary(scores: &[Option<f64>], weights: &[f64], opts: SummaryOptions) -> Result<GroupSummary> {
    check_lengths(scores.len(), weights.len(), None)?;
    check_weights(weights)?;
    let (xs, ws): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .zip(weights)
        .filter_map(|(x, w)| x.map(|x| (x, *w)))
        .unzip();
    if xs.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(summarize(OVERALL.to_string(), &xs, &ws, opts))
}

/// One summary per group label, sorted by label. Persons without a score or
/// a label are left out.
pub fn weighted_summary(
    scores: &[Option<f64>],
    weights: &[f64],
    labels: &[Option<String>],
    opts: SummaryOptions,
) -> Result<Vec<GroupSummary>> {
    check_lengths(scores.len(), weights.len(), Some(labels.len()))?;
    check_weights(weights)?;
    let mut groups: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for ((x, w), l) in scores.iter().zip(weights).zip(labels) {
        if let (Some(x), Some(l)) = (x, l) {
            let g = groups.entry(l.as_str()).or_default();
            g.0.push(*x);
            g.1.push(*w);
        }
    }
    let groups: Vec<_> = groups.into_iter().collect();
    Ok(groups
        .par_iter()
        .map(|(label, (xs, ws))| summarize(label.to_string(), xs, ws, opts))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OverlapFlags {
    /// Per summary: its 95% interval excludes the overall mean.
    pub excludes_overall: Vec<bool>,
    /// Index pairs `(i, j)`, `i < j`, whose intervals are disjoint.
    pub disjoint_pairs: Vec<(usize, usize)>,
}

/// CI-based significance flags. Suppressed groups are never flagged.
pub fn nonoverlap_flags(summaries: &[GroupSummary], overall_mean: f64) -> OverlapFlags {
    let excludes_overall = summaries
        .iter()
        .map(|s| s.ci().is_some_and(|(lo, hi)| overall_mean < lo || overall_mean > hi))
        .collect();
    let mut disjoint_pairs = Vec::new();
    for i in 0..summaries.len() {
        for j in i + 1..summaries.len() {
            if let (Some((a_lo, a_hi)), Some((b_lo, b_hi))) = (summaries[i].ci(), summaries[j].ci()) {
                if a_hi < b_lo || b_hi < a_lo {
                    disjoint_pairs.push((i, j));
                }
            }
        }
    }
    OverlapFlags {
        excludes_overall,
        disjoint_pairs,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Summary rows for one group variable, overall row first. The flag column
/// is `excludes-overall`, `suppressed` or empty.
pub fn write_summary_csv<W: std::io::Write>(
    out: W,
    sections: &[(String, GroupSummary, Vec<GroupSummary>)],
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_var", "group", "n_unweighted", "n_weighted", "mean", "se", "ci_lo", "ci_hi", "flag"])?;
    for (var, overall, groups) in sections {
        let flags = nonoverlap_flags(groups, overall.mean);
        let rows = std::iter::once((overall, false)).chain(groups.iter().zip(flags.excludes_overall));
        for (s, excl) in rows {
            let flag = if s.suppressed() {
                "suppressed"
            } else if excl {
                "excludes-overall"
            } else {
                ""
            };
            w.write_record([
                var.clone(),
                s.group.clone(),
                s.n_unweighted.to_string(),
                s.n_weighted.to_string(),
                s.mean.to_string(),
                fmt_opt(s.se),
                fmt_opt(s.ci_lo),
                fmt_opt(s.ci_hi),
                flag.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

/// Plot-ready rows: one per group per score variant.
pub fn write_plot_data<W: std::io::Write>(out: W, rows: &[(String, String, GroupSummary)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group_var", "score", "group", "mean", "ci_lo", "ci_hi"])?;
    for (var, score, s) in rows {
        w.write_record([
            var.clone(),
            score.clone(),
            s.group.clone(),
            s.mean.to_string(),
            fmt_opt(s.ci_lo),
            fmt_opt(s.ci_hi),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<plot data>", e))?;
    Ok(())
}

/// Unweighted person counts by group label and item category.
#[derive(Debug, Clone, PartialEq)]
pub struct Crosstab {
    pub group_var: String,
    pub item: String,
    pub categories: Vec<i64>,
    pub rows: Vec<CrosstabRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrosstabRow {
    /// `None` collects persons without a label.
    pub group: Option<String>,
    pub counts: Vec<usize>,
    pub missing: usize,
}

impl CrosstabRow {
    pub fn total(&self) -> usize {
        self.counts.iter().sum::<usize>() + self.missing
    }
}

impl Crosstab {
    pub fn total(&self) -> usize {
        self.rows.iter().map(CrosstabRow::total).sum()
    }

    pub fn count(&self, group: &str, category: i64) -> Option<usize> {
        let k = self.categories.iter().position(|&c| c == category)?;
        self.rows.iter().find(|r| r.group.as_deref() == Some(group)).map(|r| r.counts[k])
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.group_var.clone()];
        header.extend(self.categories.iter().map(|c| format!("{}={c}", self.item)));
        header.push("missing".into());
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![r.group.clone().unwrap_or_else(|| "(missing)".into())];
            rec.extend(r.counts.iter().map(usize::to_string));
            rec.push(r.missing.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<crosstab>", e))?;
        Ok(())
    }
}

/// Counts per (group, category) with a missing-response column. `levels`
/// are always listed, even when nobody holds them; other labels found in
/// the data follow in sorted order, and unlabelled persons come last.
pub fn crosstab(m: &ResponseMatrix, group_var: &str, item: &str, levels: &[String]) -> Result<Crosstab> {
    let group = m.group(group_var).ok_or_else(|| Error::UnknownColumn(group_var.to_string()))?;
    let col = m.item_position(item).ok_or_else(|| Error::UnknownColumn(item.to_string()))?;
    let categories = m.items()[col].categories.clone();
    let ncat = categories.len();

    let mut table: BTreeMap<Option<&str>, (Vec<usize>, usize)> = BTreeMap::new();
    for (p, label) in group.labels.iter().enumerate() {
        let row = table.entry(label.as_deref()).or_insert_with(|| (vec![0; ncat], 0));
        match m.category_index(p, col) {
            Some(k) => row.0[k] += 1,
            None => row.1 += 1,
        }
    }

    let mut rows: Vec<CrosstabRow> = Vec::new();
    for l in levels {
        let (counts, missing) = table.remove(&Some(l.as_str())).unwrap_or_else(|| (vec![0; ncat], 0));
        rows.push(CrosstabRow {
            group: Some(l.clone()),
            counts,
            missing,
        });
    }
    let unlabelled = table.remove(&None);
    for (label, (counts, missing)) in table {
        rows.push(CrosstabRow {
            group: label.map(str::to_string),
            counts,
            missing,
        });
    }
    if let Some((counts, missing)) = unlabelled {
        rows.push(CrosstabRow {
            group: None,
            counts,
            missing,
        });
    }
    Ok(Crosstab {
        group_var: group_var.to_string(),
        item: item.to_string(),
        categories,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{GroupColumn, ItemLayout};
    use proptest::prelude::*;

    fn some(xs: &[f64]) -> Vec<Option<f64>> {
        xs.iter().copied().map(Some).collect()
    }

    #[test]
    fn worked_weighted_example() {
        let s = overall_summary(&some(&[1.0, 2.0, 3.0]), &[1.0, 1.0, 2.0], SummaryOptions::default()).unwrap();
        assert!((s.mean - 2.25).abs() < 1e-12);
        // Σw(x-μ)² = 2.75, s² = 2.75/3, SE = sqrt(s²/4)
        let se = (2.75f64 / 3.0 / 4.0).sqrt();
        assert!((s.se.unwrap() - se).abs() < 1e-15);
        assert!((s.se.unwrap() - 0.47871).abs() < 1e-5);
        assert!((s.ci_lo.unwrap() - 1.3117).abs() < 1e-4);
        assert!((s.ci_hi.unwrap() - 3.1883).abs() < 1e-4);
        assert_eq!(s.n_weighted, 4.0);
        assert_eq!(s.n_unweighted, 3);
    }

    #[test]
    fn single_unit_weight_group_is_suppressed() {
        let labels = vec![Some("a".to_string()), Some("b".into()), Some("b".into())];
        let g = weighted_summary(&some(&[1.0, 2.0, 4.0]), &[1.0, 1.0, 1.0], &labels, SummaryOptions::default()).unwrap();
        assert_eq!(g[0].group, "a");
        assert!(g[0].suppressed());
        assert!(!g[1].suppressed());
    }

    #[test]
    fn kish_size_widens_unequal_weight_intervals() {
        let xs = some(&[1.0, 2.0, 3.0, 5.0]);
        let ws = [0.5, 3.0, 1.0, 4.0];
        let plain = overall_summary(&xs, &ws, SummaryOptions::default()).unwrap();
        let kish = overall_summary(&xs, &ws, SummaryOptions { kish_effective_n: true }).unwrap();
        assert_eq!(plain.mean, kish.mean);
        assert!(kish.se.unwrap() > plain.se.unwrap());
    }

    #[test]
    fn overlap_flag_cases() {
        let mk = |lo: f64, hi: f64| GroupSummary {
            group: "g".into(),
            n_unweighted: 10,
            n_weighted: 10.0,
            mean: (lo + hi) / 2.0,
            se: Some((hi - lo) / 3.92),
            ci_lo: Some(lo),
            ci_hi: Some(hi),
        };
        let f = nonoverlap_flags(&[mk(0.1, 0.3), mk(-0.1, 0.2)], 0.0);
        assert_eq!(f.excludes_overall, vec![true, false]);
        assert!(f.disjoint_pairs.is_empty());
        let f = nonoverlap_flags(&[mk(0.1, 0.3), mk(0.1, 0.3)], 0.2);
        assert!(f.disjoint_pairs.is_empty());
        let f = nonoverlap_flags(&[mk(0.1, 0.3), mk(0.4, 0.5)], 0.2);
        assert_eq!(f.disjoint_pairs, vec![(0, 1)]);
    }

    #[test]
    fn misaligned_inputs_rejected() {
        assert!(weighted_summary(&some(&[1.0]), &[1.0, 2.0], &[None], SummaryOptions::default()).is_err());
        assert!(overall_summary(&some(&[1.0]), &[0.0], SummaryOptions::default()).is_err());
    }

    fn party_matrix() -> ResponseMatrix {
        let items = vec![ItemLayout { id: "q".into(), categories: vec![1, 2, 3] }];
        let rows = vec![vec![Some(1)], vec![Some(2)], vec![None], vec![Some(1)], vec![Some(3)]];
        let labels = vec![Some("dem".into()), Some("rep".into()), Some("dem".into()), None, Some("dem".into())];
        let ids = (1..=5).map(|i| i.to_string()).collect();
        ResponseMatrix::new(items, ids, rows, None, vec![GroupColumn { name: "party".into(), labels }]).unwrap()
    }

    #[test]
    fn crosstab_counts_partition_persons() {
        let m = party_matrix();
        let t = crosstab(&m, "party", "q", &["ind".into()]).unwrap();
        assert_eq!(t.total(), 5);
        assert_eq!(t.rows[0].group.as_deref(), Some("ind"));
        assert_eq!(t.rows[0].total(), 0);
        assert_eq!(t.count("dem", 1), Some(1));
        assert_eq!(t.count("dem", 3), Some(1));
        let dem = t.rows.iter().find(|r| r.group.as_deref() == Some("dem")).unwrap();
        assert_eq!(dem.missing, 1);
        assert_eq!(t.rows.last().unwrap().group, None);
        assert!(matches!(crosstab(&m, "region", "q", &[]), Err(Error::UnknownColumn(_))));
    }

    proptest! {
        #[test]
        fn uniform_weights_match_unweighted(xs in prop::collection::vec(-50.0f64..50.0, 2..40)) {
            let n = xs.len() as f64;
            let s = overall_summary(&some(&xs), &vec![1.0; xs.len()], SummaryOptions::default()).unwrap();
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!((s.mean - mean).abs() <= 1e-12 * (1.0 + mean.abs()));
            prop_assert!((s.se.unwrap() - (var / n).sqrt()).abs() <= 1e-12 * (1.0 + var.sqrt()));
        }

        #[test]
        fn weighted_totals_partition(
            data in prop::collection::vec((-5.0f64..5.0, 0.1f64..4.0, prop::option::of(0u8..4)), 1..60)
        ) {
            let scores: Vec<Option<f64>> = data.iter().map(|d| Some(d.0)).collect();
            let weights: Vec<f64> = data.iter().map(|d| d.1).collect();
            let labels: Vec<Option<String>> = data.iter().map(|d| d.2.map(|g| format!("g{g}"))).collect();
            let groups = weighted_summary(&scores, &weights, &labels, SummaryOptions::default()).unwrap();
            let total: f64 = groups.iter().map(|g| g.n_weighted).sum();
            let labelled: f64 = data.iter().filter(|d| d.2.is_some()).map(|d| d.1).sum();
            prop_assert!((total - labelled).abs() < 1e-9);
            prop_assert!(groups.windows(2).all(|w| w[0].group < w[1].group));
            for g in &groups {
                if let (Some(lo), Some(hi)) = (g.ci_lo, g.ci_hi) {
                    prop_assert!(lo <= g.mean && g.mean <= hi);
                }
            }
        }
    }
}
