//! Synthetic response matrices from known item parameters, and recovery
//! statistics for fits made on them.
//!
//! Each person draws from their own ChaCha8 stream (`seed`, stream = person
//! index), so a matrix is reproducible whatever the thread count. θ is drawn
//! by inverse-CDF from a single uniform, which makes antithetic pairs
//! (`u`, `1 - u`) possible.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::estimate::params_file::{decode_items, encode_items, ItemRecord};
use crate::estimate::FitResult;
use crate::ingest::{GroupColumn, ItemLayout, ResponseMatrix};
use crate::models::{CalibratedItem, ItemParams, ModelKind};

/// Assigns a label from `θ + noise_sd·z`, cut at ascending `cuts`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRule {
    pub name: String,
    pub noise_sd: f64,
    pub cuts: Vec<f64>,
    /// One more label than cuts.
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSpec {
    pub model: ModelKind,
    pub items: Vec<CalibratedItem>,
    pub n: usize,
    pub seed: u64,
    pub theta_mean: f64,
    pub theta_sd: f64,
    pub missing_rate: f64,
    pub antithetic: bool,
    pub group_rule: Option<GroupRule>,
}

#[derive(Serialize, Deserialize)]
struct SpecRecord {
    model: ModelKind,
    items: Vec<ItemRecord>,
    n: usize,
    seed: u64,
    #[serde(default)]
    theta_mean: f64,
    #[serde(default = "one")]
    theta_sd: f64,
    #[serde(default)]
    missing_rate: f64,
    #[serde(default)]
    antithetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    group_rule: Option<GroupRule>,
}

fn one() -> f64 {
    1.0
}

impl SimSpec {
    pub fn new(model: ModelKind, items: Vec<CalibratedItem>, n: usize, seed: u64) -> Result<Self> {
        let spec = SimSpec {
            model,
            items,
            n,
            seed,
            theta_mean: 0.0,
            theta_sd: 1.0,
            missing_rate: 0.0,
            antithetic: false,
            group_rule: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidInput("simulation needs n > 0".into()));
        }
        if self.items.is_empty() {
            return Err(Error::InvalidInput("simulation needs at least one item".into()));
        }
        if !(0.0..1.0).contains(&self.missing_rate) {
            return Err(Error::InvalidInput(format!("missing_rate {} outside [0, 1)", self.missing_rate)));
        }
        if !(self.theta_sd.is_finite() && self.theta_sd > 0.0 && self.theta_mean.is_finite()) {
            return Err(Error::InvalidInput("θ distribution needs finite mean and positive sd".into()));
        }
        for it in &self.items {
            if it.params.kind() != self.model {
                return Err(Error::ModelMismatch {
                    expected: self.model.to_string(),
                    found: it.params.kind().to_string(),
                });
            }
        }
        if let Some(rule) = &self.group_rule {
            if rule.labels.len() != rule.cuts.len() + 1 {
                return Err(Error::InvalidInput(format!(
                    "group rule {}: {} labels for {} cuts",
                    rule.name,
                    rule.labels.len(),
                    rule.cuts.len()
                )));
            }
            if rule.cuts.windows(2).any(|w| w[0] >= w[1]) || !(rule.noise_sd >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "group rule {}: cuts must ascend and noise_sd be non-negative",
                    rule.name
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let rec: SpecRecord = serde_json::from_str(text)?;
        let spec = SimSpec {
            model: rec.model,
            items: decode_items(rec.model, rec.items)?,
            n: rec.n,
            seed: rec.seed,
            theta_mean: rec.theta_mean,
            theta_sd: rec.theta_sd,
            missing_rate: rec.missing_rate,
            antithetic: rec.antithetic,
            group_rule: rec.group_rule,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        let rec = SpecRecord {
            model: self.model,
            items: encode_items(&self.items),
            n: self.n,
            seed: self.seed,
            theta_mean: self.theta_mean,
            theta_sd: self.theta_sd,
            missing_rate: self.missing_rate,
            antithetic: self.antithetic,
            group_rule: self.group_rule.clone(),
        };
        let mut s = serde_json::to_string_pretty(&rec)?;
        s.push('\n');
        Ok(s)
    }
}

/// A simulated matrix together with the abilities that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedData {
    pub matrix: ResponseMatrix,
    pub thetas: Vec<f64>,
}

fn person_rng(seed: u64, person: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(person as u64);
    rng
}

/// Uniform on the open interval (0, 1), safe for inverse CDFs.
fn open_uniform(rng: &mut ChaCha8Rng) -> f64 {
    ((rng.random::<u64>() >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

pub fn simulate_responses(spec: &SimSpec) -> Result<ResponseMatrix> {
    Ok(simulate(spec)?.matrix)
}

pub fn simulate(spec: &SimSpec) -> Result<SimulatedData> {
    spec.validate()?;
    let normal = Normal::standard();
    let params: Vec<&ItemParams> = spec.items.iter().map(|it| &it.params).collect();

    let people: Vec<(f64, Vec<Option<i64>>, Option<String>)> = (0..spec.n)
        .into_par_iter()
        .map(|p| {
            let mut rng = person_rng(spec.seed, p);
            let mut u = open_uniform(&mut rng);
            if spec.antithetic && p % 2 == 1 {
                u = 1.0 - open_uniform(&mut person_rng(spec.seed, p - 1));
            }
            let theta = spec.theta_mean + spec.theta_sd * normal.inverse_cdf(u);
            let row = spec
                .items
                .iter()
                .zip(&params)
                .map(|(item, par)| {
                    let missing = rng.random::<f64>() < spec.missing_rate;
                    let k = par.probs(theta).sample_index(rng.random::<f64>());
                    (!missing).then(|| item.categories[k])
                })
                .collect();
            let label = spec.group_rule.as_ref().map(|rule| {
                let noisy = theta + rule.noise_sd * normal.inverse_cdf(open_uniform(&mut rng));
                let slot = rule.cuts.iter().filter(|&&c| c <= noisy).count();
                rule.labels[slot].clone()
            });
            (theta, row, label)
        })
        .collect();

    let layouts = spec
        .items
        .iter()
        .map(|it| ItemLayout {
            id: it.id.clone(),
            categories: it.categories.clone(),
        })
        .collect();
    let ids = (1..=spec.n).map(|p| p.to_string()).collect();
    let mut thetas = Vec::with_capacity(spec.n);
    let mut rows = Vec::with_capacity(spec.n);
    let mut labels = Vec::with_capacity(spec.n);
    for (t, r, l) in people {
        thetas.push(t);
        rows.push(r);
        labels.push(l);
    }
    let groups = match &spec.group_rule {
        Some(rule) => vec![GroupColumn {
            name: rule.name.clone(),
            labels,
        }],
        None => vec![],
    };
    let matrix = ResponseMatrix::new(layouts, ids, rows, None, groups)?;
    Ok(SimulatedData { matrix, thetas })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamRole {
    /// GRM/GGUM discrimination, NRM category slope.
    Slope,
    /// GRM boundary or GGUM item location.
    Location,
    /// GGUM threshold.
    Threshold,
    /// NRM category intercept.
    Intercept,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecoveryRow {
    pub item: String,
    pub role: ParamRole,
    /// Position within the role, e.g. boundary or category index.
    pub index: usize,
    pub truth: f64,
    pub estimate: f64,
}

impl RecoveryRow {
    pub fn error(&self) -> f64 {
        self.estimate - self.truth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub rows: Vec<RecoveryRow>,
    /// The fit was compared after flipping the direction of θ.
    pub reflected: bool,
    /// Per item, `perm[j]` is the fitted category matched to true category `j`.
    pub permutations: Vec<Vec<usize>>,
}

impl RecoveryReport {
    fn errors(&self, role: Option<ParamRole>) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| role.is_none_or(|want| r.role == want))
            .map(RecoveryRow::error)
            .collect()
    }

    pub fn bias(&self, role: Option<ParamRole>) -> f64 {
        let e = self.errors(role);
        e.iter().sum::<f64>() / e.len() as f64
    }

    pub fn rmse(&self, role: Option<ParamRole>) -> f64 {
        let e = self.errors(role);
        (e.iter().map(|x| x * x).sum::<f64>() / e.len() as f64).sqrt()
    }

    pub fn roles(&self) -> Vec<ParamRole> {
        let mut r: Vec<ParamRole> = self.rows.iter().map(|r| r.role).collect();
        r.sort();
        r.dedup();
        r
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["role", "n", "bias", "rmse"])?;
        for role in self.roles() {
            let n = self.rows.iter().filter(|r| r.role == role).count();
            let name = serde_json::to_value(role)?.as_str().unwrap_or_default().to_string();
            w.write_record([name, n.to_string(), self.bias(Some(role)).to_string(), self.rmse(Some(role)).to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<recovery>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RecoveryOptions {
    /// For NRM, match fitted categories to true ones by the best of all
    /// permutations instead of by code.
    pub search_permutations: bool,
}

fn rows_for(id: &str, truth: &ItemParams, est: &ItemParams, perm: &[usize], reflect: bool) -> Vec<RecoveryRow> {
    let s = if reflect { -1.0 } else { 1.0 };
    let mut rows = Vec::new();
    let mut push = |role, index, truth: f64, estimate: f64| {
        rows.push(RecoveryRow {
            item: id.to_string(),
            role,
            index,
            truth,
            estimate,
        })
    };
    match (truth, est) {
        (ItemParams::Grm(t), ItemParams::Grm(e)) => {
            push(ParamRole::Slope, 0, t.a(), e.a());
            for (k, (x, y)) in t.boundaries().iter().zip(e.boundaries()).enumerate() {
                push(ParamRole::Location, k, *x, *y);
            }
        }
        (ItemParams::Ggum(t), ItemParams::Ggum(e)) => {
            push(ParamRole::Slope, 0, t.a(), e.a());
            push(ParamRole::Location, 0, t.location(), s * e.location());
            for (k, (x, y)) in t.thresholds().iter().zip(e.thresholds()).enumerate() {
                push(ParamRole::Threshold, k, *x, *y);
            }
        }
        (ItemParams::Nrm(t), ItemParams::Nrm(e)) => {
            for (j, &k) in perm.iter().enumerate() {
                push(ParamRole::Slope, j, t.slopes()[j], s * e.slopes()[k]);
            }
            for (j, &k) in perm.iter().enumerate() {
                push(ParamRole::Intercept, j, t.intercepts()[j], e.intercepts()[k]);
            }
        }
        _ => unreachable!("kinds checked by caller"),
    }
    rows
}

fn squared_error(rows: &[RecoveryRow]) -> f64 {
    rows.iter().map(|r| r.error().powi(2)).sum()
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    // Heap's algorithm
    let mut c = vec![0; m];
    out.push(current.clone());
    let mut i = 0;
    while i < m {
        if c[i] < i {
            if i % 2 == 0 {
                current.swap(0, i);
            } else {
                current.swap(c[i], i);
            }
            out.push(current.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Bias and RMSE of fitted parameters against the generating ones.
///
/// Items are matched by id. NRM and GGUM likelihoods are unchanged when the
/// direction of θ flips, so the fit is also compared reflected and the
/// closer orientation is reported.
pub fn recovery_report(spec: &SimSpec, fit: &FitResult, options: RecoveryOptions) -> Result<RecoveryReport> {
    if fit.model != spec.model {
        return Err(Error::ModelMismatch {
            expected: spec.model.to_string(),
            found: fit.model.to_string(),
        });
    }
    let mut pairs = Vec::with_capacity(spec.items.len());
    for t in &spec.items {
        let e = fit
            .items
            .iter()
            .find(|e| e.id == t.id)
            .ok_or_else(|| Error::Alignment(format!("item {} missing from the fit", t.id)))?;
        if e.categories.len() != t.categories.len() {
            return Err(Error::Alignment(format!(
                "item {}: {} fitted categories for {} generating ones",
                t.id,
                e.categories.len(),
                t.categories.len()
            )));
        }
        if !options.search_permutations && e.categories != t.categories {
            return Err(Error::Alignment(format!("item {}: category codes differ", t.id)));
        }
        pairs.push((t, e));
    }

    let can_reflect = matches!(spec.model, ModelKind::Nrm | ModelKind::Ggum);
    let search = options.search_permutations && spec.model == ModelKind::Nrm;
    let mut best: Option<RecoveryReport> = None;
    let orientations: &[bool] = if can_reflect { &[false, true] } else { &[false] };
    for &reflect in orientations {
        let mut rows = Vec::new();
        let mut perms = Vec::new();
        for (t, e) in &pairs {
            let m = t.categories.len();
            let candidates = if search {
                if m > 8 {
                    return Err(Error::Alignment(format!("item {}: too many categories to search", t.id)));
                }
                permutations(m)
            } else {
                vec![(0..m).collect()]
            };
            let (perm, item_rows) = candidates
                .into_iter()
                .map(|p| {
                    let r = rows_for(&t.id, &t.params, &e.params, &p, reflect);
                    (p, r)
                })
                .min_by(|a, b| squared_error(&a.1).total_cmp(&squared_error(&b.1)))
                .expect("at least one candidate");
            rows.extend(item_rows);
            perms.push(perm);
        }
        let report = RecoveryReport {
            rows,
            reflected: reflect,
            permutations: perms,
        };
        let better = match &best {
            None => true,
            Some(b) => squared_error(&report.rows) < squared_error(&b.rows),
        };
        if better {
            best = Some(report);
        }
    }
    Ok(best.expect("one orientation"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{GrmItemParams, NrmItemParams};

    fn grm_items() -> Vec<CalibratedItem> {
        vec![
            CalibratedItem::new("a", vec![1, 2, 3], ItemParams::Grm(GrmItemParams::new(1.2, vec![-0.5, 0.8]).unwrap())).unwrap(),
            CalibratedItem::new("b", vec![0, 1], ItemParams::Grm(GrmItemParams::new(0.7, vec![0.3]).unwrap())).unwrap(),
        ]
    }

    fn fake_fit(spec: &SimSpec, items: Vec<CalibratedItem>) -> FitResult {
        FitResult {
            model: spec.model,
            items,
            loglik: 0.0,
            n_params: 0,
            n_persons: spec.n,
            aic: 0.0,
            bic: 0.0,
            iterations: 0,
            converged: true,
            ll_trace: vec![0.0],
            warnings: vec![],
        }
    }

    #[test]
    fn same_seed_same_matrix() {
        let spec = SimSpec::new(ModelKind::Grm, grm_items(), 300, 42).unwrap();
        let a = simulate(&spec).unwrap();
        let b = simulate(&spec).unwrap();
        assert_eq!(a, b);
        let other = simulate(&SimSpec { seed: 43, ..spec }).unwrap();
        assert_ne!(a.matrix, other.matrix);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let spec = SimSpec::new(ModelKind::Grm, grm_items(), 500, 3).unwrap();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| simulate(&spec).unwrap());
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| simulate(&spec).unwrap());
        assert_eq!(one, four);
    }

    #[test]
    fn zero_missing_rate_has_no_gaps() {
        let spec = SimSpec::new(ModelKind::Grm, grm_items(), 200, 1).unwrap();
        let m = simulate_responses(&spec).unwrap();
        assert!((0..m.n_persons()).all(|p| m.row(p).iter().all(Option::is_some)));
    }

    #[test]
    fn missing_rate_is_respected() {
        let spec = SimSpec {
            missing_rate: 0.3,
            ..SimSpec::new(ModelKind::Grm, grm_items(), 4000, 9).unwrap()
        };
        let m = simulate_responses(&spec).unwrap();
        let gaps = (0..m.n_persons()).flat_map(|p| m.row(p).to_vec()).filter(Option::is_none).count();
        let rate = gaps as f64 / 8000.0;
        assert!((rate - 0.3).abs() < 3.0 * (0.3 * 0.7 / 8000.0f64).sqrt());
    }

    #[test]
    fn flat_nominal_item_is_uniform() {
        let m = 4;
        let item = CalibratedItem::new(
            "flat",
            vec![1, 2, 3, 4],
            ItemParams::Nrm(NrmItemParams::new(vec![0.0; m], vec![0.0; m]).unwrap()),
        )
        .unwrap();
        let n = 10_000;
        let spec = SimSpec::new(ModelKind::Nrm, vec![item], n, 11).unwrap();
        let counts = simulate_responses(&spec).unwrap().category_counts(0);
        let p = 0.25;
        let bound = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        for c in counts {
            assert!((c as f64 / n as f64 - p).abs() < bound, "{c}");
        }
    }

    #[test]
    fn antithetic_pairs_mirror() {
        let spec = SimSpec {
            antithetic: true,
            ..SimSpec::new(ModelKind::Grm, grm_items(), 10, 5).unwrap()
        };
        let d = simulate(&spec).unwrap();
        for pair in d.thetas.chunks(2) {
            assert!((pair[0] + pair[1]).abs() < 1e-9);
        }
    }

    #[test]
    fn group_rule_labels_follow_theta() {
        let spec = SimSpec {
            group_rule: Some(GroupRule {
                name: "side".into(),
                noise_sd: 0.0,
                cuts: vec![0.0],
                labels: vec!["low".into(), "high".into()],
            }),
            ..SimSpec::new(ModelKind::Grm, grm_items(), 100, 2).unwrap()
        };
        let d = simulate(&spec).unwrap();
        let g = d.matrix.group("side").unwrap();
        for (t, l) in d.thetas.iter().zip(&g.labels) {
            assert_eq!(l.as_deref(), Some(if *t >= 0.0 { "high" } else { "low" }));
        }
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SimSpec {
            missing_rate: 0.1,
            ..SimSpec::new(ModelKind::Grm, grm_items(), 50, 8).unwrap()
        };
        let text = spec.to_json().unwrap();
        assert_eq!(SimSpec::from_json(&text).unwrap(), spec);
        let bad = text.replace("\"missing_rate\": 0.1", "\"missing_rate\": 1.0");
        assert!(SimSpec::from_json(&bad).is_err());
    }

    #[test]
    fn truth_recovers_itself() {
        let spec = SimSpec::new(ModelKind::Grm, grm_items(), 10, 1).unwrap();
        let r = recovery_report(&spec, &fake_fit(&spec, grm_items()), RecoveryOptions::default()).unwrap();
        assert_eq!(r.bias(None), 0.0);
        assert_eq!(r.rmse(None), 0.0);
        assert_eq!(r.rows.len(), 2 + 3);
    }

    #[test]
    fn nominal_reflection_and_permutation_are_undone() {
        let truth = NrmItemParams::new(vec![-1.0, 0.2, 0.8], vec![0.3, 0.5, -0.8]).unwrap();
        let item = |p: NrmItemParams| CalibratedItem::new("x", vec![1, 2, 3], ItemParams::Nrm(p)).unwrap();
        let spec = SimSpec::new(ModelKind::Nrm, vec![item(truth.clone())], 10, 1).unwrap();
        let flipped = NrmItemParams::new(truth.slopes().iter().map(|a| -a).collect(), truth.intercepts().to_vec()).unwrap();
        let shuffled = flipped.permuted(&[2, 0, 1]).unwrap();
        let fit = fake_fit(&spec, vec![item(shuffled)]);
        let r = recovery_report(&spec, &fit, RecoveryOptions { search_permutations: true }).unwrap();
        assert!(r.reflected);
        assert!(r.rmse(None) < 1e-12);
        assert_eq!(r.permutations[0], vec![1, 2, 0]);
    }

    #[test]
    fn missing_item_is_an_alignment_error() {
        let spec = SimSpec::new(ModelKind::Grm, grm_items(), 10, 1).unwrap();
        let fit = fake_fit(&spec, grm_items()[..1].to_vec());
        assert!(matches!(
            recovery_report(&spec, &fit, RecoveryOptions::default()),
            Err(Error::Alignment(_))
        ));
    }

    #[test]
    fn heap_permutations_are_complete() {
        let mut p = permutations(4);
        assert_eq!(p.len(), 24);
        p.sort();
        p.dedup();
        assert_eq!(p.len(), 24);
    }
}
