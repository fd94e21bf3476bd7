use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use polyscale_core::analytics::{crosstab, overall_summary, weighted_summary, write_plot_data, write_summary_csv, SummaryOptions};
use polyscale_core::classical::classical_scores;
use polyscale_core::compare::{
    compare_metric_sets, read_metrics, write_coding_deltas, write_metrics, ModelComparison, ModelMetrics,
};
use polyscale_core::estimate::{fit_em, make_grid, score_matrix, FitOptions, MapOptions, ParamsFile};
use polyscale_core::ingest::{all_missing_persons, apply_coding, load_csv, ItemCoding};
use polyscale_core::simulate::{recovery_report, simulate, RecoveryOptions, SimSpec};
use polyscale_core::{CodingScheme, ColumnSpec, Error, FitResult, ResponseMatrix};

use crate::{
    ensure_dir, existing, write_csv_output, write_file, CliError, Provenance, Report, Result, RunConfig, DEFAULT_SEED,
};

const DEFAULT_ID: &str = "id";

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct RecodeOptions {
    pub crosstab: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreOptions {
    pub params: PathBuf,
    pub classical: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareOptions {
    pub metrics_a: PathBuf,
    pub metrics_b: Option<PathBuf>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SummarizeOptions {
    pub scores: Vec<String>,
    pub kish: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateOptions {
    pub spec: PathBuf,
    pub recovery: bool,
    pub permutations: bool,
}

fn seed(cfg: &RunConfig) -> u64 {
    cfg.seed.unwrap_or(DEFAULT_SEED)
}

fn column_spec(cfg: &RunConfig, items: Vec<String>) -> ColumnSpec {
    ColumnSpec {
        items,
        weight: cfg.weight.clone(),
        groups: cfg.groups.clone(),
        id: cfg.id.clone(),
    }
}

fn id_column(cfg: &RunConfig) -> &str {
    cfg.id.as_deref().unwrap_or(DEFAULT_ID)
}

/// Input recoded with the configured scheme, before exclusion.
fn load_recoded(cfg: &RunConfig) -> Result<(ResponseMatrix, Vec<String>)> {
    let scheme = CodingScheme::load(cfg.scheme()?)?;
    let items = if cfg.items.is_empty() {
        scheme.items.keys().cloned().collect()
    } else {
        cfg.items.clone()
    };
    let raw = load_csv(cfg.input()?, &column_spec(cfg, items.clone()))?;
    Ok((apply_coding(&raw, &scheme)?, items))
}

/// Recoded matrix with all-missing persons removed, plus the removed rows.
fn load_analysis_sample(cfg: &RunConfig) -> Result<(ResponseMatrix, ResponseMatrix, Vec<usize>)> {
    let (m, items) = load_recoded(cfg)?;
    let required = if cfg.required.is_empty() { items } else { cfg.required.clone() };
    let dropped = all_missing_persons(&m, &required)?;
    let excluded: BTreeSet<usize> = dropped.iter().copied().collect();
    let kept: Vec<usize> = (0..m.n_persons()).filter(|p| !excluded.contains(p)).collect();
    if kept.is_empty() {
        return Err(Error::EmptyResult.into());
    }
    let sample = if dropped.is_empty() { m.clone() } else { m.select_persons(&kept)? };
    Ok((m, sample, dropped))
}

fn data_provenance(command: &str, cfg: &RunConfig, options: &impl Serialize) -> Result<Provenance> {
    let mut prov = Provenance::new(command, cfg, options, seed(cfg))?;
    prov.input(cfg.input()?)?;
    if let Some(s) = &cfg.scheme {
        prov.input(existing(s)?)?;
    }
    Ok(prov)
}

pub fn cmd_recode(cfg: &RunConfig, opts: &RecodeOptions) -> Result<Report> {
    let (all, sample, dropped) = load_analysis_sample(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = data_provenance("recode", cfg, opts)?;
    prov.note(format!("persons in: {}", all.n_persons()));
    prov.note(format!("persons out: {}", sample.n_persons()));
    prov.note(format!("excluded: {}", dropped.len()));

    let id = id_column(cfg);
    write_csv_output(cfg.out.join("recoded.csv"), &prov, &mut report, |buf| {
        sample.write_csv(buf, id, cfg.weight.as_deref())
    })?;
    write_csv_output(cfg.out.join("exclusions.csv"), &prov, &mut report, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["row", id, "reason"])?;
        for &p in &dropped {
            let row = (p + 1).to_string();
            w.write_record([row.as_str(), &all.person_ids()[p], "missing on every required item"])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<exclusions>".into(),
            source: e,
        })
    })?;
    // describes the recoded file, so it can be read back with its full layout
    let scheme = CodingScheme::identity(&sample).to_json_string()? + "\n";
    write_file(cfg.out.join("recoded_scheme.json"), scheme.as_bytes(), &mut report)?;

    for item in &opts.crosstab {
        for group in &cfg.groups {
            let table = crosstab(&sample, group, item, &[])?;
            write_csv_output(cfg.out.join(format!("crosstab_{group}_{item}.csv")), &prov, &mut report, |buf| {
                table.write_csv(buf)
            })?;
        }
    }
    Ok(report)
}

fn fit_options(cfg: &RunConfig) -> FitOptions {
    FitOptions {
        tol_ll: cfg.tol,
        max_iter: cfg.max_iter,
    }
}

fn write_params(dir: &Path, fit: &FitResult, report: &mut Report) -> Result<()> {
    let text = ParamsFile::from_fit(fit).to_json()?;
    write_file(dir.join(format!("params_{}.json", fit.model)), text.as_bytes(), report)
}

/// Fits every selected model in turn. A model that stops at `--max-iter` is
/// still written out, flagged as unconverged, and the command then fails
/// with the convergence exit code.
pub fn cmd_fit(cfg: &RunConfig) -> Result<Report> {
    cfg.check_estimation()?;
    let (_, sample, dropped) = load_analysis_sample(cfg)?;
    let grid = make_grid(cfg.grid_points, cfg.grid_bound)?;
    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = data_provenance("fit", cfg, &())?;
    prov.note(format!("persons: {} ({} excluded as all-missing)", sample.n_persons(), dropped.len()));

    let mut metrics = Vec::new();
    let mut failed = Vec::new();
    for &model in &cfg.models {
        let fit = fit_em(&sample, model, &grid, &fit_options(cfg))?;
        for w in &fit.warnings {
            let line = format!("{model}: {w}");
            prov.note(format!("warning {line}"));
            report.warnings.push(line);
        }
        if !fit.converged {
            failed.push(model.to_string());
        }
        write_params(&cfg.out, &fit, &mut report)?;
        metrics.push(ModelMetrics::from_fit(model, fit.loglik, fit.n_params, fit.n_persons, fit.converged));
    }
    write_csv_output(cfg.out.join("metrics.csv"), &prov, &mut report, |buf| write_metrics(buf, &metrics))?;

    if failed.is_empty() {
        Ok(report)
    } else {
        Err(CliError::NotConverged(failed))
    }
}

/// Without a scheme the input is taken as already recoded, and the
/// parameter file's category layout serves as the scheme.
fn layout_scheme(params: &ParamsFile) -> CodingScheme {
    let items = params
        .items
        .iter()
        .map(|it| {
            let map = it.categories.iter().map(|&c| (c, c)).collect();
            (it.id.clone(), ItemCoding { map, missing: BTreeSet::new() })
        })
        .collect();
    CodingScheme { items }
}

fn fmt_f64(x: f64) -> String {
    x.to_string()
}

pub fn cmd_score(cfg: &RunConfig, opts: &ScoreOptions) -> Result<Report> {
    let params = ParamsFile::load(existing(&opts.params)?, None)?;
    let ids: Vec<String> = params.items.iter().map(|it| it.id.clone()).collect();
    if !cfg.items.is_empty() && cfg.items != ids {
        return Err(CliError::Config(format!(
            "--items {} does not match the parameter file items {}",
            cfg.items.join(","),
            ids.join(",")
        )));
    }
    let scheme = match &cfg.scheme {
        Some(p) => CodingScheme::load(existing(p)?)?,
        None => layout_scheme(&params),
    };
    let raw = load_csv(cfg.input()?, &column_spec(cfg, ids.clone()))?;
    let m = apply_coding(&raw, &scheme)?;
    let scores = score_matrix(&params.items, &m, &MapOptions::default())?;
    let classical = opts.classical.then(|| classical_scores(&m, &ids)).transpose()?;

    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = data_provenance("score", cfg, opts)?;
    prov.input(&opts.params)?;
    prov.note(format!("model: {}", params.model));
    prov.note(format!("scale: {}", params.scale_note));

    let id = id_column(cfg);
    write_csv_output(cfg.out.join("scores.csv"), &prov, &mut report, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        let mut header: Vec<String> = [id, "theta", "se", "n_observed", "flag"].map(String::from).to_vec();
        if classical.is_some() {
            header.extend(["z_score_b".to_string(), "z_score_w".to_string()]);
        }
        header.extend(cfg.weight.clone());
        header.extend(cfg.groups.iter().cloned());
        w.write_record(&header)?;
        for (p, s) in scores.iter().enumerate() {
            let flag = if s.n_observed == 0 {
                "all-missing"
            } else if s.multimodal {
                "multimodal"
            } else {
                ""
            };
            let mut rec = vec![
                m.person_ids()[p].clone(),
                fmt_f64(s.theta),
                fmt_f64(s.se),
                s.n_observed.to_string(),
                flag.to_string(),
            ];
            if let Some(c) = &classical {
                for col in [&c.z_score_b, &c.z_score_w] {
                    rec.push(col.scores[p].map(fmt_f64).unwrap_or_default());
                }
            }
            if cfg.weight.is_some() {
                rec.push(fmt_f64(m.weights()[p]));
            }
            for g in m.groups() {
                rec.push(g.labels[p].clone().unwrap_or_default());
            }
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<scores>".into(),
            source: e,
        })
    })?;
    Ok(report)
}

fn load_metrics(path: &Path) -> Result<Vec<ModelMetrics>> {
    let file = std::fs::File::open(existing(path)?).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    Ok(read_metrics(file)?)
}

pub fn cmd_compare(cfg: &RunConfig, opts: &CompareOptions) -> Result<Report> {
    if !(opts.threshold.is_finite() && opts.threshold >= 0.0) {
        return Err(CliError::Config(format!("--threshold must be non-negative, got {}", opts.threshold)));
    }
    let a = load_metrics(&opts.metrics_a)?;
    let b = opts.metrics_b.as_deref().map(load_metrics).transpose()?;
    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = Provenance::new("compare", cfg, opts, seed(cfg))?;
    prov.input(&opts.metrics_a)?;
    if let Some(p) = &opts.metrics_b {
        prov.input(p)?;
    }
    prov.note(format!("threshold: {}", opts.threshold));

    match b {
        Some(b) => {
            let deltas = compare_metric_sets(&a, &b, opts.threshold)?;
            write_csv_output(cfg.out.join("deltas.csv"), &prov, &mut report, |buf| write_coding_deltas(buf, &deltas))?;
        }
        None => {
            let ranked = ModelComparison::rank(&a, opts.threshold)?;
            prov.note(format!("best by AIC: {}", ranked.best()));
            write_csv_output(cfg.out.join("comparison.csv"), &prov, &mut report, |buf| ranked.write_csv(buf))?;
        }
    }
    Ok(report)
}

/// A scores file read as text columns.
struct ScoreTable {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl ScoreTable {
    fn read(path: &Path) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(Error::from)?;
        let headers = r.headers().map_err(Error::from)?.iter().map(String::from).collect();
        let rows = r.records().collect::<std::result::Result<Vec<_>, _>>().map_err(Error::from)?;
        Ok(ScoreTable { headers, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()).into())
    }

    fn numbers(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let col = self.column(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let cell = r.get(col).unwrap_or("");
                if cell.is_empty() {
                    return Ok(None);
                }
                cell.parse::<f64>().map(Some).map_err(|_| {
                    Error::InvalidInput(format!("row {}, column {name}: {cell:?} is not a number", i + 1)).into()
                })
            })
            .collect()
    }

    fn labels(&self, name: &str) -> Result<Vec<Option<String>>> {
        let col = self.column(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(col).filter(|c| !c.is_empty()).map(String::from))
            .collect())
    }
}

pub fn cmd_summarize(cfg: &RunConfig, opts: &SummarizeOptions) -> Result<Report> {
    if cfg.groups.is_empty() {
        return Err(CliError::Config("summarize needs at least one --groups column".into()));
    }
    let table = ScoreTable::read(cfg.input()?)?;
    let score_cols: Vec<String> = if opts.scores.is_empty() {
        ["theta", "z_score_b", "z_score_w"]
            .into_iter()
            .filter(|c| table.headers.iter().any(|h| h == c))
            .map(String::from)
            .collect()
    } else {
        opts.scores.clone()
    };
    if score_cols.is_empty() {
        return Err(CliError::Config("no score columns found; name them with --scores".into()));
    }
    let weights: Vec<f64> = match &cfg.weight {
        Some(w) => table
            .numbers(w)?
            .into_iter()
            .enumerate()
            .map(|(i, v)| v.ok_or_else(|| Error::InvalidInput(format!("row {}: blank weight", i + 1)).into()))
            .collect::<Result<_>>()?,
        None => vec![1.0; table.rows.len()],
    };
    let labels = cfg
        .groups
        .iter()
        .map(|g| Ok((g.clone(), table.labels(g)?)))
        .collect::<Result<Vec<_>>>()?;
    let sopts = SummaryOptions {
        kish_effective_n: opts.kish,
    };

    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = Provenance::new("summarize", cfg, opts, seed(cfg))?;
    prov.input(cfg.input()?)?;

    let mut plot_rows = Vec::new();
    for score in &score_cols {
        let values = table.numbers(score)?;
        let overall = overall_summary(&values, &weights, sopts)?;
        let mut sections = Vec::new();
        for (var, labs) in &labels {
            let groups = weighted_summary(&values, &weights, labs, sopts)?;
            plot_rows.push((var.clone(), score.clone(), overall.clone()));
            plot_rows.extend(groups.iter().map(|g| (var.clone(), score.clone(), g.clone())));
            sections.push((var.clone(), overall.clone(), groups));
        }
        write_csv_output(cfg.out.join(format!("summary_{score}.csv")), &prov, &mut report, |buf| {
            write_summary_csv(buf, &sections)
        })?;
    }
    write_csv_output(cfg.out.join("plot_data.csv"), &prov, &mut report, |buf| write_plot_data(buf, &plot_rows))?;
    Ok(report)
}

/// `--seed`, when given, replaces the seed in the spec file.
pub fn cmd_simulate(cfg: &RunConfig, opts: &SimulateOptions) -> Result<Report> {
    let mut spec = SimSpec::load(existing(&opts.spec)?)?;
    if let Some(s) = cfg.seed {
        spec.seed = s;
    }
    if opts.recovery {
        cfg.check_estimation()?;
    }
    let data = simulate(&spec)?;
    ensure_dir(&cfg.out)?;
    let mut report = Report::default();
    let mut prov = Provenance::new("simulate", cfg, opts, spec.seed)?;
    prov.input(&opts.spec)?;
    prov.note(format!("model: {}, n: {}", spec.model, spec.n));

    write_csv_output(cfg.out.join("simulated.csv"), &prov, &mut report, |buf| {
        data.matrix.write_csv(buf, DEFAULT_ID, None)
    })?;
    write_csv_output(cfg.out.join("thetas.csv"), &prov, &mut report, |buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record([DEFAULT_ID, "theta"])?;
        for (id, t) in data.matrix.person_ids().iter().zip(&data.thetas) {
            w.write_record([id.clone(), fmt_f64(*t)])?;
        }
        w.flush().map_err(|e| Error::Io {
            path: "<thetas>".into(),
            source: e,
        })
    })?;
    let scheme = CodingScheme::identity(&data.matrix).to_json_string()? + "\n";
    write_file(cfg.out.join("simulated_scheme.json"), scheme.as_bytes(), &mut report)?;

    if !opts.recovery {
        return Ok(report);
    }
    let grid = make_grid(cfg.grid_points, cfg.grid_bound)?;
    let fit = fit_em(&data.matrix, spec.model, &grid, &fit_options(cfg))?;
    report.warnings.extend(fit.warnings.iter().map(|w| format!("{}: {w}", spec.model)));
    write_params(&cfg.out, &fit, &mut report)?;
    let rec = recovery_report(
        &spec,
        &fit,
        RecoveryOptions {
            search_permutations: opts.permutations,
        },
    )?;
    prov.note(format!("reflected: {}", rec.reflected));
    prov.note(format!("converged: {}", fit.converged));
    write_csv_output(cfg.out.join("recovery.csv"), &prov, &mut report, |buf| rec.write_csv(buf))?;
    if fit.converged {
        Ok(report)
    } else {
        Err(CliError::NotConverged(vec![spec.model.to_string()]))
    }
}
