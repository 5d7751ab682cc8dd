//! Fitting and scoring through the preprocessing chain, and the evaluation
//! protocols built on top: cross-validation, holdout, temporal split,
//! feature ablation and transfer to an external set.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::metrics::auroc;
use super::report::{EvalReport, Protocol, Retrieval, SliceKey, SliceMetrics, Summary};
use crate::corpus::{PaperId, YearMonth};
use crate::embed::{FlatMatrix, DIM};
use crate::error::{Error, Result};
use crate::features::{surviving_columns, AblationSpec, FeatureMatrix, NUMERIC_WIDTH};
use crate::matrix::Matrix;
use crate::models::{self, grid_points, Inputs, ModelKind, ModelSpec, TextView, TrainedModel};
use crate::par;
use crate::preprocess::{apply_preprocessor, fit_preprocessor, rebalance, split_stratified, stratified_kfold, PreprocessorParams};

/// Everything a model may look at. Labels live elsewhere, so scoring can
/// never read them.
#[derive(Clone, Debug, Default)]
pub struct FeatureSet {
    /// Raw (unimputed) full-layout features.
    pub features: FeatureMatrix,
    /// Embedding flats, matched to feature rows by paper id. They may cover
    /// only the rows that text models will see.
    pub flats: Option<FlatMatrix>,
}

impl FeatureSet {
    pub fn rows(&self) -> usize {
        self.features.rows()
    }

    /// Flats for the given feature rows, in the same order.
    pub fn flats_for(&self, rows: &[usize]) -> Result<FlatMatrix> {
        let flats = self.flats.as_ref().ok_or_else(|| Error::invalid("model needs embedding flats"))?;
        if flats.ids == self.features.paper_ids {
            return Ok(flats.select(rows));
        }
        let index: HashMap<&PaperId, usize> = flats.ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
        let picked = rows
            .iter()
            .map(|&r| {
                let id = &self.features.paper_ids[r];
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("no embedding for paper {}", id.0)))
            })
            .collect::<Result<Vec<usize>>>()?;
        Ok(flats.select(&picked))
    }
}

#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub x: FeatureSet,
    pub labels: Vec<bool>,
    /// Publication month per row; only the temporal protocol needs it.
    pub dates: Vec<YearMonth>,
    /// Field tags per row; only the temporal protocol needs it.
    pub fields: Vec<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.labels.len();
        if self.x.rows() != n {
            return Err(Error::invalid(format!("{} feature rows for {n} labels", self.x.rows())));
        }
        if let Some(f) = &self.x.flats {
            let known: HashSet<&PaperId> = self.x.features.paper_ids.iter().collect();
            let mut seen = HashSet::new();
            for id in &f.ids {
                if !known.contains(id) {
                    return Err(Error::invalid(format!("embedding for unknown paper {}", id.0)));
                }
                if !seen.insert(id) {
                    return Err(Error::invalid(format!("two embeddings for paper {}", id.0)));
                }
            }
        }
        if !self.dates.is_empty() && self.dates.len() != n {
            return Err(Error::invalid("dates are not aligned with rows"));
        }
        if !self.fields.is_empty() && self.fields.len() != n {
            return Err(Error::invalid("field tags are not aligned with rows"));
        }
        Ok(())
    }

    pub fn labels_at(&self, rows: &[usize]) -> Vec<bool> {
        rows.iter().map(|&r| self.labels[r]).collect()
    }
}

/// Which feature columns a model sees.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnSelection {
    All,
    Ablation(AblationSpec),
    Named(Vec<String>),
    None,
}

impl ColumnSelection {
    pub fn resolve(&self, m: &FeatureMatrix) -> Result<Vec<usize>> {
        match self {
            ColumnSelection::All => Ok((0..m.cols()).collect()),
            ColumnSelection::None => Ok(Vec::new()),
            ColumnSelection::Ablation(spec) => {
                if m.cols() < NUMERIC_WIDTH {
                    return Err(Error::invalid("ablation needs the full feature layout"));
                }
                Ok(surviving_columns(spec, m.cols() - NUMERIC_WIDTH))
            }
            ColumnSelection::Named(names) => names
                .iter()
                .map(|n| m.column_index(n).ok_or_else(|| Error::invalid(format!("no feature column `{n}`"))))
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub name: String,
    pub spec: ModelSpec,
    pub columns: ColumnSelection,
    /// Hold out 10% of the training rows to pick the best epoch.
    pub early_stopping: bool,
}

impl ModelConfig {
    pub fn new(name: impl Into<String>, kind: ModelKind, columns: ColumnSelection) -> Self {
        ModelConfig {
            name: name.into(),
            spec: ModelSpec::new(kind, 0),
            columns,
            early_stopping: matches!(kind, ModelKind::Mlp | ModelKind::Cnn1d | ModelKind::Hybrid),
        }
    }

    /// Univariable logistic regression on citations per year.
    pub fn citation_baseline() -> Self {
        ModelConfig::new(
            "citations_per_year",
            ModelKind::Logistic,
            ColumnSelection::Named(vec!["citations_per_year".into()]),
        )
    }

    pub fn metadata() -> Self {
        ModelConfig::new("metadata", ModelKind::Mlp, ColumnSelection::All)
    }

    pub fn hybrid(ablation: AblationSpec) -> Self {
        let name = match (ablation.drop_paper_metrics, ablation.drop_extrinsic) {
            (false, false) => "hybrid",
            (true, false) => "hybrid_no_paper_metrics",
            (false, true) => "hybrid_no_extrinsic",
            (true, true) => "hybrid_no_metadata_metrics",
        };
        ModelConfig::new(name, ModelKind::Hybrid, ColumnSelection::Ablation(ablation))
    }

    pub fn embeddings_only() -> Self {
        ModelConfig::new("embeddings_only", ModelKind::Cnn1d, ColumnSelection::None)
    }

    pub fn boosted_stumps() -> Self {
        ModelConfig::new("boosted_stumps", ModelKind::Adaboost, ColumnSelection::All)
    }

    /// Same model with `spec` fields taken from `template`, keeping the kind.
    pub fn with_training(mut self, template: &ModelSpec) -> Self {
        let kind = self.spec.kind;
        self.spec = template.clone();
        self.spec.kind = kind;
        self
    }
}

/// A trained model together with the column choice and preprocessing it was
/// fit with.
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub name: String,
    pub columns: Vec<String>,
    pub preprocessor: Option<PreprocessorParams>,
    /// Multiplier applied to embedding values before they reach the model.
    pub text_scale: Option<f64>,
    pub model: TrainedModel,
}

/// Root mean square per value that text inputs are scaled to. Unit scale lets
/// the convolutional branch memorize noise before the tabular branch learns.
pub const TEXT_RMS: f64 = 0.1;

/// Scale that gives the nonzero sentence slots a mean square per value of
/// `TEXT_RMS` squared.
/// Fallback vectors have unit norm, so their values are tiny; imported
/// vectors can be much larger. Zero slots are padding and are ignored.
pub fn text_scale(flats: &FlatMatrix) -> f64 {
    let (mut sum_sq, mut slots) = (0.0f64, 0usize);
    for slot in flats.data.chunks(DIM) {
        let ss: f64 = slot.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        if ss > 0.0 {
            sum_sq += ss;
            slots += 1;
        }
    }
    if slots == 0 {
        return 1.0;
    }
    TEXT_RMS / (sum_sq / (slots * DIM) as f64).sqrt()
}

struct Prepared {
    meta: Option<Matrix>,
    text: Option<FlatMatrix>,
}

impl Prepared {
    fn inputs(&self) -> Inputs<'_> {
        Inputs {
            meta: self.meta.as_ref(),
            text: self.text.as_ref().map(TextView::from),
        }
    }
}

fn column_subset(m: &FeatureMatrix, names: &[String]) -> Result<FeatureMatrix> {
    let idx: Vec<usize> = names
        .iter()
        .map(|n| m.column_index(n).ok_or_else(|| Error::invalid(format!("no feature column `{n}`"))))
        .collect::<Result<_>>()?;
    Ok(m.select_columns(&idx))
}

impl FittedModel {
    fn prepare(&self, x: &FeatureSet, rows: &[usize], uses_text: bool) -> Result<Prepared> {
        let meta = match &self.preprocessor {
            Some(p) => {
                let raw = column_subset(&x.features.select_rows(rows), &self.columns)?;
                Some(apply_preprocessor(p, &raw)?)
            }
            None => None,
        };
        let text = if uses_text {
            let mut flats = x.flats_for(rows)?;
            if let Some(scale) = self.text_scale {
                let scale = scale as f32;
                flats.data.iter_mut().for_each(|v| *v *= scale);
            }
            Some(flats)
        } else {
            None
        };
        Ok(Prepared { meta, text })
    }

    /// Scores for the given rows. Only features are visible here.
    pub fn score(&self, x: &FeatureSet, rows: &[usize]) -> Result<Vec<f64>> {
        let p = self.prepare(x, rows, self.model.spec.uses_text())?;
        models::predict(&self.model, &p.inputs())
    }
}

/// Fits preprocessing and the model on `rows`.
pub fn fit(cfg: &ModelConfig, ds: &Dataset, rows: &[usize], seed: u64) -> Result<FittedModel> {
    let col_idx = cfg.columns.resolve(&ds.x.features)?;
    let columns: Vec<String> = col_idx.iter().map(|&c| ds.x.features.names[c].clone()).collect();
    let mut spec = cfg.spec.clone();
    spec.meta_width = columns.len();
    spec.seed = seed;
    if spec.uses_meta() && columns.is_empty() {
        return Err(Error::Config(format!("model `{}` needs at least one feature column", cfg.name)));
    }

    let labels = ds.labels_at(rows);
    let (train_rows, val_rows) = match (cfg.early_stopping, split_stratified(&labels, 0.1, seed ^ 0x5eed)) {
        (true, Ok(plan)) => (
            plan.train_indices.iter().map(|&i| rows[i]).collect::<Vec<_>>(),
            Some(plan.test_indices.iter().map(|&i| rows[i]).collect::<Vec<_>>()),
        ),
        _ => (rows.to_vec(), None),
    };

    let preprocessor = if spec.uses_meta() {
        let raw = ds.x.features.select_rows(&train_rows).select_columns(&col_idx);
        Some(fit_preprocessor(&raw, &cfg.name, seed)?)
    } else {
        None
    };
    let text_scale = if spec.uses_text() {
        Some(text_scale(&ds.x.flats_for(&train_rows)?))
    } else {
        None
    };
    let mut fitted = FittedModel {
        name: cfg.name.clone(),
        columns,
        preprocessor,
        text_scale,
        model: TrainedModel::initial(&ModelSpec::new(ModelKind::Logistic, 1))?,
    };
    let train_data = fitted.prepare(&ds.x, &train_rows, spec.uses_text())?;
    let train_labels = ds.labels_at(&train_rows);
    fitted.model = match &val_rows {
        Some(v) => {
            let val_data = fitted.prepare(&ds.x, v, spec.uses_text())?;
            let val_labels = ds.labels_at(v);
            models::train(&spec, &train_data.inputs(), &train_labels, Some((&val_data.inputs(), &val_labels)))?
        }
        None => models::train(&spec, &train_data.inputs(), &train_labels, None)?,
    };
    Ok(fitted)
}

/// Fits on `train`, then scores `test`. Test labels are looked up only after
/// scoring.
pub fn fit_and_score(cfg: &ModelConfig, ds: &Dataset, train: &[usize], test: &[usize], seed: u64) -> Result<(FittedModel, Vec<f64>)> {
    let fitted = fit(cfg, ds, train, seed)?;
    let scores = fitted.score(&ds.x, test)?;
    Ok((fitted, scores))
}

/// Stratified k-fold cross-validation over `rows`; one slice per fold and a
/// `mean ± 2 sd` summary.
pub fn cross_validate(cfg: &ModelConfig, ds: &Dataset, rows: &[usize], k: usize, seed: u64) -> Result<EvalReport> {
    ds.validate()?;
    let labels = ds.labels_at(rows);
    let folds = stratified_kfold(&labels, k, seed)?;
    let jobs: Vec<usize> = (0..k).collect();
    let results = par::map(&jobs, |&f| -> Result<Option<SliceMetrics>> {
        let test: Vec<usize> = folds[f].iter().map(|&p| rows[p]).collect();
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, fold)| fold.iter().map(|&p| rows[p]))
            .collect();
        let (_, scores) = fit_and_score(cfg, ds, &train, &test, seed.wrapping_add(f as u64))?;
        SliceMetrics::compute(SliceKey::Fold(f), &scores, &ds.labels_at(&test))
    });
    let mut report = EvalReport::new(Protocol::Cv, &cfg.name);
    for (f, r) in results.into_iter().enumerate() {
        match r? {
            Some(s) => report.slices.push(s),
            None => report.notes.push(format!("fold {f} has a single class; omitted")),
        }
    }
    report.summary = Summary::of(&report.slices);
    Ok(report)
}

pub fn holdout(cfg: &ModelConfig, ds: &Dataset, train: &[usize], test: &[usize], seed: u64) -> Result<(EvalReport, FittedModel)> {
    ds.validate()?;
    let (fitted, scores) = fit_and_score(cfg, ds, train, test, seed)?;
    let mut report = EvalReport::new(Protocol::Holdout, &cfg.name);
    match SliceMetrics::compute(SliceKey::Overall, &scores, &ds.labels_at(test))? {
        Some(s) => report.slices.push(s),
        None => report.notes.push("holdout set has a single class".into()),
    }
    report.summary = Summary::of(&report.slices);
    Ok((report, fitted))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub points: Vec<(BTreeMap<String, serde_json::Value>, f64)>,
    pub best: usize,
}

/// Picks the grid point with the highest mean cross-validated AUROC; ties go
/// to the earlier point.
pub fn grid_search(
    cfg: &ModelConfig,
    grid: &BTreeMap<String, Vec<serde_json::Value>>,
    ds: &Dataset,
    rows: &[usize],
    k: usize,
    seed: u64,
) -> Result<(GridResult, ModelConfig)> {
    let mut points = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for (i, point) in grid_points(grid).into_iter().enumerate() {
        let mut c = cfg.clone();
        c.spec = cfg.spec.with_overrides(&point)?;
        let r = cross_validate(&c, ds, rows, k, seed)?;
        let score = r.summary.map_or(f64::NEG_INFINITY, |s| s.mean_auroc);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((i, score));
        }
        points.push((point, score));
    }
    let (best, _) = best.ok_or_else(|| Error::Config("empty model grid".into()))?;
    let mut chosen = cfg.clone();
    chosen.spec = cfg.spec.with_overrides(&points[best].0)?;
    Ok((GridResult { points, best }, chosen))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemporalConfig {
    pub train_start: YearMonth,
    pub train_end: YearMonth,
    pub test_start: YearMonth,
    pub test_end: YearMonth,
    pub top_fields: usize,
    /// Rebalance each window to this positive:negative ratio.
    pub rebalance_ratio: Option<f64>,
}

impl Default for TemporalConfig {
    fn default() -> Self {
        TemporalConfig {
            train_start: YearMonth { year: 1990, month: 1 },
            train_end: YearMonth { year: 2013, month: 12 },
            test_start: YearMonth { year: 2014, month: 1 },
            test_end: YearMonth { year: 2017, month: 12 },
            top_fields: 8,
            rebalance_ratio: Some(1.1),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    /// Most frequent fields among the test rows, with their row counts.
    pub top_fields: Vec<(String, usize)>,
    pub notes: Vec<String>,
}

/// Fields ranked by how many of `rows` carry them; ties by field id.
pub fn top_fields(fields: &[Vec<String>], rows: &[usize], n: usize) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for &r in rows {
        let mut seen: Vec<&str> = Vec::new();
        for f in &fields[r] {
            if !seen.contains(&f.as_str()) {
                seen.push(f);
                *counts.entry(f).or_default() += 1;
            }
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().map(|(f, c)| (f.to_owned(), c)).collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(n);
    ranked
}

pub fn temporal_split(ds: &Dataset, cfg: &TemporalConfig, seed: u64) -> Result<TemporalSplit> {
    if ds.dates.len() != ds.len() {
        return Err(Error::invalid("temporal split needs a date for every row"));
    }
    if cfg.train_start > cfg.train_end || cfg.test_start > cfg.test_end {
        return Err(Error::Config("window start after its end".into()));
    }
    if cfg.train_end >= cfg.test_start {
        return Err(Error::Config("training window must end before the test window starts".into()));
    }
    let within = |lo: YearMonth, hi: YearMonth| -> Vec<usize> {
        (0..ds.len()).filter(|&i| ds.dates[i] >= lo && ds.dates[i] <= hi).collect()
    };
    let mut notes = Vec::new();
    let mut windows = [within(cfg.train_start, cfg.train_end), within(cfg.test_start, cfg.test_end)];
    if let Some(ratio) = cfg.rebalance_ratio {
        for (w, rows) in windows.iter_mut().enumerate() {
            let labels = ds.labels_at(rows);
            let kept = rebalance(&labels, ratio, seed.wrapping_add(w as u64))?;
            if let Some(msg) = kept.warning {
                notes.push(format!("{} window: {msg}", ["train", "test"][w]));
            }
            *rows = kept.indices.iter().map(|&i| rows[i]).collect();
        }
    }
    let [train, test] = windows;
    let top = if ds.fields.len() == ds.len() {
        top_fields(&ds.fields, &test, cfg.top_fields)
    } else {
        Vec::new()
    };
    Ok(TemporalSplit {
        train,
        test,
        top_fields: top,
        notes,
    })
}

/// Trains on the early window and reports the late window overall, per
/// year and per top field. Slices with a single class are omitted.
pub fn temporal_protocol(cfg: &ModelConfig, ds: &Dataset, tcfg: &TemporalConfig, seed: u64) -> Result<EvalReport> {
    ds.validate()?;
    let split = temporal_split(ds, tcfg, seed)?;
    temporal_eval(cfg, ds, tcfg, &split, seed)
}

/// Trains on `split.train` and reports the test window overall, per year and
/// per top field.
pub fn temporal_eval(cfg: &ModelConfig, ds: &Dataset, tcfg: &TemporalConfig, split: &TemporalSplit, seed: u64) -> Result<EvalReport> {
    ds.validate()?;
    if ds.dates.len() != ds.len() || (!split.top_fields.is_empty() && ds.fields.len() != ds.len()) {
        return Err(Error::invalid("temporal evaluation needs a date for every row"));
    }
    let (_, scores) = fit_and_score(cfg, ds, &split.train, &split.test, seed)?;
    let labels = ds.labels_at(&split.test);
    let mut report = EvalReport::new(Protocol::Temporal, &cfg.name);
    report.notes = split.notes.clone();

    let mut slices: Vec<(SliceKey, Vec<usize>)> = vec![(SliceKey::Overall, (0..split.test.len()).collect())];
    for year in tcfg.test_start.year..=tcfg.test_end.year {
        let pos: Vec<usize> = (0..split.test.len()).filter(|&p| ds.dates[split.test[p]].year == year).collect();
        slices.push((SliceKey::Year(year), pos));
    }
    for (field, _) in &split.top_fields {
        let pos: Vec<usize> = (0..split.test.len())
            .filter(|&p| ds.fields[split.test[p]].iter().any(|f| f == field))
            .collect();
        slices.push((SliceKey::Field(field.clone()), pos));
    }
    let computed = par::map(&slices, |(key, pos)| {
        let s: Vec<f64> = pos.iter().map(|&p| scores[p]).collect();
        let l: Vec<bool> = pos.iter().map(|&p| labels[p]).collect();
        SliceMetrics::compute(key.clone(), &s, &l)
    });
    for ((key, pos), m) in slices.iter().zip(computed) {
        match m? {
            Some(m) => report.slices.push(m),
            None if pos.is_empty() => report.notes.push(format!("slice {key} is empty; omitted")),
            None => report.notes.push(format!("slice {key} has a single class; omitted")),
        }
    }
    report.summary = Summary::of(
        &report
            .slices
            .iter()
            .filter(|s| matches!(s.key, SliceKey::Year(_)))
            .cloned()
            .collect::<Vec<_>>(),
    );
    Ok(report)
}

/// The five feature-restriction configurations, in report order.
pub fn ablation_configs(template: &ModelSpec) -> Vec<ModelConfig> {
    vec![
        ModelConfig::hybrid(AblationSpec::default()).with_training(template),
        ModelConfig::hybrid(AblationSpec {
            drop_paper_metrics: true,
            drop_extrinsic: false,
        })
        .with_training(template),
        ModelConfig::hybrid(AblationSpec {
            drop_paper_metrics: false,
            drop_extrinsic: true,
        })
        .with_training(template),
        ModelConfig::metadata().with_training(template),
        ModelConfig::embeddings_only().with_training(template),
    ]
}

/// Evaluates each configuration on the same holdout split; one slice per
/// configuration.
pub fn ablation_protocol(configs: &[ModelConfig], ds: &Dataset, train: &[usize], test: &[usize], seed: u64) -> Result<EvalReport> {
    ds.validate()?;
    let results = par::map(configs, |c| -> Result<Option<SliceMetrics>> {
        let (_, scores) = fit_and_score(c, ds, train, test, seed)?;
        SliceMetrics::compute(SliceKey::Ablation(c.name.clone()), &scores, &ds.labels_at(test))
    });
    let mut report = EvalReport::new(Protocol::Ablation, configs.first().map_or("", |c| c.name.as_str()));
    for (c, r) in configs.iter().zip(results) {
        match r? {
            Some(s) => report.slices.push(s),
            None => report.notes.push(format!("{}: test set has a single class", c.name)),
        }
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    pub retrieved: usize,
    pub total: usize,
    pub auroc: Option<f64>,
}

/// Counts external rows scored at or above `threshold`, and the AUROC
/// against their labels when both classes are present.
pub fn transfer_eval(model: &FittedModel, external: &Dataset, rows: &[usize], threshold: f64) -> Result<(TransferResult, EvalReport)> {
    external.validate()?;
    let scores = model.score(&external.x, rows)?;
    let retrieved = scores.iter().filter(|&&s| s >= threshold).count();
    let labels = external.labels_at(rows);
    let mut report = EvalReport::new(Protocol::Transfer, &model.name);
    let slice = SliceMetrics::compute(SliceKey::Overall, &scores, &labels)?;
    let auc = match slice {
        Some(s) => {
            let a = s.auroc;
            report.slices.push(s);
            Some(a)
        }
        None => {
            report.notes.push("external set has a single class; AUROC undefined".into());
            None
        }
    };
    debug_assert!(auc.is_none() || auc == auroc(&scores, &labels).ok());
    report.retrieval = Some(Retrieval {
        threshold,
        n_predicted_positive: retrieved,
        n_total: rows.len(),
    });
    Ok((
        TransferResult {
            retrieved,
            total: rows.len(),
            auroc: auc,
        },
        report,
    ))
}
