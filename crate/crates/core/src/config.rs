//! Pipeline configuration: a versioned TOML file. Relative paths resolve
//! against the directory holding the config file.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{SbmConfig, TsneConfig};
use crate::corpus::{FilterSpec, SourceKind, YearMonth, DEFAULT_MAX_ERROR_RATE};
use crate::error::{Error, Result};
use crate::eval::TemporalConfig;
use crate::features::RankConfig;
use crate::linkage::MatchThresholds;
use crate::rankings::DEFAULT_MIN_PAPERS;
use crate::synth::SyntheticSpec;

pub const CONFIG_VERSION: u32 = 1;

/// Model names the train stage understands.
pub const MODEL_NAMES: [&str; 8] = [
    "citations_per_year",
    "metadata",
    "hybrid",
    "hybrid_no_paper_metrics",
    "hybrid_no_extrinsic",
    "hybrid_no_metadata_metrics",
    "embeddings_only",
    "boosted_stumps",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl OneOrMany {
    pub fn paths(&self) -> Vec<PathBuf> {
        match self {
            OneOrMany::One(p) => vec![p.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

impl Default for OneOrMany {
    fn default() -> Self {
        OneOrMany::Many(Vec::new())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub papers: OneOrMany,
    #[serde(default)]
    pub citations: OneOrMany,
    #[serde(default)]
    pub vocab: OneOrMany,
    pub mentions: Option<PathBuf>,
    pub patents: Option<PathBuf>,
    pub guidelines: Option<PathBuf>,
    /// Embedding file; when absent or missing the fallback embedder runs.
    pub embeddings: Option<PathBuf>,
    /// Paper ids of an external reference set for transfer evaluation.
    pub external_ids: Option<PathBuf>,
    pub out: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    pub window_start: YearMonth,
    pub window_end: YearMonth,
    pub domain_fields: Option<BTreeSet<String>>,
    pub min_in_degree: u64,
    pub max_error_rate: f64,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let f = FilterSpec::default();
        CorpusSection {
            window_start: f.window_start,
            window_end: f.window_end,
            domain_fields: f.domain_fields,
            min_in_degree: f.min_in_degree,
            max_error_rate: DEFAULT_MAX_ERROR_RATE,
        }
    }
}

impl CorpusSection {
    pub fn filter_spec(&self) -> FilterSpec {
        FilterSpec {
            window_start: self.window_start,
            window_end: self.window_end,
            domain_fields: self.domain_fields.clone(),
            min_in_degree: self.min_in_degree,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeaturesSection {
    pub reference_year: i32,
    pub rank: RankConfig,
}

impl Default for FeaturesSection {
    fn default() -> Self {
        FeaturesSection {
            reference_year: 2019,
            rank: RankConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbedSection {
    pub fallback: bool,
}

impl Default for EmbedSection {
    fn default() -> Self {
        EmbedSection { fallback: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessSection {
    pub target: SourceKind,
    pub rebalance_ratio: f64,
    pub test_fraction: f64,
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            target: SourceKind::Patent,
            rebalance_ratio: 1.1,
            test_fraction: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub models: Vec<String>,
    /// Dotted model settings applied to every model, e.g. `"optimizer.epochs" = 10`.
    pub overrides: BTreeMap<String, serde_json::Value>,
    /// Settings searched by cross-validation on the training rows.
    pub grid: BTreeMap<String, Vec<serde_json::Value>>,
    pub grid_folds: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            models: vec!["citations_per_year".into(), "metadata".into(), "hybrid".into()],
            overrides: BTreeMap::new(),
            grid: BTreeMap::new(),
            grid_folds: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemporalSection {
    pub enabled: bool,
    pub model: String,
    /// `false` evaluates the windows at their natural class balance.
    pub rebalance: bool,
    #[serde(flatten)]
    pub windows: TemporalConfig,
}

impl Default for TemporalSection {
    fn default() -> Self {
        TemporalSection {
            enabled: true,
            model: "hybrid".into(),
            rebalance: true,
            windows: TemporalConfig::default(),
        }
    }
}

impl TemporalSection {
    /// Window settings with the rebalance switch applied.
    pub fn windows(&self) -> TemporalConfig {
        let mut w = self.windows.clone();
        if !self.rebalance {
            w.rebalance_ratio = None;
        }
        w
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub cross_validate: bool,
    pub cv_folds: usize,
    pub ablation: bool,
    pub temporal: TemporalSection,
    pub transfer_threshold: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection {
            cross_validate: true,
            cv_folds: 10,
            ablation: true,
            temporal: TemporalSection::default(),
            transfer_threshold: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SbmSection {
    pub max_blocks: usize,
    pub mcmc_sweeps: usize,
    pub restarts: usize,
}

impl Default for SbmSection {
    fn default() -> Self {
        let d = SbmConfig::default();
        SbmSection {
            max_blocks: d.max_blocks,
            mcmc_sweeps: d.mcmc_sweeps,
            restarts: d.restarts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProjectionSection {
    /// Rows sampled for the autoencoder and t-SNE.
    pub max_rows: usize,
    pub autoencoder_epochs: usize,
    pub perplexity: f64,
    pub iterations: usize,
}

impl Default for ProjectionSection {
    fn default() -> Self {
        let t = TsneConfig::default();
        ProjectionSection {
            max_rows: 1000,
            autoencoder_epochs: 20,
            perplexity: t.perplexity,
            iterations: t.iterations,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyzeSection {
    pub correlation_threshold: f64,
    pub sbm: SbmSection,
    pub projection: ProjectionSection,
    pub adaboost_rounds: usize,
    pub bootstrap: usize,
}

impl Default for AnalyzeSection {
    fn default() -> Self {
        AnalyzeSection {
            correlation_threshold: 0.05,
            sbm: SbmSection::default(),
            projection: ProjectionSection::default(),
            adaboost_rounds: 200,
            bootstrap: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankSection {
    pub min_papers: u64,
    pub top_n: Option<usize>,
}

impl Default for RankSection {
    fn default() -> Self {
        RankSection {
            min_papers: DEFAULT_MIN_PAPERS,
            top_n: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub version: u32,
    pub seed: u64,
    pub paths: Paths,
    #[serde(default)]
    pub corpus: CorpusSection,
    #[serde(default)]
    pub linkage: MatchThresholds,
    #[serde(default)]
    pub features: FeaturesSection,
    #[serde(default)]
    pub embed: EmbedSection,
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub analyze: AnalyzeSection,
    #[serde(default)]
    pub rank: RankSection,
    /// Corpus written by the `synth` command.
    #[serde(default)]
    pub synth: SyntheticSpec,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    /// Parses and validates config text; relative paths resolve against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let version = text
            .parse::<toml::Table>()
            .map_err(|e| Error::Config(e.to_string()))?
            .get("version")
            .and_then(toml::Value::as_integer);
        match version {
            Some(v) if v == i64::from(CONFIG_VERSION) => {}
            Some(v) => return Err(Error::Config(format!("unsupported config version {v}; expected {CONFIG_VERSION}"))),
            None => return Err(Error::Config("config needs `version = 1`".into())),
        }
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let p = &mut self.paths;
        let many = |v: &OneOrMany| OneOrMany::Many(v.paths().iter().map(|x| resolve(base, x)).collect());
        p.papers = many(&p.papers);
        p.citations = many(&p.citations);
        p.vocab = many(&p.vocab);
        for opt in [&mut p.mentions, &mut p.patents, &mut p.guidelines, &mut p.embeddings, &mut p.external_ids] {
            if let Some(x) = opt {
                *x = resolve(base, x);
            }
        }
        p.out = resolve(base, &p.out);
    }

    /// Every input path, plus the output directory.
    pub fn all_paths(&self) -> Vec<(&'static str, PathBuf)> {
        let p = &self.paths;
        let mut out = Vec::new();
        out.extend(p.papers.paths().into_iter().map(|x| ("papers", x)));
        out.extend(p.citations.paths().into_iter().map(|x| ("citations", x)));
        out.extend(p.vocab.paths().into_iter().map(|x| ("vocab", x)));
        for (name, opt) in [
            ("mentions", &p.mentions),
            ("patents", &p.patents),
            ("guidelines", &p.guidelines),
            ("embeddings", &p.embeddings),
            ("external_ids", &p.external_ids),
        ] {
            if let Some(x) = opt {
                out.push((name, x.clone()));
            }
        }
        out.push(("out", p.out.clone()));
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.version != CONFIG_VERSION {
            return bad(format!("unsupported config version {}", self.version));
        }
        if self.paths.papers.paths().is_empty() {
            return bad("paths.papers lists no file".into());
        }
        let mut seen: BTreeMap<PathBuf, &str> = BTreeMap::new();
        for (name, p) in self.all_paths() {
            if let Some(prev) = seen.insert(p.clone(), name) {
                return bad(format!("paths.{name} and paths.{prev} both point at {}", p.display()));
            }
        }
        let c = &self.corpus;
        if c.window_start > c.window_end {
            return bad("corpus window starts after it ends".into());
        }
        if !(0.0..=1.0).contains(&c.max_error_rate) {
            return bad("corpus.max_error_rate must lie in [0, 1]".into());
        }
        self.linkage.validate().map_err(|e| Error::Config(e.to_string()))?;
        let pp = &self.preprocess;
        if !(pp.rebalance_ratio.is_finite() && pp.rebalance_ratio > 0.0) {
            return bad("preprocess.rebalance_ratio must be positive".into());
        }
        if !(pp.test_fraction > 0.0 && pp.test_fraction < 1.0) {
            return bad("preprocess.test_fraction must lie in (0, 1)".into());
        }
        if self.train.models.is_empty() {
            return bad("train.models is empty".into());
        }
        let mut names = BTreeSet::new();
        for m in &self.train.models {
            if !MODEL_NAMES.contains(&m.as_str()) {
                return bad(format!("unknown model `{m}`; expected one of {MODEL_NAMES:?}"));
            }
            if !names.insert(m) {
                return bad(format!("model `{m}` listed twice"));
            }
        }
        if !self.train.grid.is_empty() && self.train.grid_folds < 2 {
            return bad("train.grid_folds must be at least 2".into());
        }
        if self.train.grid.values().any(Vec::is_empty) {
            return bad("train.grid has a setting with no values".into());
        }
        let e = &self.evaluate;
        if e.cross_validate && e.cv_folds < 2 {
            return bad("evaluate.cv_folds must be at least 2".into());
        }
        if e.temporal.enabled && !MODEL_NAMES.contains(&e.temporal.model.as_str()) {
            return bad(format!("unknown temporal model `{}`", e.temporal.model));
        }
        let w = &e.temporal.windows;
        if w.train_start > w.train_end || w.test_start > w.test_end || w.train_end >= w.test_start {
            return bad("temporal windows must be ordered and disjoint".into());
        }
        if !(0.0..=1.0).contains(&e.transfer_threshold) {
            return bad("evaluate.transfer_threshold must lie in [0, 1]".into());
        }
        let a = &self.analyze;
        if !(0.0..=1.0).contains(&a.correlation_threshold) {
            return bad("analyze.correlation_threshold must lie in [0, 1]".into());
        }
        if a.sbm.max_blocks == 0 || a.sbm.restarts == 0 {
            return bad("analyze.sbm needs max_blocks and restarts of at least 1".into());
        }
        if a.projection.perplexity <= 0.0 {
            return bad("analyze.projection.perplexity must be positive".into());
        }
        self.synth.validate()
    }

    /// Canonical JSON form, the basis of the config hash.
    pub fn canonical_json(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        serde_json::to_string(&v).expect("value serializes")
    }

    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}
