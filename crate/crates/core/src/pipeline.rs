//! Stage orchestration. Every stage reads the files written by earlier
//! stages under the output directory and writes its own subdirectory, so any
//! stage can be rerun on its own. A manifest records the config, per-stage
//! seeds and a hash of every artifact.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    correlation_graph, eigencentrality, inclusion_overlay, layout, nmi, sbm_fit, tsne, write_partition, FeatureGraph,
    LayoutConfig, SbmConfig, TsneConfig,
};
use crate::config::PipelineConfig;
use crate::corpus::{
    attach_inclusions, count_mentions, filter_corpus, parse_corpus, read_guideline_sources, read_mention_events,
    read_patent_sources, write_corpus, Corpus, CorpusFiles, InclusionSource, PaperId, PaperRecord, ParseOptions,
    SourceKind,
};
use crate::embed::{embed_many, read_temb, write_flat_matrix, FlatMatrix};
use crate::error::{Error, Result};
use crate::eval::{
    ablation_configs, ablation_protocol, cross_validate, emit_report, fit, grid_search, pearson_bootstrap,
    temporal_eval, temporal_split, transfer_eval, Dataset, EvalReport, FeatureSet, FittedModel, ModelConfig, Protocol,
    SliceKey, SliceMetrics, Summary, TemporalSplit,
};
use crate::features::{
    aggregate_entity_stats, assemble_all, corpus_paper_ranks, read_matrix, to_matrix, write_matrix, AblationSpec,
    FeatureContext, FeatureMatrix, FieldVocab,
};
use crate::linkage::{build_tfidf_index, resolve_sources, write_decisions, Verdict};
use crate::models::{adaboost_fit, autoencoder_fit, read_model, write_model, write_training_log, ModelKind, ModelSpec, TextView};
use crate::preprocess::{apply_preprocessor, fit_preprocessor, rebalance, rng, split_stratified, PreprocessorParams};
use crate::rankings::{journal_table, write_table, TableMetric};
use crate::synth::read_id_list;

pub const MANIFEST_FORMAT: &str = "manifest/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Link,
    Features,
    Preprocess,
    Embed,
    Train,
    Evaluate,
    Analyze,
    Rank,
}

impl Stage {
    /// Dependency order. Embedding runs after preprocessing so that only the
    /// rows some model or analysis will read get embedded.
    pub const ALL: [Stage; 9] = [
        Stage::Ingest,
        Stage::Link,
        Stage::Features,
        Stage::Preprocess,
        Stage::Embed,
        Stage::Train,
        Stage::Evaluate,
        Stage::Analyze,
        Stage::Rank,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Link => "link",
            Stage::Features => "features",
            Stage::Preprocess => "preprocess",
            Stage::Embed => "embed",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Analyze => "analyze",
            Stage::Rank => "rank",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage `{s}`")))
    }
}

/// A failure tagged with the stage that raised it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Option<Stage>,
    pub error: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        self.error.exit_code()
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.stage {
            Some(s) => write!(f, "stage {s} failed: {}", self.error),
            None => write!(f, "{}", self.error),
        }
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub seed: u64,
    pub artifacts: Vec<Artifact>,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub config_sha256: String,
    pub config: serde_json::Value,
    pub stages: BTreeMap<String, StageRecord>,
}

impl Manifest {
    fn new(cfg: &PipelineConfig) -> Self {
        Manifest {
            format: MANIFEST_FORMAT.into(),
            config_sha256: cfg.sha256(),
            config: serde_json::to_value(cfg).expect("config serializes"),
            stages: BTreeMap::new(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
    }

    fn write(&self, path: &Path) -> Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn notes(&self) -> impl Iterator<Item = &str> {
        self.stages.values().flat_map(|s| s.notes.iter().map(String::as_str))
    }
}

/// Seed for one stage, derived from the run seed and the stage name.
pub fn stage_seed(seed: u64, stage: Stage) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{}", stage.name()).as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hash of the manifest file, the single fingerprint of a run.
pub fn manifest_sha256(out: &Path) -> Result<String> {
    sha256_file(&out.join(MANIFEST_FILE))
}

/// Held for the duration of a run; removed on drop.
struct RunLock(PathBuf);

impl RunLock {
    fn acquire(out: &Path) -> Result<Self> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(RunLock(path))
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Stage {
                stage: "lock".into(),
                message: format!("{} exists: another run is using this output directory (remove it if stale)", path.display()),
            }),
            Err(e) => Err(Error::io(&path, e)),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.0);
    }
}

/// Runs every stage in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> std::result::Result<Manifest, StageError> {
    run_stages(cfg, &Stage::ALL)
}

/// Runs the given stages in dependency order, updating the manifest after
/// each. Artifacts of a failed stage are left in place.
pub fn run_stages(cfg: &PipelineConfig, stages: &[Stage]) -> std::result::Result<Manifest, StageError> {
    let bare = |error| StageError { stage: None, error };
    cfg.validate().map_err(bare)?;
    let out = cfg.paths.out.clone();
    let _lock = RunLock::acquire(&out).map_err(bare)?;
    let manifest_path = out.join(MANIFEST_FILE);
    let mut manifest = match Manifest::read(&manifest_path) {
        Ok(m) if m.config_sha256 == cfg.sha256() => m,
        _ => Manifest::new(cfg),
    };
    let mut order: Vec<Stage> = stages.to_vec();
    order.sort();
    order.dedup();
    for stage in order {
        let tagged = |error| StageError { stage: Some(stage), error };
        let ctx = Ctx {
            cfg,
            out: &out,
            seed: stage_seed(cfg.seed, stage),
        };
        let dir = ctx.dir(stage);
        fs::create_dir_all(&dir).map_err(|e| tagged(Error::io(&dir, e)))?;
        manifest.stages.remove(stage.name());
        let outcome = run_one(&ctx, stage).map_err(tagged)?;
        let mut artifacts = Vec::new();
        for path in outcome.artifacts {
            let rel = path.strip_prefix(&out).unwrap_or(&path);
            let bytes = fs::metadata(&path).map_err(|e| tagged(Error::io(&path, e)))?.len();
            artifacts.push(Artifact {
                path: rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"),
                sha256: sha256_file(&path).map_err(tagged)?,
                bytes,
            });
        }
        artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        manifest.stages.insert(
            stage.name().into(),
            StageRecord {
                seed: ctx.seed,
                artifacts,
                notes: outcome.notes,
            },
        );
        manifest.write(&manifest_path).map_err(tagged)?;
    }
    Ok(manifest)
}

fn run_one(ctx: &Ctx, stage: Stage) -> Result<Outcome> {
    match stage {
        Stage::Ingest => ingest(ctx),
        Stage::Link => link(ctx),
        Stage::Features => features(ctx),
        Stage::Preprocess => preprocess(ctx),
        Stage::Embed => embed(ctx),
        Stage::Train => train(ctx),
        Stage::Evaluate => evaluate(ctx),
        Stage::Analyze => analyze(ctx),
        Stage::Rank => rank(ctx),
    }
}

struct Ctx<'a> {
    cfg: &'a PipelineConfig,
    out: &'a Path,
    seed: u64,
}

impl Ctx<'_> {
    fn dir(&self, stage: Stage) -> PathBuf {
        self.out.join(stage.name())
    }

    fn file(&self, stage: Stage, name: &str) -> PathBuf {
        self.dir(stage).join(name)
    }

    fn parse_options(&self) -> ParseOptions {
        ParseOptions {
            max_error_rate: self.cfg.corpus.max_error_rate,
        }
    }
}

#[derive(Default)]
struct Outcome {
    artifacts: Vec<PathBuf>,
    notes: Vec<String>,
}

impl Outcome {
    fn add(&mut self, path: PathBuf) {
        self.artifacts.push(path);
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

fn write_tsv(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> Result<()> {
    let mut body = format!("{header}\n");
    for r in rows {
        body.push_str(&r);
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} {} does not exist", path.display())))
    }
}

fn load_corpus(ctx: &Ctx, stage: Stage) -> Result<Corpus> {
    let papers = ctx.file(stage, "papers.jsonl");
    require(&papers, &format!("{stage} output"))?;
    let files = CorpusFiles {
        papers: vec![papers],
        citations: Vec::new(),
        vocab: vec![ctx.file(stage, "vocab.jsonl")],
    };
    Ok(parse_corpus(&files, ParseOptions { max_error_rate: 0.0 })?.0)
}

// ---------------------------------------------------------------------------
// ingest, link, features

fn ingest(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.cfg.paths;
    let files = CorpusFiles {
        papers: p.papers.paths(),
        citations: p.citations.paths(),
        vocab: p.vocab.paths(),
    };
    for f in files.papers.iter().chain(&files.citations).chain(&files.vocab) {
        require(f, "input file")?;
    }
    let (mut corpus, ingest_report) = parse_corpus(&files, ctx.parse_options())?;
    let mentions = match &p.mentions {
        Some(path) => {
            require(path, "mentions file")?;
            let (events, file_report) = read_mention_events(path, ctx.parse_options())?;
            let (c, report) = count_mentions(&corpus, events);
            corpus = c;
            Some((file_report, report))
        }
        None => None,
    };
    let (filtered, filter_report) = filter_corpus(&corpus, &ctx.cfg.corpus.filter_spec());
    if filtered.is_empty() {
        return Err(Error::invalid("no paper survives the corpus filter"));
    }
    let mut out = Outcome::default();
    let (papers, vocab) = (ctx.file(Stage::Ingest, "papers.jsonl"), ctx.file(Stage::Ingest, "vocab.jsonl"));
    write_corpus(&filtered, &papers, &vocab)?;
    let report = ctx.file(Stage::Ingest, "report.json");
    write_json(
        &report,
        &serde_json::json!({
            "ingest": ingest_report,
            "mentions": mentions,
            "filter": filter_report,
        }),
    )?;
    if ingest_report.files.iter().any(|f| f.failed > 0) {
        out.notes.push("some input records were malformed and skipped; see ingest/report.json".into());
    }
    out.add(papers);
    out.add(vocab);
    out.add(report);
    Ok(out)
}

#[derive(Serialize)]
struct LinkReport {
    patent_documents: usize,
    guideline_documents: usize,
    title_references: usize,
    accepted: usize,
    review: usize,
    rejected: usize,
    resolved_references: u64,
    unresolved_references: u64,
    patent_positive_papers: usize,
    guideline_positive_papers: usize,
}

fn link(ctx: &Ctx) -> Result<Outcome> {
    let corpus = load_corpus(ctx, Stage::Ingest)?;
    let p = &ctx.cfg.paths;
    let mut sources: Vec<InclusionSource> = Vec::new();
    let mut n_patent = 0;
    if let Some(path) = &p.patents {
        require(path, "patents file")?;
        let (s, _) = read_patent_sources(path, ctx.parse_options())?;
        n_patent = s.len();
        sources.extend(s);
    }
    let mut decisions = Vec::new();
    let mut n_guideline = 0;
    if let Some(path) = &p.guidelines {
        require(path, "guidelines file")?;
        let (s, _) = read_guideline_sources(path, ctx.parse_options())?;
        n_guideline = s.len();
        let titles: Vec<(PaperId, &str)> = corpus.papers().map(|r| (r.paper_id.clone(), r.title.as_str())).collect();
        let index = build_tfidf_index(&titles)?;
        let (resolved, d) = resolve_sources(&s, &index, &ctx.cfg.linkage)?;
        sources.extend(resolved);
        decisions = d;
    }

    let (linked, inclusion_report) = attach_inclusions(&corpus, &sources);
    // kinds without a source file keep the counts carried by the papers file
    let linked = if p.patents.is_none() || p.guidelines.is_none() {
        let records: Vec<PaperRecord> = linked
            .papers()
            .map(|r| {
                let mut r = r.clone();
                let original = corpus.get(&r.paper_id).expect("same papers");
                if p.patents.is_none() {
                    r.patent_inclusions = original.patent_inclusions;
                }
                if p.guidelines.is_none() {
                    r.guideline_policy_inclusions = original.guideline_policy_inclusions;
                }
                r
            })
            .collect();
        Corpus::from_records(records, linked.vocab().clone())
    } else {
        linked
    };

    let mut out = Outcome::default();
    let (papers, vocab) = (ctx.file(Stage::Link, "papers.jsonl"), ctx.file(Stage::Link, "vocab.jsonl"));
    write_corpus(&linked, &papers, &vocab)?;
    let all = ctx.file(Stage::Link, "decisions.tsv");
    let queue = ctx.file(Stage::Link, "review_queue.tsv");
    write_decisions(&all, &decisions, false)?;
    write_decisions(&queue, &decisions, true)?;
    let count = |v: Verdict| decisions.iter().filter(|d| d.verdict == v).count();
    let report = LinkReport {
        patent_documents: n_patent,
        guideline_documents: n_guideline,
        title_references: decisions.len(),
        accepted: count(Verdict::Accepted),
        review: count(Verdict::Review),
        rejected: count(Verdict::Rejected),
        resolved_references: inclusion_report.resolved_references,
        unresolved_references: inclusion_report.unresolved_references,
        patent_positive_papers: linked.papers().filter(|r| r.label(SourceKind::Patent)).count(),
        guideline_positive_papers: linked.papers().filter(|r| r.label(SourceKind::GuidelineOrPolicy)).count(),
    };
    let report_path = ctx.file(Stage::Link, "report.json");
    write_json(&report_path, &report)?;
    if report.review > 0 {
        out.notes.push(format!("{} title matches await review in link/review_queue.tsv", report.review));
    }
    for f in [papers, vocab, all, queue, report_path] {
        out.add(f);
    }
    Ok(out)
}

fn features(ctx: &Ctx) -> Result<Outcome> {
    let corpus = load_corpus(ctx, Stage::Link)?;
    let fcfg = &ctx.cfg.features;
    let (ranks, rank_result) = corpus_paper_ranks(&corpus, &fcfg.rank)?;
    let stats = aggregate_entity_stats(&corpus, &ranks);
    let fields = FieldVocab::from_corpus(&corpus);
    let fctx = FeatureContext {
        corpus: &corpus,
        ranks: &ranks,
        stats: &stats,
        fields: &fields,
        reference_year: fcfg.reference_year,
    };
    let rows = assemble_all(&fctx);
    let m = to_matrix(&rows, &fields);
    let mut out = Outcome::default();
    let path = ctx.file(Stage::Features, "features.tsv");
    write_matrix(&path, &m)?;
    let report = ctx.file(Stage::Features, "report.json");
    write_json(
        &report,
        &serde_json::json!({
            "rows": m.rows(),
            "columns": m.cols(),
            "rank_iterations": rank_result.iterations,
            "rank_converged": rank_result.converged,
        }),
    )?;
    if !rank_result.converged {
        out.notes.push("paper rank did not converge within the iteration limit".into());
    }
    out.add(path);
    out.add(report);
    Ok(out)
}

// ---------------------------------------------------------------------------
// preprocess and embed

/// Row choices shared by every later stage, by paper id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub target: SourceKind,
    /// Rebalanced rows: every positive and a sample of negatives.
    pub rows: Vec<PaperId>,
    pub train: Vec<PaperId>,
    pub test: Vec<PaperId>,
    pub temporal: Option<TemporalRows>,
    /// External reference papers found in the corpus, kept out of training.
    pub external: Vec<PaperId>,
    pub external_missing: usize,
    pub notes: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalRows {
    pub train: Vec<PaperId>,
    pub test: Vec<PaperId>,
    pub top_fields: Vec<(String, usize)>,
    pub notes: Vec<String>,
}

/// Feature rows joined with the corpus facts the protocols need.
pub struct LoadedData {
    pub dataset: Dataset,
    pub row_of: HashMap<PaperId, usize>,
}

impl LoadedData {
    pub fn rows(&self, ids: &[PaperId]) -> Result<Vec<usize>> {
        ids.iter()
            .map(|id| self.row_of.get(id).copied().ok_or_else(|| Error::invalid(format!("paper {} has no feature row", id.0))))
            .collect()
    }
}

pub fn build_dataset(corpus: &Corpus, features: FeatureMatrix, target: SourceKind, flats: Option<FlatMatrix>) -> Result<LoadedData> {
    let mut labels = Vec::with_capacity(features.rows());
    let mut dates = Vec::with_capacity(features.rows());
    let mut fields = Vec::with_capacity(features.rows());
    for id in &features.paper_ids {
        let p = corpus
            .get(id)
            .ok_or_else(|| Error::invalid(format!("feature row for paper {} missing from the corpus", id.0)))?;
        labels.push(p.label(target));
        dates.push(p.year_month().ok_or_else(|| Error::invalid(format!("paper {} has no date", id.0)))?);
        fields.push(p.field_ids.clone());
    }
    let row_of = features.paper_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
    let dataset = Dataset {
        x: FeatureSet { features, flats },
        labels,
        dates,
        fields,
    };
    dataset.validate()?;
    Ok(LoadedData { dataset, row_of })
}

fn load_data(ctx: &Ctx, with_flats: bool) -> Result<(LoadedData, Selection)> {
    let corpus = load_corpus(ctx, Stage::Link)?;
    let fpath = ctx.file(Stage::Features, "features.tsv");
    require(&fpath, "features output")?;
    let features = read_matrix(&fpath)?;
    let spath = ctx.file(Stage::Preprocess, "selection.json");
    require(&spath, "preprocess output")?;
    let selection: Selection = read_json(&spath)?;
    let flats = if with_flats {
        let path = ctx.file(Stage::Embed, "flats.temb");
        require(&path, "embed output")?;
        Some(read_temb(&path)?)
    } else {
        None
    };
    Ok((build_dataset(&corpus, features, selection.target, flats)?, selection))
}

/// Dataset and row selection as seen by the train and evaluate stages of a
/// run whose earlier stages have completed.
pub fn load_stage_data(cfg: &PipelineConfig, with_flats: bool) -> Result<(LoadedData, Selection)> {
    let ctx = Ctx {
        cfg,
        out: &cfg.paths.out,
        seed: 0,
    };
    load_data(&ctx, with_flats)
}

fn ids_of(ds: &Dataset, rows: &[usize]) -> Vec<PaperId> {
    rows.iter().map(|&r| ds.x.features.paper_ids[r].clone()).collect()
}

fn preprocess(ctx: &Ctx) -> Result<Outcome> {
    let corpus = load_corpus(ctx, Stage::Link)?;
    let fpath = ctx.file(Stage::Features, "features.tsv");
    require(&fpath, "features output")?;
    let features = read_matrix(&fpath)?;
    let pcfg = &ctx.cfg.preprocess;
    let data = build_dataset(&corpus, features, pcfg.target, None)?;
    let ds = &data.dataset;
    let mut notes = Vec::new();

    let (external, external_missing) = match &ctx.cfg.paths.external_ids {
        Some(path) => {
            require(path, "external id list")?;
            let ids = read_id_list(path)?;
            let total = ids.len();
            let mut seen = HashSet::new();
            let found: Vec<PaperId> = ids.into_iter().filter(|id| data.row_of.contains_key(id) && seen.insert(id.clone())).collect();
            (found.clone(), total - found.len())
        }
        None => (Vec::new(), 0),
    };
    if external_missing > 0 {
        notes.push(format!("{external_missing} external ids are not in the filtered corpus"));
    }
    let excluded: HashSet<&PaperId> = external.iter().collect();
    let candidates: Vec<usize> = (0..ds.len()).filter(|&r| !excluded.contains(&ds.x.features.paper_ids[r])).collect();

    let rb = rebalance(&ds.labels_at(&candidates), pcfg.rebalance_ratio, ctx.seed)?;
    if let Some(w) = &rb.warning {
        notes.push(w.clone());
    }
    let rows: Vec<usize> = rb.indices.iter().map(|&i| candidates[i]).collect();
    let plan = split_stratified(&ds.labels_at(&rows), pcfg.test_fraction, ctx.seed.wrapping_add(1))?;
    let train: Vec<usize> = plan.train_indices.iter().map(|&i| rows[i]).collect();
    let test: Vec<usize> = plan.test_indices.iter().map(|&i| rows[i]).collect();

    let tcfg = &ctx.cfg.evaluate.temporal;
    let temporal = if tcfg.enabled {
        let sub = Dataset {
            x: FeatureSet {
                features: ds.x.features.select_rows(&candidates),
                flats: None,
            },
            labels: ds.labels_at(&candidates),
            dates: candidates.iter().map(|&r| ds.dates[r]).collect(),
            fields: candidates.iter().map(|&r| ds.fields[r].clone()).collect(),
        };
        match temporal_split(&sub, &tcfg.windows(), ctx.seed.wrapping_add(2)) {
            Ok(split) => {
                let back = |v: &[usize]| -> Vec<PaperId> { v.iter().map(|&i| ds.x.features.paper_ids[candidates[i]].clone()).collect() };
                Some(TemporalRows {
                    train: back(&split.train),
                    test: back(&split.test),
                    top_fields: split.top_fields,
                    notes: split.notes,
                })
            }
            Err(e @ Error::Config(_)) => return Err(e),
            Err(e) => {
                notes.push(format!("temporal split skipped: {e}"));
                None
            }
        }
    } else {
        None
    };

    let params = fit_preprocessor(&ds.x.features.select_rows(&train), "train", ctx.seed)?;
    let selection = Selection {
        target: pcfg.target,
        rows: ids_of(ds, &rows),
        train: ids_of(ds, &train),
        test: ids_of(ds, &test),
        temporal,
        external,
        external_missing,
        notes: notes.clone(),
    };
    let mut out = Outcome {
        notes,
        ..Outcome::default()
    };
    let spath = ctx.file(Stage::Preprocess, "selection.json");
    write_json(&spath, &selection)?;
    let ppath = ctx.file(Stage::Preprocess, "preprocessor.json");
    params.save(&ppath)?;
    out.add(spath);
    out.add(ppath);
    Ok(out)
}

fn uses_text(name: &str) -> bool {
    matches!(name, "hybrid" | "hybrid_no_paper_metrics" | "hybrid_no_extrinsic" | "hybrid_no_metadata_metrics" | "embeddings_only")
}

fn embed(ctx: &Ctx) -> Result<Outcome> {
    let corpus = load_corpus(ctx, Stage::Link)?;
    let spath = ctx.file(Stage::Preprocess, "selection.json");
    require(&spath, "preprocess output")?;
    let selection: Selection = read_json(&spath)?;
    let mut wanted: HashSet<&PaperId> = selection.rows.iter().chain(&selection.external).collect();
    let e = &ctx.cfg.evaluate;
    if let Some(t) = &selection.temporal {
        if e.temporal.enabled && uses_text(&e.temporal.model) {
            wanted.extend(t.train.iter().chain(&t.test));
        }
    }
    // corpus order keeps the file independent of hash-set iteration
    let ids: Vec<&PaperRecord> = corpus.papers().filter(|p| wanted.contains(&p.paper_id)).collect();

    let mut out = Outcome::default();
    let configured = ctx.cfg.paths.embeddings.as_ref();
    let (flats, source) = match configured {
        Some(path) if path.exists() => {
            let all = read_temb(path)?;
            let index: HashMap<&PaperId, usize> = all.ids.iter().enumerate().map(|(i, id)| (id, i)).collect();
            let mut picked = Vec::with_capacity(ids.len());
            let mut missing = Vec::new();
            for p in &ids {
                match index.get(&p.paper_id) {
                    Some(&i) => picked.push(i),
                    None => missing.push(p.paper_id.0.clone()),
                }
            }
            if !missing.is_empty() {
                return Err(Error::invalid(format!(
                    "{} has no vector for {} needed papers, e.g. {}",
                    path.display(),
                    missing.len(),
                    missing[0]
                )));
            }
            (all.select(&picked), format!("file {}", path.display()))
        }
        _ if ctx.cfg.embed.fallback => {
            let input: Vec<(PaperId, String, Option<String>)> =
                ids.iter().map(|p| (p.paper_id.clone(), p.title.clone(), p.r#abstract.clone())).collect();
            let note = match configured {
                Some(path) => format!("embedding file {} not found; fallback embedder used", path.display()),
                None => "no embedding file configured; fallback embedder used".to_string(),
            };
            out.notes.push(note);
            (embed_many(&input), "fallback".to_string())
        }
        Some(path) => return Err(Error::invalid(format!("embedding file {} not found and fallback is disabled", path.display()))),
        None => return Err(Error::Config("no embedding file configured and fallback is disabled".into())),
    };
    let path = ctx.file(Stage::Embed, "flats.temb");
    write_flat_matrix(&path, &flats)?;
    let report = ctx.file(Stage::Embed, "report.json");
    write_json(&report, &serde_json::json!({ "source": source, "papers": flats.len() }))?;
    out.add(path);
    out.add(report);
    Ok(out)
}

// ---------------------------------------------------------------------------
// train and evaluate

/// Model settings shared by every model before per-model grids.
pub fn training_template(cfg: &PipelineConfig) -> Result<ModelSpec> {
    ModelSpec::default().with_overrides(&cfg.train.overrides)
}

pub fn model_config(name: &str, template: &ModelSpec) -> Result<ModelConfig> {
    let ablation = |paper, extrinsic| AblationSpec {
        drop_paper_metrics: paper,
        drop_extrinsic: extrinsic,
    };
    let c = match name {
        "citations_per_year" => ModelConfig::citation_baseline(),
        "metadata" => ModelConfig::metadata(),
        "hybrid" => ModelConfig::hybrid(ablation(false, false)),
        "hybrid_no_paper_metrics" => ModelConfig::hybrid(ablation(true, false)),
        "hybrid_no_extrinsic" => ModelConfig::hybrid(ablation(false, true)),
        "hybrid_no_metadata_metrics" => ModelConfig::hybrid(ablation(true, true)),
        "embeddings_only" => ModelConfig::embeddings_only(),
        "boosted_stumps" => ModelConfig::boosted_stumps(),
        other => return Err(Error::Config(format!("unknown model `{other}`"))),
    };
    Ok(c.with_training(template))
}

/// Everything but the weights of a fitted model.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct FittedSidecar {
    config: ModelConfig,
    columns: Vec<String>,
    text_scale: Option<f64>,
    preprocessor: Option<PreprocessorParams>,
}

fn save_fitted(dir: &Path, cfg: &ModelConfig, fitted: &FittedModel, out: &mut Outcome) -> Result<()> {
    let model = dir.join(format!("{}.tmod", cfg.name));
    write_model(&model, &fitted.model)?;
    let side = dir.join(format!("{}.json", cfg.name));
    write_json(
        &side,
        &FittedSidecar {
            config: cfg.clone(),
            columns: fitted.columns.clone(),
            text_scale: fitted.text_scale,
            preprocessor: fitted.preprocessor.clone(),
        },
    )?;
    let log = dir.join(format!("{}.log.jsonl", cfg.name));
    write_training_log(&log, &fitted.model.training_log)?;
    out.add(model);
    out.add(side);
    out.add(log);
    Ok(())
}

fn load_fitted(dir: &Path, name: &str) -> Result<(ModelConfig, FittedModel)> {
    let side_path = dir.join(format!("{name}.json"));
    require(&side_path, "trained model")?;
    let side: FittedSidecar = read_json(&side_path)?;
    let model = read_model(&dir.join(format!("{name}.tmod")))?;
    Ok((
        side.config,
        FittedModel {
            name: name.to_string(),
            columns: side.columns,
            preprocessor: side.preprocessor,
            text_scale: side.text_scale,
            model,
        },
    ))
}

fn train(ctx: &Ctx) -> Result<Outcome> {
    let (data, selection) = load_data(ctx, true)?;
    let ds = &data.dataset;
    let train_rows = data.rows(&selection.train)?;
    let template = training_template(ctx.cfg)?;
    let dir = ctx.dir(Stage::Train);
    let mut out = Outcome::default();
    for name in &ctx.cfg.train.models {
        let mut mcfg = model_config(name, &template)?;
        if !ctx.cfg.train.grid.is_empty() {
            let (grid, chosen) = grid_search(&mcfg, &ctx.cfg.train.grid, ds, &train_rows, ctx.cfg.train.grid_folds, ctx.seed)?;
            let path = dir.join(format!("{name}.grid.json"));
            write_json(&path, &grid)?;
            out.add(path);
            mcfg = chosen;
        }
        let fitted = fit(&mcfg, ds, &train_rows, ctx.seed)?;
        save_fitted(&dir, &mcfg, &fitted, &mut out)?;
    }
    Ok(out)
}

fn scored_report(protocol: Protocol, name: &str, scores: &[f64], labels: &[bool], empty_note: &str) -> Result<EvalReport> {
    let mut report = EvalReport::new(protocol, name);
    match SliceMetrics::compute(SliceKey::Overall, scores, labels)? {
        Some(s) => report.slices.push(s),
        None => report.notes.push(empty_note.into()),
    }
    report.summary = Summary::of(&report.slices);
    Ok(report)
}

#[derive(Default, Serialize)]
struct EvalSummary {
    holdout: BTreeMap<String, Option<(f64, f64)>>,
    cross_validation: BTreeMap<String, Option<Summary>>,
    temporal: Option<BTreeMap<String, f64>>,
    ablation: BTreeMap<String, f64>,
    transfer: BTreeMap<String, (usize, usize, Option<f64>)>,
}

fn evaluate(ctx: &Ctx) -> Result<Outcome> {
    let (data, selection) = load_data(ctx, true)?;
    let ds = &data.dataset;
    let e = &ctx.cfg.evaluate;
    let dir = ctx.dir(Stage::Evaluate);
    let train_dir = ctx.dir(Stage::Train);
    let rows = data.rows(&selection.rows)?;
    let train_rows = data.rows(&selection.train)?;
    let test_rows = data.rows(&selection.test)?;
    let external = data.rows(&selection.external)?;
    let test_labels = ds.labels_at(&test_rows);
    let mut out = Outcome::default();
    let mut summary = EvalSummary::default();
    let emit = |report: &EvalReport, stem: &str, out: &mut Outcome| -> Result<()> {
        let files = emit_report(report, &dir, stem)?;
        out.add(files.results);
        out.add(files.roc);
        out.add(files.pr);
        Ok(())
    };

    let mut configs = Vec::new();
    for name in &ctx.cfg.train.models {
        let (mcfg, fitted) = load_fitted(&train_dir, name)?;
        let scores = fitted.score(&ds.x, &test_rows)?;
        let report = scored_report(Protocol::Holdout, name, &scores, &test_labels, "holdout set has a single class")?;
        summary
            .holdout
            .insert(name.clone(), report.slices.first().map(|s| (s.auroc, s.average_precision)));
        emit(&report, &format!("holdout_{name}"), &mut out)?;

        if !external.is_empty() {
            let (t, report) = transfer_eval(&fitted, ds, &external, e.transfer_threshold)?;
            summary.transfer.insert(name.clone(), (t.retrieved, t.total, t.auroc));
            emit(&report, &format!("transfer_{name}"), &mut out)?;
        }
        configs.push(mcfg);
    }

    if e.cross_validate {
        for mcfg in &configs {
            let report = cross_validate(mcfg, ds, &rows, e.cv_folds, ctx.seed)?;
            summary.cross_validation.insert(mcfg.name.clone(), report.summary);
            emit(&report, &format!("cv_{}", mcfg.name), &mut out)?;
        }
    }

    if e.ablation {
        let template = training_template(ctx.cfg)?;
        let report = ablation_protocol(&ablation_configs(&template), ds, &train_rows, &test_rows, ctx.seed)?;
        for s in &report.slices {
            if let SliceKey::Ablation(name) = &s.key {
                summary.ablation.insert(name.clone(), s.auroc);
            }
        }
        emit(&report, "ablation", &mut out)?;
    }

    if let (true, Some(t)) = (e.temporal.enabled, &selection.temporal) {
        let mcfg = match configs.iter().find(|c| c.name == e.temporal.model) {
            Some(c) => c.clone(),
            None => model_config(&e.temporal.model, &training_template(ctx.cfg)?)?,
        };
        let split = TemporalSplit {
            train: data.rows(&t.train)?,
            test: data.rows(&t.test)?,
            top_fields: t.top_fields.clone(),
            notes: t.notes.clone(),
        };
        let report = temporal_eval(&mcfg, ds, &e.temporal.windows(), &split, ctx.seed)?;
        summary.temporal = Some(report.slices.iter().map(|s| (s.key.to_string(), s.auroc)).collect());
        emit(&report, &format!("temporal_{}", mcfg.name), &mut out)?;
    } else if e.temporal.enabled {
        out.notes.push("temporal protocol skipped: no temporal split was recorded".into());
    }

    let path = dir.join("summary.json");
    write_json(&path, &summary)?;
    out.add(path);
    Ok(out)
}

// ---------------------------------------------------------------------------
// analyze and rank

fn write_graph(dir: &Path, stem: &str, g: &FeatureGraph, out: &mut Outcome) -> Result<()> {
    let path = dir.join(format!("{stem}_edges.tsv"));
    write_tsv(
        &path,
        "source\ttarget\tweight",
        g.edges.iter().map(|e| format!("{}\t{}\t{}", g.nodes[e.a], g.nodes[e.b], e.weight)),
    )?;
    out.add(path);
    Ok(())
}

/// Correlation graph over `rows`, or a note when it cannot be built.
fn graph_for(m: &crate::matrix::Matrix, names: &[String], rows: &[usize], threshold: f64, what: &str, notes: &mut Vec<String>) -> Option<FeatureGraph> {
    match correlation_graph(&m.select_rows(rows), names, threshold) {
        Ok(g) if !g.is_empty() => Some(g),
        Ok(_) => {
            notes.push(format!("{what}: every feature column is constant"));
            None
        }
        Err(e) => {
            notes.push(format!("{what}: {e}"));
            None
        }
    }
}

#[derive(Serialize)]
struct BlockSummary {
    n_blocks: usize,
    description_length: f64,
    single_block_description_length: f64,
}

fn analyze(ctx: &Ctx) -> Result<Outcome> {
    let (data, selection) = load_data(ctx, true)?;
    let ds = &data.dataset;
    let a = &ctx.cfg.analyze;
    let dir = ctx.dir(Stage::Analyze);
    let mut out = Outcome::default();
    let mut notes = Vec::new();

    let rows = data.rows(&selection.rows)?;
    let ppath = ctx.file(Stage::Preprocess, "preprocessor.json");
    require(&ppath, "preprocess output")?;
    let params = PreprocessorParams::load(&ppath)?;
    let x = apply_preprocessor(&params, &ds.x.features.select_rows(&rows))?;
    let names = params.columns.clone();
    let labels = ds.labels_at(&rows);
    let all: Vec<usize> = (0..rows.len()).collect();

    // correlation structure, centrality and layout
    if let Some(g) = graph_for(&x, &names, &all, a.correlation_threshold, "correlation graph", &mut notes) {
        write_graph(&dir, "correlation", &g, &mut out)?;
        let c = eigencentrality(&g, 1e-10, 10_000);
        if !c.converged {
            notes.push("eigencentrality did not converge".into());
        }
        let coords = layout(
            &g,
            &LayoutConfig {
                seed: ctx.seed,
                ..LayoutConfig::default()
            },
        )?;
        let path = dir.join("centrality_layout.tsv");
        write_tsv(
            &path,
            "feature\teigencentrality\tx\ty",
            g.nodes.iter().enumerate().map(|(i, n)| format!("{n}\t{}\t{}\t{}", c.scores[i], coords[i][0], coords[i][1])),
        )?;
        out.add(path);
    }

    // block structure of the included and non-included groups
    let pos: Vec<usize> = all.iter().copied().filter(|&i| labels[i]).collect();
    let neg: Vec<usize> = all.iter().copied().filter(|&i| !labels[i]).collect();
    let sbm_cfg = SbmConfig {
        max_blocks: a.sbm.max_blocks,
        mcmc_sweeps: a.sbm.mcmc_sweeps,
        restarts: a.sbm.restarts,
        seed: ctx.seed,
    };
    let mut partitions = BTreeMap::new();
    let mut blocks = BTreeMap::new();
    for (group, group_rows) in [("included", &pos), ("not_included", &neg)] {
        let Some(g) = graph_for(&x, &names, group_rows, a.correlation_threshold, group, &mut notes) else {
            continue;
        };
        write_graph(&dir, group, &g, &mut out)?;
        let part = sbm_fit(&g, &sbm_cfg)?;
        let path = dir.join(format!("partition_{group}.tsv"));
        write_partition(&path, &g.nodes, &part)?;
        out.add(path);
        blocks.insert(
            group,
            BlockSummary {
                n_blocks: part.n_blocks,
                description_length: part.description_length,
                single_block_description_length: crate::analysis::description_length(&g, &vec![0; g.len()])?,
            },
        );
        let by_name: BTreeMap<String, usize> = g.nodes.iter().cloned().zip(part.assignment.iter().copied()).collect();
        partitions.insert(group, by_name);
    }
    let partition_nmi = match (partitions.get("included"), partitions.get("not_included")) {
        (Some(p), Some(q)) => {
            let shared: Vec<&String> = p.keys().filter(|k| q.contains_key(*k)).collect();
            let a_: Vec<usize> = shared.iter().map(|k| p[*k]).collect();
            let b_: Vec<usize> = shared.iter().map(|k| q[*k]).collect();
            if shared.is_empty() {
                None
            } else {
                Some(nmi(&a_, &b_)?)
            }
        }
        _ => None,
    };
    let path = dir.join("blocks.json");
    write_json(&path, &serde_json::json!({ "groups": blocks, "nmi": partition_nmi }))?;
    out.add(path);

    // boosted-stump importances on the training rows
    let train_rows = data.rows(&selection.train)?;
    let xt = apply_preprocessor(&params, &ds.x.features.select_rows(&train_rows))?;
    match adaboost_fit(&xt, &ds.labels_at(&train_rows), a.adaboost_rounds) {
        Ok(ens) => {
            let mut ranked: Vec<(&String, f64)> = names.iter().zip(ens.feature_importances.iter().copied()).collect();
            ranked.sort_by(|p, q| q.1.total_cmp(&p.1).then_with(|| p.0.cmp(q.0)));
            let path = dir.join("importances.tsv");
            write_tsv(&path, "feature\timportance", ranked.iter().map(|(n, v)| format!("{n}\t{v}")))?;
            out.add(path);
        }
        Err(e) => notes.push(format!("importances skipped: {e}")),
    }

    // autoencoder codes projected to two dimensions
    let proj = &a.projection;
    let mut sample = rows.clone();
    sample.shuffle(&mut rng(ctx.seed));
    sample.truncate(proj.max_rows.min(crate::analysis::tsne::MAX_POINTS));
    sample.sort_unstable();
    let needed = (3.0 * proj.perplexity).ceil() as usize;
    if sample.len() < needed.max(2) {
        notes.push(format!("projection skipped: {} rows, need at least {needed}", sample.len()));
    } else {
        let flats = ds.x.flats_for(&sample)?;
        let mut spec = ModelSpec::new(ModelKind::Autoencoder, 0);
        spec.optimizer.epochs = proj.autoencoder_epochs;
        spec.seed = ctx.seed;
        let ae = autoencoder_fit(TextView::from(&flats), &spec)?;
        let result = tsne(
            &ae.codes,
            &TsneConfig {
                perplexity: proj.perplexity,
                iterations: proj.iterations,
                seed: ctx.seed,
                ..TsneConfig::default()
            },
        )?;
        let path = dir.join("projection.tsv");
        let overlay = inclusion_overlay(&path, &result.coordinates, &ds.labels_at(&sample))?;
        notes.extend(overlay.notes);
        out.add(path);
        let path = dir.join("projection.json");
        write_json(
            &path,
            &serde_json::json!({
                "rows": sample.len(),
                "autoencoder_heldout_mse": ae.heldout_mse,
                "zero_baseline_mse": ae.zero_baseline_mse,
                "mean_baseline_mse": ae.mean_baseline_mse,
                "kl_trace": result.kl_trace,
            }),
        )?;
        out.add(path);
    }

    // citations against inclusions over the whole corpus
    let corpus = load_corpus(ctx, Stage::Link)?;
    let citations: Vec<f64> = corpus.papers().map(|p| corpus.in_degree(&p.paper_id) as f64).collect();
    let mut correlations = BTreeMap::new();
    for (kind, key) in [(SourceKind::Patent, "patent"), (SourceKind::GuidelineOrPolicy, "guideline_policy")] {
        let inclusions: Vec<f64> = corpus.papers().map(|p| f64::from(p.inclusions(kind))).collect();
        match pearson_bootstrap(&citations, &inclusions, a.bootstrap, ctx.seed) {
            Ok(b) => {
                correlations.insert(key, Some(b));
            }
            Err(e) => {
                notes.push(format!("{key} correlation skipped: {e}"));
                correlations.insert(key, None);
            }
        }
    }
    let path = dir.join("correlations.json");
    write_json(&path, &correlations)?;
    out.add(path);

    out.notes = notes;
    Ok(out)
}

fn rank(ctx: &Ctx) -> Result<Outcome> {
    let corpus = load_corpus(ctx, Stage::Link)?;
    let r = &ctx.cfg.rank;
    let mut out = Outcome::default();
    for metric in TableMetric::ALL {
        let table = journal_table(&corpus, metric, r.min_papers, r.top_n);
        let path = ctx.file(Stage::Rank, &format!("{}.tsv", metric.name()));
        write_table(&path, &table)?;
        out.notes.extend(table.notes.iter().map(|n| format!("{metric} table: {n}")));
        out.add(path);
    }
    Ok(out)
}
