//! Metadata predictors: paper-rank centrality, citations per year, entity
//! aggregates, field one-hot encoding and ablation masks.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, PaperId, PaperRecord, VocabKind};
use crate::error::{Error, Result};
use crate::par;

pub const MISSING: &str = "NA";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankConfig {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for RankConfig {
    fn default() -> Self {
        RankConfig {
            damping: 0.85,
            tolerance: 1e-10,
            max_iterations: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankResult {
    pub scores: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped power-iteration centrality over `n` nodes and directed
/// (citing, cited) edges. Dangling mass is spread uniformly.
///
/// Edges are put in canonical order first, so the result does not depend on
/// the input order.
pub fn compute_paper_rank(n: usize, edges: &[(usize, usize)], cfg: &RankConfig) -> Result<RankResult> {
    if !(cfg.damping > 0.0 && cfg.damping < 1.0) {
        return Err(Error::invalid("damping must lie in (0, 1)"));
    }
    if n == 0 {
        return Ok(RankResult {
            scores: Vec::new(),
            iterations: 0,
            converged: true,
        });
    }
    if let Some(&(a, b)) = edges.iter().find(|(a, b)| *a >= n || *b >= n) {
        return Err(Error::invalid(format!("edge ({a}, {b}) outside {n} nodes")));
    }
    let mut sorted: Vec<(usize, usize)> = edges.iter().map(|&(s, t)| (t, s)).collect();
    sorted.sort_unstable();
    let mut out_degree = vec![0usize; n];
    for &(_, s) in &sorted {
        out_degree[s] += 1;
    }
    let mut in_start = vec![0usize; n + 1];
    for &(t, _) in &sorted {
        in_start[t + 1] += 1;
    }
    for i in 0..n {
        in_start[i + 1] += in_start[i];
    }

    let d = cfg.damping;
    let nf = n as f64;
    let mut rank = vec![1.0 / nf; n];
    let mut next = vec![0.0; n];
    let mut share = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut dangling = 0.0;
        for i in 0..n {
            if out_degree[i] == 0 {
                dangling += rank[i];
                share[i] = 0.0;
            } else {
                share[i] = rank[i] / out_degree[i] as f64;
            }
        }
        let base = (1.0 - d) / nf + d * dangling / nf;
        for t in 0..n {
            let pulled: f64 = sorted[in_start[t]..in_start[t + 1]]
                .iter()
                .map(|&(_, s)| share[s])
                .sum();
            next[t] = base + d * pulled;
        }
        let total: f64 = next.iter().sum();
        for v in next.iter_mut() {
            *v /= total;
        }
        let delta: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if delta < cfg.tolerance {
            converged = true;
            break;
        }
    }
    Ok(RankResult {
        scores: rank,
        iterations,
        converged,
    })
}

/// Paper rank for every paper in the corpus, keyed by id.
pub fn corpus_paper_ranks(c: &Corpus, cfg: &RankConfig) -> Result<(BTreeMap<PaperId, f64>, RankResult)> {
    let index: HashMap<&PaperId, usize> = c.ids().enumerate().map(|(i, id)| (id, i)).collect();
    let edges: Vec<(usize, usize)> = c
        .internal_edges()
        .map(|(s, t)| (index[s], index[t]))
        .collect();
    let res = compute_paper_rank(c.len(), &edges, cfg)?;
    let map = c.ids().cloned().zip(res.scores.iter().copied()).collect();
    Ok((map, res))
}

/// `citation_count / (reference_year - publication_year + 1)`.
pub fn citations_per_year(citation_count: u64, pub_year: i32, ref_year: i32) -> Result<f64> {
    if ref_year < pub_year {
        return Err(Error::invalid(format!(
            "reference year {ref_year} precedes publication year {pub_year}"
        )));
    }
    Ok(citation_count as f64 / f64::from(ref_year - pub_year + 1))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EntityStat {
    /// Sum of the paper ranks of attached papers.
    pub rank: f64,
    pub paper_count: u64,
    pub citation_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityStats {
    pub tables: BTreeMap<VocabKind, BTreeMap<String, EntityStat>>,
}

impl EntityStats {
    pub fn get(&self, kind: VocabKind, id: &str) -> Option<&EntityStat> {
        self.tables.get(&kind)?.get(id)
    }
}

/// Per-entity paper counts, citation sums and rank sums. A paper is attached
/// to each distinct author, affiliation and field it lists, and to its journal.
pub fn aggregate_entity_stats(c: &Corpus, ranks: &BTreeMap<PaperId, f64>) -> EntityStats {
    let mut stats = EntityStats::default();
    for p in c.papers() {
        let rank = ranks.get(&p.paper_id).copied().unwrap_or(0.0);
        let cites = c.in_degree(&p.paper_id);
        let mut attach = |kind: VocabKind, id: &str| {
            let e = stats
                .tables
                .entry(kind)
                .or_default()
                .entry(id.to_owned())
                .or_default();
            e.rank += rank;
            e.paper_count += 1;
            e.citation_count += cites;
        };
        let mut seen: Vec<&str> = Vec::new();
        for a in &p.author_ids {
            if !seen.contains(&a.as_str()) {
                seen.push(a);
                attach(VocabKind::Author, a);
            }
        }
        seen.clear();
        for a in p.affiliation_ids.iter().flatten() {
            if !seen.contains(&a.as_str()) {
                seen.push(a);
                attach(VocabKind::Affiliation, a);
            }
        }
        if let Some(j) = &p.journal_id {
            attach(VocabKind::Journal, j);
        }
        seen.clear();
        for f in &p.field_ids {
            if !seen.contains(&f.as_str()) {
                seen.push(f);
                attach(VocabKind::Field, f);
            }
        }
    }
    stats
}

/// Numeric block, in column order.
pub const PAPER_COLUMNS: [&str; 7] = [
    "publication_year",
    "paper_citation_count",
    "paper_rank",
    "paper_mentions_count",
    "author_count",
    "reference_count",
    "citations_per_year",
];

pub const ENTITY_SLOTS: [&str; 6] = [
    "first_author",
    "last_author",
    "first_affiliation",
    "last_affiliation",
    "journal",
    "field",
];

pub const ENTITY_METRICS: [&str; 3] = ["rank", "paper_count", "citation_count"];

pub const NUMERIC_WIDTH: usize = PAPER_COLUMNS.len() + ENTITY_SLOTS.len() * ENTITY_METRICS.len();

/// Columns removed by `drop_paper_metrics`.
pub const PAPER_METRIC_COLUMNS: [usize; 4] = [1, 2, 3, 6];

pub fn numeric_column_names() -> Vec<String> {
    let mut names: Vec<String> = PAPER_COLUMNS.iter().map(|s| s.to_string()).collect();
    for slot in ENTITY_SLOTS {
        for m in ENTITY_METRICS {
            names.push(format!("{slot}_{m}"));
        }
    }
    names
}

/// Ordered field vocabulary that defines the one-hot block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldVocab {
    pub ids: Vec<String>,
}

impl FieldVocab {
    /// Fields from the corpus vocabulary, plus any field tag seen on a paper.
    pub fn from_corpus(c: &Corpus) -> Self {
        let mut ids: std::collections::BTreeSet<String> =
            c.vocab().ids(VocabKind::Field).map(str::to_owned).collect();
        for p in c.papers() {
            ids.extend(p.field_ids.iter().cloned());
        }
        FieldVocab {
            ids: ids.into_iter().collect(),
        }
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.ids.binary_search_by(|x| x.as_str().cmp(id)).ok()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub paper_id: PaperId,
    /// `None` marks a missing value.
    pub numeric: Vec<Option<f64>>,
    pub field_one_hot: Vec<bool>,
}

impl FeatureVector {
    pub fn missing_mask(&self) -> Vec<bool> {
        self.numeric.iter().map(Option::is_none).collect()
    }
}

pub struct FeatureContext<'a> {
    pub corpus: &'a Corpus,
    pub ranks: &'a BTreeMap<PaperId, f64>,
    pub stats: &'a EntityStats,
    pub fields: &'a FieldVocab,
    pub reference_year: i32,
}

pub fn assemble_features(ctx: &FeatureContext<'_>, p: &PaperRecord) -> FeatureVector {
    let cites = ctx.corpus.in_degree(&p.paper_id);
    let mut numeric = Vec::with_capacity(NUMERIC_WIDTH);
    numeric.push(p.year.map(f64::from));
    numeric.push(Some(cites as f64));
    numeric.push(ctx.ranks.get(&p.paper_id).copied());
    numeric.push(Some(p.mention_events as f64));
    numeric.push(Some(p.author_ids.len() as f64));
    numeric.push(Some(p.reference_ids.len() as f64));
    numeric.push(
        p.year
            .and_then(|y| citations_per_year(cites, y, ctx.reference_year).ok()),
    );

    let affs = p.affiliation_ids.as_deref().unwrap_or(&[]);
    let slots: [(VocabKind, Option<&String>); 6] = [
        (VocabKind::Author, p.author_ids.first()),
        (VocabKind::Author, p.author_ids.last()),
        (VocabKind::Affiliation, affs.first()),
        (VocabKind::Affiliation, affs.last()),
        (VocabKind::Journal, p.journal_id.as_ref()),
        (VocabKind::Field, p.field_ids.first()),
    ];
    for (kind, id) in slots {
        match id.and_then(|id| ctx.stats.get(kind, id)) {
            Some(s) => {
                numeric.push(Some(s.rank));
                numeric.push(Some(s.paper_count as f64));
                numeric.push(Some(s.citation_count as f64));
            }
            None => numeric.extend([None, None, None]),
        }
    }

    let mut field_one_hot = vec![false; ctx.fields.ids.len()];
    for f in &p.field_ids {
        if let Some(i) = ctx.fields.position(f) {
            field_one_hot[i] = true;
        }
    }
    FeatureVector {
        paper_id: p.paper_id.clone(),
        numeric,
        field_one_hot,
    }
}

/// Feature vectors for every paper in corpus order.
pub fn assemble_all(ctx: &FeatureContext<'_>) -> Vec<FeatureVector> {
    let papers: Vec<&PaperRecord> = ctx.corpus.papers().collect();
    par::map(&papers, |p| assemble_features(ctx, p))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub drop_paper_metrics: bool,
    pub drop_extrinsic: bool,
}

/// Row-major matrix whose cells may be missing.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub names: Vec<String>,
    pub paper_ids: Vec<PaperId>,
    pub data: Vec<Option<f64>>,
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        self.paper_ids.len()
    }

    pub fn cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, r: usize) -> &[Option<f64>] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn get(&self, r: usize, c: usize) -> Option<f64> {
        self.data[r * self.cols() + c]
    }

    /// Subset of rows in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.cols());
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        FeatureMatrix {
            names: self.names.clone(),
            paper_ids: rows.iter().map(|&r| self.paper_ids[r].clone()).collect(),
            data,
        }
    }

    /// Subset of columns in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(self.rows() * cols.len());
        for r in 0..self.rows() {
            let row = self.row(r);
            data.extend(cols.iter().map(|&c| row[c]));
        }
        FeatureMatrix {
            names: cols.iter().map(|&c| self.names[c].clone()).collect(),
            paper_ids: self.paper_ids.clone(),
            data,
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

/// Column indices (into the full layout) that survive an ablation.
pub fn surviving_columns(spec: &AblationSpec, n_fields: usize) -> Vec<usize> {
    let mut keep = Vec::new();
    for c in 0..NUMERIC_WIDTH {
        if spec.drop_paper_metrics && PAPER_METRIC_COLUMNS.contains(&c) {
            continue;
        }
        if spec.drop_extrinsic && c >= PAPER_COLUMNS.len() {
            continue;
        }
        keep.push(c);
    }
    if !spec.drop_extrinsic {
        keep.extend(NUMERIC_WIDTH..NUMERIC_WIDTH + n_fields);
    }
    keep
}

/// Full matrix: numeric block followed by the field one-hot block.
pub fn to_matrix(rows: &[FeatureVector], fields: &FieldVocab) -> FeatureMatrix {
    let mut names = numeric_column_names();
    names.extend(fields.ids.iter().map(|f| format!("field={f}")));
    let mut data = Vec::with_capacity(rows.len() * names.len());
    for r in rows {
        data.extend_from_slice(&r.numeric);
        data.extend(r.field_one_hot.iter().map(|&b| Some(if b { 1.0 } else { 0.0 })));
    }
    FeatureMatrix {
        names,
        paper_ids: rows.iter().map(|r| r.paper_id.clone()).collect(),
        data,
    }
}

pub fn apply_ablation(rows: &[FeatureVector], fields: &FieldVocab, spec: &AblationSpec) -> FeatureMatrix {
    ablate_matrix(&to_matrix(rows, fields), spec)
}

/// Ablation on an already assembled full-layout matrix.
pub fn ablate_matrix(full: &FeatureMatrix, spec: &AblationSpec) -> FeatureMatrix {
    let n_fields = full.cols() - NUMERIC_WIDTH;
    full.select_columns(&surviving_columns(spec, n_fields))
}

/// Tab-separated export with a header row; missing cells are `NA`.
pub fn write_matrix(path: &Path, m: &FeatureMatrix) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    write!(w, "paper_id").map_err(io)?;
    for n in &m.names {
        write!(w, "\t{n}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for r in 0..m.rows() {
        write!(w, "{}", m.paper_ids[r]).map_err(io)?;
        for v in m.row(r) {
            match v {
                Some(x) => write!(w, "\t{x:?}").map_err(io)?,
                None => write!(w, "\t{MISSING}").map_err(io)?,
            }
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: &Path) -> Result<FeatureMatrix> {
    let io = |e| Error::io(path, e);
    let mut lines = BufReader::new(File::open(path).map_err(io)?).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::invalid(format!("{}: empty feature file", path.display())))?
        .map_err(io)?;
    let names: Vec<String> = header.split('\t').skip(1).map(str::to_owned).collect();
    let mut paper_ids = Vec::new();
    let mut data = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.map_err(io)?;
        let mut cells = line.split('\t');
        paper_ids.push(PaperId::new(cells.next().unwrap_or_default()));
        let before = data.len();
        for c in cells {
            if c == MISSING {
                data.push(None);
            } else {
                let v: f64 = c.parse().map_err(|_| {
                    Error::invalid(format!("{}: bad value {c:?} on row {}", path.display(), i + 1))
                })?;
                data.push(Some(v));
            }
        }
        if data.len() - before != names.len() {
            return Err(Error::invalid(format!(
                "{}: row {} has {} cells, expected {}",
                path.display(),
                i + 1,
                data.len() - before,
                names.len()
            )));
        }
    }
    Ok(FeatureMatrix {
        names,
        paper_ids,
        data,
    })
}
