//! Bibliographic data model and corpus ingest.
//!
//! Corpus files are line-delimited JSON. The first line of every file is the
//! schema header `{"schema": "corpus/1"}`; every following non-blank line is
//! one record. Line numbers in error reports count records after the header,
//! so the first record is line 1.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA: &str = "corpus/1";
pub const DEFAULT_MAX_ERROR_RATE: f64 = 0.01;
const MAX_REPORTED_LINES: usize = 100;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PaperId(pub String);

impl PaperId {
    pub fn new(id: impl Into<String>) -> Self {
        PaperId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PaperId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PaperId {
    fn from(s: &str) -> Self {
        PaperId(s.to_owned())
    }
}

/// Calendar month used for corpus window bounds, ordered chronologically.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl YearMonth {
    pub fn new(year: i32, month: u8) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }
}

impl FromStr for YearMonth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (y, m) = s
            .split_once('-')
            .ok_or_else(|| Error::invalid(format!("expected YYYY-MM, got {s:?}")))?;
        let year = y
            .parse()
            .map_err(|_| Error::invalid(format!("bad year in {s:?}")))?;
        let month = m
            .parse()
            .map_err(|_| Error::invalid(format!("bad month in {s:?}")))?;
        YearMonth::new(year, month)
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which kind of downstream document includes a paper.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Patent,
    #[serde(alias = "guideline_policy")]
    GuidelineOrPolicy,
}

impl FromStr for SourceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "patent" => Ok(SourceKind::Patent),
            "guideline_policy" | "guideline_or_policy" => Ok(SourceKind::GuidelineOrPolicy),
            other => Err(Error::invalid(format!("unknown target {other:?}"))),
        }
    }
}

/// One publication. This is also the on-disk line format of the papers file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperRecord {
    pub paper_id: PaperId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub year: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub month: Option<u8>,
    #[serde(default)]
    pub title: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r#abstract: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub journal_id: Option<String>,
    #[serde(default)]
    pub author_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub affiliation_ids: Option<Vec<String>>,
    #[serde(default)]
    pub field_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reference_ids: Vec<PaperId>,
    #[serde(default)]
    pub mention_events: u64,
    #[serde(default)]
    pub patent_inclusions: u32,
    #[serde(default)]
    pub guideline_policy_inclusions: u32,
}

impl PaperRecord {
    pub fn new(paper_id: impl Into<String>, year: i32) -> Self {
        PaperRecord {
            paper_id: PaperId::new(paper_id),
            year: Some(year),
            month: None,
            title: String::new(),
            r#abstract: None,
            journal_id: None,
            author_ids: Vec::new(),
            affiliation_ids: None,
            field_ids: Vec::new(),
            reference_ids: Vec::new(),
            mention_events: 0,
            patent_inclusions: 0,
            guideline_policy_inclusions: 0,
        }
    }

    /// Publication month, defaulting to June when the record has none.
    pub fn year_month(&self) -> Option<YearMonth> {
        self.year.map(|year| YearMonth {
            year,
            month: self.month.unwrap_or(6),
        })
    }

    pub fn inclusions(&self, kind: SourceKind) -> u32 {
        match kind {
            SourceKind::Patent => self.patent_inclusions,
            SourceKind::GuidelineOrPolicy => self.guideline_policy_inclusions,
        }
    }

    pub fn label(&self, kind: SourceKind) -> bool {
        self.inclusions(kind) >= 1
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if self.paper_id.0.is_empty() {
            return Err("empty paper_id".into());
        }
        if let Some(y) = self.year {
            if !(1900..=2100).contains(&y) {
                return Err(format!("year {y} outside [1900, 2100]"));
            }
        }
        if let Some(m) = self.month {
            if !(1..=12).contains(&m) {
                return Err(format!("month {m} outside 1..=12"));
            }
        }
        if let Some(aff) = &self.affiliation_ids {
            if aff.len() != self.author_ids.len() {
                return Err("affiliation_ids not aligned with author_ids".into());
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEdge {
    pub citing: PaperId,
    pub cited: PaperId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionEvent {
    pub citing: PaperId,
    pub cited: PaperId,
    pub occurrences: i64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VocabKind {
    Field,
    Journal,
    Author,
    Affiliation,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabEntry {
    pub kind: VocabKind,
    pub id: String,
    pub name: String,
}

/// Id → display-name tables for the entity kinds.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Vocabularies {
    tables: BTreeMap<VocabKind, BTreeMap<String, String>>,
}

impl Vocabularies {
    pub fn insert(&mut self, kind: VocabKind, id: impl Into<String>, name: impl Into<String>) {
        self.tables
            .entry(kind)
            .or_default()
            .insert(id.into(), name.into());
    }

    pub fn name(&self, kind: VocabKind, id: &str) -> Option<&str> {
        self.tables.get(&kind)?.get(id).map(String::as_str)
    }

    pub fn contains(&self, kind: VocabKind, id: &str) -> bool {
        self.name(kind, id).is_some()
    }

    pub fn ids(&self, kind: VocabKind) -> impl Iterator<Item = &str> {
        self.tables
            .get(&kind)
            .into_iter()
            .flat_map(|t| t.keys().map(String::as_str))
    }

    pub fn len(&self, kind: VocabKind) -> usize {
        self.tables.get(&kind).map_or(0, BTreeMap::len)
    }

    pub fn entries(&self) -> impl Iterator<Item = VocabEntry> + '_ {
        self.tables.iter().flat_map(|(kind, t)| {
            t.iter().map(move |(id, name)| VocabEntry {
                kind: *kind,
                id: id.clone(),
                name: name.clone(),
            })
        })
    }
}

/// A patent or guideline/policy document and the papers it references.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionSource {
    source_kind: SourceKind,
    pub document_id: String,
    #[serde(default)]
    pub reference_titles: Vec<String>,
    #[serde(default)]
    pub reference_paper_ids: Vec<PaperId>,
}

impl InclusionSource {
    pub fn new(source_kind: SourceKind, document_id: impl Into<String>) -> Self {
        InclusionSource {
            source_kind,
            document_id: document_id.into(),
            reference_titles: Vec::new(),
            reference_paper_ids: Vec::new(),
        }
    }

    pub fn source_kind(&self) -> SourceKind {
        self.source_kind
    }
}

/// Patent-file line: references are already paper ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatentLine {
    pub document_id: String,
    pub reference_ids: Vec<PaperId>,
}

/// Guideline-file line: references are raw titles that need linkage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidelineLine {
    pub document_id: String,
    pub reference_titles: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct InclusionDocs {
    patent: BTreeSet<String>,
    guideline: BTreeSet<String>,
}

/// Immutable collection of papers with derived citation counts.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus {
    papers: BTreeMap<PaperId, PaperRecord>,
    citation_in_degree: BTreeMap<PaperId, u64>,
    dangling_references: u64,
    vocab: Vocabularies,
    inclusion_docs: BTreeMap<PaperId, InclusionDocs>,
}

impl Corpus {
    /// Builds a corpus, dropping self-citations and duplicate references.
    pub fn from_records(records: impl IntoIterator<Item = PaperRecord>, vocab: Vocabularies) -> Self {
        let mut papers = BTreeMap::new();
        for mut p in records {
            let mut seen = BTreeSet::new();
            let own = p.paper_id.clone();
            p.reference_ids
                .retain(|r| *r != own && seen.insert(r.clone()));
            papers.insert(p.paper_id.clone(), p);
        }
        Self::assemble(papers, vocab, BTreeMap::new())
    }

    fn assemble(
        papers: BTreeMap<PaperId, PaperRecord>,
        vocab: Vocabularies,
        inclusion_docs: BTreeMap<PaperId, InclusionDocs>,
    ) -> Self {
        let mut citation_in_degree: BTreeMap<PaperId, u64> =
            papers.keys().map(|k| (k.clone(), 0)).collect();
        let mut dangling = 0;
        for p in papers.values() {
            for r in &p.reference_ids {
                match citation_in_degree.get_mut(r) {
                    Some(d) => *d += 1,
                    None => dangling += 1,
                }
            }
        }
        Corpus {
            papers,
            citation_in_degree,
            dangling_references: dangling,
            vocab,
            inclusion_docs,
        }
    }

    pub fn len(&self) -> usize {
        self.papers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.papers.is_empty()
    }

    pub fn get(&self, id: &PaperId) -> Option<&PaperRecord> {
        self.papers.get(id)
    }

    /// Papers in ascending id order.
    pub fn papers(&self) -> impl ExactSizeIterator<Item = &PaperRecord> {
        self.papers.values()
    }

    pub fn ids(&self) -> impl ExactSizeIterator<Item = &PaperId> {
        self.papers.keys()
    }

    pub fn in_degree(&self, id: &PaperId) -> u64 {
        self.citation_in_degree.get(id).copied().unwrap_or(0)
    }

    pub fn citation_in_degree(&self) -> &BTreeMap<PaperId, u64> {
        &self.citation_in_degree
    }

    /// Reference entries pointing at ids with no record.
    pub fn dangling_references(&self) -> u64 {
        self.dangling_references
    }

    pub fn vocab(&self) -> &Vocabularies {
        &self.vocab
    }

    /// Edges (citing, cited) between papers that both have records.
    pub fn internal_edges(&self) -> impl Iterator<Item = (&PaperId, &PaperId)> {
        self.papers.values().flat_map(move |p| {
            p.reference_ids
                .iter()
                .filter(move |r| self.papers.contains_key(*r))
                .map(move |r| (&p.paper_id, r))
        })
    }

    pub fn total_internal_edges(&self) -> u64 {
        self.citation_in_degree.values().sum()
    }
}

// ---------------------------------------------------------------------------
// Ingest

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileReport {
    pub path: PathBuf,
    pub records: usize,
    pub failed: usize,
    /// Record line numbers (1 = first record after the header), at most 100.
    pub failed_lines: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
    pub self_citations_dropped: u64,
    pub duplicate_papers: u64,
    pub orphan_edges: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusFiles {
    pub papers: Vec<PathBuf>,
    #[serde(default)]
    pub citations: Vec<PathBuf>,
    #[serde(default)]
    pub vocab: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParseOptions {
    pub max_error_rate: f64,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            max_error_rate: DEFAULT_MAX_ERROR_RATE,
        }
    }
}

#[derive(Deserialize)]
struct Header {
    schema: String,
}

/// Reads one line-delimited record file, validating each record with `check`.
pub fn read_records<T, F>(path: &Path, opts: ParseOptions, check: F) -> Result<(Vec<T>, FileReport)>
where
    T: DeserializeOwned,
    F: Fn(&T) -> std::result::Result<(), String>,
{
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines();
    let header = loop {
        match lines.next() {
            None => {
                return Err(Error::Schema {
                    path: path.into(),
                    message: "missing header line".into(),
                })
            }
            Some(line) => {
                let line = line.map_err(|e| Error::io(path, e))?;
                if !line.trim().is_empty() {
                    break line;
                }
            }
        }
    };
    let parsed: Header = serde_json::from_str(&header).map_err(|e| Error::Schema {
        path: path.into(),
        message: e.to_string(),
    })?;
    if parsed.schema != SCHEMA {
        return Err(Error::Schema {
            path: path.into(),
            message: format!("expected {SCHEMA:?}, found {:?}", parsed.schema),
        });
    }

    let mut out = Vec::new();
    let mut report = FileReport {
        path: path.into(),
        ..Default::default()
    };
    let mut line_no = 0;
    for line in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        line_no += 1;
        let rec = serde_json::from_str::<T>(&line)
            .map_err(|e| e.to_string())
            .and_then(|r| check(&r).map(|()| r));
        match rec {
            Ok(r) => {
                out.push(r);
                report.records += 1;
            }
            Err(_) => {
                report.failed += 1;
                if report.failed_lines.len() < MAX_REPORTED_LINES {
                    report.failed_lines.push(line_no);
                }
            }
        }
    }
    let total = report.records + report.failed;
    if total > 0 {
        let rate = report.failed as f64 / total as f64;
        if rate > opts.max_error_rate {
            return Err(Error::TooManyBadRecords {
                path: path.into(),
                failed: report.failed,
                total,
                rate,
                limit: opts.max_error_rate,
                lines: report.failed_lines,
            });
        }
    }
    Ok((out, report))
}

fn no_check<T>(_: &T) -> std::result::Result<(), String> {
    Ok(())
}

/// Loads papers, citation edges and vocabularies into a corpus.
pub fn parse_corpus(files: &CorpusFiles, opts: ParseOptions) -> Result<(Corpus, IngestReport)> {
    let mut report = IngestReport::default();
    let mut papers: BTreeMap<PaperId, PaperRecord> = BTreeMap::new();
    for path in &files.papers {
        let (recs, fr) = read_records::<PaperRecord, _>(path, opts, PaperRecord::validate)?;
        report.files.push(fr);
        for p in recs {
            if papers.insert(p.paper_id.clone(), p).is_some() {
                report.duplicate_papers += 1;
            }
        }
    }
    for path in &files.citations {
        let (edges, fr) = read_records::<CitationEdge, _>(path, opts, no_check)?;
        report.files.push(fr);
        for e in edges {
            match papers.get_mut(&e.citing) {
                Some(p) => p.reference_ids.push(e.cited),
                None => report.orphan_edges += 1,
            }
        }
    }
    let mut vocab = Vocabularies::default();
    for path in &files.vocab {
        let (entries, fr) = read_records::<VocabEntry, _>(path, opts, no_check)?;
        report.files.push(fr);
        for v in entries {
            vocab.insert(v.kind, v.id, v.name);
        }
    }
    report.self_citations_dropped = papers
        .values()
        .map(|p| p.reference_ids.iter().filter(|r| **r == p.paper_id).count() as u64)
        .sum();
    Ok((Corpus::from_records(papers.into_values(), vocab), report))
}

pub fn read_mention_events(path: &Path, opts: ParseOptions) -> Result<(Vec<MentionEvent>, FileReport)> {
    read_records(path, opts, no_check)
}

pub fn read_patent_sources(path: &Path, opts: ParseOptions) -> Result<(Vec<InclusionSource>, FileReport)> {
    let (lines, fr) = read_records::<PatentLine, _>(path, opts, no_check)?;
    let sources = lines
        .into_iter()
        .map(|l| {
            let mut s = InclusionSource::new(SourceKind::Patent, l.document_id);
            s.reference_paper_ids = l.reference_ids;
            s
        })
        .collect();
    Ok((sources, fr))
}

pub fn read_guideline_sources(
    path: &Path,
    opts: ParseOptions,
) -> Result<(Vec<InclusionSource>, FileReport)> {
    let (lines, fr) = read_records::<GuidelineLine, _>(path, opts, no_check)?;
    let sources = lines
        .into_iter()
        .map(|l| {
            let mut s = InclusionSource::new(SourceKind::GuidelineOrPolicy, l.document_id);
            s.reference_titles = l.reference_titles;
            s
        })
        .collect();
    Ok((sources, fr))
}

/// Writes a record file with the schema header.
pub fn write_records<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{{\"schema\":\"{SCHEMA}\"}}").map_err(io)?;
    for r in records {
        let line = serde_json::to_string(&r).expect("record serialization");
        writeln!(w, "{line}").map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the corpus back out as a papers file (references inline) and a vocab file.
pub fn write_corpus(c: &Corpus, papers_path: &Path, vocab_path: &Path) -> Result<()> {
    write_records(papers_path, c.papers())?;
    write_records(vocab_path, c.vocab.entries())
}

// ---------------------------------------------------------------------------
// Filtering

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub window_start: YearMonth,
    pub window_end: YearMonth,
    /// Retain only papers tagged with one of these fields; `None` keeps all.
    pub domain_fields: Option<BTreeSet<String>>,
    pub min_in_degree: u64,
}

impl Default for FilterSpec {
    fn default() -> Self {
        FilterSpec {
            window_start: YearMonth { year: 1990, month: 1 },
            window_end: YearMonth { year: 2019, month: 3 },
            domain_fields: None,
            min_in_degree: 1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input: usize,
    pub retained: usize,
    pub missing_year: usize,
    pub out_of_window: usize,
    pub outside_domain: usize,
    pub uncited: usize,
    pub empty_result: bool,
}

/// Keeps papers in the domain and window with enough incoming citations.
///
/// The in-degree test uses the input corpus; the returned corpus recounts
/// in-degree over the retained papers only.
pub fn filter_corpus(c: &Corpus, f: &FilterSpec) -> (Corpus, FilterReport) {
    let mut report = FilterReport {
        input: c.len(),
        ..Default::default()
    };
    let mut kept = BTreeMap::new();
    for p in c.papers() {
        let Some(ym) = p.year_month() else {
            report.missing_year += 1;
            continue;
        };
        if ym < f.window_start || ym > f.window_end {
            report.out_of_window += 1;
            continue;
        }
        if let Some(domain) = &f.domain_fields {
            if !p.field_ids.iter().any(|fid| domain.contains(fid)) {
                report.outside_domain += 1;
                continue;
            }
        }
        if c.in_degree(&p.paper_id) < f.min_in_degree {
            report.uncited += 1;
            continue;
        }
        kept.insert(p.paper_id.clone(), p.clone());
    }
    report.retained = kept.len();
    report.empty_result = kept.is_empty();
    let docs = c
        .inclusion_docs
        .iter()
        .filter(|(k, _)| kept.contains_key(*k))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    (Corpus::assemble(kept, c.vocab.clone(), docs), report)
}

// ---------------------------------------------------------------------------
// Mentions and inclusions

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionReport {
    pub accepted: u64,
    pub rejected_negative: u64,
    pub unknown_cited: u64,
}

/// Sets every paper's mention count to the summed occurrences it receives.
pub fn count_mentions(
    c: &Corpus,
    events: impl IntoIterator<Item = MentionEvent>,
) -> (Corpus, MentionReport) {
    let mut report = MentionReport::default();
    let mut totals: HashMap<PaperId, u64> = HashMap::new();
    for e in events {
        if e.occurrences < 0 {
            report.rejected_negative += 1;
            continue;
        }
        if !c.papers.contains_key(&e.cited) {
            report.unknown_cited += 1;
            continue;
        }
        report.accepted += 1;
        *totals.entry(e.cited).or_default() += e.occurrences as u64;
    }
    let mut out = c.clone();
    for (id, p) in out.papers.iter_mut() {
        p.mention_events = totals.get(id).copied().unwrap_or(0);
    }
    (out, report)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionReport {
    pub sources: u64,
    pub resolved_references: u64,
    pub unresolved_references: u64,
}

/// Records which distinct documents reference each paper and refreshes the
/// per-paper inclusion counts.
pub fn attach_inclusions(c: &Corpus, sources: &[InclusionSource]) -> (Corpus, InclusionReport) {
    let mut report = InclusionReport::default();
    let mut out = c.clone();
    for s in sources {
        report.sources += 1;
        for pid in &s.reference_paper_ids {
            if !out.papers.contains_key(pid) {
                report.unresolved_references += 1;
                continue;
            }
            report.resolved_references += 1;
            let docs = out.inclusion_docs.entry(pid.clone()).or_default();
            match s.source_kind {
                SourceKind::Patent => docs.patent.insert(s.document_id.clone()),
                SourceKind::GuidelineOrPolicy => docs.guideline.insert(s.document_id.clone()),
            };
        }
    }
    for (id, p) in out.papers.iter_mut() {
        let docs = out.inclusion_docs.get(id);
        p.patent_inclusions = docs.map_or(0, |d| d.patent.len() as u32);
        p.guideline_policy_inclusions = docs.map_or(0, |d| d.guideline.len() as u32);
    }
    (out, report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn paper(id: &str, year: i32, refs: &[&str]) -> PaperRecord {
        let mut p = PaperRecord::new(id, year);
        p.reference_ids = refs.iter().map(|r| PaperId::from(*r)).collect();
        p
    }

    #[test]
    fn three_valid_lines_load() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"schema\":\"corpus/1\"}\n\
            {\"paper_id\":\"a\",\"year\":2000,\"title\":\"A\"}\n\
            {\"paper_id\":\"b\",\"year\":2001,\"title\":\"B\"}\n\
            {\"paper_id\":\"c\",\"year\":2002,\"title\":\"C\"}\n";
        let files = CorpusFiles {
            papers: vec![write(dir.path(), "p.jsonl", body)],
            ..Default::default()
        };
        let (c, rep) = parse_corpus(&files, ParseOptions::default()).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(rep.files[0].failed, 0);
    }

    #[test]
    fn truncated_line_is_reported_not_fatal_under_threshold() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"schema\":\"corpus/1\"}\n\
            {\"paper_id\":\"a\",\"year\":2000}\n\
            {\"paper_id\":\"b\",\"year\":2001}\n\
            {\"paper_id\":\"c\",\"ye";
        let files = CorpusFiles {
            papers: vec![write(dir.path(), "p.jsonl", body)],
            ..Default::default()
        };
        let opts = ParseOptions { max_error_rate: 0.5 };
        let (c, rep) = parse_corpus(&files, opts).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(rep.files[0].failed_lines, vec![3]);

        let err = parse_corpus(&files, ParseOptions::default()).unwrap_err();
        match err {
            Error::TooManyBadRecords { lines, .. } => assert_eq!(lines, vec![3]),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn missing_file_and_bad_header_are_fatal() {
        let files = CorpusFiles {
            papers: vec!["/nonexistent/p.jsonl".into()],
            ..Default::default()
        };
        assert!(matches!(
            parse_corpus(&files, ParseOptions::default()),
            Err(Error::Io { .. })
        ));
        let dir = tempfile::tempdir().unwrap();
        let files = CorpusFiles {
            papers: vec![write(dir.path(), "p.jsonl", "{\"schema\":\"corpus/9\"}\n")],
            ..Default::default()
        };
        assert!(matches!(
            parse_corpus(&files, ParseOptions::default()),
            Err(Error::Schema { .. })
        ));
    }

    #[test]
    fn year_outside_range_is_a_bad_record() {
        let dir = tempfile::tempdir().unwrap();
        let body = "{\"schema\":\"corpus/1\"}\n{\"paper_id\":\"a\",\"year\":1850}\n{\"paper_id\":\"b\",\"year\":2000}\n";
        let files = CorpusFiles {
            papers: vec![write(dir.path(), "p.jsonl", body)],
            ..Default::default()
        };
        let (c, rep) = parse_corpus(&files, ParseOptions { max_error_rate: 0.9 }).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(rep.files[0].failed_lines, vec![1]);
    }

    #[test]
    fn self_citations_dropped_and_dangling_counted() {
        let c = Corpus::from_records(
            vec![paper("a", 2000, &["a", "b", "zz"]), paper("b", 2000, &[])],
            Vocabularies::default(),
        );
        assert_eq!(c.get(&"a".into()).unwrap().reference_ids, vec![PaperId::from("b"), "zz".into()]);
        assert_eq!(c.in_degree(&"b".into()), 1);
        assert_eq!(c.in_degree(&"a".into()), 0);
        assert_eq!(c.dangling_references(), 1);
        assert_eq!(c.total_internal_edges(), 1);
    }

    #[test]
    fn filter_removes_uncited_and_out_of_window() {
        let mut old = paper("old", 1989, &[]);
        old.month = Some(12);
        let c = Corpus::from_records(
            vec![
                paper("x", 2000, &["y", "old"]),
                paper("y", 2000, &["x"]),
                paper("lonely", 2000, &["x"]),
                old,
            ],
            Vocabularies::default(),
        );
        let (f, rep) = filter_corpus(&c, &FilterSpec::default());
        let ids: Vec<_> = f.ids().map(|i| i.0.clone()).collect();
        assert_eq!(ids, vec!["x", "y"]);
        assert_eq!(rep.uncited, 1);
        assert_eq!(rep.out_of_window, 1);
        // recounted over retained papers only
        assert_eq!(f.in_degree(&"x".into()), 1);
    }

    #[test]
    fn filter_window_boundary_and_missing_year() {
        let mut start = paper("s", 1990, &[]);
        start.month = Some(1);
        let mut end = paper("e", 2019, &[]);
        end.month = Some(4);
        let mut none = paper("n", 2000, &[]);
        none.year = None;
        let citer = paper("c", 2000, &["s", "e", "n"]);
        let c = Corpus::from_records(vec![start, end, none, citer], Vocabularies::default());
        let (f, rep) = filter_corpus(&c, &FilterSpec::default());
        assert!(f.get(&"s".into()).is_some());
        assert!(f.get(&"e".into()).is_none());
        assert_eq!(rep.missing_year, 1);
    }

    #[test]
    fn filter_by_domain() {
        let mut a = paper("a", 2000, &["b"]);
        a.field_ids = vec!["med".into()];
        let mut b = paper("b", 2000, &["a"]);
        b.field_ids = vec!["physics".into()];
        let c = Corpus::from_records(vec![a, b], Vocabularies::default());
        let spec = FilterSpec {
            domain_fields: Some(["med".to_string()].into_iter().collect()),
            ..Default::default()
        };
        let (f, rep) = filter_corpus(&c, &spec);
        assert_eq!(f.len(), 1);
        assert_eq!(rep.outside_domain, 1);
        let (_, rep) = filter_corpus(
            &f,
            &FilterSpec {
                domain_fields: Some(BTreeSet::new()),
                ..Default::default()
            },
        );
        assert!(rep.empty_result);
    }

    #[test]
    fn mentions_are_summed() {
        let c = Corpus::from_records(
            vec![paper("p", 2000, &[]), paper("q", 2000, &[])],
            Vocabularies::default(),
        );
        let ev = |a: &str, b: &str, n| MentionEvent {
            citing: a.into(),
            cited: b.into(),
            occurrences: n,
        };
        let (m, rep) = count_mentions(&c, vec![ev("x", "p", 3), ev("y", "p", 2), ev("z", "p", -1)]);
        assert_eq!(m.get(&"p".into()).unwrap().mention_events, 5);
        assert_eq!(m.get(&"q".into()).unwrap().mention_events, 0);
        assert_eq!(rep.rejected_negative, 1);
        let (m, _) = count_mentions(&c, Vec::new());
        assert!(m.papers().all(|p| p.mention_events == 0));
    }

    #[test]
    fn inclusions_count_distinct_documents() {
        let c = Corpus::from_records(
            vec![paper("p", 2000, &[]), paper("q", 2000, &[])],
            Vocabularies::default(),
        );
        let mut pat1 = InclusionSource::new(SourceKind::Patent, "US1");
        pat1.reference_paper_ids = vec!["p".into(), "missing".into()];
        let mut pat2 = InclusionSource::new(SourceKind::Patent, "US2");
        pat2.reference_paper_ids = vec!["p".into()];
        let mut g = InclusionSource::new(SourceKind::GuidelineOrPolicy, "NICE-1");
        g.reference_paper_ids = vec!["q".into(), "q".into()];
        let (c2, rep) = attach_inclusions(&c, &[pat1.clone(), pat2, g.clone()]);
        let p = c2.get(&"p".into()).unwrap();
        assert_eq!(p.patent_inclusions, 2);
        assert!(p.label(SourceKind::Patent));
        assert_eq!(c2.get(&"q".into()).unwrap().guideline_policy_inclusions, 1);
        assert_eq!(rep.unresolved_references, 1);
        // attaching again changes nothing
        let (c3, _) = attach_inclusions(&c2, &[pat1, g]);
        assert_eq!(c3, c2);
    }

    #[test]
    fn ingest_is_idempotent_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut a = paper("a", 2000, &["b"]);
        a.title = "Alpha".into();
        a.field_ids = vec!["f1".into()];
        let b = paper("b", 1999, &[]);
        let mut vocab = Vocabularies::default();
        vocab.insert(VocabKind::Field, "f1", "Neurology");
        let c = Corpus::from_records(vec![a, b], vocab);
        let pp = dir.path().join("papers.jsonl");
        let vp = dir.path().join("vocab.jsonl");
        write_corpus(&c, &pp, &vp).unwrap();
        let files = CorpusFiles {
            papers: vec![pp],
            citations: vec![],
            vocab: vec![vp],
        };
        let (c1, _) = parse_corpus(&files, ParseOptions::default()).unwrap();
        let (c2, _) = parse_corpus(&files, ParseOptions::default()).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1, c);
    }
}
