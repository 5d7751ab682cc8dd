//! Journal league tables: citations, guideline/policy inclusions and patent
//! inclusions per paper, restricted to journals with enough papers.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, SourceKind, VocabKind};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_PAPERS: u64 = 500;
pub const TABLE_HEADER: &str = "position\tjournal\tratio\tnumerator\tdenominator";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TableMetric {
    Citations,
    GuidelinePolicy,
    Patent,
}

impl TableMetric {
    pub const ALL: [TableMetric; 3] = [TableMetric::Citations, TableMetric::GuidelinePolicy, TableMetric::Patent];

    pub fn name(self) -> &'static str {
        match self {
            TableMetric::Citations => "citations",
            TableMetric::GuidelinePolicy => "guideline_policy",
            TableMetric::Patent => "patent",
        }
    }
}

impl fmt::Display for TableMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TableMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TableMetric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown table metric {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalRow {
    pub journal_id: String,
    pub journal: String,
    pub ratio: f64,
    pub numerator: u64,
    pub denominator: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JournalTable {
    pub metric: TableMetric,
    pub min_papers: u64,
    pub rows: Vec<JournalRow>,
    pub notes: Vec<String>,
}

/// Ratio as printed in the tables.
pub fn format_ratio(ratio: f64) -> String {
    format!("{ratio:.3}")
}

/// Builds a table from per-paper `(journal id, count)` pairs. Journal names
/// come from `name`, falling back to the id.
pub fn tabulate<'a>(
    metric: TableMetric,
    papers: impl IntoIterator<Item = (&'a str, u64)>,
    name: impl Fn(&str) -> Option<String>,
    min_papers: u64,
    top_n: Option<usize>,
) -> JournalTable {
    let mut totals: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for (journal, count) in papers {
        let t = totals.entry(journal).or_default();
        t.0 += count;
        t.1 += 1;
    }
    let mut rows: Vec<JournalRow> = totals
        .into_iter()
        .filter(|(_, (_, d))| *d >= min_papers)
        .map(|(id, (num, den))| JournalRow {
            journal_id: id.to_string(),
            journal: name(id).unwrap_or_else(|| id.to_string()),
            ratio: num as f64 / den as f64,
            numerator: num,
            denominator: den,
        })
        .collect();
    rows.sort_by(|a, b| {
        b.ratio
            .total_cmp(&a.ratio)
            .then_with(|| a.journal.cmp(&b.journal))
            .then_with(|| a.journal_id.cmp(&b.journal_id))
    });
    if let Some(n) = top_n {
        rows.truncate(n);
    }
    let mut notes = Vec::new();
    if rows.is_empty() {
        notes.push(format!("no journal has at least {min_papers} papers"));
    }
    JournalTable {
        metric,
        min_papers,
        rows,
        notes,
    }
}

/// Papers without a journal are left out of every table.
pub fn journal_table(c: &Corpus, metric: TableMetric, min_papers: u64, top_n: Option<usize>) -> JournalTable {
    let papers = c.papers().filter_map(|p| {
        let journal = p.journal_id.as_deref()?;
        let count = match metric {
            TableMetric::Citations => c.in_degree(&p.paper_id),
            TableMetric::GuidelinePolicy => u64::from(p.inclusions(SourceKind::GuidelineOrPolicy)),
            TableMetric::Patent => u64::from(p.inclusions(SourceKind::Patent)),
        };
        Some((journal, count))
    });
    tabulate(metric, papers, |id| c.vocab().name(VocabKind::Journal, id).map(str::to_string), min_papers, top_n)
}

pub fn write_table(path: &Path, table: &JournalTable) -> Result<()> {
    let mut out = String::new();
    for n in &table.notes {
        out.push_str(&format!("# {n}\n"));
    }
    out.push_str(TABLE_HEADER);
    out.push('\n');
    for (i, r) in table.rows.iter().enumerate() {
        let journal = r.journal.replace(['\t', '\n'], " ");
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            i + 1,
            journal,
            format_ratio(r.ratio),
            r.numerator,
            r.denominator
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
