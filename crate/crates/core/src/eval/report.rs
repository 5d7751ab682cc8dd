//! Evaluation reports: a versioned JSON results file plus tab-separated
//! ROC and PR curve files.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{average_precision, roc_auc, CurvePoint};
use crate::error::{Error, Result};

pub const REPORT_FORMAT: &str = "evalreport/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Cv,
    Holdout,
    Temporal,
    Ablation,
    Transfer,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Cv => "cv",
            Protocol::Holdout => "holdout",
            Protocol::Temporal => "temporal",
            Protocol::Ablation => "ablation",
            Protocol::Transfer => "transfer",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum SliceKey {
    Overall,
    Fold(usize),
    Year(i32),
    Field(String),
    Ablation(String),
}

impl fmt::Display for SliceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceKey::Overall => f.write_str("overall"),
            SliceKey::Fold(i) => write!(f, "fold={i}"),
            SliceKey::Year(y) => write!(f, "year={y}"),
            SliceKey::Field(id) => write!(f, "field={id}"),
            SliceKey::Ablation(name) => write!(f, "ablation={name}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SliceMetrics {
    pub key: SliceKey,
    pub auroc: f64,
    pub average_precision: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub roc_curve: Vec<CurvePoint>,
    pub pr_curve: Vec<CurvePoint>,
}

impl SliceMetrics {
    /// Metrics for one slice; `None` when the slice lacks one of the classes.
    pub fn compute(key: SliceKey, scores: &[f64], labels: &[bool]) -> Result<Option<SliceMetrics>> {
        let n_pos = labels.iter().filter(|l| **l).count();
        let n_neg = labels.len() - n_pos;
        if n_pos == 0 || n_neg == 0 {
            return Ok(None);
        }
        let (auroc, roc_curve) = roc_auc(scores, labels)?;
        let (average_precision, pr_curve) = average_precision(scores, labels)?;
        Ok(Some(SliceMetrics {
            key,
            auroc,
            average_precision,
            n_pos,
            n_neg,
            roc_curve,
            pr_curve,
        }))
    }
}

/// Mean and sample standard deviation across slices, with the
/// `mean ± 2 sd` band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean_auroc: f64,
    pub sd_auroc: f64,
    pub mean_ap: f64,
    pub sd_ap: f64,
}

impl Summary {
    pub fn of(slices: &[SliceMetrics]) -> Option<Summary> {
        if slices.is_empty() {
            return None;
        }
        let (mean_auroc, sd_auroc) = mean_sd(slices.iter().map(|s| s.auroc));
        let (mean_ap, sd_ap) = mean_sd(slices.iter().map(|s| s.average_precision));
        Some(Summary {
            n: slices.len(),
            mean_auroc,
            sd_auroc,
            mean_ap,
            sd_ap,
        })
    }

    pub fn auroc_band(&self) -> (f64, f64) {
        (self.mean_auroc - 2.0 * self.sd_auroc, self.mean_auroc + 2.0 * self.sd_auroc)
    }

    pub fn ap_band(&self) -> (f64, f64) {
        (self.mean_ap - 2.0 * self.sd_ap, self.mean_ap + 2.0 * self.sd_ap)
    }
}

/// Mean and sample (n - 1) standard deviation; zero spread for one value.
pub fn mean_sd(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub threshold: f64,
    pub n_predicted_positive: usize,
    pub n_total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub format: String,
    pub protocol: Protocol,
    pub model: String,
    pub slices: Vec<SliceMetrics>,
    pub summary: Option<Summary>,
    pub retrieval: Option<Retrieval>,
    pub notes: Vec<String>,
}

impl EvalReport {
    pub fn new(protocol: Protocol, model: impl Into<String>) -> Self {
        EvalReport {
            format: REPORT_FORMAT.to_owned(),
            protocol,
            model: model.into(),
            slices: Vec::new(),
            summary: None,
            retrieval: None,
            notes: Vec::new(),
        }
    }

    pub fn slice(&self, key: &SliceKey) -> Option<&SliceMetrics> {
        self.slices.iter().find(|s| &s.key == key)
    }

    /// Checks the report invariants: metrics in `[0, 1]` and fixed ROC
    /// endpoints.
    pub fn validate(&self) -> Result<()> {
        if self.format != REPORT_FORMAT {
            return Err(Error::invalid(format!("report format {:?} unsupported", self.format)));
        }
        for s in &self.slices {
            let in_unit = |v: f64| (0.0..=1.0).contains(&v);
            if !in_unit(s.auroc) || !in_unit(s.average_precision) {
                return Err(Error::invalid(format!("slice {} has metrics outside [0, 1]", s.key)));
            }
            let ends = (s.roc_curve.first(), s.roc_curve.last());
            let ok = matches!(ends, (Some(a), Some(b)) if (a.x, a.y) == (0.0, 0.0) && (b.x, b.y) == (1.0, 1.0));
            if !ok {
                return Err(Error::invalid(format!("slice {} ROC curve does not run (0,0) to (1,1)", s.key)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub roc: PathBuf,
    pub pr: PathBuf,
}

impl ReportFiles {
    pub fn at(dir: &Path, stem: &str) -> Self {
        ReportFiles {
            results: dir.join(format!("{stem}.json")),
            roc: dir.join(format!("{stem}_roc.tsv")),
            pr: dir.join(format!("{stem}_pr.tsv")),
        }
    }
}

pub const CURVE_HEADER: &str = "slice\tthreshold\tx\ty";

fn write_curves(path: &Path, report: &EvalReport, pick: fn(&SliceMetrics) -> &[CurvePoint]) -> Result<()> {
    let mut out = String::new();
    out.push_str(CURVE_HEADER);
    out.push('\n');
    for s in &report.slices {
        for p in pick(s) {
            out.push_str(&format!("{}\t{}\t{}\t{}\n", s.key, p.threshold, p.x, p.y));
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Writes `<stem>.json`, `<stem>_roc.tsv` and `<stem>_pr.tsv` into `dir`.
pub fn emit_report(report: &EvalReport, dir: &Path, stem: &str) -> Result<ReportFiles> {
    report.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles::at(dir, stem);
    let body = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(&files.results, body + "\n").map_err(|e| Error::io(&files.results, e))?;
    write_curves(&files.roc, report, |s| &s.roc_curve)?;
    write_curves(&files.pr, report, |s| &s.pr_curve)?;
    Ok(files)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let r: EvalReport =
        serde_json::from_str(&body).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
    r.validate()?;
    Ok(r)
}

/// One parsed curve file row.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub slice: String,
    pub point: CurvePoint,
}

pub fn read_curves(path: &Path) -> Result<Vec<CurveRow>> {
    let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = body.lines();
    if lines.next() != Some(CURVE_HEADER) {
        return Err(Error::invalid(format!("{}: missing curve header", path.display())));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.enumerate() {
        let bad = || Error::invalid(format!("{}: malformed line {}", path.display(), n + 2));
        let cells: Vec<&str> = line.split('\t').collect();
        if cells.len() != 4 {
            return Err(bad());
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
        rows.push(CurveRow {
            slice: cells[0].to_owned(),
            point: CurvePoint {
                threshold: num(cells[1])?,
                x: num(cells[2])?,
                y: num(cells[3])?,
            },
        });
    }
    Ok(rows)
}
