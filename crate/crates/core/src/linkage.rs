//! Title linkage: matches raw reference strings to corpus papers using
//! normalized exact matches, TF-IDF cosine similarity and edit similarity.
//! Gray-zone matches go to a review queue instead of being guessed.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::corpus::{InclusionSource, PaperId};
use crate::error::{Error, Result};
use crate::par;

/// Lowercased, NFKC-normalized title with punctuation mapped to single spaces.
pub fn normalize_title(raw: &str) -> String {
    let folded: String = raw.nfkc().flat_map(char::to_lowercase).nfkc().collect();
    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for ch in folded.chars() {
        if ch.is_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `1 - levenshtein / max(len)`, in characters; 1.0 for two empty strings.
pub fn edit_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

/// Sparse vector as (token index, weight) sorted by index.
pub type SparseVec = Vec<(u32, f64)>;

pub fn sparse_dot(a: &SparseVec, b: &SparseVec) -> f64 {
    let (mut i, mut j, mut acc) = (0, 0, 0.0);
    while i < a.len() && j < b.len() {
        match a[i].0.cmp(&b[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += a[i].1 * b[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[derive(Clone, Debug)]
pub struct TitleIndex {
    normalized_titles: HashMap<String, Vec<PaperId>>,
    vocabulary: HashMap<String, u32>,
    idf: Vec<f64>,
    ids: Vec<PaperId>,
    titles: Vec<String>,
    vectors: Vec<SparseVec>,
    postings: Vec<Vec<(u32, f64)>>,
    empty_titles: Vec<PaperId>,
}

impl TitleIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.vocabulary.get(token).map(|&i| self.idf[i as usize])
    }

    pub fn vector(&self, doc: usize) -> &SparseVec {
        &self.vectors[doc]
    }

    pub fn paper_id(&self, doc: usize) -> &PaperId {
        &self.ids[doc]
    }

    pub fn exact(&self, normalized: &str) -> Option<&[PaperId]> {
        self.normalized_titles.get(normalized).map(Vec::as_slice)
    }

    /// Papers whose titles normalized to the empty string (zero vectors).
    pub fn empty_titles(&self) -> &[PaperId] {
        &self.empty_titles
    }

    /// Unit TF-IDF vector of an arbitrary text; tokens outside the index
    /// vocabulary are ignored.
    pub fn vectorize(&self, text: &str) -> SparseVec {
        let norm = normalize_title(text);
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in norm.split_whitespace() {
            if let Some(&i) = self.vocabulary.get(tok) {
                *counts.entry(i).or_default() += 1.0;
            }
        }
        let v = counts
            .into_iter()
            .map(|(i, tf)| (i, tf * self.idf[i as usize]))
            .collect();
        l2_normalize(v)
    }
}

fn l2_normalize(mut v: SparseVec) -> SparseVec {
    let norm = v.iter().map(|(_, w)| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        for (_, w) in v.iter_mut() {
            *w /= norm;
        }
    }
    v
}

/// Builds the TF-IDF index. idf = ln((1 + N) / (1 + df)) + 1, tf = raw count.
pub fn build_tfidf_index<S: AsRef<str>>(titles: &[(PaperId, S)]) -> Result<TitleIndex> {
    if titles.is_empty() {
        return Err(Error::invalid("title index needs at least one title"));
    }
    let normalized: Vec<String> = titles.iter().map(|(_, t)| normalize_title(t.as_ref())).collect();
    let mut vocabulary: HashMap<String, u32> = HashMap::new();
    let mut df: Vec<u64> = Vec::new();
    let mut token_counts: Vec<BTreeMap<u32, f64>> = Vec::with_capacity(titles.len());
    for norm in &normalized {
        let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
        for tok in norm.split_whitespace() {
            let next = vocabulary.len() as u32;
            let idx = *vocabulary.entry(tok.to_owned()).or_insert(next);
            if idx as usize == df.len() {
                df.push(0);
            }
            *counts.entry(idx).or_default() += 1.0;
        }
        for &idx in counts.keys() {
            df[idx as usize] += 1;
        }
        token_counts.push(counts);
    }
    let n = titles.len() as f64;
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();

    let mut normalized_titles: HashMap<String, Vec<PaperId>> = HashMap::new();
    let mut vectors = Vec::with_capacity(titles.len());
    let mut postings: Vec<Vec<(u32, f64)>> = vec![Vec::new(); idf.len()];
    let mut empty_titles = Vec::new();
    for (doc, ((id, _), counts)) in titles.iter().zip(token_counts).enumerate() {
        if counts.is_empty() {
            empty_titles.push(id.clone());
        } else {
            normalized_titles
                .entry(normalized[doc].clone())
                .or_default()
                .push(id.clone());
        }
        let v = l2_normalize(
            counts
                .into_iter()
                .map(|(i, tf)| (i, tf * idf[i as usize]))
                .collect(),
        );
        for &(i, w) in &v {
            postings[i as usize].push((doc as u32, w));
        }
        vectors.push(v);
    }
    for ids in normalized_titles.values_mut() {
        ids.sort();
    }
    Ok(TitleIndex {
        normalized_titles,
        vocabulary,
        idf,
        ids: titles.iter().map(|(id, _)| id.clone()).collect(),
        titles: normalized,
        vectors,
        postings,
        empty_titles,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchThresholds {
    pub accept_cosine: f64,
    pub accept_edit: f64,
    pub reject_cosine: f64,
    pub reject_edit: f64,
}

impl Default for MatchThresholds {
    fn default() -> Self {
        MatchThresholds {
            accept_cosine: 0.85,
            accept_edit: 0.90,
            reject_cosine: 0.50,
            reject_edit: 0.60,
        }
    }
}

impl MatchThresholds {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.accept_cosine,
            self.accept_edit,
            self.reject_cosine,
            self.reject_edit,
        ];
        if all.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("match thresholds must lie in [0, 1]"));
        }
        if self.accept_cosine < self.reject_cosine || self.accept_edit < self.reject_edit {
            return Err(Error::invalid("accept thresholds must be >= reject thresholds"));
        }
        Ok(())
    }

    pub fn classify(&self, cosine: f64, edit: f64) -> Verdict {
        if cosine >= self.accept_cosine && edit >= self.accept_edit {
            Verdict::Accepted
        } else if cosine < self.reject_cosine && edit < self.reject_edit {
            Verdict::Rejected
        } else {
            Verdict::Review
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Review,
    Rejected,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Accepted => "accepted",
            Verdict::Review => "review",
            Verdict::Rejected => "rejected",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchDecision {
    pub raw_reference: String,
    pub candidate_paper_id: Option<PaperId>,
    pub edit_similarity: f64,
    pub cosine_similarity: f64,
    pub verdict: Verdict,
    pub reason: Option<String>,
}

fn match_one(raw: &str, idx: &TitleIndex, cfg: &MatchThresholds) -> MatchDecision {
    let norm = normalize_title(raw);
    if norm.is_empty() {
        return MatchDecision {
            raw_reference: raw.to_owned(),
            candidate_paper_id: None,
            edit_similarity: 0.0,
            cosine_similarity: 0.0,
            verdict: Verdict::Rejected,
            reason: Some("empty reference".into()),
        };
    }
    if let Some(ids) = idx.exact(&norm) {
        return MatchDecision {
            raw_reference: raw.to_owned(),
            candidate_paper_id: Some(ids[0].clone()),
            edit_similarity: 1.0,
            cosine_similarity: 1.0,
            verdict: Verdict::Accepted,
            reason: Some("exact".into()),
        };
    }

    let q = idx.vectorize(&norm);
    let mut scores: HashMap<u32, f64> = HashMap::new();
    for &(tok, wq) in &q {
        for &(doc, wd) in &idx.postings[tok as usize] {
            *scores.entry(doc).or_default() += wq * wd;
        }
    }
    let best_cos = scores.values().copied().fold(0.0_f64, f64::max);
    if best_cos <= 0.0 {
        return MatchDecision {
            raw_reference: raw.to_owned(),
            candidate_paper_id: None,
            edit_similarity: 0.0,
            cosine_similarity: 0.0,
            verdict: Verdict::Rejected,
            reason: Some("no shared tokens".into()),
        };
    }
    // Ties on cosine go to edit similarity, then to the smallest paper id.
    let mut best: Option<(f64, f64, usize)> = None;
    for (&doc, &cos) in &scores {
        if cos < best_cos - 1e-12 {
            continue;
        }
        let doc = doc as usize;
        let edit = edit_similarity(&norm, &idx.titles[doc]);
        let better = match best {
            None => true,
            Some((bc, be, bd)) => {
                (cos, edit) > (bc, be)
                    || ((cos, edit) == (bc, be) && idx.ids[doc] < idx.ids[bd])
            }
        };
        if better {
            best = Some((cos, edit, doc));
        }
    }
    let (cos, edit, doc) = best.expect("at least one scored candidate");
    let cos = cos.clamp(0.0, 1.0);
    MatchDecision {
        raw_reference: raw.to_owned(),
        candidate_paper_id: Some(idx.ids[doc].clone()),
        edit_similarity: edit,
        cosine_similarity: cos,
        verdict: cfg.classify(cos, edit),
        reason: None,
    }
}

/// Classifies every reference as accepted, review or rejected.
pub fn match_references<S: AsRef<str> + Sync>(
    refs: &[S],
    idx: &TitleIndex,
    cfg: &MatchThresholds,
) -> Result<Vec<MatchDecision>> {
    cfg.validate()?;
    Ok(par::map(refs, |r| match_one(r.as_ref(), idx, cfg)))
}

/// Links guideline sources to paper ids; only accepted matches resolve.
pub fn resolve_sources(
    sources: &[InclusionSource],
    idx: &TitleIndex,
    cfg: &MatchThresholds,
) -> Result<(Vec<InclusionSource>, Vec<MatchDecision>)> {
    let mut all = Vec::new();
    let mut out = Vec::with_capacity(sources.len());
    for s in sources {
        let decisions = match_references(&s.reference_titles, idx, cfg)?;
        let mut resolved = s.clone();
        resolved.reference_paper_ids = decisions
            .iter()
            .filter(|d| d.verdict == Verdict::Accepted)
            .filter_map(|d| d.candidate_paper_id.clone())
            .collect();
        out.push(resolved);
        all.extend(decisions);
    }
    Ok((out, all))
}

fn tsv_field(s: &str) -> String {
    s.replace(['\t', '\n', '\r'], " ")
}

/// Writes decisions as TSV: raw_reference, candidate_id, cosine, edit, verdict.
/// With `review_only`, only gray-zone decisions are written (the review queue).
pub fn write_decisions(path: &Path, decisions: &[MatchDecision], review_only: bool) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(w, "raw_reference\tcandidate_id\tcosine\tedit\tverdict").map_err(io)?;
    for d in decisions {
        if review_only && d.verdict != Verdict::Review {
            continue;
        }
        writeln!(
            w,
            "{}\t{}\t{:.6}\t{:.6}\t{}",
            tsv_field(&d.raw_reference),
            d.candidate_paper_id.as_ref().map_or("", |p| p.as_str()),
            d.cosine_similarity,
            d.edit_similarity,
            d.verdict.as_str()
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}
