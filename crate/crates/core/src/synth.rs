//! Seeded synthetic corpora with planted label-generating signal.
//!
//! Every paper carries three latent scores: a citation score that sets how
//! attractive it is to later citers, a metadata score that shifts author and
//! reference counts, and a text score that sets how many abstract sentences
//! (and how often the title) carry words from a fixed signal vocabulary.
//! Labels are Bernoulli draws from a logistic function of the weighted
//! latents, with the intercept solved so the expected positive rate matches
//! the requested base rate. Everything planted is written to a sidecar.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::corpus::{
    write_records, CorpusFiles, GuidelineLine, MentionEvent, PaperId, PaperRecord, PatentLine, VocabEntry, VocabKind,
};
use crate::error::{Error, Result};
use crate::preprocess::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_papers: usize,
    pub n_fields: usize,
    /// Zipf exponent of field popularity.
    pub field_skew: f64,
    pub n_journals: usize,
    pub patent_rate: f64,
    pub guideline_rate: f64,
    pub metadata_weight: f64,
    pub text_token_weight: f64,
    pub citation_weight: f64,
    /// Standard deviation of extra Gaussian noise on the label logit.
    pub noise: f64,
    /// Papers that are never cited, so the corpus filter removes them.
    pub uncited_fraction: f64,
    pub laureate_papers: usize,
    pub perturbed_title_fraction: f64,
    /// Guideline references per true link that point at no corpus paper.
    pub distractor_fraction: f64,
    pub first_year: i32,
    pub last_year: i32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_papers: 50_000,
            n_fields: 43,
            field_skew: 1.0,
            n_journals: 200,
            patent_rate: 0.02,
            guideline_rate: 0.0004,
            metadata_weight: 1.2,
            text_token_weight: 1.6,
            citation_weight: 1.0,
            noise: 0.0,
            uncited_fraction: 0.3,
            laureate_papers: 166,
            perturbed_title_fraction: 0.05,
            distractor_fraction: 0.2,
            first_year: 1990,
            last_year: 2018,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        for (name, w) in [
            ("metadata_weight", self.metadata_weight),
            ("text_token_weight", self.text_token_weight),
            ("citation_weight", self.citation_weight),
            ("noise", self.noise),
            ("field_skew", self.field_skew),
        ] {
            if !(w >= 0.0 && w.is_finite()) {
                return bad(&format!("{name} must be a finite value >= 0"));
            }
        }
        for (name, r) in [("patent_rate", self.patent_rate), ("guideline_rate", self.guideline_rate)] {
            if !(r > 0.0 && r < 1.0) {
                return bad(&format!("{name} must lie in (0, 1)"));
            }
        }
        for (name, f) in [
            ("uncited_fraction", self.uncited_fraction),
            ("perturbed_title_fraction", self.perturbed_title_fraction),
            ("distractor_fraction", self.distractor_fraction),
        ] {
            if !(0.0..=1.0).contains(&f) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.n_fields == 0 || self.n_journals == 0 {
            return bad("n_fields and n_journals must be positive");
        }
        if self.first_year > self.last_year || self.first_year < 1900 || self.last_year > 2100 {
            return bad("year range is invalid");
        }
        let cited = self.n_papers - (self.uncited_fraction * self.n_papers as f64).round() as usize;
        if self.n_papers > 0 && self.laureate_papers > cited.saturating_sub(1) {
            return bad("more laureate papers than citable papers");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PaperTruth {
    pub paper_id: PaperId,
    pub citation_latent: f64,
    pub metadata_latent: f64,
    pub text_latent: f64,
    pub patent: bool,
    pub guideline: bool,
    pub citable: bool,
    pub laureate: bool,
    pub n_sentences: usize,
    pub signal_sentences: usize,
}

/// One guideline reference string and the paper it was written from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TitleLink {
    pub document_id: String,
    pub raw_reference: String,
    pub paper_id: Option<PaperId>,
    pub perturbed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SyntheticSpec,
    pub patent_intercept: f64,
    pub guideline_intercept: f64,
    /// Numeric feature columns driven by each latent score.
    pub feature_groups: BTreeMap<String, Vec<String>>,
    pub signal_words: Vec<String>,
    pub papers: Vec<PaperTruth>,
    pub title_links: Vec<TitleLink>,
}

impl GroundTruth {
    pub fn laureates(&self) -> Vec<PaperId> {
        self.papers.iter().filter(|p| p.laureate).map(|p| p.paper_id.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticFiles {
    pub papers: PathBuf,
    pub vocab: PathBuf,
    pub mentions: PathBuf,
    pub patents: PathBuf,
    pub guidelines: PathBuf,
    pub laureates: PathBuf,
    pub truth: PathBuf,
}

impl SyntheticFiles {
    pub fn in_dir(dir: &Path) -> Self {
        SyntheticFiles {
            papers: dir.join("papers.jsonl"),
            vocab: dir.join("vocab.jsonl"),
            mentions: dir.join("mentions.jsonl"),
            patents: dir.join("patents.jsonl"),
            guidelines: dir.join("guidelines.jsonl"),
            laureates: dir.join("laureates.txt"),
            truth: dir.join("truth.json"),
        }
    }

    pub fn corpus_files(&self) -> CorpusFiles {
        CorpusFiles {
            papers: vec![self.papers.clone()],
            citations: Vec::new(),
            vocab: vec![self.vocab.clone()],
        }
    }
}

pub fn read_truth(path: &Path) -> Result<GroundTruth> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn read_id_list(path: &Path) -> Result<Vec<PaperId>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(PaperId::new).collect())
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Intercept at which the mean predicted probability equals `rate`.
pub fn solve_intercept(logits: &[f64], rate: f64) -> f64 {
    if logits.is_empty() {
        return (rate / (1.0 - rate)).ln();
    }
    let mean = |a: f64| logits.iter().map(|z| sigmoid(a + z)).sum::<f64>() / logits.len() as f64;
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean(mid) < rate {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "ta", "vi", "so", "pe", "du", "ga", "zo", "ri", "fa", "hu", "be", "ny", "xe", "qua",
    "tor", "len", "dra", "mos", "cil",
];
const SIGNAL_SUFFIXES: [&str; 4] = ["mab", "nib", "zumab", "tide"];
const BACKGROUND_WORDS: usize = 3000;
const SIGNAL_WORDS: usize = 24;

fn make_word(r: &mut ChaCha8Rng) -> String {
    let n = r.random_range(2..=4);
    (0..n).map(|_| *SYLLABLES.choose(r).expect("syllables")).collect()
}

struct Lexicon {
    background: Vec<String>,
    signal: Vec<String>,
}

impl Lexicon {
    fn new(r: &mut ChaCha8Rng) -> Self {
        let mut seen = BTreeSet::new();
        let mut background = Vec::new();
        while background.len() < BACKGROUND_WORDS {
            let w = make_word(r);
            if seen.insert(w.clone()) {
                background.push(w);
            }
        }
        let mut signal = Vec::new();
        while signal.len() < SIGNAL_WORDS {
            let w = format!("{}{}", make_word(r), SIGNAL_SUFFIXES.choose(r).expect("suffixes"));
            if seen.insert(w.clone()) {
                signal.push(w);
            }
        }
        Lexicon { background, signal }
    }

    fn words(&self, r: &mut ChaCha8Rng, n: usize) -> Vec<String> {
        (0..n).map(|_| self.background.choose(r).expect("words").clone()).collect()
    }

    /// A sentence of background words with `signal` of them replaced by
    /// signal words.
    fn sentence(&self, r: &mut ChaCha8Rng, signal: usize) -> String {
        let n = r.random_range(6..=14);
        let mut words = self.words(r, n);
        for _ in 0..signal {
            let pos = r.random_range(0..n);
            words[pos] = self.signal.choose(r).expect("signal words").clone();
        }
        let mut s = words.join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        s
    }

    fn title(&self, r: &mut ChaCha8Rng, with_signal: bool) -> String {
        let n = r.random_range(7..=12);
        let mut words = self.words(r, n);
        if with_signal {
            let pos = r.random_range(0..n);
            words[pos] = self.signal.choose(r).expect("signal words").clone();
        }
        let mut s = words.join(" ");
        s[..1].make_ascii_uppercase();
        s
    }
}

/// A small edit that keeps the title recognizable: one character changed
/// or two swapped inside a word of at least five letters, or case and
/// punctuation noise.
pub fn perturb_title(title: &str, r: &mut ChaCha8Rng) -> String {
    let words: Vec<&str> = title.split(' ').collect();
    let long: Vec<usize> = (0..words.len()).filter(|&i| words[i].chars().count() >= 5).collect();
    let kind = if long.is_empty() { 2 } else { r.random_range(0..3) };
    match kind {
        0 | 1 => {
            let i = *long.choose(r).expect("long word");
            let mut chars: Vec<char> = words[i].chars().collect();
            let p = r.random_range(1..chars.len() - 1);
            if kind == 0 {
                let replacement = loop {
                    let c = char::from(b'a' + r.random_range(0..26u8));
                    if c != chars[p].to_ascii_lowercase() {
                        break c;
                    }
                };
                chars[p] = replacement;
            } else {
                chars.swap(p, p + 1);
            }
            let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
            out[i] = chars.into_iter().collect();
            out.join(" ")
        }
        _ => format!("{}.", title.to_uppercase()),
    }
}

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    (0..n).map(|k| 1.0 / ((k + 1) as f64).powf(s)).collect()
}

fn pick_weighted(r: &mut ChaCha8Rng, cumulative: &[f64]) -> usize {
    let total = *cumulative.last().expect("nonempty weights");
    let u = r.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    w.iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

fn poisson(r: &mut ChaCha8Rng, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(r) as usize
}

struct Draft {
    id: PaperId,
    year: i32,
    month: u8,
    c: f64,
    m: f64,
    t: f64,
    citable: bool,
    laureate: bool,
}

/// Writes a synthetic corpus into `dir` and returns the ground truth.
pub fn generate_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(SyntheticFiles, GroundTruth)> {
    spec.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = SyntheticFiles::in_dir(dir);
    let mut r = rng(spec.seed);
    let lex = Lexicon::new(&mut r);
    let n = spec.n_papers;

    // publication dates, growing about 5% a year, sorted so citations only
    // point backwards in time
    let years: Vec<i32> = (spec.first_year..=spec.last_year).collect();
    let year_cum = cumulative(&years.iter().enumerate().map(|(i, _)| 1.05f64.powi(i as i32)).collect::<Vec<_>>());
    let mut dates: Vec<(i32, u8)> = (0..n)
        .map(|_| (years[pick_weighted(&mut r, &year_cum)], r.random_range(1..=12u8)))
        .collect();
    dates.sort_unstable();

    let width = n.max(1).to_string().len().max(6);
    let mut drafts: Vec<Draft> = dates
        .iter()
        .enumerate()
        .map(|(i, &(year, month))| Draft {
            id: PaperId::new(format!("P{i:0width$}")),
            year,
            month,
            c: StandardNormal.sample(&mut r),
            m: StandardNormal.sample(&mut r),
            t: StandardNormal.sample(&mut r),
            citable: true,
            laureate: false,
        })
        .collect();

    // the newest paper can never be cited, so it is always among the uncited
    let n_uncited = (spec.uncited_fraction * n as f64).round() as usize;
    if n > 0 {
        let mut order: Vec<usize> = (0..n - 1).collect();
        order.shuffle(&mut r);
        let mut uncited: Vec<usize> = Vec::new();
        if n_uncited > 0 {
            uncited.push(n - 1);
            uncited.extend(order.iter().take(n_uncited - 1).copied());
        }
        for &i in &uncited {
            drafts[i].citable = false;
        }
        let citable: Vec<usize> = order.iter().copied().filter(|&i| drafts[i].citable).collect();
        for &i in citable.iter().take(spec.laureate_papers) {
            let d = &mut drafts[i];
            d.laureate = true;
            d.t = 2.0;
            d.m = 1.0;
            d.c = -0.5;
        }
    }

    // labels
    let noise: Vec<f64> = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(&mut r);
            spec.noise * e
        })
        .collect();
    let logits: Vec<f64> = drafts
        .iter()
        .zip(&noise)
        .map(|(d, e)| spec.citation_weight * d.c + spec.metadata_weight * d.m + spec.text_token_weight * d.t + e)
        .collect();
    let patent_intercept = solve_intercept(&logits, spec.patent_rate);
    let guideline_intercept = solve_intercept(&logits, spec.guideline_rate);
    let patent: Vec<bool> = logits.iter().map(|z| r.random::<f64>() < sigmoid(patent_intercept + z)).collect();
    let guideline: Vec<bool> = logits.iter().map(|z| r.random::<f64>() < sigmoid(guideline_intercept + z)).collect();

    // vocabularies
    let field_cum = cumulative(&zipf_weights(spec.n_fields, spec.field_skew));
    let journal_cum = cumulative(&zipf_weights(spec.n_journals, 1.0));
    let n_authors = (n / 2).max(1);
    let n_affiliations = (n / 100).clamp(1, 500);
    let author_affiliation: Vec<usize> = (0..n_authors).map(|_| r.random_range(0..n_affiliations)).collect();
    let mut vocab = Vec::new();
    for f in 0..spec.n_fields {
        vocab.push(VocabEntry {
            kind: VocabKind::Field,
            id: format!("F{f:02}"),
            name: format!("Field {}", lex.background[f]),
        });
    }
    for j in 0..spec.n_journals {
        vocab.push(VocabEntry {
            kind: VocabKind::Journal,
            id: format!("J{j:03}"),
            name: format!("Journal of {}", lex.background[100 + j % 2000]),
        });
    }
    for a in 0..n_affiliations {
        vocab.push(VocabEntry {
            kind: VocabKind::Affiliation,
            id: format!("I{a:04}"),
            name: format!("Institute {a}"),
        });
    }

    // records
    let mut records = Vec::with_capacity(n);
    let mut truth_papers = Vec::with_capacity(n);
    let mut titles = Vec::with_capacity(n);
    for (i, d) in drafts.iter().enumerate() {
        let p_signal = sigmoid(-2.0 + 1.5 * d.t);
        let n_sentences = r.random_range(3..=24usize);
        let n_signal = Binomial::new(n_sentences as u64, p_signal).expect("valid binomial").sample(&mut r) as usize;
        let mut is_signal = vec![false; n_sentences];
        for s in is_signal.iter_mut().take(n_signal) {
            *s = true;
        }
        is_signal.shuffle(&mut r);
        let sentences: Vec<String> = is_signal
            .iter()
            .map(|&s| {
                let k = if s { r.random_range(2..=4) } else { 0 };
                lex.sentence(&mut r, k)
            })
            .collect();
        let title_signal = r.random::<f64>() < p_signal;
        let title = lex.title(&mut r, title_signal);
        let n_auth = 1 + poisson(&mut r, (1.0 + 0.5 * d.m).exp());
        let author_ids: Vec<usize> = (0..n_auth).map(|_| r.random_range(0..n_authors)).collect();
        let n_fields = 1 + r.random_range(0..3usize).min(r.random_range(0..3usize));
        let mut fields = BTreeSet::new();
        while fields.len() < n_fields.min(spec.n_fields) {
            fields.insert(pick_weighted(&mut r, &field_cum));
        }

        let mut rec = PaperRecord::new(d.id.0.clone(), d.year);
        rec.month = Some(d.month);
        rec.title = title.clone();
        rec.r#abstract = Some(sentences.join(" "));
        rec.journal_id = Some(format!("J{:03}", pick_weighted(&mut r, &journal_cum)));
        rec.author_ids = author_ids.iter().map(|a| format!("A{a:06}")).collect();
        rec.affiliation_ids = Some(author_ids.iter().map(|&a| format!("I{:04}", author_affiliation[a])).collect());
        rec.field_ids = fields.iter().map(|f| format!("F{f:02}")).collect();
        records.push(rec);
        titles.push(title);
        truth_papers.push(PaperTruth {
            paper_id: d.id.clone(),
            citation_latent: d.c,
            metadata_latent: d.m,
            text_latent: d.t,
            patent: patent[i],
            guideline: guideline[i],
            citable: d.citable,
            laureate: d.laureate,
            n_sentences,
            signal_sentences: n_signal,
        });
    }

    // citations: each paper cites earlier citable papers in proportion to
    // their attractiveness; the rest of its reference list is dangling
    let attract: Vec<f64> = drafts.iter().map(|d| if d.citable { (0.8 * d.c).exp() } else { 0.0 }).collect();
    let attract_cum = cumulative(&attract);
    let mut in_degree = vec![0usize; n];
    let mut mentions: Vec<MentionEvent> = Vec::new();
    let mut dangling = 0usize;
    for i in 0..n {
        let total_refs = poisson(&mut r, (2.8 + 0.5 * drafts[i].m).exp());
        let internal_target = ((total_refs as f64) * 0.6).round() as usize;
        let available = if i == 0 { 0.0 } else { attract_cum[i - 1] };
        let mut picked = BTreeSet::new();
        if available > 0.0 {
            let earlier = &attract_cum[..i];
            let mut tries = 0;
            while picked.len() < internal_target && tries < internal_target * 10 {
                picked.insert(pick_weighted(&mut r, earlier));
                tries += 1;
            }
        }
        let mut refs: Vec<PaperId> = picked.iter().map(|&j| drafts[j].id.clone()).collect();
        for &j in &picked {
            in_degree[j] += 1;
        }
        while refs.len() < total_refs {
            refs.push(PaperId::new(format!("X{dangling:08}")));
            dangling += 1;
        }
        records[i].reference_ids = refs;
    }
    // every citable paper gets at least one citation from a later paper
    for j in 0..n {
        if drafts[j].citable && in_degree[j] == 0 {
            let i = r.random_range(j + 1..n);
            records[i].reference_ids.push(drafts[j].id.clone());
            in_degree[j] += 1;
        }
    }
    for rec in &records {
        for cited in &rec.reference_ids {
            if cited.0.starts_with('P') {
                mentions.push(MentionEvent {
                    citing: rec.paper_id.clone(),
                    cited: cited.clone(),
                    occurrences: 1 + poisson(&mut r, 0.7) as i64,
                });
            }
        }
    }

    // patents cite positives by id
    let mut patents = Vec::new();
    let mut patent_refs: Vec<PaperId> = Vec::new();
    for (i, &pos) in patent.iter().enumerate() {
        if pos {
            for _ in 0..1 + poisson(&mut r, 0.5) {
                patent_refs.push(drafts[i].id.clone());
            }
        }
    }
    patent_refs.shuffle(&mut r);
    let mut k = 0;
    while k < patent_refs.len() {
        let take = r.random_range(1..=4usize).min(patent_refs.len() - k);
        let mut ids: Vec<PaperId> = patent_refs[k..k + take].to_vec();
        if r.random::<f64>() < 0.1 {
            ids.push(PaperId::new(format!("X{dangling:08}")));
            dangling += 1;
        }
        patents.push(PatentLine {
            document_id: format!("US{:07}", patents.len()),
            reference_ids: ids,
        });
        k += take;
    }

    // guidelines cite positives by title, some perturbed, plus distractors
    let mut guideline_refs: Vec<(Option<usize>, String, bool)> = Vec::new();
    for (i, &pos) in guideline.iter().enumerate() {
        if pos {
            let perturbed = r.random::<f64>() < spec.perturbed_title_fraction;
            let raw = if perturbed { perturb_title(&titles[i], &mut r) } else { titles[i].clone() };
            guideline_refs.push((Some(i), raw, perturbed));
        }
    }
    let n_distractors = (guideline_refs.len() as f64 * spec.distractor_fraction).round() as usize;
    for _ in 0..n_distractors {
        guideline_refs.push((None, lex.title(&mut r, false), false));
    }
    guideline_refs.shuffle(&mut r);
    let mut guidelines = Vec::new();
    let mut title_links = Vec::new();
    let mut k = 0;
    while k < guideline_refs.len() {
        let take = r.random_range(1..=5usize).min(guideline_refs.len() - k);
        let document_id = format!("G{:06}", guidelines.len());
        let mut raws = Vec::new();
        for (paper, raw, perturbed) in &guideline_refs[k..k + take] {
            raws.push(raw.clone());
            title_links.push(TitleLink {
                document_id: document_id.clone(),
                raw_reference: raw.clone(),
                paper_id: paper.map(|i| drafts[i].id.clone()),
                perturbed: *perturbed,
            });
        }
        guidelines.push(GuidelineLine {
            document_id,
            reference_titles: raws,
        });
        k += take;
    }

    let mut feature_groups = BTreeMap::new();
    feature_groups.insert(
        "citation".to_string(),
        ["paper_citation_count", "paper_rank", "paper_mentions_count", "citations_per_year"]
            .map(String::from)
            .to_vec(),
    );
    feature_groups.insert("metadata".to_string(), ["author_count", "reference_count"].map(String::from).to_vec());
    feature_groups.insert("text".to_string(), vec!["title_abstract_embedding".to_string()]);
    let truth = GroundTruth {
        spec: spec.clone(),
        patent_intercept,
        guideline_intercept,
        feature_groups,
        signal_words: lex.signal.clone(),
        papers: truth_papers,
        title_links,
    };

    write_records(&files.papers, &records)?;
    write_records(&files.vocab, &vocab)?;
    write_records(&files.mentions, &mentions)?;
    write_records(&files.patents, &patents)?;
    write_records(&files.guidelines, &guidelines)?;
    let laureates: String = truth.laureates().iter().map(|id| format!("{}\n", id.0)).collect();
    fs::write(&files.laureates, laureates).map_err(|e| Error::io(&files.laureates, e))?;
    let json = serde_json::to_string_pretty(&truth).expect("truth serialization");
    fs::write(&files.truth, json).map_err(|e| Error::io(&files.truth, e))?;
    Ok((files, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, read_guideline_sources, read_patent_sources, ParseOptions};
    use crate::linkage::{edit_similarity, normalize_title};
    use rand::SeedableRng;

    fn small(n: usize, seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            n_papers: n,
            n_journals: 20,
            laureate_papers: 10,
            guideline_rate: 0.05,
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn empty_corpus_is_valid() {
        let dir = tempfile::tempdir().unwrap();
        let (files, truth) = generate_synthetic(&SyntheticSpec { n_papers: 0, laureate_papers: 0, ..SyntheticSpec::default() }, dir.path()).unwrap();
        assert!(truth.papers.is_empty());
        let (c, report) = parse_corpus(&files.corpus_files(), ParseOptions::default()).unwrap();
        assert_eq!(c.len(), 0);
        assert_eq!(report.files[0].failed, 0);
        assert!(read_patent_sources(&files.patents, ParseOptions::default()).unwrap().0.is_empty());
    }

    #[test]
    fn seeded_output_is_identical() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let fa = generate_synthetic(&small(300, 4), a.path()).unwrap().0;
        let fb = generate_synthetic(&small(300, 4), b.path()).unwrap().0;
        for (x, y) in [
            (&fa.papers, &fb.papers),
            (&fa.vocab, &fb.vocab),
            (&fa.mentions, &fb.mentions),
            (&fa.patents, &fb.patents),
            (&fa.guidelines, &fb.guidelines),
            (&fa.laureates, &fb.laureates),
            (&fa.truth, &fb.truth),
        ] {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
        let c = tempfile::tempdir().unwrap();
        let fc = generate_synthetic(&small(300, 5), c.path()).unwrap().0;
        assert_ne!(fs::read(&fa.papers).unwrap(), fs::read(&fc.papers).unwrap());
    }

    #[test]
    fn planted_structure_is_visible_in_the_files() {
        let dir = tempfile::tempdir().unwrap();
        let (files, truth) = generate_synthetic(&small(2000, 1), dir.path()).unwrap();
        let (c, _) = parse_corpus(&files.corpus_files(), ParseOptions::default()).unwrap();
        assert_eq!(c.len(), 2000);
        let read_back = read_truth(&files.truth).unwrap();
        assert_eq!(read_back, truth);

        let uncited: usize = c.ids().filter(|id| c.in_degree(id) == 0).count();
        assert_eq!(uncited, 600);
        for p in &truth.papers {
            assert_eq!(c.in_degree(&p.paper_id) > 0, p.citable);
        }

        // every planted patent positive is referenced by a patent, no negative is
        let (patents, _) = read_patent_sources(&files.patents, ParseOptions::default()).unwrap();
        let referenced: BTreeSet<&PaperId> = patents.iter().flat_map(|s| &s.reference_paper_ids).collect();
        for p in &truth.papers {
            assert_eq!(referenced.contains(&p.paper_id), p.patent);
        }

        // citations only point backwards in time
        for p in c.papers() {
            for r in &p.reference_ids {
                if let Some(q) = c.get(r) {
                    assert!(q.paper_id < p.paper_id);
                }
            }
        }

        let laureates = read_id_list(&files.laureates).unwrap();
        assert_eq!(laureates.len(), 10);
        assert_eq!(laureates, truth.laureates());
        assert!(truth.papers.iter().filter(|p| p.laureate).all(|p| p.citable && p.text_latent == 2.0));
    }

    #[test]
    fn guideline_titles_and_sentences() {
        let dir = tempfile::tempdir().unwrap();
        let (files, truth) = generate_synthetic(&small(2000, 2), dir.path()).unwrap();
        let (c, _) = parse_corpus(&files.corpus_files(), ParseOptions::default()).unwrap();
        let (sources, _) = read_guideline_sources(&files.guidelines, ParseOptions::default()).unwrap();
        let raws: Vec<&String> = sources.iter().flat_map(|s| &s.reference_titles).collect();
        assert_eq!(raws.len(), truth.title_links.len());
        for link in &truth.title_links {
            if let Some(id) = &link.paper_id {
                let title = &c.get(id).unwrap().title;
                if link.perturbed {
                    assert!(edit_similarity(&normalize_title(title), &normalize_title(&link.raw_reference)) >= 0.9);
                } else {
                    assert_eq!(&link.raw_reference, title);
                }
            }
        }
        for p in &truth.papers {
            let abs = c.get(&p.paper_id).unwrap().r#abstract.clone().unwrap();
            assert_eq!(crate::embed::segment_sentences(&abs).len(), p.n_sentences);
            let with_signal = abs
                .split('.')
                .filter(|s| truth.signal_words.iter().any(|w| s.split_whitespace().any(|t| t.eq_ignore_ascii_case(w))))
                .count();
            assert_eq!(with_signal, p.signal_sentences);
        }
    }

    #[test]
    fn intercept_hits_rate() {
        let mut r = ChaCha8Rng::seed_from_u64(0);
        let z: Vec<f64> = (0..1000)
            .map(|_| {
                let v: f64 = StandardNormal.sample(&mut r);
                2.0 * v
            })
            .collect();
        let a = solve_intercept(&z, 0.02);
        let mean = z.iter().map(|v| sigmoid(a + v)).sum::<f64>() / 1000.0;
        assert!((mean - 0.02).abs() < 1e-12);
    }

    #[test]
    fn perturbation_keeps_titles_close() {
        let mut r = ChaCha8Rng::seed_from_u64(9);
        let lex = Lexicon::new(&mut r);
        for _ in 0..500 {
            let t = lex.title(&mut r, false);
            let p = perturb_title(&t, &mut r);
            let sim = edit_similarity(&normalize_title(&t), &normalize_title(&p));
            assert!(sim >= 0.9, "{t} / {p}");
        }
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(SyntheticSpec { patent_rate: 0.0, ..SyntheticSpec::default() }.validate().is_err());
        assert!(SyntheticSpec { metadata_weight: -1.0, ..SyntheticSpec::default() }.validate().is_err());
        assert!(SyntheticSpec { n_papers: 10, ..SyntheticSpec::default() }.validate().is_err());
    }
}
