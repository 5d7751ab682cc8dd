//! Sentence segmentation, the hashed fallback sentence embedder, the fixed
//! 16128-value title+abstract layout and the TEMB/1 binary file format.
//!
//! TEMB/1 layout (little-endian):
//!
//! ```text
//! "TEMB" | u32 version = 1 | u32 dim = 768 | u32 slots = 21 | u64 count
//! count × ( u16 id_len | id bytes (UTF-8) | 21 × 768 × f32 )
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::corpus::PaperId;
use crate::error::{Error, Result};
use crate::par;

pub const DIM: usize = 768;
pub const MAX_SENTENCES: usize = 20;
pub const SLOTS: usize = MAX_SENTENCES + 1;
pub const FLAT_DIM: usize = SLOTS * DIM;

pub const MAGIC: &[u8; 4] = b"TEMB";
pub const VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 4 + 4 + 4 + 4 + 8;

const ABBREVIATIONS: &[&str] = &[
    "al.", "fig.", "figs.", "vs.", "e.g.", "i.e.", "dr.", "mr.", "mrs.", "ms.", "no.", "approx.",
    "ca.", "cf.", "eq.", "ref.", "refs.", "vol.", "etc.", "resp.",
];

/// Splits on `.`, `!` or `?` when followed by whitespace and then an
/// uppercase letter or digit, unless the terminating word is a known
/// abbreviation.
pub fn segment_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut out = Vec::new();
    let mut start = 0;
    for (k, &(pos, ch)) in chars.iter().enumerate() {
        if !matches!(ch, '.' | '!' | '?') {
            continue;
        }
        let Some(&(_, next)) = chars.get(k + 1) else {
            continue;
        };
        if !next.is_whitespace() {
            continue;
        }
        let Some(&(_, follow)) = chars[k + 1..].iter().find(|(_, c)| !c.is_whitespace()) else {
            continue;
        };
        if !(follow.is_uppercase() || follow.is_ascii_digit()) {
            continue;
        }
        let end = pos + ch.len_utf8();
        let word_start = text[start..pos]
            .rfind(char::is_whitespace)
            .map_or(start, |i| start + i + 1);
        let word = text[word_start..end].to_lowercase();
        if ABBREVIATIONS.contains(&word.as_str()) {
            continue;
        }
        let sentence = text[start..end].trim();
        if !sentence.is_empty() {
            out.push(sentence.to_owned());
        }
        start = end;
    }
    let rest = text[start..].trim();
    if !rest.is_empty() {
        out.push(rest.to_owned());
    }
    out
}

/// 768 finite values.
#[derive(Clone, Debug, PartialEq)]
pub struct SentenceEmbedding(Vec<f32>);

impl SentenceEmbedding {
    pub fn new(values: Vec<f32>) -> Result<Self> {
        if values.len() != DIM {
            return Err(Error::invalid(format!(
                "sentence embedding has {} values, expected {DIM}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sentence embedding has non-finite values"));
        }
        Ok(SentenceEmbedding(values))
    }

    pub fn zeros() -> Self {
        SentenceEmbedding(vec![0.0; DIM])
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const BUCKET_SEED: u64 = 0x5eed_0001;
const SIGN_SEED: u64 = 0x5eed_0002;

/// FNV-1a over the seed bytes then the token bytes.
fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in seed.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    // final avalanche so that low bits depend on every input byte
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^= h >> 33;
    h
}

/// Hashed bag of word unigrams and character trigrams, signed and L2-normalized.
pub fn fallback_embed(sentence: &str) -> SentenceEmbedding {
    let lower = sentence.to_lowercase();
    let mut acc = vec![0.0f64; DIM];
    let mut add = |feature: &str| {
        let bucket = (seeded_hash(BUCKET_SEED, feature.as_bytes()) % DIM as u64) as usize;
        let sign = if seeded_hash(SIGN_SEED, feature.as_bytes()) & 1 == 0 {
            1.0
        } else {
            -1.0
        };
        acc[bucket] += sign;
    };
    for word in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
    {
        add(&format!("w:{word}"));
        let padded: Vec<char> = std::iter::once('#')
            .chain(word.chars())
            .chain(std::iter::once('#'))
            .collect();
        for tri in padded.windows(3) {
            let s: String = tri.iter().collect();
            add(&format!("c:{s}"));
        }
    }
    let norm = acc.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return SentenceEmbedding::zeros();
    }
    SentenceEmbedding(acc.iter().map(|v| (v / norm) as f32).collect())
}

/// Title vector followed by exactly 20 sentence rows; unused rows are zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TitleAbstractEmbedding {
    flat: Vec<f32>,
}

impl TitleAbstractEmbedding {
    pub fn from_flat(flat: Vec<f32>) -> Result<Self> {
        if flat.len() != FLAT_DIM {
            return Err(Error::invalid(format!(
                "flat embedding has {} values, expected {FLAT_DIM}",
                flat.len()
            )));
        }
        Ok(TitleAbstractEmbedding { flat })
    }

    pub fn flat(&self) -> &[f32] {
        &self.flat
    }

    pub fn into_flat(self) -> Vec<f32> {
        self.flat
    }

    pub fn title(&self) -> &[f32] {
        &self.flat[..DIM]
    }

    /// Abstract sentence slot `i` in 0..20.
    pub fn abstract_row(&self, i: usize) -> &[f32] {
        &self.flat[DIM * (i + 1)..DIM * (i + 2)]
    }
}

/// Keeps the first 20 sentence vectors in order and zero-pads the rest.
pub fn assemble_title_abstract(title: &SentenceEmbedding, sentences: &[SentenceEmbedding]) -> TitleAbstractEmbedding {
    let mut flat = Vec::with_capacity(FLAT_DIM);
    flat.extend_from_slice(title.as_slice());
    for s in sentences.iter().take(MAX_SENTENCES) {
        flat.extend_from_slice(s.as_slice());
    }
    flat.resize(FLAT_DIM, 0.0);
    TitleAbstractEmbedding { flat }
}

/// Fallback embedding of one paper's title and abstract.
pub fn embed_paper(title: &str, abstract_text: Option<&str>) -> TitleAbstractEmbedding {
    let sentences: Vec<SentenceEmbedding> = abstract_text
        .map(segment_sentences)
        .unwrap_or_default()
        .iter()
        .take(MAX_SENTENCES)
        .map(|s| fallback_embed(s))
        .collect();
    assemble_title_abstract(&fallback_embed(title), &sentences)
}

/// Row-major block of flat embeddings with their paper ids.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlatMatrix {
    pub ids: Vec<PaperId>,
    pub data: Vec<f32>,
}

impl FlatMatrix {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * FLAT_DIM..(i + 1) * FLAT_DIM]
    }

    pub fn push(&mut self, id: PaperId, e: &TitleAbstractEmbedding) {
        self.ids.push(id);
        self.data.extend_from_slice(e.flat());
    }

    pub fn from_records(records: Vec<(PaperId, TitleAbstractEmbedding)>) -> Self {
        let mut m = FlatMatrix {
            ids: Vec::with_capacity(records.len()),
            data: Vec::with_capacity(records.len() * FLAT_DIM),
        };
        for (id, e) in records {
            m.push(id, &e);
        }
        m
    }

    pub fn select(&self, rows: &[usize]) -> FlatMatrix {
        let mut m = FlatMatrix {
            ids: Vec::with_capacity(rows.len()),
            data: Vec::with_capacity(rows.len() * FLAT_DIM),
        };
        for &r in rows {
            m.ids.push(self.ids[r].clone());
            m.data.extend_from_slice(self.row(r));
        }
        m
    }
}

/// Embeds many papers with the fallback embedder, preserving input order.
pub fn embed_many(papers: &[(PaperId, String, Option<String>)]) -> FlatMatrix {
    let embedded = par::map(papers, |(_, t, a)| embed_paper(t, a.as_deref()));
    let mut m = FlatMatrix::default();
    for ((id, _, _), e) in papers.iter().zip(&embedded) {
        m.push(id.clone(), e);
    }
    m
}

pub fn record_bytes(id: &PaperId) -> u64 {
    2 + id.as_str().len() as u64 + (FLAT_DIM * 4) as u64
}

/// Writes TEMB/1. Ids longer than 65535 bytes are rejected.
pub fn write_temb<'a>(
    path: &Path,
    records: impl ExactSizeIterator<Item = (&'a PaperId, &'a [f32])>,
) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&(DIM as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(SLOTS as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&(records.len() as u64).to_le_bytes()).map_err(io)?;
    let mut buf = Vec::with_capacity(FLAT_DIM * 4);
    for (id, flat) in records {
        if flat.len() != FLAT_DIM {
            return Err(Error::invalid(format!("record {id} has {} values", flat.len())));
        }
        let bytes = id.as_str().as_bytes();
        let len = u16::try_from(bytes.len())
            .map_err(|_| Error::invalid(format!("paper id too long: {} bytes", bytes.len())))?;
        w.write_all(&len.to_le_bytes()).map_err(io)?;
        w.write_all(bytes).map_err(io)?;
        buf.clear();
        for v in flat {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_flat_matrix(path: &Path, m: &FlatMatrix) -> Result<()> {
    write_temb(path, (0..m.len()).map(|i| (&m.ids[i], m.row(i))))
}

struct OffsetReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> OffsetReader<R> {
    fn fill(&mut self, buf: &mut [u8], what: &str) -> Result<()> {
        match self.inner.read_exact(buf) {
            Ok(()) => {
                self.offset += buf.len() as u64;
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Err(Error::Format {
                offset: self.offset,
                message: format!("truncated while reading {what}"),
            }),
            Err(e) => Err(Error::Format {
                offset: self.offset,
                message: e.to_string(),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b, what)?;
        Ok(u32::from_le_bytes(b))
    }
}

/// Reads a whole TEMB/1 file.
pub fn read_temb(path: &Path) -> Result<FlatMatrix> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = OffsetReader {
        inner: BufReader::new(file),
        offset: 0,
    };
    let mut magic = [0u8; 4];
    r.fill(&mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {magic:?}"),
        });
    }
    let checks = [("version", VERSION), ("dim", DIM as u32), ("slots", SLOTS as u32)];
    for (what, expected) in checks {
        let at = r.offset;
        let v = r.u32(what)?;
        if v != expected {
            return Err(Error::Format {
                offset: at,
                message: format!("{what} {v}, expected {expected}"),
            });
        }
    }
    let mut count = [0u8; 8];
    r.fill(&mut count, "record count")?;
    let count = u64::from_le_bytes(count);
    let mut m = FlatMatrix::default();
    let mut buf = vec![0u8; FLAT_DIM * 4];
    for _ in 0..count {
        let mut len = [0u8; 2];
        r.fill(&mut len, "id length")?;
        let mut id = vec![0u8; usize::from(u16::from_le_bytes(len))];
        let at = r.offset;
        r.fill(&mut id, "id")?;
        let id = String::from_utf8(id).map_err(|_| Error::Format {
            offset: at,
            message: "id is not UTF-8".into(),
        })?;
        r.fill(&mut buf, "values")?;
        m.ids.push(PaperId(id));
        m.data
            .extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])));
    }
    let mut probe = [0u8; 1];
    if r.inner.read(&mut probe).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            offset: r.offset,
            message: "trailing bytes after last record".into(),
        });
    }
    Ok(m)
}
