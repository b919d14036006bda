//! Utterance embeddings: validated in-memory storage plus the CSV, JSONL and
//! binary on-disk formats.
//!
//! An [`EmbeddingSet`] is immutable once built. Vectors are kept in one
//! contiguous row-major buffer so the all-pairs scorer can stream through them.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One utterance: an opaque id, its vector, and an optional speaker label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub id: String,
    pub vector: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker: Option<String>,
}

impl Embedding {
    pub fn new(id: impl Into<String>, vector: Vec<f64>) -> Self {
        Self {
            id: id.into(),
            vector,
            speaker: None,
        }
    }

    pub fn with_speaker(mut self, speaker: impl Into<String>) -> Self {
        self.speaker = Some(speaker.into());
        self
    }
}

/// A single invariant violation found by [`validate_entries`].
///
/// `record` is the 1-based position of the offending entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    DimensionMismatch {
        record: usize,
        id: String,
        expected: usize,
        found: usize,
    },
    DuplicateId {
        record: usize,
        id: String,
    },
    NonFinite {
        record: usize,
        id: String,
        component: usize,
    },
    ZeroVector {
        record: usize,
        id: String,
    },
    InsufficientSize {
        n: usize,
    },
}

impl From<Violation> for Error {
    fn from(v: Violation) -> Self {
        match v {
            Violation::DimensionMismatch {
                record,
                id,
                expected,
                found,
            } => Error::DimensionMismatch {
                record,
                id,
                expected,
                found,
            },
            Violation::DuplicateId { record, id } => Error::DuplicateId { record, id },
            Violation::NonFinite {
                record,
                id,
                component,
            } => Error::NonFinite {
                record,
                id,
                component,
            },
            Violation::ZeroVector { record, id } => Error::ZeroVector { record, id },
            Violation::InsufficientSize { n } => Error::InsufficientSize { n },
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", Error::from(self.clone()))
    }
}

/// Checks every entry against the set invariants and returns all violations.
///
/// When `dimension` is `None` the first entry's length is taken as the
/// expected dimension. A set of fewer than two entries is reported as
/// [`Violation::InsufficientSize`] since no pair can be scored.
pub fn validate_entries(dimension: Option<usize>, entries: &[Embedding]) -> Vec<Violation> {
    let mut out = Vec::new();
    let expected = dimension.or_else(|| entries.first().map(|e| e.vector.len()));
    let mut seen: HashMap<&str, usize> = HashMap::with_capacity(entries.len());
    for (pos, e) in entries.iter().enumerate() {
        let record = pos + 1;
        if seen.insert(e.id.as_str(), pos).is_some() {
            out.push(Violation::DuplicateId {
                record,
                id: e.id.clone(),
            });
        }
        if let Some(expected) = expected {
            if e.vector.len() != expected {
                out.push(Violation::DimensionMismatch {
                    record,
                    id: e.id.clone(),
                    expected,
                    found: e.vector.len(),
                });
            }
        }
        if let Some(component) = e.vector.iter().position(|x| !x.is_finite()) {
            out.push(Violation::NonFinite {
                record,
                id: e.id.clone(),
                component,
            });
        } else if e.vector.iter().all(|&x| x == 0.0) {
            out.push(Violation::ZeroVector {
                record,
                id: e.id.clone(),
            });
        }
    }
    if entries.len() < 2 {
        out.push(Violation::InsufficientSize { n: entries.len() });
    }
    out
}

/// A validated, immutable collection of embeddings with a stable index.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dimension: usize,
    ids: Vec<String>,
    speakers: Vec<Option<String>>,
    data: Vec<f64>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    /// Builds a set, failing on the first invariant violation.
    ///
    /// Sets with fewer than two entries are accepted here; scoring
    /// operations reject them.
    pub fn new(dimension: usize, entries: Vec<Embedding>) -> Result<Self> {
        if let Some(v) = validate_entries(Some(dimension), &entries)
            .into_iter()
            .find(|v| !matches!(v, Violation::InsufficientSize { .. }))
        {
            return Err(v.into());
        }
        let mut ids = Vec::with_capacity(entries.len());
        let mut speakers = Vec::with_capacity(entries.len());
        let mut data = Vec::with_capacity(entries.len() * dimension);
        let mut index = HashMap::with_capacity(entries.len());
        for (pos, e) in entries.into_iter().enumerate() {
            index.insert(e.id.clone(), pos);
            ids.push(e.id);
            speakers.push(e.speaker);
            data.extend_from_slice(&e.vector);
        }
        Ok(Self {
            dimension,
            ids,
            speakers,
            data,
            index,
        })
    }

    /// Builds a set taking the dimension from the first entry.
    pub fn from_entries(entries: Vec<Embedding>) -> Result<Self> {
        let dimension = entries
            .first()
            .map(|e| e.vector.len())
            .ok_or(Error::InsufficientSize { n: 0 })?;
        Self::new(dimension, entries)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn speaker(&self, i: usize) -> Option<&str> {
        self.speakers[i].as_deref()
    }

    pub fn has_speakers(&self) -> bool {
        self.speakers.iter().any(Option::is_some)
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.data[i * self.dimension..(i + 1) * self.dimension]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.position(id).map(|i| self.vector(i))
    }

    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding {
            id: self.ids[i].clone(),
            vector: self.vector(i).to_vec(),
            speaker: self.speakers[i].clone(),
        }
    }

    pub fn to_entries(&self) -> Vec<Embedding> {
        (0..self.len()).map(|i| self.embedding(i)).collect()
    }

    /// Invariant report for an already-built set. Construction rejects every
    /// per-entry violation, so only the size check can fire here.
    pub fn validate(&self) -> Vec<Violation> {
        if self.len() < 2 {
            vec![Violation::InsufficientSize { n: self.len() }]
        } else {
            Vec::new()
        }
    }

    pub fn ensure_scorable(&self) -> Result<()> {
        if self.len() < 2 {
            return Err(Error::InsufficientSize { n: self.len() });
        }
        Ok(())
    }
}

/// Scales every vector to unit L2 norm. Ids, order and dimension are kept.
pub fn l2_normalize(set: &EmbeddingSet) -> Result<EmbeddingSet> {
    let mut out = set.clone();
    let d = set.dimension;
    if d == 0 {
        return Ok(out);
    }
    for row in out.data.chunks_exact_mut(d) {
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroNorm);
        }
        for x in row.iter_mut() {
            *x /= norm;
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbeddingFormat {
    Csv,
    Jsonl,
    Binary,
}

impl EmbeddingFormat {
    /// Guesses the format from a file extension (`.csv`, `.jsonl`, `.bin`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "csv" => Some(Self::Csv),
            "jsonl" | "ndjson" => Some(Self::Jsonl),
            "bin" | "qxeb" => Some(Self::Binary),
            _ => None,
        }
    }
}

impl FromStr for EmbeddingFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Self::Csv),
            "jsonl" => Ok(Self::Jsonl),
            "binary" | "bin" => Ok(Self::Binary),
            other => Err(Error::InvalidParam(format!(
                "unknown embedding format {other:?} (expected csv, jsonl or binary)"
            ))),
        }
    }
}

impl fmt::Display for EmbeddingFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Csv => "csv",
            Self::Jsonl => "jsonl",
            Self::Binary => "binary",
        })
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    let file = File::open(path)?;
    read_embeddings(BufReader::new(file), format)
}

pub fn read_embeddings<R: Read>(reader: R, format: EmbeddingFormat) -> Result<EmbeddingSet> {
    match format {
        EmbeddingFormat::Csv => read_csv(reader),
        EmbeddingFormat::Jsonl => read_jsonl(reader),
        EmbeddingFormat::Binary => read_binary(reader),
    }
}

pub fn save_embeddings(
    set: &EmbeddingSet,
    path: impl AsRef<Path>,
    format: EmbeddingFormat,
) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(set, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_embeddings<W: Write>(
    set: &EmbeddingSet,
    writer: W,
    format: EmbeddingFormat,
) -> Result<()> {
    match format {
        EmbeddingFormat::Csv => write_csv(set, writer),
        EmbeddingFormat::Jsonl => write_jsonl(set, writer),
        EmbeddingFormat::Binary => write_binary(set, writer),
    }
}

fn malformed(record: usize, message: impl Into<String>) -> Error {
    Error::Malformed {
        record,
        message: message.into(),
    }
}

fn read_csv<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| malformed(0, format!("header: {e}")))?
        .clone();
    if header.get(0) != Some("id") {
        return Err(malformed(0, "header must start with `id`"));
    }
    let has_speaker = header.len() > 1 && header.get(header.len() - 1) == Some("speaker");
    let dimension = header.len() - 1 - usize::from(has_speaker);
    for (k, name) in header.iter().skip(1).take(dimension).enumerate() {
        if name != format!("v{k}") {
            return Err(malformed(
                0,
                format!("header column {} is {name:?}, expected \"v{k}\"", k + 1),
            ));
        }
    }

    let mut entries = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let record = row + 1;
        let rec = rec.map_err(|e| malformed(record, e.to_string()))?;
        let id = rec
            .get(0)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| malformed(record, "missing id"))?
            .to_string();
        let n_fields = rec.len() - 1;
        let (values, speaker) = if has_speaker && n_fields == dimension + 1 {
            let sp = rec.get(rec.len() - 1).unwrap_or("");
            (n_fields - 1, (!sp.is_empty()).then(|| sp.to_string()))
        } else if has_speaker {
            // Wrong width: treat every trailing field except the speaker as a component.
            (n_fields.saturating_sub(1), None)
        } else {
            (n_fields, None)
        };
        if values != dimension {
            return Err(Error::DimensionMismatch {
                record,
                id,
                expected: dimension,
                found: values,
            });
        }
        let vector = rec
            .iter()
            .skip(1)
            .take(values)
            .enumerate()
            .map(|(k, s)| {
                s.parse::<f64>()
                    .map_err(|_| malformed(record, format!("component {k}: cannot parse {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        entries.push(Embedding {
            id,
            vector,
            speaker,
        });
    }
    EmbeddingSet::new(dimension, entries)
}

fn write_csv<W: Write>(set: &EmbeddingSet, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let with_speaker = set.has_speakers();
    let mut header = vec!["id".to_string()];
    header.extend((0..set.dimension).map(|k| format!("v{k}")));
    if with_speaker {
        header.push("speaker".into());
    }
    w.write_record(&header).map_err(csv_io)?;
    for i in 0..set.len() {
        let mut row = Vec::with_capacity(set.dimension + 2);
        row.push(set.id(i).to_string());
        // Shortest round-trip representation keeps the text format lossless.
        row.extend(set.vector(i).iter().map(|x| x.to_string()));
        if with_speaker {
            row.push(set.speaker(i).unwrap_or("").to_string());
        }
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Malformed {
            record: 0,
            message: format!("{other:?}"),
        },
    }
}

#[derive(Deserialize)]
struct JsonRecord {
    id: String,
    vector: Vec<Option<f64>>,
    #[serde(default)]
    speaker: Option<String>,
}

#[derive(Serialize)]
struct JsonRecordOut<'a> {
    id: &'a str,
    vector: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    speaker: Option<&'a str>,
}

/// Replaces bare `NaN` / `Infinity` / `-Infinity` tokens outside string
/// literals with `null`, so that files written by lenient JSON encoders
/// surface as non-finite errors rather than parse errors.
fn nonfinite_tokens_to_null(line: &str) -> String {
    let mut out = String::with_capacity(line.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut rest = line;
    while let Some(c) = rest.chars().next() {
        if in_string {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            in_string = true;
        } else {
            let token = ["-Infinity", "Infinity", "NaN"]
                .into_iter()
                .find(|t| rest.starts_with(t));
            if let Some(t) = token {
                out.push_str("null");
                rest = &rest[t.len()..];
                continue;
            }
        }
        out.push(c);
        rest = &rest[c.len_utf8()..];
    }
    out
}

fn read_jsonl<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut entries = Vec::new();
    let mut dimension = None;
    for (lineno, line) in BufReader::new(reader).lines().enumerate() {
        let record = lineno + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: JsonRecord = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(first) => serde_json::from_str(&nonfinite_tokens_to_null(&line))
                .map_err(|_| malformed(record, first.to_string()))?,
        };
        let mut vector = Vec::with_capacity(parsed.vector.len());
        for (component, x) in parsed.vector.iter().enumerate() {
            match x {
                Some(v) if v.is_finite() => vector.push(*v),
                _ => {
                    return Err(Error::NonFinite {
                        record,
                        id: parsed.id,
                        component,
                    })
                }
            }
        }
        let d = *dimension.get_or_insert(vector.len());
        if vector.len() != d {
            return Err(Error::DimensionMismatch {
                record,
                id: parsed.id,
                expected: d,
                found: vector.len(),
            });
        }
        entries.push((
            record,
            Embedding {
                id: parsed.id,
                vector,
                speaker: parsed.speaker,
            },
        ));
    }
    let dimension = dimension.ok_or_else(|| malformed(0, "no records"))?;
    build_with_loci(dimension, entries)
}

/// Like [`EmbeddingSet::new`], but reports violations at the given file
/// record numbers instead of entry positions.
fn build_with_loci(dimension: usize, entries: Vec<(usize, Embedding)>) -> Result<EmbeddingSet> {
    let (loci, entries): (Vec<usize>, Vec<Embedding>) = entries.into_iter().unzip();
    EmbeddingSet::new(dimension, entries).map_err(|e| match e {
        Error::DuplicateId { record, id } => Error::DuplicateId {
            record: loci[record - 1],
            id,
        },
        Error::ZeroVector { record, id } => Error::ZeroVector {
            record: loci[record - 1],
            id,
        },
        Error::NonFinite {
            record,
            id,
            component,
        } => Error::NonFinite {
            record: loci[record - 1],
            id,
            component,
        },
        Error::DimensionMismatch {
            record,
            id,
            expected,
            found,
        } => Error::DimensionMismatch {
            record: loci[record - 1],
            id,
            expected,
            found,
        },
        other => other,
    })
}

fn write_jsonl<W: Write>(set: &EmbeddingSet, mut writer: W) -> Result<()> {
    for i in 0..set.len() {
        let rec = JsonRecordOut {
            id: set.id(i),
            vector: set.vector(i),
            speaker: set.speaker(i),
        };
        serde_json::to_writer(&mut writer, &rec).map_err(std::io::Error::from)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub const BINARY_MAGIC: &[u8; 4] = b"QXEB";
pub const BINARY_VERSION: u32 = 1;

fn read_exact_or<R: Read>(r: &mut R, buf: &mut [u8], record: usize, what: &str) -> Result<()> {
    r.read_exact(buf).map_err(|e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            malformed(record, format!("truncated {what}"))
        } else {
            Error::Io(e)
        }
    })
}

fn read_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or(r, &mut b, 0, what)?;
    Ok(u32::from_le_bytes(b))
}

fn read_binary<R: Read>(reader: R) -> Result<EmbeddingSet> {
    let mut r = BufReader::new(reader);
    let mut magic = [0u8; 4];
    read_exact_or(&mut r, &mut magic, 0, "magic")?;
    if &magic != BINARY_MAGIC {
        return Err(malformed(0, format!("bad magic {magic:?}")));
    }
    let version = read_u32(&mut r, "version")?;
    if version != BINARY_VERSION {
        return Err(malformed(0, format!("unsupported version {version}")));
    }
    let n = read_u32(&mut r, "record count")? as usize;
    let d = read_u32(&mut r, "dimension")? as usize;

    let mut entries = Vec::with_capacity(n.min(1 << 20));
    let mut vbuf = vec![0u8; d * 4];
    for pos in 0..n {
        let record = pos + 1;
        let mut lb = [0u8; 2];
        read_exact_or(&mut r, &mut lb, record, "id length")?;
        let mut idb = vec![0u8; u16::from_le_bytes(lb) as usize];
        read_exact_or(&mut r, &mut idb, record, "id")?;
        let id = String::from_utf8(idb).map_err(|_| malformed(record, "id is not UTF-8"))?;
        read_exact_or(&mut r, &mut vbuf, record, "vector")?;
        let vector = vbuf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        entries.push(Embedding::new(id, vector));
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(malformed(n + 1, "trailing bytes after last record"));
    }
    EmbeddingSet::new(d, entries)
}

/// Writes the binary format. Components are stored as `f32`, so vectors that
/// did not originate from `f32` values are rounded.
fn write_binary<W: Write>(set: &EmbeddingSet, mut w: W) -> Result<()> {
    let n = u32::try_from(set.len())
        .map_err(|_| Error::InvalidParam("too many records for binary format".into()))?;
    let d = u32::try_from(set.dimension)
        .map_err(|_| Error::InvalidParam("dimension too large for binary format".into()))?;
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&n.to_le_bytes())?;
    w.write_all(&d.to_le_bytes())?;
    for i in 0..set.len() {
        let id = set.id(i).as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| {
            Error::InvalidParam(format!("id {:?} longer than 65535 bytes", set.id(i)))
        })?;
        w.write_all(&len.to_le_bytes())?;
        w.write_all(id)?;
        for &x in set.vector(i) {
            w.write_all(&(x as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}
