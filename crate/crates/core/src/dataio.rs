//! File formats and dataset alignment.
//!
//! * `EMB1`: little-endian binary embedding matrix for one (model, layer),
//!   values stored as `f32` and promoted to `f64` on read.
//! * Targets CSV: one row per (participant, word) with confound columns and
//!   one column per target feature. Empty feature cells are missing values.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const EMB1_MAGIC: &[u8; 4] = b"EMB1";
pub const EMB1_VERSION: u32 = 1;

/// Columns every targets CSV must carry; all other columns are features.
pub const REQUIRED_COLUMNS: [&str; 9] = [
    "participant_id",
    "corpus_id",
    "sentence_id",
    "word_pos",
    "word_text",
    "freq_log",
    "length",
    "sent_position",
    "surprisal",
];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WordKey {
    pub corpus_id: String,
    pub sentence_id: u32,
    pub word_pos: u32,
    pub word_text: String,
}

/// A sentence within a corpus; the unit of fold assignment.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SentenceKey {
    pub corpus_id: String,
    pub sentence_id: u32,
}

impl std::fmt::Display for SentenceKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.corpus_id, self.sentence_id)
    }
}

impl WordKey {
    pub fn new(corpus_id: &str, sentence_id: u32, word_pos: u32, word_text: &str) -> Self {
        Self {
            corpus_id: corpus_id.to_owned(),
            sentence_id,
            word_pos,
            word_text: word_text.to_owned(),
        }
    }

    pub fn sentence(&self) -> SentenceKey {
        SentenceKey {
            corpus_id: self.corpus_id.clone(),
            sentence_id: self.sentence_id,
        }
    }

    fn id(&self) -> (&str, u32, u32) {
        (&self.corpus_id, self.sentence_id, self.word_pos)
    }
}

impl std::fmt::Display for WordKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}:{}", self.corpus_id, self.sentence_id, self.word_pos)
    }
}

fn check_unique(index: &[WordKey]) -> Result<()> {
    let mut seen = HashSet::with_capacity(index.len());
    for k in index {
        if !seen.insert(k.id()) {
            return Err(Error::DuplicateKey(k.to_string()));
        }
    }
    Ok(())
}

/// Word-occurrence vectors for one (model, layer).
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub model_id: String,
    pub layer: u32,
    index: Vec<WordKey>,
    values: Matrix,
}

impl EmbeddingMatrix {
    pub fn new(model_id: impl Into<String>, layer: u32, index: Vec<WordKey>, values: Matrix) -> Result<Self> {
        if index.len() != values.rows() {
            return Err(Error::IndexMismatch {
                index: index.len(),
                rows: values.rows(),
            });
        }
        if values.cols() == 0 {
            return Err(Error::DimMismatch {
                expected: 1,
                got: 0,
            });
        }
        check_unique(&index)?;
        Ok(Self {
            model_id: model_id.into(),
            layer,
            index,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn index(&self) -> &[WordKey] {
        &self.index
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    /// Same index and metadata, new values (e.g. after projection).
    pub fn with_values(&self, values: Matrix) -> Result<Self> {
        Self::new(self.model_id.clone(), self.layer, self.index.clone(), values)
    }

    /// Row-wise concatenation of matrices sharing a dimension.
    pub fn concat(parts: &[&EmbeddingMatrix]) -> Result<Self> {
        let first = parts.first().ok_or(Error::Empty("EmbeddingMatrix::concat"))?;
        let values = Matrix::vstack(&parts.iter().map(|p| &p.values).collect::<Vec<_>>())?;
        let index = parts.iter().flat_map(|p| p.index.iter().cloned()).collect();
        Self::new(first.model_id.clone(), first.layer, index, values)
    }

    /// Distinct sentences, sorted.
    pub fn sentences(&self) -> Vec<SentenceKey> {
        let set: std::collections::BTreeSet<SentenceKey> =
            self.index.iter().map(WordKey::sentence).collect();
        set.into_iter().collect()
    }

    pub fn corpora(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> =
            self.index.iter().map(|k| k.corpus_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }

    /// Rows belonging to one corpus.
    pub fn filter_corpus(&self, corpus_id: &str) -> Result<Self> {
        let rows: Vec<usize> = (0..self.len())
            .filter(|&i| self.index[i].corpus_id == corpus_id)
            .collect();
        if rows.is_empty() {
            return Err(Error::CorpusMissing(corpus_id.to_owned()));
        }
        Self::new(
            self.model_id.clone(),
            self.layer,
            rows.iter().map(|&i| self.index[i].clone()).collect(),
            self.values.select_rows(&rows),
        )
    }
}

fn write_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        std::io::Error::new(std::io::ErrorKind::InvalidInput, "string longer than 65535 bytes")
    })?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())
}

/// Writes an `EMB1` file. Values are narrowed to `f32`.
pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let res: std::io::Result<()> = (|| {
        w.write_all(EMB1_MAGIC)?;
        w.write_u32::<LittleEndian>(EMB1_VERSION)?;
        w.write_u32::<LittleEndian>(m.layer)?;
        w.write_u32::<LittleEndian>(m.dim() as u32)?;
        w.write_u64::<LittleEndian>(m.len() as u64)?;
        write_str(&mut w, &m.model_id)?;
        for v in m.values.data() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
        for k in &m.index {
            write_str(&mut w, &k.corpus_id)?;
            w.write_u32::<LittleEndian>(k.sentence_id)?;
            w.write_u32::<LittleEndian>(k.word_pos)?;
            write_str(&mut w, &k.word_text)?;
        }
        w.flush()
    })();
    res.map_err(|e| Error::io(path, e))
}

struct Emb1Reader<'a> {
    buf: &'a [u8],
    path: &'a Path,
}

impl Emb1Reader<'_> {
    fn truncated(&self) -> Error {
        Error::TruncatedFile {
            path: self.path.to_owned(),
        }
    }

    fn u16(&mut self) -> Result<u16> {
        self.buf.read_u16::<LittleEndian>().map_err(|_| self.truncated())
    }

    fn u32(&mut self) -> Result<u32> {
        self.buf.read_u32::<LittleEndian>().map_err(|_| self.truncated())
    }

    fn u64(&mut self) -> Result<u64> {
        self.buf.read_u64::<LittleEndian>().map_err(|_| self.truncated())
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u16()? as usize;
        if self.buf.len() < len {
            return Err(self.truncated());
        }
        let (head, tail) = self.buf.split_at(len);
        self.buf = tail;
        String::from_utf8(head.to_vec()).map_err(|_| Error::ParseError {
            path: self.path.to_owned(),
            line: 0,
            message: "invalid UTF-8 in string field".into(),
        })
    }
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < 4 {
        return Err(if EMB1_MAGIC.starts_with(&bytes) {
            Error::TruncatedFile { path: path.to_owned() }
        } else {
            Error::BadMagic { path: path.to_owned() }
        });
    }
    if &bytes[..4] != EMB1_MAGIC {
        return Err(Error::BadMagic { path: path.to_owned() });
    }
    let mut r = Emb1Reader {
        buf: &bytes[4..],
        path,
    };
    let version = r.u32()?;
    if version != EMB1_VERSION {
        return Err(Error::VersionUnsupported {
            path: path.to_owned(),
            version,
        });
    }
    let layer = r.u32()?;
    let dim = r.u32()? as usize;
    let n_rows = r.u64()? as usize;
    let model_id = r.string()?;
    let n_values = n_rows.checked_mul(dim).ok_or_else(|| r.truncated())?;
    if r.buf.len() < n_values.saturating_mul(4) {
        return Err(r.truncated());
    }
    let mut data = Vec::with_capacity(n_values);
    for _ in 0..n_values {
        data.push(r.buf.read_f32::<LittleEndian>().map_err(|_| r.truncated())? as f64);
    }
    let mut index = Vec::with_capacity(n_rows);
    for _ in 0..n_rows {
        let corpus_id = r.string()?;
        let sentence_id = r.u32()?;
        let word_pos = r.u32()?;
        let word_text = r.string()?;
        index.push(WordKey {
            corpus_id,
            sentence_id,
            word_pos,
            word_text,
        });
    }
    if !r.buf.is_empty() {
        return Err(Error::ParseError {
            path: path.to_owned(),
            line: 0,
            message: format!("{} trailing bytes after index block", r.buf.len()),
        });
    }
    let values = Matrix::new(n_rows, dim, data)?;
    EmbeddingMatrix::new(model_id, layer, index, values)
}

/// Word-level nuisance covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Confounds {
    pub freq_log: f64,
    pub length: f64,
    pub sent_position: f64,
    pub surprisal: f64,
}

impl Confounds {
    pub const NAMES: [&'static str; 4] = ["freq_log", "length", "sent_position", "surprisal"];

    pub fn as_array(&self) -> [f64; 4] {
        [self.freq_log, self.length, self.sent_position, self.surprisal]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TargetRow {
    pub key: WordKey,
    /// Aligned with [`TargetTable::features`]; `None` is a missing value.
    pub values: Vec<Option<f64>>,
    pub confounds: Option<Confounds>,
}

/// Per-word targets of one participant in one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetTable {
    pub participant_id: String,
    pub corpus_id: String,
    features: Vec<String>,
    rows: Vec<TargetRow>,
}

impl TargetTable {
    pub fn new(
        participant_id: impl Into<String>,
        corpus_id: impl Into<String>,
        features: Vec<String>,
        rows: Vec<TargetRow>,
    ) -> Result<Self> {
        let corpus_id = corpus_id.into();
        let keys: Vec<WordKey> = rows.iter().map(|r| r.key.clone()).collect();
        check_unique(&keys)?;
        for r in &rows {
            if r.values.len() != features.len() {
                return Err(Error::InvalidTargets(format!(
                    "row {} has {} values for {} features",
                    r.key,
                    r.values.len(),
                    features.len()
                )));
            }
            if r.key.corpus_id != corpus_id {
                return Err(Error::InvalidTargets(format!(
                    "row {} does not belong to corpus {corpus_id}",
                    r.key
                )));
            }
            if r.values.iter().flatten().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("target value"));
            }
            match &r.confounds {
                Some(c) => {
                    if c.as_array().iter().any(|v| !v.is_finite()) {
                        return Err(Error::NonFinite("confound value"));
                    }
                    if !(0.0..=1.0).contains(&c.sent_position) {
                        return Err(Error::InvalidTargets(format!(
                            "sent_position {} outside [0, 1] at {}",
                            c.sent_position, r.key
                        )));
                    }
                }
                None if r.values.iter().any(Option::is_some) => {
                    return Err(Error::InvalidTargets(format!(
                        "row {} has feature values but no confounds",
                        r.key
                    )));
                }
                None => {}
            }
        }
        Ok(Self {
            participant_id: participant_id.into(),
            corpus_id,
            features,
            rows,
        })
    }

    pub fn features(&self) -> &[String] {
        &self.features
    }

    pub fn rows(&self) -> &[TargetRow] {
        &self.rows
    }

    pub fn feature_index(&self, feature: &str) -> Result<usize> {
        self.features
            .iter()
            .position(|f| f == feature)
            .ok_or_else(|| Error::FeatureUnknown(feature.to_owned()))
    }

    /// Copy with one feature's values replaced; `None` in `new_values` leaves
    /// the cell missing.
    pub fn with_feature_values(&self, feature: &str, new_values: &[Option<f64>]) -> Result<Self> {
        let j = self.feature_index(feature)?;
        if new_values.len() != self.rows.len() {
            return Err(Error::LengthMismatch(new_values.len(), self.rows.len()));
        }
        let mut rows = self.rows.clone();
        for (r, v) in rows.iter_mut().zip(new_values) {
            r.values[j] = *v;
        }
        Self::new(
            self.participant_id.clone(),
            self.corpus_id.clone(),
            self.features.clone(),
            rows,
        )
    }
}

fn csv_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::ParseError {
        path: path.to_owned(),
        line,
        message: message.into(),
    }
}

fn parse_f64(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| csv_err(path, line, format!("column {column}: '{cell}' is not a number")))?;
    if !v.is_finite() {
        return Err(csv_err(path, line, format!("column {column}: non-finite value")));
    }
    Ok(v)
}

fn parse_u32(path: &Path, line: u64, column: &str, cell: &str) -> Result<u32> {
    cell.trim()
        .parse()
        .map_err(|_| csv_err(path, line, format!("column {column}: '{cell}' is not a non-negative integer")))
}

/// Reads a targets CSV into one table per (participant, corpus), sorted by
/// participant then corpus.
pub fn read_targets(path: impl AsRef<Path>) -> Result<Vec<TargetTable>> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| csv_err(path, 0, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(path, 1, e.to_string()))?
        .clone();
    let headers: Vec<String> = headers.iter().map(|h| h.trim().to_owned()).collect();
    let mut col = HashMap::new();
    for (i, h) in headers.iter().enumerate() {
        if col.insert(h.as_str(), i).is_some() {
            return Err(Error::SchemaError {
                path: path.to_owned(),
                message: format!("duplicate column '{h}'"),
            });
        }
    }
    for req in REQUIRED_COLUMNS {
        if !col.contains_key(req) {
            return Err(Error::SchemaError {
                path: path.to_owned(),
                message: format!("missing required column '{req}'"),
            });
        }
    }
    let feature_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !REQUIRED_COLUMNS.contains(&h.as_str()))
        .map(|(i, h)| (i, h.clone()))
        .collect();
    let features: Vec<String> = feature_cols.iter().map(|(_, h)| h.clone()).collect();

    let mut groups: BTreeMap<(String, String), Vec<TargetRow>> = BTreeMap::new();
    for (n, record) in reader.records().enumerate() {
        let line = n as u64 + 2;
        let record = record.map_err(|e| csv_err(path, line, e.to_string()))?;
        let cell = |name: &str| record.get(col[name]).unwrap_or("");
        let participant = cell("participant_id").trim().to_owned();
        let corpus = cell("corpus_id").trim().to_owned();
        if participant.is_empty() || corpus.is_empty() {
            return Err(csv_err(path, line, "empty participant_id or corpus_id"));
        }
        let key = WordKey {
            corpus_id: corpus.clone(),
            sentence_id: parse_u32(path, line, "sentence_id", cell("sentence_id"))?,
            word_pos: parse_u32(path, line, "word_pos", cell("word_pos"))?,
            word_text: cell("word_text").to_owned(),
        };
        let mut values = Vec::with_capacity(feature_cols.len());
        for (i, name) in &feature_cols {
            let c = record.get(*i).unwrap_or("");
            values.push(if c.trim().is_empty() {
                None
            } else {
                Some(parse_f64(path, line, name, c)?)
            });
        }
        let conf_cells = Confounds::NAMES.map(cell);
        let confounds = if conf_cells.iter().all(|c| c.trim().is_empty()) {
            None
        } else {
            let mut parsed = [0.0; 4];
            for (p, (name, c)) in parsed.iter_mut().zip(Confounds::NAMES.iter().zip(conf_cells)) {
                *p = parse_f64(path, line, name, c)?;
            }
            Some(Confounds {
                freq_log: parsed[0],
                length: parsed[1],
                sent_position: parsed[2],
                surprisal: parsed[3],
            })
        };
        if confounds.is_none() && values.iter().any(Option::is_some) {
            return Err(csv_err(path, line, "confound columns empty on a row with feature values"));
        }
        if let Some(c) = &confounds {
            if !(0.0..=1.0).contains(&c.sent_position) {
                return Err(csv_err(path, line, "sent_position outside [0, 1]"));
            }
        }
        groups.entry((participant, corpus)).or_default().push(TargetRow {
            key,
            values,
            confounds,
        });
    }
    groups
        .into_iter()
        .map(|((p, c), rows)| {
            TargetTable::new(p, c, features.clone(), rows).map_err(|e| match e {
                Error::DuplicateKey(k) => Error::SchemaError {
                    path: path.to_owned(),
                    message: format!("duplicate word key {k}"),
                },
                other => other,
            })
        })
        .collect()
}

fn fmt_num(v: f64) -> String {
    // shortest round-trip representation
    format!("{v:?}")
}

/// Writes tables sharing one feature list to a targets CSV.
pub fn write_targets(path: impl AsRef<Path>, tables: &[TargetTable]) -> Result<()> {
    let path = path.as_ref();
    let features: Vec<String> = tables.first().map(|t| t.features.clone()).unwrap_or_default();
    if tables.iter().any(|t| t.features != features) {
        return Err(Error::InvalidTargets("tables disagree on feature columns".into()));
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, 0, e.to_string()))?;
    let mut header: Vec<String> = REQUIRED_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(features.iter().cloned());
    let io = |e: csv::Error| csv_err(path, 0, e.to_string());
    w.write_record(&header).map_err(io)?;
    for t in tables {
        for r in &t.rows {
            let mut rec = vec![
                t.participant_id.clone(),
                r.key.corpus_id.clone(),
                r.key.sentence_id.to_string(),
                r.key.word_pos.to_string(),
                r.key.word_text.clone(),
            ];
            match &r.confounds {
                Some(c) => rec.extend(c.as_array().iter().map(|v| fmt_num(*v))),
                None => rec.extend(std::iter::repeat_n(String::new(), 4)),
            }
            rec.extend(r.values.iter().map(|v| v.map(fmt_num).unwrap_or_default()));
            w.write_record(&rec).map_err(io)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Probe-ready rows for one participant and one feature.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub participant_id: String,
    pub feature_name: String,
    pub layer: u32,
    pub keys: Vec<WordKey>,
    pub x: Matrix,
    pub y: Vec<f64>,
    /// Matched rows over embedding rows of the participant's corpus.
    pub coverage: f64,
}

impl AlignedDataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, rows: &[usize]) -> AlignedDataset {
        AlignedDataset {
            participant_id: self.participant_id.clone(),
            feature_name: self.feature_name.clone(),
            layer: self.layer,
            keys: rows.iter().map(|&i| self.keys[i].clone()).collect(),
            x: self.x.select_rows(rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            coverage: self.coverage,
        }
    }

    pub fn with_targets(&self, y: Vec<f64>) -> Result<AlignedDataset> {
        if y.len() != self.y.len() {
            return Err(Error::LengthMismatch(y.len(), self.y.len()));
        }
        Ok(AlignedDataset { y, ..self.clone() })
    }

    pub fn with_x(&self, x: Matrix) -> Result<AlignedDataset> {
        if x.rows() != self.y.len() {
            return Err(Error::LengthMismatch(x.rows(), self.y.len()));
        }
        Ok(AlignedDataset { x, ..self.clone() })
    }
}

/// Joins embeddings with one participant's targets for `feature`, keeping
/// embedding row order and dropping missing cells.
pub fn align(emb: &EmbeddingMatrix, targets: &TargetTable, feature: &str) -> Result<AlignedDataset> {
    let j = targets.feature_index(feature)?;
    let lookup: HashMap<(&str, u32, u32), f64> = targets
        .rows
        .iter()
        .filter_map(|r| r.values[j].map(|v| (r.key.id(), v)))
        .collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut corpus_rows = 0usize;
    for (i, k) in emb.index.iter().enumerate() {
        if k.corpus_id == targets.corpus_id {
            corpus_rows += 1;
        }
        if let Some(v) = lookup.get(&k.id()) {
            rows.push(i);
            y.push(*v);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyIntersection {
            participant: targets.participant_id.clone(),
            feature: feature.to_owned(),
        });
    }
    Ok(AlignedDataset {
        participant_id: targets.participant_id.clone(),
        feature_name: feature.to_owned(),
        layer: emb.layer,
        keys: rows.iter().map(|&i| emb.index[i].clone()).collect(),
        x: emb.values.select_rows(&rows),
        y,
        coverage: rows.len() as f64 / corpus_rows.max(1) as f64,
    })
}
