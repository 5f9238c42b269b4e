//! Persisted artifact formats.
//!
//! Text formats:
//! - lexicon: header `#M=<int> min_count=<int>`, then sorted
//!   `term<TAB>freq` lines
//! - weight table: header `#M=<int> min_count=<int>`, then sorted
//!   `term<TAB>weight` lines with six decimals
//! - audit log: one JSON object per cleaned caption
//! - metrics log: CSV `step,lm,mke,total`
//!
//! Binary checkpoints are little-endian throughout. An adapter block is
//! `ADPT`, u32 feature dim, u32 rank, f64 alpha, then `w_down`, `w_up`,
//! `ln_gain`, `ln_bias` as f64 arrays in row-major order. A model
//! checkpoint wraps vocabulary, embeddings, the frozen projection, the
//! output head, and an optional adapter block.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use medcap_core::adapter::{Activation, AdapterParams};
use medcap_core::corpus::CleaningReport;
use medcap_core::lexicon::{TermLexicon, TermWeightTable};
use medcap_core::matrix::Matrix;
use medcap_core::trainer::{StepRecord, ToyModel};

const ADAPTER_MAGIC: &[u8; 4] = b"ADPT";
const MODEL_MAGIC: &[u8; 4] = b"MCTM";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Malformed { path: String, reason: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn malformed(path: &Path, reason: impl Into<String>) -> FormatError {
    FormatError::Malformed {
        path: path.display().to_string(),
        reason: reason.into(),
    }
}

// ---------------------------------------------------------------------------
// lexicon and weight-table text files
// ---------------------------------------------------------------------------

pub fn save_lexicon(path: &Path, lexicon: &TermLexicon) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str(&format!(
        "#M={} min_count={}\n",
        lexicon.sample_count(),
        lexicon.min_count()
    ));
    for (term, freq) in lexicon.iter() {
        out.push_str(&format!("{term}\t{freq}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_lexicon(path: &Path) -> Result<TermLexicon, FormatError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed(path, "empty lexicon file"))?;
    let (m, min_count) = parse_header(header)
        .ok_or_else(|| malformed(path, format!("bad header {header:?}")))?;
    let mut counts = BTreeMap::new();
    for (i, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let (term, freq) = line
            .split_once('\t')
            .ok_or_else(|| malformed(path, format!("line {}: expected term<TAB>freq", i + 2)))?;
        let freq: u64 = freq
            .parse()
            .map_err(|e| malformed(path, format!("line {}: {e}", i + 2)))?;
        counts.insert(term.to_string(), freq);
    }
    TermLexicon::from_counts(counts, m, min_count).map_err(|e| malformed(path, e.to_string()))
}

fn parse_header(header: &str) -> Option<(u64, u64)> {
    let rest = header.strip_prefix("#M=")?;
    let (m, rest) = rest.split_once(' ')?;
    let min_count = rest.strip_prefix("min_count=")?;
    Some((m.parse().ok()?, min_count.parse().ok()?))
}

pub fn save_weight_table(
    path: &Path,
    lexicon: &TermLexicon,
    table: &TermWeightTable,
) -> Result<(), FormatError> {
    let mut out = String::new();
    out.push_str(&format!(
        "#M={} min_count={}\n",
        lexicon.sample_count(),
        lexicon.min_count()
    ));
    for (term, weight) in table.iter() {
        out.push_str(&format!("{term}\t{weight:.6}\n"));
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// audit log and metrics log
// ---------------------------------------------------------------------------

#[derive(Debug, serde::Serialize, serde::Deserialize)]
pub struct AuditRecord {
    pub id: String,
    #[serde(flatten)]
    pub report: CleaningReport,
}

pub fn save_audit_log(path: &Path, records: &[AuditRecord]) -> Result<(), FormatError> {
    let mut out = fs::File::create(path).map_err(io_err(path))?;
    for record in records {
        let line = serde_json::to_string(record)
            .map_err(|e| malformed(path, format!("serialize: {e}")))?;
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    Ok(())
}

pub fn save_metrics_log(path: &Path, steps: &[StepRecord]) -> Result<(), FormatError> {
    let mut out = String::from("step,lm,mke,total\n");
    for s in steps {
        out.push_str(&format!("{},{},{},{}\n", s.step, s.lm, s.mke, s.total));
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// binary checkpoints
// ---------------------------------------------------------------------------

struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    fn new() -> Self {
        Self { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn bytes(&mut self, v: &[u8]) {
        self.buf.extend_from_slice(v);
    }

    fn matrix(&mut self, m: &Matrix) {
        for &v in m.data() {
            self.f64(v);
        }
    }

    fn string(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        if self.pos + n > self.buf.len() {
            return Err(malformed(self.path, "truncated checkpoint"));
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, FormatError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<Matrix, FormatError> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64()?);
        }
        Matrix::from_vec(rows, cols, data).map_err(|e| malformed(self.path, e.to_string()))
    }

    fn string(&mut self) -> Result<String, FormatError> {
        let len = self.u32()? as usize;
        let bytes = self.take(len)?;
        String::from_utf8(bytes.to_vec())
            .map_err(|e| malformed(self.path, format!("bad utf-8 in vocab: {e}")))
    }
}

fn write_adapter_block(w: &mut ByteWriter, p: &AdapterParams) {
    w.bytes(ADAPTER_MAGIC);
    w.u32(p.feature_dim() as u32);
    w.u32(p.rank() as u32);
    w.f64(p.alpha);
    w.matrix(&p.w_down);
    w.matrix(&p.w_up);
    for &v in &p.ln_gain {
        w.f64(v);
    }
    for &v in &p.ln_bias {
        w.f64(v);
    }
}

fn read_adapter_block(r: &mut ByteReader) -> Result<AdapterParams, FormatError> {
    let magic = r.take(4)?;
    if magic != ADAPTER_MAGIC {
        return Err(malformed(r.path, "missing adapter block magic"));
    }
    let d = r.u32()? as usize;
    let rank = r.u32()? as usize;
    let alpha = r.f64()?;
    let w_down = r.matrix(d, rank)?;
    let w_up = r.matrix(rank, d)?;
    let mut ln_gain = Vec::with_capacity(rank);
    for _ in 0..rank {
        ln_gain.push(r.f64()?);
    }
    let mut ln_bias = Vec::with_capacity(rank);
    for _ in 0..rank {
        ln_bias.push(r.f64()?);
    }
    let params = AdapterParams {
        w_down,
        w_up,
        ln_gain,
        ln_bias,
        alpha,
        activation: Activation::default(),
    };
    params
        .validate()
        .map_err(|e| malformed(r.path, e.to_string()))?;
    Ok(params)
}

/// Save adapter parameters on their own.
pub fn save_adapter(path: &Path, params: &AdapterParams) -> Result<(), FormatError> {
    let mut w = ByteWriter::new();
    write_adapter_block(&mut w, params);
    fs::write(path, w.buf).map_err(io_err(path))
}

pub fn load_adapter(path: &Path) -> Result<AdapterParams, FormatError> {
    let buf = fs::read(path).map_err(io_err(path))?;
    let mut r = ByteReader {
        buf: &buf,
        pos: 0,
        path,
    };
    let params = read_adapter_block(&mut r)?;
    if r.pos != buf.len() {
        return Err(malformed(path, "trailing bytes after adapter block"));
    }
    Ok(params)
}

/// Save a toy-model checkpoint: vocabulary and embeddings first, then
/// the adapter block when the model has one.
pub fn save_model(path: &Path, model: &ToyModel) -> Result<(), FormatError> {
    let mut w = ByteWriter::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u32(model.vocab_size() as u32);
    w.u32(model.hidden_dim() as u32);
    w.u32(model.feature_dim() as u32);
    w.u32(model.cond_adapter.is_some() as u32);
    for token in &model.vocab {
        w.string(token);
    }
    w.matrix(&model.token_embed);
    w.matrix(&model.base_proj);
    w.matrix(&model.out_proj);
    if let Some(p) = &model.cond_adapter {
        write_adapter_block(&mut w, p);
    }
    fs::write(path, w.buf).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<ToyModel, FormatError> {
    let buf = fs::read(path).map_err(io_err(path))?;
    let mut r = ByteReader {
        buf: &buf,
        pos: 0,
        path,
    };
    if r.take(4)? != MODEL_MAGIC {
        return Err(malformed(path, "not a model checkpoint"));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(malformed(path, format!("unsupported version {version}")));
    }
    let v = r.u32()? as usize;
    let h = r.u32()? as usize;
    let d = r.u32()? as usize;
    let has_adapter = r.u32()? != 0;
    let mut vocab = Vec::with_capacity(v);
    for _ in 0..v {
        vocab.push(r.string()?);
    }
    let token_embed = r.matrix(v, h)?;
    let base_proj = r.matrix(d, h)?;
    let out_proj = r.matrix(h, v)?;
    let cond_adapter = if has_adapter {
        Some(read_adapter_block(&mut r)?)
    } else {
        None
    };
    if r.pos != buf.len() {
        return Err(malformed(path, "trailing bytes after checkpoint"));
    }
    Ok(ToyModel::new(
        vocab,
        token_embed,
        base_proj,
        cond_adapter,
        out_proj,
    ))
}
