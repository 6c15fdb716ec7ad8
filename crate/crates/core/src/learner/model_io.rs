//! Little-endian binary files for models (`CDLM`) and datasets (`CDLD`).
//!
//! A single-dictionary model stores its second dictionary header as
//! `m = 0` with the shared `K` and no entries.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ShapeBuilder};
use thiserror::Error;

use super::{CoupledModel, CycleMetrics};
use crate::datapipe::{Dataset, Dictionary};
use crate::sparse_coding::SparseCode;

pub const MODEL_MAGIC: [u8; 4] = *b"CDLM";
pub const DATASET_MAGIC: [u8; 4] = *b"CDLD";
pub const FORMAT_VERSION: u32 = 1;

const METRIC_RECORD_BYTES: usize = 4 + 8 + 8 + 8 + 4;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),

    #[error("dimension overflow: {0}")]
    DimensionOverflow(String),

    #[error("truncated payload: need {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid content: {0}")]
    InvalidContent(String),

    #[error("{0} trailing bytes after payload")]
    TrailingBytes(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type FormatResult<T> = std::result::Result<T, FormatError>;

fn to_u32(v: usize, what: &str) -> FormatResult<u32> {
    u32::try_from(v).map_err(|_| FormatError::DimensionOverflow(format!("{what} {v} does not fit in u32")))
}

struct Writer(Vec<u8>);

impl Writer {
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn size(&mut self, v: usize, what: &str) -> FormatResult<()> {
        self.u32(to_u32(v, what)?);
        Ok(())
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, v: &[f64]) {
        self.0.reserve(v.len() * 8);
        v.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> FormatResult<&'a [u8]> {
        let available = self.buf.len() - self.pos;
        if n > available {
            return Err(FormatError::Truncated {
                offset: self.pos,
                needed: n,
                available,
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> FormatResult<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn size(&mut self) -> FormatResult<usize> {
        Ok(self.u32()? as usize)
    }

    fn f64(&mut self) -> FormatResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    /// Reads `count` doubles, checking the byte count before allocating.
    fn f64s(&mut self, count: usize) -> FormatResult<Vec<f64>> {
        let bytes = count
            .checked_mul(8)
            .ok_or_else(|| FormatError::DimensionOverflow(format!("{count} doubles")))?;
        let raw = self.take(bytes)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn header(&mut self, magic: [u8; 4]) -> FormatResult<()> {
        let found: [u8; 4] = self.take(4)?.try_into().expect("4 bytes");
        if found != magic {
            return Err(FormatError::BadMagic {
                expected: magic,
                found,
            });
        }
        match self.u32()? {
            FORMAT_VERSION => Ok(()),
            v => Err(FormatError::UnsupportedVersion(v)),
        }
    }

    fn finish(&self) -> FormatResult<()> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

fn product(a: usize, b: usize, what: &str) -> FormatResult<usize> {
    a.checked_mul(b)
        .ok_or_else(|| FormatError::DimensionOverflow(format!("{what}: {a} x {b}")))
}

fn invalid_content(e: impl std::fmt::Display) -> FormatError {
    FormatError::InvalidContent(e.to_string())
}

fn write_dict(w: &mut Writer, dict: &Dictionary) -> FormatResult<()> {
    w.size(dict.dim(), "dictionary dim")?;
    w.size(dict.natoms(), "atom count")?;
    w.f64s(dict.as_slice());
    Ok(())
}

/// `None` for an absent dictionary (`m = 0`).
fn read_dict(r: &mut Reader<'_>) -> FormatResult<(usize, Option<Dictionary>)> {
    let m = r.size()?;
    let k = r.size()?;
    if m == 0 {
        return Ok((k, None));
    }
    let values = r.f64s(product(m, k, "dictionary")?)?;
    let atoms = Array2::from_shape_vec((m, k).f(), values).map_err(invalid_content)?;
    Ok((k, Some(Dictionary::new(atoms).map_err(invalid_content)?)))
}

pub fn encode_model(model: &CoupledModel) -> FormatResult<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&MODEL_MAGIC);
    w.u32(FORMAT_VERSION);
    write_dict(&mut w, model.dict1())?;
    match model.dict2() {
        Some(d) => write_dict(&mut w, d)?,
        None => {
            w.u32(0);
            w.size(model.natoms(), "atom count")?;
        }
    }

    let code = model.code();
    w.size(code.count(), "signal count")?;
    for c in code.columns() {
        w.size(c.len(), "column nnz")?;
        for &(t, v) in c {
            w.size(t, "atom index")?;
            w.f64(v);
        }
    }

    w.size(model.metrics().len(), "metric count")?;
    for m in model.metrics() {
        w.size(m.cycle, "cycle")?;
        w.f64(m.wall_time);
        w.f64(m.avg_nonzeros);
        w.f64(m.avg_error);
        w.size(m.schedule_limit, "schedule limit")?;
    }
    Ok(w.0)
}

pub fn decode_model(bytes: &[u8]) -> FormatResult<CoupledModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(MODEL_MAGIC)?;
    let (k, dict1) = read_dict(&mut r)?;
    let dict1 = dict1.ok_or_else(|| invalid_content("first dictionary is empty"))?;
    let (k2, dict2) = read_dict(&mut r)?;
    if k2 != k {
        return Err(invalid_content(format!("atom counts differ: {k} and {k2}")));
    }

    let n = r.size()?;
    if product(n, 4, "code")? > bytes.len() - r.pos {
        return Err(FormatError::Truncated {
            offset: r.pos,
            needed: n * 4,
            available: bytes.len() - r.pos,
        });
    }
    let mut columns = Vec::with_capacity(n);
    for i in 0..n {
        let nnz = r.size()?;
        if nnz > k {
            return Err(FormatError::DimensionOverflow(format!(
                "column {i} has {nnz} entries for {k} atoms"
            )));
        }
        let mut col = Vec::with_capacity(nnz);
        for _ in 0..nnz {
            let t = r.size()?;
            col.push((t, r.f64()?));
        }
        columns.push(col);
    }
    let code = SparseCode::new(k, columns).map_err(invalid_content)?;

    let count = r.size()?;
    let needed = product(count, METRIC_RECORD_BYTES, "metrics")?;
    if needed > bytes.len() - r.pos {
        return Err(FormatError::Truncated {
            offset: r.pos,
            needed,
            available: bytes.len() - r.pos,
        });
    }
    let mut metrics = Vec::with_capacity(count);
    for _ in 0..count {
        metrics.push(CycleMetrics {
            cycle: r.size()?,
            wall_time: r.f64()?,
            avg_nonzeros: r.f64()?,
            avg_error: r.f64()?,
            schedule_limit: r.size()?,
        });
    }
    r.finish()?;
    CoupledModel::new(dict1, dict2, code, metrics).map_err(invalid_content)
}

pub fn save_model(path: impl AsRef<Path>, model: &CoupledModel) -> FormatResult<()> {
    fs::write(path, encode_model(model)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> FormatResult<CoupledModel> {
    decode_model(&fs::read(path)?)
}

/// `CDLD`, version, `m`, `n`, column-major samples, then a `u32` flag and,
/// if set, the `n` per-signal means.
pub fn encode_dataset(data: &Dataset) -> FormatResult<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(&DATASET_MAGIC);
    w.u32(FORMAT_VERSION);
    w.size(data.dim(), "dataset dim")?;
    w.size(data.count(), "signal count")?;
    w.f64s(data.as_slice());
    match data.means() {
        Some(means) => {
            w.u32(1);
            w.f64s(means);
        }
        None => w.u32(0),
    }
    Ok(w.0)
}

pub fn decode_dataset(bytes: &[u8]) -> FormatResult<Dataset> {
    let mut r = Reader { buf: bytes, pos: 0 };
    r.header(DATASET_MAGIC)?;
    let m = r.size()?;
    let n = r.size()?;
    let values = r.f64s(product(m, n, "dataset")?)?;
    let data = Dataset::from_col_major(m, n, values).map_err(invalid_content)?;
    let data = match r.u32()? {
        0 => data,
        1 => data.with_means(r.f64s(n)?).map_err(invalid_content)?,
        f => return Err(invalid_content(format!("means flag {f}"))),
    };
    r.finish()?;
    Ok(data)
}

pub fn save_dataset(path: impl AsRef<Path>, data: &Dataset) -> FormatResult<()> {
    fs::write(path, encode_dataset(data)?)?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> FormatResult<Dataset> {
    decode_dataset(&fs::read(path)?)
}
