//! Feature store files.
//!
//! Binary layout, little-endian throughout:
//!
//! | offset | size        | field                                   |
//! |--------|-------------|-----------------------------------------|
//! | 0      | 8           | magic `TAFEFEAT`                        |
//! | 8      | 4           | version (`u32`, currently 1)            |
//! | 12     | 4           | precision in bits (`u32`, 32 or 64)     |
//! | 16     | 8           | `n` samples (`u64`)                     |
//! | 24     | 8           | `d_in` (`u64`)                          |
//! | 32     | 4·n         | class label per sample (`u32`)          |
//! |        | 8·n         | sample id per sample (`u64`)            |
//! |        | n·d_in·p/8  | feature values, row-major               |
//!
//! The text fallback has one sample per line, `sample_id,label,v0,v1,...`;
//! blank lines and lines starting with `#` are ignored.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"TAFEFEAT";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    fn bits(self) -> u32 {
        match self {
            Precision::F32 => 32,
            Precision::F64 => 64,
        }
    }
}

/// `N x d_in` backbone features with a class label and id per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureStore {
    features: Tensor,
    labels: Vec<usize>,
    sample_ids: Vec<u64>,
}

impl FeatureStore {
    pub fn new(features: Tensor, labels: Vec<usize>, sample_ids: Vec<u64>) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::invalid(
                "feature_store",
                format!("expected N x d_in, got {:?}", features.shape()),
            ));
        }
        let n = features.rows();
        if labels.len() != n || sample_ids.len() != n {
            return Err(Error::invalid(
                "feature_store",
                format!("{n} rows but {} labels and {} ids", labels.len(), sample_ids.len()),
            ));
        }
        if !features.is_finite() {
            return Err(Error::NonFinite("feature store".into()));
        }
        Ok(FeatureStore {
            features,
            labels,
            sample_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn feature(&self, i: usize) -> &[f64] {
        self.features.row_slice(i)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample_ids(&self) -> &[u64] {
        &self.sample_ids
    }

    /// Rows `indices` as an `len x d_in` matrix.
    pub fn gather(&self, indices: &[usize]) -> Tensor {
        let d = self.dim();
        let mut data = Vec::with_capacity(indices.len() * d);
        for &i in indices {
            data.extend_from_slice(self.feature(i));
        }
        Tensor::new(&[indices.len(), d], data).expect("non-empty gather")
    }

    /// Copy with every row scaled to unit ℓ2 norm (zero rows left as is).
    pub fn l2_normalized(&self) -> FeatureStore {
        let mut features = self.features.clone();
        let d = self.dim();
        for row in features.data_mut().chunks_mut(d) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        FeatureStore {
            features,
            ..self.clone()
        }
    }

    pub fn to_bytes(&self, precision: Precision) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN as usize + self.features.len() * 8);
        out.extend_from_slice(FEATURE_MAGIC);
        out.write_u32::<LittleEndian>(FEATURE_VERSION).unwrap();
        out.write_u32::<LittleEndian>(precision.bits()).unwrap();
        out.write_u64::<LittleEndian>(self.len() as u64).unwrap();
        out.write_u64::<LittleEndian>(self.dim() as u64).unwrap();
        for &l in &self.labels {
            out.write_u32::<LittleEndian>(l as u32).unwrap();
        }
        for &id in &self.sample_ids {
            out.write_u64::<LittleEndian>(id).unwrap();
        }
        for &v in self.features.data() {
            match precision {
                Precision::F32 => out.write_f32::<LittleEndian>(v as f32).unwrap(),
                Precision::F64 => out.write_f64::<LittleEndian>(v).unwrap(),
            }
        }
        out
    }

    pub fn save(&self, path: impl AsRef<Path>, precision: Precision) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes(precision)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }

    pub fn save_text(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut out = Vec::new();
        writeln!(out, "# sample_id,label,features...").unwrap();
        for i in 0..self.len() {
            write!(out, "{},{}", self.sample_ids[i], self.labels[i]).unwrap();
            for v in self.feature(i) {
                write!(out, ",{v:?}").unwrap();
            }
            writeln!(out).unwrap();
        }
        fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    }
}

fn format_err(path: &Path, offset: u64, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        offset,
        msg: msg.into(),
    }
}

/// Loads a binary store, or the text fallback when the magic is absent.
pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureStore> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.starts_with(FEATURE_MAGIC) {
        parse_binary(path, &bytes)
    } else if bytes.len() < FEATURE_MAGIC.len() && FEATURE_MAGIC.starts_with(&bytes) && !bytes.is_empty() {
        Err(format_err(path, bytes.len() as u64, "truncated magic"))
    } else {
        parse_text(path, &bytes)
    }
}

fn parse_binary(path: &Path, bytes: &[u8]) -> Result<FeatureStore> {
    let total = bytes.len() as u64;
    if total < HEADER_LEN {
        return Err(format_err(
            path,
            total,
            format!("truncated header: expected {HEADER_LEN} bytes, found {total}"),
        ));
    }
    let mut cur = Cursor::new(bytes);
    cur.set_position(8);
    let version = cur.read_u32::<LittleEndian>().unwrap();
    if version != FEATURE_VERSION {
        return Err(format_err(path, 8, format!("unsupported version {version}")));
    }
    let bits = cur.read_u32::<LittleEndian>().unwrap();
    let precision = match bits {
        32 => Precision::F32,
        64 => Precision::F64,
        other => return Err(format_err(path, 12, format!("unsupported precision {other}"))),
    };
    let n = cur.read_u64::<LittleEndian>().unwrap();
    let d = cur.read_u64::<LittleEndian>().unwrap();
    if n == 0 || d == 0 {
        return Err(format_err(path, 16, format!("empty store: n = {n}, d_in = {d}")));
    }
    let width = u64::from(bits / 8);
    let expected = n
        .checked_mul(12)
        .and_then(|meta| n.checked_mul(d)?.checked_mul(width)?.checked_add(meta))
        .and_then(|body| body.checked_add(HEADER_LEN))
        .ok_or_else(|| format_err(path, 16, "header sizes overflow"))?;
    if total != expected {
        return Err(format_err(
            path,
            total,
            format!("length mismatch: header implies {expected} bytes, found {total}"),
        ));
    }
    let (n, d) = (n as usize, d as usize);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        labels.push(cur.read_u32::<LittleEndian>().unwrap() as usize);
    }
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        ids.push(cur.read_u64::<LittleEndian>().unwrap());
    }
    let mut values = Vec::with_capacity(n * d);
    for _ in 0..n * d {
        let offset = cur.position();
        let v = match precision {
            Precision::F32 => f64::from(cur.read_f32::<LittleEndian>().unwrap()),
            Precision::F64 => cur.read_f64::<LittleEndian>().unwrap(),
        };
        if !v.is_finite() {
            return Err(format_err(path, offset, "non-finite feature value"));
        }
        values.push(v);
    }
    let mut rest = Vec::new();
    cur.read_to_end(&mut rest).unwrap();
    debug_assert!(rest.is_empty());
    FeatureStore::new(Tensor::new(&[n, d], values)?, labels, ids)
}

fn parse_text(path: &Path, bytes: &[u8]) -> Result<FeatureStore> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| format_err(path, e.valid_up_to() as u64, "not a feature file"))?;
    let mut labels = Vec::new();
    let mut ids = Vec::new();
    let mut values = Vec::new();
    let mut dim = None;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len() as u64;
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = body.split(',').map(str::trim).collect();
        if fields.len() < 3 {
            return Err(format_err(path, line_offset, "expected sample_id,label,values..."));
        }
        let d = fields.len() - 2;
        if *dim.get_or_insert(d) != d {
            return Err(format_err(
                path,
                line_offset,
                format!("ragged row: {d} values, expected {}", dim.unwrap()),
            ));
        }
        let bad = |what: &str| format_err(path, line_offset, format!("unparsable {what}"));
        ids.push(fields[0].parse::<u64>().map_err(|_| bad("sample id"))?);
        labels.push(fields[1].parse::<usize>().map_err(|_| bad("label"))?);
        for f in &fields[2..] {
            let v: f64 = f.parse().map_err(|_| bad("value"))?;
            if !v.is_finite() {
                return Err(format_err(path, line_offset, "non-finite feature value"));
            }
            values.push(v);
        }
    }
    let Some(d) = dim else {
        return Err(format_err(path, 0, "no samples"));
    };
    FeatureStore::new(Tensor::new(&[labels.len(), d], values)?, labels, ids)
}
