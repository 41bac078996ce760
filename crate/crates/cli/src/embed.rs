//! Embedding dumps: the binary `MIEB` layout and a plain CSV fallback.
//!
//! Binary layout (little endian):
//!
//! | offset | size | field                                              |
//! |--------|------|----------------------------------------------------|
//! | 0      | 4    | magic `MIEB`                                       |
//! | 4      | 2    | version (1)                                        |
//! | 6      | 4    | `d`, feature dimension                             |
//! | 10     | 4    | `N`, sample count                                  |
//! | 14     | 1    | dtype: 1 = f32, 2 = f64                            |
//! | 15     | 1    | layout: 0 = sample-major, 1 = feature-major        |
//! | 16     | 1    | 1 if a label block follows the payload, else 0     |
//! | 17     | d·N·w| payload                                            |
//! | ...    | 4·N  | labels as u32 (optional)                           |
//!
//! Sample-major stores each sample's `d` values contiguously (an `N×d`
//! row-major array); feature-major stores the `d×N` matrix row by row.
//!
//! The CSV form starts with a `d,N` header (`d,N,labels` when every row
//! carries a trailing integer label), followed by `N` rows of `d` values.

use std::path::Path;

use infoplay_core::FeatureMatrix;
use infoplay_train::checkpoint::write_atomic;
use nalgebra::DMatrix;

use crate::error::EmbeddingError;

pub const MAGIC: &[u8; 4] = b"MIEB";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 17;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embeddings {
    pub features: FeatureMatrix,
    pub labels: Option<Vec<usize>>,
}

pub fn encode(features: &FeatureMatrix, labels: Option<&[usize]>, dtype: Dtype) -> Vec<u8> {
    let m = features.as_matrix();
    let (d, n) = m.shape();
    let mut out = Vec::with_capacity(HEADER_LEN + d * n * dtype.width() + labels.map_or(0, |l| 4 * l.len()));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.push(dtype.tag());
    out.push(0);
    out.push(labels.is_some() as u8);
    for &v in m.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    if let Some(labels) = labels {
        for &y in labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Embeddings, EmbeddingError> {
    if bytes.len() < 4 {
        return Err(if MAGIC.starts_with(bytes) && !bytes.is_empty() {
            EmbeddingError::TruncatedPayload {
                expected: HEADER_LEN,
                found: bytes.len(),
            }
        } else {
            EmbeddingError::BadMagic
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(EmbeddingError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(EmbeddingError::TruncatedPayload {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(EmbeddingError::UnsupportedVersion(version));
    }
    let d = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let dtype = match bytes[14] {
        1 => Dtype::F32,
        2 => Dtype::F64,
        t => return Err(EmbeddingError::BadHeader(format!("unknown dtype tag {t}"))),
    };
    let feature_major = match bytes[15] {
        0 => false,
        1 => true,
        t => return Err(EmbeddingError::BadHeader(format!("unknown layout flag {t}"))),
    };
    let has_labels = match bytes[16] {
        0 => false,
        1 => true,
        t => return Err(EmbeddingError::BadHeader(format!("unknown label flag {t}"))),
    };
    let payload = d
        .checked_mul(n)
        .and_then(|c| c.checked_mul(dtype.width()))
        .ok_or_else(|| EmbeddingError::BadHeader("dimensions overflow".into()))?;
    let expected = HEADER_LEN + payload + if has_labels { 4 * n } else { 0 };
    if bytes.len() < expected {
        return Err(EmbeddingError::TruncatedPayload {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(EmbeddingError::TrailingBytes(bytes.len() - expected));
    }
    let body = &bytes[HEADER_LEN..HEADER_LEN + payload];
    let values: Vec<f64> = match dtype {
        Dtype::F32 => body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64 => body
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    let m = if feature_major {
        DMatrix::from_row_slice(d, n, &values)
    } else {
        DMatrix::from_vec(d, n, values)
    };
    let labels = has_labels.then(|| {
        bytes[HEADER_LEN + payload..]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
            .collect()
    });
    Ok(Embeddings {
        features: FeatureMatrix::new(m)?,
        labels,
    })
}

pub fn parse_csv(text: &str) -> Result<Embeddings, EmbeddingError> {
    let shape = |line: usize, reason: String| EmbeddingError::CsvShapeError { line, reason };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| shape(1, "empty file".into()))?;
    let head: Vec<&str> = header.split(',').map(str::trim).collect();
    let (d, n, has_labels) = match head.as_slice() {
        [d, n] | [d, n, _] => {
            let d: usize = d.parse().map_err(|_| shape(1, format!("bad dimension `{d}`")))?;
            let n: usize = n.parse().map_err(|_| shape(1, format!("bad sample count `{n}`")))?;
            let labels = match head.get(2) {
                None => false,
                Some(&"labels") => true,
                Some(other) => return Err(shape(1, format!("unknown header flag `{other}`"))),
            };
            (d, n, labels)
        }
        _ => return Err(shape(1, "header must be `d,N` or `d,N,labels`".into())),
    };
    let width = d + has_labels as usize;
    let mut m = DMatrix::zeros(d, n);
    let mut labels = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        let lineno = i + 1;
        if rows == n {
            return Err(shape(lineno, format!("more than {n} rows")));
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(shape(lineno, format!("expected {width} fields, found {}", cells.len())));
        }
        for (r, cell) in cells[..d].iter().enumerate() {
            m[(r, rows)] = cell.parse().map_err(|_| shape(lineno, format!("bad number `{cell}`")))?;
        }
        if has_labels {
            let y = cells[d];
            labels.push(y.parse().map_err(|_| shape(lineno, format!("bad label `{y}`")))?);
        }
        rows += 1;
    }
    if rows != n {
        return Err(shape(text.lines().count().max(1), format!("expected {n} rows, found {rows}")));
    }
    Ok(Embeddings {
        features: FeatureMatrix::new(m)?,
        labels: has_labels.then_some(labels),
    })
}

pub fn to_csv(features: &FeatureMatrix, labels: Option<&[usize]>) -> String {
    let m = features.as_matrix();
    let mut out = format!("{},{}{}\n", m.nrows(), m.ncols(), if labels.is_some() { ",labels" } else { "" });
    for j in 0..m.ncols() {
        let row: Vec<String> = m.column(j).iter().map(|v| format!("{v:?}")).collect();
        out.push_str(&row.join(","));
        if let Some(l) = labels {
            out.push_str(&format!(",{}", l[j]));
        }
        out.push('\n');
    }
    out
}

/// Reads either format; the binary form is recognized by its magic.
pub fn read_embeddings(path: &Path) -> Result<Embeddings, EmbeddingError> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MAGIC) || (bytes.len() < 4 && MAGIC.starts_with(&bytes) && !bytes.is_empty()) {
        return decode(&bytes);
    }
    match std::str::from_utf8(&bytes) {
        Ok(text) if looks_like_csv(text) => parse_csv(text),
        _ => Err(EmbeddingError::BadMagic),
    }
}

fn looks_like_csv(text: &str) -> bool {
    let first = text.lines().next().unwrap_or("");
    let mut cells = first.split(',').map(str::trim);
    matches!((cells.next(), cells.next()), (Some(a), Some(b)) if a.parse::<usize>().is_ok() && b.parse::<usize>().is_ok())
}

pub fn write_embeddings(
    path: &Path,
    features: &FeatureMatrix,
    labels: Option<&[usize]>,
    dtype: Dtype,
) -> Result<(), EmbeddingError> {
    write_atomic(path, &encode(features, labels, dtype)).map_err(|e| match e {
        infoplay_train::TrainError::Io(io) => EmbeddingError::Io(io),
        other => EmbeddingError::Io(std::io::Error::other(other.to_string())),
    })
}
