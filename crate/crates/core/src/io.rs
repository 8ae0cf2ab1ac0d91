//! Buffer and report files.
//!
//! Buffers are stored either as text CSV (decimal floats, one matrix row per
//! line) or raw: the magic `QAKE`, a little-endian `u32` element count, then
//! the elements as little-endian `f32`. Both round-trip bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::lab::{ErrorReport, GridSearchResult};
use crate::{Error, NumericBuffer, Result};

pub const RAW_MAGIC: [u8; 4] = *b"QAKE";
pub const RAW_HEADER_LEN: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferFormat {
    Csv,
    Raw,
}

impl FromStr for BufferFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(BufferFormat::Csv),
            "raw" => Ok(BufferFormat::Raw),
            other => Err(Error::config(format!("unknown buffer format {other:?}"))),
        }
    }
}

pub fn encode_raw(xs: &[f32]) -> Result<Vec<u8>> {
    let count = u32::try_from(xs.len())
        .map_err(|_| Error::config(format!("{} elements exceed the raw format limit", xs.len())))?;
    let mut out = Vec::with_capacity(RAW_HEADER_LEN + 4 * xs.len());
    out.extend_from_slice(&RAW_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_raw(bytes: &[u8]) -> Result<NumericBuffer> {
    if bytes.len() < RAW_HEADER_LEN {
        return Err(Error::Format("truncated header".into()));
    }
    if bytes[..4] != RAW_MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    let count = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let body = &bytes[RAW_HEADER_LEN..];
    if body.len() != count * 4 {
        return Err(Error::Format(format!(
            "header announces {count} elements, body holds {} bytes",
            body.len()
        )));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

/// Shortest decimal that parses back to the same `f32`. With `cols`, one row
/// per line.
pub fn encode_csv(xs: &[f32], cols: Option<usize>) -> String {
    let cols = cols.filter(|&c| c > 0).unwrap_or(xs.len().max(1));
    let mut out = String::with_capacity(xs.len() * 12);
    for row in xs.chunks(cols) {
        for (i, x) in row.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            write!(out, "{x}").expect("write to String");
        }
        out.push('\n');
    }
    out
}

/// Parses CSV text. Returns the values and the row length when every
/// non-empty line has the same number of fields.
pub fn decode_csv(text: &str) -> Result<(NumericBuffer, Option<usize>)> {
    let mut values = Vec::new();
    let mut width: Option<Option<usize>> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut n = 0;
        for field in line.split(',') {
            let field = field.trim();
            let v: f32 = field.parse().map_err(|_| {
                Error::Format(format!("line {}: cannot parse {field:?} as a float", lineno + 1))
            })?;
            values.push(v);
            n += 1;
        }
        width = match width {
            None => Some(Some(n)),
            Some(Some(w)) if w == n => Some(Some(w)),
            _ => Some(None),
        };
    }
    Ok((values.into(), width.flatten()))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_buffer(path: &Path, format: BufferFormat) -> Result<(NumericBuffer, Option<usize>)> {
    match format {
        BufferFormat::Raw => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            Ok((decode_raw(&bytes)?, None))
        }
        BufferFormat::Csv => {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            decode_csv(&text)
        }
    }
}

pub fn write_buffer(path: &Path, xs: &[f32], format: BufferFormat, cols: Option<usize>) -> Result<()> {
    let bytes = match format {
        BufferFormat::Raw => encode_raw(xs)?,
        BufferFormat::Csv => encode_csv(xs, cols).into_bytes(),
    };
    fs::write(path, bytes).map_err(io_err(path))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// Columns: kernel, lo, hi, samples, max_rel_err, mean_rel_err, argmax_input.
pub fn error_reports_csv(reports: &[ErrorReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in reports {
        w.serialize(r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn parse_error_reports_csv(text: &str) -> Result<Vec<ErrorReport>> {
    csv::Reader::from_reader(text.as_bytes())
        .deserialize()
        .map(|r| r.map_err(csv_err))
        .collect()
}

/// Columns: a0, a1, a2, best_max_rel_err, step_a0, step_a1, step_a2,
/// points_evaluated.
pub fn grid_result_csv(r: &GridSearchResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "a0",
        "a1",
        "a2",
        "best_max_rel_err",
        "step_a0",
        "step_a1",
        "step_a2",
        "points_evaluated",
    ])
    .map_err(csv_err)?;
    let fields = [
        r.best_exact[0].to_string(),
        r.best_exact[1].to_string(),
        r.best_exact[2].to_string(),
        r.best_max_rel_err.to_string(),
        r.grid_resolution[0].to_string(),
        r.grid_resolution[1].to_string(),
        r.grid_resolution[2].to_string(),
        r.points_evaluated.to_string(),
    ];
    w.write_record(&fields).map_err(csv_err)?;
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
