//! Matrix, vector and sketch files.
//!
//! Matrices are read from text (comma- or whitespace-separated, one row per
//! line, `#` comments) or from the binary `DMATv001` layout: the 8-byte
//! magic, then `rows` and `cols` as little-endian `u64`, then the entries as
//! little-endian `f64` in row-major order.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use lewisreg_core::sampling::Sketch;
use lewisreg_core::DenseMatrix;

use crate::Error;

pub const DMAT_MAGIC: &[u8; 8] = b"DMATv001";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn parse_row(path: &Path, line_no: usize, line: &str) -> Result<Vec<f64>, Error> {
    let fields: Vec<&str> = if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    };
    fields
        .iter()
        .map(|f| {
            f.parse::<f64>()
                .map_err(|e| parse_err(path, line_no, format!("{f:?}: {e}")))
        })
        .collect()
}

fn text_rows(path: &Path, reader: impl BufRead) -> Result<Vec<Vec<f64>>, Error> {
    let mut rows = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line?;
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        rows.push(parse_row(path, k + 1, body)?);
    }
    Ok(rows)
}

/// Reads a matrix, detecting the binary layout by its magic bytes.
pub fn read_matrix(path: impl AsRef<Path>) -> Result<DenseMatrix, Error> {
    let path = path.as_ref();
    let mut reader = BufReader::new(File::open(path)?);
    let head = reader.fill_buf()?;
    if head.len() >= 8 && &head[..8] == DMAT_MAGIC {
        return read_dmat(path, reader);
    }
    let rows = text_rows(path, reader)?;
    if rows.is_empty() {
        return Err(parse_err(path, 0, "no rows"));
    }
    let cols = rows[0].len();
    if let Some(k) = rows.iter().position(|r| r.len() != cols) {
        return Err(parse_err(path, k + 1, format!("expected {cols} columns, found {}", rows[k].len())));
    }
    Ok(DenseMatrix::from_rows(&rows)?)
}

fn read_dmat(path: &Path, mut reader: impl Read) -> Result<DenseMatrix, Error> {
    let mut buf8 = [0u8; 8];
    reader.read_exact(&mut buf8)?;
    reader.read_exact(&mut buf8)?;
    let rows = u64::from_le_bytes(buf8) as usize;
    reader.read_exact(&mut buf8)?;
    let cols = u64::from_le_bytes(buf8) as usize;
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| parse_err(path, 0, "dimensions overflow"))?;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != len * 8 {
        return Err(parse_err(path, 0, format!("expected {} data bytes, found {}", len * 8, bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DenseMatrix::new(rows, cols, data)?)
}

/// Writes `DMATv001`.
pub fn write_matrix_bin(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(DMAT_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for x in m.as_slice() {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes comma-separated rows. Values round-trip exactly.
pub fn write_matrix_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<(), Error> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in m.row_iter() {
        w.write_record(row.iter().map(|x| format!("{x:?}")))?;
    }
    w.flush()?;
    Ok(())
}

/// One real per line.
pub fn read_vector(path: impl AsRef<Path>) -> Result<Vec<f64>, Error> {
    let path = path.as_ref();
    let rows = text_rows(path, BufReader::new(File::open(path)?))?;
    rows.into_iter()
        .enumerate()
        .map(|(k, r)| match r.as_slice() {
            [x] => Ok(*x),
            _ => Err(parse_err(path, k + 1, "expected one value per line")),
        })
        .collect()
}

pub fn write_vector(path: impl AsRef<Path>, v: &[f64]) -> Result<(), Error> {
    let mut w = BufWriter::new(File::create(path)?);
    for x in v {
        writeln!(w, "{x:?}")?;
    }
    w.flush()?;
    Ok(())
}

#[derive(serde::Serialize, serde::Deserialize)]
struct SketchRow {
    index: usize,
    weight: f64,
}

/// `index,weight` rows under a header.
pub fn write_sketch_csv(out: impl Write, sketch: &Sketch) -> Result<(), Error> {
    let mut w = csv::Writer::from_writer(out);
    for &(index, weight) in &sketch.entries {
        w.serialize(SketchRow { index, weight })?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_sketch_csv(path: impl AsRef<Path>) -> Result<Sketch, Error> {
    let mut r = csv::Reader::from_path(path)?;
    let entries = r
        .deserialize::<SketchRow>()
        .map(|row| row.map(|s| (s.index, s.weight)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Sketch::from_entries(entries, 0, 0)?)
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: serde::Serialize>(out: impl Write, value: &T) -> Result<(), Error> {
    let mut out = BufWriter::new(out);
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

pub fn write_json_file<T: serde::Serialize>(path: impl AsRef<Path>, value: &T) -> Result<(), Error> {
    write_json(File::create(path)?, value)
}
