//! Matrix file formats.
//!
//! `DCM1` binary layout, all little-endian:
//!
//! ```text
//! offset 0   b"DCM1"
//! offset 4   u32 rows
//! offset 8   u32 cols
//! offset 12  rows*cols f32 values, row-major
//! ```
//!
//! Small fixtures may also be plain CSV, one matrix row per line, no header.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{DenseMatrix, LinalgError};

pub const DCM1_MAGIC: &[u8; 4] = b"DCM1";

pub fn write_dcm1<W: Write>(mut w: W, m: &DenseMatrix) -> Result<(), LinalgError> {
    let rows = u32::try_from(m.rows()).map_err(|_| LinalgError::Format("row count exceeds u32".into()))?;
    let cols = u32::try_from(m.cols()).map_err(|_| LinalgError::Format("column count exceeds u32".into()))?;
    w.write_all(DCM1_MAGIC)?;
    w.write_all(&rows.to_le_bytes())?;
    w.write_all(&cols.to_le_bytes())?;
    for v in m.as_slice() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dcm1<R: Read>(mut r: R) -> Result<DenseMatrix, LinalgError> {
    let mut header = [0u8; 12];
    r.read_exact(&mut header)
        .map_err(|_| LinalgError::Format("truncated DCM1 header".into()))?;
    if &header[0..4] != DCM1_MAGIC {
        return Err(LinalgError::Format("bad magic, expected DCM1".into()));
    }
    let rows = u32::from_le_bytes(header[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(header[8..12].try_into().expect("4 bytes")) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| LinalgError::Format("matrix dimensions overflow".into()))?;
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != count * 4 {
        return Err(LinalgError::Format(format!(
            "expected {} payload bytes for {rows}x{cols}, found {}",
            count * 4,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("chunk of 4")))
        .collect();
    DenseMatrix::new(rows, cols, data)
}

pub fn read_csv<R: Read>(r: R) -> Result<DenseMatrix, LinalgError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(r);
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| LinalgError::Format(format!("csv line {}: {e}", line + 1)))?;
        let row = record
            .iter()
            .map(|field| {
                field
                    .parse::<f32>()
                    .map_err(|e| LinalgError::Format(format!("csv line {}: {field:?}: {e}", line + 1)))
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    DenseMatrix::from_rows(&rows)
}

pub fn write_csv<W: Write>(w: W, m: &DenseMatrix) -> Result<(), LinalgError> {
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    for i in 0..m.rows() {
        writer
            .write_record(m.row(i).iter().map(|v| v.to_string()))
            .map_err(|e| LinalgError::Format(e.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Loads a matrix, choosing the format from the extension (`.csv` is CSV,
/// anything else is `DCM1`).
pub fn load_matrix(path: &Path) -> Result<DenseMatrix, LinalgError> {
    let file = File::open(path).map_err(|e| LinalgError::Io(with_path(e, path)))?;
    let reader = BufReader::new(file);
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv(reader)
    } else {
        read_dcm1(reader)
    }
}

pub fn save_dcm1(path: &Path, m: &DenseMatrix) -> Result<(), LinalgError> {
    let file = File::create(path).map_err(|e| LinalgError::Io(with_path(e, path)))?;
    write_dcm1(BufWriter::new(file), m)
}

fn with_path(e: std::io::Error, path: &Path) -> std::io::Error {
    std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))
}
