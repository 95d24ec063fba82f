//! `.fld` snapshots: one JSON header line, then little-endian f64 samples
//! in row-major order.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub dim: usize,
    #[serde(rename = "L")]
    pub box_length: f64,
    #[serde(rename = "N")]
    pub points_per_dim: usize,
    pub quantity: String,
    pub time: f64,
}

pub fn write_field(path: &Path, field: &ScalarField, quantity: &str, time: f64) -> Result<()> {
    let g = &field.grid;
    let header = FieldHeader {
        dim: g.dim(),
        box_length: g.box_length(),
        points_per_dim: g.n(),
        quantity: quantity.to_string(),
        time,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut out, &header)?;
    out.write_all(b"\n")?;
    for v in &field.values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<(FieldHeader, ScalarField)> {
    let mut rdr = BufReader::new(std::fs::File::open(path)?);
    let mut line = String::new();
    rdr.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim_end())?;
    let grid = Grid::new(header.dim, header.box_length, header.points_per_dim)?;
    let mut bytes = Vec::new();
    rdr.read_to_end(&mut bytes)?;
    if bytes.len() != 8 * grid.len() {
        return Err(Error::FieldFormat(format!("expected {} payload bytes, found {}", 8 * grid.len(), bytes.len())));
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let field = ScalarField::new(grid, values)?;
    Ok((header, field))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn write_then_read() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(2, 1.5, 8).unwrap();
        let f = ScalarField::from_fn(&g, |x| x[0] - 2.0 * x[1]);
        let p = dir.path().join("f.fld");
        write_field(&p, &f, "f", 0.25).unwrap();
        let (h, back) = read_field(&p).unwrap();
        assert_eq!(h.quantity, "f");
        assert_eq!(h.time, 0.25);
        assert_eq!(back, f);
        let text = std::fs::read(&p).unwrap();
        let first = text.split(|b| *b == b'\n').next().unwrap();
        let v: serde_json::Value = serde_json::from_slice(first).unwrap();
        assert_eq!(v["L"], 1.5);
        assert_eq!(v["N"], 8);
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.fld");
        std::fs::write(&p, b"{\"dim\":1,\"L\":1.0,\"N\":4,\"quantity\":\"f\",\"time\":0.0}\n\x00\x00").unwrap();
        assert!(matches!(read_field(&p), Err(Error::FieldFormat(_))));
    }
}
