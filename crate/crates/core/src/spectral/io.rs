//! Field snapshots.
//!
//! Binary layout (little endian):
//!
//! ```text
//! magic    8 bytes  "MLSNAP1\0"
//! geometry u32      0 = torus, 1 = channel
//! nx, ny   u32 x 2  grid parameters as passed to `make_grid`
//! ncomp    u32
//! parity   u32 x ncomp   0 = periodic, 1 = even, 2 = odd
//! time     f64
//! payload  ncomp x rows x cols f64, row-major, shape `Grid::physical_shape`
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use super::{make_grid, Geometry, Grid, Parity, ScalarField};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"MLSNAP1\0";

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub time: f64,
    pub fields: Vec<ScalarField>,
}

impl Snapshot {
    pub fn grid(&self) -> Option<&Grid> {
        self.fields.first().map(|f| f.grid())
    }
}

fn parity_code(p: Parity) -> u32 {
    match p {
        Parity::Periodic => 0,
        Parity::Even => 1,
        Parity::Odd => 2,
    }
}

fn parity_from(code: u32) -> Result<Parity> {
    match code {
        0 => Ok(Parity::Periodic),
        1 => Ok(Parity::Even),
        2 => Ok(Parity::Odd),
        c => Err(Error::Snapshot(format!("unknown parity code {c}"))),
    }
}

/// Serialize fields sharing one grid.
pub fn encode_snapshot<W: Write>(out: &mut W, time: f64, fields: &[&ScalarField]) -> Result<()> {
    let Some(first) = fields.first() else {
        return Err(Error::Snapshot("no fields to write".into()));
    };
    let grid = first.grid();
    if fields.iter().any(|f| f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let geometry = match grid.geometry() {
        Geometry::Torus2D => 0u32,
        Geometry::Channel2D => 1u32,
    };
    let mut buf = Vec::with_capacity(64);
    buf.extend_from_slice(MAGIC);
    for v in [geometry, grid.nx() as u32, grid.ny() as u32, fields.len() as u32] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for f in fields {
        buf.extend_from_slice(&parity_code(f.parity()).to_le_bytes());
    }
    buf.extend_from_slice(&time.to_le_bytes());
    let io = |e| Error::io("<snapshot>", e);
    out.write_all(&buf).map_err(io)?;
    for f in fields {
        let mut payload = Vec::with_capacity(8 * f.values().len());
        for v in f.values().iter() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&payload).map_err(io)?;
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| Error::Snapshot(format!("truncated header: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)
        .map_err(|e| Error::Snapshot(format!("truncated data: {e}")))?;
    Ok(f64::from_le_bytes(b))
}

pub fn decode_snapshot<R: Read>(input: &mut R) -> Result<Snapshot> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|e| Error::Snapshot(format!("missing magic: {e}")))?;
    if &magic != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let geometry = match read_u32(input)? {
        0 => Geometry::Torus2D,
        1 => Geometry::Channel2D,
        g => return Err(Error::Snapshot(format!("unknown geometry code {g}"))),
    };
    let nx = read_u32(input)? as usize;
    let ny = read_u32(input)? as usize;
    let ncomp = read_u32(input)? as usize;
    if ncomp == 0 || ncomp > 64 {
        return Err(Error::Snapshot(format!("implausible component count {ncomp}")));
    }
    let parities = (0..ncomp)
        .map(|_| read_u32(input).and_then(parity_from))
        .collect::<Result<Vec<_>>>()?;
    let time = read_f64(input)?;
    let grid = make_grid(geometry, nx, ny)?;
    let shape = grid.physical_shape();
    let mut fields = Vec::with_capacity(ncomp);
    for parity in parities {
        let mut raw = vec![0u8; 8 * shape.0 * shape.1];
        input
            .read_exact(&mut raw)
            .map_err(|e| Error::Snapshot(format!("truncated payload: {e}")))?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        let values = Array2::from_shape_vec(shape, data).expect("shape matches payload");
        fields.push(ScalarField::from_values(&grid, parity, &values)?);
    }
    Ok(Snapshot { time, fields })
}

pub fn write_snapshot(path: &Path, time: f64, fields: &[&ScalarField]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    encode_snapshot(&mut out, time, fields)?;
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    decode_snapshot(&mut BufReader::new(file))
}

/// Write `x,y,<name>...` rows, one per physical grid point.
pub fn write_csv(path: &Path, fields: &[(&str, &ScalarField)]) -> Result<()> {
    let Some((_, first)) = fields.first() else {
        return Err(Error::Snapshot("no fields to write".into()));
    };
    let grid = first.grid();
    if fields.iter().any(|(_, f)| f.grid() != grid) {
        return Err(Error::GridMismatch);
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["x".to_string(), "y".to_string()];
    header.extend(fields.iter().map(|(n, _)| n.to_string()));
    w.write_record(&header)?;
    let (xs, ys) = (grid.x_coords(), grid.y_coords());
    for (i, x) in xs.iter().enumerate() {
        for (j, y) in ys.iter().enumerate() {
            let mut row = vec![x.to_string(), y.to_string()];
            row.extend(fields.iter().map(|(_, f)| f.values()[[i, j]].to_string()));
            w.write_record(&row)?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapshot_round_trip_in_memory() {
        let g = make_grid(Geometry::Channel2D, 16, 8).unwrap();
        let a = ScalarField::from_fn(&g, Parity::Even, |x, y| x.cos() * (2.0 * y).cos()).unwrap();
        let b = ScalarField::from_fn(&g, Parity::Odd, |x, y| x.sin() * y.sin()).unwrap();
        let mut buf = Vec::new();
        encode_snapshot(&mut buf, 0.25, &[&a, &b]).unwrap();
        let snap = decode_snapshot(&mut buf.as_slice()).unwrap();
        assert_eq!(snap.time, 0.25);
        assert_eq!(snap.fields.len(), 2);
        assert_eq!(snap.fields[1].parity(), Parity::Odd);
        let diff = (snap.fields[0].values() - a.values()).mapv(f64::abs);
        assert!(diff.iter().all(|d| *d < 1e-13));
    }

    #[test]
    fn corrupt_magic_is_rejected() {
        let mut bytes: &[u8] = b"NOTASNAPxxxxxxxx";
        assert!(matches!(decode_snapshot(&mut bytes), Err(Error::Snapshot(_))));
    }
}
