use std::io::{Read, Write};

use super::grid::{Grid, GridFunction};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"HGF1";

/// Binary layout: magic `HGF1`, `d` (u32), node count per axis (d × u32),
/// components (u32), then the values as little-endian f64.
pub fn write_hgf1(f: &GridFunction, mut out: impl Write) -> Result<()> {
    let d = f.grid.dim();
    out.write_all(MAGIC)?;
    out.write_all(&(d as u32).to_le_bytes())?;
    for k in 0..d {
        out.write_all(&(f.grid.nodes_on_axis(k) as u32).to_le_bytes())?;
    }
    out.write_all(&(f.components as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(f.values.len() * 8);
    for v in &f.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

/// Reads an HGF1 payload onto `grid`, whose node counts must match the header.
pub fn read_hgf1(grid: &Grid, mut input: impl Read) -> Result<GridFunction> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::invalid("not an HGF1 file"));
    }
    let mut word = [0u8; 4];
    let mut read_u32 = |input: &mut dyn Read| -> Result<usize> {
        input.read_exact(&mut word)?;
        Ok(u32::from_le_bytes(word) as usize)
    };
    let d = read_u32(&mut input)?;
    if d != grid.dim() {
        return Err(Error::GridMismatch(format!("file has d={d}, grid d={}", grid.dim())));
    }
    for k in 0..d {
        let n = read_u32(&mut input)?;
        if n != grid.nodes_on_axis(k) {
            return Err(Error::GridMismatch(format!("axis {k}: file has {n} nodes, grid {}", grid.nodes_on_axis(k))));
        }
    }
    let components = read_u32(&mut input)?;
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() != grid.node_count() * components * 8 {
        return Err(Error::GridMismatch("HGF1 payload length does not match the header".into()));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    GridFunction::new(grid.clone(), components, values)
}

/// CSV with columns `i1..id, x1..xd, c0..c{m-1}`.
pub fn write_csv(f: &GridFunction, mut out: impl Write) -> Result<()> {
    let d = f.grid.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("i{k}")).collect();
    header.extend((1..=d).map(|k| format!("x{k}")));
    header.extend((0..f.components).map(|c| format!("c{c}")));
    writeln!(out, "{}", header.join(","))?;
    for p in 0..f.grid.node_count() {
        let idx = f.grid.multi_index(p);
        let x = f.grid.point(p);
        let mut row: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        row.extend(x.iter().map(|v| format!("{v:e}")));
        row.extend(f.node(p).iter().map(|v| format!("{v:e}")));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
