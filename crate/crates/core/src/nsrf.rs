//! Binary field container: magic "NSRF", version, grid shape, then raw
//! physical samples.
//!
//! Layout (little-endian): 4 magic bytes, u32 version = 1, u32 dimension,
//! u32 component count, u32 points per axis, f64 box size, then
//! `n_comp * M^d` f64 samples, component-major with row-major grid order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::Error;
use crate::field::VectorField;
use crate::grid::SpectralGrid;
use crate::Result;

pub const MAGIC: [u8; 4] = *b"NSRF";
pub const VERSION: u32 = 1;

/// Largest imaginary residue tolerated when flattening to real samples,
/// relative to the largest sample magnitude.
const IMAG_TOL: f64 = 1e-9;

pub fn write_to(mut w: impl Write, field: &VectorField) -> Result<()> {
    let f = field.to_physical();
    let phys = f.physical()?;
    let scale = phys
        .iter()
        .flatten()
        .map(|v| v.norm())
        .fold(0.0f64, f64::max)
        .max(1.0);
    let imag = phys.iter().flatten().map(|v| v.im.abs()).fold(0.0f64, f64::max);
    if imag > IMAG_TOL * scale {
        return Err(Error::Format(format!(
            "field is not real-valued: imaginary residue {imag:.3e} vs scale {scale:.3e}"
        )));
    }
    let g = field.grid();
    w.write_all(&MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(g.dim() as u32).to_le_bytes())?;
    w.write_all(&(phys.len() as u32).to_le_bytes())?;
    w.write_all(&(g.points_per_axis() as u32).to_le_bytes())?;
    w.write_all(&g.box_size().to_le_bytes())?;
    for comp in phys {
        for v in comp {
            w.write_all(&v.re.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_from(mut r: impl Read) -> Result<VectorField> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut dyn Read| -> Result<u32> {
        r.read_exact(&mut u32buf)?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let d = read_u32(&mut r)? as usize;
    let n_comp = read_u32(&mut r)? as usize;
    let m = read_u32(&mut r)? as usize;
    let mut f64buf = [0u8; 8];
    r.read_exact(&mut f64buf)?;
    let l = f64::from_le_bytes(f64buf);
    if n_comp == 0 || n_comp > 3 {
        return Err(Error::Format(format!("component count {n_comp} out of range")));
    }
    let grid = SpectralGrid::new(d, l, m).map_err(|e| Error::Format(e.to_string()))?;
    let mut comps = Vec::with_capacity(n_comp);
    for _ in 0..n_comp {
        let mut comp = Vec::with_capacity(grid.n_points());
        for _ in 0..grid.n_points() {
            r.read_exact(&mut f64buf)?;
            comp.push(Complex64::new(f64::from_le_bytes(f64buf), 0.0));
        }
        comps.push(comp);
    }
    let mut probe = [0u8; 1];
    if r.read(&mut probe)? != 0 {
        return Err(Error::Format("trailing bytes after samples".into()));
    }
    VectorField::from_physical(grid, comps)
}

pub fn write_field(path: impl AsRef<Path>, field: &VectorField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_to(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn read_field(path: impl AsRef<Path>) -> Result<VectorField> {
    read_from(BufReader::new(File::open(path)?))
}
