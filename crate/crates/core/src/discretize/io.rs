//! Plot-ready field dumps: CSV (`t,x1,x2,value`, row-major cells per time
//! level) and a compact little-endian binary format.
//!
//! Binary layout: magic `GMFG`, then `version`, `n1`, `n2`, `nt` as `u32`,
//! then `L` and `T` as `f64` (36 header bytes), followed by `(nt + 1) * n1 * n2`
//! `f64` values in time-major, row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::discretize::{Grid, ScalarField, TimeField};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"GMFG";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 36;

pub fn write_csv(w: &mut impl Write, field: &TimeField) -> Result<()> {
    let g = field.grid;
    writeln!(w, "t,x1,x2,value")?;
    for (n, slice) in field.slices.iter().enumerate() {
        let t = g.time(n);
        for (k, v) in slice.iter().enumerate() {
            let (x1, x2) = g.center(k);
            writeln!(w, "{t},{x1},{x2},{v}")?;
        }
    }
    Ok(())
}

pub fn write_csv_file(path: &Path, field: &TimeField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_csv(&mut w, field)?;
    w.flush()?;
    Ok(())
}

/// Writes a single spatial field as one time level at `t`.
pub fn write_scalar_csv_file(path: &Path, field: &ScalarField, t: f64) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "t,x1,x2,value")?;
    for (k, v) in field.values.iter().enumerate() {
        let (x1, x2) = field.grid.center(k);
        writeln!(w, "{t},{x1},{x2},{v}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_binary(w: &mut impl Write, field: &TimeField) -> Result<()> {
    let g = field.grid;
    w.write_all(MAGIC)?;
    for v in [FORMAT_VERSION, g.n1 as u32, g.n2 as u32, g.nt as u32] {
        w.write_all(&v.to_le_bytes())?;
    }
    w.write_all(&g.half_width.to_le_bytes())?;
    w.write_all(&g.horizon.to_le_bytes())?;
    for v in field.slices.iter().flatten() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_binary_file(path: &Path, field: &TimeField) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_binary(&mut w, field)?;
    w.flush()?;
    Ok(())
}

pub fn read_binary(r: &mut impl Read) -> Result<TimeField> {
    let mut header = [0u8; HEADER_BYTES];
    r.read_exact(&mut header)?;
    if &header[..4] != MAGIC {
        return Err(Error::invalid("not a field dump (bad magic)"));
    }
    let word = |i: usize| u32::from_le_bytes(header[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != FORMAT_VERSION {
        return Err(Error::invalid(format!("unsupported dump version {}", word(0))));
    }
    let (n1, n2, nt) = (word(1) as usize, word(2) as usize, word(3) as usize);
    let half_width = f64::from_le_bytes(header[20..28].try_into().unwrap());
    let horizon = f64::from_le_bytes(header[28..36].try_into().unwrap());
    let grid = Grid::new(half_width, n1, n2, horizon, nt)?;
    let mut buf = [0u8; 8];
    let mut slices = Vec::with_capacity(nt + 1);
    for _ in 0..=nt {
        let mut s = Vec::with_capacity(grid.cells());
        for _ in 0..grid.cells() {
            r.read_exact(&mut buf)?;
            s.push(f64::from_le_bytes(buf));
        }
        slices.push(s);
    }
    TimeField::new(grid, slices)
}

pub fn read_binary_file(path: &Path) -> Result<TimeField> {
    read_binary(&mut BufReader::new(File::open(path)?))
}

/// Reads a CSV density (`x1,x2,value` or `t,x1,x2,value`, header optional)
/// onto `grid` by nearest-cell assignment of the last column.
pub fn read_density_csv(path: &Path, grid: Grid) -> Result<ScalarField> {
    let text = std::fs::read_to_string(path)?;
    let mut values = vec![0.0; grid.cells()];
    let mut seen = vec![false; grid.cells()];
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let cols: Vec<&str> = line.split(',').map(str::trim).collect();
        let nums: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
        let Ok(nums) = nums else { continue };
        if nums.len() < 3 {
            return Err(Error::invalid("density rows need x1,x2,value"));
        }
        let l = nums.len();
        let k = grid.nearest_cell(nums[l - 3], nums[l - 2])?;
        values[k] = nums[l - 1];
        seen[k] = true;
    }
    if !seen.iter().all(|&s| s) {
        return Err(Error::invalid("density file does not cover every cell"));
    }
    ScalarField::new(grid, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip_and_header_size() {
        let g = Grid::new(2.0, 3, 4, 0.5, 2).unwrap();
        let f = TimeField::from_fn(g, |t, x1, x2| t + 10.0 * x1 - x2);
        let mut buf = Vec::new();
        write_binary(&mut buf, &f).unwrap();
        assert_eq!(buf.len(), HEADER_BYTES + 8 * 3 * 12);
        assert_eq!(&buf[..4], b"GMFG");
        let back = read_binary(&mut buf.as_slice()).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn csv_has_header_and_one_row_per_node() {
        let g = Grid::new(1.0, 2, 2, 1.0, 1).unwrap();
        let f = TimeField::zeros(g);
        let mut buf = Vec::new();
        write_csv(&mut buf, &f).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "t,x1,x2,value");
        assert_eq!(lines.len(), 1 + 2 * 4);
        assert_eq!(lines[1], "0,-0.5,-0.5,0");
    }
}
