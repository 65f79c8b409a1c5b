//! Gridded slip fields on axis-aligned rectangles, with CSV and raw binary
//! I/O, plus cell masks for energy evaluation on subregions.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Vector-valued phase field sampled as cell values on a uniform grid. The
/// domain is the rectangle [origin, origin + (nx·spacing, ny·spacing)];
/// values are stored row-major, n components per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SlipField {
    nx: usize,
    ny: usize,
    n: usize,
    spacing: f64,
    origin: [f64; 2],
    values: Vec<f64>,
}

impl SlipField {
    pub fn new(
        nx: usize,
        ny: usize,
        n: usize,
        spacing: f64,
        origin: [f64; 2],
        values: Vec<f64>,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 || n == 0 {
            return Err(Error::config(format!(
                "degenerate field shape {nx}x{ny}, n={n}"
            )));
        }
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::config(format!("spacing must be positive, got {spacing}")));
        }
        if values.len() != nx * ny * n {
            return Err(Error::config(format!(
                "value buffer has {} entries, expected {}",
                values.len(),
                nx * ny * n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("field contains non-finite values".to_string()));
        }
        Ok(SlipField { nx, ny, n, spacing, origin, values })
    }

    pub fn constant(nx: usize, ny: usize, spacing: f64, origin: [f64; 2], value: &[f64]) -> Result<Self> {
        let n = value.len();
        let mut values = Vec::with_capacity(nx * ny * n);
        for _ in 0..nx * ny {
            values.extend_from_slice(value);
        }
        SlipField::new(nx, ny, n, spacing, origin, values)
    }

    /// Build from a function of the cell center.
    pub fn from_fn(
        nx: usize,
        ny: usize,
        n: usize,
        spacing: f64,
        origin: [f64; 2],
        mut f: impl FnMut([f64; 2]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(nx * ny * n);
        for iy in 0..ny {
            for ix in 0..nx {
                let c = [
                    origin[0] + (ix as f64 + 0.5) * spacing,
                    origin[1] + (iy as f64 + 0.5) * spacing,
                ];
                let v = f(c);
                if v.len() != n {
                    return Err(Error::config(format!(
                        "cell function returned {} components, expected {n}",
                        v.len()
                    )));
                }
                values.extend_from_slice(&v);
            }
        }
        SlipField::new(nx, ny, n, spacing, origin, values)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }
    pub fn components(&self) -> usize {
        self.n
    }
    pub fn spacing(&self) -> f64 {
        self.spacing
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> &[f64] {
        let b = (iy * self.nx + ix) * self.n;
        &self.values[b..b + self.n]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: &[f64]) {
        let b = (iy * self.nx + ix) * self.n;
        self.values[b..b + self.n].copy_from_slice(v);
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> [f64; 2] {
        [
            self.origin[0] + (ix as f64 + 0.5) * self.spacing,
            self.origin[1] + (iy as f64 + 0.5) * self.spacing,
        ]
    }

    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    /// Mean value over masked cells (component-wise).
    pub fn mean(&self, mask: Option<&RegionMask>) -> Vec<f64> {
        let mut acc = vec![0.0; self.n];
        let mut count = 0usize;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                if mask.map_or(true, |m| m.get(ix, iy)) {
                    let v = self.get(ix, iy);
                    for c in 0..self.n {
                        acc[c] += v[c];
                    }
                    count += 1;
                }
            }
        }
        if count > 0 {
            for a in &mut acc {
                *a /= count as f64;
            }
        }
        acc
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        write!(w, "x_index,y_index")?;
        for c in 0..self.n {
            write!(w, ",u_{}", c + 1)?;
        }
        writeln!(w)?;
        for iy in 0..self.ny {
            for ix in 0..self.nx {
                write!(w, "{ix},{iy}")?;
                for v in self.get(ix, iy) {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// CSV lacks grid geometry, so spacing and origin are supplied.
    pub fn read_csv<R: Read>(r: R, spacing: f64, origin: [f64; 2]) -> Result<Self> {
        let r = BufReader::new(r);
        let mut rows: Vec<(usize, usize, Vec<f64>)> = Vec::new();
        let mut n = 0usize;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with("x_index")) {
                continue;
            }
            let mut parts = line.split(',');
            let parse_idx = |s: Option<&str>| -> Result<usize> {
                s.ok_or_else(|| Error::parse(format!("line {}: missing index", lineno + 1)))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::parse(format!("line {}: {e}", lineno + 1)))
            };
            let ix = parse_idx(parts.next())?;
            let iy = parse_idx(parts.next())?;
            let vals: Vec<f64> = parts
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|e| Error::parse(format!("line {}: {e}", lineno + 1)))
                })
                .collect::<Result<_>>()?;
            if vals.is_empty() {
                return Err(Error::parse(format!("line {}: no components", lineno + 1)));
            }
            if n == 0 {
                n = vals.len();
            } else if vals.len() != n {
                return Err(Error::parse(format!(
                    "line {}: {} components, expected {n}",
                    lineno + 1,
                    vals.len()
                )));
            }
            rows.push((ix, iy, vals));
        }
        if rows.is_empty() {
            return Err(Error::parse("empty field CSV".to_string()));
        }
        let nx = rows.iter().map(|r| r.0).max().unwrap() + 1;
        let ny = rows.iter().map(|r| r.1).max().unwrap() + 1;
        if rows.len() != nx * ny {
            return Err(Error::parse(format!(
                "CSV has {} rows, expected {nx}x{ny} = {}",
                rows.len(),
                nx * ny
            )));
        }
        let mut values = vec![f64::NAN; nx * ny * n];
        for (ix, iy, vals) in rows {
            let b = (iy * nx + ix) * n;
            values[b..b + n].copy_from_slice(&vals);
        }
        SlipField::new(nx, ny, n, spacing, origin, values)
    }

    /// Raw little-endian binary with a 32-byte header:
    /// magic "SLF1" | nx u32 | ny u32 | n u32 | spacing f64 | origin f32 x2,
    /// followed by nx·ny·n f64 values, row-major.
    pub fn write_binary<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        w.write_all(b"SLF1")?;
        w.write_all(&(self.nx as u32).to_le_bytes())?;
        w.write_all(&(self.ny as u32).to_le_bytes())?;
        w.write_all(&(self.n as u32).to_le_bytes())?;
        w.write_all(&self.spacing.to_le_bytes())?;
        w.write_all(&(self.origin[0] as f32).to_le_bytes())?;
        w.write_all(&(self.origin[1] as f32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; 32];
        r.read_exact(&mut header)?;
        if &header[0..4] != b"SLF1" {
            return Err(Error::parse("bad magic in field binary".to_string()));
        }
        let u32_at = |o: usize| u32::from_le_bytes(header[o..o + 4].try_into().unwrap()) as usize;
        let nx = u32_at(4);
        let ny = u32_at(8);
        let n = u32_at(12);
        let spacing = f64::from_le_bytes(header[16..24].try_into().unwrap());
        let ox = f32::from_le_bytes(header[24..28].try_into().unwrap()) as f64;
        let oy = f32::from_le_bytes(header[28..32].try_into().unwrap()) as f64;
        let count = nx
            .checked_mul(ny)
            .and_then(|c| c.checked_mul(n))
            .ok_or_else(|| Error::parse("field binary dimensions overflow".to_string()))?;
        let mut buf = vec![0u8; count * 8];
        r.read_exact(&mut buf)?;
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        SlipField::new(nx, ny, n, spacing, [ox, oy], values)
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    pub fn write_binary_file(&self, path: &Path) -> Result<()> {
        self.write_binary(std::fs::File::create(path)?)
    }
}

/// Boolean cell mask over a field's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    nx: usize,
    ny: usize,
    cells: Vec<bool>,
}

impl RegionMask {
    pub fn full(nx: usize, ny: usize) -> Self {
        RegionMask { nx, ny, cells: vec![true; nx * ny] }
    }

    pub fn empty(nx: usize, ny: usize) -> Self {
        RegionMask { nx, ny, cells: vec![false; nx * ny] }
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut cells = Vec::with_capacity(nx * ny);
        for iy in 0..ny {
            for ix in 0..nx {
                cells.push(f(ix, iy));
            }
        }
        RegionMask { nx, ny, cells }
    }

    /// Cells with index ranges [x0, x1) × [y0, y1).
    pub fn rect(nx: usize, ny: usize, x0: usize, x1: usize, y0: usize, y1: usize) -> Self {
        Self::from_fn(nx, ny, |ix, iy| ix >= x0 && ix < x1 && iy >= y0 && iy < y1)
    }

    #[inline]
    pub fn get(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.nx + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, v: bool) {
        self.cells[iy * self.nx + ix] = v;
    }

    pub fn nx(&self) -> usize {
        self.nx
    }
    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn is_disjoint(&self, other: &RegionMask) -> bool {
        self.cells.iter().zip(&other.cells).all(|(a, b)| !(*a && *b))
    }

    pub fn union(&self, other: &RegionMask) -> RegionMask {
        RegionMask {
            nx: self.nx,
            ny: self.ny,
            cells: self.cells.iter().zip(&other.cells).map(|(a, b)| *a || *b).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SlipField {
        SlipField::from_fn(5, 4, 2, 0.25, [1.0, -0.5], |c| vec![c[0] + c[1], c[0] * c[1]]).unwrap()
    }

    #[test]
    fn csv_roundtrip() {
        let f = sample();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let g = SlipField::read_csv(&buf[..], f.spacing(), f.origin()).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn binary_roundtrip_and_header() {
        let f = sample();
        let mut buf = Vec::new();
        f.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[0..4], b"SLF1");
        assert_eq!(buf.len(), 32 + 5 * 4 * 2 * 8);
        let g = SlipField::read_binary(&buf[..]).unwrap();
        assert_eq!(g.nx(), 5);
        assert_eq!(g.ny(), 4);
        assert_eq!(g.components(), 2);
        assert_eq!(g.values(), f.values());
        assert!(SlipField::read_binary(&buf[1..]).is_err());
    }

    #[test]
    fn geometry_and_masks() {
        let f = sample();
        assert_eq!(f.cell_center(0, 0), [1.125, -0.375]);
        let m = RegionMask::rect(5, 4, 1, 3, 0, 2);
        assert_eq!(m.count(), 4);
        let m2 = RegionMask::rect(5, 4, 3, 5, 0, 2);
        assert!(m.is_disjoint(&m2));
        assert_eq!(m.union(&m2).count(), 8);
        let mean = f.mean(Some(&RegionMask::full(5, 4)));
        let direct = f.mean(None);
        assert_eq!(mean, direct);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(SlipField::new(2, 2, 1, 0.0, [0.0, 0.0], vec![0.0; 4]).is_err());
        assert!(SlipField::new(2, 2, 1, 1.0, [0.0, 0.0], vec![0.0; 3]).is_err());
        assert!(SlipField::new(2, 2, 1, 1.0, [0.0, 0.0], vec![f64::NAN; 4]).is_err());
        assert!(SlipField::read_csv(&b"garbage"[..], 1.0, [0.0, 0.0]).is_err());
    }
}
