//! Uniform periodic lattices on the flat torus and functions sampled on them.
//!
//! Node `j` of an axis sits at `j·h` with `h = 1/n`; indices wrap modulo `n`.
//! Two-dimensional grids are stored row-major with axis 0 varying slowest.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest per-axis resolution accepted for 2D grids unless overridden.
pub const MAX_N_2D: usize = 512;

/// Minimum resolution per axis.
pub const MIN_N: usize = 8;

/// A point of the torus. Only the first `dim` entries are meaningful.
pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    n: usize,
}

impl Grid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        Self::with_limit(dim, n, MAX_N_2D)
    }

    /// Same as [`Grid::new`] with a caller-chosen 2D size guard.
    pub fn with_limit(dim: usize, n: usize, max_n_2d: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if n < MIN_N {
            return Err(Error::Config(format!("grid needs n >= {MIN_N}, got {n}")));
        }
        if dim == 2 && n > max_n_2d {
            return Err(Error::Config(format!(
                "2D grid limited to n <= {max_n_2d} per axis, got {n}"
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn one_d(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Per-axis integer index of a flat node index.
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        match self.dim {
            1 => [idx, 0],
            _ => [idx / self.n, idx % self.n],
        }
    }

    pub fn flat_index(&self, mi: [usize; 2]) -> usize {
        match self.dim {
            1 => mi[0],
            _ => mi[0] * self.n + mi[1],
        }
    }

    pub fn coords(&self, idx: usize) -> Point {
        let mi = self.multi_index(idx);
        let h = self.h();
        match self.dim {
            1 => [mi[0] as f64 * h, 0.0],
            _ => [mi[0] as f64 * h, mi[1] as f64 * h],
        }
    }

    /// Flat index of the neighbour `offset` nodes away along `axis`, with wrap-around.
    pub fn neighbor(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let mut mi = self.multi_index(idx);
        let n = self.n as isize;
        mi[axis] = (mi[axis] as isize + offset).rem_euclid(n) as usize;
        self.flat_index(mi)
    }

    /// Nearest node to a torus point.
    pub fn nearest_node(&self, x: &Point) -> usize {
        let n = self.n as f64;
        let mut mi = [0usize; 2];
        for k in 0..self.dim {
            let r = (wrap_unit(x[k]) * n).round() as usize;
            mi[k] = r % self.n;
        }
        self.flat_index(mi)
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self != other {
            return Err(Error::Structure(format!(
                "grid mismatch: {}D n={} vs {}D n={}",
                self.dim, self.n, other.dim, other.n
            )));
        }
        Ok(())
    }
}

/// Reduce a coordinate to `[0, 1)`.
pub fn wrap_unit(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Periodic distance between two torus points.
pub fn torus_distance(dim: usize, a: &Point, b: &Point) -> f64 {
    let mut s = 0.0;
    for k in 0..dim {
        let d = wrap_unit(a[k] - b[k]);
        let d = d.min(1.0 - d);
        s += d * d;
    }
    s.sqrt()
}

/// Values of one function on every node of a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn from_values(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Structure(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Range(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.len()],
        }
    }

    /// Nodewise evaluation of `f`.
    pub fn sample<F>(grid: Grid, f: F) -> Result<Self>
    where
        F: Fn(&Point) -> f64,
    {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.coords(i))).collect();
        Self::from_values(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn add_scalar(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Oscillation `max - min`.
    pub fn osc(&self) -> f64 {
        self.max() - self.min()
    }

    pub fn linf_distance(&self, other: &GridFunction) -> Result<f64> {
        self.grid.check_same(&other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }

    /// Periodic shift by `k` nodes along `axis`: result(j) = self(j + k).
    pub fn shift(&self, axis: usize, k: isize) -> Self {
        let values = (0..self.grid.len())
            .map(|i| self.values[self.grid.neighbor(i, axis, k)])
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Backward and forward difference quotients along every axis.
    pub fn one_sided_diffs(&self) -> Vec<(GridFunction, GridFunction)> {
        let h = self.grid.h();
        (0..self.grid.dim)
            .map(|axis| {
                let mut back = Vec::with_capacity(self.values.len());
                let mut fwd = Vec::with_capacity(self.values.len());
                for i in 0..self.grid.len() {
                    let prev = self.values[self.grid.neighbor(i, axis, -1)];
                    let next = self.values[self.grid.neighbor(i, axis, 1)];
                    back.push((self.values[i] - prev) / h);
                    fwd.push((next - self.values[i]) / h);
                }
                (
                    GridFunction {
                        grid: self.grid,
                        values: back,
                    },
                    GridFunction {
                        grid: self.grid,
                        values: fwd,
                    },
                )
            })
            .collect()
    }

    /// Largest one-sided difference quotient in absolute value.
    pub fn lipschitz(&self) -> f64 {
        self.one_sided_diffs()
            .iter()
            .map(|(_, fwd)| fwd.sup_norm())
            .fold(0.0, f64::max)
    }

    /// Linear (1D) or bilinear (2D) periodic interpolation.
    pub fn interpolate(&self, x: &Point) -> f64 {
        let n = self.grid.n;
        let mut base = [0usize; 2];
        let mut frac = [0.0; 2];
        for k in 0..self.grid.dim {
            let s = wrap_unit(x[k]) * n as f64;
            let f = s.floor();
            base[k] = (f as usize) % n;
            frac[k] = s - f;
        }
        let at = |a: usize, b: usize| {
            let mi = [(base[0] + a) % n, (base[1] + b) % n];
            self.values[self.grid.flat_index(mi)]
        };
        match self.grid.dim {
            1 => (1.0 - frac[0]) * at(0, 0) + frac[0] * at(1, 0),
            _ => {
                let lo = (1.0 - frac[1]) * at(0, 0) + frac[1] * at(0, 1);
                let hi = (1.0 - frac[1]) * at(1, 0) + frac[1] * at(1, 1);
                (1.0 - frac[0]) * lo + frac[0] * hi
            }
        }
    }

    pub fn at(&self, x: &Point) -> f64 {
        self.values[self.grid.nearest_node(x)]
    }

    /// CSV snapshot: `index,x[,y],value`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        match self.grid.dim {
            1 => wtr.write_record(["index", "x", "value"])?,
            _ => wtr.write_record(["index", "x", "y", "value"])?,
        }
        for (i, v) in self.values.iter().enumerate() {
            let c = self.grid.coords(i);
            let mut rec = vec![i.to_string(), format!("{:e}", c[0])];
            if self.grid.dim == 2 {
                rec.push(format!("{:e}", c[1]));
            }
            rec.push(format!("{v:e}"));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let headers = rdr.headers()?.clone();
        let dim = if headers.len() == 4 { 2 } else { 1 };
        let mut values = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let v: f64 = rec[rec.len() - 1]
                .parse()
                .map_err(|e| Error::Structure(format!("bad csv value: {e}")))?;
            values.push(v);
        }
        let n = match dim {
            1 => values.len(),
            _ => (values.len() as f64).sqrt().round() as usize,
        };
        Self::from_values(Grid::new(dim, n)?, values)
    }

    /// Binary snapshot: `u32 dim`, `u32 n`, then row-major little-endian `f64` values.
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(&(self.grid.dim as u32).to_le_bytes())?;
        w.write_all(&(self.grid.n as u32).to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let dim = u32::from_le_bytes(word) as usize;
        r.read_exact(&mut word)?;
        let n = u32::from_le_bytes(word) as usize;
        let grid = Grid::new(dim, n)?;
        let mut values = Vec::with_capacity(grid.len());
        let mut buf = [0u8; 8];
        for _ in 0..grid.len() {
            r.read_exact(&mut buf)?;
            values.push(f64::from_le_bytes(buf));
        }
        Self::from_values(grid, values)
    }

    pub fn save_binary(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }

    pub fn load_binary(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_binary(f)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }
}
