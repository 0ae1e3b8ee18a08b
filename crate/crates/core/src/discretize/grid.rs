use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell-centred lattice on `[-L, L]^2` together with a uniform time partition
/// of `[0, T]` into `nt` steps.
///
/// Cells are stored row-major in `(i1, i2)`: the flat index is `i1 * n2 + i2`,
/// so each contiguous block of `n2` values shares one `x1` coordinate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub half_width: f64,
    pub n1: usize,
    pub n2: usize,
    pub horizon: f64,
    pub nt: usize,
}

impl Grid {
    pub fn new(half_width: f64, n1: usize, n2: usize, horizon: f64, nt: usize) -> Result<Self> {
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::invalid(format!("half width must be positive, got {half_width}")));
        }
        if n1 < 2 || n2 < 2 {
            return Err(Error::invalid("grid needs at least two cells per axis"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) || nt == 0 {
            return Err(Error::invalid("time horizon and step count must be positive"));
        }
        Ok(Self { half_width, n1, n2, horizon, nt })
    }

    /// Spatial-only grid (unit horizon, one step) for geometry work.
    pub fn spatial(half_width: f64, n1: usize, n2: usize) -> Result<Self> {
        Self::new(half_width, n1, n2, 1.0, 1)
    }

    pub fn with_time(&self, horizon: f64, nt: usize) -> Result<Self> {
        Self::new(self.half_width, self.n1, self.n2, horizon, nt)
    }

    #[inline]
    pub fn dx1(&self) -> f64 {
        2.0 * self.half_width / self.n1 as f64
    }

    #[inline]
    pub fn dx2(&self) -> f64 {
        2.0 * self.half_width / self.n2 as f64
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.horizon / self.nt as f64
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.dx1() * self.dx2()
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn idx(&self, i1: usize, i2: usize) -> usize {
        i1 * self.n2 + i2
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    #[inline]
    pub fn x1(&self, i1: usize) -> f64 {
        (2.0 * i1 as f64 + 1.0 - self.n1 as f64) * self.half_width / self.n1 as f64
    }

    #[inline]
    pub fn x2(&self, i2: usize) -> f64 {
        (2.0 * i2 as f64 + 1.0 - self.n2 as f64) * self.half_width / self.n2 as f64
    }

    #[inline]
    pub fn center(&self, idx: usize) -> (f64, f64) {
        let (i1, i2) = self.coords(idx);
        (self.x1(i1), self.x2(i2))
    }

    #[inline]
    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt()
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        x1.abs() <= self.half_width && x2.abs() <= self.half_width
    }

    /// Index of the cell whose centre is nearest to `(x1, x2)`.
    pub fn nearest_cell(&self, x1: f64, x2: f64) -> Result<usize> {
        if !self.contains(x1, x2) || !x1.is_finite() || !x2.is_finite() {
            return Err(Error::OutOfDomain(x1, x2));
        }
        let i1 = (((x1 + self.half_width) / self.dx1()).floor() as usize).min(self.n1 - 1);
        let i2 = (((x2 + self.half_width) / self.dx2()).floor() as usize).min(self.n2 - 1);
        Ok(self.idx(i1, i2))
    }

    pub fn is_boundary_cell(&self, idx: usize) -> bool {
        let (i1, i2) = self.coords(idx);
        i1 == 0 || i2 == 0 || i1 + 1 == self.n1 || i2 + 1 == self.n2
    }

    pub fn same_space(&self, other: &Grid) -> bool {
        self.half_width == other.half_width && self.n1 == other.n1 && self.n2 == other.n2
    }
}
