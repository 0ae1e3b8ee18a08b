use crate::discretize::Grid;
use crate::error::{Error, Result};

/// One real value per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(Error::invalid(format!(
                "field has {} values for {} cells",
                values.len(),
                grid.cells()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.cells()] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x1, x2)` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        let values = (0..grid.cells())
            .map(|k| {
                let (x1, x2) = grid.center(k);
                f(x1, x2)
            })
            .collect();
        Self { grid, values }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Area-weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.cell_area()
    }

    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    /// Bilinear interpolation between cell centres, clamped to the outermost
    /// centres near the boundary.
    pub fn interpolate(&self, x1: f64, x2: f64) -> f64 {
        let g = &self.grid;
        let (i1, w1) = bracket(x1, g.half_width, g.dx1(), g.n1);
        let (i2, w2) = bracket(x2, g.half_width, g.dx2(), g.n2);
        let v = |a: usize, b: usize| self.values[g.idx(a, b)];
        let lo = v(i1, i2) * (1.0 - w2) + v(i1, i2 + 1) * w2;
        let hi = v(i1 + 1, i2) * (1.0 - w2) + v(i1 + 1, i2 + 1) * w2;
        lo * (1.0 - w1) + hi * w1
    }
}

/// Lower bracketing centre index and fractional weight along one axis.
#[inline]
pub(crate) fn bracket(x: f64, half_width: f64, dx: f64, n: usize) -> (usize, f64) {
    let s = ((x + half_width) / dx - 0.5).clamp(0.0, (n - 1) as f64);
    let i = (s.floor() as usize).min(n - 2);
    (i, s - i as f64)
}

/// A scalar field at every time level `t_n = n dt`, `n = 0..=nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeField {
    pub grid: Grid,
    pub slices: Vec<Vec<f64>>,
}

impl TimeField {
    pub fn new(grid: Grid, slices: Vec<Vec<f64>>) -> Result<Self> {
        if slices.len() != grid.nt + 1 {
            return Err(Error::invalid(format!(
                "time field has {} slices, grid expects {}",
                slices.len(),
                grid.nt + 1
            )));
        }
        if slices.iter().any(|s| s.len() != grid.cells()) {
            return Err(Error::invalid("time slice length does not match the grid"));
        }
        Ok(Self { grid, slices })
    }

    pub fn constant_in_time(field: &ScalarField) -> Self {
        Self { grid: field.grid, slices: vec![field.values.clone(); field.grid.nt + 1] }
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, slices: vec![vec![0.0; grid.cells()]; grid.nt + 1] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64, f64, f64) -> f64) -> Self {
        let slices = (0..=grid.nt)
            .map(|n| {
                let t = grid.time(n);
                (0..grid.cells())
                    .map(|k| {
                        let (x1, x2) = grid.center(k);
                        f(t, x1, x2)
                    })
                    .collect()
            })
            .collect();
        Self { grid, slices }
    }

    pub fn slice(&self, n: usize) -> ScalarField {
        ScalarField { grid: self.grid, values: self.slices[n].clone() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.slices.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.slices.iter().flatten().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.slices.iter().flatten().all(|v| v.is_finite())
    }

    pub fn max_abs_diff(&self, other: &TimeField) -> f64 {
        self.slices
            .iter()
            .flatten()
            .zip(other.slices.iter().flatten())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()))
    }

    /// Index of the time level nearest to `t`.
    pub fn nearest_level(&self, t: f64) -> usize {
        ((t / self.grid.dt()).round().max(0.0) as usize).min(self.grid.nt)
    }
}
