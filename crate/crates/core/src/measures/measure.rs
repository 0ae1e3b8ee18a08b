use serde::Serialize;

use crate::discretize::{Grid, ScalarField, TimeField};
use crate::error::{Error, Result};

/// Tolerance on `sum(weights) * cell_area - 1` for a measure to count as normalized.
pub const MASS_TOL: f64 = 1e-8;

/// A probability measure stored as a density per cell (cell-centred atoms of
/// mass `density * cell_area`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: Grid,
    density: Vec<f64>,
}

impl GridMeasure {
    /// Validates nonnegativity and unit mass.
    pub fn new(grid: Grid, density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.cells() {
            return Err(Error::GridMismatch);
        }
        if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("measure density must be finite and nonnegative"));
        }
        let mass = density.iter().sum::<f64>() * grid.cell_area();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
        Ok(Self { grid, density })
    }

    /// Builds a measure from nonnegative cell weights of any positive total,
    /// rescaling to unit mass.
    pub fn normalized(grid: Grid, mut density: Vec<f64>) -> Result<Self> {
        if density.len() != grid.cells() {
            return Err(Error::GridMismatch);
        }
        if density.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("measure density must be finite and nonnegative"));
        }
        let mass = density.iter().sum::<f64>() * grid.cell_area();
        if !(mass > 0.0) {
            return Err(Error::NotNormalized { mass });
        }
        density.iter_mut().for_each(|v| *v /= mass);
        Ok(Self { grid, density })
    }

    /// Midpoint quadrature of a continuous density, then renormalization.
    pub fn from_density_fn(grid: Grid, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        Self::normalized(grid, ScalarField::from_fn(grid, f).values)
    }

    pub fn uniform(grid: Grid) -> Self {
        let v = 1.0 / (grid.cells() as f64 * grid.cell_area());
        Self { grid, density: vec![v; grid.cells()] }
    }

    /// All mass in the cell containing `(x1, x2)`.
    pub fn point_mass(grid: Grid, x1: f64, x2: f64) -> Result<Self> {
        let k = grid.nearest_cell(x1, x2)?;
        let mut density = vec![0.0; grid.cells()];
        density[k] = 1.0 / grid.cell_area();
        Ok(Self { grid, density })
    }

    pub fn gaussian(grid: Grid, cx: f64, cy: f64, s: f64) -> Result<Self> {
        Self::mixture(grid, &[(1.0, cx, cy, s)])
    }

    /// Mixture of isotropic Gaussians given as `(weight, cx, cy, s)`.
    pub fn mixture(grid: Grid, parts: &[(f64, f64, f64, f64)]) -> Result<Self> {
        if parts.is_empty() || parts.iter().any(|p| !(p.0 > 0.0 && p.3 > 0.0)) {
            return Err(Error::invalid("mixture weights and widths must be positive"));
        }
        Self::from_density_fn(grid, |x1, x2| {
            parts
                .iter()
                .map(|&(w, cx, cy, s)| {
                    let r2 = (x1 - cx).powi(2) + (x2 - cy).powi(2);
                    w * (-r2 / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s)
                })
                .sum()
        })
    }

    /// Catalog names: `uniform`, `gaussian(cx,cy,s)` and
    /// `mixture(w,cx,cy,s; w,cx,cy,s; ...)`.
    pub fn parse(spec: &str, grid: Grid) -> Result<Self> {
        let s = spec.trim();
        if s == "uniform" {
            return Ok(Self::uniform(grid));
        }
        let args = |name: &str| -> Option<String> {
            let inner = s.strip_prefix(name)?.trim().strip_prefix('(')?.strip_suffix(')')?;
            Some(inner.to_string())
        };
        let numbers = |t: &str| -> Result<Vec<f64>> {
            t.split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad number '{x}' in {s}"))))
                .collect()
        };
        if let Some(a) = args("gaussian") {
            let v = numbers(&a)?;
            if v.len() != 3 {
                return Err(Error::invalid("gaussian needs (cx,cy,s)"));
            }
            return Self::gaussian(grid, v[0], v[1], v[2]);
        }
        if let Some(a) = args("mixture") {
            let mut parts = Vec::new();
            for comp in a.split(';') {
                let v = numbers(comp)?;
                if v.len() != 4 {
                    return Err(Error::invalid("mixture components are (w,cx,cy,s)"));
                }
                parts.push((v[0], v[1], v[2], v[3]));
            }
            return Self::mixture(grid, &parts);
        }
        Err(Error::invalid(format!("unknown initial measure '{s}'")))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    pub fn into_density(self) -> Vec<f64> {
        self.density
    }

    /// Cell masses `density * cell_area`.
    pub fn masses(&self) -> Vec<f64> {
        let a = self.grid.cell_area();
        self.density.iter().map(|v| v * a).collect()
    }

    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.grid.cell_area()
    }

    pub fn mean(&self) -> (f64, f64) {
        let a = self.grid.cell_area();
        let mut m = (0.0, 0.0);
        for (k, v) in self.density.iter().enumerate() {
            let (x1, x2) = self.grid.center(k);
            m.0 += v * a * x1;
            m.1 += v * a * x2;
        }
        m
    }

    /// `sum density * cell_area * |x|^2`.
    pub fn second_moment(&self) -> Result<f64> {
        let mass = self.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
        let a = self.grid.cell_area();
        Ok(self
            .density
            .iter()
            .enumerate()
            .map(|(k, v)| {
                let (x1, x2) = self.grid.center(k);
                v * a * (x1 * x1 + x2 * x2)
            })
            .sum())
    }

    /// Variance of the `x1` (axis 0) or `x2` (axis 1) marginal.
    pub fn marginal_variance(&self, axis: usize) -> f64 {
        let a = self.grid.cell_area();
        let coord = |k: usize| {
            let c = self.grid.center(k);
            if axis == 0 {
                c.0
            } else {
                c.1
            }
        };
        let mean: f64 = self.density.iter().enumerate().map(|(k, v)| v * a * coord(k)).sum();
        self.density.iter().enumerate().map(|(k, v)| v * a * (coord(k) - mean).powi(2)).sum()
    }

    /// Marginal masses per column (`axis = 0`) or per row (`axis = 1`).
    pub fn marginal(&self, axis: usize) -> Vec<f64> {
        let g = &self.grid;
        let a = g.cell_area();
        let mut out = vec![0.0; if axis == 0 { g.n1 } else { g.n2 }];
        for (k, v) in self.density.iter().enumerate() {
            let (i1, i2) = g.coords(k);
            out[if axis == 0 { i1 } else { i2 }] += v * a;
        }
        out
    }

    /// Mass in the outermost ring of cells.
    pub fn boundary_mass(&self) -> f64 {
        let a = self.grid.cell_area();
        self.density
            .iter()
            .enumerate()
            .filter(|(k, _)| self.grid.is_boundary_cell(*k))
            .map(|(_, v)| v * a)
            .sum()
    }

    /// Translates by whole cells; mass pushed across the edge is rejected.
    pub fn shift(&self, d1: isize, d2: isize) -> Result<Self> {
        let g = &self.grid;
        let mut out = vec![0.0; g.cells()];
        for (k, &v) in self.density.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let (i1, i2) = g.coords(k);
            let (j1, j2) = (i1 as isize + d1, i2 as isize + d2);
            if j1 < 0 || j2 < 0 || j1 >= g.n1 as isize || j2 >= g.n2 as isize {
                return Err(Error::invalid("shift moves mass off the grid"));
            }
            out[g.idx(j1 as usize, j2 as usize)] = v;
        }
        Ok(Self { grid: self.grid, density: out })
    }

    /// `(1 - theta) self + theta other`.
    pub fn mix(&self, other: &GridMeasure, theta: f64) -> Result<Self> {
        if !self.grid.same_space(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let density = self.density.iter().zip(&other.density).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        Ok(Self { grid: self.grid, density })
    }

    pub fn to_field(&self) -> ScalarField {
        ScalarField { grid: self.grid, values: self.density.clone() }
    }
}

/// One measure per time level `t_n`, `n = 0..=nt`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurePath {
    grid: Grid,
    slices: Vec<GridMeasure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PathSummary {
    pub mass_error: f64,
    pub second_moments: Vec<f64>,
    pub time_holder_ratio: f64,
}

impl MeasurePath {
    pub fn new(grid: Grid, slices: Vec<GridMeasure>) -> Result<Self> {
        if slices.len() != grid.nt + 1 {
            return Err(Error::invalid(format!("path has {} slices, grid expects {}", slices.len(), grid.nt + 1)));
        }
        if slices.iter().any(|m| !m.grid.same_space(&grid)) {
            return Err(Error::GridMismatch);
        }
        Ok(Self { grid, slices })
    }

    pub fn constant(grid: Grid, m: &GridMeasure) -> Result<Self> {
        Self::new(grid, vec![m.clone(); grid.nt + 1])
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn slices(&self) -> &[GridMeasure] {
        &self.slices
    }

    pub fn slice(&self, n: usize) -> &GridMeasure {
        &self.slices[n]
    }

    pub fn first(&self) -> &GridMeasure {
        &self.slices[0]
    }

    pub fn last(&self) -> &GridMeasure {
        &self.slices[self.grid.nt]
    }

    pub fn len(&self) -> usize {
        self.slices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }

    pub fn mix(&self, other: &MeasurePath, theta: f64) -> Result<Self> {
        if self.slices.len() != other.slices.len() {
            return Err(Error::GridMismatch);
        }
        let slices = self.slices.iter().zip(&other.slices).map(|(a, b)| a.mix(b, theta)).collect::<Result<_>>()?;
        Ok(Self { grid: self.grid, slices })
    }

    pub fn mass_error(&self) -> f64 {
        self.slices.iter().fold(0.0_f64, |m, s| m.max((s.mass() - 1.0).abs()))
    }

    pub fn second_moments(&self) -> Result<Vec<f64>> {
        self.slices.iter().map(|s| s.second_moment()).collect()
    }

    pub fn to_time_field(&self) -> TimeField {
        TimeField { grid: self.grid, slices: self.slices.iter().map(|s| s.density.clone()).collect() }
    }

    /// Reinterprets a time field of densities as a path (checks each slice).
    pub fn from_time_field(field: &TimeField) -> Result<Self> {
        let slices = field.slices.iter().map(|s| GridMeasure::new(field.grid, s.clone())).collect::<Result<_>>()?;
        Self::new(field.grid, slices)
    }
}
