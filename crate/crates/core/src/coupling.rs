//! Nonlocal monotone cost couplings `F(x, m) = f(x) + λ_F (ρ⋆ρ⋆m)(x)` and
//! `G(x, m) = g(x) + λ_G (ρ⋆ρ⋆m)(x)`, and empirical checks of their
//! monotonicity and Lipschitz properties.
//!
//! The kernel `ρ` is a truncated Gaussian applied as a separable, zero-padded
//! discrete convolution. The discrete operator `K` is symmetric, so
//! `∫(F(μ) − F(ν)) d(μ − ν) = λ_F ‖K(μ − ν)‖²` holds exactly on the grid.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::discretize::{io, Grid, ScalarField, TimeField};
use crate::error::{Error, Result};
use crate::geometry::CcMetric;
use crate::measures::{coarsen_to, d1, D1Mode, GridMeasure, MeasurePath};

/// Kernel support in units of the bandwidth.
pub const KERNEL_CUTOFF: f64 = 4.0;

/// Cell budget for the `d1` evaluations inside [`Coupling::verify_lipschitz`].
const LIPSCHITZ_D1_CELLS: usize = 1024;

/// A bounded, smooth state cost.
#[derive(Debug, Clone)]
pub enum BaseCost {
    Zero,
    /// `½ S tanh(|x|² / S)` with `S = (0.75 L)²`: quadratic near the origin,
    /// saturating towards the boundary so that all derivatives stay bounded.
    Quadratic { half_width: f64 },
    /// Tabulated values, bilinearly interpolated.
    Table { source: PathBuf, field: ScalarField },
    Custom { name: String, f: fn(f64, f64) -> f64 },
}

impl BaseCost {
    /// Parses `"zero"`, `"quadratic"` or `"table(path)"`. Tables are read
    /// from CSV files with trailing columns `x1,x2,value` covering `grid`.
    pub fn parse(spec: &str, grid: &Grid) -> Result<Self> {
        let s = spec.trim();
        match s {
            "zero" => Ok(BaseCost::Zero),
            "quadratic" => Ok(BaseCost::Quadratic { half_width: grid.half_width }),
            _ => {
                let path = s
                    .strip_prefix("table(")
                    .and_then(|r| r.strip_suffix(')'))
                    .ok_or_else(|| Error::invalid(format!("unknown base cost '{s}'")))?;
                Self::table(Path::new(path.trim()), grid)
            }
        }
    }

    pub fn table(path: &Path, grid: &Grid) -> Result<Self> {
        let field = io::read_density_csv(path, *grid)?;
        if !field.is_finite() {
            return Err(Error::invalid(format!("non-finite entries in {}", path.display())));
        }
        Ok(BaseCost::Table { source: path.to_path_buf(), field })
    }

    pub fn name(&self) -> String {
        match self {
            BaseCost::Zero => "zero".into(),
            BaseCost::Quadratic { .. } => "quadratic".into(),
            BaseCost::Table { source, .. } => format!("table({})", source.display()),
            BaseCost::Custom { name, .. } => name.clone(),
        }
    }

    pub fn eval(&self, x1: f64, x2: f64) -> f64 {
        match self {
            BaseCost::Zero => 0.0,
            BaseCost::Quadratic { half_width } => {
                let s = (0.75 * half_width).powi(2);
                0.5 * s * ((x1 * x1 + x2 * x2) / s).tanh()
            }
            BaseCost::Table { field, .. } => field.interpolate(x1, x2),
            BaseCost::Custom { f, .. } => f(x1, x2),
        }
    }

    pub fn sample(&self, grid: Grid) -> ScalarField {
        ScalarField::from_fn(grid, |x1, x2| self.eval(x1, x2))
    }
}

#[derive(Debug, Clone)]
pub struct Coupling {
    sigma: f64,
    lambda_f: f64,
    lambda_g: f64,
    base_f: BaseCost,
    base_g: BaseCost,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneReport {
    pub trials: usize,
    pub min_value: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LipschitzReport {
    pub trials: usize,
    pub skipped: usize,
    pub quotient: f64,
}

impl Coupling {
    pub fn new(sigma: f64, lambda_f: f64, lambda_g: f64, base_f: BaseCost, base_g: BaseCost) -> Result<Self> {
        if !(lambda_f >= 0.0) || !(lambda_g >= 0.0) {
            return Err(Error::AssumptionViolated {
                name: "H5".into(),
                detail: format!("coupling strengths must be nonnegative (lambda_F = {lambda_f}, lambda_G = {lambda_g})"),
            });
        }
        Self::new_unchecked(sigma, lambda_f, lambda_g, base_f, base_g)
    }

    /// Like [`Coupling::new`] but accepts negative strengths, which produce a
    /// non-monotone coupling. Useful for exercising [`Coupling::verify_monotone`].
    pub fn new_unchecked(sigma: f64, lambda_f: f64, lambda_g: f64, base_f: BaseCost, base_g: BaseCost) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
        }
        if !lambda_f.is_finite() || !lambda_g.is_finite() {
            return Err(Error::invalid("coupling strengths must be finite"));
        }
        Ok(Self { sigma, lambda_f, lambda_g, base_f, base_g })
    }

    /// `σ = 0.2 L`, unit strengths, quadratic running cost, no terminal base cost.
    pub fn standard(half_width: f64) -> Self {
        Self {
            sigma: 0.2 * half_width,
            lambda_f: 1.0,
            lambda_g: 1.0,
            base_f: BaseCost::Quadratic { half_width },
            base_g: BaseCost::Zero,
        }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn lambda_f(&self) -> f64 {
        self.lambda_f
    }

    pub fn lambda_g(&self) -> f64 {
        self.lambda_g
    }

    pub fn base_f(&self) -> &BaseCost {
        &self.base_f
    }

    pub fn base_g(&self) -> &BaseCost {
        &self.base_g
    }

    pub fn is_uncoupled(&self) -> bool {
        self.lambda_f == 0.0 && self.lambda_g == 0.0
    }

    /// One-dimensional kernel taps `ρ₁(j dx)·dx` for `|j dx| ≤ 4σ`,
    /// normalized to unit sum.
    fn taps(&self, dx: f64) -> Vec<f64> {
        let half = (KERNEL_CUTOFF * self.sigma / dx).floor() as usize;
        let mut w: Vec<f64> = (0..=2 * half)
            .map(|k| {
                let r = (k as f64 - half as f64) * dx / self.sigma;
                (-0.5 * r * r).exp()
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }

    /// `ρ ⋆ v` on the grid: separable, zero-padded outside the domain.
    pub fn smooth(&self, grid: &Grid, v: &[f64]) -> Vec<f64> {
        let t1 = self.taps(grid.dx1());
        let t2 = self.taps(grid.dx2());
        let (h1, h2) = (t1.len() / 2, t2.len() / 2);
        let (n1, n2) = (grid.n1, grid.n2);
        let mut tmp = vec![0.0; v.len()];
        for i in 0..n1 {
            for j in 0..n2 {
                let lo = j.saturating_sub(h2);
                let hi = (j + h2).min(n2 - 1);
                let mut acc = 0.0;
                for jj in lo..=hi {
                    acc += t2[jj + h2 - j] * v[i * n2 + jj];
                }
                tmp[i * n2 + j] = acc;
            }
        }
        let mut out = vec![0.0; v.len()];
        for i in 0..n1 {
            let lo = i.saturating_sub(h1);
            let hi = (i + h1).min(n1 - 1);
            let row = &mut out[i * n2..(i + 1) * n2];
            for ii in lo..=hi {
                let w = t1[ii + h1 - i];
                for (o, s) in row.iter_mut().zip(&tmp[ii * n2..(ii + 1) * n2]) {
                    *o += w * s;
                }
            }
        }
        out
    }

    /// Probability-normalized density `m` → mass weights → `ρ⋆ρ⋆m` as a
    /// density (the taps already carry the cell widths).
    fn interaction(&self, grid: &Grid, density: &[f64]) -> Vec<f64> {
        let once = self.smooth(grid, density);
        self.smooth(grid, &once)
    }

    fn combine(&self, base: &BaseCost, lambda: f64, m: &GridMeasure) -> Result<ScalarField> {
        let g = *m.grid();
        let mass = m.mass();
        if (mass - 1.0).abs() > crate::measures::MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
        let mut f = base.sample(g);
        if lambda != 0.0 {
            for (v, s) in f.values.iter_mut().zip(self.interaction(&g, m.density())) {
                *v += lambda * s;
            }
        }
        Ok(f)
    }

    pub fn eval_f(&self, m: &GridMeasure) -> Result<ScalarField> {
        self.combine(&self.base_f, self.lambda_f, m)
    }

    pub fn eval_g(&self, m: &GridMeasure) -> Result<ScalarField> {
        self.combine(&self.base_g, self.lambda_g, m)
    }

    /// `F(·, m_t)` at every time level of a path.
    pub fn eval_f_path(&self, path: &MeasurePath) -> Result<TimeField> {
        let slices = path.slices().iter().map(|m| self.eval_f(m).map(|f| f.values)).collect::<Result<Vec<_>>>()?;
        TimeField::new(*path.grid(), slices)
    }

    /// Upper bound of `‖F(·, m)‖_∞` valid for every probability density on `grid`.
    pub fn f_bound(&self, grid: Grid) -> f64 {
        self.base_f.sample(grid).sup_norm() + self.lambda_f.abs() * self.interaction_sup(&grid)
    }

    pub fn g_bound(&self, grid: Grid) -> f64 {
        self.base_g.sample(grid).sup_norm() + self.lambda_g.abs() * self.interaction_sup(&grid)
    }

    /// `sup_x sup_y (ρ⋆ρ)(x, y) / cell area`: the largest value the interaction
    /// term takes for a unit point mass, hence for any probability density.
    fn interaction_sup(&self, grid: &Grid) -> f64 {
        let peak = |dx: f64| {
            let t = self.taps(dx);
            t.iter().map(|v| v * v).sum::<f64>() / dx
        };
        peak(grid.dx1()) * peak(grid.dx2())
    }

    /// `∫(F(·,μ) − F(·,ν)) d(μ − ν)`.
    pub fn monotonicity_integral(&self, mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
        if !mu.grid().same_space(nu.grid()) {
            return Err(Error::GridMismatch);
        }
        let (fa, fb) = (self.eval_f(mu)?, self.eval_f(nu)?);
        let area = mu.grid().cell_area();
        Ok(fa
            .values
            .iter()
            .zip(&fb.values)
            .zip(mu.density().iter().zip(nu.density()))
            .map(|((a, b), (p, q))| (a - b) * (p - q))
            .sum::<f64>()
            * area)
    }

    /// Evaluates the monotonicity integral on `trials` random pairs of
    /// Gaussian mixtures.
    pub fn verify_monotone(&self, grid: Grid, trials: usize, seed: u64) -> Result<MonotoneReport> {
        if trials < 10 {
            return Err(Error::invalid("at least 10 trials are required"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(trials);
        for _ in 0..trials {
            let mu = random_mixture(grid, &mut rng)?;
            let nu = random_mixture(grid, &mut rng)?;
            values.push(self.monotonicity_integral(&mu, &nu)?);
        }
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        Ok(MonotoneReport { trials, min_value, values })
    }

    /// Largest observed `|F(x,μ) − F(y,ν)| / (d_C(x,y) + d₁(μ,ν))` over random
    /// nodes and mixtures. Pairs with a vanishing denominator are skipped.
    /// `d₁` is computed exactly on measures aggregated to at most 1024 cells.
    pub fn verify_lipschitz(&self, metric: &CcMetric, trials: usize, seed: u64) -> Result<LipschitzReport> {
        if trials < 10 {
            return Err(Error::invalid("at least 10 trials are required"));
        }
        let grid = *metric.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut quotient = 0.0_f64;
        let mut skipped = 0;
        for t in 0..trials {
            let mu = random_mixture(grid, &mut rng)?;
            // Every third trial keeps the measure fixed and probes x alone.
            let nu = if t % 3 == 0 { mu.clone() } else { random_mixture(grid, &mut rng)? };
            let a = rng.random_range(0..grid.cells());
            let b = rng.random_range(0..grid.cells());
            let dm = d1(&coarsen_to(&mu, LIPSCHITZ_D1_CELLS)?, &coarsen_to(&nu, LIPSCHITZ_D1_CELLS)?, D1Mode::Exact)?;
            let denom = metric.node_distance(a, b) + dm;
            if denom <= 0.0 {
                skipped += 1;
                continue;
            }
            let fa = self.eval_f(&mu)?.values[a];
            let fb = self.eval_f(&nu)?.values[b];
            quotient = quotient.max((fa - fb).abs() / denom);
        }
        Ok(LipschitzReport { trials, skipped, quotient })
    }
}

/// A mixture of one to three Gaussians with centres in the inner half of the
/// domain and widths between 0.1 L and 0.4 L.
pub fn random_mixture(grid: Grid, rng: &mut impl Rng) -> Result<GridMeasure> {
    let l = grid.half_width;
    let k = rng.random_range(1..=3);
    let comps: Vec<(f64, f64, f64, f64)> = (0..k)
        .map(|_| {
            (
                rng.random_range(0.2..1.0),
                rng.random_range(-0.5 * l..0.5 * l),
                rng.random_range(-0.5 * l..0.5 * l),
                rng.random_range(0.1 * l..0.4 * l),
            )
        })
        .collect();
    GridMeasure::mixture(grid, &comps)
}
