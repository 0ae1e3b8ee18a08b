//! Euler–Maruyama simulation of the controlled degenerate diffusion
//!
//! ```text
//! dX¹ = α₁ ds + √2 dB¹
//! dX² = α₂ h(X¹) ds + √2 h(X¹) dB²
//! ```
//!
//! with feedback control `α = −∇_X u (+ δ)`, reflecting walls at the edge of
//! the truncated domain, and histogram binning onto the PDE grid.
//!
//! Every particle draws from its own ChaCha stream (`stream = particle id`),
//! so results are bit-identical regardless of how the ensemble is sharded.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::discretize::{Grid, ScalarField, TimeField};
use crate::error::{Error, Result};
use crate::geometry::VectorFieldFamily;
use crate::measures::{d1_auto, GridMeasure, MeasurePath};

/// SDE sub-steps per PDE time step.
pub const SUBSTEPS: usize = 4;

/// Number of particles whose trajectories are kept for dumping.
pub const TRAJECTORY_PARTICLES: usize = 100;

pub const MIN_PARTICLES: usize = 1000;

/// A smooth bounded control perturbation
/// `δ(t, x) = a (sin(k₁x₁ + k₂x₂ + φ), cos(k₂x₁ − k₁x₂ + φ + t))`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Perturbation {
    pub amplitude: f64,
    pub k1: f64,
    pub k2: f64,
    pub phase: f64,
}

impl Perturbation {
    pub fn eval(&self, t: f64, x1: f64, x2: f64) -> (f64, f64) {
        let a = self.amplitude;
        (
            a * (self.k1 * x1 + self.k2 * x2 + self.phase).sin(),
            a * (self.k2 * x1 - self.k1 * x2 + self.phase + t).cos(),
        )
    }

    /// Random wave numbers up to `2/L` and a random phase.
    pub fn random(rng: &mut impl Rng, amplitude: f64, half_width: f64) -> Self {
        let kmax = 2.0 / half_width;
        Self {
            amplitude,
            k1: rng.random_range(-kmax..kmax),
            k2: rng.random_range(-kmax..kmax),
            phase: rng.random_range(0.0..std::f64::consts::TAU),
        }
    }
}

/// Running and terminal costs to accumulate along each path.
#[derive(Clone, Copy)]
pub struct CostFields<'a> {
    pub running: &'a TimeField,
    pub terminal: &'a ScalarField,
}

#[derive(Debug, Clone)]
pub struct ParticleRun {
    pub n_particles: usize,
    pub seed: u64,
    pub dt_sde: f64,
    /// Binned empirical measure at every PDE time level.
    pub measures: Vec<GridMeasure>,
    pub final_states: Vec<(f64, f64)>,
    /// Per-particle realized cost, when cost fields were supplied.
    pub costs: Option<Vec<f64>>,
    /// `(t, id, x1, x2)` for the first [`TRAJECTORY_PARTICLES`] particles at
    /// every PDE time level.
    pub trajectories: Vec<(f64, usize, f64, f64)>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct CostEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub std_err: f64,
}

/// One Euler–Maruyama increment from a point where `h(X¹) = h`, given the
/// control `alpha` and standard normals `xi`.
#[inline]
pub fn sde_increment(h: f64, alpha: (f64, f64), dt: f64, xi: (f64, f64)) -> (f64, f64) {
    let s = (2.0 * dt).sqrt();
    (alpha.0 * dt + s * xi.0, h * (alpha.1 * dt + s * xi.1))
}

/// Mirror reflection into `[-l, l]`.
#[inline]
fn reflect(mut x: f64, l: f64) -> Option<f64> {
    if !x.is_finite() {
        return None;
    }
    // A handful of folds covers any increment of a few domain widths.
    for _ in 0..8 {
        if x > l {
            x = 2.0 * l - x;
        } else if x < -l {
            x = -2.0 * l - x;
        } else {
            return Some(x);
        }
    }
    None
}

fn sample_initial(m0: &GridMeasure, rng: &mut ChaCha8Rng, cdf: &[f64]) -> (f64, f64) {
    let g = m0.grid();
    let u: f64 = rng.random();
    let k = cdf.partition_point(|&c| c < u).min(g.cells() - 1);
    let (c1, c2) = g.center(k);
    let a: f64 = rng.random_range(-0.5..0.5);
    let b: f64 = rng.random_range(-0.5..0.5);
    (c1 + a * g.dx1(), c2 + b * g.dx2())
}

struct PathOutput {
    levels: Vec<(f64, f64)>,
    cost: f64,
}

#[allow(clippy::too_many_arguments)]
fn simulate_one(
    id: usize,
    seed: u64,
    h: &(dyn Fn(f64) -> f64 + Sync),
    m0: &GridMeasure,
    cdf: &[f64],
    feedback: &(TimeField, TimeField),
    perturbation: Option<&Perturbation>,
    cost: Option<CostFields<'_>>,
) -> Result<PathOutput> {
    let g = feedback.0.grid;
    let l = g.half_width;
    let dt = g.dt() / SUBSTEPS as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    let (mut x1, mut x2) = sample_initial(m0, &mut rng, cdf);
    let mut levels = Vec::with_capacity(g.nt + 1);
    levels.push((x1, x2));
    let mut acc = 0.0;
    for n in 0..g.nt {
        for s in 0..SUBSTEPS {
            let t = g.time(n) + s as f64 * dt;
            let lvl = feedback.0.nearest_level(t);
            let f1 = &feedback.0.slices[lvl];
            let f2 = &feedback.1.slices[lvl];
            let mut a1 = -interp(&g, f1, x1, x2);
            let mut a2 = -interp(&g, f2, x1, x2);
            if let Some(p) = perturbation {
                let d = p.eval(t, x1, x2);
                a1 += d.0;
                a2 += d.1;
            }
            if let Some(c) = cost {
                acc += (0.5 * (a1 * a1 + a2 * a2) + interp(&g, &c.running.slices[lvl], x1, x2)) * dt;
            }
            let xi = (rng.sample(StandardNormal), rng.sample(StandardNormal));
            let (d1, d2) = sde_increment(h(x1), (a1, a2), dt, xi);
            x1 = reflect(x1 + d1, l).ok_or(Error::FeedbackOutOfDomain)?;
            x2 = reflect(x2 + d2, l).ok_or(Error::FeedbackOutOfDomain)?;
        }
        levels.push((x1, x2));
    }
    if let Some(c) = cost {
        acc += c.terminal.interpolate(x1, x2);
    }
    Ok(PathOutput { levels, cost: acc })
}

#[inline]
fn interp(g: &Grid, values: &[f64], x1: f64, x2: f64) -> f64 {
    let (i1, w1) = crate::discretize::bracket(x1, g.half_width, g.dx1(), g.n1);
    let (i2, w2) = crate::discretize::bracket(x2, g.half_width, g.dx2(), g.n2);
    let v = |a: usize, b: usize| values[g.idx(a, b)];
    let lo = v(i1, i2) * (1.0 - w2) + v(i1, i2 + 1) * w2;
    let hi = v(i1 + 1, i2) * (1.0 - w2) + v(i1 + 1, i2 + 1) * w2;
    lo * (1.0 - w1) + hi * w1
}

/// Runs `n` particles from `m0` under the control `−feedback (+ δ)`, where
/// `feedback = ∇_X u`. Costs are accumulated when `cost` is given.
///
/// `h` is taken as a plain function so that degenerate fixtures (such as
/// `h ≡ 0`) that are not valid vector field families can be simulated.
pub fn run_ensemble(
    h: &(dyn Fn(f64) -> f64 + Sync),
    m0: &GridMeasure,
    feedback: &(TimeField, TimeField),
    n: usize,
    seed: u64,
    perturbation: Option<&Perturbation>,
    cost: Option<CostFields<'_>>,
) -> Result<ParticleRun> {
    let g = feedback.0.grid;
    if feedback.1.grid != g || !m0.grid().same_space(&g) {
        return Err(Error::GridMismatch);
    }
    if let Some(c) = cost {
        if c.running.grid != g || !c.terminal.grid.same_space(&g) {
            return Err(Error::GridMismatch);
        }
    }
    if n < MIN_PARTICLES {
        return Err(Error::invalid(format!("need at least {MIN_PARTICLES} particles, got {n}")));
    }
    let area = g.cell_area();
    let mut cdf = Vec::with_capacity(g.cells());
    let mut s = 0.0;
    for v in m0.density() {
        s += v * area;
        cdf.push(s);
    }
    cdf.iter_mut().for_each(|c| *c /= s);

    let paths: Vec<PathOutput> = (0..n)
        .into_par_iter()
        .map(|id| simulate_one(id, seed, h, m0, &cdf, feedback, perturbation, cost))
        .collect::<Result<_>>()?;

    let weight = 1.0 / (n as f64 * area);
    let mut measures = Vec::with_capacity(g.nt + 1);
    for lvl in 0..=g.nt {
        let mut d = vec![0.0; g.cells()];
        for p in &paths {
            let (x1, x2) = p.levels[lvl];
            d[g.nearest_cell(x1, x2)?] += weight;
        }
        measures.push(GridMeasure::normalized(g, d)?);
    }
    let mut trajectories = Vec::new();
    for lvl in 0..=g.nt {
        for (id, p) in paths.iter().take(TRAJECTORY_PARTICLES).enumerate() {
            trajectories.push((g.time(lvl), id, p.levels[lvl].0, p.levels[lvl].1));
        }
    }
    Ok(ParticleRun {
        n_particles: n,
        seed,
        dt_sde: g.dt() / SUBSTEPS as f64,
        final_states: paths.iter().map(|p| p.levels[g.nt]).collect(),
        costs: cost.map(|_| paths.iter().map(|p| p.cost).collect()),
        measures,
        trajectories,
    })
}

/// Binned empirical measures of the uncontrolled-by-cost simulation.
pub fn simulate_sde(
    vf: &VectorFieldFamily,
    m0: &GridMeasure,
    feedback: &(TimeField, TimeField),
    n: usize,
    seed: u64,
) -> Result<ParticleRun> {
    run_ensemble(&|x| vf.h(x), m0, feedback, n, seed, None, None)
}

/// Mean realized cost `∫ ½|α|² + F ds + G(X_T)` of a run made with cost fields.
pub fn empirical_cost(run: &ParticleRun) -> Result<CostEstimate> {
    let costs = run.costs.as_ref().ok_or_else(|| Error::invalid("run was made without cost fields"))?;
    let n = costs.len() as f64;
    let mean = costs.iter().sum::<f64>() / n;
    let var = costs.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(CostEstimate { mean, std_err: (var / n).sqrt() })
}

/// `d₁` between the empirical measure and a PDE path at the given levels.
pub fn d1_against_path(run: &ParticleRun, path: &MeasurePath, levels: &[usize]) -> Result<Vec<f64>> {
    levels
        .iter()
        .map(|&n| {
            let emp = run.measures.get(n).ok_or_else(|| Error::invalid(format!("no level {n}")))?;
            d1_auto(emp, path.slice(n))
        })
        .collect()
}

/// Writes `t,id,x1,x2` rows for the stored trajectories.
pub fn write_trajectories(path: &Path, run: &ParticleRun) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "t,id,x1,x2")?;
    for (t, id, x1, x2) in &run.trajectories {
        writeln!(f, "{t},{id},{x1},{x2}")?;
    }
    f.flush()?;
    Ok(())
}
