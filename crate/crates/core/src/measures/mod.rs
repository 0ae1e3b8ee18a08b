//! Grid probability measures, the Kantorovich–Rubinstein distance `d1`, and
//! time-regularity diagnostics of measure paths.

mod measure;
mod simplex;
mod sinkhorn;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use measure::{GridMeasure, MeasurePath, PathSummary, MASS_TOL};
pub use simplex::{transport_cost, Site};

/// Largest grid on which exact transport is attempted.
pub const EXACT_MAX_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum D1Mode {
    Exact,
    Entropic,
}

/// Positive and negative parts of `mu - nu` as point masses, each normalized
/// to unit total, together with the common mass they carried.
fn cancelled_parts(mu: &GridMeasure, nu: &GridMeasure) -> (Vec<Site>, Vec<Site>, f64) {
    let g = mu.grid();
    let area = g.cell_area();
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (k, (a, b)) in mu.density().iter().zip(nu.density()).enumerate() {
        let d = (a - b) * area;
        if d == 0.0 {
            continue;
        }
        let (x, y) = g.center(k);
        if d > 0.0 {
            pos.push(Site { x, y, mass: d });
        } else {
            neg.push(Site { x, y, mass: -d });
        }
    }
    let sp: f64 = pos.iter().map(|s| s.mass).sum();
    let sn: f64 = neg.iter().map(|s| s.mass).sum();
    pos.iter_mut().for_each(|s| s.mass /= sp);
    neg.iter_mut().for_each(|s| s.mass /= sn);
    (pos, neg, 0.5 * (sp + sn))
}

fn check_pair(mu: &GridMeasure, nu: &GridMeasure) -> Result<()> {
    if !mu.grid().same_space(nu.grid()) {
        return Err(Error::GridMismatch);
    }
    for m in [mu, nu] {
        let mass = m.mass();
        if (mass - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized { mass });
        }
    }
    Ok(())
}

/// Kantorovich–Rubinstein distance with Euclidean ground cost between two
/// measures on the same grid.
///
/// Both modes work on the cancelled parts `(mu - nu)^±`, which leaves the
/// distance unchanged and removes the common mass from the problem.
pub fn d1(mu: &GridMeasure, nu: &GridMeasure, mode: D1Mode) -> Result<f64> {
    check_pair(mu, nu)?;
    // Canonical argument order makes the result bitwise symmetric.
    let (mu, nu) = if mu.density() > nu.density() { (nu, mu) } else { (mu, nu) };
    let cells = mu.grid().cells();
    if mode == D1Mode::Exact && cells > EXACT_MAX_CELLS {
        return Err(Error::TooLarge { cells, max: EXACT_MAX_CELLS });
    }
    let (pos, neg, common) = cancelled_parts(mu, nu);
    if pos.is_empty() || neg.is_empty() || common <= 0.0 {
        return Ok(0.0);
    }
    match mode {
        D1Mode::Exact => {
            let c = transport_cost(&pos, &neg)
                .map_err(|pivots| Error::SolverDiverged { iterations: pivots, residual: f64::NAN })?;
            Ok(common * c)
        }
        D1Mode::Entropic => {
            let l = mu.grid().half_width;
            let (e0, e1) = (0.1 * l, 0.001 * l);
            let ab = sinkhorn::entropic_plan_cost(&pos, &neg, e0, e1);
            let aa = sinkhorn::entropic_plan_cost(&pos, &pos, e0, e1);
            let bb = sinkhorn::entropic_plan_cost(&neg, &neg, e0, e1);
            Ok(common * (ab - 0.5 * (aa + bb)).max(0.0))
        }
    }
}

/// Exact `d1` when the grid is small enough, otherwise exact `d1` between
/// block-aggregated copies on the finest grid with at most
/// [`EXACT_MAX_CELLS`] cells (error at most one coarse cell diagonal).
pub fn d1_auto(mu: &GridMeasure, nu: &GridMeasure) -> Result<f64> {
    check_pair(mu, nu)?;
    if mu.grid().cells() <= EXACT_MAX_CELLS {
        return d1(mu, nu, D1Mode::Exact);
    }
    let (a, b) = (coarsen(mu)?, coarsen(nu)?);
    d1(&a, &b, D1Mode::Exact)
}

/// `sup_n d1(a_n, b_n)` over two paths on the same grid.
pub fn sup_d1(a: &MeasurePath, b: &MeasurePath) -> Result<f64> {
    sup_d1_coarse(a, b, EXACT_MAX_CELLS)
}

/// [`sup_d1`] with every slice pair aggregated to at most `max_cells`
/// cells first. Cheaper, and within one coarse cell diagonal of the
/// fine-grid value.
pub fn sup_d1_coarse(a: &MeasurePath, b: &MeasurePath, max_cells: usize) -> Result<f64> {
    if a.len() != b.len() || !a.grid().same_space(b.grid()) {
        return Err(Error::GridMismatch);
    }
    let mut best = 0.0_f64;
    for (x, y) in a.slices().iter().zip(b.slices()) {
        if x.density() == y.density() {
            continue;
        }
        let (cx, cy) = (coarsen_to(x, max_cells)?, coarsen_to(y, max_cells)?);
        best = best.max(d1(&cx, &cy, D1Mode::Exact)?);
    }
    Ok(best)
}

/// Moves the mass of every cell to the coarse cell containing its centre,
/// using the smallest integer coarsening factor that brings the grid to at
/// most [`EXACT_MAX_CELLS`] cells.
pub fn coarsen(m: &GridMeasure) -> Result<GridMeasure> {
    coarsen_to(m, EXACT_MAX_CELLS)
}

/// [`coarsen`] with an explicit cell budget (at least 4).
pub fn coarsen_to(m: &GridMeasure, max_cells: usize) -> Result<GridMeasure> {
    let g = *m.grid();
    if g.cells() <= max_cells {
        return Ok(m.clone());
    }
    if max_cells < 4 {
        return Err(Error::invalid("coarsening budget must allow a 2x2 grid"));
    }
    let mut f = 2;
    while (g.n1 / f).max(2) * (g.n2 / f).max(2) > max_cells {
        f += 1;
    }
    let cg = crate::discretize::Grid::new(g.half_width, (g.n1 / f).max(2), (g.n2 / f).max(2), g.horizon, g.nt)?;
    let mut d = vec![0.0; cg.cells()];
    for (k, v) in m.density().iter().enumerate() {
        let (x1, x2) = g.center(k);
        d[cg.nearest_cell(x1, x2)?] += v * g.cell_area();
    }
    d.iter_mut().for_each(|v| *v /= cg.cell_area());
    GridMeasure::normalized(cg, d)
}

/// Lags (in steps) `nt / 2^j` for `j = 0..=min(6, log2 nt)`.
fn dyadic_lags(nt: usize) -> Vec<usize> {
    let mut lags = Vec::new();
    let mut j = 0;
    while j <= 6 && nt >> j >= 1 {
        let lag = nt >> j;
        if lags.last() != Some(&lag) {
            lags.push(lag);
        }
        j += 1;
    }
    lags
}

/// Cell budget of the slices compared by [`time_holder_ratio`].
pub const HOLDER_CELLS: usize = 1024;

/// `max d1(m_s, m_t) / sqrt|t - s|` over consecutive pairs at dyadic lags
/// `T / 2^j`, `j = 0..=6` (limited by the number of steps). Slices are
/// aggregated to at most [`HOLDER_CELLS`] cells first.
pub fn time_holder_ratio(path: &MeasurePath) -> Result<f64> {
    time_holder_ratio_with(path, HOLDER_CELLS)
}

pub fn time_holder_ratio_with(path: &MeasurePath, max_cells: usize) -> Result<f64> {
    let g = path.grid();
    if path.len() < 3 {
        return Err(Error::invalid("need at least three time slices"));
    }
    let coarse = path.slices().iter().map(|m| coarsen_to(m, max_cells)).collect::<Result<Vec<_>>>()?;
    let mut best = 0.0_f64;
    for lag in dyadic_lags(g.nt) {
        let mut k = 0;
        while k + lag <= g.nt {
            let d = d1(&coarse[k], &coarse[k + lag], D1Mode::Exact)?;
            let dt = (g.time(k + lag) - g.time(k)).sqrt();
            best = best.max(d / dt);
            k += lag;
        }
    }
    Ok(best)
}

pub fn summarize(path: &MeasurePath) -> Result<PathSummary> {
    Ok(PathSummary {
        mass_error: path.mass_error(),
        second_moments: path.second_moments()?,
        time_holder_ratio: time_holder_ratio(path)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;

    #[test]
    fn identical_measures_are_at_distance_zero() {
        let g = Grid::spatial(1.0, 12, 12).unwrap();
        let m = GridMeasure::gaussian(g, 0.2, -0.1, 0.3).unwrap();
        assert_eq!(d1(&m, &m, D1Mode::Exact).unwrap(), 0.0);
        assert_eq!(d1(&m, &m, D1Mode::Entropic).unwrap(), 0.0);
    }

    #[test]
    fn two_point_masses() {
        let g = Grid::spatial(1.0, 20, 20).unwrap();
        let a = GridMeasure::point_mass(g, 0.0, 0.0).unwrap();
        let b = GridMeasure::point_mass(g, 0.5, 0.0).unwrap();
        let d = d1(&a, &b, D1Mode::Exact).unwrap();
        assert!((d - 0.5).abs() <= g.dx1(), "{d}");
    }

    #[test]
    fn half_planes_are_one_apart() {
        // Oracle: both measures are uniform in x2 and the x1-marginals are
        // uniform on [-1,0] and [0,1]; the optimal plan translates by 1.
        let g = Grid::spatial(1.0, 16, 16).unwrap();
        let left = GridMeasure::from_density_fn(g, |x1, _| if x1 < 0.0 { 1.0 } else { 0.0 }).unwrap();
        let right = GridMeasure::from_density_fn(g, |x1, _| if x1 > 0.0 { 1.0 } else { 0.0 }).unwrap();
        let e = d1(&left, &right, D1Mode::Exact).unwrap();
        assert!((e - 1.0).abs() < 1e-10, "{e}");
        let s = d1(&left, &right, D1Mode::Entropic).unwrap();
        assert!((s - 1.0).abs() < 0.02, "{s}");
    }

    #[test]
    fn exact_mode_rejects_large_grids() {
        let g = Grid::spatial(1.0, 65, 64).unwrap();
        let m = GridMeasure::uniform(g);
        assert!(matches!(d1(&m, &m, D1Mode::Exact), Err(Error::TooLarge { .. })));
        assert_eq!(d1_auto(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn coarsened_distance_stays_close() {
        let g = Grid::spatial(1.0, 32, 32).unwrap();
        let a = GridMeasure::gaussian(g, -0.3, 0.0, 0.2).unwrap();
        let b = GridMeasure::gaussian(g, 0.3, 0.1, 0.2).unwrap();
        let fine = d1(&a, &b, D1Mode::Exact).unwrap();
        let coarse = d1(&coarsen_to(&a, 256).unwrap(), &coarsen_to(&b, 256).unwrap(), D1Mode::Exact).unwrap();
        // One coarse cell diagonal: 2/16 * sqrt 2.
        assert!((fine - coarse).abs() < 0.125 * 2f64.sqrt(), "{fine} vs {coarse}");
        assert!((fine - 0.6f64.hypot(0.1)).abs() < 0.05, "{fine}");
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let a = GridMeasure::uniform(Grid::spatial(1.0, 8, 8).unwrap());
        let b = GridMeasure::uniform(Grid::spatial(1.0, 8, 10).unwrap());
        assert!(matches!(d1(&a, &b, D1Mode::Exact), Err(Error::GridMismatch)));
    }

    #[test]
    fn dyadic_lag_ladder() {
        assert_eq!(dyadic_lags(64), vec![64, 32, 16, 8, 4, 2, 1]);
        assert_eq!(dyadic_lags(256), vec![256, 128, 64, 32, 16, 8, 4]);
        assert_eq!(dyadic_lags(4), vec![4, 2, 1]);
    }

    #[test]
    fn constant_path_has_zero_ratio() {
        let g = Grid::new(1.0, 8, 8, 1.0, 4).unwrap();
        let p = MeasurePath::constant(g, &GridMeasure::gaussian(g, 0.0, 0.0, 0.4).unwrap()).unwrap();
        assert_eq!(time_holder_ratio(&p).unwrap(), 0.0);
    }
}
