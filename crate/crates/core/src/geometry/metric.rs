use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use crate::discretize::Grid;
use crate::error::{Error, Result};
use crate::geometry::VectorFieldFamily;

/// Default lower bound on `|h|` in the x2 edge costs; keeps the graph
/// connected across the zero set of `h`.
pub const H_FLOOR: f64 = 1e-6;

/// Shortest-path approximation of the Carnot–Carathéodory distance on the
/// cell centres of a spatial grid.
///
/// A step that moves `d1` cells in `x1` and `d2` cells in `x2` costs
/// `sqrt((d1 dx1)^2 + (d2 dx2 / max(|h|, floor))^2)`, with `h` taken at the
/// cell centre for vertical steps and at the column midpoint otherwise. The
/// default stencil is the 8-neighbour one (`reach = 1`); a larger `reach`
/// adds the steps `(±1, ±k)` for `k <= reach`, which removes most of the
/// direction-quantisation error where `|h|` is large.
#[derive(Debug, Clone)]
pub struct CcMetric {
    grid: Grid,
    h_floor: f64,
    reach: usize,
    /// Cost of one vertical step in each column.
    vertical: Vec<f64>,
    /// `dx2 / max(|h|, floor)` at each midpoint between columns `i` and `i + 1`.
    mid_scale: Vec<f64>,
}

#[derive(Copy, Clone, PartialEq)]
struct Node(f64, usize);

impl Eq for Node {}

impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then_with(|| other.1.cmp(&self.1))
    }
}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

enum Dist {
    Dense(Vec<f64>),
    Sparse(HashMap<usize, f64>),
}

impl Dist {
    fn get(&self, k: usize) -> f64 {
        match self {
            Dist::Dense(v) => v[k],
            Dist::Sparse(m) => m.get(&k).copied().unwrap_or(f64::INFINITY),
        }
    }

    fn set(&mut self, k: usize, d: f64) {
        match self {
            Dist::Dense(v) => v[k] = d,
            Dist::Sparse(m) => {
                m.insert(k, d);
            }
        }
    }
}

impl CcMetric {
    pub fn new(vf: &VectorFieldFamily, grid: Grid) -> Self {
        Self::with_options(vf, grid, H_FLOOR, 1)
    }

    pub fn with_options(vf: &VectorFieldFamily, grid: Grid, h_floor: f64, reach: usize) -> Self {
        Self::from_fn(|x| vf.h(x), grid, h_floor, reach)
    }

    /// Builds the metric directly from a coefficient function.
    pub fn from_fn(h: impl Fn(f64) -> f64, grid: Grid, h_floor: f64, reach: usize) -> Self {
        let floor = h_floor.max(f64::MIN_POSITIVE);
        let dx2 = grid.dx2();
        let vertical = (0..grid.n1).map(|i| dx2 / h(grid.x1(i)).abs().max(floor)).collect();
        let mid_scale = (0..grid.n1 - 1)
            .map(|i| dx2 / h(0.5 * (grid.x1(i) + grid.x1(i + 1))).abs().max(floor))
            .collect();
        Self { grid, h_floor: floor, reach: reach.max(1), vertical, mid_scale }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn h_floor(&self) -> f64 {
        self.h_floor
    }

    /// Edge costs leaving `node`, as `(neighbour, cost)` pairs.
    fn for_each_edge(&self, node: usize, mut f: impl FnMut(usize, f64)) {
        let g = &self.grid;
        let (i1, i2) = g.coords(node);
        let dx1 = g.dx1();
        if i2 > 0 {
            f(node - 1, self.vertical[i1]);
        }
        if i2 + 1 < g.n2 {
            f(node + 1, self.vertical[i1]);
        }
        for (j1, mid) in [(i1.wrapping_sub(1), i1.wrapping_sub(1)), (i1 + 1, i1)] {
            if j1 >= g.n1 {
                continue;
            }
            let s = self.mid_scale[mid];
            let base = g.idx(j1, i2);
            f(base, dx1);
            for k in 1..=self.reach {
                let c = (dx1 * dx1 + (k as f64 * s).powi(2)).sqrt();
                if i2 >= k {
                    f(base - k, c);
                }
                if i2 + k < g.n2 {
                    f(base + k, c);
                }
            }
        }
    }

    /// Dijkstra from `source`; stops at `target` or once the frontier passes `cutoff`.
    /// `visit` sees every settled node with its final distance.
    fn dijkstra(
        &self,
        source: usize,
        target: Option<usize>,
        cutoff: f64,
        mut visit: impl FnMut(usize, f64),
    ) -> Dist {
        let mut dist = if cutoff.is_finite() || target.is_some() {
            Dist::Sparse(HashMap::new())
        } else {
            Dist::Dense(vec![f64::INFINITY; self.grid.cells()])
        };
        let mut heap = BinaryHeap::new();
        dist.set(source, 0.0);
        heap.push(Node(0.0, source));
        while let Some(Node(d, u)) = heap.pop() {
            if d > dist.get(u) {
                continue;
            }
            if d > cutoff {
                break;
            }
            visit(u, d);
            if Some(u) == target {
                break;
            }
            self.for_each_edge(u, |v, c| {
                let nd = d + c;
                if nd < dist.get(v) {
                    dist.set(v, nd);
                    heap.push(Node(nd, v));
                }
            });
        }
        dist
    }

    /// Distances from `source` to every cell centre.
    pub fn distances_from(&self, source: usize) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.grid.cells()];
        self.dijkstra(source, None, f64::INFINITY, |k, d| out[k] = d);
        out
    }

    /// Graph distance between the cells containing `p` and `q`.
    pub fn cc_distance(&self, p: (f64, f64), q: (f64, f64)) -> Result<f64> {
        let a = self.grid.nearest_cell(p.0, p.1)?;
        let b = self.grid.nearest_cell(q.0, q.1)?;
        Ok(self.node_distance(a, b))
    }

    pub fn node_distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        // Always search from the lower index so that summation order, and
        // hence the rounded result, does not depend on the argument order.
        let (a, b) = (a.min(b), a.max(b));
        let mut found = f64::INFINITY;
        self.dijkstra(a, Some(b), f64::INFINITY, |k, d| {
            if k == b {
                found = d;
            }
        });
        found
    }

    /// `sqrt(d_C(x, y)^2 + |t - s|)`.
    pub fn parabolic_distance(&self, a: (f64, (f64, f64)), b: (f64, (f64, f64))) -> Result<f64> {
        let (t, x) = a;
        let (s, y) = b;
        if !(t.is_finite() && s.is_finite()) || t < 0.0 || s < 0.0 {
            return Err(Error::OutOfDomain(t, s));
        }
        let d = self.cc_distance(x, y)?;
        Ok((d * d + (t - s).abs()).sqrt())
    }

    /// Areas `|B_R|` (cells with distance `< R`) for each radius.
    pub fn ball_volumes(&self, center: (f64, f64), radii: &[f64]) -> Result<Vec<f64>> {
        let c = self.grid.nearest_cell(center.0, center.1)?;
        let r_max = radii.iter().copied().fold(0.0_f64, f64::max);
        let mut settled = Vec::new();
        let mut touched = false;
        self.dijkstra(c, None, r_max, |k, d| {
            if d < r_max {
                settled.push(d);
                touched |= self.grid.is_boundary_cell(k);
            }
        });
        if touched {
            return Err(Error::BallTouchesBoundary { radius: r_max });
        }
        settled.sort_by(f64::total_cmp);
        let area = self.grid.cell_area();
        Ok(radii
            .iter()
            .map(|&r| settled.partition_point(|&d| d < r) as f64 * area)
            .collect())
    }

    /// Least-squares slope of `log |B_R|` against `log R`.
    pub fn ball_volume_dimension(&self, center: (f64, f64), radii: &[f64]) -> Result<f64> {
        if radii.len() < 2 || radii.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::invalid("need at least two positive radii"));
        }
        let vols = self.ball_volumes(center, radii)?;
        if vols.iter().any(|v| *v <= 0.0) {
            return Err(Error::invalid("a ball contains no cells; refine the grid"));
        }
        let xs: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
        let ys: Vec<f64> = vols.iter().map(|v| v.ln()).collect();
        Ok(least_squares_slope(&xs, &ys))
    }
}

pub(crate) fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::HFunction;

    fn flat(n: usize) -> CcMetric {
        let vf = VectorFieldFamily::new(HFunction::Const(1.0), 2.0).unwrap();
        CcMetric::new(&vf, Grid::spatial(2.0, n, n).unwrap())
    }

    #[test]
    fn identity_and_unit_speed_along_x1() {
        let m = flat(40);
        assert_eq!(m.cc_distance((0.3, -0.2), (0.3, -0.2)).unwrap(), 0.0);
        let d = m.cc_distance((0.0, 0.0), (1.0, 0.0)).unwrap();
        assert!((d - 1.0).abs() <= 2.0 * m.grid().dx1(), "{d}");
    }

    #[test]
    fn symmetric_and_triangle() {
        let vf = VectorFieldFamily::new(HFunction::Sin, 2.0).unwrap();
        let m = CcMetric::new(&vf, Grid::spatial(2.0, 24, 24).unwrap());
        let pts = [(0.1, 0.2), (-1.0, 0.7), (0.5, -1.3)];
        let d = |a: (f64, f64), b: (f64, f64)| m.cc_distance(a, b).unwrap();
        for &a in &pts {
            for &b in &pts {
                assert_eq!(d(a, b), d(b, a));
                for &c in &pts {
                    assert!(d(a, c) <= d(a, b) + d(b, c) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn parabolic_distance_adds_time() {
        let m = flat(20);
        let p = (0.0, 0.0);
        assert_eq!(m.parabolic_distance((0.0, p), (0.0, p)).unwrap(), 0.0);
        assert!((m.parabolic_distance((0.0, p), (0.25, p)).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn x2_cost_grows_where_h_is_small() {
        let vf = VectorFieldFamily::new(HFunction::Linear, 1.0).unwrap();
        let g = Grid::spatial(1.0, 21, 21).unwrap();
        let m = CcMetric::new(&vf, g);
        assert!((m.vertical[10] - g.dx2() / H_FLOOR).abs() < 1e-6);
        assert!((m.vertical[15] - g.dx2() / g.x1(15)).abs() < 1e-12);
    }

    #[test]
    fn flat_balls_have_dimension_two() {
        let m = flat(161);
        let q = m.ball_volume_dimension((0.0, 0.0), &[0.25, 0.5, 1.0]).unwrap();
        assert!((q - 2.0).abs() < 0.15, "{q}");
        assert!(matches!(
            m.ball_volume_dimension((0.0, 0.0), &[0.5, 2.5]),
            Err(Error::BallTouchesBoundary { .. })
        ));
    }
}
