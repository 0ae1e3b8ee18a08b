use rayon::prelude::*;

use crate::discretize::{Grid, ScalarField};
use crate::error::{Error, Result};
use crate::geometry::VectorFieldFamily;

/// Relative residual the conjugate-gradient solves aim for.
pub const SOLVER_TOL: f64 = 1e-12;
/// Residual still accepted when round-off stalls the iteration.
pub const SOLVER_ACCEPT: f64 = 1e-10;
pub const SOLVER_MAX_ITER: usize = 10_000;

const PAR_THRESHOLD: usize = 1 << 14;

/// Finite-volume realisation of `Delta_X + eps Delta` and `grad_X` on a grid.
///
/// Second derivatives are written as differences of face fluxes; faces on the
/// boundary of the truncated square carry no flux (homogeneous Neumann /
/// no-flux closure). `h` is sampled at the column centres, which is also where
/// the `x2` faces of a column sit.
#[derive(Debug, Clone)]
pub struct GrushinOperator {
    grid: Grid,
    h: Vec<f64>,
    eps: f64,
}

/// Statistics of one linear solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
}

impl GrushinOperator {
    pub fn new(vf: &VectorFieldFamily, grid: Grid, eps: f64) -> Self {
        Self::from_fn(|x| vf.h(x), grid, eps)
    }

    pub fn from_fn(h: impl Fn(f64) -> f64, grid: Grid, eps: f64) -> Self {
        let h = (0..grid.n1).map(|i| h(grid.x1(i))).collect();
        Self { grid, h, eps: eps.max(0.0) }
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        Self { eps: eps.max(0.0), ..self.clone() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// `h` at the centre of column `i1`.
    pub fn h_column(&self, i1: usize) -> f64 {
        self.h[i1]
    }

    pub fn h_sup_on_grid(&self) -> f64 {
        self.h.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `(d/dx1 u, h d/dx2 u)`: centred differences inside, one-sided at the edges.
    pub fn grad_x_slice(&self, u: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let g = &self.grid;
        let (n1, n2) = (g.n1, g.n2);
        let (dx1, dx2) = (g.dx1(), g.dx2());
        let mut g1 = vec![0.0; g.cells()];
        let mut g2 = vec![0.0; g.cells()];
        for i in 0..n1 {
            for j in 0..n2 {
                let k = g.idx(i, j);
                g1[k] = if i == 0 {
                    (u[g.idx(1, j)] - u[k]) / dx1
                } else if i + 1 == n1 {
                    (u[k] - u[g.idx(i - 1, j)]) / dx1
                } else {
                    (u[g.idx(i + 1, j)] - u[g.idx(i - 1, j)]) / (2.0 * dx1)
                };
                let d2 = if j == 0 {
                    (u[k + 1] - u[k]) / dx2
                } else if j + 1 == n2 {
                    (u[k] - u[k - 1]) / dx2
                } else {
                    (u[k + 1] - u[k - 1]) / (2.0 * dx2)
                };
                g2[k] = self.h[i] * d2;
            }
        }
        (g1, g2)
    }

    pub fn grad_x(&self, u: &ScalarField) -> (ScalarField, ScalarField) {
        let (a, b) = self.grad_x_slice(&u.values);
        (ScalarField { grid: self.grid, values: a }, ScalarField { grid: self.grid, values: b })
    }

    fn row_laplace(&self, u: &[f64], i: usize, out: &mut [f64]) {
        let g = &self.grid;
        let (n1, n2) = (g.n1, g.n2);
        let c1 = (1.0 + self.eps) / (g.dx1() * g.dx1());
        let c2 = (self.h[i] * self.h[i] + self.eps) / (g.dx2() * g.dx2());
        let row = &u[i * n2..(i + 1) * n2];
        for j in 0..n2 {
            let v = row[j];
            let mut acc = 0.0;
            if i > 0 {
                acc += c1 * (u[(i - 1) * n2 + j] - v);
            }
            if i + 1 < n1 {
                acc += c1 * (u[(i + 1) * n2 + j] - v);
            }
            if j > 0 {
                acc += c2 * (row[j - 1] - v);
            }
            if j + 1 < n2 {
                acc += c2 * (row[j + 1] - v);
            }
            out[j] = acc;
        }
    }

    /// `out = (Delta_X + eps Delta) u`.
    pub fn apply_laplace(&self, u: &[f64], out: &mut [f64]) {
        let n2 = self.grid.n2;
        if self.grid.cells() >= PAR_THRESHOLD {
            out.par_chunks_mut(n2).enumerate().for_each(|(i, row)| self.row_laplace(u, i, row));
        } else {
            out.chunks_mut(n2).enumerate().for_each(|(i, row)| self.row_laplace(u, i, row));
        }
    }

    pub fn laplace_x(&self, u: &ScalarField) -> ScalarField {
        let mut out = vec![0.0; self.grid.cells()];
        self.apply_laplace(&u.values, &mut out);
        ScalarField { grid: self.grid, values: out }
    }

    /// Flux-form Fokker–Planck right-hand side
    /// `(Delta_X + eps Delta) m + div_X(m feedback)` with upwinded advection,
    /// where `feedback = grad_X u`. The cell sum of the result is zero.
    pub fn fpe_flux_divergence(&self, m: &ScalarField, feedback: (&ScalarField, &ScalarField)) -> ScalarField {
        let adv = Advection::from_feedback(self, &feedback.0.values, &feedback.1.values);
        let mut out = vec![0.0; self.grid.cells()];
        self.apply_laplace(&m.values, &mut out);
        adv.apply_add(&m.values, 1.0, &mut out);
        ScalarField { grid: self.grid, values: out }
    }

    fn diagonal(&self, dt: f64, reaction: Option<&[f64]>) -> Vec<f64> {
        let g = &self.grid;
        let c1 = (1.0 + self.eps) / (g.dx1() * g.dx1());
        let mut d = vec![0.0; g.cells()];
        for i in 0..g.n1 {
            let c2 = (self.h[i] * self.h[i] + self.eps) / (g.dx2() * g.dx2());
            let n1_faces = if i == 0 || i + 1 == g.n1 { 1.0 } else { 2.0 };
            for j in 0..g.n2 {
                let n2_faces = if j == 0 || j + 1 == g.n2 { 1.0 } else { 2.0 };
                let k = g.idx(i, j);
                let r = reaction.map_or(0.0, |r| r[k]);
                d[k] = 1.0 + dt * (n1_faces * c1 + n2_faces * c2 + r);
            }
        }
        d
    }

    fn apply_system(&self, x: &[f64], dt: f64, reaction: Option<&[f64]>, out: &mut [f64]) {
        self.apply_laplace(x, out);
        match reaction {
            Some(r) => {
                for k in 0..x.len() {
                    out[k] = x[k] + dt * (r[k] * x[k] - out[k]);
                }
            }
            None => {
                for k in 0..x.len() {
                    out[k] = x[k] - dt * out[k];
                }
            }
        }
    }

    /// Solves `(I + dt (-Delta_X - eps Delta + reaction)) v = rhs` by Jacobi-
    /// preconditioned conjugate gradients, starting from `guess` (or `rhs`).
    pub fn solve(
        &self,
        rhs: &[f64],
        reaction: Option<&[f64]>,
        dt: f64,
        guess: Option<&[f64]>,
    ) -> Result<(Vec<f64>, SolveStats)> {
        let n = self.grid.cells();
        if rhs.len() != n || reaction.is_some_and(|r| r.len() != n) {
            return Err(Error::GridMismatch);
        }
        if !(dt > 0.0) {
            return Err(Error::invalid("time step must be positive"));
        }
        let norm_b = norm(rhs);
        if norm_b == 0.0 {
            return Ok((vec![0.0; n], SolveStats::default()));
        }
        let diag = self.diagonal(dt, reaction);
        let mut x = guess.unwrap_or(rhs).to_vec();
        let mut ax = vec![0.0; n];
        self.apply_system(&x, dt, reaction, &mut ax);
        let mut r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        let mut res = norm(&r) / norm_b;
        let mut it = 0;
        while res > SOLVER_TOL && it < SOLVER_MAX_ITER {
            self.apply_system(&p, dt, reaction, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let a = rz / pap;
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * ap[k];
            }
            for k in 0..n {
                z[k] = r[k] / diag[k];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
            it += 1;
            res = norm(&r) / norm_b;
        }
        // Recompute the true residual; the recursive one drifts slightly.
        self.apply_system(&x, dt, reaction, &mut ax);
        let true_res = norm(&rhs.iter().zip(&ax).map(|(b, a)| b - a).collect::<Vec<_>>()) / norm_b;
        if !(true_res <= SOLVER_ACCEPT) {
            return Err(Error::SolverDiverged { iterations: it, residual: true_res });
        }
        Ok((x, SolveStats { iterations: it, residual: true_res }))
    }

    pub fn implicit_diffusion_solve(
        &self,
        rhs: &ScalarField,
        reaction: Option<&ScalarField>,
        dt: f64,
    ) -> Result<ScalarField> {
        if !rhs.grid.same_space(&self.grid) || reaction.is_some_and(|r| !r.grid.same_space(&self.grid)) {
            return Err(Error::GridMismatch);
        }
        let (v, _) = self.solve(&rhs.values, reaction.map(|r| r.values.as_slice()), dt, None)?;
        Ok(ScalarField { grid: self.grid, values: v })
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Face velocities of the transport term `-div(m v)` with `v = -(c1, h c2)`,
/// where `(c1, c2) = grad_X u`; face values are averages of the two adjacent
/// cell values. Boundary faces carry no flux.
#[derive(Debug, Clone)]
pub struct Advection {
    grid: Grid,
    /// Velocity through the face between `(i, j)` and `(i + 1, j)`, index `i * n2 + j`.
    v1: Vec<f64>,
    /// Velocity through the face between `(i, j)` and `(i, j + 1)`, index `i * (n2 - 1) + j`.
    v2: Vec<f64>,
}

impl Advection {
    pub fn from_feedback(op: &GrushinOperator, c1: &[f64], c2: &[f64]) -> Self {
        let g = op.grid;
        let (n1, n2) = (g.n1, g.n2);
        let mut v1 = vec![0.0; (n1 - 1) * n2];
        for i in 0..n1 - 1 {
            for j in 0..n2 {
                v1[i * n2 + j] = -0.5 * (c1[g.idx(i, j)] + c1[g.idx(i + 1, j)]);
            }
        }
        let mut v2 = vec![0.0; n1 * (n2 - 1)];
        for i in 0..n1 {
            let h = op.h[i];
            for j in 0..n2 - 1 {
                v2[i * (n2 - 1) + j] = -0.5 * h * (c2[g.idx(i, j)] + c2[g.idx(i, j + 1)]);
            }
        }
        Self { grid: g, v1, v2 }
    }

    pub fn zero(grid: Grid) -> Self {
        Self { grid, v1: vec![0.0; (grid.n1 - 1) * grid.n2], v2: vec![0.0; grid.n1 * (grid.n2 - 1)] }
    }

    /// `dt (max |v1| / dx1 + max |v2| / dx2)`. A cell loses at most twice this
    /// fraction of its mass in one explicit upwind step, so a value of at most
    /// 0.5 keeps the step positivity preserving.
    pub fn cfl(&self, dt: f64) -> f64 {
        let m1 = self.v1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let m2 = self.v2.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        dt * (m1 / self.grid.dx1() + m2 / self.grid.dx2())
    }

    /// `out += scale * (-div(m v))` with first-order upwinding.
    pub fn apply_add(&self, m: &[f64], scale: f64, out: &mut [f64]) {
        let g = &self.grid;
        let (n1, n2) = (g.n1, g.n2);
        let (s1, s2) = (scale / g.dx1(), scale / g.dx2());
        for i in 0..n1 - 1 {
            for j in 0..n2 {
                let v = self.v1[i * n2 + j];
                let (a, b) = (g.idx(i, j), g.idx(i + 1, j));
                let flux = if v > 0.0 { v * m[a] } else { v * m[b] } * s1;
                out[a] -= flux;
                out[b] += flux;
            }
        }
        for i in 0..n1 {
            for j in 0..n2 - 1 {
                let v = self.v2[i * (n2 - 1) + j];
                let (a, b) = (g.idx(i, j), g.idx(i, j + 1));
                let flux = if v > 0.0 { v * m[a] } else { v * m[b] } * s2;
                out[a] -= flux;
                out[b] += flux;
            }
        }
    }

    /// `out += scale * A^T phi` where `A` is the operator of [`Self::apply_add`];
    /// this is the upwind discretisation of `v . grad phi`.
    pub fn apply_transpose_add(&self, phi: &[f64], scale: f64, out: &mut [f64]) {
        let g = &self.grid;
        let (n1, n2) = (g.n1, g.n2);
        let (s1, s2) = (scale / g.dx1(), scale / g.dx2());
        for i in 0..n1 - 1 {
            for j in 0..n2 {
                let v = self.v1[i * n2 + j];
                let (a, b) = (g.idx(i, j), g.idx(i + 1, j));
                let d = v * (phi[b] - phi[a]) * s1;
                if v > 0.0 {
                    out[a] += d;
                } else {
                    out[b] += d;
                }
            }
        }
        for i in 0..n1 {
            for j in 0..n2 - 1 {
                let v = self.v2[i * (n2 - 1) + j];
                let (a, b) = (g.idx(i, j), g.idx(i, j + 1));
                let d = v * (phi[b] - phi[a]) * s2;
                if v > 0.0 {
                    out[a] += d;
                } else {
                    out[b] += d;
                }
            }
        }
    }
}
