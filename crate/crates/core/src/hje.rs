//! Backward Hamilton–Jacobi equation
//! `-∂_t u - Δ_X u + ½|∇_X u|² = F`, `u(T) = G`, in physical time.
//!
//! The primary solver goes through `w = e^{-u/2}`, which satisfies the linear
//! backward equation `-∂_t w - Δ_X w + ½ F w = 0`, `w(T) = e^{-G/2}`. In reversed
//! time `s = T - t` this is a forward heat equation with absorption, marched
//! with backward Euler; every step is an M-matrix solve, so `w` stays positive
//! and obeys a discrete maximum principle.

use serde::Serialize;

use crate::discretize::{GrushinOperator, ScalarField, TimeField};
use crate::error::{Error, Result};

/// Ordering tolerance of [`check_comparison`].
pub const COMPARISON_TOL: f64 = 1e-8;

/// Largest admissible `dt (max|X₁u|/dx₁ + max|h| max|X₂u|/dx₂)` for the
/// explicit Hamiltonian in [`solve_hje_direct`].
pub const DIRECT_CFL_LIMIT: f64 = 1.0;

#[derive(Debug, Clone, Default, Serialize)]
pub struct HjeDiagnostics {
    pub w_min: f64,
    /// `e^{-½‖G‖} e^{-T‖F‖/2}`, the smallest value `w` may take.
    pub barrier: f64,
    /// `min_n min_x w(t_n, x) e^{(T - t_n)‖F‖/2} - e^{-½‖G‖}`; nonnegative up
    /// to solver error.
    pub positivity_margin: f64,
    pub u_sup: f64,
    /// `‖G‖_∞ + T ‖F‖_∞`.
    pub bound: f64,
    pub f_sup: f64,
    pub g_sup: f64,
    pub solver_iterations: usize,
    pub max_residual: f64,
}

impl HjeDiagnostics {
    /// The sup-norm estimate `‖u‖ ≤ ‖G‖ + T‖F‖` holds up to `1e-6` relative slack.
    pub fn sup_bound_holds(&self) -> bool {
        self.u_sup <= self.bound + 1e-6 * self.bound.max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct HjeSolution {
    pub u: TimeField,
    /// Hopf variable `e^{-u/2}`; for the direct solver it is computed from `u`.
    pub w: TimeField,
    /// Optimal feedback `α* = -∇_X u`, as `(−X₁u, −X₂u)`.
    pub alpha_star: (TimeField, TimeField),
    pub diagnostics: HjeDiagnostics,
}

impl HjeSolution {
    /// `∇_X u = -α*` at time level `n`, in the form expected by the
    /// Fokker–Planck drift.
    pub fn feedback(&self, n: usize) -> (Vec<f64>, Vec<f64>) {
        let a = self.alpha_star.0.slices[n].iter().map(|v| -v).collect();
        let b = self.alpha_star.1.slices[n].iter().map(|v| -v).collect();
        (a, b)
    }
}

fn check_inputs(op: &GrushinOperator, coupling_field: &TimeField, terminal: &ScalarField) -> Result<()> {
    let g = op.grid();
    if coupling_field.grid != *g || !terminal.grid.same_space(g) {
        return Err(Error::GridMismatch);
    }
    if !coupling_field.is_finite() || !terminal.is_finite() {
        return Err(Error::invalid("coupling field and terminal cost must be finite"));
    }
    Ok(())
}

fn feedback_fields(op: &GrushinOperator, u: &TimeField) -> Result<(TimeField, TimeField)> {
    let mut a1 = Vec::with_capacity(u.slices.len());
    let mut a2 = Vec::with_capacity(u.slices.len());
    for s in &u.slices {
        let (g1, g2) = op.grad_x_slice(s);
        a1.push(g1.into_iter().map(|v| -v).collect());
        a2.push(g2.into_iter().map(|v| -v).collect());
    }
    Ok((TimeField::new(u.grid, a1)?, TimeField::new(u.grid, a2)?))
}

fn base_diagnostics(coupling_field: &TimeField, terminal: &ScalarField) -> HjeDiagnostics {
    let f_sup = coupling_field.sup_norm();
    let g_sup = terminal.sup_norm();
    let horizon = coupling_field.grid.horizon;
    HjeDiagnostics {
        barrier: (-0.5 * g_sup - 0.5 * horizon * f_sup).exp(),
        bound: g_sup + horizon * f_sup,
        f_sup,
        g_sup,
        ..Default::default()
    }
}

/// Solves the HJE through the Hopf transform.
///
/// A negative lower bound `f₀` of `F` is split off first, `u = ũ + f₀ (T - t)`,
/// so every linear system has a nonnegative absorption term and is SPD.
pub fn solve_hje_hopf(op: &GrushinOperator, coupling_field: &TimeField, terminal: &ScalarField) -> Result<HjeSolution> {
    check_inputs(op, coupling_field, terminal)?;
    let g = *op.grid();
    let (nt, dt, horizon) = (g.nt, g.dt(), g.horizon);
    let shift = coupling_field.min().min(0.0);
    let mut diag = base_diagnostics(coupling_field, terminal);

    let mut w = vec![Vec::new(); nt + 1];
    w[nt] = terminal.values.iter().map(|v| (-0.5 * v).exp()).collect();
    for n in (0..nt).rev() {
        let reaction: Vec<f64> = coupling_field.slices[n].iter().map(|f| 0.5 * (f - shift)).collect();
        let (next, stats) = op.solve(&w[n + 1], Some(&reaction), dt, Some(&w[n + 1]))?;
        diag.solver_iterations += stats.iterations;
        diag.max_residual = diag.max_residual.max(stats.residual);
        w[n] = next;
    }
    // Undo the shift: w = w̃ e^{-f₀ (T - t)/2}.
    if shift < 0.0 {
        for (n, s) in w.iter_mut().enumerate() {
            let fac = (-0.5 * shift * (horizon - g.time(n))).exp();
            s.iter_mut().for_each(|v| *v *= fac);
        }
    }

    let edge = (-0.5 * diag.g_sup).exp();
    let mut margin = f64::INFINITY;
    let mut w_min = f64::INFINITY;
    for (n, s) in w.iter().enumerate() {
        let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
        let w_sup = s.iter().copied().fold(0.0_f64, f64::max);
        let barrier_n = edge * (-0.5 * (horizon - g.time(n)) * diag.f_sup).exp();
        let slack = 10.0 * diag.max_residual * w_sup * (g.cells() as f64).sqrt();
        if !(lo >= barrier_n - slack) {
            return Err(Error::PositivityLost { w_min: lo, barrier: barrier_n });
        }
        w_min = w_min.min(lo);
        margin = margin.min(lo * (0.5 * (horizon - g.time(n)) * diag.f_sup).exp() - edge);
    }
    diag.w_min = w_min;
    diag.positivity_margin = margin;

    let u_slices: Vec<Vec<f64>> = w.iter().map(|s| s.iter().map(|v| -2.0 * v.ln()).collect()).collect();
    let u = TimeField::new(g, u_slices)?;
    diag.u_sup = u.sup_norm();
    let alpha_star = feedback_fields(op, &u)?;
    Ok(HjeSolution { u, w: TimeField::new(g, w)?, alpha_star, diagnostics: diag })
}

/// Semi-implicit march on the nonlinear equation: implicit `Δ_X`, Hamiltonian
/// lagged from the previous (later) time level:
/// `(I - dt Δ_X) uⁿ = uⁿ⁺¹ + dt (Fⁿ - ½|∇_X uⁿ⁺¹|²)`.
///
/// Only meant as an independent cross-check of [`solve_hje_hopf`].
pub fn solve_hje_direct(op: &GrushinOperator, coupling_field: &TimeField, terminal: &ScalarField) -> Result<HjeSolution> {
    check_inputs(op, coupling_field, terminal)?;
    let g = *op.grid();
    let (nt, dt) = (g.nt, g.dt());
    let h_sup = op.h_sup_on_grid();
    let mut diag = base_diagnostics(coupling_field, terminal);

    let mut u = vec![Vec::new(); nt + 1];
    u[nt] = terminal.values.clone();
    for n in (0..nt).rev() {
        let (g1, g2) = op.grad_x_slice(&u[n + 1]);
        let m1 = g1.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let m2 = g2.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        let cfl = dt * (m1 / g.dx1() + h_sup * m2 / g.dx2());
        if cfl > DIRECT_CFL_LIMIT {
            return Err(Error::CflViolated { cfl, limit: DIRECT_CFL_LIMIT });
        }
        let rhs: Vec<f64> = (0..g.cells())
            .map(|k| u[n + 1][k] + dt * (coupling_field.slices[n][k] - 0.5 * (g1[k] * g1[k] + g2[k] * g2[k])))
            .collect();
        let (next, stats) = op.solve(&rhs, None, dt, Some(&u[n + 1]))?;
        diag.solver_iterations += stats.iterations;
        diag.max_residual = diag.max_residual.max(stats.residual);
        u[n] = next;
    }
    let u = TimeField::new(g, u)?;
    let w = TimeField::new(g, u.slices.iter().map(|s| s.iter().map(|v| (-0.5 * v).exp()).collect()).collect())?;
    diag.u_sup = u.sup_norm();
    diag.w_min = w.min();
    let edge = (-0.5 * diag.g_sup).exp();
    diag.positivity_margin = w
        .slices
        .iter()
        .enumerate()
        .map(|(n, s)| {
            let lo = s.iter().copied().fold(f64::INFINITY, f64::min);
            lo * (0.5 * (g.horizon - g.time(n)) * diag.f_sup).exp() - edge
        })
        .fold(f64::INFINITY, f64::min);
    let alpha_star = feedback_fields(op, &u)?;
    Ok(HjeSolution { u, w, alpha_star, diagnostics: diag })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    /// `max (sub - super)` over all nodes; at most [`COMPARISON_TOL`] on success.
    pub max_violation: f64,
    /// `min (super - sub)` per time level.
    pub margins: Vec<f64>,
    /// Largest positive part of `(I + dt(-Δ_X + c)) subⁿ⁺¹ - subⁿ`, i.e. how far
    /// `sub` is from being a discrete subsolution (0 for exact solves).
    pub sub_defect: f64,
    /// Same for `super` with the inequality reversed.
    pub super_defect: f64,
}

/// Checks `sub ≤ super` at every node for two trajectories of the forward
/// linear evolution `(I + dt(-Δ_X + c))vⁿ⁺¹ = vⁿ` (`c` = `reaction`), and
/// reports how well each satisfies its sub/supersolution inequality.
pub fn check_comparison(
    op: &GrushinOperator,
    sub: &TimeField,
    sup: &TimeField,
    reaction: &TimeField,
) -> Result<ComparisonReport> {
    let g = *op.grid();
    if sub.grid != g || sup.grid != g || reaction.grid != g {
        return Err(Error::GridMismatch);
    }
    let dt = g.dt();
    let mut max_violation = f64::NEG_INFINITY;
    let mut margins = Vec::with_capacity(g.nt + 1);
    for (a, b) in sub.slices.iter().zip(&sup.slices) {
        let m = a.iter().zip(b).map(|(x, y)| y - x).fold(f64::INFINITY, f64::min);
        margins.push(m);
        max_violation = max_violation.max(-m);
    }
    let defect = |v: &TimeField, sign: f64| {
        let mut lap = vec![0.0; g.cells()];
        let mut worst = 0.0_f64;
        for n in 0..g.nt {
            let next = &v.slices[n + 1];
            op.apply_laplace(next, &mut lap);
            for k in 0..g.cells() {
                let lhs = next[k] + dt * (reaction.slices[n + 1][k] * next[k] - lap[k]);
                worst = worst.max(sign * (lhs - v.slices[n][k]));
            }
        }
        worst
    };
    let report = ComparisonReport {
        max_violation: max_violation.max(0.0),
        margins,
        sub_defect: defect(sub, 1.0),
        super_defect: defect(sup, -1.0),
    };
    if max_violation > COMPARISON_TOL {
        return Err(Error::OrderViolated { violation: max_violation });
    }
    Ok(report)
}

/// Forward linear evolution `(I + dt(-Δ_X + c))vⁿ⁺¹ = vⁿ` from `v⁰ = init`;
/// produces trajectories for [`check_comparison`].
pub fn evolve_linear(op: &GrushinOperator, init: &ScalarField, reaction: &TimeField) -> Result<TimeField> {
    let g = *op.grid();
    if !init.grid.same_space(&g) || reaction.grid != g {
        return Err(Error::GridMismatch);
    }
    let mut out = vec![init.values.clone()];
    for n in 0..g.nt {
        let (v, _) = op.solve(&out[n], Some(&reaction.slices[n + 1]), g.dt(), Some(&out[n]))?;
        out.push(v);
    }
    TimeField::new(g, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::Grid;

    fn sin_op(n: usize, nt: usize) -> GrushinOperator {
        let g = Grid::new(2.0, n, n, 0.5, nt).unwrap();
        GrushinOperator::from_fn(f64::sin, g, 0.0)
    }

    #[test]
    fn constant_terminal_is_preserved() {
        let op = sin_op(12, 8);
        let g = *op.grid();
        let sol = solve_hje_hopf(&op, &TimeField::zeros(g), &ScalarField::constant(g, 0.7)).unwrap();
        assert!(sol.u.slices.iter().flatten().all(|v| (v - 0.7).abs() < 1e-10));
        assert!(sol.alpha_star.0.sup_norm() < 1e-9 && sol.alpha_star.1.sup_norm() < 1e-9);
    }

    #[test]
    fn constant_running_cost_accumulates() {
        // u = f0 (T - t) solves the backward equation exactly; backward Euler
        // on w gives w^n = (1 + dt f0/2)^{-(nt - n)}, so compare to that.
        let op = sin_op(10, 16);
        let g = *op.grid();
        let f0 = 1.3;
        let sol = solve_hje_hopf(&op, &TimeField::from_fn(g, |_, _, _| f0), &ScalarField::zeros(g)).unwrap();
        for n in 0..=g.nt {
            let exact = 2.0 * (g.nt - n) as f64 * (1.0 + 0.5 * g.dt() * f0).ln();
            assert!((sol.u.slices[n][17] - exact).abs() < 1e-9);
            assert!((exact - f0 * (g.horizon - g.time(n))).abs() < 0.01);
        }
        let direct = solve_hje_direct(&op, &TimeField::from_fn(g, |_, _, _| f0), &ScalarField::zeros(g)).unwrap();
        for n in 0..=g.nt {
            assert!((direct.u.slices[n][5] - f0 * (g.horizon - g.time(n))).abs() < 1e-9);
        }
    }

    #[test]
    fn negative_running_cost_is_shifted() {
        let op = sin_op(10, 8);
        let g = *op.grid();
        let f = TimeField::from_fn(g, |_, x1, _| -1.0 + 0.2 * x1);
        let hopf = solve_hje_hopf(&op, &f, &ScalarField::zeros(g)).unwrap();
        let direct = solve_hje_direct(&op, &f, &ScalarField::zeros(g)).unwrap();
        assert!(hopf.u.max_abs_diff(&direct.u) < 0.01, "{}", hopf.u.max_abs_diff(&direct.u));
        assert!(hopf.diagnostics.positivity_margin >= -1e-10);
        assert!(hopf.diagnostics.sup_bound_holds());
    }

    #[test]
    fn hopf_identity_and_feedback() {
        let op = sin_op(16, 8);
        let g = *op.grid();
        let f = TimeField::from_fn(g, |t, x1, x2| 0.3 * (x1 * x2).cos() + t);
        let term = ScalarField::from_fn(g, |x1, x2| 0.5 * x1 * x1 - 0.2 * x2);
        let sol = solve_hje_hopf(&op, &f, &term).unwrap();
        for (us, ws) in sol.u.slices.iter().zip(&sol.w.slices) {
            for (u, w) in us.iter().zip(ws) {
                assert!((u + 2.0 * w.ln()).abs() <= 1e-12 * u.abs().max(1.0));
            }
        }
        let (g1, g2) = op.grad_x_slice(&sol.u.slices[3]);
        assert_eq!(g1[40], -sol.alpha_star.0.slices[3][40]);
        assert_eq!(g2[40], -sol.alpha_star.1.slices[3][40]);
        assert!(sol.diagnostics.positivity_margin >= -1e-10);
        assert!(sol.diagnostics.sup_bound_holds());
    }

    #[test]
    fn larger_terminal_cost_gives_larger_value() {
        let op = sin_op(14, 6);
        let g = *op.grid();
        let f = TimeField::from_fn(g, |_, x1, _| x1 * x1);
        let lo = ScalarField::from_fn(g, |x1, x2| (x1 - x2).sin());
        let mut hi = lo.clone();
        hi.values[50] += 0.5;
        let a = solve_hje_hopf(&op, &f, &lo).unwrap();
        let b = solve_hje_hopf(&op, &f, &hi).unwrap();
        for (x, y) in a.u.slices.iter().flatten().zip(b.u.slices.iter().flatten()) {
            assert!(y >= &(x - 1e-12));
        }
    }

    #[test]
    fn heat_reduction_matches_gaussian_solution() {
        // h ≡ 1, F = 0: w solves the backward heat equation -w_t = Δw and
        // w(T) = 1 + a e^{-|x|²/(4 s0)} evolves to
        // 1 + a s0/(s0 + τ) e^{-|x|²/(4 (s0 + τ))}, τ = T - t.
        let (a, s0) = (0.8, 0.1);
        let g = Grid::new(3.0, 61, 61, 0.25, 50).unwrap();
        let op = GrushinOperator::from_fn(|_| 1.0, g, 0.0);
        let w_exact = |tau: f64, x1: f64, x2: f64| {
            let s = s0 + tau;
            1.0 + a * s0 / s * (-(x1 * x1 + x2 * x2) / (4.0 * s)).exp()
        };
        let term = ScalarField::from_fn(g, |x1, x2| -2.0 * w_exact(0.0, x1, x2).ln());
        let sol = solve_hje_hopf(&op, &TimeField::zeros(g), &term).unwrap();
        let mut err = 0.0_f64;
        for k in 0..g.cells() {
            let (x1, x2) = g.center(k);
            err = err.max((sol.u.slices[0][k] + 2.0 * w_exact(g.horizon, x1, x2).ln()).abs());
        }
        let scale = g.dt() + g.dx1() * g.dx1();
        assert!(err < 2.0 * scale, "{err} vs {scale}");
    }

    #[test]
    fn comparison_of_ordered_trajectories() {
        let op = sin_op(16, 10);
        let g = *op.grid();
        let c = TimeField::from_fn(g, |_, x1, _| 0.5 * x1 * x1);
        let init = ScalarField::from_fn(g, |x1, x2| (x1 + 0.3 * x2).cos());
        let bump = ScalarField::from_fn(g, |x1, x2| init.interpolate(x1, x2) + (-(x1 * x1 + x2 * x2)).exp());
        let sub = evolve_linear(&op, &init, &c).unwrap();
        let sup = evolve_linear(&op, &bump, &c).unwrap();
        let rep = check_comparison(&op, &sub, &sup, &c).unwrap();
        assert_eq!(rep.max_violation, 0.0);
        assert!(rep.sub_defect < 1e-9 && rep.super_defect < 1e-9);
        assert!(rep.margins.iter().all(|m| *m >= 0.0));
        // Identical trajectories pass with zero margin; reversed ones fail.
        let same = check_comparison(&op, &sub, &sub, &c).unwrap();
        assert!(same.margins.iter().all(|m| *m == 0.0));
        assert!(matches!(check_comparison(&op, &sup, &sub, &c), Err(Error::OrderViolated { .. })));
    }

    #[test]
    fn constant_offset_is_a_supersolution_without_reaction() {
        let op = sin_op(12, 6);
        let g = *op.grid();
        let zero = TimeField::zeros(g);
        let sub = evolve_linear(&op, &ScalarField::from_fn(g, |x1, _| x1.sin()), &zero).unwrap();
        let mut sup = sub.clone();
        sup.slices.iter_mut().flatten().for_each(|v| *v += 1.0);
        let rep = check_comparison(&op, &sub, &sup, &zero).unwrap();
        assert!(rep.margins.iter().all(|m| (m - 1.0).abs() < 1e-12));
        assert!(rep.super_defect < 1e-9);
    }
}
