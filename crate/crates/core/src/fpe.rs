//! Forward Fokker–Planck equation
//! `∂_t m = Δ_X m + ε Δ m + div_X(m ∇_X u)` in conservative (flux) form.
//!
//! Each step is IMEX: an explicit first-order upwind transport step followed
//! by an implicit diffusion solve,
//! `m* = mⁿ + dt A(mⁿ)`, `(I − dt (Δ_X + ε Δ)) mⁿ⁺¹ = m*`.
//! Both parts telescope over cells, so total mass is conserved; the transport
//! step is positivity preserving under the CFL bound and the implicit step is
//! an M-matrix solve.

use serde::Serialize;

use crate::discretize::{Advection, GrushinOperator, TimeField};
use crate::error::{Error, Result};
use crate::measures::{d1_auto, GridMeasure, MeasurePath};

/// Largest admissible CFL number of the explicit transport step.
pub const CFL_LIMIT: f64 = 0.5;

/// Final-time mass within one cell of the boundary above this is flagged.
pub const BOUNDARY_MASS_WARN: f64 = 1e-6;

/// Negative values below `-NEGATIVE_TOL · max m` after a step are an error;
/// smaller ones are round-off and are clamped.
const NEGATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Default, Serialize)]
pub struct FpeDiagnostics {
    pub mass_error_max: f64,
    pub min_density: f64,
    pub boundary_mass: f64,
    pub boundary_flagged: bool,
    pub max_cfl: f64,
    /// Empirical `C` in `M₂(t) ≤ M₂(0) + C ‖h‖²(‖∇_X u‖² t² + t)`.
    pub moment_constant: f64,
}

#[derive(Debug, Clone)]
pub struct FpeSolution {
    pub path: MeasurePath,
    pub eps: f64,
    pub diagnostics: FpeDiagnostics,
}

/// One linear step of the scheme for a frozen feedback, and its exact
/// discrete adjoint.
pub struct FpeStepper<'a> {
    op: &'a GrushinOperator,
    adv: Advection,
    dt: f64,
}

impl<'a> FpeStepper<'a> {
    /// `grad` is `∇_X u = (X₁u, X₂u)` at the current time level.
    pub fn new(op: &'a GrushinOperator, grad: (&[f64], &[f64]), dt: f64) -> Self {
        Self { op, adv: Advection::from_feedback(op, grad.0, grad.1), dt }
    }

    pub fn cfl(&self) -> f64 {
        self.adv.cfl(self.dt)
    }

    /// `S⁻¹ (I + dt A) m` with `S = I − dt (Δ_X + ε Δ)`; no clamping.
    pub fn step(&self, m: &[f64]) -> Result<Vec<f64>> {
        let mut star = m.to_vec();
        self.adv.apply_add(m, self.dt, &mut star);
        Ok(self.op.solve(&star, None, self.dt, Some(m))?.0)
    }

    /// `(I + dt Aᵀ) S⁻¹ φ`, so that `⟨φ, step(m)⟩ = ⟨adjoint_step(φ), m⟩`.
    pub fn adjoint_step(&self, phi: &[f64]) -> Result<Vec<f64>> {
        let (s, _) = self.op.solve(phi, None, self.dt, Some(phi))?;
        let mut out = s.clone();
        self.adv.apply_transpose_add(&s, self.dt, &mut out);
        Ok(out)
    }
}

fn check_feedback(op: &GrushinOperator, feedback: &(TimeField, TimeField)) -> Result<()> {
    let g = op.grid();
    if feedback.0.grid != *g || feedback.1.grid != *g {
        return Err(Error::GridMismatch);
    }
    if !feedback.0.is_finite() || !feedback.1.is_finite() {
        return Err(Error::invalid("feedback must be finite"));
    }
    Ok(())
}

/// Marches the FPE from `m0` with drift `−∇_X u` taken from `feedback` at the
/// start of each step. `op` supplies `h` and the grid; its own `ε` is replaced
/// by `eps`.
pub fn solve_fpe(
    op: &GrushinOperator,
    m0: &GridMeasure,
    feedback: &(TimeField, TimeField),
    eps: f64,
) -> Result<FpeSolution> {
    if !(eps >= 0.0) {
        return Err(Error::invalid(format!("viscosity must be nonnegative, got {eps}")));
    }
    let op = op.with_eps(eps);
    check_feedback(&op, feedback)?;
    let g = *op.grid();
    if !m0.grid().same_space(&g) {
        return Err(Error::GridMismatch);
    }
    let dt = g.dt();
    let area = g.cell_area();
    let mut diag = FpeDiagnostics::default();
    let mut slices = Vec::with_capacity(g.nt + 1);
    slices.push(m0.density().to_vec());
    for n in 0..g.nt {
        let stepper = FpeStepper::new(&op, (&feedback.0.slices[n], &feedback.1.slices[n]), dt);
        let cfl = stepper.cfl();
        if cfl > CFL_LIMIT {
            return Err(Error::CflViolated { cfl, limit: CFL_LIMIT });
        }
        diag.max_cfl = diag.max_cfl.max(cfl);
        let mut next = stepper.step(&slices[n])?;
        let top = next.iter().copied().fold(0.0_f64, f64::max);
        let low = next.iter().copied().fold(f64::INFINITY, f64::min);
        if low < -NEGATIVE_TOL * top {
            return Err(Error::NegativeDensity { min: low });
        }
        next.iter_mut().for_each(|v| *v = v.max(0.0));
        // The solve conserves mass only up to its residual; restore it.
        let mass = next.iter().sum::<f64>() * area;
        next.iter_mut().for_each(|v| *v /= mass);
        slices.push(next);
    }
    let path = MeasurePath::new(
        g,
        slices.into_iter().map(|d| GridMeasure::new(g, d)).collect::<Result<Vec<_>>>()?,
    )?;
    diag.mass_error_max = path.mass_error();
    diag.min_density = path.slices().iter().flat_map(|m| m.density()).copied().fold(f64::INFINITY, f64::min);
    diag.boundary_mass = path.last().boundary_mass();
    diag.boundary_flagged = diag.boundary_mass >= BOUNDARY_MASS_WARN;
    diag.moment_constant = moment_constant(&path, op.h_sup_on_grid(), feedback)?;
    Ok(FpeSolution { path, eps, diagnostics: diag })
}

/// `max_t (M₂(t) − M₂(0)) / (‖h‖²(‖∇_X u‖² t² + t))`, floored at 0.
fn moment_constant(path: &MeasurePath, h_sup: f64, feedback: &(TimeField, TimeField)) -> Result<f64> {
    let g = path.grid();
    let grad = feedback.0.sup_norm().hypot(feedback.1.sup_norm());
    let m2 = path.second_moments()?;
    let hh = h_sup.max(1.0).powi(2);
    let mut c = 0.0_f64;
    for n in 1..m2.len() {
        let t = g.time(n);
        c = c.max((m2[n] - m2[0]) / (hh * (grad * grad * t * t + t)));
    }
    Ok(c)
}

#[derive(Debug, Clone, Serialize)]
pub struct ViscosityRow {
    pub eps: f64,
    /// `d₁(m_T^ε, m_T^{ε_min})` with `ε_min` = 0 unless the ladder ends higher.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViscosityReport {
    pub reference_eps: f64,
    pub rows: Vec<ViscosityRow>,
    /// Each gap is at most 1.1 times the previous one.
    pub nonincreasing: bool,
    /// Last gap over first gap.
    pub decay: f64,
}

/// Final-time distance of viscous solutions to the inviscid (`ε = 0`) one
/// along a strictly decreasing ladder of viscosities.
pub fn vanishing_viscosity_study(
    op: &GrushinOperator,
    m0: &GridMeasure,
    feedback: &(TimeField, TimeField),
    eps_ladder: &[f64],
) -> Result<ViscosityReport> {
    if eps_ladder.is_empty() || eps_ladder.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::invalid("viscosity ladder must be nonempty and strictly decreasing"));
    }
    let reference = solve_fpe(op, m0, feedback, 0.0)?;
    let mut rows = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let gap = if eps == 0.0 {
            0.0
        } else {
            let sol = solve_fpe(op, m0, feedback, eps)?;
            d1_auto(sol.path.last(), reference.path.last())?
        };
        rows.push(ViscosityRow { eps, gap });
    }
    let nonincreasing = rows.windows(2).all(|w| w[1].gap <= 1.1 * w[0].gap);
    let first = rows[0].gap;
    let decay = if first > 0.0 { rows.last().unwrap().gap / first } else { 0.0 };
    Ok(ViscosityReport { reference_eps: 0.0, rows, nonincreasing, decay })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::{dot, Grid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_feedback(g: Grid) -> (TimeField, TimeField) {
        (TimeField::zeros(g), TimeField::zeros(g))
    }

    #[test]
    fn mass_is_conserved_with_drift() {
        let g = Grid::new(2.0, 24, 24, 0.4, 40).unwrap();
        let op = GrushinOperator::from_fn(f64::sin, g, 0.0);
        let fb = (
            TimeField::from_fn(g, |_, x1, x2| 0.8 * x1 + 0.3 * x2),
            TimeField::from_fn(g, |_, x1, x2| x2 - 0.5 * x1),
        );
        let m0 = GridMeasure::gaussian(g, 0.4, -0.3, 0.4).unwrap();
        let sol = solve_fpe(&op, &m0, &fb, 0.0).unwrap();
        assert!(sol.diagnostics.mass_error_max <= 1e-12);
        assert!(sol.diagnostics.min_density >= 0.0);
        assert!(sol.diagnostics.max_cfl <= CFL_LIMIT);
        // The drift −∇u with u ~ ½(0.8x1² + x2²) pulls mass towards the origin.
        let (a, b) = (sol.path.first().mean(), sol.path.last().mean());
        assert!(a.0.hypot(a.1) > b.0.hypot(b.1));
    }

    #[test]
    fn degenerate_column_does_not_spread_in_x2() {
        // h ≡ 0 and no drift: the x2-marginal is frozen.
        let g = Grid::new(1.0, 16, 20, 0.2, 10).unwrap();
        let op = GrushinOperator::from_fn(|_| 0.0, g, 0.0);
        let m0 = GridMeasure::gaussian(g, 0.1, 0.2, 0.2).unwrap();
        let sol = solve_fpe(&op, &m0, &zero_feedback(g), 0.0).unwrap();
        let before = sol.path.first().marginal(1);
        let after = sol.path.last().marginal(1);
        for (x, y) in before.iter().zip(&after) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn heat_reduction_of_the_x1_marginal() {
        // Integrating out x2 leaves the 1-D heat equation with unit diffusivity.
        let g = Grid::new(4.0, 161, 41, 0.5, 100).unwrap();
        let op = GrushinOperator::from_fn(|x| x, g, 0.0);
        let m0 = GridMeasure::gaussian(g, 0.0, 0.0, 0.3).unwrap();
        let sol = solve_fpe(&op, &m0, &zero_feedback(g), 0.0).unwrap();
        let v0 = sol.path.first().marginal_variance(0);
        for n in [25, 50, 100] {
            let v = sol.path.slice(n).marginal_variance(0);
            let expect = v0 + 2.0 * g.time(n);
            assert!((v - expect).abs() / expect < 0.01, "{n}: {v} vs {expect}");
        }
    }

    #[test]
    fn stepper_and_adjoint_are_dual() {
        let g = Grid::new(1.5, 14, 18, 0.3, 6).unwrap();
        let op = GrushinOperator::from_fn(|x| x * x, g, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let c1: Vec<f64> = (0..g.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let c2: Vec<f64> = (0..g.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let st = FpeStepper::new(&op, (&c1, &c2), g.dt());
        for _ in 0..5 {
            let m: Vec<f64> = (0..g.cells()).map(|_| rng.random_range(0.0..1.0)).collect();
            let phi: Vec<f64> = (0..g.cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lhs = dot(&phi, &st.step(&m).unwrap());
            let rhs = dot(&st.adjoint_step(&phi).unwrap(), &m);
            assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0), "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn cfl_violation_is_reported() {
        let g = Grid::new(1.0, 10, 10, 1.0, 2).unwrap();
        let op = GrushinOperator::from_fn(|_| 1.0, g, 0.0);
        let fb = (TimeField::from_fn(g, |_, _, _| 5.0), TimeField::zeros(g));
        let m0 = GridMeasure::uniform(g);
        assert!(matches!(solve_fpe(&op, &m0, &fb, 0.0), Err(Error::CflViolated { .. })));
    }

    #[test]
    fn viscosity_ladder() {
        let g = Grid::new(2.0, 20, 20, 0.2, 10).unwrap();
        let op = GrushinOperator::from_fn(|x| x, g, 0.0);
        let m0 = GridMeasure::gaussian(g, 0.0, 0.0, 0.3).unwrap();
        let fb = zero_feedback(g);
        let only_zero = vanishing_viscosity_study(&op, &m0, &fb, &[0.0]).unwrap();
        assert_eq!(only_zero.rows.len(), 1);
        assert_eq!(only_zero.rows[0].gap, 0.0);
        let rep = vanishing_viscosity_study(&op, &m0, &fb, &[0.1, 0.05, 0.025]).unwrap();
        assert!(rep.nonincreasing, "{:?}", rep.rows);
        assert!(rep.decay < 0.5, "{}", rep.decay);
        assert!(vanishing_viscosity_study(&op, &m0, &fb, &[0.05, 0.1]).is_err());
    }
}
