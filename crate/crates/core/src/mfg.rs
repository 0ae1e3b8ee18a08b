//! The fixed-point map `ψ: μ ↦ m` (HJE driven by `F(·, μ_t)`, `G(·, μ_T)`,
//! then FPE driven by the resulting feedback) and its damped Picard iteration.

use std::fmt::Write as _;

use serde::Serialize;

use crate::coupling::Coupling;
use crate::discretize::{Grid, GrushinOperator, TimeField};
use crate::error::{Error, Result};
use crate::fpe::{solve_fpe, FpeDiagnostics, FpeSolution};
use crate::geometry::VectorFieldFamily;
use crate::hje::{solve_hje_hopf, HjeDiagnostics, HjeSolution};
use crate::measures::{sup_d1_coarse, time_holder_ratio, GridMeasure, MeasurePath};

/// Cell budget of the per-iteration gap `sup_t d₁(m^{k+1}_t, m^k_t)`.
pub const GAP_CELLS: usize = 256;

/// Cell budget of the confirmation gap computed once the iteration gap is
/// below tolerance.
pub const CONFIRM_CELLS: usize = 1024;

/// A fully specified MFG instance together with the iteration controls.
#[derive(Debug, Clone)]
pub struct MfgProblem {
    pub vf: VectorFieldFamily,
    pub grid: Grid,
    pub coupling: Coupling,
    pub m0: GridMeasure,
    /// Viscosity of the Fokker–Planck solve (0 for the degenerate problem).
    pub eps: f64,
    /// Damping `θ ∈ (0, 1]`.
    pub theta: f64,
    pub tol_fp: f64,
    pub k_max: usize,
    pub gap_cells: usize,
    pub confirm_cells: usize,
}

impl MfgProblem {
    /// Defaults: `ε = 0`, `θ = ½`, `tol = 10⁻⁴ L`, at most 100 iterations.
    pub fn new(vf: VectorFieldFamily, grid: Grid, coupling: Coupling, m0: GridMeasure) -> Result<Self> {
        if !m0.grid().same_space(&grid) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            vf,
            grid,
            coupling,
            m0,
            eps: 0.0,
            theta: 0.5,
            tol_fp: 1e-4 * grid.half_width,
            k_max: 100,
            gap_cells: GAP_CELLS,
            confirm_cells: CONFIRM_CELLS,
        })
    }

    pub fn operator(&self) -> GrushinOperator {
        GrushinOperator::new(&self.vf, self.grid, 0.0)
    }

    /// Identifies the equilibrium problem (not the iteration controls), so
    /// that solutions reached with different initializations or damping can
    /// be compared.
    pub fn fingerprint(&self) -> String {
        let c = &self.coupling;
        let g = &self.grid;
        let mut s = format!(
            "{}|L={}|{}x{}|T={}|nt={}|sigma={}|lf={}|lg={}|{}|{}|eps={}|",
            self.vf.name(),
            g.half_width,
            g.n1,
            g.n2,
            g.horizon,
            g.nt,
            c.sigma(),
            c.lambda_f(),
            c.lambda_g(),
            c.base_f().name(),
            c.base_g().name(),
            self.eps
        );
        let (a, b) = self.m0.density().iter().enumerate().fold((0.0, 0.0), |(a, b), (k, v)| (a + v, b + k as f64 * v));
        let _ = write!(s, "m0={a:.12e},{b:.12e}");
        s
    }

    fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::invalid(format!("damping must lie in (0, 1], got {}", self.theta)));
        }
        if !(self.tol_fp > 0.0) || self.k_max == 0 {
            return Err(Error::invalid("tolerance must be positive and k_max at least 1"));
        }
        Ok(())
    }
}

/// Starting path of the iteration.
#[derive(Debug, Clone)]
pub enum Initialization {
    /// `m₀` held constant in time.
    Constant,
    /// The uniform measure at every time (`m₀` is still the initial datum of ψ).
    Uniform,
    Path(MeasurePath),
}

/// One evaluation of `ψ` with its intermediate solutions.
pub struct PsiOutput {
    pub path: MeasurePath,
    pub hje: HjeSolution,
    pub fpe: FpeSolution,
    pub coupling_field: TimeField,
}

pub fn psi_map(problem: &MfgProblem, mu: &MeasurePath) -> Result<PsiOutput> {
    if *mu.grid() != problem.grid {
        return Err(Error::GridMismatch);
    }
    let op = problem.operator();
    let f = problem.coupling.eval_f_path(mu)?;
    let g = problem.coupling.eval_g(mu.last())?;
    let hje = solve_hje_hopf(&op, &f, &g)?;
    let feedback = grad_fields(&hje)?;
    let fpe = solve_fpe(&op, &problem.m0, &feedback, problem.eps)?;
    Ok(PsiOutput { path: fpe.path.clone(), hje, fpe, coupling_field: f })
}

/// `∇_X u = −α*` as a pair of time fields.
pub fn grad_fields(hje: &HjeSolution) -> Result<(TimeField, TimeField)> {
    let neg = |f: &TimeField| TimeField::new(f.grid, f.slices.iter().map(|s| s.iter().map(|v| -v).collect()).collect());
    Ok((neg(&hje.alpha_star.0)?, neg(&hje.alpha_star.1)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// `sup_t d₁(m^{k+1}_t, m^k_t)` on the gap grid.
    pub gap: f64,
    pub u_sup: f64,
    pub w_min: f64,
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub u: TimeField,
    pub m: MeasurePath,
    pub alpha_star: (TimeField, TimeField),
    pub coupling_field: TimeField,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
    pub iterations: usize,
    /// Gap of the last step on the confirmation grid (`NaN` if never computed).
    pub confirmed_gap: f64,
    pub hje: HjeDiagnostics,
    pub fpe: FpeDiagnostics,
    pub fingerprint: String,
}

impl MfgSolution {
    pub fn gap_history(&self) -> Vec<f64> {
        self.history.iter().map(|r| r.gap).collect()
    }
}

fn assemble(
    problem: &MfgProblem,
    m: MeasurePath,
    out: &PsiOutput,
    history: Vec<IterationRecord>,
    converged: bool,
    confirmed_gap: f64,
) -> MfgSolution {
    MfgSolution {
        u: out.hje.u.clone(),
        m,
        alpha_star: out.hje.alpha_star.clone(),
        coupling_field: out.coupling_field.clone(),
        iterations: history.len(),
        history,
        converged,
        confirmed_gap,
        hje: out.hje.diagnostics.clone(),
        fpe: out.fpe.diagnostics.clone(),
        fingerprint: problem.fingerprint(),
    }
}

/// Damped Picard iteration `m^{k+1} = (1 − θ) m^k + θ ψ(m^k)`.
///
/// Converges when the gap on the coarse gap grid is at most `tol_fp` and the
/// same gap recomputed on the confirmation grid is too. When `F` and `G` do not
/// depend on the measure, `ψ` is constant and `ψ(m⁰)` is returned after one
/// undamped step.
///
/// On failure the error carries the iterate with the smallest gap.
pub fn solve_mfg(problem: &MfgProblem, init: Initialization) -> Result<MfgSolution> {
    problem.validate()?;
    let g = problem.grid;
    let mut m = match init {
        Initialization::Constant => MeasurePath::constant(g, &problem.m0)?,
        Initialization::Uniform => MeasurePath::constant(g, &GridMeasure::uniform(g))?,
        Initialization::Path(p) => {
            if *p.grid() != g {
                return Err(Error::GridMismatch);
            }
            p
        }
    };

    if problem.coupling.is_uncoupled() {
        let out = psi_map(problem, &m)?;
        let rec = IterationRecord {
            iteration: 1,
            gap: 0.0,
            u_sup: out.hje.diagnostics.u_sup,
            w_min: out.hje.diagnostics.w_min,
        };
        return Ok(assemble(problem, out.path.clone(), &out, vec![rec], true, 0.0));
    }

    let mut history = Vec::new();
    let mut best: Option<(f64, MfgSolution)> = None;
    for k in 1..=problem.k_max {
        let out = psi_map(problem, &m)?;
        let next = m.mix(&out.path, problem.theta)?;
        let gap = sup_d1_coarse(&next, &m, problem.gap_cells)?;
        history.push(IterationRecord {
            iteration: k,
            gap,
            u_sup: out.hje.diagnostics.u_sup,
            w_min: out.hje.diagnostics.w_min,
        });
        if gap <= problem.tol_fp {
            let confirmed = sup_d1_coarse(&next, &m, problem.confirm_cells)?;
            if confirmed <= problem.tol_fp {
                return Ok(assemble(problem, next, &out, history, true, confirmed));
            }
        }
        if best.as_ref().is_none_or(|(b, _)| gap < *b) {
            best = Some((gap, assemble(problem, next.clone(), &out, history.clone(), false, f64::NAN)));
        }
        m = next;
    }
    let (gap, mut sol) = best.expect("k_max >= 1");
    sol.history = history;
    Err(Error::NotConverged { iterations: problem.k_max, gap, best: Box::new(sol) })
}

#[derive(Debug, Clone, Serialize)]
pub struct UniquenessReport {
    pub sup_d1: f64,
    pub u_gap: f64,
    /// `∫(F(·,m^a_t) − F(·,m^b_t)) d(m^a_t − m^b_t)` per time level.
    pub monotonicity: Vec<f64>,
    pub min_monotonicity: f64,
}

/// Compares two solutions of the same problem reached from different
/// initializations.
pub fn uniqueness_certificate(problem: &MfgProblem, a: &MfgSolution, b: &MfgSolution) -> Result<UniquenessReport> {
    let fp = problem.fingerprint();
    if a.fingerprint != fp || b.fingerprint != fp {
        return Err(Error::ConfigMismatch);
    }
    let sup_d1 = sup_d1_coarse(&a.m, &b.m, problem.confirm_cells)?;
    let u_gap = a.u.max_abs_diff(&b.u);
    let monotonicity = a
        .m
        .slices()
        .iter()
        .zip(b.m.slices())
        .map(|(x, y)| problem.coupling.monotonicity_integral(x, y))
        .collect::<Result<Vec<_>>>()?;
    let min_monotonicity = monotonicity.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(UniquenessReport { sup_d1, u_gap, monotonicity, min_monotonicity })
}

/// Summary of a solve, ready for serialization.
#[derive(Debug, Clone, Serialize)]
pub struct MfgReport {
    pub iterations: usize,
    pub converged: bool,
    pub gap_history: Vec<f64>,
    pub confirmed_gap: Option<f64>,
    pub u_sup: f64,
    pub u_bound: f64,
    pub w_min: f64,
    pub w_min_barrier_margin: f64,
    pub mass_error_max: f64,
    pub boundary_mass: f64,
    pub holder_ratio: f64,
    pub second_moments: Vec<f64>,
}

pub fn report(sol: &MfgSolution) -> Result<MfgReport> {
    Ok(MfgReport {
        iterations: sol.iterations,
        converged: sol.converged,
        gap_history: sol.gap_history(),
        confirmed_gap: sol.confirmed_gap.is_finite().then_some(sol.confirmed_gap),
        u_sup: sol.hje.u_sup,
        u_bound: sol.hje.bound,
        w_min: sol.hje.w_min,
        w_min_barrier_margin: sol.hje.positivity_margin,
        mass_error_max: sol.m.mass_error(),
        boundary_mass: sol.m.last().boundary_mass(),
        holder_ratio: time_holder_ratio(&sol.m)?,
        second_moments: sol.m.second_moments()?,
    })
}
