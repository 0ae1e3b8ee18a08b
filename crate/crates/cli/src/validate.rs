//! Checks of the structural assumptions on a run configuration.

use mfg_core::discretize::Grid;
use mfg_core::geometry::VectorFieldFamily;
use mfg_core::measures::MASS_TOL;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Warn,
    Fail,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: String,
    pub measured: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub config_hash: String,
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn failed(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Fail)
    }

    pub fn warned(&self) -> bool {
        self.checks.iter().any(|c| c.status == Status::Warn)
    }

    pub fn status_of(&self, name: &str) -> Option<Status> {
        self.checks.iter().find(|c| c.name == name).map(|c| c.status)
    }

    /// One-line description of every check that is not a pass.
    pub fn problems(&self) -> String {
        self.checks
            .iter()
            .filter(|c| c.status != Status::Pass)
            .map(|c| format!("{} {:?}: {}", c.name, c.status, c.detail))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn check(name: &'static str, status: Status, detail: impl Into<String>, measured: Value) -> Check {
    Check { name, status, detail: detail.into(), measured }
}

fn vector_field_checks(cfg: &RunConfig, out: &mut Vec<Check>) -> Option<VectorFieldFamily> {
    let h = match cfg.h_function() {
        Ok(h) => h,
        Err(e) => {
            out.push(check("H1", Status::Fail, e.to_string(), Value::Null));
            out.push(check("H2", Status::Fail, "h could not be constructed", Value::Null));
            return None;
        }
    };
    let vf = match VectorFieldFamily::new(h, cfg.geometry.half_width) {
        Ok(vf) => vf,
        Err(mfg_core::Error::AssumptionViolated { name, detail }) if name == "H2" => {
            out.push(check("H1", Status::Pass, "h is bounded", Value::Null));
            out.push(check("H2", Status::Fail, detail, Value::Null));
            return None;
        }
        Err(e) => {
            out.push(check("H1", Status::Fail, e.to_string(), Value::Null));
            out.push(check("H2", Status::Fail, "h could not be analysed", Value::Null));
            return None;
        }
    };
    let sup = json!({ "h_sup": vf.h_sup() });
    if vf.bounded_on_line() {
        out.push(check("H1", Status::Pass, "h is smooth and bounded", sup));
    } else {
        out.push(check(
            "H1",
            Status::Warn,
            "h is unbounded on the real line; bounded on the truncated domain only",
            sup,
        ));
    }
    let roots = vf.roots();
    let measured = json!({ "roots": roots });
    if roots.is_empty() {
        out.push(check(
            "H2",
            Status::Warn,
            "h has no zeros: non-degenerate; degenerate pipeline not exercised",
            measured,
        ));
    } else {
        let gaps_ok = vf.zero_set().windows(2).all(|w| w[1] > w[0]);
        if gaps_ok {
            out.push(check("H2", Status::Pass, format!("{} isolated zero(s) with finite order", roots.len()), measured));
        } else {
            out.push(check("H2", Status::Fail, "zeros are not isolated", measured));
        }
    }
    Some(vf)
}

fn coupling_checks(cfg: &RunConfig, grid: Option<Grid>, out: &mut Vec<Check>) {
    let c = &cfg.coupling;
    let Some(grid) = grid else {
        out.push(check("H3", Status::Fail, "grid is invalid", Value::Null));
        out.push(check("H4", Status::Fail, "grid is invalid", Value::Null));
        return;
    };
    match cfg.coupling(&grid) {
        Ok(coupling) => {
            let measured = json!({
                "sigma": coupling.sigma(),
                "F_bound": coupling.f_bound(grid),
                "G_bound": coupling.g_bound(grid),
            });
            out.push(check(
                "H3",
                Status::Pass,
                "smooth kernel interaction is Lipschitz in x and in d1",
                measured.clone(),
            ));
            out.push(check("H4", Status::Pass, "F and G are uniformly bounded with bounded derivatives", measured));
        }
        Err(e) => {
            out.push(check("H3", Status::Fail, e.to_string(), Value::Null));
            out.push(check("H4", Status::Fail, e.to_string(), Value::Null));
        }
    }
    let measured = json!({ "lambda_F": c.lambda_f, "lambda_G": c.lambda_g });
    if c.lambda_f >= 0.0 && c.lambda_g >= 0.0 {
        out.push(check("H5", Status::Pass, "nonnegative strengths give a monotone coupling", measured));
    } else {
        out.push(check("H5", Status::Fail, "negative coupling strength breaks monotonicity", measured));
    }
}

fn measure_checks(cfg: &RunConfig, grid: Option<Grid>, out: &mut Vec<Check>) {
    let Some(grid) = grid else {
        out.push(check("H6", Status::Fail, "grid is invalid", Value::Null));
        return;
    };
    match cfg.initial_measure(grid) {
        Ok(m) => {
            let measured = json!({
                "mass": m.mass(),
                "min_density": m.density().iter().copied().fold(f64::INFINITY, f64::min),
                "second_moment": m.second_moment().ok(),
                "boundary_mass": m.boundary_mass(),
            });
            let from_file = cfg.initial_measure.0.trim().starts_with("csv(");
            if (m.mass() - 1.0).abs() > MASS_TOL {
                out.push(check("H6", Status::Fail, "initial measure does not have unit mass", measured));
            } else if from_file {
                out.push(check("H6", Status::Warn, "tabulated density: smoothness not verified", measured));
            } else {
                out.push(check("H6", Status::Pass, "smooth nonnegative density with unit mass", measured));
            }
        }
        Err(e) => out.push(check("H6", Status::Fail, e.to_string(), Value::Null)),
    }
}

/// Runs every assumption check; never fails itself.
pub fn validate(cfg: &RunConfig) -> ValidationReport {
    let mut checks = Vec::new();
    vector_field_checks(cfg, &mut checks);
    let grid = cfg.grid().ok();
    if grid.is_none() {
        checks.push(check("grid", Status::Fail, "invalid grid or time step", Value::Null));
    }
    coupling_checks(cfg, grid, &mut checks);
    measure_checks(cfg, grid, &mut checks);
    if !(cfg.solver.theta > 0.0 && cfg.solver.theta <= 1.0) || !(cfg.solver.eps >= 0.0) || cfg.solver.k_max == 0 {
        checks.push(check(
            "solver",
            Status::Fail,
            "theta must lie in (0, 1], eps must be nonnegative and k_max positive",
            json!({ "theta": cfg.solver.theta, "eps": cfg.solver.eps, "k_max": cfg.solver.k_max }),
        ));
    }
    ValidationReport { config_hash: cfg.hash(), checks }
}
