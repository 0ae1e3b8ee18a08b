//! The run configuration: one flat JSON document with defaults for every
//! field, plus the canonical hash stamped into every artifact.

use std::path::{Path, PathBuf};

use mfg_core::coupling::{BaseCost, Coupling};
use mfg_core::discretize::{io, Grid};
use mfg_core::geometry::{HFunction, VectorFieldFamily};
use mfg_core::measures::GridMeasure;
use mfg_core::mfg::MfgProblem;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub h_name: String,
    #[serde(rename = "L")]
    pub half_width: f64,
    pub n1: usize,
    pub n2: usize,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { h_name: "sin".into(), half_width: 3.0, n1: 64, n2: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nt: usize,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self { horizon: 0.5, nt: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingConfig {
    /// Kernel bandwidth; `None` means `0.2 L`.
    pub sigma: Option<f64>,
    #[serde(rename = "lambda_F")]
    pub lambda_f: f64,
    #[serde(rename = "lambda_G")]
    pub lambda_g: f64,
    pub base_f: String,
    pub base_g: String,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { sigma: None, lambda_f: 1.0, lambda_g: 1.0, base_f: "quadratic".into(), base_g: "zero".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub eps: f64,
    pub theta: f64,
    /// Fixed-point tolerance; `None` means `1e-4 L`.
    pub tol_fp: Option<f64>,
    pub k_max: usize,
    pub seed: u64,
    #[serde(rename = "N_particles")]
    pub n_particles: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { eps: 0.0, theta: 0.5, tol_fp: None, k_max: 100, seed: 20240611, n_particles: 100_000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: None, formats: vec![Format::Csv] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub time: TimeConfig,
    pub coupling: CouplingConfig,
    /// Catalog name (`uniform`, `gaussian(cx,cy,s)`, `mixture(w,cx,cy,s; ...)`)
    /// or `csv(path)`.
    pub initial_measure: InitialMeasure,
    pub solver: SolverConfig,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialMeasure(pub String);

impl Default for InitialMeasure {
    fn default() -> Self {
        InitialMeasure("mixture(0.5,-1,0.5,0.5; 0.5,1,-0.5,0.5)".into())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Compact JSON of the configuration with every default spelled out;
    /// field order is fixed by the struct definitions.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// Hex SHA-256 of [`Self::canonical_json`], ignoring the output settings.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.outputs = OutputConfig::default();
        hex::encode(Sha256::digest(c.canonical_json().as_bytes()))
    }

    pub fn sigma(&self) -> f64 {
        self.coupling.sigma.unwrap_or(0.2 * self.geometry.half_width)
    }

    pub fn tol_fp(&self) -> f64 {
        self.solver.tol_fp.unwrap_or(1e-4 * self.geometry.half_width)
    }

    pub fn grid(&self) -> Result<Grid, CliError> {
        let g = &self.geometry;
        Ok(Grid::new(g.half_width, g.n1, g.n2, self.time.horizon, self.time.nt)?)
    }

    pub fn h_function(&self) -> Result<HFunction, CliError> {
        Ok(HFunction::parse(&self.geometry.h_name)?)
    }

    pub fn vector_fields(&self) -> Result<VectorFieldFamily, CliError> {
        Ok(VectorFieldFamily::new(self.h_function()?, self.geometry.half_width)?)
    }

    pub fn initial_measure(&self, grid: Grid) -> Result<GridMeasure, CliError> {
        let s = self.initial_measure.0.trim();
        if let Some(p) = s.strip_prefix("csv(").and_then(|r| r.strip_suffix(')')) {
            let field = io::read_density_csv(Path::new(p.trim()), grid)?;
            return Ok(GridMeasure::new(grid, field.values)?);
        }
        Ok(GridMeasure::parse(s, grid)?)
    }

    /// Coupling with the configured strengths, without the sign check (the
    /// validator reports negative strengths as an assumption failure).
    pub fn coupling(&self, grid: &Grid) -> Result<Coupling, CliError> {
        let c = &self.coupling;
        Ok(Coupling::new_unchecked(
            self.sigma(),
            c.lambda_f,
            c.lambda_g,
            BaseCost::parse(&c.base_f, grid)?,
            BaseCost::parse(&c.base_g, grid)?,
        )?)
    }

    pub fn problem(&self) -> Result<MfgProblem, CliError> {
        let grid = self.grid()?;
        let mut p =
            MfgProblem::new(self.vector_fields()?, grid, self.coupling(&grid)?, self.initial_measure(grid)?)?;
        p.eps = self.solver.eps;
        p.theta = self.solver.theta;
        p.tol_fp = self.tol_fp();
        p.k_max = self.solver.k_max;
        Ok(p)
    }
}
