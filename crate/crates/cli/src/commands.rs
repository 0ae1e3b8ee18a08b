use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mfg_core::discretize::{io, ScalarField, TimeField};
use mfg_core::fpe::solve_fpe;
use mfg_core::geometry::{hormander_index, CcMetric};
use mfg_core::hje::{solve_hje_hopf, HjeSolution};
use mfg_core::measures::{summarize, MeasurePath};
use mfg_core::mfg::{grad_fields, report, solve_mfg, uniqueness_certificate, Initialization, MfgProblem, MfgReport, MfgSolution, UniquenessReport};
use mfg_core::particles::{d1_against_path, empirical_cost, run_ensemble, write_trajectories, CostFields};
use serde::Serialize;
use serde_json::json;

use crate::config::{Format, RunConfig};
use crate::error::CliError;
use crate::validate::{validate, ValidationReport};

/// Largest mass drift tolerated on any run.
pub const MASS_TOL_RUN: f64 = 1e-12;

#[derive(Debug, Parser)]
#[command(name = "mfg", version, about = "Degenerate mean field game solver with Grushin-type diffusion")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; the built-in benchmark when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (falls back to MFG_OUT_DIR, then the config, then ./mfg-out).
    #[arg(long, global = true, env = "MFG_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Overrides solver.seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Proceed despite validation warnings.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the structural assumptions of the configuration.
    Validate,
    /// Solve the HJE for the running cost of m0 held constant in time.
    SolveHje,
    /// Solve the FPE driven by the feedback of `solve-hje`.
    SolveFpe,
    /// Run the damped fixed-point iteration.
    SolveMfg,
    /// Compare the MFG density against a particle simulation.
    McValidate,
    /// Sub-Riemannian geometry probes.
    Geometry(GeometryArgs),
    /// Solve from two initializations and write a full report.
    Report,
}

#[derive(Debug, Args)]
pub struct GeometryArgs {
    /// CC distance between two points, given as `x1,x2`.
    #[arg(long, num_args = 2, value_names = ["P", "Q"])]
    pub cc: Option<Vec<String>>,
    /// Centre of a ball-volume probe, `x1,x2`.
    #[arg(long)]
    pub ball: Option<String>,
    /// Comma-separated radii for `--ball`.
    #[arg(long, default_value = "0.1,0.2,0.4")]
    pub radii: String,
    /// Hörmander index at the given root.
    #[arg(long, allow_hyphen_values = true)]
    pub index: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub probe: f64,
}

struct Context {
    cfg: RunConfig,
    out: PathBuf,
    force: bool,
}

impl Context {
    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        std::fs::write(self.path(name), s)?;
        Ok(())
    }

    fn write_field(&self, stem: &str, field: &TimeField) -> Result<(), CliError> {
        for f in &self.cfg.outputs.formats {
            match f {
                Format::Csv => io::write_csv_file(&self.path(&format!("{stem}.csv")), field)?,
                Format::Binary => io::write_binary_file(&self.path(&format!("{stem}.bin")), field)?,
            }
        }
        Ok(())
    }

    fn write_path(&self, stem: &str, path: &MeasurePath) -> Result<(), CliError> {
        self.write_field(stem, &path.to_time_field())
    }

    fn hash(&self) -> String {
        self.cfg.hash()
    }

    /// Runs validation; failures always stop, warnings stop unless `--force`.
    fn gate(&self) -> Result<ValidationReport, CliError> {
        let rep = validate(&self.cfg);
        if rep.failed() || (rep.warned() && !self.force) {
            self.write_json("validate.json", &rep)?;
            return Err(CliError::Validation(rep.problems()));
        }
        Ok(rep)
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.common.seed {
        cfg.solver.seed = s;
    }
    let out = resolve_out(cli.common.out.as_deref(), &cfg);
    std::fs::create_dir_all(&out)?;
    let ctx = Context { cfg, out, force: cli.common.force };
    match cli.command {
        Command::Validate => cmd_validate(&ctx),
        Command::SolveHje => cmd_solve_hje(&ctx).map(|_| ()),
        Command::SolveFpe => cmd_solve_fpe(&ctx),
        Command::SolveMfg => cmd_solve_mfg(&ctx).map(|_| ()),
        Command::McValidate => cmd_mc_validate(&ctx),
        Command::Geometry(args) => cmd_geometry(&ctx, &args),
        Command::Report => cmd_report(&ctx),
    }
}

fn cmd_validate(ctx: &Context) -> Result<(), CliError> {
    let rep = validate(&ctx.cfg);
    ctx.write_json("validate.json", &rep)?;
    println!("{}", serde_json::to_string_pretty(&rep)?);
    if rep.failed() {
        return Err(CliError::Validation(rep.problems()));
    }
    Ok(())
}

/// HJE driven by `m0` held constant in time.
fn frozen_hje(problem: &MfgProblem) -> Result<HjeSolution, CliError> {
    let mu = MeasurePath::constant(problem.grid, &problem.m0)?;
    let f = problem.coupling.eval_f_path(&mu)?;
    let g = problem.coupling.eval_g(mu.last())?;
    Ok(solve_hje_hopf(&problem.operator(), &f, &g)?)
}

fn cmd_solve_hje(ctx: &Context) -> Result<HjeSolution, CliError> {
    ctx.gate()?;
    let problem = ctx.cfg.problem()?;
    let sol = frozen_hje(&problem)?;
    ctx.write_field("u", &sol.u)?;
    ctx.write_field("w", &sol.w)?;
    ctx.write_field("alpha1", &sol.alpha_star.0)?;
    ctx.write_field("alpha2", &sol.alpha_star.1)?;
    let d = &sol.diagnostics;
    ctx.write_json(
        "hje.json",
        &json!({
            "config_hash": ctx.hash(),
            "w_min": d.w_min,
            "barrier": d.barrier,
            "positivity_margin": d.positivity_margin,
            "u_sup": d.u_sup,
            "bound": d.bound,
        }),
    )?;
    println!("u_sup {:.6e} (bound {:.6e}), w_min {:.6e} (barrier {:.6e})", d.u_sup, d.bound, d.w_min, d.barrier);
    if !d.sup_bound_holds() {
        return Err(CliError::Check(format!("sup bound violated: {} > {}", d.u_sup, d.bound)));
    }
    Ok(sol)
}

fn cmd_solve_fpe(ctx: &Context) -> Result<(), CliError> {
    ctx.gate()?;
    let problem = ctx.cfg.problem()?;
    let hje = frozen_hje(&problem)?;
    let sol = solve_fpe(&problem.operator(), &problem.m0, &grad_fields(&hje)?, problem.eps)?;
    ctx.write_path("m", &sol.path)?;
    let summary = summarize(&sol.path)?;
    ctx.write_json(
        "fpe.json",
        &json!({ "config_hash": ctx.hash(), "eps": sol.eps, "diagnostics": sol.diagnostics, "summary": summary }),
    )?;
    println!(
        "mass error {:.3e}, min density {:.3e}, boundary mass {:.3e}, time-Hölder ratio {:.4}",
        sol.diagnostics.mass_error_max, sol.diagnostics.min_density, sol.diagnostics.boundary_mass, summary.time_holder_ratio
    );
    if sol.diagnostics.boundary_flagged {
        eprintln!("warning: boundary mass {:.3e} at final time", sol.diagnostics.boundary_mass);
    }
    if sol.diagnostics.mass_error_max > MASS_TOL_RUN {
        return Err(CliError::Check(format!("mass drift {:e}", sol.diagnostics.mass_error_max)));
    }
    Ok(())
}

#[derive(Serialize)]
struct RunReport<'a> {
    config_hash: String,
    #[serde(flatten)]
    report: &'a MfgReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    uniqueness: Option<&'a UniquenessReport>,
}

fn write_solution(ctx: &Context, sol: &MfgSolution, uniq: Option<&UniquenessReport>) -> Result<MfgReport, CliError> {
    ctx.write_field("u", &sol.u)?;
    ctx.write_path("m", &sol.m)?;
    ctx.write_field("alpha1", &sol.alpha_star.0)?;
    ctx.write_field("alpha2", &sol.alpha_star.1)?;
    let rep = report(sol)?;
    ctx.write_json("report.json", &RunReport { config_hash: ctx.hash(), report: &rep, uniqueness: uniq })?;
    std::fs::write(ctx.path("summary.txt"), summary_text(&rep, uniq))?;
    Ok(rep)
}

fn summary_text(rep: &MfgReport, uniq: Option<&UniquenessReport>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "converged:        {} after {} iterations", rep.converged, rep.iterations);
    if let Some(g) = rep.gap_history.last() {
        let _ = writeln!(s, "final gap:        {g:.3e}");
    }
    let _ = writeln!(s, "sup |u|:          {:.6} (bound {:.6})", rep.u_sup, rep.u_bound);
    let _ = writeln!(s, "min w:            {:.6e} (barrier margin {:.3e})", rep.w_min, rep.w_min_barrier_margin);
    let _ = writeln!(s, "mass error:       {:.3e}", rep.mass_error_max);
    let _ = writeln!(s, "boundary mass:    {:.3e}", rep.boundary_mass);
    let _ = writeln!(s, "time-Hölder:      {:.4}", rep.holder_ratio);
    if let Some(u) = uniq {
        let _ = writeln!(s, "uniqueness:       sup d1 {:.3e}, |u_a - u_b| {:.3e}, min monotonicity {:.3e}", u.sup_d1, u.u_gap, u.min_monotonicity);
    }
    s
}

fn solve_or_report(ctx: &Context, problem: &MfgProblem, init: Initialization) -> Result<MfgSolution, CliError> {
    match solve_mfg(problem, init) {
        Ok(s) => Ok(s),
        Err(mfg_core::Error::NotConverged { iterations, gap, best }) => {
            write_solution(ctx, &best, None)?;
            Err(mfg_core::Error::NotConverged { iterations, gap, best }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_solve_mfg(ctx: &Context) -> Result<MfgSolution, CliError> {
    ctx.gate()?;
    let problem = ctx.cfg.problem()?;
    let sol = solve_or_report(ctx, &problem, Initialization::Constant)?;
    let rep = write_solution(ctx, &sol, None)?;
    print!("{}", summary_text(&rep, None));
    if rep.mass_error_max > MASS_TOL_RUN {
        return Err(CliError::Check(format!("mass drift {:e}", rep.mass_error_max)));
    }
    if !sol.hje.sup_bound_holds() {
        return Err(CliError::Check("sup bound on u violated".into()));
    }
    Ok(sol)
}

/// Five equally spaced dump levels ending at the horizon.
pub fn dump_levels(nt: usize) -> Vec<usize> {
    let mut v: Vec<usize> = (1..=5).map(|k| (k * nt).div_ceil(5)).collect();
    v.dedup();
    v
}

fn cmd_mc_validate(ctx: &Context) -> Result<(), CliError> {
    ctx.gate()?;
    let problem = ctx.cfg.problem()?;
    let sol = solve_or_report(ctx, &problem, Initialization::Constant)?;
    let g = problem.grid;
    let fb = (
        TimeField::new(g, sol.alpha_star.0.slices.iter().map(|s| s.iter().map(|v| -v).collect()).collect())?,
        TimeField::new(g, sol.alpha_star.1.slices.iter().map(|s| s.iter().map(|v| -v).collect()).collect())?,
    );
    let terminal = problem.coupling.eval_g(sol.m.last())?;
    let n = ctx.cfg.solver.n_particles;
    let seed = ctx.cfg.solver.seed;
    let vf = &problem.vf;
    let run = run_ensemble(
        &|x| vf.h(x),
        &problem.m0,
        &fb,
        n,
        seed,
        None,
        Some(CostFields { running: &sol.coupling_field, terminal: &terminal }),
    )?;
    let levels = dump_levels(g.nt);
    let d1s = d1_against_path(&run, &sol.m, &levels)?;
    let scale = g.half_width;
    let tol = 3.0 * g.dx1().max(g.dx2()).max(scale / (n as f64).sqrt());
    let cost = empirical_cost(&run)?;
    let value = ScalarField::new(g, sol.u.slices[0].clone())?.dot(&problem.m0.to_field());
    write_trajectories(&ctx.path("trajectories.csv"), &run)?;
    let pass = d1s.iter().all(|d| *d <= tol);
    ctx.write_json(
        "mc.json",
        &json!({
            "config_hash": ctx.hash(),
            "N": n,
            "seed": seed,
            "dump_times": levels.iter().map(|&k| g.time(k)).collect::<Vec<_>>(),
            "d1_vs_pde": d1s,
            "tolerance": tol,
            "empirical_cost": cost.mean,
            "cost_std_err": cost.std_err,
            "value": value,
            "pass": pass,
        }),
    )?;
    println!("d1 vs PDE: {d1s:?} (tolerance {tol:.4}); cost {:.5} ± {:.5}, value {value:.5}", cost.mean, cost.std_err);
    if !pass {
        return Err(CliError::Check(format!("particle density deviates from the PDE beyond {tol}")));
    }
    Ok(())
}

fn parse_point(s: &str) -> Result<(f64, f64), CliError> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad point '{s}'"))))
        .collect::<Result<_, _>>()?;
    match v.as_slice() {
        [a, b] => Ok((*a, *b)),
        _ => Err(CliError::Config(format!("a point needs two coordinates, got '{s}'"))),
    }
}

fn cmd_geometry(ctx: &Context, args: &GeometryArgs) -> Result<(), CliError> {
    let vf = ctx.cfg.vector_fields()?;
    let grid = ctx.cfg.grid()?;
    let metric = CcMetric::new(&vf, grid);
    let mut out = serde_json::Map::new();
    out.insert("config_hash".into(), json!(ctx.hash()));
    let any = args.cc.is_some() || args.ball.is_some() || args.index.is_some();
    if let Some(pq) = &args.cc {
        let (p, q) = (parse_point(&pq[0])?, parse_point(&pq[1])?);
        out.insert("cc".into(), json!({ "p": [p.0, p.1], "q": [q.0, q.1], "distance": metric.cc_distance(p, q)? }));
    }
    if let Some(c) = &args.ball {
        let centre = parse_point(c)?;
        let radii: Vec<f64> = args
            .radii
            .split(',')
            .map(|r| r.trim().parse::<f64>().map_err(|_| CliError::Config(format!("bad radius '{r}'"))))
            .collect::<Result<_, _>>()?;
        let volumes = metric.ball_volumes(centre, &radii)?;
        let dim = metric.ball_volume_dimension(centre, &radii)?;
        out.insert("ball".into(), json!({ "center": [centre.0, centre.1], "radii": radii, "volumes": volumes, "dimension": dim }));
    }
    if let Some(root) = args.index {
        out.insert("index".into(), json!({ "root": root, "hormander_index": hormander_index(&vf, root, args.probe)? }));
    }
    if !any {
        let idx: Vec<_> = vf
            .zero_set()
            .iter()
            .map(|&r| hormander_index(&vf, r, args.probe).map(|k| json!({ "root": r, "hormander_index": k })))
            .collect::<Result<_, _>>()?;
        out.insert("indices".into(), json!(idx));
    }
    let value = serde_json::Value::Object(out);
    ctx.write_json("geometry.json", &value)?;
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn cmd_report(ctx: &Context) -> Result<(), CliError> {
    ctx.gate()?;
    let problem = ctx.cfg.problem()?;
    let a = solve_or_report(ctx, &problem, Initialization::Constant)?;
    let b = solve_or_report(ctx, &problem, Initialization::Uniform)?;
    let uniq = uniqueness_certificate(&problem, &a, &b)?;
    let rep = write_solution(ctx, &a, Some(&uniq))?;
    print!("{}", summary_text(&rep, Some(&uniq)));
    if uniq.min_monotonicity < -1e-8 {
        return Err(CliError::Check(format!("monotonicity integral {:e}", uniq.min_monotonicity)));
    }
    Ok(())
}

/// `--out` (or `MFG_OUT_DIR`), then the config, then `./mfg-out`.
pub fn resolve_out(cli_out: Option<&Path>, cfg: &RunConfig) -> PathBuf {
    cli_out.map(Path::to_path_buf).or_else(|| cfg.outputs.dir.clone()).unwrap_or_else(|| PathBuf::from("mfg-out"))
}
