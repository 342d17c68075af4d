use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use parametrix_core::mc_oracle::{feynman_kac_estimate, PathConfig};
use parametrix_core::problem_model::{
    validate_assumptions, AssumptionReport, ProblemSpec, SampleGrid,
};
use parametrix_core::volterra_solver::{solve_densities, Evaluator};

use crate::error::CliError;
use crate::problem_file::{check_probes, load_probes, GridSpec, Probe, ProblemFile};
use crate::report::{self, OraclePoint, SolvedPoint};
use crate::suites::{self, Suite};

#[derive(Debug, Parser)]
#[command(
    name = "parametrix",
    version,
    about = "Corrected parametrix solver and checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a problem file and write u at the probes.
    Solve(SolveArgs),
    /// Run verification suites and write a pass/fail table.
    Verify(VerifyArgs),
    /// Solve, estimate by Monte Carlo, and tabulate the agreement.
    Compare(CompareArgs),
    /// Monte Carlo estimates at the probes.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
pub struct Io {
    /// Problem description (TOML).
    #[arg(long)]
    pub problem: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// CSV with a `t,x,y` header; defaults to the problem file's probes.
    #[arg(long)]
    pub probes: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Mc {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200_000)]
    pub paths: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
}

impl Mc {
    fn config(&self) -> PathConfig {
        PathConfig {
            dt: self.dt,
            paths: self.paths,
            seed: self.seed,
            ..PathConfig::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub io: Io,
    /// Grid counts `nt,nx,ny` or `nt,nx,ny,side_nt,side_ny`.
    #[arg(long)]
    pub grid: Option<GridSpec>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Suites to run; repeatable. Defaults to the quick suites.
    #[arg(long, value_enum)]
    pub suite: Vec<Suite>,
    /// Problem for the spec-dependent suites; defaults to the tanh
    /// benchmark.
    #[arg(long)]
    pub problem: Option<PathBuf>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    #[command(flatten)]
    pub mc: Mc,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub io: Io,
    #[arg(long)]
    pub grid: Option<GridSpec>,
    #[command(flatten)]
    pub mc: Mc,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub io: Io,
    #[command(flatten)]
    pub mc: Mc,
}

/// Everything a run needs, resolved before any compute starts.
pub struct RunManifest {
    pub file: ProblemFile,
    pub spec: ProblemSpec,
    pub probes: Vec<Probe>,
    pub out: PathBuf,
}

impl RunManifest {
    pub fn load(io: &Io) -> Result<Self, CliError> {
        let file = ProblemFile::load(&io.problem)?;
        let spec = file.to_spec()?;
        let probes = match &io.probes {
            Some(p) => load_probes(p)?,
            None => file.default_probes(),
        };
        check_probes(&probes, spec.horizon)?;
        prepare_out(&io.out)?;
        Ok(RunManifest {
            file,
            spec,
            probes,
            out: io.out.clone(),
        })
    }
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Refuse specs that break the standing assumptions, naming the failures.
pub fn check_assumptions(spec: &ProblemSpec) -> Result<AssumptionReport, CliError> {
    let report = validate_assumptions(spec, &SampleGrid::default());
    if report.all_pass() {
        return Ok(report);
    }
    let mut failed = Vec::new();
    if !report.basics {
        failed.push(format!(
            "basics (need b1(0, y) < 0 for all y; inf of -b1(0, y) is {})",
            report.b_lower
        ));
    }
    if !report.boundedness {
        failed.push("boundedness".to_string());
    }
    if !report.hypobound {
        failed.push("hypobound".to_string());
    }
    if !report.sandwich {
        failed.push("sandwich".to_string());
    }
    if !report.data_bounded {
        failed.push("data_bounded".to_string());
    }
    Err(CliError::Validation(format!(
        "standing assumptions violated: {}",
        failed.join(", ")
    )))
}

fn solve_points(
    m: &RunManifest,
    grid: Option<GridSpec>,
) -> Result<
    (
        AssumptionReport,
        parametrix_core::volterra_solver::Solution,
        Vec<SolvedPoint>,
    ),
    CliError,
> {
    let report = check_assumptions(&m.spec)?;
    let cfg = m.file.solver_config(&m.spec, &m.probes, grid);
    cfg.validate()?;
    let sol = solve_densities(&m.spec, cfg)?;
    let ev = Evaluator::new(&m.spec, &sol)?;
    let rows = m
        .probes
        .iter()
        .map(|p| {
            let (u, est_error) = ev.value_with_error(p.t, p.x, p.y)?;
            Ok(SolvedPoint {
                t: p.t,
                x: p.x,
                y: p.y,
                u,
                est_error,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok((report, sol, rows))
}

pub fn cmd_solve(args: &SolveArgs) -> Result<String, CliError> {
    let m = RunManifest::load(&args.io)?;
    let (report, sol, rows) = solve_points(&m, args.grid)?;
    let csv = write(&m.out, "solution.csv", &report::solution_csv(&rows))?;
    let diag = write(
        &m.out,
        "diagnostics.txt",
        &report::diagnostics(&report, &sol, &rows),
    )?;
    Ok(format!(
        "solved {} probes in {} iterations; wrote {} and {}",
        rows.len(),
        sol.diagnostics.iterations,
        csv.display(),
        diag.display()
    ))
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<String, CliError> {
    let spec = match &args.problem {
        Some(p) => ProblemFile::load(p)?.to_spec()?,
        None => ProblemSpec::tanh_benchmark(),
    };
    prepare_out(&args.out)?;
    let suites: Vec<Suite> = if args.suite.is_empty() {
        Suite::QUICK.to_vec()
    } else {
        args.suite.clone()
    };
    let mut checks = Vec::new();
    for s in suites {
        checks.extend(suites::run(
            s,
            &spec,
            args.mc.seed,
            args.mc.paths,
            args.mc.dt,
        ));
    }
    let table = report::verify_table(&checks);
    write(&args.out, "verify.txt", &table)?;
    if checks.iter().all(|c| c.pass) {
        Ok(table)
    } else {
        Err(CliError::CheckFailed(table))
    }
}

pub fn cmd_oracle(args: &OracleArgs) -> Result<String, CliError> {
    let m = RunManifest::load(&args.io)?;
    let cfg = args.mc.config();
    cfg.validate()?;
    let rows = m
        .probes
        .iter()
        .map(|p| {
            let e = feynman_kac_estimate(&m.spec, p.t, p.x, p.y, &cfg)?;
            Ok(OraclePoint {
                t: p.t,
                x: p.x,
                y: p.y,
                estimate: e.mean,
                stderr: e.stderr,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let path = write(&m.out, "oracle.csv", &report::oracle_csv(&rows))?;
    Ok(format!(
        "estimated {} probes; wrote {}",
        rows.len(),
        path.display()
    ))
}

pub fn cmd_compare(args: &CompareArgs) -> Result<String, CliError> {
    let m = RunManifest::load(&args.io)?;
    let cfg = args.mc.config();
    cfg.validate()?;
    check_assumptions(&m.spec)?;
    let scfg = m.file.solver_config(&m.spec, &m.probes, args.grid);
    scfg.validate()?;
    let sol = solve_densities(&m.spec, scfg)?;
    let pts: Vec<(f64, f64, f64)> = m.probes.iter().map(|p| (p.t, p.x, p.y)).collect();
    let rows = suites::agree(&m.spec, &sol, &pts, &cfg, 2e-2)?;
    let table = report::compare_csv(&rows);
    write(&m.out, "compare.csv", &table)?;
    if rows.iter().all(|r| r.pass()) {
        Ok(table)
    } else {
        Err(CliError::CheckFailed(table))
    }
}

/// Dispatch; the error's exit code is the process status.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Oracle(a) => cmd_oracle(a),
    }
}
