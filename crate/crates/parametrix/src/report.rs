//! Output formats: CSV tables and `key value` diagnostics, every number at
//! 17 significant digits so outputs round-trip and diff exactly.

use std::fmt::Write as _;

use parametrix_core::problem_model::AssumptionReport;
use parametrix_core::volterra_solver::Solution;

use crate::suites::{Agreement, Check};

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// One solved probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolvedPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub est_error: f64,
}

pub fn solution_csv(rows: &[SolvedPoint]) -> String {
    let mut s = String::from("t,x,y,u,est_error\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt17(r.t),
            fmt17(r.x),
            fmt17(r.y),
            fmt17(r.u),
            fmt17(r.est_error)
        );
    }
    s
}

/// One oracle estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OraclePoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub estimate: f64,
    pub stderr: f64,
}

pub fn oracle_csv(rows: &[OraclePoint]) -> String {
    let mut s = String::from("t,x,y,estimate,stderr\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{}",
            fmt17(r.t),
            fmt17(r.x),
            fmt17(r.y),
            fmt17(r.estimate),
            fmt17(r.stderr)
        );
    }
    s
}

pub fn compare_csv(rows: &[Agreement]) -> String {
    let mut s = String::from("t,x,y,u_solver,u_oracle,stderr,delta,tolerance,pass\n");
    for a in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            fmt17(a.t),
            fmt17(a.x),
            fmt17(a.y),
            fmt17(a.solver),
            fmt17(a.oracle.mean),
            fmt17(a.oracle.stderr),
            fmt17(a.delta()),
            fmt17(a.tolerance),
            a.pass()
        );
    }
    s
}

/// Pass/fail table for `verify`, one line per check.
pub fn verify_table(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(s, "{c}");
    }
    let failed = checks.iter().filter(|c| !c.pass).count();
    let _ = writeln!(s, "summary checks={} failed={failed}", checks.len());
    s
}

fn verdict(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

/// Line-oriented solve diagnostics: assumption checks, iterate norms, the
/// fitted envelope and quadrature error estimates.
pub fn diagnostics(report: &AssumptionReport, sol: &Solution, rows: &[SolvedPoint]) -> String {
    let mut s = String::new();
    let d = &sol.diagnostics;
    let sh = &d.shape;
    let q = &sol.cfg.quad;
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k} {v}");
    };
    kv("assumptions.basics", verdict(report.basics).into());
    kv(
        "assumptions.boundedness",
        verdict(report.boundedness).into(),
    );
    kv("assumptions.hypobound", verdict(report.hypobound).into());
    kv("assumptions.sandwich", verdict(report.sandwich).into());
    kv(
        "assumptions.data_bounded",
        verdict(report.data_bounded).into(),
    );
    kv("assumptions.b_lower", fmt17(report.b_lower));
    kv("assumptions.coeff_bound", fmt17(report.coeff_bound));
    kv("assumptions.hypo_ratio", fmt17(report.hypo_ratio));
    kv("grid.interior", format!("{} {} {}", sh.nt, sh.nx, sh.ny));
    kv("grid.side", format!("{} {}", sh.side_nt, sh.side_ny));
    kv("grid.x_max", fmt17(sh.x_max));
    kv("grid.y_max", fmt17(sh.y_max));
    kv("grid.x_grading", fmt17(sh.x_grading));
    kv(
        "quadrature.nodes",
        format!(
            "time={} space={} far={} boundary={}",
            q.time_nodes, q.space_nodes, q.far_nodes, q.boundary_nodes
        ),
    );
    kv("quadrature.radius", fmt17(q.radius));
    kv("solver.tolerance", fmt17(sol.cfg.tolerance));
    kv("solver.iterations", d.iterations.to_string());
    kv("solver.operator_nonzeros", d.operator_nonzeros.to_string());
    for (n, norm) in sol.norms.iter().enumerate() {
        kv(
            &format!("iterate.{n}"),
            format!(
                "interior={} side={}",
                fmt17(norm.interior),
                fmt17(norm.side)
            ),
        );
    }
    match d.envelope {
        Some(env) => {
            kv("envelope.k1", fmt17(env.k1));
            kv("envelope.k2", fmt17(env.k2));
        }
        None => kv("envelope", "none".into()),
    }
    kv("series.tail_bound", fmt17(d.tail_bound));
    kv("window.edge_density", fmt17(d.edge_density));
    let worst = rows.iter().map(|r| r.est_error).fold(0.0, f64::max);
    kv("quadrature.max_est_error", fmt17(worst));
    kv("probes", rows.len().to_string());
    s
}
