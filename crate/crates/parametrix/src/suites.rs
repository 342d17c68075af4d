//! Verification suites. Each returns one [`Check`] per measured quantity;
//! the `verify` command and the acceptance run share them.

use std::fmt;

type TestFn = dyn Fn(f64, f64) -> f64;

use parametrix_core::corrections::{
    apply_p_k, apply_p_kq, solve_chi_exact, xi_main_from, KernelKind,
};
use parametrix_core::frozen_kernels::{
    apply_pl, bound_kernel_hat, frozen_stats, kernel_k_unchecked, FrozenPoint,
};
use parametrix_core::mc_oracle::{
    feynman_kac_estimate, linear_statistics, Estimate, LinearModel, PathConfig,
};
use parametrix_core::monomial_algebra::{
    assemble_operator_matrix, determinant, leading_operator, Rational, SPoly, COLUMN_BASIS,
};
use parametrix_core::problem_model::ProblemSpec;
use parametrix_core::quadrature::{
    kernel_mass, laplace_limit, laplace_model_integral, richardson_halving, Integrator, QuadConfig,
    RegionConsts,
};
use parametrix_core::volterra_solver::{solve_densities, Evaluator, Solution, SolverConfig};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::report::fmt17;

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub measured: String,
    pub expected: String,
    pub pass: bool,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {}: measured {} expected {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.suite,
            self.name,
            self.measured,
            self.expected
        )
    }
}

fn check(
    suite: &'static str,
    name: impl Into<String>,
    measured: impl Into<String>,
    expected: impl Into<String>,
    pass: bool,
) -> Check {
    Check {
        suite,
        name: name.into(),
        measured: measured.into(),
        expected: expected.into(),
        pass,
    }
}

fn failed(suite: &'static str, name: &str, err: impl fmt::Display) -> Check {
    check(suite, name, format!("error: {err}"), "no error", false)
}

/// The suites the `verify` command knows, in run order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    Matrix,
    Projected,
    Mass,
    Annihilation,
    Corrections,
    Dirac,
    Laplace,
    Jump,
    Statistics,
    Volterra,
    Special,
    Agreement,
}

impl Suite {
    /// Suites that finish in seconds; `verify` runs these when none are
    /// named.
    pub const QUICK: [Suite; 9] = [
        Suite::Matrix,
        Suite::Projected,
        Suite::Mass,
        Suite::Annihilation,
        Suite::Corrections,
        Suite::Dirac,
        Suite::Laplace,
        Suite::Jump,
        Suite::Statistics,
    ];
}

/// Least-squares slope of `ys` against `xs`.
pub fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Pearson correlation.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    sxy / (sxx * syy).sqrt()
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}

fn random_point(rng: &mut ChaCha8Rng) -> FrozenPoint {
    FrozenPoint::from_values(
        uniform(rng, 0.0, 2.0),
        uniform(rng, -1.0, 1.0),
        uniform(rng, -3.0, -1.0),
        uniform(rng, -0.5, 0.5),
        uniform(rng, 0.1, 1.5),
    )
}

const PAPER_MATRIX: [[i64; 6]; 6] = [
    [-4, 1, 3, 0, 0, 0],
    [-6, 1, 0, 1, 0, 0],
    [0, 0, -11, 1, 0, 0],
    [0, 0, -18, -6, 2, 0],
    [0, 0, 0, -12, -1, 3],
    [0, 0, 0, 0, -6, 4],
];

/// The assembled corrector matrix against the published one, and its
/// determinant.
pub fn matrix() -> Vec<Check> {
    let m = assemble_operator_matrix();
    let mismatches = (0..36)
        .filter(|&k| m[k / 6][k % 6] != PAPER_MATRIX[k / 6][k % 6])
        .count();
    let det = determinant(&m);
    vec![
        check(
            "matrix",
            "entries",
            format!("{mismatches} mismatches"),
            "0 mismatches",
            mismatches == 0,
        ),
        check("matrix", "determinant", det.to_string(), "240", det == 240),
    ]
}

/// The projected corrector equation as an exact identity for random
/// rational `(alpha1, alpha2)`.
pub fn projected(seed: u64, count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nonzero = Vec::new();
    for _ in 0..count {
        let mut r = || {
            let num = (rng.next_u64() % 401) as i128 - 200;
            let den = 1 + (rng.next_u64() % 97) as i128;
            Rational::new(num, den)
        };
        let (a1, a2) = (r(), r());
        let q = SPoly::from_terms(COLUMN_BASIS.iter().copied().zip(solve_chi_exact(a1, a2)));
        let res = leading_operator(&q).add(&xi_main_from(a1, a2));
        if !res.is_zero() {
            nonzero.push(format!("({a1}, {a2}): {}", res.dump()));
        }
    }
    vec![check(
        "projected",
        format!("residual over {count} rational pairs"),
        if nonzero.is_empty() {
            "0".to_string()
        } else {
            nonzero.join("; ")
        },
        "0",
        nonzero.is_empty(),
    )]
}

/// `int int K = 1` for random frozen points and times.
pub fn mass(seed: u64, count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..count {
        let pt = random_point(&mut rng);
        let t = uniform(&mut rng, 1e-3, 1.0);
        match kernel_mass(&pt, t, &QuadConfig::default()) {
            Ok(m) => worst = worst.max((m - 1.0).abs()),
            Err(e) => return vec![failed("mass", "kernel mass", e)],
        }
    }
    vec![check(
        "mass",
        format!("max |mass - 1| over {count} configurations"),
        fmt17(worst),
        "<= 1e-6",
        worst <= 1e-6,
    )]
}

/// Central-difference residual of the linearised operator applied to the
/// frozen kernel: it must fall like `h^2`.
pub fn annihilation(seed: u64, count: usize) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut slopes = Vec::new();
    for _ in 0..count {
        let pt = random_point(&mut rng);
        let t = uniform(&mut rng, 0.2, 1.0);
        let s = match frozen_stats(&pt, t) {
            Ok(s) => s,
            Err(e) => return vec![failed("annihilation", "stats", e)],
        };
        let (sx, sy) = (s.d[0][0].sqrt(), s.d[1][1].sqrt());
        let x = s.mu1 + uniform(&mut rng, -1.5, 1.5) * sx;
        let y = s.mu2 + uniform(&mut rng, -1.5, 1.5) * sy;
        let k = |t: f64, x: f64, y: f64| kernel_k_unchecked(&pt, t, x, y);
        let h0 = 0.03 * sx.min(sy).min(t);
        let mut lh = Vec::new();
        let mut lr = Vec::new();
        for j in 0..4 {
            let h = h0 / f64::from(1u32 << j);
            match apply_pl(&pt, &k, t, x, y, h) {
                Ok(r) => {
                    lh.push(h.ln());
                    lr.push(r.abs().ln());
                }
                Err(e) => return vec![failed("annihilation", "residual", e)],
            }
        }
        slopes.push(fit_slope(&lh, &lr));
    }
    let min = slopes.iter().copied().fold(f64::INFINITY, f64::min);
    vec![check(
        "annihilation",
        format!("min log-log slope over {count} points"),
        fmt17(min),
        ">= 1.9",
        min >= 1.9,
    )]
}

/// Sup over a standardized window of `|P K| / K_hat^{1/12}` and of the
/// same for the corrected kernel, as `t` halves.
pub fn corrections(spec: &ProblemSpec) -> Vec<Check> {
    let pt = match FrozenPoint::new(spec, 0.5, 0.7) {
        Ok(p) => p,
        Err(e) => return vec![failed("corrections", "frozen point", e)],
    };
    let mut lt = Vec::new();
    let mut lk = Vec::new();
    let mut lq = Vec::new();
    for k in 3..=9 {
        let t = 0.5f64.powi(k);
        let (mut wk, mut wq): (f64, f64) = (0.0, 0.0);
        for i in 0..9 {
            for j in 0..9 {
                let xs = -2.0 + 0.5 * f64::from(i);
                let ys = -2.0 + 0.5 * f64::from(j);
                let x = pt.x0 - pt.b1v * t + xs * pt.bv * t.powf(1.5);
                let y = pt.y0 + ys * t.sqrt();
                let r = (|| {
                    let hat = bound_kernel_hat(&pt, 1.0 / 12.0, t, x, y)?;
                    Ok::<_, parametrix_core::Error>((
                        apply_p_k(spec, &pt, t, x, y)?.abs() / hat,
                        apply_p_kq(spec, &pt, t, x, y)?.abs() / hat,
                    ))
                })();
                match r {
                    Ok((a, b)) => {
                        wk = wk.max(a);
                        wq = wq.max(b);
                    }
                    Err(e) => return vec![failed("corrections", "residual", e)],
                }
            }
        }
        lt.push(t.ln());
        lk.push(wk.ln());
        lq.push(wq.ln());
    }
    let sk = fit_slope(&lt, &lk);
    let sq = fit_slope(&lt, &lq);
    vec![
        check(
            "corrections",
            "uncorrected weighted residual slope",
            fmt17(sk),
            "<= -0.4",
            sk <= -0.4,
        ),
        check(
            "corrections",
            "corrected weighted residual slope",
            fmt17(sq),
            ">= -0.1",
            sq >= -0.1,
        ),
    ]
}

fn integrator(spec: &ProblemSpec) -> parametrix_core::Result<Integrator<'_>> {
    let report = parametrix_core::problem_model::validate_assumptions(
        spec,
        &parametrix_core::problem_model::SampleGrid::default(),
    );
    let consts = RegionConsts::from_report(&report, spec.horizon);
    Integrator::new(spec, QuadConfig::default(), consts)
}

/// `|int int K^Q(t) g - g|` along halving `t` for three test functions;
/// the log-error must track `log sqrt(t)`.
pub fn dirac(spec: &ProblemSpec) -> Vec<Check> {
    let integ = match integrator(spec) {
        Ok(i) => i,
        Err(e) => return vec![failed("dirac", "integrator", e)],
    };
    let (x, y) = (1.0, 0.3);
    let tests: [(&str, &TestFn); 3] = [
        ("sin(x - 0.2) + 0.3 y^2", &|x0, y0| {
            (x0 - 0.2).sin() + 0.3 * y0 * y0
        }),
        ("exp(-(x - 1)^2) cos(y)", &|x0: f64, y0: f64| {
            (-(x0 - 1.0) * (x0 - 1.0)).exp() * y0.cos()
        }),
        ("1 / (1 + x^2 + y^2)", &|x0, y0| {
            1.0 / (1.0 + x0 * x0 + y0 * y0)
        }),
    ];
    let mut out = Vec::new();
    for (name, g) in tests {
        let mut ls = Vec::new();
        let mut le = Vec::new();
        let mut c: f64 = 0.0;
        for k in 4..=9 {
            let t = 0.5f64.powi(k);
            match integ.interior(KernelKind::KQ, g, t, x, y) {
                Ok(v) => {
                    let err = (v - g(x, y)).abs();
                    ls.push(t.sqrt().ln());
                    le.push(err.ln());
                    c = c.max(err / t.sqrt());
                }
                Err(e) => return vec![failed("dirac", name, e)],
            }
        }
        let r = correlation(&ls, &le);
        out.push(check(
            "dirac",
            format!("g = {name}: corr(log err, log sqrt t), C = {}", fmt17(c)),
            fmt17(r),
            "> 0.95",
            r > 0.95,
        ));
    }
    out
}

/// The model Laplace integral approaches its Dirac-plus-density limit.
/// The three finest levels are Richardson-extrapolated.
pub fn laplace() -> Vec<Check> {
    let xs = [0.1, 0.05, 0.025, 0.0125];
    let tests: [(&str, &dyn Fn(f64) -> f64); 3] =
        [("1", &|_| 1.0), ("s", &|s| s), ("cos s", &|s: f64| s.cos())];
    let mut out = Vec::new();
    for (name, g) in tests {
        let vals: Result<Vec<f64>, _> = xs.iter().map(|&x| laplace_model_integral(x, g)).collect();
        let (vals, lim) = match (vals, laplace_limit(g)) {
            (Ok(v), Ok(l)) => (v, l),
            (Err(e), _) | (_, Err(e)) => return vec![failed("laplace", name, e)],
        };
        let ext = richardson_halving(&vals[1..]);
        let rel = (ext - lim).abs() / lim.abs();
        out.push(check(
            "laplace",
            format!(
                "g = {name}: extrapolated {} vs limit {}, raw at x = 0.0125 {}",
                fmt17(ext),
                fmt17(lim),
                fmt17(vals[3])
            ),
            fmt17(rel),
            "<= 0.02 relative",
            rel <= 0.02,
        ));
    }
    out
}

/// On the spec: the boundary potential extrapolated to `x = 0+` minus its
/// value at `x = 0` equals the density at kernel time zero, `g(0, y)`.
pub fn jump(spec: &ProblemSpec) -> Vec<Check> {
    let integ = match integrator(spec) {
        Ok(i) => i,
        Err(e) => return vec![failed("jump", "integrator", e)],
    };
    let g = |s: f64, y0: f64| (1.0 + s) * (0.4 * y0).cos();
    let mut out = Vec::new();
    for &(t, y) in &[(0.4, 0.2), (0.25, -0.5), (0.5, 1.0)] {
        for kind in [KernelKind::K, KernelKind::KQ] {
            let r = (|| {
                let vals = [0.04, 0.02, 0.01, 0.005]
                    .iter()
                    .map(|&x| integ.boundary(kind, &g, t, x, y))
                    .collect::<parametrix_core::Result<Vec<f64>>>()?;
                let at0 = integ.boundary(kind, &g, t, 0.0, y)?;
                Ok::<_, parametrix_core::Error>((richardson_halving(&vals), at0))
            })();
            let (ext, at0) = match r {
                Ok(v) => v,
                Err(e) => return vec![failed("jump", "boundary", e)],
            };
            let expect = g(0.0, y);
            let rel = ((ext - at0) - expect).abs() / expect.abs();
            out.push(check(
                "jump",
                format!(
                    "{kind:?} at t = {t}, y = {y}: limit {} minus value at 0 {} vs density {}",
                    fmt17(ext),
                    fmt17(at0),
                    fmt17(expect)
                ),
                fmt17(rel),
                "<= 0.05 relative",
                rel <= 0.05,
            ));
        }
    }
    out
}

/// Sample mean and covariance of linear diffusions against the closed
/// forms, within three standard errors per component.
pub fn statistics(seed: u64, paths: usize) -> Vec<Check> {
    let models = [
        ("kolmogorov", LinearModel::kolmogorov(), (0.5, 0.2)),
        (
            "affine",
            LinearModel {
                a: -2.0,
                slope: 0.7,
                y_ref: 0.3,
                b: 0.4,
            },
            (1.0, -0.5),
        ),
    ];
    let mut out = Vec::new();
    for (offset, (name, m, (x, y))) in models.into_iter().enumerate() {
        let cfg = PathConfig {
            dt: 1e-2,
            paths,
            seed: seed.wrapping_add(offset as u64),
            ..PathConfig::default()
        };
        for t in [0.25, 1.0] {
            let s = match linear_statistics(&m, (x, y), t, &cfg) {
                Ok(s) => s,
                Err(e) => return vec![failed("statistics", name, e)],
            };
            let k = m.slope;
            let mean = [
                x + (m.a + k * (y - m.y_ref)) * t + 0.5 * k * m.b * t * t,
                y + m.b * t,
            ];
            let cov = [
                [k * k * t.powi(3) / 3.0, 0.5 * k * t * t],
                [0.5 * k * t * t, t],
            ];
            let mut worst: f64 = 0.0;
            for i in 0..2 {
                worst = worst.max((s.mean[i] - mean[i]).abs() / s.mean_stderr[i]);
                for j in 0..2 {
                    worst = worst.max((s.cov[i][j] - cov[i][j]).abs() / s.cov_stderr[i][j]);
                }
            }
            out.push(check(
                "statistics",
                format!("{name} at t = {t}: max |sample - exact| / stderr"),
                fmt17(worst),
                "<= 3",
                worst <= 3.0,
            ));
        }
    }
    out
}

/// Envelope domination and series tail of a converged solve.
pub fn volterra(sol: &Solution) -> Vec<Check> {
    let d = &sol.diagnostics;
    let mut out = Vec::new();
    match d.envelope {
        Some(env) => {
            let mut worst: f64 = 0.0;
            for (n, norm) in sol.norms.iter().enumerate().skip(2) {
                worst = worst.max(norm.max() / env.value(n));
            }
            out.push(check(
                "volterra",
                format!(
                    "max norm / envelope for n >= 2 (K1 {}, K2 {})",
                    fmt17(env.k1),
                    fmt17(env.k2)
                ),
                fmt17(worst),
                "<= 1",
                worst <= 1.0,
            ));
        }
        None => out.push(check(
            "volterra",
            "envelope",
            "not fitted",
            "fitted",
            sol.norms.iter().all(|n| n.max() == 0.0),
        )),
    }
    out.push(check(
        "volterra",
        format!("tail bound after {} iterates", d.iterations),
        fmt17(d.tail_bound),
        "< 1e-6 within 8 iterations",
        d.tail_bound < 1e-6 && d.iterations <= 8,
    ));
    out
}

/// Largest `|u - expect|` over `probes` for a solved problem.
pub fn max_deviation(
    spec: &ProblemSpec,
    sol: &Solution,
    probes: &[(f64, f64, f64)],
    expect: f64,
) -> parametrix_core::Result<f64> {
    let ev = Evaluator::new(spec, sol)?;
    let mut worst: f64 = 0.0;
    for &(t, x, y) in probes {
        worst = worst.max((ev.value(t, x, y)? - expect).abs());
    }
    Ok(worst)
}

/// Interior probes inside the default benchmark window.
pub const PROBES: [(f64, f64, f64); 10] = [
    (0.5, 0.2, 0.0),
    (0.5, 0.6, 0.5),
    (0.25, 0.1, -0.5),
    (0.5, 1.0, 1.0),
    (0.1, 0.05, 0.0),
    (0.4, 1.4, -0.8),
    (0.3, 0.4, 0.3),
    (0.5, 0.1, -1.0),
    (0.2, 0.8, 0.9),
    (0.45, 1.2, -0.2),
];

/// Solver configuration for the benchmark probes.
pub fn probe_config(spec: &ProblemSpec) -> SolverConfig {
    SolverConfig::default().with_window(spec, 1.5, 1.0)
}

/// Zero data gives `u = 0`; unit data with no source or potential gives
/// `u = 1`.
pub fn special(horizon: f64) -> Vec<Check> {
    let mut out = Vec::new();
    let cases = [
        ("zero", ProblemSpec::zero_problem(horizon), 0.0, 1e-10),
        (
            "constant",
            ProblemSpec::constant_problem(horizon),
            1.0,
            5e-3,
        ),
    ];
    for (name, spec, expect, tol) in cases {
        let r = solve_densities(&spec, probe_config(&spec))
            .and_then(|sol| max_deviation(&spec, &sol, &PROBES, expect));
        out.push(match r {
            Ok(dev) => check(
                "special",
                format!("{name} problem: max |u - {expect}|"),
                fmt17(dev),
                format!("<= {tol:e}"),
                dev <= tol,
            ),
            Err(e) => failed("special", name, e),
        });
    }
    out
}

/// One probe of a solver against Monte Carlo comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Agreement {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub solver: f64,
    pub oracle: Estimate,
    pub tolerance: f64,
}

impl Agreement {
    pub fn delta(&self) -> f64 {
        (self.solver - self.oracle.mean).abs()
    }

    pub fn pass(&self) -> bool {
        self.delta() <= self.tolerance
    }
}

/// Solver values against Feynman-Kac estimates; the tolerance is
/// `max(2 stderr, floor)`.
pub fn agree(
    spec: &ProblemSpec,
    sol: &Solution,
    probes: &[(f64, f64, f64)],
    cfg: &PathConfig,
    floor: f64,
) -> parametrix_core::Result<Vec<Agreement>> {
    let ev = Evaluator::new(spec, sol)?;
    probes
        .iter()
        .map(|&(t, x, y)| {
            let solver = ev.value(t, x, y)?;
            let oracle = feynman_kac_estimate(spec, t, x, y, cfg)?;
            Ok(Agreement {
                t,
                x,
                y,
                solver,
                oracle,
                tolerance: (2.0 * oracle.stderr).max(floor),
            })
        })
        .collect()
}

pub fn agreement_checks(rows: &[Agreement]) -> Vec<Check> {
    rows.iter()
        .map(|a| {
            check(
                "agreement",
                format!(
                    "({}, {}, {}): solver {} oracle {} +- {}",
                    a.t,
                    a.x,
                    a.y,
                    fmt17(a.solver),
                    fmt17(a.oracle.mean),
                    fmt17(a.oracle.stderr)
                ),
                fmt17(a.delta()),
                format!("<= {}", fmt17(a.tolerance)),
                a.pass(),
            )
        })
        .collect()
}

/// Runs one suite on the given spec (used by the spec-dependent suites).
/// The heavy suites solve the problem themselves.
pub fn run(suite: Suite, spec: &ProblemSpec, seed: u64, paths: usize, dt: f64) -> Vec<Check> {
    match suite {
        Suite::Matrix => matrix(),
        Suite::Projected => projected(seed, 20),
        Suite::Mass => mass(seed, 50),
        Suite::Annihilation => annihilation(seed, 20),
        Suite::Corrections => corrections(spec),
        Suite::Dirac => dirac(spec),
        Suite::Laplace => laplace(),
        Suite::Jump => jump(spec),
        Suite::Statistics => statistics(seed, paths),
        Suite::Volterra => match solve_densities(spec, probe_config(spec)) {
            Ok(sol) => volterra(&sol),
            Err(e) => vec![failed("volterra", "solve", e)],
        },
        Suite::Special => special(spec.horizon),
        Suite::Agreement => {
            let cfg = PathConfig {
                dt,
                paths,
                seed,
                ..PathConfig::default()
            };
            let r = solve_densities(spec, probe_config(spec))
                .and_then(|sol| agree(spec, &sol, &PROBES, &cfg, 2e-2));
            match r {
                Ok(rows) => agreement_checks(&rows),
                Err(e) => vec![failed("agreement", "solve", e)],
            }
        }
    }
}
