//! Volterra iteration for the interior density `psi` and the side density
//! `psi_side`, and evaluation of `u` from them.
//!
//! The iteration map is linear and does not depend on the data, so it is
//! assembled once as a sparse matrix of quadrature-times-interpolation
//! weights on the density grids and then applied repeatedly.

use alloc::vec;
use alloc::vec::Vec;

use crate::corrections::KernelKind;
use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::problem_model::{validate_assumptions, AssumptionReport, ProblemSpec, SampleGrid};
use crate::quadrature::{richardson_halving, Integrator, QuadConfig, RegionConsts};

/// Sizes and extents of the density grids.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridShape {
    pub nt: usize,
    pub nx: usize,
    pub ny: usize,
    /// The side density has its own, finer, `(t, y)` grid.
    pub side_nt: usize,
    pub side_ny: usize,
    pub x_max: f64,
    pub y_max: f64,
    /// Exponent of the `x` grading, 1 for uniform.
    pub x_grading: f64,
}

/// Density grids. Times are the right ends of equal steps, `x` nodes are
/// graded toward the side boundary, `y` nodes are uniform on
/// `[-y_max, y_max]`. `ts`, `ys` carry the side density.
#[derive(Clone, Debug, PartialEq)]
pub struct Grids {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ts: Vec<f64>,
    pub ys: Vec<f64>,
}

fn right_ends(horizon: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|i| horizon * i as f64 / n as f64).collect()
}

fn uniform(half: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| -half + 2.0 * half * k as f64 / (n - 1) as f64)
        .collect()
}

impl Grids {
    pub fn new(horizon: f64, sh: &GridShape) -> Result<Self> {
        if sh.nt < 1 || sh.nx < 2 || sh.ny < 2 || sh.side_nt < 1 || sh.side_ny < 2 {
            return Err(Error::BadConfig(
                "grids need at least 1 time node and 2 space nodes per axis",
            ));
        }
        if !(horizon > 0.0 && sh.x_max > 0.0 && sh.y_max > 0.0 && sh.x_grading >= 1.0) {
            return Err(Error::BadConfig(
                "grid extents must be positive and grading >= 1",
            ));
        }
        let x = (1..=sh.nx)
            .map(|j| sh.x_max * math::powf(j as f64 / sh.nx as f64, sh.x_grading))
            .collect();
        Ok(Grids {
            t: right_ends(horizon, sh.nt),
            x,
            y: uniform(sh.y_max, sh.ny),
            ts: right_ends(horizon, sh.side_nt),
            ys: uniform(sh.y_max, sh.side_ny),
        })
    }

    pub fn interior_len(&self) -> usize {
        self.t.len() * self.x.len() * self.y.len()
    }

    pub fn side_len(&self) -> usize {
        self.ts.len() * self.ys.len()
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.x.len() + j) * self.y.len() + k
    }

    #[inline]
    pub fn side_index(&self, i: usize, k: usize) -> usize {
        i * self.ys.len() + k
    }

    /// `(i, k)` of a side index.
    pub fn side_unindex(&self, n: usize) -> (usize, usize) {
        (n / self.ys.len(), n % self.ys.len())
    }

    /// `(i, j, k)` of an interior index.
    pub fn unindex(&self, n: usize) -> (usize, usize, usize) {
        let ny = self.y.len();
        let nx = self.x.len();
        (n / (nx * ny), (n / ny) % nx, n % ny)
    }

    pub fn is_valid(&self) -> bool {
        [&self.t, &self.x, &self.y, &self.ts, &self.ys]
            .iter()
            .all(|g| {
                !g.is_empty()
                    && g.iter().all(|v| v.is_finite())
                    && g.windows(2).all(|p| p[0] < p[1])
            })
    }
}

/// Linear interpolation stencil on an increasing grid, constant beyond
/// the ends.
#[inline]
fn bracket(nodes: &[f64], v: f64) -> [(usize, f64); 2] {
    let n = nodes.len();
    if n == 1 || !(v > nodes[0]) {
        return [(0, 1.0), (0, 0.0)];
    }
    if v >= nodes[n - 1] {
        return [(n - 1, 1.0), (n - 1, 0.0)];
    }
    let i = nodes.partition_point(|p| *p <= v) - 1;
    let f = (v - nodes[i]) / (nodes[i + 1] - nodes[i]);
    [(i, 1.0 - f), (i + 1, f)]
}

/// Interior and side densities on a common set of grids.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityPair {
    pub grids: Grids,
    /// Indexed by [`Grids::index`].
    pub psi: Vec<f64>,
    /// Indexed by [`Grids::side_index`].
    pub psi_side: Vec<f64>,
}

impl DensityPair {
    pub fn zeros(grids: Grids) -> Self {
        let psi = vec![0.0; grids.interior_len()];
        let psi_side = vec![0.0; grids.side_len()];
        DensityPair {
            grids,
            psi,
            psi_side,
        }
    }

    /// Trilinear interpolant of `psi`.
    pub fn psi_at(&self, s: f64, x: f64, y: f64) -> f64 {
        let g = &self.grids;
        let mut acc = 0.0;
        for (i, wi) in bracket(&g.t, s) {
            for (j, wj) in bracket(&g.x, x) {
                for (k, wk) in bracket(&g.y, y) {
                    acc += wi * wj * wk * self.psi[g.index(i, j, k)];
                }
            }
        }
        acc
    }

    /// Bilinear interpolant of `psi_side`.
    pub fn side_at(&self, s: f64, y: f64) -> f64 {
        let g = &self.grids;
        let mut acc = 0.0;
        for (i, wi) in bracket(&g.ts, s) {
            for (k, wk) in bracket(&g.ys, y) {
                acc += wi * wk * self.psi_side[g.side_index(i, k)];
            }
        }
        acc
    }

    pub fn sup_interior(&self) -> f64 {
        self.psi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_side(&self) -> f64 {
        self.psi_side.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.psi
            .iter()
            .chain(self.psi_side.iter())
            .all(|v| v.is_finite())
    }

    fn matches(&self, grids: &Grids) -> bool {
        self.grids == *grids
            && self.psi.len() == grids.interior_len()
            && self.psi_side.len() == grids.side_len()
    }

    fn add_assign(&mut self, other: &DensityPair) {
        for (a, b) in self.psi.iter_mut().zip(&other.psi) {
            *a += b;
        }
        for (a, b) in self.psi_side.iter_mut().zip(&other.psi_side) {
            *a += b;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub shape: GridShape,
    pub max_iterations: usize,
    /// Stop once the fitted tail bound falls below this fraction of the
    /// first iterate's norm.
    pub tolerance: f64,
    pub quad: QuadConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            shape: GridShape {
                nt: 16,
                nx: 24,
                ny: 24,
                side_nt: 16,
                side_ny: 64,
                x_max: 3.0,
                y_max: 5.0,
                x_grading: 1.5,
            },
            max_iterations: 12,
            tolerance: 1e-6,
            quad: QuadConfig::default(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > 0.0) {
            return Err(Error::BadConfig("tail tolerance must be positive"));
        }
        if self.max_iterations < 1 {
            return Err(Error::BadConfig("max iterations must be at least 1"));
        }
        self.quad.validate()
    }

    /// Size the window for probes with `x <= x_probe` and `|y| <= y_probe`.
    /// Base points lie upstream of the target, at smaller `x`, so the `x`
    /// margin only covers the kernel width; `y` gets six standard
    /// deviations plus the transport.
    pub fn with_window(mut self, spec: &ProblemSpec, x_probe: f64, y_probe: f64) -> Self {
        let t = spec.horizon;
        let y_span = y_probe + 6.0 * math::sqrt(t);
        let mut b_max: f64 = 0.0;
        for a in 0..=10 {
            for k in 0..=40 {
                let y = -y_span + y_span * k as f64 / 20.0;
                b_max = b_max.max(spec.hypo_b(x_probe * a as f64 / 10.0, y));
            }
        }
        self.shape.x_max = x_probe + 6.0 * b_max * t * math::sqrt(t);
        let b2_max = (0..=20)
            .map(|k| (spec.b2.value(x_probe, -y_probe + 0.1 * y_probe * k as f64)).abs())
            .fold(0.0, f64::max);
        self.shape.y_max = y_probe + 6.0 * math::sqrt(t) + b2_max * t;
        self
    }

    pub fn grids(&self, horizon: f64) -> Result<Grids> {
        Grids::new(horizon, &self.shape)
    }
}

/// The fitted iterate bound `K1 K2^{2 ceil(n/2)} T^{floor(n/2)} / floor(n/2)!`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Envelope {
    pub k1: f64,
    pub k2: f64,
    pub horizon: f64,
}

impl Envelope {
    pub fn ln_value(&self, n: usize) -> f64 {
        let m = n / 2;
        let c = n - m;
        math::ln(self.k1) + 2.0 * c as f64 * math::ln(self.k2) + m as f64 * math::ln(self.horizon)
            - ln_factorial(m)
    }

    pub fn value(&self, n: usize) -> f64 {
        math::exp(self.ln_value(n))
    }

    /// `sum_{m > n}` of the envelope.
    pub fn tail(&self, n: usize) -> f64 {
        let mut acc = 0.0;
        for m in n + 1..n + 400 {
            let v = self.value(m);
            acc += v;
            if m > n + 8 && v < 1e-18 * acc {
                break;
            }
        }
        acc
    }

    /// Least-squares fit of `ln K1, ln K2` to the positive norms, then `K1`
    /// raised until the envelope dominates every norm from `n = 2` on (or
    /// all of them when fewer are available). `None` with fewer than two
    /// usable norms.
    pub fn fit(norms: &[f64], horizon: f64) -> Option<Envelope> {
        let pts: Vec<(f64, f64)> = norms
            .iter()
            .enumerate()
            .filter(|(_, v)| **v > 0.0 && v.is_finite())
            .map(|(n, v)| {
                let m = n / 2;
                let c = (n - m) as f64;
                (
                    2.0 * c,
                    math::ln(*v) - m as f64 * math::ln(horizon) + ln_factorial(m),
                )
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let k = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / k, sy / k);
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        if !(sxx > 0.0) {
            return None;
        }
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let lk2 = sxy / sxx;
        let mut env = Envelope {
            k1: math::exp(my - lk2 * mx),
            k2: math::exp(lk2),
            horizon,
        };
        let from = if norms.len() > 2 { 2 } else { 0 };
        let mut lift: f64 = 0.0;
        for (n, v) in norms.iter().enumerate().skip(from) {
            if *v > 0.0 {
                lift = lift.max(math::ln(*v) - env.ln_value(n));
            }
        }
        // margin so domination survives the exp/ln round trip
        env.k1 *= math::exp(lift) * (1.0 + 1e-9);
        Some(env)
    }
}

fn ln_factorial(m: usize) -> f64 {
    (2..=m).map(|k| math::ln(k as f64)).sum()
}

/// One sparse row: `(column, weight)` with interior columns first, side
/// columns offset by the interior length.
type Row = Vec<(u32, f64)>;

/// The assembled iteration map `pair_n -> pair_{n+1}`.
#[derive(Clone, Debug)]
pub struct VolterraOperator {
    pub grids: Grids,
    rows: Vec<Row>,
}

impl VolterraOperator {
    pub fn assemble(integ: &Integrator<'_>, grids: &Grids) -> Result<Self> {
        let ni = grids.interior_len();
        let total = ni + grids.side_len();
        let rows: Vec<Result<Row>> = par::map(total, |r| {
            let (t, x, y, kind, sign) = if r < ni {
                let (i, j, k) = grids.unindex(r);
                (grids.t[i], grids.x[j], grids.y[k], KernelKind::PKQ, 1.0)
            } else {
                let (i, k) = grids.side_unindex(r - ni);
                (grids.ts[i], 0.0, grids.ys[k], KernelKind::KQ, -1.0)
            };
            assemble_row(integ, grids, kind, sign, t, x, y)
        });
        let rows = rows.into_iter().collect::<Result<Vec<Row>>>()?;
        Ok(VolterraOperator {
            grids: grids.clone(),
            rows,
        })
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(|r| r.len()).sum()
    }

    pub fn apply(&self, pair: &DensityPair) -> Result<DensityPair> {
        if !pair.matches(&self.grids) {
            return Err(Error::GridMismatch);
        }
        let ni = self.grids.interior_len();
        let get = |c: u32| {
            let c = c as usize;
            if c < ni {
                pair.psi[c]
            } else {
                pair.psi_side[c - ni]
            }
        };
        let vals: Vec<f64> = par::map(self.rows.len(), |r| {
            self.rows[r].iter().map(|&(c, w)| w * get(c)).sum()
        });
        let mut out = DensityPair::zeros(self.grids.clone());
        out.psi.copy_from_slice(&vals[..ni]);
        out.psi_side.copy_from_slice(&vals[ni..]);
        Ok(out)
    }
}

fn assemble_row(
    integ: &Integrator<'_>,
    g: &Grids,
    kind: KernelKind,
    sign: f64,
    t: f64,
    x: f64,
    y: f64,
) -> Result<Row> {
    let ni = g.interior_len();
    let mut dense = vec![0.0; ni + g.side_len()];
    integ.convolve_time_nodes(kind, t, x, y, &mut |s, x0, y0, w| {
        for (i, wi) in bracket(&g.t, s) {
            for (j, wj) in bracket(&g.x, x0) {
                for (k, wk) in bracket(&g.y, y0) {
                    dense[g.index(i, j, k)] += sign * w * wi * wj * wk;
                }
            }
        }
    })?;
    integ.boundary_nodes(kind, t, x, y, &mut |_, tau, y0, w| {
        for (i, wi) in bracket(&g.ts, t - tau) {
            for (k, wk) in bracket(&g.ys, y0) {
                dense[ni + g.side_index(i, k)] += sign * w * wi * wk;
            }
        }
    })?;
    Ok(dense
        .iter()
        .enumerate()
        .filter(|(_, w)| **w != 0.0)
        .map(|(c, w)| (c as u32, *w))
        .collect())
}

/// Validated problem, integrator and grids shared by the solver steps.
pub struct Setup<'a> {
    pub spec: &'a ProblemSpec,
    pub cfg: SolverConfig,
    pub report: AssumptionReport,
    pub integ: Integrator<'a>,
    pub grids: Grids,
}

impl<'a> Setup<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let report = validate_assumptions(spec, &SampleGrid::default());
        if !report.all_pass() {
            return Err(Error::InvalidSpec(
                "standing assumptions fail on the sample grid",
            ));
        }
        let integ = Integrator::new(
            spec,
            cfg.quad,
            RegionConsts::from_report(&report, spec.horizon),
        )?;
        let grids = cfg.grids(spec.horizon)?;
        Ok(Setup {
            spec,
            cfg,
            report,
            integ,
            grids,
        })
    }

    /// Same as [`Setup::new`] without the assumption gate, for drifts that
    /// are only valid near the region of interest (such as affine `b1`).
    pub fn new_unchecked(spec: &'a ProblemSpec, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let report = validate_assumptions(spec, &SampleGrid::default());
        let integ = Integrator::new(
            spec,
            cfg.quad,
            RegionConsts::from_report(&report, spec.horizon),
        )?;
        let grids = cfg.grids(spec.horizon)?;
        Ok(Setup {
            spec,
            cfg,
            report,
            integ,
            grids,
        })
    }
}

/// First iterate: `psi_0 = f + int int PK^Q(t) u_init` and
/// `psi_side_0 = u_side - int int K^Q(t, 0, y) u_init`.
pub fn initial_difference(setup: &Setup<'_>) -> Result<DensityPair> {
    let spec = setup.spec;
    let g = &setup.grids;
    let ui = |x0: f64, y0: f64| spec.u_init.eval(0.0, x0, y0);
    let skip = spec.u_init.is_zero();
    let ni = g.interior_len();
    let vals: Vec<Result<f64>> = par::map(ni + g.side_len(), |r| {
        if r < ni {
            let (i, j, k) = g.unindex(r);
            let (t, x, y) = (g.t[i], g.x[j], g.y[k]);
            let conv = if skip {
                0.0
            } else {
                setup.integ.interior(KernelKind::PKQ, &ui, t, x, y)?
            };
            Ok(spec.f.eval(t, x, y) + conv)
        } else {
            let (i, k) = g.side_unindex(r - ni);
            let (t, y) = (g.ts[i], g.ys[k]);
            let conv = if skip {
                0.0
            } else {
                setup.integ.interior(KernelKind::KQ, &ui, t, 0.0, y)?
            };
            Ok(spec.u_side.eval(t, 0.0, y) - conv)
        }
    });
    let vals = vals.into_iter().collect::<Result<Vec<f64>>>()?;
    let mut pair = DensityPair::zeros(g.clone());
    pair.psi.copy_from_slice(&vals[..ni]);
    pair.psi_side.copy_from_slice(&vals[ni..]);
    Ok(pair)
}

/// `pair_{n+1} = op(pair_n)`.
pub fn volterra_step(op: &VolterraOperator, pair: &DensityPair) -> Result<DensityPair> {
    op.apply(pair)
}

/// Sup norms of one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterateNorm {
    pub interior: f64,
    pub side: f64,
}

impl IterateNorm {
    pub fn max(&self) -> f64 {
        self.interior.max(self.side)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveDiagnostics {
    pub iterations: usize,
    pub envelope: Option<Envelope>,
    /// Fitted bound on the neglected iterates.
    pub tail_bound: f64,
    pub operator_nonzeros: usize,
    pub shape: GridShape,
    /// Largest `|psi|` on the outermost `x` and `y` grid lines, a proxy
    /// for what the window truncation discards.
    pub edge_density: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub densities: DensityPair,
    pub norms: Vec<IterateNorm>,
    pub diagnostics: SolveDiagnostics,
    pub cfg: SolverConfig,
    pub consts: RegionConsts,
}

/// Sum the series until the fitted tail is below `tolerance` times the
/// first norm.
pub fn solve_densities(spec: &ProblemSpec, cfg: SolverConfig) -> Result<Solution> {
    let setup = Setup::new(spec, cfg)?;
    let first = initial_difference(&setup)?;
    let op = if first.sup_interior().max(first.sup_side()) > 0.0 {
        Some(VolterraOperator::assemble(&setup.integ, &setup.grids)?)
    } else {
        None
    };
    sum_series(&setup, op.as_ref(), first)
}

/// The series loop, given the first iterate and the assembled map (which
/// may be absent only if the first iterate vanishes).
pub fn sum_series(
    setup: &Setup<'_>,
    op: Option<&VolterraOperator>,
    first: DensityPair,
) -> Result<Solution> {
    let cfg = setup.cfg;
    let horizon = setup.spec.horizon;
    let mut sum = first.clone();
    let mut cur = first;
    let mut norms = Vec::new();
    let mut envelope = None;
    let mut tail: f64;
    loop {
        let norm = IterateNorm {
            interior: cur.sup_interior(),
            side: cur.sup_side(),
        };
        if !cur.is_finite() {
            return Err(Error::NonConvergence {
                iterations: norms.len(),
                last_norm: f64::INFINITY,
            });
        }
        norms.push(norm);
        let history: Vec<f64> = norms.iter().map(|n| n.max()).collect();
        if norm.max() == 0.0 {
            tail = 0.0;
            break;
        }
        if history.len() >= 3 {
            envelope = Envelope::fit(&history, horizon);
            if let Some(env) = envelope {
                tail = env.tail(history.len() - 1);
                if tail < cfg.tolerance * history[0] {
                    break;
                }
            }
        }
        if norms.len() >= cfg.max_iterations {
            return Err(Error::NonConvergence {
                iterations: norms.len(),
                last_norm: norm.max(),
            });
        }
        let op = op.ok_or(Error::GridMismatch)?;
        cur = volterra_step(op, &cur)?;
        sum.add_assign(&cur);
    }
    let g = &setup.grids;
    let mut edge: f64 = 0.0;
    for i in 0..g.t.len() {
        for j in 0..g.x.len() {
            for k in 0..g.y.len() {
                if j + 1 == g.x.len() || k == 0 || k + 1 == g.y.len() {
                    edge = edge.max((sum.psi[g.index(i, j, k)]).abs());
                }
            }
        }
    }
    let diagnostics = SolveDiagnostics {
        iterations: norms.len(),
        envelope,
        tail_bound: tail,
        operator_nonzeros: op.map_or(0, |o| o.nonzeros()),
        shape: cfg.shape,
        edge_density: edge,
    };
    Ok(Solution {
        densities: sum,
        norms,
        diagnostics,
        cfg,
        consts: setup.integ.consts,
    })
}

/// Evaluates `u` from a converged solution.
pub struct Evaluator<'a> {
    spec: &'a ProblemSpec,
    integ: Integrator<'a>,
    coarse: Integrator<'a>,
    sol: &'a Solution,
}

impl<'a> Evaluator<'a> {
    pub fn new(spec: &'a ProblemSpec, sol: &'a Solution) -> Result<Self> {
        let integ = Integrator::new(spec, sol.cfg.quad, sol.consts)?;
        let coarse = integ.with_config(sol.cfg.quad.coarse())?;
        Ok(Evaluator {
            spec,
            integ,
            coarse,
            sol,
        })
    }

    fn check(&self, t: f64, x: f64, y: f64) -> Result<()> {
        if !(t > 0.0 && t <= self.spec.horizon * (1.0 + 1e-12) && x > 0.0 && y.is_finite()) {
            return Err(Error::OutOfDomain { t, x, y });
        }
        Ok(())
    }

    fn value_with(&self, integ: &Integrator<'_>, t: f64, x: f64, y: f64) -> Result<f64> {
        let d = &self.sol.densities;
        let spec = self.spec;
        let mut u = 0.0;
        if !spec.u_init.is_zero() {
            u += integ.interior(
                KernelKind::KQ,
                &|x0, y0| spec.u_init.eval(0.0, x0, y0),
                t,
                x,
                y,
            )?;
        }
        if d.sup_interior() > 0.0 {
            u += integ.convolve_time(KernelKind::KQ, &|s, x0, y0| d.psi_at(s, x0, y0), t, x, y)?;
        }
        if d.sup_side() > 0.0 {
            u += integ.convolve_boundary(KernelKind::KQ, &|s, y0| d.side_at(s, y0), t, x, y)?;
        }
        Ok(u)
    }

    /// `u(t, x, y) = int int K^Q(t) u_init + K^Q * psi + K^{Q,side} * psi_side`.
    pub fn value(&self, t: f64, x: f64, y: f64) -> Result<f64> {
        self.check(t, x, y)?;
        self.value_with(&self.integ, t, x, y)
    }

    /// Value and the discrepancy against the halved quadrature rules.
    pub fn value_with_error(&self, t: f64, x: f64, y: f64) -> Result<(f64, f64)> {
        self.check(t, x, y)?;
        let fine = self.value_with(&self.integ, t, x, y)?;
        let coarse = self.value_with(&self.coarse, t, x, y)?;
        Ok((fine, (fine - coarse).abs()))
    }
}

pub fn evaluate_solution(
    spec: &ProblemSpec,
    sol: &Solution,
    t: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    Evaluator::new(spec, sol)?.value(t, x, y)
}

/// Finite-difference checks of the equation and of both boundary
/// conditions at one test point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointResidual {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// `P u + f` by central differences.
    pub pde: f64,
    /// `u(t, 0+, y) - u_side(t, y)`, `u(t, 0+)` extrapolated from
    /// `x, x/2, x/4, x/8`.
    pub side: f64,
    /// `u(0+, x, y) - u_init(x, y)`, extrapolated in `sqrt(t)` from
    /// `t, t/4, t/16`.
    pub initial: f64,
}

pub fn residual_report(
    spec: &ProblemSpec,
    sol: &Solution,
    points: &[(f64, f64, f64)],
    h: f64,
) -> Result<Vec<PointResidual>> {
    if !(h > 0.0) {
        return Err(Error::BadConfig("finite-difference step must be positive"));
    }
    for &(t, x, _) in points {
        if !(x >= 2.0 * h && t >= 2.0 * h && t + h <= spec.horizon * (1.0 + 1e-12)) {
            return Err(Error::MarginViolation);
        }
    }
    let ev = Evaluator::new(spec, sol)?;
    let out: Vec<Result<PointResidual>> = par::map(points.len(), |p| {
        let (t, x, y) = points[p];
        let u = |t: f64, x: f64, y: f64| ev.value(t, x, y);
        let c = u(t, x, y)?;
        let ut = (u(t + h, x, y)? - u(t - h, x, y)?) / (2.0 * h);
        let ux = (u(t, x + h, y)? - u(t, x - h, y)?) / (2.0 * h);
        let (yp, ym) = (u(t, x, y + h)?, u(t, x, y - h)?);
        let uy = (yp - ym) / (2.0 * h);
        let uyy = (yp - 2.0 * c + ym) / (h * h);
        let pde = 0.5 * uyy
            + spec.b1.value(x, y) * ux
            + spec.b2.value(x, y) * uy
            + spec.c.value(x, y) * c
            - ut
            + spec.f.eval(t, x, y);
        let xs: Vec<f64> = (0..4)
            .map(|k| u(t, x * math::powf(0.5, k as f64), y))
            .collect::<Result<_>>()?;
        let side = richardson_halving(&xs) - spec.u_side.eval(t, 0.0, y);
        let ts: Vec<f64> = (0..3)
            .map(|k| u(t * math::powf(0.25, k as f64), x, y))
            .collect::<Result<_>>()?;
        let initial = richardson_halving(&ts) - spec.u_init.eval(0.0, x, y);
        Ok(PointResidual {
            t,
            x,
            y,
            pde,
            side,
            initial,
        })
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_model::DataFn;

    fn shape(nt: usize, nx: usize, ny: usize, x_max: f64, y_max: f64, grading: f64) -> GridShape {
        GridShape {
            nt,
            nx,
            ny,
            side_nt: nt,
            side_ny: 2 * ny,
            x_max,
            y_max,
            x_grading: grading,
        }
    }

    fn small() -> SolverConfig {
        SolverConfig {
            shape: shape(3, 4, 6, 2.0, 2.5, 1.5),
            quad: QuadConfig {
                time_nodes: 6,
                space_nodes: 10,
                far_nodes: 6,
                boundary_nodes: 12,
                ..QuadConfig::default()
            },
            max_iterations: 30,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn grids_and_brackets() {
        let g = Grids::new(0.5, &shape(4, 5, 7, 2.0, 3.0, 1.5)).unwrap();
        assert!(g.is_valid());
        assert_eq!(g.t[3], 0.5);
        assert_eq!(g.x[4], 2.0);
        assert_eq!((g.y[0], g.y[6]), (-3.0, 3.0));
        for n in 0..g.interior_len() {
            let (i, j, k) = g.unindex(n);
            assert_eq!(g.index(i, j, k), n);
        }
        assert_eq!(bracket(&g.t, -1.0), [(0, 1.0), (0, 0.0)]);
        assert_eq!(bracket(&g.t, 9.0), [(3, 1.0), (3, 0.0)]);
        let b = bracket(&g.t, 0.2);
        assert_eq!((b[0].0, b[1].0), (0, 1));
        assert!((b[0].1 - 0.4).abs() < 1e-12 && (b[1].1 - 0.6).abs() < 1e-12);
        assert!(Grids::new(0.5, &shape(0, 5, 7, 2.0, 3.0, 1.0)).is_err());
    }

    #[test]
    fn interpolation_reproduces_trilinear_fields() {
        let g = Grids::new(1.0, &shape(4, 5, 6, 2.0, 3.0, 1.0)).unwrap();
        let f = |s: f64, x: f64, y: f64| 1.0 + 2.0 * s - x + 0.5 * y + s * x * y;
        let mut p = DensityPair::zeros(g.clone());
        for n in 0..g.interior_len() {
            let (i, j, k) = g.unindex(n);
            p.psi[n] = f(g.t[i], g.x[j], g.y[k]);
        }
        for &(s, x, y) in &[(0.3, 0.7, -1.1), (0.9, 1.9, 2.5)] {
            assert!((p.psi_at(s, x, y) - f(s, x, y)).abs() < 1e-12);
        }
    }

    #[test]
    fn envelope_fit_dominates_and_sums() {
        let env = Envelope {
            k1: 2.0,
            k2: 1.5,
            horizon: 0.5,
        };
        let norms: Vec<f64> = (0..7)
            .map(|n| env.value(n) * if n % 3 == 0 { 0.5 } else { 1.0 })
            .collect();
        let fit = Envelope::fit(&norms, 0.5).unwrap();
        for (n, v) in norms.iter().enumerate().skip(2) {
            assert!(fit.value(n) >= *v);
        }
        let direct: f64 = (7..200).map(|n| fit.value(n)).sum();
        assert!((fit.tail(6) - direct).abs() < 1e-12 * direct);
        assert!(Envelope::fit(&[1.0], 0.5).is_none());
        assert!(Envelope::fit(&[1.0, 0.0, 0.0], 0.5).is_none());
    }

    #[test]
    fn zero_problem_stops_after_one_iterate() {
        let spec = ProblemSpec::zero_problem(0.5);
        let sol = solve_densities(&spec, small()).unwrap();
        assert_eq!(sol.diagnostics.iterations, 1);
        assert!(sol.densities.psi.iter().all(|v| *v == 0.0));
        assert_eq!(evaluate_solution(&spec, &sol, 0.3, 0.5, 0.1).unwrap(), 0.0);
    }

    #[test]
    fn zero_pair_maps_to_zero_and_grids_must_match() {
        let spec = ProblemSpec::tanh_benchmark();
        let setup = Setup::new(&spec, small()).unwrap();
        let op = VolterraOperator::assemble(&setup.integ, &setup.grids).unwrap();
        let z = DensityPair::zeros(setup.grids.clone());
        let out = volterra_step(&op, &z).unwrap();
        assert!(out.psi.iter().chain(&out.psi_side).all(|v| *v == 0.0));
        let other = DensityPair::zeros(Grids::new(0.5, &shape(2, 4, 6, 2.0, 2.5, 1.5)).unwrap());
        assert_eq!(volterra_step(&op, &other).unwrap_err(), Error::GridMismatch);
    }

    #[test]
    fn step_matches_direct_convolution() {
        let spec = ProblemSpec::tanh_benchmark();
        let setup = Setup::new(&spec, small()).unwrap();
        let g = &setup.grids;
        let op = VolterraOperator::assemble(&setup.integ, g).unwrap();
        let mut p = DensityPair::zeros(g.clone());
        for n in 0..g.interior_len() {
            let (i, j, k) = g.unindex(n);
            p.psi[n] = math::exp(-4.0 * (g.x[j] - 0.8) * (g.x[j] - 0.8) - g.y[k] * g.y[k])
                * (1.0 + g.t[i]);
        }
        for n in 0..g.side_len() {
            p.psi_side[n] = 0.5 + 0.1 * g.ys[g.side_unindex(n).1];
        }
        let next = volterra_step(&op, &p).unwrap();
        let integ = &setup.integ;
        for &(i, j, k) in &[(2, 2, 3), (1, 3, 2)] {
            let (t, x, y) = (g.t[i], g.x[j], g.y[k]);
            let direct = integ
                .convolve_time(KernelKind::PKQ, &|s, x0, y0| p.psi_at(s, x0, y0), t, x, y)
                .unwrap()
                + integ
                    .convolve_boundary(KernelKind::PKQ, &|s, y0| p.side_at(s, y0), t, x, y)
                    .unwrap();
            let got = next.psi[g.index(i, j, k)];
            assert!(
                (got - direct).abs() < 1e-12 * (1.0 + direct.abs()),
                "{got} {direct}"
            );
        }
        let (t, y) = (g.ts[2], g.ys[3]);
        let direct = -integ
            .convolve_time(KernelKind::KQ, &|s, x0, y0| p.psi_at(s, x0, y0), t, 0.0, y)
            .unwrap()
            - integ
                .convolve_boundary(KernelKind::KQ, &|s, y0| p.side_at(s, y0), t, 0.0, y)
                .unwrap();
        let got = next.psi_side[g.side_index(2, 3)];
        assert!(
            (got - direct).abs() < 1e-12 * (1.0 + direct.abs()),
            "{got} {direct}"
        );
    }

    #[test]
    fn affine_residual_vanishes_for_constant_data() {
        // exact-linear drift: PK^Q integrates to zero, so psi_0 = f
        let spec = ProblemSpec::affine(-2.0, 0.5, 0.0, 0.5).with_data(
            DataFn::Constant(0.25),
            DataFn::Constant(1.0),
            DataFn::Zero,
        );
        let setup = Setup::new_unchecked(&spec, small()).unwrap();
        let p = initial_difference(&setup).unwrap();
        assert!(p.psi.iter().all(|v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn linearity_in_the_data() {
        let spec = ProblemSpec::tanh_benchmark();
        let doubled = spec.clone().with_data(
            spec.f.clone().scaled(2.0),
            spec.u_init.clone().scaled(2.0),
            spec.u_side.clone().scaled(2.0),
        );
        let a = solve_densities(&spec, small()).unwrap();
        let b = solve_densities(&doubled, small()).unwrap();
        assert_eq!(a.diagnostics.iterations, b.diagnostics.iterations);
        for (p, q) in a.densities.psi.iter().zip(&b.densities.psi) {
            assert!((2.0 * p - q).abs() <= 1e-14 * q.abs().max(1.0));
        }
        let ua = evaluate_solution(&spec, &a, 0.4, 0.5, 0.2).unwrap();
        let ub = evaluate_solution(&doubled, &b, 0.4, 0.5, 0.2).unwrap();
        assert!((2.0 * ua - ub).abs() < 1e-13);
    }

    #[test]
    fn out_of_domain_and_margin_errors() {
        let spec = ProblemSpec::zero_problem(0.5);
        let sol = solve_densities(&spec, small()).unwrap();
        assert!(matches!(
            evaluate_solution(&spec, &sol, 0.7, 0.5, 0.0),
            Err(Error::OutOfDomain { .. })
        ));
        assert!(matches!(
            evaluate_solution(&spec, &sol, 0.3, 0.0, 0.0),
            Err(Error::OutOfDomain { .. })
        ));
        assert_eq!(
            residual_report(&spec, &sol, &[(0.3, 0.01, 0.0)], 0.01).unwrap_err(),
            Error::MarginViolation
        );
        let bad = SolverConfig {
            tolerance: 0.0,
            ..small()
        };
        assert!(solve_densities(&spec, bad).is_err());
        assert!(matches!(
            solve_densities(&ProblemSpec::kolmogorov(0.5), small()),
            Err(Error::InvalidSpec(_))
        ));
    }
}
