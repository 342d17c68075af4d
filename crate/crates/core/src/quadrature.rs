//! Kernel-weighted integrals over the interior base-point plane and the side
//! boundary strip.
//!
//! Interior integrals are split at `|x - x0| = 2 K1 T`. The near part is
//! integrated in the standardized variables
//!
//! ```text
//! y0 = y - sqrt(t) v,   x0 = x + b1(x, y0) t - B(x, y0) t^{3/2} u,   w = sqrt(12) (u + v/2)
//! ```
//!
//! in which the frozen kernel is close to a standard Gaussian in `(w, v)`.
//! For fixed `v` the map `u -> x0` is affine, so the constraint `x0 > 0` and
//! the split are exact interval clips in `w`. The far part uses a
//! compactified Gauss-Legendre rule.
//!
//! Boundary integrals are split in `t` at `x / (2 K1)` and `2 x / b_lower`.
//! The outer regions use `(t, v = (y - y0)/sqrt(t))`, the middle region uses
//!
//! ```text
//! y0 = y - sqrt(x) v,   t = x (1 - B sqrt(x) r) / |b1(0, y0)|,   w = sqrt(12 l^3) (r + v / (2 l))
//! ```
//!
//! with `l = |b1(0, y0)|`, which resolves the concentration of the side
//! kernel at `t ~ x / l` for small `x`.

use alloc::vec::Vec;

use crate::corrections::{eval_kernel, Corrector, FrozenQ, KernelKind, TargetPoint};
use crate::error::{Error, Result};
use crate::frozen_kernels::{boundary_point, kernel_k_unchecked, FrozenPoint};
use crate::math::{self, SQRT_12};
use crate::problem_model::{AssumptionReport, ProblemSpec};

/// Nodes and weights of a rule on `[-1, 1]`, nodes ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    /// `n`-point Gauss-Legendre rule, exact for polynomials of degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::BadConfig("a rule needs at least one node"));
        }
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut z = math::cos(math::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, z);
                dp = d;
                let dz = p / d;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, z);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[m - 1] = 0.0;
        }
        Ok(QuadratureRule { nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Highest polynomial degree integrated exactly.
    pub fn degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    /// Visit the nodes mapped to `[a, b]` split into `panels` equal panels.
    #[inline]
    pub fn for_each<F: FnMut(f64, f64)>(&self, a: f64, b: f64, panels: usize, mut f: F) {
        if !(b > a) || panels == 0 {
            return;
        }
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + h * p as f64;
            for (z, w) in self.nodes.iter().zip(self.weights.iter()) {
                f(lo + 0.5 * h * (z + 1.0), 0.5 * h * w);
            }
        }
    }

    /// Composite integral of `f` over `[a, b]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let mut acc = 0.0;
        self.for_each(a, b, panels, |x, w| acc += w * f(x));
        acc
    }
}

/// `(P_n(z), P_n'(z))`.
fn legendre(n: usize, z: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = z;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// Node counts and truncation for the kernel integrals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadConfig {
    /// Nodes of the graded time rule.
    pub time_nodes: usize,
    /// Nodes per standardized spatial axis.
    pub space_nodes: usize,
    /// Truncation radius in standardized coordinates.
    pub radius: f64,
    /// Exponent `p` of the grading `t - s = t sigma^p`.
    pub grading: f64,
    /// Nodes per axis of the far-field rule.
    pub far_nodes: usize,
    /// Nodes per spatial axis of the boundary rules. The residual kernels
    /// carry high-degree polynomial weights there and need more.
    pub boundary_nodes: usize,
}

impl Default for QuadConfig {
    fn default() -> Self {
        QuadConfig {
            time_nodes: 16,
            space_nodes: 24,
            radius: 6.0,
            grading: 2.0,
            far_nodes: 12,
            boundary_nodes: 32,
        }
    }
}

impl QuadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.time_nodes < 2
            || self.space_nodes < 4
            || self.far_nodes < 2
            || self.boundary_nodes < 4
        {
            return Err(Error::BadConfig(
                "rule undersized: use at least 2 time nodes, 4 spatial or boundary nodes and 2 far nodes",
            ));
        }
        if !(self.radius >= 2.0) || !self.radius.is_finite() {
            return Err(Error::BadConfig("truncation radius must be at least 2"));
        }
        if !(self.grading >= 1.0) || !self.grading.is_finite() {
            return Err(Error::BadConfig("grading exponent must be at least 1"));
        }
        Ok(())
    }

    /// Half the node counts, for two-level error estimates.
    pub fn coarse(&self) -> Self {
        QuadConfig {
            time_nodes: (self.time_nodes / 2).max(2),
            space_nodes: (self.space_nodes / 2).max(4),
            far_nodes: (self.far_nodes / 2).max(2),
            boundary_nodes: (self.boundary_nodes / 2).max(4),
            ..*self
        }
    }

    /// Twice the node counts.
    pub fn refined(&self) -> Self {
        QuadConfig {
            time_nodes: self.time_nodes * 2,
            space_nodes: self.space_nodes * 2,
            far_nodes: self.far_nodes * 2,
            boundary_nodes: self.boundary_nodes * 2,
            ..*self
        }
    }
}

/// The change of variables used on a region.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    InteriorNear,
    InteriorFar,
    BoundaryOuter,
    BoundaryMiddle,
}

impl Transform {
    /// `|d(x0, y0) / d(w, v)|` (interior) or `|d(t, y0) / d(., v)|`
    /// (boundary); `a`, `b`, `c` are the transform's local parameters:
    /// near `(B, t, -)`, outer `(t, -, -)`, middle `(B, x, l)`.
    pub fn jacobian(self, a: f64, b: f64, c: f64) -> f64 {
        match self {
            Transform::InteriorNear => a * b * b / SQRT_12,
            Transform::InteriorFar => 1.0,
            Transform::BoundaryOuter => math::sqrt(a),
            Transform::BoundaryMiddle => a * b * b / (c * math::sqrt(12.0 * c * c * c)),
        }
    }
}

/// A value with a two-level (full versus halved rule) discrepancy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
}

/// Region constants for the splits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegionConsts {
    pub k1: f64,
    pub b_lower: f64,
    pub horizon: f64,
}

impl RegionConsts {
    pub fn from_report(report: &AssumptionReport, horizon: f64) -> Self {
        RegionConsts {
            k1: report.k1(),
            b_lower: report.b_lower,
            horizon,
        }
    }
}

/// Near and far contributions of an interior integral.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InteriorParts {
    pub near: f64,
    pub far: f64,
    /// Whether the split clipped the near region, i.e. the far rule ran.
    pub far_used: bool,
}

/// Region contributions of a boundary integral.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct BoundaryParts {
    pub early: f64,
    pub middle: f64,
    pub late: f64,
}

impl BoundaryParts {
    pub fn total(&self) -> f64 {
        self.early + self.middle + self.late
    }
}

/// Immutable rules plus the problem they integrate for.
#[derive(Clone, Debug)]
pub struct Integrator<'a> {
    pub spec: &'a ProblemSpec,
    pub corr: Corrector,
    pub cfg: QuadConfig,
    pub consts: RegionConsts,
    time: QuadratureRule,
    /// Outer (`v`) rule.
    space: QuadratureRule,
    /// Inner (`w`) rule.
    inner: QuadratureRule,
    far: QuadratureRule,
    /// Both spatial axes of the boundary integrals.
    bnd: QuadratureRule,
}

impl<'a> Integrator<'a> {
    pub fn new(spec: &'a ProblemSpec, cfg: QuadConfig, consts: RegionConsts) -> Result<Self> {
        cfg.validate()?;
        if !(consts.k1 > 0.0) || !(consts.horizon > 0.0) {
            return Err(Error::BadConfig("region constants must be positive"));
        }
        Ok(Integrator {
            spec,
            corr: Corrector::new(),
            cfg,
            consts,
            time: QuadratureRule::gauss_legendre(cfg.time_nodes)?,
            space: QuadratureRule::gauss_legendre(cfg.space_nodes)?,
            inner: QuadratureRule::gauss_legendre(cfg.space_nodes)?,
            far: QuadratureRule::gauss_legendre(cfg.far_nodes)?,
            bnd: QuadratureRule::gauss_legendre(cfg.boundary_nodes)?,
        })
    }

    /// Same problem and constants with a different rule set.
    pub fn with_config(&self, cfg: QuadConfig) -> Result<Self> {
        Integrator::new(self.spec, cfg, self.consts)
    }

    #[inline]
    fn split(&self) -> f64 {
        2.0 * self.consts.k1 * self.consts.horizon
    }

    /// `int int k_{x0,y0}(t, x, y) g(x0, y0) dx0 dy0` over `x0 > 0`.
    pub fn interior(
        &self,
        kind: KernelKind,
        g: &dyn Fn(f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<f64> {
        let p = self.interior_parts(kind, g, t, x, y)?;
        Ok(p.near + p.far)
    }

    pub fn interior_parts(
        &self,
        kind: KernelKind,
        g: &dyn Fn(f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<InteriorParts> {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        let tp = TargetPoint::new(self.spec, x, y);
        let mut out = InteriorParts::default();
        out.far_used = self.interior_near(kind, t, &tp, &mut |_, _, _| {}, &mut |x0, y0, w| {
            out.near += w * g(x0, y0)
        })?;
        if out.far_used {
            self.interior_far(kind, t, &tp, &mut |x0, y0, w| out.far += w * g(x0, y0))?;
        }
        Ok(out)
    }

    /// Every node `(x0, y0, weight)` of the interior rule, so that the
    /// integral of `g` is `sum weight * g(x0, y0)`. Returns whether the far
    /// region was needed.
    pub fn interior_nodes(
        &self,
        kind: KernelKind,
        t: f64,
        x: f64,
        y: f64,
        sink: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<bool> {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        let tp = TargetPoint::new(self.spec, x, y);
        let clipped = self.interior_near(kind, t, &tp, &mut |_, _, _| {}, sink)?;
        if clipped {
            self.interior_far(kind, t, &tp, sink)?;
        }
        Ok(clipped)
    }

    /// Near-region rule; `visit(u, v, integrand)` sees every transformed
    /// integrand value. Returns the value and whether the split clipped.
    fn interior_near(
        &self,
        kind: KernelKind,
        t: f64,
        tp: &TargetPoint,
        visit: &mut dyn FnMut(f64, f64, f64),
        sink: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<bool> {
        let r = self.cfg.radius;
        let st = math::sqrt(t);
        let split = self.split();
        let vc = -tp.b2 * st;
        let mut clipped = false;
        let mut err = None;
        // Where the x0 > 0 clip sweeps through [-R, R] the v-integrand
        // changes fast; integrate piecewise between those crossings.
        let w_pos = |v: f64| {
            let y0 = tp.y - st * v;
            let bb = self.spec.hypo_b(tp.x, y0);
            SQRT_12 * ((tp.x + self.spec.b1.value(tp.x, y0) * t) / (bb * t * st) + 0.5 * v)
        };
        let cuts = self.cut_points(vc - r, vc + r, &[&w_pos], &[-r, r]);
        for piece in cuts.windows(2) {
            if !(w_pos(0.5 * (piece[0] + piece[1])) > -r) {
                continue;
            }
            self.space.for_each(piece[0], piece[1], 1, |v, wv| {
                if err.is_some() {
                    return;
                }
                let y0 = tp.y - st * v;
                let b1 = self.spec.b1.value(tp.x, y0);
                let bb = self.spec.hypo_b(tp.x, y0);
                if !(bb > 0.0) {
                    err = Some(Error::InvalidSpec("db1/dy must be positive"));
                    return;
                }
                let s = bb * t * st;
                let u_pos = (tp.x + b1 * t) / s;
                let u_lo = (b1 * t - split) / s;
                let u_hi = ((b1 * t + split) / s).min(u_pos);
                let w_lo = SQRT_12 * (u_lo + 0.5 * v);
                let w_hi = SQRT_12 * (u_hi + 0.5 * v);
                let w_pos = SQRT_12 * (u_pos + 0.5 * v);
                if w_lo > -r || (w_hi < r && w_hi < w_pos) {
                    clipped = true;
                }
                let lo = w_lo.max(-r);
                let hi = w_hi.min(r);
                if !(hi > lo) {
                    return;
                }
                let jac = Transform::InteriorNear.jacobian(bb, t, 0.0);
                self.inner.for_each(lo, hi, 1, |w, ww| {
                    if err.is_some() {
                        return;
                    }
                    let u = w / SQRT_12 - 0.5 * v;
                    let x0 = tp.x + b1 * t - s * u;
                    if !(x0 > 0.0) {
                        return;
                    }
                    match FrozenPoint::new(self.spec, x0, y0) {
                        Ok(pt) => {
                            let fq = FrozenQ::new(&self.corr, pt);
                            let val = eval_kernel(kind, &self.corr, &fq, t, tp) * jac;
                            visit(u, v, val);
                            sink(x0, y0, wv * ww * val);
                        }
                        Err(e) => err = Some(e),
                    }
                });
            });
        }
        match err {
            Some(e) => Err(e),
            None => Ok(clipped),
        }
    }

    /// Far region `|x - x0| >= 2 K1 T` on compactified axes.
    fn interior_far(
        &self,
        kind: KernelKind,
        t: f64,
        tp: &TargetPoint,
        sink: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<()> {
        let split = self.split();
        let st = math::sqrt(t);
        let mut err = None;
        let half_pi = 0.5 * math::PI;
        let mut line = |x0: f64, wx: f64, err: &mut Option<Error>| {
            self.far.for_each(-1.0, 1.0, 4, |z, wz| {
                if err.is_some() {
                    return;
                }
                let tan = math::sin(half_pi * z) / math::cos(half_pi * z);
                let y0 = tp.y + st * tan;
                let jy = st * half_pi / (math::cos(half_pi * z) * math::cos(half_pi * z));
                if !jy.is_finite() {
                    return;
                }
                match FrozenPoint::new(self.spec, x0, y0) {
                    Ok(pt) => {
                        let fq = FrozenQ::new(&self.corr, pt);
                        sink(
                            x0,
                            y0,
                            wx * wz * jy * eval_kernel(kind, &self.corr, &fq, t, tp),
                        );
                    }
                    Err(e) => *err = Some(e),
                }
            });
        };
        if tp.x > split {
            self.far
                .for_each(0.0, tp.x - split, 4, |x0, wx| line(x0, wx, &mut err));
        }
        // x0 = x + split + split s / (1 - s)
        self.far.for_each(0.0, 1.0, 4, |s, ws| {
            let x0 = tp.x + split + split * s / (1.0 - s);
            let jx = split / ((1.0 - s) * (1.0 - s));
            line(x0, ws * jx, &mut err);
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `int_0^t int k^bdy_{y0}(s, x, y) g(s, y0) dy0 ds` with
    /// `k^bdy = |b1(0, y0)| k_{0, y0}`.
    pub fn boundary(
        &self,
        kind: KernelKind,
        g: &dyn Fn(f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<f64> {
        Ok(self.boundary_parts(kind, g, t, x, y)?.total())
    }

    pub fn boundary_parts(
        &self,
        kind: KernelKind,
        g: &dyn Fn(f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<BoundaryParts> {
        let mut out = BoundaryParts::default();
        self.boundary_nodes(kind, t, x, y, &mut |region, s, y0, w| {
            let slot = match region {
                0 => &mut out.early,
                1 => &mut out.middle,
                _ => &mut out.late,
            };
            *slot += w * g(s, y0);
        })?;
        Ok(out)
    }

    /// Every node `(region, s, y0, weight)` of the boundary rule; regions are
    /// numbered early, middle, late.
    pub fn boundary_nodes(
        &self,
        kind: KernelKind,
        t: f64,
        x: f64,
        y: f64,
        sink: &mut dyn FnMut(usize, f64, f64, f64),
    ) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        if !(x >= 0.0) {
            return Err(Error::NonpositiveCoordinate(x));
        }
        if !(self.consts.b_lower > 0.0) {
            return Err(Error::InvalidSpec(
                "side boundary kernels need b1(0, y) <= -b_lower < 0",
            ));
        }
        let tp = TargetPoint::new(self.spec, x, y);
        let (ta, tb) = self.boundary_splits(x);
        if ta > 0.0 {
            self.boundary_outer(kind, 0.0, ta.min(t), &tp, &mut |s, y0, w| sink(0, s, y0, w))?;
        }
        if x > 0.0 && ta < t {
            self.boundary_middle(
                kind,
                ta,
                tb.min(t),
                &tp,
                &mut |_, _, _| {},
                &mut |s, y0, w| sink(1, s, y0, w),
            )?;
        }
        if tb < t {
            self.boundary_outer(kind, tb, t, &tp, &mut |s, y0, w| sink(2, s, y0, w))?;
        }
        Ok(())
    }

    /// `(x / (2 K1), 2 x / b_lower)`.
    pub fn boundary_splits(&self, x: f64) -> (f64, f64) {
        (x / (2.0 * self.consts.k1), 2.0 * x / self.consts.b_lower)
    }

    fn boundary_outer(
        &self,
        kind: KernelKind,
        a: f64,
        b: f64,
        tp: &TargetPoint,
        sink: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<()> {
        let r = self.cfg.radius;
        let lam0 = -self.spec.b1.value(0.0, tp.y);
        let bb0 = self.spec.hypo_b(0.0, tp.y);
        let b20 = self.spec.b2.value(0.0, tp.y);
        let mut err = None;
        self.time.for_each(a, b, 1, |s, ws| {
            let st = math::sqrt(s);
            // Conditional centre of the y-Gaussian given the x-offset.
            let xs0 = (tp.x - lam0 * s) / (bb0 * s * st);
            let vc = (-1.5 * xs0 - b20 * st).clamp(-2.0 * r, 2.0 * r);
            self.bnd.for_each(vc - r, vc + r, 1, |v, wv| {
                if err.is_some() {
                    return;
                }
                let y0 = tp.y - st * v;
                match boundary_point(self.spec, y0) {
                    Ok(pt) => {
                        let fq = FrozenQ::new(&self.corr, pt);
                        let k = -pt.b1v * eval_kernel(kind, &self.corr, &fq, s, tp);
                        sink(
                            s,
                            y0,
                            ws * wv * Transform::BoundaryOuter.jacobian(s, 0.0, 0.0) * k,
                        );
                    }
                    Err(e) => err = Some(e),
                }
            });
        });
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn boundary_middle(
        &self,
        kind: KernelKind,
        ta: f64,
        tm: f64,
        tp: &TargetPoint,
        visit: &mut dyn FnMut(f64, f64, f64),
        sink: &mut dyn FnMut(f64, f64, f64),
    ) -> Result<()> {
        if !(tm > ta) {
            return Ok(());
        }
        let r = self.cfg.radius;
        let x = tp.x;
        let sx = math::sqrt(x);
        let lam0 = -self.spec.b1.value(0.0, tp.y);
        let vc = -self.spec.b2.value(0.0, tp.y) * sx / lam0;
        // The y-Gaussian has variance 1/l; size the range by the smallest l
        // near the target, never below b_lower.
        let mut lam_eff = lam0;
        for k in [-1.0, 1.0] {
            let yk = tp.y + k * sx * r / math::sqrt(lam0);
            lam_eff = lam_eff.min(-self.spec.b1.value(0.0, yk));
        }
        let vr = r / math::sqrt(lam_eff.max(self.consts.b_lower));
        let mut err = None;
        let edge = |v: f64, tau: f64| {
            let y0 = tp.y - sx * v;
            let lam = -self.spec.b1.value(0.0, y0);
            let bb = self.spec.hypo_b(0.0, y0);
            math::sqrt(12.0 * lam * lam * lam)
                * ((1.0 - lam * tau / x) / (bb * sx) + v / (2.0 * lam))
        };
        let lo_edge = |v: f64| edge(v, tm);
        let hi_edge = |v: f64| edge(v, ta);
        let cuts = self.cut_points(vc - vr, vc + vr, &[&lo_edge, &hi_edge], &[-r, r]);
        for piece in cuts.windows(2) {
            self.bnd.for_each(piece[0], piece[1], 1, |v, wv| {
                if err.is_some() {
                    return;
                }
                let y0 = tp.y - sx * v;
                let pt = match boundary_point(self.spec, y0) {
                    Ok(pt) => pt,
                    Err(e) => {
                        err = Some(e);
                        return;
                    }
                };
                let fq = FrozenQ::new(&self.corr, pt);
                let lam = -pt.b1v;
                let bb = pt.bv;
                let sc = math::sqrt(12.0 * lam * lam * lam);
                let shift = v / (2.0 * lam);
                let r_lo = (1.0 - lam * tm / x) / (bb * sx);
                let r_hi = (1.0 - lam * ta / x) / (bb * sx);
                let lo = sc * (r_lo + shift);
                let hi = sc * (r_hi + shift);
                if !(hi > lo) {
                    return;
                }
                let jac = Transform::BoundaryMiddle.jacobian(bb, x, lam);
                let mut node = |w: f64, ww: f64| {
                    let rr = w / sc - shift;
                    let s = x * (1.0 - bb * sx * rr) / lam;
                    if !(s > 0.0) {
                        return;
                    }
                    let val = lam * eval_kernel(kind, &self.corr, &fq, s, tp) * jac;
                    visit(rr, v, val);
                    sink(s, y0, wv * ww * val);
                };
                // Gaussian core, then log-graded tails: away from small x the
                // transform is far from Gaussian and the large-t side decays slowly.
                self.bnd.for_each(lo.max(-r), hi.min(r), 1, &mut node);
                for (a, b, sign) in [(r.max(lo), hi, 1.0), ((-hi).max(r), -lo, -1.0)] {
                    if b > a {
                        let l = math::ln(b / a);
                        self.bnd.for_each(0.0, 1.0, 1, |sg, ws| {
                            let w = a * math::exp(l * sg);
                            node(sign * w, ws * w * l);
                        });
                    }
                }
            });
        }
        match err {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// `[a, crossings..., b]`: the points in `(a, b)` where any of `fs`
    /// crosses any of `levels`, located on a sampling grid and refined by
    /// bisection.
    fn cut_points(&self, a: f64, b: f64, fs: &[&dyn Fn(f64) -> f64], levels: &[f64]) -> Vec<f64> {
        let m = 4 * self.cfg.space_nodes;
        let h = (b - a) / m as f64;
        let mut out = alloc::vec![a, b];
        for f in fs {
            let mut prev = f(a);
            for i in 1..=m {
                let xi = a + h * i as f64;
                let cur = f(xi);
                for &l in levels {
                    if (prev - l) * (cur - l) < 0.0 {
                        let (mut lo, mut hi) = (xi - h, xi);
                        let below = prev < l;
                        for _ in 0..48 {
                            let mid = 0.5 * (lo + hi);
                            if (f(mid) < l) == below {
                                lo = mid;
                            } else {
                                hi = mid;
                            }
                        }
                        out.push(0.5 * (lo + hi));
                    }
                }
                prev = cur;
            }
        }
        out.sort_by(|p, q| p.partial_cmp(q).unwrap_or(core::cmp::Ordering::Equal));
        out.dedup_by(|p, q| (*p - *q).abs() <= 1e-12 * (b - a));
        out
    }

    /// `int_0^t int int k_{x0,y0}(t - s, x, y) psi(s, x0, y0) dx0 dy0 ds`,
    /// graded toward `s = t` by `t - s = t sigma^p`.
    pub fn convolve_time(
        &self,
        kind: KernelKind,
        psi: &dyn Fn(f64, f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        let mut acc = 0.0;
        self.convolve_time_nodes(kind, t, x, y, &mut |s, x0, y0, w| acc += w * psi(s, x0, y0))?;
        Ok(acc)
    }

    /// Nodes `(s, x0, y0, weight)` of [`Integrator::convolve_time`].
    pub fn convolve_time_nodes(
        &self,
        kind: KernelKind,
        t: f64,
        x: f64,
        y: f64,
        sink: &mut dyn FnMut(f64, f64, f64, f64),
    ) -> Result<()> {
        if !(t > 0.0) {
            return Err(Error::NonpositiveTime(t));
        }
        let p = self.cfg.grading;
        for (z, w) in self.time.nodes.iter().zip(self.time.weights.iter()) {
            let sigma = 0.5 * (z + 1.0);
            let tau = t * math::powf(sigma, p);
            let dtau = 0.5 * w * p * t * math::powf(sigma, p - 1.0);
            let s = t - tau;
            self.interior_nodes(kind, tau, x, y, &mut |x0, y0, wi| {
                sink(s, x0, y0, dtau * wi)
            })?;
        }
        Ok(())
    }

    /// Boundary convolution `int_0^t int k^bdy_{y0}(t - s, x, y) psi(s, y0) dy0 ds`.
    pub fn convolve_boundary(
        &self,
        kind: KernelKind,
        psi: &dyn Fn(f64, f64) -> f64,
        t: f64,
        x: f64,
        y: f64,
    ) -> Result<f64> {
        self.boundary(kind, &|tau, y0| psi(t - tau, y0), t, x, y)
    }

    /// Largest transformed near-region integrand divided by
    /// `exp(-u^2 / K2 - v^2 / 12)`.
    pub fn interior_envelope_ratio(
        &self,
        kind: KernelKind,
        t: f64,
        x: f64,
        y: f64,
        k2: f64,
    ) -> Result<f64> {
        let tp = TargetPoint::new(self.spec, x, y);
        let mut worst: f64 = 0.0;
        self.interior_near(
            kind,
            t,
            &tp,
            &mut |u, v, val| {
                let env = math::exp(-u * u / k2 - v * v / 12.0);
                worst = worst.max(val.abs() / env);
            },
            &mut |_, _, _| {},
        )?;
        Ok(worst)
    }

    /// Largest transformed middle-region integrand divided by
    /// `exp(-b^3 r^2 / 96 - b v^2 / 24)` with `b = b_lower`.
    pub fn boundary_envelope_ratio(&self, kind: KernelKind, t: f64, x: f64, y: f64) -> Result<f64> {
        let tp = TargetPoint::new(self.spec, x, y);
        let (ta, tb) = self.boundary_splits(x);
        let bl = self.consts.b_lower;
        let mut worst: f64 = 0.0;
        if x > 0.0 && ta < t {
            self.boundary_middle(
                kind,
                ta,
                tb.min(t),
                &tp,
                &mut |r, v, val| {
                    let env = math::exp(-bl * bl * bl * r * r / 96.0 - bl * v * v / 24.0);
                    worst = worst.max(val.abs() / env);
                },
                &mut |_, _, _| {},
            )?;
        }
        Ok(worst)
    }

    /// Value together with the discrepancy against the halved rule.
    pub fn with_error<F>(&self, f: F) -> Result<QuadResult>
    where
        F: Fn(&Integrator<'a>) -> Result<f64>,
    {
        let fine = f(self)?;
        let coarse = f(&self.with_config(self.cfg.coarse())?)?;
        Ok(QuadResult {
            value: fine,
            error: (fine - coarse).abs(),
        })
    }
}

/// `int int K_{pt}(t, x, y) dx dy` over the whole plane, evaluated through
/// the kernel on a standardized tensor rule.
pub fn kernel_mass(pt: &FrozenPoint, t: f64, cfg: &QuadConfig) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let rule = QuadratureRule::gauss_legendre(cfg.space_nodes.max(24))?;
    let r = cfg.radius.max(7.0);
    let st = math::sqrt(t);
    let sb = pt.bv * t * st;
    // XS = w / sqrt(12) - YS / 2; recover (x, y) from (XS, YS).
    let mut acc = 0.0;
    rule.for_each(-r, r, 1, |yy, wy| {
        rule.for_each(-r, r, 1, |w, ww| {
            let big_xs = w / SQRT_12 - 0.5 * yy;
            let xs = big_xs + 0.5 * pt.b2v * st;
            let ys = yy - pt.b2v * st;
            let x = pt.x0 - pt.b1v * t + sb * xs;
            let y = pt.y0 + st * ys;
            acc += wy * ww * kernel_k_unchecked(pt, t, x, y) * sb * st / SQRT_12;
        });
    });
    Ok(acc)
}

/// `int_0^1 s^{-3/2} exp(-(x - s)^2 / s^3) g(s) ds`, split at `x/2` and `2x`.
pub fn laplace_model_integral(x: f64, g: &dyn Fn(f64) -> f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::NonpositiveCoordinate(x));
    }
    let rule = QuadratureRule::gauss_legendre(16)?;
    let f = |s: f64| {
        let d = x - s;
        math::exp(-d * d / (s * s * s)) / (s * math::sqrt(s)) * g(s)
    };
    let a = (0.5 * x).min(1.0);
    let b = (2.0 * x).min(1.0);
    let mut acc = rule.integrate(0.0, a, 2, f);
    if b > a {
        // z = (s - x) / x^{3/2}
        let x32 = x * math::sqrt(x);
        let (za, zb) = ((a - x) / x32, (b - x) / x32);
        let panels = (math::ceil(zb - za) as usize).max(1);
        acc += rule.integrate(za, zb, panels, |z| x32 * f(x + x32 * z));
    }
    if b < 1.0 {
        // s = b (1 / b)^sigma
        let l = math::ln(1.0 / b);
        acc += rule.integrate(0.0, 1.0, 4, |sg| {
            let s = b * math::exp(l * sg);
            s * l * f(s)
        });
    }
    Ok(acc)
}

/// Richardson table for values at `h, h/2, h/4, ...` with an error
/// expansion in integer powers of `h`.
pub fn richardson_halving(values: &[f64]) -> f64 {
    let mut row = values.to_vec();
    let mut pow = 1.0;
    while row.len() > 1 {
        pow *= 2.0;
        row = row
            .windows(2)
            .map(|p| (pow * p[1] - p[0]) / (pow - 1.0))
            .collect();
    }
    row.first().copied().unwrap_or(f64::NAN)
}

/// The small-`x` limit `sqrt(pi) g(0) + int_0^1 s^{-3/2} e^{-1/s} g(s) ds`.
pub fn laplace_limit(g: &dyn Fn(f64) -> f64) -> Result<f64> {
    let rule = QuadratureRule::gauss_legendre(32)?;
    let tail = rule.integrate(0.0, 1.0, 4, |s| {
        if s <= 0.0 {
            0.0
        } else {
            math::exp(-1.0 / s) / (s * math::sqrt(s)) * g(s)
        }
    });
    Ok(math::sqrt(math::PI) * g(0.0) + tail)
}

#[allow(clippy::excessive_precision)]
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
];
#[allow(clippy::excessive_precision)]
const GK_WK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
#[allow(clippy::excessive_precision)]
const GK_WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn gk15(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = GK_WK[7] * fc;
    let mut gs = GK_WG[3] * fc;
    for i in 0..7 {
        let d = h * GK_NODES[i];
        let s = f(c - d) + f(c + d);
        k += GK_WK[i] * s;
        if i % 2 == 1 {
            gs += GK_WG[i / 2] * s;
        }
    }
    (k * h, (k - gs).abs() * h)
}

/// Adaptive Gauss-Kronrod 7/15 integration of `f` over `[a, b]`, started
/// from `pieces` equal subintervals. Slow; used as a test oracle.
pub fn adaptive_integrate(
    f: &mut dyn FnMut(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    pieces: usize,
) -> f64 {
    fn rec(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (v, e) = gk15(f, a, b);
        if e <= tol.max(1e-15 * v.abs()) || depth >= 40 {
            return v;
        }
        let m = 0.5 * (a + b);
        rec(f, a, m, 0.5 * tol, depth + 1) + rec(f, m, b, 0.5 * tol, depth + 1)
    }
    if !(b > a) {
        return 0.0;
    }
    let n = pieces.max(1);
    let h = (b - a) / n as f64;
    (0..n)
        .map(|i| {
            rec(
                f,
                a + h * i as f64,
                a + h * (i + 1) as f64,
                tol / n as f64,
                0,
            )
        })
        .sum()
}
