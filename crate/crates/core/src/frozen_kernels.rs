//! Frozen-coefficient Gaussian kernel, its energy and gradient, the side
//! boundary kernel, the diagnostic bound kernels and the linearised operator.

use crate::error::{Error, Result};
use crate::math::{self, SQRT_12};
use crate::problem_model::{AssumptionReport, Jet, ProblemSpec};

/// Coefficients frozen at a base point `(x0, y0)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenPoint {
    pub x0: f64,
    pub y0: f64,
    pub b1v: f64,
    pub b2v: f64,
    /// `B = db1/dy` at the base point.
    pub bv: f64,
    /// `beta_{ij}` in the order of [`crate::problem_model::JET_ORDERS`].
    pub beta: Jet,
}

impl FrozenPoint {
    /// Freeze the coefficients of `spec` at `(x0, y0)`. Refuses `B <= 0`.
    pub fn new(spec: &ProblemSpec, x0: f64, y0: f64) -> Result<Self> {
        let jet = spec.b1.jet(x0, y0);
        let bv = jet[2];
        if !(bv > 0.0) || !bv.is_finite() {
            return Err(Error::InvalidSpec(
                "db1/dy must be positive at the base point",
            ));
        }
        let mut beta = [0.0; 10];
        for (b, d) in beta.iter_mut().zip(jet.iter()) {
            *b = d / bv;
        }
        beta[2] = 1.0;
        Ok(FrozenPoint {
            x0,
            y0,
            b1v: jet[0],
            b2v: spec.b2.value(x0, y0),
            bv,
            beta,
        })
    }

    /// A frozen point with the given values and all higher `beta` zero.
    pub fn from_values(x0: f64, y0: f64, b1v: f64, b2v: f64, bv: f64) -> Self {
        let mut beta = [0.0; 10];
        beta[0] = b1v / bv;
        beta[2] = 1.0;
        FrozenPoint {
            x0,
            y0,
            b1v,
            b2v,
            bv,
            beta,
        }
    }

    #[inline]
    pub fn beta(&self, i: u32, j: u32) -> f64 {
        self.beta[crate::problem_model::jet_index(i, j)]
    }
}

/// Mean and covariance of the frozen Gaussian at time `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianStats {
    pub mu1: f64,
    pub mu2: f64,
    pub d: [[f64; 2]; 2],
    pub dinv: [[f64; 2]; 2],
    pub det_d: f64,
    pub t: f64,
}

#[inline]
fn check_time(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(Error::NonpositiveTime(t))
    }
}

pub fn frozen_stats(pt: &FrozenPoint, t: f64) -> Result<GaussianStats> {
    check_time(t)?;
    let b = pt.bv;
    let d = [
        [b * b * t * t * t / 3.0, -b * t * t / 2.0],
        [-b * t * t / 2.0, t],
    ];
    let dinv = [
        [12.0 / (b * b * t * t * t), 6.0 / (b * t * t)],
        [6.0 / (b * t * t), 4.0 / t],
    ];
    Ok(GaussianStats {
        mu1: pt.x0 - pt.b1v * t + 0.5 * b * pt.b2v * t * t,
        mu2: pt.y0 - pt.b2v * t,
        d,
        dinv,
        det_d: t * t * t * t * b * b / 12.0,
        t,
    })
}

/// Standardised coordinates `(xs, ys)` and their drift-shifted versions
/// `(XS, YS)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coords {
    pub xs: f64,
    pub ys: f64,
    pub big_xs: f64,
    pub big_ys: f64,
}

#[inline]
pub fn coords_unchecked(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Coords {
    let st = math::sqrt(t);
    let xs = (x - pt.x0 + pt.b1v * t) / (pt.bv * t * st);
    let ys = (y - pt.y0) / st;
    Coords {
        xs,
        ys,
        big_xs: xs - 0.5 * pt.b2v * st,
        big_ys: ys + pt.b2v * st,
    }
}

pub fn coords(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<Coords> {
    check_time(t)?;
    Ok(coords_unchecked(pt, t, x, y))
}

/// The quadratic form `6 u^2 + 6 u v + 2 v^2`.
#[inline]
pub fn energy_form(u: f64, v: f64) -> f64 {
    6.0 * u * u + 6.0 * u * v + 2.0 * v * v
}

pub fn energy(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    let c = coords(pt, t, x, y)?;
    Ok(energy_form(c.big_xs, c.big_ys))
}

/// Normalising prefactor `sqrt(12) / (2 pi |B| t^2)`.
#[inline]
pub fn kernel_prefactor(bv: f64, t: f64) -> f64 {
    SQRT_12 / (2.0 * math::PI * bv.abs() * t * t)
}

#[inline]
pub fn kernel_k_unchecked(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> f64 {
    let c = coords_unchecked(pt, t, x, y);
    kernel_prefactor(pt.bv, t) * math::exp(-energy_form(c.big_xs, c.big_ys))
}

/// The frozen Gaussian kernel, a probability density in `(x, y)`.
pub fn kernel_k(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    Ok(kernel_k_unchecked(pt, t, x, y))
}

#[inline]
pub fn energy_grad_from(pt: &FrozenPoint, t: f64, c: &Coords) -> (f64, f64) {
    let st = math::sqrt(t);
    (
        (12.0 * c.big_xs + 6.0 * c.big_ys) / (pt.bv * t * st),
        (6.0 * c.big_xs + 4.0 * c.big_ys) / st,
    )
}

/// `(dE/dx, dE/dy)`.
pub fn energy_grad(pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<(f64, f64)> {
    let c = coords(pt, t, x, y)?;
    Ok(energy_grad_from(pt, t, &c))
}

/// Frozen point at `(0, y0)` for the side boundary; requires `b1(0, y0) < 0`.
pub fn boundary_point(spec: &ProblemSpec, y0: f64) -> Result<FrozenPoint> {
    let pt = FrozenPoint::new(spec, 0.0, y0)?;
    if !(pt.b1v < 0.0) {
        return Err(Error::InvalidSpec(
            "b1(0, y) must be negative on the side boundary",
        ));
    }
    Ok(pt)
}

/// `|b1(0, y0)| K_{0, y0}(t, x, y)`.
pub fn kernel_boundary(spec: &ProblemSpec, y0: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let pt = boundary_point(spec, y0)?;
    Ok(pt.b1v.abs() * kernel_k_unchecked(&pt, t, x, y))
}

/// `(1/(|B| t^2)) exp(-alpha xs^2 - alpha ys^2)`.
pub fn bound_kernel_hat(pt: &FrozenPoint, alpha: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::BadConfig("alpha must be positive"));
    }
    let c = coords(pt, t, x, y)?;
    Ok(math::exp(-alpha * (c.xs * c.xs + c.ys * c.ys)) / (pt.bv.abs() * t * t))
}

/// Constants that shape the majorant kernels, taken from the sampled
/// assumption report.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MajorantConsts {
    pub k1: f64,
    pub k2: f64,
    pub b_lower: f64,
    pub horizon: f64,
}

impl MajorantConsts {
    pub fn from_report(report: &AssumptionReport, horizon: f64) -> Self {
        MajorantConsts {
            k1: report.k1(),
            k2: report.k2(horizon),
            b_lower: report.b_lower,
            horizon,
        }
    }
}

#[inline]
fn y_gauss(t: f64, dy: f64) -> f64 {
    math::exp(-dy * dy / (12.0 * t)) / math::sqrt(t)
}

/// Two-region integrable majorant of the interior kernels, as a function of
/// the base point `(x0, y0)` for a fixed evaluation point.
pub fn majorant_interior(
    spec: &ProblemSpec,
    mc: &MajorantConsts,
    base: (f64, f64),
    t: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    check_time(t)?;
    let (x0, y0) = base;
    let dx = x - x0;
    let yg = y_gauss(t, y - y0);
    if dx.abs() >= 2.0 * mc.k1 * mc.horizon {
        return Ok(t * math::sqrt(t) / (dx * dx + 1.0) * yg);
    }
    let bb = spec.hypo_b(x, y0);
    let z = (dx + spec.b1.value(x, y0) * t) / (bb * t * math::sqrt(t));
    Ok(math::exp(-z * z / mc.k2) / (bb * t * math::sqrt(t)) * yg)
}

/// Three-region majorant of the side boundary kernel as a function of
/// `(t, y0)` for a fixed evaluation point `(x, y)`.
pub fn majorant_boundary(
    spec: &ProblemSpec,
    mc: &MajorantConsts,
    y0: f64,
    t: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    check_time(t)?;
    if !(mc.b_lower > 0.0) {
        return Err(Error::InvalidSpec("side boundary kernels need b_lower > 0"));
    }
    if x < 0.0 {
        return Err(Error::NonpositiveCoordinate(x));
    }
    let dy = y - y0;
    if t <= x / (2.0 * mc.k1) || t >= 2.0 * x / mc.b_lower {
        return Ok(y_gauss(t, dy));
    }
    let b1 = spec.b1.value(0.0, y0);
    let bb = spec.hypo_b(0.0, y0);
    let bl = mc.b_lower;
    let x32 = x * math::sqrt(x);
    let lead = b1.abs() / (bb * x32)
        * math::exp(-(bl * bl * bl / 96.0) * (x + b1 * t) * (x + b1 * t) / (bb * bb * x * x * x));
    Ok(lead * math::exp(-(bl / 24.0) * dy * dy / x) / math::sqrt(x))
}

/// Default finite-difference step `1e-4 max(1, scale)`.
pub fn default_step(scale: f64) -> f64 {
    1e-4 * scale.abs().max(1.0)
}

/// Central-difference application of the linearised operator
/// `1/2 d_yy + (b1v + B (y - y0)) d_x + b2v d_y - d_t` to `g(t, x, y)`.
pub fn apply_pl(
    pt: &FrozenPoint,
    g: &dyn Fn(f64, f64, f64) -> f64,
    t: f64,
    x: f64,
    y: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || t <= h {
        return Err(Error::StepTooLarge { h, t });
    }
    let g0 = g(t, x, y);
    let gyy = (g(t, x, y + h) - 2.0 * g0 + g(t, x, y - h)) / (h * h);
    let gy = (g(t, x, y + h) - g(t, x, y - h)) / (2.0 * h);
    let gx = (g(t, x + h, y) - g(t, x - h, y)) / (2.0 * h);
    let gt = (g(t + h, x, y) - g(t - h, x, y)) / (2.0 * h);
    let b1l = pt.b1v + pt.bv * (y - pt.y0);
    Ok(0.5 * gyy + b1l * gx + pt.b2v * gy - gt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_model::{validate_assumptions, SampleGrid};

    fn ref_pt() -> FrozenPoint {
        FrozenPoint::from_values(0.0, 0.0, -2.0, 0.0, 1.0)
    }

    /// Deterministic pseudo-random sequence for test inputs.
    fn lcg(seed: &mut u64) -> f64 {
        *seed = seed
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (*seed >> 11) as f64 / (1u64 << 53) as f64
    }

    #[test]
    fn stats_reference_point() {
        let s = frozen_stats(&ref_pt(), 1.0).unwrap();
        assert_eq!((s.mu1, s.mu2), (2.0, 0.0));
        assert!((s.d[0][0] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.d[0][1], -0.5);
        assert_eq!(s.d[1][1], 1.0);
        assert!((s.det_d - 1.0 / 12.0).abs() < 1e-15);
        let s2 = frozen_stats(&ref_pt(), 2.0).unwrap();
        assert!((s2.det_d - 16.0 / 12.0).abs() < 1e-14);
        let small = frozen_stats(&ref_pt(), 1e-9).unwrap();
        assert!(small.d.iter().flatten().all(|v| v.abs() < 1e-8));
        assert!(frozen_stats(&ref_pt(), 0.0).is_err());
    }

    #[test]
    fn covariance_inverse_and_determinant() {
        let mut seed = 7;
        for _ in 0..50 {
            let pt = FrozenPoint::from_values(
                0.0,
                0.0,
                -2.0,
                lcg(&mut seed) - 0.5,
                0.1 + 2.0 * lcg(&mut seed),
            );
            let t = 0.01 + lcg(&mut seed);
            let s = frozen_stats(&pt, t).unwrap();
            let det = s.d[0][0] * s.d[1][1] - s.d[0][1] * s.d[1][0];
            assert!((det - s.det_d).abs() <= 1e-12 * s.det_d);
            for i in 0..2 {
                for j in 0..2 {
                    let p: f64 = (0..2).map(|k| s.d[i][k] * s.dinv[k][j]).sum();
                    let id = if i == j { 1.0 } else { 0.0 };
                    assert!((p - id).abs() < 1e-12, "{p}");
                }
            }
        }
    }

    #[test]
    fn coords_zero_at_transported_point() {
        let pt = FrozenPoint::from_values(0.3, -0.2, -1.7, 0.0, 0.8);
        let t = 0.4;
        let c = coords(&pt, t, pt.x0 - pt.b1v * t, pt.y0).unwrap();
        assert!(c.xs.abs() < 1e-15 && c.ys == 0.0);
        assert_eq!((c.big_xs, c.big_ys), (c.xs, c.ys));
        let pt2 = FrozenPoint { b2v: 0.7, ..pt };
        let c2 = coords(&pt2, t, 1.0, 0.5).unwrap();
        assert!(((c2.big_xs - c2.xs).abs() - 0.35 * math::sqrt(t)).abs() < 1e-15);
        assert!(((c2.big_ys - c2.ys).abs() - 0.7 * math::sqrt(t)).abs() < 1e-15);
    }

    #[test]
    fn energy_matches_quadratic_form_and_lower_bound() {
        let mut seed = 11;
        for _ in 0..100 {
            let pt = FrozenPoint::from_values(
                lcg(&mut seed),
                lcg(&mut seed) - 0.5,
                -1.0 - lcg(&mut seed),
                lcg(&mut seed) - 0.5,
                0.2 + lcg(&mut seed),
            );
            let t = 0.05 + lcg(&mut seed);
            let s = frozen_stats(&pt, t).unwrap();
            let x = s.mu1 + (lcg(&mut seed) - 0.5) * 0.5;
            let y = s.mu2 + (lcg(&mut seed) - 0.5) * 2.0;
            let z = [x - s.mu1, y - s.mu2];
            let q: f64 = 0.5
                * (0..2)
                    .flat_map(|i| (0..2).map(move |j| (i, j)))
                    .map(|(i, j)| z[i] * s.dinv[i][j] * z[j])
                    .sum::<f64>();
            let e = energy(&pt, t, x, y).unwrap();
            assert!((e - q).abs() <= 1e-10 * q.max(1e-300), "{e} {q}");
            // Kernel equals the bivariate normal density.
            let pdf = math::exp(-q) / (2.0 * math::PI * math::sqrt(s.det_d));
            let k = kernel_k(&pt, t, x, y).unwrap();
            assert!((k - pdf).abs() <= 1e-10 * pdf);
        }
        assert_eq!(energy_form(1.0, 0.0), 6.0);
        for _ in 0..1000 {
            let u = 10.0 * (lcg(&mut seed) - 0.5);
            let v = 10.0 * (lcg(&mut seed) - 0.5);
            assert!(energy_form(u, v) >= (u * u + v * v) / 3.0 - 1e-12);
        }
    }

    #[test]
    fn kernel_peak_value() {
        let pt = FrozenPoint::from_values(0.5, 0.1, -2.5, 0.3, 0.7);
        let t = 0.3;
        let s = frozen_stats(&pt, t).unwrap();
        let k = kernel_k(&pt, t, s.mu1, s.mu2).unwrap();
        assert!((k - kernel_prefactor(0.7, t)).abs() < 1e-12 * k);
        assert!(energy(&pt, t, s.mu1, s.mu2).unwrap().abs() < 1e-20);
    }

    #[test]
    fn gradient_matches_differences() {
        let mut seed = 3;
        for _ in 0..20 {
            let pt = FrozenPoint::from_values(
                0.2,
                0.0,
                -2.0,
                lcg(&mut seed) - 0.5,
                0.5 + lcg(&mut seed),
            );
            let t = 0.2 + lcg(&mut seed);
            let (x, y) = (0.5 + lcg(&mut seed), lcg(&mut seed) - 0.5);
            let (gx, gy) = energy_grad(&pt, t, x, y).unwrap();
            let h = 1e-5;
            let fx =
                (energy(&pt, t, x + h, y).unwrap() - energy(&pt, t, x - h, y).unwrap()) / (2.0 * h);
            let fy =
                (energy(&pt, t, x, y + h).unwrap() - energy(&pt, t, x, y - h).unwrap()) / (2.0 * h);
            assert!((gx - fx).abs() < 1e-5 * (1.0 + gx.abs()));
            assert!((gy - fy).abs() < 1e-5 * (1.0 + gy.abs()));
        }
        let pt = FrozenPoint::from_values(0.0, 0.0, -2.0, 0.0, 1.3);
        let c = coords(&pt, 0.6, 0.4, 0.9).unwrap();
        let (_, gy) = energy_grad(&pt, 0.6, 0.4, 0.9).unwrap();
        assert!((gy - (6.0 * c.xs + 4.0 * c.ys) / math::sqrt(0.6)).abs() < 1e-12);
    }

    #[test]
    fn boundary_kernel_ratio() {
        let spec = ProblemSpec::tanh_benchmark();
        let k = kernel_boundary(&spec, 0.0, 0.3, 0.5, 0.1).unwrap();
        let pt = FrozenPoint::new(&spec, 0.0, 0.0).unwrap();
        assert!((k / kernel_k(&pt, 0.3, 0.5, 0.1).unwrap() - 2.0).abs() < 1e-14);
        assert!(kernel_boundary(&ProblemSpec::kolmogorov(1.0), 0.5, 0.3, 0.5, 0.1).is_err());
    }

    #[test]
    fn bound_kernel_properties() {
        let pt = FrozenPoint::from_values(0.0, 0.0, -2.0, 0.2, 0.9);
        let t = 0.25;
        let s = frozen_stats(&pt, 1.0).unwrap();
        let _ = s;
        let c0 = coords(&pt, t, -pt.b1v * t, 0.0).unwrap();
        assert!(c0.xs.abs() < 1e-14);
        let at0 = bound_kernel_hat(&pt, 0.3, t, -pt.b1v * t, 0.0).unwrap();
        assert!((at0 - 1.0 / (0.9 * t * t)).abs() < 1e-12);
        let mut seed = 5;
        for _ in 0..100 {
            let (x, y) = (2.0 * lcg(&mut seed), 2.0 * lcg(&mut seed) - 1.0);
            let a = bound_kernel_hat(&pt, 1.0 / 12.0, t, x, y).unwrap();
            let b = bound_kernel_hat(&pt, 1.0 / 6.0, t, x, y).unwrap();
            assert!(a >= b);
            let c = coords(&pt, t, x, y).unwrap();
            let rhs = math::exp((c.xs * c.xs + c.ys * c.ys) / 12.0) * b;
            assert!((a - rhs).abs() <= 1e-12 * a.max(1e-300));
        }
    }

    #[test]
    fn linearised_operator_on_simple_functions() {
        let pt = FrozenPoint::from_values(0.0, 0.0, -2.0, 0.4, 1.0);
        let one = |_t: f64, _x: f64, _y: f64| 1.0;
        assert_eq!(apply_pl(&pt, &one, 0.5, 0.3, 0.2, 1e-3).unwrap(), 0.0);
        let tt = |t: f64, _x: f64, _y: f64| t;
        assert!((apply_pl(&pt, &tt, 0.5, 0.3, 0.2, 1e-3).unwrap() + 1.0).abs() < 1e-10);
        assert!(apply_pl(&pt, &tt, 0.5, 0.3, 0.2, 0.6).is_err());
    }

    #[test]
    fn linearised_operator_annihilates_kernel() {
        let pt = FrozenPoint::from_values(0.2, 0.1, -2.0, 0.3, 0.8);
        let k = move |t: f64, x: f64, y: f64| kernel_k_unchecked(&pt, t, x, y);
        let t = 0.5;
        let s = frozen_stats(&pt, t).unwrap();
        let (x, y) = (s.mu1 + 0.05, s.mu2 - 0.3);
        let r1 = apply_pl(&pt, &k, t, x, y, 0.02).unwrap().abs();
        let r2 = apply_pl(&pt, &k, t, x, y, 0.01).unwrap().abs();
        assert!(r2 < r1 / 3.5, "{r1} {r2}");
    }

    #[test]
    fn majorants_dominate_bound_kernel() {
        let spec = ProblemSpec::tanh_benchmark();
        let rep = validate_assumptions(&spec, &SampleGrid::default());
        let mc = MajorantConsts::from_report(&rep, spec.horizon);
        let mut worst: f64 = 0.0;
        let (x, y) = (0.8, 0.2);
        for it in 1..=8 {
            let t = spec.horizon * it as f64 / 8.0;
            for i in 0..40 {
                for j in 0..40 {
                    let x0 = 0.05 + 0.1 * i as f64;
                    let y0 = -2.0 + 0.1 * j as f64;
                    let pt = FrozenPoint::new(&spec, x0, y0).unwrap();
                    let khat = bound_kernel_hat(&pt, 1.0 / 12.0, t, x, y).unwrap();
                    let m = majorant_interior(&spec, &mc, (x0, y0), t, x, y).unwrap();
                    worst = worst.max(khat / m);
                }
            }
        }
        assert!(worst.is_finite() && worst < 1e3, "{worst}");
        let far = majorant_interior(&spec, &mc, (10.0, 0.0), 0.25, 0.5, 0.0).unwrap();
        let expect = 0.125 / (9.5 * 9.5 + 1.0) / 0.5;
        assert!((far - expect).abs() < 1e-15);
    }

    #[test]
    fn boundary_majorant_regions() {
        let spec = ProblemSpec::tanh_benchmark();
        let rep = validate_assumptions(&spec, &SampleGrid::default());
        let mc = MajorantConsts::from_report(&rep, spec.horizon);
        let x = 0.4;
        // Middle region uses the b_lower^3/96 exponent.
        let t = 0.2;
        assert!(t > x / (2.0 * mc.k1) && t < 2.0 * x / mc.b_lower);
        let m = majorant_boundary(&spec, &mc, 0.0, t, x, 0.0).unwrap();
        let b1 = -2.0;
        let expect = 2.0 / x.powf(1.5)
            * math::exp(-(mc.b_lower.powi(3) / 96.0) * (x + b1 * t).powi(2) / x.powi(3))
            / x.sqrt();
        assert!((m - expect).abs() < 1e-12 * expect);
        let bad = MajorantConsts {
            b_lower: -1.0,
            ..mc
        };
        assert!(majorant_boundary(&spec, &bad, 0.0, t, x, 0.0).is_err());
        let mut worst: f64 = 0.0;
        for it in 1..=40 {
            let t = spec.horizon * it as f64 / 40.0;
            for j in 0..40 {
                let y0 = -2.0 + 0.1 * j as f64;
                let pt = boundary_point(&spec, y0).unwrap();
                let khat = bound_kernel_hat(&pt, 1.0 / 12.0, t, x, 0.0).unwrap();
                let m = majorant_boundary(&spec, &mc, y0, t, x, 0.0).unwrap();
                worst = worst.max(khat / m);
            }
        }
        assert!(worst.is_finite() && worst < 1e3, "{worst}");
    }
}
