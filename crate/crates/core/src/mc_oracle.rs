//! Feynman-Kac Monte Carlo for `u`, exact-increment sampling of linear
//! drifts, and the exit law of the Kolmogorov diffusion `dX = Y dt, dY = dW`.
//!
//! Path `i` draws from ChaCha8 stream `i` of the configured seed, so every
//! estimate is a fixed function of `(spec, cfg)` however the paths are
//! scheduled.

use alloc::vec::Vec;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::math;
use crate::par;
use crate::problem_model::{FieldKind, ProblemSpec};

/// How a step that ends at `x <= 0` is turned into an exit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Crossing {
    /// Exit at the end of the step. Biases the exit time late by up to
    /// one step.
    Endpoint,
    /// Exit where the linear interpolant of `X` over the step hits zero.
    Interpolate,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathConfig {
    pub dt: f64,
    pub paths: usize,
    pub seed: u64,
    pub crossing: Crossing,
    /// Pair each path with its mirror `dW -> -dW`; a pair counts as one
    /// sample.
    pub antithetic: bool,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dt: 1e-3,
            paths: 20_000,
            seed: 0,
            crossing: Crossing::Interpolate,
            antithetic: false,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::BadConfig("time step must be positive"));
        }
        if self.paths < 1 || (self.antithetic && self.paths < 2) {
            return Err(Error::BadConfig(
                "need at least one path (two with antithetic pairs)",
            ));
        }
        Ok(())
    }

    fn samples(&self) -> usize {
        if self.antithetic {
            self.paths / 2
        } else {
            self.paths
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n_effective)`.
    pub stderr: f64,
    pub n_effective: usize,
}

impl Estimate {
    pub fn from_samples(v: &[f64]) -> Estimate {
        let n = v.len();
        if n == 0 {
            return Estimate {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_effective: 0,
            };
        }
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Estimate {
            mean,
            stderr: math::sqrt(var / n as f64),
            n_effective: n,
        }
    }
}

/// One simulated path of `dX = b1 dt, dY = b2 dt + dW` run for a time
/// `horizon` or until `X <= 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PathSample {
    /// Exit time, `None` if the path survived.
    pub exit_time: Option<f64>,
    /// State at exit (`x = 0`) or at `horizon`.
    pub x: f64,
    pub y: f64,
    /// `exp(int_0^{tau ^ horizon} c)`.
    pub discount: f64,
    /// `int_0^{tau ^ horizon} exp(int_0^s c) f(horizon - s, X_s, Y_s) ds`.
    pub source: f64,
}

fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Euler scheme with midpoint evaluation of `c` and `f`; `normal` supplies
/// the standard normal increments.
pub fn simulate_with(
    spec: &ProblemSpec,
    start: (f64, f64),
    horizon: f64,
    cfg: &PathConfig,
    normal: &mut dyn FnMut() -> f64,
) -> PathSample {
    let (mut x, mut y) = start;
    let mut s = 0.0;
    let mut log_disc = 0.0;
    let mut source = 0.0;
    let track_c = !is_zero_field(spec);
    let track_f = !spec.f.is_zero();
    while s < horizon {
        let h = cfg.dt.min(horizon - s);
        if !(h > 0.0) {
            break;
        }
        let z = normal();
        let xn = x + spec.b1.value(x, y) * h;
        let yn = y + spec.b2.value(x, y) * h + math::sqrt(h) * z;
        let (frac, exited) = if xn <= 0.0 {
            match cfg.crossing {
                Crossing::Endpoint => (1.0, true),
                Crossing::Interpolate => ((x / (x - xn)).clamp(0.0, 1.0), true),
            }
        } else {
            (1.0, false)
        };
        let hh = frac * h;
        let (xm, ym) = (x + 0.5 * frac * (xn - x), y + 0.5 * frac * (yn - y));
        let cm = if track_c { spec.c.value(xm, ym) } else { 0.0 };
        if track_f {
            let disc_mid = math::exp(log_disc + 0.5 * cm * hh);
            source += disc_mid * spec.f.eval(horizon - (s + 0.5 * hh), xm, ym) * hh;
        }
        log_disc += cm * hh;
        if exited {
            let yt = y + frac * (yn - y);
            return PathSample {
                exit_time: Some(s + hh),
                x: 0.0,
                y: yt,
                discount: math::exp(log_disc),
                source,
            };
        }
        x = xn;
        y = yn;
        s += h;
    }
    PathSample {
        exit_time: None,
        x,
        y,
        discount: math::exp(log_disc),
        source,
    }
}

fn is_zero_field(spec: &ProblemSpec) -> bool {
    matches!(spec.c.kind, FieldKind::Constant { value } if value == 0.0)
}

/// [`simulate_with`] driven by stream `index` of `cfg.seed`.
pub fn simulate_forward(
    spec: &ProblemSpec,
    start: (f64, f64),
    horizon: f64,
    cfg: &PathConfig,
    index: u64,
) -> PathSample {
    let mut rng = stream(cfg.seed, index);
    simulate_with(spec, start, horizon, cfg, &mut || {
        StandardNormal.sample(&mut rng)
    })
}

fn path_value(spec: &ProblemSpec, t: f64, p: &PathSample) -> f64 {
    let terminal = match p.exit_time {
        Some(tau) => spec.u_side.eval(t - tau, 0.0, p.y),
        None => spec.u_init.eval(0.0, p.x, p.y),
    };
    p.discount * terminal + p.source
}

/// `u(t, x, y)` as the mean over paths of the discounted boundary or
/// initial value plus the accumulated source.
pub fn feynman_kac_estimate(
    spec: &ProblemSpec,
    t: f64,
    x: f64,
    y: f64,
    cfg: &PathConfig,
) -> Result<Estimate> {
    cfg.validate()?;
    if !(spec.horizon > 0.0) {
        return Err(Error::InvalidSpec("horizon must be positive"));
    }
    if !(t > 0.0 && t <= spec.horizon * (1.0 + 1e-12) && x > 0.0 && y.is_finite()) {
        return Err(Error::OutOfDomain { t, x, y });
    }
    let values = par::map(cfg.samples(), |i| {
        if cfg.antithetic {
            let mut a = stream(cfg.seed, i as u64);
            let mut b = stream(cfg.seed, i as u64);
            let pa = simulate_with(spec, (x, y), t, cfg, &mut || StandardNormal.sample(&mut a));
            let pb = simulate_with(spec, (x, y), t, cfg, &mut || {
                let z: f64 = StandardNormal.sample(&mut b);
                -z
            });
            0.5 * (path_value(spec, t, &pa) + path_value(spec, t, &pb))
        } else {
            path_value(spec, t, &simulate_forward(spec, (x, y), t, cfg, i as u64))
        }
    });
    Ok(Estimate::from_samples(&values))
}

/// Linear drift `dX = (a + slope (Y - y_ref)) dt, dY = b dt + dW`; the
/// Kolmogorov diffusion is `a = 0, slope = 1, y_ref = 0, b = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearModel {
    pub a: f64,
    pub slope: f64,
    pub y_ref: f64,
    pub b: f64,
}

impl LinearModel {
    pub fn kolmogorov() -> Self {
        LinearModel {
            a: 0.0,
            slope: 1.0,
            y_ref: 0.0,
            b: 0.0,
        }
    }

    /// Exact mean and covariance of `(X_t, Y_t)` from `start`.
    pub fn moments(&self, start: (f64, f64), t: f64) -> ([f64; 2], [[f64; 2]; 2]) {
        let (x, y) = start;
        let k = self.slope;
        let mean = [
            x + (self.a + k * (y - self.y_ref)) * t + 0.5 * k * self.b * t * t,
            y + self.b * t,
        ];
        let cov = [
            [k * k * t * t * t / 3.0, 0.5 * k * t * t],
            [0.5 * k * t * t, t],
        ];
        (mean, cov)
    }

    /// One exact step of length `h` from `(x, y)` with independent
    /// standard normals `z1, z2`.
    #[inline]
    pub fn step(&self, x: f64, y: f64, h: f64, z1: f64, z2: f64) -> (f64, f64) {
        let sh = math::sqrt(h);
        let dw = sh * z1;
        // int_0^h W ds given W_h, plus the independent bridge part
        let iw = h * sh * (0.5 * z1 + z2 / math::SQRT_12);
        let xn = x
            + (self.a + self.slope * (y - self.y_ref)) * h
            + self.slope * (0.5 * self.b * h * h + iw);
        (xn, y + self.b * h + dw)
    }
}

/// Sample moments with componentwise standard errors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleMoments {
    pub mean: [f64; 2],
    pub mean_stderr: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub cov_stderr: [[f64; 2]; 2],
    pub n: usize,
}

/// Unkilled sample of `(X_t, Y_t)` for a linear model, simulated with exact
/// Gaussian increments over steps of `cfg.dt`.
pub fn linear_statistics(
    model: &LinearModel,
    start: (f64, f64),
    t: f64,
    cfg: &PathConfig,
) -> Result<SampleMoments> {
    cfg.validate()?;
    if !(t > 0.0) {
        return Err(Error::NonpositiveTime(t));
    }
    let ends: Vec<(f64, f64)> = par::map(cfg.paths, |i| {
        let mut rng = stream(cfg.seed, i as u64);
        let (mut x, mut y) = start;
        let mut s = 0.0;
        while s < t {
            let h = cfg.dt.min(t - s);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            (x, y) = model.step(x, y, h, z1, z2);
            s += h;
        }
        (x, y)
    });
    let n = ends.len() as f64;
    let comp = |p: &(f64, f64), k: usize| if k == 0 { p.0 } else { p.1 };
    let mut mean = [0.0; 2];
    for k in 0..2 {
        mean[k] = ends.iter().map(|p| comp(p, k)).sum::<f64>() / n;
    }
    let mut mean_stderr = [0.0; 2];
    let mut cov = [[0.0; 2]; 2];
    let mut cov_stderr = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let prods: Vec<f64> = ends
                .iter()
                .map(|p| (comp(p, i) - mean[i]) * (comp(p, j) - mean[j]))
                .collect();
            let e = Estimate::from_samples(&prods);
            cov[i][j] = e.mean * n / (n - 1.0).max(1.0);
            cov_stderr[i][j] = e.stderr;
        }
        mean_stderr[i] = math::sqrt(cov[i][i] / n);
    }
    Ok(SampleMoments {
        mean,
        mean_stderr,
        cov,
        cov_stderr,
        n: ends.len(),
    })
}

/// Exit times and places of the Kolmogorov diffusion from `start`;
/// paths alive at `horizon` are counted in `survived`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExitSample {
    pub tau: Vec<f64>,
    pub y_exit: Vec<f64>,
    pub survived: usize,
    pub horizon: f64,
}

impl ExitSample {
    /// Exit counts in `bins` equal bins of `[0, horizon]`, divided by the
    /// total path count and the bin width: an estimate of the exit-time
    /// density.
    pub fn time_histogram(&self, bins: usize) -> Vec<f64> {
        let mut h = alloc::vec![0.0; bins];
        let total = (self.tau.len() + self.survived) as f64;
        let w = self.horizon / bins as f64;
        for &t in &self.tau {
            let b = ((t / w) as usize).min(bins - 1);
            h[b] += 1.0;
        }
        h.iter().map(|c| c / (total * w)).collect()
    }
}

/// Samples the exit law of `dX = Y dt, dY = dW` from `start`. Steps use
/// exact increments; inside a step the path is the cubic Hermite
/// interpolant of `X` with slopes `Y`, so the located exit always has
/// `Y_tau = X'(tau) <= 0`.
pub fn kolmogorov_exit_sample(
    start: (f64, f64),
    horizon: f64,
    cfg: &PathConfig,
) -> Result<ExitSample> {
    cfg.validate()?;
    if !(start.0 >= 0.0) || !(horizon > 0.0) {
        return Err(Error::BadConfig(
            "start needs x >= 0 and a positive horizon",
        ));
    }
    let model = LinearModel::kolmogorov();
    let out: Vec<Option<(f64, f64)>> = par::map(cfg.paths, |i| {
        let mut rng = stream(cfg.seed, i as u64);
        let (mut x, mut y) = start;
        if x == 0.0 && y <= 0.0 {
            return Some((0.0, y));
        }
        let mut s = 0.0;
        while s < horizon {
            let h = cfg.dt.min(horizon - s);
            let z1: f64 = StandardNormal.sample(&mut rng);
            let z2: f64 = StandardNormal.sample(&mut rng);
            let (xn, yn) = model.step(x, y, h, z1, z2);
            if let Some((theta, slope)) = hermite_exit(x, y, xn, yn, h) {
                return Some((s + theta, slope));
            }
            x = xn;
            y = yn;
            s += h;
        }
        None
    });
    let mut tau = Vec::new();
    let mut y_exit = Vec::new();
    let mut survived = 0;
    for o in out {
        match o {
            Some((t, y)) => {
                tau.push(t);
                y_exit.push(y);
            }
            None => survived += 1,
        }
    }
    Ok(ExitSample {
        tau,
        y_exit,
        survived,
        horizon,
    })
}

/// First zero in `(0, h]` of the Hermite cubic through `(0, x0)`, `(h, x1)`
/// with slopes `y0`, `y1`, and the slope there.
fn hermite_exit(x0: f64, y0: f64, x1: f64, y1: f64, h: f64) -> Option<(f64, f64)> {
    // |p'| <= 1.5 |x1 - x0| / h + |y0| + |y1| =: M, and p >= (x0 + x1 - h M) / 2
    let hm = 1.5 * (x1 - x0).abs() + h * (y0.abs() + y1.abs());
    if x1 > 0.0 && x0 + x1 > hm {
        return None;
    }
    let p = |s: f64| {
        let u = s / h;
        let h00 = 2.0 * u * u * u - 3.0 * u * u + 1.0;
        let h10 = u * u * u - 2.0 * u * u + u;
        let h01 = -2.0 * u * u * u + 3.0 * u * u;
        let h11 = u * u * u - u * u;
        h00 * x0 + h10 * h * y0 + h01 * x1 + h11 * h * y1
    };
    let dp = |s: f64| {
        let u = s / h;
        let d00 = (6.0 * u * u - 6.0 * u) / h;
        let d10 = 3.0 * u * u - 4.0 * u + 1.0;
        let d01 = (-6.0 * u * u + 6.0 * u) / h;
        let d11 = 3.0 * u * u - 2.0 * u;
        d00 * x0 + d10 * y0 + d01 * x1 + d11 * y1
    };
    const SUB: usize = 16;
    let mut prev = 0.0;
    for k in 1..=SUB {
        let s = h * k as f64 / SUB as f64;
        if p(s) <= 0.0 {
            let (mut lo, mut hi) = (prev, s);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if p(mid) <= 0.0 {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            // the first down-crossing has a nonpositive slope
            return Some((hi, dp(hi).min(0.0)));
        }
        prev = s;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_model::DataFn;

    fn cfg(paths: usize) -> PathConfig {
        PathConfig {
            paths,
            dt: 1e-2,
            seed: 7,
            ..PathConfig::default()
        }
    }

    #[test]
    fn deterministic_drift_exit_time() {
        let spec = ProblemSpec::affine(-2.0, 0.0, 0.0, 1.0);
        let c = PathConfig { dt: 1e-3, ..cfg(1) };
        for i in 0..5 {
            let p = simulate_forward(&spec, (1.0, 0.3), 1.0, &c, i);
            let tau = p.exit_time.unwrap();
            assert!((tau - 0.5).abs() <= c.dt, "{tau}");
        }
        let e = PathConfig {
            crossing: Crossing::Endpoint,
            ..c
        };
        let pe = simulate_forward(&spec, (1.0, 0.3), 1.0, &e, 0);
        assert!(
            pe.exit_time.unwrap()
                >= simulate_forward(&spec, (1.0, 0.3), 1.0, &c, 0)
                    .exit_time
                    .unwrap()
        );
    }

    #[test]
    fn constant_problem_is_exact() {
        let spec = ProblemSpec::constant_problem(0.5);
        let e = feynman_kac_estimate(&spec, 0.5, 0.3, 0.0, &cfg(500)).unwrap();
        assert_eq!(e.mean, 1.0);
        assert_eq!(e.stderr, 0.0);
        assert_eq!(e.n_effective, 500);
    }

    #[test]
    fn pure_source_accumulates_time() {
        let spec = ProblemSpec::affine(-2.0, 0.0, 0.0, 1.0).with_data(
            DataFn::Constant(1.0),
            DataFn::Zero,
            DataFn::Zero,
        );
        let e = feynman_kac_estimate(&spec, 0.4, 5.0, 0.0, &cfg(50)).unwrap();
        assert!((e.mean - 0.4).abs() < 1e-12, "{e:?}");
    }

    #[test]
    fn same_seed_same_bits() {
        let spec = ProblemSpec::tanh_benchmark();
        let a = feynman_kac_estimate(&spec, 0.3, 0.4, 0.1, &cfg(300)).unwrap();
        let b = feynman_kac_estimate(&spec, 0.3, 0.4, 0.1, &cfg(300)).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        let c = feynman_kac_estimate(
            &spec,
            0.3,
            0.4,
            0.1,
            &PathConfig {
                seed: 8,
                ..cfg(300)
            },
        )
        .unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn antithetic_pairs_agree_with_plain() {
        let spec = ProblemSpec::tanh_benchmark();
        let plain = feynman_kac_estimate(&spec, 0.4, 0.5, 0.0, &cfg(4000)).unwrap();
        let anti = feynman_kac_estimate(
            &spec,
            0.4,
            0.5,
            0.0,
            &PathConfig {
                antithetic: true,
                ..cfg(4000)
            },
        )
        .unwrap();
        assert_eq!(anti.n_effective, 2000);
        let tol = 3.0 * math::sqrt(plain.stderr * plain.stderr + anti.stderr * anti.stderr);
        assert!((plain.mean - anti.mean).abs() < tol, "{plain:?} {anti:?}");
    }

    #[test]
    fn discount_with_constant_potential() {
        let mut spec = ProblemSpec::constant_problem(1.0);
        spec.c = crate::problem_model::CoefficientField::constant(-0.5, 0);
        spec.f = DataFn::Zero;
        // far from the boundary every path survives: u = exp(-0.5 t)
        let e = feynman_kac_estimate(&spec, 0.6, 10.0, 0.0, &cfg(20)).unwrap();
        assert!((e.mean - (-0.3f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn bad_inputs() {
        let spec = ProblemSpec::tanh_benchmark();
        assert!(feynman_kac_estimate(&spec, 0.3, 0.0, 0.0, &cfg(10)).is_err());
        assert!(feynman_kac_estimate(&spec, 0.9, 0.3, 0.0, &cfg(10)).is_err());
        assert!(
            feynman_kac_estimate(&spec, 0.3, 0.3, 0.0, &PathConfig { dt: 0.0, ..cfg(10) }).is_err()
        );
        assert!(feynman_kac_estimate(&spec, 0.3, 0.3, 0.0, &cfg(0)).is_err());
    }

    #[test]
    fn exact_steps_reproduce_linear_moments() {
        let model = LinearModel {
            a: -1.0,
            slope: 0.7,
            y_ref: 0.2,
            b: 0.3,
        };
        let (t, start) = (0.8, (1.0, -0.4));
        let m = linear_statistics(
            &model,
            start,
            t,
            &PathConfig {
                dt: 0.1,
                ..cfg(20_000)
            },
        )
        .unwrap();
        let (mean, cov) = model.moments(start, t);
        for i in 0..2 {
            assert!(
                (m.mean[i] - mean[i]).abs() < 4.0 * m.mean_stderr[i],
                "{m:?}"
            );
            for j in 0..2 {
                assert!(
                    (m.cov[i][j] - cov[i][j]).abs() < 4.0 * m.cov_stderr[i][j],
                    "{m:?}"
                );
            }
        }
    }

    #[test]
    fn hermite_exit_finds_first_crossing() {
        // x(s) = 1 - s^2 on [0, 2]: slopes 0 and -4, zero at s = 1
        let (tau, slope) = hermite_exit(1.0, 0.0, -3.0, -4.0, 2.0).unwrap();
        assert!((tau - 1.0).abs() < 1e-12);
        assert!((slope + 2.0).abs() < 1e-12);
        assert!(hermite_exit(1.0, 0.1, 1.2, 0.1, 0.01).is_none());
    }

    #[test]
    fn kolmogorov_exits_move_left() {
        let s = kolmogorov_exit_sample((0.05, 0.0), 0.5, &cfg(2000)).unwrap();
        assert!(!s.tau.is_empty());
        assert!(s.y_exit.iter().all(|y| *y <= 0.0));
        assert!(s.tau.iter().all(|t| *t > 0.0 && *t <= 0.5));
        assert_eq!(s.tau.len() + s.survived, 2000);
        let again = kolmogorov_exit_sample((0.05, 0.0), 0.5, &cfg(2000)).unwrap();
        assert_eq!(s, again);
        let hist = s.time_histogram(10);
        let mass: f64 = hist.iter().map(|h| h * 0.05).sum();
        assert!((mass - s.tau.len() as f64 / 2000.0).abs() < 1e-12);
    }
}
