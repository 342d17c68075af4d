//! Problem instances: coefficient fields, data functions and the grid-sampled
//! check of the standing assumptions.

use alloc::sync::Arc;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};
use crate::math;

/// Partial-derivative orders (i, j) with i + j <= 3, in the storage order of
/// [`Jet`].
pub const JET_ORDERS: [(u32, u32); 10] = [
    (0, 0),
    (1, 0),
    (0, 1),
    (2, 0),
    (1, 1),
    (0, 2),
    (3, 0),
    (2, 1),
    (1, 2),
    (0, 3),
];

/// All partial derivatives of a field up to order 3 at one point.
pub type Jet = [f64; 10];

#[inline]
pub fn jet_index(i: u32, j: u32) -> usize {
    match (i, j) {
        (0, 0) => 0,
        (1, 0) => 1,
        (0, 1) => 2,
        (2, 0) => 3,
        (1, 1) => 4,
        (0, 2) => 5,
        (3, 0) => 6,
        (2, 1) => 7,
        (1, 2) => 8,
        (0, 3) => 9,
        _ => usize::MAX,
    }
}

pub type ValueFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// Shape of a coefficient field.
#[derive(Clone)]
pub enum FieldKind {
    /// `value` everywhere.
    Constant { value: f64 },
    /// `a + bx x + by y`.
    Linear { a: f64, bx: f64, by: f64 },
    /// `offset + amplitude tanh(scale y)`.
    Tanh {
        offset: f64,
        amplitude: f64,
        scale: f64,
    },
    /// `offset + tanh(y) + delta psi(x, y)` with `psi` a product of compact
    /// bumps `exp(-1/(1-z^2))` centred at `(cx, cy)` with radii `(rx, ry)`.
    TanhBump {
        offset: f64,
        delta: f64,
        cx: f64,
        cy: f64,
        rx: f64,
        ry: f64,
    },
    /// `offset + Phi(y)`, the standard normal distribution function.
    GaussCdf { offset: f64 },
    /// Values only; derivatives by central differences.
    Values(ValueFn),
    /// Values tabulated on a rectangular grid, interpolated by tensor
    /// natural cubic splines; derivatives by central differences.
    Tabulated(Arc<Table>),
}

impl fmt::Debug for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Constant { value } => write!(f, "Constant({value})"),
            FieldKind::Linear { a, bx, by } => write!(f, "Linear({a}, {bx}, {by})"),
            FieldKind::Tanh {
                offset,
                amplitude,
                scale,
            } => {
                write!(f, "Tanh({offset}, {amplitude}, {scale})")
            }
            FieldKind::TanhBump {
                offset,
                delta,
                cx,
                cy,
                rx,
                ry,
            } => {
                write!(f, "TanhBump({offset}, {delta}, {cx}, {cy}, {rx}, {ry})")
            }
            FieldKind::GaussCdf { offset } => write!(f, "GaussCdf({offset})"),
            FieldKind::Values(_) => write!(f, "Values(<fn>)"),
            FieldKind::Tabulated(t) => write!(f, "Tabulated({}x{})", t.xs.len(), t.ys.len()),
        }
    }
}

/// A smooth coefficient `g(x, y)` with derivatives up to `max_order`.
#[derive(Clone, Debug)]
pub struct CoefficientField {
    pub kind: FieldKind,
    pub max_order: u32,
}

/// Steps used for value-only fields, by derivative order.
const FD_STEPS: [f64; 4] = [0.0, 1e-5, 1e-4, 1e-3];

impl CoefficientField {
    pub fn new(kind: FieldKind, max_order: u32) -> Self {
        CoefficientField {
            kind,
            max_order: max_order.min(3),
        }
    }

    pub fn constant(value: f64, max_order: u32) -> Self {
        Self::new(FieldKind::Constant { value }, max_order)
    }

    /// `-2 + tanh(y)`, the reference drift.
    pub fn tanh_drift() -> Self {
        Self::new(
            FieldKind::Tanh {
                offset: -2.0,
                amplitude: 1.0,
                scale: 1.0,
            },
            3,
        )
    }

    /// Derivative `(i, j)` at `(x, y)`; refuses orders above `max_order`.
    pub fn eval(&self, i: u32, j: u32, x: f64, y: f64) -> Result<f64> {
        if i + j > self.max_order {
            return Err(Error::OrderExceeded {
                requested: i + j,
                max_order: self.max_order,
            });
        }
        Ok(self.d(i, j, x, y))
    }

    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        match &self.kind {
            FieldKind::Constant { value } => *value,
            FieldKind::Linear { a, bx, by } => a + bx * x + by * y,
            FieldKind::Tanh {
                offset,
                amplitude,
                scale,
            } => offset + amplitude * math::tanh(scale * y),
            _ => self.d(0, 0, x, y),
        }
    }

    /// Derivative `(i, j)` without the order check. Orders above 3 return 0.
    pub fn d(&self, i: u32, j: u32, x: f64, y: f64) -> f64 {
        let k = jet_index(i, j);
        if k == usize::MAX {
            return 0.0;
        }
        match &self.kind {
            FieldKind::Values(g) => fd_derivative(&**g, i, j, x, y),
            FieldKind::Tabulated(t) => fd_derivative(&|x, y| t.value(x, y), i, j, x, y),
            _ => self.jet(x, y)[k],
        }
    }

    /// All derivatives up to order 3 at `(x, y)`.
    pub fn jet(&self, x: f64, y: f64) -> Jet {
        let mut out = [0.0; 10];
        match &self.kind {
            FieldKind::Constant { value } => out[0] = *value,
            FieldKind::Linear { a, bx, by } => {
                out[0] = a + bx * x + by * y;
                out[1] = *bx;
                out[2] = *by;
            }
            FieldKind::Tanh {
                offset,
                amplitude,
                scale,
            } => {
                let d = tanh_derivs(scale * y);
                out[0] = offset + amplitude * d[0];
                out[2] = amplitude * scale * d[1];
                out[5] = amplitude * scale * scale * d[2];
                out[9] = amplitude * scale * scale * scale * d[3];
            }
            FieldKind::TanhBump {
                offset,
                delta,
                cx,
                cy,
                rx,
                ry,
            } => {
                let d = tanh_derivs(y);
                let bx = bump_derivs((x - cx) / rx);
                let by = bump_derivs((y - cy) / ry);
                out[0] = offset + d[0];
                out[2] = d[1];
                out[5] = d[2];
                out[9] = d[3];
                for (k, &(i, j)) in JET_ORDERS.iter().enumerate() {
                    let sx = math::powi(*rx, i as i32);
                    let sy = math::powi(*ry, j as i32);
                    out[k] += delta * bx[i as usize] * by[j as usize] / (sx * sy);
                }
            }
            FieldKind::GaussCdf { offset } => {
                let phi = math::normal_pdf(y);
                out[0] = offset + math::normal_cdf(y);
                out[2] = phi;
                out[5] = -y * phi;
                out[9] = (y * y - 1.0) * phi;
            }
            FieldKind::Values(_) | FieldKind::Tabulated(_) => {
                for (k, &(i, j)) in JET_ORDERS.iter().enumerate() {
                    if i + j <= self.max_order {
                        out[k] = self.d(i, j, x, y);
                    }
                }
            }
        }
        out
    }
}

/// `tanh` and its first three derivatives at `z`.
fn tanh_derivs(z: f64) -> [f64; 4] {
    let t = math::tanh(z);
    // sech^2 computed from exp(-2|z|) stays positive for large |z|.
    let e = math::exp(-2.0 * z.abs());
    let s2 = 4.0 * e / ((1.0 + e) * (1.0 + e));
    [t, s2, -2.0 * t * s2, s2 * (6.0 * t * t - 2.0)]
}

/// `exp(-1/(1-z^2))` on `|z| < 1` and its first three derivatives.
fn bump_derivs(z: f64) -> [f64; 4] {
    if z.abs() >= 1.0 {
        return [0.0; 4];
    }
    let w = 1.0 - z * z;
    let v = math::exp(-1.0 / w);
    let h1 = -2.0 * z / (w * w);
    let h2 = -2.0 / (w * w) - 8.0 * z * z / (w * w * w);
    let h3 = -24.0 * z / (w * w * w) - 48.0 * z * z * z / (w * w * w * w);
    [
        v,
        v * h1,
        v * (h2 + h1 * h1),
        v * (h3 + 3.0 * h1 * h2 + h1 * h1 * h1),
    ]
}

/// Central-difference stencil for one axis: (offsets in steps, weights).
fn stencil(order: u32) -> (&'static [f64], &'static [f64]) {
    match order {
        0 => (&[0.0], &[1.0]),
        1 => (&[-1.0, 1.0], &[-0.5, 0.5]),
        2 => (&[-1.0, 0.0, 1.0], &[1.0, -2.0, 1.0]),
        _ => (&[-2.0, -1.0, 1.0, 2.0], &[-0.5, 1.0, -1.0, 0.5]),
    }
}

fn fd_derivative(g: &dyn Fn(f64, f64) -> f64, i: u32, j: u32, x: f64, y: f64) -> f64 {
    if i + j == 0 {
        return g(x, y);
    }
    let h = FD_STEPS[(i + j) as usize];
    let (ox, wx) = stencil(i);
    let (oy, wy) = stencil(j);
    let mut acc = 0.0;
    for (a, wa) in ox.iter().zip(wx) {
        for (b, wb) in oy.iter().zip(wy) {
            acc += wa * wb * g(x + a * h, y + b * h);
        }
    }
    acc / math::powi(h, (i + j) as i32)
}

/// Values on a rectangular grid with natural cubic spline interpolation in
/// each axis. Outside the grid the nearest edge value is used.
#[derive(Clone, Debug)]
pub struct Table {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Row-major, `values[ix * ny + iy]`.
    values: Vec<f64>,
    /// Second y-derivatives of each x-row spline.
    row_m: Vec<f64>,
}

impl Table {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if xs.len() < 2 || ys.len() < 2 || values.len() != xs.len() * ys.len() {
            return Err(Error::BadConfig("table shape does not match its axes"));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) || ys.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadConfig("table axes must be strictly increasing"));
        }
        let ny = ys.len();
        let mut row_m = Vec::with_capacity(values.len());
        for ix in 0..xs.len() {
            row_m.extend(spline_second_derivs(&ys, &values[ix * ny..(ix + 1) * ny]));
        }
        Ok(Table {
            xs,
            ys,
            values,
            row_m,
        })
    }

    pub fn value(&self, x: f64, y: f64) -> f64 {
        let ny = self.ys.len();
        let column: Vec<f64> = (0..self.xs.len())
            .map(|ix| {
                let r = ix * ny..(ix + 1) * ny;
                spline_eval(&self.ys, &self.values[r.clone()], &self.row_m[r], y)
            })
            .collect();
        let m = spline_second_derivs(&self.xs, &column);
        spline_eval(&self.xs, &column, &m, x)
    }
}

fn spline_second_derivs(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = alloc::vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal solve for the interior second derivatives.
    let mut c = alloc::vec![0.0; n];
    let mut d = alloc::vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = xs[i] - xs[i - 1];
        let h1 = xs[i + 1] - xs[i];
        let a = h0 / 6.0;
        let b = (h0 + h1) / 3.0;
        let cc = h1 / 6.0;
        let rhs = (ys[i + 1] - ys[i]) / h1 - (ys[i] - ys[i - 1]) / h0;
        let denom = b - a * c[i - 1];
        c[i] = cc / denom;
        d[i] = (rhs - a * d[i - 1]) / denom;
    }
    for i in (1..n - 1).rev() {
        m[i] = d[i] - c[i] * m[i + 1];
    }
    m
}

fn spline_eval(xs: &[f64], ys: &[f64], m: &[f64], x: f64) -> f64 {
    let n = xs.len();
    if x <= xs[0] {
        return ys[0];
    }
    if x >= xs[n - 1] {
        return ys[n - 1];
    }
    let k = xs.partition_point(|&v| v <= x).clamp(1, n - 1);
    let (x0, x1) = (xs[k - 1], xs[k]);
    let h = x1 - x0;
    let a = (x1 - x) / h;
    let b = (x - x0) / h;
    a * ys[k - 1] + b * ys[k] + ((a * a * a - a) * m[k - 1] + (b * b * b - b) * m[k]) * h * h / 6.0
}

pub type DataClosure = Arc<dyn Fn(f64, f64, f64) -> f64 + Send + Sync>;

/// Source, initial and side data. All variants are evaluated as
/// `g(t, x, y)`; initial data ignores `t` and side data ignores `x`.
#[derive(Clone)]
pub enum DataFn {
    Zero,
    Constant(f64),
    /// `amp exp(-(x-x0)^2/(2 sx^2) - (y-y0)^2/(2 sy^2))`.
    Gaussian {
        amp: f64,
        x0: f64,
        y0: f64,
        sx: f64,
        sy: f64,
    },
    /// `base + amp cos(freq y + phase)`.
    CosY {
        base: f64,
        amp: f64,
        freq: f64,
        phase: f64,
    },
    /// `base + amp exp(-rate x)`.
    ExpX {
        base: f64,
        amp: f64,
        rate: f64,
    },
    /// `base + amp tanh(scale y)`.
    TanhY {
        base: f64,
        amp: f64,
        scale: f64,
    },
    /// `base + amp t`.
    TimeRamp {
        base: f64,
        amp: f64,
    },
    /// Pointwise sum.
    Sum(Arc<DataFn>, Arc<DataFn>),
    /// Pointwise product.
    Product(Arc<DataFn>, Arc<DataFn>),
    /// `factor * g`.
    Scaled(f64, Arc<DataFn>),
    Custom(DataClosure),
}

impl fmt::Debug for DataFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataFn::Zero => write!(f, "Zero"),
            DataFn::Constant(v) => write!(f, "Constant({v})"),
            DataFn::Gaussian {
                amp,
                x0,
                y0,
                sx,
                sy,
            } => {
                write!(f, "Gaussian({amp}, {x0}, {y0}, {sx}, {sy})")
            }
            DataFn::CosY {
                base,
                amp,
                freq,
                phase,
            } => {
                write!(f, "CosY({base}, {amp}, {freq}, {phase})")
            }
            DataFn::ExpX { base, amp, rate } => write!(f, "ExpX({base}, {amp}, {rate})"),
            DataFn::TanhY { base, amp, scale } => write!(f, "TanhY({base}, {amp}, {scale})"),
            DataFn::TimeRamp { base, amp } => write!(f, "TimeRamp({base}, {amp})"),
            DataFn::Sum(a, b) => write!(f, "Sum({a:?}, {b:?})"),
            DataFn::Product(a, b) => write!(f, "Product({a:?}, {b:?})"),
            DataFn::Scaled(k, a) => write!(f, "Scaled({k}, {a:?})"),
            DataFn::Custom(_) => write!(f, "Custom(<fn>)"),
        }
    }
}

impl DataFn {
    #[inline]
    pub fn eval(&self, t: f64, x: f64, y: f64) -> f64 {
        match self {
            DataFn::Zero => 0.0,
            DataFn::Constant(v) => *v,
            DataFn::Gaussian {
                amp,
                x0,
                y0,
                sx,
                sy,
            } => {
                let a = (x - x0) / sx;
                let b = (y - y0) / sy;
                amp * math::exp(-0.5 * (a * a + b * b))
            }
            DataFn::CosY {
                base,
                amp,
                freq,
                phase,
            } => base + amp * math::cos(freq * y + phase),
            DataFn::ExpX { base, amp, rate } => base + amp * math::exp(-rate * x),
            DataFn::TanhY { base, amp, scale } => base + amp * math::tanh(scale * y),
            DataFn::TimeRamp { base, amp } => base + amp * t,
            DataFn::Sum(a, b) => a.eval(t, x, y) + b.eval(t, x, y),
            DataFn::Product(a, b) => a.eval(t, x, y) * b.eval(t, x, y),
            DataFn::Scaled(k, a) => k * a.eval(t, x, y),
            DataFn::Custom(g) => g(t, x, y),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            DataFn::Zero => true,
            DataFn::Constant(v) => *v == 0.0,
            DataFn::Scaled(k, a) => *k == 0.0 || a.is_zero(),
            _ => false,
        }
    }

    pub fn scaled(self, k: f64) -> DataFn {
        DataFn::Scaled(k, Arc::new(self))
    }
}

/// A full instance of the boundary value problem on `[0, T) x (0, inf) x R`.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub b1: CoefficientField,
    pub b2: CoefficientField,
    pub c: CoefficientField,
    pub f: DataFn,
    pub u_init: DataFn,
    pub u_side: DataFn,
    pub horizon: f64,
}

impl ProblemSpec {
    /// Drift `-2 + tanh(y)`, no transport in `y`, no potential, with the
    /// given data.
    pub fn tanh(f: DataFn, u_init: DataFn, u_side: DataFn, horizon: f64) -> Self {
        ProblemSpec {
            b1: CoefficientField::tanh_drift(),
            b2: CoefficientField::constant(0.0, 1),
            c: CoefficientField::constant(0.0, 0),
            f,
            u_init,
            u_side,
            horizon,
        }
    }

    /// The reference benchmark used by the cross-checks against Monte Carlo.
    pub fn tanh_benchmark() -> Self {
        ProblemSpec::tanh(
            DataFn::Zero,
            DataFn::Gaussian {
                amp: 1.0,
                x0: 0.6,
                y0: 0.0,
                sx: 0.5,
                sy: 1.0,
            },
            DataFn::CosY {
                base: 0.5,
                amp: 0.25,
                freq: 1.0,
                phase: 0.0,
            },
            0.5,
        )
    }

    pub fn zero_problem(horizon: f64) -> Self {
        ProblemSpec::tanh(DataFn::Zero, DataFn::Zero, DataFn::Zero, horizon)
    }

    pub fn constant_problem(horizon: f64) -> Self {
        ProblemSpec::tanh(
            DataFn::Zero,
            DataFn::Constant(1.0),
            DataFn::Constant(1.0),
            horizon,
        )
    }

    /// `b1(x, y) = y`: degenerate Kolmogorov drift, violates the sign
    /// condition at the side boundary.
    pub fn kolmogorov(horizon: f64) -> Self {
        ProblemSpec {
            b1: CoefficientField::new(
                FieldKind::Linear {
                    a: 0.0,
                    bx: 0.0,
                    by: 1.0,
                },
                3,
            ),
            ..ProblemSpec::zero_problem(horizon)
        }
    }

    /// Drift affine in `y`, constant `b2`, no potential: the frozen kernel is
    /// exact for this family.
    pub fn affine(a: f64, slope: f64, b2: f64, horizon: f64) -> Self {
        ProblemSpec {
            b1: CoefficientField::new(
                FieldKind::Linear {
                    a,
                    bx: 0.0,
                    by: slope,
                },
                3,
            ),
            b2: CoefficientField::constant(b2, 1),
            ..ProblemSpec::zero_problem(horizon)
        }
    }

    pub fn with_data(mut self, f: DataFn, u_init: DataFn, u_side: DataFn) -> Self {
        self.f = f;
        self.u_init = u_init;
        self.u_side = u_side;
        self
    }

    /// `dB1/dy`.
    #[inline]
    pub fn hypo_b(&self, x: f64, y: f64) -> f64 {
        hypo_b(self, x, y)
    }
}

/// `B(x, y) = db1/dy (x, y)`.
#[inline]
pub fn hypo_b(spec: &ProblemSpec, x: f64, y: f64) -> f64 {
    spec.b1.d(0, 1, x, y)
}

/// `beta_{ij} = d^{i+j} b1 / B` at a point.
pub fn beta(spec: &ProblemSpec, i: u32, j: u32, x: f64, y: f64) -> f64 {
    spec.b1.d(i, j, x, y) / hypo_b(spec, x, y)
}

/// Rectangular sampling grid for assumption checks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub y_min: f64,
    pub y_max: f64,
    pub ny: usize,
}

impl Default for SampleGrid {
    fn default() -> Self {
        SampleGrid {
            x_min: 0.0,
            x_max: 10.0,
            nx: 101,
            y_min: -10.0,
            y_max: 10.0,
            ny: 101,
        }
    }
}

impl SampleGrid {
    pub fn x(&self, i: usize) -> f64 {
        lin(self.x_min, self.x_max, self.nx, i)
    }
    pub fn y(&self, j: usize) -> f64 {
        lin(self.y_min, self.y_max, self.ny, j)
    }
    /// Whether a node lies in the central half of the box.
    fn inner(&self, i: usize, j: usize) -> bool {
        let cx = 0.5 * (self.x_min + self.x_max);
        let cy = 0.5 * (self.y_min + self.y_max);
        (self.x(i) - cx).abs() <= 0.25 * (self.x_max - self.x_min) + 1e-12
            && (self.y(j) - cy).abs() <= 0.25 * (self.y_max - self.y_min) + 1e-12
    }
}

fn lin(a: f64, b: f64, n: usize, i: usize) -> f64 {
    if n <= 1 {
        a
    } else {
        a + (b - a) * i as f64 / (n - 1) as f64
    }
}

/// Outcome of the grid-sampled assumption checks.
#[derive(Clone, Debug, PartialEq)]
pub struct AssumptionReport {
    /// Sup of the checked derivatives of b1, b2 and of c.
    pub coeff_bound: f64,
    /// Inf over sampled y of `-b1(0, y)`.
    pub b_lower: f64,
    /// Sup over the grid of `|d^{i+j} b1| / B` for `1 <= i + j <= 3`.
    pub hypo_ratio: f64,
    /// Same sup restricted to the central half of the grid.
    pub hypo_ratio_inner: f64,
    /// Smallest sampled B.
    pub min_b: f64,
    pub boundedness: bool,
    pub basics: bool,
    pub hypobound: bool,
    pub sandwich: bool,
    /// Number of sampled (base, evaluation) pairs in the sandwich check.
    pub sandwich_pairs: usize,
    pub data_bounded: bool,
    pub grid: SampleGrid,
}

/// Growth of the derivative ratio from the central half of the grid to the
/// whole grid beyond which the ratio is treated as unbounded.
pub const HYPO_GROWTH_LIMIT: f64 = 1.25;

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.boundedness && self.basics && self.hypobound && self.sandwich && self.data_bounded
    }

    /// Sampled surrogate of the global constant K1 (at least 1).
    pub fn k1(&self) -> f64 {
        self.coeff_bound.max(1.0)
    }

    /// Sampled surrogate of the global constant K3 (at least 1).
    pub fn k3(&self) -> f64 {
        self.hypo_ratio.max(1.0)
    }

    /// Interior majorant width constant `48 exp(4 K1 K3 T)`.
    pub fn k2(&self, horizon: f64) -> f64 {
        48.0 * math::exp(4.0 * self.k1() * self.k3() * horizon)
    }

    /// Human-readable one-line-per-item summary.
    pub fn describe(&self) -> alloc::string::String {
        alloc::format!(
            "grid [{}, {}]x[{}, {}] with {}x{} nodes\ncoeff_bound {:e}\nb_lower {:e}\nhypo_ratio {:e} (inner {:e})\nmin_B {:e}\nboundedness {}\nbasics {}\nhypobound {}\nsandwich {} ({} pairs)\ndata_bounded {}",
            self.grid.x_min,
            self.grid.x_max,
            self.grid.y_min,
            self.grid.y_max,
            self.grid.nx,
            self.grid.ny,
            self.coeff_bound,
            self.b_lower,
            self.hypo_ratio,
            self.hypo_ratio_inner,
            self.min_b,
            pass(self.boundedness),
            pass(self.basics),
            pass(self.hypobound),
            pass(self.sandwich),
            self.sandwich_pairs,
            pass(self.data_bounded),
        )
    }
}

fn pass(b: bool) -> &'static str {
    if b {
        "pass"
    } else {
        "fail"
    }
}

/// Sample the standing assumptions on `grid`. Failures are recorded in the
/// report, never raised.
pub fn validate_assumptions(spec: &ProblemSpec, grid: &SampleGrid) -> AssumptionReport {
    let mut coeff_bound: f64 = 0.0;
    let mut finite = spec.horizon.is_finite() && spec.horizon > 0.0;
    let mut hypo_ratio: f64 = 0.0;
    let mut hypo_inner: f64 = 0.0;
    let mut min_b = f64::INFINITY;
    let mut data_bounded = true;
    let mut b_field = Vec::with_capacity(grid.nx * grid.ny);

    for i in 0..grid.nx {
        let x = grid.x(i);
        for j in 0..grid.ny {
            let y = grid.y(j);
            let jet = spec.b1.jet(x, y);
            for (k, &(a, b)) in JET_ORDERS.iter().enumerate() {
                if a + b <= spec.b1.max_order {
                    coeff_bound = coeff_bound.max(jet[k].abs());
                    finite &= jet[k].is_finite();
                }
            }
            for &(a, b) in &JET_ORDERS[..3] {
                if a + b <= spec.b2.max_order {
                    let v = spec.b2.d(a, b, x, y);
                    coeff_bound = coeff_bound.max(v.abs());
                    finite &= v.is_finite();
                }
            }
            let cv = spec.c.value(x, y);
            coeff_bound = coeff_bound.max(cv.abs());
            finite &= cv.is_finite();

            let bv = jet[2];
            min_b = min_b.min(bv);
            b_field.push(bv);
            if bv > 0.0 {
                for (k, &(a, b)) in JET_ORDERS.iter().enumerate().skip(1) {
                    if a + b <= spec.b1.max_order {
                        let r = jet[k].abs() / bv;
                        hypo_ratio = hypo_ratio.max(r);
                        if grid.inner(i, j) {
                            hypo_inner = hypo_inner.max(r);
                        }
                    }
                }
            }

            for t in [0.0, 0.5 * spec.horizon, spec.horizon] {
                let vals = [
                    spec.f.eval(t, x, y),
                    spec.u_init.eval(0.0, x, y),
                    spec.u_side.eval(t, 0.0, y),
                ];
                data_bounded &= vals.iter().all(|v| v.is_finite());
            }
        }
    }

    let b_lower = (0..grid.ny)
        .map(|j| -spec.b1.value(0.0, grid.y(j)))
        .fold(f64::INFINITY, f64::min);

    let positive_b = min_b > 0.0;
    let hypobound = positive_b
        && hypo_ratio.is_finite()
        && hypo_ratio <= HYPO_GROWTH_LIMIT * hypo_inner + 1e-12;
    let k3 = hypo_ratio.max(1.0);

    // Sandwich: B(e)/B(b) within exp(+-K3 rho) for pairs of grid nodes.
    let mut sandwich = positive_b;
    let mut pairs = 0usize;
    if positive_b {
        for &(di, dj) in &[(1usize, 0usize), (0, 1), (1, 1), (3, 2), (7, 5), (13, 11)] {
            for i in 0..grid.nx.saturating_sub(di) {
                for j in 0..grid.ny.saturating_sub(dj) {
                    let b0 = b_field[i * grid.ny + j];
                    let b1 = b_field[(i + di) * grid.ny + j + dj];
                    let rho =
                        (grid.x(i + di) - grid.x(i)).abs() + (grid.y(j + dj) - grid.y(j)).abs();
                    let lr = math::ln(b1 / b0);
                    pairs += 1;
                    if lr.abs() > k3 * rho * (1.0 + 1e-9) + 1e-12 {
                        sandwich = false;
                    }
                }
            }
        }
    }

    AssumptionReport {
        coeff_bound,
        b_lower,
        hypo_ratio,
        hypo_ratio_inner: hypo_inner,
        min_b,
        boundedness: finite,
        basics: b_lower > 0.0 && positive_b,
        hypobound,
        sandwich,
        sandwich_pairs: pairs,
        data_bounded,
        grid: *grid,
    }
}

/// `g(eval)` minus the Taylor polynomial of degree `d - 1` of `g` about
/// `base`.
pub fn taylor_remainder(
    field: &CoefficientField,
    d: u32,
    base: (f64, f64),
    eval: (f64, f64),
) -> Result<f64> {
    if d > field.max_order || d == 0 {
        return Err(Error::OrderExceeded {
            requested: d,
            max_order: field.max_order,
        });
    }
    let (dx, dy) = (eval.0 - base.0, eval.1 - base.1);
    let jet = field.jet(base.0, base.1);
    let mut poly = 0.0;
    for (k, &(i, j)) in JET_ORDERS.iter().enumerate() {
        if i + j < d {
            poly += jet[k] * math::powi(dx, i as i32) * math::powi(dy, j as i32)
                / (math::factorial(i) * math::factorial(j));
        }
    }
    Ok(field.value(eval.0, eval.1) - poly)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tanh_spec() -> ProblemSpec {
        ProblemSpec::tanh_benchmark()
    }

    #[test]
    fn tanh_value_and_slope_at_origin() {
        let b1 = CoefficientField::tanh_drift();
        assert_eq!(b1.eval(0, 0, 0.0, 0.0).unwrap(), -2.0);
        assert_eq!(b1.eval(0, 1, 0.0, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn order_is_checked() {
        let b2 = CoefficientField::constant(0.0, 1);
        assert_eq!(
            b2.eval(2, 0, 0.0, 0.0),
            Err(Error::OrderExceeded {
                requested: 2,
                max_order: 1
            })
        );
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let fields = [
            CoefficientField::tanh_drift(),
            CoefficientField::new(
                FieldKind::TanhBump {
                    offset: -2.0,
                    delta: 0.1,
                    cx: 1.0,
                    cy: 0.0,
                    rx: 1.5,
                    ry: 2.0,
                },
                3,
            ),
            CoefficientField::new(FieldKind::GaussCdf { offset: -2.0 }, 3),
        ];
        let pts = [(0.3, -0.7), (1.2, 0.4), (2.0, 1.1), (0.5, 0.0)];
        for field in &fields {
            for &(x, y) in &pts {
                let jet = field.jet(x, y);
                let h = 1e-4;
                for (k, &(i, j)) in JET_ORDERS.iter().enumerate().take(6).skip(1) {
                    // Differentiate the next lower derivative once more.
                    let (lo, step) = if j > 0 {
                        ((i, j - 1), (0.0, h))
                    } else {
                        ((i - 1, j), (h, 0.0))
                    };
                    let lo_k = jet_index(lo.0, lo.1);
                    let fd = (field.jet(x + step.0, y + step.1)[lo_k]
                        - field.jet(x - step.0, y - step.1)[lo_k])
                        / (2.0 * h);
                    assert!(
                        (fd - jet[k]).abs() < 1e-6,
                        "{:?} ({i},{j}) {fd} {}",
                        field.kind,
                        jet[k]
                    );
                }
            }
        }
    }

    #[test]
    fn value_only_field_reconstructs_itself() {
        let g: ValueFn = Arc::new(|x: f64, y: f64| math::sin(x) * math::cos(2.0 * y) - 2.0);
        let field = CoefficientField::new(FieldKind::Values(g.clone()), 3);
        for &(x, y) in &[(0.1, 0.2), (1.5, -0.3), (-0.7, 2.2)] {
            assert!((field.eval(0, 0, x, y).unwrap() - g(x, y)).abs() < 1e-12);
            let exact_y = -2.0 * math::sin(x) * math::sin(2.0 * y);
            assert!((field.d(0, 1, x, y) - exact_y).abs() < 1e-8);
            let exact_yy = -4.0 * math::sin(x) * math::cos(2.0 * y);
            assert!((field.d(0, 2, x, y) - exact_yy).abs() < 1e-5);
        }
    }

    #[test]
    fn tabulated_field_interpolates_smooth_data() {
        let xs: Vec<f64> = (0..41).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = (0..41).map(|i| -2.0 + i as f64 * 0.1).collect();
        let g = |x: f64, y: f64| -2.0 + 0.5 * math::tanh(y) + 0.1 * x;
        let vals = xs
            .iter()
            .flat_map(|&x| ys.iter().map(move |&y| g(x, y)))
            .collect();
        let t = Table::new(xs, ys, vals).unwrap();
        let field = CoefficientField::new(FieldKind::Tabulated(Arc::new(t)), 3);
        assert!((field.value(1.23, 0.37) - g(1.23, 0.37)).abs() < 1e-4);
        let b = field.d(0, 1, 1.23, 0.37);
        let exact = 0.5 * tanh_derivs(0.37)[1];
        assert!((b - exact).abs() < 1e-3);
    }

    #[test]
    fn beta01_is_one() {
        let spec = tanh_spec();
        for &(x, y) in &[(0.0, 0.0), (1.0, 2.0), (3.0, -4.0)] {
            assert_eq!(beta(&spec, 0, 1, x, y), 1.0);
        }
    }

    #[test]
    fn b_decays_to_zero_from_above() {
        let spec = tanh_spec();
        let mut prev = hypo_b(&spec, 0.0, 0.0);
        assert_eq!(prev, 1.0);
        for k in 1..40 {
            let b = hypo_b(&spec, 0.0, k as f64);
            assert!(b > 0.0 && b < prev);
            prev = b;
        }
        assert!(prev < 1e-30);
    }

    #[test]
    fn tanh_spec_passes_with_unit_lower_bound() {
        let r = validate_assumptions(&tanh_spec(), &SampleGrid::default());
        assert!(r.all_pass(), "{}", r.describe());
        // inf over the grid of 2 - tanh(y) is attained at y = 10.
        let expected = 2.0 - math::tanh(10.0);
        assert!((r.b_lower - expected).abs() < 1e-15);
        assert!((r.b_lower - 1.0).abs() < 1e-8);
        assert!(r.sandwich_pairs > 10_000);
    }

    #[test]
    fn gaussian_cdf_fails_hypobound() {
        let spec = ProblemSpec {
            b1: CoefficientField::new(FieldKind::GaussCdf { offset: -2.0 }, 3),
            ..tanh_spec()
        };
        let r = validate_assumptions(&spec, &SampleGrid::default());
        assert!(r.basics);
        assert!(!r.hypobound, "{}", r.describe());
    }

    #[test]
    fn kolmogorov_fails_basics() {
        let r = validate_assumptions(&ProblemSpec::kolmogorov(1.0), &SampleGrid::default());
        assert!(!r.basics);
        assert!(r.b_lower < 0.0);
    }

    #[test]
    fn remainder_vanishes_at_base_and_for_polynomials() {
        let b1 = CoefficientField::tanh_drift();
        for d in 1..=3 {
            assert_eq!(
                taylor_remainder(&b1, d, (0.4, 0.3), (0.4, 0.3)).unwrap(),
                0.0
            );
        }
        let lin = CoefficientField::new(
            FieldKind::Linear {
                a: 1.0,
                bx: 2.0,
                by: -3.0,
            },
            3,
        );
        for d in 2..=3 {
            let r = taylor_remainder(&lin, d, (0.1, 0.2), (1.7, -2.5)).unwrap();
            assert!(r.abs() < 1e-14);
        }
        assert!(taylor_remainder(
            &CoefficientField::constant(1.0, 0),
            1,
            (0.0, 0.0),
            (1.0, 1.0)
        )
        .is_err());
    }

    #[test]
    fn data_functions_evaluate() {
        let g = DataFn::Gaussian {
            amp: 2.0,
            x0: 1.0,
            y0: -1.0,
            sx: 0.5,
            sy: 2.0,
        };
        assert_eq!(g.eval(0.3, 1.0, -1.0), 2.0);
        let s = DataFn::Sum(
            Arc::new(DataFn::Constant(1.0)),
            Arc::new(DataFn::TimeRamp {
                base: 0.0,
                amp: 2.0,
            }),
        );
        assert_eq!(s.eval(0.25, 0.0, 0.0), 1.5);
        assert!(DataFn::Constant(3.0).scaled(0.0).is_zero());
    }
}
