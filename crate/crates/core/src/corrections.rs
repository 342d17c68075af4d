//! Polynomial corrector `Q`, corrected kernels `K^Q`, `K^{Q,bdy}` and the
//! closed-form residual `P K^Q = K (P̆Q + Xi)`.

use crate::error::Result;
use crate::frozen_kernels::{
    boundary_point, coords_unchecked, energy_grad_from, kernel_prefactor, FrozenPoint,
};
use crate::math;
use crate::monomial_algebra::{
    apply_diff, assemble_operator_matrix, solve_exact, Coeff, CompiledPoly, DiffOp, MonomialIndex,
    Rational, SPoly, COLUMN_BASIS, ROW_BASIS,
};
use crate::problem_model::{taylor_remainder, ProblemSpec};

use num_traits::{One, Zero};

/// `alpha1 = beta_{1,0} b1` and `alpha2 = beta_{0,2}` at a frozen point.
#[inline]
pub fn alphas(pt: &FrozenPoint) -> (f64, f64) {
    (pt.beta(1, 0) * pt.b1v, pt.beta(0, 2))
}

/// Main part of the linear error term for given `alpha1`, `alpha2`:
/// `12 a1 M^{1,0,-2} + 6 a1 M^{0,1,-1} - 6 a2 M^{1,2,-3} - 3 a2 M^{0,3,-2}`.
pub fn xi_main_from<C: Coeff>(a1: C, a2: C) -> SPoly<C> {
    SPoly::from_terms([
        (MonomialIndex::new(1, 0, -2), C::from_int(12) * a1.clone()),
        (MonomialIndex::new(0, 1, -1), C::from_int(6) * a1),
        (MonomialIndex::new(1, 2, -3), C::from_int(-6) * a2.clone()),
        (MonomialIndex::new(0, 3, -2), C::from_int(-3) * a2),
    ])
}

pub fn xi_main(pt: &FrozenPoint) -> SPoly<f64> {
    let (a1, a2) = alphas(pt);
    xi_main_from(a1, a2)
}

/// Full linear error term as a polynomial:
/// `-sum beta_ij/(i! j!) (B M^{1,0,0} - b1v M^{0,0,1})^i (M^{0,1,0})^j (12 M^{1,0,-3} + 6 M^{0,1,-2})`
/// over `(i, j)` in `{(1,0), (2,0), (1,1), (0,2)}`.
pub fn xi_linear_from<C: Coeff>(
    beta10: C,
    beta20: C,
    beta11: C,
    beta02: C,
    b1v: C,
    bv: C,
) -> SPoly<C> {
    let dx = SPoly::from_terms([
        (MonomialIndex::new(1, 0, 0), bv),
        (MonomialIndex::new(0, 0, 1), -b1v),
    ]);
    let dy = SPoly::monomial(MonomialIndex::new(0, 1, 0), C::one());
    let de = SPoly::from_terms([
        (MonomialIndex::new(1, 0, -3), C::from_int(12)),
        (MonomialIndex::new(0, 1, -2), C::from_int(6)),
    ]);
    let half = C::one() / C::from_int(2);
    let taylor = dx
        .scale(beta10)
        .add(&dx.pow(2).scale(beta20 * half.clone()))
        .add(&dx.mul(&dy).scale(beta11))
        .add(&dy.pow(2).scale(beta02 * half));
    taylor.mul(&de).scale(-C::one())
}

pub fn xi_linear(pt: &FrozenPoint) -> SPoly<f64> {
    xi_linear_from(
        pt.beta(1, 0),
        pt.beta(2, 0),
        pt.beta(1, 1),
        pt.beta(0, 2),
        pt.b1v,
        pt.bv,
    )
}

/// `Xi = -(b1 - b1^L) dE/dx - (b2 - b2v) dE/dy + c` at `(t, x, y)`.
pub fn xi_full(spec: &ProblemSpec, pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(crate::Error::NonpositiveTime(t));
    }
    let tp = TargetPoint::new(spec, x, y);
    let c = coords_unchecked(pt, t, x, y);
    let (ex, ey) = energy_grad_from(pt, t, &c);
    Ok(xi_value(pt, &tp, ex, ey))
}

/// Nonlinear remainder `-R^3 b1 dE/dx - (b2 - b2v) dE/dy + c`.
pub fn xi_nonlinear(spec: &ProblemSpec, pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(crate::Error::NonpositiveTime(t));
    }
    let c = coords_unchecked(pt, t, x, y);
    let (ex, ey) = energy_grad_from(pt, t, &c);
    let r3 = taylor_remainder(&spec.b1, 3, (pt.x0, pt.y0), (x, y))?;
    Ok(-r3 * ex - (spec.b2.value(x, y) - pt.b2v) * ey + spec.c.value(x, y))
}

#[inline]
fn xi_value(pt: &FrozenPoint, tp: &TargetPoint, ex: f64, ey: f64) -> f64 {
    let b1l = pt.b1v + pt.bv * (tp.y - pt.y0);
    -(tp.b1 - b1l) * ex - (tp.b2 - pt.b2v) * ey + tp.c
}

/// The six corrector coefficients on [`COLUMN_BASIS`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiCoefficients {
    pub chi: [f64; 6],
    pub alpha1: f64,
    pub alpha2: f64,
}

/// Coefficient vector of `xi_main` on [`ROW_BASIS`].
pub fn xi_main_rhs<C: Coeff>(a1: C, a2: C) -> [C; 6] {
    let xi = xi_main_from(a1, a2);
    for (idx, _) in xi.terms() {
        assert!(
            ROW_BASIS.contains(idx),
            "main error term {idx:?} outside the row basis"
        );
    }
    let mut out: [C; 6] = core::array::from_fn(|_| C::zero());
    for (k, idx) in ROW_BASIS.iter().enumerate() {
        out[k] = xi.coeff(*idx);
    }
    out
}

/// Exact `chi = -P^{-1} rhs` for rational `alpha`.
pub fn solve_chi_exact(a1: Rational, a2: Rational) -> [Rational; 6] {
    let rhs = xi_main_rhs(a1, a2);
    let neg: [Rational; 6] = core::array::from_fn(|k| -rhs[k]);
    solve_exact(&assemble_operator_matrix(), &neg).expect("operator matrix is invertible")
}

/// Exact solutions for unit `alpha1` and unit `alpha2`; `chi` is linear in
/// `(alpha1, alpha2)`, so these two vectors give every solution.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChiBasis {
    pub unit1: [f64; 6],
    pub unit2: [f64; 6],
}

impl ChiBasis {
    pub fn new() -> Self {
        let u1 = solve_chi_exact(Rational::one(), Rational::zero());
        let u2 = solve_chi_exact(Rational::zero(), Rational::one());
        ChiBasis {
            unit1: core::array::from_fn(|k| u1[k].to_f64()),
            unit2: core::array::from_fn(|k| u2[k].to_f64()),
        }
    }

    #[inline]
    pub fn solve(&self, alpha1: f64, alpha2: f64) -> ChiCoefficients {
        ChiCoefficients {
            chi: core::array::from_fn(|k| alpha1 * self.unit1[k] + alpha2 * self.unit2[k]),
            alpha1,
            alpha2,
        }
    }
}

impl Default for ChiBasis {
    fn default() -> Self {
        Self::new()
    }
}

/// Corrector coefficients for real `alpha`.
pub fn solve_chi(alpha1: f64, alpha2: f64) -> ChiCoefficients {
    ChiBasis::new().solve(alpha1, alpha2)
}

/// `Q` at a frozen point, supported on [`COLUMN_BASIS`].
#[derive(Clone, Debug, PartialEq)]
pub struct CorrectionQ {
    pub poly: SPoly<f64>,
    pub chi: ChiCoefficients,
}

pub fn build_q(pt: &FrozenPoint) -> CorrectionQ {
    let (a1, a2) = alphas(pt);
    let chi = solve_chi(a1, a2);
    CorrectionQ {
        poly: SPoly::from_terms(
            COLUMN_BASIS
                .iter()
                .zip(chi.chi.iter())
                .map(|(i, c)| (*i, *c)),
        ),
        chi,
    }
}

/// Values at one point of `Q` and of the derivatives the residual needs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QParts {
    pub q: f64,
    pub dy: f64,
    pub dyy: f64,
    pub vx: f64,
    pub vt: f64,
}

/// Precompiled evaluation plans for `Q` and its derivatives, obtained by
/// applying the algebra's operators to each basis monomial once.
#[derive(Clone, Debug)]
pub struct Corrector {
    pub basis: ChiBasis,
    /// Per basis monomial: `[M, DY M, DY^2 M, VX M, VT M]`.
    plans: [[CompiledPoly; 5]; 6],
}

impl Corrector {
    pub fn new() -> Self {
        let plans = core::array::from_fn(|k| {
            let m = SPoly::<Rational>::monomial(COLUMN_BASIS[k], Rational::one());
            let dy = apply_diff(DiffOp::DY, &m);
            let dyy = apply_diff(DiffOp::DY, &dy);
            [
                m.compile(),
                dy.compile(),
                dyy.compile(),
                apply_diff(DiffOp::VX, &m).compile(),
                apply_diff(DiffOp::VT, &m).compile(),
            ]
        });
        Corrector {
            basis: ChiBasis::new(),
            plans,
        }
    }

    #[inline]
    pub fn chi(&self, pt: &FrozenPoint) -> [f64; 6] {
        let (a1, a2) = alphas(pt);
        self.basis.solve(a1, a2).chi
    }

    #[inline]
    pub fn parts(&self, chi: &[f64; 6], xs: f64, ys: f64, st: f64) -> QParts {
        let mut out = QParts::default();
        for (c, plan) in chi.iter().zip(self.plans.iter()) {
            if *c == 0.0 {
                continue;
            }
            out.q += c * plan[0].eval(xs, ys, st);
            out.dy += c * plan[1].eval(xs, ys, st);
            out.dyy += c * plan[2].eval(xs, ys, st);
            out.vx += c * plan[3].eval(xs, ys, st);
            out.vt += c * plan[4].eval(xs, ys, st);
        }
        out
    }
}

impl Default for Corrector {
    fn default() -> Self {
        Self::new()
    }
}

/// Coefficient values at an evaluation point, cached across base points.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetPoint {
    pub x: f64,
    pub y: f64,
    pub b1: f64,
    pub b2: f64,
    pub c: f64,
}

impl TargetPoint {
    #[inline]
    pub fn new(spec: &ProblemSpec, x: f64, y: f64) -> Self {
        TargetPoint {
            x,
            y,
            b1: spec.b1.value(x, y),
            b2: spec.b2.value(x, y),
            c: spec.c.value(x, y),
        }
    }
}

/// Kernels that can be integrated against base-point densities.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Frozen Gaussian `K`.
    K,
    /// Corrected kernel `K (1 + Q)`.
    KQ,
    /// Residual of the uncorrected kernel, `K Xi`.
    PK,
    /// Residual of the corrected kernel, `K (P̆Q + Xi)`.
    PKQ,
}

/// A frozen point together with its corrector coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrozenQ {
    pub pt: FrozenPoint,
    pub chi: [f64; 6],
}

impl FrozenQ {
    #[inline]
    pub fn new(corr: &Corrector, pt: FrozenPoint) -> Self {
        FrozenQ {
            chi: corr.chi(&pt),
            pt,
        }
    }
}

/// Evaluate the selected kernel for base `fq` at time `t` and target `tp`.
#[inline]
pub fn eval_kernel(
    kind: KernelKind,
    corr: &Corrector,
    fq: &FrozenQ,
    t: f64,
    tp: &TargetPoint,
) -> f64 {
    let pt = &fq.pt;
    let c = coords_unchecked(pt, t, tp.x, tp.y);
    let k = kernel_prefactor(pt.bv, t)
        * math::exp(-crate::frozen_kernels::energy_form(c.big_xs, c.big_ys));
    if k == 0.0 {
        return 0.0;
    }
    let st = math::sqrt(t);
    match kind {
        KernelKind::K => k,
        KernelKind::KQ => k * (1.0 + corr.parts(&fq.chi, c.xs, c.ys, st).q),
        KernelKind::PK => {
            let (ex, ey) = energy_grad_from(pt, t, &c);
            k * xi_value(pt, tp, ex, ey)
        }
        KernelKind::PKQ => {
            let (ex, ey) = energy_grad_from(pt, t, &c);
            let xi = xi_value(pt, tp, ex, ey);
            let qp = corr.parts(&fq.chi, c.xs, c.ys, st);
            let pbreve = 0.5 * qp.dyy + (tp.b1 - pt.b1v) / pt.bv * qp.vx + (tp.b2 - ey) * qp.dy
                - qp.vt
                + xi * qp.q;
            k * (pbreve + xi)
        }
    }
}

fn check_time(t: f64) -> Result<()> {
    if t > 0.0 {
        Ok(())
    } else {
        Err(crate::Error::NonpositiveTime(t))
    }
}

/// `K (1 + Q)`.
pub fn kernel_kq(spec: &ProblemSpec, pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let corr = Corrector::new();
    Ok(eval_kernel(
        KernelKind::KQ,
        &corr,
        &FrozenQ::new(&corr, *pt),
        t,
        &TargetPoint::new(spec, x, y),
    ))
}

/// `|b1(0, y0)| K^Q_{0, y0}`.
pub fn kernel_kq_boundary(spec: &ProblemSpec, y0: f64, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let pt = boundary_point(spec, y0)?;
    Ok(pt.b1v.abs() * kernel_kq(spec, &pt, t, x, y)?)
}

/// Closed-form `P K^Q`.
pub fn apply_p_kq(spec: &ProblemSpec, pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let corr = Corrector::new();
    Ok(eval_kernel(
        KernelKind::PKQ,
        &corr,
        &FrozenQ::new(&corr, *pt),
        t,
        &TargetPoint::new(spec, x, y),
    ))
}

/// Closed-form `P K = K Xi`.
pub fn apply_p_k(spec: &ProblemSpec, pt: &FrozenPoint, t: f64, x: f64, y: f64) -> Result<f64> {
    check_time(t)?;
    let corr = Corrector::new();
    Ok(eval_kernel(
        KernelKind::PK,
        &corr,
        &FrozenQ::new(&corr, *pt),
        t,
        &TargetPoint::new(spec, x, y),
    ))
}

/// Central-difference application of the full operator
/// `1/2 d_yy + b1 d_x + b2 d_y + c - d_t` to `g(t, x, y)`.
pub fn apply_p_fd(
    spec: &ProblemSpec,
    g: &dyn Fn(f64, f64, f64) -> f64,
    t: f64,
    x: f64,
    y: f64,
    h: f64,
) -> Result<f64> {
    if !(h > 0.0) || t <= h {
        return Err(crate::Error::StepTooLarge { h, t });
    }
    let g0 = g(t, x, y);
    let gyy = (g(t, x, y + h) - 2.0 * g0 + g(t, x, y - h)) / (h * h);
    let gy = (g(t, x, y + h) - g(t, x, y - h)) / (2.0 * h);
    let gx = (g(t, x + h, y) - g(t, x - h, y)) / (2.0 * h);
    let gt = (g(t + h, x, y) - g(t - h, x, y)) / (2.0 * h);
    Ok(
        0.5 * gyy + spec.b1.value(x, y) * gx + spec.b2.value(x, y) * gy + spec.c.value(x, y) * g0
            - gt,
    )
}
