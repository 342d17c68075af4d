//! Graded algebra of monomials
//!
//! `M^{p,q,r} = ((x - x0 + b1v t)/B)^p (y - y0)^q t^r = xs^p ys^q t^{r + (3p+q)/2}`
//!
//! with `p, q >= 0` and `r` a half-integer, plus the three differential
//! operators that act on it and the 6x6 matrix of the projected corrector
//! equation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Neg;

use num_rational::Ratio;
use num_traits::{Num, One, Zero};

use crate::error::Result;
use crate::frozen_kernels::{coords, FrozenPoint};
use crate::math;

/// Exact coefficients.
pub type Rational = Ratio<i128>;

/// Coefficient ring of [`SPoly`].
pub trait Coeff: Num + Clone + fmt::Debug + Neg<Output = Self> {
    fn from_int(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn render(&self) -> String;
}

impl Coeff for f64 {
    fn from_int(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn render(&self) -> String {
        alloc::format!("{self:e}")
    }
}

impl Coeff for Rational {
    fn from_int(v: i64) -> Self {
        Ratio::from_integer(v as i128)
    }
    fn to_f64(&self) -> f64 {
        *self.numer() as f64 / *self.denom() as f64
    }
    fn render(&self) -> String {
        if self.is_integer() {
            alloc::format!("{}", self.numer())
        } else {
            alloc::format!("{}/{}", self.numer(), self.denom())
        }
    }
}

/// `M^{p,q,r}` with `r = r2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonomialIndex {
    pub p: u32,
    pub q: u32,
    pub r2: i32,
}

impl MonomialIndex {
    /// Index with integer `r`.
    pub const fn new(p: u32, q: u32, r: i32) -> Self {
        MonomialIndex { p, q, r2: 2 * r }
    }

    pub const fn half(p: u32, q: u32, r2: i32) -> Self {
        MonomialIndex { p, q, r2 }
    }

    /// Exponent of `sqrt(t)` once `xs`, `ys` are factored out:
    /// `2 r + 3 p + q`.
    #[inline]
    pub fn sqrt_t_power(&self) -> i32 {
        self.r2 + 3 * self.p as i32 + self.q as i32
    }
}

/// `(d, s)` with `s = s2 / 2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Degree {
    pub d: u32,
    pub s2: i32,
}

impl Degree {
    pub fn s(&self) -> f64 {
        self.s2 as f64 / 2.0
    }
}

impl fmt::Display for Degree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.d, half_str(self.s2))
    }
}

fn half_str(v2: i32) -> String {
    if v2 % 2 == 0 {
        alloc::format!("{}", v2 / 2)
    } else {
        alloc::format!("{}/2", v2)
    }
}

pub fn mono_mul(a: MonomialIndex, b: MonomialIndex) -> MonomialIndex {
    MonomialIndex {
        p: a.p + b.p,
        q: a.q + b.q,
        r2: a.r2 + b.r2,
    }
}

/// `(p + q, r + (3p + q)/2)`.
pub fn degree(idx: MonomialIndex) -> Degree {
    Degree {
        d: idx.p + idx.q,
        s2: idx.sqrt_t_power(),
    }
}

/// The differential operators of the algebra.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffOp {
    /// `d_t - b1v d_x`: `M^{p,q,r} -> r M^{p,q,r-1}`.
    VT,
    /// `B d_x`: `M^{p,q,r} -> p M^{p-1,q,r}`.
    VX,
    /// `d_y`: `M^{p,q,r} -> q M^{p,q-1,r}`.
    DY,
}

impl DiffOp {
    /// Degree shift `(dd, ds2)` of the operator.
    pub fn shift(self) -> (i32, i32) {
        match self {
            DiffOp::VT => (0, -2),
            DiffOp::VX => (-1, -3),
            DiffOp::DY => (-1, -1),
        }
    }
}

/// Which side of an `s`-threshold a projection keeps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// Terms with `s <= threshold`.
    Main,
    /// Terms with `s >= threshold`.
    Error,
}

/// Sparse polynomial in the monomial algebra. Zero coefficients are never
/// stored.
#[derive(Clone, Debug, PartialEq)]
pub struct SPoly<C: Coeff> {
    terms: BTreeMap<MonomialIndex, C>,
}

impl<C: Coeff> Default for SPoly<C> {
    fn default() -> Self {
        SPoly {
            terms: BTreeMap::new(),
        }
    }
}

impl<C: Coeff> SPoly<C> {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(idx: MonomialIndex, c: C) -> Self {
        let mut s = Self::zero();
        s.add_term(idx, c);
        s
    }

    pub fn from_terms<I: IntoIterator<Item = (MonomialIndex, C)>>(it: I) -> Self {
        let mut s = Self::zero();
        for (i, c) in it {
            s.add_term(i, c);
        }
        s
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&MonomialIndex, &C)> {
        self.terms.iter()
    }

    pub fn coeff(&self, idx: MonomialIndex) -> C {
        self.terms.get(&idx).cloned().unwrap_or_else(C::zero)
    }

    pub fn add_term(&mut self, idx: MonomialIndex, c: C) {
        if c.is_zero() {
            return;
        }
        let sum = self.coeff(idx) + c;
        if sum.is_zero() {
            self.terms.remove(&idx);
        } else {
            self.terms.insert(idx, sum);
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut s = self.clone();
        for (i, c) in &other.terms {
            s.add_term(*i, c.clone());
        }
        s
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-C::one()))
    }

    pub fn scale(&self, k: C) -> Self {
        Self::from_terms(self.terms.iter().map(|(i, c)| (*i, c.clone() * k.clone())))
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut s = Self::zero();
        for (a, ca) in &self.terms {
            for (b, cb) in &other.terms {
                s.add_term(mono_mul(*a, *b), ca.clone() * cb.clone());
            }
        }
        s
    }

    pub fn pow(&self, n: u32) -> Self {
        let mut s = Self::monomial(MonomialIndex::new(0, 0, 0), C::one());
        for _ in 0..n {
            s = s.mul(self);
        }
        s
    }

    /// Keep terms on one side of `s = threshold2 / 2`.
    pub fn project(&self, threshold2: i32, side: Side) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .filter(|(i, _)| {
                    let s2 = i.sqrt_t_power();
                    match side {
                        Side::Main => s2 <= threshold2,
                        Side::Error => s2 >= threshold2,
                    }
                })
                .map(|(i, c)| (*i, c.clone())),
        )
    }

    /// Terms of exactly the given degree.
    pub fn component(&self, deg: Degree) -> Self {
        Self::from_terms(
            self.terms
                .iter()
                .filter(|(i, _)| degree(**i) == deg)
                .map(|(i, c)| (*i, c.clone())),
        )
    }

    pub fn degrees(&self) -> Vec<Degree> {
        let mut v: Vec<Degree> = self.terms.keys().map(|i| degree(*i)).collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn to_f64(&self) -> SPoly<f64> {
        SPoly::from_terms(self.terms.iter().map(|(i, c)| (*i, c.to_f64())))
    }

    /// Terms sorted by `s`, then `d`, then index.
    pub fn sorted_terms(&self) -> Vec<(MonomialIndex, C)> {
        let mut v: Vec<(MonomialIndex, C)> =
            self.terms.iter().map(|(i, c)| (*i, c.clone())).collect();
        v.sort_by_key(|(i, _)| {
            let d = degree(*i);
            (d.s2, d.d, *i)
        });
        v
    }

    /// Text dump `c · X^p Y^q t^r + ...`, in [`SPoly::sorted_terms`] order.
    pub fn dump(&self) -> String {
        if self.is_zero() {
            return String::from("0");
        }
        let parts: Vec<String> = self
            .sorted_terms()
            .iter()
            .map(|(i, c)| {
                alloc::format!("{} · X^{} Y^{} t^{}", c.render(), i.p, i.q, half_str(i.r2))
            })
            .collect();
        parts.join(" + ")
    }

    pub fn compile(&self) -> CompiledPoly {
        CompiledPoly {
            terms: self
                .terms
                .iter()
                .map(|(i, c)| (c.to_f64(), i.p, i.q, i.sqrt_t_power()))
                .collect(),
        }
    }
}

impl<C: Coeff> fmt::Display for SPoly<C> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.dump())
    }
}

pub fn apply_diff<C: Coeff>(op: DiffOp, poly: &SPoly<C>) -> SPoly<C> {
    let mut out = SPoly::zero();
    for (i, c) in poly.terms() {
        match op {
            DiffOp::VT => {
                if i.r2 != 0 {
                    // r = r2/2, so r * c = r2 * c / 2.
                    let k = C::from_int(i.r2 as i64) * c.clone() / C::from_int(2);
                    out.add_term(MonomialIndex { r2: i.r2 - 2, ..*i }, k);
                }
            }
            DiffOp::VX => {
                if i.p > 0 {
                    out.add_term(
                        MonomialIndex { p: i.p - 1, ..*i },
                        C::from_int(i.p as i64) * c.clone(),
                    );
                }
            }
            DiffOp::DY => {
                if i.q > 0 {
                    out.add_term(
                        MonomialIndex { q: i.q - 1, ..*i },
                        C::from_int(i.q as i64) * c.clone(),
                    );
                }
            }
        }
    }
    out
}

/// Float evaluation plan: `(coeff, p, q, power of sqrt t)` per term.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct CompiledPoly {
    pub terms: Vec<(f64, u32, u32, i32)>,
}

impl CompiledPoly {
    /// Value at standardised coordinates `xs`, `ys` and `st = sqrt(t)`.
    #[inline]
    pub fn eval(&self, xs: f64, ys: f64, st: f64) -> f64 {
        self.terms
            .iter()
            .map(|&(c, p, q, k)| {
                c * math::powi(xs, p as i32) * math::powi(ys, q as i32) * math::powi(st, k)
            })
            .sum()
    }
}

/// Value of `poly` at `(t, x, y)` for the frozen point `pt`.
pub fn eval_spoly<C: Coeff>(
    poly: &SPoly<C>,
    pt: &FrozenPoint,
    t: f64,
    x: f64,
    y: f64,
) -> Result<f64> {
    let c = coords(pt, t, x, y)?;
    Ok(poly.compile().eval(c.xs, c.ys, math::sqrt(t)))
}

/// Domain basis of the corrector matrix.
pub const COLUMN_BASIS: [MonomialIndex; 6] = [
    MonomialIndex::new(0, 1, 0),
    MonomialIndex::new(1, 0, -1),
    MonomialIndex::new(0, 3, -1),
    MonomialIndex::new(1, 2, -2),
    MonomialIndex::new(2, 1, -3),
    MonomialIndex::new(3, 0, -4),
];

/// Range basis of the corrector matrix.
pub const ROW_BASIS: [MonomialIndex; 6] = [
    MonomialIndex::new(0, 1, -1),
    MonomialIndex::new(1, 0, -2),
    MonomialIndex::new(0, 3, -2),
    MonomialIndex::new(1, 2, -3),
    MonomialIndex::new(2, 1, -4),
    MonomialIndex::new(3, 0, -5),
];

/// The leading operator blocks applied to `g`:
/// `M^{0,1,0} VX g - (6 M^{1,0,-2} + 4 M^{0,1,-1}) DY g - VT g + 1/2 DY^2 g`.
pub fn leading_operator<C: Coeff>(g: &SPoly<C>) -> SPoly<C> {
    let m010 = SPoly::monomial(MonomialIndex::new(0, 1, 0), C::one());
    let coeff_dy = SPoly::from_terms([
        (MonomialIndex::new(1, 0, -2), C::from_int(6)),
        (MonomialIndex::new(0, 1, -1), C::from_int(4)),
    ]);
    let vx = m010.mul(&apply_diff(DiffOp::VX, g));
    let dy = coeff_dy.mul(&apply_diff(DiffOp::DY, g));
    let vt = apply_diff(DiffOp::VT, g);
    let dyy = apply_diff(DiffOp::DY, &apply_diff(DiffOp::DY, g)).scale(C::one() / C::from_int(2));
    vx.sub(&dy).sub(&vt).add(&dyy)
}

/// Integer 6x6 matrix of the leading operator on the fixed bases, built by
/// applying the operator to each column monomial.
///
/// Panics if the image leaves the row basis or has a non-integer entry;
/// either would mean the degree bookkeeping is wrong.
pub fn assemble_operator_matrix() -> [[i64; 6]; 6] {
    let mut m = [[0i64; 6]; 6];
    for (j, col) in COLUMN_BASIS.iter().enumerate() {
        let img = leading_operator(&SPoly::<Rational>::monomial(*col, Rational::one()));
        for (idx, c) in img.terms() {
            let i = ROW_BASIS
                .iter()
                .position(|r| r == idx)
                .unwrap_or_else(|| panic!("image term {idx:?} outside the row basis"));
            assert!(c.is_integer(), "non-integer matrix entry {c}");
            m[i][j] = *c.numer() as i64;
        }
    }
    m
}

/// Exact determinant by fraction-free elimination.
pub fn determinant<const N: usize>(m: &[[i64; N]; N]) -> i128 {
    let mut a: [[i128; N]; N] = [[0; N]; N];
    for i in 0..N {
        for j in 0..N {
            a[i][j] = m[i][j] as i128;
        }
    }
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..N {
        if a[k][k] == 0 {
            match (k + 1..N).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..N {
            for j in k + 1..N {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
            a[i][k] = 0;
        }
        prev = a[k][k];
    }
    sign * a[N - 1][N - 1]
}

/// Exact solution of `m x = b` by Gaussian elimination; `None` if singular.
pub fn solve_exact<const N: usize>(m: &[[i64; N]; N], b: &[Rational; N]) -> Option<[Rational; N]> {
    let mut a: Vec<Vec<Rational>> = (0..N)
        .map(|i| {
            let mut row: Vec<Rational> = m[i].iter().map(|&v| Rational::from_int(v)).collect();
            row.push(b[i]);
            row
        })
        .collect();
    for k in 0..N {
        let piv = (k..N).find(|&r| !a[r][k].is_zero())?;
        a.swap(k, piv);
        let p = a[k][k];
        for j in k..=N {
            a[k][j] /= p;
        }
        for i in 0..N {
            if i != k && !a[i][k].is_zero() {
                let f = a[i][k];
                for j in k..=N {
                    let v = a[k][j];
                    a[i][j] -= f * v;
                }
            }
        }
    }
    let mut x = [Rational::zero(); N];
    for (i, xi) in x.iter_mut().enumerate() {
        *xi = a[i][N];
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(n: i128, d: i128) -> Rational {
        Ratio::new(n, d)
    }

    #[test]
    fn monoid_product_and_identity() {
        let a = MonomialIndex::new(1, 0, 0);
        let b = MonomialIndex::new(0, 1, 0);
        assert_eq!(mono_mul(a, b), MonomialIndex::new(1, 1, 0));
        let one = MonomialIndex::new(0, 0, 0);
        assert_eq!(mono_mul(one, a), a);
    }

    #[test]
    fn degrees_of_reference_monomials() {
        assert_eq!(degree(MonomialIndex::new(0, 1, 0)), Degree { d: 1, s2: 1 });
        assert_eq!(
            degree(MonomialIndex::new(1, 0, -2)),
            Degree { d: 1, s2: -1 }
        );
        assert_eq!(
            degree(MonomialIndex::new(1, 2, -3)),
            Degree { d: 3, s2: -1 }
        );
    }

    #[test]
    fn diff_action_table() {
        let vt = apply_diff(
            DiffOp::VT,
            &SPoly::<Rational>::monomial(MonomialIndex::new(0, 0, 1), Rational::one()),
        );
        assert_eq!(
            vt,
            SPoly::monomial(MonomialIndex::new(0, 0, 0), Rational::one())
        );
        let vx = apply_diff(
            DiffOp::VX,
            &SPoly::<Rational>::monomial(MonomialIndex::new(0, 5, -2), Rational::one()),
        );
        assert!(vx.is_zero());
        let dy = apply_diff(
            DiffOp::DY,
            &SPoly::<Rational>::monomial(MonomialIndex::new(1, 2, -3), Rational::one()),
        );
        assert_eq!(
            dy,
            SPoly::monomial(MonomialIndex::new(1, 1, -3), Rational::from_int(2))
        );
        // Half-integer powers of t.
        let h = apply_diff(
            DiffOp::VT,
            &SPoly::<Rational>::monomial(MonomialIndex::half(0, 0, 1), Rational::one()),
        );
        assert_eq!(h, SPoly::monomial(MonomialIndex::half(0, 0, -1), r(1, 2)));
    }

    #[test]
    fn no_zero_coefficients_are_stored() {
        let a = SPoly::<Rational>::monomial(MonomialIndex::new(1, 1, 0), r(3, 2));
        let z = a.sub(&a);
        assert!(z.is_zero());
        assert_eq!(z.dump(), "0");
        let mut b = SPoly::<Rational>::zero();
        b.add_term(MonomialIndex::new(0, 0, 0), Rational::zero());
        assert!(b.is_zero());
    }

    #[test]
    fn projection_filters() {
        let p = SPoly::<Rational>::from_terms([
            (MonomialIndex::new(1, 0, -2), Rational::one()),
            (MonomialIndex::new(0, 3, -2), Rational::one()),
        ]);
        assert_eq!(
            p.degrees(),
            alloc::vec![Degree { d: 1, s2: -1 }, Degree { d: 3, s2: -1 }]
        );
        assert_eq!(p.project(1, Side::Main), p);
        assert!(p.project(0, Side::Error).is_zero());
        let q = p.add(&SPoly::monomial(
            MonomialIndex::new(2, 0, -2),
            Rational::one(),
        ));
        // s = 1 term goes to the error side, the rest to main.
        let main = q.project(-1, Side::Main);
        let err = q.project(0, Side::Error);
        assert_eq!(main.add(&err), q);
    }

    #[test]
    fn assembled_matrix_matches_reference() {
        let m = assemble_operator_matrix();
        let expect = [
            [-4, 1, 3, 0, 0, 0],
            [-6, 1, 0, 1, 0, 0],
            [0, 0, -11, 1, 0, 0],
            [0, 0, -18, -6, 2, 0],
            [0, 0, 0, -12, -1, 3],
            [0, 0, 0, 0, -6, 4],
        ];
        assert_eq!(m, expect);
        assert_eq!(determinant(&m), 240);
        assert_eq!(determinant(&[[m[0][0], m[0][1]], [m[1][0], m[1][1]]]), 2);
        // Block upper-triangular: the d = 3 rows do not see the d = 1 columns.
        for row in &m[2..] {
            assert_eq!(&row[..2], &[0, 0]);
        }
    }

    #[test]
    fn determinant_of_small_cases() {
        assert_eq!(determinant(&[[0, 1], [1, 0]]), -1);
        assert_eq!(determinant(&[[2, 0, 0], [0, 3, 0], [0, 0, 4]]), 24);
        assert_eq!(determinant(&[[1, 2], [2, 4]]), 0);
    }

    #[test]
    fn exact_solve_roundtrip() {
        let m = assemble_operator_matrix();
        let b = [r(1, 3), r(-2, 7), r(5, 1), r(0, 1), r(1, 2), r(-1, 5)];
        let x = solve_exact(&m, &b).unwrap();
        for i in 0..6 {
            let s: Rational = (0..6)
                .map(|j| Rational::from_int(m[i][j]) * x[j])
                .fold(Rational::zero(), |a, v| a + v);
            assert_eq!(s, b[i]);
        }
    }

    #[test]
    fn dump_is_sorted_by_degree() {
        let p = SPoly::<Rational>::from_terms([
            (MonomialIndex::new(0, 3, -2), r(-3, 1)),
            (MonomialIndex::new(1, 0, -2), r(12, 1)),
            (MonomialIndex::new(0, 0, 1), r(1, 2)),
        ]);
        assert_eq!(
            p.dump(),
            "12 · X^1 Y^0 t^-2 + -3 · X^0 Y^3 t^-2 + 1/2 · X^0 Y^0 t^1"
        );
        let h = SPoly::<Rational>::monomial(MonomialIndex::half(0, 1, -1), Rational::one());
        assert_eq!(h.dump(), "1 · X^0 Y^1 t^-1/2");
    }

    #[test]
    fn evaluation_of_reference_monomials() {
        let pt = FrozenPoint::from_values(0.3, -0.4, -2.2, 0.1, 0.7);
        let (t, x, y) = (0.37, 1.1, 0.25);
        let one = SPoly::<Rational>::monomial(MonomialIndex::new(0, 0, 0), Rational::one());
        assert!((eval_spoly(&one, &pt, t, x, y).unwrap() - 1.0).abs() < 1e-15);
        let m100 = SPoly::<Rational>::monomial(MonomialIndex::new(1, 0, 0), Rational::one());
        let expect = (x - pt.x0 + pt.b1v * t) / pt.bv;
        assert!((eval_spoly(&m100, &pt, t, x, y).unwrap() - expect).abs() < 1e-14);
        assert!(eval_spoly(&m100, &pt, 0.0, x, y).is_err());
    }
}
