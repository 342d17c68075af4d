use parametrix_core::frozen_kernels::{energy, frozen_stats, FrozenPoint};
use parametrix_core::monomial_algebra::{
    apply_diff, degree, eval_spoly, mono_mul, DiffOp, MonomialIndex, SPoly,
};
use parametrix_core::problem_model::{
    taylor_remainder, validate_assumptions, CoefficientField, FieldKind, ProblemSpec, SampleGrid,
};
use parametrix_core::quadrature::{kernel_mass, QuadConfig};
use proptest::prelude::*;

fn index() -> impl Strategy<Value = MonomialIndex> {
    (0u32..4, 0u32..4, -8i32..4).prop_map(|(p, q, r2)| MonomialIndex::half(p, q, r2))
}

fn poly() -> impl Strategy<Value = SPoly<f64>> {
    prop::collection::vec((index(), -2.0f64..2.0), 1..5).prop_map(SPoly::from_terms)
}

fn frozen() -> impl Strategy<Value = FrozenPoint> {
    (
        0.0f64..2.0,
        -1.0f64..1.0,
        -3.0f64..-0.5,
        -0.5f64..0.5,
        0.1f64..2.0,
    )
        .prop_map(|(x0, y0, b1, b2, b)| FrozenPoint::from_values(x0, y0, b1, b2, b))
}

fn tanh_spec(offset: f64, amplitude: f64, scale: f64) -> ProblemSpec {
    ProblemSpec {
        b1: CoefficientField::new(
            FieldKind::Tanh {
                offset,
                amplitude,
                scale,
            },
            3,
        ),
        ..ProblemSpec::tanh_benchmark()
    }
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn degree_is_additive(a in index(), b in index()) {
        let (da, db, dab) = (degree(a), degree(b), degree(mono_mul(a, b)));
        prop_assert_eq!(dab.d, da.d + db.d);
        prop_assert_eq!(dab.s2, da.s2 + db.s2);
    }

    #[test]
    fn derivatives_shift_degree(a in index()) {
        for op in [DiffOp::VT, DiffOp::VX, DiffOp::DY] {
            let img = apply_diff(op, &SPoly::monomial(a, 1.0));
            let (dd, ds2) = op.shift();
            for (idx, _) in img.terms() {
                prop_assert_eq!(degree(*idx).d as i32, degree(a).d as i32 + dd);
                prop_assert_eq!(degree(*idx).s2, degree(a).s2 + ds2);
            }
        }
    }

    #[test]
    fn evaluation_is_multiplicative(
        a in poly(),
        b in poly(),
        pt in frozen(),
        t in 0.05f64..1.0,
        dx in -0.5f64..0.5,
        dy in -1.0f64..1.0,
    ) {
        let (x, y) = (pt.x0 - pt.b1v * t + dx, pt.y0 + dy);
        let ea = eval_spoly(&a, &pt, t, x, y).unwrap();
        let eb = eval_spoly(&b, &pt, t, x, y).unwrap();
        let eab = eval_spoly(&a.mul(&b), &pt, t, x, y).unwrap();
        let scale = ea.abs().max(1.0) * eb.abs().max(1.0);
        prop_assert!((eab - ea * eb).abs() <= 1e-10 * scale, "{} vs {}", eab, ea * eb);
    }

    #[test]
    fn kernel_has_unit_mass(pt in frozen(), t in 1e-3f64..1.0) {
        let m = kernel_mass(&pt, t, &QuadConfig::default()).unwrap();
        prop_assert!((m - 1.0).abs() <= 1e-6, "{}", m);
    }

    #[test]
    fn energy_is_the_gaussian_quadratic_form(
        pt in frozen(),
        t in 1e-3f64..1.0,
        u in -3.0f64..3.0,
        v in -3.0f64..3.0,
    ) {
        let s = frozen_stats(&pt, t).unwrap();
        let (dx, dy) = (u * s.d[0][0].sqrt(), v * s.d[1][1].sqrt());
        let q = 0.5 * (s.dinv[0][0] * dx * dx + 2.0 * s.dinv[0][1] * dx * dy + s.dinv[1][1] * dy * dy);
        let e = energy(&pt, t, s.mu1 + dx, s.mu2 + dy).unwrap();
        prop_assert!((e - q).abs() <= 1e-10 * q.max(1e-3), "{} vs {}", e, q);
    }

    #[test]
    fn valid_tanh_drifts_pass_basics_and_sandwich(
        offset in -3.0f64..-1.5,
        amplitude in 0.2f64..1.0,
        scale in 0.5f64..1.5,
        pairs in prop::collection::vec((0.0f64..2.0, -2.0f64..2.0, 0.0f64..2.0, -2.0f64..2.0), 8),
    ) {
        let spec = tanh_spec(offset, amplitude, scale);
        let r = validate_assumptions(&spec, &SampleGrid::default());
        prop_assert!(r.basics && r.min_b > 0.0);
        // the sampled tanh stays inside (-1, 1)
        prop_assert!(r.b_lower >= -(offset + amplitude) && r.b_lower < -offset);
        let k3 = r.hypo_ratio;
        for (xb, yb, xe, ye) in pairs {
            let rho = (xe - xb).abs() + (ye - yb).abs();
            let ratio = spec.hypo_b(xe, ye) / spec.hypo_b(xb, yb);
            prop_assert!(ratio <= (k3 * rho).exp() * (1.0 + 1e-12));
            prop_assert!(ratio >= (-k3 * rho).exp() * (1.0 - 1e-12));
        }
    }

    #[test]
    fn taylor_remainder_has_the_right_order(
        d in 1u32..=3,
        bx in 0.0f64..2.0,
        by in -1.5f64..1.5,
        angle in 0.0f64..std::f64::consts::TAU,
    ) {
        let field = CoefficientField::new(
            FieldKind::TanhBump { offset: -2.0, delta: 0.3, cx: 1.0, cy: 0.0, rx: 1.5, ry: 2.0 },
            3,
        );
        let (vx, vy) = (angle.cos(), angle.sin());
        let mut lh = Vec::new();
        let mut lr = Vec::new();
        for k in 0..6 {
            let h = 0.01 * 0.5f64.powi(k);
            let r = taylor_remainder(&field, d, (bx, by), (bx + h * vx, by + h * vy)).unwrap();
            lh.push(h.ln());
            lr.push(r.abs().max(1e-300).ln());
        }
        let s = slope(&lh, &lr);
        prop_assert!(s >= f64::from(d) - 0.1, "d = {} slope = {} {:?}", d, s, lr);
    }
}
