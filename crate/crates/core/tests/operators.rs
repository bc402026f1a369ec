use fracabp::grid::{Domain, GridFunction};
use fracabp::kernel::QuadConfig;
use fracabp::operators::{kernel_moment, m_extremal, Mode, PucciEllipticity};
use proptest::prelude::*;

fn bump(p: &[f64]) -> f64 {
    let s = p[0] * p[0] + p[1] * p[1];
    if s < 1.0 {
        (1.0 - 1.0 / (1.0 - s)).exp()
    } else {
        0.0
    }
}

// H₀₀(0) of exp(1 − 1/(1 − |x|²)), by 30-digit adaptive quadrature
const BUMP_H00: [(f64, f64); 3] = [
    (1.5, -17.7660073936975972264072502216),
    (1.9, -67.3912228158750374747648417928),
    (1.99, -632.796203880645429953531846104),
];

#[test]
fn bump_moment_matches_reference() {
    let d = Domain::with_default_extent(2, 1.0 / 64.0).unwrap();
    let u = GridFunction::from_fn(&d, 0.0, bump);
    for (sigma, exact) in BUMP_H00 {
        let m = kernel_moment(&u, &[0.0, 0.0], sigma, &QuadConfig::default()).unwrap();
        let rel = (m.h.m[0][0] - exact).abs() / exact.abs();
        assert!(rel < 0.01, "sigma {sigma}: {} vs {exact}", m.h.m[0][0]);
        assert!((m.h.m[0][0] - m.h.m[1][1]).abs() < 1e-9 * exact.abs());
        assert!(m.h.m[0][1].abs() < 1e-9 * exact.abs());
    }
}

#[test]
fn moment_converges_under_refinement() {
    let mut errs = Vec::new();
    for h in [1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0] {
        let d = Domain::with_default_extent(2, h).unwrap();
        let u = GridFunction::from_fn(&d, 0.0, bump);
        let m = kernel_moment(&u, &[0.0, 0.0], 1.5, &QuadConfig::default()).unwrap();
        errs.push((m.h.m[0][0] - BUMP_H00[0].1).abs());
    }
    assert!(errs[2] < errs[0], "{errs:?}");
}

fn ell(sigma: f64) -> PucciEllipticity {
    PucciEllipticity::new(2, 1.5, 1.0, sigma).unwrap()
}

#[test]
fn operator_is_positively_homogeneous_and_translation_invariant() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let u = GridFunction::from_fn(&d, 0.0, bump);
    let q = QuadConfig::default();
    let x = [0.25, -0.125];
    let base = m_extremal(&u, &x, &ell(1.7), Mode::Min, &q).unwrap();
    let scaled = m_extremal(&u.map(|v| 3.0 * v), &x, &ell(1.7), Mode::Min, &q).unwrap();
    assert!((scaled - 3.0 * base).abs() < 1e-10 * base.abs().max(1.0));
    let shifted = u.map(|v| v + 2.0).with_exterior(fracabp::grid::Exterior::Constant(2.0)).unwrap();
    let s = m_extremal(&shifted, &x, &ell(1.7), Mode::Min, &q).unwrap();
    assert!((s - base).abs() < 1e-9 * base.abs().max(1.0));
}

#[test]
fn min_never_exceeds_max() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let u = GridFunction::from_fn(&d, 0.0, |p| bump(p) * (3.0 * p[0]).sin());
    let q = QuadConfig::default();
    for x in [[0.0, 0.0], [0.5, 0.25], [-0.25, 0.75]] {
        let lo = m_extremal(&u, &x, &ell(1.5), Mode::Min, &q).unwrap();
        let hi = m_extremal(&u, &x, &ell(1.5), Mode::Max, &q).unwrap();
        assert!(lo <= hi + 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    // u ≤ v with equality at x gives 𝓜⁻u(x) ≤ 𝓜⁻v(x)
    #[test]
    fn touching_from_below_is_monotone(a in 0.1f64..2.0, i in -8i64..8, j in -8i64..8, sigma in 1.1f64..1.95) {
        let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
        let x = [i as f64 * d.h(), j as f64 * d.h()];
        let v = GridFunction::from_fn(&d, 0.0, bump);
        let u = GridFunction::from_fn(&d, -a, |p| {
            let r2 = (p[0] - x[0]).powi(2) + (p[1] - x[1]).powi(2);
            bump(p) - a * (r2 / (1.0 + r2))
        });
        let q = QuadConfig::default();
        let mu = m_extremal(&u, &x, &ell(sigma), Mode::Min, &q).unwrap();
        let mv = m_extremal(&v, &x, &ell(sigma), Mode::Min, &q).unwrap();
        prop_assert!(mu <= mv + 1e-9 * mv.abs().max(1.0), "{mu} > {mv}");
    }
}
