use std::f64::consts::PI;

use fracabp::grid::{Domain, GridFunction};
use fracabp::riesz::{
    geometric_partial_sum, ring_decomposition, riesz, riesz_field, singular_cell_weight, verify_ring_bound,
    write_ring_csv,
};
use fracabp::special::cal_a;
use proptest::prelude::*;

fn disc(h: f64, rho: f64) -> GridFunction {
    let d = Domain::with_default_extent(2, h).unwrap();
    GridFunction::from_fn(&d, 0.0, |p| if p[0] * p[0] + p[1] * p[1] < rho * rho { -1.0 } else { 0.0 })
}

#[test]
fn potential_of_unit_disc() {
    // −𝒜(α)·2π∫₀¹ r^{α−1} dr at α = 1/2
    let exact = -cal_a(0.5, 2).unwrap() * 4.0 * PI;
    let g = disc(1.0 / 64.0, 1.0);
    let p = riesz(&g, 1.5, &[0.0, 0.0]).unwrap();
    assert!(((p - exact) / exact).abs() < 0.01, "{p} vs {exact}");
}

#[test]
fn singular_weight_matches_brute_force() {
    for alpha in [0.1, 0.5, 0.9] {
        // inscribed disc in closed form, the rest of the cell by midpoints
        let m = 2000;
        let mut acc = 2.0 * PI * 0.5f64.powf(alpha) / alpha;
        for i in 0..m {
            for j in 0..m {
                let x = (i as f64 + 0.5) / m as f64 - 0.5;
                let y = (j as f64 + 0.5) / m as f64 - 0.5;
                let r2 = x * x + y * y;
                if r2 >= 0.25 {
                    acc += r2.powf((alpha - 2.0) / 2.0) / (m * m) as f64;
                }
            }
        }
        let w = singular_cell_weight(2, alpha);
        assert!((w - acc).abs() / w < 1e-3, "alpha {alpha}: {w} vs {acc}");
    }
}

#[test]
fn fft_field_matches_direct_sum() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let g = GridFunction::from_fn(&d, 0.0, |p| {
        let r2 = (p[0] - 0.2).powi(2) + p[1] * p[1];
        -(1.0 - r2).max(0.0)
    });
    let pts: Vec<usize> = [[0.0, 0.0], [0.5, -0.25], [1.5, 1.0]]
        .iter()
        .map(|x| d.flat_of(&d.lattice_index(x).unwrap()[..2]).unwrap())
        .collect();
    let f = riesz_field(&g, 1.7, &pts).unwrap();
    for (k, &p) in pts.iter().enumerate() {
        let x = d.point_of(p);
        let direct = riesz(&g, 1.7, &x[..2]).unwrap();
        assert!((f[k] - direct).abs() < 1e-9 * direct.abs(), "{} vs {direct}", f[k]);
    }
}

#[test]
fn geometric_sum_closed_form() {
    for sigma in [0.5, 1.0, 1.5, 1.9] {
        let q = 4f64.powf(-(2.0 - sigma) / 2.0);
        let s = geometric_partial_sum(sigma, 2);
        assert!((s - 1.0 / (1.0 - q)).abs() < 1e-10 * s);
    }
}

#[test]
fn rings_of_a_full_disc_all_pass() {
    let g = disc(1.0 / 32.0, 2.0);
    let rings = ring_decomposition(&g, &[0.0, 0.0], 1.0).unwrap();
    assert!(rings.rings.len() >= 3);
    assert!(rings.rings.iter().all(|r| r.pass));
    let rep = verify_ring_bound(&g, rings, 1.5).unwrap();
    assert!(rep.hypothesis && rep.chain_holds && rep.bound_holds);
    let mut buf = Vec::new();
    write_ring_csv(&rep.decomposition, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("l,r_l,measure,threshold,pass\n"));
    assert_eq!(text.lines().count(), rep.decomposition.rings.len() + 1);
}

#[test]
fn tiny_r0_is_rejected() {
    let g = disc(1.0 / 16.0, 1.0);
    assert!(ring_decomposition(&g, &[0.0, 0.0], 0.05).is_err());
    assert!(ring_decomposition(&g, &[0.0, 0.0], -1.0).is_err());
}

#[test]
fn nonnegative_center_is_rejected() {
    let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
    let g = GridFunction::zeros(&d);
    let rings = ring_decomposition(&g, &[0.0, 0.0], 0.5).unwrap();
    assert!(verify_ring_bound(&g, rings, 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // the chain sum only keeps part of the potential of a nonpositive Γ
    #[test]
    fn chain_never_exceeds_direct(rho in 0.3f64..1.5, depth in 0.1f64..3.0, r0 in 0.3f64..1.0, sigma in 1.1f64..1.95) {
        let d = Domain::with_default_extent(2, 1.0 / 16.0).unwrap();
        let g = GridFunction::from_fn(&d, 0.0, |p| -depth * (1.0 - (p[0] * p[0] + p[1] * p[1]) / (rho * rho)).max(0.0));
        let rings = ring_decomposition(&g, &[0.0, 0.0], r0).unwrap();
        let rep = verify_ring_bound(&g, rings, sigma).unwrap();
        prop_assert!(rep.chain_holds, "direct {} chain {}", rep.direct, rep.chain);
        prop_assert!(!rep.hypothesis || rep.bound_holds);
    }
}
