mod common;

use common::{gaussian, hcat, normal_equations, ones, random_panel};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use spanlab::dgp::{catalog_entry, simulate_panel};
use spanlab::regression::{
    build_design_vectors, nodewise_fit, nodewise_system, panel_nodewise_fits, solve_least_squares, NodewiseResiduals,
};
use spanlab::{Error, ReturnPanel};

fn rel_max(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax() / b.amax()
}

/// Auxiliary regression of `r2_j - r1_1` on `(1, r1_1, r1_k - r1_1)`;
/// returns (alpha, delta = -slope on r1_1).
fn auxiliary(panel: &ReturnPanel, j: usize) -> (f64, f64) {
    let t = panel.periods();
    let k = panel.benchmark_count();
    let r = panel.returns();
    let y = DVector::from_fn(t, |s, _| r[(s, k + j)] - r[(s, 0)]);
    let r11 = DMatrix::from_fn(t, 1, |s, _| r[(s, 0)]);
    let spreads = DMatrix::from_fn(t, k - 1, |s, c| r[(s, c + 1)] - r[(s, 0)]);
    let x = hcat(&[&ones(t), &r11, &spreads]);
    let (beta, _) = normal_equations(&x, &y);
    (beta[0], -beta[1])
}

#[test]
fn moment_identities_against_direct_regression() {
    let spec = catalog_entry("DGP1").unwrap().with_dims(3, 4, 250);
    let panel = simulate_panel(&spec, 99).unwrap();
    for j in 0..4 {
        let f = nodewise_fit(&panel, j).unwrap();
        let (alpha, delta) = auxiliary(&panel, j);
        let t = 250.0;
        let m_alpha = f.v1.dot(&f.v2) / t;
        let m_delta = f.v1.dot(&f.v3) / t;
        let g2 = f.v2.norm_squared() / t;
        let g3 = f.v3.norm_squared() / t;
        assert!((m_alpha + alpha * g2).abs() <= 1e-8 * (alpha * g2).abs().max(1e-12), "asset {j}");
        assert!((m_delta - delta * g3).abs() <= 1e-8 * (delta * g3).abs().max(1e-12), "asset {j}");
        assert!((f.alpha_hat() - alpha).abs() < 1e-9);
        assert!((f.delta_hat() - delta).abs() < 1e-9);
    }
}

#[test]
fn residuals_are_the_stated_regressions() {
    let panel = random_panel(60, 2, 1, 5);
    let x = build_design_vectors(&panel, 0).unwrap();
    let f = nodewise_fit(&panel, 0).unwrap();
    for (i, v) in [(0, &f.v1), (1, &f.v2), (2, &f.v3)] {
        let y = x.column(i).into_owned();
        let rest = x.clone().remove_column(i);
        let (_, resid) = normal_equations(&rest, &y);
        assert!((&resid - v).amax() < 1e-9, "coordinate {i}");
    }
}

#[test]
fn rank_deficient_design_fails_loudly() {
    let a = gaussian(30, 1, 1);
    let x = hcat(&[&a, &a]);
    let y = gaussian(30, 1, 2).column(0).into_owned();
    assert!(matches!(solve_least_squares(&x, &y), Err(Error::RankDeficient { .. })));
}

#[test]
fn scale_equivariance_of_moments() {
    let panel = random_panel(120, 2, 2, 8);
    for c in [3.0, 0.01, -2.0] {
        let scaled = panel.scaled(c).unwrap();
        for j in 0..2 {
            let f = nodewise_fit(&panel, j).unwrap();
            let g = nodewise_fit(&scaled, j).unwrap();
            assert!((&g.v1 - &f.v1 * c).amax() < 1e-9 * c.abs().max(1.0));
            let ma = f.v1.dot(&f.v2);
            let md = f.v1.dot(&f.v3);
            let ga = g.v1.dot(&g.v2);
            let gd = g.v1.dot(&g.v3);
            // alpha moment scales with c, delta moment with c^2.
            assert!((ga - c * ma).abs() < 1e-8 * (c * ma).abs().max(1e-10));
            assert!((gd - c * c * md).abs() < 1e-8 * (c * c * md).abs().max(1e-10));
            if c > 0.0 {
                assert_eq!(ga.signum(), ma.signum());
            }
            assert_eq!(gd.signum(), md.signum());
        }
    }
}

fn assert_fits_close(a: &NodewiseResiduals, b: &NodewiseResiduals) {
    assert_eq!(a.exact_fit, b.exact_fit);
    let vecs = [(&a.v1, &b.v1), (&a.v2, &b.v2), (&a.v3, &b.v3), (&a.theta1, &b.theta1), (&a.theta2, &b.theta2), (&a.theta3, &b.theta3)];
    for (i, (x, y)) in vecs.into_iter().enumerate() {
        assert!((x - y).amax() <= 1e-9 * (1.0 + y.amax()), "component {i}");
    }
    for (x, y) in [(a.g1_sq, b.g1_sq), (a.g2_sq, b.g2_sq), (a.g3_sq, b.g3_sq)] {
        assert!((x - y).abs() <= 1e-9 * (1.0 + y.abs()));
    }
}

#[test]
fn shared_spread_route_handles_exact_copies() {
    let base = random_panel(80, 3, 1, 21);
    let r = base.returns();
    let copy = DMatrix::from_fn(80, 5, |s, c| if c < 3 { r[(s, c)] } else if c == 3 { r[(s, 0)] } else { r[(s, 3)] });
    let panel = ReturnPanel::new(copy, 3, None).unwrap();
    let fast = panel_nodewise_fits(&panel).unwrap();
    assert!(fast[0].exact_fit && !fast[1].exact_fit);
    for (j, f) in fast.iter().enumerate() {
        assert_fits_close(f, &nodewise_fit(&panel, j).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn precision_identity(d in 2usize..=6, seed in any::<u64>()) {
        let x = gaussian(50, d, seed);
        let sys = nodewise_system(&x).unwrap();
        let m = x.tr_mul(&x) / 50.0;
        let m_inv = m.clone().try_inverse().unwrap();
        prop_assert!(rel_max(&sys.precision(), &m_inv) <= 1e-6);
        let resid_cov = sys.residuals.tr_mul(&sys.residuals) / 50.0;
        prop_assert!(rel_max(&sys.residual_covariance(), &resid_cov) <= 1e-6);
    }

    #[test]
    fn ols_residuals_orthogonal(q in 1usize..6, seed in any::<u64>()) {
        let x = gaussian(40, q, seed);
        let y = gaussian(40, 1, seed ^ 1).column(0).into_owned();
        let fit = solve_least_squares(&x, &y).unwrap();
        for c in 0..q {
            let col = x.column(c);
            let scale = col.norm() * y.norm() / 40.0;
            prop_assert!((col.dot(&fit.residuals) / 40.0).abs() <= 1e-8 * scale.max(1e-300));
        }
        prop_assert!((fit.residual_second_moment - fit.residuals.norm_squared() / 40.0).abs() < 1e-15);
    }

    #[test]
    fn moment_signs_follow_coefficients(k in 1usize..4, seed in any::<u64>()) {
        let panel = random_panel(80, k, 1, seed);
        let f = nodewise_fit(&panel, 0).unwrap();
        let m_alpha = f.v1.dot(&f.v2) / 80.0;
        let m_delta = f.v1.dot(&f.v3) / 80.0;
        prop_assert!(f.g2_sq > 0.0 && f.g3_sq > 0.0);
        prop_assert!((m_alpha + f.alpha_hat() * f.g2_sq).abs() <= 1e-10 * (1.0 + m_alpha.abs()));
        prop_assert!((m_delta - f.delta_hat() * f.g3_sq).abs() <= 1e-10 * (1.0 + m_delta.abs()));
    }

    #[test]
    fn design_layout(k in 1usize..5, n in 1usize..4, seed in any::<u64>()) {
        let panel = random_panel(12, k, n, seed);
        for j in 0..n {
            let x = build_design_vectors(&panel, j).unwrap();
            prop_assert_eq!(x.ncols(), k + 2);
            prop_assert!(x.column(1).iter().all(|v| *v == 1.0));
        }
        let err = build_design_vectors(&panel, n);
        prop_assert!(matches!(err, Err(Error::IndexOutOfRange { .. })), "out-of-range index accepted");
    }

    #[test]
    fn shared_spread_route_matches_direct_route(k in 1usize..7, n in 1usize..4, seed in any::<u64>()) {
        let panel = random_panel(60, k, n, seed);
        let fast = panel_nodewise_fits(&panel).unwrap();
        prop_assert_eq!(fast.len(), n);
        for (j, f) in fast.iter().enumerate() {
            assert_fits_close(f, &nodewise_fit(&panel, j).unwrap());
        }
    }
}
