mod common;

use std::f64::consts::TAU;

use proptest::prelude::*;
use wannier_core::functional::{field_norm, GaugeField};
use wannier_core::optimizer::*;

fn quick() -> OptimizerConfig {
    OptimizerConfig { max_iter: 5000, grad_tol: 1e-9, ..OptimizerConfig::default() }
}

#[test]
fn descent_reaches_the_abelian_oracle() {
    let inst = common::mathieu(32, 0, 1);
    let ov = inst.overlaps();
    let trace = minimize(&ov, &inst.grid, &quick(), Start::Identity).unwrap();
    let oracle = abelian_poisson_oracle(&ov, &inst.grid).unwrap();
    assert!(trace.converged);
    assert!((trace.objective - oracle.objective).abs() <= 1e-8 * oracle.objective);
    assert!(centers_canonical(&trace.centers, &inst.grid));
}

#[test]
fn objective_never_increases_beyond_noise() {
    let inst = common::mathieu(32, 0, 2);
    let ov = inst.overlaps();
    let trace = minimize(&ov, &inst.grid, &quick(), Start::Random).unwrap();
    let noise = 1e-10 * trace.rows[0].f;
    // Recentering and realignment are discrete jumps that may raise F by O(h²).
    let jumps: Vec<usize> =
        trace.recenterings.iter().map(|e| e.iter).chain(trace.realignments.iter().map(|e| e.iter)).collect();
    for w in trace.rows.windows(2) {
        if jumps.iter().any(|&j| w[1].iter.abs_diff(j) <= 1) {
            continue;
        }
        assert!(w[1].f <= w[0].f + noise, "iter {}: {} -> {}", w[1].iter, w[0].f, w[1].f);
    }
}

#[test]
fn random_start_finds_the_identity_start_minimum() {
    let inst = common::mathieu(32, 0, 1);
    let ov = inst.overlaps();
    let a = minimize(&ov, &inst.grid, &quick(), Start::Identity).unwrap();
    let b = minimize(&ov, &inst.grid, &OptimizerConfig { seed: 9, ..quick() }, Start::Random).unwrap();
    assert!((a.objective - b.objective).abs() <= 1e-8 * a.objective, "{} vs {}", a.objective, b.objective);
}

#[test]
fn final_gauge_is_unitary_and_stationary() {
    let inst = common::mathieu(32, 0, 2);
    let ov = inst.overlaps();
    let trace = minimize(&ov, &inst.grid, &quick(), Start::Identity).unwrap();
    assert!(trace.gauge.unitarity_error() < 1e-12);
    let (_, g) = ov.riemannian_gradient(&trace.gauge);
    assert!(field_norm(&g) <= 1e-7);
    assert!((field_norm(&g) - trace.grad_norm).abs() < 1e-12);
}

#[test]
fn recentering_moves_centers_into_the_home_cell() {
    // The discrete center of a shifted function is its periodic position, so keep the shift small against N.
    let inst = common::mathieu(32, 0, 1);
    let ov = inst.overlaps();
    let far = GaugeField::identity(32, 1).recentered(&inst.grid, &[[-TAU, 0.0, 0.0]]);
    let before = ov.value(&far).centers;
    assert!(!centers_canonical(&before, &inst.grid));
    let (back, shifts) = recenter(&far, &before, &inst.grid);
    assert_eq!(shifts, vec![vec![1]]);
    assert!(centers_canonical(&ov.value(&back).centers, &inst.grid));
}

#[test]
fn invalid_settings_are_rejected() {
    let inst = common::mathieu(8, 0, 1);
    let ov = inst.overlaps();
    for bad in [
        OptimizerConfig { armijo_c: 1.5, ..quick() },
        OptimizerConfig { step_shrink: 0.0, ..quick() },
        OptimizerConfig { max_iter: 0, ..quick() },
    ] {
        assert!(minimize(&ov, &inst.grid, &bad, Start::Identity).is_err());
    }
}

#[test]
fn oracle_rejects_composite_windows() {
    let inst = common::mathieu(8, 0, 2);
    assert!(abelian_poisson_oracle(&inst.overlaps(), &inst.grid).is_err());
}

#[test]
fn euler_lagrange_residual_shrinks_at_second_order() {
    let residual = |n: usize| {
        let inst = common::mathieu(n, 0, 1);
        let ov = inst.overlaps();
        minimize(&ov, &inst.grid, &quick(), Start::Identity).unwrap().el_residual
    };
    let ratio = residual(32) / residual(64);
    assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
}

#[test]
fn fft_round_trip() {
    let sizes = [4usize, 6, 5];
    let orig: Vec<_> = (0..120).map(|i| num_complex::Complex64::new((i as f64).sin(), (i as f64 * 0.3).cos())).collect();
    let mut data = orig.clone();
    fft_nd(&mut data, &sizes, false);
    fft_nd(&mut data, &sizes, true);
    for (a, b) in data.iter().zip(&orig) {
        // Neither direction normalizes.
        assert!((a / 120.0 - b).norm() < 1e-12);
    }
}

proptest! {
    #[test]
    fn canonical_shift_lands_in_the_half_open_cell(x in -1e3f64..1e3, a in 0.5f64..20.0) {
        let n = canonical_shift(x, a);
        let r = x - n as f64 * a;
        prop_assert!(r > -0.5 * a - 1e-6 * a && r <= 0.5 * a + 1e-6 * a, "x {x} a {a} -> {r}");
        prop_assert_eq!(canonical_shift(r, a), 0);
    }
}
