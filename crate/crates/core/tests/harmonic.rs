use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wannier_core::harmonic::*;
use wannier_core::linalg::{c, random_unitary, re_inner};

fn energy(line: HolomorphicLine) -> f64 {
    sphere_energy(&SphereMap::new(line), 64).unwrap()
}

#[test]
fn degree_d_lines_carry_energy_eight_pi_d() {
    for (m, d) in [(2, 1), (2, 2), (3, 1), (3, 3), (4, 2)] {
        let e = energy(line_of_degree(m, d).unwrap());
        assert!((e / (8.0 * PI * d as f64) - 1.0).abs() < 1e-6, "m {m} d {d}: {e}");
    }
}

#[test]
fn constant_line_has_zero_energy() {
    let line = HolomorphicLine::new(vec![vec![c(1.0, 0.0)], vec![c(2.0, -1.0)]]).unwrap();
    assert_eq!(line.degree, 0);
    assert!(energy(line).abs() < 1e-10);
}

#[test]
fn common_factors_are_removed() {
    // (z − 1)·(1, z) spans the same line as (1, z) away from z = 1.
    let line = HolomorphicLine::new(vec![vec![c(-1.0, 0.0), c(1.0, 0.0)], vec![c(0.0, 0.0), c(-1.0, 0.0), c(1.0, 0.0)]]).unwrap();
    assert_eq!(line.degree, 1);
    assert!((energy(line) / (8.0 * PI) - 1.0).abs() < 1e-6);
}

#[test]
fn invalid_lines_are_rejected() {
    assert!(HolomorphicLine::new(vec![vec![c(1.0, 0.0)]]).is_err());
    assert!(HolomorphicLine::new(vec![vec![], vec![]]).is_err());
    assert!(HolomorphicLine::new(vec![vec![c(f64::NAN, 0.0)], vec![c(1.0, 0.0)]]).is_err());
    assert!(line_of_degree(2, 0).is_err());
    let l = line_of_degree(2, 1).unwrap();
    assert!(l.mobius(c(1.0, 0.0), c(2.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)).is_err());
}

#[test]
fn energy_is_invariant_under_mobius_reparameterization() {
    let line = line_of_degree(3, 2).unwrap();
    let moved = line.mobius(c(2.0, 1.0), c(0.3, 0.0), c(-0.5, 0.2), c(1.0, 0.0)).unwrap();
    assert!((energy(moved) - energy(line)).abs() < 1e-6 * 16.0 * PI);
}

#[test]
fn energy_is_invariant_under_left_and_right_unitaries() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let line = line_of_degree(3, 2).unwrap();
    let base = energy(line.clone());
    let map = SphereMap::with_factors(line, random_unitary(3, &mut rng), random_unitary(3, &mut rng));
    assert!((sphere_energy(&map, 64).unwrap() - base).abs() < 1e-8 * base);
}

#[test]
fn maps_are_unitary_on_both_charts() {
    let map = SphereMap::new(line_of_degree(3, 2).unwrap());
    for x in [[0.0, 0.0, 1.0], [0.0, 0.0, -1.0], [0.6, 0.0, 0.8], [0.0, -0.6, -0.8]] {
        let u = map.eval_sphere(&x);
        assert!(wannier_core::linalg::unitarity_error(&u) < 1e-12);
    }
}

#[test]
fn stability_and_identity_checks_pass() {
    for m in [2, 3] {
        let s = stability_check(m, 64).unwrap();
        assert!((s.energy / (8.0 * PI) - 1.0).abs() < 0.01);
        assert_eq!(s.pass, m == 2, "m = {m}: energy {} vs bound {}", s.energy, s.bound);
        assert!(identity_check(m, 20, 1).unwrap().pass);
    }
    assert_eq!(stability_energy_bound(2), 3.0 * PI);
}

#[test]
fn canonical_basis_is_orthonormal() {
    let onb = canonical_onb(3);
    assert_eq!(onb.len(), 18);
    for (i, a) in onb.iter().enumerate() {
        for (j, b) in onb.iter().enumerate() {
            assert_eq!(re_inner(a, b), if i == j { 1.0 } else { 0.0 });
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn reflection_determinant_is_a_sign(re in -5.0f64..5.0, im in -5.0f64..5.0, m in 2usize..5) {
        let line = line_of_degree(m, 2).unwrap();
        let det = cartan_reflection_det(&line, C64::new(re, im));
        let want = if m % 2 == 1 { 1.0 } else { -1.0 };
        prop_assert!((det - c(want, 0.0)).norm() < 1e-10);
    }

    #[test]
    fn tangent_projection_is_idempotent(seed in 0u64..500, m in 2usize..5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_su_point(m, &mut rng);
        let x = random_unitary(m, &mut rng) * c(0.7, -0.2);
        let p = tangent_projection(&u, &x);
        prop_assert!((tangent_projection(&u, &p) - &p).norm() < 1e-12);
        let a = u.adjoint() * &p;
        prop_assert!((&a + a.adjoint()).norm() < 1e-12 && a.trace().norm() < 1e-12);
    }
}
