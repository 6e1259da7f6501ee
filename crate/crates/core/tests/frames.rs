use std::f64::consts::TAU;

use wannier_core::fiber::{assemble_fiber, solve_fiber, solve_grid, BandWindow, PlaneWaveBasis, PotentialSpec};
use wannier_core::frames::*;
use wannier_core::lattice::{build_lattice, make_kgrid, BravaisLattice, KGrid};
use wannier_core::linalg::{c, random_unitary, unitarity_error, CMat};

struct Setup {
    lat: BravaisLattice,
    basis: PlaneWaveBasis,
    pot: PotentialSpec,
    grid: KGrid,
    projs: WindowProjector,
    window: BandWindow,
}

fn mathieu(n: usize, first: usize, count: usize) -> Setup {
    let lat = build_lattice(&[vec![TAU]]).unwrap();
    let basis = PlaneWaveBasis::new(&lat, 8.0);
    let pot = PotentialSpec::mathieu1d(0.5);
    let grid = make_kgrid(&lat, &[n]).unwrap();
    let window = BandWindow::new(first, count);
    let projs = window_projectors(&solve_grid(&grid, &basis, &pot).unwrap(), &window);
    Setup { lat, basis, pot, grid, projs, window }
}

fn default_trial(s: &Setup) -> Trial {
    let gamma = solve_fiber(&[0.0; 3], &s.basis, &s.pot).unwrap();
    eigen_trial(&gamma, &s.window, potential_minimum(&s.lat, &s.pot, 32), default_width(&s.lat))
}

#[test]
fn riesz_contour_matches_eigenvector_projector() {
    let s = mathieu(8, 0, 1);
    let k = [0.3, 0.0, 0.0];
    let h = assemble_fiber(&k, &s.basis, &s.pot);
    let spec = solve_fiber(&k, &s.basis, &s.pot).unwrap();
    let e = &spec.eigenvalues;
    let v = spec.window_vectors(0, 1);
    let p = &v * v.adjoint();
    let radius = 0.5 * (e[1] - e[0]);
    let riesz = riesz_projector(&h, e[0], radius, 128);
    assert!((riesz - p).norm() < 1e-10);
}

#[test]
fn window_projectors_are_rank_m_orthogonal_projectors() {
    let s = mathieu(16, 0, 2);
    for k in 0..s.grid.len() {
        let p = s.projs.projector(k);
        assert!((&p * &p - &p).norm() < 1e-12);
        assert!((&p - p.adjoint()).norm() < 1e-12);
        assert!((p.trace().re - 2.0).abs() < 1e-12);
    }
    assert_eq!(s.projs.rank(), 2);
}

#[test]
fn projection_frame_is_orthonormal_in_range_and_well_conditioned() {
    let s = mathieu(32, 0, 1);
    let trial = default_trial(&s);
    let frame = projection_frame(&s.projs, &s.grid, &s.basis, &trial).unwrap();
    assert!(frame.orthonormality_error() < 1e-12);
    for k in 0..s.grid.len() {
        let p = s.projs.projector(k);
        assert!((&p * &frame.coeffs[k] - &frame.coeffs[k]).norm() < 1e-12);
    }
    let smin = projection_sigma_min(&s.projs, &s.grid, &s.basis, &trial);
    let worst = smin.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(worst > 0.5, "sigma_min {worst}");
}

#[test]
fn windowed_frame_is_smooth_across_the_zone_boundary() {
    // Bounded difference quotients on refinement: no jump at k = ±1/2.
    let a = mathieu(32, 0, 1);
    let b = mathieu(64, 0, 1);
    let ca = projection_frame(&a.projs, &a.grid, &a.basis, &default_trial(&a)).unwrap().smoothness_constant(&a.grid, &a.basis);
    let cb = projection_frame(&b.projs, &b.grid, &b.basis, &default_trial(&b)).unwrap().smoothness_constant(&b.grid, &b.basis);
    assert!(cb < 1.2 * ca && cb > 0.8 * ca, "{ca} vs {cb}");
}

#[test]
fn constant_unitary_change_of_trial_rotates_the_frame() {
    let s = mathieu(16, 0, 2);
    let base = default_trial(&s);
    let Trial::Windowed { seeds, center, width } = &base else { unreachable!() };
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(4);
    let w = random_unitary(2, &mut rng);
    let turned = Trial::Windowed { seeds: seeds * &w, center: *center, width: *width };
    let f0 = projection_frame(&s.projs, &s.grid, &s.basis, &base).unwrap();
    let f1 = projection_frame(&s.projs, &s.grid, &s.basis, &turned).unwrap();
    for k in 0..s.grid.len() {
        assert!((&f0.coeffs[k] * &w - &f1.coeffs[k]).norm() < 1e-10);
    }
    // The connection transforms by conjugation with no inhomogeneous term.
    let a0 = berry_connection(&f0, &s.grid, &s.basis);
    let a1 = berry_connection(&f1, &s.grid, &s.basis);
    for k in 0..s.grid.len() {
        assert!((w.adjoint() * a0.at(k, 0) * &w - a1.at(k, 0)).norm() < 1e-10);
    }
}

#[test]
fn kato_nagy_identity_for_constant_projectors() {
    let s = mathieu(8, 0, 1);
    let p = s.projs.projector(3);
    let w = kato_nagy_step(&p, &p).unwrap();
    let n = p.nrows();
    assert!((w - CMat::identity(n, n)).norm() < 1e-12);
}

#[test]
fn kato_nagy_intertwines_and_is_unitary() {
    let s = mathieu(16, 0, 1);
    let (p0, p1) = (s.projs.projector(4), s.projs.projector(5));
    let w = kato_nagy_step(&p0, &p1).unwrap();
    assert!(unitarity_error(&w) < 1e-12);
    assert!((&w * &p0 - &p1 * &w).norm() < 1e-12);
}

#[test]
fn transport_rejects_orthogonal_projectors() {
    let n = 4;
    let mut p0 = CMat::zeros(n, n);
    p0[(0, 0)] = c(1.0, 0.0);
    let mut p1 = CMat::zeros(n, n);
    p1[(1, 1)] = c(1.0, 0.0);
    assert!(kato_nagy_step(&p0, &p1).is_err());
}

#[test]
fn holonomy_of_a_loop_is_unitary() {
    let s = mathieu(32, 0, 2);
    let start = s.projs.iso[0].clone();
    let v = loop_holonomy(&s.projs, &s.grid, &s.basis, &start).unwrap();
    assert!(unitarity_error(&v) < 1e-10);
}

#[test]
fn connection_is_skew_and_its_hermitian_drift_is_second_order() {
    let drift = |n: usize| {
        let s = mathieu(n, 0, 2);
        let frame = projection_frame(&s.projs, &s.grid, &s.basis, &default_trial(&s)).unwrap();
        let a = berry_connection(&frame, &s.grid, &s.basis);
        for k in 0..s.grid.len() {
            let x = a.at(k, 0);
            assert!((x + x.adjoint()).norm() < 1e-14);
        }
        a.hermitian_drift[0]
    };
    let ratio = drift(32) / drift(64);
    assert!((3.5..4.5).contains(&ratio), "drift ratio {ratio}");
}

#[test]
fn constant_frame_has_zero_connection_away_from_the_boundary() {
    let s = mathieu(16, 0, 1);
    let e0 = CMat::from_fn(s.basis.len(), 1, |i, _| if i == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
    let frame = BlochFrame { coeffs: vec![e0; s.grid.len()] };
    let a = berry_connection(&frame, &s.grid, &s.basis);
    for k in 1..s.grid.len() - 1 {
        assert!(a.at(k, 0).norm() < 1e-15);
    }
}

#[test]
fn connection_converges_at_second_order() {
    // k = 0 lies on every Γ-centered grid with even N; the frame there is fixed.
    let values: Vec<CMat> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let s = mathieu(n, 0, 1);
            let f = projection_frame(&s.projs, &s.grid, &s.basis, &default_trial(&s)).unwrap();
            let a = berry_connection(&f, &s.grid, &s.basis);
            // A quarter of the zone away from Γ, where A is nonzero.
            a.at(n / 2 + n / 4, 0).clone()
        })
        .collect();
    let ratio = (&values[0] - &values[1]).norm() / (&values[1] - &values[2]).norm();
    assert!((3.5..4.5).contains(&ratio), "Richardson ratio {ratio}");
}
