mod common;

use std::f64::consts::TAU;

use num_complex::Complex64 as C64;
use wannier_core::functional::GaugeField;
use wannier_core::lattice::dot;
use wannier_core::linalg::c;
use wannier_core::wannier::*;

#[test]
fn fit_follows_the_envelope_of_a_rippled_exponential() {
    let r: Vec<f64> = (0..4000).map(|i| i as f64 * 0.01).collect();
    let amp: Vec<f64> = r.iter().map(|x| (-1.0 * x).exp() * (1.0 + 0.2 * (7.0 * x).cos().abs())).collect();
    // Shell maxima of the ripple sit on the envelope 1.2·e^{−r}.
    let fit = fit_exponential_decay(&r, &amp, 5.0, 35.0, 0.5, 1e-14);
    assert!((fit.beta - 1.0).abs() < 1e-3, "beta {}", fit.beta);
    assert!(fit.r_squared > 0.9999);
}

#[test]
fn fit_drops_the_noise_floor() {
    let r: Vec<f64> = (0..2000).map(|i| i as f64 * 0.02).collect();
    let amp: Vec<f64> = r.iter().map(|x| (-2.0 * x).exp().max(1e-16)).collect();
    let fit = fit_exponential_decay(&r, &amp, 1.0, 39.0, 0.5, 1e-12);
    assert!((fit.beta - 2.0).abs() < 1e-3);
    assert!(fit.fit_range.1 < 14.5);
}

#[test]
fn synthesis_matches_the_direct_lattice_sum() {
    let inst = common::mathieu(8, 0, 1);
    let samples = default_samples(1, &inst.basis);
    let ws = synthesize(&inst.frame, &inst.grid, &inst.lat, &inst.basis, &samples).unwrap();
    let pref = 1.0 / (inst.grid.len() as f64 * inst.lat.cell_volume.sqrt());
    for idx in (0..ws.supercell.len()).step_by(37) {
        let x = ws.supercell.position(idx);
        let mut sum = c(0.0, 0.0);
        for (kidx, k) in inst.grid.points.iter().enumerate() {
            for (gi, g) in inst.basis.g_cart.iter().enumerate() {
                let q = [k[0] + g[0], k[1] + g[1], k[2] + g[2]];
                sum += inst.frame.coeffs[kidx][(gi, 0)] * C64::from_polar(pref, dot(&q, &x));
            }
        }
        assert!((ws.values[0][idx] - sum).norm() < 1e-12, "at {idx}");
    }
}

#[test]
fn wannier_functions_are_orthonormal() {
    let inst = common::mathieu(16, 0, 2);
    let samples = default_samples(1, &inst.basis);
    let ws = synthesize(&inst.frame, &inst.grid, &inst.lat, &inst.basis, &samples).unwrap();
    for a in 0..2 {
        for b in 0..2 {
            let want = if a == b { 1.0 } else { 0.0 };
            assert!((ws.inner(a, b) - c(want, 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn phase_ramp_in_k_translates_by_a_lattice_vector() {
    let inst = common::mathieu(16, 0, 1);
    let samples = default_samples(1, &inst.basis);
    let id = GaugeField::identity(16, 1);
    let ramp = id.recentered(&inst.grid, &[[3.0 * TAU, 0.0, 0.0]]);
    let base = synthesize(&inst.frame, &inst.grid, &inst.lat, &inst.basis, &samples).unwrap();
    let moved = synthesize(&inst.frame.rotated(&ramp.u), &inst.grid, &inst.lat, &inst.basis, &samples).unwrap();
    // e^{ik·γ} moves w by −γ.
    let expect = shift_by_cells(&base, &[-3]);
    for (x, y) in moved.values[0].iter().zip(&expect.values[0]) {
        assert!((x - y).norm() < 1e-12);
    }
    let (m0, m1) = (moments(&base).unwrap(), moments(&moved).unwrap());
    assert!((m1.centers[0][0] - (m0.centers[0][0] - 3.0 * TAU)).abs() < 1e-9);
    assert!((m1.spreads[0] - m0.spreads[0]).abs() < 1e-9);
}

#[test]
fn periodic_moments_reproduce_the_k_space_total() {
    let inst = common::mathieu(32, 0, 1);
    let samples = default_samples(1, &inst.basis);
    let ws = synthesize(&inst.frame, &inst.grid, &inst.lat, &inst.basis, &samples).unwrap();
    let k_space = inst.overlaps().value(&GaugeField::identity(32, 1)).total;
    let r_space = periodic_moments(&ws).total;
    assert!((k_space - r_space).abs() <= 1e-10 * k_space, "{k_space} vs {r_space}");
}

#[test]
fn too_few_samples_is_rejected() {
    let inst = common::mathieu(8, 0, 1);
    assert!(synthesize(&inst.frame, &inst.grid, &inst.lat, &inst.basis, &[4]).is_err());
}
