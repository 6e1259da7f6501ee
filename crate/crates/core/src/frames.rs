//! Window projectors, reference Bloch frames, and the discrete Berry connection.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fiber::{BandWindow, FiberSpectrum, PlaneWaveBasis, PotentialSpec};
use crate::lattice::{axpy, dot, norm, BravaisLattice, KGrid, Vec3};
use crate::linalg::{c, hermitian_opnorm, lowdin, skew, CMat, C64};

/// Per-k isometries whose columns span the range of the window projector P(k).
#[derive(Debug, Clone)]
pub struct WindowProjector {
    pub iso: Vec<CMat>,
}

impl WindowProjector {
    pub fn rank(&self) -> usize {
        self.iso.first().map_or(0, |v| v.ncols())
    }

    /// Dense projector P(k) = V V*.
    pub fn projector(&self, k_index: usize) -> CMat {
        let v = &self.iso[k_index];
        v * v.adjoint()
    }
}

/// Isometry onto the window eigenvectors at one k.
pub fn window_projector(spec: &FiberSpectrum, window: &BandWindow) -> CMat {
    spec.window_vectors(window.first, window.count)
}

pub fn window_projectors(spectra: &[FiberSpectrum], window: &BandWindow) -> WindowProjector {
    WindowProjector { iso: spectra.iter().map(|s| window_projector(s, window)).collect() }
}

/// Riesz projector (i/2π)∮(H − z)^{-1} dz over a circle, by the trapezoid rule.
pub fn riesz_projector(h: &CMat, center: f64, radius: f64, nodes: usize) -> CMat {
    let n = h.nrows();
    let mut acc = CMat::zeros(n, n);
    for q in 0..nodes {
        let e = C64::from_polar(1.0, TAU * q as f64 / nodes as f64);
        let z = c(center, 0.0) + e * radius;
        let shifted = h - CMat::identity(n, n) * z;
        let inv = shifted.try_inverse().expect("contour avoids the spectrum");
        // dz = i r e^{iθ} dθ, dθ = 2π/nodes
        acc += inv * (c(0.0, 1.0) * e * radius * (TAU / nodes as f64));
    }
    acc * c(0.0, 1.0 / TAU)
}

/// Trial subspace used to seed the projection method.
#[derive(Debug, Clone)]
pub enum Trial {
    /// The same plane-wave coefficients at every k.
    Constant(CMat),
    /// Periodic functions with coefficients `seeds`, multiplied by a Gaussian
    /// window of width `width` centered at `center`. Smooth and τ-equivariant in k.
    Windowed { seeds: CMat, center: Vec3, width: f64 },
}

impl Trial {
    pub fn ncols(&self) -> usize {
        match self {
            Trial::Constant(m) => m.ncols(),
            Trial::Windowed { seeds, .. } => seeds.ncols(),
        }
    }

    /// Plane-wave coefficients of the trial at quasi-momentum k.
    pub fn coeffs_at(&self, k: &Vec3, basis: &PlaneWaveBasis) -> CMat {
        match self {
            Trial::Constant(m) => m.clone(),
            Trial::Windowed { seeds, center, width } => {
                let n = basis.len();
                let s2 = width * width;
                // Fourier transform of the window at p: exp(−σ²|p|²/2 − i p·x_c); the
                // constant prefactor is dropped since Löwdin normalization removes it.
                let what = |p: &Vec3| (-0.5 * s2 * dot(p, p)).exp() * C64::from_polar(1.0, -dot(p, center));
                let mut out = CMat::zeros(n, seeds.ncols());
                for i in 0..n {
                    let q = axpy(1.0, k, &basis.g_cart[i]);
                    for (s, gs) in basis.g_cart.iter().enumerate() {
                        let p = axpy(-1.0, gs, &q);
                        if dot(&p, &p) * s2 > 80.0 {
                            continue;
                        }
                        let w = what(&p);
                        for a in 0..seeds.ncols() {
                            out[(i, a)] += seeds[(s, a)] * w;
                        }
                    }
                }
                out
            }
        }
    }
}

/// Position of the minimum of V sampled on a fractional grid of `per_axis` points per direction.
pub fn potential_minimum(lat: &BravaisLattice, pot: &PotentialSpec, per_axis: usize) -> Vec3 {
    let total = per_axis.pow(lat.dim as u32);
    let mut best = (f64::INFINITY, [0.0; 3]);
    for idx in 0..total {
        let mut x = [0.0; 3];
        let mut rem = idx;
        for j in 0..lat.dim {
            let n = rem % per_axis;
            rem /= per_axis;
            x = axpy(n as f64 / per_axis as f64, &lat.basis[j], &x);
        }
        let v = pot.eval(lat, &x);
        if v < best.0 - 1e-12 {
            best = (v, x);
        }
    }
    best.1
}

/// Default window width: a fifth of the shortest lattice vector.
pub fn default_width(lat: &BravaisLattice) -> f64 {
    0.2 * lat.basis.iter().map(norm).fold(f64::INFINITY, f64::min)
}

/// Windowed trial seeded by the window eigenvectors at k = 0.
pub fn eigen_trial(gamma: &FiberSpectrum, window: &BandWindow, center: Vec3, width: f64) -> Trial {
    Trial::Windowed { seeds: gamma.window_vectors(window.first, window.count), center, width }
}

/// Windowed trial with seeded random coefficients on the low plane waves.
pub fn random_trial(basis: &PlaneWaveBasis, m: usize, seed: u64, center: Vec3, width: f64) -> Trial {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gmin = basis.g_cart.iter().map(norm).filter(|&g| g > 1e-12).fold(f64::INFINITY, f64::min);
    let seeds = CMat::from_fn(basis.len(), m, |i, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        if norm(&basis.g_cart[i]) <= 1.5 * gmin + 1e-12 {
            c(re, im)
        } else {
            c(0.0, 0.0)
        }
    });
    Trial::Windowed { seeds, center, width }
}

/// Per-k orthonormal frames χ(k), stored for k in the centered zone.
///
/// Neighbors across the zone boundary are obtained from the stored values through
/// the coefficient shift, which realizes the τ-equivariance of the frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochFrame {
    pub coeffs: Vec<CMat>,
}

impl BlochFrame {
    pub fn nbands(&self) -> usize {
        self.coeffs.first().map_or(0, |v| v.ncols())
    }

    /// χ at grid neighbor `delta` along `dir`, τ-shifted if the step wraps.
    pub fn neighbor(&self, grid: &KGrid, basis: &PlaneWaveBasis, k: usize, dir: usize, delta: i64) -> CMat {
        let (idx, wrap) = grid.neighbor(k, dir, delta);
        basis.shift_coeffs(&self.coeffs[idx], dir, wrap)
    }

    /// Pointwise mixing φ = χ·U.
    pub fn rotated(&self, gauge: &[CMat]) -> BlochFrame {
        BlochFrame { coeffs: self.coeffs.iter().zip(gauge).map(|(x, u)| x * u).collect() }
    }

    /// Largest deviation of χ*χ from the identity.
    pub fn orthonormality_error(&self) -> f64 {
        self.coeffs
            .iter()
            .map(|x| (x.adjoint() * x - CMat::identity(x.ncols(), x.ncols())).norm())
            .fold(0.0, f64::max)
    }

    /// Largest ‖χ(k') − χ(k)‖ over adjacent pairs, divided by the step length.
    pub fn smoothness_constant(&self, grid: &KGrid, basis: &PlaneWaveBasis) -> f64 {
        let mut worst: f64 = 0.0;
        for k in 0..grid.len() {
            for j in 0..grid.dim {
                let nb = self.neighbor(grid, basis, k, j, 1);
                worst = worst.max((nb - &self.coeffs[k]).norm() / grid.spacing[j]);
            }
        }
        worst
    }
}

/// Trial coefficients at k scaled to ‖t‖_F² = m. A single scale keeps the
/// frame covariant under constant unitary changes of the trial.
fn normalized_trial(trial: &Trial, k: &Vec3, basis: &PlaneWaveBasis) -> CMat {
    let t = trial.coeffs_at(k, basis);
    let (n, m) = (t.norm(), t.ncols() as f64);
    if n > 0.0 {
        t * c(m.sqrt() / n, 0.0)
    } else {
        t
    }
}

/// Projection method: χ(k) = Löwdin(P(k) t(k)).
pub fn projection_frame(
    projs: &WindowProjector,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
    trial: &Trial,
) -> Result<BlochFrame> {
    let coeffs: Result<Vec<CMat>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let t = normalized_trial(trial, &grid.points[k], basis);
            let v = &projs.iso[k];
            let (chi, smin) = lowdin(&(v * (v.adjoint() * t)));
            if !(smin >= 1e-6) {
                return Err(Error::DegenerateProjection { k_index: k, sigma_min: smin });
            }
            Ok(chi)
        })
        .collect();
    Ok(BlochFrame { coeffs: coeffs? })
}

/// Smallest singular value of P(k)·t(k) at each k, with the trial scaled as above.
pub fn projection_sigma_min(projs: &WindowProjector, grid: &KGrid, basis: &PlaneWaveBasis, trial: &Trial) -> Vec<f64> {
    (0..grid.len())
        .map(|k| {
            let t = normalized_trial(trial, &grid.points[k], basis);
            lowdin(&(projs.iso[k].adjoint() * t)).1
        })
        .collect()
}

/// Result of Kato–Nagy transport along a path of grid points.
#[derive(Debug, Clone)]
pub struct Transport {
    /// Frame at each path point, expressed at the stored (centered-zone) k.
    pub frames: Vec<CMat>,
    /// Frame at the final point in the continuous k coordinate reached by the path.
    pub last_unwrapped: CMat,
    /// Net number of γ*_j crossings accumulated along the path.
    pub net_wrap: Vec<i32>,
}

/// Kato–Nagy intertwiner W = (1 − (P1−P0)²)^{-1/2} (P1 P0 + (1−P1)(1−P0)).
pub fn kato_nagy_step(p0: &CMat, p1: &CMat) -> Result<CMat> {
    let n = p0.nrows();
    let id = CMat::identity(n, n);
    let d = p1 - p0;
    let dn = hermitian_opnorm(&d);
    if !(dn < 1.0) {
        return Err(Error::TransportGap { step: 0, norm: dn });
    }
    let s = &id - &d * &d;
    let (vals, v) = crate::linalg::hermitian_eigh(&s).ok_or(Error::TransportGap { step: 0, norm: dn })?;
    let inv_sqrt = &v
        * CMat::from_diagonal(&nalgebra::DVector::from_iterator(vals.len(), vals.iter().map(|&l| c(1.0 / l.sqrt(), 0.0))))
        * v.adjoint();
    Ok(inv_sqrt * (p1 * p0 + (&id - p1) * (&id - p0)))
}

/// Transports `start` (a frame at path[0]) along consecutive grid points.
///
/// Consecutive indices must be grid neighbors; steps that cross the zone boundary
/// are followed continuously and the projector is τ-shifted accordingly.
pub fn kato_nagy_transport(
    projs: &WindowProjector,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
    path: &[usize],
    start: &CMat,
) -> Result<Transport> {
    let dim = grid.dim;
    let mut wrap = vec![0i32; dim];
    let shifted_iso = |idx: usize, w: &[i32]| {
        let mut v = projs.iso[idx].clone();
        for (j, &wj) in w.iter().enumerate() {
            v = basis.shift_coeffs(&v, j, wj);
        }
        v
    };
    let unshift = |x: &CMat, w: &[i32]| {
        let mut v = x.clone();
        for (j, &wj) in w.iter().enumerate() {
            v = basis.shift_coeffs(&v, j, -wj);
        }
        v
    };
    let mut cur = start.clone();
    let mut frames = vec![cur.clone()];
    let mut prev_iso = projs.iso[path[0]].clone();
    for (step, pair) in path.windows(2).enumerate() {
        let (a, b) = (grid.multi_index(pair[0]), grid.multi_index(pair[1]));
        for j in 0..dim {
            let n = grid.sizes[j] as i64;
            let diff = b[j] as i64 - a[j] as i64;
            if diff > n / 2 {
                wrap[j] -= 1;
            } else if diff < -(n / 2) {
                wrap[j] += 1;
            }
        }
        let next_iso = shifted_iso(pair[1], &wrap);
        let p0 = &prev_iso * prev_iso.adjoint();
        let p1 = &next_iso * next_iso.adjoint();
        let w = kato_nagy_step(&p0, &p1).map_err(|e| match e {
            Error::TransportGap { norm, .. } => Error::TransportGap { step, norm },
            other => other,
        })?;
        cur = w * cur;
        frames.push(unshift(&cur, &wrap));
        prev_iso = next_iso;
    }
    Ok(Transport { frames, last_unwrapped: cur, net_wrap: wrap })
}

/// Holonomy V of a closed one-dimensional loop: χ_end = τ(χ_start) · V.
pub fn loop_holonomy(projs: &WindowProjector, grid: &KGrid, basis: &PlaneWaveBasis, start: &CMat) -> Result<CMat> {
    let mut path: Vec<usize> = (0..grid.sizes[0]).map(|n| n * grid.len() / grid.sizes[0]).collect();
    path.push(0);
    let t = kato_nagy_transport(projs, grid, basis, &path, start)?;
    let mut s = start.clone();
    for (j, &w) in t.net_wrap.iter().enumerate() {
        s = basis.shift_coeffs(&s, j, w);
    }
    Ok(s.adjoint() * t.last_unwrapped)
}

/// Discrete Berry connection A_j(k), one m×m skew-Hermitian matrix per direction.
#[derive(Debug, Clone)]
pub struct BerryConnection {
    pub a: Vec<Vec<CMat>>,
    /// max_k ‖A_j + A_j*‖ before the skew projection, per direction.
    pub hermitian_drift: Vec<f64>,
}

impl BerryConnection {
    pub fn zero(grid: &KGrid, m: usize) -> Self {
        BerryConnection {
            a: vec![vec![CMat::zeros(m, m); grid.dim]; grid.len()],
            hermitian_drift: vec![0.0; grid.dim],
        }
    }

    pub fn at(&self, k: usize, dir: usize) -> &CMat {
        &self.a[k][dir]
    }
}

/// Central-difference connection [A_j]_{cb} = ⟨χ_c, D_j χ_b⟩, projected onto 𝔲(m).
pub fn berry_connection(frame: &BlochFrame, grid: &KGrid, basis: &PlaneWaveBasis) -> BerryConnection {
    let per_k: Vec<(Vec<CMat>, Vec<f64>)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let chi = &frame.coeffs[k];
            (0..grid.dim)
                .map(|j| {
                    let plus = frame.neighbor(grid, basis, k, j, 1);
                    let minus = frame.neighbor(grid, basis, k, j, -1);
                    let raw = chi.adjoint() * (plus - minus) * c(0.5 / grid.spacing[j], 0.0);
                    let drift = (&raw + raw.adjoint()).norm();
                    (skew(&raw), drift)
                })
                .unzip()
        })
        .collect();
    let mut drift = vec![0.0_f64; grid.dim];
    let mut a = Vec::with_capacity(grid.len());
    for (mats, d) in per_k {
        for j in 0..grid.dim {
            drift[j] = drift[j].max(d[j]);
        }
        a.push(mats);
    }
    BerryConnection { a, hermitian_drift: drift }
}

/// Builds the projection frame for a window, seeded at k = 0 by default.
pub fn default_frame(
    lat: &BravaisLattice,
    pot: &PotentialSpec,
    basis: &PlaneWaveBasis,
    grid: &KGrid,
    spectra: &[FiberSpectrum],
    window: &BandWindow,
) -> Result<BlochFrame> {
    let gamma = crate::fiber::solve_fiber(&[0.0; 3], basis, pot)?;
    let trial = eigen_trial(&gamma, window, potential_minimum(lat, pot, 32), default_width(lat));
    projection_frame(&window_projectors(spectra, window), grid, basis, &trial)
}
