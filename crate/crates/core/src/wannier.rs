//! Wannier functions on the real-space supercell: synthesis, moments, decay fits.

use std::f64::consts::TAU;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::PlaneWaveBasis;
use crate::frames::BlochFrame;
use crate::lattice::{axpy, dot, BravaisLattice, KGrid, Vec3};
use crate::linalg::{c, C64};
use crate::optimizer::fft_nd;

/// Sampling of the supercell: `repetitions[j]` cells of `samples[j]` points each.
#[derive(Debug, Clone, PartialEq)]
pub struct Supercell {
    pub dim: usize,
    pub repetitions: Vec<usize>,
    pub samples: Vec<usize>,
    /// Fractional coordinate of sample 0 along each lattice vector (cells).
    pub origin: Vec<f64>,
    pub basis: Vec<Vec3>,
}

impl Supercell {
    pub fn shape(&self) -> Vec<usize> {
        self.repetitions.iter().zip(&self.samples).map(|(n, s)| n * s).collect()
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice-fractional coordinates t_j (in cells) of sample `idx`, row-major with the first axis slowest.
    pub fn fractional(&self, idx: usize) -> Vec<f64> {
        let shape = self.shape();
        let mut rem = idx;
        let mut t = vec![0.0; self.dim];
        for j in (0..self.dim).rev() {
            let s = rem % shape[j];
            rem /= shape[j];
            t[j] = self.origin[j] + s as f64 / self.samples[j] as f64;
        }
        t
    }

    pub fn position(&self, idx: usize) -> Vec3 {
        let t = self.fractional(idx);
        let mut x = [0.0; 3];
        for j in 0..self.dim {
            x = axpy(t[j], &self.basis[j], &x);
        }
        x
    }

    /// Volume element per sample.
    pub fn cell_measure(&self, lat: &BravaisLattice) -> f64 {
        lat.cell_volume / self.samples.iter().product::<usize>() as f64
    }
}

/// Default samples per cell: 16 (d ≤ 2) or 8 (d = 3), raised to avoid aliasing of the plane-wave cutoff.
pub fn default_samples(dim: usize, basis: &PlaneWaveBasis) -> Vec<usize> {
    let base = if dim == 3 { 8 } else { 16 };
    (0..dim)
        .map(|j| {
            let gmax = basis.g_int.iter().map(|g| g[j].unsigned_abs() as usize).max().unwrap_or(0);
            base.max(2 * gmax + 2)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DecayFit {
    pub beta: f64,
    pub r_squared: f64,
    pub fit_range: (f64, f64),
    pub points: usize,
}

#[derive(Debug, Clone)]
pub struct WannierSet {
    pub supercell: Supercell,
    pub cell_measure: f64,
    /// values[a][idx]
    pub values: Vec<Vec<C64>>,
}

impl WannierSet {
    pub fn nbands(&self) -> usize {
        self.values.len()
    }

    pub fn norm_sqr(&self, a: usize) -> f64 {
        self.values[a].iter().map(|z| z.norm_sqr()).sum::<f64>() * self.cell_measure
    }

    pub fn inner(&self, a: usize, b: usize) -> C64 {
        self.values[a].iter().zip(&self.values[b]).map(|(x, y)| x.conj() * y).sum::<C64>() * self.cell_measure
    }
}

/// w_a(x) = (N|Y|)^{-1/2} · N^{-1/2} Σ_k Σ_G c_k(G) e^{i(k+G)·x}, evaluated by a supercell FFT.
///
/// The prefactor makes ‖w_a‖² equal the mean of ‖φ_a(k)‖² over the grid.
pub fn synthesize(
    phi: &BlochFrame,
    grid: &KGrid,
    lat: &BravaisLattice,
    basis: &PlaneWaveBasis,
    samples: &[usize],
) -> Result<WannierSet> {
    let dim = lat.dim;
    if samples.len() != dim || phi.coeffs.len() != grid.len() {
        return Err(Error::ShapeMismatch("samples or frame do not match the grid".into()));
    }
    let reps = grid.sizes.clone();
    let shape: Vec<usize> = reps.iter().zip(samples).map(|(n, s)| n * s).collect();
    let total: usize = shape.iter().product();
    let origin: Vec<f64> = reps.iter().map(|&n| -((n / 2) as f64)).collect();
    let supercell = Supercell { dim, repetitions: reps.clone(), samples: samples.to_vec(), origin, basis: lat.basis.clone() };
    let nk = grid.len() as f64;
    let pref = 1.0 / (nk * lat.cell_volume.sqrt());

    // Integer frequency p_j = N_j (k·γ_j/2π + G_j) − frac_j, shared fractional part per axis.
    let freq = |k: &Vec3, g: &[i32; 3], j: usize| reps[j] as f64 * (dot(k, &lat.basis[j]) / TAU + g[j] as f64);
    let frac: Vec<f64> = (0..dim)
        .map(|j| {
            let p = freq(&grid.points[0], &[0, 0, 0], j);
            p - p.floor()
        })
        .collect();

    let m = phi.nbands();
    let mut values = Vec::with_capacity(m);
    for a in 0..m {
        let mut data = vec![c(0.0, 0.0); total];
        for (kidx, k) in grid.points.iter().enumerate() {
            for (gi, g) in basis.g_int.iter().enumerate() {
                let coef = phi.coeffs[kidx][(gi, a)];
                if coef == c(0.0, 0.0) {
                    continue;
                }
                let mut flat = 0usize;
                let mut phase = 0.0;
                for j in 0..dim {
                    let p = freq(k, g, j);
                    let pint = (p - frac[j]).round() as i64;
                    if pint.unsigned_abs() as usize * 2 > shape[j] {
                        return Err(Error::ShapeMismatch(format!("samples per cell too small along axis {j}")));
                    }
                    // Sample s corresponds to fractional coordinate origin + s/S; fold the origin into the coefficient.
                    phase += TAU * p * supercell.origin[j] / reps[j] as f64;
                    flat = flat * shape[j] + pint.rem_euclid(shape[j] as i64) as usize;
                }
                data[flat] += coef * C64::from_polar(pref, phase);
            }
        }
        fft_nd(&mut data, &shape, true);
        for (idx, z) in data.iter_mut().enumerate() {
            let mut rem = idx;
            let mut ph = 0.0;
            for j in (0..dim).rev() {
                let s = rem % shape[j];
                rem /= shape[j];
                ph += TAU * frac[j] * s as f64 / shape[j] as f64;
            }
            if ph != 0.0 {
                *z *= C64::from_polar(1.0, ph);
            }
        }
        values.push(data);
    }
    let cell_measure = supercell.cell_measure(lat);
    Ok(WannierSet { supercell, cell_measure, values })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Moments {
    /// centers[a][j], components along the lattice directions.
    pub centers: Vec<Vec<f64>>,
    pub spreads: Vec<f64>,
    pub total: f64,
}

/// Minimal-image displacement from `center` (fractional) in cells, wrapped to [−N/2, N/2).
fn wrap_cells(t: f64, center: f64, n: f64) -> f64 {
    let d = t - center;
    d - n * (d / n + 0.5).floor()
}

fn lengths(ws: &WannierSet) -> Vec<f64> {
    ws.supercell.basis.iter().take(ws.supercell.dim).map(|b| dot(b, b).sqrt()).collect()
}

/// Centers and spreads with minimal-image positions about each band's center.
///
/// Positions are measured along the lattice directions; for the orthogonal
/// lattices used by the spread functional these are Cartesian components.
pub fn moments(ws: &WannierSet) -> Result<Moments> {
    let sc = &ws.supercell;
    let d = sc.dim;
    let len = lengths(ws);
    let fracs: Vec<Vec<f64>> = (0..sc.len()).map(|i| sc.fractional(i)).collect();
    let mut centers = Vec::new();
    let mut spreads = Vec::new();
    for (a, vals) in ws.values.iter().enumerate() {
        let dens: Vec<f64> = vals.iter().map(|z| z.norm_sqr() * ws.cell_measure).collect();
        let peak = (0..dens.len()).max_by(|&x, &y| dens[x].total_cmp(&dens[y])).unwrap_or(0);
        let mut cen = fracs[peak].clone();
        let mut converged = false;
        for _ in 0..5 {
            let mut shift = vec![0.0; d];
            for (i, w) in dens.iter().enumerate() {
                for j in 0..d {
                    shift[j] += w * wrap_cells(fracs[i][j], cen[j], sc.repetitions[j] as f64);
                }
            }
            for j in 0..d {
                cen[j] += shift[j];
            }
            if shift.iter().all(|s| s.abs() < 1e-12 * sc.repetitions.iter().max().copied().unwrap_or(1) as f64) {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::CenterDrift { band: a });
        }
        let mut var = 0.0;
        for j in 0..d {
            let (mut m1, mut m2) = (0.0, 0.0);
            for (i, w) in dens.iter().enumerate() {
                let x = wrap_cells(fracs[i][j], cen[j], sc.repetitions[j] as f64) * len[j];
                m1 += w * x;
                m2 += w * x * x;
            }
            var += m2 - m1 * m1;
        }
        centers.push((0..d).map(|j| cen[j] * len[j]).collect());
        spreads.push(var);
    }
    let total = spreads.iter().sum();
    Ok(Moments { centers, spreads, total })
}

/// Centers and spreads with the periodic position s_j(x) = (L_j/2π) sin(2π x_j/L_j).
///
/// These are the exact real-space partners of the central-difference k-space
/// functional, so they agree with it to rounding.
pub fn periodic_moments(ws: &WannierSet) -> Moments {
    let sc = &ws.supercell;
    let d = sc.dim;
    let len = lengths(ws);
    let mut centers = Vec::new();
    let mut spreads = Vec::new();
    for vals in &ws.values {
        let mut m1 = vec![0.0; d];
        let mut m2 = vec![0.0; d];
        for (i, z) in vals.iter().enumerate() {
            let w = z.norm_sqr() * ws.cell_measure;
            let t = sc.fractional(i);
            for j in 0..d {
                let n = sc.repetitions[j] as f64;
                let s = (TAU * t[j] / n).sin() * n * len[j] / TAU;
                m1[j] += w * s;
                m2[j] += w * s * s;
            }
        }
        spreads.push((0..d).map(|j| m2[j] - m1[j] * m1[j]).sum());
        centers.push(m1);
    }
    let total = spreads.iter().sum();
    Moments { centers, spreads, total }
}

/// Least-squares fit of log(shell-max amplitude) against distance on [r_min, r_max].
///
/// Shells have width `shell`; each contributes its largest amplitude at the
/// distance where that maximum occurs. Shells below `floor` (relative to the
/// peak) are excluded as round-off.
pub fn fit_exponential_decay(r: &[f64], amp: &[f64], r_min: f64, r_max: f64, shell: f64, floor: f64) -> DecayFit {
    let peak = amp.iter().cloned().fold(0.0, f64::max);
    let nshell = ((r_max - r_min) / shell).ceil().max(1.0) as usize;
    let mut best: Vec<Option<(f64, f64)>> = vec![None; nshell];
    for (&ri, &ai) in r.iter().zip(amp) {
        if ri < r_min || ri > r_max {
            continue;
        }
        let s = (((ri - r_min) / shell) as usize).min(nshell - 1);
        if best[s].map_or(true, |(_, b)| ai > b) {
            best[s] = Some((ri, ai));
        }
    }
    let pts: Vec<(f64, f64)> =
        best.into_iter().flatten().filter(|&(_, a)| a > floor * peak && a > 0.0).map(|(x, a)| (x, a.ln())).collect();
    let n = pts.len() as f64;
    let hi = pts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let lo = pts.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    if pts.len() < 3 {
        return DecayFit { beta: f64::NAN, r_squared: f64::NAN, fit_range: (lo, hi), points: pts.len() };
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    DecayFit { beta: -slope, r_squared: r2, fit_range: (lo, hi), points: pts.len() }
}

/// Per-band exponential decay fit over [2·cell diameter, 0.4·supercell radius].
///
/// The supercell radius is half its longest diagonal. Fails with
/// `InsufficientDecay` when the outermost cell layer still carries more than
/// 1e-8 of the peak amplitude.
pub fn decay_fit(ws: &WannierSet, lat: &BravaisLattice) -> Result<Vec<DecayFit>> {
    let mut fits = Vec::new();
    for (band, (fit, ratio)) in decay_profile(ws, lat)?.into_iter().enumerate() {
        if !(ratio <= 1e-8) {
            return Err(Error::InsufficientDecay { band, ratio });
        }
        fits.push(fit);
    }
    Ok(fits)
}

/// Per-band fit together with the boundary-to-peak amplitude ratio, without the boundary check.
pub fn decay_profile(ws: &WannierSet, lat: &BravaisLattice) -> Result<Vec<(DecayFit, f64)>> {
    let sc = &ws.supercell;
    let d = sc.dim;
    let mom = moments(ws)?;
    let len = lengths(ws);
    let mut diag = [0.0; 3];
    for j in 0..d {
        diag = axpy(sc.repetitions[j] as f64, &sc.basis[j], &diag);
    }
    let radius = 0.5 * dot(&diag, &diag).sqrt();
    let r_min = 2.0 * lat.cell_diameter();
    let r_max = 0.4 * radius;
    let shell = 0.5 * len.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut fits = Vec::new();
    for (a, vals) in ws.values.iter().enumerate() {
        let cen: Vec<f64> = (0..d).map(|j| mom.centers[a][j] / len[j]).collect();
        let mut r = Vec::with_capacity(vals.len());
        let mut amp = Vec::with_capacity(vals.len());
        let mut boundary: f64 = 0.0;
        for (i, z) in vals.iter().enumerate() {
            let t = sc.fractional(i);
            let mut disp = [0.0; 3];
            let mut on_boundary = false;
            for j in 0..d {
                let n = sc.repetitions[j] as f64;
                let dj = wrap_cells(t[j], cen[j], n);
                if dj.abs() >= 0.5 * n - 1.0 {
                    on_boundary = true;
                }
                disp = axpy(dj, &sc.basis[j], &disp);
            }
            let aval = z.norm();
            if on_boundary {
                boundary = boundary.max(aval);
            }
            r.push(dot(&disp, &disp).sqrt());
            amp.push(aval);
        }
        let peak = amp.iter().cloned().fold(0.0, f64::max);
        fits.push((fit_exponential_decay(&r, &amp, r_min, r_max, shell, 1e-12), boundary / peak));
    }
    Ok(fits)
}

/// Circular shift of every band by `cells[j]` lattice vectors (periodic supercell).
pub fn shift_by_cells(ws: &WannierSet, cells: &[i64]) -> WannierSet {
    let sc = &ws.supercell;
    let shape = sc.shape();
    let mut values = Vec::with_capacity(ws.values.len());
    for vals in &ws.values {
        let mut out = vec![c(0.0, 0.0); vals.len()];
        for (idx, z) in vals.iter().enumerate() {
            let mut rem = idx;
            let mut coords = vec![0usize; sc.dim];
            for j in (0..sc.dim).rev() {
                coords[j] = rem % shape[j];
                rem /= shape[j];
            }
            let mut flat = 0usize;
            for j in 0..sc.dim {
                let s = (coords[j] as i64 + cells[j] * sc.samples[j] as i64).rem_euclid(shape[j] as i64) as usize;
                flat = flat * shape[j] + s;
            }
            out[flat] = *z;
        }
        values.push(out);
    }
    WannierSet { supercell: sc.clone(), cell_measure: ws.cell_measure, values }
}
