//! The Marzari–Vanderbilt spread in frame form and in gauge form.
//!
//! Integrals over the Brillouin torus are normalized means (1/N)Σ_k, so the
//! spread is a physical variance and the centers are physical positions.
//! Center components refer to the unit directions γ*_j/|γ*_j| of the grid.
//! With this convention the diagonal center matrices satisfy
//! G^j_aa = −i·center_{a,j}, i.e. center = i·G^j_aa.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fiber::PlaneWaveBasis;
use crate::frames::{BerryConnection, BlochFrame};
use crate::lattice::KGrid;
use crate::linalg::{c, norm2, random_unitary, re_inner, skew, unitarity_error, CMat, C64, I};

/// Per-k unitary gauge, periodic on the torus.
#[derive(Debug, Clone, PartialEq)]
pub struct GaugeField {
    pub u: Vec<CMat>,
}

impl GaugeField {
    pub fn identity(nk: usize, m: usize) -> Self {
        GaugeField { u: vec![CMat::identity(m, m); nk] }
    }

    pub fn random(nk: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        GaugeField { u: (0..nk).map(|_| random_unitary(m, &mut rng)).collect() }
    }

    pub fn nbands(&self) -> usize {
        self.u.first().map_or(0, |u| u.ncols())
    }

    pub fn unitarity_error(&self) -> f64 {
        self.u.iter().map(unitarity_error).fold(0.0, f64::max)
    }

    /// Pointwise product U(k)·V(k).
    pub fn compose(&self, other: &GaugeField) -> GaugeField {
        GaugeField { u: self.u.iter().zip(&other.u).map(|(a, b)| a * b).collect() }
    }

    /// Right multiplication by diag(e^{ik·γ_a}); moves the center of band a by −γ_a.
    pub fn recentered(&self, grid: &KGrid, shifts: &[[f64; 3]]) -> GaugeField {
        let u = self
            .u
            .iter()
            .zip(&grid.points)
            .map(|(u, k)| {
                let mut out = u.clone();
                for (a, g) in shifts.iter().enumerate() {
                    let ph = C64::from_polar(1.0, k[0] * g[0] + k[1] * g[1] + k[2] * g[2]);
                    let col = out.column(a) * ph;
                    out.set_column(a, &col);
                }
                out
            })
            .collect();
        GaugeField { u }
    }
}

/// Diagonal, purely imaginary center matrices, one per direction.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterMatrices {
    pub g: Vec<CMat>,
}

impl CenterMatrices {
    /// center_{a,j} = i·G^j_aa.
    pub fn centers(&self) -> Vec<Vec<f64>> {
        let m = self.g.first().map_or(0, |g| g.nrows());
        (0..m).map(|a| self.g.iter().map(|g| -g[(a, a)].im).collect()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FunctionalReport {
    pub total: f64,
    pub quadratic: f64,
    pub cross: f64,
    pub center: f64,
    pub per_band: Vec<f64>,
    /// Wannier centers, m rows of d components.
    pub centers: Vec<Vec<f64>>,
    /// total − (quadratic + cross + center); zero for the frame route.
    pub discrepancy: f64,
}

fn check_orthonormal(frame: &BlochFrame) -> Result<()> {
    for (k, x) in frame.coeffs.iter().enumerate() {
        let dev = (x.adjoint() * x - CMat::identity(x.ncols(), x.ncols())).norm();
        if !(dev <= 1e-8) {
            return Err(Error::NonOrthonormalInput { k_index: k, deviation: dev });
        }
    }
    Ok(())
}

fn check_shapes(grid: &KGrid, frame: &BlochFrame) -> Result<()> {
    if !grid.orthogonal {
        return Err(Error::NonOrthogonalLattice);
    }
    if frame.coeffs.len() != grid.len() {
        return Err(Error::ShapeMismatch(format!("{} frames for {} k-points", frame.coeffs.len(), grid.len())));
    }
    Ok(())
}

/// Frame form: Σ_{a,j} [ mean‖D_jφ_a‖² − (mean Re⟨φ_a, iD_jφ_a⟩)² ] with τ-wrapped central differences.
pub fn eval_frame_functional(phi: &BlochFrame, grid: &KGrid, basis: &PlaneWaveBasis) -> Result<FunctionalReport> {
    check_shapes(grid, phi)?;
    check_orthonormal(phi)?;
    let m = phi.nbands();
    let d = grid.dim;
    // Per k: (|Dφ_a|² and Re⟨φ_a, iDφ_a⟩) for each (a, j).
    let per_k: Vec<(Vec<f64>, Vec<f64>)> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let mut sq = vec![0.0; m * d];
            let mut ce = vec![0.0; m * d];
            for j in 0..d {
                let plus = phi.neighbor(grid, basis, k, j, 1);
                let minus = phi.neighbor(grid, basis, k, j, -1);
                let dphi = (plus - minus) * c(0.5 / grid.spacing[j], 0.0);
                for a in 0..m {
                    let col = dphi.column(a);
                    sq[a * d + j] = col.norm_squared();
                    let ov = phi.coeffs[k].column(a).dotc(&col);
                    ce[a * d + j] = (I * ov).re;
                }
            }
            (sq, ce)
        })
        .collect();
    let inv_n = 1.0 / grid.len() as f64;
    let mut sq = vec![0.0; m * d];
    let mut ce = vec![0.0; m * d];
    for (s, cc) in &per_k {
        for i in 0..m * d {
            sq[i] += s[i];
            ce[i] += cc[i];
        }
    }
    let mut per_band = vec![0.0; m];
    let mut quadratic = 0.0;
    let mut center = 0.0;
    let mut centers = vec![vec![0.0; d]; m];
    for a in 0..m {
        for j in 0..d {
            let q = sq[a * d + j] * inv_n;
            let cj = ce[a * d + j] * inv_n;
            centers[a][j] = cj;
            per_band[a] += q - cj * cj;
            quadratic += q;
            center -= cj * cj;
        }
    }
    let total = per_band.iter().sum();
    Ok(FunctionalReport { total, quadratic, cross: 0.0, center, per_band, centers, discrepancy: 0.0 })
}

/// Overlap matrices between a frame and its τ-wrapped neighbors, per k and direction.
///
/// With χ̃± the neighbors at k ± h_j: s1 = χ*χ̃+, s1m = χ*χ̃−, s2 = χ̃−*χ̃+, gp = χ̃+*χ̃+, gm = χ̃−*χ̃−.
/// Everything the gauge-form objective and its gradient need is built from these.
#[derive(Debug, Clone)]
pub struct Overlaps {
    pub dim: usize,
    pub m: usize,
    pub h: Vec<f64>,
    pub plus: Vec<Vec<usize>>,
    pub minus: Vec<Vec<usize>>,
    pub s1: Vec<Vec<CMat>>,
    pub s1m: Vec<Vec<CMat>>,
    pub s2: Vec<Vec<CMat>>,
    pub gp: Vec<Vec<CMat>>,
    pub gm: Vec<Vec<CMat>>,
}

struct KOverlaps {
    s1: Vec<CMat>,
    s1m: Vec<CMat>,
    s2: Vec<CMat>,
    gp: Vec<CMat>,
    gm: Vec<CMat>,
}

/// Value of the gauge-form objective together with its per-band pieces.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadValue {
    pub total: f64,
    pub per_band: Vec<f64>,
    /// centers[a][j]
    pub centers: Vec<Vec<f64>>,
}

impl Overlaps {
    pub fn new(frame: &BlochFrame, grid: &KGrid, basis: &PlaneWaveBasis) -> Result<Self> {
        check_shapes(grid, frame)?;
        check_orthonormal(frame)?;
        let d = grid.dim;
        let per_k: Vec<KOverlaps> = (0..grid.len())
            .into_par_iter()
            .map(|k| {
                let chi = &frame.coeffs[k];
                let mut o = KOverlaps { s1: vec![], s1m: vec![], s2: vec![], gp: vec![], gm: vec![] };
                for j in 0..d {
                    let p = frame.neighbor(grid, basis, k, j, 1);
                    let q = frame.neighbor(grid, basis, k, j, -1);
                    o.s1.push(chi.adjoint() * &p);
                    o.s1m.push(chi.adjoint() * &q);
                    o.s2.push(q.adjoint() * &p);
                    o.gp.push(p.adjoint() * &p);
                    o.gm.push(q.adjoint() * &q);
                }
                o
            })
            .collect();
        let plus = (0..grid.len()).map(|k| (0..d).map(|j| grid.neighbor(k, j, 1).0).collect()).collect();
        let minus = (0..grid.len()).map(|k| (0..d).map(|j| grid.neighbor(k, j, -1).0).collect()).collect();
        let mut out = Overlaps {
            dim: d,
            m: frame.nbands(),
            h: grid.spacing.clone(),
            plus,
            minus,
            s1: vec![],
            s1m: vec![],
            s2: vec![],
            gp: vec![],
            gm: vec![],
        };
        for o in per_k {
            out.s1.push(o.s1);
            out.s1m.push(o.s1m);
            out.s2.push(o.s2);
            out.gp.push(o.gp);
            out.gm.push(o.gm);
        }
        Ok(out)
    }

    pub fn nk(&self) -> usize {
        self.s1.len()
    }

    /// Magnitude of the terms that cancel inside the objective; sets its rounding level.
    pub fn rounding_scale(&self) -> f64 {
        self.m as f64 * self.h.iter().map(|h| 1.0 / (h * h)).sum::<f64>()
    }

    /// Berry connection from the overlaps: skew((s1 − s1m)/2h).
    pub fn connection(&self) -> BerryConnection {
        let a: Vec<Vec<CMat>> = (0..self.nk())
            .map(|k| (0..self.dim).map(|j| skew(&((&self.s1[k][j] - &self.s1m[k][j]) * c(0.5 / self.h[j], 0.0)))).collect())
            .collect();
        let drift = (0..self.dim)
            .map(|j| {
                (0..self.nk())
                    .map(|k| {
                        let raw = (&self.s1[k][j] - &self.s1m[k][j]) * c(0.5 / self.h[j], 0.0);
                        (&raw + raw.adjoint()).norm()
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        BerryConnection { a, hermitian_drift: drift }
    }

    /// Per-k contributions: (‖D_jφ_a‖², Re⟨φ_a, iD_jφ_a⟩) indexed [a*d + j].
    fn local_terms(&self, u: &GaugeField, k: usize) -> (Vec<f64>, Vec<f64>) {
        let (m, d) = (self.m, self.dim);
        let mut sq = vec![0.0; m * d];
        let mut ce = vec![0.0; m * d];
        let uk = &u.u[k];
        for j in 0..d {
            let up = &u.u[self.plus[k][j]];
            let um = &u.u[self.minus[k][j]];
            let inv4h2 = 0.25 / (self.h[j] * self.h[j]);
            let a_pp = up.adjoint() * &self.gp[k][j] * up;
            let a_mm = um.adjoint() * &self.gm[k][j] * um;
            let a_mp = um.adjoint() * &self.s2[k][j] * up;
            let c_p = uk.adjoint() * &self.s1[k][j] * up;
            let c_m = uk.adjoint() * &self.s1m[k][j] * um;
            let ih = c(0.0, 0.5 / self.h[j]);
            for a in 0..m {
                sq[a * d + j] = inv4h2 * (a_pp[(a, a)].re + a_mm[(a, a)].re - 2.0 * a_mp[(a, a)].re);
                ce[a * d + j] = (ih * (c_p[(a, a)] - c_m[(a, a)])).re;
            }
        }
        (sq, ce)
    }

    fn sums(&self, u: &GaugeField) -> (Vec<f64>, Vec<f64>) {
        let parts: Vec<(Vec<f64>, Vec<f64>)> = (0..self.nk()).into_par_iter().map(|k| self.local_terms(u, k)).collect();
        let n = self.m * self.dim;
        let inv_n = 1.0 / self.nk() as f64;
        let mut sq = vec![0.0; n];
        let mut ce = vec![0.0; n];
        for (s, cc) in &parts {
            for i in 0..n {
                sq[i] += s[i];
                ce[i] += cc[i];
            }
        }
        (sq.iter().map(|x| x * inv_n).collect(), ce.iter().map(|x| x * inv_n).collect())
    }

    /// Gauge-form objective F(U) = frame-form objective of φ = χU.
    pub fn value(&self, u: &GaugeField) -> SpreadValue {
        let (sq, ce) = self.sums(u);
        let (m, d) = (self.m, self.dim);
        let mut per_band = vec![0.0; m];
        let mut centers = vec![vec![0.0; d]; m];
        for a in 0..m {
            for j in 0..d {
                centers[a][j] = ce[a * d + j];
                per_band[a] += sq[a * d + j] - ce[a * d + j] * ce[a * d + j];
            }
        }
        SpreadValue { total: per_band.iter().sum(), per_band, centers }
    }

    /// Euclidean gradient Z with dF = (1/N) Σ_k Re tr(Z(k)* δU(k)).
    pub fn euclidean_gradient(&self, u: &GaugeField, centers: &[Vec<f64>]) -> Vec<CMat> {
        let (m, d) = (self.m, self.dim);
        (0..self.nk())
            .into_par_iter()
            .map(|p| {
                let mut z = CMat::zeros(m, m);
                for j in 0..d {
                    let h = self.h[j];
                    let kp = self.plus[p][j];
                    let km = self.minus[p][j];
                    let dir = 1.0 / (2.0 * h * h);
                    // Dirichlet part, from the stencils centered at p − h and p + h.
                    z -= self.s2[km][j].adjoint() * &u.u[self.minus[km][j]] * c(dir, 0.0);
                    z -= &self.s2[kp][j] * &u.u[self.plus[kp][j]] * c(dir, 0.0);
                    // Center part: −2 c_a ∂c_a, collected as a right factor diag(c_{·,j}).
                    let cdiag = CMat::from_fn(m, m, |r, s| if r == s { c(centers[r][j], 0.0) } else { c(0.0, 0.0) });
                    let ih = c(0.0, 0.5 / h);
                    let own = (&self.s1[p][j] * &u.u[kp] - &self.s1m[p][j] * &u.u[km]) * ih;
                    let nbr = (self.s1[km][j].adjoint() * &u.u[km] - self.s1m[kp][j].adjoint() * &u.u[kp]) * ih.conj();
                    z -= (own + nbr) * cdiag * c(2.0, 0.0);
                }
                z
            })
            .collect()
    }

    /// Riemannian gradient g = skew(U*Z) for variations U e^{εψ}.
    pub fn riemannian_gradient(&self, u: &GaugeField) -> (SpreadValue, Vec<CMat>) {
        let v = self.value(u);
        let z = self.euclidean_gradient(u, &v.centers);
        let g = u.u.iter().zip(&z).map(|(uk, zk)| skew(&(uk.adjoint() * zk))).collect();
        (v, g)
    }
}

/// Riemannian metric ⟨g, ψ⟩ = (1/N) Σ_k Re tr(g*ψ).
pub fn field_inner(a: &[CMat], b: &[CMat]) -> f64 {
    a.iter().zip(b).map(|(x, y)| re_inner(x, y)).sum::<f64>() / a.len() as f64
}

pub fn field_norm(a: &[CMat]) -> f64 {
    (a.iter().map(norm2).sum::<f64>() / a.len() as f64).sqrt()
}

/// U·exp(t ψ) pointwise.
pub fn retract(u: &GaugeField, psi: &[CMat], t: f64) -> GaugeField {
    GaugeField {
        u: u.u.par_iter().zip(psi).map(|(uk, p)| uk * crate::linalg::expm_skew(&(p * c(t, 0.0)))).collect(),
    }
}

/// Riemannian gradient of the discrete objective at U.
pub fn riemannian_gradient(u: &GaugeField, frame: &BlochFrame, grid: &KGrid, basis: &PlaneWaveBasis) -> Result<Vec<CMat>> {
    Ok(Overlaps::new(frame, grid, basis)?.riemannian_gradient(u).1)
}

/// Central difference (U(k+h) − U(k−h))/2h, periodic.
fn gauge_derivative(u: &GaugeField, grid: &KGrid, k: usize, j: usize) -> CMat {
    let p = grid.neighbor(k, j, 1).0;
    let q = grid.neighbor(k, j, -1).0;
    (&u.u[p] - &u.u[q]) * c(0.5 / grid.spacing[j], 0.0)
}

/// G^j = diag(mean U*(D_jU + A_jU)), imaginary part kept.
pub fn center_matrices(u: &GaugeField, a: &BerryConnection, grid: &KGrid) -> CenterMatrices {
    let m = u.nbands();
    let inv_n = 1.0 / grid.len() as f64;
    let g = (0..grid.dim)
        .map(|j| {
            let mut acc = vec![0.0; m];
            for k in 0..grid.len() {
                let du = gauge_derivative(u, grid, k, j);
                let x = u.u[k].adjoint() * (du + a.at(k, j) * &u.u[k]);
                for (b, slot) in acc.iter_mut().enumerate() {
                    *slot += x[(b, b)].im;
                }
            }
            CMat::from_fn(m, m, |r, s| if r == s { c(0.0, acc[r] * inv_n) } else { c(0.0, 0.0) })
        })
        .collect();
    CenterMatrices { g }
}

/// Gauge form: total from the frame form on φ = χU, summands from the
/// quadratic / cross / center decomposition with the discrete connection.
pub fn eval_gauge_functional(
    u: &GaugeField,
    chi: &BlochFrame,
    grid: &KGrid,
    basis: &PlaneWaveBasis,
) -> Result<FunctionalReport> {
    if u.u.len() != chi.coeffs.len() || u.nbands() != chi.nbands() {
        return Err(Error::ShapeMismatch("gauge and frame disagree".into()));
    }
    let frame_report = eval_frame_functional(&chi.rotated(&u.u), grid, basis)?;
    let ov = Overlaps::new(chi, grid, basis)?;
    let a = ov.connection();
    let inv_n = 1.0 / grid.len() as f64;
    let mut quadratic = 0.0;
    let mut cross = 0.0;
    for k in 0..grid.len() {
        for j in 0..grid.dim {
            let h = grid.spacing[j];
            let dchi2 = 0.25 / (h * h)
                * (ov.gp[k][j].trace().re + ov.gm[k][j].trace().re - 2.0 * ov.s2[k][j].trace().re);
            let du = gauge_derivative(u, grid, k, j);
            quadratic += inv_n * (norm2(&du) + dchi2);
            let x = &u.u[k] * du.adjoint() - &du * u.u[k].adjoint();
            cross += inv_n * (x * a.at(k, j)).trace().re;
        }
    }
    let g = center_matrices(u, &a, grid);
    let center: f64 = g.g.iter().map(|gj| gj.diagonal().iter().map(|z| -z.im * z.im).sum::<f64>()).sum();
    let total = frame_report.total;
    Ok(FunctionalReport {
        total,
        quadratic,
        cross,
        center,
        per_band: frame_report.per_band,
        centers: frame_report.centers,
        discrepancy: total - (quadratic + cross + center),
    })
}
