//! Riemannian gradient descent over gauge fields, recentering, the
//! Euler–Lagrange residual, and the abelian Poisson oracle.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::frames::BerryConnection;
use crate::functional::{field_inner, field_norm, retract, CenterMatrices, GaugeField, Overlaps};
use crate::lattice::KGrid;
use crate::linalg::{c, cis, norm2, random_skew, CMat, C64};

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub max_iter: usize,
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub initial_step: f64,
    pub step_shrink: f64,
    pub recenter_every: usize,
    pub seed: u64,
    /// Iterations between directional finite-difference gradient checks (0 disables).
    pub check_every: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iter: 20_000,
            grad_tol: 1e-9,
            armijo_c: 1e-4,
            initial_step: 1e-3,
            step_shrink: 0.5,
            recenter_every: 50,
            seed: 0,
            check_every: 50,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iter > 0
            && self.grad_tol > 0.0
            && self.armijo_c > 0.0
            && self.armijo_c < 1.0
            && self.initial_step > 0.0
            && self.step_shrink > 0.0
            && self.step_shrink < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::config(None, format!("invalid optimizer settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone)]
pub enum Start {
    Identity,
    Random,
    /// exp(εψ(k)) with seeded random skew ψ(k) of unit operator scale; moves off symmetric saddles.
    Perturbed(f64),
    Given(GaugeField),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub iter: usize,
    #[serde(rename = "F")]
    pub f: f64,
    #[serde(rename = "gradNorm")]
    pub grad_norm: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecenterEvent {
    pub iter: usize,
    /// Lattice-coordinate shift applied to each band.
    pub shifts: Vec<Vec<i64>>,
    pub f_before: f64,
    pub f_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RealignEvent {
    pub iter: usize,
    pub f_before: f64,
    pub f_after: f64,
}

#[derive(Debug, Clone)]
pub struct DescentTrace {
    pub rows: Vec<TraceRow>,
    pub recenterings: Vec<RecenterEvent>,
    pub realignments: Vec<RealignEvent>,
    pub gauge: GaugeField,
    pub converged: bool,
    pub objective: f64,
    pub grad_norm: f64,
    pub centers: Vec<Vec<f64>>,
    pub el_residual: f64,
}

/// Lattice repeat lengths along the grid directions (orthogonal lattices).
pub fn lattice_repeat(grid: &KGrid) -> Vec<f64> {
    (0..grid.dim).map(|j| std::f64::consts::TAU / (grid.spacing[j] * grid.sizes[j] as f64)).collect()
}

/// Integer shift n bringing c − n·a into the half-open cell (−a/2, a/2].
///
/// Centers within 1e-6·a of the lower face are treated as lying on the face and
/// moved to the upper one, so runs that converge to either face agree.
pub fn canonical_shift(center: f64, a: f64) -> i64 {
    let tol = 1e-6;
    ((center / a - 0.5 - tol).ceil()) as i64
}

pub fn centers_canonical(centers: &[Vec<f64>], grid: &KGrid) -> bool {
    let a = lattice_repeat(grid);
    centers.iter().all(|cen| cen.iter().zip(&a).all(|(&x, &aj)| canonical_shift(x, aj) == 0))
}

/// Recentering map U ↦ U·diag(e^{ik·γ_a}) with γ_a chosen to bring every center into the cell.
pub fn recenter(u: &GaugeField, centers: &[Vec<f64>], grid: &KGrid) -> (GaugeField, Vec<Vec<i64>>) {
    let a = lattice_repeat(grid);
    let shifts: Vec<Vec<i64>> =
        centers.iter().map(|cen| cen.iter().zip(&a).map(|(&x, &aj)| canonical_shift(x, aj)).collect()).collect();
    let vecs: Vec<[f64; 3]> = shifts
        .iter()
        .map(|n| {
            let mut g = [0.0; 3];
            for j in 0..grid.dim {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += n[j] as f64 * a[j] * grid.directions[j][i];
                }
            }
            g
        })
        .collect();
    (u.recentered(grid, &vecs), shifts)
}

/// Re-derives every grid point of nonzero index parity from its lower-parity neighbors by
/// transport through the frame overlaps, U(k) = polar(Σ± S±(k) U(k ± h_j)).
///
/// The central-difference objective couples points of equal parity mostly among themselves,
/// so descent from a rough start can settle with the parity classes twisted against each other.
pub fn align_sublattices(ov: &Overlaps, grid: &KGrid, u: &GaugeField) -> GaugeField {
    let mut out = u.clone();
    let d = grid.dim;
    let mut classes: Vec<usize> = (1..1usize << d).collect();
    classes.sort_by_key(|p| (p.count_ones(), *p));
    for parity in classes {
        let j = parity.trailing_zeros() as usize;
        for k in 0..grid.len() {
            let idx = grid.multi_index(k);
            let pk = (0..d).fold(0usize, |acc, i| acc | ((idx[i] % 2) << i));
            if pk != parity {
                continue;
            }
            let m = &ov.s1[k][j] * &out.u[ov.plus[k][j]] + &ov.s1m[k][j] * &out.u[ov.minus[k][j]];
            let (q, smin) = crate::linalg::lowdin(&m);
            if smin > 1e-3 {
                out.u[k] = q;
            }
        }
    }
    out
}

/// Directional finite-difference check of the Riemannian gradient; returns the relative error.
pub fn gradient_check(ov: &Overlaps, u: &GaugeField, g: &[CMat], psi: &[CMat], eps: f64) -> f64 {
    let fp = ov.value(&retract(u, psi, eps)).total;
    let fm = ov.value(&retract(u, psi, -eps)).total;
    let fd = (fp - fm) / (2.0 * eps);
    let an = field_inner(g, psi);
    (fd - an).abs() / (1.0 + an.abs())
}

/// Gradient descent with Armijo backtracking, Barzilai–Borwein trial steps, and recentering.
pub fn minimize(ov: &Overlaps, grid: &KGrid, cfg: &OptimizerConfig, start: Start) -> Result<DescentTrace> {
    cfg.validate()?;
    let m = ov.m;
    let mut u = match start {
        Start::Identity => GaugeField::identity(ov.nk(), m),
        Start::Random => GaugeField::random(ov.nk(), m, cfg.seed),
        Start::Perturbed(eps) => {
            let mut prng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let psi: Vec<CMat> = (0..ov.nk()).map(|_| random_skew(m, &mut prng)).collect();
            retract(&GaugeField::identity(ov.nk(), m), &psi, eps)
        }
        Start::Given(g) => g,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
    let (mut val, mut g) = ov.riemannian_gradient(&u);
    let mut gn = field_norm(&g);
    let mut rows = vec![TraceRow { iter: 0, f: val.total, grad_norm: gn, step: 0.0 }];
    let mut recenterings = Vec::new();
    let mut realignments = Vec::new();
    let mut step = cfg.initial_step;
    let mut converged = false;
    let mut iter = 0;
    while iter < cfg.max_iter {
        let due = cfg.recenter_every > 0 && iter > 0 && iter % cfg.recenter_every == 0;
        if (gn <= cfg.grad_tol || due) && !centers_canonical(&val.centers, grid) {
            let (nu, shifts) = recenter(&u, &val.centers, grid);
            let before = val.total;
            u = nu;
            (val, g) = ov.riemannian_gradient(&u);
            gn = field_norm(&g);
            recenterings.push(RecenterEvent { iter, shifts, f_before: before, f_after: val.total });
            step = cfg.initial_step;
            continue;
        }
        if gn <= cfg.grad_tol {
            let aligned = align_sublattices(ov, grid, &u);
            let av = ov.value(&aligned);
            if av.total < val.total - 64.0 * f64::EPSILON * (val.total.abs() + ov.rounding_scale()) {
                realignments.push(RealignEvent { iter, f_before: val.total, f_after: av.total });
                u = aligned;
                (val, g) = ov.riemannian_gradient(&u);
                gn = field_norm(&g);
                step = cfg.initial_step;
                continue;
            }
            converged = true;
            break;
        }
        iter += 1;
        if cfg.check_every > 0 && iter % cfg.check_every == 0 {
            let psi: Vec<CMat> = (0..ov.nk()).map(|_| random_skew(m, &mut rng)).collect();
            let scale = 1.0 / field_norm(&psi).max(f64::MIN_POSITIVE);
            let psi: Vec<CMat> = psi.iter().map(|p| p * c(scale, 0.0)).collect();
            let rel = gradient_check(ov, &u, &g, &psi, 1e-5);
            if !(rel <= 1e-5) {
                return Err(Error::GradientCheckFailed { iter, rel_err: rel });
            }
        }
        // Armijo backtracking along −g.
        let f0 = val.total;
        let slope = gn * gn;
        let mut alpha = step;
        // Once the predicted decrease drops below the rounding level of F, Armijo
        // cannot discriminate; steps are then accepted when F does not rise beyond it.
        let noise = 64.0 * f64::EPSILON * (f0.abs() + ov.rounding_scale());
        let (trial, tval) = loop {
            let cand = retract(&u, &g, -alpha);
            let cv = ov.value(&cand);
            let predicted = cfg.armijo_c * alpha * slope;
            if cv.total <= f0 - predicted || (predicted < noise && cv.total <= f0 + noise) {
                break (cand, cv);
            }
            alpha *= cfg.step_shrink;
            if alpha < 1e-14 {
                return Err(Error::LineSearchStall { iter, step: alpha });
            }
        };
        assert!(tval.total <= f0 + noise, "accepted step increased the objective");
        let old_g = g;
        u = trial;
        let z = ov.euclidean_gradient(&u, &tval.centers);
        g = u.u.iter().zip(&z).map(|(uk, zk)| crate::linalg::skew(&(uk.adjoint() * zk))).collect();
        val = tval;
        gn = field_norm(&g);
        rows.push(TraceRow { iter, f: val.total, grad_norm: gn, step: alpha });
        // BB1 step from s = −α g_old, y = g − g_old.
        let denom = field_inner(&old_g, &old_g) - field_inner(&old_g, &g);
        step = if denom > 0.0 {
            (alpha * field_inner(&old_g, &old_g) / denom).clamp(1e-10, 1e4 * cfg.initial_step.max(1.0))
        } else {
            (2.0 * alpha).min(1e4 * cfg.initial_step.max(1.0))
        };
    }
    let a = ov.connection();
    let gm = crate::functional::center_matrices(&u, &a, grid);
    let el = el_residual(&u, &a, &gm, grid);
    Ok(DescentTrace {
        rows,
        recenterings,
        realignments,
        objective: val.total,
        grad_norm: gn,
        centers: val.centers,
        gauge: u,
        converged,
        el_residual: el,
    })
}

/// Discrete Euler–Lagrange residual sqrt(mean‖R(k)‖²).
pub fn el_residual(u: &GaugeField, a: &BerryConnection, g: &CenterMatrices, grid: &KGrid) -> f64 {
    el_residual_terms(u, a, g, grid, true)
}

/// As [`el_residual`], optionally without the center-matrix bracket.
pub fn el_residual_terms(u: &GaugeField, a: &BerryConnection, g: &CenterMatrices, grid: &KGrid, with_centers: bool) -> f64 {
    let nk = grid.len();
    let mut acc = 0.0;
    for k in 0..nk {
        let uk = &u.u[k];
        let ui = uk.adjoint();
        let mut r = CMat::zeros(uk.nrows(), uk.ncols());
        for j in 0..grid.dim {
            let h = grid.spacing[j];
            let (p, _) = grid.neighbor(k, j, 1);
            let (q, _) = grid.neighbor(k, j, -1);
            let lap = (&u.u[p] - uk * c(2.0, 0.0) + &u.u[q]) * c(1.0 / (h * h), 0.0);
            let du = (&u.u[p] - &u.u[q]) * c(0.5 / h, 0.0);
            let aj = a.at(k, j);
            let da = (a.at(p, j) - a.at(q, j)) * c(0.5 / h, 0.0);
            r -= lap;
            r += &du * &ui * &du;
            r += &du * &ui * aj * uk - &da * uk - aj * &du;
            if with_centers {
                let cov = &du + aj * uk;
                r += -&cov * &g.g[j] + uk * &g.g[j] * &ui * &cov;
            }
        }
        acc += norm2(&r);
    }
    (acc / nk as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SectorResult {
    pub winding: Vec<i64>,
    /// Objective of the Poisson gauge times the winding factor, before polishing.
    pub poisson_objective: f64,
    pub objective: f64,
    pub grad_norm: f64,
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct OracleResult {
    /// Gauge of the selected sector (centers in the cell, smallest winding).
    pub gauge: GaugeField,
    pub objective: f64,
    pub grad_norm: f64,
    pub selected: usize,
    /// Index of the sector with the lowest polished objective.
    pub best: usize,
    pub sectors: Vec<SectorResult>,
    /// Gradient norm of the unpolished Poisson gauge in the zero-winding sector.
    pub poisson_grad_norm: f64,
}

/// Solves the compact-stencil Poisson equation Δf = i Σ_j D_j A_j on the torus spectrally.
pub fn poisson_phase(a: &BerryConnection, grid: &KGrid) -> Result<Vec<f64>> {
    let nk = grid.len();
    if a.a.first().is_some_and(|row| row.first().is_some_and(|m| m.nrows() != 1)) {
        return Err(Error::NotAbelian { m: a.a[0][0].nrows() });
    }
    let mut rhs = vec![0.0; nk];
    for (k, slot) in rhs.iter_mut().enumerate() {
        for j in 0..grid.dim {
            let (p, _) = grid.neighbor(k, j, 1);
            let (q, _) = grid.neighbor(k, j, -1);
            let d = (a.at(p, j)[(0, 0)] - a.at(q, j)[(0, 0)]) * c(0.5 / grid.spacing[j], 0.0);
            *slot += (C64::i() * d).re;
        }
    }
    let mean = rhs.iter().sum::<f64>() / nk as f64;
    if mean.abs() > 1e-8 {
        return Err(Error::NonzeroMean { mean });
    }
    let mut data: Vec<C64> = rhs.iter().map(|&x| c(x - mean, 0.0)).collect();
    fft_nd(&mut data, &grid.sizes, false);
    for (idx, z) in data.iter_mut().enumerate() {
        let n = grid.multi_index(idx);
        let mut lam = 0.0;
        for j in 0..grid.dim {
            let s = (std::f64::consts::PI * n[j] as f64 / grid.sizes[j] as f64).sin();
            lam -= 4.0 * s * s / (grid.spacing[j] * grid.spacing[j]);
        }
        *z = if idx == 0 { c(0.0, 0.0) } else { *z / lam };
    }
    fft_nd(&mut data, &grid.sizes, true);
    Ok(data.iter().map(|z| z.re / nk as f64).collect())
}

/// In-place multidimensional DFT over a row-major array (unnormalized).
pub fn fft_nd(data: &mut [C64], sizes: &[usize], inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let total = data.len();
    let mut stride = total;
    for &n in sizes {
        stride /= n;
        let fft = if inverse { planner.plan_fft_inverse(n) } else { planner.plan_fft_forward(n) };
        let mut buf = vec![c(0.0, 0.0); n];
        for block in 0..total / (n * stride) {
            for off in 0..stride {
                let base = block * n * stride + off;
                for (i, b) in buf.iter_mut().enumerate() {
                    *b = data[base + i * stride];
                }
                fft.process(&mut buf);
                for (i, b) in buf.iter().enumerate() {
                    data[base + i * stride] = *b;
                }
            }
        }
    }
}

/// Scalar-phase form of the discrete objective for m = 1.
///
/// Every term is Re(α e^{i(θ_p − θ_q)}), collected per direction for the
/// Dirichlet part and the center averages.
struct PhaseObjective {
    nk: usize,
    dirichlet: Vec<(usize, usize, C64)>,
    centers: Vec<Vec<(usize, usize, C64)>>,
    constant: f64,
}

impl PhaseObjective {
    fn new(ov: &Overlaps) -> Self {
        let nk = ov.nk();
        let inv_n = 1.0 / nk as f64;
        let mut dirichlet = Vec::new();
        let mut centers = vec![Vec::new(); ov.dim];
        let mut constant = 0.0;
        for k in 0..nk {
            for j in 0..ov.dim {
                let h = ov.h[j];
                let (p, q) = (ov.plus[k][j], ov.minus[k][j]);
                constant += inv_n * 0.25 / (h * h) * (ov.gp[k][j][(0, 0)].re + ov.gm[k][j][(0, 0)].re);
                dirichlet.push((p, q, ov.s2[k][j][(0, 0)] * (-inv_n * 0.5 / (h * h))));
                let ih = c(0.0, 0.5 / h) * inv_n;
                centers[j].push((p, k, ov.s1[k][j][(0, 0)] * ih));
                centers[j].push((q, k, -ov.s1m[k][j][(0, 0)] * ih));
            }
        }
        PhaseObjective { nk, dirichlet, centers, constant }
    }

    fn accumulate(terms: &[(usize, usize, C64)], th: &[f64], grad: &mut DVector<f64>, hess: &mut DMatrix<f64>, w: f64) -> f64 {
        let mut val = 0.0;
        for &(p, q, al) in terms {
            let z = al * cis(th[p] - th[q]);
            val += z.re;
            grad[p] -= w * z.im;
            grad[q] += w * z.im;
            hess[(p, p)] -= w * z.re;
            hess[(q, q)] -= w * z.re;
            hess[(p, q)] += w * z.re;
            hess[(q, p)] += w * z.re;
        }
        val
    }

    fn value(&self, th: &[f64]) -> f64 {
        let mut f = self.constant;
        for &(p, q, al) in &self.dirichlet {
            f += (al * cis(th[p] - th[q])).re;
        }
        for terms in &self.centers {
            let cj: f64 = terms.iter().map(|&(p, q, al)| (al * cis(th[p] - th[q])).re).sum();
            f -= cj * cj;
        }
        f
    }

    fn derivatives(&self, th: &[f64]) -> (f64, DVector<f64>, DMatrix<f64>) {
        let n = self.nk;
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        let mut f = self.constant + Self::accumulate(&self.dirichlet, th, &mut grad, &mut hess, 1.0);
        for terms in &self.centers {
            let mut gc = DVector::zeros(n);
            let mut hc = DMatrix::zeros(n, n);
            let cj = Self::accumulate(terms, th, &mut gc, &mut hc, 1.0);
            f -= cj * cj;
            grad -= &gc * (2.0 * cj);
            hess -= (&gc * gc.transpose()) * 2.0 + hc * (2.0 * cj);
        }
        (f, grad, hess)
    }

    /// Damped Newton iteration on the phases, with the global phase pinned by a mean-zero penalty.
    fn polish(&self, th: &mut [f64]) {
        let n = self.nk;
        let ones = DMatrix::from_element(n, n, 1.0 / n as f64);
        for _ in 0..100 {
            let (f, grad, hess) = self.derivatives(th);
            let gmax = grad.amax();
            if gmax < 1e-15 * (1.0 + f.abs()) {
                break;
            }
            let reg = &hess + &ones;
            let dir = match reg.clone().cholesky() {
                Some(ch) => -ch.solve(&grad),
                None => -&grad * (1.0 / hess.diagonal().amax().max(1.0)),
            };
            let slope = grad.dot(&dir);
            let mut t = 1.0;
            let mut accepted = false;
            while t > 1e-12 {
                let cand: Vec<f64> = th.iter().zip(dir.iter()).map(|(a, d)| a + t * d).collect();
                let fc = self.value(&cand);
                if fc <= f + 1e-4 * t * slope || (fc - f).abs() <= 1e-15 * f.abs() {
                    th.copy_from_slice(&cand);
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }
}

fn phases_to_gauge(th: &[f64]) -> GaugeField {
    GaugeField { u: th.iter().map(|&t| CMat::from_element(1, 1, cis(t))).collect() }
}

/// Abelian oracle: Poisson seed in each winding sector ℓ ∈ [−2, 2]^d, polished by Newton's method.
pub fn abelian_poisson_oracle(ov: &Overlaps, grid: &KGrid) -> Result<OracleResult> {
    if ov.m != 1 {
        return Err(Error::NotAbelian { m: ov.m });
    }
    let a = ov.connection();
    let f = poisson_phase(&a, grid)?;
    let obj = PhaseObjective::new(ov);
    let lengths = lattice_repeat(grid);
    let d = grid.dim;
    let count = 5usize.pow(d as u32);
    let mut sectors = Vec::with_capacity(count);
    let mut gauges = Vec::with_capacity(count);
    let mut poisson_grad_norm = f64::NAN;
    for s in 0..count {
        let winding: Vec<i64> = (0..d).map(|j| ((s / 5usize.pow(j as u32)) % 5) as i64 - 2).collect();
        let mut th: Vec<f64> = (0..grid.len())
            .map(|k| {
                let kv = grid.points[k];
                let mut phase = f[k];
                for j in 0..d {
                    let kj = kv[0] * grid.directions[j][0] + kv[1] * grid.directions[j][1] + kv[2] * grid.directions[j][2];
                    phase += kj * winding[j] as f64 * lengths[j];
                }
                phase
            })
            .collect();
        let seed_gauge = phases_to_gauge(&th);
        let poisson_objective = ov.value(&seed_gauge).total;
        if winding.iter().all(|&w| w == 0) {
            poisson_grad_norm = field_norm(&ov.riemannian_gradient(&seed_gauge).1);
        }
        obj.polish(&mut th);
        let gauge = phases_to_gauge(&th);
        let (val, g) = ov.riemannian_gradient(&gauge);
        sectors.push(SectorResult {
            winding,
            poisson_objective,
            objective: val.total,
            grad_norm: field_norm(&g),
            centers: val.centers,
        });
        gauges.push(gauge);
    }
    let best = (0..count).min_by(|&x, &y| sectors[x].objective.total_cmp(&sectors[y].objective)).unwrap_or(0);
    let selected = (0..count)
        .filter(|&s| centers_canonical(&sectors[s].centers, grid))
        .min_by(|&x, &y| {
            let wx: i64 = sectors[x].winding.iter().map(|w| w.abs()).sum();
            let wy: i64 = sectors[y].winding.iter().map(|w| w.abs()).sum();
            wx.cmp(&wy).then(sectors[x].objective.total_cmp(&sectors[y].objective))
        })
        .unwrap_or(best);
    Ok(OracleResult {
        gauge: gauges.swap_remove(selected),
        objective: sectors[selected].objective,
        grad_norm: sectors[selected].grad_norm,
        selected,
        best,
        sectors,
        poisson_grad_norm,
    })
}

/// Absolute change of the objective under the recentering map by one lattice vector per band.
pub fn recentering_residual(ov: &Overlaps, grid: &KGrid, u: &GaugeField, direction: usize) -> f64 {
    let lengths = lattice_repeat(grid);
    let mut g = [0.0; 3];
    for (i, gi) in g.iter_mut().enumerate() {
        *gi = lengths[direction] * grid.directions[direction][i];
    }
    let shifts = vec![g; ov.m];
    let moved = u.recentered(grid, &shifts);
    (ov.value(&moved).total - ov.value(u).total).abs()
}
