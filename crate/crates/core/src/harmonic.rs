//! Harmonic maps S² → U(m) and the algebra behind the stability inequality.
//!
//! Test maps come from the Cartan embedding ω = ω₀(p − p⊥) of a holomorphic
//! line p(z) = span{v(z)} spanned by polynomials. Energies use the
//! Hilbert–Schmidt norm, E(ω) = ½∫‖ω⁻¹dω‖².

use std::f64::consts::PI;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{c, norm2, unitarity_error, CMat, C64};

const GCD_TOL: f64 = 1e-8;
const FD_STEP: f64 = 1e-6;

fn poly_eval(p: &[C64], z: C64) -> C64 {
    p.iter().rev().fold(c(0.0, 0.0), |acc, &a| acc * z + a)
}

fn poly_trim(p: &mut Vec<C64>, tol: f64) {
    while p.last().is_some_and(|a| a.norm() <= tol) {
        p.pop();
    }
}

fn poly_mul(a: &[C64], b: &[C64]) -> Vec<C64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![c(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Long division; returns (quotient, remainder).
fn poly_divmod(a: &[C64], b: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let db = b.len() - 1;
    let lead = b[db];
    let mut r = a.to_vec();
    if a.len() < b.len() {
        return (Vec::new(), r);
    }
    let mut q = vec![c(0.0, 0.0); a.len() - db];
    for i in (0..q.len()).rev() {
        let coef = r[i + db] / lead;
        q[i] = coef;
        for (j, bj) in b.iter().enumerate() {
            r[i + j] -= coef * bj;
        }
    }
    r.truncate(db);
    (q, r)
}

fn max_abs(p: &[C64]) -> f64 {
    p.iter().map(|a| a.norm()).fold(0.0, f64::max)
}

/// Monic numerical gcd by the Euclidean algorithm; remainders below `tol` (relative) count as zero.
fn poly_gcd(a: &[C64], b: &[C64], tol: f64) -> Vec<C64> {
    let normalize = |p: &[C64]| {
        let s = max_abs(p);
        p.iter().map(|x| x / s).collect::<Vec<_>>()
    };
    let mut x = normalize(a);
    let mut y = normalize(b);
    poly_trim(&mut x, tol);
    poly_trim(&mut y, tol);
    while !y.is_empty() {
        let (_, mut r) = poly_divmod(&x, &y);
        poly_trim(&mut r, tol * max_abs(&x).max(1.0));
        x = y;
        y = if r.is_empty() { r } else { normalize(&r) };
        poly_trim(&mut y, tol);
    }
    let lead = *x.last().unwrap_or(&c(1.0, 0.0));
    x.iter().map(|v| v / lead).collect()
}

/// A holomorphic line p(z) = span{v(z)} in ℂ^m spanned by polynomial components.
#[derive(Debug, Clone, PartialEq)]
pub struct HolomorphicLine {
    /// polys[a][i] is the coefficient of z^i in v_a.
    pub polys: Vec<Vec<C64>>,
    pub degree: usize,
}

impl HolomorphicLine {
    /// Normalizes the data and removes any common factor of the components.
    pub fn new(polys: Vec<Vec<C64>>) -> Result<Self> {
        let m = polys.len();
        if m < 2 {
            return Err(Error::InvalidLine(format!("need at least two components, got {m}")));
        }
        if polys.iter().flatten().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::InvalidLine("non-finite coefficient".into()));
        }
        let scale = polys.iter().map(|p| max_abs(p)).fold(0.0, f64::max);
        if scale == 0.0 {
            return Err(Error::InvalidLine("all components vanish".into()));
        }
        let mut polys: Vec<Vec<C64>> = polys.iter().map(|p| p.iter().map(|a| a / scale).collect()).collect();
        for p in polys.iter_mut() {
            poly_trim(p, GCD_TOL);
        }
        let nonzero: Vec<&Vec<C64>> = polys.iter().filter(|p| !p.is_empty()).collect();
        let mut g = nonzero[0].clone();
        for p in &nonzero[1..] {
            g = poly_gcd(&g, p, GCD_TOL);
        }
        if g.len() > 1 {
            for p in polys.iter_mut() {
                if !p.is_empty() {
                    let (mut q, _) = poly_divmod(p, &g);
                    let tol = GCD_TOL * max_abs(&q);
                    poly_trim(&mut q, tol);
                    *p = q;
                }
            }
        }
        let degree = polys.iter().map(|p| p.len().saturating_sub(1)).max().unwrap_or(0);
        Ok(HolomorphicLine { polys, degree })
    }

    /// Monomial curve (1, z^{d₁}, …) from a list of exponents, one per component.
    pub fn monomials(exponents: &[usize]) -> Result<Self> {
        Self::new(
            exponents
                .iter()
                .map(|&e| {
                    let mut p = vec![c(0.0, 0.0); e + 1];
                    p[e] = c(1.0, 0.0);
                    p
                })
                .collect(),
        )
    }

    pub fn m(&self) -> usize {
        self.polys.len()
    }

    /// Reparameterization z ↦ (az + b)/(cz + d), cleared of denominators.
    pub fn mobius(&self, a: C64, b: C64, cc: C64, d: C64) -> Result<Self> {
        if (a * d - b * cc).norm() < 1e-12 {
            return Err(Error::InvalidLine("degenerate Möbius map".into()));
        }
        let num = [b, a];
        let den = [d, cc];
        let polys = self
            .polys
            .iter()
            .map(|p| {
                let mut out = vec![c(0.0, 0.0); self.degree + 1];
                for (i, &coef) in p.iter().enumerate() {
                    let mut term = vec![coef];
                    for _ in 0..i {
                        term = poly_mul(&term, &num);
                    }
                    for _ in i..self.degree {
                        term = poly_mul(&term, &den);
                    }
                    for (k, t) in term.iter().enumerate() {
                        out[k] += t;
                    }
                }
                out
            })
            .collect();
        Self::new(polys)
    }

    /// v(z) in the inner chart.
    pub fn vector(&self, z: C64) -> DVector<C64> {
        DVector::from_iterator(self.m(), self.polys.iter().map(|p| poly_eval(p, z)))
    }

    /// w^deg · v(1/w), the line in the outer chart w = 1/z.
    pub fn vector_outer(&self, w: C64) -> DVector<C64> {
        DVector::from_iterator(
            self.m(),
            self.polys.iter().map(|p| {
                let mut rev = vec![c(0.0, 0.0); self.degree + 1];
                for (i, &a) in p.iter().enumerate() {
                    rev[self.degree - i] = a;
                }
                poly_eval(&rev, w)
            }),
        )
    }
}

fn line_projector(v: &DVector<C64>) -> CMat {
    let n2 = v.norm_squared();
    (v * v.adjoint()) / c(n2, 0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chart {
    /// z with |z| ≤ 1.
    Inner,
    /// w = 1/z with |w| ≤ 1.
    Outer,
}

/// ω(z) = L (p(z) − p⊥(z)) R for constant unitaries L, R.
#[derive(Debug, Clone)]
pub struct SphereMap {
    pub line: HolomorphicLine,
    pub left: CMat,
    pub right: CMat,
}

impl SphereMap {
    pub fn new(line: HolomorphicLine) -> Self {
        let m = line.m();
        SphereMap { line, left: CMat::identity(m, m), right: CMat::identity(m, m) }
    }

    pub fn with_factors(line: HolomorphicLine, left: CMat, right: CMat) -> Self {
        SphereMap { line, left, right }
    }

    pub fn m(&self) -> usize {
        self.line.m()
    }

    pub fn eval(&self, chart: Chart, z: C64) -> CMat {
        let v = match chart {
            Chart::Inner => self.line.vector(z),
            Chart::Outer => self.line.vector_outer(z),
        };
        let m = self.m();
        let refl = line_projector(&v) * c(2.0, 0.0) - CMat::identity(m, m);
        &self.left * refl * &self.right
    }

    /// ω at a point of the unit sphere, through stereographic projection from the north pole.
    pub fn eval_sphere(&self, x: &[f64; 3]) -> CMat {
        if x[2] <= 0.0 {
            self.eval(Chart::Inner, c(x[0], x[1]) / (1.0 - x[2]))
        } else {
            self.eval(Chart::Outer, c(x[0], -x[1]) / (1.0 + x[2]))
        }
    }

    /// ‖ω⁻¹∂ₓω‖² + ‖ω⁻¹∂ᵧω‖² in a chart, by central differences.
    pub fn energy_density(&self, chart: Chart, z: C64) -> f64 {
        let w = self.eval(chart, z);
        let wi = w.adjoint();
        let mut acc = 0.0;
        for dir in [c(1.0, 0.0), c(0.0, 1.0)] {
            let dw = (self.eval(chart, z + dir * FD_STEP) - self.eval(chart, z - dir * FD_STEP)) * c(0.5 / FD_STEP, 0.0);
            acc += norm2(&(&wi * dw));
        }
        acc
    }
}

fn gauss_rule(order: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(order.max(2)).expect("order at least two").as_node_weight_pairs().to_vec()
}

/// ½∫ density over the annulus r₀ ≤ |z| ≤ r₁ of a chart, by polar tensor-product Gauss–Legendre quadrature.
fn annulus_energy(map: &SphereMap, chart: Chart, r0: f64, r1: f64, rule: &[(f64, f64)]) -> f64 {
    let mut acc = 0.0;
    for &(xr, wr) in rule {
        let r = 0.5 * (r1 - r0) * xr + 0.5 * (r1 + r0);
        let mut ring = 0.0;
        for &(xt, wt) in rule {
            let th = PI * (xt + 1.0);
            ring += wt * map.energy_density(chart, C64::from_polar(r, th));
        }
        acc += wr * r * ring * PI;
    }
    0.5 * acc * 0.5 * (r1 - r0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SphereEnergy {
    pub energy: f64,
    pub inner: f64,
    pub outer: f64,
    /// The annulus ½ ≤ |z| ≤ 1 integrated in each chart.
    pub overlap: (f64, f64),
}

/// Dirichlet energy over S² from the two unit-disk charts; conformal invariance makes the chart metric irrelevant.
pub fn sphere_energy_report(map: &SphereMap, order: usize) -> Result<SphereEnergy> {
    let rule = gauss_rule(order);
    let inner = annulus_energy(map, Chart::Inner, 0.0, 1.0, &rule);
    let outer = annulus_energy(map, Chart::Outer, 0.0, 1.0, &rule);
    let a = annulus_energy(map, Chart::Inner, 0.5, 1.0, &rule);
    let b = annulus_energy(map, Chart::Outer, 1.0, 2.0, &rule);
    let scale = a.abs().max(b.abs());
    if scale > 1e-12 && (a - b).abs() > 0.01 * scale {
        return Err(Error::QuadratureDivergence { inner: a, outer: b });
    }
    Ok(SphereEnergy { energy: inner + outer, inner, outer, overlap: (a, b) })
}

pub fn sphere_energy(map: &SphereMap, order: usize) -> Result<f64> {
    sphere_energy_report(map, order).map(|r| r.energy)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct QuantizationRow {
    pub case: String,
    pub m: usize,
    pub degree: usize,
    pub energy: f64,
    #[serde(rename = "ratioTo8pi")]
    pub ratio_to_8pi: f64,
    pub pass: bool,
}

/// Energy of each Cartan-embedded line against 8π·degree; a case passes within 1%.
pub fn quantization_check(cases: &[(String, HolomorphicLine)], order: usize) -> Result<Vec<QuantizationRow>> {
    cases
        .iter()
        .map(|(name, line)| {
            let energy = sphere_energy(&SphereMap::new(line.clone()), order)?;
            let target = 8.0 * PI * line.degree as f64;
            let pass = line.degree > 0 && ((energy - target) / target).abs() <= 0.01;
            Ok(QuantizationRow {
                case: name.clone(),
                m: line.m(),
                degree: line.degree,
                energy,
                ratio_to_8pi: energy / (8.0 * PI),
                pass,
            })
        })
        .collect()
}

/// The lower bound (π/2)·m(m²−1) that an energy-minimizing tangent map must respect.
pub fn stability_energy_bound(m: usize) -> f64 {
    let m = m as f64;
    0.5 * PI * m * (m * m - 1.0)
}

/// det(p − p⊥) at z; equals (−1)^{m−1} for a line.
pub fn cartan_reflection_det(line: &HolomorphicLine, z: C64) -> C64 {
    let m = line.m();
    (line_projector(&line.vector(z)) * c(2.0, 0.0) - CMat::identity(m, m)).determinant()
}

/// ¼‖[A, B]‖², the sectional numerator of the bi-invariant metric on SU(m).
pub fn cartan_curvature(a: &CMat, b: &CMat) -> f64 {
    0.25 * norm2(&(a * b - b * a))
}

/// Projection of a matrix onto 𝔰𝔲(m).
pub fn project_su(y: &CMat) -> CMat {
    let m = y.nrows();
    let s = (y - y.adjoint()) * c(0.5, 0.0);
    let tr = s.trace() / c(m as f64, 0.0);
    s - CMat::identity(m, m) * tr
}

/// Orthogonal projection P_U of the ambient matrix space onto T_U SU(m).
pub fn tangent_projection(u: &CMat, x: &CMat) -> CMat {
    u * project_su(&(u.adjoint() * x))
}

/// The real orthonormal basis {E_ab, iE_ab} of M_m(ℂ).
pub fn canonical_onb(m: usize) -> Vec<CMat> {
    let mut out = Vec::with_capacity(2 * m * m);
    for a in 0..m {
        for b in 0..m {
            for z in [c(1.0, 0.0), c(0.0, 1.0)] {
                let mut e = CMat::zeros(m, m);
                e[(a, b)] = z;
                out.push(e);
            }
        }
    }
    out
}

/// Both sides of the ONB-averaged second-variation identity at U ∈ SU(m).
///
/// The left side assembles Σ_j Σ_φ {‖∇̃_j φᵀ‖² − R(∂_jU, φᵀ, ∂_jU, φᵀ)} from the
/// definitions: φᵀ = P_U(φ) = Uψ, ∇̃ = P_U ∘ ∂, and R by the Cartan formula.
/// The right side is −(1/m) Σ_j ‖∂_jU‖². Tangents are projected first.
pub fn second_variation_identity(u: &CMat, du: &[CMat], onb: &[CMat]) -> Result<(f64, f64)> {
    let m = u.nrows();
    let unit = unitarity_error(u);
    if unit > 1e-10 {
        return Err(Error::TangencyViolation { residual: unit });
    }
    let ui = u.adjoint();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for d in du {
        let dp = tangent_projection(u, d);
        let a = &ui * &dp;
        let residual = (&a + a.adjoint()).norm() + a.trace().norm();
        if residual > 1e-10 {
            return Err(Error::TangencyViolation { residual });
        }
        rhs -= norm2(&dp) / m as f64;
        for phi in onb {
            let psi = project_su(&(&ui * phi));
            // ψ(U) = proj(U*φ) is linear in U*, so its derivative along dU is proj(dU*φ).
            let dpsi = project_su(&(dp.adjoint() * phi));
            let dv = &dp * &psi + u * &dpsi;
            let cov = tangent_projection(u, &dv);
            lhs += norm2(&cov) - cartan_curvature(&a, &psi);
        }
    }
    Ok((lhs, rhs))
}

/// Uniform midpoint grid of n³ cells on [−L, L]³.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallGrid {
    pub n: usize,
    pub half_width: f64,
}

impl BallGrid {
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, idx: usize) -> [f64; 3] {
        let h = self.spacing();
        let (i, j, k) = (idx / (self.n * self.n), (idx / self.n) % self.n, idx % self.n);
        let coord = |t: usize| -self.half_width + (t as f64 + 0.5) * h;
        [coord(i), coord(j), coord(k)]
    }

    fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.n + j) * self.n + k
    }
}

/// U(k) = ω(k/|k|), the degree-zero homogeneous extension of a sphere map.
pub fn homogeneous_extension(map: &SphereMap, grid: &BallGrid) -> Vec<CMat> {
    (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            map.eval_sphere(&[x[0] / r, x[1] / r, x[2] / r])
        })
        .collect()
}

/// η(k) = (1 − |k|²/R²)² inside the ball of radius R, zero outside.
pub fn radial_bump(grid: &BallGrid, radius: f64) -> Vec<f64> {
    (0..grid.len())
        .map(|idx| {
            let x = grid.point(idx);
            let s = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (radius * radius);
            if s < 1.0 {
                (1.0 - s).powi(2)
            } else {
                0.0
            }
        })
        .collect()
}

/// (∫η²‖U⁻¹dU‖², m(m²−1)∫|∇η|²) by midpoint quadrature and central differences.
///
/// The outermost layer of cells is skipped; η is expected to vanish there.
pub fn stability_sides(grid: &BallGrid, u: &[CMat], eta: &[f64]) -> (f64, f64) {
    let n = grid.n;
    let h = grid.spacing();
    let m = u.first().map_or(0, |x| x.nrows()) as f64;
    let vol = h * h * h;
    let mut lhs = 0.0;
    let mut grad = 0.0;
    for i in 1..n.saturating_sub(1) {
        for j in 1..n - 1 {
            for k in 1..n - 1 {
                let idx = grid.index(i, j, k);
                let nb = [
                    (grid.index(i + 1, j, k), grid.index(i - 1, j, k)),
                    (grid.index(i, j + 1, k), grid.index(i, j - 1, k)),
                    (grid.index(i, j, k + 1), grid.index(i, j, k - 1)),
                ];
                let mut g2 = 0.0;
                for &(p, q) in &nb {
                    let de = (eta[p] - eta[q]) / (2.0 * h);
                    g2 += de * de;
                }
                grad += g2 * vol;
                let e = eta[idx];
                if e != 0.0 {
                    let ui = u[idx].adjoint();
                    let mut d2 = 0.0;
                    for &(p, q) in &nb {
                        d2 += norm2(&(&ui * (&u[p] - &u[q]))) / (4.0 * h * h);
                    }
                    lhs += e * e * d2 * vol;
                }
            }
        }
    }
    (lhs, m * (m * m - 1.0) * grad)
}

/// Haar-random unitary rescaled to determinant one.
pub fn random_su_point<R: rand::Rng>(m: usize, rng: &mut R) -> CMat {
    let u = crate::linalg::random_unitary(m, rng);
    let det = u.determinant();
    let root = C64::from_polar(1.0, -det.arg() / m as f64);
    u * root
}
/// A degree-`degree` line in ℂ^m: (1, z, …, z^{m−2}, z^degree), or (1, z, …, z^degree, 0, …) when degree < m − 1.
pub fn line_of_degree(m: usize, degree: usize) -> Result<HolomorphicLine> {
    if m < 2 || degree == 0 {
        return Err(Error::InvalidLine(format!("need m >= 2 and degree >= 1, got m = {m}, degree = {degree}")));
    }
    let exps: Vec<usize> = if degree + 1 >= m { (0..m - 1).chain([degree]).collect() } else { (0..=degree).collect() };
    let mut polys: Vec<Vec<C64>> = exps
        .iter()
        .map(|&e| {
            let mut p = vec![c(0.0, 0.0); e + 1];
            p[e] = c(1.0, 0.0);
            p
        })
        .collect();
    polys.resize(m, Vec::new());
    HolomorphicLine::new(polys)
}

/// Degrees 1 to 3 in U(2) and U(3).
pub fn default_cases() -> Vec<(String, HolomorphicLine)> {
    let mut out = Vec::new();
    for m in [2, 3] {
        for d in 1..=3 {
            out.push((format!("U({m}) degree {d}"), line_of_degree(m, d).expect("valid line")));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StabilityCheck {
    pub m: usize,
    pub energy: f64,
    pub bound: f64,
    pub pass: bool,
}

/// The degree-1 energy must sit at 8π (1%) and clear the bound by more than 1%.
pub fn stability_check(m: usize, order: usize) -> Result<StabilityCheck> {
    let energy = sphere_energy(&SphereMap::new(line_of_degree(m, 1)?), order)?;
    let bound = stability_energy_bound(m);
    let pass = ((energy - 8.0 * PI) / (8.0 * PI)).abs() <= 0.01 && energy > 1.01 * bound;
    Ok(StabilityCheck { m, energy, bound, pass })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IdentityCheck {
    pub m: usize,
    pub trials: usize,
    pub worst_rel_error: f64,
    pub pass: bool,
}

/// Random (U, three tangents) trials of the ONB-averaged second variation identity.
pub fn identity_check(m: usize, trials: usize, seed: u64) -> Result<IdentityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let onb = canonical_onb(m);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let u = random_su_point(m, &mut rng);
        let du: Vec<CMat> = (0..3).map(|_| &u * crate::linalg::random_skew(m, &mut rng)).collect();
        let (lhs, rhs) = second_variation_identity(&u, &du, &onb)?;
        worst = worst.max((lhs - rhs).abs() / (1.0 + rhs.abs()));
    }
    Ok(IdentityCheck { m, trials, worst_rel_error: worst, pass: worst <= 1e-9 })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct HarmonicReport {
    pub quantization: Vec<QuantizationRow>,
    pub stability: Vec<StabilityCheck>,
    pub identity: Vec<IdentityCheck>,
    pub pass: bool,
}

/// Quantization cases, the m = 2 stability comparison and the identity trials for m = 2, 3.
pub fn run_suite(cases: &[(String, HolomorphicLine)], trials: usize, seed: u64, order: usize) -> Result<HarmonicReport> {
    let quantization = quantization_check(cases, order)?;
    let stability = vec![stability_check(2, order)?];
    let identity = vec![identity_check(2, trials, seed)?, identity_check(3, trials, seed.wrapping_add(1))?];
    let pass = quantization.iter().all(|r| r.pass) && stability.iter().all(|r| r.pass) && identity.iter().all(|r| r.pass);
    Ok(HarmonicReport { quantization, stability, identity, pass })
}

