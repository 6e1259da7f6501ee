//! Plane-wave discretization of the fiber operators H(k) = (−i∇ + k)² + V.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lattice::{axpy, dot, norm, BravaisLattice, KGrid, Vec3};
use crate::linalg::{c, hermitian_eigh, CMat, C64};

pub type GIndex = [i32; 3];

/// Reciprocal vectors G ∈ Γ* with |G| ≤ cutoff, ordered by |G| then integer coordinates.
#[derive(Debug, Clone)]
pub struct PlaneWaveBasis {
    pub dim: usize,
    pub cutoff: f64,
    pub g_int: Vec<GIndex>,
    pub g_cart: Vec<Vec3>,
    lookup: HashMap<GIndex, usize>,
    /// shift[dir][i] = index of G_i + γ*_dir, if inside the cutoff.
    shift_plus: Vec<Vec<Option<usize>>>,
    shift_minus: Vec<Vec<Option<usize>>>,
    pub conj_table: Vec<usize>,
}

impl PlaneWaveBasis {
    pub fn new(lat: &BravaisLattice, cutoff: f64) -> Self {
        let dim = lat.dim;
        let bound: Vec<i32> = (0..3)
            .map(|j| if j < dim { (cutoff * norm(&lat.basis[j]) / std::f64::consts::TAU).floor() as i32 + 1 } else { 0 })
            .collect();
        let lim = cutoff * cutoff * (1.0 + 1e-12) + 1e-12;
        let mut found: Vec<(f64, GIndex, Vec3)> = Vec::new();
        for a in -bound[0]..=bound[0] {
            for b in -bound[1]..=bound[1] {
                for cc in -bound[2]..=bound[2] {
                    let n = [a, b, cc];
                    let g = lat.dual_point(&n);
                    let g2 = dot(&g, &g);
                    if g2 <= lim {
                        found.push((g2, n, g));
                    }
                }
            }
        }
        found.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        let g_int: Vec<GIndex> = found.iter().map(|f| f.1).collect();
        let g_cart: Vec<Vec3> = found.iter().map(|f| f.2).collect();
        let lookup: HashMap<GIndex, usize> = g_int.iter().enumerate().map(|(i, g)| (*g, i)).collect();
        let step = |dir: usize, s: i32| -> Vec<Option<usize>> {
            g_int
                .iter()
                .map(|g| {
                    let mut h = *g;
                    h[dir] += s;
                    lookup.get(&h).copied()
                })
                .collect()
        };
        let shift_plus = (0..dim).map(|d| step(d, 1)).collect();
        let shift_minus = (0..dim).map(|d| step(d, -1)).collect();
        let conj_table = g_int.iter().map(|g| lookup[&[-g[0], -g[1], -g[2]]]).collect();
        PlaneWaveBasis { dim, cutoff, g_int, g_cart, lookup, shift_plus, shift_minus, conj_table }
    }

    pub fn len(&self) -> usize {
        self.g_int.len()
    }

    pub fn is_empty(&self) -> bool {
        self.g_int.is_empty()
    }

    pub fn index_of(&self, g: &GIndex) -> Option<usize> {
        self.lookup.get(g).copied()
    }

    /// Partial permutation G ↦ G + sign·γ*_dir.
    pub fn shift_table(&self, dir: usize, sign: i32) -> &[Option<usize>] {
        if sign > 0 {
            &self.shift_plus[dir]
        } else {
            &self.shift_minus[dir]
        }
    }

    /// Coefficients of the τ-image at k + wraps·γ*_dir: c'(G) = c(G + wraps·γ*_dir).
    ///
    /// Entries whose source falls outside the cutoff are set to zero.
    pub fn shift_coeffs(&self, coeffs: &CMat, dir: usize, wraps: i32) -> CMat {
        if wraps == 0 {
            return coeffs.clone();
        }
        let mut out = CMat::zeros(coeffs.nrows(), coeffs.ncols());
        for (i, g) in self.g_int.iter().enumerate() {
            let mut src = *g;
            src[dir] += wraps;
            if let Some(s) = self.lookup.get(&src) {
                out.set_row(i, &coeffs.row(*s));
            }
        }
        out
    }
}

/// Fourier coefficients of a real periodic potential, keyed by integer G coordinates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PotentialSpec {
    pub coeffs: BTreeMap<GIndex, C64>,
}

impl PotentialSpec {
    /// Builds a potential, completing V̂_{−G} = conj V̂_G where a partner is missing.
    pub fn new(entries: &[(GIndex, C64)]) -> Result<Self> {
        let mut coeffs = BTreeMap::new();
        for (g, v) in entries {
            if let Some(prev) = coeffs.insert(*g, *v) {
                if (prev - v).norm() > 1e-12 * (1.0 + v.norm()) {
                    return Err(Error::NonHermitianPotential { g: *g });
                }
            }
        }
        let given = coeffs.clone();
        for (g, v) in &given {
            let ng = [-g[0], -g[1], -g[2]];
            match given.get(&ng) {
                Some(w) if (w - v.conj()).norm() > 1e-12 * (1.0 + v.norm()) => {
                    return Err(Error::NonHermitianPotential { g: *g });
                }
                Some(_) => {}
                None => {
                    coeffs.insert(ng, v.conj());
                }
            }
        }
        if let Some(v0) = coeffs.get(&[0, 0, 0]) {
            if v0.im.abs() > 1e-12 * (1.0 + v0.norm()) {
                return Err(Error::NonHermitianPotential { g: [0, 0, 0] });
            }
        }
        Ok(PotentialSpec { coeffs })
    }

    pub fn free() -> Self {
        PotentialSpec::default()
    }

    /// V(x) = 2 V0 cos(x) on the 2π lattice.
    pub fn mathieu1d(v0: f64) -> Self {
        Self::cosines(1, v0)
    }

    /// V(x) = 2 V0 Σ_j cos(γ*_j · x).
    pub fn cosines(dim: usize, v0: f64) -> Self {
        let mut coeffs = BTreeMap::new();
        for j in 0..dim {
            for s in [-1, 1] {
                let mut g = [0; 3];
                g[j] = s;
                coeffs.insert(g, c(v0, 0.0));
            }
        }
        PotentialSpec { coeffs }
    }

    pub fn get(&self, g: &GIndex) -> C64 {
        self.coeffs.get(g).copied().unwrap_or_default()
    }

    /// Real-space value V(x).
    pub fn eval(&self, lat: &BravaisLattice, x: &Vec3) -> f64 {
        self.coeffs
            .iter()
            .map(|(g, v)| (v * C64::from_polar(1.0, dot(&lat.dual_point(g), x))).re)
            .sum()
    }
}

/// Dense fiber matrix M_{GG'} = |k+G|² δ_{GG'} + V̂_{G−G'}.
pub fn assemble_fiber(k: &Vec3, basis: &PlaneWaveBasis, pot: &PotentialSpec) -> CMat {
    let n = basis.len();
    let mut m = CMat::zeros(n, n);
    for i in 0..n {
        let q = axpy(1.0, k, &basis.g_cart[i]);
        m[(i, i)] = c(dot(&q, &q), 0.0);
    }
    if pot.coeffs.is_empty() {
        return m;
    }
    for i in 0..n {
        for j in 0..n {
            let gi = basis.g_int[i];
            let gj = basis.g_int[j];
            let d = [gi[0] - gj[0], gi[1] - gj[1], gi[2] - gj[2]];
            if let Some(v) = pot.coeffs.get(&d) {
                m[(i, j)] += v;
            }
        }
    }
    m
}

#[derive(Debug, Clone)]
pub struct FiberSpectrum {
    pub k: Vec3,
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: CMat,
}

impl FiberSpectrum {
    /// Columns n..n+m of the eigenvector matrix.
    pub fn window_vectors(&self, first: usize, count: usize) -> CMat {
        self.eigenvectors.columns(first, count).into_owned()
    }
}

/// Full Hermitian eigendecomposition of H(k).
pub fn solve_fiber(k: &Vec3, basis: &PlaneWaveBasis, pot: &PotentialSpec) -> Result<FiberSpectrum> {
    let h = assemble_fiber(k, basis, pot);
    if h.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigFailure { k: k.to_vec() });
    }
    let (vals, mut vecs) = hermitian_eigh(&h).ok_or_else(|| Error::EigFailure { k: k.to_vec() })?;
    reorthonormalize_clusters(&vals, &mut vecs);
    let hv = &h * &vecs;
    for (i, &e) in vals.iter().enumerate() {
        let r = (hv.column(i) - vecs.column(i) * c(e, 0.0)).norm();
        if r > 1e-8 * (1.0 + e.abs()) {
            return Err(Error::EigResidual { k: k.to_vec(), residual: r });
        }
    }
    Ok(FiberSpectrum { k: *k, eigenvalues: vals, eigenvectors: vecs })
}

/// Modified Gram–Schmidt inside clusters whose eigenvalue spacing is below 1e-9.
fn reorthonormalize_clusters(vals: &[f64], vecs: &mut CMat) {
    let n = vals.len();
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && vals[end] - vals[end - 1] < 1e-9 {
            end += 1;
        }
        if end - start > 1 {
            for j in start..end {
                let mut v = vecs.column(j).into_owned();
                for i in start..j {
                    let u = vecs.column(i);
                    let proj = u.dotc(&v);
                    v -= u * proj;
                }
                let nv = v.norm();
                vecs.set_column(j, &(v / c(nv, 0.0)));
            }
        }
        start = end;
    }
}

/// Solves every fiber of the grid in parallel; results are in grid order.
pub fn solve_grid(grid: &KGrid, basis: &PlaneWaveBasis, pot: &PotentialSpec) -> Result<Vec<FiberSpectrum>> {
    grid.points.par_iter().map(|k| solve_fiber(k, basis, pot)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandWindow {
    pub first: usize,
    pub count: usize,
    pub min_gap: f64,
}

impl BandWindow {
    pub fn new(first: usize, count: usize) -> Self {
        BandWindow { first, count, min_gap: f64::NAN }
    }
}

/// Gap between the window and the rest of the spectrum at one k.
pub fn window_gap(spec: &FiberSpectrum, first: usize, count: usize) -> f64 {
    let e = &spec.eigenvalues;
    let mut gap = f64::INFINITY;
    if first > 0 {
        gap = gap.min(e[first] - e[first - 1]);
    }
    if first + count < e.len() {
        gap = gap.min(e[first + count] - e[first + count - 1]);
    }
    gap
}

/// Checks the gap condition over the grid and records the minimal gap.
pub fn validate_gap(spectra: &[FiberSpectrum], window: BandWindow, tol: f64) -> Result<BandWindow> {
    let mut worst = (0usize, f64::INFINITY);
    for (i, s) in spectra.iter().enumerate() {
        if window.count == 0 || window.first + window.count > s.eigenvalues.len() {
            return Err(Error::WindowOutOfRange {
                first: window.first,
                count: window.count,
                basis: s.eigenvalues.len(),
            });
        }
        let g = window_gap(s, window.first, window.count);
        if g < worst.1 {
            worst = (i, g);
        }
    }
    if !(worst.1 > tol) {
        return Err(Error::GapViolation { k_index: worst.0, k: spectra[worst.0].k.to_vec(), gap: worst.1 });
    }
    Ok(BandWindow { min_gap: worst.1, ..window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{build_lattice, make_kgrid};
    use std::f64::consts::TAU;

    fn chain() -> BravaisLattice {
        build_lattice(&[vec![TAU]]).unwrap()
    }

    #[test]
    fn basis_is_symmetric_and_sorted() {
        let lat = build_lattice(&[vec![1.0, 0.0], vec![0.4, 1.3]]).unwrap();
        let b = PlaneWaveBasis::new(&lat, 20.0);
        for (i, g) in b.g_int.iter().enumerate() {
            assert_eq!(b.g_int[b.conj_table[i]], [-g[0], -g[1], -g[2]]);
            assert!(norm(&b.g_cart[i]) <= 20.0 + 1e-9);
        }
        assert_eq!(b.g_int[0], [0, 0, 0]);
    }

    #[test]
    fn shift_tables_invert_each_other() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 4.0);
        assert_eq!(b.len(), 9);
        let plus = b.shift_table(0, 1);
        let minus = b.shift_table(0, -1);
        for i in 0..b.len() {
            if let Some(j) = plus[i] {
                assert_eq!(minus[j], Some(i));
            }
        }
    }

    #[test]
    fn free_particle_diagonal() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 1.0);
        let m = assemble_fiber(&[0.1, 0.0, 0.0], &b, &PotentialSpec::free());
        let mut diag: Vec<f64> = (0..3).map(|i| m[(i, i)].re).collect();
        diag.sort_by(f64::total_cmp);
        let want = [0.01, 0.81, 1.21];
        for (d, w) in diag.iter().zip(want) {
            assert!((d - w).abs() < 1e-14);
        }
        assert!((m.clone() - CMat::from_diagonal(&m.diagonal())).norm() == 0.0);
    }

    #[test]
    fn mathieu_off_diagonals() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 3.0);
        let m = assemble_fiber(&[0.0; 3], &b, &PotentialSpec::mathieu1d(0.5));
        for i in 0..b.len() {
            for j in 0..b.len() {
                if i == j {
                    continue;
                }
                let d = (b.g_int[i][0] - b.g_int[j][0]).abs();
                let want = if d == 1 { 0.5 } else { 0.0 };
                assert_eq!(m[(i, j)], c(want, 0.0));
            }
        }
    }

    #[test]
    fn covariance_by_shift_conjugation() {
        // H(k + γ*) restricted to the common G range equals H(k) with rows and columns relabeled.
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 4.0);
        let pot = PotentialSpec::mathieu1d(0.7);
        let k = [0.23, 0.0, 0.0];
        let h0 = assemble_fiber(&k, &b, &pot);
        let h1 = assemble_fiber(&[k[0] + 1.0, 0.0, 0.0], &b, &pot);
        let shift = b.shift_table(0, 1);
        for i in 0..b.len() {
            for j in 0..b.len() {
                if let (Some(si), Some(sj)) = (shift[i], shift[j]) {
                    assert!((h1[(i, j)] - h0[(si, sj)]).norm() < 1e-13);
                }
            }
        }
    }

    #[test]
    fn free_eigenvalues_are_sorted_kinetic_energies() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 5.0);
        let k = [0.3, 0.0, 0.0];
        let s = solve_fiber(&k, &b, &PotentialSpec::free()).unwrap();
        let mut want: Vec<f64> = b.g_cart.iter().map(|g| (g[0] + k[0]).powi(2)).collect();
        want.sort_by(f64::total_cmp);
        for (e, w) in s.eigenvalues.iter().zip(want) {
            assert!((e - w).abs() < 1e-12);
        }
    }

    #[test]
    fn time_reversal_symmetry() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 8.0);
        let pot = PotentialSpec::mathieu1d(0.5);
        let k = [0.17, 0.0, 0.0];
        let s = solve_fiber(&k, &b, &pot).unwrap();
        let t = solve_fiber(&[-0.17, 0.0, 0.0], &b, &pot).unwrap();
        for (a, bb) in s.eigenvalues.iter().zip(&t.eigenvalues) {
            assert!((a - bb).abs() < 1e-10);
        }
        // v_{-k}(G) ∝ conj(v_k(−G)) for the nondegenerate lowest band.
        let v = s.eigenvectors.column(0);
        let w = t.eigenvectors.column(0);
        let mapped: Vec<C64> = (0..b.len()).map(|i| v[b.conj_table[i]].conj()).collect();
        let overlap: C64 = mapped.iter().zip(w.iter()).map(|(x, y)| x.conj() * y).sum();
        assert!((overlap.norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn free_bands_violate_gap() {
        let lat = chain();
        let b = PlaneWaveBasis::new(&lat, 4.0);
        let g = make_kgrid(&lat, &[8]).unwrap();
        let spectra = solve_grid(&g, &b, &PotentialSpec::free()).unwrap();
        let err = validate_gap(&spectra, BandWindow::new(0, 1), 1e-8).unwrap_err();
        assert!(matches!(err, Error::GapViolation { k_index: 0, .. }));
    }

    #[test]
    fn potential_completion_and_rejection() {
        let p = PotentialSpec::new(&[([1, 0, 0], c(0.3, 0.2))]).unwrap();
        assert_eq!(p.get(&[-1, 0, 0]), c(0.3, -0.2));
        let bad = PotentialSpec::new(&[([1, 0, 0], c(0.3, 0.2)), ([-1, 0, 0], c(0.3, 0.2))]);
        assert!(matches!(bad, Err(Error::NonHermitianPotential { .. })));
    }
}
