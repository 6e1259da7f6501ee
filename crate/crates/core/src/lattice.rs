//! Bravais lattices, their duals, and Γ-centered k-grids on the Brillouin torus.

use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Cartesian vector padded with zeros beyond the lattice dimension.
pub type Vec3 = [f64; 3];

pub fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &Vec3, y: &Vec3) -> Vec3 {
    [alpha * x[0] + y[0], alpha * x[1] + y[1], alpha * x[2] + y[2]]
}

fn det(m: &[Vec3], dim: usize) -> f64 {
    match dim {
        1 => m[0][0],
        2 => m[0][0] * m[1][1] - m[0][1] * m[1][0],
        _ => {
            m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
                + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BravaisLattice {
    pub dim: usize,
    pub basis: Vec<Vec3>,
    pub dual_basis: Vec<Vec3>,
    pub cell_volume: f64,
    pub dual_cell_volume: f64,
}

/// Builds a lattice from `d` basis vectors of length `d`.
pub fn build_lattice(vectors: &[Vec<f64>]) -> Result<BravaisLattice> {
    let dim = vectors.len();
    if !(1..=3).contains(&dim) || vectors.iter().any(|v| v.len() != dim) {
        let shape: Vec<usize> = vectors.iter().map(Vec::len).collect();
        return Err(Error::BadBasisShape(format!("{dim} vectors with lengths {shape:?}")));
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::BadBasisShape("non-finite component".into()));
    }
    let basis: Vec<Vec3> = vectors
        .iter()
        .map(|v| {
            let mut out = [0.0; 3];
            out[..dim].copy_from_slice(v);
            out
        })
        .collect();
    let d = det(&basis, dim);
    let scale = basis.iter().map(norm).fold(0.0, f64::max).powi(dim as i32);
    if d.abs() < 1e-12 * scale || scale == 0.0 {
        return Err(Error::SingularBasis { det: d });
    }
    // Rows of B are basis vectors; the dual basis is 2π times the columns of B^{-1}.
    let mut dual_basis = vec![[0.0; 3]; dim];
    for (j, dual) in dual_basis.iter_mut().enumerate() {
        for i in 0..dim {
            dual[i] = TAU * cofactor(&basis, dim, j, i) / d;
        }
    }
    let dual_det = det(&dual_basis, dim);
    Ok(BravaisLattice { dim, basis, dual_basis, cell_volume: d.abs(), dual_cell_volume: dual_det.abs() })
}

/// Cofactor C_{ij} of the row-major basis matrix, i.e. (B^{-1})_{ji} · det B.
fn cofactor(m: &[Vec3], dim: usize, i: usize, j: usize) -> f64 {
    if dim == 1 {
        return 1.0;
    }
    let rows: Vec<usize> = (0..dim).filter(|&r| r != i).collect();
    let cols: Vec<usize> = (0..dim).filter(|&c| c != j).collect();
    let minor = if dim == 2 {
        m[rows[0]][cols[0]]
    } else {
        m[rows[0]][cols[0]] * m[rows[1]][cols[1]] - m[rows[0]][cols[1]] * m[rows[1]][cols[0]]
    };
    if (i + j) % 2 == 0 {
        minor
    } else {
        -minor
    }
}

impl BravaisLattice {
    /// True when the basis vectors are mutually orthogonal to relative tolerance `tol`.
    pub fn is_orthogonal(&self, tol: f64) -> bool {
        for i in 0..self.dim {
            for j in 0..i {
                let c = dot(&self.basis[i], &self.basis[j]);
                if c.abs() > tol * norm(&self.basis[i]) * norm(&self.basis[j]) {
                    return false;
                }
            }
        }
        true
    }

    /// Cartesian point Σ n_j γ_j.
    pub fn lattice_point(&self, n: &[i64]) -> Vec3 {
        let mut out = [0.0; 3];
        for (j, &nj) in n.iter().enumerate().take(self.dim) {
            out = axpy(nj as f64, &self.basis[j], &out);
        }
        out
    }

    /// Cartesian reciprocal vector Σ n_j γ*_j.
    pub fn dual_point(&self, n: &[i32]) -> Vec3 {
        let mut out = [0.0; 3];
        for (j, &nj) in n.iter().enumerate().take(self.dim) {
            out = axpy(nj as f64, &self.dual_basis[j], &out);
        }
        out
    }

    /// Fractional coordinates x·γ*_j / 2π.
    pub fn fractional(&self, x: &Vec3) -> Vec<f64> {
        self.dual_basis.iter().map(|g| dot(x, g) / TAU).collect()
    }

    /// Largest distance between two points of the fundamental cell (its diagonal).
    pub fn cell_diameter(&self) -> f64 {
        let mut best: f64 = 0.0;
        for mask in 0..(1u32 << self.dim) {
            let mut v = [0.0; 3];
            for j in 0..self.dim {
                let s = if mask & (1 << j) != 0 { 1.0 } else { -1.0 };
                v = axpy(s, &self.basis[j], &v);
            }
            best = best.max(norm(&v));
        }
        best
    }
}

/// Uniform Γ-centered grid k = Σ (n_j/N_j − 1/2) γ*_j, first index slowest.
#[derive(Debug, Clone, PartialEq)]
pub struct KGrid {
    pub dim: usize,
    pub sizes: Vec<usize>,
    pub points: Vec<Vec3>,
    pub spacing: Vec<f64>,
    pub weight: f64,
    /// Whether the underlying lattice has mutually orthogonal basis vectors.
    pub orthogonal: bool,
    /// Unit vectors along γ*_j; derivatives and center components refer to these.
    pub directions: Vec<Vec3>,
    strides: Vec<usize>,
}

pub fn make_kgrid(lat: &BravaisLattice, sizes: &[usize]) -> Result<KGrid> {
    if sizes.len() != lat.dim || sizes.iter().any(|&n| n < 2) {
        return Err(Error::InvalidGridSize { sizes: sizes.to_vec() });
    }
    Ok(KGrid::build(lat, sizes))
}

impl KGrid {
    fn build(lat: &BravaisLattice, sizes: &[usize]) -> Self {
        let dim = lat.dim;
        let mut strides = vec![1; dim];
        for j in (0..dim.saturating_sub(1)).rev() {
            strides[j] = strides[j + 1] * sizes[j + 1];
        }
        let total: usize = sizes.iter().product();
        let mut points = Vec::with_capacity(total);
        for idx in 0..total {
            let mut k = [0.0; 3];
            for j in 0..dim {
                let n = (idx / strides[j]) % sizes[j];
                let frac = if sizes[j] == 1 { 0.0 } else { n as f64 / sizes[j] as f64 - 0.5 };
                k = axpy(frac, &lat.dual_basis[j], &k);
            }
            points.push(k);
        }
        let spacing = (0..dim).map(|j| norm(&lat.dual_basis[j]) / sizes[j] as f64).collect();
        KGrid {
            dim,
            sizes: sizes.to_vec(),
            points,
            spacing,
            weight: lat.dual_cell_volume / total as f64,
            orthogonal: lat.is_orthogonal(1e-12),
            directions: lat.dual_basis.iter().map(|g| axpy(1.0 / norm(g), g, &[0.0; 3])).collect(),
            strides,
        }
    }

    /// Single-point grid holding only k = 0.
    pub fn gamma_only(lat: &BravaisLattice) -> Self {
        KGrid::build(lat, &vec![1; lat.dim])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn multi_index(&self, idx: usize) -> Vec<usize> {
        (0..self.dim).map(|j| (idx / self.strides[j]) % self.sizes[j]).collect()
    }

    pub fn flat_index(&self, n: &[usize]) -> usize {
        n.iter().zip(&self.strides).map(|(a, s)| a * s).sum()
    }

    /// Neighbor `delta` steps along direction `dir`.
    ///
    /// Returns the stored index and the number of γ*_dir shifts separating the
    /// true neighbor from the stored point: k_true = points[idx'] + wrap·γ*_dir.
    pub fn neighbor(&self, idx: usize, dir: usize, delta: i64) -> (usize, i32) {
        let n = self.sizes[dir] as i64;
        let cur = ((idx / self.strides[dir]) % self.sizes[dir]) as i64;
        let raw = cur + delta;
        let wrapped = raw.rem_euclid(n);
        let wrap = raw.div_euclid(n) as i32;
        let new_idx = idx as i64 + (wrapped - cur) * self.strides[dir] as i64;
        (new_idx as usize, wrap)
    }

    /// Index of the point whose k equals −k modulo Γ*.
    pub fn negated_index(&self, idx: usize) -> usize {
        let n = self.multi_index(idx);
        let m: Vec<usize> = n.iter().zip(&self.sizes).map(|(&a, &s)| (s - a % s) % s).collect();
        self.flat_index(&m)
    }

    pub fn total_weight(&self) -> f64 {
        self.weight * self.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn one_dimensional_dual() {
        let lat = build_lattice(&[vec![TAU]]).unwrap();
        assert!((lat.dual_basis[0][0] - 1.0).abs() < 1e-15);
        assert!((lat.cell_volume - TAU).abs() < 1e-14);
        assert!((lat.dual_cell_volume - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unit_square_dual() {
        let lat = build_lattice(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert_eq!(lat.dual_basis[0], [TAU, 0.0, 0.0]);
        assert_eq!(lat.dual_basis[1], [0.0, TAU, 0.0]);
    }

    #[test]
    fn hexagonal_dual_matches_inverse_transpose() {
        let s3 = 3f64.sqrt();
        let lat = build_lattice(&[vec![1.0, 0.0], vec![0.5, s3 / 2.0]]).unwrap();
        // Explicit 2x2 inverse-transpose of [[1, 1/2], [0, √3/2]] (columns are γ_j).
        let (a, b, c, d) = (1.0, 0.5, 0.0, s3 / 2.0);
        let det = a * d - b * c;
        let inv_t = [[d / det, -c / det], [-b / det, a / det]];
        let g1 = [TAU * inv_t[0][0], TAU * inv_t[1][0]];
        let g2 = [TAU * inv_t[0][1], TAU * inv_t[1][1]];
        for i in 0..2 {
            assert!((lat.dual_basis[0][i] - g1[i]).abs() < 1e-12);
            assert!((lat.dual_basis[1][i] - g2[i]).abs() < 1e-12);
        }
        let prod = lat.cell_volume * lat.dual_cell_volume;
        assert!((prod / (TAU * TAU) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singular_basis_rejected() {
        let err = build_lattice(&[vec![1.0, 2.0], vec![2.0, 4.0]]).unwrap_err();
        assert!(matches!(err, Error::SingularBasis { .. }));
    }

    #[test]
    fn grid_points_1d() {
        let lat = build_lattice(&[vec![TAU]]).unwrap();
        let g = make_kgrid(&lat, &[4]).unwrap();
        let ks: Vec<f64> = g.points.iter().map(|k| k[0]).collect();
        assert_eq!(ks, vec![-0.5, -0.25, 0.0, 0.25]);
    }

    #[test]
    fn weights_sum_to_dual_volume() {
        let lat = build_lattice(&[vec![1.0, 0.0], vec![0.3, 2.0]]).unwrap();
        let g = make_kgrid(&lat, &[2, 2]).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.total_weight() / lat.dual_cell_volume - 1.0).abs() < 1e-14);
    }

    #[test]
    fn wrap_flag_on_last_index() {
        let lat = build_lattice(&[vec![2.0 * PI]]).unwrap();
        let g = make_kgrid(&lat, &[64]).unwrap();
        assert_eq!(g.neighbor(63, 0, 1), (0, 1));
        assert_eq!(g.neighbor(0, 0, -1), (63, -1));
        assert_eq!(g.neighbor(10, 0, 64), (10, 1));
    }

    #[test]
    fn invalid_grid_sizes() {
        let lat = build_lattice(&[vec![1.0]]).unwrap();
        assert!(matches!(make_kgrid(&lat, &[1]), Err(Error::InvalidGridSize { .. })));
        assert!(matches!(make_kgrid(&lat, &[4, 4]), Err(Error::InvalidGridSize { .. })));
    }
}
