//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

/// Hermitian eigendecomposition with eigenvalues in ascending order.
///
/// Returns `None` when the input is not finite.
pub fn hermitian_eigh(m: &CMat) -> Option<(Vec<f64>, CMat)> {
    let n = m.nrows();
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return None;
    }
    let fm = faer::Mat::<faer::complex_native::c64>::from_fn(n, n, |i, j| {
        let z = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        faer::complex_native::c64 { re: z.re, im: z.im }
    });
    let eig = fm.selfadjoint_eigendecomposition(faer::Side::Lower);
    let s = eig.s().column_vector();
    let u = eig.u();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| s.read(a).re.total_cmp(&s.read(b).re).then(a.cmp(&b)));
    let vals = order.iter().map(|&i| s.read(i).re).collect();
    let vecs = CMat::from_fn(n, n, |i, j| {
        let z = u.read(i, order[j]);
        c(z.re, z.im)
    });
    Some((vals, vecs))
}

/// Skew-Hermitian part (A - A*)/2.
pub fn skew(a: &CMat) -> CMat {
    (a - a.adjoint()) * c(0.5, 0.0)
}

/// exp(psi) for skew-Hermitian psi, through the eigendecomposition of i*psi.
pub fn expm_skew(psi: &CMat) -> CMat {
    let h = psi * I;
    let (vals, v) = hermitian_eigh(&h).expect("eigendecomposition of a small Hermitian matrix");
    let d = DVector::from_iterator(vals.len(), vals.iter().map(|&l| cis(-l)));
    &v * CMat::from_diagonal(&d) * v.adjoint()
}

/// Löwdin orthonormalization M (M*M)^{-1/2}; also returns the smallest singular value of M.
pub fn lowdin(m: &CMat) -> (CMat, f64) {
    let gram = m.adjoint() * m;
    let (vals, v) = hermitian_eigh(&gram).expect("eigendecomposition of a Gram matrix");
    let smin = vals.first().copied().unwrap_or(0.0).max(0.0).sqrt();
    let d = DVector::from_iterator(
        vals.len(),
        vals.iter().map(|&l| c(1.0 / l.max(f64::MIN_POSITIVE).sqrt(), 0.0)),
    );
    (m * (&v * CMat::from_diagonal(&d) * v.adjoint()), smin)
}

/// Frobenius norm squared.
pub fn norm2(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Re tr(A* B).
pub fn re_inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}

/// Frobenius distance of A*A from the identity.
pub fn unitarity_error(a: &CMat) -> f64 {
    let g = a.adjoint() * a;
    (g - CMat::identity(a.ncols(), a.ncols())).norm()
}

/// Operator (spectral) norm of a Hermitian matrix.
pub fn hermitian_opnorm(a: &CMat) -> f64 {
    match hermitian_eigh(a) {
        Some((vals, _)) => vals.iter().fold(0.0_f64, |acc, v| acc.max(v.abs())),
        None => f64::INFINITY,
    }
}

/// Haar-distributed random unitary via QR of a complex Gaussian matrix.
pub fn random_unitary<R: Rng>(m: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(m, m, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    let qr = z.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..m {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
        let col = q.column(j) * ph;
        out.set_column(j, &col);
    }
    out
}

/// Random skew-Hermitian matrix with Gaussian entries.
pub fn random_skew<R: Rng>(m: usize, rng: &mut R) -> CMat {
    let z = CMat::from_fn(m, m, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)));
    skew(&z)
}
