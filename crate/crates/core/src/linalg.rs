//! Complex vector/matrix kernels shared by all other modules.
//!
//! Conventions:
//! - The DFT is unitary (1/sqrt(M)-scaled) in both directions, so circulant
//!   covariance spectra are real nonnegative and Parseval holds without
//!   bookkeeping.
//! - A circulant matrix with spectrum `c` acts as `F^H diag(c) F` where `F`
//!   is the unitary DFT matrix with entries `exp(-j 2 pi k n / M) / sqrt(M)`.
//! - Hermitian positive semidefinite inputs are repaired with a jitter of
//!   `eps * tr(A)/M * I` (relative eps = 1e-10, escalated on failure) before
//!   factorizations are declared impossible.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};
use crate::rng::complex_standard_normal;

/// Relative jitter added to a Hermitian matrix when a factorization fails.
pub const PSD_JITTER_REL: f64 = 1e-10;
/// Relative tolerance below which negative eigenvalues are treated as
/// round-off of a PSD matrix.
pub const PSD_EIG_TOL_REL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Unitary DFT
// ---------------------------------------------------------------------------

type PlanPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

fn plan_cache() -> &'static Mutex<HashMap<usize, PlanPair>> {
    static CACHE: OnceLock<Mutex<HashMap<usize, PlanPair>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Reusable unitary DFT plan for a fixed length.
#[derive(Clone)]
pub struct UnitaryDft {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    scale: f64,
}

impl UnitaryDft {
    /// Plans (or fetches a cached plan) for the given length. Lengths that
    /// are powers of two are fastest; any length >= 1 works.
    pub fn new(len: usize) -> Self {
        assert!(len > 0, "DFT length must be positive");
        let (fwd, inv) = {
            let mut cache = plan_cache().lock().unwrap();
            cache
                .entry(len)
                .or_insert_with(|| {
                    let mut planner = FftPlanner::new();
                    (
                        planner.plan_fft(len, FftDirection::Forward),
                        planner.plan_fft(len, FftDirection::Inverse),
                    )
                })
                .clone()
        };
        Self {
            len,
            fwd,
            inv,
            scale: 1.0 / (len as f64).sqrt(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.fwd.process(buf);
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.len);
        self.inv.process(buf);
        for v in buf.iter_mut() {
            *v *= self.scale;
        }
    }

    pub fn forward(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        self.forward_in_place(&mut buf);
        buf
    }

    pub fn inverse(&self, v: &[Complex64]) -> Vec<Complex64> {
        let mut buf = v.to_vec();
        self.inverse_in_place(&mut buf);
        buf
    }
}

/// Unitary DFT (or inverse DFT) of a complex vector.
pub fn unitary_dft(v: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
    if v.is_empty() {
        return Err(Error::EmptyVector);
    }
    let plan = UnitaryDft::new(v.len());
    Ok(if inverse {
        plan.inverse(v)
    } else {
        plan.forward(v)
    })
}

// ---------------------------------------------------------------------------
// Circulant spectra
// ---------------------------------------------------------------------------

/// Per-Fourier-bin variances of a circulant covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CirculantSpectrum {
    eigenvalues: Vec<f64>,
}

impl CirculantSpectrum {
    /// Wraps a nonnegative spectrum. Tiny negative round-off (within
    /// `PSD_EIG_TOL_REL` of the largest eigenvalue) is clamped to zero.
    pub fn new(eigenvalues: Vec<f64>) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::EmptyVector);
        }
        let max = eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let tol = PSD_EIG_TOL_REL * max.max(1e-300);
        let mut eigenvalues = eigenvalues;
        for e in eigenvalues.iter_mut() {
            if !e.is_finite() {
                return Err(Error::NonFinite {
                    context: "circulant spectrum".into(),
                });
            }
            if *e < 0.0 {
                if *e < -tol {
                    return Err(Error::IndefiniteCovariance { min_eigenvalue: *e });
                }
                *e = 0.0;
            }
        }
        Ok(Self { eigenvalues })
    }

    pub fn constant(value: f64, len: usize) -> Result<Self> {
        Self::new(vec![value; len])
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    /// Dense matrix `F^H diag(c) F`.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let m = self.len();
        let mut a = DMatrix::zeros(m, m);
        // C[p, q] = (1/M) sum_k c_k exp(j 2 pi k (p - q) / M)
        for p in 0..m {
            for q in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for (k, &c) in self.eigenvalues.iter().enumerate() {
                    let ang = 2.0
                        * std::f64::consts::PI
                        * (k as f64)
                        * ((p as f64 - q as f64) / m as f64);
                    acc += c * Complex64::new(ang.cos(), ang.sin());
                }
                a[(p, q)] = acc / m as f64;
            }
        }
        a
    }
}

/// Applies `F^H diag(c) F` (or its inverse when `invert`) to a vector.
pub fn circulant_apply(
    c: &CirculantSpectrum,
    v: &[Complex64],
    invert: bool,
) -> Result<Vec<Complex64>> {
    if v.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: c.len(),
            got: v.len(),
        });
    }
    if invert && c.eigenvalues.iter().any(|&e| e <= 0.0) {
        return Err(Error::SingularSpectrum);
    }
    let plan = UnitaryDft::new(v.len());
    let mut buf = v.to_vec();
    plan.forward_in_place(&mut buf);
    for (x, &e) in buf.iter_mut().zip(&c.eigenvalues) {
        if invert {
            *x /= e;
        } else {
            *x *= e;
        }
    }
    plan.inverse_in_place(&mut buf);
    Ok(buf)
}

// ---------------------------------------------------------------------------
// Toeplitz first rows
// ---------------------------------------------------------------------------

/// Hermitian Toeplitz matrix stored as its first row; `row[0]` is real.
#[derive(Debug, Clone, PartialEq)]
pub struct ToeplitzFirstRow {
    row: Vec<Complex64>,
}

impl ToeplitzFirstRow {
    pub fn new(mut row: Vec<Complex64>) -> Result<Self> {
        if row.is_empty() {
            return Err(Error::EmptyVector);
        }
        if row.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite {
                context: "Toeplitz first row".into(),
            });
        }
        // lag-0 auto-covariance is real by definition
        if row[0].im.abs() > 1e-9 * row[0].re.abs().max(1.0) {
            return Err(Error::NotHermitian {
                asymmetry: row[0].im.abs(),
            });
        }
        row[0] = Complex64::new(row[0].re, 0.0);
        Ok(Self { row })
    }

    pub fn row(&self) -> &[Complex64] {
        &self.row
    }

    pub fn len(&self) -> usize {
        self.row.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row.is_empty()
    }

    /// Per-antenna power, i.e. trace / M.
    pub fn lag0(&self) -> f64 {
        self.row[0].re
    }

    /// Dense Hermitian Toeplitz matrix with this first row.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let m = self.len();
        DMatrix::from_fn(m, m, |p, q| {
            if q >= p {
                self.row[q - p]
            } else {
                self.row[p - q].conj()
            }
        })
    }

    /// Uniformly rescales the implied matrix by `s`.
    pub fn scale(&mut self, s: f64) {
        for z in self.row.iter_mut() {
            *z *= s;
        }
    }
}

// ---------------------------------------------------------------------------
// Hermitian PSD solves
// ---------------------------------------------------------------------------

/// Largest elementwise deviation of `a` from its conjugate transpose.
pub fn hermitian_asymmetry(a: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for p in 0..a.nrows() {
        for q in p..a.ncols() {
            let d = a[(p, q)] - a[(q, p)].conj();
            worst = worst.max(d.norm());
        }
    }
    worst
}

fn mean_diagonal(a: &DMatrix<Complex64>) -> f64 {
    let m = a.nrows();
    (0..m).map(|i| a[(i, i)].re).sum::<f64>() / m as f64
}

fn check_hermitian(a: &DMatrix<Complex64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    let scale = a.iter().map(|z| z.norm()).fold(1.0f64, f64::max);
    let asym = hermitian_asymmetry(a);
    if asym > 1e-10 * scale {
        return Err(Error::NotHermitian { asymmetry: asym });
    }
    Ok(())
}

/// Hermitian Cholesky factorization with an explicit positivity check on the
/// pivots. nalgebra's complex Cholesky takes complex square roots of
/// non-positive pivots instead of failing, so covariance work needs this
/// guarded variant.
pub struct HermitianCholesky {
    l: DMatrix<Complex64>,
}

impl HermitianCholesky {
    /// Factors a Hermitian matrix as `L L^H`; `None` if any pivot is not
    /// strictly positive (relative to the mean diagonal).
    pub fn factor(a: &DMatrix<Complex64>) -> Option<Self> {
        let n = a.nrows();
        let scale = mean_diagonal(a).abs().max(f64::MIN_POSITIVE);
        let mut l = a.lower_triangle();
        for j in 0..n {
            let mut d = l[(j, j)].re;
            for k in 0..j {
                d -= l[(j, k)].norm_sqr();
            }
            if !(d.is_finite() && d > 1e-14 * scale) {
                return None;
            }
            let dj = d.sqrt();
            l[(j, j)] = Complex64::new(dj, 0.0);
            for i in j + 1..n {
                let mut s = l[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)].conj();
                }
                l[(i, j)] = s / dj;
            }
        }
        Some(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// The lower-triangular factor.
    pub fn l(&self) -> &DMatrix<Complex64> {
        &self.l
    }

    /// Solves `L L^H x = b` in place.
    #[allow(clippy::needless_range_loop)]
    pub fn solve_in_place(&self, x: &mut [Complex64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= self.l[(i, k)] * x[k];
            }
            x[i] = s / self.l[(i, i)].re;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in i + 1..n {
                s -= self.l[(k, i)].conj() * x[k];
            }
            x[i] = s / self.l[(i, i)].re;
        }
    }

    pub fn solve_vector(&self, b: &DVector<Complex64>) -> DVector<Complex64> {
        let mut x = b.clone();
        self.solve_in_place(x.as_mut_slice());
        x
    }

    pub fn solve_matrix(&self, b: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let mut x = b.clone();
        for mut col in x.column_iter_mut() {
            let mut buf: Vec<Complex64> = col.iter().cloned().collect();
            self.solve_in_place(&mut buf);
            for (dst, src) in col.iter_mut().zip(&buf) {
                *dst = *src;
            }
        }
        x
    }
}

/// Escalating jitter schedule relative to the mean diagonal.
const JITTER_STEPS: [f64; 5] = [0.0, PSD_JITTER_REL, 1e-8, 1e-6, 1e-4];

fn cholesky_with_jitter(a: &DMatrix<Complex64>) -> Option<(HermitianCholesky, f64)> {
    let mean_diag = mean_diagonal(a).abs().max(f64::MIN_POSITIVE);
    for &eps in &JITTER_STEPS {
        let jitter = eps * mean_diag;
        let candidate = if jitter == 0.0 {
            a.clone()
        } else {
            let mut aj = a.clone();
            for i in 0..aj.nrows() {
                aj[(i, i)] += Complex64::new(jitter, 0.0);
            }
            aj
        };
        if let Some(chol) = HermitianCholesky::factor(&candidate) {
            return Some((chol, jitter));
        }
    }
    None
}

/// Solves `A x = b` for Hermitian PSD `A`, adding relative jitter if the
/// factorization fails. Two iterative-refinement sweeps keep the residual of
/// the solved (possibly jittered) system below `1e-8 ||b||`.
pub fn hermitian_solve(a: &DMatrix<Complex64>, b: &[Complex64]) -> Result<Vec<Complex64>> {
    check_hermitian(a)?;
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    let bv = DVector::from_column_slice(b);
    let (chol, jitter) = cholesky_with_jitter(a).ok_or(Error::IndefiniteCovariance {
        min_eigenvalue: f64::NAN,
    })?;
    let solved = |x: &DVector<Complex64>| -> DVector<Complex64> {
        let mut ax = a * x;
        if jitter != 0.0 {
            ax += x * Complex64::new(jitter, 0.0);
        }
        ax
    };
    let mut x = chol.solve_vector(&bv);
    for _ in 0..2 {
        let r = &bv - solved(&x);
        x += chol.solve_vector(&r);
    }
    let bnorm = bv.norm();
    let rnorm = (&bv - solved(&x)).norm();
    if rnorm > 1e-8 * bnorm.max(f64::MIN_POSITIVE) || !rnorm.is_finite() {
        return Err(Error::IndefiniteCovariance {
            min_eigenvalue: f64::NAN,
        });
    }
    Ok(x.as_slice().to_vec())
}

/// Matrix-valued variant of [`hermitian_solve`]: returns `A^{-1} B`.
pub fn hermitian_solve_matrix(
    a: &DMatrix<Complex64>,
    b: &DMatrix<Complex64>,
) -> Result<DMatrix<Complex64>> {
    check_hermitian(a)?;
    if b.nrows() != a.nrows() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            got: b.nrows(),
        });
    }
    let (chol, jitter) = cholesky_with_jitter(a).ok_or(Error::IndefiniteCovariance {
        min_eigenvalue: f64::NAN,
    })?;
    let mut x = chol.solve_matrix(b);
    for _ in 0..2 {
        let mut r = b - a * &x;
        if jitter != 0.0 {
            r -= &x * Complex64::new(jitter, 0.0);
        }
        x += chol.solve_matrix(&r);
    }
    Ok(x)
}

/// Hermitian square-root-style factor `A` with `A A^H = C` for PSD `C`.
/// Cholesky when possible, eigen-decomposition with eigenvalue clamping as
/// fallback; rejects matrices indefinite beyond `PSD_EIG_TOL_REL`.
pub fn psd_factor(c: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    check_hermitian(c)?;
    let mean_diag = mean_diagonal(c).abs();
    if mean_diag == 0.0 && c.iter().all(|z| z.norm() == 0.0) {
        return Ok(DMatrix::zeros(c.nrows(), c.ncols()));
    }
    if let Some(chol) = HermitianCholesky::factor(c) {
        return Ok(chol.l);
    }
    let jitter = PSD_JITTER_REL * mean_diag;
    let mut cj = c.clone();
    for i in 0..cj.nrows() {
        cj[(i, i)] += Complex64::new(jitter, 0.0);
    }
    if let Some(chol) = HermitianCholesky::factor(&cj) {
        return Ok(chol.l);
    }
    let eig = cj.symmetric_eigen();
    let scale = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::MIN_POSITIVE, f64::max);
    let min_eig = eig
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    if min_eig < -PSD_EIG_TOL_REL * scale {
        return Err(Error::IndefiniteCovariance {
            min_eigenvalue: min_eig,
        });
    }
    let mut factor = eig.eigenvectors;
    for (j, &lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        for i in 0..factor.nrows() {
            factor[(i, j)] *= s;
        }
    }
    Ok(factor)
}

// ---------------------------------------------------------------------------
// Correlated complex Gaussian sampling
// ---------------------------------------------------------------------------

/// Covariance accepted by [`GaussianSampler`].
#[derive(Debug, Clone)]
pub enum CovarianceModel {
    Toeplitz(ToeplitzFirstRow),
    Circulant(CirculantSpectrum),
}

enum SamplerFactor {
    /// Dense factor `A` with `A A^H = C`.
    Dense(DMatrix<Complex64>),
    /// Spectrum square roots applied in the Fourier domain.
    Spectrum {
        sqrt_eigs: Vec<f64>,
        plan: UnitaryDft,
    },
}

/// Draws `h ~ CN(0, C)` via a Hermitian square-root factor. Circularly
/// symmetric: real and imaginary parts each carry half the variance.
pub struct GaussianSampler {
    dim: usize,
    factor: SamplerFactor,
}

impl GaussianSampler {
    pub fn new(cov: &CovarianceModel) -> Result<Self> {
        match cov {
            CovarianceModel::Toeplitz(row) => Self::from_toeplitz(row),
            CovarianceModel::Circulant(spec) => Self::from_circulant(spec),
        }
    }

    pub fn from_toeplitz(row: &ToeplitzFirstRow) -> Result<Self> {
        let factor = psd_factor(&row.to_dense())?;
        Ok(Self {
            dim: row.len(),
            factor: SamplerFactor::Dense(factor),
        })
    }

    pub fn from_circulant(spec: &CirculantSpectrum) -> Result<Self> {
        Ok(Self {
            dim: spec.len(),
            factor: SamplerFactor::Spectrum {
                sqrt_eigs: spec.eigenvalues().iter().map(|&e| e.sqrt()).collect(),
                plan: UnitaryDft::new(spec.len()),
            },
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<Complex64> {
        let mut xi: Vec<Complex64> = (0..self.dim)
            .map(|_| complex_standard_normal(rng))
            .collect();
        match &self.factor {
            SamplerFactor::Dense(a) => {
                let v = a * DVector::from_column_slice(&xi);
                v.as_slice().to_vec()
            }
            SamplerFactor::Spectrum { sqrt_eigs, plan } => {
                for (z, &s) in xi.iter_mut().zip(sqrt_eigs) {
                    *z *= s;
                }
                plan.inverse_in_place(&mut xi);
                xi
            }
        }
    }
}

/// Draws `count` vectors from `CN(0, C)`.
pub fn sample_complex_gaussian<R: Rng + ?Sized>(
    cov: &CovarianceModel,
    count: usize,
    rng: &mut R,
) -> Result<Vec<Vec<Complex64>>> {
    let sampler = GaussianSampler::new(cov)?;
    Ok((0..count).map(|_| sampler.sample(rng)).collect())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;

    fn norm2(v: &[Complex64]) -> f64 {
        v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    fn random_vec(rng: &mut impl Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| complex_standard_normal(rng)).collect()
    }

    /// Independent elimination-based solver used as the oracle for
    /// `hermitian_solve` (partial-pivot Gaussian elimination, no shared code
    /// with the production path).
    fn solve_by_elimination(a: &DMatrix<Complex64>, b: &[Complex64]) -> Vec<Complex64> {
        let n = a.nrows();
        let mut m = a.clone();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[(i, col)].norm().total_cmp(&m[(j, col)].norm()))
                .unwrap();
            if piv != col {
                m.swap_rows(piv, col);
                x.swap(piv, col);
            }
            let d = m[(col, col)];
            for r in col + 1..n {
                let f = m[(r, col)] / d;
                for c in col..n {
                    let v = m[(col, c)];
                    m[(r, c)] -= f * v;
                }
                let xc = x[col];
                x[r] -= f * xc;
            }
        }
        for col in (0..n).rev() {
            let mut acc = x[col];
            for c in col + 1..n {
                acc -= m[(col, c)] * x[c];
            }
            x[col] = acc / m[(col, col)];
        }
        x
    }

    fn random_psd(rng: &mut impl Rng, n: usize) -> DMatrix<Complex64> {
        let b = DMatrix::from_fn(n, n, |_, _| complex_standard_normal(rng));
        let mut a = &b * b.adjoint();
        for i in 0..n {
            a[(i, i)] += Complex64::new(0.1, 0.0);
        }
        // exact Hermitian symmetrization of round-off
        let at = a.adjoint();
        (a + at) * Complex64::new(0.5, 0.0)
    }

    #[test]
    fn dft_of_impulse_is_flat() {
        let v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let out = unitary_dft(&v, false).unwrap();
        for z in out {
            assert!((z - Complex64::new(0.5, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_round_trip() {
        let mut rng = stream_rng(1, 0);
        let v = random_vec(&mut rng, 8);
        let back = unitary_dft(&unitary_dft(&v, false).unwrap(), true).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn dft_rejects_empty() {
        assert!(matches!(unitary_dft(&[], false), Err(Error::EmptyVector)));
    }

    #[test]
    fn dft_handles_non_power_of_two() {
        let mut rng = stream_rng(2, 0);
        let v = random_vec(&mut rng, 12);
        let f = unitary_dft(&v, false).unwrap();
        assert!((norm2(&f) - norm2(&v)).abs() < 1e-12);
        let back = unitary_dft(&f, true).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn circulant_identity_spectrum_is_identity() {
        let mut rng = stream_rng(3, 0);
        let v = random_vec(&mut rng, 8);
        let c = CirculantSpectrum::constant(1.0, 8).unwrap();
        let out = circulant_apply(&c, &v, false).unwrap();
        for (a, b) in v.iter().zip(&out) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn circulant_apply_then_invert() {
        let mut rng = stream_rng(4, 0);
        let v = random_vec(&mut rng, 8);
        let eigs: Vec<f64> = (0..8).map(|_| 0.2 + rng.random::<f64>()).collect();
        let c = CirculantSpectrum::new(eigs).unwrap();
        let fwd = circulant_apply(&c, &v, false).unwrap();
        let back = circulant_apply(&c, &fwd, true).unwrap();
        for (a, b) in v.iter().zip(&back) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn circulant_invert_rejects_zero_eigenvalue() {
        let c = CirculantSpectrum::new(vec![1.0, 0.0, 1.0, 1.0]).unwrap();
        let v = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            circulant_apply(&c, &v, true),
            Err(Error::SingularSpectrum)
        ));
    }

    #[test]
    fn circulant_rejects_length_mismatch() {
        let c = CirculantSpectrum::constant(1.0, 4).unwrap();
        let v = vec![Complex64::new(1.0, 0.0); 5];
        assert!(matches!(
            circulant_apply(&c, &v, false),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn circulant_matches_dense_oracle_m4() {
        let mut rng = stream_rng(5, 0);
        let eigs: Vec<f64> = (0..4).map(|_| rng.random::<f64>() + 0.1).collect();
        let c = CirculantSpectrum::new(eigs).unwrap();
        let v = random_vec(&mut rng, 4);
        let fast = circulant_apply(&c, &v, false).unwrap();
        let dense = c.to_dense() * DVector::from_column_slice(&v);
        for (a, b) in fast.iter().zip(dense.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn prop_dft_preserves_norm(seed in 0u64..1000, len in 1usize..33) {
            let mut rng = stream_rng(seed, 90);
            let v = random_vec(&mut rng, len);
            let f = unitary_dft(&v, false).unwrap();
            prop_assert!((norm2(&f) - norm2(&v)).abs() <= 1e-12 * norm2(&v).max(1.0));
        }

        #[test]
        fn prop_circulant_equals_dense(seed in 0u64..500, len in 1usize..17) {
            let mut rng = stream_rng(seed, 91);
            let eigs: Vec<f64> = (0..len).map(|_| rng.random::<f64>()).collect();
            let c = CirculantSpectrum::new(eigs).unwrap();
            let v = random_vec(&mut rng, len);
            let fast = circulant_apply(&c, &v, false).unwrap();
            let dense = c.to_dense() * DVector::from_column_slice(&v);
            for (a, b) in fast.iter().zip(dense.iter()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }

        #[test]
        fn prop_hermitian_solve_residual(seed in 0u64..200, n in 2usize..9) {
            let mut rng = stream_rng(seed, 92);
            let a = random_psd(&mut rng, n);
            let b = random_vec(&mut rng, n);
            let x = hermitian_solve(&a, &b).unwrap();
            let r = DVector::from_column_slice(&b) - &a * DVector::from_column_slice(&x);
            prop_assert!(r.norm() <= 1e-8 * norm2(&b));
        }
    }

    #[test]
    fn solve_identity_and_scaled_identity() {
        let mut rng = stream_rng(6, 0);
        let b = random_vec(&mut rng, 5);
        let eye = DMatrix::from_diagonal_element(5, 5, Complex64::new(1.0, 0.0));
        let x = hermitian_solve(&eye, &b).unwrap();
        for (a, bb) in x.iter().zip(&b) {
            assert!((a - bb).norm() < 1e-12);
        }
        let two = DMatrix::from_diagonal_element(5, 5, Complex64::new(2.0, 0.0));
        let x = hermitian_solve(&two, &b).unwrap();
        for (a, bb) in x.iter().zip(&b) {
            assert!((a - bb / 2.0).norm() < 1e-12);
        }
    }

    #[test]
    fn solve_matches_elimination_oracle() {
        let mut rng = stream_rng(7, 0);
        for _ in 0..20 {
            let a = random_psd(&mut rng, 6);
            let b = random_vec(&mut rng, 6);
            let x = hermitian_solve(&a, &b).unwrap();
            let x_ref = solve_by_elimination(&a, &b);
            let scale = norm2(&x_ref).max(1.0);
            for (p, q) in x.iter().zip(&x_ref) {
                assert!((p - q).norm() < 1e-8 * scale);
            }
        }
    }

    #[test]
    fn solve_rejects_non_hermitian() {
        let mut a = DMatrix::from_diagonal_element(3, 3, Complex64::new(1.0, 0.0));
        a[(0, 1)] = Complex64::new(0.5, 0.0);
        let b = vec![Complex64::new(1.0, 0.0); 3];
        assert!(matches!(
            hermitian_solve(&a, &b),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn solve_rejects_dimension_mismatch() {
        let a = DMatrix::from_diagonal_element(3, 3, Complex64::new(1.0, 0.0));
        let b = vec![Complex64::new(1.0, 0.0); 4];
        assert!(matches!(
            hermitian_solve(&a, &b),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn solve_near_singular_uses_jitter() {
        // rank-1 PSD matrix: plain Cholesky fails, jitter must save it
        let v = DVector::from_column_slice(&[
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, -0.5),
            Complex64::new(-0.25, 0.1),
        ]);
        let a = &v * v.adjoint();
        let b: Vec<Complex64> = (&v * Complex64::new(2.0, 0.0)).as_slice().to_vec();
        let x = hermitian_solve(&a, &b).unwrap();
        assert!(x.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
    }

    #[test]
    fn sampler_zero_covariance_gives_zeros() {
        let row = ToeplitzFirstRow::new(vec![Complex64::new(0.0, 0.0); 4]).unwrap();
        let mut rng = stream_rng(8, 0);
        let draws = sample_complex_gaussian(&CovarianceModel::Toeplitz(row), 10, &mut rng).unwrap();
        for d in draws {
            assert!(d.iter().all(|z| z.norm() == 0.0));
        }
    }

    #[test]
    fn sampler_identity_variance() {
        let row = ToeplitzFirstRow::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ])
        .unwrap();
        let mut rng = stream_rng(9, 0);
        let sampler = GaussianSampler::from_toeplitz(&row).unwrap();
        let n = 100_000;
        let mut var = [0.0f64; 4];
        for _ in 0..n {
            let h = sampler.sample(&mut rng);
            for (v, z) in var.iter_mut().zip(&h) {
                *v += z.norm_sqr();
            }
        }
        for v in var {
            let v = v / n as f64;
            assert!((0.98..=1.02).contains(&v), "per-antenna variance {v}");
        }
    }

    #[test]
    fn sampler_matches_toeplitz_covariance() {
        let row = ToeplitzFirstRow::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.4, 0.3),
            Complex64::new(-0.1, 0.2),
            Complex64::new(0.05, -0.1),
        ])
        .unwrap();
        let c = row.to_dense();
        let mut rng = stream_rng(10, 0);
        let sampler = GaussianSampler::from_toeplitz(&row).unwrap();
        let n = 200_000;
        let mut acc = DMatrix::<Complex64>::zeros(4, 4);
        for _ in 0..n {
            let h = DVector::from_column_slice(&sampler.sample(&mut rng));
            acc += &h * h.adjoint();
        }
        acc /= Complex64::new(n as f64, 0.0);
        let diff = (&acc - &c).norm();
        assert!(diff <= 0.02 * c.norm(), "Frobenius deviation {diff}");
    }

    #[test]
    fn sampler_is_seed_reproducible() {
        let row = ToeplitzFirstRow::new(vec![Complex64::new(1.0, 0.0), Complex64::new(0.2, 0.1)])
            .unwrap();
        let sampler = GaussianSampler::from_toeplitz(&row).unwrap();
        let a = sampler.sample(&mut stream_rng(123, 5));
        let b = sampler.sample(&mut stream_rng(123, 5));
        assert_eq!(a, b);
    }

    #[test]
    fn circulant_sampler_matches_spectrum() {
        let spec = CirculantSpectrum::new(vec![2.0, 1.0, 0.5, 0.5]).unwrap();
        let c = spec.to_dense();
        let mut rng = stream_rng(12, 0);
        let sampler = GaussianSampler::from_circulant(&spec).unwrap();
        let n = 200_000;
        let mut acc = DMatrix::<Complex64>::zeros(4, 4);
        for _ in 0..n {
            let h = DVector::from_column_slice(&sampler.sample(&mut rng));
            acc += &h * h.adjoint();
        }
        acc /= Complex64::new(n as f64, 0.0);
        assert!((&acc - &c).norm() <= 0.02 * c.norm());
    }

    #[test]
    fn indefinite_covariance_is_rejected() {
        let row = ToeplitzFirstRow::new(vec![Complex64::new(1.0, 0.0), Complex64::new(2.0, 0.0)])
            .unwrap();
        assert!(matches!(
            GaussianSampler::from_toeplitz(&row),
            Err(Error::IndefiniteCovariance { .. })
        ));
    }
}
