//! Dense complex linear algebra used throughout the crate.
//!
//! Vectorization is row-major everywhere: `vec(Y)[i * cols + j] = Y[(i, j)]`,
//! so that `vec(A Y B) = (A ⊗ Bᵀ) vec(Y)`.

use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Matrix = DMatrix<C64>;
pub type Vector = DVector<C64>;

/// Matrices whose smaller side is at most this dimension are handled by a
/// dense Hermitian eigendecomposition; larger ones by power iteration.
pub const DENSE_LIMIT: usize = 64;
pub const POWER_REL_TOL: f64 = 1e-12;
pub const POWER_MAX_ITER: usize = 10_000;
const POWER_SEED: u64 = 0x09e0_5eed;

/// A finite complex matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CMat(Matrix);

impl CMat {
    pub fn new(m: Matrix) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Shape(format!(
                "matrix must have positive dimensions, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NotFinite);
        }
        Ok(Self(m))
    }

    /// Wraps a matrix produced by internal arithmetic on finite inputs.
    pub(crate) fn from_trusted(m: Matrix) -> Self {
        debug_assert!(m.iter().all(|z| z.re.is_finite() && z.im.is_finite()));
        Self(m)
    }

    pub fn from_parts(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<Self> {
        let rows = re.len();
        if rows == 0 || im.len() != rows {
            return Err(Error::Shape("re/im must have the same nonzero row count".into()));
        }
        let cols = re[0].len();
        if re.iter().chain(im.iter()).any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged re/im arrays".into()));
        }
        Self::new(Matrix::from_fn(rows, cols, |i, j| C64::new(re[i][j], im[i][j])))
    }

    pub fn identity(d: usize) -> Self {
        Self(Matrix::identity(d, d))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self(Matrix::zeros(rows, cols))
    }

    /// Matrix unit `e_{ij}` in an `rows × cols` matrix.
    pub fn unit(rows: usize, cols: usize, i: usize, j: usize) -> Self {
        let mut m = Matrix::zeros(rows, cols);
        m[(i, j)] = C64::new(1.0, 0.0);
        Self(m)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.0.nrows(), self.0.ncols())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn into_matrix(self) -> Matrix {
        self.0
    }

    pub fn real_parts(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0, |z| z.re)
    }

    pub fn imag_parts(&self) -> Vec<Vec<f64>> {
        rows_of(&self.0, |z| z.im)
    }
}

impl Deref for CMat {
    type Target = Matrix;
    fn deref(&self) -> &Matrix {
        &self.0
    }
}

fn rows_of(m: &Matrix, f: impl Fn(&C64) -> f64) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect())
        .collect()
}

#[derive(Serialize, Deserialize)]
struct ComplexArray {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

impl Serialize for CMat {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ComplexArray { re: self.real_parts(), im: self.imag_parts() }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMat {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = ComplexArray::deserialize(d)?;
        CMat::from_parts(&raw.re, &raw.im).map_err(serde::de::Error::custom)
    }
}

/// Largest singular value.
pub fn op_norm(m: &Matrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    top_singular_value(m)
}

pub fn hs_norm(m: &Matrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `Re tr(a† b)`.
pub fn re_inner(a: &Matrix, b: &Matrix) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x.conj() * y).re).sum()
}

/// `tr(a† b)`.
pub fn inner(a: &Matrix, b: &Matrix) -> C64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    a.kronecker(b)
}

pub fn trace(m: &Matrix) -> C64 {
    m.diagonal().iter().sum()
}

/// Row-major vectorization.
pub fn vec_rm(m: &Matrix) -> Vector {
    let (r, c) = m.shape();
    Vector::from_fn(r * c, |k, _| m[(k / c, k % c)])
}

pub fn unvec_rm(v: &Vector, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |i, j| v[i * cols + j])
}

pub fn hermitian_part(m: &Matrix) -> Matrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermitian_residual(m: &Matrix) -> f64 {
    hs_norm(&(m - m.adjoint()))
}

/// Eigenpairs of a Hermitian matrix sorted by decreasing eigenvalue.
pub fn hermitian_eigen(m: &Matrix) -> (Vec<f64>, Matrix) {
    let n = m.nrows();
    let eig = SymmetricEigen::new(hermitian_part(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = fix_phase(eig.eigenvectors.column(src).into_owned());
        vectors.set_column(dst, &col);
    }
    (values, vectors)
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let (vals, _) = hermitian_eigen(m);
    vals.last().copied().unwrap_or(0.0)
}

/// Rotates a vector so that its first non-negligible component is real positive.
pub fn fix_phase(mut v: Vector) -> Vector {
    let scale = v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return v;
    }
    if let Some(z) = v.iter().find(|z| z.norm() > 1e-10 * scale).copied() {
        let phase = z.conj() / z.norm();
        v.iter_mut().for_each(|x| *x *= phase);
    }
    v
}

/// `f(H)` for Hermitian `H` applied through its eigendecomposition.
pub fn hermitian_fn(m: &Matrix, f: impl Fn(f64) -> f64) -> Matrix {
    let (vals, vecs) = hermitian_eigen(m);
    let diag = Matrix::from_diagonal(&Vector::from_iterator(
        vals.len(),
        vals.iter().map(|&x| C64::new(f(x), 0.0)),
    ));
    &vecs * diag * vecs.adjoint()
}

/// Nearest PSD matrix in HS norm (negative eigenvalues clipped).
pub fn project_psd(m: &Matrix) -> Matrix {
    hermitian_fn(m, |x| x.max(0.0))
}

pub fn psd_sqrt(m: &Matrix) -> Matrix {
    hermitian_fn(m, |x| x.max(0.0).sqrt())
}

#[derive(Debug, Clone)]
pub struct SingularTriple {
    pub value: f64,
    /// Left singular vector (unit).
    pub left: Vector,
    /// Right singular vector (unit).
    pub right: Vector,
}

/// Full singular spectrum (decreasing), computed from the Gram matrix of the
/// smaller side. Left and right vectors are only meaningful for `value > 0`.
pub fn singular_spectrum(m: &Matrix) -> Vec<SingularTriple> {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Vec::new();
    }
    let gram_right = c <= r;
    let gram = if gram_right { m.adjoint() * m } else { m * m.adjoint() };
    let (vals, vecs) = hermitian_eigen(&gram);
    let top = vals.first().copied().unwrap_or(0.0).max(0.0);
    vals.iter()
        .enumerate()
        .map(|(k, &lam)| {
            let value = lam.max(0.0).sqrt();
            let v = vecs.column(k).into_owned();
            let (left, right) = if gram_right {
                let mv = m * &v;
                let n = mv.norm();
                let u = if n > 1e-300 && lam > 1e-28 * top { mv.unscale(n) } else { Vector::zeros(r) };
                (u, v)
            } else {
                let mv = m.adjoint() * &v;
                let n = mv.norm();
                let w = if n > 1e-300 && lam > 1e-28 * top { mv.unscale(n) } else { Vector::zeros(c) };
                (v, w)
            };
            SingularTriple { value, left, right }
        })
        .collect()
}

/// Largest singular triple: dense up to [`DENSE_LIMIT`], power iteration on
/// the smaller Gram side otherwise.
pub fn top_singular(m: &Matrix) -> SingularTriple {
    let (r, c) = m.shape();
    if r.min(c) <= DENSE_LIMIT {
        let mut spec = singular_spectrum(m);
        return spec.swap_remove(0);
    }
    power_top_singular(m)
}

/// `σ_max` alone, skipping singular vectors on the dense path.
pub fn top_singular_value(m: &Matrix) -> f64 {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return 0.0;
    }
    if r.min(c) > DENSE_LIMIT {
        return power_top_singular(m).value;
    }
    let gram = if c <= r { m.adjoint() * m } else { m * m.adjoint() };
    let gram = (&gram + gram.adjoint()).scale(0.5);
    gram.symmetric_eigenvalues().iter().fold(0.0f64, |a, &x| a.max(x)).sqrt()
}

/// Power iteration on `M†M` (or `MM†`, whichever is smaller) from a seeded start.
pub fn power_top_singular(m: &Matrix) -> SingularTriple {
    use rand::SeedableRng;
    let (r, c) = m.shape();
    let right_side = c <= r;
    let dim = if right_side { c } else { r };
    let mut rng = ChaCha8Rng::seed_from_u64(POWER_SEED);
    let mut x = random_vector(&mut rng, dim);
    x.unscale_mut(x.norm());
    let apply = |x: &Vector| -> Vector {
        if right_side {
            m.adjoint() * (m * x)
        } else {
            m * (m.adjoint() * x)
        }
    };
    let mut lambda = 0.0f64;
    for _ in 0..POWER_MAX_ITER {
        let y = apply(&x);
        let new_lambda = x.dotc(&y).re;
        let n = y.norm();
        if n == 0.0 {
            lambda = 0.0;
            break;
        }
        x = y.unscale(n);
        let converged = (new_lambda - lambda).abs() <= POWER_REL_TOL * new_lambda.abs();
        lambda = new_lambda;
        if converged {
            break;
        }
    }
    let x = fix_phase(x);
    let value = lambda.max(0.0).sqrt();
    let (left, right) = if right_side {
        let mv = m * &x;
        let n = mv.norm();
        (if n > 0.0 { mv.unscale(n) } else { Vector::zeros(r) }, x)
    } else {
        let mv = m.adjoint() * &x;
        let n = mv.norm();
        (x, if n > 0.0 { mv.unscale(n) } else { Vector::zeros(c) })
    };
    SingularTriple { value, left, right }
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize) -> Vector {
    Vector::from_fn(n, |_, _| gaussian(rng))
}

/// Complex Gaussian matrix with i.i.d. standard normal real and imaginary parts.
pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| gaussian(rng))
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Haar-like random unitary of size `n` (QR of a Gaussian matrix, phases fixed).
pub fn random_unitary(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let g = random_matrix(rng, n, n);
    let qr = g.qr();
    let q = qr.q();
    let r = qr.r();
    let mut out = q.clone();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..n {
            out[(i, j)] = q[(i, j)] * ph;
        }
    }
    out
}

/// Random PSD matrix `g g†` normalized to unit HS norm.
pub fn random_psd_unit(rng: &mut ChaCha8Rng, d: usize) -> Matrix {
    let g = random_matrix(rng, d, d);
    let p = &g * g.adjoint();
    let n = hs_norm(&p);
    p.unscale(n)
}

pub fn real(x: f64) -> C64 {
    C64::new(x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn op_norm_examples() {
        assert!((op_norm(&Matrix::identity(3, 3)) - 1.0).abs() < 1e-14);
        assert!((op_norm(CMat::unit(2, 2, 0, 1).matrix()) - 1.0).abs() < 1e-14);
        let d = Matrix::from_diagonal(&Vector::from_vec(vec![real(3.0), C64::new(0.0, -4.0)]));
        assert!((op_norm(&d) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn vec_convention_matches_kronecker() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_matrix(&mut rng, 2, 3);
        let y = random_matrix(&mut rng, 3, 4);
        let b = random_matrix(&mut rng, 4, 2);
        let lhs = vec_rm(&(&a * &y * &b));
        let rhs = kron(&a, &b.transpose()) * vec_rm(&y);
        assert!((lhs - rhs).norm() < 1e-12);
    }

    #[test]
    fn power_iteration_agrees_with_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = random_matrix(&mut rng, 70, 66);
        let dense = singular_spectrum(&m)[0].value;
        let power = power_top_singular(&m).value;
        assert!((dense - power).abs() < 1e-8 * dense, "{dense} vs {power}");
        let t = top_singular(&m);
        assert!(((&m * &t.right).norm() - t.value).abs() < 1e-6 * t.value);
    }

    #[test]
    fn rejects_non_finite_entries() {
        let mut m = Matrix::zeros(2, 2);
        m[(0, 1)] = C64::new(f64::NAN, 0.0);
        assert!(matches!(CMat::new(m), Err(Error::NotFinite)));
    }

    #[test]
    fn eigen_sorted_and_phase_fixed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = random_matrix(&mut rng, 4, 4);
        let h = &g * g.adjoint();
        let (vals, vecs) = hermitian_eigen(&h);
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..4 {
            let col = vecs.column(k);
            let first = col.iter().find(|z| z.norm() > 1e-10).unwrap();
            assert!(first.im.abs() < 1e-12 && first.re > 0.0);
        }
    }

    #[test]
    fn cmat_json_round_trip() {
        let m = CMat::new(Matrix::from_fn(2, 3, |i, j| C64::new(i as f64, j as f64 - 1.0))).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        let back: CMat = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
    }
}
