//! Dense symmetric matrices, cyclic Jacobi eigendecomposition and the
//! projection onto the PSD cone.

use thiserror::Error;

use crate::scalar::Real;

/// Maximum number of full Jacobi sweeps before giving up.
pub const MAX_SWEEPS: usize = 64;

/// Relative off-diagonal threshold: a sweep stops once every off-diagonal
/// magnitude is at most this times the Frobenius norm of the input.
pub const JACOBI_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix has non-finite entries")]
    NonFinite,
    #[error(
        "Jacobi iteration did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})"
    )]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
}

/// Symmetric `n x n` matrix stored densely in row-major order.
///
/// Every write goes through [`SymMatrix::set`], which mirrors the value, so
/// `get(i, j) == get(j, i)` holds exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> SymMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_diag(d: &[T]) -> Self {
        let mut m = Self::zeros(d.len());
        for (i, &v) in d.iter().enumerate() {
            m.set(i, i, v);
        }
        m
    }

    /// Builds a matrix from a function evaluated on the upper triangle `i <= j`.
    pub fn from_upper(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in i..n {
                m.set(i, j, f(i, j));
            }
        }
        m
    }

    /// Symmetrizes an arbitrary row-major square matrix as `(A + A^T) / 2`.
    pub fn from_row_major_symmetrized(n: usize, a: &[T]) -> Self {
        assert_eq!(a.len(), n * n);
        let half = T::of(0.5);
        Self::from_upper(n, |i, j| {
            if i == j {
                a[i * n + i]
            } else {
                (a[i * n + j] + a[j * n + i]) * half
            }
        })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.n + j] = v;
        self.data[j * self.n + i] = v;
    }

    /// Row-major view of all `n^2` entries.
    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn diag(&self) -> Vec<T> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn frobenius_norm(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            n: self.n,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        Self {
            n: self.n,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        }
    }

    /// Adds `d_i` to each diagonal entry.
    pub fn add_diag(&self, d: &[T]) -> Self {
        assert_eq!(self.n, d.len());
        let mut m = self.clone();
        for (i, &v) in d.iter().enumerate() {
            let cur = m.get(i, i);
            m.set(i, i, cur + v);
        }
        m
    }

    pub fn cast<U: Real>(&self) -> SymMatrix<U> {
        SymMatrix {
            n: self.n,
            data: self.data.iter().map(|v| U::of(v.to_f64_lossy())).collect(),
        }
    }
}

/// Eigenpairs of a symmetric matrix, values ascending.
#[derive(Debug, Clone)]
pub struct EigenDecomposition<T> {
    pub values: Vec<T>,
    /// Row-major `n x n`; column `k` is the eigenvector of `values[k]`.
    pub vectors: Vec<T>,
}

impl<T: Real> EigenDecomposition<T> {
    pub fn n(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn component(&self, i: usize, k: usize) -> T {
        self.vectors[i * self.values.len() + k]
    }

    pub fn vector(&self, k: usize) -> Vec<T> {
        (0..self.n()).map(|i| self.component(i, k)).collect()
    }

    /// Rebuilds `sum_k f(lambda_k) v_k v_k^T`, skipping terms where `f` is zero.
    pub fn reconstruct_with(&self, f: impl Fn(T) -> T) -> SymMatrix<T> {
        let n = self.n();
        let weights: Vec<(usize, T)> = self
            .values
            .iter()
            .enumerate()
            .map(|(k, &l)| (k, f(l)))
            .filter(|(_, w)| *w != T::zero())
            .collect();
        SymMatrix::from_upper(n, |i, j| {
            weights
                .iter()
                .map(|&(k, w)| w * self.component(i, k) * self.component(j, k))
                .sum()
        })
    }
}

/// Tolerance factor actually used for type `T` (never below a few ulps).
pub fn jacobi_tol<T: Real>() -> T {
    T::of(JACOBI_TOL).max(T::epsilon() * T::of(8.0))
}

/// Full eigendecomposition by cyclic Jacobi rotations.
pub fn sym_eigen<T: Real>(m: &SymMatrix<T>) -> Result<EigenDecomposition<T>, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.n();
    let mut v = vec![T::zero(); n * n];
    for i in 0..n {
        v[i * n + i] = T::one();
    }
    jacobi(m.data.clone(), v, n, jacobi_tol::<T>() * m.frobenius_norm())
}

/// Jacobi started from an orthonormal `basis` (row-major, columns are basis
/// vectors) that approximately diagonalizes `m`, e.g. the eigenvectors of a
/// nearby matrix. Same result contract as [`sym_eigen`].
pub fn sym_eigen_warm<T: Real>(
    m: &SymMatrix<T>,
    basis: &[T],
) -> Result<EigenDecomposition<T>, LinalgError> {
    if !m.is_finite() {
        return Err(LinalgError::NonFinite);
    }
    let n = m.n();
    if basis.len() != n * n {
        return Err(LinalgError::DimensionMismatch(n * n, basis.len()));
    }
    // B = V^T M V
    let mut mv = vec![T::zero(); n * n];
    for i in 0..n {
        let row = m.row(i);
        for (k, &mik) in row.iter().enumerate() {
            if mik == T::zero() {
                continue;
            }
            let brow = &basis[k * n..(k + 1) * n];
            let out = &mut mv[i * n..(i + 1) * n];
            for (o, &b) in out.iter_mut().zip(brow) {
                *o += mik * b;
            }
        }
    }
    let mut b = vec![T::zero(); n * n];
    for k in 0..n {
        let vrow = &basis[k * n..(k + 1) * n];
        let mvrow = &mv[k * n..(k + 1) * n];
        for p in 0..n {
            let vkp = vrow[p];
            if vkp == T::zero() {
                continue;
            }
            let out = &mut b[p * n..(p + 1) * n];
            for (o, &x) in out.iter_mut().zip(mvrow) {
                *o += vkp * x;
            }
        }
    }
    for p in 0..n {
        for q in p + 1..n {
            let avg = (b[p * n + q] + b[q * n + p]) * T::of(0.5);
            b[p * n + q] = avg;
            b[q * n + p] = avg;
        }
    }
    jacobi(b, basis.to_vec(), n, jacobi_tol::<T>() * m.frobenius_norm())
}

fn jacobi<T: Real>(
    mut a: Vec<T>,
    mut v: Vec<T>,
    n: usize,
    threshold: T,
) -> Result<EigenDecomposition<T>, LinalgError> {
    let max_off = |a: &[T]| {
        let mut off = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off = off.max(a[p * n + q].abs());
            }
        }
        off
    };

    let mut converged = false;
    for _ in 0..MAX_SWEEPS {
        if max_off(&a) <= threshold {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == T::zero() {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = {
                    let t = T::one() / (theta.abs() + theta.hypot(T::one()));
                    if theta < T::zero() {
                        -t
                    } else {
                        t
                    }
                };
                let c = T::one() / t.hypot(T::one());
                let s = t * c;
                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = T::zero();
                a[q * n + p] = T::zero();
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[k * n + p] = np;
                    a[p * n + k] = np;
                    a[k * n + q] = nq;
                    a[q * n + k] = nq;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && max_off(&a) > threshold {
        let mut off_norm = T::zero();
        for p in 0..n {
            for q in p + 1..n {
                off_norm += a[p * n + q] * a[p * n + q];
            }
        }
        return Err(LinalgError::NoConvergence {
            sweeps: MAX_SWEEPS,
            off_norm: (off_norm * T::of(2.0)).sqrt().to_f64_lossy(),
        });
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(LinalgError::NonFinite);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[x * n + x].partial_cmp(&a[y * n + y]).unwrap());
    let values = order.iter().map(|&k| a[k * n + k]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + dst] = v[i * n + src];
        }
    }
    Ok(EigenDecomposition { values, vectors })
}

pub fn lambda_min<T: Real>(m: &SymMatrix<T>) -> Result<T, LinalgError> {
    let eig = sym_eigen(m)?;
    Ok(eig.values.first().copied().unwrap_or_else(T::zero))
}

/// Frobenius-nearest PSD matrix: negative eigenvalues clamped to zero.
pub fn psd_project<T: Real>(m: &SymMatrix<T>) -> Result<SymMatrix<T>, LinalgError> {
    let eig = sym_eigen(m)?;
    Ok(eig.reconstruct_with(|l| l.max(T::zero())))
}

/// Frobenius inner product.
pub fn inner<T: Real>(a: &SymMatrix<T>, b: &SymMatrix<T>) -> Result<T, LinalgError> {
    if a.n() != b.n() {
        return Err(LinalgError::DimensionMismatch(a.n(), b.n()));
    }
    Ok(a.data.iter().zip(&b.data).map(|(&x, &y)| x * y).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn diagonal_input_sorts_values() {
        let m = SymMatrix::from_diag(&[3.0, -1.0]);
        let e = sym_eigen(&m).unwrap();
        assert_eq!(e.values, vec![-1.0, 3.0]);
        assert_eq!(
            e.vector(0)
                .iter()
                .map(|v: &f64| v.abs())
                .collect::<Vec<_>>(),
            vec![0.0, 1.0]
        );
        assert_eq!(
            e.vector(1)
                .iter()
                .map(|v: &f64| v.abs())
                .collect::<Vec<_>>(),
            vec![1.0, 0.0]
        );
    }

    #[test]
    fn k2_and_triangle_laplacian_spectra() {
        let k2 = SymMatrix::from_upper(2, |i, j| if i == j { 1.0 } else { -1.0 });
        let e = sym_eigen(&k2).unwrap();
        assert!(close(e.values[0], 0.0, 1e-12) && close(e.values[1], 2.0, 1e-12));

        let tri = SymMatrix::from_upper(3, |i, j| if i == j { 2.0 } else { -1.0 });
        let e = sym_eigen(&tri).unwrap();
        for (got, want) in e.values.iter().zip([0.0, 3.0, 3.0]) {
            assert!(close(*got, want, 1e-12), "{got} vs {want}");
        }
    }

    #[test]
    fn lambda_min_examples() {
        let neg_k2 = SymMatrix::from_upper(2, |i, j| if i == j { -1.0 } else { 1.0 });
        assert!(close(lambda_min(&neg_k2).unwrap(), -2.0, 1e-12));
        assert_eq!(lambda_min(&SymMatrix::<f64>::identity(4)).unwrap(), 1.0);
        assert_eq!(lambda_min(&SymMatrix::<f64>::zeros(3)).unwrap(), 0.0);
    }

    #[test]
    fn psd_projection_examples() {
        let p = psd_project(&SymMatrix::from_diag(&[2.0, -3.0])).unwrap();
        assert_eq!(p, SymMatrix::from_diag(&[2.0, 0.0]));

        let swap = SymMatrix::from_upper(2, |i, j| if i == j { 0.0 } else { 1.0 });
        let p = psd_project(&swap).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(close(p.get(i, j), 0.5, 1e-12));
            }
        }
    }

    #[test]
    fn inner_product_examples() {
        let i3 = SymMatrix::<f64>::identity(3);
        assert_eq!(inner(&i3, &i3).unwrap(), 3.0);
        let l = SymMatrix::from_upper(2, |i, j| if i == j { 1.0 } else { -1.0 });
        let ones = SymMatrix::from_upper(2, |_, _| 1.0);
        assert_eq!(inner(&l, &ones).unwrap(), 0.0);
        let a = SymMatrix::from_diag(&[1.0, 2.0]);
        let b = SymMatrix::from_diag(&[3.0, 4.0]);
        assert_eq!(inner(&a, &b).unwrap(), 11.0);
        assert!(matches!(
            inner(&a, &i3),
            Err(LinalgError::DimensionMismatch(2, 3))
        ));
    }

    #[test]
    fn non_finite_is_rejected() {
        let m = SymMatrix::from_diag(&[1.0, f64::NAN]);
        assert_eq!(sym_eigen(&m).unwrap_err(), LinalgError::NonFinite);
    }

    #[test]
    fn single_precision_decomposes() {
        let m = SymMatrix::<f32>::from_upper(3, |i, j| if i == j { 2.0 } else { -1.0 });
        let e = sym_eigen(&m).unwrap();
        assert!((e.values[0]).abs() < 1e-5);
        assert!((e.values[2] - 3.0).abs() < 1e-5);
    }
}
