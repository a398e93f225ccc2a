//! Symmetric tridiagonal eigensolver and a positivity certificate for
//! Hermitian matrices.

use crate::linalg::dense::DenseMatrix;
use crate::numeric::{czero, Real, C};

/// Eigen-decomposition of a real symmetric tridiagonal matrix.
#[derive(Clone, Debug)]
pub struct TridiagonalEigen<T> {
    pub values: Vec<T>,
    /// Column-major: `vectors[k * n + i]` is component `i` of eigenvector `k`.
    pub vectors: Vec<T>,
}

impl<T: Real> TridiagonalEigen<T> {
    pub fn vector(&self, k: usize) -> &[T] {
        let n = self.values.len();
        &self.vectors[k * n..(k + 1) * n]
    }
}

/// Implicit QL iteration with Wilkinson shifts. `diag` has length n and
/// `off` has length n-1 (`off[i]` couples i and i+1).
pub fn tridiagonal_eigen<T: Real>(diag: &[T], off: &[T]) -> TridiagonalEigen<T> {
    let n = diag.len();
    assert!(n == 0 || off.len() + 1 == n, "off-diagonal length must be n-1");
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(off);
    // z holds eigenvectors as rows of the transposed matrix: z[i][k] at i*n+k.
    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::eps() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 200, "tridiagonal eigensolver failed to converge");
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + if g >= T::zero() { r.abs() } else { -r.abs() });
            let mut s = T::one();
            let mut c = T::one();
            let mut p = T::zero();
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                for k in 0..n {
                    f = z[k * n + i + 1];
                    z[k * n + i + 1] = s * z[k * n + i] + c * f;
                    z[k * n + i] = c * z[k * n + i] - s * f;
                }
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    // Sort ascending and repack eigenvectors column-major.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = vec![T::zero(); n * n];
    for (slot, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors[slot * n + i] = z[i * n + k];
        }
    }
    TridiagonalEigen { values, vectors }
}

/// Returns true when `m + shift * I` admits a Cholesky factorisation, i.e.
/// every eigenvalue of the Hermitian matrix `m` exceeds `-shift` (up to
/// rounding). Only the lower triangle is read.
pub fn is_positive_with_shift<T: Real>(m: &DenseMatrix<T>, shift: T) -> bool {
    assert!(m.is_square());
    let n = m.rows();
    // Row-major lower factor; row i holds L[i][0..=i].
    let mut l: Vec<C<T>> = vec![czero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = m[(i, j)];
            if i == j {
                s.re += shift;
            }
            let (li, lj) = (&l[i * n..i * n + j], &l[j * n..j * n + j]);
            let mut acc = czero::<T>();
            for (a, b) in li.iter().zip(lj) {
                acc += *a * b.conj();
            }
            s -= acc;
            if i == j {
                if !(s.re > T::zero()) {
                    return false;
                }
                l[i * n + i] = C::new(s.re.sqrt(), T::zero());
            } else {
                let djj = l[j * n + j].re;
                l[i * n + j] = s / djj;
            }
        }
    }
    true
}
