//! Lanczos approximation of `exp(-i H t) v` for Hermitian `H`.

use crate::error::{Error, Result};
use crate::linalg::eigen::tridiagonal_eigen;
use crate::linalg::sparse::SparseMatrix;
use crate::numeric::{cis, cr, czero, Real, C};

/// Anything that can be applied to a vector.
pub trait LinearOperator<T: Real> {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[C<T>], y: &mut [C<T>]);
}

impl<T: Real> LinearOperator<T> for SparseMatrix<T> {
    fn dim(&self) -> usize {
        self.rows()
    }

    fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        self.matvec_into(x, y)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct KrylovOptions<T> {
    /// Tolerance on the 2-norm error accumulated over the whole interval.
    pub tol: T,
    pub max_dim: usize,
}

impl<T: Real> Default for KrylovOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_dim: 30 }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct KrylovStats {
    pub substeps: usize,
    pub matvecs: usize,
}

fn norm<T: Real>(v: &[C<T>]) -> T {
    v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
}

fn dot<T: Real>(a: &[C<T>], b: &[C<T>]) -> C<T> {
    a.iter().zip(b).fold(czero(), |s, (x, y)| s + x.conj() * *y)
}

/// Overwrites `v` with `exp(-i H t) v`, substepping until the Lanczos error
/// estimate per substep is below `tol * h / t`.
pub fn expmv_hermitian<T: Real, O: LinearOperator<T> + ?Sized>(
    op: &O,
    v: &mut [C<T>],
    t: T,
    opts: KrylovOptions<T>,
) -> Result<KrylovStats> {
    let n = op.dim();
    assert_eq!(v.len(), n);
    let mut stats = KrylovStats::default();
    if t == T::zero() || n == 0 {
        return Ok(stats);
    }
    let total = t.abs();
    let sign = t.signum();
    let mut done = T::zero();
    let mut h_try = total;
    let m_max = opts.max_dim.min(n).max(1);
    let mut basis: Vec<Vec<C<T>>> = Vec::with_capacity(m_max + 1);
    let mut w = vec![czero::<T>(); n];
    while done < total {
        let remaining = total - done;
        if remaining <= total * T::eps() * T::lit(64.0) {
            break;
        }
        let mut h = h_try.min(remaining);
        let beta0 = norm(v);
        if beta0 == T::zero() {
            return Ok(stats);
        }
        basis.clear();
        basis.push(v.iter().map(|z| *z / beta0).collect());
        let mut alpha: Vec<T> = Vec::new();
        let mut beta: Vec<T> = Vec::new();
        let mut accepted: Option<Vec<C<T>>> = None;
        for j in 0..m_max {
            op.apply(&basis[j], &mut w);
            stats.matvecs += 1;
            // Full re-orthogonalisation, two passes of modified Gram-Schmidt.
            let mut a_j = T::zero();
            for pass in 0..2 {
                for (k, b) in basis.iter().enumerate() {
                    let proj = dot(b, &w);
                    if pass == 0 && k == j {
                        a_j = proj.re;
                    }
                    for (wi, bi) in w.iter_mut().zip(b) {
                        *wi -= proj * *bi;
                    }
                }
            }
            alpha.push(a_j);
            let b_j = norm(&w);
            let k = j + 1;
            let eig = tridiagonal_eigen(&alpha, &beta);
            let breakdown = b_j <= T::eps() * T::lit(16.0) * (a_j.abs() + T::one());
            // y(h) = exp(-i sign T h) e1
            let coeffs = |h: T| -> Vec<C<T>> {
                let mut y = vec![czero::<T>(); k];
                for (idx, lam) in eig.values.iter().enumerate() {
                    let q = eig.vector(idx);
                    let phase = cis(-sign * *lam * h) * q[0];
                    for (yi, qi) in y.iter_mut().zip(q) {
                        *yi += phase * *qi;
                    }
                }
                y
            };
            let mut y = coeffs(h);
            let mut err = b_j * y[k - 1].norm() * beta0;
            // Below the rounding level of the small exponential the estimate
            // carries no information.
            let floor = T::eps() * T::lit(32.0) * beta0;
            let tol_for = |h: T| (opts.tol * h / total).max(floor);
            if breakdown || err <= tol_for(h) {
                accepted = Some(y);
            } else if k == m_max {
                let mut halvings = 0;
                while err > tol_for(h) {
                    halvings += 1;
                    if halvings > 60 {
                        return Err(Error::NumericalFailure(
                            format!("Krylov step size underflow (k={k}, beta={b_j}, err={err}, h={h}, tol={})", tol_for(h)),
                        ));
                    }
                    h = h * T::lit(0.5);
                    y = coeffs(h);
                    err = b_j * y[k - 1].norm() * beta0;
                }
                accepted = Some(y);
            }
            if let Some(y) = accepted.take() {
                for (i, vi) in v.iter_mut().enumerate() {
                    let mut acc = czero::<T>();
                    for (b, yk) in basis.iter().zip(&y) {
                        acc += b[i] * *yk;
                    }
                    *vi = acc * cr(beta0);
                }
                done = if h >= remaining { total } else { done + h };
                stats.substeps += 1;
                // Next step: if we converged early, try a longer one.
                h_try = if k < m_max { h * T::lit(2.0) } else { h };
                break;
            }
            beta.push(b_j);
            basis.push(w.iter().map(|z| *z / b_j).collect());
        }
    }
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dense::DenseMatrix;
    use crate::numeric::c;

    #[test]
    fn matches_dense_exponential() {
        let n = 40;
        let mut trip = Vec::new();
        for i in 0..n {
            trip.push((i, i, c(0.1 * i as f64, 0.0)));
            if i + 1 < n {
                let v = c(((i + 1) as f64).sqrt(), 0.3);
                trip.push((i, i + 1, v));
                trip.push((i + 1, i, v.conj()));
            }
        }
        let h = SparseMatrix::from_triplets(n, n, trip);
        let t = 1.7;
        let mut v = vec![czero::<f64>(); n];
        v[0] = c(1.0, 0.0);
        v[3] = c(0.0, 0.5);
        let mut reference = v.clone();
        expmv_hermitian(&h, &mut v, t, KrylovOptions { tol: 1e-12, max_dim: 20 }).unwrap();
        let u = h.to_dense().scale(c(0.0, -t)).expm();
        reference = DenseMatrix::matvec(&u, &reference);
        for (a, b) in v.iter().zip(&reference) {
            assert!((a - b).norm() < 1e-10, "{a} vs {b}");
        }
    }
}
