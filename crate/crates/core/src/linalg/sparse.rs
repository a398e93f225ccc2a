use crate::linalg::dense::DenseMatrix;
use crate::numeric::{cone, czero, Real, C};

/// Compressed-sparse-row complex matrix. Assembly goes through
/// [`SparseMatrix::from_triplets`]; duplicate entries are summed.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<C<T>>,
}

impl<T: Real> SparseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, indptr: vec![0; rows + 1], indices: Vec::new(), values: Vec::new() }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            indptr: (0..=n).collect(),
            indices: (0..n).collect(),
            values: vec![cone(); n],
        }
    }

    pub fn diagonal(diag: &[C<T>]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, d)| (i, i, *d)))
    }

    /// Builds from `(row, col, value)` triplets in any order. Duplicates are
    /// summed and exact zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, C<T>)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, C<T>)> = triplets.into_iter().collect();
        for &(r, c, _) in &entries {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
        }
        entries.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; rows + 1];
        let mut indices = Vec::with_capacity(entries.len());
        let mut values: Vec<C<T>> = Vec::with_capacity(entries.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in entries {
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut m = Self { rows, cols, indptr, indices, values };
        m.prune(T::zero());
        m
    }

    pub fn from_dense(d: &DenseMatrix<T>, drop_below: T) -> Self {
        let mut trip = Vec::new();
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                let v = d[(i, j)];
                if v.norm() > drop_below {
                    trip.push((i, j, v));
                }
            }
        }
        Self::from_triplets(d.rows(), d.cols(), trip)
    }

    /// Removes stored entries with modulus `<= tol`.
    pub fn prune(&mut self, tol: T) {
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let v = self.values[k];
                if v.norm() > tol {
                    indices.push(self.indices[k]);
                    values.push(v);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, C<T>)> + '_ {
        (0..self.rows).flat_map(move |r| {
            (self.indptr[r]..self.indptr[r + 1]).map(move |k| (r, self.indices[k], self.values[k]))
        })
    }

    pub fn get(&self, r: usize, c: usize) -> C<T> {
        let row = &self.indices[self.indptr[r]..self.indptr[r + 1]];
        match row.binary_search(&c) {
            Ok(k) => self.values[self.indptr[r] + k],
            Err(_) => czero(),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.triplets() {
            d[(r, c)] = v;
        }
        d
    }

    pub fn scale(&self, s: C<T>) -> Self {
        let mut m = self.clone();
        for v in &mut m.values {
            *v *= s;
        }
        m
    }

    /// `self + s * other`
    pub fn add_scaled(&self, other: &Self, s: C<T>) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let trip = self.triplets().chain(other.triplets().map(|(r, c, v)| (r, c, v * s)));
        Self::from_triplets(self.rows, self.cols, trip)
    }

    pub fn add(&self, other: &Self) -> Self {
        self.add_scaled(other, cone())
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.cols, self.rows, self.triplets().map(|(r, c, v)| (c, r, v.conj())))
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "inner dimensions differ");
        let mut trip = Vec::new();
        let mut acc = vec![czero::<T>(); other.cols];
        let mut touched: Vec<usize> = Vec::new();
        let mut mark = vec![false; other.cols];
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                let a = self.values[k];
                let mid = self.indices[k];
                for kk in other.indptr[mid]..other.indptr[mid + 1] {
                    let c = other.indices[kk];
                    if !mark[c] {
                        mark[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * other.values[kk];
                }
            }
            for &c in &touched {
                trip.push((r, c, acc[c]));
                acc[c] = czero();
                mark[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, trip)
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut trip = Vec::with_capacity(self.nnz() * other.nnz());
        for (r1, c1, v1) in self.triplets() {
            for (r2, c2, v2) in other.triplets() {
                trip.push((r1 * other.rows + r2, c1 * other.cols + c2, v1 * v2));
            }
        }
        Self::from_triplets(rows, cols, trip)
    }

    /// `y = A x`
    pub fn matvec_into(&self, x: &[C<T>], y: &mut [C<T>]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = czero::<T>();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out = acc;
        }
    }

    pub fn matvec(&self, x: &[C<T>]) -> Vec<C<T>> {
        let mut y = vec![czero(); self.rows];
        self.matvec_into(x, &mut y);
        y
    }

    /// `y += s * A x`
    pub fn matvec_add_scaled(&self, x: &[C<T>], s: C<T>, y: &mut [C<T>]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, out) in y.iter_mut().enumerate() {
            let mut acc = czero::<T>();
            for k in self.indptr[r]..self.indptr[r + 1] {
                acc += self.values[k] * x[self.indices[k]];
            }
            *out += acc * s;
        }
    }

    pub fn hermiticity_error(&self) -> T {
        let adj = self.adjoint();
        self.max_abs_diff(&adj)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let diff = self.add_scaled(other, -cone::<T>());
        diff.values.iter().fold(T::zero(), |m, v| m.max(v.norm()))
    }

    /// Largest absolute row sum; an upper bound on the spectral norm of a
    /// Hermitian matrix.
    pub fn norm_inf(&self) -> T {
        (0..self.rows)
            .map(|r| {
                (self.indptr[r]..self.indptr[r + 1]).fold(T::zero(), |s, k| s + self.values[k].norm())
            })
            .fold(T::zero(), T::max)
    }

    /// `<x|A|x>` for a vector `x`.
    pub fn quadratic_form(&self, x: &[C<T>]) -> C<T> {
        let mut acc = czero::<T>();
        for r in 0..self.rows {
            let mut row = czero();
            for k in self.indptr[r]..self.indptr[r + 1] {
                row += self.values[k] * x[self.indices[k]];
            }
            acc += x[r].conj() * row;
        }
        acc
    }

    /// `Tr(A ρ)` for a dense row-major `ρ`.
    pub fn trace_product(&self, rho: &DenseMatrix<T>) -> C<T> {
        assert_eq!(self.cols, rho.rows());
        assert_eq!(self.rows, rho.cols());
        let mut acc = czero::<T>();
        for (r, c, v) in self.triplets() {
            acc += v * rho[(c, r)];
        }
        acc
    }
}
