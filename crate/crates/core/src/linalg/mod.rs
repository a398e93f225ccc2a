//! Small self-contained linear algebra written against [`crate::numeric::Real`].

pub mod dense;
pub mod eigen;
pub mod krylov;
pub mod sparse;

pub use dense::DenseMatrix;
pub use eigen::{is_positive_with_shift, tridiagonal_eigen, TridiagonalEigen};
pub use krylov::{expmv_hermitian, KrylovOptions, KrylovStats, LinearOperator};
pub use sparse::SparseMatrix;
