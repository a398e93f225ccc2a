//! Truncated product spaces: discrete factors (qubits or electronic states)
//! followed by bosonic modes, with row-major ordering (last factor fastest).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_with_shift, DenseMatrix, SparseMatrix};
use crate::numeric::{c, cone, cr, czero, Real, C};

pub const DEFAULT_DIMENSION_LIMIT: usize = 1 << 20;

/// Tolerances used by [`QuantumState`] validation.
pub const NORM_TOL: f64 = 1e-9;
pub const MIN_EIGENVALUE: f64 = -1e-8;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceLayout {
    levels: Vec<usize>,
    mode_cutoffs: Vec<usize>,
    limit: usize,
}

impl SpaceLayout {
    /// `n` qubits followed by modes with the given Fock cutoffs.
    pub fn qubits(n: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        Self::new(vec![2; n], mode_cutoffs, DEFAULT_DIMENSION_LIMIT)
    }

    /// A single `m`-level electronic factor followed by modes.
    pub fn electronic(m: usize, mode_cutoffs: Vec<usize>) -> Result<Self> {
        Self::new(vec![m], mode_cutoffs, DEFAULT_DIMENSION_LIMIT)
    }

    pub fn new(levels: Vec<usize>, mode_cutoffs: Vec<usize>, limit: usize) -> Result<Self> {
        if let Some(&l) = levels.iter().find(|&&l| l < 1) {
            return Err(Error::InvalidArgument(format!("discrete factor with {l} levels")));
        }
        if let Some(&d) = mode_cutoffs.iter().find(|&&d| d < 2) {
            return Err(Error::InvalidArgument(format!("Fock cutoff {d} is below 2")));
        }
        let mut dim: usize = 1;
        for &f in levels.iter().chain(&mode_cutoffs) {
            dim = dim.checked_mul(f).filter(|&d| d <= limit).ok_or(Error::DimensionLimit {
                dim: levels.iter().chain(&mode_cutoffs).fold(1f64, |a, &b| a * b as f64) as usize,
                limit,
            })?;
        }
        Ok(Self { levels, mode_cutoffs, limit })
    }

    pub fn with_limit(self, limit: usize) -> Result<Self> {
        Self::new(self.levels, self.mode_cutoffs, limit)
    }

    pub fn levels(&self) -> &[usize] {
        &self.levels
    }

    /// Number of discrete (qubit or electronic) factors.
    pub fn qubit_count(&self) -> usize {
        self.levels.len()
    }

    pub fn mode_count(&self) -> usize {
        self.mode_cutoffs.len()
    }

    pub fn mode_cutoffs(&self) -> &[usize] {
        &self.mode_cutoffs
    }

    pub fn limit(&self) -> usize {
        self.limit
    }

    pub fn dims(&self) -> Vec<usize> {
        self.levels.iter().chain(&self.mode_cutoffs).copied().collect()
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn factor_count(&self) -> usize {
        self.levels.len() + self.mode_cutoffs.len()
    }

    /// Factor index of mode `k`.
    pub fn mode_factor(&self, k: usize) -> usize {
        self.levels.len() + k
    }

    /// Distance in the flat index between consecutive levels of `factor`.
    pub fn stride(&self, factor: usize) -> usize {
        self.dims()[factor + 1..].iter().product()
    }

    /// Dimension of the discrete part (product of `levels`).
    pub fn discrete_dim(&self) -> usize {
        self.levels.iter().product()
    }

    /// Dimension of the bosonic part.
    pub fn mode_dim(&self) -> usize {
        self.mode_cutoffs.iter().product()
    }

    /// Flat index of a product basis state.
    pub fn index_of(&self, digits: &[usize]) -> Result<usize> {
        let dims = self.dims();
        if digits.len() != dims.len() {
            return Err(Error::LayoutMismatch(format!(
                "{} digits for {} factors",
                digits.len(),
                dims.len()
            )));
        }
        let mut idx = 0;
        for (&dg, &d) in digits.iter().zip(&dims) {
            if dg >= d {
                return Err(Error::IndexOutOfRange { what: "level", index: dg, len: d });
            }
            idx = idx * d + dg;
        }
        Ok(idx)
    }

    /// Inverse of [`SpaceLayout::index_of`].
    pub fn digits_of(&self, mut idx: usize) -> Vec<usize> {
        let dims = self.dims();
        let mut out = vec![0; dims.len()];
        for (slot, &d) in out.iter_mut().zip(&dims).rev() {
            *slot = idx % d;
            idx /= d;
        }
        out
    }

    fn check_mode(&self, k: usize) -> Result<()> {
        if k >= self.mode_count() {
            return Err(Error::IndexOutOfRange { what: "mode", index: k, len: self.mode_count() });
        }
        Ok(())
    }

    fn check_qubit(&self, q: usize) -> Result<()> {
        if q >= self.qubit_count() {
            return Err(Error::IndexOutOfRange { what: "qubit", index: q, len: self.qubit_count() });
        }
        Ok(())
    }
}

/// Operator on a [`SpaceLayout`], stored sparse.
#[derive(Clone, Debug, PartialEq)]
pub struct FockOperator<T> {
    layout: SpaceLayout,
    matrix: SparseMatrix<T>,
    hermitian: bool,
}

/// Tolerance for the Hermitian flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

impl<T: Real> FockOperator<T> {
    pub fn new(layout: SpaceLayout, matrix: SparseMatrix<T>) -> Result<Self> {
        let n = layout.dim();
        if matrix.rows() != n || matrix.cols() != n {
            return Err(Error::LayoutMismatch(format!(
                "matrix is {}x{} but layout dimension is {n}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        Ok(Self { layout, matrix, hermitian: false })
    }

    /// Marks the operator Hermitian after checking `‖A − A†‖_max` against a
    /// tolerance scaled to the entry magnitude.
    pub fn into_hermitian(mut self) -> Result<Self> {
        let err = self.matrix.hermiticity_error();
        let scale = T::one().max(self.matrix.norm_inf());
        if err > T::lit(HERMITIAN_TOL) * scale {
            return Err(Error::InvalidArgument(format!("operator is not Hermitian (error {err})")));
        }
        self.hermitian = true;
        Ok(self)
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let n = layout.dim();
        Self { layout: layout.clone(), matrix: SparseMatrix::identity(n), hermitian: true }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &SparseMatrix<T> {
        &self.matrix
    }

    pub fn into_matrix(self) -> SparseMatrix<T> {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        self.matrix.to_dense()
    }

    pub fn adjoint(&self) -> Self {
        Self { layout: self.layout.clone(), matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.matmul(&other.matrix),
            hermitian: false,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.add_scaled(other, cone())
    }

    pub fn add_scaled(&self, other: &Self, s: C<T>) -> Result<Self> {
        self.same_layout(other)?;
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.add_scaled(&other.matrix, s),
            hermitian: self.hermitian && other.hermitian && s.im == T::zero(),
        })
    }

    pub fn scale(&self, s: C<T>) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: self.matrix.scale(s),
            hermitian: self.hermitian && s.im == T::zero(),
        }
    }

    pub fn commutator(&self, other: &Self) -> Result<Self> {
        Ok(self.mul(other)?.add_scaled(&other.mul(self)?, -cone::<T>())?)
    }

    fn same_layout(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::LayoutMismatch("operators live on different layouts".into()));
        }
        Ok(())
    }
}

/// Embeds a list of local operators acting on distinct factors; identity on
/// every other factor.
pub fn embed_product<T: Real>(
    layout: &SpaceLayout,
    locals: &[(usize, &DenseMatrix<T>)],
) -> Result<FockOperator<T>> {
    let dims = layout.dims();
    let mut seen = vec![false; dims.len()];
    for &(f, m) in locals {
        if f >= dims.len() {
            return Err(Error::IndexOutOfRange { what: "factor", index: f, len: dims.len() });
        }
        if seen[f] {
            return Err(Error::InvalidArgument(format!("factor {f} listed twice")));
        }
        seen[f] = true;
        if m.rows() != dims[f] || m.cols() != dims[f] {
            return Err(Error::LayoutMismatch(format!(
                "local operator is {}x{} on a factor of dimension {}",
                m.rows(),
                m.cols(),
                dims[f]
            )));
        }
    }
    let mut acc = SparseMatrix::<T>::identity(1);
    let mut pending_identity = 1usize;
    for (f, &d) in dims.iter().enumerate() {
        match locals.iter().find(|(ff, _)| *ff == f) {
            Some((_, m)) => {
                if pending_identity > 1 {
                    acc = acc.kron(&SparseMatrix::identity(pending_identity));
                    pending_identity = 1;
                }
                acc = acc.kron(&SparseMatrix::from_dense(m, T::zero()));
            }
            None => pending_identity *= d,
        }
    }
    if pending_identity > 1 {
        acc = acc.kron(&SparseMatrix::identity(pending_identity));
    }
    FockOperator::new(layout.clone(), acc)
}

pub fn embed<T: Real>(layout: &SpaceLayout, factor: usize, local: &DenseMatrix<T>) -> Result<FockOperator<T>> {
    embed_product(layout, &[(factor, local)])
}

/// Local truncated annihilation matrix, `⟨n−1|a|n⟩ = √n`.
pub fn local_annihilation<T: Real>(d: usize) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(d, d);
    for n in 1..d {
        m[(n - 1, n)] = cr(T::lit(n as f64).sqrt());
    }
    m
}

pub fn local_number<T: Real>(d: usize) -> DenseMatrix<T> {
    DenseMatrix::diagonal(&(0..d).map(|n| cr(T::lit(n as f64))).collect::<Vec<_>>())
}

pub fn annihilation<T: Real>(layout: &SpaceLayout, mode: usize) -> Result<FockOperator<T>> {
    layout.check_mode(mode)?;
    let d = layout.mode_cutoffs()[mode];
    embed(layout, layout.mode_factor(mode), &local_annihilation(d))
}

pub fn creation<T: Real>(layout: &SpaceLayout, mode: usize) -> Result<FockOperator<T>> {
    Ok(annihilation(layout, mode)?.adjoint())
}

pub fn number<T: Real>(layout: &SpaceLayout, mode: usize) -> Result<FockOperator<T>> {
    layout.check_mode(mode)?;
    let d = layout.mode_cutoffs()[mode];
    embed(layout, layout.mode_factor(mode), &local_number(d))?.into_hermitian()
}

/// `a + a†` for one mode.
pub fn quadrature<T: Real>(layout: &SpaceLayout, mode: usize) -> Result<FockOperator<T>> {
    layout.check_mode(mode)?;
    let a = local_annihilation::<T>(layout.mode_cutoffs()[mode]);
    embed(layout, layout.mode_factor(mode), &a.add(&a.adjoint()))?.into_hermitian()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PauliAxis {
    X,
    Y,
    Z,
    /// σ+ = |0⟩⟨1|, raising toward the `|0⟩` (Z = +1) state.
    Plus,
    Minus,
}

/// Single-qubit matrix with `Z|0⟩ = |0⟩`.
pub fn local_pauli<T: Real>(axis: PauliAxis) -> DenseMatrix<T> {
    let (o, z) = (T::one(), T::zero());
    let v = match axis {
        PauliAxis::X => [c(z, z), c(o, z), c(o, z), c(z, z)],
        PauliAxis::Y => [c(z, z), c(z, -o), c(z, o), c(z, z)],
        PauliAxis::Z => [c(o, z), c(z, z), c(z, z), c(-o, z)],
        PauliAxis::Plus => [c(z, z), c(o, z), c(z, z), c(z, z)],
        PauliAxis::Minus => [c(z, z), c(z, z), c(o, z), c(z, z)],
    };
    DenseMatrix::from_vec(2, 2, v.to_vec())
}

/// `σ^φ = σ+ e^{iφ} + σ− e^{−iφ} = cos φ X − sin φ Y`.
pub fn local_sigma_phi<T: Real>(phi: T) -> DenseMatrix<T> {
    let e = c(phi.cos(), phi.sin());
    DenseMatrix::from_vec(2, 2, vec![czero(), e, e.conj(), czero()])
}

pub fn pauli<T: Real>(layout: &SpaceLayout, qubit: usize, axis: PauliAxis) -> Result<FockOperator<T>> {
    layout.check_qubit(qubit)?;
    if layout.levels()[qubit] != 2 {
        return Err(Error::LayoutMismatch(format!("factor {qubit} is not a qubit")));
    }
    let op = embed(layout, qubit, &local_pauli(axis))?;
    match axis {
        PauliAxis::Plus | PauliAxis::Minus => Ok(op),
        _ => op.into_hermitian(),
    }
}

/// `|level⟩⟨level|` on a discrete factor.
pub fn discrete_projector<T: Real>(layout: &SpaceLayout, factor: usize, level: usize) -> Result<FockOperator<T>> {
    layout.check_qubit(factor)?;
    let d = layout.levels()[factor];
    if level >= d {
        return Err(Error::IndexOutOfRange { what: "level", index: level, len: d });
    }
    let mut m = DenseMatrix::zeros(d, d);
    m[(level, level)] = cone();
    embed(layout, factor, &m)?.into_hermitian()
}

/// State vector or density matrix on a layout.
#[derive(Clone, Debug, PartialEq)]
pub enum StateData<T> {
    Vector(Vec<C<T>>),
    Density(DenseMatrix<T>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantumState<T> {
    layout: SpaceLayout,
    data: StateData<T>,
}

impl<T: Real> QuantumState<T> {
    /// Validated pure state.
    pub fn pure(layout: SpaceLayout, amplitudes: Vec<C<T>>) -> Result<Self> {
        let s = Self::pure_unchecked(layout, amplitudes)?;
        s.validate()?;
        Ok(s)
    }

    /// Shape-checked pure state without the normalisation check.
    pub fn pure_unchecked(layout: SpaceLayout, amplitudes: Vec<C<T>>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::LayoutMismatch(format!(
                "{} amplitudes for dimension {}",
                amplitudes.len(),
                layout.dim()
            )));
        }
        Ok(Self { layout, data: StateData::Vector(amplitudes) })
    }

    /// Validated density matrix.
    pub fn density(layout: SpaceLayout, rho: DenseMatrix<T>) -> Result<Self> {
        let s = Self::density_unchecked(layout, rho)?;
        s.validate()?;
        Ok(s)
    }

    pub fn density_unchecked(layout: SpaceLayout, rho: DenseMatrix<T>) -> Result<Self> {
        let n = layout.dim();
        if rho.rows() != n || rho.cols() != n {
            return Err(Error::LayoutMismatch(format!(
                "density matrix is {}x{} but layout dimension is {n}",
                rho.rows(),
                rho.cols()
            )));
        }
        Ok(Self { layout, data: StateData::Density(rho) })
    }

    /// Product basis state `|digits⟩`.
    pub fn basis(layout: SpaceLayout, digits: &[usize]) -> Result<Self> {
        let idx = layout.index_of(digits)?;
        let mut v = vec![czero(); layout.dim()];
        v[idx] = cone();
        Ok(Self { layout, data: StateData::Vector(v) })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn data(&self) -> &StateData<T> {
        &self.data
    }

    pub fn into_data(self) -> StateData<T> {
        self.data
    }

    pub fn is_pure(&self) -> bool {
        matches!(self.data, StateData::Vector(_))
    }

    /// Converts a vector state to `|ψ⟩⟨ψ|`; density states are returned as is.
    pub fn to_density(&self) -> Self {
        match &self.data {
            StateData::Density(_) => self.clone(),
            StateData::Vector(v) => {
                let n = v.len();
                let rho = DenseMatrix::from_fn(n, n, |i, j| v[i] * v[j].conj());
                Self { layout: self.layout.clone(), data: StateData::Density(rho) }
            }
        }
    }

    pub fn norm(&self) -> T {
        match &self.data {
            StateData::Vector(v) => v.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt(),
            StateData::Density(r) => r.trace().re,
        }
    }

    /// Checks the normalisation, Hermiticity and positivity invariants.
    pub fn validate(&self) -> Result<()> {
        let tol = T::lit(NORM_TOL);
        match &self.data {
            StateData::Vector(_) => {
                let n = self.norm();
                if (n - T::one()).abs() > tol {
                    return Err(Error::InvalidState(format!("vector norm {n} differs from 1")));
                }
            }
            StateData::Density(r) => {
                let herm = r.hermiticity_error();
                if herm > tol {
                    return Err(Error::InvalidState(format!("density matrix not Hermitian ({herm})")));
                }
                let tr = r.trace();
                if (tr - cone::<T>()).norm() > tol {
                    return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
                }
                if !is_positive_with_shift(r, T::lit(-MIN_EIGENVALUE)) {
                    return Err(Error::InvalidState("density matrix has a negative eigenvalue".into()));
                }
            }
        }
        Ok(())
    }

    /// Diagonal of the state in the flat basis.
    pub fn diagonal(&self) -> Vec<T> {
        match &self.data {
            StateData::Vector(v) => v.iter().map(|z| z.norm_sqr()).collect(),
            StateData::Density(r) => (0..r.rows()).map(|i| r[(i, i)].re).collect(),
        }
    }

    /// Marginal distribution of one factor.
    pub fn factor_populations(&self, factor: usize) -> Vec<T> {
        marginal(&self.layout, &self.diagonal(), factor)
    }

    /// Population of the top Fock level of each mode.
    pub fn leakage(&self) -> Vec<T> {
        leakage(&self.layout, &self.diagonal())
    }
}

/// Marginal of a flat probability vector on one factor.
pub fn marginal<T: Real>(layout: &SpaceLayout, diag: &[T], factor: usize) -> Vec<T> {
    let dims = layout.dims();
    let d = dims[factor];
    let stride = layout.stride(factor);
    let mut out = vec![T::zero(); d];
    for (i, p) in diag.iter().enumerate() {
        out[(i / stride) % d] += *p;
    }
    out
}

pub fn leakage<T: Real>(layout: &SpaceLayout, diag: &[T]) -> Vec<T> {
    (0..layout.mode_count())
        .map(|k| {
            let m = marginal(layout, diag, layout.mode_factor(k));
            *m.last().expect("cutoff at least 2")
        })
        .collect()
}

/// Truncated geometric occupation `p_n ∝ (n̄/(1+n̄))^n`, renormalised.
pub fn thermal_occupations<T: Real>(cutoff: usize, nbar: T) -> Result<Vec<T>> {
    if !(nbar >= T::zero()) {
        return Err(Error::InvalidArgument(format!("mean occupation {nbar} is negative")));
    }
    let ratio = nbar / (T::one() + nbar);
    let mut p: Vec<T> = Vec::with_capacity(cutoff);
    let mut w = T::one();
    for _ in 0..cutoff {
        p.push(w);
        w *= ratio;
    }
    let z: T = p.iter().copied().sum();
    Ok(p.into_iter().map(|x| x / z).collect())
}

/// Thermal state of one mode, on the single-mode layout carrying that
/// mode's cutoff.
pub fn thermal_mode_state<T: Real>(layout: &SpaceLayout, mode: usize, nbar: T) -> Result<QuantumState<T>> {
    layout.check_mode(mode)?;
    let d = layout.mode_cutoffs()[mode];
    let p = thermal_occupations(d, nbar)?;
    let single = SpaceLayout::new(Vec::new(), vec![d], layout.limit())?;
    let rho = DenseMatrix::diagonal(&p.into_iter().map(cr).collect::<Vec<_>>());
    QuantumState::density(single, rho)
}

/// `⟨ψ|O|ψ⟩` or `Tr(ρ O)`.
pub fn expectation<T: Real>(state: &QuantumState<T>, op: &FockOperator<T>) -> Result<C<T>> {
    if state.layout() != op.layout() {
        return Err(Error::LayoutMismatch("state and operator layouts differ".into()));
    }
    Ok(match state.data() {
        StateData::Vector(v) => op.matrix().quadratic_form(v),
        StateData::Density(r) => op.matrix().trace_product(r),
    })
}

/// Applies a local matrix to one factor of a flat vector in place.
pub fn apply_local<T: Real>(dims: &[usize], factor: usize, local: &DenseMatrix<T>, v: &mut [C<T>]) {
    let d = dims[factor];
    let inner: usize = dims[factor + 1..].iter().product();
    let outer: usize = dims[..factor].iter().product();
    debug_assert_eq!(v.len(), outer * d * inner);
    let mut buf = vec![czero::<T>(); d];
    for o in 0..outer {
        let base = o * d * inner;
        for i in 0..inner {
            for (n, b) in buf.iter_mut().enumerate() {
                *b = v[base + n * inner + i];
            }
            for m in 0..d {
                let row = local.row(m);
                let mut acc = czero::<T>();
                for (a, b) in row.iter().zip(&buf) {
                    acc += *a * *b;
                }
                v[base + m * inner + i] = acc;
            }
        }
    }
}
