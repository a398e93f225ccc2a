//! Numerically exact propagation in a truncated Fock space.
//!
//! Time-independent lab-frame problems are stepped with a Lanczos matrix
//! exponential; anything time dependent (drives, the interaction frame) goes
//! through adaptive Dormand-Prince.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{ConvergenceFailure, Error, Result};
use crate::hilbert::{
    local_annihilation, local_number, thermal_occupations, FockOperator, SpaceLayout, DEFAULT_DIMENSION_LIMIT,
};
use crate::integrate::{integrate_grid, Tolerances};
use crate::linalg::{expmv_hermitian, DenseMatrix, KrylovOptions, LinearOperator, SparseMatrix};
use crate::model::LvcmSpec;
use crate::numeric::{cis, cone, cr, czero, mul_neg_i, Real, C};
use crate::trace::{uniform_grid, validate_grid, PopulationTrace, TraceMetadata};

pub const DEFAULT_TAU_FS: f64 = 400.0;
pub const DEFAULT_GRID_POINTS: usize = 40;
pub const DEFAULT_EPS_INT: f64 = 1e-8;
pub const DEFAULT_EPS_CUT: f64 = 1e-4;

/// Product-state weights below this are dropped from thermal mixtures.
const THERMAL_WEIGHT_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Lab,
    /// Mode number terms removed: `a_k → a_k e^{−iν_k t}`.
    Interaction,
}

#[derive(Clone, Debug, PartialEq)]
pub enum InitialElectronic<T> {
    State(usize),
    Amplitudes(Vec<C<T>>),
}

impl<T: Real> InitialElectronic<T> {
    pub fn amplitudes(&self, m: usize) -> Result<Vec<C<T>>> {
        match self {
            InitialElectronic::State(i) => {
                if *i >= m {
                    return Err(Error::IndexOutOfRange { what: "electronic state", index: *i, len: m });
                }
                let mut v = vec![czero(); m];
                v[*i] = cone();
                Ok(v)
            }
            InitialElectronic::Amplitudes(a) => {
                if a.len() != m {
                    return Err(Error::InvalidState(format!("{} amplitudes for {m} states", a.len())));
                }
                let n = a.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt();
                if (n - T::one()).abs() > T::lit(1e-9) {
                    return Err(Error::InvalidState(format!("initial amplitudes have norm {n}")));
                }
                Ok(a.clone())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum CutoffPolicy<T> {
    Fixed(Vec<usize>),
    Adaptive { tol: T },
}

#[derive(Clone, Debug)]
pub struct PropagationRequest<T> {
    pub spec: LvcmSpec<T>,
    pub initial: InitialElectronic<T>,
    /// Mean occupation per mode; empty means all zero.
    pub nbar: Vec<T>,
    pub times: Vec<T>,
    pub cutoffs: CutoffPolicy<T>,
    pub eps_int: T,
    pub frame: Frame,
    pub dimension_limit: usize,
}

impl<T: Real> PropagationRequest<T> {
    /// Defaults: donor (state 0) start, ground-state modes, 40 points over
    /// 400 fs, adaptive cutoffs at 1e-4, integrator tolerance 1e-8, lab frame.
    pub fn new(spec: LvcmSpec<T>) -> Self {
        Self {
            spec,
            initial: InitialElectronic::State(0),
            nbar: Vec::new(),
            times: uniform_grid(T::lit(DEFAULT_TAU_FS), DEFAULT_GRID_POINTS),
            cutoffs: CutoffPolicy::Adaptive { tol: T::lit(DEFAULT_EPS_CUT) },
            eps_int: T::lit(DEFAULT_EPS_INT),
            frame: Frame::Lab,
            dimension_limit: DEFAULT_DIMENSION_LIMIT,
        }
    }

    pub fn with_times(mut self, times: Vec<T>) -> Self {
        self.times = times;
        self
    }

    pub fn with_cutoffs(mut self, cutoffs: Vec<usize>) -> Self {
        self.cutoffs = CutoffPolicy::Fixed(cutoffs);
        self
    }

    pub fn with_frame(mut self, frame: Frame) -> Self {
        self.frame = frame;
        self
    }

    pub fn with_nbar(mut self, nbar: Vec<T>) -> Self {
        self.nbar = nbar;
        self
    }

    pub fn with_eps_int(mut self, eps: T) -> Self {
        self.eps_int = eps;
        self
    }

    fn validate(&self) -> Result<()> {
        validate_grid(&self.times)?;
        if !self.nbar.is_empty() && self.nbar.len() != self.spec.modes() {
            return Err(Error::InvalidArgument(format!(
                "{} occupation values for {} modes",
                self.nbar.len(),
                self.spec.modes()
            )));
        }
        if !(self.eps_int > T::zero()) {
            return Err(Error::InvalidArgument("integrator tolerance must be positive".into()));
        }
        if let CutoffPolicy::Fixed(c) = &self.cutoffs {
            if c.len() != self.spec.modes() {
                return Err(Error::InvalidArgument(format!(
                    "{} cutoffs for {} modes",
                    c.len(),
                    self.spec.modes()
                )));
            }
        }
        self.initial.amplitudes(self.spec.states())?;
        Ok(())
    }

    fn nbar_of(&self, k: usize) -> T {
        self.nbar.get(k).copied().unwrap_or_else(T::zero)
    }
}

/// Pre-assembled pieces of `H(t)` on an electronic ⊗ modes layout.
pub struct HamiltonianParts<T: Real> {
    layout: SpaceLayout,
    frame: Frame,
    /// Time-independent part.
    fixed: SparseMatrix<T>,
    /// Interaction frame: `(ν_k, κ_k ⊗ a_k, κ_k ⊗ a_k†)`.
    rotating: Vec<(T, SparseMatrix<T>, SparseMatrix<T>)>,
    spec: LvcmSpec<T>,
}

impl<T: Real> HamiltonianParts<T> {
    pub fn new(spec: &LvcmSpec<T>, layout: &SpaceLayout, frame: Frame) -> Result<Self> {
        check_layout(spec, layout)?;
        let m = spec.states();
        let mode_dim = layout.mode_dim();
        let mut fixed = SparseMatrix::from_dense(spec.delta(), T::zero()).kron(&SparseMatrix::identity(mode_dim));
        let mut rotating = Vec::new();
        for k in 0..spec.modes() {
            let d = layout.mode_cutoffs()[k];
            let kappa = SparseMatrix::from_dense(spec.kappa(k), T::zero());
            let a = local_annihilation::<T>(d);
            let embed_mode = |local: &DenseMatrix<T>| -> SparseMatrix<T> {
                let before: usize = layout.mode_cutoffs()[..k].iter().product();
                let after: usize = layout.mode_cutoffs()[k + 1..].iter().product();
                SparseMatrix::identity(before)
                    .kron(&SparseMatrix::from_dense(local, T::zero()))
                    .kron(&SparseMatrix::identity(after))
            };
            match frame {
                Frame::Lab => {
                    let x = embed_mode(&a.add(&a.adjoint()));
                    fixed = fixed.add(&kappa.kron(&x));
                    let n = embed_mode(&local_number(d));
                    fixed = fixed.add(&SparseMatrix::identity(m).kron(&n).scale(cr(spec.nu()[k])));
                }
                Frame::Interaction => {
                    let lower = kappa.kron(&embed_mode(&a));
                    let upper = lower.adjoint();
                    rotating.push((spec.nu()[k], lower, upper));
                }
            }
        }
        Ok(Self { layout: layout.clone(), frame, fixed, rotating, spec: spec.clone() })
    }

    pub fn is_time_dependent(&self) -> bool {
        !self.rotating.is_empty() || self.spec.is_time_dependent()
    }

    /// Assembles the full sparse matrix at time `t`.
    pub fn at(&self, t: T) -> SparseMatrix<T> {
        let mut h = self.fixed.clone();
        for (nu, lower, upper) in &self.rotating {
            h = h.add_scaled(lower, cis(-*nu * t)).add_scaled(upper, cis(*nu * t));
        }
        if let Some(d) = self.spec.drive() {
            let coupling = d.coupling(self.spec.states(), t);
            let full = SparseMatrix::from_dense(&coupling, T::zero()).kron(&SparseMatrix::identity(self.layout.mode_dim()));
            h = h.add(&full);
        }
        h
    }

    /// `y = H(t) x`
    pub fn apply(&self, t: T, x: &[C<T>], y: &mut [C<T>]) {
        self.fixed.matvec_into(x, y);
        for (nu, lower, upper) in &self.rotating {
            lower.matvec_add_scaled(x, cis(-*nu * t), y);
            upper.matvec_add_scaled(x, cis(*nu * t), y);
        }
        if let Some(d) = self.spec.drive() {
            let m = self.spec.states();
            let block = self.layout.mode_dim();
            let coupling = d.coupling(m, t);
            for i in 0..m {
                for j in 0..m {
                    let h = coupling[(i, j)];
                    if h == czero() {
                        continue;
                    }
                    let (src, dst) = (j * block, i * block);
                    for b in 0..block {
                        y[dst + b] += h * x[src + b];
                    }
                }
            }
        }
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }
}

impl<T: Real> LinearOperator<T> for HamiltonianParts<T> {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        HamiltonianParts::apply(self, T::zero(), x, y)
    }
}

fn check_layout<T: Real>(spec: &LvcmSpec<T>, layout: &SpaceLayout) -> Result<()> {
    if layout.levels() != [spec.states()] || layout.mode_count() != spec.modes() {
        return Err(Error::LayoutMismatch(format!(
            "layout {:?} + {} modes does not match a {}-state, {}-mode model",
            layout.levels(),
            layout.mode_count(),
            spec.states(),
            spec.modes()
        )));
    }
    Ok(())
}

/// Hamiltonian on `layout` at time `t`, Hermitian-checked.
pub fn assemble_hamiltonian<T: Real>(
    spec: &LvcmSpec<T>,
    layout: &SpaceLayout,
    frame: Frame,
    t: T,
) -> Result<FockOperator<T>> {
    let parts = HamiltonianParts::new(spec, layout, frame)?;
    FockOperator::new(layout.clone(), parts.at(t))?.into_hermitian()
}

/// Evolves a pure state over `times` (first entry is the start time),
/// calling `record(index, t, psi)` at each grid time.
pub fn evolve_pure<T: Real>(
    parts: &HamiltonianParts<T>,
    psi0: &[C<T>],
    times: &[T],
    eps_int: T,
    mut record: impl FnMut(usize, T, &[C<T>]),
) -> Result<()> {
    if times.is_empty() {
        return Ok(());
    }
    if parts.is_time_dependent() {
        let tol = Tolerances::new(eps_int * T::lit(1e-3), eps_int * T::lit(1e-3));
        integrate_grid(
            psi0,
            times,
            |t, y: &[C<T>], dy: &mut [C<T>]| {
                parts.apply(t, y, dy);
                for z in dy.iter_mut() {
                    *z = mul_neg_i(*z);
                }
            },
            tol,
            record,
        )?;
    } else {
        let span = *times.last().expect("non-empty") - times[0];
        let mut psi = psi0.to_vec();
        record(0, times[0], &psi);
        for (i, w) in times.windows(2).enumerate() {
            let dt = w[1] - w[0];
            let share = if span > T::zero() { dt / span } else { T::one() };
            let opts = KrylovOptions { tol: eps_int * T::lit(0.25) * share, max_dim: 30 };
            expmv_hermitian(parts, &mut psi, dt, opts)?;
            record(i + 1, w[1], &psi);
        }
    }
    Ok(())
}

/// Thermal mixture as `(weight, Fock digits per mode)`.
fn thermal_components<T: Real>(cutoffs: &[usize], nbar: &[T]) -> Result<(Vec<(T, Vec<usize>)>, T)> {
    let mut comps: Vec<(T, Vec<usize>)> = vec![(T::one(), Vec::new())];
    for (k, &d) in cutoffs.iter().enumerate() {
        let p = thermal_occupations(d, nbar.get(k).copied().unwrap_or_else(T::zero))?;
        let mut next = Vec::new();
        for (w, digits) in &comps {
            for (n, pn) in p.iter().enumerate() {
                let wn = *w * *pn;
                if wn >= T::lit(THERMAL_WEIGHT_FLOOR) {
                    let mut dd = digits.clone();
                    dd.push(n);
                    next.push((wn, dd));
                }
            }
        }
        comps = next;
    }
    let kept: T = comps.iter().map(|(w, _)| *w).sum();
    Ok((comps, T::one() - kept))
}

/// Propagation with fixed cutoffs.
pub fn propagate_fixed<T: Real>(request: &PropagationRequest<T>, cutoffs: &[usize]) -> Result<PopulationTrace<T>> {
    request.validate()?;
    let spec = &request.spec;
    let m = spec.states();
    let layout = SpaceLayout::new(vec![m], cutoffs.to_vec(), request.dimension_limit)?;
    let parts = HamiltonianParts::new(spec, &layout, request.frame)?;
    let amps = request.initial.amplitudes(m)?;
    let nbar: Vec<T> = (0..spec.modes()).map(|k| request.nbar_of(k)).collect();
    let (components, dropped) = thermal_components(cutoffs, &nbar)?;
    let total_weight = T::one() - dropped;
    let nt = request.times.len();
    let block = layout.mode_dim();
    let mut pops = vec![vec![T::zero(); m]; nt];
    let mut top = vec![vec![T::zero(); spec.modes()]; nt];
    let mode_dims = layout.mode_cutoffs().to_vec();
    for (w, digits) in &components {
        let mut psi0 = vec![czero::<T>(); layout.dim()];
        let mode_index = digits.iter().zip(&mode_dims).fold(0usize, |acc, (&n, &d)| acc * d + n);
        for (i, a) in amps.iter().enumerate() {
            psi0[i * block + mode_index] = *a;
        }
        let weight = *w / total_weight;
        evolve_pure(&parts, &psi0, &request.times, request.eps_int, |idx, _, psi| {
            for i in 0..m {
                let p: T = psi[i * block..(i + 1) * block].iter().map(|z| z.norm_sqr()).sum();
                pops[idx][i] += weight * p;
            }
            accumulate_top_levels(psi, m, &mode_dims, weight, &mut top[idx]);
        })?;
    }
    let leakage: Vec<T> = top.iter().map(|row| row.iter().copied().fold(T::zero(), T::max)).collect();
    let mut meta = TraceMetadata::new("exact");
    meta.cutoffs = cutoffs.to_vec();
    meta.leakage_per_mode = (0..spec.modes())
        .map(|k| top.iter().map(|row| row[k].as_f64()).fold(0.0, f64::max))
        .collect();
    meta.note("frame", format!("{:?}", request.frame).to_lowercase());
    meta.note("eps_int", request.eps_int);
    meta.note("thermal_components", components.len());
    meta.note("thermal_weight_dropped", dropped);
    Ok(PopulationTrace::new(request.times.clone(), pops, leakage, meta))
}

fn accumulate_top_levels<T: Real>(psi: &[C<T>], m: usize, dims: &[usize], weight: T, out: &mut [T]) {
    let block: usize = dims.iter().product();
    for (k, &d) in dims.iter().enumerate() {
        let stride: usize = dims[k + 1..].iter().product();
        let mut acc = T::zero();
        for i in 0..m {
            for b in 0..block {
                if (b / stride) % d == d - 1 {
                    acc += psi[i * block + b].norm_sqr();
                }
            }
        }
        out[k] += weight * acc;
    }
}

/// Result of the adaptive cutoff search.
#[derive(Clone, Debug)]
pub struct CutoffConvergence<T> {
    pub cutoffs: Vec<usize>,
    pub trace: PopulationTrace<T>,
    /// Largest population change observed when raising any one cutoff by 2.
    pub max_change: T,
}

/// Smallest (even-step) cutoffs such that raising any single cutoff by 2
/// moves every population by less than `tol` and the top-level leakage of
/// each mode is below `tol`.
pub fn converge_cutoffs<T: Real>(request: &PropagationRequest<T>, tol: T) -> Result<CutoffConvergence<T>> {
    request.validate()?;
    let n = request.spec.modes();
    let mut cache: HashMap<Vec<usize>, PopulationTrace<T>> = HashMap::new();
    let run = |c: &[usize], cache: &mut HashMap<Vec<usize>, PopulationTrace<T>>| -> Result<PopulationTrace<T>> {
        if let Some(t) = cache.get(c) {
            return Ok(t.clone());
        }
        let t = propagate_fixed(request, c)?;
        cache.insert(c.to_vec(), t.clone());
        Ok(t)
    };
    let mut cutoffs = vec![2usize; n];
    let mut previous: Option<(Vec<usize>, PopulationTrace<T>)> = None;
    loop {
        let base = match run(&cutoffs, &mut cache) {
            Ok(t) => t,
            Err(Error::DimensionLimit { .. }) => return Err(failure(previous, None)),
            Err(e) => return Err(e),
        };
        let mut offending = vec![false; n];
        let mut worst = T::zero();
        for k in 0..n {
            let mut raised = cutoffs.clone();
            raised[k] += 2;
            let change = match run(&raised, &mut cache) {
                Ok(t) => base.max_deviation(&t)?,
                Err(Error::DimensionLimit { .. }) => {
                    return Err(failure(previous, Some((cutoffs.clone(), base))));
                }
                Err(e) => return Err(e),
            };
            worst = worst.max(change);
            let leak = T::lit(base.metadata.leakage_per_mode[k]);
            offending[k] = change >= tol || leak >= tol;
        }
        if !offending.contains(&true) {
            let mut trace = base;
            trace.metadata.note("eps_cut", tol);
            trace.metadata.note("cutoff_max_change", worst);
            return Ok(CutoffConvergence { cutoffs, trace, max_change: worst });
        }
        previous = Some((cutoffs.clone(), base));
        for (c, off) in cutoffs.iter_mut().zip(offending) {
            if off {
                *c += 2;
            }
        }
    }
}

fn failure<T: Real>(
    previous: Option<(Vec<usize>, PopulationTrace<T>)>,
    last: Option<(Vec<usize>, PopulationTrace<T>)>,
) -> Error {
    let to_f64 = |t: &PopulationTrace<T>| -> Vec<Vec<f64>> {
        t.populations.iter().map(|r| r.iter().map(|p| p.as_f64()).collect()).collect()
    };
    let (pc, pp) = previous.as_ref().map(|(c, t)| (c.clone(), to_f64(t))).unwrap_or_default();
    let (lc, lp, leak) = last
        .as_ref()
        .map(|(c, t)| (c.clone(), to_f64(t), t.metadata.leakage_per_mode.iter().copied().fold(0.0, f64::max)))
        .unwrap_or_else(|| (pc.clone(), pp.clone(), f64::NAN));
    let change = if pp.is_empty() || lp.is_empty() || pp.len() != lp.len() {
        f64::NAN
    } else {
        pp.iter()
            .zip(&lp)
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    };
    Error::ConvergenceFailure(Box::new(ConvergenceFailure {
        previous_cutoffs: pc,
        last_cutoffs: lc,
        previous_populations: pp,
        last_populations: lp,
        last_change: change,
        last_leakage: leak,
    }))
}

/// Runs the request, resolving adaptive cutoffs first when asked to.
pub fn propagate<T: Real>(request: &PropagationRequest<T>) -> Result<PopulationTrace<T>> {
    match &request.cutoffs {
        CutoffPolicy::Fixed(c) => propagate_fixed(request, c),
        CutoffPolicy::Adaptive { tol } => Ok(converge_cutoffs(request, *tol)?.trace),
    }
}
