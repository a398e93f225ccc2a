//! Mean-field (Ehrenfest) dynamics: quantum electronic amplitudes driven by
//! classical harmonic modes, averaged over a Wigner-sampled ensemble.
//!
//! Coordinates are dimensionless with `a + a† ↔ √2 q`. In rad/fs units
//!
//! ```text
//! i ċ = H_el(q, t) c,   H_el = Δ + drive(t) + Σ_k √2 q_k κ_k
//! q̇_k = ν_k p_k,        ṗ_k = −ν_k q_k − √2 Re⟨c|κ_k|c⟩
//! ```
//!
//! The integrator state packs `z_k = q_k + i p_k`, for which
//! `ż_k = −iν_k z_k − i√2 Re⟨c|κ_k|c⟩`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact::InitialElectronic;
use crate::integrate::{integrate_grid, Tolerances};
use crate::linalg::DenseMatrix;
use crate::model::LvcmSpec;
use crate::numeric::{czero, CompensatedSum, Real, C};
use crate::trace::{validate_grid, PopulationTrace, TraceMetadata};

pub const DEFAULT_TRAJECTORIES: usize = 1000;
/// Relative and absolute integrator tolerance.
pub const DEFAULT_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryState<T> {
    pub c: Vec<C<T>>,
    pub q: Vec<T>,
    pub p: Vec<T>,
}

impl<T: Real> TrajectoryState<T> {
    /// Electronic state `c` with every mode at rest at the origin.
    pub fn at_rest(c: Vec<C<T>>, modes: usize) -> Self {
        Self { c, q: vec![T::zero(); modes], p: vec![T::zero(); modes] }
    }

    pub fn norm(&self) -> T {
        self.c.iter().fold(T::zero(), |s, z| s + z.norm_sqr()).sqrt()
    }

    pub fn populations(&self) -> Vec<T> {
        self.c.iter().map(|z| z.norm_sqr()).collect()
    }

    fn pack(&self) -> Vec<C<T>> {
        let mut y = self.c.clone();
        y.extend(self.q.iter().zip(&self.p).map(|(&q, &p)| C::new(q, p)));
        y
    }

    fn unpack(y: &[C<T>], m: usize) -> Self {
        Self {
            c: y[..m].to_vec(),
            q: y[m..].iter().map(|z| z.re).collect(),
            p: y[m..].iter().map(|z| z.im).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Sampling<T> {
    /// Ground state of every mode: `q`, `p` variance 1/2.
    WignerGround,
    /// Thermal occupation per mode (one value is broadcast to all modes):
    /// variance `n̄_k + 1/2`.
    WignerThermal(Vec<T>),
}

impl<T: Real> Sampling<T> {
    pub fn name(&self) -> &'static str {
        match self {
            Sampling::WignerGround => "wigner-ground",
            Sampling::WignerThermal(_) => "wigner-thermal",
        }
    }

    fn variance(&self, k: usize) -> T {
        let half = T::lit(0.5);
        match self {
            Sampling::WignerGround => half,
            Sampling::WignerThermal(n) if n.len() == 1 => n[0] + half,
            Sampling::WignerThermal(n) => n[k] + half,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleConfig<T> {
    pub trajectories: usize,
    pub sampling: Sampling<T>,
    pub seed: u64,
    pub initial: InitialElectronic<T>,
    pub tolerance: T,
}

impl<T: Real> EnsembleConfig<T> {
    pub fn new(trajectories: usize, seed: u64) -> Self {
        Self {
            trajectories,
            sampling: Sampling::WignerGround,
            seed,
            initial: InitialElectronic::State(0),
            tolerance: T::lit(DEFAULT_TOLERANCE),
        }
    }

    pub fn validate(&self, spec: &LvcmSpec<T>) -> Result<()> {
        if self.trajectories == 0 {
            return Err(Error::InvalidArgument("at least one trajectory is needed".into()));
        }
        if let Sampling::WignerThermal(n) = &self.sampling {
            if n.len() != 1 && n.len() != spec.modes() {
                return Err(Error::InvalidArgument(format!(
                    "{} occupation values for {} modes",
                    n.len(),
                    spec.modes()
                )));
            }
            if n.iter().any(|v| !(*v >= T::zero())) {
                return Err(Error::InvalidArgument("thermal occupations must be non-negative".into()));
            }
        }
        if !(self.tolerance > T::zero()) {
            return Err(Error::InvalidArgument("integrator tolerance must be positive".into()));
        }
        self.initial.amplitudes(spec.states())?;
        Ok(())
    }
}

/// Generator of trajectory `index`: ChaCha20 seeded from `seed`, one stream
/// per trajectory.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draws `q_k`, `p_k` independently from the Wigner distribution of the
/// configured mode state; `c` is the configured electronic state.
pub fn sample_initial<T: Real>(
    config: &EnsembleConfig<T>,
    spec: &LvcmSpec<T>,
    rng: &mut ChaCha20Rng,
) -> Result<TrajectoryState<T>> {
    config.validate(spec)?;
    let c = config.initial.amplitudes(spec.states())?;
    let n = spec.modes();
    let mut q = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    for k in 0..n {
        let s = config.sampling.variance(k).sqrt();
        let a: f64 = StandardNormal.sample(rng);
        let b: f64 = StandardNormal.sample(rng);
        q.push(s * T::lit(a));
        p.push(s * T::lit(b));
    }
    Ok(TrajectoryState { c, q, p })
}

/// `H_el(q)` without the time-dependent drive.
fn static_part<T: Real>(spec: &LvcmSpec<T>, q: &[T]) -> DenseMatrix<T> {
    let m = spec.states();
    let r2 = T::lit(2.0).sqrt();
    DenseMatrix::from_fn(m, m, |i, j| {
        spec.kappa_all().iter().zip(q).fold(spec.delta()[(i, j)], |acc, (kk, &qk)| acc + kk[(i, j)] * (r2 * qk))
    })
}

/// Electronic Hamiltonian at mode coordinates `q` and time `t`.
pub fn electronic_hamiltonian<T: Real>(spec: &LvcmSpec<T>, q: &[T], t: T) -> DenseMatrix<T> {
    let h = static_part(spec, q);
    match spec.drive() {
        None => h,
        Some(d) => h.add(&d.coupling(spec.states(), t)),
    }
}

/// `Σ_k ν_k (q_k² + p_k²)/2 + ⟨c|H_el(q, t)|c⟩` in rad/fs.
pub fn mean_field_energy<T: Real>(spec: &LvcmSpec<T>, state: &TrajectoryState<T>, t: T) -> T {
    let h = electronic_hamiltonian(spec, &state.q, t);
    let hc = h.matvec(&state.c);
    let el = state.c.iter().zip(&hc).fold(T::zero(), |s, (a, b)| s + (a.conj() * b).re);
    let bath = spec
        .nu()
        .iter()
        .zip(state.q.iter().zip(&state.p))
        .fold(T::zero(), |s, (&nu, (&q, &p))| s + nu * (q * q + p * p) * T::lit(0.5));
    el + bath
}

fn rhs<T: Real>(spec: &LvcmSpec<T>, t: T, y: &[C<T>], dy: &mut [C<T>]) {
    let m = spec.states();
    let (c, z) = y.split_at(m);
    let (dc, dz) = dy.split_at_mut(m);
    let q: Vec<T> = z.iter().map(|v| v.re).collect();
    let h = electronic_hamiltonian(spec, &q, t);
    let mi = C::new(T::zero(), -T::one());
    for (i, d) in dc.iter_mut().enumerate() {
        let acc = h.row(i).iter().zip(c).fold(czero::<T>(), |s, (a, b)| s + *a * *b);
        *d = mi * acc;
    }
    let r2 = T::lit(2.0).sqrt();
    for (k, d) in dz.iter_mut().enumerate() {
        let kk = spec.kappa(k);
        let mut f = T::zero();
        for i in 0..m {
            for j in 0..m {
                f += (c[i].conj() * kk[(i, j)] * c[j]).re;
            }
        }
        let nu = spec.nu()[k];
        *d = mi * (z[k] * nu + C::new(r2 * f, T::zero()));
    }
}

/// Full trajectory states on the grid (the first time is the initial one).
pub fn evolve_states<T: Real>(
    spec: &LvcmSpec<T>,
    state: &TrajectoryState<T>,
    times: &[T],
    tol: T,
) -> Result<Vec<TrajectoryState<T>>> {
    if state.c.len() != spec.states() || state.q.len() != spec.modes() || state.p.len() != spec.modes() {
        return Err(Error::InvalidState("trajectory does not match the model dimensions".into()));
    }
    let m = spec.states();
    let mut out = Vec::with_capacity(times.len());
    integrate_grid(
        &state.pack(),
        times,
        |t, y: &[C<T>], dy: &mut [C<T>]| rhs(spec, t, y, dy),
        Tolerances::new(tol, tol),
        |_, _, y| out.push(TrajectoryState::unpack(y, m)),
    )?;
    Ok(out)
}

/// Electronic populations `|c_i(t)|²` along one trajectory.
pub fn evolve_trajectory<T: Real>(
    spec: &LvcmSpec<T>,
    state: &TrajectoryState<T>,
    times: &[T],
    tol: T,
) -> Result<Vec<Vec<T>>> {
    Ok(evolve_states(spec, state, times, tol)?.iter().map(TrajectoryState::populations).collect())
}

/// Mean populations over the ensemble with standard errors `std/√R`.
/// Trajectory `r` uses [`trajectory_rng`]`(seed, r)`, and the reduction runs
/// in trajectory order with compensated sums, so the result does not depend
/// on thread scheduling.
pub fn ensemble_average<T: Real>(
    spec: &LvcmSpec<T>,
    config: &EnsembleConfig<T>,
    times: &[T],
) -> Result<PopulationTrace<T>> {
    validate_grid(times)?;
    config.validate(spec)?;
    let runs: Vec<Vec<Vec<T>>> = (0..config.trajectories)
        .into_par_iter()
        .map(|r| {
            let mut rng = trajectory_rng(config.seed, r as u64);
            let s0 = sample_initial(config, spec, &mut rng)?;
            evolve_trajectory(spec, &s0, times, config.tolerance)
        })
        .collect::<Result<_>>()?;
    let m = spec.states();
    let r = T::lit(config.trajectories as f64);
    let mut mean = vec![vec![T::zero(); m]; times.len()];
    let mut stderr = vec![vec![T::zero(); m]; times.len()];
    for t in 0..times.len() {
        for i in 0..m {
            let mut s = CompensatedSum::new();
            for run in &runs {
                s.add(run[t][i]);
            }
            let mu = s.value() / r;
            let mut v = CompensatedSum::new();
            for run in &runs {
                let d = run[t][i] - mu;
                v.add(d * d);
            }
            mean[t][i] = mu;
            stderr[t][i] = if config.trajectories > 1 {
                (v.value() / (r - T::one())).sqrt() / r.sqrt()
            } else {
                T::zero()
            };
        }
    }
    let mut meta = TraceMetadata::new("ehrenfest");
    meta.note("trajectories", config.trajectories);
    meta.note("sampling", config.sampling.name());
    meta.note("seed", config.seed);
    let leak = vec![T::zero(); times.len()];
    let mut trace = PopulationTrace::new(times.to_vec(), mean, leak, meta);
    trace.stderr = Some(stderr);
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_toy_model;

    #[test]
    fn packing_round_trips() {
        let s = TrajectoryState { c: vec![C::new(0.6, 0.0), C::new(0.0, 0.8)], q: vec![1.0, -2.0], p: vec![0.5, 0.25] };
        assert_eq!(TrajectoryState::unpack(&s.pack(), 2), s);
    }

    #[test]
    fn force_sign_matches_energy_gradient() {
        let spec = build_toy_model::<f64>(2, 3.0).unwrap();
        let s = TrajectoryState { c: vec![C::new(0.8, 0.0), C::new(0.0, 0.6)], q: vec![0.3, -0.1], p: vec![0.0, 0.0] };
        let mut dy = vec![C::new(0.0, 0.0); 4];
        rhs(&spec, 0.0, &s.pack(), &mut dy);
        let h = 1e-6;
        for k in 0..2 {
            let mut a = s.clone();
            a.q[k] += h;
            let mut b = s.clone();
            b.q[k] -= h;
            let grad = (mean_field_energy(&spec, &a, 0.0) - mean_field_energy(&spec, &b, 0.0)) / (2.0 * h);
            // ṗ = Im ż = −∂E/∂q
            assert!((dy[2 + k].im + grad).abs() < 1e-8);
        }
    }
}
