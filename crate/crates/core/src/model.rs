//! Linear vibronic coupling models and the named instances (toy two-state
//! model, conical intersection, vibrationally assisted transfer, polarized
//! light driven transfer).
//!
//! All energies are stored as angular frequencies in rad/fs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::numeric::{c, cr, czero, Real, C};
use crate::units::ev_to_rad_per_fs;

/// Electronic coupling of the toy model, eV.
pub const TOY_DELTA_EV: f64 = 0.08679;
/// Lowest bath frequency of the toy model, eV.
pub const TOY_NU_MIN_EV: f64 = 0.08679;
/// Spread of bath frequencies of the toy model, eV.
pub const TOY_NU_SPREAD_EV: f64 = 0.01240;

/// Relative tolerance of the Hermiticity checks on construction.
const HERMITIAN_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Envelope<T> {
    Constant,
    Gaussian { center_fs: T, width_fs: T },
}

impl<T: Real> Envelope<T> {
    pub fn value(&self, t: T) -> T {
        match *self {
            Envelope::Constant => T::one(),
            Envelope::Gaussian { center_fs, width_fs } => {
                let x = (t - center_fs) / width_fs;
                (-(x * x) * T::lit(0.5)).exp()
            }
        }
    }
}

/// Classical field `E(t) = A f(t) Re[ε e^{−iωt}]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldSpec<T> {
    pub polarization: [C<T>; 2],
    /// Field amplitude in rad/fs per unit dipole.
    pub amplitude: T,
    /// Carrier angular frequency, rad/fs.
    pub carrier: T,
    pub envelope: Envelope<T>,
}

impl<T: Real> FieldSpec<T> {
    pub fn at(&self, t: T) -> [T; 2] {
        let phase = C::new((self.carrier * t).cos(), -(self.carrier * t).sin());
        let s = self.amplitude * self.envelope.value(t);
        [(self.polarization[0] * phase).re * s, (self.polarization[1] * phase).re * s]
    }
}

/// Dipole-coupled transition `from ↔ to` with a real 2-vector dipole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DipoleTransition<T> {
    pub from: usize,
    pub to: usize,
    pub mu: [T; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct DriveSpec<T> {
    pub transitions: Vec<DipoleTransition<T>>,
    pub field: FieldSpec<T>,
    /// Rotating-wave approximation in the frame of the carrier. The states
    /// that are not the source of any transition are shifted by `−ω` and only
    /// the co-rotating half of the field is kept.
    pub rwa: bool,
}

impl<T: Real> DriveSpec<T> {
    fn validate(&self, m: usize) -> Result<()> {
        let [e0, e1] = self.field.polarization;
        if e0.norm_sqr() + e1.norm_sqr() == T::zero() {
            return Err(Error::InvalidModel("polarization vector has zero norm".into()));
        }
        for tr in &self.transitions {
            if tr.from >= m || tr.to >= m || tr.from == tr.to {
                return Err(Error::InvalidModel(format!(
                    "dipole transition {} -> {} is not valid for {m} states",
                    tr.from, tr.to
                )));
            }
        }
        if let Envelope::Gaussian { width_fs, .. } = self.field.envelope {
            if !(width_fs > T::zero()) {
                return Err(Error::InvalidModel("Gaussian envelope width must be positive".into()));
            }
        }
        Ok(())
    }

    /// States shifted by `−ω` in the rotating frame.
    pub fn rotating_states(&self, m: usize) -> Vec<bool> {
        let mut shifted = vec![true; m];
        for tr in &self.transitions {
            shifted[tr.from] = false;
        }
        shifted
    }

    /// Electronic coupling matrix contributed by the drive at time `t`.
    pub fn coupling(&self, m: usize, t: T) -> DenseMatrix<T> {
        let mut h = DenseMatrix::zeros(m, m);
        if self.rwa {
            let s = self.field.amplitude * self.field.envelope.value(t) * T::lit(0.5);
            for tr in &self.transitions {
                let g = (self.field.polarization[0] * tr.mu[0] + self.field.polarization[1] * tr.mu[1]) * s;
                h[(tr.to, tr.from)] += g;
                h[(tr.from, tr.to)] += g.conj();
            }
            let shifted = self.rotating_states(m);
            for (i, &sh) in shifted.iter().enumerate() {
                if sh {
                    h[(i, i)] -= cr(self.field.carrier);
                }
            }
        } else {
            let e = self.field.at(t);
            for tr in &self.transitions {
                let g = cr(tr.mu[0] * e[0] + tr.mu[1] * e[1]);
                h[(tr.to, tr.from)] += g;
                h[(tr.from, tr.to)] += g;
            }
        }
        h
    }
}

/// Linear vibronic coupling model
/// `H = Σ Δ_ij |i⟩⟨j| + Σ κ_ijk |i⟩⟨j| (a_k + a_k†) + Σ ν_k a_k† a_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct LvcmSpec<T> {
    delta: DenseMatrix<T>,
    kappa: Vec<DenseMatrix<T>>,
    nu: Vec<T>,
    drive: Option<DriveSpec<T>>,
}

impl<T: Real> LvcmSpec<T> {
    /// Validates and canonicalises (modes stably sorted by frequency).
    pub fn new(
        delta: DenseMatrix<T>,
        kappa: Vec<DenseMatrix<T>>,
        nu: Vec<T>,
        drive: Option<DriveSpec<T>>,
    ) -> Result<Self> {
        let m = delta.rows();
        if m == 0 || !delta.is_square() {
            return Err(Error::InvalidModel("Δ must be a non-empty square matrix".into()));
        }
        if kappa.len() != nu.len() {
            return Err(Error::InvalidModel(format!(
                "{} coupling matrices for {} modes",
                kappa.len(),
                nu.len()
            )));
        }
        check_hermitian(&delta, "Δ")?;
        for (k, kk) in kappa.iter().enumerate() {
            if kk.rows() != m || kk.cols() != m {
                return Err(Error::InvalidModel(format!("κ for mode {k} is not {m}x{m}")));
            }
            check_hermitian(kk, "κ")?;
        }
        if let Some(&bad) = nu.iter().find(|v| !(**v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidModel(format!("mode frequency {bad} is not positive")));
        }
        if let Some(d) = &drive {
            d.validate(m)?;
        }
        let mut order: Vec<usize> = (0..nu.len()).collect();
        order.sort_by(|&a, &b| nu[a].partial_cmp(&nu[b]).expect("finite frequencies"));
        let nu = order.iter().map(|&k| nu[k]).collect();
        let kappa = order.iter().map(|&k| kappa[k].clone()).collect();
        Ok(Self { delta, kappa, nu, drive })
    }

    /// Number of electronic states.
    pub fn states(&self) -> usize {
        self.delta.rows()
    }

    /// Number of bath modes.
    pub fn modes(&self) -> usize {
        self.nu.len()
    }

    pub fn delta(&self) -> &DenseMatrix<T> {
        &self.delta
    }

    pub fn kappa(&self, k: usize) -> &DenseMatrix<T> {
        &self.kappa[k]
    }

    pub fn kappa_all(&self) -> &[DenseMatrix<T>] {
        &self.kappa
    }

    pub fn nu(&self) -> &[T] {
        &self.nu
    }

    pub fn drive(&self) -> Option<&DriveSpec<T>> {
        self.drive.as_ref()
    }

    pub fn is_time_dependent(&self) -> bool {
        self.drive.is_some()
    }

    /// Electronic Hamiltonian `Δ + drive(t)` (in the rotating frame when the
    /// drive uses the rotating-wave approximation).
    pub fn electronic_hamiltonian(&self, t: T) -> DenseMatrix<T> {
        match &self.drive {
            None => self.delta.clone(),
            Some(d) => self.delta.add(&d.coupling(self.states(), t)),
        }
    }

    /// True when every off-diagonal Δ and κ entry vanishes.
    pub fn is_electronically_diagonal(&self) -> bool {
        let m = self.states();
        let off = |a: &DenseMatrix<T>| (0..m).all(|i| (0..m).all(|j| i == j || a[(i, j)] == czero()));
        off(&self.delta) && self.kappa.iter().all(off) && self.drive.is_none()
    }
}

fn check_hermitian<T: Real>(a: &DenseMatrix<T>, what: &str) -> Result<()> {
    let scale = a.max_abs().max(T::one());
    let err = a.hermiticity_error();
    if err > T::lit(HERMITIAN_RTOL) * scale {
        return Err(Error::InvalidModel(format!("{what} is not Hermitian (error {err})")));
    }
    Ok(())
}

/// `λ = κ² Σ_k 1/ν_k`.
pub fn reorganization_energy<T: Real>(spec: &LvcmSpec<T>, kappa: T) -> Result<T> {
    reorganization_energy_for(spec.nu(), kappa)
}

pub fn reorganization_energy_for<T: Real>(nu: &[T], kappa: T) -> Result<T> {
    let mut inv = T::zero();
    for &v in nu {
        if !(v > T::zero()) {
            return Err(Error::InvalidModel(format!("mode frequency {v} is not positive")));
        }
        inv += T::one() / v;
    }
    Ok(kappa * kappa * inv)
}

/// Toy-model bath frequencies in eV.
pub fn toy_frequencies_ev<T: Real>(n: usize) -> Vec<T> {
    if n == 1 {
        return vec![T::lit(TOY_NU_MIN_EV)];
    }
    (0..n)
        .map(|k| {
            T::lit(TOY_NU_MIN_EV)
                + T::lit(TOY_NU_SPREAD_EV) * T::lit(k as f64) / T::lit((n - 1) as f64)
        })
        .collect()
}

/// Coupling `κ` (eV) that gives reorganization energy `λ = ratio · Δ`.
pub fn toy_kappa_ev<T: Real>(n: usize, lambda_over_delta: T) -> T {
    let inv: T = toy_frequencies_ev::<T>(n).into_iter().map(|v| T::one() / v).sum();
    (lambda_over_delta * T::lit(TOY_DELTA_EV) / inv).sqrt()
}

/// Two-state donor/acceptor model with `N` modes; donor is state 0.
pub fn build_toy_model<T: Real>(n: usize, lambda_over_delta: T) -> Result<LvcmSpec<T>> {
    if n == 0 {
        return Err(Error::InvalidModel("the toy model needs at least one mode".into()));
    }
    if !(lambda_over_delta >= T::zero()) {
        return Err(Error::InvalidModel(format!("λ/Δ = {lambda_over_delta} is negative")));
    }
    let delta = ev_to_rad_per_fs(T::lit(TOY_DELTA_EV));
    let kappa = ev_to_rad_per_fs(toy_kappa_ev(n, lambda_over_delta));
    let half = T::lit(0.5);
    let mut d = DenseMatrix::zeros(2, 2);
    d[(0, 1)] = cr(delta * half);
    d[(1, 0)] = cr(delta * half);
    let mut kk = DenseMatrix::zeros(2, 2);
    kk[(0, 0)] = cr(kappa * half);
    kk[(1, 1)] = cr(-kappa * half);
    let nu = toy_frequencies_ev::<T>(n).into_iter().map(ev_to_rad_per_fs).collect();
    LvcmSpec::new(d, vec![kk; n], nu, None)
}

/// Conical-intersection model: mode `x` couples the states, mode `z` splits
/// them. Arguments in rad/fs.
pub fn build_ci_model<T: Real>(kx: T, kz: T, nux: T, nuz: T) -> Result<LvcmSpec<T>> {
    let mut cx = DenseMatrix::zeros(2, 2);
    cx[(0, 1)] = cr(kx);
    cx[(1, 0)] = cr(kx);
    let mut cz = DenseMatrix::zeros(2, 2);
    cz[(0, 0)] = cr(kz);
    cz[(1, 1)] = cr(-kz);
    LvcmSpec::new(DenseMatrix::zeros(2, 2), vec![cx, cz], vec![nux, nuz], None)
}

/// Parameters extracted from a model with the conical-intersection shape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiParameters<T> {
    pub kx: T,
    pub kz: T,
    pub nux: T,
    pub nuz: T,
}

pub fn ci_parameters<T: Real>(spec: &LvcmSpec<T>) -> Result<CiParameters<T>> {
    let bad = || Error::InvalidModel("model does not have the conical-intersection shape".into());
    if spec.states() != 2 || spec.modes() != 2 || spec.drive().is_some() || spec.delta().max_abs() != T::zero() {
        return Err(bad());
    }
    let is_x = |k: &DenseMatrix<T>| {
        k[(0, 0)] == czero() && k[(1, 1)] == czero() && k[(0, 1)].im == T::zero()
    };
    let is_z = |k: &DenseMatrix<T>| {
        k[(0, 1)] == czero() && k[(0, 0)].im == T::zero() && k[(1, 1)] == -k[(0, 0)]
    };
    let (ix, iz) = if is_x(spec.kappa(0)) && is_z(spec.kappa(1)) {
        (0, 1)
    } else if is_x(spec.kappa(1)) && is_z(spec.kappa(0)) {
        (1, 0)
    } else {
        return Err(bad());
    };
    Ok(CiParameters {
        kx: spec.kappa(ix)[(0, 1)].re,
        kz: spec.kappa(iz)[(0, 0)].re,
        nux: spec.nu()[ix],
        nuz: spec.nu()[iz],
    })
}

/// Adiabatic surfaces `(E−, E+)` at a phase-space point.
pub fn ci_adiabatic_surfaces<T: Real>(spec: &LvcmSpec<T>, x: T, z: T, px: T, pz: T) -> Result<(T, T)> {
    let p = ci_parameters(spec)?;
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    let base = p.nux * half * (x * x + px * px) + p.nuz * half * (z * z + pz * pz);
    let gap = (two * p.kx * p.kx * x * x + two * p.kz * p.kz * z * z).sqrt();
    Ok((base - gap, base + gap))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeCorrelation {
    Correlated,
    AntiCorrelated,
    /// The shared mode does not couple to one of the states.
    Uncoupled,
}

/// Vibrationally assisted transfer model. Energies in rad/fs; mode 1
/// couples to the donor, mode 2 to both states, mode 3 to the acceptor.
#[allow(clippy::too_many_arguments)]
pub fn build_vaet_model<T: Real>(
    e_d: T,
    e_a: T,
    delta: T,
    kappa_d1: T,
    kappa_d2: T,
    kappa_a2: T,
    kappa_a3: T,
    nu: [T; 3],
) -> Result<LvcmSpec<T>> {
    let mut d = DenseMatrix::zeros(2, 2);
    d[(1, 1)] = cr(e_a - e_d);
    d[(0, 1)] = cr(delta * T::lit(0.5));
    d[(1, 0)] = cr(delta * T::lit(0.5));
    let diag = |kd: T, ka: T| DenseMatrix::diagonal(&[cr(kd), cr(ka)]);
    let kappa = vec![diag(kappa_d1, T::zero()), diag(kappa_d2, kappa_a2), diag(T::zero(), kappa_a3)];
    LvcmSpec::new(d, kappa, nu.to_vec(), None)
}

/// Classifies the mode coupled to both states of a two-state model.
pub fn vaet_mode_correlation<T: Real>(spec: &LvcmSpec<T>) -> Result<ModeCorrelation> {
    if spec.states() != 2 {
        return Err(Error::InvalidModel("correlation flag needs a two-state model".into()));
    }
    let shared = spec
        .kappa_all()
        .iter()
        .find(|k| k[(0, 0)] != czero() && k[(1, 1)] != czero());
    Ok(match shared {
        None => ModeCorrelation::Uncoupled,
        Some(k) if k[(0, 0)].re * k[(1, 1)].re > T::zero() => ModeCorrelation::Correlated,
        Some(_) => ModeCorrelation::AntiCorrelated,
    })
}

/// Four-state light-driven transfer model with states `[G, D1, D2, A]`.
/// `omega` holds the state energies in rad/fs; the drive couples `G ↔ D_i`
/// through `μ_i`, and `V_i` couples `D_i ↔ A`.
pub fn build_plet_model<T: Real>(
    omega: [T; 4],
    mu1: [T; 2],
    mu2: [T; 2],
    v1: C<T>,
    v2: C<T>,
    field: FieldSpec<T>,
    rwa: bool,
) -> Result<LvcmSpec<T>> {
    let dot = mu1[0] * mu2[0] + mu1[1] * mu2[1];
    let scale = (mu1[0].hypot(mu1[1]) * mu2[0].hypot(mu2[1])).max(T::min_positive_value());
    if dot.abs() > T::lit(1e-12) * scale {
        return Err(Error::InvalidModel("transition dipoles must be orthogonal".into()));
    }
    let mut d = DenseMatrix::diagonal(&omega.map(cr));
    d[(1, 3)] = v1;
    d[(3, 1)] = v1.conj();
    d[(2, 3)] = v2;
    d[(3, 2)] = v2.conj();
    let drive = DriveSpec {
        transitions: vec![
            DipoleTransition { from: 0, to: 1, mu: mu1 },
            DipoleTransition { from: 0, to: 2, mu: mu2 },
        ],
        field,
        rwa,
    };
    LvcmSpec::new(d, Vec::new(), Vec::new(), Some(drive))
}

/// Circular polarization vectors `(1, ±i)/√2`.
pub fn circular_polarization<T: Real>(left: bool) -> [C<T>; 2] {
    let s = T::lit(std::f64::consts::FRAC_1_SQRT_2);
    let sign = if left { T::one() } else { -T::one() };
    [c(s, T::zero()), c(T::zero(), sign * s)]
}

/// Illustrative light-driven transfer parameters; these are workbench
/// values chosen so the two circular polarizations give visibly different
/// acceptor populations, not values taken from any experiment.
pub fn illustrative_plet<T: Real>(left: bool) -> Result<LvcmSpec<T>> {
    let ev = |x: f64| ev_to_rad_per_fs(T::lit(x));
    let omega = [T::zero(), ev(2.0), ev(2.0), ev(1.95)];
    let v = ev(0.02);
    let field = FieldSpec {
        polarization: circular_polarization(left),
        amplitude: ev(0.04),
        carrier: ev(2.0),
        envelope: Envelope::Gaussian { center_fs: T::lit(60.0), width_fs: T::lit(25.0) },
    };
    build_plet_model(
        omega,
        [T::one(), T::zero()],
        [T::zero(), T::one()],
        cr(v),
        c(T::zero(), v),
        field,
        true,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_kappa_examples() {
        assert!((toy_kappa_ev::<f64>(2, 1.0) - 0.063382).abs() < 1e-6);
        assert!((toy_kappa_ev::<f64>(2, 30.0) - 0.34717).abs() < 1e-5);
        assert_eq!(toy_kappa_ev::<f64>(2, 0.0), 0.0);
    }

    #[test]
    fn toy_frequencies_five_modes() {
        let nu = toy_frequencies_ev::<f64>(5);
        let expected = [0.08679, 0.08989, 0.09299, 0.09609, 0.09919];
        for (a, b) in nu.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(toy_frequencies_ev::<f64>(1), vec![0.08679]);
    }

    #[test]
    fn toy_model_rejects_no_modes() {
        assert!(matches!(build_toy_model::<f64>(0, 1.0), Err(Error::InvalidModel(_))));
    }

    #[test]
    fn non_hermitian_delta_rejected() {
        let mut d = DenseMatrix::<f64>::zeros(2, 2);
        d[(0, 1)] = c(1.0, 0.0);
        assert!(LvcmSpec::new(d, vec![], vec![], None).is_err());
    }

    #[test]
    fn modes_sorted_by_frequency() {
        let spec = build_vaet_model(0.0, 0.0, 0.1, 0.01, 0.02, 0.03, 0.04, [0.3, 0.1, 0.2f64]).unwrap();
        assert_eq!(spec.nu(), &[0.1, 0.2, 0.3]);
        // The shared mode (originally second) keeps its couplings.
        assert_eq!(spec.kappa(0)[(0, 0)], cr(0.02));
        assert_eq!(spec.kappa(0)[(1, 1)], cr(0.03));
    }

    #[test]
    fn plet_requires_orthogonal_dipoles() {
        let field = FieldSpec {
            polarization: [cr(1.0f64), czero()],
            amplitude: 0.1,
            carrier: 1.0,
            envelope: Envelope::Constant,
        };
        let r = build_plet_model([0.0; 4], [1.0, 0.0], [1.0, 1.0], czero(), czero(), field, true);
        assert!(matches!(r, Err(Error::InvalidModel(_))));
    }

    #[test]
    fn zero_polarization_rejected() {
        let field = FieldSpec { polarization: [czero::<f64>(); 2], amplitude: 0.1, carrier: 1.0, envelope: Envelope::Constant };
        let r = build_plet_model([0.0; 4], [1.0, 0.0], [0.0, 1.0], czero(), czero(), field, false);
        assert!(r.is_err());
    }
}
