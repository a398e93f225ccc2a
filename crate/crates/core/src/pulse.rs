//! Lowering of an LVCM onto Trotterized trapped-ion native pulses.
//!
//! Electronic states live on qubits and each bath mode on one non-centre-of-mass
//! radial mode. Mode frequencies are removed by working in the interaction
//! picture of `Σ ν_k a†a`, so couplings become sidebands with motional phase
//! `φ_m = −ν_k t`. Electronic energies are removed the same way and only show
//! up as phase updates of later pulses (software frames).
//!
//! Two encodings are supported. `Compact` puts a two-state model on one qubit
//! (`|D⟩ = |0⟩`, `|A⟩ = |1⟩`); `OneHot` gives every state its own qubit, with
//! state `i` meaning qubit `i` in `|1⟩`. Identity components of a two-state
//! coupling go on a reference qubit that stays in `|0⟩`.

use std::collections::BTreeMap;
use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::fmt::Write as _;
use std::ops::Range;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::{HardwareParams, FLOOR_CALIBRATION_MS, SDF_CALIBRATION_TARGETS};
use crate::model::{build_toy_model, LvcmSpec};

/// Relative size below which a coefficient counts as zero.
const ZERO_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Encoding {
    Compact,
    OneHot,
}

impl Encoding {
    pub fn name(self) -> &'static str {
        match self {
            Encoding::Compact => "compact",
            Encoding::OneHot => "one-hot",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "compact" => Ok(Encoding::Compact),
            "one-hot" => Ok(Encoding::OneHot),
            _ => Err(Error::InvalidArgument(format!("unknown encoding `{s}` (compact, one-hot)"))),
        }
    }
}

/// How Z-type operations are realised.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameMode {
    /// Tracked per-qubit basis frames; no pulses for Z rotations.
    Software,
    /// Z rotations and Z-axis forces become carrier sandwiches.
    Physical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TermOrder {
    /// Energies, diagonal couplings, electronic couplings, off-diagonal couplings.
    Canonical,
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompileOptions {
    /// `None` picks compact for two states and one-hot otherwise.
    pub encoding: Option<Encoding>,
    pub frame_mode: FrameMode,
    pub order: TermOrder,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self { encoding: None, frame_mode: FrameMode::Software, order: TermOrder::Canonical }
    }
}

/// Electronic reference frame the schedule is written in.
#[derive(Clone, Debug, PartialEq)]
pub enum ElectronicFrame {
    /// `h_F = ω X` on the compact qubit (degenerate two-state model with real
    /// coupling `ω`).
    Transverse { omega: f64 },
    /// `h_F = Σ E_i |i⟩⟨i|`.
    Diagonal { energies: Vec<f64> },
    /// No electronic frame; every Z rotation is a pulse.
    Lab,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PulseKind {
    Carrier,
    Sdf,
    Ms,
}

impl PulseKind {
    pub fn name(self) -> &'static str {
        match self {
            PulseKind::Carrier => "carrier",
            PulseKind::Sdf => "sdf",
            PulseKind::Ms => "ms",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "carrier" => Ok(PulseKind::Carrier),
            "sdf" => Ok(PulseKind::Sdf),
            "ms" => Ok(PulseKind::Ms),
            _ => Err(Error::InvalidArgument(format!("unknown pulse kind `{s}`"))),
        }
    }
}

/// Plane of the qubit basis frame a pulse phase refers to. `Xy` is the
/// physical frame; `Yz` and `Zx` are relabelled bases reached by frame
/// rotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FrameTag {
    Xy,
    Yz,
    Zx,
}

impl FrameTag {
    /// Bloch axis `(x, y, z)` of the spin operator selected by phase `phi`.
    pub fn axis(self, phi: f64) -> [f64; 3] {
        let (s, c) = phi.sin_cos();
        match self {
            FrameTag::Xy => [c, -s, 0.0],
            FrameTag::Yz => [0.0, c, -s],
            FrameTag::Zx => [-s, 0.0, c],
        }
    }

    /// Logical axis that plays the role of physical Z in this frame, along
    /// which laser phase noise acts.
    pub fn dephasing_axis(self) -> [f64; 3] {
        match self {
            FrameTag::Xy => [0.0, 0.0, 1.0],
            FrameTag::Yz => [1.0, 0.0, 0.0],
            FrameTag::Zx => [0.0, 1.0, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FrameTag::Xy => "xy",
            FrameTag::Yz => "yz",
            FrameTag::Zx => "zx",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "xy" => Ok(FrameTag::Xy),
            "yz" => Ok(FrameTag::Yz),
            "zx" => Ok(FrameTag::Zx),
            _ => Err(Error::InvalidArgument(format!("unknown frame tag `{s}`"))),
        }
    }
}

/// One native operation.
///
/// * carrier: `exp(−iθ n·σ)`
/// * sdf: `exp(−iθ n·σ ⊗ (b e^{iφ_m} + b† e^{−iφ_m}))`
/// * ms: `exp(−iθ (n₁·σ)(n₂·σ))`
///
/// with `n = tag.axis(φ)` per qubit and `θ = angle ≥ 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct NativePulse {
    /// 1-based Trotter step.
    pub step: usize,
    pub kind: PulseKind,
    pub qubits: Vec<usize>,
    /// Simulated mode index (sdf only).
    pub mode: Option<usize>,
    pub phi: Vec<f64>,
    pub phi_m: f64,
    pub rabi_khz: f64,
    pub duration_us: f64,
    pub frame: Vec<FrameTag>,
    pub angle: f64,
}

impl NativePulse {
    pub fn axis(&self, q: usize) -> [f64; 3] {
        self.frame[q].axis(self.phi[q])
    }

    /// Angle implied by the recorded Rabi rate and duration.
    pub fn implied_angle(&self) -> f64 {
        let omega = 2.0 * PI * self.rabi_khz * 1e-3;
        match self.kind {
            PulseKind::Carrier | PulseKind::Sdf => 0.5 * omega * self.duration_us,
            PulseKind::Ms => (omega * self.duration_us).powi(2) / (4.0 * PI),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TermKind {
    Energy { state: usize },
    /// All `κ_{i,i,k}` of one mode.
    DiagonalCoupling { mode: usize },
    /// `Δ_{i,j}` plus any drive coupling.
    ElectronicCoupling { i: usize, j: usize },
    OffDiagonalCoupling { i: usize, j: usize, mode: usize },
}

/// One factor of a Trotter step, with lab-frame coefficients sampled at the
/// step midpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct TrotterTerm {
    pub step: usize,
    pub kind: TermKind,
    pub t_start: f64,
    pub dt: f64,
    /// Per-state `κ_{i,i,k}` for diagonal couplings; a single entry otherwise.
    pub coefficients: Vec<Complex64>,
    /// `coefficient · dt` for each entry.
    pub angles: Vec<Complex64>,
}

impl TrotterTerm {
    pub fn t_mid(&self) -> f64 {
        self.t_start + 0.5 * self.dt
    }
}

/// First-order Trotter sequence over `[0, tau]` in `steps` equal steps.
pub fn trotterize(spec: &LvcmSpec<f64>, tau: f64, steps: usize) -> Result<Vec<TrotterTerm>> {
    if steps == 0 {
        return Err(Error::InvalidArgument("Trotter step count must be at least 1".into()));
    }
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::InvalidArgument(format!("simulated time must be positive (got {tau})")));
    }
    let dt = tau / steps as f64;
    let mut out = Vec::new();
    for s in 0..steps {
        out.extend(step_terms(spec, s + 1, s as f64 * dt, dt));
    }
    Ok(out)
}

fn coupling_scale(spec: &LvcmSpec<f64>) -> f64 {
    let mut scale = spec.delta().max_abs();
    for k in spec.kappa_all() {
        scale = scale.max(k.max_abs());
    }
    scale.max(f64::MIN_POSITIVE)
}

fn step_terms(spec: &LvcmSpec<f64>, step: usize, t_start: f64, dt: f64) -> Vec<TrotterTerm> {
    let m = spec.states();
    let t_mid = t_start + 0.5 * dt;
    let h = spec.electronic_hamiltonian(t_mid);
    let tiny = ZERO_TOL * coupling_scale(spec).max(h.max_abs());
    let mut out = Vec::new();
    let mut push = |kind, coefficients: Vec<Complex64>| {
        let angles = coefficients.iter().map(|c| c * dt).collect();
        out.push(TrotterTerm { step, kind, t_start, dt, coefficients, angles });
    };
    for i in 0..m {
        let e = h[(i, i)].re;
        if e.abs() > tiny {
            push(TermKind::Energy { state: i }, vec![Complex64::new(e, 0.0)]);
        }
    }
    for (k, kk) in spec.kappa_all().iter().enumerate() {
        let diag: Vec<Complex64> = (0..m).map(|i| Complex64::new(kk[(i, i)].re, 0.0)).collect();
        if diag.iter().any(|c| c.norm() > tiny) {
            push(TermKind::DiagonalCoupling { mode: k }, diag);
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            let c = h[(i, j)];
            if c.norm() > tiny {
                push(TermKind::ElectronicCoupling { i, j }, vec![c]);
            }
        }
    }
    for i in 0..m {
        for j in i + 1..m {
            for (k, kk) in spec.kappa_all().iter().enumerate() {
                let c = kk[(i, j)];
                if c.norm() > tiny {
                    push(TermKind::OffDiagonalCoupling { i, j, mode: k }, vec![c]);
                }
            }
        }
    }
    out
}

/// Everything needed to turn terms into pulses for one model.
#[derive(Clone, Debug)]
pub struct Lowering {
    pub encoding: Encoding,
    pub frame: ElectronicFrame,
    pub frame_mode: FrameMode,
    pub order: TermOrder,
    pub states: usize,
    pub qubits: usize,
    /// Qubit held in `|0⟩` that carries identity components of couplings.
    pub reference: Option<usize>,
    pub ions: usize,
    pub nu: Vec<f64>,
    hardware: HardwareParams,
}

impl Lowering {
    pub fn new(spec: &LvcmSpec<f64>, hardware: &HardwareParams, opts: &CompileOptions) -> Result<Self> {
        let m = spec.states();
        let n = spec.modes();
        let encoding = opts.encoding.unwrap_or(if m == 2 { Encoding::Compact } else { Encoding::OneHot });
        if encoding == Encoding::Compact && m != 2 {
            return Err(Error::InvalidArgument(format!("compact encoding needs 2 states, model has {m}")));
        }
        if m < 2 {
            return Err(Error::UnmappableTerm("a single electronic state has no qubit mapping".into()));
        }
        let tiny = ZERO_TOL * coupling_scale(spec);
        let needs_reference = m == 2
            && spec.kappa_all().iter().any(|k| (k[(0, 0)].re + k[(1, 1)].re).abs() > tiny);
        let base = if encoding == Encoding::Compact { 1 } else { m };
        let qubits = base + usize::from(needs_reference);
        let reference = needs_reference.then_some(base);
        let ions = (n.div_ceil(2) + 1).max(qubits);
        let frame = choose_frame(spec, encoding, opts.frame_mode);
        if n > 0 {
            hardware.sdf_us_per_rad(ions)?;
        }
        Ok(Self {
            encoding,
            frame,
            frame_mode: opts.frame_mode,
            order: opts.order,
            states: m,
            qubits,
            reference,
            ions,
            nu: spec.nu().to_vec(),
            hardware: hardware.clone(),
        })
    }

    fn energy(&self, i: usize) -> f64 {
        match &self.frame {
            ElectronicFrame::Diagonal { energies } => energies[i],
            _ => 0.0,
        }
    }

    /// Interaction-picture coefficient of `c |i⟩⟨j| + h.c.` at time `t`.
    fn rotate(&self, c: Complex64, i: usize, j: usize, t: f64) -> Complex64 {
        c * Complex64::from_polar(1.0, (self.energy(i) - self.energy(j)) * t)
    }

    /// Per-qubit basis state for electronic state `i`.
    pub fn initial_bits(&self, state: usize) -> Vec<u8> {
        let mut bits = vec![0u8; self.qubits];
        match self.encoding {
            Encoding::Compact => bits[0] = u8::from(state == 1),
            Encoding::OneHot => bits[state] = 1,
        }
        bits
    }

    /// `(qubit, value)` whose probability is the population of each state.
    pub fn readout(&self) -> Vec<(usize, u8)> {
        match self.encoding {
            Encoding::Compact => vec![(0, 0), (0, 1)],
            Encoding::OneHot => (0..self.states).map(|i| (i, 1)).collect(),
        }
    }

    fn sdf(&self, step: usize, q: usize, mode: usize, tag: FrameTag, phi: f64, theta: f64, t: f64) -> Result<Vec<NativePulse>> {
        if theta == 0.0 {
            return Ok(Vec::new());
        }
        let (phi, theta) = fold(phi, theta);
        let phi_m = wrap(-self.nu[mode] * t);
        if self.frame_mode == FrameMode::Physical && tag != FrameTag::Xy {
            return self.z_sandwich(step, q, theta, |qq, p, th| {
                self.make(step, PulseKind::Sdf, vec![qq], Some(mode), vec![p], phi_m, th, FrameTag::Xy)
            }, tag, phi);
        }
        Ok(vec![self.make(step, PulseKind::Sdf, vec![q], Some(mode), vec![phi], phi_m, theta, tag)?])
    }

    fn carrier(&self, step: usize, q: usize, tag: FrameTag, phi: f64, theta: f64) -> Result<Vec<NativePulse>> {
        if theta == 0.0 {
            return Ok(Vec::new());
        }
        let (phi, theta) = fold(phi, theta);
        if self.frame_mode == FrameMode::Physical && tag != FrameTag::Xy {
            return self.z_sandwich(step, q, theta, |qq, p, th| {
                self.make(step, PulseKind::Carrier, vec![qq], None, vec![p], 0.0, th, FrameTag::Xy)
            }, tag, phi);
        }
        Ok(vec![self.make(step, PulseKind::Carrier, vec![q], None, vec![phi], 0.0, theta, tag)?])
    }

    /// Physical realisation of a `±Z`-axis operation: conjugate an X-axis
    /// core by quarter-turn carriers about Y (`e^{iπ/4 Y} X e^{−iπ/4 Y} = Z`).
    fn z_sandwich(
        &self,
        step: usize,
        q: usize,
        theta: f64,
        core: impl Fn(usize, f64, f64) -> Result<NativePulse>,
        tag: FrameTag,
        phi: f64,
    ) -> Result<Vec<NativePulse>> {
        let [_, _, z] = tag.axis(phi);
        if (z.abs() - 1.0).abs() > 1e-12 {
            return Err(Error::UnmappableTerm(format!(
                "physical frame mode only realises Z-axis operations (axis tag {}, phase {phi})",
                tag.name()
            )));
        }
        let core_phi = if z > 0.0 { 0.0 } else { PI };
        let pre = self.make(step, PulseKind::Carrier, vec![q], None, vec![-FRAC_PI_2], 0.0, FRAC_PI_4, FrameTag::Xy)?;
        let post = self.make(step, PulseKind::Carrier, vec![q], None, vec![FRAC_PI_2], 0.0, FRAC_PI_4, FrameTag::Xy)?;
        Ok(vec![pre, core(q, core_phi, theta)?, post])
    }

    #[allow(clippy::too_many_arguments)]
    fn make(
        &self,
        step: usize,
        kind: PulseKind,
        qubits: Vec<usize>,
        mode: Option<usize>,
        phi: Vec<f64>,
        phi_m: f64,
        angle: f64,
        tag: FrameTag,
    ) -> Result<NativePulse> {
        let duration_us = pulse_duration(kind, angle, &self.hardware, self.ions)?;
        let omega = match kind {
            PulseKind::Carrier | PulseKind::Sdf => 2.0 * angle / duration_us,
            PulseKind::Ms => (4.0 * PI * angle).sqrt() / duration_us,
        };
        let rabi_khz = omega / (2.0 * PI) * 1e3;
        if kind != PulseKind::Carrier && rabi_khz > self.hardware.max_sideband_rabi_khz() * (1.0 + 1e-12) {
            let what = match kind {
                PulseKind::Ms => "Mølmer-Sørensen",
                _ => "spin-dependent force",
            };
            return Err(Error::InfeasibleSchedule(format!(
                "{what} pulse on qubits {qubits:?} at step {step} needs {rabi_khz:.3} kHz sideband Rabi frequency, above the {:.3} kHz maximum",
                self.hardware.max_sideband_rabi_khz()
            )));
        }
        let n = qubits.len();
        Ok(NativePulse {
            step,
            kind,
            qubits,
            mode,
            phi: phi.into_iter().map(wrap).collect(),
            phi_m,
            rabi_khz,
            duration_us,
            frame: vec![tag; n],
            angle,
        })
    }

    fn ms(&self, step: usize, q: [usize; 2], phi: [f64; 2], theta: f64) -> Result<NativePulse> {
        let (p0, theta) = fold(phi[0], theta);
        self.make(step, PulseKind::Ms, q.to_vec(), None, vec![p0, phi[1]], 0.0, theta, FrameTag::Xy)
    }

    /// Axis of a logical Z on the compact qubit at time `t` as (tag, phase).
    fn compact_z(&self, t: f64) -> (FrameTag, f64) {
        match self.frame {
            ElectronicFrame::Transverse { omega } => (FrameTag::Yz, 2.0 * omega * t - FRAC_PI_2),
            _ => (FrameTag::Zx, 0.0),
        }
    }
}

fn choose_frame(spec: &LvcmSpec<f64>, encoding: Encoding, mode: FrameMode) -> ElectronicFrame {
    if mode == FrameMode::Physical {
        return ElectronicFrame::Lab;
    }
    let h = spec.electronic_hamiltonian(0.0);
    let m = spec.states();
    if encoding == Encoding::Compact && spec.drive().is_none() {
        let tiny = ZERO_TOL * coupling_scale(spec);
        let d = h[(0, 1)];
        let degenerate = (h[(0, 0)].re - h[(1, 1)].re).abs() <= tiny;
        let real_offdiag = spec.kappa_all().iter().all(|k| k[(0, 1)].im.abs() <= tiny);
        if degenerate && d.im.abs() <= tiny && d.re.abs() > tiny && real_offdiag {
            return ElectronicFrame::Transverse { omega: d.re };
        }
    }
    ElectronicFrame::Diagonal { energies: (0..m).map(|i| h[(i, i)].re).collect() }
}

/// Moves the sign of `theta` into the phase.
fn fold(phi: f64, theta: f64) -> (f64, f64) {
    if theta < 0.0 {
        (wrap(phi + PI), -theta)
    } else {
        (wrap(phi), theta)
    }
}

/// Phase in `(−π, π]`.
pub fn wrap(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

/// Lowers one term to native pulses in chronological order.
pub fn lower_term(term: &TrotterTerm, ctx: &Lowering) -> Result<Vec<NativePulse>> {
    let t = term.t_mid();
    let dt = term.dt;
    let step = term.step;
    let mut out = Vec::new();
    match term.kind {
        TermKind::Energy { state } => {
            if ctx.frame != ElectronicFrame::Lab {
                return Ok(out);
            }
            let e = term.coefficients[0].re;
            let (q, theta) = match ctx.encoding {
                Encoding::Compact => (0, if state == 0 { 0.5 * e * dt } else { -0.5 * e * dt }),
                Encoding::OneHot => (state, -0.5 * e * dt),
            };
            out.extend(ctx.carrier(step, q, FrameTag::Zx, 0.0, theta)?);
        }
        TermKind::DiagonalCoupling { mode } => {
            let kd: Vec<f64> = term.coefficients.iter().map(|c| c.re).collect();
            let m = kd.len();
            if ctx.encoding == Encoding::Compact {
                let d = 0.5 * (kd[0] - kd[1]);
                let (tag, phi) = ctx.compact_z(t);
                out.extend(ctx.sdf(step, 0, mode, tag, phi, d * dt, t)?);
            } else if m == 2 {
                for (i, k) in kd.iter().enumerate() {
                    out.extend(ctx.sdf(step, i, mode, FrameTag::Zx, 0.0, -0.5 * k * dt, t)?);
                }
            } else {
                let mean = kd.iter().sum::<f64>() / (m as f64 - 2.0);
                for (i, k) in kd.iter().enumerate() {
                    out.extend(ctx.sdf(step, i, mode, FrameTag::Zx, 0.0, 0.5 * (mean - k) * dt, t)?);
                }
            }
            if m == 2 {
                let s = 0.5 * (kd[0] + kd[1]);
                if s != 0.0 {
                    let r = ctx.reference.ok_or_else(|| {
                        Error::UnmappableTerm(format!("mode {mode} displacement needs a reference qubit"))
                    })?;
                    out.extend(ctx.sdf(step, r, mode, FrameTag::Zx, 0.0, s * dt, t)?);
                }
            }
        }
        TermKind::ElectronicCoupling { i, j } => {
            if matches!(ctx.frame, ElectronicFrame::Transverse { .. }) {
                return Ok(out);
            }
            let c = ctx.rotate(term.coefficients[0], i, j, t);
            let beta = c.arg();
            match ctx.encoding {
                Encoding::Compact => out.extend(ctx.carrier(step, 0, FrameTag::Xy, beta, c.norm() * dt)?),
                Encoding::OneHot => {
                    let theta = 0.5 * c.norm() * dt;
                    if theta > 0.0 {
                        out.push(ctx.ms(step, [i, j], [0.0, beta], theta)?);
                        out.push(ctx.ms(step, [i, j], [-FRAC_PI_2, beta - FRAC_PI_2], theta)?);
                    }
                }
            }
        }
        TermKind::OffDiagonalCoupling { i, j, mode } => {
            let c = ctx.rotate(term.coefficients[0], i, j, t);
            let beta = c.arg();
            match ctx.encoding {
                Encoding::Compact => out.extend(ctx.sdf(step, 0, mode, FrameTag::Xy, beta, c.norm() * dt, t)?),
                Encoding::OneHot => {
                    let theta = 0.5 * c.norm() * dt;
                    if theta > 0.0 {
                        // exp(−iθ P_i Q_j x) = M exp(−iθ Z_i x) M† with
                        // M = exp(−iπ/4 σ^{α−π/2}_i Q_j) mapping Z_i to P_i Q_j.
                        for (alpha, q_phi) in [(0.0, beta), (-FRAC_PI_2, beta - FRAC_PI_2)] {
                            out.push(ctx.ms(step, [i, j], [alpha + FRAC_PI_2, q_phi], FRAC_PI_4)?);
                            out.extend(ctx.sdf(step, i, mode, FrameTag::Zx, 0.0, theta, t)?);
                            out.push(ctx.ms(step, [i, j], [alpha - FRAC_PI_2, q_phi], FRAC_PI_4)?);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Lab-time length of a pulse of interaction angle `angle`.
///
/// * sdf: `c(chain)·|θ|`, never shorter than the cross-mode floor
/// * carrier: `2|θ|/Ω` at the configured carrier Rabi frequency
/// * ms: `c_ms·|θ|`
pub fn pulse_duration(kind: PulseKind, angle: f64, hw: &HardwareParams, ions: usize) -> Result<f64> {
    let a = angle.abs();
    Ok(match kind {
        PulseKind::Sdf => (hw.sdf_us_per_rad(ions)? * a).max(hw.sdf_duration_floor_us),
        PulseKind::Carrier => 2.0 * a / (2.0 * PI * hw.carrier_rabi_frequency_khz * 1e-3),
        PulseKind::Ms => hw.ms_duration_us_per_rad * a,
    })
}

/// Compiled schedule with its accounting.
#[derive(Clone, Debug)]
pub struct PulseSchedule {
    pub pulses: Vec<NativePulse>,
    pub steps: usize,
    pub tau_fs: f64,
    pub step_fs: f64,
    pub ions: usize,
    pub operation_time_us: f64,
    pub overhead_us: f64,
    pub lowering: Lowering,
    step_ranges: Vec<Range<usize>>,
    spec: LvcmSpec<f64>,
}

pub fn build_schedule(spec: &LvcmSpec<f64>, tau: f64, steps: usize, hardware: &HardwareParams) -> Result<PulseSchedule> {
    build_schedule_with(spec, tau, steps, hardware, &CompileOptions::default())
}

pub fn build_schedule_with(
    spec: &LvcmSpec<f64>,
    tau: f64,
    steps: usize,
    hardware: &HardwareParams,
    opts: &CompileOptions,
) -> Result<PulseSchedule> {
    hardware.validate()?;
    let lowering = Lowering::new(spec, hardware, opts)?;
    if lowering.ions > 1 && spec.modes() > hardware.non_cm_modes_mhz(lowering.ions).len() {
        return Err(Error::UnsupportedChain(lowering.ions));
    }
    let terms = trotterize(spec, tau, steps)?;
    let mut pulses = Vec::new();
    let mut step_ranges = Vec::with_capacity(steps);
    let mut it = terms.iter().peekable();
    for s in 1..=steps {
        let start = pulses.len();
        let mut group = Vec::new();
        while let Some(t) = it.next_if(|t| t.step == s) {
            group.push(t);
        }
        if lowering.order == TermOrder::Reversed {
            group.reverse();
        }
        for t in group {
            pulses.extend(lower_term(t, &lowering)?);
        }
        step_ranges.push(start..pulses.len());
    }
    let operation_time_us = sum_durations(&pulses);
    Ok(PulseSchedule {
        pulses,
        steps,
        tau_fs: tau,
        step_fs: tau / steps as f64,
        ions: lowering.ions,
        operation_time_us,
        overhead_us: hardware.overhead_per_run_us(),
        lowering,
        step_ranges,
        spec: spec.clone(),
    })
}

pub fn sum_durations(pulses: &[NativePulse]) -> f64 {
    pulses.iter().map(|p| p.duration_us).sum()
}

/// Where a simulated time falls in a schedule.
#[derive(Clone, Debug)]
pub struct Truncation {
    /// Whole Trotter steps completed.
    pub whole_steps: usize,
    /// Extra pulses covering the remainder, compiled as a shortened step.
    pub partial: Vec<NativePulse>,
}

impl PulseSchedule {
    pub fn spec(&self) -> &LvcmSpec<f64> {
        &self.spec
    }

    pub fn qubits(&self) -> usize {
        self.lowering.qubits
    }

    pub fn step_pulses(&self, step: usize) -> &[NativePulse] {
        &self.pulses[self.step_ranges[step - 1].clone()]
    }

    /// Pulses of steps `1..=s`.
    pub fn prefix(&self, s: usize) -> &[NativePulse] {
        let end = if s == 0 { 0 } else { self.step_ranges[s - 1].end };
        &self.pulses[..end]
    }

    /// Splits simulated time `t` into whole steps and a shortened final step.
    /// Times within `1e-9` of a step boundary snap to it.
    pub fn truncate_at(&self, t: f64) -> Result<Truncation> {
        if !(t >= 0.0) || t > self.tau_fs * (1.0 + 1e-12) {
            return Err(Error::GridMismatch(format!("time {t} fs lies outside [0, {}] fs", self.tau_fs)));
        }
        let x = t / self.step_fs;
        let r = x.round();
        if (x - r).abs() <= 1e-9 * x.max(1.0) {
            return Ok(Truncation { whole_steps: (r as usize).min(self.steps), partial: Vec::new() });
        }
        let whole = x.floor() as usize;
        let t0 = whole as f64 * self.step_fs;
        let terms = step_terms(&self.spec, whole + 1, t0, t - t0);
        let mut partial = Vec::new();
        for term in &terms {
            partial.extend(lower_term(term, &self.lowering)?);
        }
        Ok(Truncation { whole_steps: whole, partial })
    }

    /// Operation time of the schedule truncated at simulated time `t`, µs.
    pub fn operation_time_until(&self, t: f64) -> Result<f64> {
        let tr = self.truncate_at(t)?;
        Ok(sum_durations(self.prefix(tr.whole_steps)) + sum_durations(&tr.partial))
    }

    /// Per-qubit unitaries `[[a, b], [c, d]]` taking the frame state at
    /// simulated time `t` back to the lab measurement basis.
    pub fn frame_correction(&self, t: f64) -> Vec<[[Complex64; 2]; 2]> {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        let mut out = vec![[[one, zero], [zero, one]]; self.qubits()];
        match &self.lowering.frame {
            ElectronicFrame::Transverse { omega } => {
                let (s, c) = (omega * t).sin_cos();
                let mis = Complex64::new(0.0, -s);
                out[0] = [[Complex64::new(c, 0.0), mis], [mis, Complex64::new(c, 0.0)]];
            }
            ElectronicFrame::Diagonal { energies } => match self.lowering.encoding {
                Encoding::Compact => {
                    out[0] = [
                        [Complex64::from_polar(1.0, -energies[0] * t), zero],
                        [zero, Complex64::from_polar(1.0, -energies[1] * t)],
                    ];
                }
                Encoding::OneHot => {
                    for (i, e) in energies.iter().enumerate() {
                        out[i] = [[one, zero], [zero, Complex64::from_polar(1.0, -e * t)]];
                    }
                }
            },
            ElectronicFrame::Lab => {}
        }
        out
    }

    pub fn count(&self, kind: PulseKind) -> usize {
        self.pulses.iter().filter(|p| p.kind == kind).count()
    }

    pub fn listing(&self) -> ScheduleListing {
        ScheduleListing {
            steps: self.steps,
            tau_fs: self.tau_fs,
            ions: self.ions,
            qubits: self.qubits(),
            encoding: self.lowering.encoding,
            frame: self.lowering.frame.clone(),
            operation_time_us: self.operation_time_us,
            overhead_us: self.overhead_us,
            mode_frequencies_mhz: self.lowering.hardware.non_cm_modes_mhz(self.ions)[..self.spec.modes()].to_vec(),
            pulses: self.pulses.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        self.listing().to_text()
    }
}

/// Serialisable view of a schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleListing {
    pub steps: usize,
    pub tau_fs: f64,
    pub ions: usize,
    pub qubits: usize,
    pub encoding: Encoding,
    pub frame: ElectronicFrame,
    pub operation_time_us: f64,
    pub overhead_us: f64,
    /// Physical frequency of the radial mode serving each simulated mode.
    pub mode_frequencies_mhz: Vec<f64>,
    pub pulses: Vec<NativePulse>,
}

const HEADER: &str = "# vibronic pulse schedule v1";
const COLUMNS: &str = "# columns step kind qubits mode phi phi_m rabi_khz duration_us frame_tag";

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl ScheduleListing {
    /// Line-oriented text. Header lines start with `#`; each pulse line is
    /// `step kind qubits mode phi phi_m rabi_khz duration_us frame_tag` with
    /// per-qubit fields comma-separated and `-` for no mode.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{HEADER}");
        let _ = writeln!(s, "# steps {}", self.steps);
        let _ = writeln!(s, "# tau_fs {}", self.tau_fs);
        let _ = writeln!(s, "# ions {}", self.ions);
        let _ = writeln!(s, "# qubits {}", self.qubits);
        let _ = writeln!(s, "# encoding {}", self.encoding.name());
        match &self.frame {
            ElectronicFrame::Transverse { omega } => {
                let _ = writeln!(s, "# frame transverse {omega}");
            }
            ElectronicFrame::Diagonal { energies } => {
                let _ = writeln!(s, "# frame diagonal {}", join(energies));
            }
            ElectronicFrame::Lab => {
                let _ = writeln!(s, "# frame lab");
            }
        }
        let _ = writeln!(s, "# modes_mhz {}", join(&self.mode_frequencies_mhz));
        let _ = writeln!(s, "# operation_time_us {}", self.operation_time_us);
        let _ = writeln!(s, "# overhead_us {}", self.overhead_us);
        let _ = writeln!(s, "# pulses {}", self.pulses.len());
        let _ = writeln!(s, "{COLUMNS}");
        for p in &self.pulses {
            let mode = p.mode.map_or_else(|| "-".to_string(), |m| m.to_string());
            let tags: Vec<&str> = p.frame.iter().map(|t| t.name()).collect();
            let _ = writeln!(
                s,
                "{} {} {} {} {} {} {} {} {}",
                p.step,
                p.kind.name(),
                join(&p.qubits),
                mode,
                join(&p.phi),
                p.phi_m,
                p.rabi_khz,
                p.duration_us,
                tags.join(",")
            );
        }
        s
    }

    /// Parses [`ScheduleListing::to_text`] output. Pulse angles are
    /// recomputed from Rabi rate and duration.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut header: BTreeMap<&str, (usize, &str)> = BTreeMap::new();
        let mut pulses = Vec::new();
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, l)) if l.trim() == HEADER => {}
            _ => return Err(parse_err(1, "header", "missing schedule header")),
        }
        for (n, line) in lines {
            let line_no = n + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let rest = rest.trim();
                let (key, value) = rest.split_once(' ').unwrap_or((rest, ""));
                header.insert(key, (line_no, value.trim()));
                continue;
            }
            pulses.push(parse_pulse(line, line_no)?);
        }
        let get = |k: &'static str| header.get(k).copied().ok_or_else(|| parse_err(0, k, "missing header entry"));
        let num = |k: &'static str| -> Result<f64> {
            let (l, v) = get(k)?;
            v.parse().map_err(|_| parse_err(l, k, "not a number"))
        };
        let int = |k: &'static str| -> Result<usize> {
            let (l, v) = get(k)?;
            v.parse().map_err(|_| parse_err(l, k, "not an integer"))
        };
        let (fl, fv) = get("frame")?;
        let frame = match fv.split_once(' ').unwrap_or((fv, "")) {
            ("transverse", w) => ElectronicFrame::Transverse {
                omega: w.parse().map_err(|_| parse_err(fl, "frame", "bad frequency"))?,
            },
            ("diagonal", e) => ElectronicFrame::Diagonal { energies: parse_list(e, fl, "frame")? },
            ("lab", _) => ElectronicFrame::Lab,
            _ => return Err(parse_err(fl, "frame", "unknown frame")),
        };
        let (el, ev) = get("encoding")?;
        let encoding = Encoding::parse(ev).map_err(|e| parse_err(el, "encoding", &e.to_string()))?;
        let (ml, mv) = get("modes_mhz")?;
        let listing = Self {
            steps: int("steps")?,
            tau_fs: num("tau_fs")?,
            ions: int("ions")?,
            qubits: int("qubits")?,
            encoding,
            frame,
            operation_time_us: num("operation_time_us")?,
            overhead_us: num("overhead_us")?,
            mode_frequencies_mhz: parse_list(mv, ml, "modes_mhz")?,
            pulses,
        };
        if int("pulses")? != listing.pulses.len() {
            return Err(parse_err(0, "pulses", "pulse count does not match the listing"));
        }
        Ok(listing)
    }
}

fn parse_err(line: usize, key: &str, message: &str) -> Error {
    Error::Parse { line, key: key.to_string(), message: message.to_string() }
}

fn parse_list<T: std::str::FromStr>(s: &str, line: usize, key: &str) -> Result<Vec<T>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|x| x.parse().map_err(|_| parse_err(line, key, "bad list entry"))).collect()
}

fn parse_pulse(line: &str, n: usize) -> Result<NativePulse> {
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 9 {
        return Err(parse_err(n, "pulse", "expected 9 fields"));
    }
    let num = |i: usize, key: &str| -> Result<f64> { f[i].parse().map_err(|_| parse_err(n, key, "not a number")) };
    let kind = PulseKind::parse(f[1]).map_err(|e| parse_err(n, "kind", &e.to_string()))?;
    let qubits: Vec<usize> = parse_list(f[2], n, "qubits")?;
    let mode = if f[3] == "-" { None } else { Some(f[3].parse().map_err(|_| parse_err(n, "mode", "bad mode"))?) };
    let frame = f[8]
        .split(',')
        .map(FrameTag::parse)
        .collect::<Result<Vec<_>>>()
        .map_err(|e| parse_err(n, "frame_tag", &e.to_string()))?;
    let mut p = NativePulse {
        step: f[0].parse().map_err(|_| parse_err(n, "step", "bad step"))?,
        kind,
        phi: parse_list(f[4], n, "phi")?,
        phi_m: num(5, "phi_m")?,
        rabi_khz: num(6, "rabi_khz")?,
        duration_us: num(7, "duration_us")?,
        qubits,
        mode,
        frame,
        angle: 0.0,
    };
    if p.phi.len() != p.qubits.len() || p.frame.len() != p.qubits.len() {
        return Err(parse_err(n, "qubits", "per-qubit field counts differ"));
    }
    if !(p.duration_us > 0.0) {
        return Err(parse_err(n, "duration_us", "duration must be positive"));
    }
    p.angle = p.implied_angle();
    Ok(p)
}

/// Duration-model calibration on the toy model: `c(chain)` so that λ = 30Δ,
/// S = 600 reproduces the target mean force-pulse lengths, then the floor so
/// that λ = Δ, N = 2 takes the target operation time.
pub fn calibrate_durations(base: &HardwareParams) -> Result<(BTreeMap<String, f64>, f64)> {
    const STEPS: usize = 600;
    const TAU: f64 = 400.0;
    let mut hw = base.clone();
    hw.sdf_duration_floor_us = 0.0;
    hw.sideband_rabi_frequencies_khz[1] = f64::INFINITY;
    hw.sdf_duration_us_per_rad = (2..=4).map(|n| (n.to_string(), 1.0)).collect();
    let mut table = BTreeMap::new();
    for (ions, ns, target) in SDF_CALIBRATION_TARGETS {
        let mut means = Vec::new();
        for &n in ns {
            let spec = build_toy_model::<f64>(n, 30.0)?;
            let sched = build_schedule(&spec, TAU, STEPS, &hw)?;
            let sdf: Vec<f64> = sched.pulses.iter().filter(|p| p.kind == PulseKind::Sdf).map(|p| p.duration_us).collect();
            means.push(sdf.iter().sum::<f64>() / sdf.len() as f64);
        }
        let mean = means.iter().sum::<f64>() / means.len() as f64;
        table.insert(ions.to_string(), target / mean);
    }
    hw.sdf_duration_us_per_rad = table.clone();
    hw.sideband_rabi_frequencies_khz = base.sideband_rabi_frequencies_khz;
    let spec = build_toy_model::<f64>(2, 1.0)?;
    let sched = build_schedule(&spec, TAU, STEPS, &hw)?;
    let mut d: Vec<f64> = sched.pulses.iter().filter(|p| p.kind == PulseKind::Sdf).map(|p| p.duration_us).collect();
    let other = sched.operation_time_us - d.iter().sum::<f64>();
    let floor = solve_floor(&mut d, FLOOR_CALIBRATION_MS * 1000.0 - other);
    Ok((table, floor))
}

/// Smallest `f` with `Σ max(d_i, f) = target` (0 if the durations already
/// reach the target).
fn solve_floor(d: &mut [f64], target: f64) -> f64 {
    d.sort_by(|a, b| a.partial_cmp(b).expect("finite durations"));
    let total: f64 = d.iter().sum();
    if total >= target || d.is_empty() {
        return 0.0;
    }
    // With the k smallest floored: k f + Σ_{i≥k} d_i = target.
    let mut tail = total;
    for k in 1..=d.len() {
        tail -= d[k - 1];
        let f = (target - tail) / k as f64;
        if k == d.len() || f <= d[k] {
            return f;
        }
    }
    unreachable!()
}
