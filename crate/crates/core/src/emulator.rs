//! Trapped-ion emulation of a compiled pulse schedule.
//!
//! The register is `qubits ⊗ modes` with the qubits first. Ideal runs
//! propagate a state vector; noisy runs propagate a density matrix through
//! each pulse with a Strang splitting `D(t/2) U D(t/2)`, where `U` is the
//! pulse unitary and `D` the exact solution of the dissipative part of the
//! Lindblad equation (motional dephasing and heating per mode, laser
//! dephasing on the addressed qubits).

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hardware::NoiseChannels;
use crate::hilbert::{self, SpaceLayout, DEFAULT_DIMENSION_LIMIT};
use crate::linalg::{is_positive_with_shift, tridiagonal_eigen, DenseMatrix, TridiagonalEigen};
use crate::pulse::{NativePulse, PulseKind, PulseSchedule};
use crate::trace::{validate_grid, PopulationTrace, SampledColumns, TraceMetadata};

type C64 = Complex64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Entries below this magnitude are dropped from propagator blocks.
const DROP: f64 = 1e-17;

/// Trace deviation that aborts a noisy run.
pub const TRACE_FAILURE: f64 = 1e-6;
/// Eigenvalue bound that aborts a noisy run.
pub const NEGATIVITY_FAILURE: f64 = 1e-6;
/// Eigenvalue bound reported as an invariant violation.
pub const NEGATIVITY_INVARIANT: f64 = 1e-8;

/// When the density matrix gets a positivity certificate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PositivityCheck {
    EveryPulse,
    EveryStep,
    GridPoints,
    Never,
}

impl PositivityCheck {
    pub fn name(self) -> &'static str {
        match self {
            PositivityCheck::EveryPulse => "every-pulse",
            PositivityCheck::EveryStep => "every-step",
            PositivityCheck::GridPoints => "grid-points",
            PositivityCheck::Never => "never",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "every-pulse" => PositivityCheck::EveryPulse,
            "every-step" => PositivityCheck::EveryStep,
            "grid-points" => PositivityCheck::GridPoints,
            "never" => PositivityCheck::Never,
            _ => return Err(Error::InvalidArgument(format!("unknown positivity check `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmulatorConfig {
    /// Fock cutoff per simulated mode.
    pub cutoffs: Vec<usize>,
    /// Electronic state the run starts in.
    pub initial_state: usize,
    pub positivity: PositivityCheck,
    pub dimension_limit: usize,
}

impl EmulatorConfig {
    pub fn new(cutoffs: Vec<usize>) -> Self {
        Self { cutoffs, initial_state: 0, positivity: PositivityCheck::GridPoints, dimension_limit: DEFAULT_DIMENSION_LIMIT }
    }
}

/// Shot-noise sampling settings.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeasurementPolicy {
    /// Runs R per time point.
    pub runs: usize,
    /// Time points S'.
    pub time_points: usize,
    pub seed: u64,
}

impl MeasurementPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 || self.time_points == 0 {
            return Err(Error::InvalidArgument("runs and time points must be at least 1".into()));
        }
        Ok(())
    }
}

/// Small square block with the non-negligible column span of every row.
#[derive(Clone, Debug)]
struct Block {
    n: usize,
    data: Vec<C64>,
    span: Vec<(usize, usize)>,
}

impl Block {
    fn new(n: usize, data: Vec<C64>) -> Self {
        let span = (0..n)
            .map(|r| {
                let row = &data[r * n..(r + 1) * n];
                let lo = row.iter().position(|x| x.norm() > DROP).unwrap_or(0);
                let hi = row.iter().rposition(|x| x.norm() > DROP).map_or(0, |h| h + 1);
                (lo, hi.max(lo))
            })
            .collect();
        Self { n, data, span }
    }

    fn conj(&self) -> Self {
        Self { n: self.n, data: self.data.iter().map(|x| x.conj()).collect(), span: self.span.clone() }
    }

    #[inline]
    fn apply(&self, x: &[C64], y: &mut [C64]) {
        for (r, yr) in y.iter_mut().enumerate() {
            let (lo, hi) = self.span[r];
            let row = &self.data[r * self.n..(r + 1) * self.n];
            let mut acc = ZERO;
            for c in lo..hi {
                acc += row[c] * x[c];
            }
            *yr = acc;
        }
    }
}

/// Local factor of a pulse unitary.
#[derive(Clone, Debug)]
enum Op {
    Single { factor: usize, m: Block },
    Pair { f1: usize, f2: usize, m: Block },
    /// `Σ_s |s⟩⟨s|_q ⊗ blocks[s]` on mode factor `mode`.
    Conditioned { qubit: usize, mode: usize, blocks: [Block; 2] },
}

/// Index geometry of the register.
#[derive(Clone, Debug)]
struct Geometry {
    dims: Vec<usize>,
    strides: Vec<usize>,
    dim: usize,
}

impl Geometry {
    fn new(dims: Vec<usize>) -> Self {
        let mut strides = vec![1; dims.len()];
        for f in (0..dims.len().saturating_sub(1)).rev() {
            strides[f] = strides[f + 1] * dims[f + 1];
        }
        let dim = dims.iter().product();
        Self { dims, strides, dim }
    }

    #[inline]
    fn digit(&self, idx: usize, f: usize) -> usize {
        (idx / self.strides[f]) % self.dims[f]
    }

    /// Index groups an op mixes, with the block acting on each group.
    fn plan(&self, op: &Op) -> Plan {
        let mut idx = Vec::new();
        let mut sel = Vec::new();
        let (k, blocks) = match op {
            Op::Single { factor, m } => {
                for i in (0..self.dim).filter(|&i| self.digit(i, *factor) == 0) {
                    idx.extend((0..m.n).map(|a| i + a * self.strides[*factor]));
                    sel.push(0);
                }
                (m.n, vec![m.clone()])
            }
            Op::Pair { f1, f2, m } => {
                let (s1, s2) = (self.strides[*f1], self.strides[*f2]);
                for i in (0..self.dim).filter(|&i| self.digit(i, *f1) == 0 && self.digit(i, *f2) == 0) {
                    idx.extend([i, i + s2, i + s1, i + s1 + s2]);
                    sel.push(0);
                }
                (4, vec![m.clone()])
            }
            Op::Conditioned { qubit, mode, blocks } => {
                let st = self.strides[*mode];
                for i in (0..self.dim).filter(|&i| self.digit(i, *mode) == 0) {
                    idx.extend((0..blocks[0].n).map(|a| i + a * st));
                    sel.push(self.digit(i, *qubit) as u8);
                }
                (blocks[0].n, blocks.to_vec())
            }
        };
        Plan { k, idx, sel, blocks }
    }

    /// `v ← op v`.
    fn apply_vec(&self, plan: &Plan, v: &mut [C64]) {
        let k = plan.k;
        let mut x = vec![ZERO; k];
        let mut y = vec![ZERO; k];
        for (g, idx) in plan.idx.chunks_exact(k).enumerate() {
            for (xa, &i) in x.iter_mut().zip(idx) {
                *xa = v[i];
            }
            plan.blocks[plan.sel[g] as usize].apply(&x, &mut y);
            for (&i, val) in idx.iter().zip(&y) {
                v[i] = *val;
            }
        }
    }

    /// `ρ ← op ρ` by combining whole rows.
    fn apply_left(&self, plan: &Plan, rho: &mut [C64]) {
        let n = self.dim;
        let k = plan.k;
        let mut buf = vec![ZERO; k * n];
        for (g, idx) in plan.idx.chunks_exact(k).enumerate() {
            let b = &plan.blocks[plan.sel[g] as usize];
            for (a, &r) in idx.iter().enumerate() {
                buf[a * n..(a + 1) * n].copy_from_slice(&rho[r * n..(r + 1) * n]);
            }
            for (a, &r) in idx.iter().enumerate() {
                let dest = &mut rho[r * n..(r + 1) * n];
                dest.fill(ZERO);
                let (lo, hi) = b.span[a];
                for c in lo..hi {
                    let w = b.data[a * k + c];
                    if w == ZERO {
                        continue;
                    }
                    let src = &buf[c * n..(c + 1) * n];
                    for (d, s) in dest.iter_mut().zip(src) {
                        *d += w * *s;
                    }
                }
            }
        }
    }

    /// `ρ ← ρ op†`, row by row.
    fn apply_right_adjoint(&self, plan: &Plan, rho: &mut [C64]) {
        let c = plan.conj();
        for row in rho.chunks_mut(self.dim) {
            self.apply_vec(&c, row);
        }
    }
}

/// Precomputed index groups of an [`Op`] on a register.
#[derive(Clone, Debug)]
struct Plan {
    k: usize,
    idx: Vec<usize>,
    sel: Vec<u8>,
    blocks: Vec<Block>,
}

impl Plan {
    fn conj(&self) -> Self {
        Self { k: self.k, idx: self.idx.clone(), sel: self.sel.clone(), blocks: self.blocks.iter().map(Block::conj).collect() }
    }
}

/// `a ← a†` for a square row-major matrix of side `n`, in tiles.
fn adjoint_in_place(a: &mut [C64], n: usize) {
    const TILE: usize = 32;
    for bi in (0..n).step_by(TILE) {
        for bj in (bi..n).step_by(TILE) {
            for i in bi..(bi + TILE).min(n) {
                let j0 = if bi == bj { i } else { bj };
                for j in j0..(bj + TILE).min(n) {
                    let (x, y) = (a[i * n + j], a[j * n + i]);
                    a[i * n + j] = y.conj();
                    a[j * n + i] = x.conj();
                }
            }
        }
    }
}

fn pauli_along(n: [f64; 3]) -> [C64; 4] {
    [C64::new(n[2], 0.0), C64::new(n[0], -n[1]), C64::new(n[0], n[1]), C64::new(-n[2], 0.0)]
}

/// `exp(−iθ n·σ) = cos θ I − i sin θ n·σ`.
fn rotation(n: [f64; 3], theta: f64) -> [C64; 4] {
    let (s, c) = theta.sin_cos();
    let p = pauli_along(n);
    let mis = C64::new(0.0, -s);
    [C64::new(c, 0.0) + mis * p[0], mis * p[1], mis * p[2], C64::new(c, 0.0) + mis * p[3]]
}

/// Columns are the `+1` and `−1` eigenvectors of `n·σ`, row-major.
fn eigenbasis(n: [f64; 3]) -> [C64; 4] {
    let [x, y, z] = n;
    let v = if z >= 0.0 {
        let s = (2.0 * (1.0 + z)).sqrt();
        [C64::new((1.0 + z) / s, 0.0), C64::new(x / s, y / s)]
    } else {
        let s = (2.0 * (1.0 - z)).sqrt();
        [C64::new(x / s, -y / s), C64::new((1.0 - z) / s, 0.0)]
    };
    let w = [-v[1].conj(), v[0].conj()];
    [v[0], w[0], v[1], w[1]]
}

fn adjoint2(m: [C64; 4]) -> [C64; 4] {
    [m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()]
}

/// Position quadrature `b + b†` eigen-decomposition for cutoff `d`.
fn quadrature_eigen(d: usize) -> TridiagonalEigen<f64> {
    let off: Vec<f64> = (1..d).map(|n| (n as f64).sqrt()).collect();
    tridiagonal_eigen(&vec![0.0; d], &off)
}

/// `exp(−iθ (b e^{iφ_m} + b† e^{−iφ_m}))` on a `d`-level mode.
fn displacement(eig: &TridiagonalEigen<f64>, theta: f64, phi_m: f64) -> Vec<C64> {
    let d = eig.values.len();
    let phases: Vec<C64> = eig.values.iter().map(|l| C64::from_polar(1.0, -theta * l)).collect();
    let mut out = vec![ZERO; d * d];
    for m in 0..d {
        for n in 0..d {
            let mut acc = ZERO;
            for (j, ph) in phases.iter().enumerate() {
                let v = eig.vector(j);
                acc += ph * (v[m] * v[n]);
            }
            out[m * d + n] = acc * C64::from_polar(1.0, phi_m * (n as f64 - m as f64));
        }
    }
    out
}

/// Exact solution of the motional dissipator over time `t` for one band
/// `δ = m − n`, as a map on the entries `(j + max(δ,0), j + max(−δ,0))`.
fn band_propagator(d: usize, delta: isize, t_us: f64, ch: &NoiseChannels) -> DenseMatrix<f64> {
    let g = ch.gamma_m_per_us();
    let up = ch.heating_per_us();
    let down = if ch.symmetric_heating { up } else { 0.0 };
    let shift = delta.unsigned_abs();
    let len = d - shift;
    let (om, on) = if delta >= 0 { (shift, 0) } else { (0, shift) };
    // a a† in the truncated space: the top level has no partner above it.
    let aad = |k: usize| if k + 1 < d { (k + 1) as f64 } else { 0.0 };
    let mut gen = DenseMatrix::<f64>::zeros(len, len);
    for j in 0..len {
        let (m, n) = (j + om, j + on);
        let diag = -g * (delta as f64).powi(2) - 0.5 * up * (aad(m) + aad(n)) - 0.5 * down * (m + n) as f64;
        gen[(j, j)] = C64::new(diag * t_us, 0.0);
        if j > 0 && m > 0 && n > 0 {
            gen[(j, j - 1)] = C64::new(up * ((m * n) as f64).sqrt() * t_us, 0.0);
        }
        if j + 1 < len {
            gen[(j, j + 1)] = C64::new(down * (((m + 1) * (n + 1)) as f64).sqrt() * t_us, 0.0);
        }
    }
    if up == 0.0 && down == 0.0 {
        let mut p = DenseMatrix::zeros(len, len);
        for j in 0..len {
            p[(j, j)] = C64::new(gen[(j, j)].re.exp(), 0.0);
        }
        p
    } else {
        gen.expm()
    }
}

/// Motional propagator of one mode rearranged by diagonal offset: term
/// `(s, W)` maps `ρ[m−s][n−s]` into `ρ[m][n]` with weight `W[m][n]`.
struct BandWeights {
    terms: Vec<(isize, Vec<C64>)>,
}

impl BandWeights {
    fn new(d: usize, t_us: f64, ch: &NoiseChannels) -> Self {
        let mut by_shift: HashMap<isize, Vec<C64>> = HashMap::new();
        for delta in -(d as isize - 1)..d as isize {
            let p = band_propagator(d, delta, t_us, ch);
            let (om, on) = if delta >= 0 { (delta as usize, 0) } else { (0, delta.unsigned_abs()) };
            let len = d - delta.unsigned_abs();
            for j in 0..len {
                for jp in 0..len {
                    let v = p[(j, jp)];
                    if v.norm() <= DROP {
                        continue;
                    }
                    let s = j as isize - jp as isize;
                    by_shift.entry(s).or_insert_with(|| vec![ZERO; d * d])[(j + om) * d + j + on] = v;
                }
            }
        }
        let mut terms: Vec<(isize, Vec<C64>)> = by_shift.into_iter().collect();
        terms.sort_by_key(|t| (t.0.abs(), t.0));
        Self { terms }
    }
}

/// Dissipation time not yet applied, per mode and per qubit.
struct Pending {
    modes: Vec<f64>,
    /// `(dephasing axis, time)` in application order.
    laser: Vec<Vec<([f64; 3], f64)>>,
}

impl Pending {
    fn new(qubits: usize, modes: usize) -> Self {
        Self { modes: vec![0.0; modes], laser: vec![Vec::new(); qubits] }
    }

    fn add(&mut self, p: &NativePulse, t: f64) {
        for m in &mut self.modes {
            *m += t;
        }
        for (&q, tag) in p.qubits.iter().zip(&p.frame) {
            let axis = tag.dephasing_axis();
            match self.laser[q].last_mut() {
                Some((a, acc)) if *a == axis => *acc += t,
                _ => self.laser[q].push((axis, t)),
            }
        }
    }
}

/// Pulse unitary as a sequence of local operations (first applied first).
fn pulse_ops(p: &NativePulse, qubits: usize, eig: &[TridiagonalEigen<f64>]) -> Result<Vec<Op>> {
    let block2 = |m: [C64; 4]| Block::new(2, m.to_vec());
    Ok(match p.kind {
        PulseKind::Carrier => vec![Op::Single { factor: p.qubits[0], m: block2(rotation(p.axis(0), p.angle)) }],
        PulseKind::Sdf => {
            let q = p.qubits[0];
            let k = p.mode.ok_or_else(|| Error::InvalidArgument("force pulse without a mode".into()))?;
            let e = eig.get(k).ok_or(Error::IndexOutOfRange { what: "mode", index: k, len: eig.len() })?;
            let d = e.values.len();
            let v = eigenbasis(p.axis(0));
            let plus = Block::new(d, displacement(e, p.angle, p.phi_m));
            let minus = Block::new(d, displacement(e, -p.angle, p.phi_m));
            vec![
                Op::Single { factor: q, m: block2(adjoint2(v)) },
                Op::Conditioned { qubit: q, mode: qubits + k, blocks: [plus, minus] },
                Op::Single { factor: q, m: block2(v) },
            ]
        }
        PulseKind::Ms => {
            let a = pauli_along(p.axis(0));
            let b = pauli_along(p.axis(1));
            let (s, c) = p.angle.sin_cos();
            let mut m = vec![ZERO; 16];
            for (i, j, k, l) in (0..2).flat_map(|i| (0..2).flat_map(move |j| (0..2).flat_map(move |k| (0..2).map(move |l| (i, j, k, l))))) {
                // row (i, k), column (j, l)
                let ab = a[i * 2 + j] * b[k * 2 + l];
                let id = if i == j && k == l { C64::new(c, 0.0) } else { ZERO };
                m[(i * 2 + k) * 4 + (j * 2 + l)] = id + C64::new(0.0, -s) * ab;
            }
            vec![Op::Pair { f1: p.qubits[0], f2: p.qubits[1], m: Block::new(4, m) }]
        }
    })
}

/// Diagnostics collected by a noisy run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NoisyDiagnostics {
    pub pulses: usize,
    pub max_trace_error: f64,
    pub positivity_checks: usize,
    /// Checks that failed at the `−1e-8` invariant level (but passed `−1e-6`).
    pub positivity_violations: usize,
    /// Lab time integrated under noise, µs.
    pub noisy_time_us: f64,
}

/// Emulator bound to one schedule and register size.
pub struct IonEmulator<'a> {
    schedule: &'a PulseSchedule,
    config: EmulatorConfig,
    layout: SpaceLayout,
    geo: Geometry,
    eig: Vec<TridiagonalEigen<f64>>,
    /// Keyed by cutoff, duration and the motional rates in use.
    bands: HashMap<(usize, u64, [u64; 3]), Arc<BandWeights>>,
}

impl<'a> IonEmulator<'a> {
    pub fn new(schedule: &'a PulseSchedule, config: EmulatorConfig) -> Result<Self> {
        let modes = schedule.spec().modes();
        if config.cutoffs.len() != modes {
            return Err(Error::LayoutMismatch(format!("{} cutoffs for {modes} modes", config.cutoffs.len())));
        }
        if config.initial_state >= schedule.spec().states() {
            return Err(Error::IndexOutOfRange {
                what: "initial state",
                index: config.initial_state,
                len: schedule.spec().states(),
            });
        }
        let layout = SpaceLayout::qubits(schedule.qubits(), config.cutoffs.clone())?.with_limit(config.dimension_limit)?;
        let geo = Geometry::new(layout.dims());
        let eig = config.cutoffs.iter().map(|&d| quadrature_eigen(d)).collect();
        Ok(Self { schedule, config, layout, geo, eig, bands: HashMap::new() })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.geo.dim
    }

    fn initial_index(&self) -> usize {
        let bits = self.schedule.lowering.initial_bits(self.config.initial_state);
        bits.iter().enumerate().map(|(q, &b)| b as usize * self.geo.strides[q]).sum()
    }

    pub fn initial_vector(&self) -> Vec<C64> {
        let mut v = vec![ZERO; self.geo.dim];
        v[self.initial_index()] = ONE;
        v
    }

    pub fn initial_density(&self) -> DenseMatrix<f64> {
        let n = self.geo.dim;
        let mut r = DenseMatrix::zeros(n, n);
        let i = self.initial_index();
        r[(i, i)] = ONE;
        r
    }

    /// Ideal pulse action on a state vector.
    pub fn apply_pulse(&self, p: &NativePulse, v: &mut [C64]) -> Result<()> {
        for op in pulse_ops(p, self.schedule.qubits(), &self.eig)? {
            self.geo.apply_vec(&self.geo.plan(&op), v);
        }
        Ok(())
    }

    /// `ρ ← U ρ U†` for the pulse unitary.
    pub fn apply_pulse_density(&self, p: &NativePulse, rho: &mut DenseMatrix<f64>) -> Result<()> {
        let plans: Vec<Plan> = pulse_ops(p, self.schedule.qubits(), &self.eig)?.iter().map(|op| self.geo.plan(op)).collect();
        // For Hermitian ρ, U ρ U† = U (U ρ)†, so both passes combine rows.
        for plan in &plans {
            self.geo.apply_left(plan, rho.as_mut_slice());
        }
        adjoint_in_place(rho.as_mut_slice(), self.geo.dim);
        for plan in &plans {
            self.geo.apply_left(plan, rho.as_mut_slice());
        }
        Ok(())
    }

    fn weights_for(&mut self, d: usize, t_us: f64, ch: &NoiseChannels) -> Arc<BandWeights> {
        if self.bands.len() > 256 {
            self.bands.clear();
        }
        let down = if ch.symmetric_heating { ch.heating_per_us() } else { 0.0 };
        let rates = [ch.gamma_m_per_us().to_bits(), ch.heating_per_us().to_bits(), down.to_bits()];
        self.bands.entry((d, t_us.to_bits(), rates)).or_insert_with(|| Arc::new(BandWeights::new(d, t_us, ch))).clone()
    }

    /// Exact motional dissipation of mode `k` over `t_us`.
    fn dissipate_mode(&mut self, rho: &mut DenseMatrix<f64>, k: usize, t_us: f64, ch: &NoiseChannels) {
        if t_us <= 0.0 || (ch.gamma_m_per_us() == 0.0 && ch.heating_per_us() == 0.0) {
            return;
        }
        let d = self.config.cutoffs[k];
        let w = self.weights_for(d, t_us, ch);
        let n = self.geo.dim;
        let f = self.schedule.qubits() + k;
        let st = self.geo.strides[f];
        let outer = d * st;
        let data = rho.as_mut_slice();
        let mut buf = vec![ZERO; d * n];
        for r0 in (0..n).filter(|&i| self.geo.digit(i, f) == 0) {
            for m in 0..d {
                let r = (r0 + m * st) * n;
                buf[m * n..(m + 1) * n].copy_from_slice(&data[r..r + n]);
            }
            for m in 0..d {
                let dest = &mut data[(r0 + m * st) * n..(r0 + m * st + 1) * n];
                dest.fill(ZERO);
                for (s, table) in &w.terms {
                    let ms = m as isize - s;
                    if ms < 0 || ms >= d as isize {
                        continue;
                    }
                    let src = &buf[ms as usize * n..(ms as usize + 1) * n];
                    let row = &table[m * d..(m + 1) * d];
                    let (lo, hi) = ((*s).max(0) as usize, (d as isize + s).min(d as isize) as usize);
                    let shift = s * st as isize;
                    for hi_base in (0..n).step_by(outer) {
                        for (nd, &wv) in row.iter().enumerate().take(hi).skip(lo) {
                            if wv == ZERO {
                                continue;
                            }
                            let c = hi_base + nd * st;
                            let sc = (c as isize - shift) as usize;
                            for (x, y) in dest[c..c + st].iter_mut().zip(&src[sc..sc + st]) {
                                *x += wv * *y;
                            }
                        }
                    }
                }
            }
        }
    }

    /// `ρ ← a ρ + b P ρ P` with `P` the Pauli operator along `axis` on qubit `q`.
    fn dephase_qubit(&self, rho: &mut DenseMatrix<f64>, q: usize, axis: [f64; 3], t_us: f64, ch: &NoiseChannels) {
        let gl = ch.gamma_l_per_us();
        if t_us <= 0.0 || gl == 0.0 {
            return;
        }
        let e = (-gl * t_us).exp();
        let (a, b) = (0.5 * (1.0 + e), 0.5 * (1.0 - e));
        let p = pauli_along(axis);
        let n = self.geo.dim;
        let st = self.geo.strides[q];
        let data = rho.as_mut_slice();
        let lows: Vec<usize> = (0..n).filter(|&i| self.geo.digit(i, q) == 0).collect();
        for &r0 in &lows {
            let r1 = r0 + st;
            for &c0 in &lows {
                let c1 = c0 + st;
                let m = [data[r0 * n + c0], data[r0 * n + c1], data[r1 * n + c0], data[r1 * n + c1]];
                // P M
                let pm = [
                    p[0] * m[0] + p[1] * m[2],
                    p[0] * m[1] + p[1] * m[3],
                    p[2] * m[0] + p[3] * m[2],
                    p[2] * m[1] + p[3] * m[3],
                ];
                // (P M) P
                let pmp = [
                    pm[0] * p[0] + pm[1] * p[2],
                    pm[0] * p[1] + pm[1] * p[3],
                    pm[2] * p[0] + pm[3] * p[2],
                    pm[2] * p[1] + pm[3] * p[3],
                ];
                data[r0 * n + c0] = m[0] * a + pmp[0] * b;
                data[r0 * n + c1] = m[1] * a + pmp[1] * b;
                data[r1 * n + c0] = m[2] * a + pmp[2] * b;
                data[r1 * n + c1] = m[3] * a + pmp[3] * b;
            }
        }
    }

    fn flush_mode(&mut self, rho: &mut DenseMatrix<f64>, pending: &mut Pending, k: usize, ch: &NoiseChannels) {
        let t = std::mem::take(&mut pending.modes[k]);
        self.dissipate_mode(rho, k, t, ch);
    }

    fn flush_qubit(&self, rho: &mut DenseMatrix<f64>, pending: &mut Pending, q: usize, ch: &NoiseChannels) {
        for (axis, t) in std::mem::take(&mut pending.laser[q]) {
            self.dephase_qubit(rho, q, axis, t, ch);
        }
    }

    fn flush_all(&mut self, rho: &mut DenseMatrix<f64>, pending: &mut Pending, ch: &NoiseChannels) {
        for k in 0..pending.modes.len() {
            self.flush_mode(rho, pending, k, ch);
        }
        for q in 0..pending.laser.len() {
            self.flush_qubit(rho, pending, q, ch);
        }
    }

    /// Strang step `D(t/2) U D(t/2)` for one pulse. Dissipators that commute
    /// with `U` stay pending so they merge with the neighbouring half steps.
    fn strang(&mut self, rho: &mut DenseMatrix<f64>, p: &NativePulse, ch: &NoiseChannels, pending: &mut Pending) -> Result<()> {
        let half = 0.5 * p.duration_us;
        pending.add(p, half);
        if let Some(k) = p.mode {
            self.flush_mode(rho, pending, k, ch);
        }
        for &q in &p.qubits {
            self.flush_qubit(rho, pending, q, ch);
        }
        self.apply_pulse_density(p, rho)?;
        pending.add(p, half);
        Ok(())
    }

    /// One pulse under the Lindblad equation: half dissipation, the pulse
    /// unitary, half dissipation.
    pub fn lindblad_step(&mut self, rho: &mut DenseMatrix<f64>, p: &NativePulse, ch: &NoiseChannels) -> Result<()> {
        let mut pending = Pending::new(self.schedule.qubits(), self.config.cutoffs.len());
        self.strang(rho, p, ch, &mut pending)?;
        self.flush_all(rho, &mut pending, ch);
        Ok(())
    }

    fn check_trace(rho: &DenseMatrix<f64>, diag: &mut NoisyDiagnostics) -> Result<()> {
        let tr = rho.trace().re;
        let err = (tr - 1.0).abs();
        diag.max_trace_error = diag.max_trace_error.max(err);
        if !(err <= TRACE_FAILURE) {
            return Err(Error::NumericalFailure(format!("density-matrix trace drifted to {tr}")));
        }
        Ok(())
    }

    fn check_positive(rho: &DenseMatrix<f64>, diag: &mut NoisyDiagnostics) -> Result<()> {
        diag.positivity_checks += 1;
        if !is_positive_with_shift(rho, NEGATIVITY_INVARIANT) {
            if !is_positive_with_shift(rho, NEGATIVITY_FAILURE) {
                return Err(Error::NumericalFailure(format!(
                    "density matrix has an eigenvalue below −{NEGATIVITY_FAILURE:e}"
                )));
            }
            diag.positivity_violations += 1;
        }
        Ok(())
    }

    fn noisy_pulses(
        &mut self,
        rho: &mut DenseMatrix<f64>,
        pulses: &[NativePulse],
        ch: &NoiseChannels,
        diag: &mut NoisyDiagnostics,
    ) -> Result<()> {
        let mut pending = Pending::new(self.schedule.qubits(), self.config.cutoffs.len());
        let mut last_step = None;
        for p in pulses {
            if self.config.positivity == PositivityCheck::EveryStep && last_step.is_some_and(|s| s != p.step) {
                self.flush_all(rho, &mut pending, ch);
                Self::check_positive(rho, diag)?;
            }
            last_step = Some(p.step);
            self.strang(rho, p, ch, &mut pending)?;
            diag.pulses += 1;
            diag.noisy_time_us += p.duration_us;
            Self::check_trace(rho, diag)?;
            if self.config.positivity == PositivityCheck::EveryPulse {
                self.flush_all(rho, &mut pending, ch);
                Self::check_positive(rho, diag)?;
            }
        }
        self.flush_all(rho, &mut pending, ch);
        if self.config.positivity == PositivityCheck::EveryStep && last_step.is_some() {
            Self::check_positive(rho, diag)?;
        }
        Ok(())
    }

    fn frame_ops(&self, t: f64) -> Vec<Plan> {
        self.schedule
            .frame_correction(t)
            .into_iter()
            .enumerate()
            .map(|(q, u)| self.geo.plan(&Op::Single { factor: q, m: Block::new(2, vec![u[0][0], u[0][1], u[1][0], u[1][1]]) }))
            .collect()
    }

    /// Electronic populations and per-mode leakage from a register diagonal.
    fn observe(&self, diag: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let pops = self
            .schedule
            .lowering
            .readout()
            .iter()
            .map(|&(q, v)| hilbert::marginal(&self.layout, diag, q)[v as usize])
            .collect();
        (pops, hilbert::leakage(&self.layout, diag))
    }

    fn observe_vector(&self, v: &[C64], t: f64) -> (Vec<f64>, Vec<f64>) {
        let mut w = v.to_vec();
        for op in self.frame_ops(t) {
            self.geo.apply_vec(&op, &mut w);
        }
        let diag: Vec<f64> = w.iter().map(|a| a.norm_sqr()).collect();
        self.observe(&diag)
    }

    /// Frame-corrected copy of `ρ`.
    pub fn corrected_density(&self, rho: &DenseMatrix<f64>, t: f64) -> DenseMatrix<f64> {
        let mut r = rho.clone();
        for op in self.frame_ops(t) {
            self.geo.apply_left(&op, r.as_mut_slice());
            self.geo.apply_right_adjoint(&op, r.as_mut_slice());
        }
        r
    }

    fn observe_density(&self, rho: &DenseMatrix<f64>, t: f64) -> (Vec<f64>, Vec<f64>) {
        let r = self.corrected_density(rho, t);
        let diag: Vec<f64> = (0..self.geo.dim).map(|i| r[(i, i)].re).collect();
        self.observe(&diag)
    }

    fn finish(&self, method: &str, times: Vec<f64>, rows: Vec<(Vec<f64>, Vec<f64>)>) -> PopulationTrace<f64> {
        let modes = self.config.cutoffs.len();
        let mut per_mode = vec![0.0f64; modes];
        let mut pops = Vec::with_capacity(rows.len());
        let mut leak = Vec::with_capacity(rows.len());
        for (p, l) in rows {
            for (m, x) in per_mode.iter_mut().zip(&l) {
                *m = m.max(*x);
            }
            leak.push(l.iter().copied().fold(0.0, f64::max));
            pops.push(p);
        }
        let mut meta = TraceMetadata::new(method);
        meta.cutoffs = self.config.cutoffs.clone();
        meta.leakage_per_mode = per_mode;
        meta.note("trotter_steps", self.schedule.steps);
        meta.note("operation_time_us", self.schedule.operation_time_us);
        PopulationTrace::new(times, pops, leak, meta)
    }

    /// Noise-free run on a state vector, sampled at `times` (fs).
    pub fn run_ideal(&self, times: &[f64]) -> Result<PopulationTrace<f64>> {
        validate_grid(times)?;
        let mut v = self.initial_vector();
        let mut done = 0;
        let mut rows = Vec::with_capacity(times.len());
        for &t in times {
            let tr = self.schedule.truncate_at(t)?;
            for p in &self.schedule.prefix(tr.whole_steps)[self.schedule.prefix(done).len()..] {
                self.apply_pulse(p, &mut v)?;
            }
            done = tr.whole_steps;
            if tr.partial.is_empty() {
                rows.push(self.observe_vector(&v, t));
            } else {
                let mut w = v.clone();
                for p in &tr.partial {
                    self.apply_pulse(p, &mut w)?;
                }
                rows.push(self.observe_vector(&w, t));
            }
        }
        Ok(self.finish("ion-ideal", times.to_vec(), rows))
    }

    /// Lindblad run on a density matrix, sampled at `times` (fs).
    pub fn run_noisy(&mut self, times: &[f64], ch: &NoiseChannels) -> Result<(PopulationTrace<f64>, NoisyDiagnostics)> {
        validate_grid(times)?;
        ch.validate()?;
        let mut rho = self.initial_density();
        let mut diag = NoisyDiagnostics::default();
        let mut done = 0;
        let mut rows = Vec::with_capacity(times.len());
        for &t in times {
            let tr = self.schedule.truncate_at(t)?;
            let start = self.schedule.prefix(done).len();
            let pulses = self.schedule.prefix(tr.whole_steps)[start..].to_vec();
            self.noisy_pulses(&mut rho, &pulses, ch, &mut diag)?;
            done = tr.whole_steps;
            let snapshot = if tr.partial.is_empty() {
                rho.clone()
            } else {
                let mut r = rho.clone();
                self.noisy_pulses(&mut r, &tr.partial, ch, &mut diag)?;
                r
            };
            if self.config.positivity == PositivityCheck::GridPoints {
                Self::check_positive(&snapshot, &mut diag)?;
            }
            rows.push(self.observe_density(&snapshot, t));
        }
        let mut trace = self.finish("ion-noisy", times.to_vec(), rows);
        trace.metadata.note("max_trace_error", diag.max_trace_error);
        trace.metadata.note("positivity_checks", diag.positivity_checks);
        trace.metadata.note("positivity_violations", diag.positivity_violations);
        Ok((trace, diag))
    }

    /// Density matrix after Trotter steps `1..=s`, frame corrected.
    pub fn run_schedule(&mut self, ch: &NoiseChannels, s: usize) -> Result<(DenseMatrix<f64>, NoisyDiagnostics)> {
        if s > self.schedule.steps {
            return Err(Error::InvalidArgument(format!("step {s} beyond the {} compiled steps", self.schedule.steps)));
        }
        let mut rho = self.initial_density();
        let mut diag = NoisyDiagnostics::default();
        let pulses = self.schedule.prefix(s).to_vec();
        self.noisy_pulses(&mut rho, &pulses, ch, &mut diag)?;
        Ok((self.corrected_density(&rho, s as f64 * self.schedule.step_fs), diag))
    }

    /// Free dissipative evolution for `t_us` with no pulse (motional channels
    /// only).
    pub fn idle(&mut self, rho: &mut DenseMatrix<f64>, t_us: f64, ch: &NoiseChannels) {
        for k in 0..self.config.cutoffs.len() {
            self.dissipate_mode(rho, k, t_us, ch);
        }
    }
}

/// Draws `R` projective shots per readout qubit at every time point and
/// attaches sample frequencies and `√(P̂(1−P̂)/R)` uncertainties. Time point
/// `i` uses ChaCha20 stream `i` of `seed`, so results are independent of
/// evaluation order.
pub fn measure_with_shot_noise(
    trace: &PopulationTrace<f64>,
    readout: &[(usize, u8)],
    runs: usize,
    seed: u64,
) -> Result<PopulationTrace<f64>> {
    if runs == 0 {
        return Err(Error::InvalidArgument("at least one run per time point is needed".into()));
    }
    let mut values = Vec::with_capacity(trace.times.len());
    let mut sigma = Vec::with_capacity(trace.times.len());
    for (i, pops) in trace.populations.iter().enumerate() {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut per_qubit: HashMap<usize, f64> = HashMap::new();
        let mut row_v = Vec::with_capacity(pops.len());
        let mut row_s = Vec::with_capacity(pops.len());
        for (state, &(q, v)) in readout.iter().enumerate() {
            let p_one = match per_qubit.get(&q) {
                Some(f) => *f,
                None => {
                    // Probability that qubit q reads 1, from this state's readout.
                    let p = if v == 1 { pops[state] } else { 1.0 - pops[state] };
                    let f = sample_frequency(&mut rng, p, runs)?;
                    per_qubit.insert(q, f);
                    f
                }
            };
            let f = if v == 1 { p_one } else { 1.0 - p_one };
            row_v.push(f);
            row_s.push(shot_noise(f, runs));
        }
        values.push(row_v);
        sigma.push(row_s);
    }
    let mut out = trace.clone();
    out.sampled = Some(SampledColumns { values, sigma });
    out.metadata.note("runs_per_point", runs);
    out.metadata.note("seed", seed);
    Ok(out)
}

/// Fraction of `runs` Bernoulli(`p`) outcomes that came out 1.
pub fn sample_frequency(rng: &mut ChaCha20Rng, p: f64, runs: usize) -> Result<f64> {
    let p = p.clamp(0.0, 1.0);
    let b = Binomial::new(runs as u64, p).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    Ok(b.sample(rng) as f64 / runs as f64)
}

/// `√(P(1−P)/R)`.
pub fn shot_noise(p: f64, runs: usize) -> f64 {
    (p * (1.0 - p) / runs as f64).max(0.0).sqrt()
}
