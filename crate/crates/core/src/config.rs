//! Structured text configuration shared by the front ends.
//!
//! Files are TOML. Every physical quantity carries its unit in the key name
//! (`*_ev`, `*_fs`); energies are converted to rad/fs on load. A model file
//! holds `[model]`, `[modes]` and `[drive]`; a run file adds `[run]` and the
//! per-back-end sections.

use serde::{Deserialize, Serialize};

use crate::emulator::PositivityCheck;
use crate::error::{Error, Result};
use crate::exact::Frame;
use crate::hardware::HardwareParams;
use crate::linalg::DenseMatrix;
use crate::model::{
    build_ci_model, build_toy_model, build_vaet_model, illustrative_plet, DipoleTransition, DriveSpec, Envelope,
    FieldSpec, LvcmSpec,
};
use crate::numeric::C;
use crate::pulse::{CompileOptions, Encoding, FrameMode, TermOrder};
use crate::units::{ev_to_rad_per_fs, exact_ev_representation, rad_per_fs_to_ev};

/// Converts a TOML error into [`Error::Parse`] with a 1-based line number and
/// the offending key.
pub fn toml_error(text: &str, e: &toml::de::Error) -> Error {
    let line = e.span().map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
    let msg = e.message().to_string();
    let quoted = msg.split('`').nth(1).map(str::to_string);
    let field_error = msg.starts_with("missing field") || msg.starts_with("unknown field");
    let key = match (field_error, quoted) {
        (true, Some(q)) => q,
        (_, q) => {
            let k = line_key(text, line);
            if k.is_empty() {
                q.unwrap_or_default()
            } else {
                k
            }
        }
    };
    Error::Parse { line, key, message: msg }
}

fn line_key(text: &str, line: usize) -> String {
    text.lines()
        .nth(line.saturating_sub(1))
        .and_then(|l| l.split('=').next())
        .map(|k| k.trim().trim_matches(|c| c == '[' || c == ']').to_string())
        .unwrap_or_default()
}

/// Line of the first assignment to `key`, or 0.
fn key_line(text: &str, key: &str) -> usize {
    text.lines()
        .position(|l| {
            let t = l.trim_start();
            t.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
        })
        .map_or(0, |i| i + 1)
}

fn semantic(text: &str, key: &str, message: impl Into<String>) -> Error {
    Error::Parse { line: key_line(text, key), key: key.to_string(), message: message.into() }
}

/// eV value for a stored angular frequency; exact on reload whenever such
/// a value exists.
fn to_ev(w: f64) -> f64 {
    exact_ev_representation(w).unwrap_or_else(|| rad_per_fs_to_ev(w))
}

fn from_ev(x: f64) -> f64 {
    ev_to_rad_per_fs(x)
}

/// `Δ_ij` entry (the Hermitian partner is implied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingEntry {
    pub i: usize,
    pub j: usize,
    pub re_ev: f64,
    #[serde(default)]
    pub im_ev: f64,
}

/// `κ_ijk` entry (the Hermitian partner is implied).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeCouplingEntry {
    pub mode: usize,
    pub i: usize,
    pub j: usize,
    pub re_ev: f64,
    #[serde(default)]
    pub im_ev: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `toy`, `ci`, `vaet`, `plet`; absent for an explicit model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda_over_delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kx_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kz_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nux_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuz_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_d_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_a_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_d1_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_d2_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_a2_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_a3_ev: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu_ev: Option<[f64; 3]>,
    /// `left` or `right` circular polarization.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polarization: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies_ev: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<CouplingEntry>,
}

impl ModelSection {
    fn set_keys(&self) -> Vec<&'static str> {
        let mut k = Vec::new();
        let mut add = |name, set: bool| {
            if set {
                k.push(name)
            }
        };
        add("lambda_over_delta", self.lambda_over_delta.is_some());
        add("modes", self.modes.is_some());
        add("kx_ev", self.kx_ev.is_some());
        add("kz_ev", self.kz_ev.is_some());
        add("nux_ev", self.nux_ev.is_some());
        add("nuz_ev", self.nuz_ev.is_some());
        add("e_d_ev", self.e_d_ev.is_some());
        add("e_a_ev", self.e_a_ev.is_some());
        add("delta_ev", self.delta_ev.is_some());
        add("kappa_d1_ev", self.kappa_d1_ev.is_some());
        add("kappa_d2_ev", self.kappa_d2_ev.is_some());
        add("kappa_a2_ev", self.kappa_a2_ev.is_some());
        add("kappa_a3_ev", self.kappa_a3_ev.is_some());
        add("nu_ev", self.nu_ev.is_some());
        add("polarization", self.polarization.is_some());
        add("energies_ev", self.energies_ev.is_some());
        add("couplings", !self.couplings.is_empty());
        k
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModesSection {
    pub frequencies_ev: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub couplings: Vec<ModeCouplingEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransitionEntry {
    pub from: usize,
    pub to: usize,
    pub dipole: [f64; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default = "yes")]
    pub rwa: bool,
    pub carrier_ev: f64,
    pub amplitude_ev: f64,
    /// `[[re, im], [re, im]]`
    pub polarization: [[f64; 2]; 2],
    /// `constant` or `gaussian`.
    pub envelope: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_fs: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width_fs: Option<f64>,
    pub transitions: Vec<TransitionEntry>,
}

fn yes() -> bool {
    true
}

/// A model file: `[model]`, `[modes]`, `[drive]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<ModesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
}

/// Symmetric conical-intersection preset, eV.
pub const CI_PRESET_EV: [f64; 4] = [0.02, 0.02, 0.08, 0.08];
/// Illustrative vibrationally assisted transfer preset, eV:
/// `E_D, E_A, Δ, κ_D1, κ_D2, κ_A2, κ_A3`, then the three frequencies. The
/// donor–acceptor gap matches the shared mode.
pub const VAET_PRESET_EV: ([f64; 7], [f64; 3]) = ([0.1, 0.0, 0.02, 0.02, 0.03, 0.03, 0.02], [0.05, 0.1, 0.15]);

pub fn toy_model_file(modes: usize, lambda_over_delta: f64) -> ModelFile {
    ModelFile {
        model: ModelSection {
            preset: Some("toy".into()),
            lambda_over_delta: Some(lambda_over_delta),
            modes: Some(modes),
            ..Default::default()
        },
        ..Default::default()
    }
}

impl ModelFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        let f: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        f.check_keys(text)?;
        Ok(f)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("model file serializes")
    }

    fn check_keys(&self, text: &str) -> Result<()> {
        let allowed: &[&str] = match self.model.preset.as_deref() {
            Some("toy") => &["lambda_over_delta", "modes"],
            Some("ci") => &["kx_ev", "kz_ev", "nux_ev", "nuz_ev"],
            Some("vaet") => {
                &["e_d_ev", "e_a_ev", "delta_ev", "kappa_d1_ev", "kappa_d2_ev", "kappa_a2_ev", "kappa_a3_ev", "nu_ev"]
            }
            Some("plet") => &["polarization"],
            None => &["energies_ev", "couplings"],
            Some(other) => {
                return Err(semantic(text, "preset", format!("unknown preset `{other}` (toy, ci, vaet, plet)")))
            }
        };
        if let Some(bad) = self.model.set_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(semantic(text, bad, "key does not apply to this model"));
        }
        if self.model.preset.is_some() {
            if self.modes.is_some() {
                return Err(semantic(text, "frequencies_ev", "presets define their own modes"));
            }
            if self.drive.is_some() {
                return Err(semantic(text, "carrier_ev", "presets define their own drive"));
            }
        }
        Ok(())
    }

    /// Builds the model; `text` (the source, if any) is used to locate keys
    /// in error messages.
    pub fn build_with_source(&self, text: &str) -> Result<LvcmSpec<f64>> {
        let m = &self.model;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| semantic(text, key, "missing value"));
        let wrap = |r: Result<LvcmSpec<f64>>, key: &str| r.map_err(|e| semantic(text, key, e.to_string()));
        match m.preset.as_deref() {
            Some("toy") => {
                let n = m.modes.ok_or_else(|| semantic(text, "modes", "missing value"))?;
                let l = need(m.lambda_over_delta, "lambda_over_delta")?;
                wrap(build_toy_model(n, l), "lambda_over_delta")
            }
            Some("ci") => {
                let [kx, kz, nux, nuz] = CI_PRESET_EV;
                wrap(
                    build_ci_model(
                        from_ev(m.kx_ev.unwrap_or(kx)),
                        from_ev(m.kz_ev.unwrap_or(kz)),
                        from_ev(m.nux_ev.unwrap_or(nux)),
                        from_ev(m.nuz_ev.unwrap_or(nuz)),
                    ),
                    "nux_ev",
                )
            }
            Some("vaet") => {
                let (p, nu) = VAET_PRESET_EV;
                let nu = m.nu_ev.unwrap_or(nu).map(from_ev);
                wrap(
                    build_vaet_model(
                        from_ev(m.e_d_ev.unwrap_or(p[0])),
                        from_ev(m.e_a_ev.unwrap_or(p[1])),
                        from_ev(m.delta_ev.unwrap_or(p[2])),
                        from_ev(m.kappa_d1_ev.unwrap_or(p[3])),
                        from_ev(m.kappa_d2_ev.unwrap_or(p[4])),
                        from_ev(m.kappa_a2_ev.unwrap_or(p[5])),
                        from_ev(m.kappa_a3_ev.unwrap_or(p[6])),
                        nu,
                    ),
                    "nu_ev",
                )
            }
            Some("plet") => {
                let left = match m.polarization.as_deref().unwrap_or("left") {
                    "left" => true,
                    "right" => false,
                    other => {
                        return Err(semantic(text, "polarization", format!("`{other}` is not left or right")))
                    }
                };
                wrap(illustrative_plet(left), "polarization")
            }
            None => self.build_explicit(text),
            Some(other) => Err(semantic(text, "preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn build(&self) -> Result<LvcmSpec<f64>> {
        self.build_with_source("")
    }

    fn build_explicit(&self, text: &str) -> Result<LvcmSpec<f64>> {
        let e = self.model.energies_ev.as_ref().ok_or_else(|| semantic(text, "energies_ev", "missing value"))?;
        let m = e.len();
        let mut delta = DenseMatrix::zeros(m, m);
        for (i, &x) in e.iter().enumerate() {
            delta[(i, i)] = C::new(from_ev(x), 0.0);
        }
        for c in &self.model.couplings {
            if c.i >= m || c.j >= m || c.i == c.j {
                return Err(semantic(text, "couplings", format!("bad state pair ({}, {})", c.i, c.j)));
            }
            let v = C::new(from_ev(c.re_ev), from_ev(c.im_ev));
            delta[(c.i, c.j)] = v;
            delta[(c.j, c.i)] = v.conj();
        }
        let (nu, kappa) = match &self.modes {
            None => (Vec::new(), Vec::new()),
            Some(ms) => {
                let n = ms.frequencies_ev.len();
                let mut kappa = vec![DenseMatrix::zeros(m, m); n];
                for c in &ms.couplings {
                    if c.mode >= n || c.i >= m || c.j >= m {
                        return Err(semantic(
                            text,
                            "couplings",
                            format!("bad mode coupling (mode {}, {}, {})", c.mode, c.i, c.j),
                        ));
                    }
                    let v = C::new(from_ev(c.re_ev), from_ev(c.im_ev));
                    kappa[c.mode][(c.i, c.j)] = v;
                    kappa[c.mode][(c.j, c.i)] = v.conj();
                    if c.i == c.j && c.im_ev != 0.0 {
                        return Err(semantic(text, "im_ev", "diagonal couplings must be real"));
                    }
                }
                (ms.frequencies_ev.iter().map(|&x| from_ev(x)).collect(), kappa)
            }
        };
        let drive = match &self.drive {
            None => None,
            Some(d) => Some(drive_from_section(d, text)?),
        };
        LvcmSpec::new(delta, kappa, nu, drive).map_err(|e| semantic(text, "energies_ev", e.to_string()))
    }

    /// Explicit form of any model. Values round-trip bit-exactly whenever
    /// the stored angular frequency has an exact eV representation (always
    /// the case for models built from eV inputs).
    pub fn from_spec(spec: &LvcmSpec<f64>) -> Self {
        let m = spec.states();
        let d = spec.delta();
        let mut couplings = Vec::new();
        for i in 0..m {
            for j in i + 1..m {
                let v = d[(i, j)];
                if v != C::new(0.0, 0.0) {
                    couplings.push(CouplingEntry { i, j, re_ev: to_ev(v.re), im_ev: to_ev(v.im) });
                }
            }
        }
        let model = ModelSection {
            energies_ev: Some((0..m).map(|i| to_ev(d[(i, i)].re)).collect()),
            couplings,
            ..Default::default()
        };
        let modes = (spec.modes() > 0).then(|| {
            let mut couplings = Vec::new();
            for (k, kk) in spec.kappa_all().iter().enumerate() {
                for i in 0..m {
                    for j in i..m {
                        let v = kk[(i, j)];
                        if v != C::new(0.0, 0.0) {
                            couplings.push(ModeCouplingEntry { mode: k, i, j, re_ev: to_ev(v.re), im_ev: to_ev(v.im) });
                        }
                    }
                }
            }
            ModesSection { frequencies_ev: spec.nu().iter().map(|&w| to_ev(w)).collect(), couplings }
        });
        let drive = spec.drive().map(|dr| {
            let f = &dr.field;
            let (envelope, center_fs, width_fs) = match f.envelope {
                Envelope::Constant => ("constant".to_string(), None, None),
                Envelope::Gaussian { center_fs, width_fs } => ("gaussian".to_string(), Some(center_fs), Some(width_fs)),
            };
            DriveSection {
                rwa: dr.rwa,
                carrier_ev: to_ev(f.carrier),
                amplitude_ev: to_ev(f.amplitude),
                polarization: f.polarization.map(|z| [z.re, z.im]),
                envelope,
                center_fs,
                width_fs,
                transitions: dr
                    .transitions
                    .iter()
                    .map(|t| TransitionEntry { from: t.from, to: t.to, dipole: t.mu })
                    .collect(),
            }
        });
        Self { model, modes, drive }
    }
}

fn drive_from_section(d: &DriveSection, text: &str) -> Result<DriveSpec<f64>> {
    let envelope = match d.envelope.as_str() {
        "constant" => Envelope::Constant,
        "gaussian" => Envelope::Gaussian {
            center_fs: d.center_fs.ok_or_else(|| semantic(text, "center_fs", "missing value"))?,
            width_fs: d.width_fs.ok_or_else(|| semantic(text, "width_fs", "missing value"))?,
        },
        other => return Err(semantic(text, "envelope", format!("`{other}` is not constant or gaussian"))),
    };
    Ok(DriveSpec {
        transitions: d.transitions.iter().map(|t| DipoleTransition { from: t.from, to: t.to, mu: t.dipole }).collect(),
        field: FieldSpec {
            polarization: d.polarization.map(|[re, im]| C::new(re, im)),
            amplitude: from_ev(d.amplitude_ev),
            carrier: from_ev(d.carrier_ev),
            envelope,
        },
        rwa: d.rwa,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Backend {
    Exact,
    Ehrenfest,
    IonIdeal,
    IonNoisy,
    Compile,
    Estimate,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Ehrenfest => "ehrenfest",
            Backend::IonIdeal => "ion-ideal",
            Backend::IonNoisy => "ion-noisy",
            Backend::Compile => "compile",
            Backend::Estimate => "estimate",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "exact" => Backend::Exact,
            "ehrenfest" => Backend::Ehrenfest,
            "ion-ideal" => Backend::IonIdeal,
            "ion-noisy" => Backend::IonNoisy,
            "compile" => Backend::Compile,
            "estimate" => Backend::Estimate,
            _ => return Err(Error::InvalidArgument(format!("unknown backend `{s}`"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub backend: Backend,
    pub tau_fs: f64,
    pub grid_points: usize,
    pub initial_state: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self { backend: Backend::Exact, tau_fs: 400.0, grid_points: 40, initial_state: 0, output: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExactSection {
    /// Fixed cutoffs; adaptive search when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<usize>>,
    pub eps_cut: f64,
    pub eps_int: f64,
    pub frame: Frame,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nbar: Vec<f64>,
    /// Largest Hilbert-space dimension any back end may build.
    pub dimension_limit: usize,
}

impl Default for ExactSection {
    fn default() -> Self {
        Self {
            cutoffs: None,
            eps_cut: crate::exact::DEFAULT_EPS_CUT,
            eps_int: crate::exact::DEFAULT_EPS_INT,
            frame: Frame::Lab,
            nbar: Vec::new(),
            dimension_limit: crate::hilbert::DEFAULT_DIMENSION_LIMIT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EhrenfestSection {
    pub trajectories: usize,
    pub seed: u64,
    /// `wigner-ground` or `wigner-thermal`.
    pub sampling: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub nbar: Vec<f64>,
    pub tolerance: f64,
}

impl Default for EhrenfestSection {
    fn default() -> Self {
        Self {
            trajectories: crate::ehrenfest::DEFAULT_TRAJECTORIES,
            seed: 1,
            sampling: "wigner-ground".into(),
            nbar: Vec::new(),
            tolerance: crate::ehrenfest::DEFAULT_TOLERANCE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IonSection {
    pub steps: usize,
    /// Emulator cutoffs; taken from the exact module's search when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cutoffs: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub encoding: Option<Encoding>,
    pub frame_mode: FrameMode,
    pub order: TermOrder,
    pub positivity: PositivityCheck,
    /// Shot-noise sampling with this many runs per point when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hardware_file: Option<String>,
    pub motional_dephasing: bool,
    pub heating: bool,
    pub laser_dephasing: bool,
    pub symmetric_heating: bool,
}

impl Default for IonSection {
    fn default() -> Self {
        Self {
            steps: 600,
            cutoffs: None,
            encoding: None,
            frame_mode: FrameMode::Software,
            order: TermOrder::Canonical,
            positivity: PositivityCheck::GridPoints,
            runs: None,
            seed: 1,
            hardware_file: None,
            motional_dephasing: true,
            heating: true,
            laser_dephasing: true,
            symmetric_heating: true,
        }
    }
}

impl IonSection {
    pub fn compile_options(&self) -> CompileOptions {
        CompileOptions { encoding: self.encoding, frame_mode: self.frame_mode, order: self.order }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimateSection {
    /// Grid of λ/Δ; the toy model's own value when empty.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub lambda_over_delta: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub modes: Vec<usize>,
    pub runs: usize,
    pub time_points: usize,
    pub steps: usize,
}

impl Default for EstimateSection {
    fn default() -> Self {
        Self { lambda_over_delta: Vec::new(), modes: Vec::new(), runs: 100, time_points: 40, steps: 600 }
    }
}

/// Complete description of one run. A metadata sidecar is a `RunConfig`
/// with everything resolved plus a free-form `[meta]` table.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub run: RunSection,
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<ModesSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drive: Option<DriveSection>,
    #[serde(default)]
    pub exact: ExactSection,
    #[serde(default)]
    pub ehrenfest: EhrenfestSection,
    #[serde(default)]
    pub ion: IonSection,
    #[serde(default)]
    pub estimate: EstimateSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hardware: Option<HardwareParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<toml::Table>,
}

impl RunConfig {
    pub fn new(model: ModelFile, backend: Backend) -> Self {
        Self {
            run: RunSection { backend, ..Default::default() },
            model: model.model,
            modes: model.modes,
            drive: model.drive,
            ..Default::default()
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| toml_error(text, &e))?;
        c.model_file().check_keys(text)?;
        c.validate(text)?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn model_file(&self) -> ModelFile {
        ModelFile { model: self.model.clone(), modes: self.modes.clone(), drive: self.drive.clone() }
    }

    pub fn spec(&self) -> Result<LvcmSpec<f64>> {
        self.model_file().build()
    }

    fn validate(&self, text: &str) -> Result<()> {
        if !(self.run.tau_fs > 0.0) {
            return Err(semantic(text, "tau_fs", "must be positive"));
        }
        if self.run.grid_points < 2 {
            return Err(semantic(text, "grid_points", "need at least 2 points"));
        }
        if self.ion.steps == 0 {
            return Err(semantic(text, "steps", "need at least one Trotter step"));
        }
        if self.ehrenfest.sampling != "wigner-ground" && self.ehrenfest.sampling != "wigner-thermal" {
            return Err(semantic(text, "sampling", "expected wigner-ground or wigner-thermal"));
        }
        if let Some(h) = &self.hardware {
            h.validate().map_err(|e| semantic(text, "hardware", e.to_string()))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_field_names_the_key() {
        let text = "[model]\npreset = \"toy\"\nmodes = 2\n\n[drive]\nrwa = true\n";
        match ModelFile::from_toml(text) {
            Err(Error::Parse { key, .. }) => assert_eq!(key, "carrier_ev"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_names_the_line() {
        let text = "[model]\npreset = \"toy\"\nmodes = \"two\"\n";
        match ModelFile::from_toml(text) {
            Err(Error::Parse { line, key, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(key, "modes");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn foreign_preset_key_rejected() {
        let text = "[model]\npreset = \"toy\"\nmodes = 2\nlambda_over_delta = 1.0\nkx_ev = 0.1\n";
        match ModelFile::from_toml(text) {
            Err(Error::Parse { line, key, .. }) => {
                assert_eq!((line, key.as_str()), (5, "kx_ev"));
            }
            other => panic!("{other:?}"),
        }
    }
}
