//! Trapped-ion hardware and noise parameters.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-run overheads and noise figures of a state-of-the-art trapped-ion
/// setup, plus the duration model used by the compiler.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareParams {
    /// Radial mode-frequency bands `[low, high]` in MHz, one per radial
    /// direction. The top of each band is the centre-of-mass mode.
    pub motional_mode_frequencies_mhz: Vec<[f64; 2]>,
    /// Range `[min, max]` of sideband Rabi frequencies Ω̃/2π, kHz.
    pub sideband_rabi_frequencies_khz: [f64; 2],
    pub motional_coherence_time_ms: f64,
    pub non_cm_heating_rate_quanta_per_s: f64,
    pub laser_coherence_time_ms: f64,
    pub cooling_time_ms: f64,
    pub state_preparation_time_us: f64,
    pub measurement_time_us: f64,
    /// Carrier Rabi frequency Ω/2π for single-qubit rotations, kHz.
    pub carrier_rabi_frequency_khz: f64,
    /// Mølmer-Sørensen duration per radian of interaction angle, µs.
    pub ms_duration_us_per_rad: f64,
    /// Minimum spin-dependent-force pulse length, µs (cross-mode coupling).
    pub sdf_duration_floor_us: f64,
    /// Spin-dependent-force duration per radian, µs, keyed by ion count.
    pub sdf_duration_us_per_rad: BTreeMap<String, f64>,
}

/// Average per-step pulse lengths (µs) at λ = 30Δ, S = 600 and the toy-model
/// mode counts each chain serves.
pub const SDF_CALIBRATION_TARGETS: [(usize, &[usize], f64); 3] =
    [(2, &[2], 15.7), (3, &[3, 4], 17.4), (4, &[5], 19.0)];

/// Per-run operation time (ms) of the toy model at λ = Δ, N = 2, S = 600
/// used to place the duration floor.
pub const FLOOR_CALIBRATION_MS: f64 = 5.0;

impl Default for HardwareParams {
    fn default() -> Self {
        static CACHE: OnceLock<HardwareParams> = OnceLock::new();
        CACHE
            .get_or_init(|| {
                let mut hw = HardwareParams::uncalibrated();
                let (table, floor) = crate::pulse::calibrate_durations(&hw)
                    .expect("toy model calibration is always compilable");
                hw.sdf_duration_us_per_rad = table;
                hw.sdf_duration_floor_us = floor;
                hw
            })
            .clone()
    }
}

impl HardwareParams {
    /// Table values with a unit duration model (1 µs/rad, no floor); the
    /// starting point of [`crate::pulse::calibrate_durations`].
    pub fn uncalibrated() -> Self {
        Self {
            motional_mode_frequencies_mhz: vec![[1.80, 1.98], [2.45, 2.58]],
            sideband_rabi_frequencies_khz: [1.47, 4.95],
            motional_coherence_time_ms: 36.0,
            non_cm_heating_rate_quanta_per_s: 5.0,
            laser_coherence_time_ms: 496.0,
            cooling_time_ms: 4.0,
            state_preparation_time_us: 100.0,
            measurement_time_us: 150.0,
            carrier_rabi_frequency_khz: 50.0,
            ms_duration_us_per_rad: 2000.0,
            sdf_duration_floor_us: 0.0,
            sdf_duration_us_per_rad: (2..=4).map(|n| (n.to_string(), 1.0)).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("motional_coherence_time_ms", self.motional_coherence_time_ms),
            ("laser_coherence_time_ms", self.laser_coherence_time_ms),
            ("cooling_time_ms", self.cooling_time_ms),
            ("state_preparation_time_us", self.state_preparation_time_us),
            ("measurement_time_us", self.measurement_time_us),
            ("carrier_rabi_frequency_khz", self.carrier_rabi_frequency_khz),
            ("ms_duration_us_per_rad", self.ms_duration_us_per_rad),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be positive (got {v})")));
            }
        }
        if !(self.non_cm_heating_rate_quanta_per_s >= 0.0) || !(self.sdf_duration_floor_us >= 0.0) {
            return Err(Error::InvalidArgument("heating rate and duration floor must be non-negative".into()));
        }
        let [lo, hi] = self.sideband_rabi_frequencies_khz;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidArgument("sideband Rabi range must be positive and ordered".into()));
        }
        if self.motional_mode_frequencies_mhz.is_empty()
            || self.motional_mode_frequencies_mhz.iter().any(|[a, b]| !(*a > 0.0 && b >= a))
        {
            return Err(Error::InvalidArgument("mode-frequency bands must be positive and ordered".into()));
        }
        for (k, v) in &self.sdf_duration_us_per_rad {
            if k.parse::<usize>().is_err() || !(*v > 0.0) {
                return Err(Error::InvalidArgument(format!("bad duration calibration entry {k} = {v}")));
            }
        }
        Ok(())
    }

    /// Fixed per-run overhead: cooling, state preparation and measurement, µs.
    pub fn overhead_per_run_us(&self) -> f64 {
        self.cooling_time_ms * 1000.0 + self.state_preparation_time_us + self.measurement_time_us
    }

    pub fn max_sideband_rabi_khz(&self) -> f64 {
        self.sideband_rabi_frequencies_khz[1]
    }

    /// Duration model constant for an `ions`-ion chain.
    pub fn sdf_us_per_rad(&self, ions: usize) -> Result<f64> {
        self.sdf_duration_us_per_rad.get(&ions.to_string()).copied().ok_or(Error::UnsupportedChain(ions))
    }

    /// Non-centre-of-mass radial modes of an `ions`-ion chain in descending
    /// frequency (MHz). Within each band the modes are spread evenly below
    /// the centre-of-mass mode at the top of the band.
    pub fn non_cm_modes_mhz(&self, ions: usize) -> Vec<f64> {
        let mut out = Vec::new();
        if ions < 2 {
            return out;
        }
        for [lo, hi] in &self.motional_mode_frequencies_mhz {
            for j in 1..ions {
                out.push(hi - (hi - lo) * j as f64 / (ions - 1) as f64);
            }
        }
        out.sort_by(|a, b| b.partial_cmp(a).expect("finite frequencies"));
        out
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            hardware: HardwareParams,
        }
        let f: File = toml::from_str(text).map_err(|e| crate::config::toml_error(text, &e))?;
        f.hardware.validate()?;
        Ok(f.hardware)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            hardware: &'a HardwareParams,
        }
        toml::to_string(&File { hardware: self }).expect("hardware parameters serialise")
    }
}

/// Lindblad noise channels of the emulator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseChannels {
    /// Motional dephasing rate γ_m, 1/ms (adjacent-level coherence decay).
    pub motional_dephasing_per_ms: f64,
    /// Heating rate Γ_h, quanta/s.
    pub heating_quanta_per_s: f64,
    /// Laser dephasing rate γ_L, 1/ms.
    pub laser_dephasing_per_ms: f64,
    pub motional_dephasing: bool,
    pub heating: bool,
    pub laser_dephasing: bool,
    /// Pairs `√Γ a†` with `√Γ a` so `d⟨n⟩/dt = Γ` at any occupation. When
    /// off, heating is `√Γ a†` alone and `⟨n⟩ = e^{Γt} − 1`.
    pub symmetric_heating: bool,
}

impl NoiseChannels {
    /// Rates from coherence times (`γ = 1/T`) and the heating figure.
    pub fn from_hardware(hw: &HardwareParams) -> Self {
        Self {
            motional_dephasing_per_ms: 1.0 / hw.motional_coherence_time_ms,
            heating_quanta_per_s: hw.non_cm_heating_rate_quanta_per_s,
            laser_dephasing_per_ms: 1.0 / hw.laser_coherence_time_ms,
            motional_dephasing: true,
            heating: true,
            laser_dephasing: true,
            symmetric_heating: true,
        }
    }

    pub fn off() -> Self {
        Self {
            motional_dephasing_per_ms: 0.0,
            heating_quanta_per_s: 0.0,
            laser_dephasing_per_ms: 0.0,
            motional_dephasing: false,
            heating: false,
            laser_dephasing: false,
            symmetric_heating: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("motional_dephasing_per_ms", self.motional_dephasing_per_ms),
            ("heating_quanta_per_s", self.heating_quanta_per_s),
            ("laser_dephasing_per_ms", self.laser_dephasing_per_ms),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{n} must be a non-negative rate (got {v})")));
            }
        }
        Ok(())
    }

    /// Motional dephasing rate per µs, zero when disabled.
    pub fn gamma_m_per_us(&self) -> f64 {
        if self.motional_dephasing {
            self.motional_dephasing_per_ms * 1e-3
        } else {
            0.0
        }
    }

    /// Heating rate per µs, zero when disabled.
    pub fn heating_per_us(&self) -> f64 {
        if self.heating {
            self.heating_quanta_per_s * 1e-6
        } else {
            0.0
        }
    }

    pub fn gamma_l_per_us(&self) -> f64 {
        if self.laser_dephasing {
            self.laser_dephasing_per_ms * 1e-3
        } else {
            0.0
        }
    }

    pub fn is_noiseless(&self) -> bool {
        self.gamma_m_per_us() == 0.0 && self.heating_per_us() == 0.0 && self.gamma_l_per_us() == 0.0
    }
}
