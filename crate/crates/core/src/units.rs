//! Energy units.
//!
//! Internally every energy is an angular frequency in rad/fs, simulated time
//! is in fs and hardware (lab) time is in µs. Files and presets quote
//! energies in eV; conversion happens only through this module.

use serde::{Deserialize, Serialize};

use crate::numeric::Real;

/// Reduced Planck constant in eV·fs (CODATA 2018).
pub const HBAR_EV_FS: f64 = 0.6582119569;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyUnit {
    #[serde(rename = "eV")]
    ElectronVolt,
    RadPerFs,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyQuantity<T> {
    pub value: T,
    pub unit: EnergyUnit,
}

impl<T: Real> EnergyQuantity<T> {
    pub fn ev(value: T) -> Self {
        Self { value, unit: EnergyUnit::ElectronVolt }
    }

    pub fn rad_per_fs(value: T) -> Self {
        Self { value, unit: EnergyUnit::RadPerFs }
    }

    /// Angular frequency in rad/fs.
    pub fn to_angular_frequency(self) -> T {
        match self.unit {
            EnergyUnit::ElectronVolt => ev_to_rad_per_fs(self.value),
            EnergyUnit::RadPerFs => self.value,
        }
    }

    pub fn to_ev(self) -> T {
        match self.unit {
            EnergyUnit::ElectronVolt => self.value,
            EnergyUnit::RadPerFs => rad_per_fs_to_ev(self.value),
        }
    }

    pub fn in_unit(self, unit: EnergyUnit) -> Self {
        match unit {
            EnergyUnit::ElectronVolt => Self::ev(self.to_ev()),
            EnergyUnit::RadPerFs => Self::rad_per_fs(self.to_angular_frequency()),
        }
    }
}

/// eV → rad/fs.
pub fn to_angular_frequency<T: Real>(e: EnergyQuantity<T>) -> T {
    e.to_angular_frequency()
}

#[inline]
pub fn ev_to_rad_per_fs<T: Real>(ev: T) -> T {
    ev / T::lit(HBAR_EV_FS)
}

#[inline]
pub fn rad_per_fs_to_ev<T: Real>(w: T) -> T {
    w * T::lit(HBAR_EV_FS)
}

/// Writes `w` (rad/fs) as an eV value that converts back to exactly `w`,
/// if one exists within a few ulps of the naive product.
pub fn exact_ev_representation(w: f64) -> Option<f64> {
    let guess = w * HBAR_EV_FS;
    if guess / HBAR_EV_FS == w {
        return Some(guess);
    }
    let mut up = guess;
    let mut down = guess;
    for _ in 0..8 {
        up = next_toward(up, f64::INFINITY);
        down = next_toward(down, f64::NEG_INFINITY);
        if up / HBAR_EV_FS == w {
            return Some(up);
        }
        if down / HBAR_EV_FS == w {
            return Some(down);
        }
    }
    None
}

fn next_toward(x: f64, target: f64) -> f64 {
    if x.is_nan() || x == target {
        return x;
    }
    if x == 0.0 {
        let tiny = f64::from_bits(1);
        return if target > 0.0 { tiny } else { -tiny };
    }
    let bits = x.to_bits();
    let up = (target > x) == (x > 0.0);
    f64::from_bits(if up { bits + 1 } else { bits - 1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn conversion_examples() {
        assert_eq!(EnergyQuantity::ev(0.0f64).to_angular_frequency(), 0.0);
        assert!((EnergyQuantity::ev(0.6582119569f64).to_angular_frequency() - 1.0).abs() < 1e-15);
        // 0.08679 / 0.6582119569
        let w = EnergyQuantity::ev(0.08679f64).to_angular_frequency();
        assert!((w - 0.131857).abs() < 5e-7, "{w}");
    }

    #[test]
    fn round_trip_is_involutive() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let x: f64 = 10f64.powf(rng.gen_range(-6.0..3.0));
            let back = EnergyQuantity::rad_per_fs(EnergyQuantity::ev(x).to_angular_frequency()).to_ev();
            assert!(((back - x) / x).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_representation_found_for_typical_values() {
        let mut found = 0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let w: f64 = rng.gen_range(1e-3..1.0);
            if let Some(ev) = exact_ev_representation(w) {
                assert_eq!(ev / HBAR_EV_FS, w);
                found += 1;
            }
        }
        assert!(found > 500);
    }
}
