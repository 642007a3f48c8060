//! Physical constants and atomic line data.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// CODATA 2018 values (exact where the SI defines them).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    /// J·s
    pub hbar: f64,
    /// J·s
    pub h: f64,
    /// J/K
    pub k_b: f64,
    /// m/s
    pub c: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        let h = 6.626_070_15e-34;
        Self {
            hbar: h / (2.0 * PI),
            h,
            k_b: 1.380_649e-23,
            c: 299_792_458.0,
        }
    }
}

/// Atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;
/// Mass of 133Cs in atomic mass units.
pub const CESIUM_MASS_U: f64 = 132.905_451_961;
/// D2 natural linewidth of cesium, Hz (divide by 2π already applied).
pub const CESIUM_D2_LINEWIDTH_HZ: f64 = 5.22e6;
/// D2 wavelength of cesium, m.
pub const CESIUM_D2_WAVELENGTH: f64 = 852e-9;

/// Effective two-level atom driven on a closed cycling transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomSpecies {
    /// kg
    pub mass: f64,
    /// Natural linewidth Γ, rad/s.
    pub linewidth: f64,
    /// m
    pub wavelength: f64,
    /// 2π/λ, 1/m
    pub wavenumber: f64,
    /// ħ²k²/(2 m k_B), K
    pub recoil_temperature: f64,
    /// Power scattered by one fully saturated atom, hcΓ/(2λ), W.
    pub saturated_power: f64,
    pub constants: PhysicalConstants,
}

impl AtomSpecies {
    pub fn new(mass: f64, linewidth: f64, wavelength: f64, constants: PhysicalConstants) -> Self {
        let wavenumber = 2.0 * PI / wavelength;
        let recoil_temperature =
            (constants.hbar * wavenumber).powi(2) / (2.0 * mass * constants.k_b);
        let saturated_power = constants.h * constants.c * linewidth / (2.0 * wavelength);
        Self {
            mass,
            linewidth,
            wavelength,
            wavenumber,
            recoil_temperature,
            saturated_power,
            constants,
        }
    }

    /// Recoil energy ħ²k²/2m in joules.
    pub fn recoil_energy(&self) -> f64 {
        self.recoil_temperature * self.constants.k_b
    }

    /// Convert a temperature-valued energy (µK) to joules.
    pub fn micro_kelvin(&self, value_uk: f64) -> f64 {
        value_uk * 1e-6 * self.constants.k_b
    }
}

/// Cesium on the D2 line: Γ = 2π·5.22 MHz, λ = 852 nm.
pub fn cesium_defaults() -> AtomSpecies {
    AtomSpecies::new(
        CESIUM_MASS_U * ATOMIC_MASS_UNIT,
        2.0 * PI * CESIUM_D2_LINEWIDTH_HZ,
        CESIUM_D2_WAVELENGTH,
        PhysicalConstants::default(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn planck_constants_consistent() {
        let c = PhysicalConstants::default();
        assert_relative_eq!(c.h, 2.0 * PI * c.hbar, max_relative = 1e-12);
        assert!(c.hbar > 0.0 && c.k_b > 0.0 && c.c > 0.0);
    }

    #[test]
    fn saturated_power_is_3_8_pw() {
        let cs = cesium_defaults();
        assert!((cs.saturated_power / 3.8e-12 - 1.0).abs() < 0.02, "{}", cs.saturated_power);
    }

    #[test]
    fn recoil_temperature_near_99_nk() {
        // ħ²k²/(2 m k_B) evaluated by hand with CODATA values: 99.25 nK.
        let cs = cesium_defaults();
        assert_relative_eq!(cs.recoil_temperature, 99.249e-9, max_relative = 1e-3);
    }

    #[test]
    fn wavenumber_definition() {
        let cs = cesium_defaults();
        assert_relative_eq!(cs.wavenumber * cs.wavelength, 2.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn derived_fields_reproducible() {
        let cs = cesium_defaults();
        let c = cs.constants;
        let k = 2.0 * PI / cs.wavelength;
        let t_rec = c.hbar * c.hbar * k * k / (2.0 * cs.mass * c.k_b);
        let p = c.h * c.c * cs.linewidth / (2.0 * cs.wavelength);
        assert_relative_eq!(cs.recoil_temperature, t_rec, max_relative = 1e-12);
        assert_relative_eq!(cs.saturated_power, p, max_relative = 1e-12);
    }
}
