//! Default trap parameters and the pipeline from potentials to a calibrated
//! thermal model.

use crate::constants::{cesium_defaults, AtomSpecies};
use crate::coupling::{calibrate_coupling, Calibration, CalibrationTargets, PerStateCoupling};
use crate::dynamics::ThermalModel;
use crate::heating::{HeatingMode, HeatingTable, MonteCarloSettings};
use crate::morse::{BoundStateTable, MorsePotential, RepulsivePotential};
use crate::Result;
use serde::{Deserialize, Serialize};

pub const DEFAULT_DEPTH_UK: f64 = 240.0;
/// 1/m. Gives 62 bound states for cesium at the default depth.
pub const DEFAULT_STIFFNESS: f64 = 5.85e6;
pub const DEFAULT_MINIMUM: f64 = 231e-9;
/// Excited-state amplitude in units of the trap depth.
pub const DEFAULT_EXCITED_AMPLITUDE: f64 = 1.5;
/// Excited-state decay constant in units of the trap stiffness.
pub const DEFAULT_EXCITED_DECAY: f64 = 2.0;

/// Shape of the repulsive excited-state potential relative to the trap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExcitedShape {
    pub amplitude_depths: f64,
    pub decay_stiffnesses: f64,
}

impl Default for ExcitedShape {
    fn default() -> Self {
        Self { amplitude_depths: DEFAULT_EXCITED_AMPLITUDE, decay_stiffnesses: DEFAULT_EXCITED_DECAY }
    }
}

impl ExcitedShape {
    pub fn potential(&self, trap: &MorsePotential) -> Result<RepulsivePotential> {
        RepulsivePotential::new(
            self.amplitude_depths * trap.depth,
            self.decay_stiffnesses * trap.stiffness,
            trap.minimum,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrapSetup {
    pub species: AtomSpecies,
    pub trap: MorsePotential,
    pub targets: CalibrationTargets,
    pub excited: ExcitedShape,
}

impl Default for TrapSetup {
    fn default() -> Self {
        let species = cesium_defaults();
        let trap = MorsePotential::new(species.micro_kelvin(DEFAULT_DEPTH_UK), DEFAULT_STIFFNESS, DEFAULT_MINIMUM)
            .expect("default trap is valid");
        Self { species, trap, targets: CalibrationTargets::default(), excited: ExcitedShape::default() }
    }
}

/// Bound states, calibrated coupling and per-state detunings.
#[derive(Debug, Clone)]
pub struct PreparedTrap {
    pub setup: TrapSetup,
    pub table: BoundStateTable,
    pub calibration: Calibration,
    pub excited: RepulsivePotential,
    pub coupling: PerStateCoupling,
}

impl TrapSetup {
    pub fn prepare(&self) -> Result<PreparedTrap> {
        let table = BoundStateTable::build(self.trap, &self.species)?;
        let calibration = calibrate_coupling(&table, &self.targets, self.species.constants.k_b)?;
        let excited = self.excited.potential(&self.trap)?;
        let coupling = PerStateCoupling::compute(&table, &calibration.profile, &excited)?;
        Ok(PreparedTrap { setup: *self, table, calibration, excited, coupling })
    }
}

impl PreparedTrap {
    pub fn heating_table(&self, settings: &MonteCarloSettings) -> Result<HeatingTable> {
        HeatingTable::compute(&self.table, &self.excited, &self.setup.species, settings)
    }

    pub fn thermal_model(&self, heating: &HeatingTable, mode: HeatingMode) -> Result<ThermalModel> {
        ThermalModel::new(&self.table, &self.coupling, heating, mode, self.setup.species)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_pipeline() {
        let prepared = TrapSetup::default().prepare().unwrap();
        assert_eq!(prepared.table.len(), 62);
        assert!(prepared.calibration.residual < 1e-6);
        assert_eq!(prepared.coupling.beta.len(), 62);
        let heating = HeatingTable::recoil_only(62, prepared.setup.species.recoil_temperature);
        let model = prepared.thermal_model(&heating, HeatingMode::RecoilOnly).unwrap();
        assert!((model.beta_infinite / 0.012 - 1.0).abs() < 1e-6);
    }
}
