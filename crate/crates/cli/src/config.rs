//! Run configuration: TOML with one table per concern and unit suffixes on
//! every dimensional key. Every key has a default, so an empty file is a valid
//! configuration of the reference trap.

use crate::error::{CliError, Result};
use nftrap_core::constants::{AtomSpecies, PhysicalConstants, ATOMIC_MASS_UNIT};
use nftrap_core::coupling::CalibrationTargets;
use nftrap_core::dynamics::{DynamicsConfig, RecoveryProbe, Segment, DEFAULT_COOLING_RATE};
use nftrap_core::heating::{HeatingMode, MonteCarloSettings, OrbitSampling};
use nftrap_core::morse::MorsePotential;
use nftrap_core::setup::{ExcitedShape, TrapSetup};
use serde::Deserialize;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrapSection {
    #[serde(rename = "depth_uK")]
    pub depth_uk: f64,
    pub stiffness_per_um: f64,
    pub minimum_nm: f64,
}

impl Default for TrapSection {
    fn default() -> Self {
        Self { depth_uk: 240.0, stiffness_per_um: 5.85, minimum_nm: 231.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpeciesSection {
    pub mass_u: f64,
    /// Γ/2π
    #[serde(rename = "linewidth_MHz")]
    pub linewidth_mhz: f64,
    pub wavelength_nm: f64,
}

impl Default for SpeciesSection {
    fn default() -> Self {
        Self { mass_u: 132.905_451_961, linewidth_mhz: 5.22, wavelength_nm: 852.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingSection {
    pub beta_hot: f64,
    pub beta_cold: f64,
    #[serde(rename = "cold_temperature_uK")]
    pub cold_temperature_uk: f64,
}

impl Default for CouplingSection {
    fn default() -> Self {
        Self { beta_hot: 0.012, beta_cold: 0.024, cold_temperature_uk: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExcitedSection {
    pub amplitude_depths: f64,
    pub decay_stiffnesses: f64,
}

impl Default for ExcitedSection {
    fn default() -> Self {
        let s = ExcitedShape::default();
        Self { amplitude_depths: s.amplitude_depths, decay_stiffnesses: s.decay_stiffnesses }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatingModel {
    #[default]
    Full,
    RecoilOnly,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MonteCarloSection {
    pub samples: usize,
    pub seed: u64,
    pub sampling: OrbitSampling,
    pub heating: HeatingModel,
}

impl Default for MonteCarloSection {
    fn default() -> Self {
        let s = MonteCarloSettings::default();
        Self { samples: s.samples, seed: s.seed, sampling: s.sampling, heating: HeatingModel::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DynamicsSection {
    #[serde(rename = "initial_temperature_uK")]
    pub initial_temperature_uk: f64,
    pub initial_atoms: f64,
    #[serde(rename = "passive_heating_mK_per_s")]
    pub passive_heating_mk_per_s: f64,
    pub cooling_rate_per_s: f64,
    #[serde(rename = "cooling_floor_uK")]
    pub cooling_floor_uk: f64,
    pub rtol: f64,
    #[serde(rename = "atol_K")]
    pub atol_k: f64,
    pub sample_period_us: f64,
    /// Target approach rate of ΔOD_cool used by `calibrate`.
    pub recovery_rate_per_s: f64,
    pub recovery_probe_us: f64,
    pub recovery_probe_power: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        let d = DynamicsConfig::default();
        let p = RecoveryProbe::default();
        Self {
            initial_temperature_uk: d.initial_temperature * 1e6,
            initial_atoms: d.initial_atoms,
            passive_heating_mk_per_s: d.passive_heating_rate * 1e3,
            cooling_rate_per_s: DEFAULT_COOLING_RATE,
            cooling_floor_uk: d.cooling_floor * 1e6,
            rtol: d.rtol,
            atol_k: d.atol,
            sample_period_us: d.sample_period * 1e6,
            recovery_rate_per_s: 360.0,
            recovery_probe_us: p.duration * 1e6,
            recovery_probe_power: p.power,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    #[serde(rename = "temperature_min_uK")]
    pub temperature_min_uk: f64,
    #[serde(rename = "temperature_max_uK")]
    pub temperature_max_uk: f64,
    pub points: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { temperature_min_uk: 0.1, temperature_max_uk: 10_000.0, points: 200 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Recipe {
    /// Explicit segment list.
    #[default]
    Schedule,
    /// One probe per power, each from a fresh ensemble.
    PowerSweep,
    /// Wait, then probe; one run per wait.
    WaitSweep,
    /// Wait, cool, read out the optical depth; one run per wait.
    OdPlateau,
    /// Heat with the recovery probe, cool for each duration, read ΔOD_cool.
    CoolingSweep,
    /// Optical depth after wait + cool as a function of the wait.
    PassiveDecay,
    /// `pulses × (probe + cool)` with stitched-trace analysis.
    Interleaved,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SegmentSpec {
    Probe { duration_us: f64, power: f64 },
    Cool { duration_ms: f64 },
    Wait { duration_ms: f64 },
    Readout,
}

impl SegmentSpec {
    pub fn to_segment(self) -> Segment {
        match self {
            SegmentSpec::Probe { duration_us, power } => Segment::Probe { duration: duration_us * 1e-6, power },
            SegmentSpec::Cool { duration_ms } => Segment::Cool { duration: duration_ms * 1e-3 },
            SegmentSpec::Wait { duration_ms } => Segment::Wait { duration: duration_ms * 1e-3 },
            SegmentSpec::Readout => Segment::Readout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    pub recipe: Recipe,
    pub segments: Vec<SegmentSpec>,
    pub powers: Vec<f64>,
    pub power: f64,
    pub probe_us: f64,
    pub waits_ms: Vec<f64>,
    pub cool_ms: f64,
    pub cool_prefix_ms: f64,
    pub pulses: usize,
    pub cool_durations_ms: Vec<f64>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            recipe: Recipe::Schedule,
            segments: vec![SegmentSpec::Probe { duration_us: 20.0, power: 0.26 }],
            powers: vec![0.01, 0.05, 0.10, 0.22],
            power: 0.26,
            probe_us: 1000.0,
            waits_ms: vec![0.0, 30.0, 60.0, 90.0],
            cool_ms: 8.0,
            cool_prefix_ms: 20.0,
            pulses: 20,
            cool_durations_ms: (0..=40).map(|k| k as f64 * 0.25).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: Option<PathBuf>,
    pub cache_directory: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub trap: TrapSection,
    pub species: SpeciesSection,
    pub coupling: CouplingSection,
    pub excited: ExcitedSection,
    pub monte_carlo: MonteCarloSection,
    pub dynamics: DynamicsSection,
    pub sweep: SweepSection,
    pub simulate: SimulateSection,
    pub output: OutputSection,
}

/// A configuration together with the text it came from, for error locations.
#[derive(Debug, Clone, Default)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub path: String,
    pub source: String,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&source, &path.display().to_string())
    }

    pub fn parse(source: &str, path: &str) -> Result<Self> {
        let config: RunConfig = toml::from_str(source).map_err(|e| {
            let line = e.span().map_or(1, |s| line_of_offset(source, s.start));
            CliError::Config { path: path.to_string(), line, message: e.message().trim().to_string() }
        })?;
        let loaded = Self { config, path: path.to_string(), source: source.to_string() };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn defaults() -> Self {
        Self { path: "<defaults>".into(), ..Self::default() }
    }

    fn error(&self, section: &str, key: &str, message: String) -> CliError {
        CliError::Config { path: self.path.clone(), line: key_line(&self.source, section, key), message }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        let positive: [(&str, &str, f64); 18] = [
            ("trap", "depth_uK", c.trap.depth_uk),
            ("trap", "stiffness_per_um", c.trap.stiffness_per_um),
            ("trap", "minimum_nm", c.trap.minimum_nm),
            ("species", "mass_u", c.species.mass_u),
            ("species", "linewidth_MHz", c.species.linewidth_mhz),
            ("species", "wavelength_nm", c.species.wavelength_nm),
            ("coupling", "beta_hot", c.coupling.beta_hot),
            ("coupling", "beta_cold", c.coupling.beta_cold),
            ("coupling", "cold_temperature_uK", c.coupling.cold_temperature_uk),
            ("excited", "decay_stiffnesses", c.excited.decay_stiffnesses),
            ("dynamics", "initial_temperature_uK", c.dynamics.initial_temperature_uk),
            ("dynamics", "cooling_rate_per_s", c.dynamics.cooling_rate_per_s),
            ("dynamics", "rtol", c.dynamics.rtol),
            ("dynamics", "atol_K", c.dynamics.atol_k),
            ("dynamics", "sample_period_us", c.dynamics.sample_period_us),
            ("dynamics", "recovery_rate_per_s", c.dynamics.recovery_rate_per_s),
            ("dynamics", "recovery_probe_us", c.dynamics.recovery_probe_us),
            ("sweep", "temperature_min_uK", c.sweep.temperature_min_uk),
        ];
        for (section, key, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(self.error(section, key, format!("{key} must be positive and finite, got {value}")));
            }
        }
        let non_negative: [(&str, &str, f64); 7] = [
            ("excited", "amplitude_depths", c.excited.amplitude_depths),
            ("dynamics", "initial_atoms", c.dynamics.initial_atoms),
            ("dynamics", "passive_heating_mK_per_s", c.dynamics.passive_heating_mk_per_s),
            ("dynamics", "cooling_floor_uK", c.dynamics.cooling_floor_uk),
            ("dynamics", "recovery_probe_power", c.dynamics.recovery_probe_power),
            ("simulate", "power", c.simulate.power),
            ("simulate", "cool_prefix_ms", c.simulate.cool_prefix_ms),
        ];
        for (section, key, value) in non_negative {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(self.error(section, key, format!("{key} must be non-negative and finite, got {value}")));
            }
        }
        if c.sweep.temperature_max_uk <= c.sweep.temperature_min_uk || !c.sweep.temperature_max_uk.is_finite() {
            return Err(self.error("sweep", "temperature_max_uK", "temperature_max_uK must exceed temperature_min_uK".into()));
        }
        if c.sweep.points < 2 {
            return Err(self.error("sweep", "points", "points must be at least 2".into()));
        }
        if c.coupling.beta_hot >= 0.5 || c.coupling.beta_cold >= 0.5 {
            return Err(self.error("coupling", "beta_cold", "coupling targets must lie below 0.5".into()));
        }
        if c.monte_carlo.samples < nftrap_core::heating::MIN_SAMPLES {
            return Err(self.error(
                "monte_carlo",
                "samples",
                format!("samples must be at least {}", nftrap_core::heating::MIN_SAMPLES),
            ));
        }
        let s = &c.simulate;
        if !(s.probe_us > 0.0 && s.probe_us.is_finite()) {
            return Err(self.error("simulate", "probe_us", "probe_us must be positive".into()));
        }
        if !(s.cool_ms > 0.0 && s.cool_ms.is_finite()) {
            return Err(self.error("simulate", "cool_ms", "cool_ms must be positive".into()));
        }
        let list_ok = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x >= 0.0 && x.is_finite());
        match s.recipe {
            Recipe::Schedule if s.segments.is_empty() => {
                return Err(self.error("simulate", "segments", "schedule recipe needs at least one segment".into()))
            }
            Recipe::PowerSweep if !list_ok(&s.powers) => {
                return Err(self.error("simulate", "powers", "powers must be a non-empty list of non-negative values".into()))
            }
            Recipe::WaitSweep | Recipe::OdPlateau | Recipe::PassiveDecay if !list_ok(&s.waits_ms) => {
                return Err(self.error("simulate", "waits_ms", "waits_ms must be a non-empty list of non-negative values".into()))
            }
            Recipe::CoolingSweep if !list_ok(&s.cool_durations_ms) => {
                return Err(self.error(
                    "simulate",
                    "cool_durations_ms",
                    "cool_durations_ms must be a non-empty list of non-negative values".into(),
                ))
            }
            Recipe::Interleaved if s.pulses == 0 => {
                return Err(self.error("simulate", "pulses", "pulses must be at least 1".into()))
            }
            _ => {}
        }
        for seg in &s.segments {
            let bad = match *seg {
                SegmentSpec::Probe { duration_us, power } => !(duration_us > 0.0 && power >= 0.0 && power.is_finite()),
                SegmentSpec::Cool { duration_ms } | SegmentSpec::Wait { duration_ms } => !(duration_ms > 0.0),
                SegmentSpec::Readout => false,
            };
            if bad {
                return Err(self.error("simulate", "segments", format!("invalid segment {seg:?}")));
            }
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn species(&self) -> AtomSpecies {
        AtomSpecies::new(
            self.species.mass_u * ATOMIC_MASS_UNIT,
            2.0 * PI * self.species.linewidth_mhz * 1e6,
            self.species.wavelength_nm * 1e-9,
            PhysicalConstants::default(),
        )
    }

    pub fn trap_setup(&self) -> Result<TrapSetup> {
        let species = self.species();
        let trap = MorsePotential::new(
            species.micro_kelvin(self.trap.depth_uk),
            self.trap.stiffness_per_um * 1e6,
            self.trap.minimum_nm * 1e-9,
        )?;
        Ok(TrapSetup {
            species,
            trap,
            targets: CalibrationTargets {
                beta_hot: self.coupling.beta_hot,
                beta_cold: self.coupling.beta_cold,
                cold_temperature: self.coupling.cold_temperature_uk * 1e-6,
            },
            excited: ExcitedShape {
                amplitude_depths: self.excited.amplitude_depths,
                decay_stiffnesses: self.excited.decay_stiffnesses,
            },
        })
    }

    pub fn monte_carlo(&self) -> MonteCarloSettings {
        MonteCarloSettings {
            samples: self.monte_carlo.samples,
            seed: self.monte_carlo.seed,
            sampling: self.monte_carlo.sampling,
        }
    }

    pub fn heating_mode(&self) -> HeatingMode {
        match self.monte_carlo.heating {
            HeatingModel::Full => HeatingMode::Full,
            HeatingModel::RecoilOnly => HeatingMode::RecoilOnly,
        }
    }

    pub fn dynamics(&self) -> DynamicsConfig {
        let d = &self.dynamics;
        DynamicsConfig {
            initial_temperature: d.initial_temperature_uk * 1e-6,
            initial_atoms: d.initial_atoms,
            passive_heating_rate: d.passive_heating_mk_per_s * 1e-3,
            cooling_rate: d.cooling_rate_per_s,
            cooling_floor: d.cooling_floor_uk * 1e-6,
            rtol: d.rtol,
            atol: d.atol_k,
            sample_period: d.sample_period_us * 1e-6,
        }
    }

    pub fn recovery_probe(&self) -> RecoveryProbe {
        RecoveryProbe {
            duration: self.dynamics.recovery_probe_us * 1e-6,
            power: self.dynamics.recovery_probe_power,
        }
    }

    /// Log-spaced temperatures of the coupling and heating sweeps, K.
    pub fn temperature_grid(&self) -> Vec<f64> {
        let (lo, hi) = (self.sweep.temperature_min_uk.ln(), self.sweep.temperature_max_uk.ln());
        let n = self.sweep.points;
        (0..n).map(|i| (lo + (hi - lo) * i as f64 / (n - 1) as f64).exp() * 1e-6).collect()
    }
}

fn line_of_offset(source: &str, offset: usize) -> usize {
    source[..offset.min(source.len())].bytes().filter(|&b| b == b'\n').count() + 1
}

/// Line of `key` inside `[section]`, else of the section header, else 1.
pub fn key_line(source: &str, section: &str, key: &str) -> usize {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[') {
            current = name.trim_start_matches('[').trim_end_matches(']').trim().to_string();
            if current == section && header.is_none() {
                header = Some(i + 1);
            }
            continue;
        }
        let in_section = current == section || current.starts_with(&format!("{section}."));
        if in_section {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return i + 1;
                }
            }
        }
    }
    header.unwrap_or(1)
}
