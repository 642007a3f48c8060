//! Browser front end: a prepared trap and thermal model kept alive between
//! calls, with three views (spectrum and coupling, a single probe, an
//! interleaved probe/cool schedule). The plain-Rust [`Demo`] carries the
//! logic; [`WebDemo`] wraps it for JavaScript and returns JSON text.

use nftrap_core::coupling::{harmonic_overlaps, occupation};
use nftrap_core::dynamics::{DynamicsConfig, PulseSchedule, Segment, Simulator, ThermalModel, TransmissionTrace};
use nftrap_core::fitting::{fit, model_double_exp};
use nftrap_core::heating::{HeatingMode, MonteCarloSettings};
use nftrap_core::morse::MorsePotential;
use nftrap_core::setup::{PreparedTrap, TrapSetup};
use serde::Serialize;
use wasm_bindgen::prelude::*;

pub type Result<T> = std::result::Result<T, nftrap_core::Error>;

pub struct Demo {
    prepared: PreparedTrap,
    model: ThermalModel,
    dynamics: DynamicsConfig,
}

#[derive(Debug, Serialize)]
pub struct SpectrumView {
    pub energies_uk: Vec<f64>,
    pub beta: Vec<f64>,
    pub harmonic_beta: Vec<f64>,
    pub temperatures_uk: Vec<f64>,
    pub mean_beta: Vec<f64>,
    pub trap_frequency_khz: f64,
}

#[derive(Debug, Serialize)]
pub struct TraceView {
    /// Probe time, µs.
    pub time_us: Vec<f64>,
    pub transmission: Vec<f64>,
    pub temperature_uk: Vec<f64>,
    pub atoms: Vec<f64>,
    /// Double exponential fitted to the whole trace, sampled on `time_us`.
    pub fit: Vec<f64>,
    pub gamma_per_s: f64,
    pub fit_rms: f64,
}

impl Demo {
    /// Prepare a trap of the given depth and compute its heating table with
    /// `samples` Monte-Carlo samples per state.
    pub fn build(depth_uk: f64, samples: usize, seed: u64) -> Result<Self> {
        let mut setup = TrapSetup::default();
        setup.trap = MorsePotential::new(setup.species.micro_kelvin(depth_uk), setup.trap.stiffness, setup.trap.minimum)?;
        let prepared = setup.prepare()?;
        let settings = MonteCarloSettings { samples, seed, ..MonteCarloSettings::default() };
        let heating = prepared.heating_table(&settings)?;
        let model = prepared.thermal_model(&heating, HeatingMode::Full)?;
        Ok(Self { prepared, model, dynamics: DynamicsConfig::default() })
    }

    pub fn states(&self) -> usize {
        self.prepared.table.len()
    }

    pub fn spectrum(&self, points: usize) -> Result<SpectrumView> {
        let p = &self.prepared;
        let species = &p.setup.species;
        let k_b = species.constants.k_b;
        let to_uk = |e: f64| e / k_b * 1e6;
        let profile = p.calibration.profile;
        let points = points.max(2);
        let temperatures_uk: Vec<f64> =
            (0..points).map(|i| 10f64.powf(-1.0 + 5.0 * i as f64 / (points - 1) as f64)).collect();
        let mean_beta = temperatures_uk
            .iter()
            .map(|t| occupation(&p.table, t * 1e-6, k_b)?.average(&p.coupling.beta))
            .collect::<Result<_>>()?;
        Ok(SpectrumView {
            energies_uk: p.table.energies.iter().map(|&e| to_uk(e)).collect(),
            beta: p.coupling.beta.clone(),
            harmonic_beta: harmonic_overlaps(&p.table, |d| profile.beta(d))?,
            temperatures_uk,
            mean_beta,
            trap_frequency_khz: p.table.omega / (2.0 * std::f64::consts::PI) * 1e-3,
        })
    }

    pub fn probe(&self, power: f64, duration_us: f64) -> Result<TraceView> {
        self.trace(PulseSchedule::new(vec![Segment::Probe { duration: duration_us * 1e-6, power }])?)
    }

    pub fn interleaved(&self, pulses: usize, probe_us: f64, power: f64, cool_ms: f64) -> Result<TraceView> {
        self.trace(PulseSchedule::interleaved(pulses, probe_us * 1e-6, power, cool_ms * 1e-3)?)
    }

    fn trace(&self, schedule: PulseSchedule) -> Result<TraceView> {
        let sim = Simulator::new(&self.model, &self.dynamics)?;
        let (trace, _) = sim.run_schedule(&schedule)?;
        view(&trace)
    }
}

fn view(trace: &TransmissionTrace) -> Result<TraceView> {
    let (times, transmission) = trace.stitched();
    let model = model_double_exp();
    let fitted = fit(&model, &times, &transmission, None)?;
    // Cool segments leave a duplicate boundary sample; keep only the stitched ones.
    let samples: Vec<_> = trace
        .probe_segments
        .iter()
        .enumerate()
        .flat_map(|(k, &(a, b))| {
            let end = if k + 1 == trace.probe_segments.len() { b } else { b - 1 };
            &trace.samples[a..end]
        })
        .collect();
    Ok(TraceView {
        time_us: times.iter().map(|t| t * 1e6).collect(),
        fit: times.iter().map(|&t| model.eval(t, &fitted.parameters)).collect(),
        transmission,
        temperature_uk: samples.iter().map(|s| s.temperature * 1e6).collect(),
        atoms: samples.iter().map(|s| s.atoms).collect(),
        gamma_per_s: fitted.parameters[1],
        fit_rms: fitted.rms,
    })
}

fn js_error(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json<T: Serialize>(value: &T) -> std::result::Result<String, JsError> {
    serde_json::to_string(value).map_err(js_error)
}

#[wasm_bindgen]
pub struct WebDemo(Demo);

#[wasm_bindgen]
impl WebDemo {
    #[wasm_bindgen(constructor)]
    pub fn new(depth_uk: f64, samples: usize, seed: u64) -> std::result::Result<WebDemo, JsError> {
        Demo::build(depth_uk, samples, seed).map(WebDemo).map_err(js_error)
    }

    pub fn states(&self) -> usize {
        self.0.states()
    }

    pub fn spectrum(&self, points: usize) -> std::result::Result<String, JsError> {
        to_json(&self.0.spectrum(points).map_err(js_error)?)
    }

    pub fn probe(&self, power: f64, duration_us: f64) -> std::result::Result<String, JsError> {
        to_json(&self.0.probe(power, duration_us).map_err(js_error)?)
    }

    pub fn interleaved(&self, pulses: usize, probe_us: f64, power: f64, cool_ms: f64) -> std::result::Result<String, JsError> {
        to_json(&self.0.interleaved(pulses, probe_us, power, cool_ms).map_err(js_error)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn demo() -> &'static Demo {
        static DEMO: OnceLock<Demo> = OnceLock::new();
        DEMO.get_or_init(|| Demo::build(240.0, 10_000, 1).unwrap())
    }

    #[test]
    fn spectrum_view_shapes() {
        let s = demo().spectrum(50).unwrap();
        assert_eq!(s.energies_uk.len(), 62);
        assert_eq!(s.beta.len(), s.harmonic_beta.len());
        assert_eq!(s.mean_beta.len(), 50);
        assert!(s.mean_beta.windows(2).all(|w| w[1] <= w[0]));
        assert!((s.trap_frequency_khz / 161.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn probe_rises_and_fits() {
        let t = demo().probe(0.1, 500.0).unwrap();
        assert_eq!(t.time_us.len(), t.transmission.len());
        assert_eq!(t.time_us.len(), t.temperature_uk.len());
        assert!(t.transmission.last() > t.transmission.first());
        assert!(t.gamma_per_s > 0.0);
    }

    #[test]
    fn interleaved_columns_align() {
        let t = demo().interleaved(5, 20.0, 0.26, 8.0).unwrap();
        assert_eq!(t.time_us.len(), t.atoms.len());
        assert!(t.time_us.windows(2).all(|w| w[1] > w[0]));
        assert!((t.time_us.last().unwrap() - 100.0).abs() < 1e-6);
    }

    #[test]
    fn bad_depth_is_an_error() {
        assert!(Demo::build(0.001, 100, 1).is_err());
        assert!(Demo::build(-5.0, 100, 1).is_err());
    }
}
