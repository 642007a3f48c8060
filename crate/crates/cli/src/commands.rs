//! Subcommand implementations. Each writes its series into the output
//! directory and returns the summary record it also saves as JSON.

use crate::cache::{heating_key, HeatingCache};
use crate::config::{LoadedConfig, Recipe, RunConfig};
use crate::error::{CliError, Result};
use crate::io::{read_series, OutputDir};
use nftrap_core::coupling::{harmonic_overlaps, mean_beta, mean_detuning, occupation, remaining_fraction};
use nftrap_core::dynamics::{
    calibrate_cooling_rate, cooling_recovery_curve, recovery_durations, DynamicsConfig, PulseSchedule, Readout,
    Segment, SimState, Simulator, ThermalModel, TransmissionTrace,
};
use nftrap_core::fitting::{
    extract_flank_metrics, fit, model_double_exp, model_exp_lifetime, model_od_spectrum,
    model_saturation_absorption, window, FitModel, FitResult, FlankWindows, ModelKind,
};
use nftrap_core::heating::{recoil_heating_rate, HeatingMode, HeatingTable};
use nftrap_core::setup::PreparedTrap;
use rayon::prelude::*;
use serde::Serialize;
use std::path::{Path, PathBuf};

/// Everything a subcommand needs: the validated configuration, the output
/// directory and the heating-table cache.
#[derive(Debug)]
pub struct Context {
    pub loaded: LoadedConfig,
    pub out: OutputDir,
    pub cache: HeatingCache,
}

impl Context {
    pub fn new(mut loaded: LoadedConfig, out: Option<PathBuf>, seed: Option<u64>) -> Result<Self> {
        if let Some(seed) = seed {
            loaded.config.monte_carlo.seed = seed;
        }
        let root = out
            .or_else(|| loaded.config.output.directory.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        let cache_dir = loaded.config.output.cache_directory.clone().unwrap_or_else(|| root.join("cache"));
        Ok(Self { out: OutputDir::create(&root)?, cache: HeatingCache::new(cache_dir), loaded })
    }

    pub fn config(&self) -> &RunConfig {
        &self.loaded.config
    }
}

/// Bound states through to the thermal model.
struct Pipeline {
    prepared: PreparedTrap,
    heating: HeatingTable,
    model: ThermalModel,
}

fn prepare(cfg: &RunConfig) -> Result<PreparedTrap> {
    Ok(cfg.trap_setup()?.prepare()?)
}

fn heating_table(cfg: &RunConfig, prepared: &PreparedTrap, cache: &HeatingCache) -> Result<HeatingTable> {
    if cfg.heating_mode() == HeatingMode::RecoilOnly {
        return Ok(HeatingTable::recoil_only(prepared.table.len(), prepared.setup.species.recoil_temperature));
    }
    let settings = cfg.monte_carlo();
    let key = heating_key(&prepared.setup.species, &prepared.setup.trap, &prepared.excited, &settings);
    cache.get_or_compute(&key, || {
        log::info!("computing heating table ({} samples per state, seed {})", settings.samples, settings.seed);
        Ok(prepared.heating_table(&settings)?)
    })
}

fn pipeline(ctx: &Context) -> Result<Pipeline> {
    let cfg = ctx.config();
    let prepared = prepare(cfg)?;
    let heating = heating_table(cfg, &prepared, &ctx.cache)?;
    let model = prepared.thermal_model(&heating, cfg.heating_mode())?;
    Ok(Pipeline { prepared, heating, model })
}

// ---------------------------------------------------------------- spectrum

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumSummary {
    pub states: usize,
    pub n_max: usize,
    pub lambda: f64,
    pub trap_frequency_hz: f64,
    #[serde(rename = "depth_uK")]
    pub depth_uk: f64,
}

pub fn spectrum(ctx: &mut Context) -> Result<SpectrumSummary> {
    let cfg = ctx.config().clone();
    let species = cfg.species();
    let setup = cfg.trap_setup()?;
    let table = nftrap_core::morse::BoundStateTable::build(setup.trap, &species)?;
    let uk = species.micro_kelvin(1.0);
    ctx.out.write_csv(
        "spectrum.csv",
        &["n", "energy_uK", "mean_distance_nm"],
        (0..table.len()).map(|n| vec![n.into(), (table.energies[n] / uk).into(), (table.mean_distances[n] * 1e9).into()]),
    )?;
    let summary = SpectrumSummary {
        states: table.len(),
        n_max: table.n_max,
        lambda: table.lambda,
        trap_frequency_hz: table.omega / (2.0 * std::f64::consts::PI),
        depth_uk: cfg.trap.depth_uk,
    };
    ctx.out.write_json("spectrum_summary.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- coupling

#[derive(Debug, Clone, Serialize)]
pub struct CouplingSummary {
    pub beta_reference: f64,
    pub decay_length_m: f64,
    pub calibration_residual: f64,
    pub beta_infinite: f64,
    #[serde(rename = "beta_100uK")]
    pub beta_100uk: f64,
    pub beta_highest_over_ground: f64,
}

pub fn coupling(ctx: &mut Context) -> Result<CouplingSummary> {
    let cfg = ctx.config().clone();
    let prepared = prepare(&cfg)?;
    let table = &prepared.table;
    let k_b = prepared.setup.species.constants.k_b;
    let rows = cfg
        .temperature_grid()
        .into_iter()
        .map(|t| {
            let occ = occupation(table, t, k_b)?;
            Ok(vec![
                t.into(),
                mean_beta(&prepared.coupling, &occ)?.into(),
                remaining_fraction(table.potential.depth, t, k_b).into(),
                mean_detuning(&prepared.coupling.detuning, &occ)?.into(),
            ])
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.out.write_csv(
        "coupling.csv",
        &["temperature_K", "mean_beta", "remaining_fraction", "detuning_rad_s"],
        rows,
    )?;
    let profile = prepared.calibration.profile;
    let harmonic = harmonic_overlaps(table, |d| profile.beta(d))?;
    let beta = &prepared.coupling.beta;
    ctx.out.write_csv(
        "coupling_states.csv",
        &["n", "beta", "harmonic_beta", "detuning_rad_s"],
        (0..table.len()).map(|n| vec![n.into(), beta[n].into(), harmonic[n].into(), prepared.coupling.detuning[n].into()]),
    )?;
    let summary = CouplingSummary {
        beta_reference: profile.reference,
        decay_length_m: profile.decay_length,
        calibration_residual: prepared.calibration.residual,
        beta_infinite: beta.iter().sum::<f64>() / beta.len() as f64,
        beta_100uk: prepared.calibration.beta_at_100uk,
        beta_highest_over_ground: beta[beta.len() - 1] / beta[0],
    };
    ctx.out.write_json("coupling_summary.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- heating

#[derive(Debug, Clone, Serialize)]
pub struct HeatingSummary {
    pub mode: &'static str,
    pub samples: usize,
    pub seed: u64,
    pub recoil_temperature_k: f64,
    /// dT/dt for s = 1, δ = 0 with recoil heating only, K/s.
    pub recoil_only_rate_k_per_s: f64,
    pub max_relative_standard_error: f64,
    pub ground_state_heating_k: f64,
}

pub fn heating(ctx: &mut Context) -> Result<HeatingSummary> {
    let p = pipeline(ctx)?;
    let cfg = ctx.config().clone();
    let species = p.prepared.setup.species;
    let uk = species.micro_kelvin(1.0);
    let h = &p.heating;
    ctx.out.write_csv(
        "heating_states.csv",
        &["n", "energy_uK", "delta_T_K", "standard_error_K"],
        (0..h.state_heating.len()).map(|n| {
            vec![n.into(), (p.prepared.table.energies[n] / uk).into(), h.state_heating[n].into(), h.standard_errors[n].into()]
        }),
    )?;
    let rows = cfg
        .temperature_grid()
        .into_iter()
        .map(|t| {
            let point = p.model.exact(t)?;
            Ok(vec![t.into(), point.heating.into(), point.detuning.into(), point.beta.into()])
        })
        .collect::<Result<Vec<_>>>()?;
    ctx.out.write_csv("heating_curve.csv", &["temperature_K", "delta_T_K", "detuning_rad_s", "mean_beta"], rows)?;
    let max_rel = h
        .state_heating
        .iter()
        .zip(&h.standard_errors)
        .map(|(m, s)| if *m != 0.0 { (s / m).abs() } else { 0.0 })
        .fold(0.0, f64::max);
    let summary = HeatingSummary {
        mode: match cfg.heating_mode() {
            HeatingMode::Full => "full",
            HeatingMode::RecoilOnly => "recoil-only",
        },
        samples: h.samples,
        seed: h.seed,
        recoil_temperature_k: h.recoil_temperature,
        recoil_only_rate_k_per_s: recoil_heating_rate(1.0, 0.0, &species),
        max_relative_standard_error: max_rel,
        ground_state_heating_k: h.state_heating[0] + h.recoil_temperature,
    };
    ctx.out.write_json("heating_summary.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- calibrate

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateSummary {
    pub beta_reference: f64,
    pub decay_length_m: f64,
    pub minimum_m: f64,
    pub residual: f64,
    /// Targets recomputed from the calibrated profile.
    pub beta_infinite: f64,
    pub beta_cold: f64,
    #[serde(rename = "beta_100uK")]
    pub beta_100uk: f64,
    pub cooling_rate_per_s: f64,
    pub fitted_recovery_rate_per_s: f64,
    pub recovered_optical_depth: f64,
    pub initial_cooling_speed_k_per_s: f64,
}

pub fn calibrate(ctx: &mut Context) -> Result<CalibrateSummary> {
    let p = pipeline(ctx)?;
    let cfg = ctx.config().clone();
    let targets = p.prepared.setup.targets;
    let k_b = p.prepared.setup.species.constants.k_b;
    let cold = occupation(&p.prepared.table, targets.cold_temperature, k_b)?;
    let profile = p.prepared.calibration.profile;
    let probe = cfg.recovery_probe();
    let cooling = calibrate_cooling_rate(&p.model, &cfg.dynamics(), probe, cfg.dynamics.recovery_rate_per_s)?;
    let dynamics = DynamicsConfig { cooling_rate: cooling.cooling_rate, ..cfg.dynamics() };
    let sim = Simulator::new(&p.model, &dynamics)?;
    let durations = recovery_durations();
    let curve = cooling_recovery_curve(&sim, probe, &durations)?;
    ctx.out.write_csv(
        "cooling_recovery.csv",
        &["time_s", "delta_od"],
        durations.iter().zip(&curve).map(|(t, y)| vec![(*t).into(), (*y).into()]),
    )?;
    let summary = CalibrateSummary {
        beta_reference: profile.reference,
        decay_length_m: profile.decay_length,
        minimum_m: profile.minimum,
        residual: p.prepared.calibration.residual,
        beta_infinite: p.model.beta_infinite,
        beta_cold: mean_beta(&p.prepared.coupling, &cold)?,
        beta_100uk: p.prepared.calibration.beta_at_100uk,
        cooling_rate_per_s: cooling.cooling_rate,
        fitted_recovery_rate_per_s: cooling.fitted_rate,
        recovered_optical_depth: cooling.recovered_optical_depth,
        initial_cooling_speed_k_per_s: cooling.initial_cooling_speed,
    };
    ctx.out.write_json("calibration.json", &summary)?;
    Ok(summary)
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone, Serialize)]
pub struct FittedParameter {
    pub name: &'static str,
    pub value: f64,
    pub uncertainty: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitSummary {
    pub model: &'static str,
    pub data: String,
    pub x_column: String,
    pub y_column: String,
    pub window: (f64, f64),
    pub points: usize,
    pub parameters: Vec<FittedParameter>,
    pub residual_norm: f64,
    pub rms: f64,
    pub converged: bool,
    pub iterations: usize,
    pub at_bounds: Vec<String>,
    pub diagnostic: Option<String>,
    pub note: Option<&'static str>,
}

impl FitSummary {
    pub fn value(&self, name: &str) -> Option<f64> {
        self.parameters.iter().find(|p| p.name == name).map(|p| p.value)
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitRequest {
    pub model: String,
    pub data: PathBuf,
    pub column: Option<String>,
    pub from: Option<f64>,
    pub to: Option<f64>,
}

pub fn model_by_id(id: &str, linewidth: f64) -> Result<FitModel> {
    let kind = ModelKind::from_id(id).ok_or_else(|| {
        CliError::Usage(format!("unknown model '{id}'; expected double-exp, exp-lifetime, saturation or od-spectrum"))
    })?;
    Ok(match kind {
        ModelKind::DoubleExp => model_double_exp(),
        ModelKind::ExpLifetime => model_exp_lifetime(),
        ModelKind::SaturationAbsorption => model_saturation_absorption(),
        ModelKind::OdSpectrum => model_od_spectrum(linewidth),
    })
}

pub fn fit_data(ctx: &mut Context, req: &FitRequest) -> Result<FitSummary> {
    let linewidth = ctx.config().species().linewidth;
    let model = model_by_id(&req.model, linewidth)?;
    let series = read_series(&req.data, req.column.as_deref())?;
    let lo = req.from.unwrap_or(f64::NEG_INFINITY);
    let hi = req.to.unwrap_or(f64::INFINITY);
    if lo >= hi {
        return Err(CliError::Usage(format!("empty fit window [{lo}, {hi}]")));
    }
    let (xs, ys) = window(&series.xs, &series.ys, lo, hi);
    let result = fit(&model, &xs, &ys, None)?;
    ctx.out.write_csv(
        "fit_curve.csv",
        &[series.x_name.as_str(), "data", "model", "residual"],
        xs.iter().zip(&ys).map(|(x, y)| {
            let m = model.eval(*x, &result.parameters);
            vec![(*x).into(), (*y).into(), m.into(), (m - y).into()]
        }),
    )?;
    let summary = fit_summary(&model, &result, &req.data, &series.x_name, &series.y_name, (xs[0], xs[xs.len() - 1]), xs.len());
    ctx.out.write_json("fit.json", &summary)?;
    Ok(summary)
}

fn fit_summary(
    model: &FitModel,
    r: &FitResult,
    data: &Path,
    x: &str,
    y: &str,
    range: (f64, f64),
    points: usize,
) -> FitSummary {
    FitSummary {
        model: model.id(),
        data: data.display().to_string(),
        x_column: x.to_string(),
        y_column: y.to_string(),
        window: range,
        points,
        parameters: model
            .parameters
            .iter()
            .enumerate()
            .map(|(i, s)| FittedParameter {
                name: s.name,
                value: r.parameters[i],
                uncertainty: r.uncertainties[i],
                lower: s.lower,
                upper: s.upper,
            })
            .collect(),
        residual_norm: r.residual_norm,
        rms: r.rms,
        converged: r.converged,
        iterations: r.iterations,
        at_bounds: r.at_bounds.clone(),
        diagnostic: r.diagnostic.clone(),
        note: (model.kind == ModelKind::OdSpectrum)
            .then_some("power-broadened Lorentzian in the detuning; no inhomogeneous or probe-induced broadening"),
    }
}

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone, Serialize)]
pub struct FitBrief {
    pub od0: f64,
    pub gamma_per_s: f64,
    pub rms: f64,
    pub converged: bool,
}

impl FitBrief {
    fn of(r: &FitResult) -> Self {
        Self { od0: r.parameters[0], gamma_per_s: r.parameters[1], rms: r.rms, converged: r.converged }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalState {
    pub time_s: f64,
    pub temperature_k: f64,
    pub atoms: f64,
    pub mean_beta: f64,
    pub transmission: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeRun {
    /// Swept quantity: normalised power or wait in seconds.
    pub parameter: f64,
    pub file: String,
    pub initial_transmission: f64,
    pub final_transmission: f64,
    pub monotone: bool,
    pub gamma_per_s: Option<f64>,
    pub gamma_initial_per_s: Option<f64>,
    pub gamma_ratio: Option<f64>,
    pub delta_od_initial: Option<f64>,
    pub long_fit_rms: Option<f64>,
    pub final_state: FinalState,
}

#[derive(Debug, Clone, Serialize)]
pub struct PulseEdge {
    pub start_transmission: f64,
    pub end_transmission: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutRow {
    pub parameter: f64,
    pub optical_depth: f64,
    pub relative: f64,
    pub temperature_k: f64,
    pub atoms: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "recipe", rename_all = "kebab-case")]
pub enum SimulateSummary {
    Schedule { duration_s: f64, probes: Vec<ProbeRun>, readouts: Vec<ReadoutRow>, stitched_fit: Option<FitBrief> },
    PowerSweep { probe_s: f64, runs: Vec<ProbeRun> },
    WaitSweep { power: f64, probe_s: f64, runs: Vec<ProbeRun> },
    OdPlateau { cool_s: f64, rows: Vec<ReadoutRow>, max_relative_change: f64 },
    CoolingSweep { probe_s: f64, power: f64, rate_per_s: f64, amplitude: f64, rms: f64 },
    PassiveDecay { cool_s: f64, lifetime_s: f64, lifetime_uncertainty_s: f64, amplitude: f64, rms: f64 },
    Interleaved {
        pulses: usize,
        probe_s: f64,
        cool_s: f64,
        power: f64,
        edges: Vec<PulseEdge>,
        each_restart_below_previous_end: bool,
        first_pulse_gamma_initial_per_s: f64,
        stitched_fit: FitBrief,
        final_state: FinalState,
    },
}

fn final_state(state: &SimState) -> Result<FinalState> {
    Ok(FinalState {
        time_s: state.time,
        temperature_k: state.temperature,
        atoms: state.atoms,
        mean_beta: state.beta,
        transmission: state.transmission()?,
    })
}

fn write_trace(out: &mut OutputDir, name: &str, trace: &TransmissionTrace) -> Result<()> {
    out.write_csv(
        name,
        &["time_s", "transmission", "probe_time_s", "temperature_K", "atoms", "mean_beta"],
        trace.samples.iter().map(|s| {
            vec![
                s.time.into(),
                s.transmission.into(),
                s.probe_time.into(),
                s.temperature.into(),
                s.atoms.into(),
                s.beta.into(),
            ]
        }),
    )?;
    Ok(())
}

/// Flank analysis of probe segment `k`, when it is long enough.
fn probe_run(
    trace: &TransmissionTrace,
    k: usize,
    parameter: f64,
    file: &str,
    state: &SimState,
) -> Result<ProbeRun> {
    let (ts, tr) = trace.segment_series(k);
    let (ts, tr): (Vec<f64>, Vec<f64>) = {
        let t0 = ts[0];
        (ts.iter().map(|t| t - t0).collect(), tr)
    };
    let windows = FlankWindows::default();
    let flank = if ts[ts.len() - 1] >= windows.long.1 { Some(extract_flank_metrics(&ts, &tr, windows)?) } else { None };
    Ok(ProbeRun {
        parameter,
        file: file.to_string(),
        initial_transmission: tr[0],
        final_transmission: tr[tr.len() - 1],
        monotone: tr.windows(2).all(|w| w[1] >= w[0]),
        gamma_per_s: flank.as_ref().map(|f| f.gamma),
        gamma_initial_per_s: flank.as_ref().map(|f| f.gamma_initial),
        gamma_ratio: flank.as_ref().map(|f| f.gamma_initial / f.gamma),
        delta_od_initial: flank.as_ref().map(|f| f.delta_od_initial),
        long_fit_rms: flank.as_ref().map(|f| f.long_fit.rms),
        final_state: final_state(state)?,
    })
}

fn readout_rows(params: &[f64], readouts: &[Readout]) -> Vec<ReadoutRow> {
    let od0 = readouts[0].optical_depth;
    params
        .iter()
        .zip(readouts)
        .map(|(p, r)| ReadoutRow {
            parameter: *p,
            optical_depth: r.optical_depth,
            relative: r.optical_depth / od0,
            temperature_k: r.temperature,
            atoms: r.atoms,
        })
        .collect()
}

fn write_readouts(out: &mut OutputDir, name: &str, x: &str, rows: &[ReadoutRow]) -> Result<()> {
    out.write_csv(
        name,
        &[x, "optical_depth", "relative_od", "temperature_K", "atoms"],
        rows.iter().map(|r| {
            vec![r.parameter.into(), r.optical_depth.into(), r.relative.into(), r.temperature_k.into(), r.atoms.into()]
        }),
    )?;
    Ok(())
}

fn wait_then(wait: f64, rest: &[Segment]) -> nftrap_core::Result<PulseSchedule> {
    let mut segments = Vec::with_capacity(rest.len() + 1);
    if wait > 0.0 {
        segments.push(Segment::Wait { duration: wait });
    }
    segments.extend_from_slice(rest);
    PulseSchedule::new(segments)
}

pub fn simulate(ctx: &mut Context) -> Result<SimulateSummary> {
    let p = pipeline(ctx)?;
    let cfg = ctx.config().clone();
    let dynamics = cfg.dynamics();
    let sim = Simulator::new(&p.model, &dynamics)?;
    let s = &cfg.simulate;
    let out = &mut ctx.out;
    let probe = s.probe_us * 1e-6;
    let cool = s.cool_ms * 1e-3;
    let summary = match s.recipe {
        Recipe::Schedule => {
            let schedule = PulseSchedule::new(s.segments.iter().map(|seg| seg.to_segment()).collect())?;
            let (trace, state) = sim.run_schedule(&schedule)?;
            let probes = if trace.samples.is_empty() {
                Vec::new()
            } else {
                write_trace(out, "trace.csv", &trace)?;
                (0..trace.probe_segments.len())
                    .map(|k| probe_run(&trace, k, k as f64, "trace.csv", &state))
                    .collect::<Result<Vec<_>>>()?
            };
            let stitched_fit = if trace.probe_segments.len() > 1 {
                let (x, y) = trace.stitched();
                out.write_csv("stitched.csv", &["time_s", "transmission"], x.iter().zip(&y).map(|(a, b)| vec![(*a).into(), (*b).into()]))?;
                Some(FitBrief::of(&fit(&model_double_exp(), &x, &y, None)?))
            } else {
                None
            };
            let readouts = if trace.readouts.is_empty() {
                Vec::new()
            } else {
                let times: Vec<f64> = trace.readouts.iter().map(|r| r.time).collect();
                let rows = readout_rows(&times, &trace.readouts);
                write_readouts(out, "readouts.csv", "time_s", &rows)?;
                rows
            };
            SimulateSummary::Schedule { duration_s: schedule.total_duration(), probes, readouts, stitched_fit }
        }
        Recipe::PowerSweep => {
            let runs: Vec<_> = s
                .powers
                .par_iter()
                .map(|&power| sim.run_schedule(&PulseSchedule::new(vec![Segment::Probe { duration: probe, power }])?))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut out_runs = Vec::with_capacity(runs.len());
            for (i, ((trace, state), &power)) in runs.iter().zip(&s.powers).enumerate() {
                let name = format!("power_sweep_{i}.csv");
                write_trace(out, &name, trace)?;
                out_runs.push(probe_run(trace, 0, power, &name, state)?);
            }
            SimulateSummary::PowerSweep { probe_s: probe, runs: out_runs }
        }
        Recipe::WaitSweep => {
            let seg = [Segment::Probe { duration: probe, power: s.power }];
            let runs: Vec<_> = s
                .waits_ms
                .par_iter()
                .map(|&w| sim.run_schedule(&wait_then(w * 1e-3, &seg)?))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let mut out_runs = Vec::with_capacity(runs.len());
            for (i, ((trace, state), &w)) in runs.iter().zip(&s.waits_ms).enumerate() {
                let name = format!("wait_sweep_{i}.csv");
                write_trace(out, &name, trace)?;
                out_runs.push(probe_run(trace, 0, w * 1e-3, &name, state)?);
            }
            SimulateSummary::WaitSweep { power: s.power, probe_s: probe, runs: out_runs }
        }
        Recipe::OdPlateau | Recipe::PassiveDecay => {
            let prefix = s.cool_prefix_ms * 1e-3;
            let mut tail = Vec::new();
            if prefix > 0.0 {
                tail.push(Segment::Cool { duration: prefix });
            }
            tail.push(Segment::Readout);
            let waits: Vec<f64> = s.waits_ms.iter().map(|w| w * 1e-3).collect();
            let readouts = waits
                .par_iter()
                .map(|&w| Ok(sim.run_schedule(&wait_then(w, &tail)?)?.0.readouts[0]))
                .collect::<Result<Vec<_>>>()?;
            let rows = readout_rows(&waits, &readouts);
            if s.recipe == Recipe::OdPlateau {
                write_readouts(out, "od_plateau.csv", "time_s", &rows)?;
                let max_relative_change = rows.iter().map(|r| (r.relative - 1.0).abs()).fold(0.0, f64::max);
                SimulateSummary::OdPlateau { cool_s: prefix, rows, max_relative_change }
            } else {
                write_readouts(out, "passive_decay.csv", "time_s", &rows)?;
                let ods: Vec<f64> = rows.iter().map(|r| r.optical_depth).collect();
                let r = fit(&model_exp_lifetime(), &waits, &ods, None)?;
                SimulateSummary::PassiveDecay {
                    cool_s: prefix,
                    lifetime_s: r.parameters[1],
                    lifetime_uncertainty_s: r.uncertainties[1],
                    amplitude: r.parameters[0],
                    rms: r.rms,
                }
            }
        }
        Recipe::CoolingSweep => {
            let rp = cfg.recovery_probe();
            let durations: Vec<f64> = s.cool_durations_ms.iter().map(|t| t * 1e-3).collect();
            let curve = cooling_recovery_curve(&sim, rp, &durations)?;
            out.write_csv(
                "cooling_recovery.csv",
                &["time_s", "delta_od"],
                durations.iter().zip(&curve).map(|(t, y)| vec![(*t).into(), (*y).into()]),
            )?;
            let r = fit(&model_saturation_absorption(), &durations, &curve, None)?;
            SimulateSummary::CoolingSweep {
                probe_s: rp.duration,
                power: rp.power,
                rate_per_s: 1.0 / r.parameters[1],
                amplitude: r.parameters[0],
                rms: r.rms,
            }
        }
        Recipe::Interleaved => {
            let schedule = PulseSchedule::interleaved(s.pulses, probe, s.power, cool)?;
            let (trace, state) = sim.run_schedule(&schedule)?;
            write_trace(out, "interleaved.csv", &trace)?;
            let (x, y) = trace.stitched();
            out.write_csv("stitched.csv", &["time_s", "transmission"], x.iter().zip(&y).map(|(a, b)| vec![(*a).into(), (*b).into()]))?;
            let stitched = fit(&model_double_exp(), &x, &y, None)?;
            let edges: Vec<PulseEdge> = (0..trace.probe_segments.len())
                .map(|k| {
                    let seg = trace.segment(k);
                    PulseEdge { start_transmission: seg[0].transmission, end_transmission: seg[seg.len() - 1].transmission }
                })
                .collect();
            let restart = edges.windows(2).all(|w| w[1].start_transmission < w[0].end_transmission);
            let (x0, y0) = trace.segment_series(0);
            let t0 = x0[0];
            let x0: Vec<f64> = x0.iter().map(|t| t - t0).collect();
            let windows = FlankWindows::default();
            let (xi, yi) = window(&x0, &y0, windows.initial.0, windows.initial.1);
            let first = fit(&model_double_exp(), &xi, &yi, None)?;
            SimulateSummary::Interleaved {
                pulses: s.pulses,
                probe_s: probe,
                cool_s: cool,
                power: s.power,
                edges,
                each_restart_below_previous_end: restart,
                first_pulse_gamma_initial_per_s: first.parameters[1],
                stitched_fit: FitBrief::of(&stitched),
                final_state: final_state(&state)?,
            }
        }
    };
    out.write_json("simulate_summary.json", &summary)?;
    Ok(summary)
}
