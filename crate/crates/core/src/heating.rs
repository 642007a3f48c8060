//! Photon scattering rate and per-scatter heating.
//!
//! Each scattering event leaves the atom in the excited state for an
//! exponentially distributed dwell. During the dwell it moves in the repulsive
//! excited-state potential; on return, the change of its mechanical energy in
//! the ground-state trap is the dipole-force heating. Photon recoil adds
//! `T_rec` on top.

use crate::constants::AtomSpecies;
use crate::coupling::{occupation, ThermalOccupation};
use crate::morse::{BoundStateTable, MorsePotential, RepulsivePotential};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// `R_sc = Γ/2 · s / (1 + s + (2δ/Γ)²)`
pub fn scattering_rate(saturation: f64, detuning: f64, linewidth: f64) -> f64 {
    let x = 2.0 * detuning / linewidth;
    0.5 * linewidth * saturation / (1.0 + saturation + x * x)
}

pub const MIN_SAMPLES: usize = 10_000;
/// Dwell times are truncated at this many lifetimes.
pub const DWELL_CUTOFF_LIFETIMES: f64 = 100.0;
/// Leapfrog steps per harmonic trap period (at most).
pub const STEPS_PER_PERIOD: f64 = 50.0;
const CHUNK: usize = 2048;

/// How initial phase-space points on the classical orbit are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OrbitSampling {
    /// Uniform in time along the periodic orbit (stationary distribution).
    #[default]
    TimeWeighted,
    /// Uniform in position between the turning points.
    UniformPosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSettings {
    pub samples: usize,
    pub seed: u64,
    pub sampling: OrbitSampling,
}

impl Default for MonteCarloSettings {
    fn default() -> Self {
        Self { samples: 100_000, seed: 1, sampling: OrbitSampling::TimeWeighted }
    }
}

/// One excited-state excursion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScatterSample {
    /// m
    pub position: f64,
    /// kg·m/s
    pub momentum: f64,
    /// s
    pub dwell: f64,
    /// J
    pub energy_gain: f64,
}

/// Everything needed to propagate one excursion.
#[derive(Debug, Clone, Copy)]
pub struct DwellProblem {
    pub ground: MorsePotential,
    pub excited: RepulsivePotential,
    pub mass: f64,
    /// Γ, rad/s
    pub linewidth: f64,
}

impl DwellProblem {
    pub fn max_step(&self) -> f64 {
        TAU / self.ground.trap_frequency(self.mass) / STEPS_PER_PERIOD
    }

    /// Position and velocity on the ground-state orbit of energy `energy`
    /// (relative to dissociation, negative) at orbital phase `phase`.
    ///
    /// Bound Morse motion is solvable in closed form:
    /// `e^{a x} = (1 - sqrt(1-ε) cos φ)/ε` with `ε = -E/D` and `φ` advancing
    /// uniformly at `Ω sqrt(ε)`.
    pub fn orbit_point(&self, energy: f64, phase: f64) -> (f64, f64) {
        let g = self.ground;
        let eps = (-energy / g.depth).clamp(f64::MIN_POSITIVE, 1.0);
        let ecc = (1.0 - eps).sqrt();
        let y = (1.0 - ecc * phase.cos()) / eps;
        let x = y.ln() / g.stiffness;
        let omega_e = g.trap_frequency(self.mass) * eps.sqrt();
        let v = ecc * omega_e * phase.sin() / (eps * y * g.stiffness);
        (g.minimum + x, v)
    }

    /// Turning points of the orbit of energy `energy`.
    pub fn turning_points(&self, energy: f64) -> (f64, f64) {
        let (inner, _) = self.orbit_point(energy, 0.0);
        let (outer, _) = self.orbit_point(energy, std::f64::consts::PI);
        (inner, outer)
    }

    /// Ground-state mechanical energy.
    pub fn ground_energy(&self, position: f64, velocity: f64) -> f64 {
        0.5 * self.mass * velocity * velocity + self.ground.energy(position)
    }

    /// Leapfrog propagation under the excited-state force for `dwell`.
    pub fn propagate(&self, mut position: f64, mut velocity: f64, dwell: f64) -> (f64, f64) {
        if dwell <= 0.0 {
            return (position, velocity);
        }
        let steps = (dwell / self.max_step()).ceil().max(1.0) as usize;
        let h = dwell / steps as f64;
        let inv_m = 1.0 / self.mass;
        let mut accel = self.excited.force(position) * inv_m;
        for _ in 0..steps {
            velocity += 0.5 * h * accel;
            position += h * velocity;
            accel = self.excited.force(position) * inv_m;
            velocity += 0.5 * h * accel;
        }
        (position, velocity)
    }

    /// Energy gained by an atom starting at `(position, velocity)`.
    pub fn energy_gain(&self, position: f64, velocity: f64, dwell: f64) -> f64 {
        let before = self.ground_energy(position, velocity);
        let (x, v) = self.propagate(position, velocity, dwell);
        self.ground_energy(x, v) - before
    }

    /// Draw one excursion from cell `(orbit_cell, dwell_cell)` of a
    /// `strata × strata` partition of (orbit slice, dwell quantile). The
    /// returned gain is the mean over the sampled velocity and its reverse
    /// (antithetic pair), which cancels the first-order term odd in the
    /// initial velocity, times the importance weight of the orbit draw.
    pub fn sample<R: Rng>(
        &self,
        energy: f64,
        sampling: OrbitSampling,
        (orbit_cell, dwell_cell): (usize, usize),
        strata: usize,
        rng: &mut R,
    ) -> ScatterSample {
        let width = 1.0 / strata.max(1) as f64;
        let fraction = (orbit_cell as f64 + rng.random::<f64>()) * width;
        let (position, velocity, weight) = match sampling {
            OrbitSampling::TimeWeighted => {
                // The antithetic partner of phase φ is -φ, so half an orbit
                // suffices. φ = π f² crowds draws towards the inner turning
                // point, where weakly bound atoms pick up most of their energy.
                let (x, v) = self.orbit_point(energy, PI * fraction * fraction);
                (x, v, 2.0 * fraction)
            }
            OrbitSampling::UniformPosition => {
                let (lo, hi) = self.turning_points(energy);
                let x = lo + (hi - lo) * fraction;
                let kinetic = (energy - self.ground.energy(x)).max(0.0);
                (x, (2.0 * kinetic / self.mass).sqrt(), 1.0)
            }
        };
        let u = (dwell_cell as f64 + rng.random::<f64>()) * width;
        let dwell = (-(-u).ln_1p() / self.linewidth).min(DWELL_CUTOFF_LIFETIMES / self.linewidth);
        let gain = 0.5
            * weight
            * (self.energy_gain(position, velocity, dwell) + self.energy_gain(position, -velocity, dwell));
        ScatterSample { position, momentum: self.mass * velocity, dwell, energy_gain: gain }
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG stream for one `(seed, state, sample)` triple.
pub fn sample_rng(seed: u64, state: u64, sample: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(seed ^ splitmix(state)) ^ sample))
}

/// Mean heating (K) and its standard error for one initial energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DwellEstimate {
    pub mean: f64,
    pub standard_error: f64,
}

/// Sums over adjacent stratum pairs; each pair acts as one stratum of
/// width two, which gives an unbiased variance estimate for the stratified mean.
#[derive(Clone, Copy, Default)]
struct PairSums {
    pairs: usize,
    sum: f64,
    squared_differences: f64,
}

impl PairSums {
    fn merge(self, other: PairSums) -> PairSums {
        PairSums {
            pairs: self.pairs + other.pairs,
            sum: self.sum + other.sum,
            squared_differences: self.squared_differences + other.squared_differences,
        }
    }
}

/// Monte-Carlo estimate of the dipole-force heating `ΔT_n` for an atom of
/// energy `energy` (J, relative to dissociation).
///
/// Samples fill an `m × m` grid of (orbit slice, dwell quantile) cells with
/// one draw per cell; `m` is the smallest even number with `m² >= samples`. Deterministic for a given
/// `(settings.seed, state, settings.samples)`: every sample owns its RNG
/// stream and chunk sums are merged in a fixed order.
pub fn excited_dwell_heating(
    problem: &DwellProblem,
    energy: f64,
    settings: &MonteCarloSettings,
    state: u64,
    k_b: f64,
) -> Result<DwellEstimate> {
    if settings.samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte-Carlo budget {} below the minimum of {MIN_SAMPLES}",
            settings.samples
        )));
    }
    let m = ((settings.samples as f64).sqrt().ceil() as usize).next_multiple_of(2);
    let n = m * m;
    let chunks = n.div_ceil(CHUNK);
    let run_chunk = |c: usize| {
        let mut acc = PairSums::default();
        let draw = |i: usize| {
            let mut rng = sample_rng(settings.seed, state, i as u64);
            problem.sample(energy, settings.sampling, (i / m, i % m), m, &mut rng).energy_gain
        };
        for i in (c * CHUNK..((c + 1) * CHUNK).min(n)).step_by(2) {
            let (g0, g1) = (draw(i), draw(i + 1));
            acc.pairs += 1;
            acc.sum += g0 + g1;
            acc.squared_differences += (g0 - g1) * (g0 - g1);
        }
        acc
    };
    #[cfg(feature = "parallel")]
    let parts: Vec<PairSums> = {
        use rayon::prelude::*;
        (0..chunks).into_par_iter().map(run_chunk).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<PairSums> = (0..chunks).map(run_chunk).collect();
    let total = parts.into_iter().fold(PairSums::default(), PairSums::merge);
    let pairs = total.pairs as f64;
    Ok(DwellEstimate {
        mean: total.sum / (2.0 * pairs) / k_b,
        standard_error: (total.squared_differences / 4.0).sqrt() / pairs / k_b,
    })
}

/// Per-state heating for a whole bound-state table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatingTable {
    /// ΔT_n, K
    pub state_heating: Vec<f64>,
    /// K
    pub standard_errors: Vec<f64>,
    /// K
    pub recoil_temperature: f64,
    pub samples: usize,
    pub seed: u64,
}

impl HeatingTable {
    pub fn compute(
        table: &BoundStateTable,
        excited: &RepulsivePotential,
        species: &AtomSpecies,
        settings: &MonteCarloSettings,
    ) -> Result<Self> {
        let problem = DwellProblem {
            ground: table.potential,
            excited: *excited,
            mass: species.mass,
            linewidth: species.linewidth,
        };
        let k_b = species.constants.k_b;
        let mut state_heating = Vec::with_capacity(table.len());
        let mut standard_errors = Vec::with_capacity(table.len());
        for (n, &e) in table.energies.iter().enumerate() {
            let est = excited_dwell_heating(&problem, e, settings, n as u64, k_b)?;
            state_heating.push(est.mean);
            standard_errors.push(est.standard_error);
        }
        Ok(Self {
            state_heating,
            standard_errors,
            recoil_temperature: species.recoil_temperature,
            samples: settings.samples,
            seed: settings.seed,
        })
    }

    /// Table with no dipole-force contribution.
    pub fn recoil_only(states: usize, recoil_temperature: f64) -> Self {
        Self {
            state_heating: vec![0.0; states],
            standard_errors: vec![0.0; states],
            recoil_temperature,
            samples: 0,
            seed: 0,
        }
    }
}

/// `ΔT(T) = Σ_n (ΔT_n + T_rec) P_n(T)`
pub fn mean_heating_per_scatter(
    state_heating: &[f64],
    recoil_temperature: f64,
    occ: &ThermalOccupation,
) -> Result<f64> {
    Ok(occ.average(state_heating)? + recoil_temperature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum HeatingMode {
    #[default]
    Full,
    /// Photon recoil only; dipole-force heating switched off.
    RecoilOnly,
}

/// Inputs for evaluating `dT/dt` by direct summation over the bound states.
#[derive(Debug, Clone, Copy)]
pub struct HeatingContext<'a> {
    pub table: &'a BoundStateTable,
    /// δ_n, rad/s
    pub detuning: &'a [f64],
    pub heating: &'a HeatingTable,
    pub species: &'a AtomSpecies,
    pub mode: HeatingMode,
}

/// `dT/dt = R_sc(s, δ(T)) ΔT(T)` in K/s.
pub fn heating_rate(saturation: f64, temperature: f64, ctx: &HeatingContext<'_>) -> Result<f64> {
    if saturation < 0.0 {
        return Err(Error::InvalidParameter(format!("saturation must be >= 0, got {saturation}")));
    }
    let occ = occupation(ctx.table, temperature, ctx.species.constants.k_b)?;
    let detuning = occ.average(ctx.detuning)?;
    let per_scatter = match ctx.mode {
        HeatingMode::Full => mean_heating_per_scatter(&ctx.heating.state_heating, ctx.heating.recoil_temperature, &occ)?,
        HeatingMode::RecoilOnly => ctx.heating.recoil_temperature,
    };
    Ok(scattering_rate(saturation, detuning, ctx.species.linewidth) * per_scatter)
}

/// Recoil-only heating for a given saturation and detuning, K/s.
pub fn recoil_heating_rate(saturation: f64, detuning: f64, species: &AtomSpecies) -> f64 {
    scattering_rate(saturation, detuning, species.linewidth) * species.recoil_temperature
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::cesium_defaults;
    use approx::assert_relative_eq;

    fn problem(amplitude_factor: f64, decay_factor: f64) -> (DwellProblem, AtomSpecies) {
        let cs = cesium_defaults();
        let g = MorsePotential::new(cs.micro_kelvin(240.0), 5.85e6, 231e-9).unwrap();
        let e = RepulsivePotential::new(amplitude_factor * g.depth, decay_factor * g.stiffness, g.minimum).unwrap();
        (DwellProblem { ground: g, excited: e, mass: cs.mass, linewidth: cs.linewidth }, cs)
    }

    #[test]
    fn scattering_rate_limits() {
        let gamma = 3.0e7;
        assert_relative_eq!(scattering_rate(1.0, 0.0, gamma), gamma / 4.0);
        assert_relative_eq!(scattering_rate(1e-9, 0.0, gamma) / 1e-9, gamma / 2.0, max_relative = 1e-8);
        let cs = cesium_defaults();
        let r = scattering_rate(1.0, 0.0, cs.linewidth);
        assert!((r / 8.2e6 - 1.0).abs() < 0.01, "{r}");
    }

    #[test]
    fn orbit_points_conserve_energy() {
        let (p, _) = problem(1.0, 1.0);
        for &eps in &[1.0, 0.9, 0.3, 1e-4] {
            let energy = -eps * p.ground.depth;
            for k in 0..16 {
                let (x, v) = p.orbit_point(energy, k as f64 * 0.4);
                assert_relative_eq!(p.ground_energy(x, v), energy, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn zero_dwell_or_flat_potential_bookkeeping() {
        let (p, _) = problem(0.0, 1.0);
        let (x, v) = p.orbit_point(-0.5 * p.ground.depth, 1.1);
        assert_eq!(p.energy_gain(x, v, 0.0), 0.0);
        let (q, _) = problem(1.0, 1.0);
        assert_eq!(q.energy_gain(x, v, 0.0), 0.0);
    }

    #[test]
    fn free_flight_heating_matches_drift_estimate() {
        // With a flat excited potential the atom drifts freely; re-entering the
        // ground trap displaced by vτ costs ½ m Ω² <v²> <τ²> = E_vib (Ω/Γ)².
        let (p, cs) = problem(0.0, 1.0);
        let omega = p.ground.trap_frequency(cs.mass);
        let hbar = cs.constants.hbar;
        let vib = hbar * omega * 0.5 - (hbar * omega).powi(2) / (16.0 * p.ground.depth);
        let energy = vib - p.ground.depth;
        let settings = MonteCarloSettings { samples: 40_000, seed: 3, ..Default::default() };
        let est = excited_dwell_heating(&p, energy, &settings, 0, cs.constants.k_b).unwrap();
        // harmonic estimate: <v²> = E_vib/m, <τ²> = 2/Γ²
        let expected = 0.5 * cs.mass * omega * omega * (vib / cs.mass) * 2.0 / cs.linewidth.powi(2) / cs.constants.k_b;
        assert!(est.mean > 0.0);
        assert!((est.mean - expected).abs() < 0.1 * expected, "{} vs {}", est.mean, expected);
        // and it is far below one photon recoil
        assert!(est.mean < 0.05 * cs.recoil_temperature);
    }

    #[test]
    fn deterministic_under_seed() {
        let (p, cs) = problem(1.0, 1.0);
        let s = MonteCarloSettings { samples: 12_000, seed: 7, ..Default::default() };
        let a = excited_dwell_heating(&p, -0.8 * p.ground.depth, &s, 4, cs.constants.k_b).unwrap();
        let b = excited_dwell_heating(&p, -0.8 * p.ground.depth, &s, 4, cs.constants.k_b).unwrap();
        assert_eq!(a.mean.to_bits(), b.mean.to_bits());
        assert_eq!(a.standard_error.to_bits(), b.standard_error.to_bits());
        let other = MonteCarloSettings { seed: 8, ..s };
        let c = excited_dwell_heating(&p, -0.8 * p.ground.depth, &other, 4, cs.constants.k_b).unwrap();
        assert_ne!(a.mean.to_bits(), c.mean.to_bits());
    }

    #[test]
    fn reversed_phase_is_reversed_velocity() {
        let (p, _) = problem(1.0, 1.0);
        let energy = -0.4 * p.ground.depth;
        for phase in [0.3, 1.7, 2.9] {
            let (x0, v0) = p.orbit_point(energy, phase);
            let (x1, v1) = p.orbit_point(energy, -phase);
            assert_relative_eq!(x0, x1, max_relative = 1e-14);
            assert_relative_eq!(v0, -v1, max_relative = 1e-12);
        }
    }

    #[test]
    fn standard_error_shrinks_with_budget() {
        let (p, cs) = problem(1.0, 1.0);
        let energy = -0.3 * p.ground.depth;
        let small = MonteCarloSettings { samples: 10_000, seed: 5, ..Default::default() };
        let large = MonteCarloSettings { samples: 40_000, ..small };
        let a = excited_dwell_heating(&p, energy, &small, 9, cs.constants.k_b).unwrap();
        let b = excited_dwell_heating(&p, energy, &large, 9, cs.constants.k_b).unwrap();
        assert!(b.standard_error < 0.7 * a.standard_error);
        let sigma = (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt();
        assert!((a.mean - b.mean).abs() < 4.0 * sigma);
    }

    #[test]
    fn rejects_small_budgets() {
        let (p, cs) = problem(1.0, 1.0);
        let s = MonteCarloSettings { samples: 100, ..Default::default() };
        assert!(excited_dwell_heating(&p, -p.ground.depth, &s, 0, cs.constants.k_b).is_err());
    }

    #[test]
    fn shorter_dwell_heats_less() {
        let (p, cs) = problem(1.0, 1.0);
        let fast = DwellProblem { linewidth: 2.0 * p.linewidth, ..p };
        let s = MonteCarloSettings { samples: 20_000, seed: 11, ..Default::default() };
        for energy in [-0.98 * p.ground.depth, -0.5 * p.ground.depth] {
            let slow_est = excited_dwell_heating(&p, energy, &s, 0, cs.constants.k_b).unwrap();
            let fast_est = excited_dwell_heating(&fast, energy, &s, 0, cs.constants.k_b).unwrap();
            let sigma = (slow_est.standard_error.powi(2) + fast_est.standard_error.powi(2)).sqrt();
            assert!(slow_est.mean - fast_est.mean > 3.0 * sigma);
        }
    }

    #[test]
    fn uniform_position_sampling_runs() {
        let (p, cs) = problem(1.0, 1.0);
        let s = MonteCarloSettings { samples: 10_000, seed: 2, sampling: OrbitSampling::UniformPosition };
        let est = excited_dwell_heating(&p, -0.7 * p.ground.depth, &s, 1, cs.constants.k_b).unwrap();
        assert!(est.mean > 0.0 && est.standard_error > 0.0);
    }

    #[test]
    fn recoil_only_rate_near_one_kelvin_per_second() {
        let cs = cesium_defaults();
        let r = recoil_heating_rate(1.0, 0.0, &cs);
        assert!(r > 0.8 && r < 1.2, "{r}");
        assert_eq!(recoil_heating_rate(0.0, 0.0, &cs), 0.0);
        let weak = recoil_heating_rate(1e-4, 0.0, &cs);
        assert!(weak > 3e-5 && weak < 3e-4, "{weak}");
    }

    fn default_table() -> &'static (BoundStateTable, HeatingTable, Vec<f64>, AtomSpecies) {
        use std::sync::OnceLock;
        static TABLE: OnceLock<(BoundStateTable, HeatingTable, Vec<f64>, AtomSpecies)> = OnceLock::new();
        TABLE.get_or_init(|| {
            let (p, cs) = problem(1.5, 2.0);
            let table = BoundStateTable::build(p.ground, &cs).unwrap();
            let heating = HeatingTable::compute(&table, &p.excited, &cs, &MonteCarloSettings::default()).unwrap();
            let detuning = crate::coupling::state_detunings(&table, &p.excited).unwrap();
            (table, heating, detuning, cs)
        })
    }

    #[test]
    fn default_table_invariants() {
        let (_, h, _, cs) = default_table();
        assert_eq!(h.samples, 100_000);
        assert!(h.state_heating[0] > cs.recoil_temperature);
        for (n, (dt, se)) in h.state_heating.iter().zip(&h.standard_errors).enumerate() {
            assert!(*dt >= 0.0, "n = {n}");
            assert!(*se > 0.0 && *se < 0.02 * dt, "n = {n}: {dt:e} ± {se:e}");
        }
    }

    /// Error-free transformation sum (double-double accumulator).
    fn two_sum_total(terms: impl Iterator<Item = f64>) -> f64 {
        let (mut hi, mut lo) = (0.0f64, 0.0f64);
        for t in terms {
            let s = hi + t;
            let bp = s - hi;
            lo += (hi - (s - bp)) + (t - bp);
            hi = s;
        }
        hi + lo
    }

    #[test]
    fn per_scatter_heating_sums() {
        let (table, h, _, cs) = default_table();
        let k_b = cs.constants.k_b;
        let zero = vec![0.0; table.len()];
        for t in [1e-7, 1e-5, 1e-3] {
            let occ = occupation(table, t, k_b).unwrap();
            let floor = mean_heating_per_scatter(&zero, cs.recoil_temperature, &occ).unwrap();
            assert!((floor / cs.recoil_temperature - 1.0).abs() < 1e-12);
        }
        let cold = occupation(table, 1e-9, k_b).unwrap();
        let ground = mean_heating_per_scatter(&h.state_heating, cs.recoil_temperature, &cold).unwrap();
        assert!((ground - h.state_heating[0] - cs.recoil_temperature).abs() < 1e-12 * ground);

        let t = 50e-6;
        let e0 = table.energies[0];
        let weights: Vec<f64> = table.energies.iter().map(|e| (-(e - e0) / (k_b * t)).exp()).collect();
        let z = two_sum_total(weights.iter().copied());
        let oracle = two_sum_total(weights.iter().zip(&h.state_heating).map(|(w, d)| w * (d + cs.recoil_temperature))) / z;
        let occ = occupation(table, t, k_b).unwrap();
        let value = mean_heating_per_scatter(&h.state_heating, cs.recoil_temperature, &occ).unwrap();
        assert!((value / oracle - 1.0).abs() < 1e-12);
        assert!(mean_heating_per_scatter(&h.state_heating[1..], cs.recoil_temperature, &occ).is_err());
    }

    #[test]
    fn direct_heating_rate() {
        let (table, h, detuning, cs) = default_table();
        let ctx = HeatingContext { table, detuning, heating: h, species: cs, mode: HeatingMode::Full };
        assert_eq!(heating_rate(0.0, 10e-6, &ctx).unwrap(), 0.0);
        assert!(heating_rate(-1.0, 10e-6, &ctx).is_err());
        assert!(heating_rate(0.1, 0.0, &ctx).is_err());
        let full = heating_rate(0.3, 10e-6, &ctx).unwrap();
        let recoil = heating_rate(0.3, 10e-6, &HeatingContext { mode: HeatingMode::RecoilOnly, ..ctx }).unwrap();
        assert!(full > recoil && recoil > 0.0);
    }

    #[test]
    fn repulsive_dwell_heats_on_average() {
        // Single excursions may lose energy (an atom moving inward climbs the
        // excited potential); the mean over the orbit may not.
        let (p, _) = problem(1.5, 2.0);
        for (k, eps) in [0.98, 0.6, 0.2, 0.01].into_iter().enumerate() {
            let mut total = 0.0;
            for i in 0..2000u64 {
                let mut rng = sample_rng(17, k as u64, i);
                let cell = ((i % 40) as usize, (i / 40) as usize % 50);
                let s = p.sample(-eps * p.ground.depth, OrbitSampling::TimeWeighted, cell, 50, &mut rng);
                assert!(s.dwell >= 0.0);
                total += s.energy_gain;
            }
            assert!(total > 0.0, "ε = {eps}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]
        #[test]
        fn per_scatter_heating_exceeds_recoil(log_t in -16.0..-5.0f64) {
            let (table, h, _, cs) = default_table();
            let occ = occupation(table, log_t.exp(), cs.constants.k_b).unwrap();
            let v = mean_heating_per_scatter(&h.state_heating, cs.recoil_temperature, &occ).unwrap();
            proptest::prop_assert!(v >= cs.recoil_temperature);
        }
    }
}
