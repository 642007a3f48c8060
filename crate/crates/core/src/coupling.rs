//! Distance-dependent coupling to the guided mode and its thermal averages.

use crate::morse::{BoundStateTable, RepulsivePotential};
use crate::quadrature::{simpson, simpson_strided, UniformGrid};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Temperatures are clamped to this floor before evaluating Boltzmann weights.
pub const MIN_TEMPERATURE: f64 = 10e-9;

/// `β(d) = β_ref exp(-(d - d0)/Λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingProfile {
    /// β at the trap minimum.
    pub reference: f64,
    /// Λ, m
    pub decay_length: f64,
    /// d0, m
    pub minimum: f64,
}

impl CouplingProfile {
    pub fn new(reference: f64, decay_length: f64, minimum: f64) -> Result<Self> {
        if !(reference > 0.0 && reference < 0.5 && decay_length > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "coupling profile needs 0 < β_ref < 0.5 and Λ > 0 (β_ref = {reference}, Λ = {decay_length:e})"
            )));
        }
        Ok(Self { reference, decay_length, minimum })
    }

    pub fn beta(&self, d: f64) -> f64 {
        self.reference * (-(d - self.minimum) / self.decay_length).exp()
    }
}

/// Boltzmann weights over the bound states, truncated at `n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalOccupation {
    /// K; `f64::INFINITY` for the equal-weight limit.
    pub temperature: f64,
    pub weights: Vec<f64>,
}

impl ThermalOccupation {
    pub fn average(&self, per_state: &[f64]) -> Result<f64> {
        if per_state.len() != self.weights.len() {
            return Err(Error::InvalidParameter(format!(
                "per-state list has {} entries, occupation has {}",
                per_state.len(),
                self.weights.len()
            )));
        }
        Ok(self.weights.iter().zip(per_state).map(|(p, v)| p * v).sum())
    }
}

pub fn occupation(table: &BoundStateTable, temperature: f64, k_b: f64) -> Result<ThermalOccupation> {
    occupation_of_levels(&table.energies, temperature, k_b)
}

/// Boltzmann weights of an ascending list of level energies.
pub fn occupation_of_levels(energies: &[f64], temperature: f64, k_b: f64) -> Result<ThermalOccupation> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "temperature must be positive, got {temperature:e}"
        )));
    }
    if temperature.is_infinite() {
        let w = 1.0 / energies.len() as f64;
        return Ok(ThermalOccupation { temperature, weights: vec![w; energies.len()] });
    }
    let kt = k_b * temperature.max(MIN_TEMPERATURE);
    let e0 = energies[0];
    let mut weights: Vec<f64> = energies.iter().map(|e| (-(e - e0) / kt).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(ThermalOccupation { temperature, weights })
}

pub fn infinite_temperature(table: &BoundStateTable) -> ThermalOccupation {
    let n = table.len();
    ThermalOccupation { temperature: f64::INFINITY, weights: vec![1.0 / n as f64; n] }
}

/// `∫ |Ψ_n|² f` for every bound state.
pub fn per_state_overlap<F: Fn(f64) -> f64>(table: &BoundStateTable, f: F) -> Result<Vec<f64>> {
    table.overlaps(f)
}

/// Coupling and detuning of each motional state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerStateCoupling {
    pub beta: Vec<f64>,
    /// rad/s, zero for an atom sitting at the potential minimum.
    pub detuning: Vec<f64>,
}

impl PerStateCoupling {
    pub fn compute(
        table: &BoundStateTable,
        profile: &CouplingProfile,
        excited: &RepulsivePotential,
    ) -> Result<Self> {
        Ok(Self { beta: state_betas(table, profile)?, detuning: state_detunings(table, excited)? })
    }
}

pub fn state_betas(table: &BoundStateTable, profile: &CouplingProfile) -> Result<Vec<f64>> {
    per_state_overlap(table, |d| profile.beta(d))
}

/// δ_n from the ground/excited splitting, offset so that the splitting at the
/// trap minimum is resonant.
pub fn state_detunings(table: &BoundStateTable, excited: &RepulsivePotential) -> Result<Vec<f64>> {
    let ground = table.potential;
    let offset = excited.energy(ground.minimum) - ground.energy(ground.minimum);
    let hbar = table.hbar;
    per_state_overlap(table, |d| (excited.energy(d) - ground.energy(d) - offset) / hbar)
}

pub fn mean_beta(per_state: &PerStateCoupling, occ: &ThermalOccupation) -> Result<f64> {
    occ.average(&per_state.beta)
}

pub fn mean_detuning(detuning: &[f64], occ: &ThermalOccupation) -> Result<f64> {
    occ.average(detuning)
}

/// Surviving fraction `1 - exp(-D/(k_B T))` of a thermal ensemble in a trap of depth `D`.
pub fn remaining_fraction(depth: f64, temperature: f64, k_b: f64) -> f64 {
    if temperature <= 0.0 {
        return 1.0;
    }
    -(-depth / (k_b * temperature)).exp_m1()
}

/// Two anchor values of the mean coupling: hot (equal-weight) and cold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTargets {
    pub beta_hot: f64,
    pub beta_cold: f64,
    /// K
    pub cold_temperature: f64,
}

impl Default for CalibrationTargets {
    fn default() -> Self {
        Self { beta_hot: 0.012, beta_cold: 0.024, cold_temperature: 1e-6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub profile: CouplingProfile,
    /// Largest relative mismatch of the two targets.
    pub residual: f64,
    /// Cross-check value β̄(100 µK).
    pub beta_at_100uk: f64,
}

pub const DECAY_LENGTH_RANGE: (f64, f64) = (10e-9, 1e-6);
pub const REFERENCE_RANGE: (f64, f64) = (1e-4, 0.4);

/// Solve for `(β_ref, Λ)` reproducing both targets.
///
/// The hot/cold ratio depends on Λ alone and `β_ref` enters linearly, so the
/// outer problem is a 1D bracket-and-bisect in Λ. The ratio is not monotone
/// over the whole search box; when several roots exist the one with the
/// longest decay length is returned.
pub fn calibrate_coupling(
    table: &BoundStateTable,
    targets: &CalibrationTargets,
    k_b: f64,
) -> Result<Calibration> {
    let CalibrationTargets { beta_hot, beta_cold, cold_temperature } = *targets;
    if !(beta_hot > 0.0 && beta_hot < beta_cold && beta_cold < 0.5) {
        return Err(Error::Calibration(format!(
            "targets must satisfy 0 < β_hot < β_cold < 0.5 (got {beta_hot}, {beta_cold})"
        )));
    }
    let cold = occupation(table, cold_temperature, k_b)?;
    let hot = infinite_temperature(table);
    let d0 = table.potential.minimum;
    let target_ratio = beta_hot / beta_cold;
    let unit_means = |decay: f64| -> Result<(f64, f64)> {
        let unit = CouplingProfile { reference: 1.0, decay_length: decay, minimum: d0 };
        let b = state_betas(table, &unit)?;
        Ok((hot.average(&b)?, cold.average(&b)?))
    };
    let mismatch = |decay: f64| -> Result<f64> {
        let (h, c) = unit_means(decay)?;
        Ok(h / c - target_ratio)
    };

    let (lo, hi) = DECAY_LENGTH_RANGE;
    let samples = 160;
    let grid: Vec<f64> = (0..=samples)
        .map(|i| lo * (hi / lo).powf(i as f64 / samples as f64))
        .collect();
    // Walk down from the longest decay length and stop at the first sign change.
    let mut bracket = None;
    let mut best = f64::INFINITY;
    let mut upper: Option<(f64, f64)> = None;
    for &l in grid.iter().rev() {
        let Ok(v) = mismatch(l) else {
            upper = None;
            continue;
        };
        best = best.min(v.abs());
        if let Some((lu, vu)) = upper {
            if vu.signum() != v.signum() {
                bracket = Some((l, lu, v));
                break;
            }
        }
        upper = Some((l, v));
    }
    let (mut a, mut b, fa) = bracket.ok_or_else(|| {
        Error::Calibration(format!(
            "no decay length in [{lo:e}, {hi:e}] m reproduces β_hot/β_cold = {target_ratio:.4}; closest mismatch {best:.3e}"
        ))
    })?;
    let mut fa = fa;
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        let fm = mismatch(mid)?;
        if fm == 0.0 {
            a = mid;
            b = mid;
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
        if (b - a) <= 1e-13 * b {
            break;
        }
    }
    let decay = 0.5 * (a + b);
    let (_, c_unit) = unit_means(decay)?;
    let reference = beta_cold / c_unit;
    if !(REFERENCE_RANGE.0..REFERENCE_RANGE.1).contains(&reference) {
        return Err(Error::Calibration(format!(
            "β_ref = {reference:.4e} at Λ = {decay:.4e} m lies outside [{:e}, {:e}]",
            REFERENCE_RANGE.0, REFERENCE_RANGE.1
        )));
    }
    let profile = CouplingProfile::new(reference, decay, d0)?;
    let betas = state_betas(table, &profile)?;
    let got_hot = hot.average(&betas)?;
    let got_cold = cold.average(&betas)?;
    let residual = ((got_hot - beta_hot) / beta_hot).abs().max(((got_cold - beta_cold) / beta_cold).abs());
    let beta_at_100uk = occupation(table, 100e-6, k_b)?.average(&betas)?;
    Ok(Calibration { profile, residual, beta_at_100uk })
}

/// Same overlap integral taken over harmonic-oscillator eigenfunctions of the
/// trap frequency centred at the minimum, for the first `table.len()` levels.
pub fn harmonic_overlaps<F: Fn(f64) -> f64>(table: &BoundStateTable, f: F) -> Result<Vec<f64>> {
    let sigma = (table.hbar / (table.mass * table.omega)).sqrt();
    let d0 = table.potential.minimum;
    let n_states = table.len();
    let half_width = ((2.0 * n_states as f64 + 1.0).sqrt() + 12.0) * sigma;
    let grid = UniformGrid::new(d0 - half_width, d0 + half_width, 1 << 14);
    let h = grid.step();
    let fvals: Vec<f64> = grid.nodes().map(&f).collect();
    // Hermite functions by the normalised three-term recurrence
    let mut prev: Vec<f64> = vec![0.0; grid.len()];
    let mut cur: Vec<f64> = grid
        .nodes()
        .map(|d| {
            let xi = (d - d0) / sigma;
            std::f64::consts::PI.powf(-0.25) * (-0.5 * xi * xi).exp() / sigma.sqrt()
        })
        .collect();
    let mut out = Vec::with_capacity(n_states);
    for n in 0..n_states {
        let prod: Vec<f64> = cur.iter().zip(&fvals).map(|(p, v)| p * p * v).collect();
        let abs: Vec<f64> = prod.iter().map(|v| v.abs()).collect();
        let fine = simpson(&prod, h);
        let coarse = simpson_strided(&prod, h, 2);
        let scale = simpson(&abs, h).max(f64::MIN_POSITIVE);
        let achieved = (fine - coarse).abs() / scale;
        if achieved > 1e-8 {
            return Err(Error::QuadratureNotConverged { achieved });
        }
        out.push(fine);
        let k = n as f64;
        let next: Vec<f64> = grid
            .nodes()
            .zip(cur.iter().zip(&prev))
            .map(|(d, (c, p))| {
                let xi = (d - d0) / sigma;
                (2.0 / (k + 1.0)).sqrt() * xi * c - (k / (k + 1.0)).sqrt() * p
            })
            .collect();
        prev = cur;
        cur = next;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::constants::{cesium_defaults, AtomSpecies};
    use crate::morse::MorsePotential;
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn fixture() -> &'static (BoundStateTable, AtomSpecies) {
        static CELL: OnceLock<(BoundStateTable, AtomSpecies)> = OnceLock::new();
        CELL.get_or_init(|| {
            let cs = cesium_defaults();
            let u = MorsePotential::new(cs.micro_kelvin(240.0), 5.85e6, 231e-9).unwrap();
            (BoundStateTable::build(u, &cs).unwrap(), cs)
        })
    }

    #[test]
    fn profile_landmarks() {
        let p = CouplingProfile::new(0.03, 150e-9, 231e-9).unwrap();
        assert_eq!(p.beta(231e-9), 0.03);
        assert_relative_eq!(p.beta(231e-9 + 150e-9 * std::f64::consts::LN_2), 0.015, max_relative = 1e-12);
        assert!(CouplingProfile::new(0.6, 1e-7, 0.0).is_err());
    }

    #[test]
    fn overlaps_reduce_to_norm_and_mean_distance() {
        let (t, _) = fixture();
        let ones = per_state_overlap(t, |_| 1.0).unwrap();
        let means = per_state_overlap(t, |d| d).unwrap();
        for n in 0..t.len() {
            assert!((ones[n] - 1.0).abs() < 1e-6);
            assert_relative_eq!(means[n], t.mean_distances[n], max_relative = 1e-6);
        }
    }

    #[test]
    fn occupation_limits() {
        let (t, cs) = fixture();
        let cold = occupation(t, 1e-12, cs.constants.k_b).unwrap();
        assert!((cold.weights[0] - 1.0).abs() < 1e-12);
        let hot = occupation(t, 1e3, cs.constants.k_b).unwrap();
        for w in &hot.weights {
            assert!((w * 62.0 - 1.0).abs() < 1e-3);
        }
        assert!(occupation(t, 0.0, cs.constants.k_b).is_err());
        assert!(occupation(t, -1.0, cs.constants.k_b).is_err());
        let inf = occupation(t, f64::INFINITY, cs.constants.k_b).unwrap();
        assert_eq!(inf.weights, vec![1.0 / 62.0; 62]);
    }

    #[test]
    fn remaining_fraction_landmarks() {
        let k_b = 1.380649e-23;
        let d = 240e-6 * k_b;
        assert_eq!(remaining_fraction(d, 1e-12, k_b), 1.0);
        assert_relative_eq!(remaining_fraction(d, 240e-6 / std::f64::consts::LN_2, k_b), 0.5, max_relative = 1e-12);
        let f = remaining_fraction(d, 100e-6, k_b);
        assert!(f > 0.90 && f < 0.92, "{f}");
    }

    #[test]
    fn detuning_vanishes_in_ground_state_limit() {
        let (t, cs) = fixture();
        let excited = RepulsivePotential::new(t.potential.depth, 2.0 * t.potential.stiffness, t.potential.minimum).unwrap();
        let dn = state_detunings(t, &excited).unwrap();
        let cold = occupation(t, 1e-9, cs.constants.k_b).unwrap();
        let d_cold = mean_detuning(&dn, &cold).unwrap();
        assert_relative_eq!(d_cold, dn[0], max_relative = 1e-9);
        // zero-point spread gives a small shift only, far below Γ
        assert!(dn[0].abs() < 0.05 * cs.linewidth);
    }

    #[test]
    fn constant_splitting_gives_constant_detuning() {
        let (t, cs) = fixture();
        let c = 3.0e7;
        let dn = per_state_overlap(t, |_| c).unwrap();
        for temp in [1e-6, 50e-6, 1e-3] {
            let occ = occupation(t, temp, cs.constants.k_b).unwrap();
            assert_relative_eq!(mean_detuning(&dn, &occ).unwrap(), c, max_relative = 1e-6);
        }
    }

    #[test]
    fn calibration_hits_anchor_values() {
        let (t, cs) = fixture();
        let cal = calibrate_coupling(t, &CalibrationTargets::default(), cs.constants.k_b).unwrap();
        assert!(cal.residual < 1e-6, "{}", cal.residual);
        assert!(cal.beta_at_100uk > 0.015 && cal.beta_at_100uk < 0.019, "{}", cal.beta_at_100uk);
        assert!(cal.profile.decay_length > 50e-9 && cal.profile.decay_length < 500e-9);
    }

    #[test]
    fn calibration_rejects_degenerate_targets() {
        let (t, cs) = fixture();
        let targets = CalibrationTargets { beta_hot: 0.02, beta_cold: 0.02, cold_temperature: 1e-6 };
        assert!(matches!(calibrate_coupling(t, &targets, cs.constants.k_b), Err(Error::Calibration(_))));
    }

    #[test]
    fn morse_betas_fall_harmonic_betas_rise() {
        let (t, cs) = fixture();
        let cal = calibrate_coupling(t, &CalibrationTargets::default(), cs.constants.k_b).unwrap();
        let morse = state_betas(t, &cal.profile).unwrap();
        let harmonic = harmonic_overlaps(t, |d| cal.profile.beta(d)).unwrap();
        assert!(morse[61] < morse[0] / 10.0);
        assert!(morse[40..].windows(2).all(|w| w[1] < w[0]));
        assert!(harmonic[40..].windows(2).all(|w| w[1] >= w[0]));
        // harmonic ground state is the same Gaussian-ish overlap as the Morse one
        assert!((harmonic[0] / morse[0] - 1.0).abs() < 0.1);
    }
}
