//! Radial trap potentials and the analytic Morse bound-state spectrum.
//!
//! Distances `d` are measured from the fiber surface. The ground-state trap is
//! `U(d) = D [exp(-2a(d-d0)) - 2 exp(-a(d-d0))]`; the excited state sees a purely
//! repulsive `U_e(d) = A exp(-b(d-d0))`.
//!
//! Bound states use the full-line Morse eigenfunctions
//! `Ψ_n(d) = N_n z^s e^{-z/2} L_n^{(2s)}(z)` with `z = 2λ e^{-a(d-d0)}`,
//! `s = λ - n - 1/2` and `λ = sqrt(2 m D)/(a ħ)`. The surface at `d = 0` lies
//! more than a decay length inside the inner wall, so the half-line correction
//! is negligible for realistic traps.

use crate::constants::AtomSpecies;
use crate::quadrature::{simpson, simpson_strided, UniformGrid};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MorsePotential {
    /// D, J
    pub depth: f64,
    /// a, 1/m
    pub stiffness: f64,
    /// d0, m
    pub minimum: f64,
}

impl MorsePotential {
    pub fn new(depth: f64, stiffness: f64, minimum: f64) -> Result<Self> {
        if !(depth > 0.0 && stiffness > 0.0 && minimum > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Morse parameters must be positive (D = {depth:e}, a = {stiffness:e}, d0 = {minimum:e})"
            )));
        }
        Ok(Self { depth, stiffness, minimum })
    }

    pub fn energy(&self, d: f64) -> f64 {
        let e = (-self.stiffness * (d - self.minimum)).exp();
        self.depth * (e * e - 2.0 * e)
    }

    /// `-dU/dd`
    pub fn force(&self, d: f64) -> f64 {
        let e = (-self.stiffness * (d - self.minimum)).exp();
        2.0 * self.stiffness * self.depth * (e * e - e)
    }

    /// Harmonic frequency at the minimum, `Ω = a sqrt(2D/m)`.
    pub fn trap_frequency(&self, mass: f64) -> f64 {
        self.stiffness * (2.0 * self.depth / mass).sqrt()
    }

    /// Dimensionless well parameter `λ = sqrt(2 m D)/(a ħ)`.
    pub fn lambda(&self, mass: f64, hbar: f64) -> f64 {
        (2.0 * mass * self.depth).sqrt() / (self.stiffness * hbar)
    }

    /// Number of normalisable bound states, `floor(λ - 1/2) + 1` (zero when `λ <= 1/2`).
    pub fn bound_state_count(&self, mass: f64, hbar: f64) -> usize {
        let lambda = self.lambda(mass, hbar);
        if lambda <= 0.5 {
            0
        } else {
            let top = lambda - 0.5;
            // n must satisfy n < λ - 1/2 strictly for the state to be normalisable
            let n_max = if top.fract() == 0.0 { top as usize - 1 } else { top.floor() as usize };
            n_max + 1
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepulsivePotential {
    /// A, J
    pub amplitude: f64,
    /// b, 1/m
    pub decay: f64,
    /// d0, m
    pub reference: f64,
}

impl RepulsivePotential {
    pub fn new(amplitude: f64, decay: f64, reference: f64) -> Result<Self> {
        if !(amplitude >= 0.0 && decay > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "repulsive potential needs A >= 0 and b > 0 (A = {amplitude:e}, b = {decay:e})"
            )));
        }
        Ok(Self { amplitude, decay, reference })
    }

    pub fn energy(&self, d: f64) -> f64 {
        self.amplitude * (-self.decay * (d - self.reference)).exp()
    }

    pub fn force(&self, d: f64) -> f64 {
        self.decay * self.energy(d)
    }
}

/// Generalised Laguerre polynomial `L_n^(α)(z)` as `(mantissa, log_scale)` with
/// `L = mantissa * exp(log_scale)`, so that high orders cannot overflow.
pub fn laguerre_scaled(n: usize, alpha: f64, z: f64) -> (f64, f64) {
    const BIG: f64 = 1e150;
    let ln_big = BIG.ln();
    if n == 0 {
        return (1.0, 0.0);
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + alpha - z;
    let mut log_scale = 0.0;
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - z) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
        if cur.abs() > BIG {
            cur /= BIG;
            prev /= BIG;
            log_scale += ln_big;
        }
    }
    (cur, log_scale)
}

/// Analytic Morse eigenfunction (units 1/sqrt(m)); `n` must be below `λ - 1/2`.
pub fn morse_wavefunction(lambda: f64, stiffness: f64, minimum: f64, n: usize, d: f64) -> f64 {
    let s = lambda - n as f64 - 0.5;
    debug_assert!(s > 0.0);
    let ln_norm = 0.5
        * (stiffness.ln() + (2.0 * s).ln() + libm::lgamma(n as f64 + 1.0)
            - libm::lgamma(2.0 * lambda - n as f64));
    let ln_z = (2.0 * lambda).ln() - stiffness * (d - minimum);
    let z = ln_z.exp();
    let (mantissa, log_scale) = laguerre_scaled(n, 2.0 * s, z);
    if mantissa == 0.0 {
        return 0.0;
    }
    let ln_mag = ln_norm + s * ln_z - 0.5 * z + mantissa.abs().ln() + log_scale;
    mantissa.signum() * ln_mag.exp()
}

/// Relative tolerance for the quadrature grid refinement.
pub const QUADRATURE_RTOL: f64 = 1e-8;
const MIN_LEVEL: u32 = 10;
const MAX_LEVEL: u32 = 17;

/// Bound states of a Morse trap for a given particle mass.
#[derive(Debug, Clone)]
pub struct BoundStateTable {
    pub potential: MorsePotential,
    pub mass: f64,
    pub hbar: f64,
    /// Ω, rad/s
    pub omega: f64,
    pub lambda: f64,
    pub n_max: usize,
    /// Energies relative to the dissociation limit (all negative), J.
    pub energies: Vec<f64>,
    /// Mean distance from the surface `<d>_n`, m.
    pub mean_distances: Vec<f64>,
    grid: UniformGrid,
    /// `|Ψ_n|²` sampled on `grid`.
    densities: Vec<Vec<f64>>,
}

impl BoundStateTable {
    pub fn build(potential: MorsePotential, species: &AtomSpecies) -> Result<Self> {
        Self::build_with_mass(potential, species.mass, species.constants.hbar)
    }

    pub fn build_with_mass(potential: MorsePotential, mass: f64, hbar: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(Error::InvalidParameter(format!("mass must be positive, got {mass:e}")));
        }
        let lambda = potential.lambda(mass, hbar);
        let count = potential.bound_state_count(mass, hbar);
        if count == 0 {
            return Err(Error::NoBoundStates { lambda });
        }
        let n_max = count - 1;
        let omega = potential.trap_frequency(mass);
        let quantum = hbar * omega;
        let energies = (0..count)
            .map(|n| {
                let v = n as f64 + 0.5;
                quantum * v - quantum * quantum * v * v / (4.0 * potential.depth) - potential.depth
            })
            .collect();

        let a = potential.stiffness;
        let lo = (potential.minimum - 5.0 / a).max(0.0);
        let hi = potential.minimum + 40.0 / a;

        let mut table = Self {
            potential,
            mass,
            hbar,
            omega,
            lambda,
            n_max,
            energies,
            mean_distances: Vec::new(),
            grid: UniformGrid::new(lo, hi, 1 << MIN_LEVEL),
            densities: Vec::new(),
        };
        table.densities = table.sample_densities(&table.grid);
        let mut moments = table.norms_and_means();
        let mut converged = false;
        for _ in MIN_LEVEL..MAX_LEVEL {
            let fine = table.grid.refined();
            table.densities = table.refine_densities(&fine);
            table.grid = fine;
            let next = table.norms_and_means();
            let change = moments
                .iter()
                .zip(&next)
                .map(|(p, q)| {
                    ((p.0 - q.0).abs() / q.0.abs()).max((p.1 - q.1).abs() / q.1.abs())
                })
                .fold(0.0, f64::max);
            moments = next;
            if change <= QUADRATURE_RTOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::QuadratureNotConverged { achieved: QUADRATURE_RTOL });
        }
        table.mean_distances = moments.iter().map(|m| m.1 / m.0).collect();
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.n_max + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Energy measured from the potential minimum,
    /// `ħΩ(n + 1/2) - ħ²Ω²(n + 1/2)²/4D`.
    pub fn vibrational_energy(&self, n: usize) -> f64 {
        self.energies[n] + self.potential.depth
    }

    pub fn wavefunction(&self, n: usize, d: f64) -> Result<f64> {
        if n > self.n_max {
            return Err(Error::StateOutOfRange { n, n_max: self.n_max });
        }
        Ok(self.eval(n, d))
    }

    fn eval(&self, n: usize, d: f64) -> f64 {
        morse_wavefunction(self.lambda, self.potential.stiffness, self.potential.minimum, n, d)
    }

    pub fn quadrature_grid(&self) -> UniformGrid {
        self.grid
    }

    /// `|Ψ_n|²` on [`Self::quadrature_grid`].
    pub fn density(&self, n: usize) -> &[f64] {
        &self.densities[n]
    }

    fn sample_densities(&self, grid: &UniformGrid) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|n| grid.nodes().map(|d| self.eval(n, d).powi(2)).collect())
            .collect()
    }

    fn refine_densities(&self, fine: &UniformGrid) -> Vec<Vec<f64>> {
        (0..self.len())
            .map(|n| {
                let coarse = &self.densities[n];
                let mut out = Vec::with_capacity(fine.len());
                for (i, v) in coarse.iter().enumerate() {
                    out.push(*v);
                    if i + 1 < coarse.len() {
                        out.push(self.eval(n, fine.node(2 * i + 1)).powi(2));
                    }
                }
                out
            })
            .collect()
    }

    fn norms_and_means(&self) -> Vec<(f64, f64)> {
        let h = self.grid.step();
        self.densities
            .iter()
            .map(|rho| {
                let weighted: Vec<f64> =
                    rho.iter().zip(self.grid.nodes()).map(|(r, d)| r * d).collect();
                (simpson(rho, h), simpson(&weighted, h))
            })
            .collect()
    }

    /// `∫ |Ψ_n(d)|² f(d) dd` for every state.
    ///
    /// The stored grid is checked against its own half-resolution subgrid and
    /// refined (up to two extra halvings) until the two agree to
    /// [`QUADRATURE_RTOL`] relative to `∫ |Ψ_n|² |f|`.
    pub fn overlaps<F: Fn(f64) -> f64>(&self, f: F) -> Result<Vec<f64>> {
        let values: Vec<f64> = self.grid.nodes().map(&f).collect();
        if let Ok(out) = overlaps_on(&self.grid, &self.densities, &values) {
            return Ok(out);
        }
        let mut grid = self.grid;
        let mut achieved = f64::INFINITY;
        for _ in 0..2 {
            grid = grid.refined();
            let dens = self.sample_densities(&grid);
            let values: Vec<f64> = grid.nodes().map(&f).collect();
            match overlaps_on(&grid, &dens, &values) {
                Ok(out) => return Ok(out),
                Err(a) => achieved = a,
            }
        }
        Err(Error::QuadratureNotConverged { achieved })
    }
}

fn overlaps_on(
    grid: &UniformGrid,
    densities: &[Vec<f64>],
    f: &[f64],
) -> std::result::Result<Vec<f64>, f64> {
    let h = grid.step();
    let mut worst: f64 = 0.0;
    let out = densities
        .iter()
        .map(|rho| {
            let prod: Vec<f64> = rho.iter().zip(f).map(|(r, v)| r * v).collect();
            let abs: Vec<f64> = prod.iter().map(|v| v.abs()).collect();
            let fine = simpson(&prod, h);
            let coarse = simpson_strided(&prod, h, 2);
            let scale = simpson(&abs, h).max(f64::MIN_POSITIVE);
            worst = worst.max((fine - coarse).abs() / scale);
            fine
        })
        .collect();
    if worst <= QUADRATURE_RTOL {
        Ok(out)
    } else {
        Err(worst)
    }
}
