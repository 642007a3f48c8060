//! Second-order finite-difference diagonalisation of the 1D radial
//! Schrödinger equation, used as an independent check on the analytic
//! Morse spectrum.
//!
//! The Hamiltonian on a uniform grid with hard walls is symmetric
//! tridiagonal. Eigenvalues come from Sturm-sequence bisection, eigenvectors
//! from inverse iteration with a pivoted tridiagonal solve.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub d_min: f64,
    pub d_max: f64,
    /// Interior grid points (the walls at `d_min`, `d_max` are excluded).
    pub points: usize,
}

impl FdGrid {
    pub fn spacing(&self) -> f64 {
        (self.d_max - self.d_min) / (self.points + 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.d_min + (i + 1) as f64 * self.spacing()
    }
}

pub const MIN_POINTS: usize = 2000;

#[derive(Debug, Clone)]
pub struct FdSpectrum {
    pub nodes: Vec<f64>,
    /// Lowest eigenvalues in ascending order, J.
    pub energies: Vec<f64>,
    /// Eigenvectors normalised so that `Σ v_i² h = 1`; sign chosen so the
    /// outer tail is positive.
    pub vectors: Vec<Vec<f64>>,
    pub bound: Vec<bool>,
    /// Number of eigenvalues below zero over the whole grid.
    pub bound_count: usize,
}

/// Diagonalise `-ħ²/2m ψ'' + V ψ = E ψ` and return the `n_states` lowest pairs.
///
/// `length_scale` is the shortest feature length of the potential (`1/a` for a
/// Morse trap); grids coarser than a tenth of it are rejected.
pub fn diagonalize<F: Fn(f64) -> f64>(
    potential: F,
    mass: f64,
    hbar: f64,
    grid: &FdGrid,
    length_scale: f64,
    n_states: usize,
) -> Result<FdSpectrum> {
    if grid.points < MIN_POINTS {
        return Err(Error::InvalidParameter(format!(
            "finite-difference grid needs at least {MIN_POINTS} points, got {}",
            grid.points
        )));
    }
    if !(grid.d_max > grid.d_min) {
        return Err(Error::InvalidParameter("grid bounds out of order".into()));
    }
    let h = grid.spacing();
    if h > length_scale / 10.0 {
        return Err(Error::GridTooCoarse { spacing: h, limit: length_scale / 10.0 });
    }
    let n = grid.points;
    let n_states = n_states.min(n);
    // Work in units of the hopping energy ħ²/(2 m h²).
    let unit = hbar * hbar / (2.0 * mass * h * h);
    let nodes: Vec<f64> = (0..n).map(|i| grid.node(i)).collect();
    let diag: Vec<f64> = nodes.iter().map(|&d| 2.0 + potential(d) / unit).collect();
    let off = -1.0;

    let (lo, hi) = gershgorin(&diag, off);
    let bound_count = sturm_count(&diag, off, 0.0);
    let mut energies = Vec::with_capacity(n_states);
    let mut vectors = Vec::with_capacity(n_states);
    for k in 0..n_states {
        let e = bisect_eigenvalue(&diag, off, k, lo, hi);
        let mut v = inverse_iteration(&diag, off, e);
        let norm = (v.iter().map(|x| x * x).sum::<f64>() * h).sqrt();
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let tail_sign = v
            .iter()
            .rev()
            .find(|x| x.abs() > 1e-3 * vmax)
            .map(|x| x.signum())
            .unwrap_or(1.0);
        for x in v.iter_mut() {
            *x *= tail_sign / norm;
        }
        energies.push(e * unit);
        vectors.push(v);
    }
    let bound = energies.iter().map(|&e| e < 0.0).collect();
    Ok(FdSpectrum { nodes, energies, vectors, bound, bound_count })
}

fn gershgorin(diag: &[f64], off: f64) -> (f64, f64) {
    let r = 2.0 * off.abs();
    let lo = diag.iter().fold(f64::INFINITY, |m, &d| m.min(d - r));
    let hi = diag.iter().fold(f64::NEG_INFINITY, |m, &d| m.max(d + r));
    (lo, hi)
}

/// Number of eigenvalues strictly below `x`.
fn sturm_count(diag: &[f64], off: f64, x: f64) -> usize {
    let off2 = off * off;
    let mut count = 0;
    let mut q = diag[0] - x;
    for (i, &d) in diag.iter().enumerate() {
        if i > 0 {
            let prev = if q == 0.0 { f64::EPSILON * off.abs() } else { q };
            q = d - x - off2 / prev;
        }
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

fn bisect_eigenvalue(diag: &[f64], off: f64, k: usize, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

fn inverse_iteration(diag: &[f64], off: f64, e: f64) -> Vec<f64> {
    let n = diag.len();
    let shift = e + 1e-12 * e.abs().max(1e-12);
    let shifted: Vec<f64> = diag.iter().map(|d| d - shift).collect();
    let lu = TridiagLu::factor(&vec![off; n - 1], &shifted, &vec![off; n - 1]);
    // deterministic, non-symmetric start vector
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_75).fract()).collect();
    for _ in 0..3 {
        lu.solve(&mut v);
        let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for x in v.iter_mut() {
            *x /= m;
        }
    }
    v
}

/// LU factorisation of a general tridiagonal matrix with partial pivoting
/// (the `gttrf`/`gtts2` scheme).
struct TridiagLu {
    dl: Vec<f64>,
    d: Vec<f64>,
    du: Vec<f64>,
    du2: Vec<f64>,
    swapped: Vec<bool>,
}

impl TridiagLu {
    fn factor(sub: &[f64], diag: &[f64], sup: &[f64]) -> Self {
        let n = diag.len();
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![0.0; n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        let tiny = f64::MIN_POSITIVE.sqrt();
        for i in 0..n - 1 {
            if d[i].abs() >= dl[i].abs() {
                if d[i] == 0.0 {
                    d[i] = tiny;
                }
                let fact = dl[i] / d[i];
                dl[i] = fact;
                d[i + 1] -= fact * du[i];
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = temp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        if d[n - 1] == 0.0 {
            d[n - 1] = tiny;
        }
        Self { dl, d, du, du2, swapped }
    }

    fn solve(&self, b: &mut [f64]) {
        let n = self.d.len();
        for i in 0..n - 1 {
            if self.swapped[i] {
                let temp = b[i];
                b[i] = b[i + 1];
                b[i + 1] = temp - self.dl[i] * b[i];
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }
}
