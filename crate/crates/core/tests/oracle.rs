use nftrap_core::constants::cesium_defaults;
use nftrap_core::fd_oracle::{diagonalize, FdGrid};
use nftrap_core::morse::BoundStateTable;
use nftrap_core::setup::TrapSetup;

fn table() -> BoundStateTable {
    let s = TrapSetup::default();
    BoundStateTable::build(s.trap, &s.species).unwrap()
}

fn grid(t: &BoundStateTable, points: usize) -> FdGrid {
    let a = t.potential.stiffness;
    FdGrid { d_min: t.potential.minimum - 1.2 / a, d_max: t.potential.minimum + 14.0 / a, points }
}

#[test]
fn energies_match_finite_differences() {
    let t = table();
    let cs = cesium_defaults();
    let u = t.potential;
    let s = diagonalize(|d| u.energy(d), cs.mass, cs.constants.hbar, &grid(&t, 40_000), 1.0 / u.stiffness, 41).unwrap();
    for n in 0..=40 {
        let rel = (s.energies[n] / t.energies[n] - 1.0).abs();
        assert!(rel < 5e-3, "n = {n}: {} vs {} ({rel:.2e})", s.energies[n], t.energies[n]);
    }
    assert_eq!(s.bound_count, t.len());
}

#[test]
fn eigenvector_matches_analytic_wavefunction() {
    let t = table();
    let cs = cesium_defaults();
    let u = t.potential;
    let g = grid(&t, 20_000);
    let s = diagonalize(|d| u.energy(d), cs.mass, cs.constants.hbar, &g, 1.0 / u.stiffness, 21).unwrap();
    let analytic: Vec<f64> = s.nodes.iter().map(|&d| t.wavefunction(20, d).unwrap()).collect();
    let numeric = &s.vectors[20];
    let sign = if analytic.iter().zip(numeric).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - sign * b).powi(2)).sum();
    let norm: f64 = analytic.iter().map(|a| a * a).sum();
    let rms = (diff / norm).sqrt();
    assert!(rms < 0.01, "relative rms {rms:.3e}");
}

#[test]
fn halved_depth_count_matches_floor_formula() {
    let s = TrapSetup::default();
    let cs = s.species;
    let mut trap = s.trap;
    trap.depth *= 0.5;
    let t = BoundStateTable::build(trap, &cs).unwrap();
    let expected = ((2.0 * cs.mass * trap.depth).sqrt() / (trap.stiffness * cs.constants.hbar) - 0.5).floor() as usize + 1;
    assert_eq!(t.len(), expected);
    let o = diagonalize(|d| trap.energy(d), cs.mass, cs.constants.hbar, &grid(&t, 40_000), 1.0 / trap.stiffness, 1).unwrap();
    assert_eq!(o.bound_count, expected);
}
