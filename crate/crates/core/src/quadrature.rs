//! Composite Simpson quadrature on uniform grids, refined by interval halving.

use crate::{Error, Result};

/// Uniform grid with an even number of intervals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformGrid {
    pub lo: f64,
    pub hi: f64,
    pub intervals: usize,
}

impl UniformGrid {
    pub fn new(lo: f64, hi: f64, intervals: usize) -> Self {
        assert!(intervals >= 2 && intervals % 2 == 0, "Simpson needs an even interval count");
        assert!(hi > lo);
        Self { lo, hi, intervals }
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.intervals as f64
    }

    pub fn len(&self) -> usize {
        self.intervals + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn node(&self, i: usize) -> f64 {
        self.lo + i as f64 * self.step()
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.len()).map(move |i| self.node(i))
    }

    pub fn refined(&self) -> Self {
        Self::new(self.lo, self.hi, self.intervals * 2)
    }
}

/// Simpson sum of `values` sampled with spacing `h`, using every `stride`-th sample.
///
/// `(values.len() - 1) / stride` must be even.
pub fn simpson_strided(values: &[f64], h: f64, stride: usize) -> f64 {
    let n = (values.len() - 1) / stride;
    debug_assert!(n % 2 == 0 && n * stride == values.len() - 1);
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        let v = values[k * stride];
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    (values[0] + values[n * stride] + 4.0 * odd + 2.0 * even) * h * stride as f64 / 3.0
}

pub fn simpson(values: &[f64], h: f64) -> f64 {
    simpson_strided(values, h, 1)
}

/// Integrate `f` over `[lo, hi]`, doubling the interval count from `2^min_level`
/// until two successive estimates agree to `rtol` relative to `scale`
/// (the integral of `|f|`).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    rtol: f64,
    min_level: u32,
    max_level: u32,
) -> Result<f64> {
    let mut grid = UniformGrid::new(lo, hi, 1 << min_level);
    let mut values: Vec<f64> = grid.nodes().map(&f).collect();
    let mut prev = simpson(&values, grid.step());
    let mut achieved = f64::INFINITY;
    for _ in min_level..max_level {
        let fine = grid.refined();
        let mut next = Vec::with_capacity(fine.len());
        for (i, v) in values.iter().enumerate() {
            next.push(*v);
            if i + 1 < values.len() {
                next.push(f(fine.node(2 * i + 1)));
            }
        }
        let current = simpson(&next, fine.step());
        let abs: Vec<f64> = next.iter().map(|v| v.abs()).collect();
        let scale = simpson(&abs, fine.step()).max(f64::MIN_POSITIVE);
        achieved = (current - prev).abs() / scale;
        grid = fine;
        values = next;
        prev = current;
        if achieved <= rtol {
            return Ok(current);
        }
    }
    Err(Error::QuadratureNotConverged { achieved })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_exact_for_cubics() {
        let g = UniformGrid::new(0.0, 2.0, 4);
        let v: Vec<f64> = g.nodes().map(|x| x * x * x - x).collect();
        assert!((simpson(&v, g.step()) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn stride_two_matches_coarse_grid() {
        let fine = UniformGrid::new(0.0, 1.0, 8);
        let coarse = UniformGrid::new(0.0, 1.0, 4);
        let vf: Vec<f64> = fine.nodes().map(f64::exp).collect();
        let vc: Vec<f64> = coarse.nodes().map(f64::exp).collect();
        assert_eq!(simpson_strided(&vf, fine.step(), 2), simpson(&vc, coarse.step()));
    }

    #[test]
    fn adaptive_gaussian() {
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 1e-12, 4, 20).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-11);
    }

    #[test]
    fn reports_non_convergence() {
        let err = integrate(|x| (1e6 * x).sin(), 0.0, 1.0, 1e-12, 2, 4).unwrap_err();
        assert!(matches!(err, Error::QuadratureNotConverged { .. }));
    }
}
