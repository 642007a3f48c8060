//! Adaptive Dormand-Prince 5(4) integration for small fixed-size systems.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-7, atol: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DormandPrince {
    pub tolerances: Tolerances,
    pub max_step: f64,
    pub min_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

impl DormandPrince {
    pub fn new(tolerances: Tolerances, max_step: f64) -> Self {
        Self { tolerances, max_step, min_step: max_step * 1e-12 }
    }

    /// Integrate `y' = f(t, y)` from `t0` to `t1`. `step` carries the step
    /// size proposal between calls.
    pub fn advance<const D: usize, F>(
        &self,
        mut f: F,
        t0: f64,
        y0: [f64; D],
        t1: f64,
        step: &mut f64,
        stats: &mut StepStats,
    ) -> Result<[f64; D]>
    where
        F: FnMut(f64, &[f64; D]) -> Result<[f64; D]>,
    {
        let mut t = t0;
        let mut y = y0;
        if t1 <= t0 {
            return Ok(y);
        }
        let tol = self.tolerances;
        let mut h = step.clamp(self.min_step, self.max_step);
        let mut k = [[0.0; D]; 7];
        k[0] = f(t, &y)?;
        while t < t1 {
            let last = t + h >= t1;
            let hh = if last { t1 - t } else { h };
            for s in 1..6 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    for d in 0..D {
                        ys[d] += hh * A[s][j] * kj[d];
                    }
                }
                k[s] = f(t + C[s] * hh, &ys)?;
            }
            let mut y_new = y;
            for d in 0..D {
                y_new[d] += hh * (0..6).map(|s| A[6][s] * k[s][d]).sum::<f64>();
            }
            k[6] = f(t + hh, &y_new)?;
            let mut err = 0.0f64;
            for d in 0..D {
                let e: f64 = (0..7).map(|s| E[s] * k[s][d]).sum();
                let scale = tol.atol + tol.rtol * y[d].abs().max(y_new[d].abs());
                err = err.max((hh * e / scale).abs());
            }
            if !err.is_finite() {
                err = f64::INFINITY;
            }
            if err <= 1.0 {
                t = if last { t1 } else { t + hh };
                y = y_new;
                k[0] = k[6];
                stats.accepted += 1;
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                if !last {
                    h = (hh * grow).min(self.max_step);
                } else {
                    h = h.max(hh * grow).min(self.max_step);
                }
            } else {
                stats.rejected += 1;
                h = hh * (0.9 * err.powf(-0.2)).max(0.2);
                if h < self.min_step {
                    return Err(Error::StepRejected(format!(
                        "step size {h:e} below minimum {:e} at t = {t:e}",
                        self.min_step
                    )));
                }
            }
        }
        *step = h;
        Ok(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let dp = DormandPrince::new(Tolerances { rtol: 1e-10, atol: 1e-14 }, 1.0);
        let mut h = 1e-3;
        let mut stats = StepStats::default();
        let y = dp.advance(|_, y: &[f64; 1]| Ok([-2.0 * y[0]]), 0.0, [1.0], 3.0, &mut h, &mut stats).unwrap();
        assert!((y[0] - (-6.0f64).exp()).abs() < 1e-11);
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator_period() {
        let dp = DormandPrince::new(Tolerances { rtol: 1e-9, atol: 1e-12 }, 0.1);
        let mut h = 0.01;
        let mut stats = StepStats::default();
        let tau = std::f64::consts::TAU;
        let y = dp
            .advance(|_, y: &[f64; 2]| Ok([y[1], -y[0]]), 0.0, [1.0, 0.0], tau, &mut h, &mut stats)
            .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-7 && y[1].abs() < 1e-7);
    }

    #[test]
    fn chained_calls_match_single_call() {
        let dp = DormandPrince::new(Tolerances::default(), 0.05);
        let f = |t: f64, y: &[f64; 1]| Ok([t.cos() * y[0]]);
        let mut h = 1e-3;
        let mut stats = StepStats::default();
        let mut y = [1.0];
        for i in 0..20 {
            y = dp.advance(f, i as f64 * 0.1, y, (i + 1) as f64 * 0.1, &mut h, &mut stats).unwrap();
        }
        assert!((y[0] - 2.0f64.sin().exp()).abs() < 1e-6);
    }

    #[test]
    fn propagates_rhs_errors() {
        let dp = DormandPrince::new(Tolerances::default(), 0.1);
        let mut h = 0.01;
        let mut stats = StepStats::default();
        let r = dp.advance(
            |_, _: &[f64; 1]| Err(Error::InvalidParameter("bad".into())),
            0.0,
            [1.0],
            1.0,
            &mut h,
            &mut stats,
        );
        assert!(r.is_err());
    }
}
