//! Bounded Levenberg-Marquardt least squares and the fit models used on
//! transmission traces, lifetimes, saturation curves and spectra.

use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOLERANCE: f64 = 1e-10;
pub const COST_TOLERANCE: f64 = 1e-10;
/// Local models with a larger Jacobian condition number are reported singular.
pub const MAX_CONDITION: f64 = 1e13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// `exp(-OD0 exp(-γ t))`
    DoubleExp,
    /// `A exp(-t/τ)`
    ExpLifetime,
    /// `P_max (1 - exp(-x/P_c))`
    SaturationAbsorption,
    /// `exp(-OD0 / (1 + s + (2δ/Γ)²))`
    OdSpectrum,
}

impl ModelKind {
    pub fn id(self) -> &'static str {
        match self {
            ModelKind::DoubleExp => "double-exp",
            ModelKind::ExpLifetime => "exp-lifetime",
            ModelKind::SaturationAbsorption => "saturation",
            ModelKind::OdSpectrum => "od-spectrum",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        [Self::DoubleExp, Self::ExpLifetime, Self::SaturationAbsorption, Self::OdSpectrum]
            .into_iter()
            .find(|k| k.id() == id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParameterSpec {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitModel {
    pub kind: ModelKind,
    pub parameters: Vec<ParameterSpec>,
    /// Γ in rad/s; only the spectrum model uses it.
    pub linewidth: f64,
}

fn spec(name: &'static str, lower: f64) -> ParameterSpec {
    ParameterSpec { name, lower, upper: f64::INFINITY }
}

pub fn model_double_exp() -> FitModel {
    FitModel { kind: ModelKind::DoubleExp, parameters: vec![spec("od0", 0.0), spec("gamma", 0.0)], linewidth: 0.0 }
}

pub fn model_exp_lifetime() -> FitModel {
    FitModel {
        kind: ModelKind::ExpLifetime,
        parameters: vec![spec("amplitude", 0.0), spec("tau", f64::MIN_POSITIVE)],
        linewidth: 0.0,
    }
}

pub fn model_saturation_absorption() -> FitModel {
    FitModel {
        kind: ModelKind::SaturationAbsorption,
        parameters: vec![spec("p_max", f64::NEG_INFINITY), spec("p_c", f64::MIN_POSITIVE)],
        linewidth: 0.0,
    }
}

pub fn model_od_spectrum(linewidth: f64) -> FitModel {
    FitModel { kind: ModelKind::OdSpectrum, parameters: vec![spec("od0", 0.0), spec("saturation", 0.0)], linewidth }
}

impl FitModel {
    pub fn id(&self) -> &'static str {
        self.kind.id()
    }

    pub fn eval(&self, x: f64, p: &[f64]) -> f64 {
        match self.kind {
            ModelKind::DoubleExp => (-p[0] * (-p[1] * x).exp()).exp(),
            ModelKind::ExpLifetime => p[0] * (-x / p[1]).exp(),
            ModelKind::SaturationAbsorption => -p[0] * (-x / p[1]).exp_m1(),
            ModelKind::OdSpectrum => {
                let u = 2.0 * x / self.linewidth;
                (-p[0] / (1.0 + p[1] + u * u)).exp()
            }
        }
    }

    /// Partial derivatives with respect to each parameter.
    pub fn gradient(&self, x: f64, p: &[f64], out: &mut [f64]) {
        match self.kind {
            ModelKind::DoubleExp => {
                let e = (-p[1] * x).exp();
                let f = (-p[0] * e).exp();
                out[0] = -e * f;
                out[1] = p[0] * x * e * f;
            }
            ModelKind::ExpLifetime => {
                let e = (-x / p[1]).exp();
                out[0] = e;
                out[1] = p[0] * e * x / (p[1] * p[1]);
            }
            ModelKind::SaturationAbsorption => {
                let e = (-x / p[1]).exp();
                out[0] = -(-x / p[1]).exp_m1();
                out[1] = -p[0] * e * x / (p[1] * p[1]);
            }
            ModelKind::OdSpectrum => {
                let u = 2.0 * x / self.linewidth;
                let q = 1.0 + p[1] + u * u;
                let f = (-p[0] / q).exp();
                out[0] = -f / q;
                out[1] = f * p[0] / (q * q);
            }
        }
    }

    /// Deterministic closed-form starting point.
    pub fn initial_guess(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let n = xs.len();
        let (x0, x1, y0, y1) = (xs[0], xs[n - 1], ys[0], ys[n - 1]);
        let guess = match self.kind {
            ModelKind::DoubleExp => {
                let od_first = -y0.clamp(1e-12, 1.0 - 1e-12).ln();
                let od_last = -y1.clamp(1e-12, 1.0 - 1e-12).ln();
                let rate = if x1 > x0 { ((od_first / od_last).ln() / (x1 - x0)).max(0.0) } else { 0.0 };
                vec![od_first * (rate * x0).exp(), rate]
            }
            ModelKind::ExpLifetime => {
                let ratio = (y0 / y1).abs();
                let tau = if ratio > 1.0 && x1 > x0 { (x1 - x0) / ratio.ln() } else { (x1 - x0).abs().max(1e-300) * 10.0 };
                vec![y0.abs() * (x0 / tau).exp(), tau]
            }
            ModelKind::SaturationAbsorption => {
                let p_max = ys.iter().fold(0.0f64, |m, y| if y.abs() > m.abs() { *y } else { m }) * 1.05;
                let target = (1.0 - (-1.0f64).exp()) * p_max;
                let p_c = xs
                    .iter()
                    .zip(ys)
                    .find(|(_, y)| y.abs() >= target.abs())
                    .map(|(x, _)| *x)
                    .filter(|x| *x > 0.0)
                    .unwrap_or(0.5 * (x0 + x1).abs().max(1e-300));
                vec![p_max, p_c]
            }
            ModelKind::OdSpectrum => {
                let (i_min, y_min) =
                    ys.iter().enumerate().fold((0, f64::INFINITY), |(bi, bm), (i, &y)| if y < bm { (i, y) } else { (bi, bm) });
                let od_peak = -y_min.clamp(1e-12, 1.0 - 1e-12).ln();
                let half = (-0.5 * od_peak).exp();
                let width = xs
                    .iter()
                    .zip(ys)
                    .skip(i_min)
                    .find(|(_, y)| **y >= half)
                    .map(|(x, _)| (x - xs[i_min]).abs())
                    .unwrap_or(0.5 * self.linewidth);
                let s = ((2.0 * width / self.linewidth).powi(2) - 1.0).max(0.0);
                vec![od_peak * (1.0 + s), s]
            }
        };
        self.clamp(guess)
    }

    fn clamp(&self, mut p: Vec<f64>) -> Vec<f64> {
        for (v, s) in p.iter_mut().zip(&self.parameters) {
            *v = v.clamp(s.lower, s.upper);
        }
        p
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelKind,
    pub parameters: Vec<f64>,
    /// One standard deviation from the local quadratic model.
    pub uncertainties: Vec<f64>,
    /// sqrt(Σ r²)
    pub residual_norm: f64,
    /// sqrt(Σ r² / m)
    pub rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Names of parameters that finished on a bound.
    pub at_bounds: Vec<String>,
    pub diagnostic: Option<String>,
}

impl FitResult {
    pub fn parameter(&self, name: &str, model: &FitModel) -> Option<f64> {
        model.parameters.iter().position(|s| s.name == name).map(|i| self.parameters[i])
    }
}

fn residuals(model: &FitModel, xs: &[f64], ys: &[f64], p: &[f64]) -> DVector<f64> {
    DVector::from_iterator(xs.len(), xs.iter().zip(ys).map(|(x, y)| model.eval(*x, p) - y))
}

fn jacobian(model: &FitModel, xs: &[f64], p: &[f64]) -> DMatrix<f64> {
    let k = p.len();
    let mut j = DMatrix::zeros(xs.len(), k);
    let mut g = vec![0.0; k];
    for (i, x) in xs.iter().enumerate() {
        model.gradient(*x, p, &mut g);
        for c in 0..k {
            j[(i, c)] = g[c];
        }
    }
    j
}

/// Least-squares fit of `model` to `(xs, ys)`.
///
/// Projected Levenberg-Marquardt with Marquardt diagonal scaling. Converges
/// when the relative step and the relative cost change both fall below
/// 1e-10, or the residual vanishes.
pub fn fit(model: &FitModel, xs: &[f64], ys: &[f64], init: Option<&[f64]>) -> Result<FitResult> {
    let k = model.parameters.len();
    let m = xs.len();
    if ys.len() != m {
        return Err(Error::Fit(format!("x and y lengths differ ({m} vs {})", ys.len())));
    }
    if m < k {
        return Err(Error::Fit(format!("{m} data points cannot constrain {k} parameters")));
    }
    if xs.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Fit("x values must be strictly increasing".into()));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::Fit("data contain non-finite values".into()));
    }
    let mut p = match init {
        Some(v) if v.len() == k => model.clamp(v.to_vec()),
        Some(v) => return Err(Error::Fit(format!("expected {k} initial values, got {}", v.len()))),
        None => model.initial_guess(xs, ys),
    };
    let data_scale: f64 = ys.iter().map(|y| y * y).sum::<f64>().max(f64::MIN_POSITIVE);
    let mut r = residuals(model, xs, ys, &p);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut diagnostic = None;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        if cost <= 1e-30 * data_scale {
            converged = true;
            break;
        }
        let j = jacobian(model, xs, &p);
        let jtj = j.transpose() * &j;
        let grad = j.transpose() * &r;
        let diag: Vec<f64> = (0..k).map(|i| jtj[(i, i)].max(1e-300)).collect();
        let mut accepted = false;
        for _ in 0..60 {
            let mut a = jtj.clone();
            for i in 0..k {
                a[(i, i)] += lambda * diag[i];
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 10.0;
                continue;
            };
            let trial = model.clamp(p.iter().zip(step.iter()).map(|(v, d)| v + d).collect());
            let r_trial = residuals(model, xs, ys, &trial);
            let c_trial = r_trial.norm_squared();
            if c_trial.is_finite() && c_trial <= cost {
                let step_norm: f64 = trial.iter().zip(&p).map(|(a, b)| ((a - b) / b.abs().max(1e-300)).powi(2)).sum::<f64>().sqrt();
                let cost_change = (cost - c_trial) / cost.max(f64::MIN_POSITIVE);
                p = trial;
                r = r_trial;
                cost = c_trial;
                lambda = (lambda * 0.3).max(1e-12);
                accepted = true;
                if (step_norm < STEP_TOLERANCE && cost_change < COST_TOLERANCE) || cost <= 1e-30 * data_scale {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e16 {
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left: a local optimum within rounding.
            converged = true;
            break;
        }
    }
    if !converged {
        diagnostic = Some(format!("no convergence after {MAX_ITERATIONS} iterations"));
    }

    let j = jacobian(model, xs, &p);
    let svd = j.clone().svd(false, false);
    let s_max = svd.singular_values.max();
    let s_min = svd.singular_values.min();
    let condition = if s_min > 0.0 { s_max / s_min } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(Error::Fit(format!("{} fit: singular local model (condition number {condition:.3e})", model.id())));
    }
    let dof = m - k;
    let uncertainties = if dof == 0 {
        vec![0.0; k]
    } else {
        let cov = (j.transpose() * &j)
            .try_inverse()
            .ok_or_else(|| Error::Fit(format!("{} fit: normal matrix not invertible", model.id())))?;
        let var = cost / dof as f64;
        (0..k).map(|i| (cov[(i, i)] * var).max(0.0).sqrt()).collect()
    };
    let at_bounds = model
        .parameters
        .iter()
        .zip(&p)
        .filter(|(s, v)| **v <= s.lower || **v >= s.upper)
        .map(|(s, _)| s.name.to_string())
        .collect();
    Ok(FitResult {
        model: model.kind,
        parameters: p,
        uncertainties,
        residual_norm: cost.sqrt(),
        rms: (cost / m as f64).sqrt(),
        converged,
        iterations,
        at_bounds,
        diagnostic,
    })
}

/// Restrict a series to `lo <= x <= hi` (with a small tolerance for rounding).
pub fn window(xs: &[f64], ys: &[f64], lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
    let eps = 1e-9 * (hi - lo).abs().max(f64::MIN_POSITIVE);
    xs.iter().zip(ys).filter(|(x, _)| **x >= lo - eps && **x <= hi + eps).map(|(x, y)| (*x, *y)).unzip()
}

/// Fit windows for the early flank and the long-time decay, s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlankWindows {
    pub initial: (f64, f64),
    pub long: (f64, f64),
}

impl Default for FlankWindows {
    fn default() -> Self {
        Self { initial: (0.0, 10e-6), long: (10e-6, 500e-6) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlankMetrics {
    /// 1/s
    pub gamma_initial: f64,
    /// 1/s
    pub gamma: f64,
    /// OD0 of the long-time fit, extrapolated to t = 0.
    pub od_long: f64,
    /// `-ln(transmission(0)) - od_long`; positive when the early flank is steeper.
    pub delta_od_initial: f64,
    pub initial_fit: FitResult,
    pub long_fit: FitResult,
}

/// Early-flank and long-time decay constants of one probe trace whose time
/// axis starts at the probe onset.
pub fn extract_flank_metrics(ts: &[f64], transmission: &[f64], windows: FlankWindows) -> Result<FlankMetrics> {
    let t_end = ts.last().copied().unwrap_or(0.0);
    if ts.is_empty() || t_end < windows.long.1 * (1.0 - 1e-9) || ts[0] > windows.initial.0 + 1e-12 {
        return Err(Error::Fit(format!(
            "trace covers [{:.3e}, {t_end:.3e}] s; flank analysis needs [{:.3e}, {:.3e}] s",
            ts.first().copied().unwrap_or(0.0),
            windows.initial.0,
            windows.long.1
        )));
    }
    let model = model_double_exp();
    let (xi, yi) = window(ts, transmission, windows.initial.0, windows.initial.1);
    let (xl, yl) = window(ts, transmission, windows.long.0, windows.long.1);
    let initial_fit = fit(&model, &xi, &yi, None)?;
    let long_fit = fit(&model, &xl, &yl, None)?;
    let od_long = long_fit.parameters[0];
    Ok(FlankMetrics {
        gamma_initial: initial_fit.parameters[1],
        gamma: long_fit.parameters[1],
        od_long,
        delta_od_initial: -transmission[0].ln() - od_long,
        initial_fit,
        long_fit,
    })
}
