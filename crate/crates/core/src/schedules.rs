//! Mean and standard-deviation schedules of the probability path.
//!
//! Every mean schedule here is an interpolation `μ_t = x0 + c(t)·(x1 − x0)`
//! with a scalar mixing coefficient `c`, so tensor-valued means reduce to
//! evaluating `c(t)` and `c'(t)` once per call.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// SNR reported when the noise power underflows.
pub const SNR_CAP_DB: f64 = 120.0;
const SNR_NOISE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanSchedule {
    Linear,
    /// Ornstein-Uhlenbeck mean with stiffness `gamma`.
    Ouve {
        gamma: f64,
    },
    /// Logistic interpolation with steepness `k`, exact at both endpoints.
    Logistic {
        k: f64,
    },
}

impl MeanSchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            MeanSchedule::Linear => Ok(()),
            MeanSchedule::Ouve { gamma } if gamma > 0.0 && gamma.is_finite() => Ok(()),
            MeanSchedule::Logistic { k } if k > 0.0 && k.is_finite() => Ok(()),
            other => Err(Error::Config(format!(
                "non-positive parameter in {other:?}"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            MeanSchedule::Linear => "linear",
            MeanSchedule::Ouve { .. } => "ouve",
            MeanSchedule::Logistic { .. } => "logistic",
        }
    }

    /// Mixing coefficient `c(t)` with `μ_t = x0 + c(t)(x1 − x0)`.
    pub fn mix(&self, t: f64) -> f64 {
        match *self {
            MeanSchedule::Linear => t,
            MeanSchedule::Ouve { gamma } => -(-gamma * t).exp_m1(),
            MeanSchedule::Logistic { k } => {
                // ((1 + e^{k/2}) / (1 + e^{-k(t-1/2)}) - 1) / (e^{k/2} - 1),
                // rearranged so the numerator difference is formed from expm1
                // terms and vanishes exactly at t = 0.
                let a = (0.5 * k).exp_m1();
                let u = -k * (t - 0.5);
                let d = u.exp();
                (a - u.exp_m1()) / ((1.0 + d) * a)
            }
        }
    }

    /// `c'(t)`.
    pub fn mix_derivative(&self, t: f64) -> f64 {
        match *self {
            MeanSchedule::Linear => 1.0,
            MeanSchedule::Ouve { gamma } => gamma * (-gamma * t).exp(),
            MeanSchedule::Logistic { k } => {
                let a = (0.5 * k).exp_m1();
                let e = a + 1.0;
                let u = -k * (t - 0.5);
                // D / (1 + D)^2 written to stay finite for large |u|
                let s = if u > 0.0 {
                    let inv = (-u).exp();
                    inv / (1.0 + inv).powi(2)
                } else {
                    let d = u.exp();
                    d / (1.0 + d).powi(2)
                };
                (1.0 + e) / a * k * s
            }
        }
    }

    pub fn mean_at(&self, t: f64, x0: f64, x1: f64) -> f64 {
        x0 + self.mix(t) * (x1 - x0)
    }

    pub fn mean_derivative_at(&self, t: f64, x0: f64, x1: f64) -> f64 {
        self.mix_derivative(t) * (x1 - x0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VarianceSchedule {
    /// `σ_t = σ·t`
    Linear { sigma: f64 },
    /// `σ_t = σ·sqrt(t(1 − t))`
    Bridge { sigma: f64 },
    /// `σ_t = σ`
    Constant { sigma: f64 },
}

impl VarianceSchedule {
    pub fn sigma_max(&self) -> f64 {
        match *self {
            VarianceSchedule::Linear { sigma }
            | VarianceSchedule::Bridge { sigma }
            | VarianceSchedule::Constant { sigma } => sigma,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.sigma_max();
        let ok = match self {
            // a zero constant is the deterministic-path limit
            VarianceSchedule::Constant { .. } => s >= 0.0 && s.is_finite(),
            _ => s > 0.0 && s.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid sigma in {self:?}")))
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            VarianceSchedule::Linear { .. } => "linear",
            VarianceSchedule::Bridge { .. } => "bridge",
            VarianceSchedule::Constant { .. } => "constant",
        }
    }

    pub fn sigma_at(&self, t: f64) -> f64 {
        match *self {
            VarianceSchedule::Linear { sigma } => sigma * t,
            VarianceSchedule::Bridge { sigma } => sigma * (t * (1.0 - t)).max(0.0).sqrt(),
            VarianceSchedule::Constant { sigma } => sigma,
        }
    }

    pub fn sigma_derivative_at(&self, t: f64) -> Result<f64> {
        match *self {
            VarianceSchedule::Linear { sigma } => Ok(sigma),
            VarianceSchedule::Constant { .. } => Ok(0.0),
            VarianceSchedule::Bridge { sigma } => {
                if !(t > 0.0 && t < 1.0) {
                    return Err(Error::Domain(format!(
                        "bridge sigma derivative is unbounded at t = {t}; clamp t into (0, 1)"
                    )));
                }
                Ok(sigma * (1.0 - 2.0 * t) / (2.0 * (t * (1.0 - t)).sqrt()))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnrCurve {
    pub grid: Vec<f64>,
    pub snr_db: Vec<f64>,
}

impl SnrCurve {
    pub fn range_db(&self) -> f64 {
        let (lo, hi) = self
            .snr_db
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        hi - lo
    }
}

/// SNR of the perturbed signal: `x0` is the signal, `c_t(x1 − x0)` and the
/// Gaussian part are the noise.
pub fn snr_db(mean: &MeanSchedule, var: &VarianceSchedule, x0: f64, x1: f64, t: f64) -> f64 {
    let c = mean.mix(t);
    let sigma = var.sigma_at(t);
    let noise = (c * (x1 - x0)).powi(2) + sigma * sigma;
    if noise < SNR_NOISE_FLOOR {
        return SNR_CAP_DB;
    }
    (10.0 * (x0 * x0 / noise).log10()).min(SNR_CAP_DB)
}

pub fn snr_trajectory(
    mean: &MeanSchedule,
    var: &VarianceSchedule,
    x0: f64,
    x1: f64,
    grid: &[f64],
) -> Result<SnrCurve> {
    if x0 == x1 {
        return Err(Error::Domain("snr trajectory needs x0 != x1".into()));
    }
    if let Some(t) = grid.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
        return Err(Error::Domain(format!("grid point {t} outside (0, 1]")));
    }
    Ok(SnrCurve {
        grid: grid.to_vec(),
        snr_db: grid.iter().map(|&t| snr_db(mean, var, x0, x1, t)).collect(),
    })
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// One row per grid point with the three mean schedules side by side.
pub fn snr_comparison_csv(
    schedules: [&MeanSchedule; 3],
    var: &VarianceSchedule,
    x0: f64,
    x1: f64,
    grid: &[f64],
) -> Result<String> {
    let curves = schedules
        .iter()
        .map(|m| snr_trajectory(m, var, x0, x1, grid))
        .collect::<Result<Vec<_>>>()?;
    let mut s = format!(
        "t,snr_db_{},snr_db_{},snr_db_{}\n",
        schedules[0].name(),
        schedules[1].name(),
        schedules[2].name()
    );
    for (i, t) in grid.iter().enumerate() {
        let _ = writeln!(
            s,
            "{t},{},{},{}",
            curves[0].snr_db[i], curves[1].snr_db[i], curves[2].snr_db[i]
        );
    }
    Ok(s)
}
