//! Gaussian probability path `x_t ~ N(μ_t(x0, x1), σ_t²)` and its vector fields.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::schedules::{MeanSchedule, VarianceSchedule};
use crate::tensor::Tensor;

/// Below this `σ_t` counts as zero when forming `σ'_t / σ_t`.
const SIGMA_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityPath {
    pub mean: MeanSchedule,
    pub variance: VarianceSchedule,
    /// Sampling times are clamped into `[t_min, t_max]`.
    pub t_min: f64,
    pub t_max: f64,
}

impl Default for ProbabilityPath {
    fn default() -> Self {
        Self {
            mean: MeanSchedule::Logistic { k: 10.0 },
            variance: VarianceSchedule::Bridge { sigma: 0.5 },
            t_min: 0.03,
            t_max: 0.97,
        }
    }
}

/// `x_t` together with the standard-normal draw that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbedSample {
    pub x_t: Tensor,
    pub z: Tensor,
    pub t: f64,
}

impl ProbabilityPath {
    pub fn new(mean: MeanSchedule, variance: VarianceSchedule) -> Self {
        Self {
            mean,
            variance,
            ..Self::default()
        }
    }

    pub fn with_time_range(self, t_min: f64, t_max: f64) -> Self {
        Self {
            t_min,
            t_max,
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.mean.validate()?;
        self.variance.validate()?;
        if !(0.0 <= self.t_min && self.t_min < self.t_max && self.t_max <= 1.0) {
            return Err(Error::Config(format!(
                "time range [{}, {}] must satisfy 0 <= t_min < t_max <= 1",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }

    pub fn clamp_time(&self, t: f64) -> f64 {
        t.clamp(self.t_min, self.t_max)
    }

    pub fn mean(&self, t: f64, x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
        let c = self.mean.mix(t);
        x0.zip_map(x1, |a, b| a + c * (b - a))
    }

    pub fn mean_derivative(&self, t: f64, x0: &Tensor, x1: &Tensor) -> Result<Tensor> {
        let dc = self.mean.mix_derivative(t);
        x0.zip_map(x1, |a, b| dc * (b - a))
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.variance.sigma_at(t)
    }

    /// `x_t = μ_t + σ_t·z` for a caller-supplied `z`; `t` is used as given.
    pub fn perturb_with(&self, t: f64, x0: &Tensor, x1: &Tensor, z: &Tensor) -> Result<Tensor> {
        z.ensure_same_shape(x0, "noise vs x0")?;
        let mu = self.mean(t, x0, x1)?;
        let s = self.sigma(t);
        mu.zip_map(z, |m, zz| m + s * zz)
    }

    /// Draws `z ~ N(0, I)` and forms the perturbed sample at the clamped time.
    pub fn sample_perturbed(
        &self,
        t: f64,
        x0: &Tensor,
        x1: &Tensor,
        rng: &mut SeededRng,
    ) -> Result<PerturbedSample> {
        x0.ensure_same_shape(x1, "x0 vs x1")?;
        let t = self.clamp_time(t);
        let z = rng.normal_tensor(x0.shape());
        let x_t = self.perturb_with(t, x0, x1, &z)?;
        Ok(PerturbedSample { x_t, z, t })
    }

    /// `σ'_t / σ_t`, or `None` when the first vector-field term vanishes
    /// identically (time-invariant σ, or a degenerate σ_t with `x_t` on the mean).
    fn drift_ratio(&self, t: f64, x_t: &Tensor, mu: &Tensor) -> Result<Option<f64>> {
        let ds = self.variance.sigma_derivative_at(t)?;
        if ds == 0.0 {
            return Ok(None);
        }
        let s = self.sigma(t);
        if s < SIGMA_FLOOR {
            let off = x_t
                .data()
                .iter()
                .zip(mu.data())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if off <= SIGMA_FLOOR {
                return Ok(None);
            }
            return Err(Error::Domain(format!(
                "sigma_t = {s:e} at t = {t} with x_t off the mean by {off:e}"
            )));
        }
        Ok(Some(ds / s))
    }

    /// Forward-time field `(σ'/σ)(x_t − μ_t) + μ'_t` given the true endpoints.
    pub fn vector_field_exact(
        &self,
        t: f64,
        x_t: &Tensor,
        x0: &Tensor,
        x1: &Tensor,
    ) -> Result<Tensor> {
        x_t.ensure_same_shape(x0, "x_t vs x0")?;
        let mu = self.mean(t, x0, x1)?;
        let dmu = self.mean_derivative(t, x0, x1)?;
        match self.drift_ratio(t, x_t, &mu)? {
            None => Ok(dmu),
            Some(r) => {
                let mut out = dmu;
                for ((o, &x), &m) in out.data_mut().iter_mut().zip(x_t.data()).zip(mu.data()) {
                    *o += r * (x - m);
                }
                Ok(out)
            }
        }
    }

    /// Forward-time field written in terms of the noise draw: `σ'_t·z + μ'_t`.
    /// This is the flow-matching regression target.
    pub fn vector_field_decomposed(
        &self,
        t: f64,
        z: &Tensor,
        x0: &Tensor,
        x1: &Tensor,
    ) -> Result<Tensor> {
        z.ensure_same_shape(x0, "z vs x0")?;
        let ds = self.variance.sigma_derivative_at(t)?;
        let dmu = self.mean_derivative(t, x0, x1)?;
        dmu.zip_map(z, |m, zz| m + ds * zz)
    }

    /// Reverse-time field rebuilt from a clean-target estimate:
    /// `−[(σ'/σ)(x_t − μ_t(x̂0, x1)) + μ'_t(x̂0, x1)]`.
    ///
    /// Stepping `x ← x + dt·ũ` moves the state from `t` to `t − dt`.
    pub fn vector_field_from_predictor(
        &self,
        t: f64,
        x_t: &Tensor,
        x1: &Tensor,
        x0_hat: &Tensor,
    ) -> Result<Tensor> {
        let mut u = self.vector_field_exact(t, x_t, x0_hat, x1)?;
        for v in u.data_mut() {
            *v = -*v;
        }
        Ok(u)
    }
}
