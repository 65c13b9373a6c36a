//! Euler integration of the predictor-conditioned reverse-time ODE.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::path::ProbabilityPath;
use crate::predictor::TargetPredictor;
use crate::rng::RngSeed;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplerConfig {
    pub n_steps: usize,
    pub t_start: f64,
    pub t_floor: f64,
    pub record_trajectory: bool,
    /// Reserved for stochastic samplers; the Euler solver never draws.
    pub seed: RngSeed,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_steps: 4,
            t_start: 0.97,
            t_floor: 0.03,
            record_trajectory: false,
            seed: RngSeed::new(0),
        }
    }
}

impl SamplerConfig {
    pub fn with_steps(self, n_steps: usize) -> Self {
        Self { n_steps, ..self }
    }

    /// `t_floor = 0` is accepted so that exact zero-variance paths can be
    /// integrated all the way to the clean endpoint.
    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::Config("sampler needs at least one step".into()));
        }
        if !(0.0 <= self.t_floor && self.t_floor < self.t_start && self.t_start <= 1.0) {
            return Err(Error::Config(format!(
                "need 0 <= t_floor < t_start <= 1, got t_floor {} t_start {}",
                self.t_floor, self.t_start
            )));
        }
        Ok(())
    }

    pub fn step_size(&self) -> f64 {
        (self.t_start - self.t_floor) / self.n_steps as f64
    }

    /// `t_n = t_start − n·dt` for `n = 0..=n_steps`.
    pub fn time_grid(&self) -> Vec<f64> {
        let dt = self.step_size();
        (0..=self.n_steps)
            .map(|n| self.t_start - n as f64 * dt)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trajectory {
    pub states: Vec<(f64, Tensor)>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Columns: step, t, state norm, and distance to `reference` when given.
    pub fn to_csv(&self, reference: Option<&Tensor>) -> Result<String> {
        let mut s = String::from("step,t,norm");
        if reference.is_some() {
            s.push_str(",dist_ref");
        }
        s.push('\n');
        for (i, (t, x)) in self.states.iter().enumerate() {
            let _ = write!(s, "{i},{t},{}", x.norm());
            if let Some(r) = reference {
                let d = x.zip_map(r, |a, b| a - b)?.norm();
                let _ = write!(s, ",{d}");
            }
            s.push('\n');
        }
        Ok(s)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>, reference: Option<&Tensor>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv(reference)?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveOutput {
    /// Predictor output at the last step: the enhanced estimate.
    pub estimate: Tensor,
    /// Raw ODE state at `t_floor`.
    pub final_state: Tensor,
    pub trajectory: Option<Trajectory>,
}

/// One explicit Euler step from `t` to `t − dt`.
pub fn euler_step<P: TargetPredictor + ?Sized>(
    path: &ProbabilityPath,
    predictor: &P,
    x_t: &Tensor,
    x1: &Tensor,
    t: f64,
    dt: f64,
) -> Result<(Tensor, Tensor)> {
    let x0_hat = predictor.predict(x_t, x1, t)?;
    x0_hat.ensure_same_shape(x_t, "predictor output")?;
    if dt == 0.0 {
        return Ok((x_t.clone(), x0_hat));
    }
    let u = path.vector_field_from_predictor(t, x_t, x1, &x0_hat)?;
    let next = x_t.zip_map(&u, |x, v| x + dt * v)?;
    Ok((next, x0_hat))
}

pub fn euler_solve<P: TargetPredictor + ?Sized>(
    path: &ProbabilityPath,
    predictor: &P,
    x1: &Tensor,
    cfg: &SamplerConfig,
) -> Result<SolveOutput> {
    cfg.validate()?;
    if !x1.is_finite() {
        return Err(Error::NonFinite {
            context: "sampler input".into(),
        });
    }
    let grid = cfg.time_grid();
    let dt = cfg.step_size();
    let mut x = x1.clone();
    let mut estimate = x1.clone();
    let mut trajectory = cfg.record_trajectory.then(|| Trajectory {
        states: vec![(grid[0], x.clone())],
    });
    for n in 0..cfg.n_steps {
        let (next, x0_hat) = euler_step(path, predictor, &x, x1, grid[n], dt)?;
        if !next.is_finite() || !x0_hat.is_finite() {
            return Err(Error::NonFinite {
                context: format!("sampler step {n} at t = {}", grid[n]),
            });
        }
        x = next;
        estimate = x0_hat;
        if let Some(tr) = trajectory.as_mut() {
            tr.states.push((grid[n + 1], x.clone()));
        }
    }
    log::debug!("euler solve: {} steps, dt {dt}", cfg.n_steps);
    Ok(SolveOutput {
        estimate,
        final_state: x,
        trajectory,
    })
}
