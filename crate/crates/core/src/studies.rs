//! Numerical studies shared by the CLI and the benches.

use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::path::ProbabilityPath;
use crate::predictor::{batch_gradient, Objective, OraclePredictor, TrainItem, Trainable};
use crate::rng::RngSeed;
use crate::sampler::{euler_solve, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceRow {
    pub t: f64,
    pub var_fm_empirical: f64,
    pub var_fm_analytic: f64,
    pub var_tm: f64,
}

/// Unbiased variance, shifted by the first sample so constant input gives exactly 0.
fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let shift = xs[0];
    let (s1, s2) = xs.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = x - shift;
        (a + d, b + d * d)
    });
    (s2 - s1 * s1 / n) / (n - 1.0)
}

/// Per-component variance of the flow-matching target `σ'_t·z + μ'_t` and of
/// the target-matching target `x0` over `m` noise draws at each grid time.
pub fn objective_variance(
    path: &ProbabilityPath,
    grid: &[f64],
    m: usize,
    x0: f64,
    x1: f64,
    seed: RngSeed,
    exec: Exec,
) -> Result<Vec<VarianceRow>> {
    if m < 2 {
        return Err(Error::Config(
            "variance study needs at least 2 samples".into(),
        ));
    }
    par::try_map_range(exec, grid.len(), |i| {
        let t = grid[i];
        let ds = path.variance.sigma_derivative_at(t)?;
        let dmu = path.mean.mean_derivative_at(t, x0, x1);
        let mut rng = seed.derive(i as u64).rng();
        let mut fm = Vec::with_capacity(m);
        let mut tm = Vec::with_capacity(m);
        for _ in 0..m {
            let z = rng.normal();
            fm.push(ds * z + dmu);
            tm.push(x0);
        }
        Ok(VarianceRow {
            t,
            var_fm_empirical: sample_variance(&fm),
            var_fm_analytic: ds * ds,
            var_tm: sample_variance(&tm),
        })
    })
}

pub fn variance_csv(rows: &[VarianceRow]) -> String {
    let mut s = String::from("t,var_fm_empirical,var_fm_analytic,var_tm\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{}\n",
            r.t, r.var_fm_empirical, r.var_fm_analytic, r.var_tm
        ));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    /// Mean `‖x_final − x0‖ / ‖x0‖` of the raw ODE state.
    pub state_error: f64,
    /// Same for the returned estimate (zero for the oracle by construction).
    pub estimate_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSetup {
    pub instances: usize,
    pub shape: [usize; 3],
    pub seed: RngSeed,
}

impl Default for ConvergenceSetup {
    fn default() -> Self {
        Self {
            instances: 20,
            shape: [2, 64, 64],
            seed: RngSeed::new(0),
        }
    }
}

/// Oracle-predictor Euler runs on random `(x0, x1)` pairs for each step count.
pub fn oracle_convergence(
    path: &ProbabilityPath,
    base: &SamplerConfig,
    steps: &[usize],
    setup: &ConvergenceSetup,
    exec: Exec,
) -> Result<Vec<ConvergenceRow>> {
    if setup.instances == 0 {
        return Err(Error::Config("convergence study needs instances".into()));
    }
    let pairs: Vec<_> = (0..setup.instances)
        .map(|i| {
            let mut rng = setup.seed.derive(i as u64).rng();
            let x0 = rng.normal_tensor(&setup.shape);
            let x1 = rng.normal_tensor(&setup.shape);
            (x0, x1)
        })
        .collect();
    steps
        .iter()
        .map(|&n| {
            let cfg = base.with_steps(n);
            let errs = par::try_map_range(exec, pairs.len(), |i| {
                let (x0, x1) = &pairs[i];
                let out = euler_solve(path, &OraclePredictor::new(x0.clone()), x1, &cfg)?;
                Ok::<_, Error>((
                    out.final_state.relative_error(x0)?,
                    out.estimate.relative_error(x0)?,
                ))
            })?;
            let k = errs.len() as f64;
            Ok(ConvergenceRow {
                n_steps: n,
                state_error: errs.iter().map(|e| e.0).sum::<f64>() / k,
                estimate_error: errs.iter().map(|e| e.1).sum::<f64>() / k,
            })
        })
        .collect()
}

pub fn convergence_csv(rows: &[ConvergenceRow]) -> String {
    let mut s = String::from("n_steps,mean_rel_error,mean_rel_error_estimate\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{}\n",
            r.n_steps, r.state_error, r.estimate_error
        ));
    }
    s
}

/// Per-parameter variance of the single-item loss gradient over `resamples`
/// independent noise draws at a fixed time.
#[allow(clippy::too_many_arguments)]
pub fn gradient_variance<P: Trainable + ?Sized>(
    model: &P,
    item: &TrainItem,
    path: &ProbabilityPath,
    objective: Objective,
    t: f64,
    resamples: usize,
    seed: RngSeed,
    exec: Exec,
) -> Result<Vec<f64>> {
    if resamples < 2 {
        return Err(Error::Config(
            "gradient variance needs at least 2 resamples".into(),
        ));
    }
    let items = std::slice::from_ref(item);
    let draws = par::try_map_range(exec, resamples, |r| {
        let (_, g) = batch_gradient(
            model,
            items,
            path,
            objective,
            t,
            seed.derive(r as u64),
            None,
            Exec::Sequential,
        )?;
        Ok::<_, Error>(
            g.into_iter()
                .flat_map(|g| g.into_data())
                .collect::<Vec<f64>>(),
        )
    })?;
    let n_params = draws[0].len();
    Ok((0..n_params)
        .map(|j| sample_variance(&draws.iter().map(|d| d[j]).collect::<Vec<_>>()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedules::{MeanSchedule, VarianceSchedule};

    #[test]
    fn variance_study_matches_analytic() {
        let path = ProbabilityPath::new(
            MeanSchedule::Logistic { k: 10.0 },
            VarianceSchedule::Bridge { sigma: 1.0 },
        );
        let rows = objective_variance(
            &path,
            &[0.25, 0.7],
            20000,
            0.2,
            1.0,
            RngSeed::new(1),
            Exec::Parallel,
        )
        .unwrap();
        assert!((rows[0].var_fm_analytic - 1.0 / 3.0).abs() < 1e-12);
        for r in &rows {
            assert_eq!(r.var_tm, 0.0);
            assert!((r.var_fm_empirical / r.var_fm_analytic - 1.0).abs() < 0.05);
        }
    }

    #[test]
    fn zero_variance_linear_convergence_is_exact() {
        let path = ProbabilityPath::new(
            MeanSchedule::Linear,
            VarianceSchedule::Constant { sigma: 0.0 },
        );
        let cfg = SamplerConfig {
            t_start: 1.0,
            t_floor: 0.0,
            ..SamplerConfig::default()
        };
        let setup = ConvergenceSetup {
            instances: 3,
            shape: [2, 4, 4],
            ..ConvergenceSetup::default()
        };
        let rows = oracle_convergence(&path, &cfg, &[1, 4, 9], &setup, Exec::Sequential).unwrap();
        for r in rows {
            assert!(r.state_error < 1e-12);
            assert_eq!(r.estimate_error, 0.0);
        }
    }

    #[test]
    fn target_matching_gradient_is_less_noisy() {
        use crate::predictor::{ToyPredictor, ToyPredictorConfig};
        let mut rng = RngSeed::new(3).rng();
        let mut model = ToyPredictor::new(ToyPredictorConfig::new(6)).unwrap();
        model.params_mut().jitter(0.3, &mut rng);
        let item = TrainItem {
            x0: rng.normal_tensor(&[2, 6, 5]),
            x1: rng.normal_tensor(&[2, 6, 5]),
            clean: None,
        };
        let path = ProbabilityPath::default();
        let run = |o| {
            gradient_variance(
                &model,
                &item,
                &path,
                o,
                0.25,
                30,
                RngSeed::new(4),
                Exec::Parallel,
            )
            .unwrap()
        };
        let tm: f64 = run(Objective::TargetMatching).iter().sum();
        let fm: f64 = run(Objective::FlowMatching).iter().sum();
        assert!(tm < fm, "tm {tm} fm {fm}");
    }

    #[test]
    fn executor_does_not_change_results() {
        let path = ProbabilityPath::default();
        let setup = ConvergenceSetup {
            instances: 4,
            shape: [2, 8, 8],
            ..ConvergenceSetup::default()
        };
        let a = oracle_convergence(
            &path,
            &SamplerConfig::default(),
            &[4, 8],
            &setup,
            Exec::Sequential,
        )
        .unwrap();
        let b = oracle_convergence(
            &path,
            &SamplerConfig::default(),
            &[4, 8],
            &setup,
            Exec::Parallel,
        )
        .unwrap();
        assert_eq!(a, b);
    }
}
