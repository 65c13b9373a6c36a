use std::fmt::Write as _;

use super::Trainable;
use crate::error::{Error, Result};
use crate::losses::{CompositeWeights, LossBreakdown, SignalLoss};
use crate::par::{self, Exec};
use crate::path::ProbabilityPath;
use crate::rng::RngSeed;
use crate::tape::Tape;
use crate::tensor::Tensor;

pub type LossWeights = CompositeWeights;

/// One paired example in the compressed-spectrogram domain.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub x0: Tensor,
    pub x1: Tensor,
    /// Clean waveform, needed only when signal-level losses are active.
    pub clean: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Objective {
    /// Regress the clean target.
    #[default]
    TargetMatching,
    /// Regress the sampled vector field `σ'_t·z + μ'_t`.
    FlowMatching,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Sgd { lr: 1e-3 }
    }
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    pub objective: Objective,
    pub seed: RngSeed,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 8,
            optimizer: Optimizer::default(),
            objective: Objective::TargetMatching,
            seed: RngSeed::new(0),
            exec: Exec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub log: Vec<EpochLog>,
    pub steps: usize,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,tm,mel,sisnr,total\n");
        for e in &self.log {
            let _ = writeln!(
                s,
                "{},{},{},{},{}",
                e.epoch, e.loss.tm, e.loss.mel, e.loss.sisnr, e.loss.total
            );
        }
        s
    }
}

fn item_loss_and_grad<P: Trainable + ?Sized>(
    model: &P,
    item: &TrainItem,
    path: &ProbabilityPath,
    objective: Objective,
    t: f64,
    z: &Tensor,
    signal: Option<&SignalLoss>,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    let x_t = path.perturb_with(t, &item.x0, &item.x1, z)?;
    let target = match objective {
        Objective::TargetMatching => item.x0.clone(),
        Objective::FlowMatching => path.vector_field_decomposed(t, z, &item.x0, &item.x1)?,
    };
    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape);
    let xv = tape.leaf(x_t);
    let x1v = tape.leaf(item.x1.clone());
    let out = model.forward(&mut tape, &vars, xv, x1v, t)?;
    let tv = tape.leaf(target);
    let diff = tape.sub(out, tv)?;
    let sq = tape.mul(diff, diff)?;
    let tm = tape.mean(sq);
    let tm_value = tape.scalar_value(tm);

    let (loss, breakdown) = match (signal, &item.clean, objective) {
        (Some(sig), Some(clean), Objective::TargetMatching) if sig.weights.uses_signal() => {
            let v = sig.evaluate(tape.value(out), clean)?;
            let w = sig.weights;
            let ext =
                tape.external(out, w.lambda_mel * v.mel + w.lambda_sisnr * v.sisnr, v.grad)?;
            let total = tape.add(tm, ext)?;
            (total, LossBreakdown::combine(tm_value, v.mel, v.sisnr, &w))
        }
        _ => (
            tm,
            LossBreakdown::combine(tm_value, 0.0, 0.0, &CompositeWeights::default()),
        ),
    };
    let grads = tape.backward(loss)?;
    Ok((breakdown, model.params().gradients(&grads, &vars)))
}

fn mean_of(parts: Vec<(LossBreakdown, Vec<Tensor>)>) -> (LossBreakdown, Vec<Tensor>) {
    let n = parts.len() as f64;
    let mut it = parts.into_iter();
    let (mut loss, mut grads) = it.next().expect("nonempty batch");
    for (l, g) in it {
        loss.tm += l.tm;
        loss.mel += l.mel;
        loss.sisnr += l.sisnr;
        loss.total += l.total;
        for (a, b) in grads.iter_mut().zip(&g) {
            for (x, y) in a.data_mut().iter_mut().zip(b.data()) {
                *x += y;
            }
        }
    }
    loss.tm /= n;
    loss.mel /= n;
    loss.sisnr /= n;
    loss.total /= n;
    for g in &mut grads {
        for x in g.data_mut() {
            *x /= n;
        }
    }
    (loss, grads)
}

/// Batch-mean loss and parameter gradient at a fixed time, with one noise
/// draw per item from `seed.derive(i)`. Items are reduced in index order, so
/// the result does not depend on `exec`.
#[allow(clippy::too_many_arguments)]
pub fn batch_gradient<P: Trainable + ?Sized>(
    model: &P,
    items: &[TrainItem],
    path: &ProbabilityPath,
    objective: Objective,
    t: f64,
    seed: RngSeed,
    signal: Option<&SignalLoss>,
    exec: Exec,
) -> Result<(LossBreakdown, Vec<Tensor>)> {
    if items.is_empty() {
        return Err(Error::Config("empty batch".into()));
    }
    let parts = par::try_map_range(exec, items.len(), |i| {
        let z = seed
            .derive(i as u64)
            .rng()
            .normal_tensor(items[i].x0.shape());
        item_loss_and_grad(model, &items[i], path, objective, t, &z, signal)
    })?;
    Ok(mean_of(parts))
}

struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: i32,
}

fn apply_update<P: Trainable + ?Sized>(
    model: &mut P,
    grads: &[Tensor],
    opt: &Optimizer,
    adam: &mut Option<AdamState>,
) {
    let params = model.params_mut();
    match *opt {
        Optimizer::Sgd { lr } => {
            for (i, g) in grads.iter().enumerate() {
                for (p, d) in params.get_mut(i).data_mut().iter_mut().zip(g.data()) {
                    *p -= lr * d;
                }
            }
        }
        Optimizer::Adam {
            lr,
            beta1,
            beta2,
            eps,
        } => {
            let st = adam.get_or_insert_with(|| AdamState {
                m: grads.iter().map(|g| Tensor::zeros(g.shape())).collect(),
                v: grads.iter().map(|g| Tensor::zeros(g.shape())).collect(),
                step: 0,
            });
            st.step += 1;
            let c1 = 1.0 - beta1.powi(st.step);
            let c2 = 1.0 - beta2.powi(st.step);
            for (i, g) in grads.iter().enumerate() {
                let p = params.get_mut(i).data_mut();
                let m = st.m[i].data_mut();
                let v = st.v[i].data_mut();
                for j in 0..g.len() {
                    let d = g.data()[j];
                    m[j] = beta1 * m[j] + (1.0 - beta1) * d;
                    v[j] = beta2 * v[j] + (1.0 - beta2) * d * d;
                    p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Stochastic training loop: per item draw `t ~ U[t_min, t_max]` and
/// `z ~ N(0, I)`, form `x_t`, predict, and descend the batch-mean loss.
///
/// Randomness for item `i` in epoch `e` comes from `seed.derive(e).derive(i)`,
/// so the loss log is bitwise reproducible for any worker count.
pub fn train<P: Trainable + ?Sized>(
    model: &mut P,
    data: &[TrainItem],
    path: &ProbabilityPath,
    cfg: &TrainConfig,
    signal: Option<&SignalLoss>,
) -> Result<TrainReport> {
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        return Err(Error::Config(
            "epochs and batch_size must be positive".into(),
        ));
    }
    path.validate()?;
    if !(cfg.optimizer.lr() > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let mut adam = None;
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let epoch_seed = cfg.seed.derive(epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        epoch_seed.with_stream(u64::MAX).rng().shuffle(&mut order);
        let mut sums = LossBreakdown::default();
        for (step, batch) in order.chunks(cfg.batch_size).enumerate() {
            let m: &P = model;
            let parts = par::try_map_range(cfg.exec, batch.len(), |j| {
                let i = batch[j];
                let mut rng = epoch_seed.derive(i as u64).rng();
                let t = rng.uniform(path.t_min, path.t_max);
                let z = rng.normal_tensor(data[i].x0.shape());
                item_loss_and_grad(m, &data[i], path, cfg.objective, t, &z, signal)
            })?;
            let (loss, grads) = mean_of(parts);
            if !loss.total.is_finite() || !grads.iter().all(Tensor::is_finite) {
                return Err(Error::NonFinite {
                    context: format!("training epoch {epoch} step {step}"),
                });
            }
            apply_update(model, &grads, &cfg.optimizer, &mut adam);
            let w = batch.len() as f64;
            sums.tm += loss.tm * w;
            sums.mel += loss.mel * w;
            sums.sisnr += loss.sisnr * w;
            sums.total += loss.total * w;
            report.steps += 1;
        }
        let n = data.len() as f64;
        let loss = LossBreakdown {
            tm: sums.tm / n,
            mel: sums.mel / n,
            sisnr: sums.sisnr / n,
            total: sums.total / n,
        };
        log::info!("epoch {epoch}: total {:.6} tm {:.6}", loss.total, loss.tm);
        report.log.push(EpochLog { epoch, loss });
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::predictor::{ToyPredictor, ToyPredictorConfig};

    fn dataset(n: usize, noisy: bool) -> Vec<TrainItem> {
        (0..n)
            .map(|i| {
                let mut r = RngSeed::new(100 + i as u64).rng();
                let x0 = r.normal_tensor(&[2, 6, 5]);
                let x1 = if noisy {
                    x0.zip_map(&r.normal_tensor(&[2, 6, 5]), |a, b| a + 0.8 * b)
                        .unwrap()
                } else {
                    x0.clone()
                };
                TrainItem {
                    x0,
                    x1,
                    clean: None,
                }
            })
            .collect()
    }

    #[test]
    fn clean_pairs_are_a_fixed_point() {
        let mut m = ToyPredictor::new(ToyPredictorConfig::new(6)).unwrap();
        let before = m.params().clone();
        let path = ProbabilityPath::new(
            crate::schedules::MeanSchedule::Logistic { k: 10.0 },
            crate::schedules::VarianceSchedule::Constant { sigma: 0.0 },
        );
        let rep = train(
            &mut m,
            &dataset(4, false),
            &path,
            &TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            None,
        )
        .unwrap();
        assert_eq!(rep.log[0].loss.tm, 0.0);
        assert_eq!(m.params(), &before);
    }

    #[test]
    fn deterministic_across_executors() {
        let data = dataset(6, true);
        let run = |exec| {
            let mut m = ToyPredictor::new(ToyPredictorConfig::new(6)).unwrap();
            let cfg = TrainConfig {
                epochs: 3,
                batch_size: 4,
                optimizer: Optimizer::Sgd { lr: 0.5 },
                exec,
                ..TrainConfig::default()
            };
            let rep = train(&mut m, &data, &ProbabilityPath::default(), &cfg, None).unwrap();
            (rep.to_csv(), m.params().clone())
        };
        assert_eq!(run(Exec::Sequential), run(Exec::Parallel));
    }

    #[test]
    fn loss_decreases_on_noisy_pairs() {
        let data = dataset(8, true);
        let mut m = ToyPredictor::new(ToyPredictorConfig::new(6)).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            batch_size: 4,
            optimizer: Optimizer::adam(0.05),
            ..TrainConfig::default()
        };
        let rep = train(&mut m, &data, &ProbabilityPath::default(), &cfg, None).unwrap();
        let first: f64 = rep.log[..5].iter().map(|e| e.loss.total).sum();
        let last: f64 = rep.log[25..].iter().map(|e| e.loss.total).sum();
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn rejects_empty_inputs() {
        let mut m = ToyPredictor::new(ToyPredictorConfig::new(6)).unwrap();
        assert!(train(
            &mut m,
            &[],
            &ProbabilityPath::default(),
            &TrainConfig::default(),
            None
        )
        .is_err());
        let cfg = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(train(
            &mut m,
            &dataset(1, true),
            &ProbabilityPath::default(),
            &cfg,
            None
        )
        .is_err());
    }
}
