//! Clean-target predictors `x̂0 = x_θ(x_t, x1, t)`.
//!
//! [`OraclePredictor`] returns a bound reference and is used to test the
//! sampler in isolation. [`ToyPredictor`] and [`DbaLite`] are trainable: they
//! record their forward pass on a [`Tape`](crate::tape::Tape) so [`train`]
//! can differentiate through them.

mod checkpoint;
mod dba;
mod embedding;
mod gradcheck;
mod params;
mod toy;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use dba::{DbaLite, DbaLiteConfig};
pub use embedding::TimestepEmbedding;
pub use gradcheck::{gradient_check, GradCheck};
pub use params::ParamSet;
pub use toy::{ToyPredictor, ToyPredictorConfig};
pub use train::{
    batch_gradient, train, EpochLog, LossWeights, Objective, Optimizer, TrainConfig, TrainItem,
    TrainReport,
};

use crate::error::{Error, Result};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

pub trait TargetPredictor: Send + Sync {
    /// Estimate of the clean target with the shape of `x_t`.
    fn predict(&self, x_t: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor>;
}

impl<P: TargetPredictor + ?Sized> TargetPredictor for &P {
    fn predict(&self, x_t: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor> {
        (**self).predict(x_t, x1, t)
    }
}

/// A predictor whose forward pass can be recorded for differentiation.
pub trait Trainable: TargetPredictor {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;

    /// Records the forward pass. `params` holds one leaf per entry of
    /// [`Trainable::params`], in order.
    fn forward(&self, tape: &mut Tape, params: &[Var], x_t: Var, x1: Var, t: f64) -> Result<Var>;
}

/// Runs a [`Trainable`] forward pass on a throwaway tape.
pub fn predict_with_tape<P: Trainable + ?Sized>(
    model: &P,
    x_t: &Tensor,
    x1: &Tensor,
    t: f64,
) -> Result<Tensor> {
    x_t.ensure_same_shape(x1, "x_t vs x1")?;
    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape);
    let xv = tape.leaf(x_t.clone());
    let x1v = tape.leaf(x1.clone());
    let out = model.forward(&mut tape, &vars, xv, x1v, t)?;
    Ok(tape.value(out).clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OraclePredictor {
    pub x0: Tensor,
}

impl OraclePredictor {
    pub fn new(x0: Tensor) -> Self {
        Self { x0 }
    }
}

impl TargetPredictor for OraclePredictor {
    fn predict(&self, x_t: &Tensor, _x1: &Tensor, _t: f64) -> Result<Tensor> {
        if x_t.shape() != self.x0.shape() {
            return Err(Error::Shape(format!(
                "oracle bound to {:?}, queried with {:?}",
                self.x0.shape(),
                x_t.shape()
            )));
        }
        Ok(self.x0.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_ignores_inputs() {
        let x0 = Tensor::from_fn(&[2, 3], |i| i as f64);
        let o = OraclePredictor::new(x0.clone());
        for t in [0.1, 0.9] {
            let got = o.predict(&Tensor::full(&[2, 3], 7.0), &Tensor::zeros(&[2, 3]), t);
            assert_eq!(got.unwrap(), x0);
        }
        assert!(o
            .predict(&Tensor::zeros(&[3]), &Tensor::zeros(&[3]), 0.5)
            .is_err());
    }
}
