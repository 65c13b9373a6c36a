//! Central finite-difference check of tape gradients.

use super::Trainable;
use crate::error::Result;
use crate::losses::tm_loss;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Analytic and numeric gradients of one loss, flattened over all parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl GradCheck {
    /// `|a − n| / max(|a|, |n|, floor)` per parameter.
    pub fn relative_errors(&self, floor: f64) -> Vec<f64> {
        self.analytic
            .iter()
            .zip(&self.numeric)
            .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
            .collect()
    }

    pub fn fraction_within(&self, tol: f64, floor: f64) -> f64 {
        let errs = self.relative_errors(floor);
        errs.iter().filter(|e| **e <= tol).count() as f64 / errs.len() as f64
    }

    pub fn max_relative_error(&self, floor: f64) -> f64 {
        self.relative_errors(floor).into_iter().fold(0.0, f64::max)
    }
}

/// Compares the tape gradient of `mean((f(x_t, x1, t) − target)²)` with
/// central differences of step `h` on every parameter scalar.
pub fn gradient_check<P: Trainable + ?Sized>(
    model: &mut P,
    x_t: &Tensor,
    x1: &Tensor,
    target: &Tensor,
    t: f64,
    h: f64,
) -> Result<GradCheck> {
    let mut tape = Tape::new();
    let vars = model.params().register(&mut tape);
    let xv = tape.leaf(x_t.clone());
    let x1v = tape.leaf(x1.clone());
    let out = model.forward(&mut tape, &vars, xv, x1v, t)?;
    let tv = tape.leaf(target.clone());
    let diff = tape.sub(out, tv)?;
    let sq = tape.mul(diff, diff)?;
    let loss = tape.mean(sq);
    let grads = tape.backward(loss)?;
    let analytic: Vec<f64> = model
        .params()
        .gradients(&grads, &vars)
        .iter()
        .flat_map(|g| g.data().to_vec())
        .collect();

    let mut numeric = Vec::with_capacity(analytic.len());
    for p in 0..model.params().len() {
        for j in 0..model.params().get(p).len() {
            let orig = model.params().get(p).data()[j];
            model.params_mut().get_mut(p).data_mut()[j] = orig + h;
            let up = tm_loss(&model.predict(x_t, x1, t)?, target)?;
            model.params_mut().get_mut(p).data_mut()[j] = orig - h;
            let down = tm_loss(&model.predict(x_t, x1, t)?, target)?;
            model.params_mut().get_mut(p).data_mut()[j] = orig;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    Ok(GradCheck { analytic, numeric })
}
