use super::{predict_with_tape, ParamSet, TargetPredictor, TimestepEmbedding, Trainable};
use crate::error::{Error, Result};
use crate::rng::RngSeed;
use crate::tape::{Activation, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyPredictorConfig {
    pub n_freq: usize,
    pub embed_dim: usize,
    pub fourier_scale: f64,
    pub hidden: usize,
    pub seed: RngSeed,
}

impl ToyPredictorConfig {
    pub fn new(n_freq: usize) -> Self {
        Self {
            n_freq,
            embed_dim: 16,
            fourier_scale: 2.0,
            hidden: 4,
            seed: RngSeed::new(0),
        }
    }
}

/// Time-conditioned per-frequency mixer `x̂0 = a(t)⊙x_t + b(t)⊙x1`.
///
/// `[a; b]` comes from a tanh perceptron on the timestep embedding. A fresh
/// model starts at `a = 0`, `b = 1`, i.e. it returns the noisy input.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPredictor {
    pub config: ToyPredictorConfig,
    embedding: TimestepEmbedding,
    params: ParamSet,
}

const W1: usize = 0;
const B1: usize = 1;
const W2: usize = 2;
const B2: usize = 3;

impl ToyPredictor {
    pub fn new(config: ToyPredictorConfig) -> Result<Self> {
        if config.n_freq == 0 || config.hidden == 0 {
            return Err(Error::Config(
                "toy predictor needs n_freq > 0 and hidden > 0".into(),
            ));
        }
        let embedding =
            TimestepEmbedding::new(config.embed_dim, config.fourier_scale, config.seed)?;
        let mut rng = config.seed.derive(1).rng();
        let (e, h, f) = (config.embed_dim, config.hidden, config.n_freq);
        let mut params = ParamSet::new();
        params.push_random("toy.w1", &[h, e], e, &mut rng);
        params.push("toy.b1", Tensor::zeros(&[h, 1]));
        params.push("toy.w2", Tensor::zeros(&[2 * f, h]));
        params.push(
            "toy.b2",
            Tensor::from_fn(&[2 * f, 1], |i| if i < f { 0.0 } else { 1.0 }),
        );
        Ok(Self {
            config,
            embedding,
            params,
        })
    }

    /// Pins the gains to `a(t) ≡ a`, `b(t) ≡ b` for every frequency.
    pub fn with_constant_gains(mut self, a: f64, b: f64) -> Self {
        let f = self.config.n_freq;
        *self.params.get_mut(W2) = Tensor::zeros(&[2 * f, self.config.hidden]);
        *self.params.get_mut(B2) = Tensor::from_fn(&[2 * f, 1], |i| if i < f { a } else { b });
        self
    }

    /// `(a(t), b(t))` as plain vectors.
    pub fn gains(&self, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut tape = Tape::new();
        let vars = self.params.register(&mut tape);
        let (a, b) = self.gain_nodes(&mut tape, &vars, t)?;
        Ok((tape.value(a).data().to_vec(), tape.value(b).data().to_vec()))
    }

    fn gain_nodes(&self, tape: &mut Tape, p: &[Var], t: f64) -> Result<(Var, Var)> {
        let f = self.config.n_freq;
        let emb = self.embedding.embed(t);
        let e = tape.leaf(Tensor::new(&[emb.len(), 1], emb)?);
        let h = tape.matmul(p[W1], e)?;
        let h = tape.add(h, p[B1])?;
        let h = tape.activation(h, Activation::Tanh);
        let o = tape.matmul(p[W2], h)?;
        let o = tape.add(o, p[B2])?;
        let a = tape.slice(o, 0, f)?;
        let a = tape.reshape(a, &[f])?;
        let b = tape.slice(o, f, f)?;
        let b = tape.reshape(b, &[f])?;
        Ok((a, b))
    }
}

impl TargetPredictor for ToyPredictor {
    fn predict(&self, x_t: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor> {
        predict_with_tape(self, x_t, x1, t)
    }
}

impl Trainable for ToyPredictor {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], x_t: Var, x1: Var, t: f64) -> Result<Var> {
        let shape = tape.value(x_t).shape();
        if shape.len() != 3 || shape[1] != self.config.n_freq {
            return Err(Error::Shape(format!(
                "toy predictor built for {} bins, got {shape:?}",
                self.config.n_freq
            )));
        }
        let (a, b) = self.gain_nodes(tape, params, t)?;
        let ax = tape.freq_scale(x_t, a)?;
        let bx = tape.freq_scale(x1, b)?;
        tape.add(ax, bx)
    }
}
