use super::{predict_with_tape, ParamSet, TargetPredictor, TimestepEmbedding, Trainable};
use crate::error::{Error, Result};
use crate::rng::{RngSeed, SeededRng};
use crate::tape::{Activation, Conv2dSpec, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct DbaLiteConfig {
    pub n_freq: usize,
    pub channels: usize,
    pub squeezed: usize,
    pub tf_blocks: usize,
    pub unet_depth: usize,
    pub freq_stride: usize,
    pub alpha_t: f64,
    pub beta_f: f64,
    pub tcn_kernel: usize,
    pub tcn_dilations: Vec<usize>,
    pub freq_groups: usize,
    /// Channel attention before each T- and F-block.
    pub attention: bool,
    pub embed_dim: usize,
    pub fourier_scale: f64,
    pub seed: RngSeed,
}

impl DbaLiteConfig {
    pub fn miniature(n_freq: usize) -> Self {
        Self {
            n_freq,
            channels: 4,
            squeezed: 8,
            tf_blocks: 1,
            unet_depth: 1,
            freq_stride: 2,
            alpha_t: 1.0,
            beta_f: 1.0,
            tcn_kernel: 3,
            tcn_dilations: vec![1, 2, 4],
            freq_groups: 4,
            attention: true,
            embed_dim: 16,
            fourier_scale: TimestepEmbedding::DEFAULT_SCALE,
            seed: RngSeed::new(0),
        }
    }

    fn bottleneck_freq(&self) -> usize {
        self.n_freq / self.freq_stride.pow(self.unet_depth as u32)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("channels", self.channels),
            ("squeezed", self.squeezed),
            ("freq_stride", self.freq_stride),
            ("tcn_kernel", self.tcn_kernel),
            ("freq_groups", self.freq_groups),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("dba {name} must be positive")));
            }
        }
        let div = self.freq_stride.pow(self.unet_depth as u32);
        if self.n_freq == 0 || !self.n_freq.is_multiple_of(div) {
            return Err(Error::Config(format!(
                "n_freq {} not divisible by freq_stride^unet_depth = {div}",
                self.n_freq
            )));
        }
        if !self.squeezed.is_multiple_of(self.freq_groups) {
            return Err(Error::Config(format!(
                "squeezed channels {} not divisible by {} groups",
                self.squeezed, self.freq_groups
            )));
        }
        if self.tcn_kernel.is_multiple_of(2)
            || self.tcn_dilations.is_empty()
            || self.tcn_dilations.contains(&0)
        {
            return Err(Error::Config(
                "tcn needs an odd kernel and positive dilations".into(),
            ));
        }
        if !(self.alpha_t.is_finite() && self.beta_f.is_finite()) {
            return Err(Error::Config("residual weights must be finite".into()));
        }
        Ok(())
    }
}

/// Reduced dual-path backbone: a frequency-only U-Net around a stack of
/// time/frequency blocks, conditioned on the diffusion time.
#[derive(Debug, Clone, PartialEq)]
pub struct DbaLite {
    pub config: DbaLiteConfig,
    embedding: TimestepEmbedding,
    params: ParamSet,
}

struct Init<'a> {
    params: ParamSet,
    rng: &'a mut SeededRng,
}

impl Init<'_> {
    fn conv(&mut self, name: &str, cout: usize, cin: usize, kf: usize, kt: usize) {
        self.params.push_random(
            &format!("{name}.w"),
            &[cout, cin, kf, kt],
            cin * kf * kt,
            self.rng,
        );
        self.params
            .push(format!("{name}.b"), Tensor::zeros(&[cout]));
    }

    fn linear(&mut self, name: &str, out: usize, inp: usize) {
        self.params
            .push_random(&format!("{name}.w"), &[out, inp], inp, self.rng);
        self.params
            .push(format!("{name}.b"), Tensor::zeros(&[out, 1]));
    }
}

/// Hands out parameter leaves in registration order.
struct Cursor<'a> {
    vars: &'a [Var],
    next: usize,
}

impl Cursor<'_> {
    fn take(&mut self) -> Var {
        let v = self.vars[self.next];
        self.next += 1;
        v
    }

    fn pair(&mut self) -> (Var, Var) {
        let w = self.take();
        (w, self.take())
    }
}

impl DbaLite {
    pub fn new(config: DbaLiteConfig) -> Result<Self> {
        config.validate()?;
        let embedding =
            TimestepEmbedding::new(config.embed_dim, config.fourier_scale, config.seed)?;
        let mut rng = config.seed.derive(1).rng();
        let mut init = Init {
            params: ParamSet::new(),
            rng: &mut rng,
        };
        let (c, cs) = (config.channels, config.squeezed);
        let fb = config.bottleneck_freq();
        init.linear("temb", c, config.embed_dim);
        init.conv("in", c, 4, 3, 3);
        for d in 0..config.unet_depth {
            init.conv(&format!("enc{d}"), c, c, 3, 3);
            init.conv(&format!("down{d}"), c, c, config.freq_stride, 1);
        }
        for l in 0..config.tf_blocks {
            for part in ["t", "f"] {
                let name = format!("tf{l}.{part}");
                if config.attention {
                    let r = (c / 2).max(1);
                    init.linear(&format!("{name}.att1"), r, c);
                    init.linear(&format!("{name}.att2"), c, r);
                }
                init.conv(&format!("{name}.in"), cs, c, 1, 1);
                init.linear(&format!("{name}.adapt"), cs, c);
                if part == "t" {
                    for (i, _) in config.tcn_dilations.iter().enumerate() {
                        init.conv(&format!("{name}.tcn{i}"), cs, cs, 1, config.tcn_kernel);
                    }
                } else {
                    init.params.push_random(
                        &format!("{name}.mix"),
                        &[config.freq_groups, fb, fb],
                        fb,
                        init.rng,
                    );
                }
                init.conv(&format!("{name}.out"), c, cs, 1, 1);
            }
        }
        for d in (0..config.unet_depth).rev() {
            init.conv(&format!("dec{d}"), c, 2 * c, 3, 3);
        }
        init.conv("out", 2, c, 3, 3);
        let params = init.params;
        Ok(Self {
            config,
            embedding,
            params,
        })
    }

    fn conv(tape: &mut Tape, x: Var, wb: (Var, Var), spec: Conv2dSpec) -> Result<Var> {
        let y = tape.conv2d(x, wb.0, spec)?;
        tape.channel_bias(y, wb.1)
    }

    fn linear(tape: &mut Tape, x: Var, wb: (Var, Var)) -> Result<Var> {
        let y = tape.matmul(wb.0, x)?;
        tape.add(y, wb.1)
    }

    fn attention(tape: &mut Tape, h: Var, p: &mut Cursor, c: usize) -> Result<Var> {
        let s = tape.channel_mean(h)?;
        let s = tape.reshape(s, &[c, 1])?;
        let z = Self::linear(tape, s, p.pair())?;
        let z = tape.activation(z, Activation::Silu);
        let g = Self::linear(tape, z, p.pair())?;
        let g = tape.activation(g, Activation::Sigmoid);
        let g = tape.reshape(g, &[c])?;
        tape.channel_scale(h, g)
    }

    /// Pointwise squeeze, then the time adapter added as a channel bias.
    fn squeeze_in(&self, tape: &mut Tape, h: Var, temb: Var, p: &mut Cursor) -> Result<Var> {
        let cs = self.config.squeezed;
        let y = Self::conv(tape, h, p.pair(), Conv2dSpec::same(1, 1))?;
        let a = Self::linear(tape, temb, p.pair())?;
        let a = tape.reshape(a, &[cs])?;
        let y = tape.channel_bias(y, a)?;
        Ok(tape.activation(y, Activation::Silu))
    }

    fn residual(tape: &mut Tape, h: Var, block: Var, weight: f64) -> Result<Var> {
        let b = tape.scale(block, weight);
        tape.add(h, b)
    }
}

impl TargetPredictor for DbaLite {
    fn predict(&self, x_t: &Tensor, x1: &Tensor, t: f64) -> Result<Tensor> {
        predict_with_tape(self, x_t, x1, t)
    }
}

impl Trainable for DbaLite {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward(&self, tape: &mut Tape, params: &[Var], x_t: Var, x1: Var, t: f64) -> Result<Var> {
        let cfg = &self.config;
        let shape = tape.value(x_t).shape().to_vec();
        if shape.len() != 3 || shape[0] != 2 || shape[1] != cfg.n_freq {
            return Err(Error::Shape(format!(
                "dba built for 2 x {} x K, got {shape:?}",
                cfg.n_freq
            )));
        }
        let c = cfg.channels;
        let mut p = Cursor {
            vars: params,
            next: 0,
        };

        let emb = self.embedding.embed(t);
        let e = tape.leaf(Tensor::new(&[emb.len(), 1], emb)?);
        let temb = Self::linear(tape, e, p.pair())?;
        let temb = tape.activation(temb, Activation::Silu);

        let x = tape.concat(&[x_t, x1])?;
        let mut h = Self::conv(tape, x, p.pair(), Conv2dSpec::same(3, 3))?;
        h = tape.activation(h, Activation::Silu);

        let mut skips = Vec::with_capacity(cfg.unet_depth);
        for _ in 0..cfg.unet_depth {
            let y = Self::conv(tape, h, p.pair(), Conv2dSpec::same(3, 3))?;
            let y = tape.activation(y, Activation::Silu);
            h = tape.add(h, y)?;
            skips.push(h);
            let down = Conv2dSpec {
                stride_freq: cfg.freq_stride,
                dilation_time: 1,
                pad_freq: 0,
                pad_time: 0,
            };
            h = Self::conv(tape, h, p.pair(), down)?;
        }

        for _ in 0..cfg.tf_blocks {
            if cfg.attention {
                h = Self::attention(tape, h, &mut p, c)?;
            }
            let mut y = self.squeeze_in(tape, h, temb, &mut p)?;
            for &d in &cfg.tcn_dilations {
                let spec = Conv2dSpec {
                    stride_freq: 1,
                    dilation_time: d,
                    pad_freq: 0,
                    pad_time: d * (cfg.tcn_kernel / 2),
                };
                y = Self::conv(tape, y, p.pair(), spec)?;
                y = tape.activation(y, Activation::Silu);
            }
            let y = Self::conv(tape, y, p.pair(), Conv2dSpec::same(1, 1))?;
            h = Self::residual(tape, h, y, cfg.alpha_t)?;

            if cfg.attention {
                h = Self::attention(tape, h, &mut p, c)?;
            }
            let y = self.squeeze_in(tape, h, temb, &mut p)?;
            let y = tape.freq_linear(y, p.take())?;
            let y = tape.activation(y, Activation::Silu);
            let y = Self::conv(tape, y, p.pair(), Conv2dSpec::same(1, 1))?;
            h = Self::residual(tape, h, y, cfg.beta_f)?;
        }

        for skip in skips.into_iter().rev() {
            h = tape.upsample_freq(h, cfg.freq_stride)?;
            let cat = tape.concat(&[h, skip])?;
            h = Self::conv(tape, cat, p.pair(), Conv2dSpec::same(3, 3))?;
            h = tape.activation(h, Activation::Silu);
        }
        let out = Self::conv(tape, h, p.pair(), Conv2dSpec::same(3, 3))?;
        debug_assert_eq!(p.next, params.len());
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs(f: usize, k: usize, seed: u64) -> (Tensor, Tensor) {
        let mut r = RngSeed::new(seed).rng();
        (r.normal_tensor(&[2, f, k]), r.normal_tensor(&[2, f, k]))
    }

    #[test]
    fn output_shape_contract() {
        let cfg = DbaLiteConfig {
            channels: 8,
            squeezed: 16,
            tf_blocks: 2,
            ..DbaLiteConfig::miniature(32)
        };
        let m = DbaLite::new(cfg).unwrap();
        let (x, x1) = inputs(32, 32, 1);
        let y = m.predict(&x, &x1, 0.5).unwrap();
        assert_eq!(y.shape(), &[2, 32, 32]);
        assert!(y.is_finite());
    }

    #[test]
    fn time_conditioning_changes_output() {
        let m = DbaLite::new(DbaLiteConfig::miniature(16)).unwrap();
        let (x, x1) = inputs(16, 16, 2);
        let a = m.predict(&x, &x1, 0.1).unwrap();
        let b = m.predict(&x, &x1, 0.9).unwrap();
        assert!(a.relative_error(&b).unwrap() > 0.0);
        let c = m.predict(&x, &x1, 0.101).unwrap();
        assert!(a.relative_error(&c).unwrap() > 0.0);
    }

    #[test]
    fn zero_residual_weights_without_attention_match_no_blocks() {
        let base = DbaLiteConfig {
            attention: false,
            alpha_t: 0.0,
            beta_f: 0.0,
            ..DbaLiteConfig::miniature(16)
        };
        let with_blocks = DbaLite::new(base.clone()).unwrap();
        let mut without = DbaLite::new(DbaLiteConfig {
            tf_blocks: 0,
            ..base
        })
        .unwrap();
        // Copy shared weights so only the TF stack differs.
        let mut shared = ParamSet::new();
        for (name, t) in with_blocks.params().iter() {
            if !name.starts_with("tf") {
                shared.push(name, t.clone());
            }
        }
        without.params_mut().assign(&shared).unwrap();
        let (x, x1) = inputs(16, 8, 3);
        assert_eq!(
            with_blocks.predict(&x, &x1, 0.4).unwrap(),
            without.predict(&x, &x1, 0.4).unwrap()
        );
    }

    #[test]
    fn rejects_indivisible_frequency_axis() {
        assert!(DbaLite::new(DbaLiteConfig::miniature(15)).is_err());
        let m = DbaLite::new(DbaLiteConfig::miniature(16)).unwrap();
        let (x, x1) = inputs(8, 4, 4);
        assert!(m.predict(&x, &x1, 0.5).is_err());
    }
}
