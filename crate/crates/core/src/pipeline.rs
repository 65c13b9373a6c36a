//! Waveform ↔ compressed spectrogram, and the end-to-end enhancement chain.

use crate::dsp::{from_channels, to_channels, CompressionParams, Stft, StftConfig};
use crate::error::{Error, Result};
use crate::path::ProbabilityPath;
use crate::predictor::{TargetPredictor, TrainItem};
use crate::sampler::{euler_solve, SamplerConfig};
use crate::synth::SynthPair;
use crate::tensor::Tensor;

pub struct Pipeline {
    stft: Stft,
    pub compression: CompressionParams,
}

impl Pipeline {
    pub fn new(stft: StftConfig, compression: CompressionParams) -> Result<Self> {
        compression.validate()?;
        Ok(Self {
            stft: Stft::new(stft)?,
            compression,
        })
    }

    pub fn stft_config(&self) -> StftConfig {
        *self.stft.config()
    }

    pub fn n_freq(&self) -> usize {
        self.stft.config().n_freq()
    }

    /// Samples to a `2 × F × K` compressed carrier.
    pub fn analyze(&self, samples: &[f64]) -> Result<Tensor> {
        let mut spec = self.stft.forward(samples)?;
        for v in spec.values.iter_mut() {
            *v = self.compression.compress_value(*v);
        }
        Ok(to_channels(&spec))
    }

    /// Compressed carrier back to `len` samples.
    pub fn synthesize(&self, carrier: &Tensor, len: usize) -> Result<Vec<f64>> {
        if !carrier.is_finite() {
            return Err(Error::NonFinite {
                context: "synthesis input".into(),
            });
        }
        let mut spec = from_channels(carrier, self.stft_config())?;
        for v in spec.values.iter_mut() {
            *v = self.compression.decompress_value(*v);
        }
        self.stft.inverse(&spec, len)
    }

    /// Noisy samples to enhanced samples of the same length.
    pub fn enhance<P: TargetPredictor + ?Sized>(
        &self,
        path: &ProbabilityPath,
        predictor: &P,
        noisy: &[f64],
        cfg: &SamplerConfig,
    ) -> Result<Vec<f64>> {
        let x1 = self.analyze(noisy)?;
        let out = euler_solve(path, predictor, &x1, cfg)?;
        self.synthesize(&out.estimate, noisy.len())
    }

    pub fn train_item(&self, pair: &SynthPair, keep_clean: bool) -> Result<TrainItem> {
        Ok(TrainItem {
            x0: self.analyze(&pair.clean.samples)?,
            x1: self.analyze(&pair.noisy.samples)?,
            clean: keep_clean.then(|| pair.clean.samples.clone()),
        })
    }
}
