//! Power-law magnitude compression and the two-channel real carrier.

use num_complex::Complex64;

use super::stft::{ComplexSpectrogram, StftConfig};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionParams {
    pub exponent: f64,
    pub scale: f64,
}

impl Default for CompressionParams {
    fn default() -> Self {
        Self {
            exponent: 0.5,
            scale: 0.33,
        }
    }
}

impl CompressionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent <= 1.0) {
            return Err(Error::Config(format!(
                "compression exponent {} outside (0, 1]",
                self.exponent
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!(
                "compression scale {} must be positive",
                self.scale
            )));
        }
        Ok(())
    }

    /// `|y| -> scale·|y|^exponent`, phase kept; zero stays zero.
    #[inline]
    pub fn compress_value(&self, y: Complex64) -> Complex64 {
        let r = y.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        y * (self.scale * r.powf(self.exponent) / r)
    }

    #[inline]
    pub fn decompress_value(&self, c: Complex64) -> Complex64 {
        let r = c.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        c * ((r / self.scale).powf(1.0 / self.exponent) / r)
    }

    /// Vector-Jacobian product of [`Self::decompress_value`] at `c` for an
    /// upstream gradient `g` (both packed as `re + i·im`).
    #[inline]
    pub fn decompress_vjp(&self, c: Complex64, g: Complex64) -> Complex64 {
        let r = c.norm();
        if r == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        // y = s(r)·c with s(r) = r^(1/a - 1) / b^(1/a)
        let p = 1.0 / self.exponent - 1.0;
        let denom = self.scale.powf(1.0 / self.exponent);
        let s = r.powf(p) / denom;
        let ds_over_r = p * r.powf(p - 2.0) / denom;
        let dot = c.re * g.re + c.im * g.im;
        g * s + c * (ds_over_r * dot)
    }
}

/// Compressed spectrogram stored as a `2 × F × K` real tensor (re, im).
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedSpec {
    pub values: Tensor,
    pub compression: CompressionParams,
    pub config: StftConfig,
}

impl CompressedSpec {
    pub fn n_freq(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn n_frames(&self) -> usize {
        self.values.shape()[2]
    }
}

/// Packs a complex spectrogram into the `2 × F × K` layout without compression.
pub fn to_channels(spec: &ComplexSpectrogram) -> Tensor {
    let plane = spec.n_freq * spec.n_frames;
    let mut data = vec![0.0; 2 * plane];
    for (i, c) in spec.values.iter().enumerate() {
        data[i] = c.re;
        data[plane + i] = c.im;
    }
    Tensor::new(&[2, spec.n_freq, spec.n_frames], data).expect("layout")
}

pub fn from_channels(values: &Tensor, config: StftConfig) -> Result<ComplexSpectrogram> {
    let shape = values.shape();
    if shape.len() != 3 || shape[0] != 2 {
        return Err(Error::Shape(format!(
            "expected 2 x F x K carrier, got {shape:?}"
        )));
    }
    let plane = shape[1] * shape[2];
    let d = values.data();
    Ok(ComplexSpectrogram {
        values: (0..plane)
            .map(|i| Complex64::new(d[i], d[plane + i]))
            .collect(),
        n_freq: shape[1],
        n_frames: shape[2],
        config,
    })
}

pub fn compress(spec: &ComplexSpectrogram, params: CompressionParams) -> Result<CompressedSpec> {
    params.validate()?;
    if !spec.is_finite() {
        return Err(Error::NonFinite {
            context: "compress input".into(),
        });
    }
    let mut mapped = spec.clone();
    for v in mapped.values.iter_mut() {
        *v = params.compress_value(*v);
    }
    Ok(CompressedSpec {
        values: to_channels(&mapped),
        compression: params,
        config: spec.config,
    })
}

pub fn decompress(cspec: &CompressedSpec) -> Result<ComplexSpectrogram> {
    cspec.compression.validate()?;
    if !cspec.values.is_finite() {
        return Err(Error::NonFinite {
            context: "decompress input".into(),
        });
    }
    let mut spec = from_channels(&cspec.values, cspec.config)?;
    for v in spec.values.iter_mut() {
        *v = cspec.compression.decompress_value(*v);
    }
    Ok(spec)
}
