//! Short-time Fourier transform with square-root-Hann analysis/synthesis.
//!
//! The inverse divides the overlap-added output by the summed product of the
//! analysis and synthesis windows, so reconstruction is exact whenever that
//! envelope is nonzero (the 510/128 default is not constant-overlap-add, but
//! its envelope never vanishes). Both linear maps also expose their adjoints,
//! which the signal-level losses use to push gradients back into the
//! spectrogram domain.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Below this the overlap-add envelope is treated as uncovered.
const ENVELOPE_FLOOR: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowKind {
    /// Periodic Hann split into two square roots (analysis and synthesis).
    #[default]
    SqrtHann,
    /// Periodic Hann on analysis, rectangular synthesis.
    Hann,
    Rectangular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub fft_len: usize,
    pub window: WindowKind,
    pub center: bool,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            window_len: 510,
            hop: 128,
            fft_len: 510,
            window: WindowKind::SqrtHann,
            center: true,
        }
    }
}

impl StftConfig {
    /// Frame size `n` with `fft_len = n` and hop `n / 4`, as used by the Mel loss.
    pub fn for_frame_size(frame_size: usize) -> Self {
        Self {
            window_len: frame_size,
            hop: (frame_size / 4).max(1),
            fft_len: frame_size,
            window: WindowKind::SqrtHann,
            center: true,
        }
    }

    pub fn n_freq(&self) -> usize {
        self.fft_len / 2 + 1
    }

    fn pad(&self) -> usize {
        if self.center {
            self.fft_len / 2
        } else {
            0
        }
    }

    pub fn n_frames(&self, signal_len: usize) -> usize {
        let padded = signal_len + 2 * self.pad();
        if padded >= self.fft_len {
            1 + (padded - self.fft_len) / self.hop
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Config(format!(
                "need 0 < hop <= window_len, got hop {} window {}",
                self.hop, self.window_len
            )));
        }
        if self.fft_len < self.window_len {
            return Err(Error::Config(format!(
                "fft_len {} shorter than window {}",
                self.fft_len, self.window_len
            )));
        }
        let (wa, ws) = self.windows();
        // Steady-state envelope over one hop period must be bounded away from zero.
        let min_env = (0..self.hop)
            .map(|r| {
                (r..self.fft_len)
                    .step_by(self.hop)
                    .map(|m| wa[m] * ws[m])
                    .sum::<f64>()
            })
            .fold(f64::INFINITY, f64::min);
        if !(min_env > ENVELOPE_FLOOR) {
            return Err(Error::Config(format!(
                "window/hop pair is not invertible (min overlap envelope {min_env:e})"
            )));
        }
        Ok(())
    }

    /// Analysis and synthesis windows, zero-padded and centred to `fft_len`.
    pub fn windows(&self) -> (Vec<f64>, Vec<f64>) {
        let l = self.window_len;
        let hann = |n: usize| 0.5 - 0.5 * (2.0 * PI * n as f64 / l as f64).cos();
        let (a, s): (Vec<f64>, Vec<f64>) = (0..l)
            .map(|n| match self.window {
                WindowKind::SqrtHann => {
                    let w = hann(n).max(0.0).sqrt();
                    (w, w)
                }
                WindowKind::Hann => (hann(n), 1.0),
                WindowKind::Rectangular => (1.0, 1.0),
            })
            .unzip();
        let offset = (self.fft_len - l) / 2;
        let place = |w: Vec<f64>| {
            let mut out = vec![0.0; self.fft_len];
            out[offset..offset + l].copy_from_slice(&w);
            out
        };
        (place(a), place(s))
    }
}

/// One-sided complex spectrogram, `n_freq × n_frames`, frequency-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub values: Vec<Complex64>,
    pub n_freq: usize,
    pub n_frames: usize,
    pub config: StftConfig,
}

impl ComplexSpectrogram {
    pub fn zeros(n_freq: usize, n_frames: usize, config: StftConfig) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); n_freq * n_frames],
            n_freq,
            n_frames,
            config,
        }
    }

    #[inline]
    pub fn at(&self, f: usize, k: usize) -> Complex64 {
        self.values[f * self.n_frames + k]
    }

    #[inline]
    pub fn at_mut(&mut self, f: usize, k: usize) -> &mut Complex64 {
        &mut self.values[f * self.n_frames + k]
    }

    /// Magnitudes, same layout as `values`.
    pub fn magnitudes(&self) -> Vec<f64> {
        self.values.iter().map(|c| c.norm()).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

/// Planned transform pair for one [`StftConfig`]. Cheap to share across threads.
pub struct Stft {
    config: StftConfig,
    analysis: Vec<f64>,
    synthesis: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Stft {
    pub fn new(config: StftConfig) -> Result<Self> {
        config.validate()?;
        let (analysis, synthesis) = config.windows();
        let mut planner = FftPlanner::new();
        Ok(Self {
            config,
            analysis,
            synthesis,
            forward: planner.plan_fft_forward(config.fft_len),
            inverse: planner.plan_fft_inverse(config.fft_len),
        })
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn forward(&self, samples: &[f64]) -> Result<ComplexSpectrogram> {
        if samples.is_empty() {
            return Err(Error::Shape("stft of an empty signal".into()));
        }
        let cfg = &self.config;
        let n = cfg.fft_len;
        let pad = cfg.pad();
        let n_freq = cfg.n_freq();
        let n_frames = cfg.n_frames(samples.len());
        let mut out = ComplexSpectrogram::zeros(n_freq, n_frames, *cfg);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..n_frames {
            for (m, slot) in buf.iter_mut().enumerate() {
                let idx = (k * cfg.hop + m) as isize - pad as isize;
                let x = if idx >= 0 && (idx as usize) < samples.len() {
                    samples[idx as usize]
                } else {
                    0.0
                };
                *slot = Complex64::new(x * self.analysis[m], 0.0);
            }
            self.forward.process(&mut buf);
            for f in 0..n_freq {
                *out.at_mut(f, k) = buf[f];
            }
        }
        Ok(out)
    }

    fn check_spec(&self, n_freq: usize) -> Result<()> {
        if n_freq != self.config.n_freq() {
            return Err(Error::Shape(format!(
                "spectrogram has {n_freq} bins, config expects {}",
                self.config.n_freq()
            )));
        }
        Ok(())
    }

    fn envelope(&self, n_frames: usize) -> Vec<f64> {
        let cfg = &self.config;
        let mut env = vec![0.0; (n_frames - 1) * cfg.hop + cfg.fft_len];
        for k in 0..n_frames {
            for m in 0..cfg.fft_len {
                env[k * cfg.hop + m] += self.analysis[m] * self.synthesis[m];
            }
        }
        env
    }

    /// Hermitian-extends one frame into `buf` and applies the unnormalised inverse FFT.
    fn frame_to_time(&self, spec: &ComplexSpectrogram, k: usize, buf: &mut [Complex64]) {
        let n = self.config.fft_len;
        let n_freq = spec.n_freq;
        for f in 0..n {
            buf[f] = if f < n_freq {
                spec.at(f, k)
            } else {
                spec.at(n - f, k).conj()
            };
        }
        self.inverse.process(buf);
    }

    /// Inverse transform, truncated or zero-padded to `out_len` samples.
    pub fn inverse(&self, spec: &ComplexSpectrogram, out_len: usize) -> Result<Vec<f64>> {
        self.check_spec(spec.n_freq)?;
        if spec.n_frames == 0 {
            return Err(Error::Shape("spectrogram has no frames".into()));
        }
        let cfg = &self.config;
        let n = cfg.fft_len;
        let scale = 1.0 / n as f64;
        let env = self.envelope(spec.n_frames);
        let mut ola = vec![0.0; env.len()];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..spec.n_frames {
            self.frame_to_time(spec, k, &mut buf);
            for m in 0..n {
                ola[k * cfg.hop + m] += buf[m].re * scale * self.synthesis[m];
            }
        }
        let pad = cfg.pad();
        Ok((0..out_len)
            .map(|i| {
                let j = i + pad;
                if j < ola.len() && env[j] > ENVELOPE_FLOOR {
                    ola[j] / env[j]
                } else {
                    0.0
                }
            })
            .collect())
    }

    /// Adjoint of [`Stft::forward`]: maps a gradient on the spectrogram
    /// (`∂L/∂Re + i·∂L/∂Im` per bin) to a gradient on the input samples.
    pub fn forward_adjoint(
        &self,
        grad: &ComplexSpectrogram,
        signal_len: usize,
    ) -> Result<Vec<f64>> {
        self.check_spec(grad.n_freq)?;
        let cfg = &self.config;
        let n = cfg.fft_len;
        let pad = cfg.pad();
        let mut out = vec![0.0; signal_len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for k in 0..grad.n_frames {
            buf.fill(Complex64::new(0.0, 0.0));
            for f in 0..grad.n_freq {
                buf[f] = grad.at(f, k);
            }
            self.inverse.process(&mut buf);
            for m in 0..n {
                let idx = (k * cfg.hop + m) as isize - pad as isize;
                if idx >= 0 && (idx as usize) < signal_len {
                    out[idx as usize] += self.analysis[m] * buf[m].re;
                }
            }
        }
        Ok(out)
    }

    /// Adjoint of [`Stft::inverse`] for a spectrogram with `n_frames` frames.
    pub fn inverse_adjoint(&self, grad: &[f64], n_frames: usize) -> Result<ComplexSpectrogram> {
        if n_frames == 0 {
            return Err(Error::Shape("spectrogram has no frames".into()));
        }
        let cfg = &self.config;
        let n = cfg.fft_len;
        let n_freq = cfg.n_freq();
        let pad = cfg.pad();
        let env = self.envelope(n_frames);
        let mut v = vec![0.0; env.len()];
        for (i, &g) in grad.iter().enumerate() {
            let j = i + pad;
            if j < env.len() && env[j] > ENVELOPE_FLOOR {
                v[j] = g / env[j];
            }
        }
        let mut out = ComplexSpectrogram::zeros(n_freq, n_frames, *cfg);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        let scale = 1.0 / n as f64;
        for k in 0..n_frames {
            for m in 0..n {
                buf[m] = Complex64::new(v[k * cfg.hop + m] * self.synthesis[m] * scale, 0.0);
            }
            self.forward.process(&mut buf);
            for f in 0..n_freq {
                let edge = f == 0 || (n.is_multiple_of(2) && f == n / 2);
                *out.at_mut(f, k) = if edge {
                    Complex64::new(buf[f].re, 0.0)
                } else {
                    buf[f] * 2.0
                };
            }
        }
        Ok(out)
    }
}

pub fn stft(samples: &[f64], config: StftConfig) -> Result<ComplexSpectrogram> {
    Stft::new(config)?.forward(samples)
}

pub fn istft(spec: &ComplexSpectrogram, config: StftConfig, out_len: usize) -> Result<Vec<f64>> {
    Stft::new(config)?.inverse(spec, out_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngSeed;

    fn random_signal(len: usize, seed: u64) -> Vec<f64> {
        let mut r = RngSeed::new(seed).rng();
        (0..len).map(|_| r.uniform(-1.0, 1.0)).collect()
    }

    fn rel_l2(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
        let den: f64 = b.iter().map(|y| y * y).sum();
        (num / den).sqrt()
    }

    #[test]
    fn default_shape_contract() {
        let cfg = StftConfig::default();
        assert_eq!(cfg.n_freq(), 256);
        let spec = stft(&vec![0.0; 16000], cfg).unwrap();
        assert_eq!(spec.n_frames, 126);
        assert!(spec.values.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let cfg = StftConfig::default();
        let b = 37;
        let freq = b as f64 / cfg.fft_len as f64;
        let x: Vec<f64> = (0..8000)
            .map(|n| (2.0 * PI * freq * n as f64).cos())
            .collect();
        let spec = stft(&x, cfg).unwrap();
        for k in 3..spec.n_frames - 3 {
            let argmax = (0..spec.n_freq)
                .max_by(|&i, &j| spec.at(i, k).norm().total_cmp(&spec.at(j, k).norm()))
                .unwrap();
            assert_eq!(argmax, b, "frame {k}");
        }
    }

    #[test]
    fn frame_matches_direct_dft() {
        let cfg = StftConfig::default();
        let x = random_signal(3000, 5);
        let spec = stft(&x, cfg).unwrap();
        let (wa, _) = cfg.windows();
        let k = 7;
        let start = k * cfg.hop - cfg.fft_len / 2;
        for f in [0usize, 1, 100, 255] {
            let mut acc = Complex64::new(0.0, 0.0);
            for m in 0..cfg.fft_len {
                let th = -2.0 * PI * (f * m) as f64 / cfg.fft_len as f64;
                acc += Complex64::from_polar(x[start + m] * wa[m], th);
            }
            assert!((acc - spec.at(f, k)).norm() < 1e-9 * (1.0 + acc.norm()));
        }
    }

    #[test]
    fn round_trip_one_second() {
        let cfg = StftConfig::default();
        let x = random_signal(16000, 1);
        let y = istft(&stft(&x, cfg).unwrap(), cfg, x.len()).unwrap();
        assert!(rel_l2(&y, &x) < 1e-6);
    }

    #[test]
    fn inverse_of_zero_is_zero() {
        let cfg = StftConfig::default();
        let spec = ComplexSpectrogram::zeros(256, 10, cfg);
        assert!(istft(&spec, cfg, 1000).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn segment_length_from_frames() {
        let cfg = StftConfig::default();
        let spec = ComplexSpectrogram::zeros(256, 256, cfg);
        let y = istft(&spec, cfg, 256 * cfg.hop).unwrap();
        assert_eq!(y.len(), 32768);
    }

    #[test]
    fn rejects_bad_configs() {
        let cfg = StftConfig {
            hop: 0,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = StftConfig {
            fft_len: 256,
            ..StftConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = StftConfig::default();
        let spec = ComplexSpectrogram::zeros(100, 3, cfg);
        assert!(istft(&spec, cfg, 10).is_err());
    }

    #[test]
    fn adjoints_pass_dot_product_test() {
        let cfg = StftConfig::for_frame_size(64);
        let plan = Stft::new(cfg).unwrap();
        let len = 700;
        let x = random_signal(len, 11);
        let fx = plan.forward(&x).unwrap();
        let mut r = RngSeed::new(12).rng();
        let mut g = fx.clone();
        for v in g.values.iter_mut() {
            *v = Complex64::new(r.normal(), r.normal());
        }
        let lhs: f64 = fx
            .values
            .iter()
            .zip(&g.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        let at_g = plan.forward_adjoint(&g, len).unwrap();
        let rhs: f64 = x.iter().zip(&at_g).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} {rhs}");

        // inverse: <istft(X), w> == <X, istft^T(w)>
        let w = random_signal(len, 13);
        let ix = plan.inverse(&g, len).unwrap();
        let lhs: f64 = ix.iter().zip(&w).map(|(a, b)| a * b).sum();
        let adj = plan.inverse_adjoint(&w, g.n_frames).unwrap();
        let rhs: f64 = g
            .values
            .iter()
            .zip(&adj.values)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0), "{lhs} {rhs}");
    }
}
