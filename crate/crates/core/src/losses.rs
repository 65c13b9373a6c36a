//! Training objectives and evaluation metrics.
//!
//! Spectrogram-domain losses take `2 × F × K` compressed carriers; signal
//! losses take time-domain samples. [`SignalLoss`] chains decompression,
//! inverse STFT and the waveform losses, and returns the gradient with
//! respect to the compressed carrier so it can be attached to a tape.

use num_complex::Complex64;

use crate::dsp::{
    apply_mel, apply_mel_adjoint, build_mel_filterbank, from_channels, ComplexSpectrogram,
    CompressionParams, MelFilterbank, Stft, StftConfig, Waveform,
};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const SI_SDR_CAP_DB: f64 = 60.0;
pub const SI_SDR_EPS: f64 = 1e-8;

/// Frame sizes and Mel band counts of the default multi-scale loss.
pub const DEFAULT_MEL_SCALES: [(usize, usize); 7] = [
    (32, 5),
    (64, 10),
    (128, 20),
    (256, 40),
    (512, 80),
    (1024, 160),
    (2048, 210),
];

fn mse(a: &Tensor, b: &Tensor, what: &str) -> Result<f64> {
    a.ensure_same_shape(b, what)?;
    let s: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.len().max(1) as f64)
}

/// Mean squared error between a clean-target estimate and the clean target.
pub fn tm_loss(x0_hat: &Tensor, x0: &Tensor) -> Result<f64> {
    mse(x0_hat, x0, "tm_loss")
}

/// Mean squared error between an estimated and a reference vector field.
pub fn fm_loss(u_hat: &Tensor, u_target: &Tensor) -> Result<f64> {
    mse(u_hat, u_target, "fm_loss")
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelLossConfig {
    /// `(frame_size, n_mels)`; hop is a quarter frame and `f_max` is Nyquist.
    pub scales: Vec<(usize, usize)>,
    pub sample_rate: u32,
}

impl Default for MelLossConfig {
    fn default() -> Self {
        Self {
            scales: DEFAULT_MEL_SCALES.to_vec(),
            sample_rate: 16000,
        }
    }
}

impl MelLossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("mel loss needs at least one scale".into()));
        }
        for &(frame, mels) in &self.scales {
            if frame < 4 || mels == 0 || mels > frame / 2 {
                return Err(Error::Config(format!(
                    "mel scale ({frame}, {mels}) needs 0 < n_mels < frame/2 + 1"
                )));
            }
        }
        Ok(())
    }
}

struct MelScale {
    stft: Stft,
    filterbank: MelFilterbank,
}

/// Prepared multi-scale Mel loss (transforms and filterbanks built once).
pub struct MelLoss {
    scales: Vec<MelScale>,
}

impl MelLoss {
    pub fn new(cfg: &MelLossConfig) -> Result<Self> {
        cfg.validate()?;
        let fs = cfg.sample_rate as f64;
        let scales = cfg
            .scales
            .iter()
            .map(|&(frame, mels)| {
                let scfg = StftConfig::for_frame_size(frame);
                Ok(MelScale {
                    stft: Stft::new(scfg)?,
                    filterbank: build_mel_filterbank(scfg.n_freq(), mels, fs, fs / 2.0)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { scales })
    }

    fn mel_of(scale: &MelScale, samples: &[f64]) -> Result<(Vec<f64>, usize, ComplexSpectrogram)> {
        let spec = scale.stft.forward(samples)?;
        let mel = apply_mel(&spec.magnitudes(), spec.n_frames, &scale.filterbank)?;
        Ok((mel, spec.n_frames, spec))
    }

    pub fn loss(&self, hat: &[f64], reference: &[f64]) -> Result<f64> {
        Ok(self.eval(hat, reference, false)?.0)
    }

    /// Loss and its gradient with respect to `hat`.
    pub fn loss_and_grad(&self, hat: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (l, g) = self.eval(hat, reference, true)?;
        Ok((l, g.expect("gradient requested")))
    }

    fn eval(
        &self,
        hat: &[f64],
        reference: &[f64],
        want_grad: bool,
    ) -> Result<(f64, Option<Vec<f64>>)> {
        if hat.len() != reference.len() {
            return Err(Error::Shape(format!(
                "mel loss on signals of length {} and {}",
                hat.len(),
                reference.len()
            )));
        }
        let mut total = 0.0;
        let mut grad = want_grad.then(|| vec![0.0; hat.len()]);
        for scale in &self.scales {
            let (mh, k, spec) = Self::mel_of(scale, hat)?;
            let (mr, _, _) = Self::mel_of(scale, reference)?;
            let norm = (k * scale.filterbank.n_mels()) as f64;
            total += mh.iter().zip(&mr).map(|(a, b)| (a - b).abs()).sum::<f64>() / norm;
            if let Some(g) = grad.as_mut() {
                let dmel: Vec<f64> = mh
                    .iter()
                    .zip(&mr)
                    .map(|(a, b)| match a.partial_cmp(b) {
                        Some(std::cmp::Ordering::Greater) => 1.0 / norm,
                        Some(std::cmp::Ordering::Less) => -1.0 / norm,
                        _ => 0.0,
                    })
                    .collect();
                let dmag = apply_mel_adjoint(&dmel, k, &scale.filterbank);
                let mut dspec = spec.clone();
                for (v, d) in dspec.values.iter_mut().zip(&dmag) {
                    let r = v.norm();
                    *v = if r > 0.0 {
                        *v * (d / r)
                    } else {
                        Complex64::new(0.0, 0.0)
                    };
                }
                let gw = scale.stft.forward_adjoint(&dspec, hat.len())?;
                for (a, b) in g.iter_mut().zip(gw) {
                    *a += b;
                }
            }
        }
        Ok((total, grad))
    }
}

fn check_pair(est: &Waveform, reference: &Waveform) -> Result<()> {
    if est.sample_rate != reference.sample_rate {
        return Err(Error::Shape(format!(
            "sample rates differ: {} vs {}",
            est.sample_rate, reference.sample_rate
        )));
    }
    Ok(())
}

/// Sum over scales of the frame-and-band-normalised L1 distance between
/// Mel magnitude spectrograms.
pub fn multiscale_mel_loss(
    wav_hat: &Waveform,
    wav_ref: &Waveform,
    cfg: &MelLossConfig,
) -> Result<f64> {
    check_pair(wav_hat, wav_ref)?;
    MelLoss::new(cfg)?.loss(&wav_hat.samples, &wav_ref.samples)
}

struct SdrParts {
    db: f64,
    alpha: f64,
    ref_energy: f64,
    residual: Vec<f64>,
    target_energy: f64,
    residual_energy: f64,
}

fn sdr_parts(est: &[f64], reference: &[f64]) -> Result<SdrParts> {
    if est.len() != reference.len() {
        return Err(Error::Shape(format!(
            "si-sdr on signals of length {} and {}",
            est.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.iter().map(|v| v * v).sum();
    if ref_energy == 0.0 {
        return Err(Error::Domain("si-sdr reference is all zeros".into()));
    }
    let dot: f64 = est.iter().zip(reference).map(|(a, b)| a * b).sum();
    let alpha = dot / (ref_energy + SI_SDR_EPS);
    let residual: Vec<f64> = est
        .iter()
        .zip(reference)
        .map(|(e, r)| e - alpha * r)
        .collect();
    let target_energy = alpha * alpha * ref_energy;
    let residual_energy: f64 = residual.iter().map(|v| v * v).sum();
    // The guard scales with the target so the ratio stays scale-invariant.
    let denom = residual_energy + SI_SDR_EPS * target_energy;
    let db = if target_energy == 0.0 {
        -SI_SDR_CAP_DB
    } else {
        (10.0 * (target_energy / denom).log10()).clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB)
    };
    Ok(SdrParts {
        db,
        alpha,
        ref_energy,
        residual,
        target_energy,
        residual_energy,
    })
}

pub fn si_sdr_samples(est: &[f64], reference: &[f64]) -> Result<f64> {
    Ok(sdr_parts(est, reference)?.db)
}

/// SI-SDR in dB, clamped to `±`[`SI_SDR_CAP_DB`].
pub fn si_sdr(est: &Waveform, reference: &Waveform) -> Result<f64> {
    check_pair(est, reference)?;
    si_sdr_samples(&est.samples, &reference.samples)
}

pub fn sisdr_loss(est: &Waveform, reference: &Waveform) -> Result<f64> {
    Ok(-si_sdr(est, reference)?)
}

/// SI-SDR and its gradient with respect to `est`; the gradient is zero
/// wherever the clamp is active.
pub fn si_sdr_and_grad(est: &[f64], reference: &[f64]) -> Result<(f64, Vec<f64>)> {
    let p = sdr_parts(est, reference)?;
    if p.db.abs() >= SI_SDR_CAP_DB {
        return Ok((p.db, vec![0.0; est.len()]));
    }
    let c = 10.0 / std::f64::consts::LN_10;
    let r_denom = p.ref_energy + SI_SDR_EPS;
    let denom = p.residual_energy + SI_SDR_EPS * p.target_energy;
    let e_dot_r: f64 = p.residual.iter().zip(reference).map(|(e, r)| e * r).sum();
    let grad = reference
        .iter()
        .zip(&p.residual)
        .map(|(&r, &e)| {
            let d_target = 2.0 * p.alpha * p.ref_energy * r / r_denom;
            let d_resid = 2.0 * e - 2.0 * e_dot_r * r / r_denom;
            c * (d_target / p.target_energy - (d_resid + SI_SDR_EPS * d_target) / denom)
        })
        .collect();
    Ok((p.db, grad))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeWeights {
    pub lambda_mel: f64,
    pub lambda_sisnr: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        Self {
            lambda_mel: 0.1,
            lambda_sisnr: 0.01,
        }
    }
}

impl CompositeWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda_mel", self.lambda_mel),
            ("lambda_sisnr", self.lambda_sisnr),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} = {v} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    pub fn uses_signal(&self) -> bool {
        self.lambda_mel > 0.0 || self.lambda_sisnr > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub tm: f64,
    pub mel: f64,
    pub sisnr: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn combine(tm: f64, mel: f64, sisnr: f64, w: &CompositeWeights) -> Self {
        Self {
            tm,
            mel,
            sisnr,
            total: tm + w.lambda_mel * mel + w.lambda_sisnr * sisnr,
        }
    }
}

/// `L_tm + λ1·L_mel + λ2·L_sisnr`, with every term reported.
pub fn composite_loss(
    x0_hat_spec: &Tensor,
    x0_spec: &Tensor,
    wav_hat: &Waveform,
    wav_ref: &Waveform,
    w: &CompositeWeights,
    melcfg: &MelLossConfig,
) -> Result<LossBreakdown> {
    w.validate()?;
    let tm = tm_loss(x0_hat_spec, x0_spec)?;
    let mel = multiscale_mel_loss(wav_hat, wav_ref, melcfg)?;
    let sisnr = sisdr_loss(wav_hat, wav_ref)?;
    Ok(LossBreakdown::combine(tm, mel, sisnr, w))
}

/// Signal-level part of the composite loss evaluated from a compressed
/// spectrogram estimate.
pub struct SignalLoss {
    stft: Stft,
    compression: CompressionParams,
    mel: MelLoss,
    pub weights: CompositeWeights,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalLossValue {
    pub mel: f64,
    pub sisnr: f64,
    /// Gradient of `λ1·mel + λ2·sisnr` w.r.t. the compressed carrier.
    pub grad: Tensor,
}

impl SignalLoss {
    pub fn new(
        stft: StftConfig,
        compression: CompressionParams,
        mel: &MelLossConfig,
        weights: CompositeWeights,
    ) -> Result<Self> {
        weights.validate()?;
        compression.validate()?;
        Ok(Self {
            stft: Stft::new(stft)?,
            compression,
            mel: MelLoss::new(mel)?,
            weights,
        })
    }

    pub fn evaluate(&self, x0_hat: &Tensor, reference: &[f64]) -> Result<SignalLossValue> {
        let cfg = *self.stft.config();
        let carrier = from_channels(x0_hat, cfg)?;
        let mut spec = carrier.clone();
        for v in spec.values.iter_mut() {
            *v = self.compression.decompress_value(*v);
        }
        let wav = self.stft.inverse(&spec, reference.len())?;
        let (mel, gmel) = if self.weights.lambda_mel > 0.0 {
            self.mel.loss_and_grad(&wav, reference)?
        } else {
            (self.mel.loss(&wav, reference)?, vec![0.0; wav.len()])
        };
        let (sdr, gsdr) = si_sdr_and_grad(&wav, reference)?;
        let gwav: Vec<f64> = gmel
            .iter()
            .zip(&gsdr)
            .map(|(m, s)| self.weights.lambda_mel * m - self.weights.lambda_sisnr * s)
            .collect();
        let gspec = self.stft.inverse_adjoint(&gwav, carrier.n_frames)?;
        let plane = carrier.n_freq * carrier.n_frames;
        let mut grad = vec![0.0; 2 * plane];
        for (i, (c, g)) in carrier.values.iter().zip(&gspec.values).enumerate() {
            let v = self.compression.decompress_vjp(*c, *g);
            grad[i] = v.re;
            grad[plane + i] = v.im;
        }
        Ok(SignalLossValue {
            mel,
            sisnr: -sdr,
            grad: Tensor::new(x0_hat.shape(), grad)?,
        })
    }
}
