//! Deterministic paired (clean, noisy) test material.
//!
//! Clean signals are a few harmonics of a random fundamental under a slow
//! amplitude envelope; noise is white or pink and is scaled to hit a drawn
//! per-utterance SNR.

use std::f64::consts::PI;
use std::path::Path;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::dsp::{save_wav, WavEncoding, Waveform};
use crate::error::{Error, Result};
use crate::par::{self, Exec};
use crate::rng::{RngSeed, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseKind {
    #[default]
    White,
    /// −3 dB per octave.
    Pink,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" => Ok(NoiseKind::White),
            "pink" => Ok(NoiseKind::Pink),
            other => Err(Error::Config(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub n_utts: usize,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub noise: NoiseKind,
    /// Inclusive SNR range in dB; `f64::INFINITY` for both ends means no noise.
    pub snr_db: (f64, f64),
    pub f0_hz: (f64, f64),
    pub harmonics: (usize, usize),
    pub seed: RngSeed,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_utts: 64,
            duration_s: 2.0,
            sample_rate: 16000,
            noise: NoiseKind::White,
            snr_db: (0.0, 10.0),
            f0_hz: (100.0, 300.0),
            harmonics: (2, 5),
            seed: RngSeed::new(0),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_utts == 0 || !(self.duration_s > 0.0) || self.sample_rate == 0 {
            return Err(Error::Config(
                "synthetic set needs utterances, duration and rate".into(),
            ));
        }
        let (lo, hi) = self.snr_db;
        if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::NEG_INFINITY {
            return Err(Error::Config(format!("bad snr range [{lo}, {hi}]")));
        }
        let (h0, h1) = self.harmonics;
        if h0 == 0 || h0 > h1 {
            return Err(Error::Config(format!("bad harmonic range [{h0}, {h1}]")));
        }
        let top = self.f0_hz.1 * h1 as f64;
        if !(self.f0_hz.0 > 0.0 && self.f0_hz.0 <= self.f0_hz.1)
            || top >= self.sample_rate as f64 / 2.0
        {
            return Err(Error::Config(format!(
                "harmonics up to {top} Hz do not fit below Nyquist"
            )));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPair {
    pub name: String,
    pub clean: Waveform,
    pub noisy: Waveform,
    /// Exactly `noisy − clean`.
    pub noise: Vec<f64>,
    pub snr_db: f64,
}

fn clean_signal(spec: &SynthSpec, rng: &mut SeededRng) -> Vec<f64> {
    let n = spec.n_samples();
    let fs = spec.sample_rate as f64;
    let f0 = rng.uniform(spec.f0_hz.0, spec.f0_hz.1);
    let n_harm = spec.harmonics.0 + rng.below(spec.harmonics.1 - spec.harmonics.0 + 1);
    let partials: Vec<(f64, f64, f64)> = (1..=n_harm)
        .map(|h| {
            (
                h as f64 * f0,
                rng.uniform(0.3, 1.0) / h as f64,
                rng.uniform(0.0, 2.0 * PI),
            )
        })
        .collect();
    let am_rate = rng.uniform(2.0, 6.0);
    let am_depth = rng.uniform(0.3, 0.9);
    let am_phase = rng.uniform(0.0, 2.0 * PI);
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let env = 1.0 - am_depth * 0.5 * (1.0 + (2.0 * PI * am_rate * t + am_phase).sin());
            env * partials
                .iter()
                .map(|&(f, a, p)| a * (2.0 * PI * f * t + p).sin())
                .sum::<f64>()
        })
        .collect();
    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        for v in &mut x {
            *v *= 0.5 / peak;
        }
    }
    x
}

fn noise_signal(kind: NoiseKind, n: usize, rng: &mut SeededRng) -> Vec<f64> {
    let white: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    match kind {
        NoiseKind::White => white,
        NoiseKind::Pink => {
            let mut buf: Vec<Complex64> = white.iter().map(|&v| Complex64::new(v, 0.0)).collect();
            let mut planner = FftPlanner::new();
            planner.plan_fft_forward(n).process(&mut buf);
            buf[0] = Complex64::new(0.0, 0.0);
            for (k, v) in buf.iter_mut().enumerate().skip(1) {
                let f = k.min(n - k) as f64;
                *v /= f.sqrt();
            }
            planner.plan_fft_inverse(n).process(&mut buf);
            buf.iter().map(|c| c.re / n as f64).collect()
        }
    }
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn make_pair(spec: &SynthSpec, index: usize) -> Result<SynthPair> {
    let mut rng = spec.seed.derive(index as u64).rng();
    let clean = clean_signal(spec, &mut rng);
    let (lo, hi) = spec.snr_db;
    let snr_db = if lo == hi { lo } else { rng.uniform(lo, hi) };
    let raw = noise_signal(spec.noise, clean.len(), &mut rng);
    let gain = if snr_db == f64::INFINITY {
        0.0
    } else {
        (energy(&clean) / (energy(&raw) * 10f64.powf(snr_db / 10.0))).sqrt()
    };
    let noisy: Vec<f64> = clean.iter().zip(&raw).map(|(c, n)| c + gain * n).collect();
    let noise = noisy.iter().zip(&clean).map(|(y, c)| y - c).collect();
    Ok(SynthPair {
        name: format!("utt{index:04}"),
        clean: Waveform::new(clean, spec.sample_rate)?,
        noisy: Waveform::new(noisy, spec.sample_rate)?,
        noise,
        snr_db,
    })
}

/// Utterance `i` depends only on `(spec, i)`, so results are identical for
/// every executor.
pub fn generate(spec: &SynthSpec, exec: Exec) -> Result<Vec<SynthPair>> {
    spec.validate()?;
    par::try_map_range(exec, spec.n_utts, |i| make_pair(spec, i))
}

/// Measured `10·log10(‖clean‖² / ‖noisy − clean‖²)`.
pub fn measured_snr_db(pair: &SynthPair) -> f64 {
    10.0 * (energy(&pair.clean.samples) / energy(&pair.noise)).log10()
}

/// Writes `dir/clean/<name>.wav` and `dir/noisy/<name>.wav` as 32-bit float.
pub fn write_pairs(pairs: &[SynthPair], dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    for sub in ["clean", "noisy"] {
        let d = dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    for p in pairs {
        save_wav(
            &p.clean,
            dir.join("clean").join(format!("{}.wav", p.name)),
            WavEncoding::Float32,
        )?;
        save_wav(
            &p.noisy,
            dir.join("noisy").join(format!("{}.wav", p.name)),
            WavEncoding::Float32,
        )?;
    }
    Ok(())
}
