//! Slaney-style Mel filterbanks (linear below 1 kHz, logarithmic above).

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const F_SP: f64 = 200.0 / 3.0;
const MIN_LOG_HZ: f64 = 1000.0;
const MIN_LOG_MEL: f64 = MIN_LOG_HZ / F_SP;

fn log_step() -> f64 {
    6.4f64.ln() / 27.0
}

pub fn hz_to_mel(hz: f64) -> f64 {
    if hz < MIN_LOG_HZ {
        hz / F_SP
    } else {
        MIN_LOG_MEL + (hz / MIN_LOG_HZ).ln() / log_step()
    }
}

pub fn mel_to_hz(mel: f64) -> f64 {
    if mel < MIN_LOG_MEL {
        mel * F_SP
    } else {
        MIN_LOG_HZ * ((mel - MIN_LOG_MEL) * log_step()).exp()
    }
}

/// Nonnegative `n_freq × n_mels` weights; columns are unit-peak triangles.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<f64>,
    n_freq: usize,
    n_mels: usize,
    pub fs: f64,
    pub f_max: f64,
}

impl MelFilterbank {
    pub fn n_freq(&self) -> usize {
        self.n_freq
    }

    pub fn n_mels(&self) -> usize {
        self.n_mels
    }

    #[inline]
    pub fn weight(&self, bin: usize, band: usize) -> f64 {
        self.weights[bin * self.n_mels + band]
    }

    pub fn column(&self, band: usize) -> Vec<f64> {
        (0..self.n_freq).map(|b| self.weight(b, band)).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin");
        for m in 0..self.n_mels {
            let _ = write!(s, ",mel_{m}");
        }
        s.push('\n');
        for b in 0..self.n_freq {
            let _ = write!(s, "{b}");
            for m in 0..self.n_mels {
                let _ = write!(s, ",{}", self.weight(b, m));
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

pub fn build_mel_filterbank(
    n_freq: usize,
    n_mels: usize,
    fs: f64,
    f_max: f64,
) -> Result<MelFilterbank> {
    if n_freq < 2 || n_mels == 0 || n_mels >= n_freq {
        return Err(Error::Config(format!(
            "need 0 < n_mels < n_freq, got {n_mels} mels for {n_freq} bins"
        )));
    }
    if !(fs > 0.0) || !(f_max > 0.0) || f_max > fs / 2.0 + 1e-9 {
        return Err(Error::Config(format!(
            "f_max {f_max} must lie in (0, fs/2] for fs {fs}"
        )));
    }
    let n_fft = 2 * (n_freq - 1);
    let bin_hz = fs / n_fft as f64;
    let mel_max = hz_to_mel(f_max);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_mels + 1) as f64))
        .collect();

    let nearest: Vec<usize> = edges
        .iter()
        .map(|hz| (hz / bin_hz).round() as usize)
        .collect();
    if let Some(w) = nearest.windows(2).position(|w| w[0] == w[1]) {
        return Err(Error::DegenerateFilterbank(format!(
            "mel points {w} and {} both land on bin {} ({n_mels} bands over {n_freq} bins)",
            w + 1,
            nearest[w]
        )));
    }

    let mut weights = vec![0.0; n_freq * n_mels];
    for m in 0..n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let mut peak = 0.0f64;
        for b in 0..n_freq {
            let hz = b as f64 * bin_hz;
            let w = ((hz - lo) / (c - lo)).min((hi - hz) / (hi - c)).max(0.0);
            weights[b * n_mels + m] = w;
            peak = peak.max(w);
        }
        if peak <= 0.0 {
            return Err(Error::DegenerateFilterbank(format!(
                "band {m} covers no frequency bin"
            )));
        }
        for b in 0..n_freq {
            weights[b * n_mels + m] /= peak;
        }
    }
    Ok(MelFilterbank {
        weights,
        n_freq,
        n_mels,
        fs,
        f_max,
    })
}

/// `mag` is `F × K` (frequency-major); result is `n_mels × K`.
pub fn apply_mel(mag: &[f64], n_frames: usize, fb: &MelFilterbank) -> Result<Vec<f64>> {
    if mag.len() != fb.n_freq * n_frames {
        return Err(Error::Shape(format!(
            "magnitude has {} values, filterbank expects {} x {n_frames}",
            mag.len(),
            fb.n_freq
        )));
    }
    let mut out = vec![0.0; fb.n_mels * n_frames];
    for b in 0..fb.n_freq {
        let row = &mag[b * n_frames..(b + 1) * n_frames];
        for m in 0..fb.n_mels {
            let w = fb.weight(b, m);
            if w == 0.0 {
                continue;
            }
            let dst = &mut out[m * n_frames..(m + 1) * n_frames];
            for (d, &v) in dst.iter_mut().zip(row) {
                *d += w * v;
            }
        }
    }
    Ok(out)
}

/// Adjoint of [`apply_mel`]: `n_mels × K` gradient to `F × K`.
pub fn apply_mel_adjoint(grad: &[f64], n_frames: usize, fb: &MelFilterbank) -> Vec<f64> {
    let mut out = vec![0.0; fb.n_freq * n_frames];
    for b in 0..fb.n_freq {
        for m in 0..fb.n_mels {
            let w = fb.weight(b, m);
            if w == 0.0 {
                continue;
            }
            for k in 0..n_frames {
                out[b * n_frames + k] += w * grad[m * n_frames + k];
            }
        }
    }
    out
}
