//! RIFF/WAVE reading and writing (16-bit PCM and 32-bit float only).

use std::path::Path;

use crate::error::{Error, Result};

/// Mono time-domain signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("waveform sample {i}"),
            });
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WavEncoding {
    #[default]
    Pcm16,
    Float32,
}

/// How multichannel files are folded to mono.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Downmix {
    #[default]
    FirstChannel,
    Average,
}

const PCM16_SCALE: f64 = 32767.0;

pub fn load_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    load_wav_with(path, Downmix::FirstChannel)
}

pub fn load_wav_with(path: impl AsRef<Path>, downmix: Downmix) -> Result<Waveform> {
    let path = path.as_ref();
    let malformed = |reason: String| Error::MalformedWav {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => malformed(other.to_string()),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    if channels == 0 {
        return Err(malformed("zero channels".into()));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => reader
            .samples::<i16>()
            .map(|s| s.map(|v| v as f64 / PCM16_SCALE))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| malformed(e.to_string()))?,
        (hound::SampleFormat::Float, 32) => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| malformed(e.to_string()))?,
        (fmt, bits) => {
            return Err(Error::UnsupportedEncoding(format!(
                "{bits}-bit {fmt:?} in {}",
                path.display()
            )))
        }
    };
    if interleaved.is_empty() {
        return Err(malformed("no samples".into()));
    }
    let samples: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| match downmix {
            Downmix::FirstChannel => frame[0],
            Downmix::Average => frame.iter().sum::<f64>() / frame.len() as f64,
        })
        .collect();
    Waveform::new(samples, spec.sample_rate)
}

/// Writes a mono file. Samples outside `[-1, 1]` are clipped; the number of
/// clipped samples is logged and returned.
pub fn save_wav(wave: &Waveform, path: impl AsRef<Path>, encoding: WavEncoding) -> Result<usize> {
    let path = path.as_ref();
    if let Some(i) = wave.samples.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: format!("sample {i} written to {}", path.display()),
        });
    }
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: wave.sample_rate,
        bits_per_sample: match encoding {
            WavEncoding::Pcm16 => 16,
            WavEncoding::Float32 => 32,
        },
        sample_format: match encoding {
            WavEncoding::Pcm16 => hound::SampleFormat::Int,
            WavEncoding::Float32 => hound::SampleFormat::Float,
        },
    };
    let to_err = |e: hound::Error| match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::io(path, std::io::Error::other(other.to_string())),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(to_err)?;
    let mut clipped = 0usize;
    for &v in &wave.samples {
        let c = if v.abs() > 1.0 {
            clipped += 1;
            v.signum()
        } else {
            v
        };
        match encoding {
            WavEncoding::Pcm16 => writer
                .write_sample((c * PCM16_SCALE).round() as i16)
                .map_err(to_err)?,
            WavEncoding::Float32 => writer.write_sample(c as f32).map_err(to_err)?,
        }
    }
    writer.finalize().map_err(to_err)?;
    if clipped > 0 {
        log::warn!("{}: clipped {clipped} samples to [-1, 1]", path.display());
    }
    Ok(clipped)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn one_second_header_arithmetic() {
        let dir = tmp();
        let p = dir.path().join("a.wav");
        let w = Waveform::new(vec![0.0; 16000], 16000).unwrap();
        save_wav(&w, &p, WavEncoding::Pcm16).unwrap();
        let r = load_wav(&p).unwrap();
        assert_eq!(r.len(), 16000);
        assert_eq!(r.sample_rate, 16000);
        assert!(r.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn sine_round_trip_within_quantisation() {
        let dir = tmp();
        let p = dir.path().join("sine.wav");
        let samples: Vec<f64> = (0..8000)
            .map(|n| 0.8 * (2.0 * std::f64::consts::PI * 440.0 * n as f64 / 16000.0).sin())
            .collect();
        let w = Waveform::new(samples.clone(), 16000).unwrap();
        save_wav(&w, &p, WavEncoding::Pcm16).unwrap();
        let r = load_wav(&p).unwrap();
        let max_err = samples
            .iter()
            .zip(&r.samples)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(max_err < 2f64.powi(-15) + 1e-12, "{max_err}");
    }

    #[test]
    fn clipping_contract() {
        let dir = tmp();
        let p = dir.path().join("clip.wav");
        let w = Waveform::new(vec![1.5, -2.0, 0.25], 8000).unwrap();
        let clipped = save_wav(&w, &p, WavEncoding::Pcm16).unwrap();
        assert_eq!(clipped, 2);
        let r = load_wav(&p).unwrap();
        assert_eq!(r.samples[0], 1.0);
        assert_eq!(r.samples[1], -1.0);
    }

    #[test]
    fn float32_round_trip() {
        let dir = tmp();
        let p = dir.path().join("f.wav");
        let w = Waveform::new(vec![0.1, -0.3, 0.123456789], 22050).unwrap();
        save_wav(&w, &p, WavEncoding::Float32).unwrap();
        let r = load_wav(&p).unwrap();
        for (a, b) in w.samples.iter().zip(&r.samples) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn multichannel_downmix() {
        let dir = tmp();
        let p = dir.path().join("st.wav");
        let spec = hound::WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 32,
            sample_format: hound::SampleFormat::Float,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        for (l, r) in [(0.5f32, -0.5f32), (0.25, 0.75)] {
            wr.write_sample(l).unwrap();
            wr.write_sample(r).unwrap();
        }
        wr.finalize().unwrap();
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.5, 0.25]);
        assert_eq!(
            load_wav_with(&p, Downmix::Average).unwrap().samples,
            vec![0.0, 0.5]
        );
    }

    #[test]
    fn rejects_24_bit() {
        let dir = tmp();
        let p = dir.path().join("24.wav");
        let spec = hound::WavSpec {
            channels: 1,
            sample_rate: 16000,
            bits_per_sample: 24,
            sample_format: hound::SampleFormat::Int,
        };
        let mut wr = hound::WavWriter::create(&p, spec).unwrap();
        wr.write_sample(1000i32).unwrap();
        wr.finalize().unwrap();
        assert!(matches!(load_wav(&p), Err(Error::UnsupportedEncoding(_))));
    }

    #[test]
    fn rejects_garbage_and_empty() {
        let dir = tmp();
        let p = dir.path().join("bad.wav");
        std::fs::write(&p, b"not a riff file at all").unwrap();
        assert!(matches!(load_wav(&p), Err(Error::MalformedWav { .. })));

        let e = dir.path().join("empty.wav");
        let w = Waveform::new(vec![], 16000).unwrap();
        save_wav(&w, &e, WavEncoding::Pcm16).unwrap();
        assert!(matches!(load_wav(&e), Err(Error::MalformedWav { .. })));
    }
}
