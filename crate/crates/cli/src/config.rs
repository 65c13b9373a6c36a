//! Flat `key = value` run configuration with `#` comments.
//!
//! Every key has a default listed in [`KEYS`]; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::Path;

use tmse_core::dsp::{CompressionParams, StftConfig, WindowKind};
use tmse_core::losses::{CompositeWeights, MelLossConfig};
use tmse_core::path::ProbabilityPath;
use tmse_core::predictor::{DbaLiteConfig, Objective, Optimizer, ToyPredictorConfig, TrainConfig};
use tmse_core::rng::RngSeed;
use tmse_core::sampler::SamplerConfig;
use tmse_core::schedules::{MeanSchedule, VarianceSchedule};
use tmse_core::synth::{NoiseKind, SynthSpec};
use tmse_core::{Error, Result};

/// `(key, default, description)`.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("seed", "0", "global random seed"),
    ("schedule.mean", "logistic", "linear | ouve | logistic"),
    ("schedule.k", "10", "logistic steepness"),
    ("schedule.gamma", "1.5", "ouve stiffness"),
    ("schedule.variance", "bridge", "bridge | linear | constant"),
    ("schedule.sigma", "0.5", "variance scale"),
    ("schedule.t_min", "0.03", "smallest training time"),
    ("schedule.t_max", "0.97", "largest training time"),
    ("sampler.steps", "4", "Euler steps"),
    ("sampler.t_start", "0.97", "sampler start time"),
    ("sampler.t_floor", "0.03", "sampler end time"),
    ("stft.window", "510", "window length"),
    ("stft.hop", "128", "hop length"),
    ("stft.fft", "510", "fft length"),
    ("compress.alpha", "0.5", "magnitude exponent"),
    ("compress.beta", "0.33", "magnitude scale"),
    ("loss.lambda_mel", "0.1", "multi-scale mel weight"),
    ("loss.lambda_sisnr", "0.01", "si-sdr weight"),
    (
        "loss.mel_scales",
        "32:5,64:10,128:20,256:40,512:80,1024:160,2048:210",
        "frame:bands list",
    ),
    (
        "audio.sample_rate",
        "16000",
        "sample rate of generated audio and mel loss",
    ),
    ("predictor.kind", "toy", "toy | dba"),
    ("predictor.embed_dim", "16", "timestep embedding width"),
    ("predictor.fourier_scale", "2", "fourier feature scale"),
    ("predictor.hidden", "4", "toy perceptron width"),
    ("dba.channels", "4", "backbone channels"),
    ("dba.squeezed", "8", "squeezed channels"),
    ("dba.tf_blocks", "1", "number of TF blocks"),
    ("dba.unet_depth", "1", "frequency down-sampling levels"),
    ("dba.freq_stride", "2", "frequency stride per level"),
    ("dba.alpha_t", "1", "T-block residual weight"),
    ("dba.beta_f", "1", "F-block residual weight"),
    ("train.epochs", "30", "training epochs"),
    ("train.batch", "8", "batch size"),
    ("train.optimizer", "adam", "sgd | adam"),
    ("train.lr", "0.01", "step size"),
    ("train.objective", "tm", "tm | fm"),
    ("synth.n_utts", "64", "synthetic utterances"),
    ("synth.duration", "2", "seconds per utterance"),
    ("synth.noise", "white", "white | pink"),
    ("synth.snr_min", "0", "lowest SNR in dB"),
    ("synth.snr_max", "10", "highest SNR in dB"),
    ("curves.x0", "0.2", "clean value for schedule curves"),
    ("curves.x1", "1.0", "noisy value for schedule curves"),
    ("curves.points", "200", "grid points"),
    ("curves.t_lo", "0.005", "first grid time"),
    ("curves.t_hi", "0.995", "last grid time"),
    (
        "curves.sigma",
        "0",
        "constant noise level added to the SNR denominator",
    ),
    (
        "perturb.noise",
        "false",
        "add the variance schedule to the perturb demo",
    ),
    ("variance.samples", "100000", "Monte-Carlo draws per time"),
    (
        "variance.grid",
        "0.05,0.1,0.15,0.2,0.25,0.3,0.35,0.4,0.65,0.8",
        "times for the variance study",
    ),
    ("variance.x0", "0.2", "clean value"),
    ("variance.x1", "1.0", "noisy value"),
    ("convergence.instances", "20", "random pairs"),
    ("convergence.freq", "64", "bins per instance"),
    ("convergence.frames", "64", "frames per instance"),
    ("convergence.steps", "4,8,16,32,64", "step counts"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: KEYS
                .iter()
                .map(|(k, v, _)| (k.to_string(), v.to_string()))
                .collect(),
        }
    }
}

fn bad(key: &str, value: &str, want: &str) -> Error {
    Error::Config(format!("{key} = {value:?} is not {want}"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", no + 1)))?;
            cfg.set(k.trim(), v.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.to_string();
                Ok(())
            }
            None => Err(Error::Config(format!("unknown key {key:?}"))),
        }
    }

    pub fn get(&self, key: &str) -> &str {
        self.values
            .get(key)
            .map(String::as_str)
            .expect("key listed in KEYS")
    }

    pub fn f64(&self, key: &str) -> Result<f64> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(key, v, "a number"))
    }

    pub fn usize(&self, key: &str) -> Result<usize> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(key, v, "a nonnegative integer"))
    }

    pub fn bool(&self, key: &str) -> Result<bool> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(key, v, "true or false"))
    }

    pub fn list_f64(&self, key: &str) -> Result<Vec<f64>> {
        let v = self.get(key);
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| bad(key, v, "a comma-separated number list"))
            })
            .collect()
    }

    pub fn list_usize(&self, key: &str) -> Result<Vec<usize>> {
        let v = self.get(key);
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| bad(key, v, "a comma-separated integer list"))
            })
            .collect()
    }

    /// Effective configuration in the same format [`RunConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, _, doc) in KEYS {
            s.push_str(&format!("# {doc}\n{k} = {}\n", self.get(k)));
        }
        s
    }

    pub fn seed(&self) -> Result<RngSeed> {
        let v = self.get("seed");
        v.parse()
            .map(RngSeed::new)
            .map_err(|_| bad("seed", v, "an unsigned integer"))
    }

    pub fn mean_schedule(&self) -> Result<MeanSchedule> {
        let m = match self.get("schedule.mean") {
            "linear" => MeanSchedule::Linear,
            "ouve" => MeanSchedule::Ouve {
                gamma: self.f64("schedule.gamma")?,
            },
            "logistic" => MeanSchedule::Logistic {
                k: self.f64("schedule.k")?,
            },
            other => return Err(bad("schedule.mean", other, "linear, ouve or logistic")),
        };
        m.validate()?;
        Ok(m)
    }

    pub fn variance_schedule(&self) -> Result<VarianceSchedule> {
        let sigma = self.f64("schedule.sigma")?;
        let v = match self.get("schedule.variance") {
            "bridge" => VarianceSchedule::Bridge { sigma },
            "linear" => VarianceSchedule::Linear { sigma },
            "constant" => VarianceSchedule::Constant { sigma },
            other => {
                return Err(bad(
                    "schedule.variance",
                    other,
                    "bridge, linear or constant",
                ))
            }
        };
        v.validate()?;
        Ok(v)
    }

    pub fn path(&self) -> Result<ProbabilityPath> {
        let p = ProbabilityPath::new(self.mean_schedule()?, self.variance_schedule()?)
            .with_time_range(self.f64("schedule.t_min")?, self.f64("schedule.t_max")?);
        p.validate()?;
        Ok(p)
    }

    pub fn sampler(&self) -> Result<SamplerConfig> {
        let s = SamplerConfig {
            n_steps: self.usize("sampler.steps")?,
            t_start: self.f64("sampler.t_start")?,
            t_floor: self.f64("sampler.t_floor")?,
            record_trajectory: false,
            seed: self.seed()?,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn stft(&self) -> Result<StftConfig> {
        let c = StftConfig {
            window_len: self.usize("stft.window")?,
            hop: self.usize("stft.hop")?,
            fft_len: self.usize("stft.fft")?,
            window: WindowKind::SqrtHann,
            center: true,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn compression(&self) -> Result<CompressionParams> {
        let c = CompressionParams {
            exponent: self.f64("compress.alpha")?,
            scale: self.f64("compress.beta")?,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn weights(&self) -> Result<CompositeWeights> {
        let w = CompositeWeights {
            lambda_mel: self.f64("loss.lambda_mel")?,
            lambda_sisnr: self.f64("loss.lambda_sisnr")?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn sample_rate(&self) -> Result<u32> {
        let v = self.get("audio.sample_rate");
        v.parse()
            .map_err(|_| bad("audio.sample_rate", v, "a positive integer"))
    }

    pub fn mel(&self) -> Result<MelLossConfig> {
        let v = self.get("loss.mel_scales");
        let scales = v
            .split(',')
            .map(|item| {
                let (f, m) = item
                    .trim()
                    .split_once(':')
                    .ok_or_else(|| bad("loss.mel_scales", v, "frame:bands pairs"))?;
                let f = f
                    .parse()
                    .map_err(|_| bad("loss.mel_scales", v, "frame:bands pairs"))?;
                let m = m
                    .parse()
                    .map_err(|_| bad("loss.mel_scales", v, "frame:bands pairs"))?;
                Ok((f, m))
            })
            .collect::<Result<Vec<_>>>()?;
        let cfg = MelLossConfig {
            scales,
            sample_rate: self.sample_rate()?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn toy(&self, n_freq: usize) -> Result<ToyPredictorConfig> {
        Ok(ToyPredictorConfig {
            n_freq,
            embed_dim: self.usize("predictor.embed_dim")?,
            fourier_scale: self.f64("predictor.fourier_scale")?,
            hidden: self.usize("predictor.hidden")?,
            seed: self.seed()?,
        })
    }

    pub fn dba(&self, n_freq: usize) -> Result<DbaLiteConfig> {
        Ok(DbaLiteConfig {
            n_freq,
            channels: self.usize("dba.channels")?,
            squeezed: self.usize("dba.squeezed")?,
            tf_blocks: self.usize("dba.tf_blocks")?,
            unet_depth: self.usize("dba.unet_depth")?,
            freq_stride: self.usize("dba.freq_stride")?,
            alpha_t: self.f64("dba.alpha_t")?,
            beta_f: self.f64("dba.beta_f")?,
            embed_dim: self.usize("predictor.embed_dim")?,
            fourier_scale: self.f64("predictor.fourier_scale")?,
            seed: self.seed()?,
            ..DbaLiteConfig::miniature(n_freq)
        })
    }

    pub fn train(&self) -> Result<TrainConfig> {
        let lr = self.f64("train.lr")?;
        let optimizer = match self.get("train.optimizer") {
            "sgd" => Optimizer::Sgd { lr },
            "adam" => Optimizer::adam(lr),
            other => return Err(bad("train.optimizer", other, "sgd or adam")),
        };
        let objective = match self.get("train.objective") {
            "tm" => Objective::TargetMatching,
            "fm" => Objective::FlowMatching,
            other => return Err(bad("train.objective", other, "tm or fm")),
        };
        Ok(TrainConfig {
            objective,
            epochs: self.usize("train.epochs")?,
            batch_size: self.usize("train.batch")?,
            optimizer,
            seed: self.seed()?,
            ..TrainConfig::default()
        })
    }

    pub fn synth(&self) -> Result<SynthSpec> {
        let spec = SynthSpec {
            n_utts: self.usize("synth.n_utts")?,
            duration_s: self.f64("synth.duration")?,
            sample_rate: self.sample_rate()?,
            noise: self.get("synth.noise").parse::<NoiseKind>()?,
            snr_db: (self.f64("synth.snr_min")?, self.f64("synth.snr_max")?),
            seed: self.seed()?,
            ..SynthSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }
}
