use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tmse_core::dsp::{load_wav, save_wav, WavEncoding, Waveform};
use tmse_core::losses::{si_sdr_samples, SignalLoss, SI_SDR_CAP_DB};
use tmse_core::par::{self, Exec};
use tmse_core::path::ProbabilityPath;
use tmse_core::pipeline::Pipeline;
use tmse_core::predictor::{
    load_checkpoint, save_checkpoint, train as run_training, DbaLite, OraclePredictor,
    ToyPredictor, TrainItem, Trainable,
};
use tmse_core::schedules::{linspace, snr_db, MeanSchedule, VarianceSchedule};
use tmse_core::studies::{self, ConvergenceSetup};
use tmse_core::synth::{generate, write_pairs};
use tmse_core::{Error, Result, Tensor};

use crate::{create_dir, write_text, RunConfig};

pub const PERTURB_TIMES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

fn mean_schedules(cfg: &RunConfig) -> Result<[MeanSchedule; 3]> {
    Ok([
        MeanSchedule::Linear,
        MeanSchedule::Ouve {
            gamma: cfg.f64("schedule.gamma")?,
        },
        MeanSchedule::Logistic {
            k: cfg.f64("schedule.k")?,
        },
    ])
}

pub fn schedule_curves(cfg: &RunConfig, out: &Path) -> Result<()> {
    let (x0, x1) = (cfg.f64("curves.x0")?, cfg.f64("curves.x1")?);
    let var = VarianceSchedule::Constant {
        sigma: cfg.f64("curves.sigma")?,
    };
    var.validate()?;
    let schedules = mean_schedules(cfg)?;
    for m in &schedules {
        m.validate()?;
    }
    let grid = linspace(
        cfg.f64("curves.t_lo")?,
        cfg.f64("curves.t_hi")?,
        cfg.usize("curves.points")?,
    );
    if grid.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Domain("curve grid must lie in (0, 1]".into()));
    }
    let mut s = String::from("t,mu_linear,mu_ouve,mu_logistic,snr_linear,snr_ouve,snr_logistic\n");
    for &t in &grid {
        let _ = write!(s, "{t}");
        for m in &schedules {
            let _ = write!(s, ",{}", m.mean_at(t, x0, x1));
        }
        for m in &schedules {
            let _ = write!(s, ",{}", snr_db(m, &var, x0, x1, t));
        }
        s.push('\n');
    }
    write_text(&out.join("schedule_curves.csv"), &s)
}

pub fn objective_variance(cfg: &RunConfig, out: &Path) -> Result<()> {
    let rows = studies::objective_variance(
        &cfg.path()?,
        &cfg.list_f64("variance.grid")?,
        cfg.usize("variance.samples")?,
        cfg.f64("variance.x0")?,
        cfg.f64("variance.x1")?,
        cfg.seed()?,
        Exec::Parallel,
    )?;
    write_text(
        &out.join("objective_variance.csv"),
        &studies::variance_csv(&rows),
    )
}

pub fn oracle_convergence(cfg: &RunConfig, out: &Path) -> Result<()> {
    let setup = ConvergenceSetup {
        instances: cfg.usize("convergence.instances")?,
        shape: [
            2,
            cfg.usize("convergence.freq")?,
            cfg.usize("convergence.frames")?,
        ],
        seed: cfg.seed()?,
    };
    let rows = studies::oracle_convergence(
        &cfg.path()?,
        &cfg.sampler()?,
        &cfg.list_usize("convergence.steps")?,
        &setup,
        Exec::Parallel,
    )?;
    write_text(
        &out.join("oracle_convergence.csv"),
        &studies::convergence_csv(&rows),
    )
}

fn pipeline(cfg: &RunConfig) -> Result<Pipeline> {
    Pipeline::new(cfg.stft()?, cfg.compression()?)
}

fn load_pair(clean: &Path, noisy: &Path) -> Result<(Waveform, Waveform)> {
    let c = load_wav(clean)?;
    let n = load_wav(noisy)?;
    if c.len() != n.len() || c.sample_rate != n.sample_rate {
        return Err(Error::Shape(format!(
            "{} and {} differ in length or sample rate",
            clean.display(),
            noisy.display()
        )));
    }
    Ok((c, n))
}

/// `|x|` of a `2 × F × K` carrier as `F` rows of `K` values.
fn magnitude_csv(x: &Tensor) -> String {
    let (f, k) = (x.shape()[1], x.shape()[2]);
    let (re, im) = x.data().split_at(f * k);
    let mut s = String::new();
    for row in 0..f {
        for col in 0..k {
            let i = row * k + col;
            if col > 0 {
                s.push(',');
            }
            let _ = write!(s, "{}", re[i].hypot(im[i]));
        }
        s.push('\n');
    }
    s
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn perturb_demo(cfg: &RunConfig, clean: &Path, noisy: &Path, out: &Path) -> Result<()> {
    let (c, n) = load_pair(clean, noisy)?;
    let pipe = pipeline(cfg)?;
    let x0 = pipe.analyze(&c.samples)?;
    let x1 = pipe.analyze(&n.samples)?;
    let variance = if cfg.bool("perturb.noise")? {
        cfg.variance_schedule()?
    } else {
        VarianceSchedule::Constant { sigma: 0.0 }
    };
    // one draw shared by every schedule and time
    let z = cfg.seed()?.rng().normal_tensor(x0.shape());
    let mut snr = String::from("schedule,t,snr_db\n");
    for mean in mean_schedules(cfg)? {
        mean.validate()?;
        let path = ProbabilityPath::new(mean, variance);
        for t in PERTURB_TIMES {
            let xt = path.perturb_with(t, &x0, &x1, &z)?;
            write_text(
                &out.join(format!("perturb_{}_t{t:.1}.csv", mean.name())),
                &magnitude_csv(&xt),
            )?;
            let diff = xt.zip_map(&x0, |a, b| a - b)?;
            let db = 10.0 * (energy(x0.data()) / energy(diff.data())).log10();
            let _ = writeln!(snr, "{},{t:.1},{db}", mean.name());
        }
    }
    write_text(&out.join("perturb_snr.csv"), &snr)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<()> {
    let pairs = generate(&cfg.synth()?, Exec::Parallel)?;
    write_pairs(&pairs, out)?;
    log::info!("wrote {} pairs under {}", pairs.len(), out.display());
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })?;
    let mut files = Vec::new();
    for entry in rd {
        let p = entry
            .map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?
            .path();
        if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

fn file_name(p: &Path) -> &std::ffi::OsStr {
    p.file_name().expect("listed files have names")
}

/// `(clean, noisy)` paths matched by file name; a missing partner is an error.
pub fn paired_files(clean_dir: &Path, noisy_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let clean = wav_files(clean_dir)?;
    let noisy = wav_files(noisy_dir)?;
    let missing = |p: &Path, dir: &Path| {
        Error::Config(format!(
            "{} has no partner in {}",
            p.display(),
            dir.display()
        ))
    };
    for n in &noisy {
        if !clean.iter().any(|c| file_name(c) == file_name(n)) {
            return Err(missing(n, clean_dir));
        }
    }
    let pairs = clean
        .iter()
        .map(|c| {
            let n = noisy_dir.join(file_name(c));
            if noisy.contains(&n) {
                Ok((c.clone(), n))
            } else {
                Err(missing(c, noisy_dir))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    if pairs.is_empty() {
        return Err(Error::Config(format!(
            "no WAV pairs in {}",
            clean_dir.display()
        )));
    }
    Ok(pairs)
}

fn model_header(cfg: &RunConfig, n_freq: usize) -> String {
    format!("predictor={} n_freq={n_freq}", cfg.get("predictor.kind"))
}

/// Fresh predictor of the configured kind.
pub fn build_model(cfg: &RunConfig, n_freq: usize) -> Result<Box<dyn Trainable>> {
    match cfg.get("predictor.kind") {
        "toy" => Ok(Box::new(ToyPredictor::new(cfg.toy(n_freq)?)?)),
        "dba" => Ok(Box::new(DbaLite::new(cfg.dba(n_freq)?)?)),
        other => Err(Error::Config(format!(
            "predictor.kind = {other:?} is not toy or dba"
        ))),
    }
}

pub fn train(cfg: &RunConfig, data: Option<&Path>, out: &Path) -> Result<()> {
    let pipe = pipeline(cfg)?;
    let weights = cfg.weights()?;
    let tcfg = cfg.train()?;
    let keep_clean =
        weights.uses_signal() && tcfg.objective == tmse_core::predictor::Objective::TargetMatching;
    let items: Vec<TrainItem> = match data {
        None => {
            let pairs = generate(&cfg.synth()?, tcfg.exec)?;
            par::try_map_range(tcfg.exec, pairs.len(), |i| {
                pipe.train_item(&pairs[i], keep_clean)
            })?
        }
        Some(dir) => {
            let files = paired_files(&dir.join("clean"), &dir.join("noisy"))?;
            par::try_map_range(tcfg.exec, files.len(), |i| {
                let (c, n) = load_pair(&files[i].0, &files[i].1)?;
                Ok::<_, Error>(TrainItem {
                    x0: pipe.analyze(&c.samples)?,
                    x1: pipe.analyze(&n.samples)?,
                    clean: keep_clean.then_some(c.samples),
                })
            })?
        }
    };
    let signal = if keep_clean {
        Some(SignalLoss::new(
            pipe.stft_config(),
            pipe.compression,
            &cfg.mel()?,
            weights,
        )?)
    } else {
        None
    };
    let mut model = build_model(cfg, pipe.n_freq())?;
    log::info!(
        "training {} predictor ({} parameters) on {} items",
        cfg.get("predictor.kind"),
        model.params().n_scalars(),
        items.len()
    );
    let report = run_training(model.as_mut(), &items, &cfg.path()?, &tcfg, signal.as_ref())?;
    save_checkpoint(
        out.join("checkpoint.bin"),
        &model_header(cfg, pipe.n_freq()),
        model.params(),
    )?;
    write_text(&out.join("loss.csv"), &report.to_csv())
}

pub enum Source {
    Checkpoint(PathBuf),
    Oracle(PathBuf),
}

fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            files.extend(wav_files(p)?);
        } else {
            files.push(p.clone());
        }
    }
    Ok(files)
}

pub fn enhance(cfg: &RunConfig, source: &Source, inputs: &[PathBuf], out: &Path) -> Result<()> {
    let pipe = pipeline(cfg)?;
    let path = cfg.path()?;
    let sampler = cfg.sampler()?;
    let model = match source {
        Source::Checkpoint(ck) => {
            let (header, params) = load_checkpoint(ck)?;
            let want = model_header(cfg, pipe.n_freq());
            if header != want {
                return Err(Error::Checkpoint(format!(
                    "{} holds \"{header}\" but the config describes \"{want}\"",
                    ck.display()
                )));
            }
            let mut m = build_model(cfg, pipe.n_freq())?;
            m.params_mut().assign(&params)?;
            Some(m)
        }
        Source::Oracle(_) => None,
    };
    let files = expand_inputs(inputs)?;
    create_dir(out)?;
    par::try_map_range(Exec::Parallel, files.len(), |i| {
        let input = &files[i];
        let noisy = load_wav(input)?;
        let samples = match (&model, source) {
            (Some(m), _) => pipe.enhance(&path, m.as_ref(), &noisy.samples, &sampler)?,
            (None, Source::Oracle(dir)) => {
                let (clean, _) = load_pair(&dir.join(file_name(input)), input)?;
                let oracle = OraclePredictor::new(pipe.analyze(&clean.samples)?);
                pipe.enhance(&path, &oracle, &noisy.samples, &sampler)?
            }
            (None, Source::Checkpoint(_)) => {
                unreachable!("checkpoint source always builds a model")
            }
        };
        let target = out.join(file_name(input));
        let clipped = save_wav(
            &Waveform::new(samples, noisy.sample_rate)?,
            &target,
            WavEncoding::Float32,
        )?;
        if clipped > 0 {
            log::warn!("{}: {clipped} samples clipped", target.display());
        }
        log::info!("wrote {}", target.display());
        Ok::<_, Error>(())
    })?;
    Ok(())
}

/// Plain SNR of `est` against `reference`, clamped like SI-SDR.
pub fn snr_db_samples(est: &[f64], reference: &[f64]) -> Result<f64> {
    if est.len() != reference.len() {
        return Err(Error::Shape(format!(
            "estimate has {} samples, reference {}",
            est.len(),
            reference.len()
        )));
    }
    let err: f64 = est
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - r).powi(2))
        .sum();
    let db = 10.0 * (energy(reference) / err).log10();
    Ok(if db.is_nan() {
        -SI_SDR_CAP_DB
    } else {
        db.clamp(-SI_SDR_CAP_DB, SI_SDR_CAP_DB)
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn eval(est_dir: &Path, ref_dir: &Path, out: &Path) -> Result<()> {
    let refs = wav_files(ref_dir)?;
    if refs.is_empty() {
        return Err(Error::Config(format!(
            "no WAV files in {}",
            ref_dir.display()
        )));
    }
    let rows = par::try_map_range(Exec::Parallel, refs.len(), |i| {
        let r = &refs[i];
        let est = est_dir.join(file_name(r));
        if !est.exists() {
            return Err(Error::Config(format!(
                "{} has no partner in {}",
                r.display(),
                est_dir.display()
            )));
        }
        let (reference, estimate) = load_pair(r, &est)?;
        Ok((
            si_sdr_samples(&estimate.samples, &reference.samples)?,
            snr_db_samples(&estimate.samples, &reference.samples)?,
        ))
    })?;
    let mut s = String::from("file,si_sdr_db,snr_db\n");
    for (r, (sisdr, snr)) in refs.iter().zip(&rows) {
        let _ = writeln!(s, "{},{sisdr},{snr}", file_name(r).to_string_lossy());
    }
    let (si_mean, si_std) = mean_std(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
    let (snr_mean, snr_std) = mean_std(&rows.iter().map(|r| r.1).collect::<Vec<_>>());
    let _ = writeln!(s, "mean,{si_mean},{snr_mean}");
    let _ = writeln!(s, "std,{si_std},{snr_std}");
    println!(
        "SI-SDR {si_mean:.2} ± {si_std:.2} dB, SNR {snr_mean:.2} ± {snr_std:.2} dB over {} files",
        rows.len()
    );
    write_text(&out.join("eval.csv"), &s)
}
