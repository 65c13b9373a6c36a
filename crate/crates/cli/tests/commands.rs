use std::path::{Path, PathBuf};
use std::process::Command as Process;

use clap::Parser;
use tmse_cli::{run, Cli};
use tmse_core::dsp::{load_wav, save_wav, WavEncoding, Waveform};
use tmse_core::losses::si_sdr_samples;

fn tmse(args: &[&str]) -> tmse_core::Result<()> {
    let cli = Cli::try_parse_from(std::iter::once("tmse").chain(args.iter().copied()))
        .expect("valid flags");
    run(&cli)
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    std::fs::write(&p, text).unwrap();
    p
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines
        .next()
        .unwrap()
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|v| v.parse().unwrap_or(f64::NAN))
                .collect()
        })
        .collect();
    (header, rows)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = "synth.n_utts = 3\nsynth.duration = 0.5\ntrain.epochs = 3\ntrain.batch = 2\n";

#[test]
fn schedule_curves_contract() {
    let dir = tempfile::tempdir().unwrap();
    tmse(&["--out", s(dir.path()), "schedule-curves"]).unwrap();
    let (header, rows) = read_csv(&dir.path().join("schedule_curves.csv"));
    assert_eq!(
        header,
        [
            "t",
            "mu_linear",
            "mu_ouve",
            "mu_logistic",
            "snr_linear",
            "snr_ouve",
            "snr_logistic"
        ]
    );
    assert_eq!(rows.len(), 200);
    assert_eq!(rows[0][0], 0.005);
    assert!((rows[199][0] - 0.995).abs() < 1e-12);
    let below = rows.iter().rev().find(|r| r[0] < 0.5).unwrap();
    let above = rows.iter().find(|r| r[0] > 0.5).unwrap();
    assert!(below[3] < 0.6 && above[3] > 0.6);
    assert!((rows[199][2] - 0.8215).abs() < 2e-3);
    assert!(dir.path().join("effective_config.txt").exists());
}

#[test]
fn objective_variance_contract() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "schedule.sigma = 1\nvariance.samples = 20000\nvariance.grid = 0.25,0.7\n",
    );
    tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "objective-variance",
    ])
    .unwrap();
    let (header, rows) = read_csv(&dir.path().join("objective_variance.csv"));
    assert_eq!(
        header,
        ["t", "var_fm_empirical", "var_fm_analytic", "var_tm"]
    );
    assert!((rows[0][2] - 1.0 / 3.0).abs() < 1e-9);
    for r in rows {
        assert_eq!(r[3], 0.0);
        assert!((r[1] - r[2]).abs() / r[2] < 0.05);
    }
}

#[test]
fn oracle_convergence_zero_variance_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "schedule.mean = linear\nschedule.variance = constant\nschedule.sigma = 0\n\
         sampler.t_start = 1\nsampler.t_floor = 0\nconvergence.instances = 3\n",
    );
    tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "oracle-convergence",
    ])
    .unwrap();
    let (_, rows) = read_csv(&dir.path().join("oracle_convergence.csv"));
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r[1] < 1e-10));
}

#[test]
fn train_is_reproducible_and_enhance_matches_length() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        tmse(&["--config", s(&cfg), "--out", s(out), "train", "--synthetic"]).unwrap();
    }
    let log_a = std::fs::read_to_string(a.join("loss.csv")).unwrap();
    assert_eq!(log_a, std::fs::read_to_string(b.join("loss.csv")).unwrap());
    assert_eq!(log_a.lines().count(), 4);

    let data = dir.path().join("data");
    tmse(&["--config", s(&cfg), "--out", s(&data), "synth"]).unwrap();
    let enh = dir.path().join("enh");
    let ck = a.join("checkpoint.bin");
    tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(&enh),
        "enhance",
        "--checkpoint",
        s(&ck),
        s(&data.join("noisy")),
    ])
    .unwrap();
    for name in ["utt0000.wav", "utt0001.wav", "utt0002.wav"] {
        let input = load_wav(data.join("noisy").join(name)).unwrap();
        let output = load_wav(enh.join(name)).unwrap();
        assert_eq!(input.len(), output.len());
        assert_eq!(input.sample_rate, output.sample_rate);
    }

    let dba = write_config(dir.path(), &format!("{SMALL}predictor.kind = dba\n"));
    let err = tmse(&[
        "--config",
        s(&dba),
        "--out",
        s(&enh),
        "enhance",
        "--checkpoint",
        s(&ck),
        s(&data.join("noisy")),
    ])
    .unwrap_err();
    assert_eq!(err.tag(), "checkpoint");
}

#[test]
fn train_from_directory_rejects_missing_partner() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    tmse(&["--config", s(&cfg), "--out", s(&data), "synth"]).unwrap();
    tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("ok")),
        "train",
        "--data",
        s(&data),
    ])
    .unwrap();
    std::fs::remove_file(data.join("noisy").join("utt0001.wav")).unwrap();
    let err = tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(&dir.path().join("bad")),
        "train",
        "--data",
        s(&data),
    ]);
    assert!(err.unwrap_err().to_string().contains("utt0001.wav"));
}

#[test]
fn oracle_enhancement_is_near_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &format!(
            "{SMALL}schedule.mean = linear\nschedule.variance = constant\nschedule.sigma = 0\n\
             sampler.t_start = 1\nsampler.t_floor = 0\n"
        ),
    );
    let data = dir.path().join("data");
    tmse(&["--config", s(&cfg), "--out", s(&data), "synth"]).unwrap();
    let enh = dir.path().join("enh");
    let clean = data.join("clean");
    tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(&enh),
        "enhance",
        "--oracle-with",
        s(&clean),
        s(&data.join("noisy")),
    ])
    .unwrap();
    for name in ["utt0000.wav", "utt0001.wav", "utt0002.wav"] {
        let c = load_wav(clean.join(name)).unwrap();
        let e = load_wav(enh.join(name)).unwrap();
        assert!(si_sdr_samples(&e.samples, &c.samples).unwrap() > 40.0);
    }
    let echoed = std::fs::read_to_string(enh.join("effective_config.txt")).unwrap();
    assert!(echoed.contains("sampler.steps = 4\n"));
}

fn save(dir: &Path, name: &str, x: &[f64]) {
    std::fs::create_dir_all(dir).unwrap();
    let w = Waveform::new(x.to_vec(), 16000).unwrap();
    save_wav(&w, dir.join(name), WavEncoding::Float32).unwrap();
}

#[test]
fn eval_scale_invariance_and_orthogonal_noise() {
    let dir = tempfile::tempdir().unwrap();
    let r: Vec<f64> = (0..8000)
        .map(|i| 0.4 * (i as f64 * 0.013).sin() + 0.1 * (i as f64 * 0.2).cos())
        .collect();
    let mut n: Vec<f64> = (0..8000)
        .map(|i| 0.3 * (i as f64 * 0.071).sin() * (i as f64 * 0.0007).cos())
        .collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let proj = dot(&n, &r) / dot(&r, &r);
    n.iter_mut().zip(&r).for_each(|(v, rv)| *v -= proj * rv);
    let g = (dot(&r, &r) / dot(&n, &n)).sqrt();
    let est0: Vec<f64> = r.iter().zip(&n).map(|(a, b)| (a + g * b) * 0.5).collect();
    let half: Vec<f64> = r.iter().map(|v| 0.5 * v).collect();

    let refs = dir.path().join("ref");
    save(&refs, "a.wav", &r);
    save(&dir.path().join("same"), "a.wav", &r);
    save(&dir.path().join("half"), "a.wav", &half);
    save(&dir.path().join("orth"), "a.wav", &est0);
    let mut sisdr = Vec::new();
    for est in ["same", "half", "orth"] {
        let out = dir.path().join(format!("eval_{est}"));
        tmse(&[
            "--out",
            s(&out),
            "eval",
            "--est",
            s(&dir.path().join(est)),
            "--ref",
            s(&refs),
        ])
        .unwrap();
        let text = std::fs::read_to_string(out.join("eval.csv")).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("a.wav,"));
        sisdr.push(row.split(',').nth(1).unwrap().parse::<f64>().unwrap());
        assert!(text.contains("\nmean,") && text.contains("\nstd,"));
    }
    assert_eq!(sisdr[0], 60.0);
    assert_eq!(sisdr[1], 60.0);
    assert!(sisdr[2].abs() < 0.01, "{}", sisdr[2]);
}

#[test]
fn perturb_demo_emits_27_grids() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    tmse(&["--config", s(&cfg), "--out", s(&data), "synth"]).unwrap();
    let out = dir.path().join("pd");
    let clean = data.join("clean").join("utt0000.wav");
    let noisy = data.join("noisy").join("utt0000.wav");
    tmse(&[
        "--out",
        s(&out),
        "perturb-demo",
        "--clean",
        s(&clean),
        "--noisy",
        s(&noisy),
    ])
    .unwrap();
    let grids = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .starts_with("perturb_")
        })
        .count();
    assert_eq!(grids, 28);
    let text = std::fs::read_to_string(out.join("perturb_snr.csv")).unwrap();
    let logistic: Vec<f64> = text
        .lines()
        .filter(|l| l.starts_with("logistic,"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(logistic.len(), 9);
    assert!(logistic.windows(2).all(|w| w[1] < w[0]));
    let grid = std::fs::read_to_string(out.join("perturb_linear_t0.5.csv")).unwrap();
    assert_eq!(grid.lines().count(), 256);
}

#[test]
fn config_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "sampler.stpes = 8\n");
    let err = tmse(&[
        "--config",
        s(&cfg),
        "--out",
        s(dir.path()),
        "schedule-curves",
    ])
    .unwrap_err();
    assert_eq!(err.tag(), "config");

    let out = Process::new(env!("CARGO_BIN_EXE_tmse"))
        .args([
            "--config",
            s(&cfg),
            "--out",
            s(dir.path()),
            "schedule-curves",
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    let lines: Vec<&str> = stderr.lines().filter(|l| l.starts_with("error[")).collect();
    assert_eq!(lines.len(), 1);
    assert!(lines[0].starts_with("error[config]: "));
}

#[test]
fn unwritable_output_fails() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = tmse(&["--out", s(&blocker.join("sub")), "schedule-curves"]).unwrap_err();
    assert_eq!(err.tag(), "io");
}
