use proptest::prelude::*;
use tmse_core::dsp::{
    compress, decompress, load_wav, save_wav, CompressionParams, Stft, StftConfig, WavEncoding,
    Waveform,
};
use tmse_core::losses::{si_sdr_samples, MelLoss, MelLossConfig};

fn signal(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, 64..max_len)
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stft_round_trip(x in signal(4000)) {
        let stft = Stft::new(StftConfig::default()).unwrap();
        let y = stft.inverse(&stft.forward(&x).unwrap(), x.len()).unwrap();
        prop_assert_eq!(y.len(), x.len());
        prop_assert!(rel_err(&y, &x) < 1e-6);
    }

    #[test]
    fn stft_round_trip_other_frames(x in signal(3000), frame in prop::sample::select(vec![32usize, 64, 128, 256])) {
        let stft = Stft::new(StftConfig::for_frame_size(frame)).unwrap();
        let y = stft.inverse(&stft.forward(&x).unwrap(), x.len()).unwrap();
        prop_assert!(rel_err(&y, &x) < 1e-6);
    }

    #[test]
    fn compression_round_trip(x in signal(2000), alpha in 0.2f64..1.0, beta in 0.1f64..2.0) {
        let spec = Stft::new(StftConfig::default()).unwrap().forward(&x).unwrap();
        let params = CompressionParams { exponent: alpha, scale: beta };
        let back = decompress(&compress(&spec, params).unwrap()).unwrap();
        let num: f64 = back.values.iter().zip(&spec.values).map(|(a, b)| (a - b).norm_sqr()).sum();
        let den: f64 = spec.values.iter().map(|b| b.norm_sqr()).sum();
        prop_assert!((num / den).sqrt() < 1e-9);
    }

    #[test]
    fn si_sdr_is_exactly_invariant_to_binary_scales(x in signal(800), noise in signal(800), k in -20i32..20) {
        let n = x.len().min(noise.len());
        let (r, e) = (&x[..n], &noise[..n]);
        let est: Vec<f64> = r.iter().zip(e).map(|(a, b)| a + 0.3 * b).collect();
        let scaled: Vec<f64> = est.iter().map(|v| v * 2f64.powi(k)).collect();
        prop_assert_eq!(si_sdr_samples(&est, r).unwrap(), si_sdr_samples(&scaled, r).unwrap());
    }

    #[test]
    fn si_sdr_is_invariant_to_any_scale(x in signal(800), noise in signal(800), scale in 1e-3f64..1e3) {
        let n = x.len().min(noise.len());
        let (r, e) = (&x[..n], &noise[..n]);
        let est: Vec<f64> = r.iter().zip(e).map(|(a, b)| a + 0.3 * b).collect();
        let scaled: Vec<f64> = est.iter().map(|v| v * scale).collect();
        let d = si_sdr_samples(&est, r).unwrap() - si_sdr_samples(&scaled, r).unwrap();
        prop_assert!(d.abs() < 1e-12, "{d}");
    }

    #[test]
    fn si_sdr_stays_in_range(x in signal(500), y in signal(500)) {
        let n = x.len().min(y.len());
        let v = si_sdr_samples(&y[..n], &x[..n]).unwrap();
        prop_assert!((-60.0..=60.0).contains(&v));
    }
}

#[test]
fn mel_loss_vanishes_on_identical_inputs() {
    let x: Vec<f64> = (0..4000).map(|i| (i as f64 * 0.05).sin() * 0.3).collect();
    let loss = MelLoss::new(&MelLossConfig::default()).unwrap();
    assert_eq!(loss.loss(&x, &x).unwrap(), 0.0);
}

#[test]
fn wav_round_trips_within_quantisation() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..1600).map(|i| (i as f64 * 0.031).sin() * 0.9).collect();
    let w = Waveform::new(x.clone(), 16000).unwrap();
    let p16 = dir.path().join("a.wav");
    save_wav(&w, &p16, WavEncoding::Pcm16).unwrap();
    let back = load_wav(&p16).unwrap();
    assert_eq!(back.sample_rate, 16000);
    let worst = back
        .samples
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= 0.5 / 32767.0 + 1e-12, "worst {worst}");

    let pf = dir.path().join("b.wav");
    save_wav(&w, &pf, WavEncoding::Float32).unwrap();
    let back = load_wav(&pf).unwrap();
    let worst = back
        .samples
        .iter()
        .zip(&x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst <= f32::EPSILON as f64);
}
