use tmse_core::dsp::{CompressionParams, StftConfig};
use tmse_core::losses::si_sdr_samples;
use tmse_core::par::Exec;
use tmse_core::path::ProbabilityPath;
use tmse_core::pipeline::Pipeline;
use tmse_core::predictor::{
    train, OraclePredictor, ToyPredictor, ToyPredictorConfig, TrainConfig, Trainable,
};
use tmse_core::rng::RngSeed;
use tmse_core::sampler::SamplerConfig;
use tmse_core::schedules::{MeanSchedule, VarianceSchedule};
use tmse_core::studies::{objective_variance, oracle_convergence, ConvergenceSetup};
use tmse_core::synth::{generate, SynthSpec};

fn small_corpus() -> SynthSpec {
    SynthSpec {
        n_utts: 4,
        duration_s: 0.5,
        seed: RngSeed::new(5),
        ..SynthSpec::default()
    }
}

#[test]
fn oracle_pipeline_reconstructs_clean_speech() {
    let pipe = Pipeline::new(StftConfig::default(), CompressionParams::default()).unwrap();
    let path = ProbabilityPath::new(
        MeanSchedule::Linear,
        VarianceSchedule::Constant { sigma: 0.0 },
    );
    let cfg = SamplerConfig {
        t_start: 1.0,
        t_floor: 0.0,
        ..SamplerConfig::default()
    };
    for pair in generate(&small_corpus(), Exec::Parallel).unwrap() {
        let oracle = OraclePredictor::new(pipe.analyze(&pair.clean.samples).unwrap());
        let out = pipe
            .enhance(&path, &oracle, &pair.noisy.samples, &cfg)
            .unwrap();
        assert_eq!(out.len(), pair.noisy.len());
        assert!(si_sdr_samples(&out, &pair.clean.samples).unwrap() > 40.0);
    }
}

#[test]
fn training_is_independent_of_the_executor() {
    let pipe = Pipeline::new(StftConfig::default(), CompressionParams::default()).unwrap();
    let items: Vec<_> = generate(&small_corpus(), Exec::Parallel)
        .unwrap()
        .iter()
        .map(|p| pipe.train_item(p, false).unwrap())
        .collect();
    let run = |exec| {
        let mut m = ToyPredictor::new(ToyPredictorConfig::new(pipe.n_freq())).unwrap();
        let cfg = TrainConfig {
            epochs: 2,
            batch_size: 3,
            exec,
            ..TrainConfig::default()
        };
        let report = train(&mut m, &items, &ProbabilityPath::default(), &cfg, None).unwrap();
        (report.to_csv(), m)
    };
    let (log_a, a) = run(Exec::Sequential);
    let (log_b, b) = run(Exec::Parallel);
    assert_eq!(log_a, log_b);
    assert_eq!(a.params(), b.params());
}

#[test]
fn studies_are_independent_of_the_executor() {
    let path = ProbabilityPath::default();
    let grid = [0.1, 0.25, 0.8];
    let a = objective_variance(
        &path,
        &grid,
        500,
        0.2,
        1.0,
        RngSeed::new(1),
        Exec::Sequential,
    )
    .unwrap();
    let b =
        objective_variance(&path, &grid, 500, 0.2, 1.0, RngSeed::new(1), Exec::Parallel).unwrap();
    assert_eq!(a, b);
    let setup = ConvergenceSetup {
        instances: 3,
        shape: [2, 8, 8],
        seed: RngSeed::new(2),
    };
    let c = oracle_convergence(
        &path,
        &SamplerConfig::default(),
        &[4, 16],
        &setup,
        Exec::Sequential,
    )
    .unwrap();
    let d = oracle_convergence(
        &path,
        &SamplerConfig::default(),
        &[4, 16],
        &setup,
        Exec::Parallel,
    )
    .unwrap();
    assert_eq!(c, d);
}
