use proptest::prelude::*;
use tmse_core::path::ProbabilityPath;
use tmse_core::schedules::{MeanSchedule, VarianceSchedule};
use tmse_core::Tensor;

fn mean_schedule() -> impl Strategy<Value = MeanSchedule> {
    prop_oneof![
        Just(MeanSchedule::Linear),
        (0.1f64..3.0).prop_map(|gamma| MeanSchedule::Ouve { gamma }),
        (0.5f64..20.0).prop_map(|k| MeanSchedule::Logistic { k }),
    ]
}

fn variance_schedule() -> impl Strategy<Value = VarianceSchedule> {
    prop_oneof![
        (0.05f64..2.0).prop_map(|sigma| VarianceSchedule::Linear { sigma }),
        (0.05f64..2.0).prop_map(|sigma| VarianceSchedule::Bridge { sigma }),
        (0.05f64..2.0).prop_map(|sigma| VarianceSchedule::Constant { sigma }),
    ]
}

/// Five-point central difference.
fn central_diff(f: impl Fn(f64) -> f64, t: f64, h: f64) -> f64 {
    (f(t - 2.0 * h) - 8.0 * f(t - h) + 8.0 * f(t + h) - f(t + 2.0 * h)) / (12.0 * h)
}

/// Relative error; derivatives below `1e-6 · scale` are compared absolutely
/// because the stencil's rounding noise is proportional to the function value.
fn rel(a: f64, b: f64, scale: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6 * scale.max(1e-3))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn logistic_endpoints_and_symmetry(k in 0.01f64..40.0, x0 in -3.0f64..3.0, x1 in -3.0f64..3.0, t in 0.0f64..1.0) {
        let m = MeanSchedule::Logistic { k };
        prop_assert!((m.mean_at(0.0, x0, x1) - x0).abs() < 1e-12);
        prop_assert!((m.mean_at(1.0, x0, x1) - x1).abs() < 1e-12);
        let sym = m.mean_at(t, x0, x1) + m.mean_at(1.0 - t, x0, x1) - (x0 + x1);
        prop_assert!(sym.abs() < 1e-12, "symmetry defect {sym}");
    }

    #[test]
    fn mix_is_monotone(m in mean_schedule(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(m.mix(lo) <= m.mix(hi) + 1e-15);
    }

    #[test]
    fn mean_derivative_matches_differences(m in mean_schedule(), x0 in -2.0f64..2.0, x1 in -2.0f64..2.0, t in 0.01f64..0.99) {
        let fd = central_diff(|s| m.mean_at(s, x0, x1), t, 1e-3);
        let a = m.mean_derivative_at(t, x0, x1);
        prop_assert!(rel(a, fd, x0.abs().max(x1.abs())) < 1e-6, "{m:?} t={t}: {a} vs {fd}");
    }

    #[test]
    fn sigma_derivative_matches_differences(v in variance_schedule(), t in 0.01f64..0.99) {
        let fd = central_diff(|s| v.sigma_at(s), t, 1e-4);
        let a = v.sigma_derivative_at(t).unwrap();
        prop_assert!(rel(a, fd, v.sigma_max()) < 1e-6, "{v:?} t={t}: {a} vs {fd}");
    }

    #[test]
    fn exact_and_decomposed_fields_agree(
        m in mean_schedule(),
        v in variance_schedule(),
        t in 0.01f64..0.99,
        vals in prop::collection::vec(-2.0f64..2.0, 12),
    ) {
        let x0 = Tensor::new(&[4], vals[0..4].to_vec()).unwrap();
        let x1 = Tensor::new(&[4], vals[4..8].to_vec()).unwrap();
        let z = Tensor::new(&[4], vals[8..12].to_vec()).unwrap();
        let path = ProbabilityPath::new(m, v);
        let x_t = path.perturb_with(t, &x0, &x1, &z).unwrap();
        let exact = path.vector_field_exact(t, &x_t, &x0, &x1).unwrap();
        let split = path.vector_field_decomposed(t, &z, &x0, &x1).unwrap();
        let err = exact.zip_map(&split, |a, b| a - b).unwrap().norm();
        prop_assert!(err <= 1e-10 * split.norm().max(1e-12), "err {err}");
    }

    #[test]
    fn bridge_variance_vanishes_at_both_ends(sigma in 0.01f64..3.0) {
        let v = VarianceSchedule::Bridge { sigma };
        prop_assert_eq!(v.sigma_at(0.0), 0.0);
        prop_assert_eq!(v.sigma_at(1.0), 0.0);
    }
}

#[test]
fn logistic_tends_to_linear_for_small_k() {
    let m = MeanSchedule::Logistic { k: 0.01 };
    let (x0, x1) = (0.2, 1.0);
    for i in 0..=100 {
        let t = i as f64 / 100.0;
        let d = (m.mean_at(t, x0, x1) - MeanSchedule::Linear.mean_at(t, x0, x1)).abs();
        assert!(d < 1e-3 * (x1 - x0), "t={t} d={d}");
    }
}

#[test]
fn ouve_endpoint_mismatch() {
    for gamma in [0.5, 1.5, 3.0] {
        let m = MeanSchedule::Ouve { gamma };
        let (x0, x1) = (0.2, 1.0);
        let gap = x1 - m.mean_at(1.0, x0, x1);
        assert!((gap - (-gamma).exp() * (x1 - x0)).abs() < 1e-12);
    }
}
