use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use raresim::benchmarks::AnalyticLimitState;
use raresim::orthopoly::tensor_quadrature;
use raresim::pce::fit_projection;
use raresim::sbss::{run_sbss, SbssConfig};
use raresim::sus::{run_sus, SusConfig};
use raresim::{EstimationResult32, PceModel32, UncertainVector32};

fn linear() -> AnalyticLimitState {
    AnalyticLimitState::Linear { p: 3, beta: 3.0 }
}

#[test]
fn subset_simulation_in_f32() {
    let ls = linear();
    let uv: UncertainVector32 = ls.inputs();
    let cfg = SusConfig::new(2000, 0.1);
    let r: EstimationResult32 =
        run_sus(|t: &[f32]| ls.evaluate(t).unwrap(), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(r.true_calls, 2000 + (r.m - 1) * 1800);
    let ratio = r.p_hat as f64 / ls.true_pf();
    assert!((0.5..2.0).contains(&ratio), "{ratio}");
}

#[test]
fn surrogate_subset_simulation_in_f32() {
    let ls = linear();
    let uv: UncertainVector32 = ls.inputs();
    let cfg = SbssConfig::new(2000, 0.1, 0.11);
    let (r, surrogate) =
        run_sbss(|t: &[f32]| ls.evaluate(t).unwrap(), &uv, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    assert_eq!(r.true_calls, 216 + (r.m - 1) * 220);
    let ratio = r.p_hat as f64 / ls.true_pf();
    assert!((0.5..2.0).contains(&ratio), "{ratio}");
    assert_eq!(surrogate.initial().training_calls(), 216);
}

#[test]
fn projection_in_f32_tracks_f64() {
    let uv = UncertainVector32::standard_normal(2).unwrap();
    let rule = tensor_quadrature(&uv.families(), 4).unwrap();
    let m: PceModel32 = fit_projection(|t: &[f32]| t[0] * t[0] + 0.5 * t[1], &uv, 3, &rule).unwrap();
    assert!((m.coefficient_of(&[2, 0]).unwrap() - 1.0).abs() < 1e-5);
    assert!((m.coefficient_of(&[0, 1]).unwrap() - 0.5).abs() < 1e-5);
    assert!((m.coefficient_of(&[0, 0]).unwrap() - 1.0).abs() < 1e-5);
}
