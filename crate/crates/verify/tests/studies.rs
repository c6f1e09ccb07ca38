use able_core::operator::NetworkConfig;
use able_pde::burgers::BurgersConfig;
use able_pde::generate::{generate, BurgersSpec, Problem};
use able_pde::Dataset;
use able_train::trainer::build_network;
use able_train::TrainConfig;
use able_verify::properties::{isometry_checks, FrameMatrix};
use able_verify::rates::{
    equal_variation_partition, fit_slope, partition_errors, piecewise_mean, rate_checks, step_coefficient,
    step_coefficient_error, step_samples, truncation_errors, BvTarget, STEP_GRID,
};
use able_verify::sweep::entropy_at_shared_weights;
use able_verify::{run_frame_properties, temperature_sweep, Fault, Level, Status};
use proptest::prelude::*;
use std::f64::consts::PI;

fn small_data(n: usize) -> Dataset {
    let spec = BurgersSpec {
        resolution: 128,
        stride: 2,
        solver: BurgersConfig {
            t_final: 0.1,
            ..BurgersConfig::default()
        },
        ..BurgersSpec::default()
    };
    generate(&Problem::Burgers(spec), n, 3).unwrap().0
}

fn small_net() -> NetworkConfig {
    NetworkConfig {
        width: 4,
        layers: 2,
        modes: 6,
        slices: 3,
        projection_width: 8,
        ..NetworkConfig::default()
    }
}

#[test]
fn step_truncation_tail_matches_the_series() {
    // continuous ‖u − P_K u‖² = (2/π²) Σ_{odd j > K} 1/j², and the odd
    // reciprocal squares sum to π²/8; the grid adds O(1/N)
    let n = STEP_GRID;
    let u = step_samples(n);
    let k = 16;
    let got = truncation_errors(&u, &[k]).unwrap()[0];
    let head: f64 = (1..=k).filter(|j| j % 2 == 1).map(|j| 1.0 / (j * j) as f64).sum();
    let tail = (2.0 / (PI * PI) * (PI * PI / 8.0 - head)).sqrt();
    assert!((got - tail).abs() / tail < 1e-3, "{got} vs {tail}");
    assert_eq!(step_coefficient(2).norm(), 0.0);
    assert!((step_coefficient(1).norm() - 1.0 / PI).abs() < 1e-15);
    assert!(step_coefficient_error(1 << 12, 8).unwrap() < 1e-5);
}

#[test]
fn partition_errors_of_a_piecewise_constant_vanish_once_cells_fit() {
    let target = BvTarget::PiecewiseConstant { pieces: 3, seed: 1 };
    let errs = partition_errors(&target, 1 << 12, &[8]).unwrap();
    assert!(errs[0].0 < 1e-12);
    assert!(partition_errors(&BvTarget::Constant(2.0), 64, &[4]).is_err());
}

#[test]
fn full_rate_checks_pass() {
    for c in rate_checks(0) {
        assert!(c.passed(), "{c:?}");
    }
}

#[test]
fn fault_hooks_are_caught() {
    let flipped = run_frame_properties(Level::Quick, 0, Fault::FlipFftNormalization);
    assert_eq!(flipped.get("frame.parseval").unwrap().status, Status::Fail);
    let corrupt = run_frame_properties(Level::Quick, 0, Fault::CorruptDensity);
    assert_eq!(corrupt.get("frame.normalization").unwrap().status, Status::Fail);
    assert!(run_frame_properties(Level::Quick, 0, Fault::None).all_passed());
}

#[test]
fn zero_budget_sweep_reports_the_initial_model() {
    let data = small_data(6);
    let (train, test) = (data.select(&[0, 1, 2, 3]).unwrap(), data.select(&[4, 5]).unwrap());
    let cfg = TrainConfig {
        epochs: 0,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let rows = temperature_sweep(&small_net(), &train, &test, &[0.1, 1.0, 1e6], &cfg, 5).unwrap();
    for r in &rows {
        assert_eq!(r.initial_test_rel_l2, r.final_test_rel_l2);
        assert_eq!(r.initial_entropy, r.final_entropy);
    }
    // at a huge temperature the densities are uniform
    assert!(rows[2].max_uniform_deviation < 1e-3);
    assert!((rows[2].final_entropy - 3f64.ln()).abs() < 1e-6);
}

#[test]
fn hot_sweep_stays_uniform_through_training() {
    let data = small_data(6);
    let (train, test) = (data.select(&[0, 1, 2, 3]).unwrap(), data.select(&[4, 5]).unwrap());
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let rows = temperature_sweep(&small_net(), &train, &test, &[1e6], &cfg, 5).unwrap();
    assert!(rows[0].max_uniform_deviation < 1e-3);
}

#[test]
fn entropy_falls_with_temperature_at_fixed_weights() {
    let data = small_data(2);
    let (_, store) = build_network(small_net(), 4).unwrap();
    let temps = [100.0, 10.0, 1.0, 0.3, 0.1, 0.01];
    let h = entropy_at_shared_weights(&small_net(), &store, &data.inputs, &temps).unwrap();
    for w in h.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{h:?}");
    }
    assert!(h[0] <= 3f64.ln() + 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn partition_cuts_are_a_proper_split(seed in 0u64..1000, pieces in 2usize..8, m in 1usize..20) {
        let u = BvTarget::PiecewiseConstant { pieces, seed }.sample(512);
        prop_assume!(u.windows(2).any(|w| w[0] != w[1]));
        let cuts = equal_variation_partition(&u, m).unwrap();
        prop_assert_eq!(cuts.len(), m + 1);
        prop_assert_eq!(cuts[0], 0);
        prop_assert_eq!(*cuts.last().unwrap(), 512);
        prop_assert!(cuts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn piecewise_mean_keeps_each_cell_sum(seed in 0u64..1000, m in 1usize..12) {
        let u = BvTarget::PiecewiseConstant { pieces: 5, seed }.sample(256);
        prop_assume!(u.windows(2).any(|w| w[0] != w[1]));
        let cuts = equal_variation_partition(&u, m).unwrap();
        let v = piecewise_mean(&u, &cuts);
        for w in cuts.windows(2) {
            let a: f64 = u[w[0]..w[1]].iter().sum();
            let b: f64 = v[w[0]..w[1]].iter().sum();
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn slope_fit_recovers_power_laws(p in -3.0f64..3.0, c in 0.01f64..100.0) {
        let x: Vec<f64> = (1..8).map(|i| (1 << i) as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| c * v.powf(p)).collect();
        prop_assert!((fit_slope(&x, &y) - p).abs() < 1e-9);
    }

    #[test]
    fn frame_isometry_holds_for_any_seed(seed in 0u64..10_000) {
        let m = FrameMatrix { grids: vec![vec![16], vec![4, 8]], slices: vec![1, 3], pairs: 2 };
        for c in isometry_checks(&m, seed, Fault::None) {
            prop_assert!(c.passed(), "{:?}", c);
        }
    }
}
