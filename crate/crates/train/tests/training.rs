use std::fs;
use std::path::Path;

use able_core::checkpoint::load_network;
use able_core::frame::DensityConfig;
use able_core::operator::{AbleNetwork, MultiplierKind, NetworkConfig};
use able_core::params::ParamStore;
use able_core::Tensor;
use able_pde::burgers::BurgersConfig;
use able_pde::generate::{generate, BurgersSpec, Problem};
use able_pde::Dataset;
use able_train::config::Schedule;
use able_train::trainer::{build_network, evaluate};
use able_train::{gradient_check, train, train_split, TrainConfig, TrainError};

fn burgers_data(samples: usize) -> Dataset {
    let spec = BurgersSpec {
        resolution: 256,
        stride: 4,
        solver: BurgersConfig {
            t_final: 0.2,
            ..BurgersConfig::default()
        },
        ..BurgersSpec::default()
    };
    generate(&Problem::Burgers(spec), samples, 4).unwrap().0
}

fn tiny_net(slices: usize) -> NetworkConfig {
    NetworkConfig {
        width: 6,
        layers: 2,
        modes: 8,
        slices,
        projection_width: 12,
        ..NetworkConfig::default()
    }
}

fn cfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch_size: 4,
        learning_rate: 3e-3,
        seed: 9,
        ..TrainConfig::default()
    }
}

fn file(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

#[test]
fn zero_epochs_is_initial_evaluation_only() {
    let data = burgers_data(6);
    let (net, mut store) = build_network(tiny_net(2), 1).unwrap();
    let before = store.clone();
    let r = train(&net, &mut store, &data, &cfg(0), None).unwrap();
    assert!(r.epochs.is_empty());
    assert_eq!(store, before);
    assert_eq!(r.final_test_rel_l2, r.initial.test_rel_l2);
}

#[test]
fn zero_learning_rate_freezes_everything() {
    let data = burgers_data(2);
    let (net, mut store) = build_network(tiny_net(2), 1).unwrap();
    let before = store.clone();
    let c = TrainConfig {
        learning_rate: 0.0,
        train_samples: Some(2),
        test_samples: Some(0),
        epochs: 1,
        ..cfg(1)
    };
    train(&net, &mut store, &data, &c, None).unwrap();
    assert_eq!(store, before);

    let data = burgers_data(8);
    let c = TrainConfig {
        learning_rate: 0.0,
        epochs: 3,
        ..cfg(3)
    };
    let r = train(&net, &mut store, &data, &c, None).unwrap();
    for rec in &r.epochs {
        assert_eq!(rec.train_loss.to_bits(), r.initial.train_loss.to_bits());
        assert_eq!(rec.test_rel_l2, r.initial.test_rel_l2);
    }
}

#[test]
fn runs_are_deterministic_and_blind_to_test_order() {
    let data = burgers_data(10);
    let c = TrainConfig {
        train_samples: Some(6),
        test_samples: Some(4),
        ..cfg(3)
    };
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().unwrap()).collect();
    let run = |dir: &Path, test_order: &[usize]| {
        let (net, mut store) = build_network(tiny_net(2), 5).unwrap();
        let (tr, te) = able_train::split_indices(10, 6, 4, c.seed).unwrap();
        let te: Vec<usize> = test_order.iter().map(|&i| te[i]).collect();
        train_split(&net, &mut store, &data.select(&tr).unwrap(), &data.select(&te).unwrap(), &c, Some(dir)).unwrap()
    };
    let a = run(dirs[0].path(), &[0, 1, 2, 3]);
    let b = run(dirs[1].path(), &[0, 1, 2, 3]);
    let p = run(dirs[2].path(), &[3, 1, 0, 2]);
    for name in ["model.ckpt", "best.ckpt"] {
        assert_eq!(file(dirs[0].path(), name), file(dirs[1].path(), name));
        assert_eq!(file(dirs[0].path(), name), file(dirs[2].path(), name));
    }
    let strip = |r: &able_train::TrainReport| {
        r.records().map(|e| (e.train_loss.to_bits(), e.test_rel_l2.map(f64::to_bits))).collect::<Vec<_>>()
    };
    assert_eq!(strip(&a), strip(&b));
    assert_eq!(strip(&a), strip(&p));
    assert_eq!(a.best_epoch, p.best_epoch);
}

#[test]
fn output_files_and_eval_consistency() {
    let data = burgers_data(8);
    let dir = tempfile::tempdir().unwrap();
    let (net, mut store) = build_network(tiny_net(2), 2).unwrap();
    let r = train(&net, &mut store, &data, &cfg(1), Some(dir.path())).unwrap();
    let lines = String::from_utf8(file(dir.path(), "metrics.jsonl")).unwrap();
    let kinds: Vec<String> = lines
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds, vec!["initial", "epoch"]);
    let summary = String::from_utf8(file(dir.path(), "summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);

    let (net2, store2, header) = load_network(&dir.path().join("model.ckpt")).unwrap();
    assert_eq!(header["epoch"], 1);
    let (n_train, _) = cfg(1).split_sizes(8).unwrap();
    let (tr, _) = able_train::split_indices(8, n_train, 8 - n_train, 9).unwrap();
    let again = evaluate(&net2, &store2, &data.select(&tr).unwrap(), 3).unwrap();
    assert!((again - r.final_train_rel_l2).abs() < 1e-12);
    assert_eq!(r.epochs.last().unwrap().train_rel_l2, Some(r.final_train_rel_l2));
}

#[test]
fn divergence_names_epoch_and_batch() {
    let data = burgers_data(8);
    let (net, mut store) = build_network(tiny_net(1), 3).unwrap();
    let c = TrainConfig {
        learning_rate: 1e200,
        schedule: Schedule::None,
        ..cfg(3)
    };
    match train(&net, &mut store, &data, &c, None) {
        Err(TrainError::NonFinite { epoch, batch }) => assert!(epoch >= 1 && batch < 2),
        Err(TrainError::Core(e)) => panic!("expected a non-finite loss report, got {e}"),
        other => panic!("expected failure, got {other:?}"),
    }
}

#[test]
fn short_run_reduces_training_loss() {
    let data = burgers_data(24);
    let (net, mut store) = build_network(tiny_net(2), 7).unwrap();
    let c = TrainConfig {
        epochs: 12,
        learning_rate: 1e-2,
        ..cfg(12)
    };
    let r = train(&net, &mut store, &data, &c, None).unwrap();
    let first = r.epochs.first().unwrap().train_loss;
    let last = r.epochs.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
}

#[test]
fn gradient_check_every_variant() {
    let f = Tensor::from_fn(&[2, 1, 32], |i| (0.37 * i as f64).sin() + 0.1 * (1.3 * i as f64).cos());
    let y = Tensor::from_fn(&[2, 1, 32], |i| (0.21 * i as f64).cos());
    for kind in [MultiplierKind::Diagonal, MultiplierKind::Cross] {
        for per_channel in [false, true] {
            for fd in [false, true] {
                let density = DensityConfig {
                    per_channel,
                    fd_features: fd,
                    ..DensityConfig::default_1d()
                };
                let nc = NetworkConfig {
                    layers: 1,
                    kind,
                    density: Some(density),
                    ..tiny_net(2)
                };
                let (net, store) = build_network(nc, 11).unwrap();
                let store = sharpen(&net, store);
                let r = gradient_check(&net, &store, &f, &y, 30, 1e-6, 1).unwrap();
                assert!(r.max_rel_error < 1e-4, "{kind:?} per_channel={per_channel} fd={fd}: {}", r.max_rel_error);
                let nonzero = r.entries_matching(".density.").filter(|e| e.analytic.abs() > 1e-12).count();
                assert!(nonzero > 0, "density gradients vanished");
            }
        }
    }
}

/// Larger density weights so that their gradients sit well above the
/// finite-difference noise floor.
fn sharpen(net: &AbleNetwork, mut store: ParamStore) -> ParamStore {
    for layer in &net.layers {
        if let Some(d) = &layer.density {
            for id in d.mlp_ids() {
                let t = store.get_mut(id);
                *t = t.scale(3.0);
            }
        }
    }
    store
}
