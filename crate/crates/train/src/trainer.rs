//! Minibatch training loop with held-out evaluation.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use able_core::checkpoint::save_network;
use able_core::operator::{count_flops, AbleNetwork, FlopReport, NetworkConfig};
use able_core::params::ParamStore;
use able_core::rng::stream;
use able_core::Tape;
use able_pde::Dataset;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::adam::{adam_step, AdamState};
use crate::config::TrainConfig;
use crate::error::{Result, TrainError};
use crate::loss::{order_free_mean, relative_l2_per_sample, relative_l2_tape};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// `initial` for the untrained model, `epoch` otherwise.
    pub kind: String,
    pub epoch: usize,
    pub lr: f64,
    /// Mean minibatch loss seen during the epoch.
    pub train_loss: f64,
    /// Full training-set evaluation; present for the initial and last records.
    pub train_rel_l2: Option<f64>,
    pub test_rel_l2: Option<f64>,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainReport {
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_test_rel_l2: Option<f64>,
    pub final_test_rel_l2: Option<f64>,
    pub final_train_rel_l2: f64,
    pub parameters: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Forward cost of one sample.
    pub flops: FlopReport,
}

impl TrainReport {
    pub fn seconds_per_epoch(&self) -> f64 {
        if self.epochs.is_empty() {
            return 0.0;
        }
        self.epochs.iter().map(|r| r.seconds).sum::<f64>() / self.epochs.len() as f64
    }

    /// Records as they appear in `metrics.jsonl`.
    pub fn records(&self) -> impl Iterator<Item = &EpochRecord> {
        std::iter::once(&self.initial).chain(&self.epochs)
    }
}

/// Fresh network whose initial weights come from the `init` stream of `seed`.
pub fn build_network(cfg: NetworkConfig, seed: u64) -> Result<(AbleNetwork, ParamStore)> {
    let mut store = ParamStore::new();
    let net = AbleNetwork::new(&mut store, cfg, &mut stream(seed, "init"))?;
    Ok((net, store))
}

/// Shuffled `(train, test)` index blocks.
pub fn split_indices(n: usize, n_train: usize, n_test: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_train + n_test > n {
        return Err(TrainError::Config(format!("{n_train} + {n_test} samples exceed {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut stream(seed, "split"));
    Ok((idx[..n_train].to_vec(), idx[n_train..n_train + n_test].to_vec()))
}

/// Per-sample relative L2 over a dataset, evaluated in chunks.
pub fn evaluate_per_sample(net: &AbleNetwork, store: &ParamStore, data: &Dataset, batch: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(data.len());
    let idx: Vec<usize> = (0..data.len()).collect();
    for chunk in idx.chunks(batch.max(1)) {
        let b = data.select(chunk)?;
        let pred = net.predict(store, &b.inputs)?;
        out.extend(relative_l2_per_sample(&pred, &b.targets)?);
    }
    Ok(out)
}

/// Mean relative L2; independent of sample order and chunking.
pub fn evaluate(net: &AbleNetwork, store: &ParamStore, data: &Dataset, batch: usize) -> Result<f64> {
    Ok(order_free_mean(&evaluate_per_sample(net, store, data, batch)?))
}

fn check_shapes(net: &AbleNetwork, data: &Dataset) -> Result<()> {
    let c = &net.config;
    if data.grid.dims() != c.dims || data.in_channels() != c.in_channels || data.out_channels() != c.out_channels {
        return Err(TrainError::Config(format!(
            "model expects {}D data with {} -> {} channels, dataset is {}D with {} -> {}",
            c.dims,
            c.in_channels,
            c.out_channels,
            data.grid.dims(),
            data.in_channels(),
            data.out_channels()
        )));
    }
    Ok(())
}

/// Split `data` by seed and train.
pub fn train(net: &AbleNetwork, store: &mut ParamStore, data: &Dataset, cfg: &TrainConfig, out: Option<&Path>) -> Result<TrainReport> {
    cfg.validate()?;
    let (n_train, n_test) = cfg.split_sizes(data.len())?;
    let (tr, te) = split_indices(data.len(), n_train, n_test, cfg.seed)?;
    train_split(net, store, &data.select(&tr)?, &data.select(&te)?, cfg, out)
}

/// Train on `train`, selecting the best checkpoint on `test`. With `out`
/// set, writes `metrics.jsonl`, `summary.csv`, `model.ckpt` and `best.ckpt`.
pub fn train_split(
    net: &AbleNetwork,
    store: &mut ParamStore,
    train: &Dataset,
    test: &Dataset,
    cfg: &TrainConfig,
    out: Option<&Path>,
) -> Result<TrainReport> {
    cfg.validate()?;
    check_shapes(net, train)?;
    check_shapes(net, test)?;
    if train.is_empty() {
        return Err(TrainError::Config("empty training set".into()));
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut metrics = match out {
        Some(dir) => Some(fs::File::create(dir.join("metrics.jsonl"))?),
        None => None,
    };
    let mut log = |r: &EpochRecord| -> Result<()> {
        if let Some(f) = metrics.as_mut() {
            writeln!(f, "{}", serde_json::to_string(r).map_err(|e| TrainError::Io(e.to_string()))?)?;
        }
        Ok(())
    };
    let test_eval = |store: &ParamStore| -> Result<Option<f64>> {
        if test.is_empty() {
            Ok(None)
        } else {
            Ok(Some(evaluate(net, store, test, cfg.batch_size)?))
        }
    };
    let save = |store: &ParamStore, name: &str, epoch: usize, test_loss: Option<f64>| -> Result<()> {
        if let Some(dir) = out {
            let extra = json!({"epoch": epoch, "test_rel_l2": test_loss, "train": cfg});
            save_network(&dir.join(name), net, store, extra)?;
        }
        Ok(())
    };

    let start = Instant::now();
    let train0 = evaluate(net, store, train, cfg.batch_size)?;
    let test0 = test_eval(store)?;
    let initial = EpochRecord {
        kind: "initial".into(),
        epoch: 0,
        lr: cfg.schedule.rate(cfg.learning_rate, 1, cfg.epochs),
        train_loss: train0,
        train_rel_l2: Some(train0),
        test_rel_l2: test0,
        seconds: start.elapsed().as_secs_f64(),
    };
    log(&initial)?;
    let selection = |rec: &EpochRecord| rec.test_rel_l2.unwrap_or(rec.train_loss);
    let mut best = (0, selection(&initial));
    save(store, "best.ckpt", 0, test0)?;

    let mut state = AdamState::new(store);
    let mut records = Vec::with_capacity(cfg.epochs);
    let mut final_train = train0;
    for epoch in 1..=cfg.epochs {
        let start = Instant::now();
        let lr = cfg.schedule.rate(cfg.learning_rate, epoch, cfg.epochs);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut stream(cfg.seed, &format!("shuffle/{epoch}")));
        let mut seen = Vec::with_capacity(train.len());
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch = train.select(chunk)?;
            let mut tape = Tape::new();
            let bound = store.bind(&mut tape);
            let x = tape.constant(batch.inputs.clone());
            let y = net.forward(&mut tape, &bound, x)?;
            if !tape.value(y).all_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            let (per, loss) = relative_l2_tape(&mut tape, y, &batch.targets)?;
            if !tape.value(loss).item()?.is_finite() {
                return Err(TrainError::NonFinite { epoch, batch: bi });
            }
            seen.extend_from_slice(tape.value(per).as_real()?);
            let mut grads = tape.backward(loss)?;
            let grads = bound.gradients(store, &mut grads);
            adam_step(store, &grads, &mut state, lr, &cfg.adam, cfg.weight_decay)?;
        }
        let test_loss = test_eval(store)?;
        let last = epoch == cfg.epochs;
        let train_rel = if last { Some(evaluate(net, store, train, cfg.batch_size)?) } else { None };
        if let Some(t) = train_rel {
            final_train = t;
        }
        let rec = EpochRecord {
            kind: "epoch".into(),
            epoch,
            lr,
            train_loss: order_free_mean(&seen),
            train_rel_l2: train_rel,
            test_rel_l2: test_loss,
            seconds: start.elapsed().as_secs_f64(),
        };
        log(&rec)?;
        if selection(&rec) < best.1 {
            best = (epoch, selection(&rec));
            save(store, "best.ckpt", epoch, test_loss)?;
        }
        records.push(rec);
    }
    let last_test = records.last().map_or(test0, |r| r.test_rel_l2);
    save(store, "model.ckpt", cfg.epochs, last_test)?;

    let report = TrainReport {
        best_epoch: best.0,
        best_test_rel_l2: if test.is_empty() { None } else { Some(best.1) },
        final_test_rel_l2: last_test,
        final_train_rel_l2: final_train,
        parameters: store.scalar_count(),
        train_samples: train.len(),
        test_samples: test.len(),
        flops: count_flops(net, &train.grid),
        initial,
        epochs: records,
    };
    if let Some(dir) = out {
        write_summary(&dir.join("summary.csv"), net, &report)?;
    }
    Ok(report)
}

pub const SUMMARY_HEADER: &str =
    "slices,kind,parameters,epochs,best_epoch,best_test_rel_l2,final_test_rel_l2,final_train_rel_l2,seconds_per_epoch,flops_per_sample";

pub fn summary_row(net: &AbleNetwork, r: &TrainReport) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
    format!(
        "{},{},{},{},{},{},{},{:.10e},{:.6},{:.6e}",
        net.config.slices,
        serde_json::to_value(net.config.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        r.parameters,
        r.epochs.len(),
        r.best_epoch,
        opt(r.best_test_rel_l2),
        opt(r.final_test_rel_l2),
        r.final_train_rel_l2,
        r.seconds_per_epoch(),
        r.flops.total,
    )
}

fn write_summary(path: &Path, net: &AbleNetwork, r: &TrainReport) -> Result<()> {
    fs::write(path, format!("{SUMMARY_HEADER}\n{}\n", summary_row(net, r)))?;
    Ok(())
}
