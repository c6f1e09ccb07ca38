//! Temperature sweep: one training run per temperature at a shared seed
//! and budget, with the density entropy before and after.

use able_core::operator::{AbleNetwork, NetworkConfig};
use able_core::params::ParamStore;
use able_core::rng::stream;
use able_core::{Tape, Tensor};
use able_pde::Dataset;
use able_train::trainer::build_network;
use able_train::{train_split, TrainConfig};
use serde::Serialize;

use crate::error::{Result, VerifyError};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TemperatureRow {
    pub temperature: f64,
    pub initial_test_rel_l2: Option<f64>,
    pub final_test_rel_l2: Option<f64>,
    pub final_train_rel_l2: f64,
    pub seconds_per_epoch: f64,
    /// Mean over layers of the mean per-point density entropy (nats).
    pub initial_entropy: f64,
    pub final_entropy: f64,
    /// Largest `|p − 1/M|` seen before and after training.
    pub max_uniform_deviation: f64,
}

/// Density values of every adaptive layer on a concrete batch.
pub fn layer_densities(net: &AbleNetwork, store: &ParamStore, f: &Tensor) -> Result<Vec<Tensor>> {
    let mut tape = Tape::inference();
    let bound = store.bind(&mut tape);
    let fv = tape.constant(f.clone());
    let mut h = net.lift(&mut tape, &bound, fv)?;
    let mut out = Vec::new();
    for layer in &net.layers {
        if let Some(p) = layer.density(&mut tape, &bound, h)? {
            out.push(tape.value(p).clone());
        }
        h = layer.forward(&mut tape, &bound, h)?;
    }
    Ok(out)
}

fn uniform_deviation(densities: &[Tensor]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for p in densities {
        let m = p.shape()[1] as f64;
        for &v in p.as_real()? {
            worst = worst.max((v - 1.0 / m).abs());
        }
    }
    Ok(worst)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

fn with_temperature(template: &NetworkConfig, t: f64) -> NetworkConfig {
    let mut cfg = template.clone();
    let mut d = cfg.density_config();
    d.temperature = t;
    cfg.density = Some(d);
    cfg
}

/// Train one model per temperature. Entropies are measured on the first
/// `probe` test samples (training samples when the test set is empty).
pub fn temperature_sweep(
    template: &NetworkConfig,
    train: &Dataset,
    test: &Dataset,
    temperatures: &[f64],
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<TemperatureRow>> {
    let source = if test.is_empty() { train } else { test };
    let probe = source.select(&(0..source.len().min(4)).collect::<Vec<_>>()).map_err(able_train::TrainError::from)?;
    let mut rows = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        let (net, mut store) = build_network(with_temperature(template, t), seed)?;
        let before = layer_densities(&net, &store, &probe.inputs)?;
        let initial_entropy = mean(&net.density_entropies(&store, &probe.inputs)?);
        let report = train_split(&net, &mut store, train, test, cfg, None)?;
        let after = layer_densities(&net, &store, &probe.inputs)?;
        rows.push(TemperatureRow {
            temperature: t,
            initial_test_rel_l2: report.initial.test_rel_l2,
            final_test_rel_l2: report.final_test_rel_l2,
            final_train_rel_l2: report.final_train_rel_l2,
            seconds_per_epoch: report.seconds_per_epoch(),
            initial_entropy,
            final_entropy: mean(&net.density_entropies(&store, &probe.inputs)?),
            max_uniform_deviation: uniform_deviation(&before)?.max(uniform_deviation(&after)?),
        });
    }
    Ok(rows)
}

/// Mean density entropy of one set of weights evaluated at each temperature.
/// The temperature must not be a learned parameter.
pub fn entropy_at_shared_weights(
    template: &NetworkConfig,
    store: &ParamStore,
    input: &Tensor,
    temperatures: &[f64],
) -> Result<Vec<f64>> {
    if template.density_config().learn_temperature {
        return Err(VerifyError::Domain("shared-weight entropies need a fixed temperature".into()));
    }
    let mut out = Vec::with_capacity(temperatures.len());
    for &t in temperatures {
        // the layout does not depend on T, so any build can read `store`
        let mut scratch = ParamStore::new();
        let net = AbleNetwork::new(&mut scratch, with_temperature(template, t), &mut stream(0, "init"))?;
        if scratch.len() != store.len() {
            return Err(VerifyError::Domain("weights do not match the network template".into()));
        }
        out.push(mean(&net.density_entropies(store, input)?));
    }
    Ok(out)
}

pub fn sweep_table(rows: &[TemperatureRow]) -> String {
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6e}"));
    let mut s = String::from("temperature  initial_test  final_test    entropy_0  entropy_T  max|p-1/M|\n");
    for r in rows {
        s.push_str(&format!(
            "{:<11}  {:<12}  {:<12}  {:<9.5}  {:<9.5}  {:.3e}\n",
            r.temperature,
            opt(r.initial_test_rel_l2),
            opt(r.final_test_rel_l2),
            r.initial_entropy,
            r.final_entropy,
            r.max_uniform_deviation
        ));
    }
    s
}
