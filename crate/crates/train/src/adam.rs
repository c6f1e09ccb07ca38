//! Adam with bias correction; complex entries update as independent
//! real and imaginary parts.

use able_core::params::{ParamGroup, ParamStore};
use able_core::tensor::{Dtype, Storage};
use able_core::Tensor;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros = |p: &Tensor| vec![0.0; reals(p)];
        Self {
            step: 0,
            m: store.params().iter().map(|p| zeros(&p.value)).collect(),
            v: store.params().iter().map(|p| zeros(&p.value)).collect(),
        }
    }
}

fn reals(t: &Tensor) -> usize {
    match t.dtype() {
        Dtype::Real => t.len(),
        Dtype::Complex => 2 * t.len(),
    }
}

fn flat(t: &Tensor) -> Vec<f64> {
    match t.storage() {
        Storage::Real(v) => v.clone(),
        Storage::Complex(v) => v.iter().flat_map(|z| [z.re, z.im]).collect(),
    }
}

/// One update. Weight decay is added to the gradient of spectral
/// parameters only.
pub fn adam_step(
    store: &mut ParamStore,
    grads: &[Tensor],
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
    weight_decay: f64,
) -> Result<()> {
    if grads.len() != store.len() || state.m.len() != store.len() {
        return Err(TrainError::Domain(format!(
            "{} parameters, {} gradients, {} moment slots",
            store.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in store.params_mut().iter_mut().enumerate() {
        let g = &grads[i];
        if g.shape() != p.value.shape() || g.dtype() != p.value.dtype() || state.m[i].len() != reals(&p.value) {
            return Err(TrainError::Domain(format!(
                "gradient of {} has shape {:?}, parameter has {:?}",
                p.name,
                g.shape(),
                p.value.shape()
            )));
        }
        let decay = if p.group == ParamGroup::Spectral { weight_decay } else { 0.0 };
        let mut x = flat(&p.value);
        let gv = flat(g);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..x.len() {
            let gj = gv[j] + decay * x[j];
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
            x[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + cfg.eps);
        }
        let shape = p.value.shape().to_vec();
        p.value = match p.value.dtype() {
            Dtype::Real => Tensor::real(&shape, x)?,
            Dtype::Complex => Tensor::complex(&shape, x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect())?,
        };
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::real(&[1], vec![v]).unwrap(), ParamGroup::Dense);
        s
    }

    #[test]
    fn first_step_closed_form() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &[Tensor::real(&[1], vec![1.0]).unwrap()], &mut st, 0.1, &AdamConfig::default(), 0.0).unwrap();
        // m̂ = g, v̂ = g², so the step is lr·g/(|g| + eps)
        let x = s.params()[0].value.as_real().unwrap()[0];
        assert!((x + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert!((x + 0.1).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut s = scalar_store(2.5);
        let mut st = AdamState::new(&s);
        adam_step(&mut s, &[Tensor::real(&[1], vec![0.0]).unwrap()], &mut st, 0.1, &AdamConfig::default(), 0.0).unwrap();
        assert_eq!(s.params()[0].value.as_real().unwrap()[0], 2.5);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn complex_parts_are_independent() {
        let mut s = ParamStore::new();
        s.add("z", Tensor::complex(&[1], vec![Complex64::new(0.0, 0.0)]).unwrap(), ParamGroup::Spectral);
        let mut st = AdamState::new(&s);
        let g = Tensor::complex(&[1], vec![Complex64::new(1.0, -4.0)]).unwrap();
        adam_step(&mut s, &[g], &mut st, 0.1, &AdamConfig::default(), 0.0).unwrap();
        let z = s.params()[0].value.as_complex().unwrap()[0];
        assert!((z.re + 0.1).abs() < 1e-6 && (z.im - 0.1).abs() < 1e-6);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut s = scalar_store(0.0);
        let mut st = AdamState::new(&s);
        let r = adam_step(&mut s, &[Tensor::real(&[2], vec![1.0, 1.0]).unwrap()], &mut st, 0.1, &AdamConfig::default(), 0.0);
        assert!(matches!(r, Err(TrainError::Domain(_))));
    }
}
