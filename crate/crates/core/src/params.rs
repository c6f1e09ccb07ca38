//! Named parameter storage shared by every trainable component.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::autograd::{Gradients, Tape, Var};
use crate::error::{contract, Result};
use crate::tensor::{Dtype, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Which regularisation group a parameter belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    /// Spectral multipliers; the only group receiving weight decay.
    Spectral,
    Dense,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub group: ParamGroup,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
}

/// Parameters placed on a tape, indexed by [`ParamId`].
pub struct Bound {
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Collect the gradient of every parameter, substituting zeros for
    /// parameters the loss does not depend on.
    pub fn gradients(&self, store: &ParamStore, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars
            .iter()
            .zip(&store.params)
            .map(|(&v, p)| {
                grads
                    .take(v)
                    .unwrap_or_else(|| Tensor::zeros(p.value.shape(), p.value.dtype()))
            })
            .collect()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor, group: ParamGroup) -> ParamId {
        self.params.push(Param {
            name: name.into(),
            value,
            group,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.params[id.0].value
    }

    pub fn params(&self) -> &[Param] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param] {
        &mut self.params
    }

    pub fn id_by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    /// Total number of real scalars (complex entries count twice).
    pub fn scalar_count(&self) -> usize {
        self.params
            .iter()
            .map(|p| match p.value.dtype() {
                Dtype::Real => p.value.len(),
                Dtype::Complex => 2 * p.value.len(),
            })
            .sum()
    }

    /// Place every parameter on `tape` as a differentiable leaf.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|p| tape.leaf(p.value.clone())).collect(),
        }
    }

    /// Replace all values, checking names and shapes.
    pub fn load_values(&mut self, values: Vec<(String, Tensor)>) -> Result<()> {
        if values.len() != self.params.len() {
            return Err(contract(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                values.len()
            )));
        }
        for (p, (name, v)) in self.params.iter_mut().zip(values) {
            if p.name != name || p.value.shape() != v.shape() || p.value.dtype() != v.dtype() {
                return Err(contract(format!(
                    "parameter mismatch: expected {} {:?} {:?}, got {} {:?} {:?}",
                    p.name,
                    p.value.shape(),
                    p.value.dtype(),
                    name,
                    v.shape(),
                    v.dtype()
                )));
            }
            p.value = v;
        }
        Ok(())
    }
}

/// Gaussian initialisation with the given standard deviation.
pub fn gaussian(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let normal = Normal::new(0.0, std).expect("finite std");
    Tensor::from_fn(shape, |_| normal.sample(rng))
}
