use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Activation, Tape, Var};
use crate::error::{contract, Result};
use crate::frame::DensityConfig;
use crate::params::{Bound, ParamGroup, ParamId, ParamStore};
use crate::tensor::Tensor;

use super::layer::AbleLayer;
use super::multiplier::MultiplierKind;

/// Architecture hyperparameters; also the checkpoint header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub dims: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Hidden width `C` of every spectral layer.
    pub width: usize,
    pub layers: usize,
    /// Retained modes per spatial axis.
    pub modes: usize,
    /// Number of slices `M`; one gives a Fourier layer.
    pub slices: usize,
    pub kind: MultiplierKind,
    /// Defaults to the 1D or 2D density design when absent.
    pub density: Option<DensityConfig>,
    pub activation: Activation,
    /// Per-layer activation switch; the last entry repeats if too short.
    pub layer_activations: Vec<bool>,
    /// Append normalised grid coordinates to the input.
    pub coordinates: bool,
    pub projection_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            dims: 1,
            in_channels: 1,
            out_channels: 1,
            width: 32,
            layers: 4,
            modes: 16,
            slices: 2,
            kind: MultiplierKind::Diagonal,
            density: None,
            activation: Activation::Gelu,
            layer_activations: vec![true, true, true, false],
            coordinates: true,
            projection_width: 128,
        }
    }
}

impl NetworkConfig {
    pub fn density_config(&self) -> DensityConfig {
        self.density.clone().unwrap_or_else(|| {
            if self.dims == 1 {
                DensityConfig::default_1d()
            } else {
                DensityConfig::default_2d()
            }
        })
    }

    pub fn layer_activation(&self, l: usize) -> Activation {
        let on = self
            .layer_activations
            .get(l)
            .or(self.layer_activations.last())
            .copied()
            .unwrap_or(true);
        if on {
            self.activation
        } else {
            Activation::None
        }
    }

    pub fn lifted_channels(&self) -> usize {
        self.in_channels + if self.coordinates { self.dims } else { 0 }
    }
}

/// Lifting, a stack of adaptive spectral layers and a two-layer projection.
#[derive(Clone, Debug, PartialEq)]
pub struct AbleNetwork {
    pub config: NetworkConfig,
    pub lift: (ParamId, ParamId),
    pub layers: Vec<AbleLayer>,
    pub project_hidden: (ParamId, ParamId),
    pub project_out: (ParamId, ParamId),
}

fn dense(store: &mut ParamStore, name: &str, cin: usize, cout: usize, rng: &mut impl Rng) -> (ParamId, ParamId) {
    let bound = 1.0 / (cin as f64).sqrt();
    let w = Tensor::from_fn(&[cout, cin], |_| rng.gen_range(-bound..bound));
    let b = Tensor::from_fn(&[cout], |_| rng.gen_range(-bound..bound));
    (
        store.add(format!("{name}.weight"), w, ParamGroup::Dense),
        store.add(format!("{name}.bias"), b, ParamGroup::Dense),
    )
}

impl AbleNetwork {
    pub fn new(store: &mut ParamStore, config: NetworkConfig, rng: &mut impl Rng) -> Result<Self> {
        if !(1..=2).contains(&config.dims) {
            return Err(contract(format!("dims must be 1 or 2, got {}", config.dims)));
        }
        if config.width == 0 || config.modes == 0 || config.slices == 0 || config.in_channels == 0 {
            return Err(contract("width, modes, slices and in_channels must be positive"));
        }
        let lift = dense(store, "lift", config.lifted_channels(), config.width, rng);
        let modes = vec![config.modes; config.dims];
        let density = config.density_config();
        let mut layers = Vec::with_capacity(config.layers);
        for l in 0..config.layers {
            layers.push(AbleLayer::new(
                store,
                &format!("layer{l}"),
                config.width,
                config.width,
                &modes,
                config.slices,
                config.kind,
                density.clone(),
                config.layer_activation(l),
                rng,
            )?);
        }
        let project_hidden = dense(store, "project.hidden", config.width, config.projection_width, rng);
        let project_out = dense(store, "project.out", config.projection_width, config.out_channels, rng);
        Ok(Self {
            config,
            lift,
            layers,
            project_hidden,
            project_out,
        })
    }

    /// Coordinate channels `x_i / N_i` for a batch, shape `(B, dims, spatial...)`.
    pub fn coordinate_channels(batch: usize, spatial: &[usize]) -> Tensor {
        let dims = spatial.len();
        let n: usize = spatial.iter().product();
        let mut shape = vec![batch, dims];
        shape.extend(spatial);
        Tensor::from_fn(&shape, |flat| {
            let x = flat % n;
            let axis = (flat / n) % dims;
            let stride: usize = spatial[axis + 1..].iter().product();
            ((x / stride) % spatial[axis]) as f64 / spatial[axis] as f64
        })
    }

    pub fn lift(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        let shape = tape.shape(f).to_vec();
        if shape.len() != 2 + self.config.dims || shape[1] != self.config.in_channels {
            return Err(contract(format!(
                "network expects (B, {}, {} spatial axes), got {shape:?}",
                self.config.in_channels, self.config.dims
            )));
        }
        let input = if self.config.coordinates {
            let coords = tape.constant(Self::coordinate_channels(shape[0], &shape[2..]));
            tape.concat(&[f, coords], 1)?
        } else {
            f
        };
        tape.channel_linear(input, bound.var(self.lift.0), Some(bound.var(self.lift.1)))
    }

    pub fn project(&self, tape: &mut Tape, bound: &Bound, h: Var) -> Result<Var> {
        let h = tape.channel_linear(h, bound.var(self.project_hidden.0), Some(bound.var(self.project_hidden.1)))?;
        let h = tape.gelu(h)?;
        tape.channel_linear(h, bound.var(self.project_out.0), Some(bound.var(self.project_out.1)))
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        let mut h = self.lift(tape, bound, f)?;
        for layer in &self.layers {
            h = layer.forward(tape, bound, h)?;
        }
        self.project(tape, bound, h)
    }

    /// Inference on a concrete batch.
    pub fn predict(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let bound = store.bind(&mut tape);
        let fv = tape.constant(f.clone());
        let out = self.forward(&mut tape, &bound, fv)?;
        Ok(tape.value(out).clone())
    }

    /// Mean density entropy per layer on a concrete batch (zero for `M = 1`).
    pub fn density_entropies(&self, store: &ParamStore, f: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::inference();
        let bound = store.bind(&mut tape);
        let fv = tape.constant(f.clone());
        let mut h = self.lift(&mut tape, &bound, fv)?;
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let entropy = match layer.density(&mut tape, &bound, h)? {
                Some(p) => crate::frame::DensityField::new_unchecked(tape.value(p).clone(), layer.dims).mean_entropy(),
                None => 0.0,
            };
            out.push(entropy);
            h = layer.forward(&mut tape, &bound, h)?;
        }
        Ok(out)
    }
}
