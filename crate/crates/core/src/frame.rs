//! The adaptive frame `e_{k,m}(x) = √p(x,m)·e^{ik·x}`.
//!
//! A [`DensityField`] is a soft partition of unity over `M` slices. Analysis
//! ([`able_forward`]) weights the input by `√p(·,m)` and takes a unitary FFT
//! of every slice; synthesis ([`able_inverse`]) inverts each slice and
//! recombines with the same weights. Because `Σ_m p(x,m) = 1`, analysis is
//! an isometry and synthesis is its left inverse.
//!
//! Layouts: fields are `(B, C, spatial...)`, densities `(B, M, Cp, spatial...)`
//! with `Cp = 1` for a shared basis or `Cp = C` per channel, and lifted
//! coefficients `(B, M, C, freq...)`.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{softmax_values, Activation, Tape, Var};
use crate::error::{contract, Error, Result};
use crate::fft::{self, Direction, Norm};
use crate::params::{gaussian, Bound, ParamGroup, ParamId, ParamStore};
use crate::tensor::{numel, Dtype, Tensor};

/// Offset inside `√(p + ε)`, keeping the gradient finite at `p = 0`.
pub const FRAME_EPS: f64 = 1e-12;

/// Row-sum tolerance for a valid density.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// First-difference stencil (as a convolution kernel).
pub const FIRST_DIFF: [f64; 3] = [0.5, 0.0, -0.5];
/// Negated second-difference stencil.
pub const SECOND_DIFF: [f64; 3] = [-0.5, 1.0, -0.5];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityConfig {
    /// Hidden widths of the softmax MLP.
    pub hidden: Vec<usize>,
    /// Prepend `[f, f', f'', 1]` finite-difference features (1D only).
    pub fd_features: bool,
    /// Identity skip from the first to the third hidden layer.
    pub residual: bool,
    pub activation: Activation,
    pub temperature: f64,
    pub learn_temperature: bool,
    /// One density per channel instead of a shared basis.
    pub per_channel: bool,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self::default_1d()
    }
}

impl DensityConfig {
    /// Four-layer MLP `[3C+1, h, h/2, h, M]` on finite-difference features, `h = 16`.
    pub fn default_1d() -> Self {
        Self {
            hidden: vec![16, 8, 16],
            fd_features: true,
            residual: true,
            activation: Activation::Silu,
            temperature: 0.8,
            learn_temperature: false,
            per_channel: false,
        }
    }

    /// Two-layer MLP `[C, 24, M]` on the raw channels.
    pub fn default_2d() -> Self {
        Self {
            hidden: vec![24],
            fd_features: false,
            residual: false,
            activation: Activation::Silu,
            temperature: 0.8,
            learn_temperature: false,
            per_channel: false,
        }
    }
}

/// Softmax-MLP producing the density `p_θ(x, m)` from local features of `f`.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityNetwork {
    pub config: DensityConfig,
    pub in_channels: usize,
    pub slices: usize,
    pub dims: usize,
    layers: Vec<(ParamId, ParamId)>,
    log_temperature: Option<ParamId>,
}

impl DensityNetwork {
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        slices: usize,
        dims: usize,
        config: DensityConfig,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if slices == 0 {
            return Err(contract("density needs at least one slice"));
        }
        if !(config.temperature > 0.0) {
            return Err(Error::Domain {
                op: "density",
                msg: format!("temperature must be positive, got {}", config.temperature),
            });
        }
        if config.fd_features && dims != 1 {
            return Err(contract("finite-difference features are 1D only"));
        }
        if config.residual && (config.hidden.len() < 3 || config.hidden[0] != config.hidden[2]) {
            return Err(contract(
                "residual skip needs at least three hidden layers with equal first and third widths",
            ));
        }
        let features = if config.fd_features {
            3 * in_channels + 1
        } else {
            in_channels
        };
        let out = slices * if config.per_channel { in_channels } else { 1 };
        let mut widths = vec![features];
        widths.extend(&config.hidden);
        widths.push(out);
        let mut layers = Vec::new();
        let n_layers = widths.len() - 1;
        for (i, pair) in widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let std = if i + 1 == n_layers {
                0.1 / (fan_in as f64).sqrt()
            } else {
                1.0 / (fan_in as f64).sqrt()
            };
            let w = store.add(
                format!("{prefix}.mlp{i}.weight"),
                gaussian(&[fan_out, fan_in], std, rng),
                ParamGroup::Dense,
            );
            let b = store.add(
                format!("{prefix}.mlp{i}.bias"),
                Tensor::zeros(&[fan_out], Dtype::Real),
                ParamGroup::Dense,
            );
            layers.push((w, b));
        }
        let log_temperature = config.learn_temperature.then(|| {
            store.add(
                format!("{prefix}.log_temperature"),
                Tensor::scalar(config.temperature.ln()),
                ParamGroup::Dense,
            )
        });
        Ok(Self {
            config,
            in_channels,
            slices,
            dims,
            layers,
            log_temperature,
        })
    }

    pub fn density_channels(&self) -> usize {
        if self.config.per_channel {
            self.in_channels
        } else {
            1
        }
    }

    /// Layer widths `[in, hidden..., out]`.
    pub fn widths(&self, store: &ParamStore) -> Vec<usize> {
        let mut w = vec![store.get(self.layers[0].0).shape()[1]];
        w.extend(self.layers.iter().map(|(id, _)| store.get(*id).shape()[0]));
        w
    }

    pub fn temperature(&self, store: &ParamStore) -> f64 {
        match self.log_temperature {
            Some(id) => store.get(id).as_real().map(|v| v[0].exp()).unwrap_or(f64::NAN),
            None => self.config.temperature,
        }
    }

    /// MLP weights and biases, excluding the temperature.
    pub fn mlp_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|(w, b)| [*w, *b]).collect()
    }

    pub fn weight_ids(&self) -> Vec<ParamId> {
        let mut ids = self.mlp_ids();
        ids.extend(self.log_temperature);
        ids
    }

    fn features(&self, tape: &mut Tape, f: Var) -> Result<Var> {
        if !self.config.fd_features {
            return Ok(f);
        }
        let d1 = tape.periodic_conv(f, &FIRST_DIFF)?;
        let d2 = tape.periodic_conv(f, &SECOND_DIFF)?;
        let mut ones_shape = tape.shape(f).to_vec();
        ones_shape[1] = 1;
        let ones = tape.constant(Tensor::ones(&ones_shape));
        tape.concat(&[f, d1, d2, ones], 1)
    }

    /// Energies `ε_θ(x, m)` with shape `(B, M, Cp, spatial...)`.
    pub fn energies(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        let shape = tape.shape(f).to_vec();
        if shape.len() != 2 + self.dims || shape[1] != self.in_channels {
            return Err(contract(format!(
                "density network expects (B, {}, {} spatial axes), got {shape:?}",
                self.in_channels, self.dims
            )));
        }
        let mut h = self.features(tape, f)?;
        let mut first_hidden = None;
        let last = self.layers.len() - 1;
        for (i, (w, b)) in self.layers.iter().enumerate() {
            h = tape.channel_linear(h, bound.var(*w), Some(bound.var(*b)))?;
            if i == last {
                break;
            }
            h = tape.activation(h, self.config.activation)?;
            if i == 0 {
                first_hidden = Some(h);
            }
            if i == 2 && self.config.residual {
                h = tape.add(h, first_hidden.expect("first hidden layer recorded"))?;
            }
        }
        let mut eshape = vec![shape[0], self.slices, self.density_channels()];
        eshape.extend(&shape[2..]);
        tape.reshape(h, &eshape)
    }

    /// Density `p_θ(x, m)` as a tape node, softmax over the slice axis.
    pub fn density(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        let e = self.energies(tape, bound, f)?;
        match self.log_temperature {
            Some(id) => {
                let lt = bound.var(id);
                let neg = tape.neg(lt)?;
                let inv_t = tape.exp(neg)?;
                let scaled = tape.mul_scalar_var(e, inv_t)?;
                tape.softmax(scaled, 1, 1.0)
            }
            None => tape.softmax(e, 1, self.config.temperature),
        }
    }
}

/// Energies for a concrete input, evaluated without recording gradients.
pub fn density_energies(f: &Tensor, net: &DensityNetwork, store: &ParamStore) -> Result<Tensor> {
    let mut tape = Tape::inference();
    let bound = store.bind(&mut tape);
    let fv = tape.constant(f.clone());
    let e = net.energies(&mut tape, &bound, fv)?;
    Ok(tape.value(e).clone())
}

/// Discrete density `p(x, m)` over `M` slices, normalised at every point.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    values: Tensor,
    dims: usize,
}

impl DensityField {
    /// Validate and wrap a `(B, M, Cp, spatial...)` tensor.
    pub fn new(values: Tensor, dims: usize) -> Result<Self> {
        let field = Self { values, dims };
        let residual = field.normalization_residual()?;
        if residual > NORMALIZATION_TOL {
            return Err(contract(format!(
                "density rows must sum to 1 (worst deviation {residual:e})"
            )));
        }
        let v = field.values.as_real()?;
        if let Some(bad) = v.iter().find(|&&x| !(-1e-15..=1.0 + 1e-12).contains(&x)) {
            return Err(contract(format!("density entry {bad} outside [0, 1]")));
        }
        Ok(field)
    }

    /// Wrap without validation. Used to inject deliberately broken densities.
    pub fn new_unchecked(values: Tensor, dims: usize) -> Self {
        Self { values, dims }
    }

    /// `p ≡ 1/M` for a batch of `batch` shared-basis fields.
    pub fn uniform(batch: usize, slices: usize, spatial: &[usize]) -> Self {
        let mut shape = vec![batch, slices, 1];
        shape.extend(spatial);
        Self {
            values: Tensor::full(&shape, 1.0 / slices as f64),
            dims: spatial.len(),
        }
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn slices(&self) -> usize {
        self.values.shape()[1]
    }

    pub fn channels(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn spatial(&self) -> &[usize] {
        &self.values.shape()[3..]
    }

    /// Value `p(x, m)` for sample `b`, density channel `c`, flat spatial index `x`.
    pub fn at(&self, b: usize, m: usize, c: usize, x: usize) -> f64 {
        let s = numel(self.spatial());
        let (mm, cc) = (self.slices(), self.channels());
        self.values.as_real().expect("density is real")[((b * mm + m) * cc + c) * s + x]
    }

    /// Largest `|Σ_m p(x,m) − 1|` over all points.
    pub fn normalization_residual(&self) -> Result<f64> {
        let shape = self.values.shape();
        if shape.len() != 3 + self.dims {
            return Err(contract(format!(
                "density must be (B, M, Cp, {} spatial axes), got {shape:?}",
                self.dims
            )));
        }
        let v = self.values.as_real()?;
        let (b, m, c) = (shape[0], shape[1], shape[2]);
        let s = numel(&shape[3..]);
        let mut worst: f64 = 0.0;
        for bi in 0..b {
            for ci in 0..c {
                for x in 0..s {
                    let total: f64 = (0..m).map(|mi| v[((bi * m + mi) * c + ci) * s + x]).sum();
                    worst = worst.max((total - 1.0).abs());
                }
            }
        }
        Ok(worst)
    }

    /// Mean Shannon entropy (nats) of the per-point distributions.
    pub fn mean_entropy(&self) -> f64 {
        let shape = self.values.shape();
        let v = self.values.as_real().expect("density is real");
        let (b, m, c) = (shape[0], shape[1], shape[2]);
        let s = numel(&shape[3..]);
        let mut total = 0.0;
        for bi in 0..b {
            for ci in 0..c {
                for x in 0..s {
                    for mi in 0..m {
                        let p = v[((bi * m + mi) * c + ci) * s + x];
                        if p > 0.0 {
                            total -= p * p.ln();
                        }
                    }
                }
            }
        }
        total / (b * c * s) as f64
    }

    /// Smallest per-point maximum `max_m p(x, m)`.
    pub fn min_row_max(&self) -> f64 {
        let shape = self.values.shape();
        let v = self.values.as_real().expect("density is real");
        let (b, m, c) = (shape[0], shape[1], shape[2]);
        let s = numel(&shape[3..]);
        let mut worst = f64::INFINITY;
        for bi in 0..b {
            for ci in 0..c {
                for x in 0..s {
                    let mx = (0..m)
                        .map(|mi| v[((bi * m + mi) * c + ci) * s + x])
                        .fold(f64::NEG_INFINITY, f64::max);
                    worst = worst.min(mx);
                }
            }
        }
        worst
    }
}

/// Softmax of `(B, M, Cp, spatial...)` energies over the slice axis at
/// temperature `T`.
pub fn density_from_energies(energies: &Tensor, temperature: f64, dims: usize) -> Result<DensityField> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::Domain {
            op: "density_from_energies",
            msg: format!("temperature must be positive and finite, got {temperature}"),
        });
    }
    let shape = energies.shape();
    if shape.len() != 3 + dims {
        return Err(contract(format!(
            "energies must be (B, M, Cp, {dims} spatial axes), got {shape:?}"
        )));
    }
    let p = softmax_values(energies.as_real()?, shape, 1, temperature);
    Ok(DensityField::new_unchecked(Tensor::real(shape, p)?, dims))
}

/// Frame weights `√((p + ε)/(1 + Mε))`; exactly one for a single slice,
/// where the density is identically one. The constant rescaling keeps
/// `Σ_m w² = Σ_m p` so the offset does not perturb Parseval.
pub fn frame_weights(p: &DensityField) -> Result<Tensor> {
    let m = p.slices();
    if m == 1 {
        return Ok(Tensor::ones(p.values().shape()));
    }
    let norm = 1.0 + m as f64 * FRAME_EPS;
    p.values().map_real(|x| ((x + FRAME_EPS) / norm).sqrt())
}

/// Frame weights as a tape node; see [`frame_weights`].
pub fn frame_weights_var(tape: &mut Tape, p: Var) -> Result<Var> {
    let shape = tape.shape(p).to_vec();
    if shape[1] == 1 {
        return Ok(tape.constant(Tensor::ones(&shape)));
    }
    let shifted = tape.add_scalar(p, FRAME_EPS)?;
    let scaled = tape.scale(shifted, 1.0 / (1.0 + shape[1] as f64 * FRAME_EPS))?;
    tape.sqrt(scaled)
}

struct FrameDims {
    batch: usize,
    slices: usize,
    channels: usize,
    density_channels: usize,
    points: usize,
}

fn frame_dims(f_shape: &[usize], w_shape: &[usize]) -> Result<FrameDims> {
    let ok = f_shape.len() >= 3
        && w_shape.len() == f_shape.len() + 1
        && f_shape[0] == w_shape[0]
        && f_shape[2..] == w_shape[3..]
        && (w_shape[2] == 1 || w_shape[2] == f_shape[1]);
    if !ok {
        return Err(Error::ShapeMismatch {
            op: "frame",
            lhs: f_shape.to_vec(),
            rhs: w_shape.to_vec(),
        });
    }
    Ok(FrameDims {
        batch: f_shape[0],
        slices: w_shape[1],
        channels: f_shape[1],
        density_channels: w_shape[2],
        points: numel(&f_shape[2..]),
    })
}

impl FrameDims {
    fn weight_index(&self, b: usize, m: usize, c: usize) -> usize {
        let cp = if self.density_channels == 1 { 0 } else { c };
        ((b * self.slices + m) * self.density_channels + cp) * self.points
    }

    fn slice_index(&self, b: usize, m: usize, c: usize) -> usize {
        ((b * self.slices + m) * self.channels + c) * self.points
    }

    fn field_index(&self, b: usize, c: usize) -> usize {
        (b * self.channels + c) * self.points
    }

    fn sliced_shape(&self, f_shape: &[usize]) -> Vec<usize> {
        let mut s = vec![self.batch, self.slices, self.channels];
        s.extend(&f_shape[2..]);
        s
    }
}

/// `u[b,m,c,x] = w[b,m,c,x]·f[b,c,x]` on the tape.
pub fn modulate(tape: &mut Tape, f: Var, w: Var) -> Result<Var> {
    let fs = tape.shape(f).to_vec();
    let ws = tape.shape(w).to_vec();
    let d = frame_dims(&fs, &ws)?;
    let fv = tape.value(f).as_real()?;
    let wv = tape.value(w).as_real()?;
    let n = d.points;
    let mut out = vec![0.0; d.batch * d.slices * d.channels * n];
    for b in 0..d.batch {
        for m in 0..d.slices {
            for c in 0..d.channels {
                let (o, wi, fi) = (d.slice_index(b, m, c), d.weight_index(b, m, c), d.field_index(b, c));
                for x in 0..n {
                    out[o + x] = wv[wi + x] * fv[fi + x];
                }
            }
        }
    }
    let oshape = d.sliced_shape(&fs);
    let out = Tensor::real(&oshape, out)?;
    Ok(tape.custom(
        out,
        &[f, w],
        Box::new(move |ctx| {
            let d = frame_dims(&fs, &ws)?;
            let g = ctx.grad.as_real()?;
            let fv = ctx.inputs[0].as_real()?;
            let wv = ctx.inputs[1].as_real()?;
            let n = d.points;
            let mut gf = vec![0.0; fv.len()];
            let mut gw = vec![0.0; wv.len()];
            for b in 0..d.batch {
                for m in 0..d.slices {
                    for c in 0..d.channels {
                        let (o, wi, fi) = (d.slice_index(b, m, c), d.weight_index(b, m, c), d.field_index(b, c));
                        for x in 0..n {
                            gf[fi + x] += wv[wi + x] * g[o + x];
                            gw[wi + x] += fv[fi + x] * g[o + x];
                        }
                    }
                }
            }
            Ok(vec![Some(Tensor::real(&fs, gf)?), Some(Tensor::real(&ws, gw)?)])
        }),
    ))
}

/// `g[b,c,x] = Σ_m w[b,m,c,x]·v[b,m,c,x]` on the tape.
pub fn demodulate(tape: &mut Tape, v: Var, w: Var) -> Result<Var> {
    let vs = tape.shape(v).to_vec();
    let ws = tape.shape(w).to_vec();
    if vs.len() != ws.len() || vs[0] != ws[0] || vs[1] != ws[1] || vs[3..] != ws[3..] {
        return Err(Error::ShapeMismatch {
            op: "demodulate",
            lhs: vs,
            rhs: ws,
        });
    }
    let mut fs = vec![vs[0]];
    fs.extend(&vs[2..]);
    let d = frame_dims(&fs, &ws)?;
    let vv = tape.value(v).as_real()?;
    let wv = tape.value(w).as_real()?;
    let n = d.points;
    let mut out = vec![0.0; d.batch * d.channels * n];
    for b in 0..d.batch {
        for m in 0..d.slices {
            for c in 0..d.channels {
                let (si, wi, fi) = (d.slice_index(b, m, c), d.weight_index(b, m, c), d.field_index(b, c));
                for x in 0..n {
                    out[fi + x] += wv[wi + x] * vv[si + x];
                }
            }
        }
    }
    let out = Tensor::real(&fs, out)?;
    Ok(tape.custom(
        out,
        &[v, w],
        Box::new(move |ctx| {
            let d = frame_dims(&fs, &ws)?;
            let g = ctx.grad.as_real()?;
            let vv = ctx.inputs[0].as_real()?;
            let wv = ctx.inputs[1].as_real()?;
            let n = d.points;
            let mut gv = vec![0.0; vv.len()];
            let mut gw = vec![0.0; wv.len()];
            for b in 0..d.batch {
                for m in 0..d.slices {
                    for c in 0..d.channels {
                        let (si, wi, fi) = (d.slice_index(b, m, c), d.weight_index(b, m, c), d.field_index(b, c));
                        for x in 0..n {
                            gv[si + x] = wv[wi + x] * g[fi + x];
                            gw[wi + x] += vv[si + x] * g[fi + x];
                        }
                    }
                }
            }
            Ok(vec![Some(Tensor::real(&vs, gv)?), Some(Tensor::real(&ws, gw)?)])
        }),
    ))
}

/// ABLE coefficients `f̂_{k,m}` with shape `(B, M, C, freq...)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftedCoefficients {
    pub values: Tensor,
}

impl LiftedCoefficients {
    pub fn energy(&self) -> f64 {
        self.values.norm_sq()
    }
}

fn spatial_axes(ndim: usize, dims: usize) -> Vec<usize> {
    fft::trailing_axes(ndim, dims)
}

/// Analysis transform `A f`: the unitary FFT of `√p(·,m)·f` for every slice.
pub fn able_forward(f: &Tensor, p: &DensityField) -> Result<LiftedCoefficients> {
    able_forward_with(f, p, Norm::Unitary)
}

/// [`able_forward`] with an explicit FFT normalisation.
pub fn able_forward_with(f: &Tensor, p: &DensityField, norm: Norm) -> Result<LiftedCoefficients> {
    let residual = p.normalization_residual()?;
    if residual > NORMALIZATION_TOL {
        return Err(contract(format!(
            "invalid density: rows deviate from 1 by {residual:e}"
        )));
    }
    if f.shape().len() != 2 + p.dims() {
        return Err(contract(format!(
            "field shape {:?} does not match a {}-D density",
            f.shape(),
            p.dims()
        )));
    }
    let w = frame_weights(p)?;
    let mut tape = Tape::inference();
    let fv = tape.constant(f.clone());
    let wv = tape.constant(w);
    let u = modulate(&mut tape, fv, wv)?;
    let uc = tape.value(u).to_complex();
    let axes = spatial_axes(uc.ndim(), p.dims());
    let values = fft::transform_axes(&uc, &axes, Direction::Forward, norm)?;
    Ok(LiftedCoefficients { values })
}

/// Synthesis `g(x) = Σ_m √p(x,m)·ifft(c_m)(x)`. On the image of
/// [`able_forward`] this is the exact inverse; elsewhere it is the adjoint.
pub fn able_inverse(c: &LiftedCoefficients, p: &DensityField) -> Result<Tensor> {
    able_inverse_with(c, p, Norm::Unitary)
}

pub fn able_inverse_with(c: &LiftedCoefficients, p: &DensityField, norm: Norm) -> Result<Tensor> {
    let cs = c.values.shape().to_vec();
    let ws = p.values().shape();
    if cs.len() != ws.len() || cs[0] != ws[0] || cs[1] != ws[1] || cs[3..] != ws[3..] {
        return Err(Error::ShapeMismatch {
            op: "able_inverse",
            lhs: cs,
            rhs: ws.to_vec(),
        });
    }
    let axes = spatial_axes(cs.len(), p.dims());
    let slices = fft::transform_axes(&c.values, &axes, Direction::Inverse, norm)?;
    let sv = slices.as_complex()?;
    let w = frame_weights(p)?;
    let wv = w.as_real()?;
    let mut fs = vec![cs[0]];
    fs.extend(&cs[2..]);
    let d = frame_dims(&fs, ws)?;
    let n = d.points;
    let mut out = vec![Complex64::new(0.0, 0.0); d.batch * d.channels * n];
    for b in 0..d.batch {
        for m in 0..d.slices {
            for ch in 0..d.channels {
                let (si, wi, fi) = (d.slice_index(b, m, ch), d.weight_index(b, m, ch), d.field_index(b, ch));
                for x in 0..n {
                    out[fi + x] += sv[si + x] * wv[wi + x];
                }
            }
        }
    }
    Tensor::complex(&fs, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn random_density(batch: usize, slices: usize, spatial: &[usize], seed: u64) -> DensityField {
        let mut rng = stream(seed, "density");
        let mut shape = vec![batch, slices, 1];
        shape.extend(spatial);
        let e = Tensor::from_fn(&shape, |_| rng.gen_range(-2.0..2.0));
        density_from_energies(&e, 1.0, spatial.len()).unwrap()
    }

    fn random_field(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = stream(seed, "field");
        Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn softmax_edge_cases() {
        let p = density_from_energies(&Tensor::real(&[1, 2, 1, 1], vec![0.0, 0.0]).unwrap(), 1.0, 1).unwrap();
        assert_eq!(p.values().as_real().unwrap(), &[0.5, 0.5]);
        let p = density_from_energies(&Tensor::real(&[1, 2, 1, 1], vec![1.0, 0.0]).unwrap(), 1e-4, 1).unwrap();
        let v = p.values().as_real().unwrap();
        assert!((v[0] - 1.0).abs() < 1e-10 && v[1].abs() < 1e-10);
        let p = density_from_energies(&Tensor::real(&[1, 3, 1, 1], vec![3.0, 1.0, -2.0]).unwrap(), 1e6, 1).unwrap();
        for x in p.values().as_real().unwrap() {
            assert!((x - 1.0 / 3.0).abs() < 1e-6);
        }
        let e = Tensor::zeros(&[1, 2, 1, 1], Dtype::Real);
        assert!(matches!(density_from_energies(&e, 0.0, 1), Err(Error::Domain { .. })));
        assert!(matches!(density_from_energies(&e, -1.0, 1), Err(Error::Domain { .. })));
    }

    #[test]
    fn single_uniform_slice_is_plain_fft() {
        let f = random_field(&[2, 3, 16], 1);
        let p = DensityField::uniform(2, 1, &[16]);
        let c = able_forward(&f, &p).unwrap();
        let direct = fft::fft_unitary(&f.to_complex(), &[2]).unwrap();
        assert_eq!(c.values.reshape(&[2, 3, 16]).unwrap(), direct);
        let back = able_inverse(&c, &p).unwrap();
        assert_eq!(back, fft::ifft_unitary(&direct, &[2]).unwrap());
    }

    #[test]
    fn zero_field_has_zero_coefficients() {
        let f = Tensor::zeros(&[1, 1, 8], Dtype::Real);
        let p = random_density(1, 3, &[8], 2);
        assert_eq!(able_forward(&f, &p).unwrap().energy(), 0.0);
    }

    #[test]
    fn isometry_and_left_inverse() {
        let f = random_field(&[1, 1, 64], 3);
        let p = random_density(1, 4, &[64], 4);
        let c = able_forward(&f, &p).unwrap();
        let direct: f64 = f.as_real().unwrap().iter().map(|x| x * x).sum();
        assert!(((c.energy() - direct) / direct).abs() < 1e-10);
        let back = able_inverse(&c, &p).unwrap();
        assert!(back.rel_l2_to(&f.to_complex()).unwrap() < 1e-10);
    }

    #[test]
    fn hard_partition_roundtrip_of_step() {
        let n = 16;
        let mut pv = vec![0.0; 2 * n];
        for x in 0..n {
            pv[if x < n / 2 { x } else { n + x }] = 1.0;
        }
        let p = DensityField::new(Tensor::real(&[1, 2, 1, n], pv).unwrap(), 1).unwrap();
        let f = Tensor::from_fn(&[1, 1, n], |x| if x < n / 2 { 0.0 } else { 1.0 });
        let back = able_inverse(&able_forward(&f, &p).unwrap(), &p).unwrap();
        let err = back.max_abs_diff(&f).unwrap();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn invalid_density_is_rejected() {
        let p = DensityField::new_unchecked(Tensor::full(&[1, 2, 1, 4], 0.45), 1);
        let f = Tensor::ones(&[1, 1, 4]);
        assert!(matches!(able_forward(&f, &p), Err(Error::Contract(_))));
        assert!(DensityField::new(Tensor::full(&[1, 2, 1, 4], 0.45), 1).is_err());
    }

    #[test]
    fn density_network_shapes_and_zero_map() {
        let mut store = ParamStore::new();
        let mut rng = stream(0, "init");
        let net = DensityNetwork::new(&mut store, "d", 2, 3, 1, DensityConfig::default_1d(), &mut rng).unwrap();
        assert_eq!(net.widths(&store), vec![7, 16, 8, 16, 3]);
        for p in store.params_mut() {
            p.value = Tensor::zeros(p.value.shape(), Dtype::Real);
        }
        let e = density_energies(&Tensor::zeros(&[2, 2, 8], Dtype::Real), &net, &store).unwrap();
        assert_eq!(e.shape(), &[2, 3, 1, 8]);
        assert!(e.as_real().unwrap().iter().all(|&v| v == 0.0));
        assert!(density_energies(&Tensor::zeros(&[2, 3, 8], Dtype::Real), &net, &store).is_err());

        let cfg = DensityConfig {
            per_channel: true,
            ..DensityConfig::default_2d()
        };
        let net2 = DensityNetwork::new(&mut store, "e", 2, 3, 2, cfg, &mut rng).unwrap();
        let e = density_energies(&Tensor::ones(&[1, 2, 4, 4]), &net2, &store).unwrap();
        assert_eq!(e.shape(), &[1, 3, 2, 4, 4]);
        let fd2d = DensityNetwork::new(&mut store, "f", 2, 3, 2, DensityConfig::default_1d(), &mut rng);
        assert!(fd2d.is_err());
    }
}
