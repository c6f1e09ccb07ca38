use rand::Rng;

use crate::autograd::{Activation, Tape, Var};
use crate::error::{contract, Result};
use crate::fft::trailing_axes;
use crate::frame::{demodulate, frame_weights_var, modulate, DensityConfig, DensityNetwork};
use crate::params::{Bound, ParamGroup, ParamId, ParamStore};
use crate::tensor::{Dtype, Tensor};

use super::multiplier::{spectral_mix, MultiplierKind, SpectralMultiplier};

/// One adaptive spectral layer
/// `σ(Σ_m √p_m·F⁻¹[R·F(√p_m·f)] + W f + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbleLayer {
    pub dims: usize,
    pub multiplier: SpectralMultiplier,
    /// Absent for a single slice, where the density is identically one.
    pub density: Option<DensityNetwork>,
    pub pointwise: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
}

impl AbleLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        prefix: &str,
        in_channels: usize,
        out_channels: usize,
        modes: &[usize],
        slices: usize,
        kind: MultiplierKind,
        density: DensityConfig,
        activation: Activation,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        let dims = modes.len();
        if !(1..=2).contains(&dims) {
            return Err(contract(format!("layers support 1 or 2 spatial axes, got {dims}")));
        }
        if slices == 0 {
            return Err(contract("a layer needs at least one slice"));
        }
        if density.per_channel && in_channels != out_channels {
            return Err(contract("per-channel densities need equal input and output widths"));
        }
        let multiplier = SpectralMultiplier::new(
            store,
            &format!("{prefix}.spectral"),
            kind,
            in_channels,
            out_channels,
            modes,
            slices,
            rng,
        );
        let density = if slices > 1 {
            Some(DensityNetwork::new(
                store,
                &format!("{prefix}.density"),
                in_channels,
                slices,
                dims,
                density,
                rng,
            )?)
        } else {
            None
        };
        let bound = 1.0 / (in_channels as f64).sqrt();
        let w = Tensor::from_fn(&[out_channels, in_channels], |_| rng.gen_range(-bound..bound));
        let b = Tensor::from_fn(&[out_channels], |_| rng.gen_range(-bound..bound));
        let pointwise = store.add(format!("{prefix}.pointwise.weight"), w, ParamGroup::Dense);
        let bias = store.add(format!("{prefix}.pointwise.bias"), b, ParamGroup::Dense);
        Ok(Self {
            dims,
            multiplier,
            density,
            pointwise,
            bias,
            activation,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.multiplier.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.multiplier.out_channels
    }

    pub fn slices(&self) -> usize {
        self.multiplier.slices
    }

    fn check_input(&self, shape: &[usize]) -> Result<()> {
        if shape.len() != 2 + self.dims || shape[1] != self.in_channels() {
            return Err(contract(format!(
                "layer expects (B, {}, {} spatial axes), got {shape:?}",
                self.in_channels(),
                self.dims
            )));
        }
        for (&n, &m) in shape[2..].iter().zip(&self.multiplier.modes) {
            if m > n {
                return Err(contract(format!("{m} retained modes exceed grid extent {n}")));
            }
        }
        Ok(())
    }

    /// Density `p(x, m)` computed from `f`, or `None` for a single slice.
    pub fn density(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Option<Var>> {
        match &self.density {
            Some(net) => Ok(Some(net.density(tape, bound, f)?)),
            None => Ok(None),
        }
    }

    /// Frame weights `√(p + ε)` of shape `(B, M, Cp, spatial...)`.
    pub fn frame_weights(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        match self.density(tape, bound, f)? {
            Some(p) => frame_weights_var(tape, p),
            None => {
                let shape = tape.shape(f);
                let mut ws = vec![shape[0], 1, 1];
                ws.extend(&shape[2..]);
                Ok(tape.constant(Tensor::ones(&ws)))
            }
        }
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        self.check_input(tape.shape(f))?;
        if self.density.is_none() {
            // unit weights: skip the identity modulation
            let spectral = self.single_slice_path(tape, bound, f)?;
            let local = tape.channel_linear(f, bound.var(self.pointwise), Some(bound.var(self.bias)))?;
            let pre = tape.add(spectral, local)?;
            return tape.activation(pre, self.activation);
        }
        let w = self.frame_weights(tape, bound, f)?;
        self.forward_with_weights(tape, bound, f, w)
    }

    /// `F⁻¹[R·F f]` for a single slice with `p ≡ 1`.
    fn single_slice_path(&self, tape: &mut Tape, bound: &Bound, f: Var) -> Result<Var> {
        let shape = tape.shape(f).to_vec();
        let mut lifted = vec![shape[0], 1];
        lifted.extend(&shape[1..]);
        let u = tape.reshape(f, &lifted)?;
        let uc = tape.to_complex(u)?;
        let axes = trailing_axes(3 + self.dims, self.dims);
        let uh = tape.fft(uc, &axes)?;
        let vh = spectral_mix(
            tape,
            uh,
            bound.var(self.multiplier.weight),
            self.multiplier.kind,
            &self.multiplier.modes,
        )?;
        let v = tape.ifft(vh, &axes)?;
        let vr = tape.real_part(v)?;
        let mut out = vec![shape[0], self.out_channels()];
        out.extend(&shape[2..]);
        tape.reshape(vr, &out)
    }

    /// Forward pass with externally supplied frame weights.
    pub fn forward_with_weights(&self, tape: &mut Tape, bound: &Bound, f: Var, w: Var) -> Result<Var> {
        self.check_input(tape.shape(f))?;
        if tape.shape(w)[1] != self.slices() {
            return Err(contract(format!(
                "frame weights carry {} slices, layer has {}",
                tape.shape(w)[1],
                self.slices()
            )));
        }
        let spectral = self.spectral_path(tape, bound, f, w)?;
        let local = tape.channel_linear(f, bound.var(self.pointwise), Some(bound.var(self.bias)))?;
        let pre = tape.add(spectral, local)?;
        tape.activation(pre, self.activation)
    }

    /// `Σ_m w_m·F⁻¹[R·F(w_m·f)]`.
    pub fn spectral_path(&self, tape: &mut Tape, bound: &Bound, f: Var, w: Var) -> Result<Var> {
        let u = modulate(tape, f, w)?;
        let uc = tape.to_complex(u)?;
        let axes = trailing_axes(3 + self.dims, self.dims);
        let uh = tape.fft(uc, &axes)?;
        let vh = spectral_mix(
            tape,
            uh,
            bound.var(self.multiplier.weight),
            self.multiplier.kind,
            &self.multiplier.modes,
        )?;
        let v = tape.ifft(vh, &axes)?;
        let vr = tape.real_part(v)?;
        demodulate(tape, vr, w)
    }

    /// Evaluate on a concrete input without recording gradients.
    pub fn apply(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let bound = store.bind(&mut tape);
        let fv = tape.constant(f.clone());
        let out = self.forward(&mut tape, &bound, fv)?;
        Ok(tape.value(out).clone())
    }

    /// Density values for a concrete input; a tensor of ones for `M = 1`.
    pub fn density_values(&self, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::inference();
        let bound = store.bind(&mut tape);
        let fv = tape.constant(f.clone());
        match self.density(&mut tape, &bound, fv)? {
            Some(p) => Ok(tape.value(p).clone()),
            None => {
                let mut s = vec![f.shape()[0], 1, 1];
                s.extend(&f.shape()[2..]);
                Ok(Tensor::ones(&s))
            }
        }
    }

    /// Zero every density-network parameter (energies become identically zero).
    pub fn zero_density(&self, store: &mut ParamStore) {
        if let Some(net) = &self.density {
            for id in net.mlp_ids() {
                let t = store.get_mut(id);
                *t = Tensor::zeros(t.shape(), Dtype::Real);
            }
        }
    }
}
