//! Truncated spectral multipliers and the differentiable mode-mixing op.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Tape, Var};
use crate::error::{contract, Error, Result};
use crate::params::{ParamGroup, ParamId, ParamStore};
use crate::tensor::{numel, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MultiplierKind {
    /// `R(k, m)`: each slice is mixed on its own.
    #[default]
    Diagonal,
    /// `R(k; m, m')`: slices exchange information.
    Cross,
}

/// FFT-layout indices kept when retaining `count` modes of an axis of length `n`:
/// the `⌈count/2⌉` lowest non-negative and `⌊count/2⌋` highest negative frequencies.
pub fn retained_indices(n: usize, count: usize) -> Result<Vec<usize>> {
    if count == 0 || count > n {
        return Err(contract(format!("cannot retain {count} modes of an axis of length {n}")));
    }
    let pos = count.div_ceil(2);
    let neg = count / 2;
    Ok((0..pos).chain(n - neg..n).collect())
}

/// Flat grid indices of all retained mode tuples, in the multiplier's mode order.
pub fn retained_grid_indices(extents: &[usize], modes: &[usize]) -> Result<Vec<usize>> {
    if extents.len() != modes.len() {
        return Err(contract(format!(
            "{} mode counts for a {}-D grid",
            modes.len(),
            extents.len()
        )));
    }
    let mut flat = vec![0usize];
    for (&n, &m) in extents.iter().zip(modes) {
        let axis = retained_indices(n, m)?;
        flat = flat
            .iter()
            .flat_map(|&base| axis.iter().map(move |&i| base * n + i))
            .collect();
    }
    Ok(flat)
}

/// Learnable complex weights `R` for one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralMultiplier {
    pub kind: MultiplierKind,
    pub modes: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    pub slices: usize,
    pub weight: ParamId,
}

impl SpectralMultiplier {
    /// Uniform complex initialisation scaled by `1/(C_in·C_out)`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        kind: MultiplierKind,
        in_channels: usize,
        out_channels: usize,
        modes: &[usize],
        slices: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let shape = Self::shape_for(kind, in_channels, out_channels, modes, slices);
        let scale = 1.0 / (in_channels * out_channels) as f64;
        let data = (0..numel(&shape))
            .map(|_| Complex64::new(scale * rng.gen::<f64>(), scale * rng.gen::<f64>()))
            .collect();
        let weight = store.add(
            name,
            Tensor::complex(&shape, data).expect("shape matches data"),
            ParamGroup::Spectral,
        );
        Self {
            kind,
            modes: modes.to_vec(),
            in_channels,
            out_channels,
            slices,
            weight,
        }
    }

    /// `(C_in, C_out, modes..., M)` or `(C_in, C_out, modes..., M, M)`.
    pub fn shape_for(
        kind: MultiplierKind,
        in_channels: usize,
        out_channels: usize,
        modes: &[usize],
        slices: usize,
    ) -> Vec<usize> {
        let mut s = vec![in_channels, out_channels];
        s.extend(modes);
        s.push(slices);
        if kind == MultiplierKind::Cross {
            s.push(slices);
        }
        s
    }

    pub fn shape(&self) -> Vec<usize> {
        Self::shape_for(self.kind, self.in_channels, self.out_channels, &self.modes, self.slices)
    }

    pub fn mode_count(&self) -> usize {
        self.modes.iter().product()
    }
}

/// Layout bookkeeping shared by the forward and backward passes.
#[derive(Clone)]
struct MixPlan {
    kind: MultiplierKind,
    batch: usize,
    slices: usize,
    cin: usize,
    cout: usize,
    points: usize,
    modes: Vec<usize>,
    out_shape: Vec<usize>,
}

impl MixPlan {
    fn weight_index(&self, ci: usize, co: usize, j: usize, m: usize, mp: usize) -> usize {
        let k = self.modes.len();
        let base = ((ci * self.cout + co) * k + j) * self.slices + m;
        match self.kind {
            MultiplierKind::Diagonal => base,
            MultiplierKind::Cross => base * self.slices + mp,
        }
    }

    /// Slices `m'` feeding output slice `m`.
    fn sources(&self, m: usize) -> std::ops::Range<usize> {
        match self.kind {
            MultiplierKind::Diagonal => m..m + 1,
            MultiplierKind::Cross => 0..self.slices,
        }
    }
}

/// Truncate, mix and zero-pad lifted coefficients.
///
/// `u` is `(B, M, C_in, freq...)`; the result is `(B, M, C_out, freq...)` with
/// `v[b,m,co,k] = Σ_{ci,m'} R[ci,co,k,m(,m')]·u[b,m',ci,k]` on retained modes
/// and zero elsewhere.
pub fn spectral_mix(tape: &mut Tape, u: Var, r: Var, kind: MultiplierKind, modes: &[usize]) -> Result<Var> {
    let us = tape.shape(u).to_vec();
    let rs = tape.shape(r).to_vec();
    let dims = modes.len();
    if us.len() != 3 + dims {
        return Err(contract(format!("spectral_mix expects (B, M, C, {dims} axes), got {us:?}")));
    }
    let (batch, slices, cin) = (us[0], us[1], us[2]);
    let cout = rs.get(1).copied().unwrap_or(0);
    if rs != SpectralMultiplier::shape_for(kind, cin, cout, modes, slices) {
        return Err(Error::ShapeMismatch {
            op: "spectral_mix",
            lhs: us,
            rhs: rs,
        });
    }
    let kept = retained_grid_indices(&us[3..], modes)?;
    let mut out_shape = us.clone();
    out_shape[2] = cout;
    let plan = MixPlan {
        kind,
        batch,
        slices,
        cin,
        cout,
        points: numel(&us[3..]),
        modes: kept,
        out_shape,
    };
    let uv = tape.value(u).as_complex()?;
    let rv = tape.value(r).as_complex()?;
    let out = mix_forward(&plan, uv, rv);
    let out = Tensor::complex(&plan.out_shape, out)?;
    Ok(tape.custom(
        out,
        &[u, r],
        Box::new(move |ctx| {
            let g = ctx.grad.as_complex()?;
            let uv = ctx.inputs[0].as_complex()?;
            let rv = ctx.inputs[1].as_complex()?;
            let (gu, gr) = mix_backward(&plan, uv, rv, g);
            Ok(vec![
                Some(Tensor::complex(ctx.inputs[0].shape(), gu)?),
                Some(Tensor::complex(ctx.inputs[1].shape(), gr)?),
            ])
        }),
    ))
}

fn mix_forward(p: &MixPlan, u: &[Complex64], r: &[Complex64]) -> Vec<Complex64> {
    let zero = Complex64::new(0.0, 0.0);
    let mut out = vec![zero; p.batch * p.slices * p.cout * p.points];
    for b in 0..p.batch {
        for m in 0..p.slices {
            for co in 0..p.cout {
                let obase = ((b * p.slices + m) * p.cout + co) * p.points;
                for (j, &k) in p.modes.iter().enumerate() {
                    let mut acc = zero;
                    for mp in p.sources(m) {
                        for ci in 0..p.cin {
                            let ui = ((b * p.slices + mp) * p.cin + ci) * p.points + k;
                            acc += r[p.weight_index(ci, co, j, m, mp)] * u[ui];
                        }
                    }
                    out[obase + k] = acc;
                }
            }
        }
    }
    out
}

fn mix_backward(
    p: &MixPlan,
    u: &[Complex64],
    r: &[Complex64],
    g: &[Complex64],
) -> (Vec<Complex64>, Vec<Complex64>) {
    let mut gu = vec![Complex64::new(0.0, 0.0); u.len()];
    let mut gr = vec![Complex64::new(0.0, 0.0); r.len()];
    for b in 0..p.batch {
        for m in 0..p.slices {
            for co in 0..p.cout {
                let obase = ((b * p.slices + m) * p.cout + co) * p.points;
                for (j, &k) in p.modes.iter().enumerate() {
                    let gv = g[obase + k];
                    if gv == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for mp in p.sources(m) {
                        for ci in 0..p.cin {
                            let ui = ((b * p.slices + mp) * p.cin + ci) * p.points + k;
                            let wi = p.weight_index(ci, co, j, m, mp);
                            gu[ui] += gv * r[wi].conj();
                            gr[wi] += gv * u[ui].conj();
                        }
                    }
                }
            }
        }
    }
    (gu, gr)
}

/// Embed a truncated per-mode array `(modes...)` into a full zero grid.
pub fn zero_pad_modes(values: &[Complex64], extents: &[usize], modes: &[usize]) -> Result<Vec<Complex64>> {
    let kept = retained_grid_indices(extents, modes)?;
    if kept.len() != values.len() {
        return Err(contract("mode values do not match the retained mode count"));
    }
    let mut full = vec![Complex64::new(0.0, 0.0); numel(extents)];
    for (&k, v) in kept.iter().zip(values) {
        full[k] = *v;
    }
    Ok(full)
}
