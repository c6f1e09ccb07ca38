//! Dense materialisation of the kernel a layer applies implicitly:
//! `K_{co,ci}(x, z) = Σ_{m,m'} w(x,m)·κ_{m,m'}(x − z)·w(z,m')`, where
//! `κ = N^{-1/2}·F⁻¹(R)` is the zero-padded multiplier in real space.

use num_complex::Complex64;

use crate::error::{contract, Error, Result};
use crate::fft::ifft_unitary;
use crate::frame::frame_weights;
use crate::frame::DensityField;
use crate::params::ParamStore;
use crate::tensor::{numel, Tensor};

use super::layer::AbleLayer;
use super::multiplier::{zero_pad_modes, MultiplierKind};

/// Largest grid (total points) the dense oracle will materialise.
pub const MAX_DENSE_POINTS: usize = 4096;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseKernel {
    pub extents: Vec<usize>,
    pub in_channels: usize,
    pub out_channels: usize,
    /// Real part of `K`, laid out `(C_out, C_in, N, N)`.
    pub values: Vec<f64>,
}

impl DenseKernel {
    pub fn points(&self) -> usize {
        numel(&self.extents)
    }

    pub fn at(&self, co: usize, ci: usize, x: usize, z: usize) -> f64 {
        let n = self.points();
        self.values[((co * self.in_channels + ci) * n + x) * n + z]
    }

    /// `Σ_z K(x, z)·f(z)` for `f` of shape `(1, C_in, spatial...)`.
    pub fn apply(&self, f: &Tensor) -> Result<Tensor> {
        let n = self.points();
        let mut expected = vec![1, self.in_channels];
        expected.extend(&self.extents);
        if f.shape() != expected {
            return Err(Error::ShapeMismatch {
                op: "dense kernel",
                lhs: f.shape().to_vec(),
                rhs: expected,
            });
        }
        let fv = f.as_real()?;
        let mut out = vec![0.0; self.out_channels * n];
        for co in 0..self.out_channels {
            for ci in 0..self.in_channels {
                for x in 0..n {
                    let row = &self.values[((co * self.in_channels + ci) * n + x) * n..][..n];
                    out[co * n + x] += row.iter().zip(&fv[ci * n..(ci + 1) * n]).map(|(k, v)| k * v).sum::<f64>();
                }
            }
        }
        let mut shape = vec![1, self.out_channels];
        shape.extend(&self.extents);
        Tensor::real(&shape, out)
    }

    /// Largest `max − min` of `K(x, x − δ)` over shifts `δ`, for one channel pair.
    pub fn max_diagonal_spread(&self, co: usize, ci: usize) -> f64 {
        let n = self.points();
        let mut worst: f64 = 0.0;
        for delta in 0..n {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for x in 0..n {
                let z = shift(x, delta, &self.extents);
                let v = self.at(co, ci, x, z);
                lo = lo.min(v);
                hi = hi.max(v);
            }
            worst = worst.max(hi - lo);
        }
        worst
    }
}

/// `x − δ` on the periodic grid, per axis.
fn shift(x: usize, delta: usize, extents: &[usize]) -> usize {
    let mut out = 0;
    let mut stride = 1;
    let (mut xr, mut dr) = (x, delta);
    let mut parts = Vec::with_capacity(extents.len());
    for &n in extents.iter().rev() {
        parts.push(((xr % n) + n - (dr % n)) % n);
        xr /= n;
        dr /= n;
    }
    for (&n, p) in extents.iter().rev().zip(parts) {
        out += p * stride;
        stride *= n;
    }
    out
}

/// Materialise the spectral kernel of `layer` at the density induced by `f`
/// (shape `(1, C_in, spatial...)`).
pub fn materialize_kernel(layer: &AbleLayer, store: &ParamStore, f: &Tensor) -> Result<DenseKernel> {
    if f.shape().first() != Some(&1) {
        return Err(contract("materialize_kernel takes a single sample"));
    }
    let p = layer.density_values(store, f)?;
    materialize_kernel_with_density(layer, store, &DensityField::new_unchecked(p, layer.dims))
}

/// As [`materialize_kernel`], with an explicit density.
pub fn materialize_kernel_with_density(
    layer: &AbleLayer,
    store: &ParamStore,
    density: &DensityField,
) -> Result<DenseKernel> {
    let extents = density.spatial().to_vec();
    let n = numel(&extents);
    if n > MAX_DENSE_POINTS {
        return Err(Error::SizeLimit(format!(
            "dense kernel needs N ≤ {MAX_DENSE_POINTS} points, grid has {n}"
        )));
    }
    let mult = &layer.multiplier;
    let (cin, cout, slices) = (mult.in_channels, mult.out_channels, mult.slices);
    if density.batch() != 1 || density.slices() != slices {
        return Err(contract("density does not match the layer"));
    }
    let cp = density.channels();
    let w = frame_weights(density)?;
    let wv = w.as_real()?;
    let weight = |m: usize, c: usize, x: usize| wv[(m * cp + if cp == 1 { 0 } else { c }) * n + x];

    let r = store.get(mult.weight).as_complex()?;
    let nm = mult.mode_count();
    let pairs: Vec<(usize, usize)> = match mult.kind {
        MultiplierKind::Diagonal => (0..slices).map(|m| (m, m)).collect(),
        MultiplierKind::Cross => (0..slices).flat_map(|m| (0..slices).map(move |mp| (m, mp))).collect(),
    };
    let scale = 1.0 / (n as f64).sqrt();
    let mut values = vec![0.0; cout * cin * n * n];
    for ci in 0..cin {
        for co in 0..cout {
            for &(m, mp) in &pairs {
                let modes: Vec<Complex64> = (0..nm)
                    .map(|j| {
                        let base = (ci * cout + co) * nm + j;
                        match mult.kind {
                            MultiplierKind::Diagonal => r[base * slices + m],
                            MultiplierKind::Cross => r[(base * slices + m) * slices + mp],
                        }
                    })
                    .collect();
                let padded = zero_pad_modes(&modes, &extents, &mult.modes)?;
                let kappa = ifft_unitary(&Tensor::complex(&extents, padded)?, &(0..extents.len()).collect::<Vec<_>>())?;
                let kappa = kappa.as_complex()?;
                for x in 0..n {
                    let wx = weight(m, co, x);
                    let row = &mut values[((co * cin + ci) * n + x) * n..][..n];
                    for (z, slot) in row.iter_mut().enumerate() {
                        let delta = shift(x, z, &extents);
                        *slot += wx * scale * kappa[delta].re * weight(mp, ci, z);
                    }
                }
            }
        }
    }
    Ok(DenseKernel {
        extents,
        in_channels: cin,
        out_channels: cout,
        values,
    })
}

/// Layer output through the dense path: `σ(K f + W f + b)`.
pub fn dense_layer_forward(layer: &AbleLayer, store: &ParamStore, f: &Tensor) -> Result<Tensor> {
    let kernel = materialize_kernel(layer, store, f)?;
    let kf = kernel.apply(f)?;
    let n = kernel.points();
    let (cin, cout) = (kernel.in_channels, kernel.out_channels);
    let w = store.get(layer.pointwise).as_real()?;
    let b = store.get(layer.bias).as_real()?;
    let fv = f.as_real()?;
    let mut out = kf.into_real()?;
    for co in 0..cout {
        for x in 0..n {
            let mut v = out[co * n + x] + b[co];
            for ci in 0..cin {
                v += w[co * cin + ci] * fv[ci * n + x];
            }
            out[co * n + x] = layer.activation.apply_scalar(v);
        }
    }
    let mut shape = vec![1, cout];
    shape.extend(&kernel.extents);
    Tensor::real(&shape, out)
}
