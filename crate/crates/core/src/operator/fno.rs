//! Plain Fourier layer `σ(F⁻¹[R·F f] + W f + b)`, written without the tape
//! or the adaptive-frame machinery so it can serve as a reference.

use num_complex::Complex64;

use crate::autograd::Activation;
use crate::error::{contract, Result};
use crate::fft::{fft_unitary, ifft_unitary, trailing_axes};
use crate::tensor::{numel, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct FnoLayer {
    /// `(C_in, C_out, modes...)` complex.
    pub weights: Tensor,
    /// `(C_out, C_in)`.
    pub pointwise: Tensor,
    /// `(C_out)`.
    pub bias: Tensor,
    pub activation: Activation,
}

/// Position of FFT bin `i` inside a truncated axis of `m` modes, if retained.
fn mode_slot(i: usize, n: usize, m: usize) -> Option<usize> {
    let neg = (m / 2) as i64;
    let pos = m.div_ceil(2) as i64;
    let s = if (i as i64) < n as i64 - neg { i as i64 } else { i as i64 - n as i64 };
    if s >= 0 && s < pos {
        Some(s as usize)
    } else if s < 0 && s >= -neg {
        Some((m as i64 + s) as usize)
    } else {
        None
    }
}

impl FnoLayer {
    pub fn modes(&self) -> &[usize] {
        &self.weights.shape()[2..]
    }

    /// Apply to `f` of shape `(B, C_in, spatial...)`.
    pub fn forward(&self, f: &Tensor) -> Result<Tensor> {
        let ws = self.weights.shape();
        let (cin, cout) = (ws[0], ws[1]);
        let modes = &ws[2..];
        let dims = modes.len();
        let fs = f.shape();
        if !(1..=2).contains(&dims) || fs.len() != 2 + dims || fs[1] != cin {
            return Err(contract(format!("fno layer: bad input shape {fs:?}")));
        }
        let batch = fs[0];
        let extents = &fs[2..];
        let n = numel(extents);
        let fh = fft_unitary(&f.to_complex(), &trailing_axes(fs.len(), dims))?;
        let fh = fh.as_complex()?;
        let r = self.weights.as_complex()?;
        let nm = numel(modes);
        // retained grid bins and their slots in the weight tensor
        let mut kept = Vec::with_capacity(nm);
        for x in 0..n {
            let mut rem = x;
            let mut idx = [0usize; 2];
            for a in (0..dims).rev() {
                idx[a] = rem % extents[a];
                rem /= extents[a];
            }
            let mut slot = Some(0usize);
            for a in 0..dims {
                slot = slot.zip(mode_slot(idx[a], extents[a], modes[a])).map(|(s, m)| s * modes[a] + m);
            }
            if let Some(slot) = slot {
                kept.push((x, slot));
            }
        }
        let mut out_h = vec![Complex64::new(0.0, 0.0); batch * cout * n];
        for &(x, slot) in &kept {
            for b in 0..batch {
                for co in 0..cout {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for ci in 0..cin {
                        acc += r[(ci * cout + co) * nm + slot] * fh[(b * cin + ci) * n + x];
                    }
                    out_h[(b * cout + co) * n + x] = acc;
                }
            }
        }
        let mut oshape = fs.to_vec();
        oshape[1] = cout;
        let spectral = ifft_unitary(&Tensor::complex(&oshape, out_h)?, &trailing_axes(fs.len(), dims))?;
        let spectral = spectral.as_complex()?;
        let fv = f.as_real()?;
        let w = self.pointwise.as_real()?;
        let bias = self.bias.as_real()?;
        let mut out = vec![0.0; batch * cout * n];
        for b in 0..batch {
            for co in 0..cout {
                let row = &mut out[(b * cout + co) * n..(b * cout + co + 1) * n];
                let spec = &spectral[(b * cout + co) * n..(b * cout + co + 1) * n];
                for (o, z) in row.iter_mut().zip(spec) {
                    *o = z.re + bias[co];
                }
                for ci in 0..cin {
                    let wc = w[co * cin + ci];
                    for (o, x) in row.iter_mut().zip(&fv[(b * cin + ci) * n..(b * cin + ci + 1) * n]) {
                        *o += wc * x;
                    }
                }
                row.iter_mut().for_each(|o| *o = self.activation.apply_scalar(*o));
            }
        }
        Tensor::real(&oshape, out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slots_follow_signed_frequency() {
        let slots: Vec<_> = (0..8).map(|i| mode_slot(i, 8, 4)).collect();
        assert_eq!(slots, vec![Some(0), Some(1), None, None, None, None, Some(2), Some(3)]);
        let full: Vec<_> = (0..8).map(|i| mode_slot(i, 8, 8).unwrap()).collect();
        assert_eq!(full, (0..8).collect::<Vec<_>>());
        assert_eq!(mode_slot(2, 8, 3), None);
        assert_eq!(mode_slot(7, 8, 3), Some(2));
    }

    #[test]
    fn identity_multiplier_on_full_spectrum() {
        let n = 8;
        let weights = Tensor::complex(&[1, 1, n], vec![Complex64::new(1.0, 0.0); n]).unwrap();
        let layer = FnoLayer {
            weights,
            pointwise: Tensor::zeros(&[1, 1], crate::Dtype::Real),
            bias: Tensor::zeros(&[1], crate::Dtype::Real),
            activation: Activation::None,
        };
        let f = Tensor::from_fn(&[1, 1, n], |i| (i as f64).sin());
        assert!(layer.forward(&f).unwrap().max_abs_diff(&f).unwrap() < 1e-14);
    }
}
