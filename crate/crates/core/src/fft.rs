//! Iterative radix-2 Cooley–Tukey FFT with unitary normalisation.
//!
//! Forward and inverse transforms are both scaled by `1/√N` per transformed
//! axis, so Parseval's identity holds with constant one and the inverse is
//! the conjugate transpose of the forward map.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;
use std::rc::Rc;

use num_complex::Complex64;

use crate::error::{contract, Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Scaling applied by [`transform_axes`]. Only [`Norm::Unitary`] is used by
/// the operator stack; the others exist for callers that need the classic
/// unnormalised conventions and for negative-control experiments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Norm {
    /// `1/√N` in both directions.
    Unitary,
    /// No scaling forward, `1/N` inverse.
    Backward,
}

/// Precomputed bit-reversal table and per-stage twiddles for one length.
#[derive(Debug)]
pub struct Radix2Plan {
    n: usize,
    rev: Vec<u32>,
    // stage s (half = 2^s) occupies twiddles[half-1 .. 2*half-1]
    twiddles: Vec<Complex64>,
}

impl Radix2Plan {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::UnsupportedSize(n));
        }
        let bits = n.trailing_zeros();
        let rev = (0..n as u32)
            .map(|i| if bits == 0 { 0 } else { i.reverse_bits() >> (32 - bits) })
            .collect();
        let mut twiddles = Vec::with_capacity(n.saturating_sub(1));
        let mut half = 1;
        while half < n {
            let len = 2 * half;
            for j in 0..half {
                let theta = -2.0 * PI * j as f64 / len as f64;
                twiddles.push(Complex64::new(theta.cos(), theta.sin()));
            }
            half = len;
        }
        Ok(Self { n, rev, twiddles })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Unscaled in-place transform: `X_k = Σ_j x_j e^{∓2πijk/N}`.
    pub fn process(&self, buf: &mut [Complex64], direction: Direction) {
        debug_assert_eq!(buf.len(), self.n);
        let n = self.n;
        for i in 0..n {
            let j = self.rev[i] as usize;
            if i < j {
                buf.swap(i, j);
            }
        }
        let inverse = direction == Direction::Inverse;
        let mut half = 1;
        while half < n {
            let tw = &self.twiddles[half - 1..2 * half - 1];
            let len = 2 * half;
            for chunk in buf.chunks_exact_mut(len) {
                let (lo, hi) = chunk.split_at_mut(half);
                for ((a, b), w) in lo.iter_mut().zip(hi.iter_mut()).zip(tw) {
                    let w = if inverse { w.conj() } else { *w };
                    let t = *b * w;
                    *b = *a - t;
                    *a += t;
                }
            }
            half = len;
        }
    }
}

thread_local! {
    static PLANS: RefCell<HashMap<usize, Rc<Radix2Plan>>> = RefCell::new(HashMap::new());
}

/// Cached plan for length `n` (per thread).
pub fn plan(n: usize) -> Result<Rc<Radix2Plan>> {
    PLANS.with(|cache| {
        if let Some(p) = cache.borrow().get(&n) {
            return Ok(p.clone());
        }
        let p = Rc::new(Radix2Plan::new(n)?);
        cache.borrow_mut().insert(n, p.clone());
        Ok(p)
    })
}

/// Transform a contiguous slice in place with unitary scaling.
pub fn fft_slice(buf: &mut [Complex64], direction: Direction) -> Result<()> {
    let p = plan(buf.len())?;
    p.process(buf, direction);
    let s = 1.0 / (buf.len() as f64).sqrt();
    buf.iter_mut().for_each(|z| *z *= s);
    Ok(())
}

fn scale_for(n: usize, direction: Direction, norm: Norm) -> f64 {
    match (norm, direction) {
        (Norm::Unitary, _) => 1.0 / (n as f64).sqrt(),
        (Norm::Backward, Direction::Forward) => 1.0,
        (Norm::Backward, Direction::Inverse) => 1.0 / n as f64,
    }
}

/// Transform the data of a row-major array with the given shape along `axis`.
pub fn transform_axis_in_place(
    data: &mut [Complex64],
    shape: &[usize],
    axis: usize,
    direction: Direction,
    norm: Norm,
) -> Result<()> {
    if axis >= shape.len() {
        return Err(contract(format!("axis {axis} out of range for shape {shape:?}")));
    }
    let n = shape[axis];
    let p = plan(n)?;
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let scale = scale_for(n, direction, norm);
    if inner == 1 {
        for line in data.chunks_exact_mut(n) {
            p.process(line, direction);
            if scale != 1.0 {
                line.iter_mut().for_each(|z| *z *= scale);
            }
        }
        return Ok(());
    }
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for o in 0..outer {
        let base = o * n * inner;
        for i in 0..inner {
            for (k, slot) in buf.iter_mut().enumerate() {
                *slot = data[base + k * inner + i];
            }
            p.process(&mut buf, direction);
            for (k, v) in buf.iter().enumerate() {
                data[base + k * inner + i] = v * scale;
            }
        }
    }
    Ok(())
}

/// Transform a complex tensor along each of `axes`.
pub fn transform_axes(t: &Tensor, axes: &[usize], direction: Direction, norm: Norm) -> Result<Tensor> {
    let mut out = t.clone();
    let shape = t.shape().to_vec();
    let data = out.as_complex_mut()?;
    for &axis in axes {
        transform_axis_in_place(data, &shape, axis, direction, norm)?;
    }
    Ok(out)
}

/// Unitary forward DFT along `axes`.
pub fn fft_unitary(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    transform_axes(t, axes, Direction::Forward, Norm::Unitary)
}

/// Unitary inverse DFT along `axes`; the exact inverse of [`fft_unitary`].
pub fn ifft_unitary(t: &Tensor, axes: &[usize]) -> Result<Tensor> {
    transform_axes(t, axes, Direction::Inverse, Norm::Unitary)
}

/// The trailing `dims` axes of a tensor.
pub fn trailing_axes(ndim: usize, dims: usize) -> Vec<usize> {
    (ndim - dims..ndim).collect()
}

/// Signed frequency of FFT bin `i` on an axis of length `n`.
pub fn signed_frequency(i: usize, n: usize) -> i64 {
    if i <= n / 2 {
        // Nyquist bin reported as +n/2
        i as i64
    } else {
        i as i64 - n as i64
    }
}
