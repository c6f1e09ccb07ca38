//! Periodic Gaussian random fields on the unit torus.
//!
//! Fourier mode `k` gets variance `λ_k = scale²·(4π²|k|² + τ²)^{-α}`; the
//! field is `u = √2·Re Σ_k √λ_k ξ_k e^{2πik·x}` with complex white noise
//! `E|ξ_k|² = 1`, so `Var u(x) = Σ_k λ_k` at every point.

use std::f64::consts::PI;

use able_core::fft::{signed_frequency, transform_axes, trailing_axes, Direction, Norm};
use able_core::rng::stream;
use able_core::{Grid, Tensor};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PdeError, Result};

/// Two-phase map: positive values become `high`, the rest `low`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Threshold {
    pub high: f64,
    pub low: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GrfSpec {
    pub tau: f64,
    pub alpha: f64,
    pub scale: f64,
    /// Drop the `k = 0` mode so every sample has zero spatial mean.
    pub zero_mean: bool,
    pub threshold: Option<Threshold>,
}

impl Default for GrfSpec {
    fn default() -> Self {
        Self::burgers()
    }
}

impl GrfSpec {
    /// `N(0, 625(−Δ + 25)^{-2})`.
    pub fn burgers() -> Self {
        Self {
            tau: 5.0,
            alpha: 2.0,
            scale: 25.0,
            zero_mean: false,
            threshold: None,
        }
    }

    /// Sign of `N(0, (−Δ + 9)^{-2})` mapped to levels 12 and 3.
    pub fn darcy() -> Self {
        Self {
            tau: 3.0,
            alpha: 2.0,
            scale: 1.0,
            zero_mean: true,
            threshold: Some(Threshold { high: 12.0, low: 3.0 }),
        }
    }

    pub fn validate(&self, dims: usize) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(PdeError::Domain(format!("tau must be positive, got {}", self.tau)));
        }
        if !(self.alpha > dims as f64 / 2.0) {
            return Err(PdeError::Domain(format!(
                "divergent covariance: alpha = {} must exceed dims/2 = {}",
                self.alpha,
                dims as f64 / 2.0
            )));
        }
        if !(self.scale >= 0.0) {
            return Err(PdeError::Domain(format!("scale must be nonnegative, got {}", self.scale)));
        }
        Ok(())
    }

    /// Spectral variance of the mode with integer wavevector `k`.
    pub fn eigenvalue(&self, k: &[i64]) -> f64 {
        if self.zero_mean && k.iter().all(|&x| x == 0) {
            return 0.0;
        }
        let k2: f64 = k.iter().map(|&x| (x * x) as f64).sum();
        self.scale * self.scale * (4.0 * PI * PI * k2 + self.tau * self.tau).powf(-self.alpha)
    }
}

/// Signed integer wavevector of flat FFT index `i`.
pub fn wavevector(i: usize, extents: &[usize]) -> Vec<i64> {
    let mut k = vec![0; extents.len()];
    let mut rem = i;
    for a in (0..extents.len()).rev() {
        k[a] = signed_frequency(rem % extents[a], extents[a]);
        rem /= extents[a];
    }
    k
}

/// Random Fourier coefficients `c_k = √λ_k ξ_k` in FFT order; the field is
/// `√2·Re Σ_k c_k e^{2πik·x}`.
pub fn grf_spectrum(spec: &GrfSpec, grid: &Grid, rng: &mut impl Rng) -> Result<Vec<Complex64>> {
    spec.validate(grid.dims())?;
    let extents = grid.extents();
    let normal = Normal::new(0.0, std::f64::consts::FRAC_1_SQRT_2).expect("valid std");
    Ok((0..grid.points())
        .map(|i| {
            let xi = Complex64::new(normal.sample(rng), normal.sample(rng));
            xi * spec.eigenvalue(&wavevector(i, extents)).sqrt()
        })
        .collect())
}

/// One field sample with shape `grid.extents()`.
pub fn sample_grf(spec: &GrfSpec, grid: &Grid, rng: &mut impl Rng) -> Result<Tensor> {
    let extents = grid.extents();
    let spectrum = grf_spectrum(spec, grid, rng)?;
    // backward-normalised inverse times N gives the plain sum Σ_k c_k e^{2πik·x}
    let c = Tensor::complex(extents, spectrum)?;
    let axes = trailing_axes(extents.len(), extents.len());
    let field = transform_axes(&c, &axes, Direction::Inverse, Norm::Backward)?;
    let scale = std::f64::consts::SQRT_2 * grid.points() as f64;
    let values = field.as_complex()?.iter().map(|z| z.re * scale).collect();
    Ok(Tensor::real(extents, values)?)
}

/// [`sample_grf`] driven by the named stream `grf` of `seed`.
pub fn sample_grf_seeded(spec: &GrfSpec, grid: &Grid, seed: u64) -> Result<Tensor> {
    sample_grf(spec, grid, &mut stream(seed, "grf"))
}

/// Piecewise-constant two-phase coefficient from a thresholded field.
pub fn make_darcy_coefficient(spec: &GrfSpec, grid: &Grid, seed: u64) -> Result<Tensor> {
    let t = spec
        .threshold
        .ok_or_else(|| PdeError::Domain("coefficient field needs a threshold".into()))?;
    if !(t.high > 0.0 && t.low > 0.0) {
        return Err(PdeError::Domain("threshold levels must be positive".into()));
    }
    let g = sample_grf_seeded(spec, grid, seed)?;
    Ok(g.map_real(|v| if v > 0.0 { t.high } else { t.low })?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_scale_gives_zero_field() {
        let spec = GrfSpec {
            scale: 0.0,
            ..GrfSpec::burgers()
        };
        let g = sample_grf_seeded(&spec, &Grid::d1(64).unwrap(), 1).unwrap();
        assert!(g.as_real().unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn divergent_covariance_rejected() {
        let spec = GrfSpec {
            alpha: 1.0,
            ..GrfSpec::darcy()
        };
        assert!(matches!(
            sample_grf_seeded(&spec, &Grid::d2(8, 8).unwrap(), 0),
            Err(PdeError::Domain(_))
        ));
        assert!(spec.validate(1).is_ok());
    }

    #[test]
    fn wavevectors() {
        assert_eq!(wavevector(7, &[8]), vec![-1]);
        assert_eq!(wavevector(8 + 3, &[4, 8]), vec![1, 3]);
    }
}
