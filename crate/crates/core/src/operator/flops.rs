//! Analytic operation counts.
//!
//! Convention: one complex FFT of length `N` costs `5 N log₂N` real flops;
//! a complex multiply-accumulate costs 8; a real one costs 2. Counts are per
//! sample and per forward pass.

use serde::Serialize;

use crate::tensor::Grid;

use super::multiplier::MultiplierKind;
use super::network::{AbleNetwork, NetworkConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct FlopReport {
    pub fft: f64,
    pub mixing: f64,
    pub pointwise: f64,
    pub density: f64,
    pub total: f64,
}

impl FlopReport {
    /// FFT plus mode mixing.
    pub fn spectral(&self) -> f64 {
        self.fft + self.mixing
    }
}

pub fn count_flops(net: &AbleNetwork, grid: &Grid) -> FlopReport {
    count_flops_for(&net.config, grid)
}

pub fn count_flops_for(cfg: &NetworkConfig, grid: &Grid) -> FlopReport {
    let n = grid.points() as f64;
    let log_n: f64 = grid.extents().iter().map(|&e| (e as f64).log2()).sum();
    let m = cfg.slices as f64;
    let c = cfg.width as f64;
    let k_modes = (cfg.modes.min(grid.extents()[0]) as f64).powi(cfg.dims as i32);
    let pairs = match cfg.kind {
        MultiplierKind::Diagonal => m,
        MultiplierKind::Cross => m * m,
    };
    let layers = cfg.layers as f64;

    let fft = layers * m * c * 5.0 * n * log_n * 2.0;
    let mixing = layers * pairs * k_modes * c * c * 8.0;
    // W f + b, plus modulation and recombination of every slice
    let frame = if cfg.slices > 1 { 2.0 * m * c * n } else { 0.0 };
    let lift = 2.0 * cfg.lifted_channels() as f64 * c * n;
    let project = 2.0 * (c * cfg.projection_width as f64 + cfg.projection_width as f64 * cfg.out_channels as f64) * n;
    let pointwise = layers * (2.0 * c * c * n + frame) + lift + project;

    let density = if cfg.slices > 1 {
        let dc = cfg.density_config();
        let out = cfg.slices * if dc.per_channel { cfg.width } else { 1 };
        let input = if dc.fd_features { 3 * cfg.width + 1 } else { cfg.width };
        let mut widths = vec![input];
        widths.extend(&dc.hidden);
        widths.push(out);
        let mlp: f64 = widths.windows(2).map(|w| 2.0 * (w[0] * w[1]) as f64).sum();
        layers * n * (mlp + 3.0 * out as f64)
    } else {
        0.0
    };
    FlopReport {
        fft,
        mixing,
        pointwise,
        density,
        total: fft + mixing + pointwise + density,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_laws() {
        let g = Grid::d1(256).unwrap();
        let base = NetworkConfig::default();
        let one = count_flops_for(&NetworkConfig { slices: 1, ..base.clone() }, &g);
        let two = count_flops_for(&NetworkConfig { slices: 2, ..base.clone() }, &g);
        assert_eq!(two.spectral() / one.spectral(), 2.0);
        assert_eq!(one.density, 0.0);

        let diag = count_flops_for(&NetworkConfig { slices: 3, ..base.clone() }, &g);
        let cross = count_flops_for(
            &NetworkConfig {
                slices: 3,
                kind: MultiplierKind::Cross,
                ..base.clone()
            },
            &g,
        );
        assert_eq!(cross.mixing / diag.mixing, 3.0);

        let g2 = Grid::d1(512).unwrap();
        let big = count_flops_for(&base, &g2);
        let small = count_flops_for(&base, &g);
        assert!((big.fft / small.fft - 2.0 * 9.0 / 8.0).abs() < 1e-12);
    }
}
