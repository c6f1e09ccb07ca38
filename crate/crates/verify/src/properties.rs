//! Exact properties of the adaptive frame and the spectral layer, each
//! recorded as a [`Check`] with its measured residual.

use able_core::autograd::Activation;
use able_core::fft::Norm;
use able_core::frame::{
    able_forward_with, able_inverse_with, density_energies, density_from_energies, DensityConfig, DensityField,
};
use able_core::operator::{
    dense_layer_forward, materialize_kernel, AbleLayer, AbleNetwork, FnoLayer, MultiplierKind, NetworkConfig,
};
use able_core::params::ParamStore;
use able_core::rng::stream;
use able_core::tensor::numel;
use able_core::{Result as CoreResult, Tensor};
use able_train::gradient_check;
use num_complex::Complex64;
use rand::Rng;

use crate::report::{Check, PropertyReport};

const ANCHOR_NORMALIZATION: &str = "density rows sum to one at every point";
const ANCHOR_PARSEVAL: &str = "analysis transform preserves the L2 norm";
const ANCHOR_INVERSE: &str = "synthesis inverts analysis";
const ANCHOR_FNO: &str = "one slice with unit density is a plain Fourier layer";
const ANCHOR_KERNEL: &str = "spectral path equals the materialised integral kernel";
const ANCHOR_SHIFT_VARIANT: &str = "adaptive slices give a kernel that is not a function of x - y";
const ANCHOR_SHIFT_INVARIANT: &str = "one slice gives a convolution kernel";
const ANCHOR_HOT: &str = "very high temperature averages the slice branches";
const ANCHOR_COLD: &str = "very low temperature gives a hard assignment";
const ANCHOR_GRAD: &str = "reverse-mode gradients match central differences";

/// Deliberate defects for negative controls.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Fault {
    #[default]
    None,
    /// Use the unnormalised forward FFT inside the frame transforms.
    FlipFftNormalization,
    /// Scale every density by 0.9 so rows sum to 0.9.
    CorruptDensity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Quick,
    Full,
}

/// Grid sizes, slice counts and sample counts for the frame checks.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameMatrix {
    pub grids: Vec<Vec<usize>>,
    pub slices: Vec<usize>,
    pub pairs: usize,
}

impl FrameMatrix {
    pub fn full() -> Self {
        Self {
            grids: vec![vec![8], vec![32], vec![64], vec![8, 8], vec![16, 16]],
            slices: vec![1, 2, 4, 8],
            pairs: 20,
        }
    }

    pub fn quick() -> Self {
        Self {
            grids: vec![vec![8], vec![32], vec![8, 8]],
            slices: vec![1, 2, 4],
            pairs: 4,
        }
    }
}

fn field_shape(batch: usize, c: usize, spatial: &[usize]) -> Vec<usize> {
    let mut s = vec![batch, c];
    s.extend(spatial);
    s
}

fn random_field(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0..1.0))
}

/// Softmax of random energies; shared over channels when `cp == 1`.
fn random_density(batch: usize, m: usize, cp: usize, spatial: &[usize], rng: &mut impl Rng) -> CoreResult<DensityField> {
    let mut shape = vec![batch, m, cp];
    shape.extend(spatial);
    let e = Tensor::from_fn(&shape, |_| rng.gen_range(-3.0..3.0));
    density_from_energies(&e, 1.0, spatial.len())
}

/// Density normalisation, Parseval identity and left inverse over `matrix`.
pub fn isometry_checks(matrix: &FrameMatrix, seed: u64, fault: Fault) -> Vec<Check> {
    let norm = match fault {
        Fault::FlipFftNormalization => Norm::Backward,
        _ => Norm::Unitary,
    };
    let mut rng = stream(seed, "frame/isometry");
    let (mut worst_norm, mut worst_parseval, mut worst_inverse): (f64, f64, f64) = (0.0, 0.0, 0.0);
    let mut cases = 0;
    for spatial in &matrix.grids {
        for &m in &matrix.slices {
            for i in 0..matrix.pairs {
                let c = 2;
                let cp = if i % 2 == 0 { 1 } else { c };
                let f = random_field(&field_shape(2, c, spatial), &mut rng);
                let mut run = || -> CoreResult<(f64, f64, f64)> {
                    let mut p = random_density(2, m, cp, spatial, &mut rng)?;
                    if fault == Fault::CorruptDensity {
                        p = DensityField::new_unchecked(p.values().scale(0.9), spatial.len());
                    }
                    let residual = p.normalization_residual()?;
                    if residual > able_core::frame::NORMALIZATION_TOL {
                        return Ok((residual, f64::NAN, f64::NAN));
                    }
                    let a = able_forward_with(&f, &p, norm)?;
                    let parseval = (a.energy() - f.norm_sq()).abs() / f.norm_sq();
                    let back = able_inverse_with(&a, &p, norm)?.real_part()?;
                    let inverse = back.max_abs_diff(&f)? / f.max_abs();
                    Ok((residual, parseval, inverse))
                };
                match run() {
                    Ok((r, p, inv)) => {
                        worst_norm = worst_norm.max(r);
                        // NaN marks a skipped measurement and must stick
                        worst_parseval = if p.is_nan() || worst_parseval.is_nan() { f64::NAN } else { worst_parseval.max(p) };
                        worst_inverse = if inv.is_nan() || worst_inverse.is_nan() { f64::NAN } else { worst_inverse.max(inv) };
                    }
                    Err(e) => {
                        return vec![Check::failed("frame.isometry", ANCHOR_PARSEVAL, e.to_string())];
                    }
                }
                cases += 1;
            }
        }
    }
    let detail = format!("{cases} (f, p) pairs");
    let normalization = Check::below(
        "frame.normalization",
        ANCHOR_NORMALIZATION,
        worst_norm,
        able_core::frame::NORMALIZATION_TOL,
    )
    .with_detail(detail.clone());
    if !normalization.passed() {
        return vec![
            normalization,
            Check::skipped("frame.parseval", ANCHOR_PARSEVAL, "density not normalised"),
            Check::skipped("frame.left_inverse", ANCHOR_INVERSE, "density not normalised"),
        ];
    }
    vec![
        normalization,
        Check::below("frame.parseval", ANCHOR_PARSEVAL, worst_parseval, 1e-10).with_detail(detail.clone()),
        Check::below("frame.left_inverse", ANCHOR_INVERSE, worst_inverse, 1e-9).with_detail(detail),
    ]
}

fn density_for(dims: usize) -> DensityConfig {
    if dims == 1 {
        DensityConfig::default_1d()
    } else {
        DensityConfig::default_2d()
    }
}

#[allow(clippy::too_many_arguments)]
fn layer(
    cin: usize,
    cout: usize,
    modes: &[usize],
    m: usize,
    kind: MultiplierKind,
    density: DensityConfig,
    activation: Activation,
    seed: u64,
) -> CoreResult<(AbleLayer, ParamStore)> {
    let mut store = ParamStore::new();
    let layer = AbleLayer::new(
        &mut store,
        "layer",
        cin,
        cout,
        modes,
        m,
        kind,
        density,
        activation,
        &mut stream(seed, "init"),
    )?;
    Ok((layer, store))
}

/// Multiply the density MLP weights so the density varies visibly.
pub fn sharpen_density(layer: &AbleLayer, store: &mut ParamStore, factor: f64) {
    if let Some(net) = &layer.density {
        for id in net.mlp_ids() {
            let t = store.get_mut(id);
            *t = t.scale(factor);
        }
    }
}

/// Slice `s` of a diagonal multiplier packaged as a reference Fourier layer.
pub fn fourier_branch(layer: &AbleLayer, store: &ParamStore, s: usize) -> CoreResult<FnoLayer> {
    let r = store.get(layer.multiplier.weight);
    let shape = r.shape();
    let slices = *shape.last().expect("multiplier has a slice axis");
    let data: Vec<Complex64> = r.as_complex()?.iter().skip(s).step_by(slices).copied().collect();
    Ok(FnoLayer {
        weights: Tensor::complex(&shape[..shape.len() - 1], data)?,
        pointwise: store.get(layer.pointwise).clone(),
        bias: store.get(layer.bias).clone(),
        activation: layer.activation,
    })
}

const FNO_CASES: [(&[usize], &[usize]); 2] = [(&[32], &[6]), (&[8, 16], &[4, 5])];

/// Largest difference between a single-slice layer and the reference
/// Fourier layer over `draws` weight draws per dimension.
pub fn fno_reduction_check(draws: usize, seed: u64) -> Check {
    let run = || -> CoreResult<f64> {
        let mut worst: f64 = 0.0;
        let mut rng = stream(seed, "frame/fno");
        for (spatial, modes) in FNO_CASES {
            for d in 0..draws {
                let (l, store) = layer(3, 2, modes, 1, MultiplierKind::Diagonal, density_for(spatial.len()), Activation::Gelu, seed + d as u64)?;
                let f = random_field(&field_shape(2, 3, spatial), &mut rng);
                let able = l.apply(&store, &f)?;
                let fno = fourier_branch(&l, &store, 0)?.forward(&f)?;
                worst = worst.max(able.max_abs_diff(&fno)?);
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(v) => Check::below("layer.fno_reduction", ANCHOR_FNO, v, 1e-12)
            .with_detail(format!("{draws} draws each in 1D and 2D, max abs difference")),
        Err(e) => Check::failed("layer.fno_reduction", ANCHOR_FNO, e.to_string()),
    }
}

/// Spectral path against the dense `O(N²)` kernel for both multiplier
/// kinds and `M ∈ slices`.
pub fn kernel_oracle_check(grids: &[(Vec<usize>, Vec<usize>)], slices: &[usize], seed: u64) -> Check {
    let run = || -> CoreResult<(f64, usize)> {
        let mut worst: f64 = 0.0;
        let mut cases = 0;
        let mut rng = stream(seed, "frame/kernel");
        for (spatial, modes) in grids {
            for kind in [MultiplierKind::Diagonal, MultiplierKind::Cross] {
                for &m in slices {
                    let (l, mut store) = layer(2, 3, modes, m, kind, density_for(spatial.len()), Activation::Gelu, seed + m as u64)?;
                    sharpen_density(&l, &mut store, 15.0);
                    let f = random_field(&field_shape(1, 2, spatial), &mut rng);
                    let spectral = l.apply(&store, &f)?;
                    let dense = dense_layer_forward(&l, &store, &f)?;
                    worst = worst.max(spectral.rel_l2_to(&dense)?);
                    cases += 1;
                }
            }
        }
        Ok((worst, cases))
    };
    match run() {
        Ok((v, n)) => {
            Check::below("layer.dense_kernel", ANCHOR_KERNEL, v, 1e-8).with_detail(format!("{n} cases, relative L2"))
        }
        Err(e) => Check::failed("layer.dense_kernel", ANCHOR_KERNEL, e.to_string()),
    }
}

pub fn default_kernel_grids() -> Vec<(Vec<usize>, Vec<usize>)> {
    vec![(vec![8], vec![5]), (vec![16], vec![6]), (vec![8, 8], vec![4, 3])]
}

/// Diagonal spread of the materialised kernel: nonzero with two adaptive
/// slices, zero with one.
pub fn translation_checks(seed: u64) -> Vec<Check> {
    let run = || -> CoreResult<(f64, f64)> {
        let mut rng = stream(seed, "frame/shift");
        let f = random_field(&[1, 1, 32], &mut rng);
        let (plain, store) = layer(1, 1, &[8], 1, MultiplierKind::Diagonal, density_for(1), Activation::Gelu, seed)?;
        let invariant = materialize_kernel(&plain, &store, &f)?.max_diagonal_spread(0, 0);
        let (adaptive, mut store) = layer(1, 1, &[8], 2, MultiplierKind::Diagonal, density_for(1), Activation::Gelu, seed)?;
        sharpen_density(&adaptive, &mut store, 20.0);
        let p = adaptive.density_values(&store, &f)?;
        let spread_p = p.as_real()?.iter().fold(0.0f64, |a, &v| a.max((v - 0.5).abs()));
        if spread_p < 1e-3 {
            return Err(able_core::Error::Contract(format!(
                "density is nearly constant (max |p - 1/2| = {spread_p:e}); the witness needs a varying one"
            )));
        }
        let variant = materialize_kernel(&adaptive, &store, &f)?.max_diagonal_spread(0, 0);
        Ok((variant, invariant))
    };
    match run() {
        Ok((variant, invariant)) => vec![
            Check::above("kernel.shift_variant", ANCHOR_SHIFT_VARIANT, variant, 1e-3)
                .with_detail("M = 2, largest max - min along a diagonal"),
            Check::below("kernel.shift_invariant", ANCHOR_SHIFT_INVARIANT, invariant, 1e-12)
                .with_detail("M = 1, largest max - min along a diagonal"),
        ],
        Err(e) => vec![Check::failed("kernel.shift_variant", ANCHOR_SHIFT_VARIANT, e.to_string())],
    }
}

/// Smallest top-two energy gap that still counts as distinct at low
/// temperature.
pub const DISTINCT_GAP: f64 = 1e-4;

/// High- and low-temperature limits of the density.
pub fn temperature_checks(seed: u64) -> Vec<Check> {
    let hot = || -> CoreResult<f64> {
        let mut worst: f64 = 0.0;
        let mut rng = stream(seed, "frame/hot");
        for (spatial, modes) in [(vec![32], vec![7]), (vec![8, 8], vec![3, 4])] {
            for m in [2usize, 3] {
                let density = DensityConfig {
                    temperature: 1e6,
                    ..density_for(spatial.len())
                };
                // linear output, so the branch mean commutes with the layer
                let (l, store) = layer(2, 2, &modes, m, MultiplierKind::Diagonal, density, Activation::None, seed + m as u64)?;
                let f = random_field(&field_shape(2, 2, &spatial), &mut rng);
                let out = l.apply(&store, &f)?;
                let mut mean = Tensor::zeros(out.shape(), able_core::Dtype::Real);
                for s in 0..m {
                    mean.add_assign(&fourier_branch(&l, &store, s)?.forward(&f)?)?;
                }
                worst = worst.max(out.rel_l2_to(&mean.scale(1.0 / m as f64))?);
            }
        }
        Ok(worst)
    };
    let cold = || -> CoreResult<(f64, usize, usize)> {
        let mut rng = stream(seed, "frame/cold");
        let (mut worst, mut used, mut ties) = (f64::INFINITY, 0, 0);
        for (spatial, modes) in [(vec![64], vec![8]), (vec![16, 16], vec![4, 4])] {
            for m in [2usize, 4] {
                let density = DensityConfig {
                    temperature: 1e-6,
                    ..density_for(spatial.len())
                };
                let (l, store) = layer(2, 2, &modes, m, MultiplierKind::Diagonal, density, Activation::Gelu, seed + m as u64)?;
                let f = random_field(&field_shape(2, 2, &spatial), &mut rng);
                let net = l.density.as_ref().expect("M > 1 has a density");
                let e = density_energies(&f, net, &store)?;
                let p = l.density_values(&store, &f)?;
                let (ev, pv) = (e.as_real()?, p.as_real()?);
                let sh = p.shape();
                let (b, mm, cp, s) = (sh[0], sh[1], sh[2], numel(&sh[3..]));
                for bi in 0..b {
                    for ci in 0..cp {
                        for x in 0..s {
                            let at = |mi: usize| ((bi * mm + mi) * cp + ci) * s + x;
                            let mut es: Vec<f64> = (0..mm).map(|mi| ev[at(mi)]).collect();
                            es.sort_by(|a, b| b.total_cmp(a));
                            if es[0] - es[1] < DISTINCT_GAP {
                                ties += 1;
                                continue;
                            }
                            let top = (0..mm).map(|mi| pv[at(mi)]).fold(f64::NEG_INFINITY, f64::max);
                            worst = worst.min(top);
                            used += 1;
                        }
                    }
                }
            }
        }
        Ok((1.0 - worst, used, ties))
    };
    let mut out = Vec::new();
    match hot() {
        Ok(v) => out.push(
            Check::below("density.high_temperature", ANCHOR_HOT, v, 1e-6)
                .with_detail("T = 1e6, relative L2 to the mean of the Fourier branches"),
        ),
        Err(e) => out.push(Check::failed("density.high_temperature", ANCHOR_HOT, e.to_string())),
    }
    match cold() {
        Ok((v, used, ties)) => out.push(
            Check::below("density.low_temperature", ANCHOR_COLD, v, 1e-6).with_detail(format!(
                "T = 1e-6, 1 - min row max over {used} points; {ties} near-ties (gap < {DISTINCT_GAP:e}) excluded"
            )),
        ),
        Err(e) => out.push(Check::failed("density.low_temperature", ANCHOR_COLD, e.to_string())),
    }
    out
}

/// Finite-difference check of a two-layer network for both multiplier kinds.
pub fn gradient_checks(n_params: usize, seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    for kind in [MultiplierKind::Diagonal, MultiplierKind::Cross] {
        let name = format!("gradient.{}", if kind == MultiplierKind::Diagonal { "diagonal" } else { "cross" });
        let run = || -> std::result::Result<(f64, usize), able_train::TrainError> {
            let cfg = NetworkConfig {
                width: 8,
                layers: 2,
                modes: 8,
                slices: 2,
                kind,
                projection_width: 16,
                ..NetworkConfig::default()
            };
            let mut store = ParamStore::new();
            let net = AbleNetwork::new(&mut store, cfg, &mut stream(seed, "init"))?;
            let mut rng = stream(seed, "frame/gradient");
            let f = random_field(&[2, 1, 32], &mut rng);
            let y = random_field(&[2, 1, 32], &mut rng);
            let r = gradient_check(&net, &store, &f, &y, n_params, 1e-6, seed)?;
            let density = r.entries_matching(".density.").filter(|e| e.analytic.abs() > 1e-10).count();
            Ok((r.max_rel_error, density))
        };
        match run() {
            Ok((err, density)) => {
                let c = Check::below(&name, ANCHOR_GRAD, err, 1e-4)
                    .with_detail(format!("{n_params} entries, {density} density weights with nonzero gradient"));
                out.push(if density == 0 {
                    Check::failed(&name, ANCHOR_GRAD, "no density weight with a nonzero gradient was sampled")
                } else {
                    c
                });
            }
            Err(e) => out.push(Check::failed(&name, ANCHOR_GRAD, e.to_string())),
        }
    }
    out
}

/// Every frame and layer property at the given level.
pub fn run_frame_properties(level: Level, seed: u64, fault: Fault) -> PropertyReport {
    let full = level == Level::Full;
    let matrix = if full { FrameMatrix::full() } else { FrameMatrix::quick() };
    let mut report = PropertyReport::default();
    for c in isometry_checks(&matrix, seed, fault) {
        report.push(c);
    }
    report.push(fno_reduction_check(if full { 10 } else { 3 }, seed));
    let grids = if full {
        default_kernel_grids()
    } else {
        vec![(vec![8], vec![5]), (vec![8, 8], vec![4, 3])]
    };
    let slices: &[usize] = if full { &[1, 2, 3] } else { &[1, 2] };
    report.push(kernel_oracle_check(&grids, slices, seed));
    for c in translation_checks(seed) {
        report.push(c);
    }
    for c in temperature_checks(seed) {
        report.push(c);
    }
    for c in gradient_checks(if full { 50 } else { 20 }, seed) {
        report.push(c);
    }
    report
}
