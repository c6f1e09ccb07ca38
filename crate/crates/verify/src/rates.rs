//! Approximation-rate studies for functions of bounded variation: global
//! Fourier truncation, piecewise-constant approximation on equal-variation
//! partitions, and the combination of both.

use std::f64::consts::PI;
use std::fmt::Write;

use able_core::fft::{plan, signed_frequency, Direction};
use able_core::rng::stream;
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::error::{Result, VerifyError};
use crate::report::Check;

pub const BOOTSTRAP_RESAMPLES: usize = 200;
/// A bootstrap interval passes when it reaches within this distance of the
/// expected exponent.
pub const CI_SLACK: f64 = 0.15;
/// Grid for the step-function study. Sampled coefficients differ from the
/// continuous ones by about `πk/(3N²)`; at 2^18 that is already 8e-9 for
/// k = 512, so one more doubling leaves room under 1e-8.
pub const STEP_GRID: usize = 1 << 19;
/// Grid for the 1D partition studies.
pub const PARTITION_GRID: usize = 1 << 16;
/// Grid for the joint Fourier/partition study (one FFT per cell).
pub const JOINT_GRID: usize = 1 << 14;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateStudyResult {
    pub name: String,
    pub x_label: String,
    pub x_values: Vec<f64>,
    /// L² errors.
    pub errors: Vec<f64>,
    /// L¹ errors where the study computes them.
    pub l1_errors: Vec<f64>,
    pub fitted_slope: f64,
    pub slope_ci: (f64, f64),
    pub expected_slope: f64,
}

impl RateStudyResult {
    pub fn new(
        name: &str,
        x_label: &str,
        x_values: Vec<f64>,
        errors: Vec<f64>,
        l1_errors: Vec<f64>,
        expected_slope: f64,
        seed: u64,
    ) -> Result<Self> {
        if x_values.len() != errors.len() || x_values.len() < 2 {
            return Err(VerifyError::Domain(format!(
                "{name}: need at least two (x, error) points, got {} x and {} errors",
                x_values.len(),
                errors.len()
            )));
        }
        if x_values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(VerifyError::Domain(format!("{name}: x values must increase strictly")));
        }
        if let Some(e) = errors.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(VerifyError::Degenerate(format!(
                "{name}: error {e} cannot be placed on a log scale"
            )));
        }
        let fitted_slope = fit_slope(&x_values, &errors);
        let slope_ci = bootstrap_ci(&x_values, &errors, BOOTSTRAP_RESAMPLES, seed);
        Ok(Self {
            name: name.into(),
            x_label: x_label.into(),
            x_values,
            errors,
            l1_errors,
            fitted_slope,
            slope_ci,
            expected_slope,
        })
    }

    /// Expected exponent inside the bootstrap interval widened by [`CI_SLACK`].
    pub fn ci_covers_expected(&self) -> bool {
        self.slope_ci.0 - CI_SLACK <= self.expected_slope && self.expected_slope <= self.slope_ci.1 + CI_SLACK
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("{},l2_error", self.x_label);
        if !self.l1_errors.is_empty() {
            s.push_str(",l1_error");
        }
        s.push('\n');
        for (i, (x, e)) in self.x_values.iter().zip(&self.errors).enumerate() {
            let _ = write!(s, "{x},{e:.12e}");
            if let Some(l1) = self.l1_errors.get(i) {
                let _ = write!(s, ",{l1:.12e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("{}\n", self.name);
        for (x, e) in self.x_values.iter().zip(&self.errors) {
            let _ = writeln!(s, "  {:>8} = {:<8}  error {:.6e}", self.x_label, x, e);
        }
        let _ = writeln!(
            s,
            "  slope {:.4} (bootstrap 95% [{:.4}, {:.4}], expected {})",
            self.fitted_slope, self.slope_ci.0, self.slope_ci.1, self.expected_slope
        );
        s
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn fit_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Percentile 95% interval of the slope over point resamples. Resamples
/// with a single distinct x are redrawn.
pub fn bootstrap_ci(x: &[f64], y: &[f64], resamples: usize, seed: u64) -> (f64, f64) {
    let mut rng = stream(seed, "bootstrap");
    let n = x.len();
    let mut slopes = Vec::with_capacity(resamples);
    while slopes.len() < resamples {
        let idx: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
        if idx.iter().all(|&i| x[i] == x[idx[0]]) {
            continue;
        }
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        slopes.push(fit_slope(&xs, &ys));
    }
    slopes.sort_by(f64::total_cmp);
    let at = |q: f64| slopes[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    (at(0.025), at(0.975))
}

/// Fourier coefficient of `1_{x > 1/2}` on the unit torus.
pub fn step_coefficient(k: i64) -> Complex64 {
    if k == 0 {
        return Complex64::new(0.5, 0.0);
    }
    let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
    Complex64::new(1.0 - sign, 0.0) / Complex64::new(0.0, -2.0 * PI * k as f64)
}

/// `1_{x > 1/2}` at `x_j = j/n`, with the midpoint value at both jumps.
pub fn step_samples(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            if j == 0 || 2 * j == n {
                0.5
            } else if 2 * j < n {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

/// Discrete Fourier coefficients `(1/n) Σ_j u_j e^{−2πijk/n}` in FFT order.
pub fn fourier_coefficients(u: &[f64]) -> Result<Vec<Complex64>> {
    let n = u.len();
    let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    plan(n)?.process(&mut buf, Direction::Forward);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|z| *z *= s);
    Ok(buf)
}

/// Largest deviation of the FFT coefficients of the sampled step from the
/// closed form over `|k| <= k_max`.
pub fn step_coefficient_error(n: usize, k_max: usize) -> Result<f64> {
    if 2 * k_max >= n {
        return Err(VerifyError::Domain(format!("k_max {k_max} needs a grid finer than {n}")));
    }
    let c = fourier_coefficients(&step_samples(n))?;
    let mut worst: f64 = 0.0;
    for (i, z) in c.iter().enumerate() {
        let k = signed_frequency(i, n);
        if k.unsigned_abs() as usize <= k_max {
            worst = worst.max((z - step_coefficient(k)).norm());
        }
    }
    Ok(worst)
}

/// L² error of keeping `|k| <= K` for each `K`, by Parseval on the grid.
pub fn truncation_errors(u: &[f64], ks: &[usize]) -> Result<Vec<f64>> {
    let n = u.len();
    let c = fourier_coefficients(u)?;
    // energy at each |k|, then tail sums from the top
    let mut shell = vec![0.0; n / 2 + 1];
    for (i, z) in c.iter().enumerate() {
        shell[signed_frequency(i, n).unsigned_abs() as usize] += z.norm_sqr();
    }
    let mut tail = vec![0.0; shell.len() + 1];
    for a in (0..shell.len()).rev() {
        tail[a] = tail[a + 1] + shell[a];
    }
    Ok(ks.iter().map(|&k| tail[(k + 1).min(shell.len())].sqrt()).collect())
}

/// Truncation error of the step function for each `K` on [`STEP_GRID`].
pub fn fourier_step_truncation_study(ks: &[usize], seed: u64) -> Result<RateStudyResult> {
    if ks.iter().any(|&k| 4 * k > STEP_GRID) {
        return Err(VerifyError::Domain("mode counts must stay well below the grid size".into()));
    }
    let errors = truncation_errors(&step_samples(STEP_GRID), ks)?;
    RateStudyResult::new(
        "fourier truncation of a step",
        "K",
        ks.iter().map(|&k| k as f64).collect(),
        errors,
        Vec::new(),
        -0.5,
        seed,
    )
}

/// One-dimensional targets with known variation.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum BvTarget {
    /// `1_{x > 1/2}`.
    Step,
    /// `u(x) = x` on `[0, 1)`.
    Sawtooth,
    /// Random levels on `pieces` random intervals.
    PiecewiseConstant { pieces: usize, seed: u64 },
    Constant(f64),
}

impl BvTarget {
    /// Values at the cell midpoints `(j + 1/2)/n`.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        let x = |j: usize| (j as f64 + 0.5) / n as f64;
        match self {
            BvTarget::Step => (0..n).map(|j| if x(j) > 0.5 { 1.0 } else { 0.0 }).collect(),
            BvTarget::Sawtooth => (0..n).map(x).collect(),
            BvTarget::Constant(c) => vec![*c; n],
            BvTarget::PiecewiseConstant { pieces, seed } => {
                let mut rng = stream(*seed, "target");
                let mut cuts: Vec<f64> = (1..*pieces).map(|_| rng.gen_range(0.0..1.0)).collect();
                cuts.sort_by(f64::total_cmp);
                let levels: Vec<f64> = (0..*pieces).map(|_| rng.gen_range(-1.0..1.0)).collect();
                (0..n).map(|j| levels[cuts.partition_point(|&c| c < x(j))]).collect()
            }
        }
    }
}

fn variation(u: &[f64]) -> Vec<f64> {
    // jump across the boundary in front of sample i
    let mut d = vec![0.0; u.len()];
    for i in 1..u.len() {
        d[i] = (u[i] - u[i - 1]).abs();
    }
    d
}

/// Cell boundaries `[0, b_1, .., n]` splitting the samples of `u` into `m`
/// intervals of (nearly) equal variation. A jump is split evenly between
/// the two sides of its boundary. When the variation is concentrated in
/// fewer than `m` places the largest cells are halved to make up the count.
pub fn equal_variation_partition(u: &[f64], m: usize) -> Result<Vec<usize>> {
    let n = u.len();
    if m == 0 || m > n {
        return Err(VerifyError::Domain(format!("cannot split {n} samples into {m} cells")));
    }
    let d = variation(u);
    let total: f64 = d.iter().sum();
    if total == 0.0 {
        return Err(VerifyError::Degenerate("target has zero variation".into()));
    }
    // cumulative variation at each interior boundary
    let mut at = vec![0.0; n];
    let mut acc = 0.0;
    for b in 1..n {
        at[b] = acc + 0.5 * d[b];
        acc += d[b];
    }
    let mut cuts = vec![0];
    for j in 1..m {
        let goal = total * j as f64 / m as f64;
        let b = (1..n)
            .min_by(|&a, &c| (at[a] - goal).abs().total_cmp(&(at[c] - goal).abs()))
            .unwrap_or(1);
        cuts.push(b);
    }
    cuts.push(n);
    cuts.sort_unstable();
    cuts.dedup();
    while cuts.len() < m + 1 {
        let (i, _) = cuts
            .windows(2)
            .enumerate()
            .max_by_key(|(_, w)| w[1] - w[0])
            .expect("at least one cell");
        let mid = (cuts[i] + cuts[i + 1]) / 2;
        cuts.insert(i + 1, mid);
    }
    Ok(cuts)
}

/// Cell means on the partition.
pub fn piecewise_mean(u: &[f64], cuts: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; u.len()];
    for w in cuts.windows(2) {
        let cell = &u[w[0]..w[1]];
        let mean = cell.iter().sum::<f64>() / cell.len() as f64;
        out[w[0]..w[1]].iter_mut().for_each(|v| *v = mean);
    }
    out
}

/// `(L², L¹)` distance on the unit torus between two sampled functions.
pub fn grid_errors(u: &[f64], v: &[f64]) -> (f64, f64) {
    let n = u.len() as f64;
    let l2 = (u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / n).sqrt();
    let l1 = u.iter().zip(v).map(|(a, b)| (a - b).abs()).sum::<f64>() / n;
    (l2, l1)
}

/// `(L², L¹)` error of the equal-variation piecewise-constant approximant
/// for each slice count.
pub fn partition_errors(target: &BvTarget, n: usize, ms: &[usize]) -> Result<Vec<(f64, f64)>> {
    let u = target.sample(n);
    ms.iter()
        .map(|&m| {
            let cuts = equal_variation_partition(&u, m)?;
            Ok(grid_errors(&u, &piecewise_mean(&u, &cuts)))
        })
        .collect()
}

/// Closed-form L² error of the sawtooth on `m` equal cells.
pub fn sawtooth_partition_error(m: usize) -> f64 {
    1.0 / (12.0f64.sqrt() * m as f64)
}

pub fn able_partition_approximation_study(target: &BvTarget, ms: &[usize], seed: u64) -> Result<RateStudyResult> {
    let errs = partition_errors(target, PARTITION_GRID, ms)?;
    RateStudyResult::new(
        "piecewise-constant approximation on equal-variation cells",
        "M",
        ms.iter().map(|&m| m as f64).collect(),
        errs.iter().map(|e| e.0).collect(),
        errs.iter().map(|e| e.1).collect(),
        -1.0,
        seed,
    )
}

fn low_pass(v: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = v.len();
    let p = plan(n)?;
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    p.process(&mut buf, Direction::Forward);
    for (i, z) in buf.iter_mut().enumerate() {
        if signed_frequency(i, n).unsigned_abs() as usize > k {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    p.process(&mut buf, Direction::Inverse);
    Ok(buf.iter().map(|z| z.re / n as f64).collect())
}

/// Approximant with `m` equal-variation cells and `k` modes per cell: the
/// cell mean plus the `|k'| <= k` truncation of the mean-free restriction,
/// read back on the cell.
pub fn joint_approximant(u: &[f64], m: usize, k: usize) -> Result<Vec<f64>> {
    let cuts = equal_variation_partition(u, m)?;
    let means = piecewise_mean(u, &cuts);
    let mut out = means.clone();
    for w in cuts.windows(2) {
        let mut v = vec![0.0; u.len()];
        for x in w[0]..w[1] {
            v[x] = u[x] - means[x];
        }
        let low = low_pass(&v, k)?;
        for x in w[0]..w[1] {
            out[x] += low[x];
        }
    }
    Ok(out)
}

/// Joint study over `(K, M)` pairs, plotted against `K·M`.
pub fn joint_partition_study(target: &BvTarget, pairs: &[(usize, usize)], seed: u64) -> Result<RateStudyResult> {
    let u = target.sample(JOINT_GRID);
    let mut pts = Vec::with_capacity(pairs.len());
    for &(k, m) in pairs {
        if 4 * k > JOINT_GRID {
            return Err(VerifyError::Domain(format!("K = {k} too large for the joint grid")));
        }
        let (l2, l1) = grid_errors(&u, &joint_approximant(&u, m, k)?);
        pts.push(((k * m) as f64, l2, l1));
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    RateStudyResult::new(
        "modes per cell times cells",
        "KM",
        pts.iter().map(|p| p.0).collect(),
        pts.iter().map(|p| p.1).collect(),
        pts.iter().map(|p| p.2).collect(),
        -0.5,
        seed,
    )
}

/// Disc indicator on an `n × n` grid approximated by cell means on an
/// inside cell, an outside cell and `c` curved cells of width `2πr/c`
/// covering the circle, so `M = c + 2`.
pub fn radial_step_study(n: usize, ring_cells: &[usize], seed: u64) -> Result<RateStudyResult> {
    let (r0, centre) = (0.25, 0.5);
    let mut xs = Vec::new();
    let mut l2s = Vec::new();
    let mut l1s = Vec::new();
    for &c in ring_cells {
        if c < 3 {
            return Err(VerifyError::Domain("need at least three ring cells".into()));
        }
        let w = 2.0 * PI * r0 / c as f64;
        let cells = c + 2;
        let mut sum = vec![0.0; cells];
        let mut count = vec![0usize; cells];
        let mut label = vec![0usize; n * n];
        let mut value = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let (x, y) = ((i as f64 + 0.5) / n as f64 - centre, (j as f64 + 0.5) / n as f64 - centre);
                let r = x.hypot(y);
                let u = if r < r0 { 1.0 } else { 0.0 };
                let cell = if r < r0 - 0.5 * w {
                    0
                } else if r > r0 + 0.5 * w {
                    1
                } else {
                    let theta = y.atan2(x) + PI;
                    2 + ((theta / (2.0 * PI) * c as f64) as usize).min(c - 1)
                };
                label[i * n + j] = cell;
                value[i * n + j] = u;
                sum[cell] += u;
                count[cell] += 1;
            }
        }
        let approx: Vec<f64> = label.iter().map(|&l| sum[l] / count[l].max(1) as f64).collect();
        let (l2, l1) = grid_errors(&value, &approx);
        xs.push(cells as f64);
        l2s.push(l2);
        l1s.push(l1);
    }
    RateStudyResult::new("disc indicator on adapted cells", "M", xs, l2s, l1s, -0.5, seed)
}

/// Step truncation slope and coefficients, sawtooth partition slope and
/// closed form, joint `(K, M)` slope.
pub fn rate_checks(seed: u64) -> Vec<Check> {
    const STEP: &str = "Fourier truncation error of a jump decays like K^(-1/2)";
    const COEFF: &str = "FFT coefficients of the step match the closed form";
    const SAW: &str = "piecewise-constant error on equal-variation cells decays like 1/M";
    const SAW_EXACT: &str = "sawtooth error on M equal cells is 1/(sqrt(12) M)";
    const JOINT: &str = "cells with K modes each: error decays like (KM)^(-1/2)";
    let mut out = Vec::new();
    let ks: Vec<usize> = (3..=9).map(|p| 1 << p).collect();
    match fourier_step_truncation_study(&ks, seed) {
        Ok(r) => out.push(Check::within("rates.step_slope", STEP, r.fitted_slope, -0.55, -0.45)),
        Err(e) => out.push(Check::failed("rates.step_slope", STEP, e.to_string())),
    }
    match step_coefficient_error(STEP_GRID, 512) {
        Ok(v) => out.push(Check::below("rates.step_coefficients", COEFF, v, 1e-8).with_detail("|k| <= 512")),
        Err(e) => out.push(Check::failed("rates.step_coefficients", COEFF, e.to_string())),
    }
    let ms: Vec<usize> = (1..=6).map(|p| 1 << p).collect();
    match able_partition_approximation_study(&BvTarget::Sawtooth, &ms, seed) {
        Ok(r) => {
            let exact = r
                .errors
                .iter()
                .zip(&ms)
                .map(|(e, &m)| (e / sawtooth_partition_error(m) - 1.0).abs())
                .fold(0.0f64, f64::max);
            out.push(Check::within("rates.sawtooth_slope", SAW, r.fitted_slope, -1.02, -0.98));
            out.push(Check::below("rates.sawtooth_closed_form", SAW_EXACT, exact, 1e-3).with_detail("relative"));
        }
        Err(e) => out.push(Check::failed("rates.sawtooth_slope", SAW, e.to_string())),
    }
    match joint_partition_study(&BvTarget::Sawtooth, &[(8, 2), (16, 4), (32, 8), (64, 16)], seed) {
        Ok(r) => out.push(Check::within("rates.joint_slope", JOINT, r.fitted_slope, -0.6, -0.4)),
        Err(e) => out.push(Check::failed("rates.joint_slope", JOINT, e.to_string())),
    }
    out
}
