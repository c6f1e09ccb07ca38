//! Dataset generators with per-sample solver diagnostics.

use able_core::rng::derive_seed;
use able_core::{Grid, Tensor};
use serde::{Deserialize, Serialize};

use crate::burgers::{integrate_pair, subsample, BurgersConfig, BurgersRun};
use crate::darcy::{solve_darcy, subsample_2d, DarcyConfig};
use crate::dataset::Dataset;
use crate::error::{PdeError, Result};
use crate::grf::{make_darcy_coefficient, sample_grf_seeded, GrfSpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersSpec {
    pub grf: GrfSpec,
    pub solver: BurgersConfig,
    /// Solver grid.
    pub resolution: usize,
    /// Output grid is `resolution / stride`.
    pub stride: usize,
}

impl Default for BurgersSpec {
    fn default() -> Self {
        Self {
            grf: GrfSpec::burgers(),
            solver: BurgersConfig::default(),
            resolution: 1024,
            stride: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DarcySpec {
    pub grf: GrfSpec,
    pub solver: DarcyConfig,
    pub forcing: f64,
    pub resolution: usize,
    pub stride: usize,
    pub offset: usize,
}

impl Default for DarcySpec {
    fn default() -> Self {
        Self {
            grf: GrfSpec::darcy(),
            solver: DarcyConfig::default(),
            forcing: 1.0,
            resolution: 256,
            stride: 4,
            offset: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "problem", rename_all = "lowercase")]
pub enum Problem {
    Burgers(BurgersSpec),
    Darcy(DarcySpec),
}

impl Problem {
    pub fn output_grid(&self) -> Result<Grid> {
        let g = match self {
            Problem::Burgers(s) => Grid::d1(s.resolution / s.stride.max(1)),
            Problem::Darcy(s) => {
                let n = (s.resolution.saturating_sub(s.offset) + s.stride.max(1) - 1) / s.stride.max(1);
                Grid::d2(n, n)
            }
        };
        Ok(g?)
    }
}

/// Solver-side checks for one sample, on the solver grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SampleReport {
    Burgers {
        steps: usize,
        dt: f64,
        /// `max_t |∫u(t) − ∫u0|` over the step record.
        mean_drift: f64,
        /// `|mean(u(1)) − mean(u0)|` on grid values.
        final_mean_drift: f64,
        /// Largest one-step change of `∫u²` (≤ 0 when dissipative).
        max_energy_increase: f64,
    },
    Darcy {
        iterations: usize,
        residual: f64,
        min_interior: f64,
        min_coefficient: f64,
    },
}

fn burgers_report(u0: &[f64], run: &BurgersRun) -> SampleReport {
    let m0 = run.mean[0];
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    SampleReport::Burgers {
        steps: run.steps,
        dt: run.dt,
        mean_drift: run.mean.iter().fold(0.0_f64, |m, v| m.max((v - m0).abs())),
        final_mean_drift: (mean(&run.u) - mean(u0)).abs(),
        max_energy_increase: run
            .energy
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn sample_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &format!("data/{i}"))
}

fn generate_burgers(spec: &BurgersSpec, samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>, Vec<SampleReport>)> {
    let fine = Grid::d1(spec.resolution)?;
    if spec.stride == 0 || spec.resolution % spec.stride != 0 {
        return Err(PdeError::Domain(format!(
            "stride {} must divide resolution {}",
            spec.stride, spec.resolution
        )));
    }
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut reports = Vec::with_capacity(samples);
    let mut i = 0;
    while i < samples {
        let a = sample_grf_seeded(&spec.grf, &fine, sample_seed(seed, i))?;
        let b = if i + 1 < samples {
            Some(sample_grf_seeded(&spec.grf, &fine, sample_seed(seed, i + 1))?)
        } else {
            None
        };
        let av = a.as_real()?;
        let bv = b.as_ref().map(|t| t.as_real()).transpose()?;
        let (ra, rb) = integrate_pair(av, bv, &spec.solver)?;
        for (u0, run) in std::iter::once((av, ra)).chain(bv.zip(rb)) {
            reports.push(burgers_report(u0, &run));
            inputs.extend(subsample(u0, spec.stride, 0));
            targets.extend(subsample(&run.u, spec.stride, 0));
        }
        i += 2;
    }
    Ok((inputs, targets, reports))
}

fn generate_darcy(spec: &DarcySpec, samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>, Vec<SampleReport>)> {
    let n = spec.resolution;
    let fine = Grid::d2(n, n)?;
    let f = Tensor::full(&[n, n], spec.forcing);
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    let mut reports = Vec::with_capacity(samples);
    for i in 0..samples {
        let a = make_darcy_coefficient(&spec.grf, &fine, sample_seed(seed, i))?;
        let sol = solve_darcy(&a, &f, &spec.solver)?;
        let u = sol.u.as_real()?;
        let mut min_interior = f64::INFINITY;
        for r in 1..n - 1 {
            for c in 1..n - 1 {
                min_interior = min_interior.min(u[r * n + c]);
            }
        }
        reports.push(SampleReport::Darcy {
            iterations: sol.iterations,
            residual: sol.residual,
            min_interior,
            min_coefficient: a.as_real()?.iter().copied().fold(f64::INFINITY, f64::min),
        });
        inputs.extend(subsample_2d(&a, spec.stride, spec.offset)?.into_real()?);
        targets.extend(subsample_2d(&sol.u, spec.stride, spec.offset)?.into_real()?);
    }
    Ok((inputs, targets, reports))
}

/// A dataset that is a pure function of `(problem, samples, seed)`.
pub fn generate(problem: &Problem, samples: usize, seed: u64) -> Result<(Dataset, Vec<SampleReport>)> {
    let grid = problem.output_grid()?;
    let (inputs, targets, reports) = match problem {
        Problem::Burgers(s) => generate_burgers(s, samples, seed)?,
        Problem::Darcy(s) => generate_darcy(s, samples, seed)?,
    };
    let mut shape = vec![samples, 1];
    shape.extend(grid.extents());
    let meta = serde_json::json!({
        "generator": problem,
        "seed": seed,
        "samples": samples,
    });
    let ds = Dataset::new(grid, Tensor::real(&shape, inputs)?, Tensor::real(&shape, targets)?, meta)?;
    Ok((ds, reports))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn output_grids() {
        assert_eq!(Problem::Burgers(BurgersSpec::default()).output_grid().unwrap().extents(), &[256]);
        assert_eq!(Problem::Darcy(DarcySpec::default()).output_grid().unwrap().extents(), &[64, 64]);
    }

    #[test]
    fn odd_sample_count_and_small_grids() {
        let spec = BurgersSpec {
            resolution: 64,
            stride: 2,
            solver: BurgersConfig {
                t_final: 0.01,
                ..BurgersConfig::default()
            },
            ..BurgersSpec::default()
        };
        let (d, reports) = generate(&Problem::Burgers(spec), 3, 5).unwrap();
        assert_eq!(d.inputs.shape(), &[3, 1, 32]);
        assert_eq!(reports.len(), 3);
    }

    #[test]
    fn problem_config_roundtrips() {
        let p = Problem::Darcy(DarcySpec::default());
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"problem\":\"darcy\""));
        assert_eq!(serde_json::from_str::<Problem>(&s).unwrap(), p);
    }
}
