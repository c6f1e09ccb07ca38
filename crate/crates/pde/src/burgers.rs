//! Viscous Burgers equation `u_t + (u²/2)_x = ν u_xx` on the unit torus.
//!
//! Pseudo-spectral in space with the 2/3 rule, Lawson (integrating-factor)
//! RK4 in time on a fixed step. Two real initial conditions can be advanced
//! together packed as `u_a + i·u_b`: every spectral operator here maps real
//! fields to real fields and the only nonlinearity is evaluated pointwise on
//! the real and imaginary parts separately, so the two solutions never mix.

use std::f64::consts::PI;

use able_core::fft::{plan, signed_frequency, Direction, Radix2Plan};
use able_core::Tensor;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{PdeError, Result};

pub const MAX_STEPS: usize = 50_000_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BurgersConfig {
    pub nu: f64,
    pub t_final: f64,
    pub cfl: f64,
    pub max_dt: f64,
}

impl Default for BurgersConfig {
    fn default() -> Self {
        Self {
            nu: 0.1,
            t_final: 1.0,
            cfl: 0.5,
            max_dt: 1e-4,
        }
    }
}

impl BurgersConfig {
    pub fn with_nu(nu: f64) -> Self {
        Self {
            nu,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.nu > 0.0) {
            return Err(PdeError::Domain(format!("viscosity must be positive, got {}", self.nu)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(PdeError::Domain(format!("bad final time {}", self.t_final)));
        }
        if !(self.cfl > 0.0 && self.max_dt > 0.0) {
            return Err(PdeError::Domain("cfl and max_dt must be positive".into()));
        }
        Ok(())
    }

    /// Step count and uniform step so that `steps·dt = t_final` exactly.
    pub fn schedule(&self, n: usize, max_speed: f64) -> (usize, f64) {
        let dx = 1.0 / n as f64;
        let mut dt = self.max_dt;
        if max_speed > 0.0 {
            dt = dt.min(self.cfl * dx / max_speed);
        }
        if self.t_final == 0.0 {
            return (0, 0.0);
        }
        let steps = (self.t_final / dt).ceil().max(1.0) as usize;
        (steps, self.t_final / steps as f64)
    }
}

/// Final state plus the per-step diagnostics used by the invariants.
#[derive(Clone, Debug, PartialEq)]
pub struct BurgersRun {
    pub u: Vec<f64>,
    pub steps: usize,
    pub dt: f64,
    /// `∫u²` before the first step and after every step.
    pub energy: Vec<f64>,
    /// `∫u` on the same schedule.
    pub mean: Vec<f64>,
}

struct Operators {
    plan: std::rc::Rc<Radix2Plan>,
    n: usize,
    e_full: Vec<f64>,
    e_half: Vec<f64>,
    // −(ik/2)·mask
    flux: Vec<Complex64>,
    mask: Vec<f64>,
}

impl Operators {
    fn new(n: usize, nu: f64, dt: f64) -> Result<Self> {
        let plan = plan(n)?;
        let cutoff = n as i64 / 3;
        let mut e_full = Vec::with_capacity(n);
        let mut e_half = Vec::with_capacity(n);
        let mut flux = Vec::with_capacity(n);
        let mut mask = Vec::with_capacity(n);
        for i in 0..n {
            let s = signed_frequency(i, n);
            let k = 2.0 * PI * s as f64;
            e_full.push((-nu * k * k * dt).exp());
            e_half.push((-nu * k * k * dt / 2.0).exp());
            let keep = if s.abs() <= cutoff && 2 * s.unsigned_abs() as usize != n { 1.0 } else { 0.0 };
            mask.push(keep);
            flux.push(Complex64::new(0.0, -k / 2.0) * keep);
        }
        Ok(Self {
            plan,
            n,
            e_full,
            e_half,
            flux,
            mask,
        })
    }

    /// Spectral flux term `−(u²/2)_x` of packed spectrum `v`.
    fn nonlinear(&self, v: &[Complex64], work: &mut [Complex64], out: &mut [Complex64]) {
        let inv_n = 1.0 / self.n as f64;
        for ((w, z), m) in work.iter_mut().zip(v).zip(&self.mask) {
            *w = z * (m * inv_n);
        }
        self.plan.process(work, Direction::Inverse);
        for w in work.iter_mut() {
            *w = Complex64::new(w.re * w.re, w.im * w.im);
        }
        self.plan.process(work, Direction::Forward);
        for ((o, w), f) in out.iter_mut().zip(work.iter()).zip(&self.flux) {
            *o = w * f;
        }
    }
}

/// `(∫u_a², ∫u_b²)` and `(∫u_a, ∫u_b)` of an unnormalised packed spectrum.
fn packed_moments(z: &[Complex64]) -> ([f64; 2], [f64; 2]) {
    let n = z.len();
    let mut ea = 0.0;
    let mut eb = 0.0;
    for i in 0..n {
        let j = (n - i) % n;
        let zc = z[j].conj();
        let a = (z[i] + zc) * 0.5;
        let b = (z[i] - zc) * Complex64::new(0.0, -0.5);
        ea += a.norm_sqr();
        eb += b.norm_sqr();
    }
    let n2 = (n * n) as f64;
    let nf = n as f64;
    ([ea / n2, eb / n2], [z[0].re / nf, z[0].im / nf])
}

fn check_field(u0: &[f64]) -> Result<usize> {
    let n = u0.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(PdeError::Core(able_core::Error::UnsupportedSize(n)));
    }
    if u0.iter().any(|v| !v.is_finite()) {
        return Err(PdeError::Domain("initial condition is not finite".into()));
    }
    Ok(n)
}

/// Advance `u_a` and (optionally) `u_b` to `t_final` on a shared step.
pub fn integrate_pair(u_a: &[f64], u_b: Option<&[f64]>, cfg: &BurgersConfig) -> Result<(BurgersRun, Option<BurgersRun>)> {
    cfg.validate()?;
    let n = check_field(u_a)?;
    if let Some(b) = u_b {
        if check_field(b)? != n {
            return Err(PdeError::Domain("paired fields must share a grid".into()));
        }
    }
    let zero = vec![0.0; n];
    let ub = u_b.unwrap_or(&zero);
    let max_speed = u_a.iter().chain(ub).fold(0.0_f64, |m, v| m.max(v.abs()));
    let (steps, dt) = cfg.schedule(n, max_speed);
    if steps > MAX_STEPS {
        return Err(PdeError::Domain(format!(
            "{steps} steps needed (max {MAX_STEPS}); initial speed {max_speed:e} too large"
        )));
    }
    let ops = Operators::new(n, cfg.nu, dt)?;

    let mut u: Vec<Complex64> = u_a.iter().zip(ub).map(|(&a, &b)| Complex64::new(a, b)).collect();
    ops.plan.process(&mut u, Direction::Forward);

    let mut energy = [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)];
    let mut mean = [Vec::with_capacity(steps + 1), Vec::with_capacity(steps + 1)];
    let record = |u: &[Complex64], energy: &mut [Vec<f64>; 2], mean: &mut [Vec<f64>; 2]| {
        let (e, m) = packed_moments(u);
        for s in 0..2 {
            energy[s].push(e[s]);
            mean[s].push(m[s]);
        }
        e[0].is_finite() && e[1].is_finite()
    };
    if !record(&u, &mut energy, &mut mean) {
        return Err(PdeError::SolverFailure {
            step: 0,
            msg: "initial energy overflows".into(),
        });
    }

    let zero_c = Complex64::new(0.0, 0.0);
    let mut work = vec![zero_c; n];
    let mut stage = vec![zero_c; n];
    let (mut a, mut b, mut c, mut d) = (vec![zero_c; n], vec![zero_c; n], vec![zero_c; n], vec![zero_c; n]);
    let h2 = dt / 2.0;
    for step in 0..steps {
        ops.nonlinear(&u, &mut work, &mut a);
        for i in 0..n {
            stage[i] = ops.e_half[i] * (u[i] + a[i] * h2);
        }
        ops.nonlinear(&stage, &mut work, &mut b);
        for i in 0..n {
            stage[i] = ops.e_half[i] * u[i] + b[i] * h2;
        }
        ops.nonlinear(&stage, &mut work, &mut c);
        for i in 0..n {
            stage[i] = ops.e_full[i] * u[i] + ops.e_half[i] * c[i] * dt;
        }
        ops.nonlinear(&stage, &mut work, &mut d);
        for i in 0..n {
            let (ef, eh) = (ops.e_full[i], ops.e_half[i]);
            u[i] = ef * u[i] + (a[i] * ef + (b[i] + c[i]) * (2.0 * eh) + d[i]) * (dt / 6.0);
        }
        if !record(&u, &mut energy, &mut mean) {
            return Err(PdeError::SolverFailure {
                step: step + 1,
                msg: format!("non-finite state at t = {:.6}", (step + 1) as f64 * dt),
            });
        }
    }

    ops.plan.process(&mut u, Direction::Inverse);
    let inv_n = 1.0 / n as f64;
    let [ea, eb] = energy;
    let [ma, mb] = mean;
    let run_a = BurgersRun {
        u: u.iter().map(|z| z.re * inv_n).collect(),
        steps,
        dt,
        energy: ea,
        mean: ma,
    };
    let run_b = u_b.map(|_| BurgersRun {
        u: u.iter().map(|z| z.im * inv_n).collect(),
        steps,
        dt,
        energy: eb,
        mean: mb,
    });
    Ok((run_a, run_b))
}

/// Single-field run with diagnostics.
pub fn integrate_burgers(u0: &[f64], cfg: &BurgersConfig) -> Result<BurgersRun> {
    Ok(integrate_pair(u0, None, cfg)?.0)
}

/// `u(·, t_final)` for a 1D field of shape `(N,)`.
pub fn solve_burgers(u0: &Tensor, nu: f64, t_final: f64) -> Result<Tensor> {
    if u0.ndim() != 1 {
        return Err(PdeError::Domain(format!("expected a 1D field, got shape {:?}", u0.shape())));
    }
    let cfg = BurgersConfig {
        nu,
        t_final,
        ..BurgersConfig::default()
    };
    let run = integrate_burgers(u0.as_real()?, &cfg)?;
    Ok(Tensor::real(u0.shape(), run.u)?)
}

/// Every `stride`-th entry starting at `offset`.
pub fn subsample(u: &[f64], stride: usize, offset: usize) -> Vec<f64> {
    u.iter().skip(offset).step_by(stride.max(1)).copied().collect()
}
