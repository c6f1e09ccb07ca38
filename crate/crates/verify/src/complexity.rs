//! Wall-clock scaling of one layer forward in the slice count and the grid size.

use std::time::Instant;

use able_core::autograd::Activation;
use able_core::frame::DensityConfig;
use able_core::operator::{AbleLayer, MultiplierKind};
use able_core::params::ParamStore;
use able_core::rng::stream;
use able_core::Tensor;
use rand::Rng;
use serde::Serialize;

use crate::error::{Result, VerifyError};
use crate::properties::fourier_branch;
use crate::rates::fit_slope;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityConfig {
    pub width: usize,
    pub modes: usize,
    pub batch: usize,
    pub slices: Vec<usize>,
    pub grids: Vec<usize>,
    /// Timed repetitions; the median is reported.
    pub repeats: usize,
    /// Each repetition loops until it spans at least this long.
    pub min_seconds: f64,
    pub seed: u64,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        Self {
            width: 8,
            modes: 16,
            batch: 4,
            slices: vec![1, 2, 4, 8],
            grids: vec![256, 1024],
            repeats: 11,
            min_seconds: 0.03,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: usize,
    /// Zero marks the reference Fourier layer.
    pub slices: usize,
    pub seconds: f64,
    pub calls_per_repeat: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub rows: Vec<TimingRow>,
    /// Log–log slope of time against `M` at the largest grid.
    pub slice_slope: f64,
    /// `t(2M)/t(M)` for consecutive doublings at the largest grid.
    pub doubling_ratios: Vec<(usize, f64)>,
    /// Exponent of `N` in `t/log N` per slice count.
    pub grid_exponents: Vec<(usize, f64)>,
    /// `t(N_last)/t(N_first)` per slice count.
    pub grid_ratios: Vec<(usize, f64)>,
    /// `t(M = 1)/t(Fourier layer)` per grid.
    pub fno_ratios: Vec<(usize, f64)>,
}

impl ComplexityReport {
    pub fn time(&self, n: usize, slices: usize) -> Option<f64> {
        self.rows.iter().find(|r| r.n == n && r.slices == slices).map(|r| r.seconds)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("     N   M   seconds/call\n");
        for r in &self.rows {
            let m = if r.slices == 0 { "fno".to_string() } else { r.slices.to_string() };
            s.push_str(&format!("{:>6} {:>3}   {:.4e}\n", r.n, m, r.seconds));
        }
        s.push_str(&format!("slope in M: {:.3}\n", self.slice_slope));
        for (m, r) in &self.doubling_ratios {
            s.push_str(&format!("t({})/t({m}): {r:.3}\n", 2 * m));
        }
        for (m, e) in &self.grid_exponents {
            s.push_str(&format!("M = {m}: exponent of N after dividing by log N {e:.3}\n"));
        }
        for (n, r) in &self.fno_ratios {
            s.push_str(&format!("N = {n}: t(M = 1)/t(fourier layer) {r:.3}\n"));
        }
        s
    }
}

type Timed<'a> = Box<dyn FnMut() -> Result<()> + 'a>;

/// Median seconds per call for each job. Each job first gets a loop count
/// long enough to dwarf the timer resolution; repetitions then rotate over
/// the jobs so slow drift in machine load hits all of them alike.
fn median_times(jobs: &mut [Timed<'_>], repeats: usize, min_seconds: f64) -> Result<Vec<(f64, usize)>> {
    let mut calls = Vec::with_capacity(jobs.len());
    for f in jobs.iter_mut() {
        for _ in 0..2 {
            f()?;
        }
        let mut c = 1;
        loop {
            let t = Instant::now();
            for _ in 0..c {
                f()?;
            }
            if t.elapsed().as_secs_f64() >= min_seconds || c >= 1 << 20 {
                break;
            }
            c *= 2;
        }
        calls.push(c);
    }
    let mut samples = vec![Vec::with_capacity(repeats); jobs.len()];
    for _ in 0..repeats.max(1) {
        for (j, f) in jobs.iter_mut().enumerate() {
            let t = Instant::now();
            for _ in 0..calls[j] {
                f()?;
            }
            samples[j].push(t.elapsed().as_secs_f64() / calls[j] as f64);
        }
    }
    Ok(samples
        .into_iter()
        .zip(calls)
        .map(|(mut s, c)| {
            s.sort_by(f64::total_cmp);
            (s[s.len() / 2], c)
        })
        .collect())
}

/// Keep freed blocks in the process. By default glibc hands large blocks
/// back to the kernel on free, so every forward pass pays page faults in
/// proportion to how many intermediates it allocates rather than to the
/// arithmetic it does. Affects the whole process.
fn retain_heap() {
    #[cfg(all(target_os = "linux", target_env = "gnu"))]
    unsafe {
        libc::mallopt(libc::M_MMAP_THRESHOLD, 1 << 30);
        libc::mallopt(libc::M_TRIM_THRESHOLD, 1 << 30);
    }
}

pub fn complexity_scaling_check(cfg: &ComplexityConfig) -> Result<ComplexityReport> {
    if cfg.slices.is_empty() || cfg.grids.is_empty() {
        return Err(VerifyError::Domain("need at least one slice count and one grid".into()));
    }
    retain_heap();
    let mut rng = stream(cfg.seed, "timing");
    let mut built = Vec::new();
    for &n in &cfg.grids {
        let f = Tensor::from_fn(&[cfg.batch, cfg.width, n], |_| rng.gen_range(-1.0..1.0));
        for &m in &cfg.slices {
            let mut store = ParamStore::new();
            let layer = AbleLayer::new(
                &mut store,
                "layer",
                cfg.width,
                cfg.width,
                &[cfg.modes],
                m,
                MultiplierKind::Diagonal,
                DensityConfig::default_1d(),
                Activation::Gelu,
                &mut stream(cfg.seed, "init"),
            )?;
            let fno = if m == 1 { Some(fourier_branch(&layer, &store, 0)?) } else { None };
            built.push((n, m, f.clone(), layer, store, fno));
        }
    }
    let mut keys = Vec::new();
    let mut jobs: Vec<Timed<'_>> = Vec::new();
    for (n, m, f, layer, store, fno) in &built {
        keys.push((*n, *m));
        jobs.push(Box::new(move || Ok(layer.apply(store, f).map(|_| ())?)));
        if let Some(fno) = fno {
            keys.push((*n, 0));
            jobs.push(Box::new(move || Ok(fno.forward(f).map(|_| ())?)));
        }
    }
    let times = median_times(&mut jobs, cfg.repeats, cfg.min_seconds)?;
    let rows: Vec<TimingRow> = keys
        .iter()
        .zip(times)
        .map(|(&(n, slices), (seconds, calls_per_repeat))| TimingRow { n, slices, seconds, calls_per_repeat })
        .collect();
    let at = |n: usize, m: usize| rows.iter().find(|r| r.n == n && r.slices == m).map(|r| r.seconds);
    let n_max = *cfg.grids.iter().max().expect("nonempty");
    let ms: Vec<f64> = cfg.slices.iter().map(|&m| m as f64).collect();
    let ts: Vec<f64> = cfg.slices.iter().filter_map(|&m| at(n_max, m)).collect();
    let slice_slope = if ms.len() >= 2 { fit_slope(&ms, &ts) } else { f64::NAN };
    let doubling_ratios = cfg
        .slices
        .iter()
        .filter(|&&m| cfg.slices.contains(&(2 * m)))
        .filter_map(|&m| Some((m, at(n_max, 2 * m)? / at(n_max, m)?)))
        .collect();
    let mut grid_exponents = Vec::new();
    let mut grid_ratios = Vec::new();
    if cfg.grids.len() >= 2 {
        let ns: Vec<f64> = cfg.grids.iter().map(|&n| n as f64).collect();
        let (first, last) = (cfg.grids[0], *cfg.grids.last().expect("nonempty"));
        for &m in &cfg.slices {
            let scaled: Vec<f64> = cfg.grids.iter().filter_map(|&n| Some(at(n, m)? / (n as f64).ln())).collect();
            grid_exponents.push((m, fit_slope(&ns, &scaled)));
            if let (Some(a), Some(b)) = (at(first, m), at(last, m)) {
                grid_ratios.push((m, b / a));
            }
        }
    }
    let fno_ratios = cfg.grids.iter().filter_map(|&n| Some((n, at(n, 1)? / at(n, 0)?))).collect();
    Ok(ComplexityReport {
        rows,
        slice_slope,
        doubling_ratios,
        grid_exponents,
        grid_ratios,
        fno_ratios,
    })
}
