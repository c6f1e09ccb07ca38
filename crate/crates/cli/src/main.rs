//! `able`: generate data, train and evaluate models, run the property
//! checks, rate studies, sweeps and timing benchmark.

mod config;
mod error;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use able_core::checkpoint::load_network;
use able_core::operator::NetworkConfig;
use able_pde::{dataset_read, dataset_write, generate, Dataset, SampleReport};
use able_train::trainer::{build_network, evaluate_per_sample, summary_row, SUMMARY_HEADER};
use able_train::{split_indices, train, train_split};
use able_verify::complexity::{complexity_scaling_check, ComplexityConfig};
use able_verify::rates::{
    able_partition_approximation_study, fourier_step_truncation_study, joint_partition_study, radial_step_study,
    rate_checks, BvTarget,
};
use able_verify::sweep::{sweep_table, temperature_sweep};
use able_verify::{run_frame_properties, Fault, Level};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::config::{key_listing, load, RunConfig};
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "able", version, about = "Adaptive spectral neural operators")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set model.slices=4`. Repeatable.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set seed=N`.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (`paths.out`).
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Dataset file (`paths.data`).
    #[arg(short, long, value_name = "FILE")]
    data: Option<PathBuf>,
}

impl Common {
    fn overrides(&self) -> Vec<String> {
        let mut v = self.set.clone();
        if let Some(s) = self.seed {
            v.push(format!("seed={s}"));
        }
        if let Some(o) = &self.out {
            v.push(format!("paths.out={}", toml_str(o)));
        }
        if let Some(d) = &self.data {
            v.push(format!("paths.data={}", toml_str(d)));
        }
        v
    }

    fn load(&self, extra: &[String]) -> Result<RunConfig, CliError> {
        let mut o = self.overrides();
        o.extend_from_slice(extra);
        load(self.config.as_deref(), &o)
    }
}

fn toml_str(p: &Path) -> String {
    toml::Value::String(p.display().to_string()).to_string()
}

#[derive(Clone, Copy, ValueEnum)]
enum VerifyLevel {
    Quick,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    None,
    /// Use the unnormalised forward transform inside the frame.
    FlipFftNormalization,
    /// Scale the densities so they no longer sum to one.
    CorruptDensity,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    /// Slice count.
    M,
    /// Softmax temperature.
    T,
}

#[derive(Clone, Copy, ValueEnum)]
enum Study {
    /// Fourier truncation of a step function against K.
    FourierStep,
    /// Sawtooth on equal-variation cells against M.
    Partition,
    /// Cells with a few Fourier modes each, against K·M.
    Joint,
    /// Disc indicator on adapted 2D cells against M.
    Radial,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dataset and print its checksum.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Shorthand for `--set samples=N`.
        #[arg(short = 'n', long)]
        samples: Option<usize>,
    },
    /// Train a model on a dataset.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        /// Shorthand for `--set model.slices=M`.
        #[arg(long)]
        slices: Option<usize>,
    },
    /// Relative L2 of a checkpoint on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Defaults to `<paths.out>/model.ckpt`.
        #[arg(long, value_name = "FILE")]
        checkpoint: Option<PathBuf>,
    },
    /// Frame and layer property checks; exit 1 on any failure.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "quick")]
        level: VerifyLevel,
        /// Inject a known bug to confirm the checks catch it.
        #[arg(long, value_enum, default_value = "none")]
        fault: FaultArg,
    },
    /// One training run per value of M or T at a shared seed and budget.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        axis: Axis,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Approximation-rate study with fitted slope and bootstrap interval.
    RateStudy {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        study: Study,
    },
    /// Forward-pass timing against M and N.
    Bench {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        slices: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "256,1024")]
        grids: Vec<usize>,
        #[arg(long, default_value_t = 11)]
        repeats: usize,
    },
}

fn main() -> ExitCode {
    let listing = key_listing();
    let mut cmd = Cli::command();
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for n in names {
        let l = listing.clone();
        cmd = cmd.mut_subcommand(n, move |s| s.after_long_help(l));
    }
    let matches = cmd.get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Gen { common, samples } => {
            let extra: Vec<String> = samples.map(|n| format!("samples={n}")).into_iter().collect();
            cmd_gen(&common.load(&extra)?)
        }
        Cmd::Train { common, epochs, slices } => {
            let mut extra = Vec::new();
            if let Some(e) = epochs {
                extra.push(format!("train.epochs={e}"));
            }
            if let Some(m) = slices {
                extra.push(format!("model.slices={m}"));
            }
            cmd_train(&common.load(&extra)?)
        }
        Cmd::Eval { common, checkpoint } => cmd_eval(&common.load(&[])?, checkpoint),
        Cmd::Verify { common, level, fault } => cmd_verify(&common, level, fault),
        Cmd::Sweep { common, axis, values } => cmd_sweep(&common.load(&[])?, axis, &values),
        Cmd::RateStudy { common, study } => cmd_rate_study(&common, study),
        Cmd::Bench {
            common,
            slices,
            grids,
            repeats,
        } => cmd_bench(&common, slices, grids, repeats),
    }
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn read_data(path: &Path) -> Result<Dataset, CliError> {
    if !path.exists() {
        return Err(CliError::Io(format!("{}: dataset not found", path.display())));
    }
    Ok(dataset_read(path)?)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn cmd_gen(cfg: &RunConfig) -> Result<(), CliError> {
    let path = &cfg.paths.data;
    let (data, reports) = generate(&cfg.problem(), cfg.samples, cfg.seed)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    dataset_write(&data, path)?;
    cfg.save(&sibling(path, ".config.toml"))?;
    let lines: Vec<String> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| json!({"sample": i, "report": r}).to_string())
        .collect();
    write(&sibling(path, ".reports.jsonl"), &(lines.join("\n") + "\n"))?;
    let mut worst = (0.0f64, f64::NEG_INFINITY, 0.0f64, f64::INFINITY);
    for r in &reports {
        match *r {
            SampleReport::Burgers {
                mean_drift,
                max_energy_increase,
                ..
            } => {
                worst.0 = worst.0.max(mean_drift);
                worst.1 = worst.1.max(max_energy_increase);
            }
            SampleReport::Darcy {
                residual, min_interior, ..
            } => {
                worst.2 = worst.2.max(residual);
                worst.3 = worst.3.min(min_interior);
            }
        }
    }
    println!("wrote {} samples to {}", data.len(), path.display());
    match cfg.task {
        config::Task::Burgers if !reports.is_empty() => {
            println!("max mean drift {:.3e}, max one-step energy change {:.3e}", worst.0, worst.1)
        }
        config::Task::Darcy if !reports.is_empty() => {
            println!("max CG residual {:.3e}, min interior value {:.3e}", worst.2, worst.3)
        }
        _ => {}
    }
    println!("sha256 {}", data.digest()?);
    Ok(())
}

fn model_for(cfg: &RunConfig, data: &Dataset) -> NetworkConfig {
    NetworkConfig {
        in_channels: data.in_channels(),
        out_channels: data.out_channels(),
        ..cfg.model.clone()
    }
}

fn cmd_train(cfg: &RunConfig) -> Result<(), CliError> {
    let data = read_data(&cfg.paths.data)?;
    let out = &cfg.paths.out;
    let (net, mut store) = build_network(model_for(cfg, &data), cfg.seed)?;
    cfg.save(&out.join("config.toml"))?;
    let report = train(&net, &mut store, &data, &cfg.train, Some(out))?;
    println!("{SUMMARY_HEADER}\n{}", summary_row(&net, &report));
    println!("outputs in {}", out.display());
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, checkpoint: Option<PathBuf>) -> Result<(), CliError> {
    let ckpt = checkpoint.unwrap_or_else(|| cfg.paths.out.join("model.ckpt"));
    if !ckpt.exists() {
        return Err(CliError::Io(format!("{}: checkpoint not found", ckpt.display())));
    }
    let (net, store, _) = load_network(&ckpt)?;
    let data = read_data(&cfg.paths.data)?;
    let c = &net.config;
    let mismatch = [
        ("spatial dimensions", c.dims, data.grid.dims()),
        ("input channels", c.in_channels, data.in_channels()),
        ("output channels", c.out_channels, data.out_channels()),
    ];
    for (what, model, found) in mismatch {
        if model != found {
            return Err(CliError::Usage(format!(
                "architecture mismatch: checkpoint has {model} {what}, dataset has {found}"
            )));
        }
    }
    let per = evaluate_per_sample(&net, &store, &data, cfg.train.batch_size)?;
    let mean = able_train::loss::order_free_mean(&per);
    let out = &cfg.paths.out;
    let json = json!({
        "checkpoint": ckpt.display().to_string(),
        "data": cfg.paths.data.display().to_string(),
        "samples": per.len(),
        "mean_rel_l2": mean,
        "per_sample_rel_l2": per,
    });
    write(&out.join("eval.json"), &serde_json::to_string_pretty(&json).expect("json"))?;
    let mut csv = String::from("sample,rel_l2\n");
    for (i, v) in per.iter().enumerate() {
        csv.push_str(&format!("{i},{v:.12e}\n"));
    }
    write(&out.join("eval.csv"), &csv)?;
    cfg.save(&out.join("eval.config.toml"))?;
    println!("mean relative L2 {mean:.6e} over {} samples", per.len());
    Ok(())
}

fn cmd_verify(common: &Common, level: VerifyLevel, fault: FaultArg) -> Result<(), CliError> {
    let cfg = common.load(&[])?;
    let (lvl, full) = match level {
        VerifyLevel::Quick => (Level::Quick, false),
        VerifyLevel::Full => (Level::Full, true),
    };
    let fault = match fault {
        FaultArg::None => Fault::None,
        FaultArg::FlipFftNormalization => Fault::FlipFftNormalization,
        FaultArg::CorruptDensity => Fault::CorruptDensity,
    };
    let mut report = run_frame_properties(lvl, cfg.seed, fault);
    if full {
        for c in rate_checks(cfg.seed) {
            report.push(c);
        }
    }
    print!("{}", report.to_text());
    if common.out.is_some() {
        let out = &cfg.paths.out;
        write(&out.join("report.json"), &serde_json::to_string_pretty(&report.to_json()).expect("json"))?;
        cfg.save(&out.join("config.toml"))?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        Err(CliError::Check(format!("{} check(s) failed", report.failures().count())))
    }
}

fn cmd_sweep(cfg: &RunConfig, axis: Axis, values: &[f64]) -> Result<(), CliError> {
    let data = read_data(&cfg.paths.data)?;
    let out = &cfg.paths.out;
    let (n_train, n_test) = cfg.train.split_sizes(data.len())?;
    let (tr, te) = split_indices(data.len(), n_train, n_test, cfg.seed)?;
    let (train_set, test_set) = (data.select(&tr)?, data.select(&te)?);
    cfg.save(&out.join("config.toml"))?;
    let table = match axis {
        Axis::M => {
            let mut csv = String::from(SUMMARY_HEADER);
            csv.push('\n');
            for &v in values {
                if !(v >= 1.0 && v.fract() == 0.0) {
                    return Err(CliError::Usage(format!("slice count must be a positive integer, got {v}")));
                }
                let m = v as usize;
                let model = NetworkConfig {
                    slices: m,
                    ..model_for(cfg, &data)
                };
                let (net, mut store) = build_network(model, cfg.seed)?;
                let report = train_split(&net, &mut store, &train_set, &test_set, &cfg.train, Some(&out.join(format!("m{m}"))))?;
                let row = summary_row(&net, &report);
                eprintln!("M = {m}{}: {row}", if m == 1 { " (Fourier layer)" } else { "" });
                csv.push_str(&row);
                csv.push('\n');
            }
            csv
        }
        Axis::T => {
            if values.iter().any(|&t| !(t > 0.0)) {
                return Err(CliError::Usage("temperatures must be positive".into()));
            }
            let rows = temperature_sweep(&model_for(cfg, &data), &train_set, &test_set, values, &cfg.train, cfg.seed)?;
            let mut csv = String::from(
                "temperature,initial_test_rel_l2,final_test_rel_l2,final_train_rel_l2,seconds_per_epoch,initial_entropy,final_entropy,max_uniform_deviation\n",
            );
            let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.10e}"));
            for r in &rows {
                csv.push_str(&format!(
                    "{},{},{},{:.10e},{:.6},{:.10e},{:.10e},{:.6e}\n",
                    r.temperature,
                    opt(r.initial_test_rel_l2),
                    opt(r.final_test_rel_l2),
                    r.final_train_rel_l2,
                    r.seconds_per_epoch,
                    r.initial_entropy,
                    r.final_entropy,
                    r.max_uniform_deviation
                ));
            }
            eprint!("{}", sweep_table(&rows));
            csv
        }
    };
    write(&out.join("sweep.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_rate_study(common: &Common, study: Study) -> Result<(), CliError> {
    let cfg = common.load(&[])?;
    let pow2 = |a: u32, b: u32| -> Vec<usize> { (a..=b).map(|p| 1 << p).collect() };
    let (name, r) = match study {
        Study::FourierStep => ("fourier_step", fourier_step_truncation_study(&pow2(3, 9), cfg.seed)?),
        Study::Partition => (
            "partition",
            able_partition_approximation_study(&BvTarget::Sawtooth, &pow2(1, 6), cfg.seed)?,
        ),
        Study::Joint => (
            "joint",
            joint_partition_study(&BvTarget::Sawtooth, &[(8, 2), (16, 4), (32, 8), (64, 16)], cfg.seed)?,
        ),
        Study::Radial => ("radial", radial_step_study(1024, &pow2(3, 6), cfg.seed)?),
    };
    print!("{}", r.to_text());
    if common.out.is_some() {
        let out = &cfg.paths.out;
        write(&out.join(format!("{name}.csv")), &r.to_csv())?;
        write(&out.join(format!("{name}.json")), &serde_json::to_string_pretty(&r).expect("json"))?;
        cfg.save(&out.join("config.toml"))?;
    }
    if r.ci_covers_expected() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "expected slope {} outside the bootstrap interval [{:.3}, {:.3}]",
            r.expected_slope, r.slope_ci.0, r.slope_ci.1
        )))
    }
}

fn cmd_bench(common: &Common, slices: Vec<usize>, grids: Vec<usize>, repeats: usize) -> Result<(), CliError> {
    let cfg = common.load(&[])?;
    let bench = ComplexityConfig {
        slices,
        grids,
        repeats,
        seed: cfg.seed,
        ..ComplexityConfig::default()
    };
    let r = complexity_scaling_check(&bench)?;
    print!("{}", r.to_text());
    if common.out.is_some() {
        let out = &cfg.paths.out;
        write(
            &out.join("bench.json"),
            &serde_json::to_string_pretty(&json!({"config": bench, "report": r})).expect("json"),
        )?;
        cfg.save(&out.join("config.toml"))?;
    }
    Ok(())
}
