//! Run configuration: a TOML tree over the library configs. Missing keys
//! take task-dependent defaults, unknown keys are rejected, and
//! `key.path=value` overrides apply on top of the file.

use std::fs;
use std::path::{Path, PathBuf};

use able_core::frame::DensityConfig;
use able_core::operator::NetworkConfig;
use able_pde::generate::{BurgersSpec, DarcySpec, Problem};
use able_train::TrainConfig;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Burgers,
    Darcy,
}

impl Task {
    pub fn dims(self) -> usize {
        match self {
            Task::Burgers => 1,
            Task::Darcy => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub data: PathBuf,
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            data: "data.ableds".into(),
            out: "runs/default".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub task: Task,
    /// Drives data, initialisation, split and shuffle streams.
    pub seed: u64,
    /// Samples written by `gen`.
    pub samples: usize,
    pub burgers: BurgersSpec,
    pub darcy: DarcySpec,
    pub model: NetworkConfig,
    pub train: TrainConfig,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_task(Task::Burgers)
    }
}

impl RunConfig {
    pub fn for_task(task: Task) -> Self {
        let density = match task {
            Task::Burgers => DensityConfig::default_1d(),
            Task::Darcy => DensityConfig::default_2d(),
        };
        Self {
            task,
            seed: 0,
            samples: 250,
            burgers: BurgersSpec::default(),
            darcy: DarcySpec::default(),
            model: NetworkConfig {
                dims: task.dims(),
                density: Some(density),
                ..NetworkConfig::default()
            },
            train: TrainConfig::default(),
            paths: Paths::default(),
        }
    }

    pub fn problem(&self) -> Problem {
        match self.task {
            Task::Burgers => Problem::Burgers(self.burgers.clone()),
            Task::Darcy => Problem::Darcy(self.darcy.clone()),
        }
    }

    /// `train.seed` always follows `seed`.
    fn normalise(mut self) -> Result<Self, CliError> {
        if self.model.dims != self.task.dims() {
            return Err(CliError::Usage(format!(
                "model.dims = {} does not fit task {:?}",
                self.model.dims, self.task
            )));
        }
        self.train.seed = self.seed;
        self.train.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(self)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, self.to_toml()).map_err(|e| CliError::io(path, e))
    }
}

/// Parse `a.b.c=value`; the value is read as TOML and falls back to a string.
pub fn parse_override(s: &str) -> Result<(Vec<String>, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_string).collect();
    if path.iter().any(String::is_empty) {
        return Err(CliError::Usage(format!("bad key in override `{s}`")));
    }
    let raw = raw.trim();
    let value = match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed"),
        Err(_) => Value::String(raw.to_string()),
    };
    Ok((path, value))
}

fn set_path(table: &mut Table, path: &[String], value: Value) -> Result<(), CliError> {
    let (last, parents) = path.split_last().expect("nonempty path");
    let mut t = table;
    for p in parents {
        let entry = t.entry(p.clone()).or_insert_with(|| Value::Table(Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{}` is not a table", path.join("."))))?;
    }
    t.insert(last.clone(), value);
    Ok(())
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(Value::Table(b)), Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Effective config from an optional file plus overrides, applied in order.
pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<RunConfig, CliError> {
    let mut user = match file {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            toml::from_str::<Table>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    for o in overrides {
        let (path, value) = parse_override(o)?;
        set_path(&mut user, &path, value)?;
    }
    let task = match user.get("task") {
        Some(v) => Task::deserialize(v.clone()).map_err(|e| CliError::Usage(format!("task: {e}")))?,
        None => Task::default(),
    };
    let mut tree = Table::try_from(RunConfig::for_task(task)).expect("defaults serialise");
    merge(&mut tree, user);
    let cfg = RunConfig::deserialize(Value::Table(tree)).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    cfg.normalise()
}

/// `key = default` lines for every leaf of the default tree.
pub fn key_listing() -> String {
    fn walk(prefix: &str, t: &Table, out: &mut Vec<String>) {
        for (k, v) in t {
            let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match v {
                Value::Table(sub) => walk(&key, sub, out),
                _ => out.push(format!("  {key} = {v}")),
            }
        }
    }
    let mut lines = Vec::new();
    walk("", &Table::try_from(RunConfig::default()).expect("defaults serialise"), &mut lines);
    let mut s = String::from("Config keys and defaults (task = \"darcy\" switches model.dims and model.density to the 2D design):\n");
    s.push_str(&lines.join("\n"));
    s.push_str(
        "\n  train.train_samples = (unset: 80% of the data)\n  train.test_samples = (unset: the rest)\n  \
         burgers.grf.threshold, darcy.grf.threshold = optional two-phase map\n\
         train.seed is always replaced by seed.\n",
    );
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip() {
        let cfg = load(None, &[]).unwrap();
        let back: RunConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = load(None, &["model.slices=4".into(), "train.epochs=3".into(), "seed=7".into()]).unwrap();
        assert_eq!((cfg.model.slices, cfg.train.epochs, cfg.train.seed), (4, 3, 7));
        assert!(matches!(load(None, &["model.slicez=4".into()]), Err(CliError::Usage(_))));
        assert!(matches!(load(None, &["nonsense".into()]), Err(CliError::Usage(_))));
    }

    #[test]
    fn darcy_defaults_are_two_dimensional() {
        let cfg = load(None, &["task=darcy".into(), "model.density.temperature=0.5".into()]).unwrap();
        assert_eq!(cfg.model.dims, 2);
        let d = cfg.model.density.unwrap();
        assert_eq!(d.temperature, 0.5);
        assert!(!d.fd_features);
    }

    #[test]
    fn listing_covers_nested_keys() {
        let s = key_listing();
        assert!(s.contains("model.slices = 2"));
        assert!(s.contains("burgers.solver.nu = 0.1"));
    }
}
