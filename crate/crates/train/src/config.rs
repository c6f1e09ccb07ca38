use serde::{Deserialize, Serialize};

use crate::adam::AdamConfig;
use crate::error::{Result, TrainError};

/// Learning-rate schedule over 1-based epochs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Schedule {
    /// Multiply by `gamma` after every `every` epochs.
    Step { gamma: f64, every: usize },
    /// Half-cosine from the base rate towards zero over the run.
    Cosine,
    None,
}

impl Schedule {
    pub fn rate(&self, base: f64, epoch: usize, epochs: usize) -> f64 {
        let e = epoch.saturating_sub(1);
        match *self {
            Schedule::Step { gamma, every } => base * gamma.powi((e / every.max(1)) as i32),
            Schedule::Cosine => base * 0.5 * (1.0 + (std::f64::consts::PI * e as f64 / epochs.max(1) as f64).cos()),
            Schedule::None => base,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    #[default]
    RelativeL2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    /// Applied to spectral multipliers only.
    pub weight_decay: f64,
    pub seed: u64,
    pub loss: LossKind,
    /// Training samples drawn from the shuffled dataset; the default uses
    /// 80% of it.
    pub train_samples: Option<usize>,
    /// Test samples following the training block; default: the rest.
    pub test_samples: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 20,
            learning_rate: 3e-3,
            schedule: Schedule::Step { gamma: 0.5, every: 100 },
            adam: AdamConfig::default(),
            weight_decay: 1e-4,
            seed: 0,
            loss: LossKind::RelativeL2,
            train_samples: None,
            test_samples: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning_rate must be nonnegative, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("weight_decay must be nonnegative".into()));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(TrainError::Config("adam needs betas in [0, 1) and eps > 0".into()));
        }
        if let Schedule::Step { gamma, every } = self.schedule {
            if !(gamma > 0.0) || every == 0 {
                return Err(TrainError::Config("step schedule needs gamma > 0 and every ≥ 1".into()));
            }
        }
        Ok(())
    }

    /// `(train, test)` counts for a dataset of `n` samples.
    pub fn split_sizes(&self, n: usize) -> Result<(usize, usize)> {
        let train = self.train_samples.unwrap_or(n * 4 / 5);
        let test = self.test_samples.unwrap_or(n.saturating_sub(train));
        if train + test > n {
            return Err(TrainError::Config(format!(
                "{train} train + {test} test samples exceed the {n} available"
            )));
        }
        Ok((train, test))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        let s = Schedule::Step { gamma: 0.5, every: 100 };
        assert_eq!(s.rate(1.0, 1, 500), 1.0);
        assert_eq!(s.rate(1.0, 100, 500), 1.0);
        assert_eq!(s.rate(1.0, 101, 500), 0.5);
        assert_eq!(Schedule::Cosine.rate(2.0, 1, 10), 2.0);
        assert!(Schedule::Cosine.rate(2.0, 10, 10) < 0.1);
        assert_eq!(Schedule::None.rate(0.3, 77, 10), 0.3);
    }

    #[test]
    fn rejects_bad_values() {
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(TrainConfig::default().validate().is_ok());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epochs": 3, "bogus": 1}"#).is_err());
        let c: TrainConfig = serde_json::from_str(r#"{"schedule": {"kind": "cosine"}}"#).unwrap();
        assert_eq!(c.schedule, Schedule::Cosine);
    }
}
