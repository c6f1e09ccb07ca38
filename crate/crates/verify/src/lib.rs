//! Executable checks of the adaptive frame and spectral layers, plus the
//! approximation-rate, temperature and cost studies.

pub mod complexity;
pub mod error;
pub mod properties;
pub mod rates;
pub mod report;
pub mod sweep;

pub use complexity::{complexity_scaling_check, ComplexityConfig, ComplexityReport};
pub use error::{Result, VerifyError};
pub use properties::{run_frame_properties, Fault, Level};
pub use rates::{
    able_partition_approximation_study, fit_slope, fourier_step_truncation_study, joint_partition_study, rate_checks, BvTarget,
    RateStudyResult,
};
pub use report::{Check, PropertyReport, Status};
pub use sweep::{temperature_sweep, TemperatureRow};
