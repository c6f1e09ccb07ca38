//! Desk-scale PDE data: random fields, Burgers and Darcy solvers, and the
//! on-disk dataset container.

pub mod burgers;
pub mod darcy;
pub mod dataset;
pub mod error;
pub mod generate;
pub mod grf;

pub use dataset::{dataset_read, dataset_write, Dataset};
pub use error::{PdeError, Result};
pub use generate::{generate, Problem, SampleReport};
