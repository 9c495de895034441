pub mod error;
pub mod kernel;
pub mod maxent;
pub mod models;
pub mod processes;
pub mod structure;
pub mod transforms;
pub mod verdict;

pub use error::{Error, Result};
pub use kernel::{Composition, Rational, WeightFunction};
pub use models::{MaSpec, OccupancyModel, ThetaMixture};
