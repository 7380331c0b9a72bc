pub mod cdf;
pub mod comparator;
pub mod error;
pub mod estimator;
pub mod exec;
pub mod linalg;
pub mod quadrature;
pub mod rng;
pub mod simulator;
pub mod transform;
pub mod weighting;

pub use error::{Error, Result};
pub use exec::Exec;
pub use weighting::{Family, WeightingSpec};
