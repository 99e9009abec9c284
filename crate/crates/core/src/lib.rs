//! Hybrid global/local optimizer: a binary GA with adaptive elitism and
//! Price-equation convergence detection, followed by an exact-Hessian
//! Newton/SQP polish driven by forward-mode AD.

pub mod autodiff;
pub mod benchmarks;
pub mod encoding;
pub mod error;
pub mod evolution;
pub mod fdcheck;
pub mod hybrid;
pub mod local_search;
pub mod price_monitor;

pub use autodiff::{AdContext, AdError, AdScalar, Derivatives};
pub use benchmarks::{Benchmark, BenchmarkProblem, Objective, Orientation};
pub use encoding::{Chromosome, EncodingSpec, VariableSpec};
pub use error::{Error, Result};
pub use evolution::{Engine, GaConfig, MutationRate, Selection};
pub use hybrid::{HybridConfig, HybridResult, Mode, SwitchCriteria};
pub use local_search::{BoundBox, SqpConfig};
