//! Kernel density estimation with semiparametric bias corrections: the
//! exponential-family tilt of a kernel estimate, four competing corrections,
//! analytic bias benchmarks on normal mixtures, and bandwidth selection.

pub mod error;
pub mod estimate;
pub mod kde;
pub mod kernels;
pub mod linalg;
pub mod mixtures;
pub mod quadrature;
pub mod sample;
pub mod expfam;
pub mod competitors;
pub mod bias_bench;
pub mod bandwidth;
pub mod cli;

pub use error::{Error, Result};
pub use estimate::{fit, DensityEstimate, Evaluation, Interval, Method};
pub use kernels::{KernelKind, KernelSpec};
pub use mixtures::NormalMixture;
pub use sample::Sample;
