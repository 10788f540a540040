//! Goodness-of-fit tests for high-dimensional multinomials and Lipschitz
//! densities: truncated chi-square, 2/3-norm plus tail, and max tests, the
//! functionals that govern their critical radii, adaptive partitions for
//! density testing, and a Monte-Carlo power harness.

pub mod density;
pub mod error;
pub mod functionals;
pub mod lipschitz;
pub mod multinomial;
pub mod partition;
pub mod probs;
pub mod quad;
pub mod rng;
pub mod sim;

pub use density::{builtin, parse_density, BumpProfile, NullDensity};
pub use error::{Error, Result};
pub use functionals::{CriticalRadius, GammaExponent, RadiusEquation};
pub use multinomial::{TestId, TestOutcome, ThresholdSource};
pub use partition::{Cube, Partition, PartitionParams};
pub use probs::{make_prob_vector, CountVector, IndexSet, ProbVector, SamplingMode};
