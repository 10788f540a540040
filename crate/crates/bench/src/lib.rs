//! Shared fixtures for the benchmarks.

use gofkit::probs::{sample_counts, CountVector, ProbVector, SamplingMode};

/// Power-law null on `d` categories with one fixed-n draw of size `n`.
pub fn power_law_draw(d: usize, n: u64, seed: u64) -> (ProbVector, CountVector) {
    let p0 = ProbVector::power_law(d).expect("d > 0");
    let x = sample_counts(&p0, n, SamplingMode::Fixed, seed);
    (p0, x)
}

pub fn uniform_draw(d: usize, n: u64, seed: u64) -> (ProbVector, CountVector) {
    let p0 = ProbVector::uniform(d).expect("d > 0");
    let x = sample_counts(&p0, n, SamplingMode::Fixed, seed);
    (p0, x)
}

/// Sizes used across the statistic benches.
pub const DIMS: [usize; 3] = [100, 2_000, 50_000];
