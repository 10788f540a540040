//! Monte-Carlo threshold calibration, power curves and null diagnostics.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::density::{
    bump_magnitudes, multinomial_perturbation, parse_density, signed_bumps, BumpProfile, DensityRef, PerturbationKind,
};
use crate::error::{Error, Result};
use crate::functionals::{lipschitz_critical_radius, multinomial_critical_radius, RadiusEquation};
use crate::lipschitz::{DensityTestConfig, DensityTestId, PreparedDensityTest};
use crate::multinomial::{PreparedNull, TestId};
use crate::partition::{
    adaptive_partition_with, prune_partition, standard_params, BuildLimits, Cube, PartitionConstants,
};
use crate::probs::{parse_prob_spec, sample_counts, sample_counts_with, CountVector, ProbVector, SamplingMode};
use crate::rng::{derive_seed, rng_from_seed};

pub const DEFAULT_POWER_TRIALS: usize = 300;
pub const DEFAULT_CALIBRATION_TRIALS: usize = 1000;
pub const MIN_CALIBRATION_TRIALS: usize = 100;

const NULL_STREAM: u64 = 1;
const ALT_STREAM: u64 = 2;
const SIGN_STREAM: u64 = 3;
const DIAG_STREAM: u64 = 4;

/// 1-based rank of the calibrated threshold: ceil((1 - alpha) trials),
/// at least 1.
pub fn quantile_index(trials: usize, alpha: f64) -> usize {
    let k = ((1.0 - alpha) * trials as f64 - 1e-9).ceil();
    (k.max(1.0) as usize).min(trials.max(1))
}

/// The order statistic at [`quantile_index`] of the given null statistics.
pub fn empirical_threshold(mut stats: Vec<f64>, alpha: f64) -> Result<f64> {
    if stats.is_empty() {
        return Err(Error::Invalid("no null statistics".into()));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::BadAlpha(alpha));
    }
    stats.sort_by(f64::total_cmp);
    Ok(stats[quantile_index(stats.len(), alpha) - 1])
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_CALIBRATION_TRIALS {
        return Err(Error::Invalid(format!(
            "calibration needs at least {MIN_CALIBRATION_TRIALS} trials, got {trials}"
        )));
    }
    Ok(())
}

/// Truncation level used by the sigma-dependent multinomial tests when
/// none is given: u_n / 8.
pub fn default_sigma(p0: &ProbVector, n: usize) -> Result<f64> {
    let u = multinomial_critical_radius(p0, n as f64, RadiusEquation::MultinomialUpper)?;
    Ok((u.value / 8.0).min(0.5))
}

/// Null statistics of a multinomial test, one per trial, in trial order.
pub fn null_statistics(
    id: TestId,
    null: &PreparedNull,
    n: usize,
    alpha: f64,
    mode: SamplingMode,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let x = sample_counts(&null.p0, n as u64, mode, derive_seed(seed, NULL_STREAM, t as u64));
            null.statistic(id, &x, alpha)
        })
        .collect()
}

/// Empirical (1 - alpha) quantile of a multinomial test statistic under
/// the null.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_threshold(
    id: TestId,
    p0: &ProbVector,
    sigma: f64,
    n: usize,
    alpha: f64,
    mode: SamplingMode,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    check_trials(trials)?;
    let null = PreparedNull::new(p0, sigma);
    empirical_threshold(null_statistics(id, &null, n, alpha, mode, trials, seed)?, alpha)
}

/// Null statistics of a prepared density test from `n`-point samples.
pub fn density_null_statistics(test: &PreparedDensityTest, n: usize, trials: usize, seed: u64) -> Result<Vec<f64>> {
    let f = test.null().clone();
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = rng_from_seed(derive_seed(seed, NULL_STREAM, t as u64));
            let x = f.sample(n, &mut rng);
            test.statistic(&x)
        })
        .collect()
}

pub fn calibrate_density_threshold(test: &PreparedDensityTest, n: usize, trials: usize, seed: u64) -> Result<f64> {
    check_trials(trials)?;
    empirical_threshold(density_null_statistics(test, n, trials, seed)?, test.alpha)
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerRow {
    pub eps: f64,
    pub test: String,
    pub power: f64,
    pub trials: usize,
    pub stderr: f64,
}

impl PowerRow {
    pub fn new(eps: f64, test: impl Into<String>, rejections: usize, trials: usize) -> Self {
        let power = if trials == 0 {
            0.0
        } else {
            rejections as f64 / trials as f64
        };
        let stderr = if trials == 0 {
            0.0
        } else {
            (power * (1.0 - power) / trials as f64).sqrt()
        };
        Self {
            eps,
            test: test.into(),
            power,
            trials,
            stderr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTable {
    pub config: serde_json::Value,
    pub rows: Vec<PowerRow>,
}

impl PowerTable {
    pub fn get(&self, eps: f64, test: &str) -> Option<&PowerRow> {
        self.rows.iter().find(|r| r.eps == eps && r.test == test)
    }

    pub fn power(&self, eps: f64, test: &str) -> Option<f64> {
        self.get(eps, test).map(|r| r.power)
    }

    /// `eps,test,power,trials,stderr` preceded by a `#` line with the
    /// configuration as compact JSON.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# config: {}", self.config);
        s.push_str("eps,test,power,trials,stderr\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{}", r.eps, r.test, r.power, r.trials, r.stderr);
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("power tables serialize")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SimModel {
    #[default]
    Multinomial,
    Density,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdMode {
    #[default]
    Calibrated,
    Analytic,
}

/// Named partition constants for configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ConstantsPreset {
    #[default]
    Literal,
    Desk,
    Sim,
}

impl ConstantsPreset {
    pub fn constants(&self) -> PartitionConstants {
        match self {
            Self::Literal => PartitionConstants::LITERAL,
            Self::Desk => PartitionConstants::DESK,
            Self::Sim => PartitionConstants::SIM,
        }
    }
}

fn d_trials() -> usize {
    DEFAULT_POWER_TRIALS
}
fn d_cal() -> usize {
    DEFAULT_CALIBRATION_TRIALS
}
fn d_alpha() -> f64 {
    0.05
}
fn d_coarse() -> f64 {
    4.0
}

/// A power experiment. Multinomial nulls use `uniform:d`, `powerlaw:d` or
/// `weights:...`; density nulls use density ids such as `pareto:0.5,1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub model: SimModel,
    pub null: String,
    /// Perturbation family (dense, sparse, prop, prop23) or `bump`.
    pub alternative: String,
    pub tests: Vec<String>,
    pub eps_grid: Vec<f64>,
    pub n: usize,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default = "d_cal")]
    pub calibration_trials: usize,
    #[serde(default = "d_alpha")]
    pub alpha: f64,
    pub seed: u64,
    #[serde(default)]
    pub sampling: SamplingMode,
    #[serde(default)]
    pub thresholds: ThresholdMode,
    /// Truncation level of the sigma-dependent multinomial tests.
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Smoothness parameter of the density tests (L0 for `adaptive`);
    /// defaults to the null's Lipschitz constant.
    #[serde(default)]
    pub ln: Option<f64>,
    /// Design radius of the density tests; defaults to w_n.
    #[serde(default)]
    pub test_eps: Option<f64>,
    #[serde(default)]
    pub constants: ConstantsPreset,
    /// Ratio of bump width to test cell width.
    #[serde(default = "d_coarse")]
    pub bump_coarseness: f64,
}

impl SimConfig {
    fn validate(&self) -> Result<()> {
        if self.eps_grid.is_empty() {
            return Err(Error::Invalid("eps grid is empty".into()));
        }
        if self.tests.is_empty() {
            return Err(Error::Invalid("no tests given".into()));
        }
        if self.n == 0 {
            return Err(Error::Invalid("n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::BadAlpha(self.alpha));
        }
        if self.thresholds == ThresholdMode::Calibrated {
            check_trials(self.calibration_trials)?;
        }
        Ok(())
    }
}

/// Runs every (eps, test) combination of the experiment.
pub fn power_curve(cfg: &SimConfig) -> Result<PowerTable> {
    cfg.validate()?;
    let config = serde_json::to_value(cfg).expect("config serializes");
    let rows = match cfg.model {
        SimModel::Multinomial => multinomial_power(cfg)?,
        SimModel::Density => density_power(cfg)?,
    };
    Ok(PowerTable { config, rows })
}

fn multinomial_power(cfg: &SimConfig) -> Result<Vec<PowerRow>> {
    let p0 = parse_prob_spec(&cfg.null)?;
    let kind: PerturbationKind = cfg.alternative.parse()?;
    let ids: Vec<TestId> = cfg.tests.iter().map(|t| t.parse()).collect::<Result<_>>()?;
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => default_sigma(&p0, cfg.n)?,
    };
    let null = PreparedNull::new(&p0, sigma);
    let thresholds = ids
        .iter()
        .map(|&id| match cfg.thresholds {
            ThresholdMode::Calibrated => empirical_threshold(
                null_statistics(
                    id,
                    &null,
                    cfg.n,
                    cfg.alpha,
                    cfg.sampling,
                    cfg.calibration_trials,
                    cfg.seed,
                )?,
                cfg.alpha,
            ),
            ThresholdMode::Analytic => analytic_multinomial_threshold(id, &null, cfg.n, cfg.alpha),
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut rows = Vec::new();
    for (gi, &eps) in cfg.eps_grid.iter().enumerate() {
        let rejects: Vec<Vec<bool>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<bool>> {
                let trial = (gi * cfg.trials + t) as u64;
                let q = multinomial_perturbation(&p0, eps, kind, derive_seed(cfg.seed, SIGN_STREAM, trial))?;
                let mut rng = rng_from_seed(derive_seed(cfg.seed, ALT_STREAM, trial));
                let x = sample_counts_with(&q, cfg.n as u64, cfg.sampling, &mut rng);
                ids.iter()
                    .zip(&thresholds)
                    .map(|(&id, &thr)| Ok(null.statistic(id, &x, cfg.alpha)? > thr))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (k, id) in ids.iter().enumerate() {
            let r = rejects.iter().filter(|v| v[k]).count();
            rows.push(PowerRow::new(eps, id.as_str(), r, cfg.trials));
        }
    }
    Ok(rows)
}

/// Analytic threshold on the scale of [`PreparedNull::statistic`].
pub fn analytic_multinomial_threshold(id: TestId, null: &PreparedNull, n: usize, alpha: f64) -> Result<f64> {
    match id {
        TestId::TruncChisq => Ok(crate::multinomial::trunc_chisq_threshold(&null.p0, n as f64, alpha)),
        TestId::TwoThirdsTail | TestId::Max => Ok(1.0),
        other => Err(Error::Invalid(format!("test '{other}' has no analytic threshold"))),
    }
}

/// Cells carrying the bumps of the simulation alternative: Algorithm 1
/// with the test's (a, b) and both thetas multiplied by `coarseness`, so
/// each bump spans several cells of the test partition; pruned like the
/// test partition.
pub fn bump_cells(
    f: &DensityRef,
    ln: f64,
    eps: f64,
    constants: PartitionConstants,
    coarseness: f64,
) -> Result<Vec<Cube>> {
    let pp = standard_params(f.as_ref(), ln, eps, constants)?;
    let p = adaptive_partition_with(
        f.as_ref(),
        coarseness * pp.theta1,
        coarseness * pp.theta2,
        pp.a,
        pp.b,
        BuildLimits::default(),
    )?;
    if p.is_empty() {
        return Err(Error::EmptyPartition);
    }
    Ok(prune_partition(&p, pp.c.unwrap_or(pp.a), f.as_ref())?.cells)
}

fn density_power(cfg: &SimConfig) -> Result<Vec<PowerRow>> {
    let f = parse_density(&cfg.null)?;
    if cfg.alternative != "bump" {
        return Err(Error::Invalid(format!(
            "density alternatives must be 'bump', got '{}'",
            cfg.alternative
        )));
    }
    let ids: Vec<DensityTestId> = cfg.tests.iter().map(|t| t.parse()).collect::<Result<_>>()?;
    let ln = cfg.ln.unwrap_or_else(|| f.lipschitz_const());
    let test_eps = match cfg.test_eps {
        Some(e) => e,
        None => lipschitz_critical_radius(f.as_ref(), cfg.n as f64, ln, RadiusEquation::LipschitzUpper)?
            .value
            .min(0.5),
    };
    let dcfg = DensityTestConfig {
        constants: cfg.constants.constants(),
        ..Default::default()
    };
    let tests = ids
        .iter()
        .map(|&id| PreparedDensityTest::new(id, &f, ln, test_eps, cfg.n, cfg.alpha, &dcfg))
        .collect::<Result<Vec<_>>>()?;
    let thresholds = tests
        .iter()
        .map(|t| match cfg.thresholds {
            ThresholdMode::Calibrated => calibrate_density_threshold(t, cfg.n, cfg.calibration_trials, cfg.seed),
            ThresholdMode::Analytic => t
                .analytic_threshold(cfg.n)
                .ok_or_else(|| Error::Invalid(format!("test '{}' has no analytic threshold", t.id))),
        })
        .collect::<Result<Vec<f64>>>()?;
    let cells = bump_cells(&f, ln, test_eps, cfg.constants.constants(), cfg.bump_coarseness)?;
    let profile = BumpProfile::sine(f.dim());
    let mut rows = Vec::new();
    for (gi, &eps) in cfg.eps_grid.iter().enumerate() {
        let mags = bump_magnitudes(&f, &cells, eps, profile)?;
        let rejects: Vec<Vec<bool>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| -> Result<Vec<bool>> {
                let trial = (gi * cfg.trials + t) as u64;
                let mut rng = rng_from_seed(derive_seed(cfg.seed, ALT_STREAM, trial));
                let n = match cfg.sampling {
                    SamplingMode::Fixed => cfg.n,
                    SamplingMode::Poissonized => poisson(cfg.n, &mut rng),
                };
                let x = if eps == 0.0 {
                    f.sample(n, &mut rng)
                } else {
                    let alt = signed_bumps(&f, &cells, &mags, profile, derive_seed(cfg.seed, SIGN_STREAM, trial))?;
                    crate::density::NullDensity::sample(&alt, n, &mut rng)
                };
                tests
                    .iter()
                    .zip(&thresholds)
                    .map(|(test, &thr)| Ok(x.len() > 0 && test.statistic(&x)? > thr))
                    .collect()
            })
            .collect::<Result<_>>()?;
        for (k, id) in ids.iter().enumerate() {
            let r = rejects.iter().filter(|v| v[k]).count();
            rows.push(PowerRow::new(eps, id.as_str(), r, cfg.trials));
        }
    }
    Ok(rows)
}

fn poisson(n: usize, rng: &mut crate::rng::GofRng) -> usize {
    use rand_distr::{Distribution, Poisson};
    if n == 0 {
        return 0;
    }
    Poisson::new(n as f64).unwrap().sample(rng) as usize
}

/// Summary of standardized null statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullDiagnostic {
    pub d: usize,
    pub n: usize,
    pub trials: usize,
    pub mean: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// sup_x |F_trials(x) - Phi(x)|.
    pub normal_sup_distance: f64,
    #[serde(skip)]
    pub values: Vec<f64>,
}

impl NullDiagnostic {
    pub fn is_empty(&self) -> bool {
        self.trials == 0
    }

    /// Fraction of standardized values inside [lo, hi].
    pub fn fraction_within(&self, lo: f64, hi: f64) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().filter(|&&v| v >= lo && v <= hi).count() as f64 / self.values.len() as f64
    }
}

/// Weighting of the collision statistic sum ((X_i - n p_i)^2 - X_i) / w_i.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightScheme {
    /// w_i = 1, the l2 statistic.
    #[default]
    L2,
    /// w_i = p_i, chi-square; on the uniform null a rescaling of l2.
    Chisq,
}

impl std::str::FromStr for WeightScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l2" => Ok(Self::L2),
            "chisq" => Ok(Self::Chisq),
            _ => Err(Error::Invalid(format!("unknown weight scheme '{s}'"))),
        }
    }
}

/// Standardized collision statistic under the uniform null on `d`
/// categories, with null variance 2 n^2 / d (times 1/w^2).
pub fn null_diagnostic(scheme: WeightScheme, d: usize, n: usize, trials: usize, seed: u64) -> Result<NullDiagnostic> {
    if d == 0 || n == 0 {
        return Err(Error::Invalid("d and n must be positive".into()));
    }
    let empty = NullDiagnostic {
        d,
        n,
        trials: 0,
        mean: f64::NAN,
        skewness: f64::NAN,
        excess_kurtosis: f64::NAN,
        normal_sup_distance: f64::NAN,
        values: vec![],
    };
    if trials == 0 {
        return Ok(empty);
    }
    let lambda = n as f64 / d as f64;
    let w = match scheme {
        WeightScheme::L2 => 1.0,
        WeightScheme::Chisq => 1.0 / d as f64,
    };
    let sd = (2.0 * (n as f64).powi(2) / d as f64).sqrt() / w;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = derive_seed(seed, DIAG_STREAM, t as u64);
            collision_stat(d, n, lambda, s) / w / sd
        })
        .collect();
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let c2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m;
    let c3 = values.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / m;
    let c4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / m;
    let (skewness, excess_kurtosis) = if c2 > 0.0 {
        (c3 / c2.powf(1.5), c4 / (c2 * c2) - 3.0)
    } else {
        (0.0, 0.0)
    };
    let mut sorted = values.clone();
    sorted.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let normal_sup_distance = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let phi = normal.cdf(v);
            ((i + 1) as f64 / m - phi).max(phi - i as f64 / m)
        })
        .fold(0.0, f64::max);
    Ok(NullDiagnostic {
        trials,
        mean,
        skewness,
        excess_kurtosis,
        normal_sup_distance,
        values,
        ..empty
    })
}

/// sum_i (X_i - lambda)^2 - X_i for Poissonized counts on the uniform
/// null, so that the mean is 0 and the variance 2 n^2 / d exactly. When n
/// is small relative to d only the occupied cells are visited: empty cells
/// contribute lambda^2 each.
fn collision_stat(d: usize, n: usize, lambda: f64, seed: u64) -> f64 {
    if n < d / 8 {
        use rand::Rng;
        use rand_distr::{Distribution, Poisson};
        let mut rng = rng_from_seed(seed);
        let total = Poisson::new(n as f64).expect("n > 0").sample(&mut rng) as usize;
        let mut idx: Vec<usize> = (0..total).map(|_| rng.random_range(0..d)).collect();
        idx.sort_unstable();
        let mut acc = 0.0;
        let mut occupied = 0usize;
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j < idx.len() && idx[j] == idx[i] {
                j += 1;
            }
            let x = (j - i) as f64;
            acc += (x - lambda).powi(2) - x;
            occupied += 1;
            i = j;
        }
        acc + (d - occupied) as f64 * lambda * lambda
    } else {
        let p = ProbVector::uniform(d).expect("d > 0");
        let x: CountVector = sample_counts(&p, n as u64, SamplingMode::Poissonized, seed);
        x.counts.iter().map(|&c| (c as f64 - lambda).powi(2) - c as f64).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_index_examples() {
        assert_eq!(quantile_index(1000, 0.05), 950);
        assert_eq!(quantile_index(100, 0.05), 95);
        assert_eq!(quantile_index(1000, 0.999), 1);
        assert_eq!(quantile_index(7, 0.5), 4);
    }

    #[test]
    fn empirical_threshold_picks_the_order_statistic() {
        let stats: Vec<f64> = (1..=1000).rev().map(|i| i as f64).collect();
        assert_eq!(empirical_threshold(stats.clone(), 0.05).unwrap(), 950.0);
        assert_eq!(empirical_threshold(stats, 0.9999).unwrap(), 1.0);
    }

    #[test]
    fn calibration_is_deterministic() {
        let p = ProbVector::uniform(50).unwrap();
        let a = calibrate_threshold(TestId::Chisq, &p, 0.01, 100, 0.05, SamplingMode::Fixed, 200, 7).unwrap();
        let b = calibrate_threshold(TestId::Chisq, &p, 0.01, 100, 0.05, SamplingMode::Fixed, 200, 7).unwrap();
        assert_eq!(a, b);
        assert!(calibrate_threshold(TestId::Chisq, &p, 0.01, 100, 0.05, SamplingMode::Fixed, 50, 7).is_err());
    }

    #[test]
    fn power_row_stderr() {
        let r = PowerRow::new(0.5, "chisq", 30, 100);
        assert_eq!(r.power, 0.3);
        assert!((r.stderr - (0.3f64 * 0.7 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn empty_diagnostic() {
        let r = null_diagnostic(WeightScheme::L2, 10, 10, 0, 1).unwrap();
        assert!(r.is_empty());
        assert!(r.values.is_empty());
    }

    #[test]
    fn sparse_collision_path_matches_dense() {
        // same distribution: compare means over many draws
        let (d, n) = (4000, 100);
        let lambda = n as f64 / d as f64;
        let m = 4000;
        let sparse: f64 = (0..m).map(|t| collision_stat(d, n, lambda, t)).sum::<f64>() / m as f64;
        let p = ProbVector::uniform(d).unwrap();
        let dense: f64 = (0..m)
            .map(|t| {
                let x = sample_counts(&p, n as u64, SamplingMode::Poissonized, 10_000 + t);
                x.counts
                    .iter()
                    .map(|&c| (c as f64 - lambda).powi(2) - c as f64)
                    .sum::<f64>()
            })
            .sum::<f64>()
            / m as f64;
        let sd = (2.0 * (n * n) as f64 / d as f64 / m as f64).sqrt();
        let mean = 0.0;
        assert!((sparse - mean).abs() < 5.0 * sd, "{sparse}");
        assert!((dense - mean).abs() < 5.0 * sd, "{dense}");
    }

    #[test]
    fn csv_layout() {
        let t = PowerTable {
            config: serde_json::json!({"n": 10}),
            rows: vec![PowerRow::new(0.1, "ks", 1, 4)],
        };
        let csv = t.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "# config: {\"n\":10}");
        assert_eq!(lines[1], "eps,test,power,trials,stderr");
        assert!(lines[2].starts_with("0.1,ks,0.25,4,"));
    }
}
