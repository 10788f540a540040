//! Density goodness-of-fit tests: multinomial tests on the adaptive
//! partition, fixed-width binning, Kolmogorov-Smirnov and the test that
//! adapts to an unknown Lipschitz constant.

use serde::{Deserialize, Serialize};

use crate::density::{DensityRef, NullDensity};
use crate::error::{Error, Result};
use crate::functionals::{lipschitz_critical_radius_with, LipschitzRadiusConfig, RadiusEquation};
use crate::multinomial::{chisq_stat, PreparedNull, TestOutcome, ThresholdSource};
use crate::partition::{
    assign_with, effective_support, partition_to_multinomial, standard_partition, BuildLimits, CellLocator, Cube,
    Partition, PartitionConstants,
};
use crate::probs::{CountVector, ProbVector, SamplingMode};

/// Identifiers of the density tests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DensityTestId {
    /// 2/3-norm plus tail composite on the adaptive partition.
    #[serde(rename = "minimax")]
    Minimax,
    /// Chi-square on the adaptive partition.
    #[serde(rename = "binned-chisq")]
    BinnedChisq,
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "ks")]
    Ks,
    /// Bonferroni union of minimax tests over a dyadic grid of L.
    #[serde(rename = "adaptive")]
    Adaptive,
}

impl DensityTestId {
    pub const ALL: [DensityTestId; 5] = [
        DensityTestId::Minimax,
        DensityTestId::BinnedChisq,
        DensityTestId::Naive,
        DensityTestId::Ks,
        DensityTestId::Adaptive,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Minimax => "minimax",
            Self::BinnedChisq => "binned-chisq",
            Self::Naive => "naive",
            Self::Ks => "ks",
            Self::Adaptive => "adaptive",
        }
    }

    /// Minimax and adaptive use Chebyshev thresholds; KS uses the
    /// asymptotic Kolmogorov quantile.
    pub fn has_analytic_threshold(&self) -> bool {
        matches!(self, Self::Minimax | Self::Adaptive | Self::Ks)
    }
}

impl std::fmt::Display for DensityTestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DensityTestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "chisq" => Ok(Self::BinnedChisq),
            _ => Self::ALL
                .iter()
                .copied()
                .find(|t| t.as_str() == s)
                .ok_or_else(|| Error::UnknownTest(s.to_string())),
        }
    }
}

/// Construction settings shared by the density tests.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityTestConfig {
    pub constants: PartitionConstants,
    pub limits: BuildLimits,
    /// C in the grid cap L0 * C n^(2/d) of the adaptive test.
    pub adaptive_c: f64,
    pub radius: LipschitzRadiusConfig,
    /// Cap on the number of fixed-width bins.
    pub max_bins: f64,
}

impl Default for DensityTestConfig {
    fn default() -> Self {
        Self {
            constants: PartitionConstants::LITERAL,
            limits: BuildLimits::default(),
            adaptive_c: 4.0,
            radius: LipschitzRadiusConfig::default(),
            max_bins: 1e7,
        }
    }
}

/// How a decision threshold is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Analytic,
    /// A threshold calibrated elsewhere on the same statistic.
    Calibrated(f64),
}

/// A test outcome with the density-test specifics attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTestOutcome {
    pub test: DensityTestId,
    #[serde(flatten)]
    pub outcome: TestOutcome,
    /// Number of bins (excluding the catch-all category).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cells: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub eps: Option<f64>,
    /// The grid value of L whose member test fired (adaptive test only).
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub firing_l: Option<f64>,
    /// Members of the adaptive grid that could be built.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub members_built: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub grid_size: Option<usize>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::BadAlpha(alpha))
    }
}

/// The pruned adaptive partition with its multinomial null.
#[derive(Debug, Clone)]
pub struct BinnedModel {
    pub partition: Partition,
    pub locator: CellLocator,
    pub null: PreparedNull,
    pub ln: f64,
    pub eps: f64,
}

impl BinnedModel {
    pub fn build(f: &dyn NullDensity, ln: f64, eps: f64, cfg: &DensityTestConfig) -> Result<Self> {
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::BadEps(eps));
        }
        let partition = standard_partition(f, ln, eps, cfg.constants, cfg.limits)?;
        let q = partition_to_multinomial(&partition)?;
        let null = PreparedNull::new(&q, eps / cfg.constants.sigma_div);
        let locator = partition.locator();
        Ok(Self {
            partition,
            locator,
            null,
            ln,
            eps,
        })
    }

    pub fn len(&self) -> usize {
        self.partition.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partition.is_empty()
    }

    pub fn multinomial(&self) -> &ProbVector {
        &self.null.p0
    }

    /// Cell counts with the catch-all category last.
    pub fn counts(&self, samples: &[f64], mode: SamplingMode) -> CountVector {
        let fixed = assign_with(&self.partition, &self.locator, samples);
        CountVector {
            nominal_n: fixed.nominal_n,
            counts: fixed.counts,
            mode,
        }
    }

    /// Composite ratio statistic and the branch that produced it.
    pub fn minimax_ratio(&self, x: &CountVector, alpha: f64) -> (f64, String) {
        self.null.composite_ratio(x, alpha)
    }

    /// Chi-square statistic; a count in a zero-probability cell gives +inf.
    pub fn chisq(&self, x: &CountVector) -> f64 {
        match chisq_stat(x, &self.null.p0) {
            Ok(v) => v,
            Err(_) => f64::INFINITY,
        }
    }
}

/// Even-width bins over the effective support, with an outside category.
#[derive(Debug, Clone)]
pub struct NaiveBinning {
    pub lo: f64,
    pub width: f64,
    pub bins: usize,
    /// Bin probabilities followed by the outside mass.
    pub probs: Vec<f64>,
    positive: usize,
    pub eps: f64,
}

impl NaiveBinning {
    /// Width eps / (Ln |S_a|) with a = eps / a_div.
    pub fn build(f: &dyn NullDensity, ln: f64, eps: f64, cfg: &DensityTestConfig) -> Result<Self> {
        if f.dim() != 1 {
            return Err(Error::Invalid("fixed-width binning is one-dimensional".into()));
        }
        if !(eps > 0.0 && eps < 1.0) {
            return Err(Error::BadEps(eps));
        }
        if !(ln > 0.0) {
            return Err(Error::BadParams(format!("Ln must be positive, got {ln}")));
        }
        let s = effective_support(f, eps / cfg.constants.a_div)?;
        let len = s.side;
        let width = eps / (ln * len);
        let m = (len / width).ceil();
        if m > cfg.max_bins {
            return Err(Error::TooManyBins(m));
        }
        let bins = m as usize;
        let lo = s.lower[0];
        let edge = |k: usize| lo + k as f64 * width;
        let mut probs = Vec::with_capacity(bins + 1);
        match f.cdf(lo) {
            Some(_) => {
                let mut prev = f.cdf(lo).unwrap();
                for k in 1..=bins {
                    let c = f.cdf(edge(k)).unwrap();
                    probs.push((c - prev).max(0.0));
                    prev = c;
                }
            }
            None => {
                for k in 0..bins {
                    probs.push(f.cell_prob(&Cube::new(vec![edge(k)], width)));
                }
            }
        }
        let inside: f64 = probs.iter().sum();
        probs.push((1.0 - inside).max(0.0));
        let positive = probs.iter().filter(|&&p| p > 0.0).count();
        Ok(Self {
            lo,
            width,
            bins,
            probs,
            positive,
            eps,
        })
    }

    pub fn bin_of(&self, x: f64) -> usize {
        let k = ((x - self.lo) / self.width).floor();
        if k >= 0.0 && k < self.bins as f64 {
            k as usize
        } else {
            self.bins
        }
    }

    /// Chi-square statistic computed over occupied bins only:
    /// sum X^2/(n p) - 2n + n sum p - #{p > 0}.
    pub fn chisq(&self, samples: &[f64]) -> f64 {
        let n = samples.len() as f64;
        if samples.is_empty() {
            return 0.0;
        }
        let mut idx: Vec<usize> = samples.iter().map(|&x| self.bin_of(x)).collect();
        idx.sort_unstable();
        let total: f64 = self.probs.iter().sum();
        let mut acc = 0.0;
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j < idx.len() && idx[j] == idx[i] {
                j += 1;
            }
            let p = self.probs[idx[i]] / total;
            if p <= 0.0 {
                return f64::INFINITY;
            }
            let x = (j - i) as f64;
            acc += x * x / (n * p);
            i = j;
        }
        acc - 2.0 * n + n - self.positive as f64
    }
}

/// Kolmogorov-Smirnov statistic sup |F_n - F0|, evaluated at the order
/// statistics.
pub fn ks_statistic(samples: &[f64], f: &dyn NullDensity) -> Result<f64> {
    if f.dim() != 1 {
        return Err(Error::Invalid("KS needs a one-dimensional null".into()));
    }
    let mut u = Vec::with_capacity(samples.len());
    for &x in samples {
        u.push(f.cdf(x).ok_or(Error::NoCdf)?);
    }
    if u.is_empty() {
        return Ok(0.0);
    }
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    Ok(u.iter()
        .enumerate()
        .map(|(i, &v)| {
            let i = i as f64;
            ((i + 1.0) / n - v).max(v - i / n)
        })
        .fold(0.0, f64::max))
}

/// Survival function of the Kolmogorov distribution.
fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * x * x).exp();
        s += if k as u64 % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Asymptotic level-alpha KS threshold with Stephens' finite-n correction.
pub fn ks_threshold(n: usize, alpha: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 5.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rn = (n.max(1) as f64).sqrt();
    0.5 * (lo + hi) / (rn + 0.12 + 0.11 / rn)
}

/// One value of L on the adaptive grid.
#[derive(Debug, Clone)]
pub struct AdaptiveMember {
    pub l: f64,
    pub model: BinnedModel,
}

/// The Bonferroni family over L in {L0, 2 L0, ..., L0 2^J}.
#[derive(Debug, Clone)]
pub struct AdaptiveModel {
    pub members: Vec<AdaptiveMember>,
    pub grid: Vec<f64>,
}

/// L0 2^j for j = 0..=ceil(log2(C n^(2/d))).
pub fn adaptive_grid(l0: f64, n: usize, d: usize, c: f64) -> Vec<f64> {
    let top = (c * (n.max(1) as f64).powf(2.0 / d as f64)).log2().ceil().max(0.0) as i32;
    (0..=top).map(|j| l0 * 2f64.powi(j)).collect()
}

impl AdaptiveModel {
    /// Builds members in increasing L. Members whose radius equation has no
    /// solution below 1 are skipped; construction stops at the first member
    /// that exceeds the cell budget, since finer grids only grow.
    pub fn build(f: &dyn NullDensity, l0: f64, n: usize, cfg: &DensityTestConfig) -> Result<Self> {
        if !(l0 > 0.0) {
            return Err(Error::BadParams(format!("L0 must be positive, got {l0}")));
        }
        let grid = adaptive_grid(l0, n, f.dim(), cfg.adaptive_c);
        let mut members = Vec::new();
        for &l in &grid {
            let r = lipschitz_critical_radius_with(f, n as f64, l, RadiusEquation::AdaptiveLipschitz, cfg.radius)?;
            if r.clamped || r.value >= 1.0 {
                continue;
            }
            match BinnedModel::build(f, l, r.value, cfg) {
                Ok(model) => members.push(AdaptiveMember { l, model }),
                Err(Error::CellBudgetExceeded { .. }) | Err(Error::MaxDepthExceeded(_)) => break,
                Err(e) => return Err(e),
            }
        }
        Ok(Self { members, grid })
    }

    /// Largest member ratio at level alpha / grid size, with its L.
    pub fn max_ratio(&self, samples: &[f64], alpha: f64, mode: SamplingMode) -> (f64, Option<f64>) {
        let level = alpha / self.grid.len() as f64;
        let mut best = (0.0, None);
        for m in &self.members {
            let x = m.model.counts(samples, mode);
            let (r, _) = m.model.minimax_ratio(&x, level);
            if best.1.is_none() || r > best.0 {
                best = (r, Some(m.l));
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
enum Model {
    Binned(BinnedModel),
    Naive(NaiveBinning),
    Ks,
    Adaptive(AdaptiveModel),
}

/// A density test with its null-dependent structure built once, so it can
/// be applied to many samples.
#[derive(Debug, Clone)]
pub struct PreparedDensityTest {
    pub id: DensityTestId,
    pub alpha: f64,
    null: DensityRef,
    model: Model,
}

impl PreparedDensityTest {
    /// `ln` is the smoothness parameter, or L0 for the adaptive test; `eps`
    /// is ignored by KS and the adaptive test, which solves its own radii;
    /// `n` is only used by the adaptive test.
    pub fn new(
        id: DensityTestId,
        f: &DensityRef,
        ln: f64,
        eps: f64,
        n: usize,
        alpha: f64,
        cfg: &DensityTestConfig,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        let model = match id {
            DensityTestId::Minimax | DensityTestId::BinnedChisq => {
                Model::Binned(BinnedModel::build(f.as_ref(), ln, eps, cfg)?)
            }
            DensityTestId::Naive => Model::Naive(NaiveBinning::build(f.as_ref(), ln, eps, cfg)?),
            DensityTestId::Ks => {
                if f.dim() != 1 {
                    return Err(Error::Invalid("KS needs a one-dimensional null".into()));
                }
                if f.cdf(0.0).is_none() {
                    return Err(Error::NoCdf);
                }
                Model::Ks
            }
            DensityTestId::Adaptive => Model::Adaptive(AdaptiveModel::build(f.as_ref(), ln, n, cfg)?),
        };
        Ok(Self {
            id,
            alpha,
            null: f.clone(),
            model,
        })
    }

    pub fn null(&self) -> &DensityRef {
        &self.null
    }

    /// Number of bins, if the test bins.
    pub fn cells(&self) -> Option<usize> {
        match &self.model {
            Model::Binned(b) => Some(b.len()),
            Model::Naive(nb) => Some(nb.bins),
            _ => None,
        }
    }

    pub fn binned(&self) -> Option<&BinnedModel> {
        match &self.model {
            Model::Binned(b) => Some(b),
            _ => None,
        }
    }

    pub fn naive(&self) -> Option<&NaiveBinning> {
        match &self.model {
            Model::Naive(nb) => Some(nb),
            _ => None,
        }
    }

    pub fn adaptive(&self) -> Option<&AdaptiveModel> {
        match &self.model {
            Model::Adaptive(a) => Some(a),
            _ => None,
        }
    }

    /// Scalar statistic; large values are evidence against the null.
    pub fn statistic(&self, samples: &[f64]) -> Result<f64> {
        Ok(self.evaluate(samples, SamplingMode::Fixed)?.0)
    }

    fn evaluate(&self, samples: &[f64], mode: SamplingMode) -> Result<(f64, Option<String>, Option<f64>)> {
        if samples.is_empty() {
            return Err(Error::Invalid("no samples".into()));
        }
        if samples.len() % self.null.dim() != 0 {
            return Err(Error::DimensionMismatch {
                left: samples.len(),
                right: self.null.dim(),
            });
        }
        Ok(match &self.model {
            Model::Binned(b) => {
                let x = b.counts(samples, mode);
                if self.id == DensityTestId::Minimax {
                    let (r, br) = b.minimax_ratio(&x, self.alpha);
                    (r, Some(br), None)
                } else {
                    (b.chisq(&x), None, None)
                }
            }
            Model::Naive(nb) => (nb.chisq(samples), None, None),
            Model::Ks => (ks_statistic(samples, self.null.as_ref())?, None, None),
            Model::Adaptive(a) => {
                let (r, l) = a.max_ratio(samples, self.alpha, mode);
                (r, None, l)
            }
        })
    }

    /// The analytic threshold for `n` samples, if the test has one.
    pub fn analytic_threshold(&self, n: usize) -> Option<f64> {
        match self.id {
            DensityTestId::Minimax | DensityTestId::Adaptive => Some(1.0),
            DensityTestId::Ks => Some(ks_threshold(n, self.alpha)),
            _ => None,
        }
    }

    /// Runs the test. Analytic thresholds treat the counts as Poissonized
    /// with nominal size equal to the sample count.
    pub fn run(&self, samples: &[f64], threshold: Threshold) -> Result<DensityTestOutcome> {
        let n = samples.len() / self.null.dim().max(1);
        let (thr, source, mode) = match threshold {
            Threshold::Analytic => {
                let t = self.analytic_threshold(n).ok_or_else(|| {
                    Error::Invalid(format!("test '{}' has no analytic threshold; calibrate one", self.id))
                })?;
                (t, ThresholdSource::Analytic, SamplingMode::Poissonized)
            }
            Threshold::Calibrated(t) => (t, ThresholdSource::McCalibrated, SamplingMode::Fixed),
        };
        let (stat, branch, firing) = self.evaluate(samples, mode)?;
        let mut outcome = TestOutcome::new(stat, thr, self.alpha, source);
        if let Some(b) = branch {
            outcome.branch = Some(if outcome.reject { b } else { "none".into() });
        }
        let (cells, eps) = match &self.model {
            Model::Binned(b) => (Some(b.len()), Some(b.eps)),
            Model::Naive(nb) => (Some(nb.bins), Some(nb.eps)),
            _ => (None, None),
        };
        let (members_built, grid_size) = match &self.model {
            Model::Adaptive(a) => (Some(a.members.len()), Some(a.grid.len())),
            _ => (None, None),
        };
        Ok(DensityTestOutcome {
            test: self.id,
            firing_l: if outcome.reject { firing } else { None },
            outcome,
            cells,
            eps,
            members_built,
            grid_size,
        })
    }
}

/// Composite 2/3-norm plus tail test on the adaptive partition with the
/// analytic threshold.
pub fn binned_lipschitz_test(
    samples: &[f64],
    f: &DensityRef,
    ln: f64,
    eps: f64,
    alpha: f64,
) -> Result<DensityTestOutcome> {
    let t = PreparedDensityTest::new(
        DensityTestId::Minimax,
        f,
        ln,
        eps,
        samples.len(),
        alpha,
        &DensityTestConfig::default(),
    )?;
    t.run(samples, Threshold::Analytic)
}

/// Chi-square on fixed-width bins against a calibrated threshold.
pub fn naive_binned_test(
    samples: &[f64],
    f: &DensityRef,
    ln: f64,
    eps: f64,
    alpha: f64,
    threshold: f64,
) -> Result<DensityTestOutcome> {
    let t = PreparedDensityTest::new(
        DensityTestId::Naive,
        f,
        ln,
        eps,
        samples.len(),
        alpha,
        &DensityTestConfig::default(),
    )?;
    t.run(samples, Threshold::Calibrated(threshold))
}

pub fn ks_test(samples: &[f64], f: &DensityRef, alpha: f64, threshold: Threshold) -> Result<DensityTestOutcome> {
    let t = PreparedDensityTest::new(
        DensityTestId::Ks,
        f,
        1.0,
        0.5,
        samples.len(),
        alpha,
        &DensityTestConfig::default(),
    )?;
    t.run(samples, threshold)
}

pub fn adaptive_lipschitz_test(samples: &[f64], f: &DensityRef, l0: f64, alpha: f64) -> Result<DensityTestOutcome> {
    let n = samples.len() / f.dim().max(1);
    let t = PreparedDensityTest::new(
        DensityTestId::Adaptive,
        f,
        l0,
        0.5,
        n,
        alpha,
        &DensityTestConfig::default(),
    )?;
    t.run(samples, Threshold::Analytic)
}
