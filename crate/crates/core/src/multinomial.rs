//! Test statistics and decision rules for multinomial goodness of fit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probs::{bulk_set, tail_set, CountVector, IndexSet, ProbVector};

/// Where a decision threshold came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdSource {
    Analytic,
    McCalibrated,
}

/// Result of a fixed-level test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub statistic: f64,
    pub threshold: f64,
    pub alpha: f64,
    pub reject: bool,
    pub threshold_source: ThresholdSource,
    /// For composite tests, the branch that fired (or "none").
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub branch: Option<String>,
}

impl TestOutcome {
    pub fn new(statistic: f64, threshold: f64, alpha: f64, source: ThresholdSource) -> Self {
        Self {
            statistic,
            threshold,
            alpha,
            reject: statistic > threshold,
            threshold_source: source,
            branch: None,
        }
    }

    fn with_branch(mut self, b: impl Into<String>) -> Self {
        self.branch = Some(b.into());
        self
    }
}

/// Dyadic banding of the sigma-bulk used by the max test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTestLayout {
    pub groups: Vec<IndexSet>,
    pub k: usize,
}

/// String-addressable test identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TestId {
    #[serde(rename = "trunc-chisq")]
    TruncChisq,
    #[serde(rename = "two-thirds-tail")]
    TwoThirdsTail,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "chisq")]
    Chisq,
    #[serde(rename = "lrt")]
    Lrt,
    #[serde(rename = "l1")]
    L1,
    #[serde(rename = "l2")]
    L2,
}

impl TestId {
    pub const ALL: [TestId; 7] = [
        TestId::TruncChisq,
        TestId::TwoThirdsTail,
        TestId::Max,
        TestId::Chisq,
        TestId::Lrt,
        TestId::L1,
        TestId::L2,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            TestId::TruncChisq => "trunc-chisq",
            TestId::TwoThirdsTail => "two-thirds-tail",
            TestId::Max => "max",
            TestId::Chisq => "chisq",
            TestId::Lrt => "lrt",
            TestId::L1 => "l1",
            TestId::L2 => "l2",
        }
    }

    /// Whether a closed-form (Chebyshev) threshold exists.
    pub fn has_analytic_threshold(&self) -> bool {
        matches!(self, TestId::TruncChisq | TestId::TwoThirdsTail | TestId::Max)
    }

    /// Whether the statistic depends on a truncation level sigma.
    pub fn uses_sigma(&self) -> bool {
        matches!(self, TestId::TwoThirdsTail | TestId::Max)
    }
}

impl std::fmt::Display for TestId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TestId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TestId::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::UnknownTest(s.to_string()))
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::BadAlpha(alpha))
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma < 1.0 {
        Ok(())
    } else {
        Err(Error::BadSigma(sigma))
    }
}

fn check_dims(x: &CountVector, p0: &ProbVector) -> Result<()> {
    if x.dim() != p0.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: p0.dim(),
        });
    }
    Ok(())
}

/// Truncated chi-square statistic with normalization max(1/d, p0).
pub fn trunc_chisq_stat(x: &CountVector, p0: &ProbVector) -> Result<f64> {
    check_dims(x, p0)?;
    let n = x.n();
    let inv_d = 1.0 / p0.dim() as f64;
    Ok(x.counts
        .iter()
        .zip(p0.probs())
        .map(|(&xi, &p)| {
            let xi = xi as f64;
            let theta = p.max(inv_d);
            ((xi - n * p).powi(2) - xi) / theta
        })
        .sum())
}

/// Chebyshev threshold of the truncated chi-square test.
pub fn trunc_chisq_threshold(p0: &ProbVector, n: f64, alpha: f64) -> f64 {
    let inv_d = 1.0 / p0.dim() as f64;
    let s: f64 = p0.probs().iter().map(|&p| (p / p.max(inv_d)).powi(2)).sum();
    n * (2.0 / alpha * s).sqrt()
}

pub fn trunc_chisq_test(x: &CountVector, p0: &ProbVector, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let t = trunc_chisq_stat(x, p0)?;
    Ok(TestOutcome::new(
        t,
        trunc_chisq_threshold(p0, x.n(), alpha),
        alpha,
        ThresholdSource::Analytic,
    ))
}

/// Precomputed null-dependent pieces shared across many count vectors.
#[derive(Debug, Clone)]
pub struct PreparedNull {
    pub p0: ProbVector,
    pub sigma: f64,
    pub tail: IndexSet,
    pub bulk: IndexSet,
    pub layout: MaxTestLayout,
    tail_mass: f64,
    bulk_p23: f64,
    group_p2: Vec<f64>,
}

impl PreparedNull {
    pub fn new(p0: &ProbVector, sigma: f64) -> Self {
        let tail = tail_set(p0, sigma);
        let bulk = bulk_set(p0, sigma);
        let layout = layout_from_bulk(p0, &bulk, sigma);
        let probs = p0.probs();
        let tail_mass = tail.iter().map(|i| probs[i]).sum();
        let bulk_p23 = bulk.iter().map(|i| probs[i].powf(2.0 / 3.0)).sum();
        let group_p2 = layout
            .groups
            .iter()
            .map(|g| g.iter().map(|i| probs[i] * probs[i]).sum())
            .collect();
        Self {
            p0: p0.clone(),
            sigma,
            tail,
            bulk,
            layout,
            tail_mass,
            bulk_p23,
            group_p2,
        }
    }

    pub fn tail_stat(&self, x: &CountVector) -> f64 {
        let n = x.n();
        let p = self.p0.probs();
        self.tail.iter().map(|j| x.counts[j] as f64 - n * p[j]).sum()
    }

    pub fn tail_threshold(&self, n: f64, alpha: f64) -> f64 {
        (n * self.tail_mass / alpha).sqrt()
    }

    pub fn two_thirds_stat(&self, x: &CountVector) -> f64 {
        let n = x.n();
        let p = self.p0.probs();
        self.bulk
            .iter()
            .map(|j| {
                let xj = x.counts[j] as f64;
                ((xj - n * p[j]).powi(2) - xj) / p[j].powf(2.0 / 3.0)
            })
            .sum()
    }

    pub fn two_thirds_threshold(&self, n: f64, alpha: f64) -> f64 {
        (2.0 * n * n * self.bulk_p23 / alpha).sqrt()
    }

    /// Group statistics T_j of the max test.
    pub fn group_stats(&self, x: &CountVector) -> Vec<f64> {
        let n = x.n();
        let p = self.p0.probs();
        self.layout
            .groups
            .iter()
            .map(|g| {
                g.iter()
                    .map(|t| {
                        let xt = x.counts[t] as f64;
                        (xt - n * p[t]).powi(2) - xt
                    })
                    .sum()
            })
            .collect()
    }

    pub fn group_thresholds(&self, n: f64, alpha: f64) -> Vec<f64> {
        let k = self.layout.k as f64;
        self.group_p2
            .iter()
            .map(|s| (2.0 * k * n * n * s / alpha).sqrt())
            .collect()
    }

    fn tail_outcome(&self, x: &CountVector, alpha: f64) -> TestOutcome {
        if self.tail.is_empty() {
            return TestOutcome::new(0.0, 0.0, alpha, ThresholdSource::Analytic);
        }
        TestOutcome::new(
            self.tail_stat(x),
            self.tail_threshold(x.n(), alpha),
            alpha,
            ThresholdSource::Analytic,
        )
    }

    fn two_thirds_outcome(&self, x: &CountVector, alpha: f64) -> TestOutcome {
        if self.bulk.is_empty() {
            return TestOutcome::new(0.0, 0.0, alpha, ThresholdSource::Analytic);
        }
        TestOutcome::new(
            self.two_thirds_stat(x),
            self.two_thirds_threshold(x.n(), alpha),
            alpha,
            ThresholdSource::Analytic,
        )
    }

    /// Composite statistic: the largest ratio of a branch statistic to its
    /// threshold. The composite rejects iff this exceeds 1.
    pub fn composite_ratio(&self, x: &CountVector, alpha: f64) -> (f64, String) {
        let mut best = (0.0, "none".to_string());
        let mut consider = |o: TestOutcome, name: String| {
            if let Some(r) = branch_ratio(&o) {
                if r > best.0 || best.1 == "none" && r == best.0 {
                    best = (r, name);
                }
            }
        };
        consider(self.tail_outcome(x, alpha / 2.0), "tail".into());
        consider(self.two_thirds_outcome(x, alpha / 2.0), "two-thirds".into());
        best
    }

    /// Max-test statistic in the same ratio form as [`Self::composite_ratio`].
    pub fn max_ratio(&self, x: &CountVector, alpha: f64) -> (f64, String) {
        let mut best = (0.0, "none".to_string());
        let tail = self.tail_outcome(x, alpha / 2.0);
        if let Some(r) = branch_ratio(&tail) {
            best = (r, "tail".into());
        }
        let ts = self.group_stats(x);
        let th = self.group_thresholds(x.n(), alpha / 2.0);
        for (j, (t, h)) in ts.iter().zip(&th).enumerate() {
            if self.layout.groups[j].is_empty() {
                continue;
            }
            let o = TestOutcome::new(*t, *h, alpha / 2.0, ThresholdSource::Analytic);
            if let Some(r) = branch_ratio(&o) {
                if r > best.0 {
                    best = (r, format!("group-{}", j + 1));
                }
            }
        }
        best
    }

    /// Scalar statistic for any test id; composite tests use the ratio form.
    pub fn statistic(&self, id: TestId, x: &CountVector, alpha: f64) -> Result<f64> {
        check_dims(x, &self.p0)?;
        Ok(match id {
            TestId::TruncChisq => trunc_chisq_stat(x, &self.p0)?,
            TestId::TwoThirdsTail => self.composite_ratio(x, alpha).0,
            TestId::Max => self.max_ratio(x, alpha).0,
            TestId::Chisq => chisq_stat(x, &self.p0)?,
            TestId::Lrt => lrt_stat(x, &self.p0)?,
            TestId::L1 => l1_stat(x, &self.p0)?,
            TestId::L2 => l2_stat(x, &self.p0)?,
        })
    }

    /// Runs a test with its analytic threshold.
    pub fn analytic_test(&self, id: TestId, x: &CountVector, alpha: f64) -> Result<TestOutcome> {
        check_alpha(alpha)?;
        check_dims(x, &self.p0)?;
        match id {
            TestId::TruncChisq => trunc_chisq_test(x, &self.p0, alpha),
            TestId::TwoThirdsTail => {
                let (r, b) = self.composite_ratio(x, alpha);
                Ok(TestOutcome::new(r, 1.0, alpha, ThresholdSource::Analytic).with_branch(fired(r, 1.0, b)))
            }
            TestId::Max => {
                let (r, b) = self.max_ratio(x, alpha);
                Ok(TestOutcome::new(r, 1.0, alpha, ThresholdSource::Analytic).with_branch(fired(r, 1.0, b)))
            }
            other => Err(Error::Invalid(format!(
                "test '{other}' has no analytic threshold; supply a calibrated one"
            ))),
        }
    }

    /// Runs a test against an externally calibrated threshold.
    pub fn calibrated_test(&self, id: TestId, x: &CountVector, alpha: f64, threshold: f64) -> Result<TestOutcome> {
        check_alpha(alpha)?;
        check_dims(x, &self.p0)?;
        let (stat, branch) = match id {
            TestId::TwoThirdsTail => {
                let (r, b) = self.composite_ratio(x, alpha);
                (r, Some(b))
            }
            TestId::Max => {
                let (r, b) = self.max_ratio(x, alpha);
                (r, Some(b))
            }
            _ => (self.statistic(id, x, alpha)?, None),
        };
        let mut o = TestOutcome::new(stat, threshold, alpha, ThresholdSource::McCalibrated);
        if let Some(b) = branch {
            o = o.with_branch(fired(stat, threshold, b));
        }
        Ok(o)
    }
}

fn fired(stat: f64, threshold: f64, branch: String) -> String {
    if stat > threshold {
        branch
    } else {
        "none".into()
    }
}

fn branch_ratio(o: &TestOutcome) -> Option<f64> {
    if o.threshold > 0.0 {
        Some(o.statistic / o.threshold)
    } else if o.statistic > 0.0 {
        Some(f64::INFINITY)
    } else {
        None
    }
}

fn layout_from_bulk(p0: &ProbVector, bulk: &IndexSet, sigma: f64) -> MaxTestLayout {
    if bulk.is_empty() || p0.dim() < 2 {
        return MaxTestLayout { groups: vec![], k: 0 };
    }
    let probs = p0.probs();
    let top = probs[p0.sort_perm()[1]];
    let min_bulk = bulk.iter().map(|i| probs[i]).fold(f64::INFINITY, f64::min);
    let cap = ((p0.dim() as f64 / sigma).log2().ceil().max(0.0) as usize).saturating_add(1);
    let mut groups = Vec::new();
    for j in 1..=cap {
        let hi = top / 2f64.powi(j as i32 - 1);
        let mut lo = top / 2f64.powi(j as i32);
        let last = lo < min_bulk || j == cap;
        if j == cap {
            // anything below the final band is folded into it
            lo = -1.0;
        }
        let members: Vec<usize> = bulk.iter().filter(|&t| probs[t] > lo && probs[t] <= hi).collect();
        groups.push(IndexSet::from_unsorted(members));
        if last {
            break;
        }
    }
    let k = groups.len();
    MaxTestLayout { groups, k }
}

/// Dyadic bands of the sigma-bulk relative to the second largest entry.
pub fn max_test_layout(p0: &ProbVector, sigma: f64) -> MaxTestLayout {
    layout_from_bulk(p0, &bulk_set(p0, sigma), sigma)
}

pub fn tail_test(x: &CountVector, p0: &ProbVector, sigma: f64, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    check_sigma(sigma)?;
    check_dims(x, p0)?;
    Ok(PreparedNull::new(p0, sigma).tail_outcome(x, alpha))
}

pub fn two_thirds_test(x: &CountVector, p0: &ProbVector, sigma: f64, alpha: f64) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    check_sigma(sigma)?;
    check_dims(x, p0)?;
    Ok(PreparedNull::new(p0, sigma).two_thirds_outcome(x, alpha))
}

/// Tail test and 2/3-norm test on the same counts, each at level alpha/2.
pub fn composite_v_test(x: &CountVector, p0: &ProbVector, sigma: f64, alpha: f64) -> Result<TestOutcome> {
    check_sigma(sigma)?;
    PreparedNull::new(p0, sigma).analytic_test(TestId::TwoThirdsTail, x, alpha)
}

/// Tail test combined with the Bonferroni max over dyadic groups.
pub fn max_test(x: &CountVector, p0: &ProbVector, sigma: f64, alpha: f64) -> Result<TestOutcome> {
    check_sigma(sigma)?;
    PreparedNull::new(p0, sigma).analytic_test(TestId::Max, x, alpha)
}

fn check_zero_cells(x: &CountVector, p0: &ProbVector) -> Result<()> {
    for (i, (&xi, &p)) in x.counts.iter().zip(p0.probs()).enumerate() {
        if p == 0.0 && xi > 0 {
            return Err(Error::ZeroNullCell(i));
        }
    }
    Ok(())
}

/// Centered chi-square statistic. Cells with zero null mass and zero count
/// contribute nothing.
pub fn chisq_stat(x: &CountVector, p0: &ProbVector) -> Result<f64> {
    check_dims(x, p0)?;
    check_zero_cells(x, p0)?;
    let n = x.n();
    Ok(x.counts
        .iter()
        .zip(p0.probs())
        .filter(|(_, &p)| p > 0.0)
        .map(|(&xi, &p)| {
            let e = n * p;
            ((xi as f64 - e).powi(2) - e) / e
        })
        .sum())
}

/// Likelihood-ratio statistic with the 0 log 0 = 0 convention.
pub fn lrt_stat(x: &CountVector, p0: &ProbVector) -> Result<f64> {
    check_dims(x, p0)?;
    check_zero_cells(x, p0)?;
    let n = x.n();
    Ok(2.0
        * x.counts
            .iter()
            .zip(p0.probs())
            .filter(|(&xi, _)| xi > 0)
            .map(|(&xi, &p)| {
                let xi = xi as f64;
                xi * (xi / (n * p)).ln()
            })
            .sum::<f64>())
}

pub fn l1_stat(x: &CountVector, p0: &ProbVector) -> Result<f64> {
    check_dims(x, p0)?;
    let n = x.n();
    Ok(x.counts
        .iter()
        .zip(p0.probs())
        .map(|(&xi, &p)| (xi as f64 - n * p).abs())
        .sum())
}

pub fn l2_stat(x: &CountVector, p0: &ProbVector) -> Result<f64> {
    check_dims(x, p0)?;
    let n = x.n();
    Ok(x.counts
        .iter()
        .zip(p0.probs())
        .map(|(&xi, &p)| (xi as f64 - n * p).powi(2))
        .sum())
}
