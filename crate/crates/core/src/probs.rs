//! Discrete distributions, count vectors and the tail/bulk split.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Poisson};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::rng::rng_from_seed;

/// Slack used when comparing suffix sums against sigma.
pub(crate) const BOUNDARY_TOL: f64 = 1e-12;

/// A validated probability vector with its descending sort permutation.
///
/// Serializes as a plain JSON array of probabilities.
#[derive(Debug, Clone)]
pub struct ProbVector {
    probs: Vec<f64>,
    sort_perm: Vec<usize>,
    cumulative: Vec<f64>,
}

impl PartialEq for ProbVector {
    fn eq(&self, other: &Self) -> bool {
        self.probs == other.probs
    }
}

impl ProbVector {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Original indices in order of decreasing probability (0-based).
    pub fn sort_perm(&self) -> &[usize] {
        &self.sort_perm
    }

    pub fn dim(&self) -> usize {
        self.probs.len()
    }

    /// Probabilities in non-increasing order.
    pub fn sorted(&self) -> Vec<f64> {
        self.sort_perm.iter().map(|&i| self.probs[i]).collect()
    }

    /// Sorted rank (0-based) of every original index.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.probs.len()];
        for (k, &i) in self.sort_perm.iter().enumerate() {
            r[i] = k;
        }
        r
    }

    /// Uniform distribution on `d` categories.
    pub fn uniform(d: usize) -> Result<Self> {
        make_prob_vector(&vec![1.0; d])
    }

    /// Power-law distribution with p(i) proportional to 1/i.
    pub fn power_law(d: usize) -> Result<Self> {
        let w: Vec<f64> = (1..=d).map(|i| 1.0 / i as f64).collect();
        make_prob_vector(&w)
    }

    fn draw_category<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        let mut k = k.min(self.probs.len() - 1);
        // never land on a zero-probability category
        while self.probs[k] == 0.0 && k > 0 {
            k -= 1;
        }
        k
    }
}

impl Serialize for ProbVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.probs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for ProbVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = Vec::<f64>::deserialize(d)?;
        make_prob_vector(&w).map_err(serde::de::Error::custom)
    }
}

/// How a count vector was sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SamplingMode {
    #[default]
    Fixed,
    Poissonized,
}

impl std::str::FromStr for SamplingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fixed" => Ok(Self::Fixed),
            "poissonized" | "poisson" => Ok(Self::Poissonized),
            _ => Err(Error::Invalid(format!("unknown sampling mode '{s}'"))),
        }
    }
}

/// Observed category counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountVector {
    pub counts: Vec<u64>,
    pub nominal_n: u64,
    pub mode: SamplingMode,
}

impl CountVector {
    /// Builds a fixed-mode count vector whose nominal size is the total.
    pub fn fixed(counts: Vec<u64>) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::Invalid("counts sum to zero".into()));
        }
        Ok(Self {
            counts,
            nominal_n: n,
            mode: SamplingMode::Fixed,
        })
    }

    pub fn new(counts: Vec<u64>, nominal_n: u64, mode: SamplingMode) -> Result<Self> {
        if nominal_n == 0 {
            return Err(Error::Invalid("nominal n must be positive".into()));
        }
        if mode == SamplingMode::Fixed {
            let s: u64 = counts.iter().sum();
            if s != nominal_n {
                return Err(Error::Invalid(format!(
                    "fixed-mode counts sum to {s}, expected {nominal_n}"
                )));
            }
        }
        Ok(Self {
            counts,
            nominal_n,
            mode,
        })
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn n(&self) -> f64 {
        self.nominal_n as f64
    }
}

/// Parses `uniform:d`, `powerlaw:d` (p(i) proportional to 1/i) or
/// `weights:w1,w2,...`.
pub fn parse_prob_spec(spec: &str) -> Result<ProbVector> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    let dim = || -> Result<usize> {
        rest.trim()
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .ok_or_else(|| Error::Invalid(format!("bad dimension in '{spec}'")))
    };
    match name.trim() {
        "uniform" => ProbVector::uniform(dim()?),
        "powerlaw" | "power-law" => ProbVector::power_law(dim()?),
        "weights" => {
            let w = rest
                .split(',')
                .map(|t| {
                    t.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::Invalid(format!("bad weight '{t}'")))
                })
                .collect::<Result<Vec<_>>>()?;
            make_prob_vector(&w)
        }
        other => Err(Error::Invalid(format!("unknown null family '{other}'"))),
    }
}

/// Sorted set of 0-based category indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IndexSet {
    pub indices: Vec<usize>,
}

impl IndexSet {
    pub fn from_unsorted(mut v: Vec<usize>) -> Self {
        v.sort_unstable();
        v.dedup();
        Self { indices: v }
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn is_subset(&self, other: &IndexSet) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }
}

/// Normalizes nonnegative weights into a [`ProbVector`].
pub fn make_prob_vector(weights: &[f64]) -> Result<ProbVector> {
    if weights.is_empty() {
        return Err(Error::AllZero);
    }
    for (index, &value) in weights.iter().enumerate() {
        if !(value >= 0.0) || !value.is_finite() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::AllZero);
    }
    let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let mut sort_perm: Vec<usize> = (0..probs.len()).collect();
    // stable sort keeps smaller original indices first among ties
    sort_perm.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]));
    let mut acc = 0.0;
    let cumulative = probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect();
    Ok(ProbVector {
        probs,
        sort_perm,
        cumulative,
    })
}

/// Draws counts from `p` with nominal sample size `n`.
///
/// Poissonized draws use the equivalent two-stage form: a Poisson(n) total
/// followed by a multinomial split, which gives independent Poisson(n p_j)
/// counts.
pub fn sample_counts(p: &ProbVector, n: u64, mode: SamplingMode, seed: u64) -> CountVector {
    let mut rng = rng_from_seed(seed);
    sample_counts_with(p, n, mode, &mut rng)
}

/// As [`sample_counts`] but drawing from a caller-supplied generator.
pub fn sample_counts_with<R: Rng + ?Sized>(p: &ProbVector, n: u64, mode: SamplingMode, rng: &mut R) -> CountVector {
    let total = match mode {
        SamplingMode::Fixed => n,
        SamplingMode::Poissonized => {
            if n == 0 {
                0
            } else {
                Poisson::new(n as f64).unwrap().sample(rng) as u64
            }
        }
    };
    let counts = multinomial(p, total, rng);
    CountVector {
        counts,
        nominal_n: n.max(1),
        mode,
    }
}

fn multinomial<R: Rng + ?Sized>(p: &ProbVector, total: u64, rng: &mut R) -> Vec<u64> {
    let d = p.dim();
    let mut counts = vec![0u64; d];
    if total == 0 {
        return counts;
    }
    if (total as usize) <= d {
        for _ in 0..total {
            counts[p.draw_category(rng)] += 1;
        }
        return counts;
    }
    // conditional binomial chain
    let mut left = total;
    let mut mass_left = 1.0f64;
    for (j, &pj) in p.probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if j == d - 1 || mass_left <= 0.0 {
            counts[j] = left;
            break;
        }
        let q = (pj / mass_left).clamp(0.0, 1.0);
        let x = if q >= 1.0 {
            left
        } else if q <= 0.0 {
            0
        } else {
            Binomial::new(left, q).unwrap().sample(rng)
        };
        counts[j] = x;
        left -= x;
        mass_left -= pj;
    }
    counts
}

/// Suffix sums of the sorted probabilities: entry k is the mass of ranks k..d.
pub(crate) fn sorted_suffix_sums(sorted: &[f64]) -> Vec<f64> {
    let mut s = vec![0.0; sorted.len()];
    let mut acc = 0.0;
    for k in (0..sorted.len()).rev() {
        acc += sorted[k];
        s[k] = acc;
    }
    s
}

/// First sorted rank belonging to the sigma-tail (d if the tail is empty).
pub(crate) fn tail_start_rank(p: &ProbVector, sigma: f64) -> usize {
    let suffix = sorted_suffix_sums(&p.sorted());
    suffix
        .iter()
        .position(|&s| s <= sigma + BOUNDARY_TOL)
        .unwrap_or(p.dim())
}

/// Categories whose sorted suffix mass is at most sigma.
pub fn tail_set(p: &ProbVector, sigma: f64) -> IndexSet {
    let start = tail_start_rank(p, sigma);
    IndexSet::from_unsorted(p.sort_perm[start..].to_vec())
}

/// Sorted ranks above the first that are not in the tail.
pub fn bulk_set(p: &ProbVector, sigma: f64) -> IndexSet {
    let start = tail_start_rank(p, sigma).max(1);
    IndexSet::from_unsorted(p.sort_perm[1..start].to_vec())
}

/// Total variation style l1 distance.
pub fn l1_distance(p: &ProbVector, q: &ProbVector) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::DimensionMismatch {
            left: p.dim(),
            right: q.dim(),
        });
    }
    Ok(p.probs.iter().zip(&q.probs).map(|(a, b)| (a - b).abs()).sum())
}
