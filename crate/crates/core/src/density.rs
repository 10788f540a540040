//! Null densities, closed-form functionals, and alternative constructors.

use std::f64::consts::{E, PI};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta, beta_reg, inv_beta_reg};
use statrs::function::erf::{erf, erfc_inv};

use crate::error::{Error, Result};
use crate::partition::{CellLocator, Cube, Partition};
use crate::probs::{make_prob_vector, ProbVector};
use crate::rng::rng_from_seed;

/// An evaluable density on R^d.
pub trait NullDensity: Send + Sync + fmt::Debug {
    /// Identifier in `family:params` form.
    fn name(&self) -> String;
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> f64;
    /// Lipschitz constant of the density (on its support for densities with
    /// a jump at the boundary).
    fn lipschitz_const(&self) -> f64;
    /// The mean when it is finite, otherwise the median.
    fn center(&self) -> Vec<f64>;
    /// Supremum of the density.
    fn max_density(&self) -> f64;
    /// Draws `n` points, returned flat (point-major, `n * dim` values).
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Probability of an axis-aligned cube.
    fn cell_prob(&self, cube: &Cube) -> f64;
    fn cdf(&self, _x: f64) -> Option<f64> {
        None
    }
    fn quantile(&self, _u: f64) -> Option<f64> {
        None
    }
    /// Bounding box of the support, if bounded.
    fn support_box(&self) -> Option<Cube> {
        None
    }
    /// Points where the one-dimensional density has kinks or jumps.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }
    /// The upper level set {p >= t} as disjoint intervals (d = 1 only).
    fn level_intervals(&self, _t: f64) -> Option<Vec<(f64, f64)>> {
        None
    }
    /// True when the density is one-dimensional and monotone between
    /// consecutive breakpoints, so cell extremes are attained at endpoints.
    fn piecewise_monotone(&self) -> bool {
        false
    }
}

pub type DensityRef = Arc<dyn NullDensity>;

fn product_prob(cube: &Cube, cdf: impl Fn(f64) -> f64) -> f64 {
    cube.lower
        .iter()
        .map(|&lo| (cdf(lo + cube.side) - cdf(lo)).max(0.0))
        .product()
}

/// Uniform density on [a, b]^d.
#[derive(Debug, Clone)]
pub struct Uniform {
    pub a: f64,
    pub b: f64,
    pub dim: usize,
}

impl Uniform {
    fn cdf1(&self, x: f64) -> f64 {
        ((x - self.a) / (self.b - self.a)).clamp(0.0, 1.0)
    }
}

impl NullDensity for Uniform {
    fn name(&self) -> String {
        with_dim(format!("uniform:{},{}", self.a, self.b), self.dim)
    }
    fn piecewise_monotone(&self) -> bool {
        self.dim == 1
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        if x.iter().all(|&v| v >= self.a && v <= self.b) {
            self.max_density()
        } else {
            0.0
        }
    }
    fn lipschitz_const(&self) -> f64 {
        0.0
    }
    fn center(&self) -> Vec<f64> {
        vec![0.5 * (self.a + self.b); self.dim]
    }
    fn max_density(&self) -> f64 {
        (self.b - self.a).powi(-(self.dim as i32))
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n * self.dim)
            .map(|_| self.a + (self.b - self.a) * rng.random::<f64>())
            .collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf1(x))
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        (self.dim == 1).then(|| self.cdf1(x))
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        (self.dim == 1).then(|| self.a + u * (self.b - self.a))
    }
    fn support_box(&self) -> Option<Cube> {
        Some(Cube::new(vec![self.a; self.dim], self.b - self.a))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.a, self.b]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if self.dim != 1 {
            return None;
        }
        Some(if t <= self.max_density() {
            vec![(self.a, self.b)]
        } else {
            vec![]
        })
    }
}

/// Gaussian with mean mu and standard deviation nu in every coordinate.
#[derive(Debug, Clone)]
pub struct Gaussian {
    pub mu: f64,
    pub nu: f64,
    pub dim: usize,
}

impl Gaussian {
    fn cdf1(&self, x: f64) -> f64 {
        0.5 * (1.0 + erf((x - self.mu) / (self.nu * 2f64.sqrt())))
    }
}

impl NullDensity for Gaussian {
    fn name(&self) -> String {
        with_dim(format!("gaussian:{},{}", self.mu, self.nu), self.dim)
    }
    fn piecewise_monotone(&self) -> bool {
        self.dim == 1
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        let q: f64 = x.iter().map(|&v| ((v - self.mu) / self.nu).powi(2)).sum();
        self.max_density() * (-0.5 * q).exp()
    }
    fn lipschitz_const(&self) -> f64 {
        // gradient norm peaks at distance nu from the mean
        self.max_density() * (-0.5f64).exp() / self.nu
    }
    fn center(&self) -> Vec<f64> {
        vec![self.mu; self.dim]
    }
    fn max_density(&self) -> f64 {
        (self.nu * (2.0 * PI).sqrt()).powi(-(self.dim as i32))
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let dist = Normal::new(self.mu, self.nu).unwrap();
        (0..n * self.dim).map(|_| dist.sample(rng)).collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf1(x))
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        (self.dim == 1).then(|| self.cdf1(x))
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        (self.dim == 1).then(|| self.mu - self.nu * 2f64.sqrt() * erfc_inv(2.0 * u))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.mu]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if self.dim != 1 {
            return None;
        }
        let peak = self.max_density();
        if t > peak {
            return Some(vec![]);
        }
        let r = self.nu * (2.0 * (peak / t.max(1e-300)).ln()).sqrt();
        Some(vec![(self.mu - r, self.mu + r)])
    }
}

/// Beta(a, b) on [0, 1].
#[derive(Debug, Clone)]
pub struct BetaDensity {
    pub a: f64,
    pub b: f64,
    norm: f64,
    lip: f64,
    peak: f64,
}

impl BetaDensity {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        let ok = |v: f64| v == 1.0 || v >= 2.0;
        if !(ok(a) && ok(b)) {
            return Err(Error::BadParams(format!(
                "beta parameters must be 1 or at least 2 for a Lipschitz density, got ({a}, {b})"
            )));
        }
        let mut d = Self {
            a,
            b,
            norm: 1.0 / beta(a, b),
            lip: 0.0,
            peak: 0.0,
        };
        d.peak = d.pdf(d.mode());
        let deriv = |x: f64| {
            let mut s = 0.0;
            if a > 1.0 {
                s += (a - 1.0) * x.powf(a - 2.0) * (1.0 - x).powf(b - 1.0);
            }
            if b > 1.0 {
                s -= (b - 1.0) * x.powf(a - 1.0) * (1.0 - x).powf(b - 2.0);
            }
            (s * d.norm).abs()
        };
        let m = 20_000;
        d.lip = (0..=m).map(|i| deriv(i as f64 / m as f64)).fold(0.0, f64::max);
        Ok(d)
    }

    fn mode(&self) -> f64 {
        if self.a == 1.0 && self.b == 1.0 {
            0.5
        } else {
            (self.a - 1.0) / (self.a + self.b - 2.0)
        }
    }

    fn pdf(&self, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        self.norm * x.powf(self.a - 1.0) * (1.0 - x).powf(self.b - 1.0)
    }

    fn cdf1(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            beta_reg(self.a, self.b, x)
        }
    }
}

impl NullDensity for BetaDensity {
    fn name(&self) -> String {
        format!("beta:{},{}", self.a, self.b)
    }
    fn piecewise_monotone(&self) -> bool {
        true
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.pdf(x[0])
    }
    fn lipschitz_const(&self) -> f64 {
        self.lip
    }
    fn center(&self) -> Vec<f64> {
        vec![self.a / (self.a + self.b)]
    }
    fn max_density(&self) -> f64 {
        self.peak
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let dist = rand_distr::Beta::new(self.a, self.b).unwrap();
        (0..n).map(|_| dist.sample(rng)).collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf1(x))
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(self.cdf1(x))
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        Some(inv_beta_reg(self.a, self.b, u.clamp(0.0, 1.0)))
    }
    fn support_box(&self) -> Option<Cube> {
        Some(Cube::new(vec![0.0], 1.0))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, self.mode(), 1.0]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if t > self.peak {
            return Some(vec![]);
        }
        if self.a == 1.0 && self.b == 1.0 {
            return Some(vec![(0.0, 1.0)]);
        }
        let m = self.mode();
        let lo = if self.pdf(0.0) >= t {
            0.0
        } else {
            crate::quad::bisect(|x| self.pdf(x) - t, 0.0, m, 1e-15, 200)
        };
        let hi = if self.pdf(1.0) >= t {
            1.0
        } else {
            crate::quad::bisect(|x| self.pdf(x) - t, m, 1.0, 1e-15, 200)
        };
        Some(vec![(lo, hi)])
    }
}

/// Triangular density of height sqrt(L) on [0, 2/sqrt(L)] with slope L.
#[derive(Debug, Clone)]
pub struct Spiky {
    pub l: f64,
}

impl Spiky {
    fn width(&self) -> f64 {
        2.0 / self.l.sqrt()
    }
    fn cdf1(&self, x: f64) -> f64 {
        let m = 1.0 / self.l.sqrt();
        if x <= 0.0 {
            0.0
        } else if x <= m {
            0.5 * self.l * x * x
        } else if x < 2.0 * m {
            1.0 - 0.5 * self.l * (2.0 * m - x).powi(2)
        } else {
            1.0
        }
    }
}

impl NullDensity for Spiky {
    fn name(&self) -> String {
        format!("spiky:{}", self.l)
    }
    fn piecewise_monotone(&self) -> bool {
        true
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        let x = x[0];
        let m = 1.0 / self.l.sqrt();
        if (0.0..=m).contains(&x) {
            self.l * x
        } else if x > m && x <= 2.0 * m {
            2.0 * self.l.sqrt() - self.l * x
        } else {
            0.0
        }
    }
    fn lipschitz_const(&self) -> f64 {
        self.l
    }
    fn center(&self) -> Vec<f64> {
        vec![1.0 / self.l.sqrt()]
    }
    fn max_density(&self) -> f64 {
        self.l.sqrt()
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let m = 1.0 / self.l.sqrt();
        // sum of two uniforms on [0, m] is triangular on [0, 2m]
        (0..n)
            .map(|_| m * (rng.random::<f64>() + rng.random::<f64>()))
            .collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf1(x))
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(self.cdf1(x))
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        let m = 1.0 / self.l.sqrt();
        Some(if u <= 0.5 {
            (2.0 * u / self.l).sqrt()
        } else {
            2.0 * m - (2.0 * (1.0 - u) / self.l).sqrt()
        })
    }
    fn support_box(&self) -> Option<Cube> {
        Some(Cube::new(vec![0.0], self.width()))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0, 1.0 / self.l.sqrt(), self.width()]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if t > self.max_density() {
            return Some(vec![]);
        }
        let t = t.max(0.0);
        Some(vec![(t / self.l, self.width() - t / self.l)])
    }
}

/// Zero-centred Cauchy density with scale alpha.
#[derive(Debug, Clone)]
pub struct Cauchy {
    pub alpha: f64,
}

impl NullDensity for Cauchy {
    fn name(&self) -> String {
        format!("cauchy:{}", self.alpha)
    }
    fn piecewise_monotone(&self) -> bool {
        true
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.alpha / (PI * (x[0] * x[0] + self.alpha * self.alpha))
    }
    fn lipschitz_const(&self) -> f64 {
        // |p'| peaks at x = alpha / sqrt(3)
        3.0 * 3f64.sqrt() / (8.0 * PI * self.alpha * self.alpha)
    }
    fn center(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn max_density(&self) -> f64 {
        1.0 / (PI * self.alpha)
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>()).unwrap()).collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf(x).unwrap())
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(0.5 + (x / self.alpha).atan() / PI)
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        Some(self.alpha * (PI * (u - 0.5)).tan())
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![0.0]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if t > self.max_density() {
            return Some(vec![]);
        }
        let r2 = self.alpha / (PI * t.max(1e-300)) - self.alpha * self.alpha;
        let r = r2.max(0.0).sqrt();
        Some(vec![(-r, r)])
    }
}

/// Pareto density alpha x0^alpha / x^(alpha+1) on [x0, inf).
#[derive(Debug, Clone)]
pub struct Pareto {
    pub alpha: f64,
    pub x0: f64,
}

impl NullDensity for Pareto {
    fn name(&self) -> String {
        format!("pareto:{},{}", self.alpha, self.x0)
    }
    fn piecewise_monotone(&self) -> bool {
        true
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        let x = x[0];
        if x < self.x0 {
            0.0
        } else {
            self.alpha * self.x0.powf(self.alpha) / x.powf(self.alpha + 1.0)
        }
    }
    fn lipschitz_const(&self) -> f64 {
        self.alpha * (self.alpha + 1.0) / (self.x0 * self.x0)
    }
    fn center(&self) -> Vec<f64> {
        if self.alpha > 1.0 {
            vec![self.alpha * self.x0 / (self.alpha - 1.0)]
        } else {
            vec![self.x0 * 2f64.powf(1.0 / self.alpha)]
        }
    }
    fn max_density(&self) -> f64 {
        self.alpha / self.x0
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>()).unwrap()).collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf(x).unwrap())
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(if x <= self.x0 {
            0.0
        } else {
            1.0 - (self.x0 / x).powf(self.alpha)
        })
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        Some(self.x0 * (1.0 - u).powf(-1.0 / self.alpha))
    }
    fn breakpoints(&self) -> Vec<f64> {
        vec![self.x0]
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        if t > self.max_density() {
            return Some(vec![]);
        }
        let hi = (self.alpha * self.x0.powf(self.alpha) / t.max(1e-300)).powf(1.0 / (self.alpha + 1.0));
        Some(vec![(self.x0, hi)])
    }
}

/// Piecewise-constant density on consecutive intervals.
#[derive(Debug, Clone)]
pub struct PiecewiseConstant {
    pub edges: Vec<f64>,
    pub heights: Vec<f64>,
    cum: Vec<f64>,
}

impl PiecewiseConstant {
    /// Builds the density from interval edges and nonnegative weights;
    /// heights are weights normalized to unit mass.
    pub fn new(edges: Vec<f64>, weights: &[f64]) -> Result<Self> {
        if edges.len() != weights.len() + 1 || weights.is_empty() {
            return Err(Error::BadParams("need one more edge than weights".into()));
        }
        if edges.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::BadParams("edges must increase".into()));
        }
        let masses = make_prob_vector(weights).map_err(|e| Error::BadParams(e.to_string()))?;
        let heights: Vec<f64> = masses
            .probs()
            .iter()
            .zip(edges.windows(2))
            .map(|(m, w)| m / (w[1] - w[0]))
            .collect();
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for m in masses.probs() {
            acc += m;
            cum.push(acc);
        }
        Ok(Self { edges, heights, cum })
    }

    pub fn cell_masses(&self) -> Vec<f64> {
        self.cum.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn widths(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| w[1] - w[0]).collect()
    }

    fn locate(&self, x: f64) -> Option<usize> {
        if x < self.edges[0] || x >= *self.edges.last().unwrap() {
            return None;
        }
        Some(self.edges.partition_point(|&e| e <= x) - 1)
    }
}

impl NullDensity for PiecewiseConstant {
    fn name(&self) -> String {
        "piecewise".into()
    }
    fn piecewise_monotone(&self) -> bool {
        true
    }
    fn dim(&self) -> usize {
        1
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        self.locate(x[0]).map_or(0.0, |i| self.heights[i])
    }
    fn lipschitz_const(&self) -> f64 {
        f64::INFINITY
    }
    fn center(&self) -> Vec<f64> {
        let m: f64 = self
            .heights
            .iter()
            .zip(self.edges.windows(2))
            .map(|(h, w)| h * 0.5 * (w[1] * w[1] - w[0] * w[0]))
            .sum();
        vec![m]
    }
    fn max_density(&self) -> f64 {
        self.heights.iter().copied().fold(0.0, f64::max)
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..n).map(|_| self.quantile(rng.random::<f64>()).unwrap()).collect()
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        product_prob(cube, |x| self.cdf(x).unwrap())
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        Some(match self.locate(x) {
            None if x < self.edges[0] => 0.0,
            None => 1.0,
            Some(i) => self.cum[i] + self.heights[i] * (x - self.edges[i]),
        })
    }
    fn quantile(&self, u: f64) -> Option<f64> {
        let i = (self.cum.partition_point(|&c| c <= u).max(1) - 1).min(self.heights.len() - 1);
        let h = self.heights[i];
        Some(if h > 0.0 {
            (self.edges[i] + (u - self.cum[i]) / h).min(self.edges[i + 1])
        } else {
            self.edges[i]
        })
    }
    fn support_box(&self) -> Option<Cube> {
        Some(Cube::new(
            vec![self.edges[0]],
            self.edges.last().unwrap() - self.edges[0],
        ))
    }
    fn breakpoints(&self) -> Vec<f64> {
        self.edges.clone()
    }
    fn level_intervals(&self, t: f64) -> Option<Vec<(f64, f64)>> {
        Some(
            self.heights
                .iter()
                .enumerate()
                .filter(|(_, &h)| h >= t && h > 0.0)
                .map(|(i, _)| (self.edges[i], self.edges[i + 1]))
                .collect(),
        )
    }
}

fn with_dim(s: String, d: usize) -> String {
    if d == 1 {
        s
    } else {
        format!("{s}@{d}")
    }
}

/// Builds a built-in density from a family name and parameters.
pub fn builtin(name: &str, params: &[f64]) -> Result<DensityRef> {
    builtin_nd(name, params, 1)
}

/// As [`builtin`] with a dimension for the product-form families.
pub fn builtin_nd(name: &str, params: &[f64], dim: usize) -> Result<DensityRef> {
    let need = |k: usize| -> Result<()> {
        if params.len() == k {
            Ok(())
        } else {
            Err(Error::BadParams(format!(
                "{name} expects {k} parameters, got {}",
                params.len()
            )))
        }
    };
    let bad = |m: &str| Err(Error::BadParams(m.to_string()));
    if dim == 0 {
        return bad("dimension must be positive");
    }
    if dim > 1 && !matches!(name, "uniform" | "gaussian") {
        return bad("only uniform and gaussian support dimension above 1");
    }
    if params.iter().any(|p| !p.is_finite()) {
        return bad("parameters must be finite");
    }
    Ok(match name {
        "uniform" => {
            need(2)?;
            if params[1] <= params[0] {
                return bad("uniform needs a < b");
            }
            Arc::new(Uniform {
                a: params[0],
                b: params[1],
                dim,
            })
        }
        "gaussian" => {
            need(2)?;
            if params[1] <= 0.0 {
                return bad("gaussian needs nu > 0");
            }
            Arc::new(Gaussian {
                mu: params[0],
                nu: params[1],
                dim,
            })
        }
        "beta" => {
            need(2)?;
            Arc::new(BetaDensity::new(params[0], params[1])?)
        }
        "spiky" => {
            need(1)?;
            if params[0] <= 0.0 {
                return bad("spiky needs L > 0");
            }
            Arc::new(Spiky { l: params[0] })
        }
        "cauchy" => {
            need(1)?;
            if params[0] <= 0.0 {
                return bad("cauchy needs alpha > 0");
            }
            Arc::new(Cauchy { alpha: params[0] })
        }
        "pareto" => {
            need(2)?;
            if !(params[0] > 0.0 && params[0] < 1.0) || params[1] <= 0.0 {
                return bad("pareto needs 0 < alpha < 1 and x0 > 0");
            }
            Arc::new(Pareto {
                alpha: params[0],
                x0: params[1],
            })
        }
        other => return Err(Error::BadParams(format!("unknown density family '{other}'"))),
    })
}

/// Parses ids such as `gaussian:0,1`, `pareto:0.5,1` or `uniform:0,1@2`.
pub fn parse_density(id: &str) -> Result<DensityRef> {
    let (body, dim) = match id.split_once('@') {
        Some((b, d)) => (
            b,
            d.trim()
                .parse::<usize>()
                .map_err(|_| Error::BadParams(format!("bad dimension in '{id}'")))?,
        ),
        None => (id, 1),
    };
    let (name, rest) = body.split_once(':').unwrap_or((body, ""));
    let params = rest
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::BadParams(format!("bad number '{s}' in '{id}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    builtin_nd(name.trim(), &params, dim)
}

/// Exact closed-form value or a bracket.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AnalyticValue {
    Exact { value: f64 },
    Bracket { lower: f64, upper: f64 },
}

impl AnalyticValue {
    pub fn contains(&self, v: f64, rel_tol: f64) -> bool {
        match *self {
            AnalyticValue::Exact { value } => (v - value).abs() <= rel_tol * value.abs().max(1e-300),
            AnalyticValue::Bracket { lower, upper } => v >= lower * (1.0 - rel_tol) && v <= upper * (1.0 + rel_tol),
        }
    }
}

/// Closed-form T-functionals of the one-dimensional built-ins.
pub fn analytic_t_functional(name: &str, params: &[f64], sigma: f64) -> Result<AnalyticValue> {
    // validates parameters
    builtin(name, params)?;
    let out_of_range = |range: &str| {
        Err(Error::OutOfValidityRange {
            sigma,
            range: range.into(),
        })
    };
    if !(0.0..1.0).contains(&sigma) {
        return out_of_range("[0, 1)");
    }
    match name {
        "uniform" => {
            // flat density: any subset of mass 1-sigma is optimal
            let w = params[1] - params[0];
            Ok(AnalyticValue::Exact {
                value: (1.0 - sigma).powi(2) * w,
            })
        }
        "gaussian" if sigma == 0.0 => Ok(AnalyticValue::Exact {
            value: (8.0 * PI).sqrt() * params[1],
        }),
        "beta" if sigma == 0.0 => {
            let (a, b) = (params[0], params[1]);
            Ok(AnalyticValue::Exact {
                value: beta((a + 1.0) / 2.0, (b + 1.0) / 2.0).powi(2) / beta(a, b),
            })
        }
        "gaussian" | "beta" => out_of_range("{0}"),
        "cauchy" => {
            if sigma <= 0.0 || sigma > 0.5 {
                return out_of_range("(0, 0.5]");
            }
            let k = 4.0 * params[0] / PI;
            Ok(AnalyticValue::Bracket {
                lower: k * (1.0 / sigma).ln().powi(2),
                upper: k * (2.0 * E / (PI * sigma)).ln().powi(2),
            })
        }
        "pareto" => {
            if sigma <= 0.0 {
                return out_of_range("(0, 1)");
            }
            let (a, x0) = (params[0], params[1]);
            let k = 4.0 * a * x0 / (1.0 - a).powi(2);
            Ok(AnalyticValue::Bracket {
                lower: k * (sigma.powf(-(1.0 - a) / (2.0 * a)) - 1.0).powi(2),
                upper: k * sigma.powf(-(1.0 - a) / a),
            })
        }
        _ => out_of_range("none (no closed form)"),
    }
}

/// Bracket for the symmetric Beta(t, t) T-functional at sigma = 0.
pub fn beta_symmetric_bracket(t: f64) -> (f64, f64) {
    (PI * PI / (4.0 * E.powi(4)) / t.sqrt(), E.powi(4) / 4.0 / t.sqrt())
}

/// Multinomial perturbation families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    Dense,
    Sparse,
    Prop,
    Prop23,
}

impl std::str::FromStr for PerturbationKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dense" => Ok(Self::Dense),
            "sparse" => Ok(Self::Sparse),
            "prop" => Ok(Self::Prop),
            "prop23" => Ok(Self::Prop23),
            _ => Err(Error::Invalid(format!("unknown perturbation '{s}'"))),
        }
    }
}

/// Perturbs `p0` to an alternative at l1 distance exactly `eps`.
///
/// Dense and proportional families pair coordinates (consecutive in the
/// original order) and move mass from one member of each pair to the other
/// with a Rademacher orientation; per-pair magnitudes are clipped at the
/// smaller entry and the common scale is water-filled to hit `eps`. The
/// sparse family moves eps/2 between the two largest entries; when the
/// losing entry cannot supply it, the rest is taken proportionally from the
/// remaining entries.
pub fn multinomial_perturbation(p0: &ProbVector, eps: f64, kind: PerturbationKind, seed: u64) -> Result<ProbVector> {
    if !(eps >= 0.0) {
        return Err(Error::InfeasibleEps { eps, max: f64::NAN });
    }
    if eps == 0.0 {
        return Ok(p0.clone());
    }
    let mut rng = rng_from_seed(seed);
    let p = p0.probs();
    let d = p.len();
    let mut q = p.to_vec();
    match kind {
        PerturbationKind::Sparse => {
            if d < 2 {
                return Err(Error::InfeasibleEps { eps, max: 0.0 });
            }
            let (i, j) = (p0.sort_perm()[0], p0.sort_perm()[1]);
            let (up, down) = if rng.random::<bool>() { (i, j) } else { (j, i) };
            let half = eps / 2.0;
            let max = 2.0 * (1.0 - p[up]);
            if half > 1.0 - p[up] + 1e-15 {
                return Err(Error::InfeasibleEps { eps, max });
            }
            q[up] += half;
            let direct = half.min(p[down]);
            q[down] -= direct;
            let short = half - direct;
            if short > 0.0 {
                let rest: f64 = (0..d).filter(|&k| k != up && k != down).map(|k| p[k]).sum();
                if rest < short * (1.0 - 1e-12) || rest <= 0.0 {
                    return Err(Error::InfeasibleEps { eps, max });
                }
                let f = 1.0 - (short / rest).min(1.0);
                for k in (0..d).filter(|&k| k != up && k != down) {
                    q[k] = p[k] * f;
                }
            }
        }
        _ => {
            let pairs = d / 2;
            if pairs == 0 {
                return Err(Error::InfeasibleEps { eps, max: 0.0 });
            }
            let weight = |k: usize| match kind {
                PerturbationKind::Prop => p[k],
                PerturbationKind::Prop23 => p[k].powf(2.0 / 3.0),
                _ => 1.0,
            };
            // per pair: shape weight w and capacity min(p_a, p_b)
            let mut w = Vec::with_capacity(pairs);
            let mut cap = Vec::with_capacity(pairs);
            for k in 0..pairs {
                let (a, b) = (2 * k, 2 * k + 1);
                w.push(0.5 * (weight(a) + weight(b)));
                cap.push(p[a].min(p[b]));
            }
            let total_cap: f64 = cap.iter().sum::<f64>() * 2.0;
            if eps > total_cap * (1.0 + 1e-12) {
                return Err(Error::InfeasibleEps { eps, max: total_cap });
            }
            let moved = |s: f64| -> f64 { w.iter().zip(&cap).map(|(wk, ck)| 2.0 * (s * wk).min(*ck)).sum() };
            let mut hi = 1.0;
            while moved(hi) < eps && hi < 1e300 {
                hi *= 2.0;
            }
            let s = crate::quad::bisect(|s| moved(s) - eps, 0.0, hi, 0.0, 300);
            for k in 0..pairs {
                let delta = (s * w[k]).min(cap[k]);
                let (a, b) = if rng.random::<bool>() {
                    (2 * k, 2 * k + 1)
                } else {
                    (2 * k + 1, 2 * k)
                };
                q[a] += delta;
                q[b] -= delta;
            }
        }
    }
    for v in &mut q {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    make_prob_vector(&q)
}

/// Bump shape on [-1/2, 1/2]^d: 2^(d/2) prod sin(2 pi u_i).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BumpProfile {
    pub dim: usize,
    /// Fraction of the Lipschitz budget reserved for the null.
    pub c_int: f64,
}

impl BumpProfile {
    pub fn sine(dim: usize) -> Self {
        Self { dim, c_int: 0.5 }
    }

    pub fn psi(&self, u: &[f64]) -> f64 {
        if u.iter().any(|&v| !(-0.5..=0.5).contains(&v)) {
            return 0.0;
        }
        let s: f64 = u.iter().map(|&v| (2.0 * PI * v).sin()).product();
        2f64.powf(self.dim as f64 / 2.0) * s
    }

    pub fn sup_norm(&self) -> f64 {
        2f64.powf(self.dim as f64 / 2.0)
    }

    pub fn grad_sup_norm(&self) -> f64 {
        2f64.powf(self.dim as f64 / 2.0) * 2.0 * PI
    }

    pub fn l1_norm(&self) -> f64 {
        2f64.powf(self.dim as f64 / 2.0) * (2.0 / PI).powi(self.dim as i32)
    }

    pub fn omega1(&self) -> f64 {
        self.sup_norm().max(8.0 * self.grad_sup_norm() / (1.0 - self.c_int))
    }

    pub fn omega2(&self) -> f64 {
        self.l1_norm()
    }

    /// Integral of psi over the box [lo, hi] (unit coordinates).
    pub fn box_integral(&self, lo: &[f64], hi: &[f64]) -> f64 {
        let mut s = 2f64.powf(self.dim as f64 / 2.0);
        for (a, b) in lo.iter().zip(hi) {
            let a = a.clamp(-0.5, 0.5);
            let b = b.clamp(-0.5, 0.5);
            if b <= a {
                return 0.0;
            }
            s *= ((2.0 * PI * a).cos() - (2.0 * PI * b).cos()) / (2.0 * PI);
        }
        s
    }
}

/// A density perturbed by one signed bump per partition cell.
#[derive(Debug, Clone)]
pub struct BumpDensity {
    base: DensityRef,
    cells: Vec<Cube>,
    /// Signed amplitude rho_j * eta_j per cell.
    weights: Vec<f64>,
    profile: BumpProfile,
    locator: CellLocator,
    lip: f64,
    accept_bound: f64,
    l1: f64,
}

impl BumpDensity {
    fn build(base: DensityRef, cells: Vec<Cube>, weights: Vec<f64>, profile: BumpProfile) -> Result<Self> {
        let d = base.dim() as i32;
        let half_d = d as f64 / 2.0;
        let mut lip_bump: f64 = 0.0;
        let mut accept: f64 = 1.0;
        let mut l1 = 0.0;
        for (c, &w) in cells.iter().zip(&weights) {
            let h = c.side;
            lip_bump = lip_bump.max(w.abs() * h.powf(-half_d - 1.0) * profile.grad_sup_norm());
            let amp = w.abs() * h.powf(-half_d) * profile.sup_norm();
            l1 += w.abs() * h.powf(half_d) * profile.l1_norm();
            if amp > 0.0 {
                let inf = cell_inf(base.as_ref(), c);
                if inf < amp * (1.0 - 1e-12) {
                    return Err(Error::Invalid(format!(
                        "bump amplitude {amp} exceeds the null's minimum {inf} on a cell"
                    )));
                }
                accept = accept.max(1.0 + amp / inf);
            }
        }
        let locator = CellLocator::new(&cells);
        Ok(Self {
            lip: base.lipschitz_const() + lip_bump,
            base,
            cells,
            weights,
            profile,
            locator,
            accept_bound: accept,
            l1,
        })
    }

    /// l1 distance to the base density (bumps have disjoint supports).
    pub fn l1_to_base(&self) -> f64 {
        self.l1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cells(&self) -> &[Cube] {
        &self.cells
    }

    fn bump_at(&self, x: &[f64]) -> f64 {
        match self.locator.locate(&self.cells, x) {
            Some(j) => {
                let c = &self.cells[j];
                let h = c.side;
                let u: Vec<f64> = x.iter().zip(&c.lower).map(|(v, lo)| (v - lo) / h - 0.5).collect();
                self.weights[j] * h.powf(-(self.cells[j].dim() as f64) / 2.0) * self.profile.psi(&u)
            }
            None => 0.0,
        }
    }
}

fn cell_inf(f: &dyn NullDensity, c: &Cube) -> f64 {
    crate::partition::cell_extremes(f, c).0
}

impl NullDensity for BumpDensity {
    fn name(&self) -> String {
        format!("bump({})", self.base.name())
    }
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn evaluate(&self, x: &[f64]) -> f64 {
        (self.base.evaluate(x) + self.bump_at(x)).max(0.0)
    }
    fn lipschitz_const(&self) -> f64 {
        self.lip
    }
    fn center(&self) -> Vec<f64> {
        self.base.center()
    }
    fn max_density(&self) -> f64 {
        self.base.max_density() * self.accept_bound
    }
    fn sample(&self, n: usize, rng: &mut dyn RngCore) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        while out.len() < n * d {
            let need = (n * d - out.len()) / d;
            let batch = self
                .base
                .sample((need as f64 * self.accept_bound).ceil() as usize + 4, rng);
            for x in batch.chunks(d) {
                if out.len() >= n * d {
                    break;
                }
                let p0 = self.base.evaluate(x);
                if p0 <= 0.0 {
                    continue;
                }
                let ratio = (p0 + self.bump_at(x)) / (self.accept_bound * p0);
                if rng.random::<f64>() < ratio {
                    out.extend_from_slice(x);
                }
            }
        }
        out
    }
    fn cell_prob(&self, cube: &Cube) -> f64 {
        let mut p = self.base.cell_prob(cube);
        let d = self.dim();
        for (j, c) in self.cells.iter().enumerate() {
            if self.weights[j] == 0.0 || !c.overlaps(cube) {
                continue;
            }
            let h = c.side;
            let lo: Vec<f64> = (0..d).map(|k| (cube.lower[k] - c.lower[k]) / h - 0.5).collect();
            let hi: Vec<f64> = (0..d)
                .map(|k| (cube.lower[k] + cube.side - c.lower[k]) / h - 0.5)
                .collect();
            // psi_j integrates h^{-d/2} psi(u) h^d du
            p += self.weights[j] * h.powf(d as f64 / 2.0) * self.profile.box_integral(&lo, &hi);
        }
        p.max(0.0)
    }
    fn cdf(&self, x: f64) -> Option<f64> {
        let base = self.base.cdf(x)?;
        let mut s = base;
        for (j, c) in self.cells.iter().enumerate() {
            let h = c.side;
            let hi = ((x - c.lower[0]) / h - 0.5).min(0.5);
            if hi > -0.5 {
                s += self.weights[j] * h.sqrt() * self.profile.box_integral(&[-0.5], &[hi]);
            }
        }
        Some(s.clamp(0.0, 1.0))
    }
    fn support_box(&self) -> Option<Cube> {
        self.base.support_box()
    }
    fn breakpoints(&self) -> Vec<f64> {
        let mut b = self.base.breakpoints();
        if self.dim() == 1 {
            b.extend(self.cells.iter().flat_map(|c| [c.lower[0], c.lower[0] + c.side]));
        }
        b
    }
}

/// Lower-bound style bump perturbation: rho_j = Ln h_j^(1+d/2) / omega1 on
/// every cell (h_j the cell side), random signs, scaled down to `eps` when
/// the construction overshoots.
pub fn bump_perturbation(
    f: &DensityRef,
    part: &Partition,
    eps: f64,
    ln: f64,
    profile: BumpProfile,
    seed: u64,
) -> Result<BumpDensity> {
    if f.lipschitz_const() > profile.c_int * ln * (1.0 + 1e-12) {
        return Err(Error::Invalid(format!(
            "null Lipschitz constant {} exceeds c_int * Ln = {}",
            f.lipschitz_const(),
            profile.c_int * ln
        )));
    }
    let d = f.dim() as f64;
    let rho: Vec<f64> = part
        .cells
        .iter()
        .map(|c| ln * c.side.powf(1.0 + d / 2.0) / profile.omega1())
        .collect();
    let achievable: f64 = part
        .cells
        .iter()
        .zip(&rho)
        .map(|(c, r)| r * c.side.powf(d / 2.0) * profile.l1_norm())
        .sum();
    if achievable < eps {
        return Err(Error::SeparationShortfall {
            requested: eps,
            achievable,
        });
    }
    let scale = eps / achievable;
    let weights = signed(&rho, scale, seed);
    BumpDensity::build(f.clone(), part.cells.clone(), weights, profile)
}

/// Unsigned bump weights for the simulation alternative: the lower-bound
/// profile s h_j^(1+d/2), clipped per cell so the density stays
/// nonnegative, with s water-filled to reach l1 distance `eps`. Cells on
/// which the null touches zero carry no bump.
pub fn bump_magnitudes(f: &DensityRef, cells: &[Cube], eps: f64, profile: BumpProfile) -> Result<Vec<f64>> {
    if !(eps >= 0.0) {
        return Err(Error::InfeasibleEps { eps, max: f64::NAN });
    }
    let d = f.dim() as f64;
    let shape: Vec<f64> = cells.iter().map(|c| c.side.powf(1.0 + d / 2.0)).collect();
    // weight cap from amplitude <= inf of the null on the cell
    let cap: Vec<f64> = cells
        .iter()
        .map(|c| cell_inf(f.as_ref(), c).max(0.0) * c.side.powf(d / 2.0) / profile.sup_norm())
        .collect();
    let l1_of = |w: f64, c: &Cube| w * c.side.powf(d / 2.0) * profile.l1_norm();
    let moved = |s: f64| -> f64 {
        cells
            .iter()
            .zip(shape.iter().zip(&cap))
            .map(|(c, (r, m))| l1_of((s * r).min(*m), c))
            .sum()
    };
    let max: f64 = cells.iter().zip(&cap).map(|(c, m)| l1_of(*m, c)).sum();
    if eps > max * (1.0 + 1e-12) {
        return Err(Error::InfeasibleEps { eps, max });
    }
    if eps == 0.0 {
        return Ok(vec![0.0; cells.len()]);
    }
    let mut hi = 1.0;
    while moved(hi) < eps && hi < 1e300 {
        hi *= 2.0;
    }
    let s = crate::quad::bisect(|s| moved(s) - eps, 0.0, hi, 0.0, 300);
    Ok(shape.iter().zip(&cap).map(|(r, m)| (s * r).min(*m)).collect())
}

/// Attaches random signs to precomputed magnitudes.
pub fn signed_bumps(
    f: &DensityRef,
    cells: &[Cube],
    magnitudes: &[f64],
    profile: BumpProfile,
    seed: u64,
) -> Result<BumpDensity> {
    if magnitudes.len() != cells.len() {
        return Err(Error::DimensionMismatch {
            left: magnitudes.len(),
            right: cells.len(),
        });
    }
    BumpDensity::build(f.clone(), cells.to_vec(), signed(magnitudes, 1.0, seed), profile)
}

/// Simulation alternative at l1 distance exactly `eps` (see
/// [`bump_magnitudes`]) with random signs. The result may exceed the
/// smoothness budget; only nonnegativity is enforced.
pub fn bump_alternative(
    f: &DensityRef,
    cells: &[Cube],
    eps: f64,
    profile: BumpProfile,
    seed: u64,
) -> Result<BumpDensity> {
    let m = bump_magnitudes(f, cells, eps, profile)?;
    signed_bumps(f, cells, &m, profile, seed)
}

fn signed(rho: &[f64], scale: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    rho.iter()
        .map(|r| if rng.random::<bool>() { r * scale } else { -r * scale })
        .collect()
}

/// Draws `n` points from `f` with a seed.
pub fn sample_seeded(f: &dyn NullDensity, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    f.sample(n, &mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probs::l1_distance;
    use proptest::prelude::*;
    use rand::Rng;

    fn all_builtins() -> Vec<DensityRef> {
        vec![
            builtin("uniform", &[0.0, 1.0]).unwrap(),
            builtin("gaussian", &[0.0, 1.0]).unwrap(),
            builtin("beta", &[2.0, 3.0]).unwrap(),
            builtin("spiky", &[10.0]).unwrap(),
            builtin("cauchy", &[1.0]).unwrap(),
            builtin("pareto", &[0.5, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn evaluations() {
        assert_eq!(builtin("uniform", &[0.0, 1.0]).unwrap().evaluate(&[0.5]), 1.0);
        let s = builtin("spiky", &[100.0]).unwrap();
        assert!((s.evaluate(&[0.1]) - 10.0).abs() < 1e-12);
        assert_eq!(s.evaluate(&[0.0]), 0.0);
        let c = builtin("cauchy", &[1.0]).unwrap();
        assert!((c.evaluate(&[0.0]) - 1.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn gaussian_lipschitz_constant() {
        let g = builtin("gaussian", &[0.0, 2.0]).unwrap();
        let expect = 1.0 / (4.0 * (2.0 * PI * E).sqrt());
        assert!((g.lipschitz_const() - expect).abs() < 1e-15);
    }

    #[test]
    fn bad_params() {
        assert!(builtin("beta", &[0.5, 2.0]).is_err());
        assert!(builtin("beta", &[1.5, 2.0]).is_err());
        assert!(builtin("pareto", &[1.5, 1.0]).is_err());
        assert!(builtin("gaussian", &[0.0, -1.0]).is_err());
        assert!(parse_density("weird:1").is_err());
        assert!(parse_density("gaussian:0").is_err());
        assert!(parse_density("pareto:0.5,1").is_ok());
        assert_eq!(parse_density("uniform:0,1@2").unwrap().dim(), 2);
    }

    #[test]
    fn densities_integrate_to_one() {
        for f in all_builtins() {
            let lo = f.quantile(1e-9).unwrap();
            let hi = f.quantile(1.0 - 1e-9).unwrap();
            let v = crate::quad::integrate_pieces(|x| f.evaluate(&[x]), lo, hi, &f.breakpoints(), 1e-11).unwrap();
            assert!((v - 1.0).abs() < 1e-6, "{}: {v}", f.name());
        }
    }

    #[test]
    fn cdf_quantile_inverse() {
        for f in all_builtins() {
            for u in [0.01, 0.3, 0.5, 0.8, 0.99] {
                let x = f.quantile(u).unwrap();
                assert!((f.cdf(x).unwrap() - u).abs() < 1e-9, "{} at {u}", f.name());
            }
        }
    }

    #[test]
    fn empirical_cdf_matches() {
        for f in all_builtins() {
            let xs = sample_seeded(f.as_ref(), 20_000, 5);
            for u in [0.25, 0.5, 0.75] {
                let q = f.quantile(u).unwrap();
                let frac = xs.iter().filter(|&&x| x <= q).count() as f64 / xs.len() as f64;
                assert!(
                    (frac - u).abs() < 4.0 * (u * (1.0 - u) / 2e4).sqrt(),
                    "{} {u} {frac}",
                    f.name()
                );
            }
        }
    }

    #[test]
    fn level_sets_have_right_height() {
        for f in all_builtins() {
            let t = 0.3 * f.max_density();
            for (a, b) in f.level_intervals(t).unwrap() {
                if f.name().starts_with("uniform") {
                    continue;
                }
                for x in [a, b] {
                    let v = f.evaluate(&[x]);
                    if v > 0.0 && (x - f.breakpoints()[0]).abs() > 1e-12 {
                        assert!((v - t).abs() < 1e-8 * f.max_density(), "{} {x} {v} {t}", f.name());
                    }
                }
            }
        }
    }

    #[test]
    fn lipschitz_on_probe_pairs() {
        let mut rng = rng_from_seed(1);
        for f in all_builtins() {
            let l = f.lipschitz_const();
            let lo = f.quantile(0.001).unwrap();
            let hi = f.quantile(0.999).unwrap();
            for _ in 0..2000 {
                let x = lo + (hi - lo) * rng.random::<f64>();
                let y = x + 1e-3 * (hi - lo) * (rng.random::<f64>() - 0.5);
                let (a, b) = (x.min(y), x.max(y));
                let bps = f.breakpoints();
                // skip pairs straddling a jump at the support edge
                if f.name().starts_with("pareto") && a < bps[0] {
                    continue;
                }
                let slope = (f.evaluate(&[a]) - f.evaluate(&[b])).abs() / (b - a);
                assert!(slope <= l * (1.0 + 1e-6) + 1e-12, "{}: {slope} > {l}", f.name());
            }
        }
    }

    #[test]
    fn analytic_examples() {
        let g = analytic_t_functional("gaussian", &[0.0, 2.0], 0.0).unwrap();
        assert!(g.contains((8.0 * PI).sqrt() * 2.0, 1e-15));
        assert!(g.contains(10.0265, 1e-5));
        match analytic_t_functional("cauchy", &[1.0], 0.1).unwrap() {
            AnalyticValue::Bracket { lower, upper } => {
                assert!((lower - 4.0 / PI * 10f64.ln().powi(2)).abs() < 1e-12);
                assert!((lower - 6.749).abs() < 5e-3, "{lower}");
                let ln = (20.0 * E / PI).ln();
                assert!((upper - 4.0 / PI * ln * ln).abs() < 1e-12);
                assert!((upper - 10.349).abs() < 1e-3, "{upper}");
            }
            _ => panic!(),
        }
        match analytic_t_functional("pareto", &[0.5, 1.0], 0.04).unwrap() {
            AnalyticValue::Bracket { lower, upper } => {
                assert!((lower - 128.0).abs() < 1e-9);
                assert!((upper - 200.0).abs() < 1e-9);
            }
            _ => panic!(),
        }
        assert!(analytic_t_functional("beta", &[1.0, 1.0], 0.0)
            .unwrap()
            .contains(1.0, 1e-12));
        assert!(analytic_t_functional("cauchy", &[1.0], 0.6).is_err());
    }

    #[test]
    fn symmetric_beta_within_bracket() {
        for t in [1.0, 2.0, 5.0, 20.0] {
            let (lo, hi) = beta_symmetric_bracket(t);
            let v = match analytic_t_functional("beta", &[t, t], 0.0).unwrap() {
                AnalyticValue::Exact { value } => value,
                _ => panic!(),
            };
            assert!(lo <= v && v <= hi);
        }
    }

    #[test]
    fn sparse_example() {
        let p0 = make_prob_vector(&[0.5, 0.3, 0.2]).unwrap();
        let mut seen = std::collections::HashSet::new();
        for seed in 0..20 {
            let q = multinomial_perturbation(&p0, 0.2, PerturbationKind::Sparse, seed).unwrap();
            let r: Vec<i64> = q.probs().iter().map(|v| (v * 1e9).round() as i64).collect();
            seen.insert(r);
        }
        let a: Vec<i64> = vec![600_000_000, 200_000_000, 200_000_000];
        let b: Vec<i64> = vec![400_000_000, 400_000_000, 200_000_000];
        assert!(seen.contains(&a) && seen.contains(&b) && seen.len() == 2);
    }

    #[test]
    fn eps_zero_is_identity() {
        let p0 = ProbVector::power_law(9).unwrap();
        for k in [
            PerturbationKind::Dense,
            PerturbationKind::Sparse,
            PerturbationKind::Prop,
        ] {
            assert_eq!(multinomial_perturbation(&p0, 0.0, k, 1).unwrap(), p0);
        }
    }

    #[test]
    fn infeasible_eps() {
        let p0 = make_prob_vector(&[0.5, 0.5]).unwrap();
        assert!(matches!(
            multinomial_perturbation(&p0, 1.5, PerturbationKind::Dense, 1),
            Err(Error::InfeasibleEps { .. })
        ));
    }

    #[test]
    fn bump_profile_moments() {
        for d in 1..=2 {
            let p = BumpProfile::sine(d);
            let full = p.box_integral(&vec![-0.5; d], &vec![0.5; d]);
            assert!(full.abs() < 1e-12);
            // midpoint grid check of the square integral and l1 norm
            let m: usize = 400;
            let mut sq = 0.0;
            let mut ab = 0.0;
            let mut u = vec![0.0; d];
            for idx in 0..m.pow(d as u32) {
                let mut r = idx;
                for k in 0..d {
                    u[k] = -0.5 + ((r % m) as f64 + 0.5) / m as f64;
                    r /= m;
                }
                let v = p.psi(&u);
                sq += v * v;
                ab += v.abs();
            }
            let vol = (m as f64).powi(d as i32);
            assert!((sq / vol - 1.0).abs() < 1e-6);
            assert!((ab / vol - p.l1_norm()).abs() < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn perturbation_hits_eps(
            w in prop::collection::vec(0.05f64..5.0, 3..40),
            frac in 0.0f64..0.9,
            kind in prop::sample::select(vec![
                PerturbationKind::Dense, PerturbationKind::Sparse,
                PerturbationKind::Prop, PerturbationKind::Prop23]),
            seed in 0u64..1000,
        ) {
            let p0 = make_prob_vector(&w).unwrap();
            // stay inside every family's capacity
            let pairs_cap: f64 = (0..p0.dim() / 2).map(|k| p0.probs()[2*k].min(p0.probs()[2*k+1])).sum::<f64>() * 2.0;
            let eps = frac * pairs_cap.min(1.0);
            match multinomial_perturbation(&p0, eps, kind, seed) {
                Ok(q) => prop_assert!((l1_distance(&p0, &q).unwrap() - eps).abs() < 1e-9),
                Err(Error::InfeasibleEps { .. }) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
