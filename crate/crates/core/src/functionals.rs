//! V- and T-functionals, the mu fixed point, and critical-radius solvers.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::density::NullDensity;
use crate::error::{Error, Result};
use crate::partition::effective_support;
use crate::probs::{bulk_set, ProbVector};
use crate::quad::integrate_pieces;

/// gamma = 2 / (3 + d).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaExponent {
    pub gamma: f64,
    pub dim: usize,
}

impl GammaExponent {
    pub fn for_dim(dim: usize) -> Self {
        Self {
            gamma: 2.0 / (3.0 + dim as f64),
            dim,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RadiusEquation {
    MultinomialLower,
    MultinomialUpper,
    LipschitzLower,
    LipschitzUpper,
    AdaptiveSigma,
    AdaptiveLipschitz,
}

impl RadiusEquation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::MultinomialLower => "multinomial_lower",
            Self::MultinomialUpper => "multinomial_upper",
            Self::LipschitzLower => "lipschitz_lower",
            Self::LipschitzUpper => "lipschitz_upper",
            Self::AdaptiveSigma => "adaptive_sigma",
            Self::AdaptiveLipschitz => "adaptive_lipschitz",
        }
    }

    pub fn is_multinomial(&self) -> bool {
        matches!(
            self,
            Self::MultinomialLower | Self::MultinomialUpper | Self::AdaptiveSigma
        )
    }
}

impl fmt::Display for RadiusEquation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RadiusEquation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "ln" | "multinomial_lower" => Self::MultinomialLower,
            "un" | "multinomial_upper" => Self::MultinomialUpper,
            "vn" | "lipschitz_lower" => Self::LipschitzLower,
            "wn" | "lipschitz_upper" => Self::LipschitzUpper,
            "sigma" | "adaptive_sigma" => Self::AdaptiveSigma,
            "adaptive" | "adaptive_lipschitz" => Self::AdaptiveLipschitz,
            _ => return Err(Error::Invalid(format!("unknown radius equation '{s}'"))),
        })
    }
}

/// Solution of a critical-radius equation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRadius {
    pub value: f64,
    pub equation: RadiusEquation,
    /// LHS minus RHS at the solution; zero when the solution sits on a
    /// jump of the right-hand side.
    pub residual: f64,
    /// Set when the equation has no crossing in (0, 1] and 1 is returned.
    pub clamped: bool,
}

const BISECT_ITERS: usize = 200;
const EPS_TOL: f64 = 1e-10;

/// (sum over the sigma-bulk of p^(2/3))^(3/2).
pub fn v_functional(p0: &ProbVector, sigma: f64) -> f64 {
    let p = p0.probs();
    let s: f64 = bulk_set(p0, sigma).iter().map(|i| p[i].powf(2.0 / 3.0)).sum();
    s.powf(1.5)
}

/// Solves eps = rhs(eps) for a nonincreasing rhs on (0, 1].
fn solve_fixed_point(rhs: impl Fn(f64) -> f64, equation: RadiusEquation) -> Result<CriticalRadius> {
    let g = |e: f64| e - rhs(e);
    if g(1.0) < 0.0 {
        return Ok(CriticalRadius {
            value: 1.0,
            equation,
            residual: g(1.0),
            clamped: true,
        });
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= EPS_TOL * 1e-6 * hi {
            break;
        }
    }
    let value = hi;
    let r_hi = g(hi);
    // a crossing on a downward jump of rhs leaves eps between the one-sided
    // limits; the generalized residual there is zero
    let on_jump = lo > 0.0 && g(lo) < 0.0 && r_hi.abs() > 1e-8 * value;
    let residual = if on_jump { 0.0 } else { r_hi };
    Ok(CriticalRadius {
        value,
        equation,
        residual,
        clamped: false,
    })
}

/// Multinomial critical radius: eps = max(1/n, sqrt(V_{s eps}(p0)/n)) with
/// s = 1 for the lower radius and 1/16 for the upper one.
pub fn multinomial_critical_radius(p0: &ProbVector, n: f64, which: RadiusEquation) -> Result<CriticalRadius> {
    if !(n >= 1.0) {
        return Err(Error::BadParams(format!("n must be at least 1, got {n}")));
    }
    let scale = match which {
        RadiusEquation::MultinomialLower => 1.0,
        RadiusEquation::MultinomialUpper | RadiusEquation::AdaptiveSigma => 1.0 / 16.0,
        other => return Err(Error::Invalid(format!("{other} is not a multinomial equation"))),
    };
    solve_fixed_point(|e| (1.0 / n).max((v_functional(p0, scale * e) / n).sqrt()), which)
}

/// sigma~ = max(1/n, sqrt(V_{sigma~/16}(p0)/n)).
pub fn adaptive_sigma(p0: &ProbVector, n: f64) -> Result<f64> {
    Ok(multinomial_critical_radius(p0, n, RadiusEquation::AdaptiveSigma)?.value)
}

/// Upper level sets {p >= t} of a density: their mass and the integral of
/// p^gamma over them.
pub enum LevelSets<'a> {
    /// One-dimensional density with closed-form level intervals.
    Exact { f: &'a dyn NullDensity, gamma: f64 },
    /// Midpoint-grid tabulation, values sorted in decreasing order.
    Grid {
        values: Vec<f64>,
        cell_vol: f64,
        cum_mass: Vec<f64>,
        cum_pow: Vec<f64>,
        gamma: f64,
    },
}

const QUAD_TOL: f64 = 1e-11;

impl<'a> LevelSets<'a> {
    pub fn new(f: &'a dyn NullDensity, gamma: f64) -> Result<Self> {
        if f.dim() == 1 && f.level_intervals(f.max_density()).is_some() && f.cdf(0.0).is_some() {
            return Ok(Self::Exact { f, gamma });
        }
        Self::grid(f, gamma)
    }

    /// Tabulates the density on a midpoint grid of its (near-total) support.
    pub fn grid(f: &dyn NullDensity, gamma: f64) -> Result<Self> {
        let d = f.dim();
        let cube = match f.support_box() {
            Some(c) => c,
            None => effective_support(f, 1e-9)?,
        };
        let m: usize = match d {
            1 => 200_000,
            2 => 1000,
            3 => 100,
            _ => 30,
        };
        let h = cube.side / m as f64;
        let total = m.pow(d as u32);
        let mut values = Vec::with_capacity(total);
        let mut x = vec![0.0; d];
        for idx in 0..total {
            let mut r = idx;
            for k in 0..d {
                x[k] = cube.lower[k] + ((r % m) as f64 + 0.5) * h;
                r /= m;
            }
            values.push(f.evaluate(&x));
        }
        values.sort_by(|a, b| b.total_cmp(a));
        let cell_vol = h.powi(d as i32);
        let mut cum_mass = Vec::with_capacity(total + 1);
        let mut cum_pow = Vec::with_capacity(total + 1);
        let (mut a, mut b) = (0.0, 0.0);
        cum_mass.push(0.0);
        cum_pow.push(0.0);
        for &v in &values {
            a += v * cell_vol;
            b += v.powf(gamma) * cell_vol;
            cum_mass.push(a);
            cum_pow.push(b);
        }
        Ok(Self::Grid {
            values,
            cell_vol,
            cum_mass,
            cum_pow,
            gamma,
        })
    }

    fn gamma(&self) -> f64 {
        match self {
            Self::Exact { gamma, .. } | Self::Grid { gamma, .. } => *gamma,
        }
    }

    pub fn max_density(&self) -> f64 {
        match self {
            Self::Exact { f, .. } => f.max_density(),
            Self::Grid { values, .. } => values.first().copied().unwrap_or(0.0),
        }
    }

    /// P(p >= t).
    pub fn mass_above(&self, t: f64) -> f64 {
        match self {
            Self::Exact { f, .. } => f
                .level_intervals(t)
                .unwrap_or_default()
                .iter()
                .map(|&(a, b)| f.cdf(b).unwrap() - f.cdf(a).unwrap())
                .sum(),
            Self::Grid { values, cum_mass, .. } => cum_mass[values.partition_point(|&v| v >= t)],
        }
    }

    /// Integral of p^gamma over {p >= t}.
    pub fn power_integral_above(&self, t: f64) -> Result<f64> {
        match self {
            Self::Exact { f, gamma } => {
                let bps = f.breakpoints();
                let mut s = 0.0;
                for (a, b) in f.level_intervals(t).unwrap_or_default() {
                    s += integrate_pieces(|x| f.evaluate(&[x]).powf(*gamma), a, b, &bps, QUAD_TOL)?;
                }
                Ok(s)
            }
            Self::Grid { values, cum_pow, .. } => Ok(cum_pow[values.partition_point(|&v| v >= t)]),
        }
    }

    /// Brackets the largest t with P(p >= t) >= target by bisection on log t.
    fn level_for_mass(&self, target: f64) -> (f64, f64) {
        let top = self.max_density();
        let mut lo = top.ln() - 690.0;
        let mut hi = top.ln() + 1e-12;
        if self.mass_above(lo.exp()) < target {
            return (0.0, lo.exp());
        }
        for _ in 0..BISECT_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.mass_above(mid.exp()) >= target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo.exp(), hi.exp())
    }

    /// Minimum of the integral of p^gamma over sets of mass 1 - sigma (an
    /// upper level set plus part of the boundary plateau).
    pub fn truncated_power_integral(&self, sigma: f64) -> Result<f64> {
        if sigma >= 1.0 {
            return Ok(0.0);
        }
        let target = 1.0 - sigma;
        let gamma = self.gamma();
        match self {
            Self::Grid {
                values,
                cell_vol,
                cum_mass,
                cum_pow,
                ..
            } => {
                let k = cum_mass.partition_point(|&c| c < target);
                if k == 0 {
                    return Ok(0.0);
                }
                if k > values.len() {
                    return Ok(*cum_pow.last().unwrap());
                }
                // whole cells 0..k-1, then the fraction of cell k-1 needed
                let v = values[k - 1];
                let full_mass = cum_mass[k - 1];
                let frac = ((target - full_mass) / (v * cell_vol)).clamp(0.0, 1.0);
                Ok(cum_pow[k - 1] + frac * v.powf(gamma) * cell_vol)
            }
            Self::Exact { .. } => {
                let (_, t_hi) = self.level_for_mass(target);
                let m_hi = self.mass_above(t_hi);
                let i_hi = self.power_integral_above(t_hi)?;
                let plateau = (target - m_hi).max(0.0);
                Ok(i_hi
                    + if plateau > 0.0 {
                        plateau * t_hi.powf(gamma - 1.0)
                    } else {
                        0.0
                    })
            }
        }
    }
}

/// Truncated T-functional (integral of p^gamma over the best set of mass
/// 1 - sigma)^(1/gamma).
pub fn t_functional(f: &dyn NullDensity, sigma: f64, gamma: GammaExponent) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::BadSigma(sigma));
    }
    let ls = LevelSets::new(f, gamma.gamma)?;
    t_functional_with(&ls, sigma)
}

pub fn t_functional_with(ls: &LevelSets<'_>, sigma: f64) -> Result<f64> {
    let g = ls.gamma();
    Ok(ls.truncated_power_integral(sigma)?.powf(1.0 / g))
}

/// mu(x): the mu > 0 solving eps = integral of min(p/x, eps p^gamma / mu).
/// Returns infinity for x >= 1/eps.
pub fn mu_function(f: &dyn NullDensity, eps: f64, x: f64) -> Result<f64> {
    let ls = LevelSets::new(f, GammaExponent::for_dim(f.dim()).gamma)?;
    mu_function_with(&ls, eps, x)
}

pub fn mu_function_with(ls: &LevelSets<'_>, eps: f64, x: f64) -> Result<f64> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::BadEps(eps));
    }
    if x < 0.0 {
        return Err(Error::BadParams(format!("x must be nonnegative, got {x}")));
    }
    if x * eps >= 1.0 {
        return Ok(f64::INFINITY);
    }
    let g = ls.gamma();
    if x == 0.0 {
        return ls.power_integral_above(0.0);
    }
    // rhs(mu) = (1/x) P(p < s) + (eps/mu) I(s), s = (eps x / mu)^(1/(1-g))
    let rhs = |log_mu: f64| -> Result<f64> {
        let mu = log_mu.exp();
        let s = (eps * x / mu).powf(1.0 / (1.0 - g));
        let below = (1.0 - ls.mass_above(s)).max(0.0);
        Ok(below / x + eps / mu * ls.power_integral_above(s)?)
    };
    let mut lo = 0.0f64;
    let mut hi = 0.0f64;
    while rhs(lo)? <= eps {
        lo -= 4.0;
        if lo < -700.0 {
            return Err(Error::UnboundedSearch);
        }
    }
    while rhs(hi)? > eps {
        hi += 4.0;
        if hi > 700.0 {
            return Err(Error::UnboundedSearch);
        }
    }
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo < 1e-13 {
            break;
        }
        if rhs(mid)? > eps {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// Constants of the Lipschitz radius equation
/// eps = constant * (Ln^(d/2) T_{kappa eps} / n)^(2/(4+d)).
/// The adaptive variant replaces n by n / ln n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LipschitzRadiusConfig {
    pub kappa_upper: f64,
    pub kappa_lower: f64,
    pub constant: f64,
}

impl Default for LipschitzRadiusConfig {
    fn default() -> Self {
        Self {
            kappa_upper: 1.0,
            kappa_lower: 1.0,
            constant: 1.0,
        }
    }
}

pub fn lipschitz_critical_radius(
    f: &dyn NullDensity,
    n: f64,
    ln: f64,
    which: RadiusEquation,
) -> Result<CriticalRadius> {
    lipschitz_critical_radius_with(f, n, ln, which, LipschitzRadiusConfig::default())
}

pub fn lipschitz_critical_radius_with(
    f: &dyn NullDensity,
    n: f64,
    ln: f64,
    which: RadiusEquation,
    cfg: LipschitzRadiusConfig,
) -> Result<CriticalRadius> {
    if !(n >= 1.0) {
        return Err(Error::BadParams(format!("n must be at least 1, got {n}")));
    }
    if !(ln > 0.0) {
        return Err(Error::BadParams(format!("Ln must be positive, got {ln}")));
    }
    let kappa = match which {
        RadiusEquation::LipschitzUpper | RadiusEquation::AdaptiveLipschitz => cfg.kappa_upper,
        RadiusEquation::LipschitzLower => cfg.kappa_lower,
        other => return Err(Error::Invalid(format!("{other} is not a Lipschitz equation"))),
    };
    let d = f.dim() as f64;
    // the adaptive radius pays a log n factor for the union over the L grid
    let n_eff = if which == RadiusEquation::AdaptiveLipschitz {
        n / n.ln().max(1.0)
    } else {
        n
    };
    let ls = LevelSets::new(f, GammaExponent::for_dim(f.dim()).gamma)?;
    let err = std::cell::Cell::new(None);
    let rhs = |e: f64| -> f64 {
        match t_functional_with(&ls, (kappa * e).min(1.0)) {
            Ok(t) => cfg.constant * (ln.powf(d / 2.0) * t / n_eff).powf(2.0 / (4.0 + d)),
            Err(x) => {
                err.set(Some(x));
                0.0
            }
        }
    };
    let out = solve_fixed_point(rhs, which)?;
    if let Some(e) = err.take() {
        return Err(e);
    }
    Ok(out)
}
