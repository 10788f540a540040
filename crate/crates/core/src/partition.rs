//! Adaptive recursive partitions of the effective support, pruning, and
//! conversion of samples to multinomial counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::density::NullDensity;
use crate::error::{Error, Result};
use crate::functionals::{mu_function_with, t_functional_with, v_functional, GammaExponent, LevelSets};
use crate::probs::{make_prob_vector, CountVector, ProbVector};

/// Axis-aligned cube [lower, lower + side)^d.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cube {
    #[serde(rename = "lower_corner")]
    pub lower: Vec<f64>,
    pub side: f64,
}

impl Cube {
    pub fn new(lower: Vec<f64>, side: f64) -> Self {
        Self { lower, side }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn diameter(&self) -> f64 {
        self.side * (self.dim() as f64).sqrt()
    }

    pub fn centroid(&self) -> Vec<f64> {
        self.lower.iter().map(|l| l + 0.5 * self.side).collect()
    }

    pub fn volume(&self) -> f64 {
        self.side.powi(self.dim() as i32)
    }

    /// Half-open membership.
    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).all(|(v, l)| *v >= *l && *v < l + self.side)
    }

    pub fn overlaps(&self, other: &Cube) -> bool {
        self.lower
            .iter()
            .zip(&other.lower)
            .all(|(a, b)| *a < b + other.side && *b < a + self.side)
    }

    /// The 2^d cubes obtained by halving every side.
    pub fn children(&self) -> Vec<Cube> {
        let d = self.dim();
        let h = 0.5 * self.side;
        (0..1usize << d)
            .map(|mask| {
                let lower = (0..d)
                    .map(|k| {
                        if mask >> k & 1 == 1 {
                            self.lower[k] + h
                        } else {
                            self.lower[k]
                        }
                    })
                    .collect();
                Cube::new(lower, h)
            })
            .collect()
    }
}

/// Finds the cube containing a point among interior-disjoint cubes.
#[derive(Debug, Clone)]
pub struct CellLocator {
    /// Cell indices sorted by first lower coordinate.
    order: Vec<usize>,
    firsts: Vec<f64>,
    max_side: f64,
}

impl CellLocator {
    pub fn new(cells: &[Cube]) -> Self {
        let mut order: Vec<usize> = (0..cells.len()).collect();
        order.sort_by(|&a, &b| cells[a].lower[0].total_cmp(&cells[b].lower[0]));
        let firsts = order.iter().map(|&i| cells[i].lower[0]).collect();
        let max_side = cells.iter().map(|c| c.side).fold(0.0, f64::max);
        Self {
            order,
            firsts,
            max_side,
        }
    }

    pub fn locate(&self, cells: &[Cube], x: &[f64]) -> Option<usize> {
        // candidates have lower[0] in (x0 - max_side, x0]
        let end = self.firsts.partition_point(|&l| l <= x[0]);
        let start = self.firsts.partition_point(|&l| l <= x[0] - self.max_side);
        (start..end)
            .rev()
            .map(|k| self.order[k])
            .find(|&i| cells[i].contains(x))
    }
}

/// Algorithm parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionParams {
    pub theta1: f64,
    pub theta2: f64,
    pub a: f64,
    pub b: f64,
    /// Pruning level, `None` for an unpruned partition.
    pub c: Option<f64>,
}

/// Divisors turning (Ln, eps, mu(1/4)) into partition parameters:
/// theta1 = theta1_mult/(2 Ln), theta2 = eps/(theta2_div Ln mu(1/4)),
/// a = eps/a_div, b = eps/b_div, c = eps/c_div, sigma = eps/sigma_div.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartitionConstants {
    pub theta1_mult: f64,
    pub theta2_div: f64,
    pub a_div: f64,
    pub b_div: f64,
    pub c_div: f64,
    pub sigma_div: f64,
}

impl PartitionConstants {
    /// The constants under which the partition properties are guaranteed.
    pub const LITERAL: Self = Self {
        theta1_mult: 1.0,
        theta2_div: 8.0,
        a_div: 1024.0,
        b_div: 1024.0,
        c_div: 512.0,
        sigma_div: 8.0,
    };

    /// Coarser truncation used for desk-scale simulations on heavy-tailed
    /// nulls, where the literal truncation needs astronomically many cells.
    pub const DESK: Self = Self {
        theta1_mult: 1.0,
        theta2_div: 8.0,
        a_div: 8.0,
        b_div: 8.0,
        c_div: 4.0,
        sigma_div: 8.0,
    };

    /// Simulation constants for n in the low thousands: theta2 without the
    /// factor 8, a = b = eps/4 and heavy pruning (c = 0.8 eps), giving
    /// tens to a few thousand cells on the built-in nulls.
    pub const SIM: Self = Self {
        theta1_mult: 1.0,
        theta2_div: 1.0,
        a_div: 4.0,
        b_div: 4.0,
        c_div: 1.25,
        sigma_div: 8.0,
    };

    pub fn params(&self, ln: f64, eps: f64, mu_quarter: f64) -> PartitionParams {
        PartitionParams {
            theta1: self.theta1_mult / (2.0 * ln),
            theta2: eps / (self.theta2_div * ln * mu_quarter),
            a: eps / self.a_div,
            b: eps / self.b_div,
            c: Some(eps / self.c_div),
        }
    }
}

impl Default for PartitionConstants {
    fn default() -> Self {
        Self::LITERAL
    }
}

/// Limits guarding the recursive construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuildLimits {
    pub max_depth: usize,
    pub max_cells: usize,
}

impl Default for BuildLimits {
    fn default() -> Self {
        Self {
            max_depth: 60,
            max_cells: 4_000_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub cells: Vec<Cube>,
    pub cell_probs: Vec<f64>,
    pub a_infty_prob: f64,
    pub params: PartitionParams,
    /// The effective support S_a the construction started from.
    pub support: Cube,
    /// Deepest split level reached.
    pub depth: usize,
}

impl Partition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn locator(&self) -> CellLocator {
        CellLocator::new(&self.cells)
    }
}

/// Infimum and supremum of the density over a half-open cube: exact for
/// one-dimensional piecewise-monotone densities, otherwise a 3^d grid
/// padded by the Lipschitz constant.
pub fn cell_extremes(f: &dyn NullDensity, c: &Cube) -> (f64, f64) {
    if f.piecewise_monotone() {
        let lo = c.lower[0];
        let hi = lo + c.side;
        let below_hi = hi.next_down().max(lo);
        let mut mn = f.evaluate(&[lo]).min(f.evaluate(&[below_hi]));
        let mut mx = f.evaluate(&[lo]).max(f.evaluate(&[below_hi]));
        for b in f.breakpoints() {
            if b > lo && b < hi {
                let left = b.next_down();
                for v in [f.evaluate(&[b]), f.evaluate(&[left])] {
                    mn = mn.min(v);
                    mx = mx.max(v);
                }
            }
        }
        return (mn, mx);
    }
    let d = c.dim();
    let mut mn = f64::INFINITY;
    let mut mx: f64 = 0.0;
    let mut x = vec![0.0; d];
    for idx in 0..3usize.pow(d as u32) {
        let mut r = idx;
        for k in 0..d {
            x[k] = c.lower[k] + c.side * (r % 3) as f64 / 2.0;
            r /= 3;
        }
        let v = f.evaluate(&x);
        mn = mn.min(v);
        mx = mx.max(v);
    }
    let lip = f.lipschitz_const();
    if lip.is_finite() && lip > 0.0 {
        // every point lies within side/4 per axis of a grid node
        let pad = lip * c.side * (d as f64).sqrt() / 4.0;
        ((mn - pad).max(0.0), mx + pad)
    } else {
        (mn, mx)
    }
}

/// Upper bound on the supremum used by the removal rule.
fn sup_bound(f: &dyn NullDensity, c: &Cube) -> f64 {
    if f.piecewise_monotone() {
        return cell_extremes(f, c).1;
    }
    f.evaluate(&c.centroid()) + f.lipschitz_const() * c.diameter() / 2.0
}

/// Smallest cube centred at the density's centre with mass at least 1 - a.
pub fn effective_support(f: &dyn NullDensity, a: f64) -> Result<Cube> {
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::BadParams(format!("a must lie in (0,1), got {a}")));
    }
    let center = f.center();
    let cube = |w: f64| Cube::new(center.iter().map(|c| c - w).collect(), 2.0 * w);
    let mass = |w: f64| f.cell_prob(&cube(w));
    let target = 1.0 - a;
    let mut hi = 1.0;
    while mass(hi) < target {
        hi *= 2.0;
        if hi > 1e15 {
            return Err(Error::UnboundedSearch);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || hi - lo <= 1e-13 * hi {
            break;
        }
        if mass(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(cube(hi))
}

/// Algorithm 1: recursive halving of S_a until every cube satisfies the
/// diameter rule or carries too little density.
pub fn adaptive_partition(f: &dyn NullDensity, theta1: f64, theta2: f64, a: f64, b: f64) -> Result<Partition> {
    adaptive_partition_with(f, theta1, theta2, a, b, BuildLimits::default())
}

pub fn adaptive_partition_with(
    f: &dyn NullDensity,
    theta1: f64,
    theta2: f64,
    a: f64,
    b: f64,
    limits: BuildLimits,
) -> Result<Partition> {
    if !(theta1 > 0.0 && theta2 > 0.0 && a > 0.0 && b > 0.0) {
        return Err(Error::BadParams("theta1, theta2, a, b must be positive".into()));
    }
    let gamma = GammaExponent::for_dim(f.dim()).gamma;
    let support = effective_support(f, a)?;
    let floor = b / support.volume();
    let mut a_infty = 1.0 - f.cell_prob(&support);
    let mut cells = Vec::new();
    let mut stack = vec![(support.clone(), 0usize)];
    let mut depth = 0;
    while let Some((cube, level)) = stack.pop() {
        depth = depth.max(level);
        if sup_bound(f, &cube) <= floor {
            a_infty += f.cell_prob(&cube);
            continue;
        }
        let p = f.evaluate(&cube.centroid());
        if cube.diameter() <= (theta1 * p).min(theta2 * p.powf(gamma)) {
            cells.push(cube);
            continue;
        }
        if level + 1 > limits.max_depth {
            return Err(Error::MaxDepthExceeded(limits.max_depth));
        }
        if cells.len() + stack.len() + (1 << cube.dim()) > limits.max_cells {
            return Err(Error::CellBudgetExceeded {
                budget: limits.max_cells,
            });
        }
        stack.extend(cube.children().into_iter().rev().map(|c| (c, level + 1)));
    }
    cells.sort_by(|x, y| {
        for k in (0..x.dim()).rev() {
            match x.lower[k].total_cmp(&y.lower[k]) {
                std::cmp::Ordering::Equal => continue,
                o => return o,
            }
        }
        std::cmp::Ordering::Equal
    });
    let cell_probs = cells.par_iter().map(|c| f.cell_prob(c)).collect();
    Ok(Partition {
        cells,
        cell_probs,
        a_infty_prob: a_infty,
        params: PartitionParams {
            theta1,
            theta2,
            a,
            b,
            c: None,
        },
        support,
        depth,
    })
}

/// Algorithm 2: drops the lowest-mass cells carrying at most `c`, and when
/// that removes less than c/5 shaves the last kept cube about its lower
/// corner.
pub fn prune_partition(p: &Partition, c: f64, f: &dyn NullDensity) -> Result<Partition> {
    if !(c > 0.0 && c < 1.0) {
        return Err(Error::BadParams(format!("c must lie in (0,1), got {c}")));
    }
    if p.cells.is_empty() {
        return Err(Error::EmptyPartition);
    }
    let m = p.cells.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| p.cell_probs[j].total_cmp(&p.cell_probs[i]).then(i.cmp(&j)));
    // suffix[j] = mass of sorted cells j.. (0-based)
    let mut suffix = vec![0.0; m + 1];
    for j in (0..m).rev() {
        suffix[j] = suffix[j + 1] + p.cell_probs[order[j]];
    }
    let jstar = (0..=m).find(|&j| suffix[j] <= c).unwrap_or(m);
    let q = suffix[jstar];
    let keep: Vec<usize> = order[..jstar].to_vec();
    let mut a_infty = p.a_infty_prob + q;
    let mut cells: Vec<Cube> = keep.iter().map(|&i| p.cells[i].clone()).collect();
    let mut probs: Vec<f64> = keep.iter().map(|&i| p.cell_probs[i]).collect();
    if q < c / 5.0 && !cells.is_empty() {
        let last = cells.len() - 1;
        let alpha = (c / (5.0 * probs[last])).min(0.2);
        let shrunk = Cube::new(cells[last].lower.clone(), (1.0 - alpha) * cells[last].side);
        let new_prob = f.cell_prob(&shrunk);
        a_infty += probs[last] - new_prob;
        cells[last] = shrunk;
        probs[last] = new_prob;
    }
    // restore spatial order
    let mut idx: Vec<usize> = (0..cells.len()).collect();
    idx.sort_by_key(|&k| keep[k]);
    let cells = idx.iter().map(|&k| cells[k].clone()).collect();
    let cell_probs = idx.iter().map(|&k| probs[k]).collect();
    Ok(Partition {
        cells,
        cell_probs,
        a_infty_prob: a_infty,
        params: PartitionParams { c: Some(c), ..p.params },
        support: p.support.clone(),
        depth: p.depth,
    })
}

/// (P(A_1), ..., P(A_N), P(A_inf)).
pub fn partition_to_multinomial(p: &Partition) -> Result<ProbVector> {
    let mut w = p.cell_probs.clone();
    w.push(p.a_infty_prob.max(0.0));
    make_prob_vector(&w)
}

/// Counts of flat `samples` (point-major) per cell, with A_inf last.
pub fn assign_samples(p: &Partition, samples: &[f64]) -> CountVector {
    assign_with(p, &p.locator(), samples)
}

pub fn assign_with(p: &Partition, loc: &CellLocator, samples: &[f64]) -> CountVector {
    let d = p.support.dim();
    let mut counts = vec![0u64; p.cells.len() + 1];
    for x in samples.chunks(d) {
        match loc.locate(&p.cells, x) {
            Some(i) => counts[i] += 1,
            None => counts[p.cells.len()] += 1,
        }
    }
    CountVector::fixed(counts).expect("counts are consistent by construction")
}

/// Standard parameters for a target radius: computes mu(1/4) and applies
/// the given constants.
pub fn standard_params(f: &dyn NullDensity, ln: f64, eps: f64, consts: PartitionConstants) -> Result<PartitionParams> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::BadEps(eps));
    }
    if !(ln > 0.0) {
        return Err(Error::BadParams(format!("Ln must be positive, got {ln}")));
    }
    let ls = LevelSets::new(f, GammaExponent::for_dim(f.dim()).gamma)?;
    let mu = mu_function_with(&ls, eps, 0.25)?;
    Ok(consts.params(ln, eps, mu))
}

/// Algorithm 1 followed by Algorithm 2 with the given constants.
pub fn standard_partition(
    f: &dyn NullDensity,
    ln: f64,
    eps: f64,
    consts: PartitionConstants,
    limits: BuildLimits,
) -> Result<Partition> {
    let pp = standard_params(f, ln, eps, consts)?;
    let raw = adaptive_partition_with(f, pp.theta1, pp.theta2, pp.a, pp.b, limits)?;
    if raw.is_empty() {
        return Err(Error::EmptyPartition);
    }
    prune_partition(&raw, pp.c.unwrap(), f)
}

/// One checked property with the worst observed value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyCheck {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyReport {
    pub checks: Vec<PropertyCheck>,
}

impl PropertyReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&PropertyCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tolerance on the density ratio check.
const RATIO_TOL: f64 = 1e-3;

/// Checks the six partition guarantees for a pruned partition built with
/// the standard parameters at radius `eps`.
pub fn verify_partition(p: &Partition, f: &dyn NullDensity, eps: f64) -> Result<PropertyReport> {
    let gamma = GammaExponent::for_dim(f.dim()).gamma;
    let (t1, t2) = (p.params.theta1, p.params.theta2);
    let rule = |x: &[f64]| {
        let v = f.evaluate(x);
        (t1 * v).min(t2 * v.powf(gamma))
    };
    let mut checks = Vec::new();

    // diameter sandwich
    let (lo_ratio, hi_ratio) = p
        .cells
        .par_iter()
        .map(|c| {
            let r = c.diameter() / rule(&c.centroid());
            (r, r)
        })
        .reduce(|| (f64::INFINITY, 0.0f64), |a, b| (a.0.min(b.0), a.1.max(b.1)));
    checks.push(PropertyCheck {
        name: "diameter".into(),
        pass: p.cells.is_empty() || (lo_ratio >= 0.2 * (1.0 - 1e-9) && hi_ratio <= 1.0 + 1e-9),
        detail: format!("diam/rule in [{lo_ratio:.6}, {hi_ratio:.6}], required [0.2, 1]"),
    });

    // multiplicative control
    let extremes: Vec<(f64, f64)> = p.cells.par_iter().map(|c| cell_extremes(f, c)).collect();
    let worst = extremes
        .iter()
        .map(|&(mn, mx)| if mn > 0.0 { mx / mn } else { f64::INFINITY })
        .fold(0.0f64, f64::max);
    checks.push(PropertyCheck {
        name: "multiplicative".into(),
        pass: worst <= 2.0 + RATIO_TOL,
        detail: format!("max sup/inf ratio {worst:.6}, required <= 2"),
    });

    // mass of A_inf
    let (lo, hi) = (eps / 2560.0, eps / 256.0);
    checks.push(PropertyCheck {
        name: "a_infty".into(),
        pass: p.a_infty_prob >= lo && p.a_infty_prob <= hi,
        detail: format!("P(A_inf) = {:.6e}, window [{lo:.6e}, {hi:.6e}]", p.a_infty_prob),
    });

    // truncated T-functional
    let ls = LevelSets::new(f, gamma)?;
    let k_pow: f64 = p
        .cells
        .par_iter()
        .map(|c| cell_power_integral(f, c, gamma))
        .collect::<Result<Vec<f64>>>()?
        .iter()
        .sum();
    let t_bound = t_functional_with(&ls, eps / 5120.0)?.powf(gamma);
    checks.push(PropertyCheck {
        name: "t_functional".into(),
        pass: k_pow <= t_bound * (1.0 + 1e-9),
        detail: format!("integral over K {k_pow:.6}, bound {t_bound:.6}"),
    });

    // density lower bound
    let mu = mu_function_with(&ls, eps, 1.0 / 5120.0)?;
    let floor = (eps / (5120.0 * mu)).powf(1.0 / (1.0 - gamma));
    let inf_k = extremes.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
    checks.push(PropertyCheck {
        name: "density_floor".into(),
        pass: inf_k >= floor,
        detail: format!("inf over K {inf_k:.6e}, floor {floor:.6e}"),
    });

    // 2/3-norm of the truncated multinomial
    let q = partition_to_multinomial(p)?;
    let lhs = v_functional(&q, eps / 128.0).powf(2.0 / 3.0);
    let kappa: f64 = p.cell_probs.iter().map(|v| v.powf(2.0 / 3.0)).sum();
    checks.push(PropertyCheck {
        name: "v_functional".into(),
        pass: lhs <= kappa * (1.0 + 1e-9),
        detail: format!("V^(2/3) = {lhs:.6}, sum P^(2/3) = {kappa:.6}"),
    });
    Ok(PropertyReport { checks })
}

/// Integral of p^gamma over one cube.
fn cell_power_integral(f: &dyn NullDensity, c: &Cube, gamma: f64) -> Result<f64> {
    if c.dim() == 1 {
        let lo = c.lower[0];
        let hi = lo + c.side;
        let bps: Vec<f64> = f.breakpoints().into_iter().filter(|b| *b > lo && *b < hi).collect();
        return crate::quad::integrate_pieces(|x| f.evaluate(&[x]).powf(gamma), lo, hi, &bps, 1e-14);
    }
    let d = c.dim();
    let m = 8usize;
    let h = c.side / m as f64;
    let mut s = 0.0;
    let mut x = vec![0.0; d];
    for idx in 0..m.pow(d as u32) {
        let mut r = idx;
        for k in 0..d {
            x[k] = c.lower[k] + ((r % m) as f64 + 0.5) * h;
            r /= m;
        }
        s += f.evaluate(&x).powf(gamma);
    }
    Ok(s * h.powi(d as i32))
}
