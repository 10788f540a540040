//! One-dimensional quadrature and root bracketing helpers.

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1] (10 points).
const GL_X: [f64; 5] = [
    0.148_874_338_981_631_2,
    0.433_395_394_129_247_2,
    0.679_409_568_299_024_4,
    0.865_063_366_688_984_5,
    0.973_906_528_517_171_7,
];
const GL_W: [f64; 5] = [
    0.295_524_224_714_752_9,
    0.269_266_719_309_996_4,
    0.219_086_362_515_982_0,
    0.149_451_349_150_580_6,
    0.066_671_344_308_688_1,
];

fn gl10<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let mut s = 0.0;
    for k in 0..5 {
        s += GL_W[k] * (f(c - h * GL_X[k]) + f(c + h * GL_X[k]));
    }
    s * h
}

/// Adaptive Gauss-Legendre integration of `f` over [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut total = 0.0;
    let mut stack = vec![(a, b, gl10(&f, a, b), 0u32)];
    let mut evals = 0usize;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let left = gl10(&f, lo, mid);
        let right = gl10(&f, mid, hi);
        evals += 1;
        let err = (left + right - whole).abs();
        let local_tol = tol * ((hi - lo) / (b - a)).max(1e-6);
        if err <= local_tol || depth >= 50 || hi - lo < 1e-14 * (1.0 + lo.abs()) {
            total += left + right;
        } else {
            stack.push((lo, mid, left, depth + 1));
            stack.push((mid, hi, right, depth + 1));
        }
        if evals > 5_000_000 {
            return Err(Error::IntegrationFailure(format!("no convergence on [{a}, {b}]")));
        }
    }
    if !total.is_finite() {
        return Err(Error::IntegrationFailure(format!("non-finite integral on [{a}, {b}]")));
    }
    Ok(total)
}

/// Integrates over [a, b] after splitting at interior breakpoints. Each piece
/// is cut into panels graded geometrically toward both of its ends, so
/// integrands concentrated near a breakpoint on a very wide piece are
/// resolved.
pub fn integrate_pieces<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, breaks: &[f64], tol: f64) -> Result<f64> {
    let mut pts = vec![a];
    pts.extend(breaks.iter().copied().filter(|&x| x > a && x < b));
    pts.push(b);
    pts.sort_by(f64::total_cmp);
    let mut s = 0.0;
    for w in pts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        if half <= 0.0 {
            continue;
        }
        let mut edges = vec![lo];
        for k in (0..GRADE_LEVELS).rev() {
            edges.push(lo + half * 4f64.powi(-k));
        }
        for k in 1..GRADE_LEVELS {
            edges.push(hi - half * 4f64.powi(-k));
        }
        edges.push(hi);
        edges.dedup();
        for e in edges.windows(2) {
            if e[1] > e[0] {
                s += integrate(&f, e[0], e[1], tol)?;
            }
        }
    }
    Ok(s)
}

const GRADE_LEVELS: i32 = 24;

/// Bisection for a root of an increasing-minus-decreasing type function:
/// returns x in [lo, hi] with g(x) crossing zero, assuming g(lo) and g(hi)
/// have opposite signs.
pub fn bisect<G: FnMut(f64) -> f64>(mut g: G, mut lo: f64, mut hi: f64, tol: f64, max_iter: usize) -> f64 {
    let glo = g(lo);
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            break;
        }
        let gm = g(mid);
        if gm == 0.0 {
            return mid;
        }
        if (gm > 0.0) == (glo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
