//! Numerical building blocks: adaptive Gauss–Kronrod quadrature, monotone root
//! bracketing, log–log least squares, Gaussian CDF helpers and the modified
//! Bessel function of the second kind.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use statrs::function::erf;

use crate::error::{Error, Result};

// 21-point Kronrod nodes on [0, 1] (symmetric), with the embedded 10-point Gauss rule.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_208_696_832_225,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];
// Gauss weights for XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

/// Result of an adaptive quadrature.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[10];
    let mut gauss = 0.0;
    for (j, (&x, &w)) in XGK[..10].iter().zip(&WGK[..10]).enumerate() {
        let dx = half * x;
        let pair = f(center - dx) + f(center + dx);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Segment { a, b, value, error }
}

/// Globally adaptive 21-point Gauss–Kronrod integration of `f` over the pieces
/// delimited by `breaks` (sorted, at least two entries).
///
/// Stops once the summed error estimate is below `max(abs_tol, rel_tol * |I|)`.
pub fn integrate_pieces<F: Fn(f64) -> f64>(
    f: F,
    breaks: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Quadrature> {
    if breaks.len() < 2 {
        return Err(Error::QuadratureNonConvergence("need at least one interval".into()));
    }
    let mut heap = BinaryHeap::with_capacity(breaks.len() * 4);
    let mut total = 0.0;
    let mut total_err = 0.0;
    for w in breaks.windows(2) {
        let seg = kronrod21(&f, w[0], w[1]);
        total += seg.value;
        total_err += seg.error;
        heap.push(seg);
    }
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::QuadratureNonConvergence("non-finite integrand".into()));
        }
        if heap.len() >= max_intervals {
            return Err(Error::QuadratureNonConvergence(format!(
                "{} intervals, estimate {total:e} with error {total_err:e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is non-empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval below floating-point resolution; accept it as is
            heap.push(Segment { error: 0.0, ..worst });
            total_err -= worst.error;
            continue;
        }
        let left = kronrod21(&f, worst.a, mid);
        let right = kronrod21(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    // re-sum to shed the drift of the running updates
    let (value, error) = heap
        .iter()
        .fold((0.0, 0.0), |(v, e), s| (v + s.value, e + s.error));
    Ok(Quadrature { value, error, intervals: heap.len() })
}

/// Adaptive integration over a single finite interval.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<Quadrature> {
    integrate_pieces(f, &[a, b], rel_tol, abs_tol, 200_000)
}

/// Solves `f(x) = target` for a nondecreasing `f` by bisection inside `[lo, hi]`,
/// stopping once `|f(x) - target| <= tol` or the bracket collapses.
pub fn bisect_monotone<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, target: f64, tol: f64) -> f64 {
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..400 {
        mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = f(mid);
        if (v - target).abs() <= tol {
            break;
        }
        if v < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    mid
}

/// Ordinary least squares `y = a + b x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
}

pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return Err(Error::DegenerateGrid(format!("{n} points")));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateGrid("all abscissae coincide".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let slope_stderr = if n > 2 { (sse / (nf - 2.0) / sxx).sqrt() } else { 0.0 };
    let r2 = if syy > 0.0 { (1.0 - sse / syy).clamp(-1.0, 1.0) } else { 1.0 };
    Ok(LineFit { slope, intercept, slope_stderr, r2 })
}

/// Least-squares power law `y ~ c x^slope`, fitted in log-log coordinates.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub r2: f64,
    /// `(ln x, ln y)` points used by the fit.
    pub grid: Vec<(f64, f64)>,
}

/// Fits the exponent of `values = [(scale, measurement)]`; needs at least four
/// strictly positive pairs.
pub fn scaling_exponent(values: &[(f64, f64)]) -> Result<SlopeFit> {
    if values.len() < 4 {
        return Err(Error::DegenerateGrid(format!("{} points, need at least 4", values.len())));
    }
    if let Some(&(x, y)) = values.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::DegenerateGrid(format!("nonpositive pair ({x}, {y})")));
    }
    let grid: Vec<(f64, f64)> = values.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = grid.iter().copied().unzip();
    let fit = fit_line(&xs, &ys)?;
    Ok(SlopeFit { slope: fit.slope, intercept: fit.intercept, stderr: fit.slope_stderr, r2: fit.r2, grid })
}

/// Outcome of a sample-size sweep: per-grid means of a distance between a
/// measure and its empirical version, and the fitted decay exponent.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RateResult {
    pub ns: Vec<usize>,
    pub means: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// `None` when every distance is zero (the slope is undefined).
    pub fit: Option<SlopeFit>,
}

impl RateResult {
    pub fn from_trials(ns: &[usize], trials: &[Vec<f64>]) -> Result<Self> {
        let mut means = Vec::with_capacity(ns.len());
        let mut stderrs = Vec::with_capacity(ns.len());
        for t in trials {
            let k = t.len() as f64;
            let m = t.iter().sum::<f64>() / k;
            let v = t.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0).max(1.0);
            means.push(m);
            stderrs.push((v / k).sqrt());
        }
        let fit = if means.iter().all(|&m| m == 0.0) {
            None
        } else {
            let pts: Vec<(f64, f64)> = ns.iter().map(|&n| n as f64).zip(means.iter().copied()).collect();
            Some(scaling_exponent(&pts)?)
        };
        Ok(Self { ns: ns.to_vec(), means, stderrs, fit })
    }

    pub fn is_degenerate_zero(&self) -> bool {
        self.fit.is_none()
    }
}

/// Validates a sample-size grid: at least five strictly increasing sizes and
/// at least 20 trials.
pub fn check_rate_grid(ns: &[usize], trials: usize) -> Result<()> {
    if ns.len() < 5 {
        return Err(Error::DegenerateGrid(format!("{} grid points, need at least 5", ns.len())));
    }
    if ns[0] == 0 || ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::DegenerateGrid("sizes must be positive and increasing".into()));
    }
    if trials < 20 {
        return Err(Error::DegenerateGrid(format!("{trials} trials, need at least 20")));
    }
    Ok(())
}

/// Powers of two `2^lo ..= 2^hi`.
pub fn dyadic_grid(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 1usize << k).collect()
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal survival function `1 - Φ(x)`, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erf::erfc(x / std::f64::consts::SQRT_2)
}

pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn normal_quantile(q: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erf::erfc_inv(2.0 * q)
}

/// Modified Bessel function of the second kind `K_nu(x)` for `x > 0`, from
/// `K_nu(x) = ∫_0^∞ exp(-x cosh t) cosh(nu t) dt`.
pub fn bessel_k(nu: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return f64::INFINITY;
    }
    // integrate the scaled integrand exp(-x (cosh t - 1)) cosh(nu t), then rescale by exp(-x)
    let g = |t: f64| (-x * (t.cosh() - 1.0) + nu.abs() * t).exp() * 0.5 * (1.0 + (-2.0 * nu.abs() * t).exp());
    let mut upper = 1.0;
    while -x * (f64::cosh(upper) - 1.0) + nu.abs() * upper > -60.0 && upper < 700.0 {
        upper *= 1.5;
    }
    // the integrand peaks where x sinh t = |nu|
    let peak = (nu.abs() / x).asinh().min(upper);
    let mut breaks = vec![0.0];
    if peak > 0.0 && peak < upper {
        breaks.push(peak);
    }
    breaks.push(upper);
    let q = integrate_pieces(g, &breaks, 1e-13, 0.0, 10_000).map(|q| q.value).unwrap_or(f64::NAN);
    q * (-x).exp()
}

/// `C(n, k)` as `u64`, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u64> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * u128::from(n - i) / u128::from(i + 1);
        if acc > u128::from(u64::MAX) {
            return None;
        }
    }
    u64::try_from(acc).ok()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
