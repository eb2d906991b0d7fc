//! Slope experiments: the binomial Dirac path, the disjoint segment path and
//! empirical convergence rates.

use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constructions::{binomial_mmd_gaussian, dirac_pair, disjoint_segment, BinomialDiracs};
use super::{halving_grid, wp_discrete};
use crate::discrepancy::{mmd, mmd_rate};
use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::measures::{DiscreteMeasure, GaussianMixture, Measure};
use crate::numerics::{check_rate_grid, dyadic_grid, scaling_exponent, RateResult};
use crate::report::Report;
use crate::rng;
use crate::transport::{w1d_mixed_cost, w_exact_with_limit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterexampleConfig {
    pub k: usize,
    pub kernel: KernelSpec,
    pub p: f64,
    pub delta: f64,
    pub eps: Vec<f64>,
}

impl Default for CounterexampleConfig {
    fn default() -> Self {
        Self { k: 4, kernel: KernelSpec::gaussian(1.0, 1).expect("valid"), p: 1.0, delta: 1.0, eps: halving_grid(1, 6) }
    }
}

/// W_p and MMD along `eps -> 0` for the binomial Dirac pair.
///
/// Passes when the W slope is 1 to 1e-6, the MMD decays at least like
/// `eps^(k/2)` (slope >= k/2 - 0.05), and, for `delta > 2/k`, the ratio
/// `W / MMD^delta` grows by at least 10x over the grid.
pub fn counterexample(cfg: &CounterexampleConfig) -> Result<Report> {
    let kernel = cfg.kernel.clone().validated()?;
    let c = BinomialDiracs::on_axis(cfg.k, kernel.dim())?;
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0) {
        return Err(crate::error::invalid(format!("delta = {} outside (0, 1]", cfg.delta)));
    }
    let mut rep = Report::new("counterexample", 0, &["eps", "w", "mmd", "ratio"]);
    for &eps in &cfg.eps {
        let (a, b) = dirac_pair(&c, eps)?;
        let w = wp_discrete(cfg.p, &a, &b)?;
        let m = match kernel.family {
            KernelFamily::Gaussian { .. } => binomial_mmd_gaussian(&kernel, &c, eps)?,
            _ => mmd(&kernel, &a.into(), &b.into())?.value,
        };
        rep.push(vec![eps, w, m, w / m.powf(cfg.delta)]);
    }
    let fit_w = fit_column(&rep, "eps", "w")?;
    let fit_m = fit_column(&rep, "eps", "mmd")?;
    let ratio = rep.column("ratio").expect("column exists");
    let growth = ratio.last().copied().unwrap_or(f64::NAN) / ratio[0];
    let k = cfg.k as f64;
    let critical = 2.0 / k;

    rep.margin("w_slope", 1e-6 - (fit_w.slope - 1.0).abs());
    rep.margin("mmd_slope", fit_m.slope - (k / 2.0 - 0.05));
    rep.require(rep.margins["w_slope"] >= 0.0 && rep.margins["mmd_slope"] >= 0.0);
    if cfg.delta > critical {
        rep.margin("divergence", growth - 10.0);
        rep.require(growth >= 10.0);
    }
    rep.note("k", cfg.k);
    rep.note("delta", cfg.delta);
    rep.note("critical_delta", critical);
    rep.note("slope_w", fit_w.slope);
    rep.note("slope_mmd", fit_m.slope);
    rep.note("ratio_growth", growth);
    rep.note("kernel", &kernel);
    rep.slope("w", fit_w);
    rep.slope("mmd", fit_m);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SegmentConfig {
    pub pi0: Vec<Vec<f64>>,
    pub pi1: Vec<Vec<f64>>,
    pub kernel: KernelSpec,
    pub p: f64,
    pub lambdas: Vec<f64>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        Self {
            pi0: vec![vec![0.0]],
            pi1: vec![vec![1.0]],
            kernel: KernelSpec::gaussian(1.0, 1).expect("valid"),
            p: 2.0,
            lambdas: halving_grid(1, 6),
        }
    }
}

/// W_p and MMD along `lambda -> 0` for mass moved between disjoint supports.
/// Passes when the W slope is `1/p` within 0.02 and the MMD slope is 1 within 1e-6.
pub fn segment(cfg: &SegmentConfig) -> Result<Report> {
    let kernel = cfg.kernel.clone().validated()?;
    let pi0 = DiscreteMeasure::uniform_rows(&cfg.pi0)?;
    let pi1 = DiscreteMeasure::uniform_rows(&cfg.pi1)?;
    let mut rep = Report::new("segment", 0, &["lambda", "w", "mmd"]);
    for &l in &cfg.lambdas {
        let (a, b) = disjoint_segment(&pi0, &pi1, l)?;
        let w = wp_discrete(cfg.p, &a, &b)?;
        let m = mmd(&kernel, &a.into(), &b.into())?.value;
        rep.push(vec![l, w, m]);
    }
    let fit_w = fit_column(&rep, "lambda", "w")?;
    let fit_m = fit_column(&rep, "lambda", "mmd")?;
    rep.margin("w_slope", 0.02 - (fit_w.slope - 1.0 / cfg.p).abs());
    rep.margin("mmd_slope", 1e-6 - (fit_m.slope - 1.0).abs());
    rep.require(rep.margins.values().all(|&m| m >= 0.0));
    rep.note("p", cfg.p);
    rep.note("slope_w", fit_w.slope);
    rep.note("slope_mmd", fit_m.slope);
    rep.slope("w", fit_w);
    rep.slope("mmd", fit_m);
    Ok(rep)
}

fn fit_column(rep: &Report, x: &str, y: &str) -> Result<crate::numerics::SlopeFit> {
    let xs = rep.column(x).expect("x column");
    let ys = rep.column(y).expect("y column");
    scaling_exponent(&xs.into_iter().zip(ys).collect::<Vec<_>>())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RatesConfig {
    pub seed: u64,
    pub trials: usize,
    /// Sizes for `||pi - pi_n||` with a two-dimensional Gaussian mixture.
    pub mmd_ns: Vec<usize>,
    pub mmd_kernel: KernelSpec,
    /// Sizes for `W_1(N(0,1), pi_n)`.
    pub w1_line_ns: Vec<usize>,
    /// Sizes for `W_1(pi_n, pi'_n)` with two uniform samples of `[0,1]^3`.
    pub w1_cube_ns: Vec<usize>,
    pub mmd_tolerance: f64,
    pub w_tolerance: f64,
}

impl Default for RatesConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            trials: 50,
            mmd_ns: dyadic_grid(4, 13),
            mmd_kernel: KernelSpec::gaussian(1.0, 2).expect("valid"),
            w1_line_ns: dyadic_grid(4, 13),
            w1_cube_ns: dyadic_grid(5, 10),
            mmd_tolerance: 0.05,
            w_tolerance: 0.07,
        }
    }
}

/// Series codes in the `series` column of the rates report.
pub const SERIES_MMD: f64 = 0.0;
pub const SERIES_W1_LINE: f64 = 1.0;
pub const SERIES_W1_CUBE: f64 = 3.0;

/// The mixture used for the MMD rate.
pub fn rates_mixture() -> GaussianMixture {
    let means = ndarray::array![[0.0, 0.0], [1.5, 0.0], [0.0, -1.0]];
    GaussianMixture::new(&[0.5, 0.3, 0.2], means, &[0.5, 0.7, 0.4]).expect("valid mixture")
}

/// Mean distances between a measure and empirical versions, with fitted
/// decay exponents. Expected exponents: -1/2 for the MMD, -1/2 for W_1 on
/// the line, -1/3 for W_1 in the cube. The series code is the dimension for
/// the W_1 rows.
pub fn rates(cfg: &RatesConfig) -> Result<Report> {
    let kernel = cfg.mmd_kernel.clone().validated()?;
    let mix = rates_mixture();
    if kernel.dim() != mix.dim() {
        return Err(Error::DimensionMismatch { expected: mix.dim(), got: kernel.dim() });
    }
    let mmd_res = mmd_rate(&Measure::Gmm(mix), &kernel, &cfg.mmd_ns, cfg.trials, cfg.seed)?;
    let line = w1_line_rate(&cfg.w1_line_ns, cfg.trials, cfg.seed)?;
    let cube = w1_cube_rate(&cfg.w1_cube_ns, cfg.trials, cfg.seed)?;

    let mut rep = Report::new("rates", cfg.seed, &["series", "n", "mean", "stderr"]);
    let targets = [("mmd", SERIES_MMD, &mmd_res, -0.5, cfg.mmd_tolerance), ("w1_d1", SERIES_W1_LINE, &line, -0.5, cfg.w_tolerance), ("w1_d3", SERIES_W1_CUBE, &cube, -1.0 / 3.0, cfg.w_tolerance)];
    for (name, code, res, target, tol) in targets {
        for ((&n, &m), &s) in res.ns.iter().zip(&res.means).zip(&res.stderrs) {
            rep.push(vec![code, n as f64, m, s]);
        }
        let fit = res.fit.clone().ok_or_else(|| Error::DegenerateGrid(format!("{name}: all distances are zero")))?;
        rep.margin(name, tol - (fit.slope - target).abs());
        rep.note(&format!("target_{name}"), target);
        rep.slope(name, fit);
    }
    rep.require(rep.margins.values().all(|&m| m >= 0.0));
    rep.note("trials", cfg.trials);
    Ok(rep)
}

/// `E W_1(N(0,1), pi_n)`, exact for each sample.
pub fn w1_line_rate(ns: &[usize], trials: usize, seed: u64) -> Result<RateResult> {
    check_rate_grid(ns, trials)?;
    let g = GaussianMixture::gaussian(&[0.0], 1.0)?;
    let per_grid: Vec<Vec<f64>> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::stream(seed, rng::substream((1 << 16) | i as u64, t as u64));
                    let sample = g.sample(n, &mut r)?;
                    w1d_mixed_cost(1.0, &sample, &g)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    RateResult::from_trials(ns, &per_grid)
}

/// `E W_1(pi_n, pi'_n)` for independent uniform samples of `[0,1]^3`.
pub fn w1_cube_rate(ns: &[usize], trials: usize, seed: u64) -> Result<RateResult> {
    check_rate_grid(ns, trials)?;
    let per_grid: Vec<Vec<f64>> = ns
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::stream(seed, rng::substream((3 << 16) | i as u64, t as u64));
                    let a = DiscreteMeasure::uniform(Array2::from_shape_fn((n, 3), |_| r.random::<f64>()))?;
                    let b = DiscreteMeasure::uniform(Array2::from_shape_fn((n, 3), |_| r.random::<f64>()))?;
                    Ok(w_exact_with_limit(1.0, &a, &b, n * n)?.0)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    RateResult::from_trials(ns, &per_grid)
}
