//! Checks of upper bounds relating W_p, MMD, task metrics and sketches.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use super::{all_pass, flag, random_discrete, random_gmm_1d, wp_discrete};
use crate::discrepancy::{mmd, mmd_discrete, mmd_gmm_gaussian, mmd_sliced, mmd_spectral_1d, smoothed_l2};
use crate::error::{invalid, Error, Result};
use crate::kernels::{sphere_directions, KernelSpec};
use crate::measures::{smooth, DiscreteMeasure, GaussianMixture, Measure, Regularizer};
use crate::numerics::{integrate_pieces, scaling_exponent};
use crate::report::Report;
use crate::rng;
use crate::sketch::{draw_features, sketch_discrete, sketch_distance};
use crate::tasks::{kmeans_project, risk, task_metric_probe, Hypothesis, TaskSpec};
use crate::transport::{optimal_cost, sliced_w1, w1d_gmm_cost, w_exact};

/// `max(1, sigma_min^(1-s)) * sum_{n=1}^{s} sqrt(n!)`, a bound on the order-`s`
/// Sobolev norm of the density of a one-dimensional mixture whose
/// components all have standard deviation at least `sigma_min`.
pub fn gmm_sobolev_constant(sigma_min: f64, s: u32) -> Result<f64> {
    if !(sigma_min > 0.0) || s == 0 {
        return Err(invalid("Sobolev constant needs sigma_min > 0 and s >= 1"));
    }
    let mut fact = 1.0;
    let mut sum = 0.0;
    for n in 1..=s {
        fact *= n as f64;
        sum += fact.sqrt();
    }
    Ok(sigma_min.powf(1.0 - s as f64).max(1.0) * sum)
}

/// Frequency integrals entering the one-dimensional same-mean bound for
/// densities with Sobolev norm at most `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SobolevIntegrals {
    pub r: f64,
    pub s: u32,
    pub m: f64,
    /// `∫_{|w| < r} 1 / k̂(w) dw`
    pub low: f64,
    /// `∫_{|w| >= r} |w|^(-2s) / k̂(w) dw`
    pub high: f64,
    /// `m^2 low + 4 m^2 high`
    pub constant: f64,
}

pub fn sobolev_integrals(kernel: &KernelSpec, s: u32, m: f64, r: f64) -> Result<SobolevIntegrals> {
    if kernel.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: kernel.dim() });
    }
    let inv = |w: f64| -> f64 { 1.0 / kernel.fourier_radial(w).expect("checked below") };
    kernel.fourier_radial(0.0)?;
    let low = 2.0 * integrate_pieces(inv, &[0.0, r], 1e-12, 0.0, 10_000)?.value;
    // w = r / u maps [r, ∞) onto (0, 1]
    let high_integrand = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let w = r / u;
        w.powi(-2 * s as i32) * inv(w) * r / (u * u)
    };
    let q = integrate_pieces(high_integrand, &[0.0, 0.25, 0.5, 1.0], 1e-10, 0.0, 20_000)?;
    if !q.value.is_finite() {
        return Err(Error::QuadratureNonConvergence("high-frequency integral diverges".into()));
    }
    let high = 2.0 * q.value;
    Ok(SobolevIntegrals { r, s, m, low, high, constant: m * m * (low + 4.0 * high) })
}

/// Both sides of the one-dimensional same-mean inequality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourierBound {
    pub w2: f64,
    /// `(∫ |F_mu - F_nu|^2 dx)^(1/2)`, which the right-hand side bounds by
    /// Plancherel and Cauchy-Schwarz. It differs from `w2` when `p = 2`.
    pub cdf_l2: f64,
    pub mmd: f64,
    /// `∫_R |φ_mu - φ_nu|^2 / (w^4 k̂(w)) dw`
    pub integral: f64,
    /// `(2 pi)^(-1/4) integral^(1/4) mmd^(1/2)`
    pub rhs: f64,
}

impl FourierBound {
    pub fn holds(&self) -> bool {
        self.w2 <= self.rhs * (1.0 + 1e-3)
    }

    /// The same inequality with the CDF distance on the left.
    pub fn cdf_holds(&self) -> bool {
        self.cdf_l2 <= self.rhs * (1.0 + 1e-3)
    }
}

fn cdf_l2_distance(mu: &GaussianMixture, nu: &GaussianMixture) -> Result<f64> {
    let (a, b) = (mu.support_bracket(12.0), nu.support_bracket(12.0));
    let (lo, hi) = (a.0.min(b.0), a.1.max(b.1));
    let pieces = 64;
    let breaks: Vec<f64> = (0..=pieces).map(|i| lo + (hi - lo) * i as f64 / pieces as f64).collect();
    let q = integrate_pieces(|x| (mu.cdf_1d(x) - nu.cdf_1d(x)).powi(2), &breaks, 1e-10, 1e-300, 200_000)?;
    Ok(q.value.max(0.0).sqrt())
}

/// `exp(z) - 1 - z` without cancellation near zero.
fn expm1_minus(z: Complex64) -> Complex64 {
    if z.norm() < 0.5 {
        let mut term = z * z / 2.0;
        let mut sum = term;
        for n in 3..30 {
            term = term * z / n as f64;
            sum += term;
            if term.norm() < 1e-18 * sum.norm() {
                break;
            }
        }
        sum
    } else {
        z.exp() - 1.0 - z
    }
}

/// `W_2(mu, nu) <= (2 pi)^(-1/4) (∫ |φ_mu - φ_nu|^2 / (w^4 k̂))^(1/4) MMD^(1/2)`
/// for one-dimensional mixtures with equal means.
pub fn fourier_bound_1d(kernel: &KernelSpec, mu: &GaussianMixture, nu: &GaussianMixture) -> Result<FourierBound> {
    if kernel.dim() != 1 || mu.dim() != 1 || nu.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: kernel.dim().max(mu.dim()).max(nu.dim()) });
    }
    kernel.fourier_radial(0.0)?;
    let gap = mu.mean()[0] - nu.mean()[0];
    if gap.abs() > 1e-9 {
        return Err(Error::MismatchedMeans(gap));
    }
    if mu == nu {
        return Ok(FourierBound { w2: 0.0, cdf_l2: 0.0, mmd: 0.0, integral: 0.0, rhs: 0.0 });
    }
    let w2 = w1d_gmm_cost(2.0, mu, nu)?.max(0.0).sqrt();
    let cdf_l2 = cdf_l2_distance(mu, nu)?;
    let (mu_m, nu_m): (Measure, Measure) = (mu.clone().into(), nu.clone().into());
    let m = mmd(kernel, &mu_m, &nu_m)?.value;

    let mut comps: Vec<(f64, f64, f64)> = Vec::new();
    for (sign, g) in [(1.0, mu), (-1.0, nu)] {
        for i in 0..g.len() {
            comps.push((sign * g.weights()[i], g.means()[[i, 0]], g.sigmas()[i]));
        }
    }
    let dphi = |w: f64| -> Complex64 {
        comps
            .iter()
            .map(|&(a, c, s)| {
                let z = Complex64::new(-0.5 * s * s * w * w, -w * c);
                a * (expm1_minus(z) - 0.5 * s * s * w * w)
            })
            .sum()
    };
    let integrand = |w: f64| {
        if w == 0.0 {
            return 0.0;
        }
        dphi(w).norm_sqr() / (w.powi(4) * kernel.fourier_radial(w).expect("checked above"))
    };
    let s_min = comps.iter().map(|c| c.2).fold(f64::INFINITY, f64::min);
    let spread = comps.iter().map(|c| c.1.abs()).fold(0.0, f64::max);
    // |dphi|^2 carries exp(-s_min^2 w^2); past w_max it is below e^-80
    let w_max = 80.0f64.sqrt() / s_min;
    let pieces = ((w_max * spread / PI).ceil() as usize).max(32);
    let breaks: Vec<f64> = (0..=pieces).map(|i| w_max * i as f64 / pieces as f64).collect();
    let half = integrate_pieces(integrand, &breaks, 1e-10, 0.0, 200_000)?;
    if !half.value.is_finite() {
        return Err(Error::QuadratureNonConvergence("frequency integral diverges".into()));
    }
    let integral = 2.0 * half.value;
    let rhs = (2.0 * PI).powf(-0.25) * integral.powf(0.25) * m.sqrt();
    Ok(FourierBound { w2, cdf_l2, mmd: m, integral, rhs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FourierBoundConfig {
    pub seed: u64,
    pub pairs: usize,
    pub components: usize,
    pub sigma_min: f64,
    pub mean_window: f64,
    pub kernel: KernelSpec,
    /// Sobolev order used for the reported frequency integrals.
    pub s: u32,
}

impl Default for FourierBoundConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 100,
            components: 3,
            sigma_min: 0.5,
            mean_window: 2.0,
            kernel: KernelSpec::matern(0.5, 1.0, 1).expect("valid"),
            s: 2,
        }
    }
}

/// The same-mean inequality over random pairs of centered mixtures.
pub fn fourier_bound(cfg: &FourierBoundConfig) -> Result<Report> {
    let kernel = cfg.kernel.clone().validated()?;
    let results: Vec<FourierBound> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let a = random_gmm_1d(&mut r, cfg.components, cfg.sigma_min, cfg.mean_window)?;
            let b = random_gmm_1d(&mut r, cfg.components, cfg.sigma_min, cfg.mean_window)?;
            fourier_bound_1d(&kernel, &center_gmm(&a)?, &center_gmm(&b)?)
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new("fourier-bound", cfg.seed, &["pair", "w2", "cdf_l2", "mmd", "integral", "rhs", "margin", "cdf_pass", "pass"]);
    let mut sup_ratio: f64 = 0.0;
    for (i, fb) in results.iter().enumerate() {
        let margin = fb.rhs * (1.0 + 1e-3) - fb.w2;
        let row = vec![i as f64, fb.w2, fb.cdf_l2, fb.mmd, fb.integral, fb.rhs, margin, flag(fb.cdf_holds()), flag(fb.holds())];
        rep.push(row);
        if fb.mmd > 0.0 {
            sup_ratio = sup_ratio.max(fb.w2 / fb.mmd.sqrt());
        }
    }
    let worst = rep.column("margin").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    rep.margin("min_margin", worst);
    rep.require(all_pass(&rep));
    let cdf = rep.column("cdf_pass").unwrap_or_default();
    rep.note("violations", results.iter().filter(|fb| !fb.holds()).count());
    rep.note("cdf_violations", cdf.iter().filter(|&&v| v != 1.0).count());
    let m = gmm_sobolev_constant(cfg.sigma_min, cfg.s)?;
    rep.note("sobolev_m", m);
    match sobolev_integrals(&kernel, cfg.s, m, 1.0) {
        Ok(si) => rep.note("frequency_integrals", si),
        Err(e) => rep.note("frequency_integrals", e.to_string()),
    }
    rep.note("sup_w2_over_sqrt_mmd", sup_ratio);
    Ok(rep)
}

fn center_gmm(g: &GaussianMixture) -> Result<GaussianMixture> {
    let means = g.means() - &g.mean();
    GaussianMixture::new(g.weights().as_slice().expect("contiguous"), means, g.sigmas().as_slice().expect("contiguous"))
}

/// Terms of the smoothing bound for one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingBound {
    pub w: f64,
    pub mmd: f64,
    pub constant: f64,
    pub main: f64,
    /// `2 (∫ ||z||^p alpha)^(1/p)`
    pub error_term: f64,
    /// `2 sigma sqrt(d)`, an upper bound on `error_term` for `p <= 2`.
    pub error_rbf: f64,
    pub bound: f64,
}

impl SmoothingBound {
    pub fn margin(&self) -> f64 {
        self.bound - self.w
    }
}

/// `W_p(mu, nu) <= C (M + ∫||z||^s alpha)^((2p+d)/((d+2s)p)) MMD^(2(s-p)/((d+2s)p)) + 2 (∫||z||^p alpha)^(1/p)`
/// with `C = 2^(1/p+1-1/s) V_d^((s-p)/((d+2s)p))`, `V_d = pi^(d/2) Gamma(d/2+1)`,
/// and the MMD taken under the convolution-root kernel of `alpha`.
pub fn smoothing_bound(
    alpha: &Regularizer,
    p: f64,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    s: f64,
    m: f64,
) -> Result<SmoothingBound> {
    if !(p >= 1.0 && s > p) {
        return Err(invalid(format!("need 1 <= p < s, got p = {p}, s = {s}")));
    }
    for (name, x) in [("mu", mu), ("nu", nu)] {
        let mom = x.moment(s)?;
        if mom > m * (1.0 + 1e-12) {
            return Err(Error::MomentViolation(format!("E||x||^{s} = {mom} exceeds M = {m} for {name}")));
        }
    }
    let d = mu.dim();
    let df = d as f64;
    let kernel = KernelSpec::conv_root(*alpha, d)?;
    // the closed form leaves round-off of order 1e-8 for equal inputs, which
    // the fractional power below would inflate
    let mmd = if mu == nu { 0.0 } else { mmd_gmm_gaussian(&kernel, &mu.clone().into(), &nu.clone().into())?.value };
    let v_d = PI.powf(df / 2.0) * gamma(df / 2.0 + 1.0);
    let denom = (df + 2.0 * s) * p;
    let constant = 2f64.powf(1.0 / p + 1.0 - 1.0 / s) * v_d.powf((s - p) / denom);
    let main = constant * (m + alpha.abs_moment(s, d)).powf((2.0 * p + df) / denom) * mmd.powf(2.0 * (s - p) / denom);
    let error_term = 2.0 * alpha.abs_moment(p, d).powf(1.0 / p);
    let w = wp_discrete(p, mu, nu)?;
    Ok(SmoothingBound {
        w,
        mmd,
        constant,
        main,
        error_term,
        error_rbf: 2.0 * alpha.sigma() * df.sqrt(),
        bound: main + error_term,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoothingConfig {
    pub seed: u64,
    pub pairs: usize,
    pub atoms: usize,
    pub d: usize,
    pub radius: f64,
    pub s: f64,
    pub p: f64,
    pub sigmas: Vec<f64>,
    /// Moment bound; defaults to the larger moment of each pair.
    pub m: Option<f64>,
    /// Samples per measure when estimating the smoothed distance.
    pub samples: usize,
    pub repeats: usize,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 10,
            atoms: 8,
            d: 3,
            radius: 1.0,
            s: 4.0,
            p: 1.0,
            sigmas: vec![0.1, 0.2, 0.4],
            m: None,
            samples: 256,
            repeats: 5,
        }
    }
}

/// The smoothing bound over random pairs and regularizer widths, plus the
/// intermediate step `W_p(mu, nu) <= W_p(mu_alpha, nu_alpha) + error_term`
/// with the smoothed distance estimated from samples (margin allowed down
/// to three standard errors). Also fits the slope of the error term in sigma.
pub fn smoothing(cfg: &SmoothingConfig) -> Result<Report> {
    if cfg.sigmas.is_empty() || cfg.repeats < 2 || cfg.samples == 0 {
        return Err(invalid("smoothing needs sigmas, at least 2 repeats and a sample size"));
    }
    let center = vec![0.0; cfg.d];
    let jobs: Vec<(usize, usize)> = (0..cfg.pairs).flat_map(|i| (0..cfg.sigmas.len()).map(move |j| (i, j))).collect();
    let rows: Vec<Vec<f64>> = jobs
        .into_par_iter()
        .map(|(i, j)| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let a = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let b = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let m = match cfg.m {
                Some(m) => m,
                None => a.moment(cfg.s)?.max(b.moment(cfg.s)?),
            };
            let sigma = cfg.sigmas[j];
            let alpha = Regularizer::gaussian(sigma)?;
            let sb = smoothing_bound(&alpha, cfg.p, &a, &b, cfg.s, m)?;
            let (ga, gb) = (smooth(&a, &alpha), smooth(&b, &alpha));
            let mut est = Vec::with_capacity(cfg.repeats);
            for t in 0..cfg.repeats {
                let mut rs = rng::stream(cfg.seed, rng::substream(1 + i as u64, (j * cfg.repeats + t) as u64));
                let xa = ga.sample(cfg.samples, &mut rs)?;
                let xb = gb.sample(cfg.samples, &mut rs)?;
                est.push(w_exact(cfg.p, &xa, &xb)?.0);
            }
            let k = est.len() as f64;
            let mean = est.iter().sum::<f64>() / k;
            let se = (est.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt();
            let lemma_margin = mean + sb.error_term - sb.w + 3.0 * se;
            let ok = sb.margin() >= 0.0 && lemma_margin >= 0.0 && sb.error_term <= sb.error_rbf * (1.0 + 1e-12);
            Ok(vec![
                i as f64,
                sigma,
                sb.w,
                sb.mmd,
                sb.main,
                sb.error_term,
                sb.error_rbf,
                sb.bound,
                sb.margin(),
                mean,
                se,
                lemma_margin,
                flag(ok),
            ])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new(
        "smoothing",
        cfg.seed,
        &[
            "pair", "sigma", "w", "mmd", "main", "error_term", "error_rbf", "bound", "margin", "smoothed_w",
            "smoothed_w_stderr", "step_margin", "pass",
        ],
    );
    for row in rows {
        rep.push(row);
    }
    rep.require(all_pass(&rep));
    let min = |name: &str| rep.column(name).unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    let (m1, m2) = (min("margin"), min("step_margin"));
    rep.margin("bound", m1);
    rep.margin("step", m2);
    if cfg.sigmas.len() >= 4 {
        let pts: Vec<(f64, f64)> = rep.rows.iter().filter(|r| r[0] == 0.0).map(|r| (r[1], r[5])).collect();
        let fit = scaling_exponent(&pts)?;
        rep.margin("error_slope", 0.05 - (fit.slope - 1.0).abs());
        rep.require(rep.margins["error_slope"] >= 0.0);
        rep.slope("error_term", fit);
    } else {
        // too few widths for a fit: compare error_term / sigma across widths
        let ratios: Vec<f64> = rep.rows.iter().filter(|r| r[0] == 0.0).map(|r| r[5] / r[1]).collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| (l.min(x), h.max(x)));
        rep.margin("error_linearity", 0.05 - (hi / lo - 1.0));
        rep.require(rep.margins["error_linearity"] >= 0.0);
    }
    rep.note("s", cfg.s);
    rep.note("p", cfg.p);
    rep.note("d", cfg.d);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominanceConfig {
    pub seed: u64,
    pub kernels: Vec<KernelSpec>,
    pub pairs: usize,
    pub atoms: usize,
    pub radius: f64,
    pub p: f64,
    /// Points of the one-dimensional grid for the pointwise condition.
    pub grid: usize,
    pub tolerance: f64,
}

impl Default for DominanceConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            kernels: [0.5, 1.0, 2.0].iter().map(|&s| KernelSpec::gaussian(s, 2).expect("valid")).collect(),
            pairs: 1000,
            atoms: 5,
            radius: 1.5,
            p: 1.0,
            grid: 200,
            tolerance: 1e-9,
        }
    }
}

/// `MMD <= C W_p` with `C` from the Hessian of `k0` at zero, over random
/// discrete pairs, and the pointwise form `2 k0(0) - 2 k0(z) <= C^2 ||z||^2`
/// along a ray. Rows with `kind = 0` are pairs, `kind = 1` grid points.
pub fn dominance(cfg: &DominanceConfig) -> Result<Report> {
    let mut rep = Report::new("dominance", cfg.seed, &["kind", "kernel", "index", "mmd", "w", "c", "margin", "pass"]);
    for (ki, k) in cfg.kernels.iter().enumerate() {
        let k = k.clone().validated()?;
        let c = k.hessian_constant()?;
        let d = k.dim();
        let center = vec![0.0; d];
        let rows: Vec<Vec<f64>> = (0..cfg.pairs)
            .into_par_iter()
            .map(|i| {
                let mut r = rng::stream(cfg.seed, rng::substream(ki as u64, i as u64));
                let na = r.random_range(1..=cfg.atoms.max(1));
                let nb = r.random_range(1..=cfg.atoms.max(1));
                let a = random_discrete(&mut r, na, &center, cfg.radius)?;
                let b = random_discrete(&mut r, nb, &center, cfg.radius)?;
                let m = mmd_discrete(&k, &a, &b)?.value;
                let w = wp_discrete(cfg.p, &a, &b)?;
                let margin = c * w + cfg.tolerance - m;
                Ok(vec![0.0, ki as f64, i as f64, m, w, c, margin, flag(margin >= 0.0)])
            })
            .collect::<Result<_>>()?;
        for row in rows {
            rep.push(row);
        }
        let k00 = k.diagonal()?;
        let scale = 5.0 * c.recip().max(1e-3);
        for g in 0..cfg.grid {
            let t = scale * (g + 1) as f64 / cfg.grid as f64;
            let mut z = vec![0.0; d];
            z[0] = t;
            let lhs = (2.0 * k00 - 2.0 * k.kappa0(&z)?).max(0.0).sqrt();
            let margin = c * t + cfg.tolerance - lhs;
            rep.push(vec![1.0, ki as f64, g as f64, lhs, t, c, margin, flag(margin >= 0.0)]);
        }
    }
    let worst = rep.column("margin").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    rep.margin("min_margin", worst);
    rep.require(all_pass(&rep));
    rep.note("kernels", &cfg.kernels);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SlicedConfig {
    pub seed: u64,
    pub pairs: usize,
    pub d: usize,
    pub radius: f64,
    pub atoms: usize,
    pub directions: usize,
    /// One-dimensional kernel averaged over directions.
    pub base: KernelSpec,
    pub tolerance: f64,
}

impl Default for SlicedConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pairs: 200,
            d: 2,
            radius: 1.0,
            atoms: 6,
            directions: 32,
            base: KernelSpec::gaussian(1.0, 1).expect("valid"),
            tolerance: 1e-10,
        }
    }
}

/// Sliced and modified kernel identities, `SW_1 <= W_1`, and the ratio
/// `W_1 / MMD^(1/(2(d+1)))` for centered pairs in `B(0, R)`, whose running
/// sup should change by less than 50% when the number of pairs doubles.
pub fn sliced(cfg: &SlicedConfig) -> Result<Report> {
    if cfg.pairs < 2 {
        return Err(invalid("sliced experiment needs at least two pairs"));
    }
    let base = cfg.base.clone().validated()?;
    let thetas = sphere_directions(cfg.d, cfg.directions, cfg.seed)?;
    let sliced_k = KernelSpec::sliced(base.clone(), &thetas)?;
    let full = KernelSpec::gaussian(1.0, cfg.d)?;
    let mean_weight = 1.0 / cfg.d as f64;
    let modified = KernelSpec::modified(full.clone(), mean_weight)?;
    let center = vec![0.0; cfg.d];
    let expo = 1.0 / (2.0 * (cfg.d as f64 + 1.0));
    let tol = cfg.tolerance;
    let rows: Vec<Vec<f64>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let a = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let b = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let ks = mmd_discrete(&sliced_k, &a, &b)?.value;
            let avg = mmd_sliced(&base, &thetas, &a, &b)?.value;
            let slice_err = (ks * ks - avg * avg).abs();
            let mm = mmd_discrete(&modified, &a, &b)?.value;
            let mf = mmd_discrete(&full, &a, &b)?.value;
            let gap = &a.mean() - &b.mean();
            let gap2 = gap.dot(&gap);
            let mod_err = (mm * mm - (mf * mf + mean_weight * gap2)).abs();
            let sw = sliced_w1(&a, &b, &thetas)?;
            let w = wp_discrete(1.0, &a, &b)?;
            // centered copies in B(0, 2R) for the ratio
            let (ac, bc) = (a.centered(), b.centered());
            let wc = wp_discrete(1.0, &ac, &bc)?;
            let mc = mmd_discrete(&sliced_k, &ac, &bc)?.value;
            let ratio = if mc > 0.0 { wc / mc.powf(expo) } else { 0.0 };
            let ok = slice_err <= tol && mod_err <= tol && sw <= w + 1e-12;
            Ok(vec![i as f64, ks, avg, slice_err, mm, mf, gap2, mod_err, sw, w, wc, mc, ratio, flag(ok)])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new(
        "sliced",
        cfg.seed,
        &[
            "pair", "mmd_sliced_kernel", "mmd_sliced_avg", "slice_err", "mmd_modified", "mmd_base", "mean_gap2",
            "modified_err", "sw1", "w1", "w1_centered", "mmd_centered", "ratio", "pass",
        ],
    );
    for row in rows {
        rep.push(row);
    }
    let ratio = rep.column("ratio").expect("ratio column");
    let half = ratio.len() / 2;
    let sup_t = ratio[..half].iter().cloned().fold(0.0, f64::max);
    let sup_2t = ratio.iter().cloned().fold(0.0, f64::max);
    let growth = sup_2t / sup_t;
    rep.margin("stability", 1.5 - growth);
    let worst = |c: &str| rep.column(c).unwrap_or_default().into_iter().fold(0.0, f64::max);
    let (e1, e2) = (worst("slice_err"), worst("modified_err"));
    rep.margin("slice_identity", tol - e1);
    rep.margin("modified_identity", tol - e2);
    rep.require(all_pass(&rep) && growth < 1.5);
    rep.note("sup_ratio_half", sup_t);
    rep.note("sup_ratio", sup_2t);
    rep.note("exponent", expo);
    rep.note("mean_weight", mean_weight);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnabilityConfig {
    pub seed: u64,
    pub pairs: usize,
    pub d: usize,
    pub atoms: usize,
    pub radius: f64,
    pub k: usize,
    pub r_bound: f64,
    pub lipschitz_l: f64,
    pub hypotheses: usize,
}

impl Default for LearnabilityConfig {
    fn default() -> Self {
        Self { seed: 0, pairs: 200, d: 2, atoms: 6, radius: 1.0, k: 3, r_bound: 1.0, lipschitz_l: 2.0, hypotheses: 64 }
    }
}

/// Row kinds of the learnability report.
pub const KIND_KMEANS: f64 = 0.0;
pub const KIND_REGRESSION: f64 = 1.0;
pub const KIND_CLASSIFICATION: f64 = 2.0;

/// K-means risk against the transport cost to the projected measure, and
/// probed task metrics against `C W_p` for regression and classification.
pub fn learnability(cfg: &LearnabilityConfig) -> Result<Report> {
    let kmeans = TaskSpec::KMeans { k: cfg.k };
    let reg = TaskSpec::LinearRegression { r_bound: cfg.r_bound };
    let cls = TaskSpec::BinaryClassification { lipschitz_l: cfg.lipschitz_l };
    for t in [&kmeans, &reg, &cls] {
        t.validate()?;
    }
    let d = cfg.d;
    let z_center = vec![0.0; d];
    let jobs: Vec<(usize, usize)> = (0..3).flat_map(|kind| (0..cfg.pairs).map(move |i| (kind, i))).collect();
    let rows: Vec<Vec<f64>> = jobs
        .into_par_iter()
        .map(|(kind, i)| {
            let mut r = rng::stream(cfg.seed, rng::substream(kind as u64, i as u64));
            match kind {
                0 => {
                    let mu = random_discrete(&mut r, cfg.atoms, &z_center, cfg.radius)?;
                    let rows: Vec<Vec<f64>> = (0..cfg.k).map(|_| super::ball_point(&mut r, &z_center, cfg.radius)).collect();
                    let c = ndarray::Array2::from_shape_fn((cfg.k, d), |(a, b)| rows[a][b]);
                    let h = Hypothesis::Centroids(c);
                    let lhs = risk(&kmeans, &mu, &h)?;
                    let proj = kmeans_project(&h, &mu)?;
                    let rhs = w_exact(2.0, &mu, &proj)?.1.cost;
                    let margin = 1e-9 - (lhs - rhs).abs();
                    Ok(vec![KIND_KMEANS, i as f64, lhs, rhs, margin, flag(margin >= 0.0)])
                }
                1 => {
                    let center = vec![0.0; d + 1];
                    let mu = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
                    let nu = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
                    let probe = task_metric_probe(&reg, &mu, &nu, cfg.hypotheses, r.random())?;
                    let rhs = reg.learnability_constant() * w_exact(2.0, &mu, &nu)?.0;
                    let margin = rhs * (1.0 + 1e-9) + 1e-12 - probe;
                    Ok(vec![KIND_REGRESSION, i as f64, probe, rhs, margin, flag(margin >= 0.0)])
                }
                _ => {
                    let labelled = |r: &mut rng::Rng| -> Result<DiscreteMeasure> {
                        let rows: Vec<Vec<f64>> = (0..cfg.atoms)
                            .map(|_| {
                                let mut x = super::ball_point(r, &z_center, cfg.radius);
                                x.push(if r.random::<bool>() { 1.0 } else { -1.0 });
                                x
                            })
                            .collect();
                        let w: Vec<f64> = (0..cfg.atoms).map(|_| r.random_range(0.1..1.0)).collect();
                        DiscreteMeasure::from_rows(&rows, &w)
                    };
                    let mu = labelled(&mut r)?;
                    let nu = labelled(&mut r)?;
                    let probe = task_metric_probe(&cls, &mu, &nu, cfg.hypotheses, r.random())?;
                    let w1 = optimal_cost(&mu, &nu, |x, y| cls.ground_distance(x, y))?;
                    let rhs = cls.learnability_constant() * w1;
                    let margin = rhs * (1.0 + 1e-9) + 1e-12 - probe;
                    Ok(vec![KIND_CLASSIFICATION, i as f64, probe, rhs, margin, flag(margin >= 0.0)])
                }
            }
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new("learnability", cfg.seed, &["kind", "pair", "lhs", "rhs", "margin", "pass"]);
    for row in rows {
        rep.push(row);
    }
    for (name, kind) in [("kmeans", KIND_KMEANS), ("regression", KIND_REGRESSION), ("classification", KIND_CLASSIFICATION)] {
        let worst = rep.rows.iter().filter(|r| r[0] == kind).map(|r| r[4]).fold(f64::INFINITY, f64::min);
        rep.margin(name, worst);
    }
    rep.require(all_pass(&rep));
    rep.note("regression_constant", reg.learnability_constant());
    rep.note("classification_constant", cls.learnability_constant());
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SketchLipschitzConfig {
    pub seed: u64,
    pub pairs: usize,
    pub atoms: usize,
    pub radius: f64,
    pub m: usize,
    pub kernel: KernelSpec,
}

impl Default for SketchLipschitzConfig {
    fn default() -> Self {
        Self { seed: 0, pairs: 200, atoms: 6, radius: 2.0, m: 64, kernel: KernelSpec::gaussian(1.0, 2).expect("valid") }
    }
}

/// `||A(mu) - A(nu)||_2 <= sqrt(sum_j ||omega_j||^2 / m) W_1(mu, nu)`.
pub fn sketch_lipschitz(cfg: &SketchLipschitzConfig) -> Result<Report> {
    let kernel = cfg.kernel.clone().validated()?;
    let map = draw_features(&kernel, cfg.m, cfg.seed)?;
    let lip = map.rkhs_lipschitz();
    let center = vec![0.0; kernel.dim()];
    let rows: Vec<Vec<f64>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, rng::substream(1, i as u64));
            let a = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let b = random_discrete(&mut r, cfg.atoms, &center, cfg.radius)?;
            let lhs = sketch_distance(&sketch_discrete(&map, &a)?, &sketch_discrete(&map, &b)?)?;
            let rhs = lip * wp_discrete(1.0, &a, &b)?;
            let margin = rhs * (1.0 + 1e-12) - lhs;
            Ok(vec![i as f64, lhs, rhs, margin, flag(margin >= 0.0)])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new("sketch-lipschitz", cfg.seed, &["pair", "sketch_distance", "bound", "margin", "pass"]);
    for row in rows {
        rep.push(row);
    }
    let worst = rep.column("margin").unwrap_or_default().into_iter().fold(f64::INFINITY, f64::min);
    rep.margin("min_margin", worst);
    rep.require(all_pass(&rep));
    rep.note("lipschitz", lip);
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgreementConfig {
    pub seed: u64,
    pub pairs: usize,
    /// Width of the smoothing density whose convolution root is the kernel.
    pub alpha_sigma: f64,
    pub atoms: usize,
    pub tolerance: f64,
}

impl Default for AgreementConfig {
    fn default() -> Self {
        Self { seed: 0, pairs: 200, alpha_sigma: 0.6, atoms: 5, tolerance: 1e-6 }
    }
}

/// Agreement of every applicable MMD method on one-dimensional pairs under
/// the convolution-root kernel of a Gaussian, where all four apply to
/// discrete pairs and three to mixtures. Even pairs are discrete, odd pairs
/// are mixtures; the reference is the closed form.
pub fn mmd_agreement(cfg: &AgreementConfig) -> Result<Report> {
    let alpha = Regularizer::gaussian(cfg.alpha_sigma)?;
    let kernel = KernelSpec::conv_root(alpha, 1)?;
    let rows: Vec<Vec<f64>> = (0..cfg.pairs)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let (a, b): (Measure, Measure) = if i % 2 == 0 {
                (random_discrete(&mut r, cfg.atoms, &[0.0], 2.0)?.into(), random_discrete(&mut r, cfg.atoms, &[0.0], 2.0)?.into())
            } else {
                (random_gmm_1d(&mut r, 3, 0.3, 2.0)?.into(), random_gmm_1d(&mut r, 3, 0.3, 2.0)?.into())
            };
            let closed = mmd_gmm_gaussian(&kernel, &a, &b)?.value;
            let spectral = mmd_spectral_1d(&kernel, &a, &b)?.value;
            let l2 = smoothed_l2(&alpha, &a, &b)?;
            let double = match (&a, &b) {
                (Measure::Discrete(x), Measure::Discrete(y)) => mmd_discrete(&kernel, x, y)?.value,
                _ => f64::NAN,
            };
            let dev = [spectral, l2, double]
                .iter()
                .filter(|v| v.is_finite())
                .map(|v| (v - closed).abs() / closed.abs().max(f64::MIN_POSITIVE))
                .fold(0.0, f64::max);
            Ok(vec![i as f64, (i % 2) as f64, closed, spectral, l2, double, dev, flag(dev <= cfg.tolerance)])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new(
        "mmd-agreement",
        cfg.seed,
        &["pair", "kind", "closed_form", "spectral", "smoothed_l2", "double_sum", "max_rel_dev", "pass"],
    );
    for row in rows {
        rep.push(row);
    }
    let worst = rep.column("max_rel_dev").unwrap_or_default().into_iter().fold(0.0, f64::max);
    rep.margin("max_rel_dev", cfg.tolerance - worst);
    rep.require(all_pass(&rep));
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sobolev_constant_values() {
        // s = 2, sigma_min = 0.5: max(1, 2) (1 + sqrt 2)
        assert_relative_eq!(gmm_sobolev_constant(0.5, 2).unwrap(), 2.0 * (1.0 + 2f64.sqrt()), epsilon = 1e-14);
        assert_relative_eq!(gmm_sobolev_constant(2.0, 1).unwrap(), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn frequency_integrals_for_matern_half() {
        // k̂(w) = 2 / (1 + w^2) for exp(-|z|): low = ∫_{-1}^{1} (1 + w^2)/2 = 4/3,
        // high = 2 ∫_1^∞ (1 + w^2) / (2 w^4) = 1/3 + 1 = 4/3
        let k = KernelSpec::matern(0.5, 1.0, 1).unwrap();
        let si = sobolev_integrals(&k, 2, 1.0, 1.0).unwrap();
        assert_relative_eq!(si.low, 4.0 / 3.0, max_relative = 1e-9);
        assert_relative_eq!(si.high, 4.0 / 3.0, max_relative = 1e-8);
        assert_relative_eq!(si.constant, 4.0 / 3.0 + 16.0 / 3.0, max_relative = 1e-8);
    }

    #[test]
    fn fourier_bound_examples() {
        // reference values from scipy quadrature of the CDFs, quantiles and spectra
        let lap = KernelSpec::laplacian(1.0, 1).unwrap();
        let a = GaussianMixture::gaussian(&[0.0], 1.0).unwrap();
        let b = GaussianMixture::gaussian(&[0.0], 1.5).unwrap();
        let fb = fourier_bound_1d(&lap, &a, &b).unwrap();
        assert_relative_eq!(fb.w2, 0.5, max_relative = 1e-8);
        assert_relative_eq!(fb.mmd, 0.1540535547694655, max_relative = 1e-7);
        assert_relative_eq!(fb.integral, 0.36194840568079983, max_relative = 1e-7);
        assert_relative_eq!(fb.rhs, 0.1922881680740698, max_relative = 1e-7);
        assert_relative_eq!(fb.cdf_l2, 0.16713135273941684, max_relative = 1e-7);
        // the right-hand side controls the CDF distance, not W_2
        assert!(fb.cdf_holds());
        assert!(!fb.holds());

        let mat = KernelSpec::matern(0.5, 1.0, 1).unwrap();
        let c = GaussianMixture::new_1d(&[0.5, 0.5], &[-1.0, 1.0], &[1.0, 1.0]).unwrap();
        let fc = fourier_bound_1d(&mat, &a, &c).unwrap();
        assert_relative_eq!(fc.mmd, 0.163959851336628, max_relative = 1e-7);
        assert_relative_eq!(fc.integral, 0.29251855113687625, max_relative = 1e-6);
        assert_relative_eq!(fc.rhs, 0.18808845724766826, max_relative = 1e-6);
        assert_relative_eq!(fc.cdf_l2, 0.16694553182655353, max_relative = 1e-7);
        assert_relative_eq!(fc.w2, 0.421159852040484, max_relative = 1e-6);
        assert!(fc.cdf_holds() && !fc.holds());

        let z = fourier_bound_1d(&mat, &a, &a).unwrap();
        assert_eq!((z.w2, z.rhs), (0.0, 0.0));

        let shifted = GaussianMixture::gaussian(&[0.1], 1.0).unwrap();
        assert!(matches!(fourier_bound_1d(&mat, &a, &shifted), Err(Error::MismatchedMeans(_))));
    }

    #[test]
    fn fourier_integral_matches_naive_form_at_moderate_frequencies() {
        let mat = KernelSpec::matern(0.5, 1.0, 1).unwrap();
        let a = GaussianMixture::new_1d(&[0.3, 0.7], &[-0.7, 0.3], &[0.6, 0.9]).unwrap();
        let b = GaussianMixture::gaussian(&[0.0], 0.8).unwrap();
        let naive = |w: f64| {
            let d = a.char_fn(&[w]) - b.char_fn(&[w]);
            d.norm_sqr() / (w.powi(4) * mat.fourier_radial(w).unwrap())
        };
        // integrate the naive form away from zero and the stable one over the same range
        let fb = fourier_bound_1d(&mat, &a, &b).unwrap();
        let tail = 2.0 * integrate_pieces(naive, &[0.5, 2.0, 5.0, 20.0], 1e-12, 0.0, 10_000).unwrap().value;
        assert!(tail < fb.integral && tail > 0.5 * fb.integral);
    }

    #[test]
    fn fourier_bound_rejects_gaussian_kernel_divergence() {
        // 1 / k̂ grows like exp(w^2 / 2) faster than |dphi|^2 decays for wide pairs
        let g = KernelSpec::gaussian(2.0, 1).unwrap();
        let si = sobolev_integrals(&g, 2, 1.0, 1.0);
        assert!(si.is_err() || !si.unwrap().constant.is_finite());
    }

    #[test]
    fn smoothing_identical_measures() {
        let mu = DiscreteMeasure::uniform_rows(&[vec![0.1, 0.2, 0.0], vec![-0.3, 0.0, 0.4]]).unwrap();
        let alpha = Regularizer::gaussian(0.2).unwrap();
        let sb = smoothing_bound(&alpha, 1.0, &mu, &mu, 4.0, 1.0).unwrap();
        assert_eq!(sb.w, 0.0);
        assert_eq!(sb.main, 0.0);
        assert_relative_eq!(sb.bound, sb.error_term);
        assert!(sb.error_term <= sb.error_rbf);
        assert!(matches!(smoothing_bound(&alpha, 1.0, &mu, &mu, 4.0, 1e-4), Err(Error::MomentViolation(_))));
    }

    #[test]
    fn smoothing_report_small() {
        let rep = smoothing(&SmoothingConfig { pairs: 3, samples: 64, repeats: 3, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
        assert_eq!(rep.rows.len(), 9);
    }

    #[test]
    fn dominance_small() {
        let rep = dominance(&DominanceConfig { pairs: 50, grid: 20, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
        let m = KernelSpec::modified(KernelSpec::gaussian(1.0, 2).unwrap(), 1.0).unwrap();
        let err = dominance(&DominanceConfig { kernels: vec![m], pairs: 5, ..Default::default() }).unwrap_err();
        assert!(matches!(err, Error::UnsupportedKernel(_)));
    }

    #[test]
    fn two_point_dominance_is_one_minus_exp() {
        // 2 (1 - exp(-t^2 / 2)) <= t^2
        for i in 1..100 {
            let t = i as f64 * 0.05;
            assert!(2.0 * (1.0 - (-0.5 * t * t).exp()) <= t * t);
        }
    }

    #[test]
    fn sliced_small() {
        let rep = sliced(&SlicedConfig { pairs: 20, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
    }

    #[test]
    fn learnability_small() {
        let rep = learnability(&LearnabilityConfig { pairs: 10, hypotheses: 16, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
        assert_eq!(rep.rows.len(), 30);
    }

    #[test]
    fn sketch_lipschitz_small() {
        let rep = sketch_lipschitz(&SketchLipschitzConfig { pairs: 20, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
    }

    #[test]
    fn agreement_small() {
        let rep = mmd_agreement(&AgreementConfig { pairs: 10, ..Default::default() }).unwrap();
        assert!(rep.pass, "{:?}", rep.margins);
    }
}
