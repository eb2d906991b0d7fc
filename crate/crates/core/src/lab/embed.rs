//! Empirical probe of `W_p <= C MMD^delta` on a model set: random pairs, or
//! a designed path of binomial Dirac pairs shrinking to a point.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::constructions::{binomial_mmd_gaussian, dirac_pair, BinomialDiracs};
use super::{halving_grid, sample_pair, wp_discrete, wp_measures};
use crate::discrepancy::mmd;
use crate::error::{invalid, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::measures::ModelSet;
use crate::numerics::scaling_exponent;
use crate::report::Report;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathConfig {
    pub k: usize,
    pub eps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddabilityConfig {
    pub seed: u64,
    pub model: ModelSet,
    pub kernel: KernelSpec,
    pub p: f64,
    pub delta: f64,
    /// Pairs in the first half; the sup is compared against twice as many.
    pub trials: usize,
    pub same_mean: bool,
    /// Dimension and atom count for the bounded-moment family.
    pub d: usize,
    pub atoms: usize,
    /// When set, follow a binomial Dirac path instead of random pairs.
    pub path: Option<PathConfig>,
}

impl Default for EmbeddabilityConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model: ModelSet::Gmm1d { k: 3, sigma_min: 0.5, mean_window: 2.0 },
            kernel: KernelSpec::matern(0.5, 1.0, 1).expect("valid"),
            p: 2.0,
            delta: 0.5,
            trials: 250,
            same_mean: true,
            d: 1,
            atoms: 6,
            path: None,
        }
    }
}

impl EmbeddabilityConfig {
    /// Divergence along the binomial path inside `B(0, 1)` with the Gaussian kernel.
    pub fn dirac_path(k: usize, delta: f64) -> Self {
        Self {
            model: ModelSet::DiracMixture { k: k / 2 + 1, center: vec![0.0], radius: 1.0 },
            kernel: KernelSpec::gaussian(1.0, 1).expect("valid"),
            p: 1.0,
            delta,
            same_mean: false,
            path: Some(PathConfig { k, eps: halving_grid(3, 8) }),
            ..Default::default()
        }
    }
}

/// Sup of `W_p / MMD^delta`. Random mode passes when the sup over `2T`
/// pairs is less than 1.5 times the sup over the first `T`. Path mode passes
/// when the ratio grows by less than 10x along the path.
pub fn embeddability(cfg: &EmbeddabilityConfig) -> Result<Report> {
    if cfg.trials < 10 {
        return Err(invalid(format!("{} trials, need at least 10", cfg.trials)));
    }
    if !(cfg.delta > 0.0 && cfg.delta <= 1.0) {
        return Err(invalid(format!("delta = {} outside (0, 1]", cfg.delta)));
    }
    let kernel = cfg.kernel.clone().validated()?;
    match &cfg.path {
        Some(path) => along_path(cfg, &kernel, path),
        None => random_pairs(cfg, &kernel),
    }
}

fn random_pairs(cfg: &EmbeddabilityConfig, kernel: &KernelSpec) -> Result<Report> {
    let n = 2 * cfg.trials;
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(cfg.seed, i as u64);
            let (a, b) = sample_pair(&cfg.model, cfg.d, cfg.atoms, cfg.same_mean, &mut r)?;
            let w = wp_measures(cfg.p, &a, &b)?;
            let m = mmd(kernel, &a, &b)?.value;
            let ratio = if m > 0.0 { w / m.powf(cfg.delta) } else { 0.0 };
            Ok(vec![i as f64, w, m, ratio])
        })
        .collect::<Result<_>>()?;
    let mut rep = Report::new("embeddability", cfg.seed, &["trial", "w", "mmd", "ratio"]);
    for row in rows {
        rep.push(row);
    }
    let ratio = rep.column("ratio").expect("ratio column");
    let sup_t = ratio[..cfg.trials].iter().cloned().fold(0.0, f64::max);
    let sup_2t = ratio.iter().cloned().fold(0.0, f64::max);
    let growth = sup_2t / sup_t;
    rep.margin("stability", 1.5 - growth);
    rep.require(growth < 1.5 && sup_2t.is_finite());
    rep.note("mode", "random");
    rep.note("sup_ratio_half", sup_t);
    rep.note("sup_ratio", sup_2t);
    rep.note("model", &cfg.model);
    if let ModelSet::Gmm1d { sigma_min, .. } = cfg.model {
        rep.note("sobolev_m", super::gmm_sobolev_constant(sigma_min, 2)?);
    }
    Ok(rep)
}

fn along_path(cfg: &EmbeddabilityConfig, kernel: &KernelSpec, path: &PathConfig) -> Result<Report> {
    let ModelSet::DiracMixture { k: atoms, center, radius } = &cfg.model else {
        return Err(invalid("path mode needs the dirac_mixture model"));
    };
    if path.k / 2 + 1 > *atoms {
        return Err(invalid(format!("k = {} needs {} atoms per measure, model allows {atoms}", path.k, path.k / 2 + 1)));
    }
    let mut u = vec![0.0; center.len()];
    u[0] = 1.0;
    let c = BinomialDiracs::new(path.k, center.clone(), *radius, u)?;
    let mut rep = Report::new("embeddability", cfg.seed, &["eps", "w", "mmd", "ratio"]);
    for &eps in &path.eps {
        let (a, b) = dirac_pair(&c, eps)?;
        let w = wp_discrete(cfg.p, &a, &b)?;
        let m = match kernel.family {
            KernelFamily::Gaussian { .. } => binomial_mmd_gaussian(kernel, &c, eps)?,
            _ => mmd(kernel, &a.into(), &b.into())?.value,
        };
        rep.push(vec![eps, w, m, w / m.powf(cfg.delta)]);
    }
    let ratio = rep.column("ratio").expect("ratio column");
    let growth = ratio.last().copied().unwrap_or(f64::NAN) / ratio[0];
    let pts = |col: &str| -> Vec<(f64, f64)> {
        rep.column("eps").expect("eps").into_iter().zip(rep.column(col).expect("column")).collect()
    };
    let fit_w = scaling_exponent(&pts("w"))?;
    let fit_m = scaling_exponent(&pts("mmd"))?;
    rep.margin("divergence", 10.0 - growth);
    rep.require(growth < 10.0);
    rep.note("mode", "path");
    rep.note("ratio_growth", growth);
    // ratio ~ eps^(slope_w - delta slope_mmd)
    rep.note("ratio_exponent", fit_w.slope - cfg.delta * fit_m.slope);
    rep.slope("w", fit_w);
    rep.slope("mmd", fit_m);
    Ok(rep)
}
