//! Numerical experiments on the relation between Wasserstein distances and
//! MMD: explicit constructions, slope fits along designed paths, empirical
//! rates, and checks of the upper bounds. Every experiment returns a
//! [`Report`] whose pass flag can be recomputed from its rows and slopes.

pub mod constructions;
mod bounds;
mod compressive;
mod embed;
mod scaling;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};
use crate::measures::{DiscreteMeasure, GaussianMixture, Measure, ModelSet};
use crate::transport::{w1d, w1d_measures, w_exact};

pub use bounds::{
    dominance, fourier_bound, fourier_bound_1d, gmm_sobolev_constant, learnability, mmd_agreement, sketch_lipschitz,
    sliced, smoothing, smoothing_bound, sobolev_integrals, AgreementConfig, DominanceConfig, FourierBound, FourierBoundConfig,
    LearnabilityConfig, SketchLipschitzConfig, SlicedConfig, SmoothingBound, SmoothingConfig, SobolevIntegrals,
};
pub use compressive::{ckmeans, CkmeansConfig};
pub use constructions::{binomial_construction, dirac_pair, disjoint_segment, BinomialDiracs};
pub use embed::{embeddability, EmbeddabilityConfig, PathConfig};
pub use scaling::{counterexample, rates, segment, CounterexampleConfig, RatesConfig, SegmentConfig};

pub use crate::numerics::{scaling_exponent, SlopeFit};
pub use crate::report::Report;

fn all_pass(rep: &Report) -> bool {
    rep.column("pass").map(|c| c.iter().all(|&v| v == 1.0)).unwrap_or(true)
}

fn flag(ok: bool) -> f64 {
    if ok {
        1.0
    } else {
        0.0
    }
}

/// `2^-lo, 2^-(lo+1), ..., 2^-hi`.
pub fn halving_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|j| 0.5f64.powi(j)).collect()
}

/// `W_p` between discrete measures: sorted formula on the line, network
/// simplex otherwise.
pub fn wp_discrete(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    if mu.dim() == 1 && nu.dim() == 1 {
        w1d(p, mu, nu)
    } else {
        Ok(w_exact(p, mu, nu)?.0)
    }
}

/// `W_p` between measures of either kind, when an exact method applies.
pub fn wp_measures(p: f64, mu: &Measure, nu: &Measure) -> Result<f64> {
    match (mu, nu) {
        (Measure::Discrete(a), Measure::Discrete(b)) => wp_discrete(p, a, b),
        _ if mu.dim() == 1 && nu.dim() == 1 => w1d_measures(p, mu, nu),
        _ => Err(invalid("no exact Wasserstein distance between multivariate mixtures")),
    }
}

/// Uniform point in the ball `B(center, radius)`.
pub fn ball_point<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
    center.iter().zip(&g).map(|(c, x)| c + r * x / n).collect()
}

/// `atoms` points uniform in `B(center, radius)` with weights drawn from `[0.1, 1)`.
pub fn random_discrete<R: Rng + ?Sized>(rng: &mut R, atoms: usize, center: &[f64], radius: f64) -> Result<DiscreteMeasure> {
    let rows: Vec<Vec<f64>> = (0..atoms).map(|_| ball_point(rng, center, radius)).collect();
    let w: Vec<f64> = (0..atoms).map(|_| rng.random_range(0.1..1.0)).collect();
    DiscreteMeasure::from_rows(&rows, &w)
}

/// Random one-dimensional mixture with `k` components, means in
/// `[-window, window]` and sigmas in `[sigma_min, 2 sigma_min]`.
pub fn random_gmm_1d<R: Rng + ?Sized>(rng: &mut R, k: usize, sigma_min: f64, window: f64) -> Result<GaussianMixture> {
    let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let m: Vec<f64> = (0..k).map(|_| if window > 0.0 { rng.random_range(-window..=window) } else { 0.0 }).collect();
    let s: Vec<f64> = (0..k).map(|_| sigma_min * rng.random_range(1.0..=2.0)).collect();
    GaussianMixture::new_1d(&w, &m, &s)
}

/// Draws a pair from a model set. `d` and `atoms` size the bounded-moment
/// family; `same_mean` recenters both members at the origin.
pub fn sample_pair<R: Rng + ?Sized>(
    model: &ModelSet,
    d: usize,
    atoms: usize,
    same_mean: bool,
    rng: &mut R,
) -> Result<(Measure, Measure)> {
    model.validate()?;
    let (a, b): (Measure, Measure) = match model {
        ModelSet::DiracMixture { k, center, radius } => {
            (random_discrete(rng, *k, center, *radius)?.into(), random_discrete(rng, *k, center, *radius)?.into())
        }
        ModelSet::Gmm1d { k, sigma_min, mean_window } => (
            random_gmm_1d(rng, *k, *sigma_min, *mean_window)?.into(),
            random_gmm_1d(rng, *k, *sigma_min, *mean_window)?.into(),
        ),
        ModelSet::BoundedMoment { s, m } => {
            // support in the ball of radius m^(1/s) keeps E||x||^s <= m
            let center = vec![0.0; d.max(1)];
            let r = m.powf(1.0 / s);
            (random_discrete(rng, atoms.max(1), &center, r)?.into(), random_discrete(rng, atoms.max(1), &center, r)?.into())
        }
    };
    if !same_mean {
        return Ok((a, b));
    }
    Ok((center_measure(a)?, center_measure(b)?))
}

fn center_measure(m: Measure) -> Result<Measure> {
    Ok(match m {
        Measure::Discrete(x) => Measure::Discrete(x.centered()),
        Measure::Gmm(g) => {
            let shift = g.mean();
            let means: Array2<f64> = g.means() - &shift;
            Measure::Gmm(GaussianMixture::new(
                g.weights().as_slice().expect("contiguous"),
                means,
                g.sigmas().as_slice().expect("contiguous"),
            )?)
        }
    })
}
