//! Maximum mean discrepancy: kernel double sums, Gaussian closed forms,
//! one-dimensional spectral quadrature, slicing, the smoothed-L2 identity and
//! empirical convergence rates.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::measures::{DiscreteMeasure, Measure, Regularizer};
use crate::numerics::{self, integrate_pieces, RateResult};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum MmdMethod {
    DoubleSum,
    GmmClosedForm,
    Spectral1D,
    Sliced,
    SmoothedL2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MmdValue {
    pub value: f64,
    pub method: MmdMethod,
}

/// Turns a squared MMD into a value, absorbing round-off below zero.
/// `scale` is the size of the positive terms that were summed.
fn finish(sq: f64, scale: f64, method: MmdMethod) -> Result<MmdValue> {
    let scale = scale.abs().max(f64::MIN_POSITIVE);
    if sq >= -1e-12 * scale {
        return Ok(MmdValue { value: sq.max(0.0).sqrt(), method });
    }
    if sq >= -1e-10 * scale {
        log::warn!("squared MMD {sq:e} below zero (scale {scale:e}); clamped");
        return Ok(MmdValue { value: 0.0, method });
    }
    Err(Error::NonPsd { value: sq, scale })
}

fn check_dims(k: &KernelSpec, mu: usize, nu: usize) -> Result<()> {
    for got in [mu, nu] {
        if got != k.dim() {
            return Err(Error::DimensionMismatch { expected: k.dim(), got });
        }
    }
    Ok(())
}

/// `sum_ij a_i b_j k(x_i, y_j)`; rows are evaluated in parallel and summed in order.
fn cross_sum(k: &KernelSpec, a: &DiscreteMeasure, b: &DiscreteMeasure) -> f64 {
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.point(i);
            let s: f64 = (0..b.len()).map(|j| b.weights()[j] * k.k(x, b.point(j))).sum();
            a.weights()[i] * s
        })
        .collect();
    rows.iter().sum()
}

/// `sum_ij a_i a_j k(x_i, x_j)` using symmetry.
fn self_sum(k: &KernelSpec, a: &DiscreteMeasure) -> f64 {
    let w = a.weight_slice();
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            let x = a.point(i);
            let off: f64 = (i + 1..a.len()).map(|j| w[j] * k.k(x, a.point(j))).sum();
            w[i] * (w[i] * k.k(x, x) + 2.0 * off)
        })
        .collect();
    rows.iter().sum()
}

/// MMD between discrete measures by kernel double sums.
pub fn mmd_discrete(k: &KernelSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<MmdValue> {
    Ok(mmd_discrete_sq(k, mu, nu)?.0)
}

fn mmd_discrete_sq(k: &KernelSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(MmdValue, f64)> {
    check_dims(k, mu.dim(), nu.dim())?;
    if mu == nu {
        return Ok((MmdValue { value: 0.0, method: MmdMethod::DoubleSum }, 0.0));
    }
    let aa = self_sum(k, mu);
    let bb = self_sum(k, nu);
    let ab = cross_sum(k, mu, nu);
    let sq = aa + bb - 2.0 * ab;
    let v = finish(sq, aa + bb, MmdMethod::DoubleSum)?;
    Ok((v, sq.max(0.0)))
}

/// Gaussian kernel parameters `(sigma_k^2, scale)` such that
/// `k0(z) = scale * exp(-||z||^2 / (2 sigma_k^2))`.
fn gaussian_params(k: &KernelSpec) -> Result<(f64, f64)> {
    let d = k.dim() as f64;
    match &k.family {
        KernelFamily::Gaussian { sigma, scale } => Ok((sigma * sigma, *scale)),
        KernelFamily::ConvRoot { alpha } => {
            let s = alpha.sigma();
            Ok((2.0 * s * s, (4.0 * PI * s * s).powf(-d / 2.0)))
        }
        _ => Err(Error::UnsupportedKernel(format!("closed form needs a Gaussian kernel, got {}", k.name()))),
    }
}

type Comp<'a> = (f64, &'a [f64], f64);

/// `E k(X, Y)` for `X ~ a`, `Y ~ b` with Gaussian (or Dirac) components.
fn gaussian_inner(sk2: f64, scale: f64, d: usize, a: &[Comp], b: &[Comp], symmetric: bool) -> f64 {
    let half_d = d as f64 / 2.0;
    let pair = |(wi, xi, si): &Comp, (wj, xj, sj): &Comp| -> f64 {
        let s2 = sk2 + si * si + sj * sj;
        let r2 = numerics::sq_dist(xi, xj);
        let amp = if *si == 0.0 && *sj == 0.0 { 1.0 } else { (sk2 / s2).powf(half_d) };
        wi * wj * amp * (-r2 / (2.0 * s2)).exp()
    };
    let rows: Vec<f64> = (0..a.len())
        .into_par_iter()
        .map(|i| {
            if symmetric {
                let off: f64 = (i + 1..b.len()).map(|j| pair(&a[i], &b[j])).sum();
                pair(&a[i], &b[i]) + 2.0 * off
            } else {
                b.iter().map(|cj| pair(&a[i], cj)).sum()
            }
        })
        .collect();
    scale * rows.iter().sum::<f64>()
}

/// MMD under a Gaussian or convolution-root Gaussian kernel between measures
/// whose components are isotropic Gaussians or Diracs, in closed form.
pub fn mmd_gmm_gaussian(k: &KernelSpec, mu: &Measure, nu: &Measure) -> Result<MmdValue> {
    check_dims(k, mu.dim(), nu.dim())?;
    let (sk2, scale) = gaussian_params(k)?;
    let (a, b) = (mu.components(), nu.components());
    let d = k.dim();
    let aa = gaussian_inner(sk2, scale, d, &a, &a, true);
    let bb = gaussian_inner(sk2, scale, d, &b, &b, true);
    let ab = gaussian_inner(sk2, scale, d, &a, &b, false);
    finish(aa + bb - 2.0 * ab, aa + bb, MmdMethod::GmmClosedForm)
}

/// `||alpha * mu - alpha * nu||_{L2}` from inner products of Gaussian densities.
pub fn smoothed_l2(alpha: &Regularizer, mu: &Measure, nu: &Measure) -> Result<f64> {
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let Regularizer::Gaussian { sigma } = *alpha;
    let d = mu.dim() as f64;
    let smooth = |m: &Measure| -> Vec<(f64, Vec<f64>, f64)> {
        m.components().into_iter().map(|(w, x, s)| (w, x.to_vec(), (s * s + sigma * sigma).sqrt())).collect()
    };
    let (a, b) = (smooth(mu), smooth(nu));
    // <N(x, s^2 I), N(y, t^2 I)>_{L2} = N(x - y; 0, (s^2 + t^2) I)
    let inner = |p: &[(f64, Vec<f64>, f64)], q: &[(f64, Vec<f64>, f64)]| -> f64 {
        let mut total = 0.0;
        for (wi, xi, si) in p {
            for (wj, xj, sj) in q {
                let v = si * si + sj * sj;
                total += wi * wj * (2.0 * PI * v).powf(-d / 2.0) * (-numerics::sq_dist(xi, xj) / (2.0 * v)).exp();
            }
        }
        total
    };
    let aa = inner(&a, &a);
    let bb = inner(&b, &b);
    let sq = aa + bb - 2.0 * inner(&a, &b);
    Ok(finish(sq, aa + bb, MmdMethod::SmoothedL2)?.value)
}

/// Signed components of `mu - nu` with coincident components merged.
fn signed_components(mu: &Measure, nu: &Measure) -> Vec<(f64, f64, f64)> {
    let mut map: BTreeMap<(u64, u64), f64> = BTreeMap::new();
    for (sign, m) in [(1.0, mu), (-1.0, nu)] {
        for (w, x, s) in m.components() {
            *map.entry((x[0].to_bits(), s.to_bits())).or_insert(0.0) += sign * w;
        }
    }
    map.into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|((x, s), c)| (c, f64::from_bits(x), f64::from_bits(s)))
        .collect()
}

/// MMD in one dimension from `(1/pi) ∫_0^∞ k̂(w) |φ_mu(w) - φ_nu(w)|^2 dw`.
///
/// The integrand is expanded over pairs of components. The integral is
/// computed on `[0, W]`, with `W` doubled until the tail estimate (exact for
/// the non-oscillating part, two integrations by parts for the rest) has an
/// error bound below `1e-9` of the running value.
pub fn mmd_spectral_1d(k: &KernelSpec, mu: &Measure, nu: &Measure) -> Result<MmdValue> {
    check_dims(k, mu.dim(), nu.dim())?;
    if k.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: k.dim() });
    }
    k.fourier_radial(0.0)?;
    let comps = signed_components(mu, nu);
    if comps.is_empty() {
        return Ok(MmdValue { value: 0.0, method: MmdMethod::Spectral1D });
    }

    // Dirac-Dirac pairs grouped by separation; pairs with smoothing kept apart.
    let mut dirac: BTreeMap<u64, f64> = BTreeMap::new();
    let mut smooth: Vec<(f64, f64, f64)> = Vec::new();
    let mut scale = 0.0;
    for &(ci, xi, si) in &comps {
        for &(cj, xj, sj) in &comps {
            let c = ci * cj;
            if c > 0.0 {
                scale += c;
            }
            let t = (xi - xj).abs();
            if si == 0.0 && sj == 0.0 {
                *dirac.entry(t.to_bits()).or_insert(0.0) += c;
            } else {
                smooth.push((c, t, si * si + sj * sj));
            }
        }
    }
    let dirac: Vec<(f64, f64)> = dirac.into_iter().map(|(t, c)| (f64::from_bits(t), c)).filter(|&(_, c)| c != 0.0).collect();
    let c0: f64 = dirac.iter().filter(|(t, _)| *t == 0.0).map(|(_, c)| c).sum();
    let osc: Vec<(f64, f64)> = dirac.iter().copied().filter(|(t, _)| *t > 0.0).collect();

    let f = |w: f64| k.fourier_radial(w).expect("checked above");
    let integrand = |w: f64| {
        let mut s = c0;
        for &(t, c) in &osc {
            s += c * (w * t).cos();
        }
        for &(c, t, s2) in &smooth {
            s += c * (-0.5 * s2 * w * w).exp() * (w * t).cos();
        }
        f(w) * s
    };
    // ∫_W^∞ k̂ by the substitution w = W / u
    let fourier_tail = |big: f64| -> Result<f64> {
        let q = integrate_pieces(
            |u: f64| if u <= 0.0 { 0.0 } else { f(big / u) * big / (u * u) },
            &[0.0, 0.25, 0.5, 1.0],
            1e-12,
            0.0,
            10_000,
        )?;
        Ok(q.value)
    };

    let t_max = comps.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max)
        - comps.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let t_min = osc.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
    let s_min = smooth.iter().map(|s| s.2).filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);

    let mut lo = 0.0;
    let mut big = 8.0 / t_max.max(1e-3).min(1.0);
    let mut total = 0.0;
    for _ in 0..60 {
        // resolve oscillations with about two pieces per period
        let pieces = (((big - lo) * t_max / PI).ceil() as usize).clamp(1, 200_000);
        let mut breaks: Vec<f64> = (0..=pieces).map(|i| lo + (big - lo) * i as f64 / pieces as f64).collect();
        if lo == 0.0 {
            // geometric points toward zero so narrow peaks are seen at any scale
            let first = breaks[1];
            breaks.extend((1..48).map(|j| first * 0.5f64.powi(j)));
            breaks.sort_by(f64::total_cmp);
        }
        total += integrate_pieces(integrand, &breaks, 1e-12, 1e-16 * scale, 2_000_000)?.value;

        let fb = f(big);
        let dfb = k.fourier_radial_deriv(big)?;
        let t0 = fourier_tail(big)?;
        let mut tail = c0 * t0;
        let mut bound = 0.0;
        for &(t, c) in &osc {
            tail += c * (-fb * (big * t).sin() / t - dfb * (big * t).cos() / (t * t));
            bound += c.abs() * dfb.abs() / (t * t);
        }
        for &(c, _, s2) in &smooth {
            bound += c.abs() * (-0.5 * s2 * big * big).exp() * t0;
        }
        let value = total + tail;
        if bound <= 1e-9 * value.abs() || bound <= 1e-15 * scale {
            let sq = value / PI;
            return finish(sq, scale * f(0.0) / PI, MmdMethod::Spectral1D);
        }
        lo = big;
        big *= 2.0;
        if s_min.is_finite() && t_min.is_infinite() {
            // only smoothed pairs remain: jump straight to where they are negligible
            big = big.max((80.0 / s_min).sqrt());
        }
    }
    Err(Error::QuadratureNonConvergence("spectral tail did not settle".into()))
}

/// `sqrt(mean_theta MMD^2(P_theta mu, P_theta nu))` under a one-dimensional base kernel.
pub fn mmd_sliced(base: &KernelSpec, thetas: &Array2<f64>, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<MmdValue> {
    if thetas.nrows() == 0 {
        return Err(Error::Empty("theta set"));
    }
    if base.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: base.dim() });
    }
    let mut total = 0.0;
    for t in thetas.outer_iter() {
        let t = t.to_vec();
        total += mmd_discrete_sq(base, &mu.project(&t)?, &nu.project(&t)?)?.1;
    }
    Ok(MmdValue { value: (total / thetas.nrows() as f64).sqrt(), method: MmdMethod::Sliced })
}

/// MMD between measures of either kind, choosing an exact method.
pub fn mmd(k: &KernelSpec, mu: &Measure, nu: &Measure) -> Result<MmdValue> {
    match (mu, nu) {
        (Measure::Discrete(a), Measure::Discrete(b)) => mmd_discrete(k, a, b),
        _ if gaussian_params(k).is_ok() => mmd_gmm_gaussian(k, mu, nu),
        _ if k.dim() == 1 => mmd_spectral_1d(k, mu, nu),
        _ => Err(Error::UnsupportedKernel(format!("no exact MMD for {} between mixtures", k.name()))),
    }
}

/// Mean of `||pi - pi_n||_k` over `trials` empirical measures of each size in
/// `ns`, with the fitted log-log slope. Trial `t` at grid index `g` draws from
/// stream `(seed, (g, t))`.
pub fn mmd_rate(pi: &Measure, k: &KernelSpec, ns: &[usize], trials: usize, seed: u64) -> Result<RateResult> {
    numerics::check_rate_grid(ns, trials)?;
    let per_grid: Vec<Vec<f64>> = ns
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            (0..trials)
                .into_par_iter()
                .map(|t| {
                    let mut r = rng::stream(seed, rng::substream(g as u64, t as u64));
                    let sample = pi.sample(n, &mut r)?;
                    Ok(mmd(k, pi, &Measure::Discrete(sample))?.value)
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    RateResult::from_trials(ns, &per_grid)
}
