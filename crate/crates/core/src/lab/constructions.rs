//! Explicit measure pairs on which a Wasserstein/MMD comparison degrades:
//! Dirac clusters with vanishing low-order moments, and mass moved between
//! two disjoint supports.

use std::f64::consts::PI;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::measures::DiscreteMeasure;
use crate::numerics::{self, integrate_pieces};

/// Largest `k` accepted by [`binomial_construction`].
pub const MAX_BINOMIAL_K: usize = 60;

/// `alpha_i = i` and `beta_i = (-1)^(i-1) C(k, i-1)` for `i = 1..=k+1`.
///
/// The moment conditions `sum beta_i alpha_i^s = 0` for `0 <= s < k` are
/// verified in exact integer arithmetic before returning.
pub fn binomial_construction(k: usize) -> Result<(Vec<i64>, Vec<i64>)> {
    if k == 0 {
        return Err(invalid("binomial construction needs k >= 1"));
    }
    if k > MAX_BINOMIAL_K {
        return Err(invalid(format!("k = {k} exceeds {MAX_BINOMIAL_K}")));
    }
    let alpha: Vec<i64> = (1..=k as i64 + 1).collect();
    let beta: Vec<i64> = (0..=k as u64)
        .map(|j| {
            let c = numerics::binomial(k as u64, j).expect("C(60, j) fits in u64") as i64;
            if j % 2 == 0 {
                c
            } else {
                -c
            }
        })
        .collect();
    if let Some(s) = first_nonvanishing_moment(&alpha, &beta).filter(|&s| s < k) {
        return Err(Error::ConstraintViolation(format!("moment {s} of the binomial weights is nonzero")));
    }
    Ok((alpha, beta))
}

/// Smallest `s` with `sum beta_i alpha_i^s != 0`, in exact arithmetic.
/// Only `s <= alpha.len()` is examined.
pub fn first_nonvanishing_moment(alpha: &[i64], beta: &[i64]) -> Option<usize> {
    (0..=alpha.len()).find(|&s| {
        let total: BigInt = alpha.iter().zip(beta).map(|(&a, &b)| BigInt::from(b) * BigInt::from(a).pow(s as u32)).sum();
        total != BigInt::from(0)
    })
}

/// Clusters `x0 + eps * alpha_i * direction` with the binomial signs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialDiracs {
    pub k: usize,
    pub x0: Vec<f64>,
    pub radius: f64,
    pub direction: Vec<f64>,
}

impl BinomialDiracs {
    pub fn new(k: usize, x0: Vec<f64>, radius: f64, direction: Vec<f64>) -> Result<Self> {
        let c = BinomialDiracs { k, x0, radius, direction };
        c.validate()?;
        Ok(c)
    }

    /// Construction at the origin of `R^d` along the first axis, with room
    /// for `eps <= 1`.
    pub fn on_axis(k: usize, d: usize) -> Result<Self> {
        let mut u = vec![0.0; d.max(1)];
        u[0] = 1.0;
        Self::new(k, vec![0.0; d.max(1)], 2.0 * (k as f64 + 1.0), u)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k > MAX_BINOMIAL_K {
            return Err(invalid(format!("k = {} outside 1..={MAX_BINOMIAL_K}", self.k)));
        }
        if self.x0.is_empty() {
            return Err(Error::Empty("base point"));
        }
        if self.direction.len() != self.x0.len() {
            return Err(Error::DimensionMismatch { expected: self.x0.len(), got: self.direction.len() });
        }
        if !(numerics::norm(&self.direction) > 0.0) {
            return Err(invalid("direction must be nonzero"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(invalid(format!("radius {} must be positive", self.radius)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.x0.len()
    }

    /// Upper end of the admissible `eps` range.
    pub fn max_eps(&self) -> f64 {
        self.radius / ((self.k as f64 + 1.0) * numerics::norm(&self.direction))
    }

    /// Signed atoms `(beta_i / rho, x0 + eps alpha_i u)` of `pi_eps - pi'_eps`,
    /// where `rho` is the total positive weight.
    pub fn signed_atoms(&self, eps: f64) -> Result<Vec<(f64, Vec<f64>)>> {
        self.validate()?;
        if !(eps > 0.0 && eps < self.max_eps()) {
            return Err(invalid(format!("eps = {eps} outside (0, {})", self.max_eps())));
        }
        let (alpha, beta) = binomial_construction(self.k)?;
        let rho: f64 = beta.iter().filter(|&&b| b > 0).map(|&b| b as f64).sum();
        Ok(alpha
            .iter()
            .zip(&beta)
            .map(|(&a, &b)| {
                let x = self.x0.iter().zip(&self.direction).map(|(x, u)| x + eps * a as f64 * u).collect();
                (b as f64 / rho, x)
            })
            .collect())
    }
}

/// The pair `(pi_eps, pi'_eps)`: positive and negative parts of the signed
/// binomial measure, each normalized to a probability.
pub fn dirac_pair(c: &BinomialDiracs, eps: f64) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    let atoms = c.signed_atoms(eps)?;
    let part = |sign: f64| -> Result<DiscreteMeasure> {
        let (rows, w): (Vec<Vec<f64>>, Vec<f64>) =
            atoms.iter().filter(|(b, _)| b * sign > 0.0).map(|(b, x)| (x.clone(), b.abs())).unzip();
        DiscreteMeasure::from_rows(&rows, &w)
    };
    Ok((part(1.0)?, part(-1.0)?))
}

/// `pi_lambda = ((1 + lambda) pi0 + (1 - lambda) pi1) / 2` and the mirrored
/// `pi'_lambda`; their difference is `lambda (pi0 - pi1)`.
pub fn disjoint_segment(
    pi0: &DiscreteMeasure,
    pi1: &DiscreteMeasure,
    lambda: f64,
) -> Result<(DiscreteMeasure, DiscreteMeasure)> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid(format!("lambda = {lambda} outside [0, 1]")));
    }
    let gap = support_gap(pi0, pi1)?;
    if gap < 1e-9 {
        return Err(Error::OverlappingSupports(gap));
    }
    let a = pi0.mix(0.5 * (1.0 + lambda), pi1)?;
    let b = pi0.mix(0.5 * (1.0 - lambda), pi1)?;
    Ok((a, b))
}

/// Smallest distance between an atom of `a` and an atom of `b`.
pub fn support_gap(a: &DiscreteMeasure, b: &DiscreteMeasure) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch { expected: a.dim(), got: b.dim() });
    }
    let mut gap = f64::INFINITY;
    for i in 0..a.len() {
        for j in 0..b.len() {
            gap = gap.min(numerics::sq_dist(a.point(i), b.point(j)).sqrt());
        }
    }
    Ok(gap)
}

/// MMD between the two halves of [`BinomialDiracs`] at scale `eps` for a
/// Gaussian kernel, from the spectral integral of the signed
/// characteristic function along the line.
///
/// Summing kernel values directly loses every digit once the squared MMD
/// falls below round-off of the O(1) terms; here the cancellation happens
/// inside `|sum_i c_i exp(-i w t_i)|`, whose size is the MMD itself.
pub fn binomial_mmd_gaussian(kernel: &KernelSpec, c: &BinomialDiracs, eps: f64) -> Result<f64> {
    let KernelFamily::Gaussian { sigma, scale } = kernel.family else {
        return Err(Error::UnsupportedKernel(format!("line spectral MMD needs a Gaussian kernel, got {}", kernel.name())));
    };
    if kernel.dim() != c.dim() {
        return Err(Error::DimensionMismatch { expected: kernel.dim(), got: c.dim() });
    }
    let unorm = numerics::norm(&c.direction);
    let atoms: Vec<(f64, f64)> = c
        .signed_atoms(eps)?
        .iter()
        .enumerate()
        .map(|(i, (b, _))| (*b, eps * (i as f64 + 1.0) * unorm))
        .collect();
    // restriction of the kernel to the line is a 1-D Gaussian with the same profile
    let khat = |w: f64| scale * sigma * (2.0 * PI).sqrt() * (-0.5 * sigma * sigma * w * w).exp();
    let integrand = |w: f64| {
        let (mut re, mut im) = (0.0, 0.0);
        for &(b, t) in &atoms {
            let (s, co) = (w * t).sin_cos();
            re += b * co;
            im -= b * s;
        }
        khat(w) * (re * re + im * im)
    };
    // beyond w_max the Gaussian factor is below e^-60 of its peak
    let w_max = (120.0f64).sqrt() / sigma;
    let span = atoms.last().map(|a| a.1).unwrap_or(0.0) - atoms.first().map(|a| a.1).unwrap_or(0.0);
    let pieces = ((w_max * span / PI).ceil() as usize).max(16);
    let breaks: Vec<f64> = (0..=pieces).map(|i| w_max * i as f64 / pieces as f64).collect();
    // a coarse pass sizes the round-off floor: each integrand value carries an
    // absolute error of about 1e-16 |dphi| k̂, so the integral cannot be
    // resolved below 1e-16 sqrt(∫ k̂ ∫ k̂ |dphi|^2)
    let rough = integrate_pieces(&integrand, &breaks, 1e-6, 0.0, 100_000)?.value.max(0.0);
    let floor = 1e-15 * (rough * scale * sigma * (2.0 * PI).sqrt() * w_max).sqrt();
    let q = integrate_pieces(&integrand, &breaks, 1e-11, floor, 1_000_000)?;
    Ok((q.value / PI).max(0.0).sqrt())
}
