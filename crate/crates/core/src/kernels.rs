//! Translation-invariant positive semi-definite kernels `k(x, y) = k0(x - y)`,
//! their Fourier transforms and spectral samplers, plus the sliced and
//! mean-augmented constructions.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{invalid, Error, Result};
use crate::measures::Regularizer;
use crate::numerics::{self, bessel_k};
use crate::rng;

fn one() -> f64 {
    1.0
}

/// Kernel family and its parameters. Serialized with a `family` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelFamily {
    /// `scale * exp(-||z||^2 / (2 sigma^2))`
    Gaussian {
        sigma: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `exp(-||z|| / sigma)`
    Laplacian { sigma: f64 },
    /// Matérn with smoothness `nu` and length scale `sigma`, unit variance.
    Matern { nu: f64, sigma: f64 },
    /// `alpha * alpha` for a smoothing density `alpha`.
    ConvRoot { alpha: Regularizer },
    /// Average of a one-dimensional kernel over a fixed set of directions.
    Sliced { base: Box<KernelSpec>, thetas: Vec<Vec<f64>> },
    /// `base(x, y) + mean_weight * <x, y>`; not translation invariant.
    Modified { base: Box<KernelSpec>, mean_weight: f64 },
}

/// A kernel on `R^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    #[serde(flatten)]
    pub family: KernelFamily,
    pub d: usize,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("{name} = {v} must be positive and finite")))
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64, d: usize) -> Result<Self> {
        Self::gaussian_scaled(sigma, 1.0, d)
    }

    pub fn gaussian_scaled(sigma: f64, scale: f64, d: usize) -> Result<Self> {
        Self { family: KernelFamily::Gaussian { sigma, scale }, d }.validated()
    }

    pub fn laplacian(sigma: f64, d: usize) -> Result<Self> {
        Self { family: KernelFamily::Laplacian { sigma }, d }.validated()
    }

    pub fn matern(nu: f64, sigma: f64, d: usize) -> Result<Self> {
        Self { family: KernelFamily::Matern { nu, sigma }, d }.validated()
    }

    pub fn conv_root(alpha: Regularizer, d: usize) -> Result<Self> {
        Self { family: KernelFamily::ConvRoot { alpha }, d }.validated()
    }

    /// Sliced kernel over the rows of `thetas` (each a unit vector in `R^d`).
    pub fn sliced(base: KernelSpec, thetas: &Array2<f64>) -> Result<Self> {
        let d = thetas.ncols();
        let thetas = thetas.outer_iter().map(|r| r.to_vec()).collect();
        Self { family: KernelFamily::Sliced { base: Box::new(base), thetas }, d }.validated()
    }

    pub fn modified(base: KernelSpec, mean_weight: f64) -> Result<Self> {
        let d = base.d;
        Self { family: KernelFamily::Modified { base: Box::new(base), mean_weight }, d }.validated()
    }

    /// Checks parameter ranges; called by every constructor and after deserialization.
    pub fn validated(self) -> Result<Self> {
        if self.d == 0 {
            return Err(invalid("kernel dimension must be at least 1"));
        }
        match &self.family {
            KernelFamily::Gaussian { sigma, scale } => {
                positive("sigma", *sigma)?;
                positive("scale", *scale)?;
            }
            KernelFamily::Laplacian { sigma } => positive("sigma", *sigma)?,
            KernelFamily::Matern { nu, sigma } => {
                positive("nu", *nu)?;
                positive("sigma", *sigma)?;
            }
            KernelFamily::ConvRoot { alpha } => positive("alpha.sigma", alpha.sigma())?,
            KernelFamily::Sliced { base, thetas } => {
                if thetas.is_empty() {
                    return Err(Error::Empty("theta set"));
                }
                if base.d != 1 || !base.is_radial() {
                    return Err(Error::UnsupportedKernel("sliced base must be a one-dimensional radial kernel".into()));
                }
                base.clone().validated()?;
                for t in thetas {
                    if t.len() != self.d {
                        return Err(Error::DimensionMismatch { expected: self.d, got: t.len() });
                    }
                    let n = numerics::norm(t);
                    if (n - 1.0).abs() > 1e-9 {
                        return Err(Error::NonUnitDirection(n));
                    }
                }
            }
            KernelFamily::Modified { base, mean_weight } => {
                if base.d != self.d {
                    return Err(Error::DimensionMismatch { expected: self.d, got: base.d });
                }
                if !base.is_translation_invariant() {
                    return Err(Error::UnsupportedKernel("modified base must be translation invariant".into()));
                }
                if !(*mean_weight >= 0.0 && mean_weight.is_finite()) {
                    return Err(invalid(format!("mean_weight = {mean_weight} must be nonnegative")));
                }
                base.clone().validated()?;
            }
        }
        Ok(self)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let k: KernelSpec = serde_json::from_str(s)?;
        k.validated()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("kernel specs always serialize")
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn is_translation_invariant(&self) -> bool {
        !matches!(self.family, KernelFamily::Modified { .. })
    }

    fn is_radial(&self) -> bool {
        matches!(
            self.family,
            KernelFamily::Gaussian { .. }
                | KernelFamily::Laplacian { .. }
                | KernelFamily::Matern { .. }
                | KernelFamily::ConvRoot { .. }
        )
    }

    /// Short human-readable name.
    pub fn name(&self) -> &'static str {
        match self.family {
            KernelFamily::Gaussian { .. } => "gaussian",
            KernelFamily::Laplacian { .. } => "laplacian",
            KernelFamily::Matern { .. } => "matern",
            KernelFamily::ConvRoot { .. } => "conv_root",
            KernelFamily::Sliced { .. } => "sliced",
            KernelFamily::Modified { .. } => "modified",
        }
    }

    /// Radial profile `k0(z)` as a function of `r = ||z||` (radial families only).
    pub(crate) fn profile(&self, r: f64) -> f64 {
        let d = self.d as f64;
        match self.family {
            KernelFamily::Gaussian { sigma, scale } => scale * (-0.5 * r * r / (sigma * sigma)).exp(),
            KernelFamily::Laplacian { sigma } => (-r / sigma).exp(),
            KernelFamily::Matern { nu, sigma } => matern_profile(nu, r / sigma),
            KernelFamily::ConvRoot { alpha } => {
                let s = alpha.sigma();
                (4.0 * PI * s * s).powf(-d / 2.0) * (-r * r / (4.0 * s * s)).exp()
            }
            _ => unreachable!("profile of a non-radial kernel"),
        }
    }

    /// `k0(z)` without dimension checks. Panics for the modified kernel.
    pub(crate) fn k0(&self, z: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Sliced { base, thetas } => {
                let s: f64 = thetas.iter().map(|t| base.profile(numerics::dot(t, z).abs())).sum();
                s / thetas.len() as f64
            }
            KernelFamily::Modified { .. } => panic!("modified kernel has no k0"),
            _ => self.profile(numerics::norm(z)),
        }
    }

    /// `k(x, y)` without dimension checks.
    pub(crate) fn k(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.family {
            KernelFamily::Modified { base, mean_weight } => base.k(x, y) + mean_weight * numerics::dot(x, y),
            KernelFamily::Sliced { base, thetas } => {
                let s: f64 = thetas
                    .iter()
                    .map(|t| {
                        let u = numerics::dot(t, x) - numerics::dot(t, y);
                        base.profile(u.abs())
                    })
                    .sum();
                s / thetas.len() as f64
            }
            _ => {
                let r2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                self.profile(r2.sqrt())
            }
        }
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got });
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        Ok(self.k(x, y))
    }

    pub fn kappa0(&self, z: &[f64]) -> Result<f64> {
        if !self.is_translation_invariant() {
            return Err(Error::UnsupportedKernel("kappa0 of a non translation-invariant kernel".into()));
        }
        self.check_dim(z.len())?;
        Ok(self.k0(z))
    }

    /// `k0(0)`, the diagonal value of a translation-invariant kernel.
    pub fn diagonal(&self) -> Result<f64> {
        self.kappa0(&vec![0.0; self.d])
    }

    /// Fourier transform `∫ k0(z) exp(-i <omega, z>) dz`.
    pub fn fourier(&self, omega: &[f64]) -> Result<f64> {
        self.check_dim(omega.len())?;
        self.fourier_radial(numerics::norm(omega))
    }

    /// Fourier transform as a function of `||omega||` (radial families only).
    pub fn fourier_radial(&self, w: f64) -> Result<f64> {
        let d = self.d as f64;
        let w2 = w * w;
        match self.family {
            KernelFamily::Gaussian { sigma, scale } => {
                Ok(scale * (2.0 * PI * sigma * sigma).powf(d / 2.0) * (-0.5 * sigma * sigma * w2).exp())
            }
            KernelFamily::Laplacian { sigma } => {
                let c = (d * std::f64::consts::LN_2 + 0.5 * (d - 1.0) * PI.ln() + ln_gamma((d + 1.0) / 2.0)).exp() / sigma;
                Ok(c * (1.0 / (sigma * sigma) + w2).powf(-(d + 1.0) / 2.0))
            }
            KernelFamily::Matern { nu, sigma } => {
                let lc = d * std::f64::consts::LN_2 + 0.5 * d * PI.ln() + ln_gamma(nu + d / 2.0) + nu * (2.0 * nu).ln()
                    - ln_gamma(nu)
                    - 2.0 * nu * sigma.ln();
                Ok(lc.exp() * (2.0 * nu / (sigma * sigma) + w2).powf(-(nu + d / 2.0)))
            }
            KernelFamily::ConvRoot { alpha } => {
                let s = alpha.sigma();
                Ok((-s * s * w2).exp())
            }
            _ => Err(Error::UnsupportedKernel(format!("no closed-form Fourier transform for {}", self.name()))),
        }
    }

    /// Derivative of [`KernelSpec::fourier_radial`] with respect to `||omega||`.
    pub fn fourier_radial_deriv(&self, w: f64) -> Result<f64> {
        let d = self.d as f64;
        let f = self.fourier_radial(w)?;
        Ok(match self.family {
            KernelFamily::Gaussian { sigma, .. } => -sigma * sigma * w * f,
            KernelFamily::ConvRoot { alpha } => -2.0 * alpha.sigma().powi(2) * w * f,
            KernelFamily::Laplacian { sigma } => -(d + 1.0) * w / (1.0 / (sigma * sigma) + w * w) * f,
            KernelFamily::Matern { nu, sigma } => -(2.0 * nu + d) * w / (2.0 * nu / (sigma * sigma) + w * w) * f,
            _ => unreachable!("fourier_radial rejects other families"),
        })
    }

    /// One draw from the normalized spectral measure `Lambda` with
    /// `k0(z) / k0(0) = E cos(<omega, z>)`.
    pub fn sample_frequency<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let d = self.d;
        let gauss = |rng: &mut R, s: f64| -> Vec<f64> { (0..d).map(|_| s * rng.sample::<f64, _>(StandardNormal)).collect() };
        match &self.family {
            KernelFamily::Gaussian { sigma, .. } => Ok(gauss(rng, 1.0 / sigma)),
            KernelFamily::ConvRoot { alpha } => Ok(gauss(rng, 1.0 / (2f64.sqrt() * alpha.sigma()))),
            KernelFamily::Laplacian { sigma } => Ok(student_t(rng, d, 1.0, 1.0 / sigma)),
            KernelFamily::Matern { nu, sigma } => Ok(student_t(rng, d, 2.0 * nu, 1.0 / sigma)),
            KernelFamily::Sliced { base, thetas } => {
                let t = &thetas[rng.random_range(0..thetas.len())];
                let w = base.sample_frequency(rng)?[0];
                Ok(t.iter().map(|v| v * w).collect())
            }
            KernelFamily::Modified { .. } => {
                Err(Error::UnsupportedKernel("modified kernel has no spectral measure".into()))
            }
        }
    }

    /// `m x d` i.i.d. frequencies from the spectral measure.
    pub fn spectral_sample<R: Rng + ?Sized>(&self, m: usize, rng: &mut R) -> Result<Array2<f64>> {
        if m == 0 {
            return Err(Error::Empty("frequency count"));
        }
        let mut out = Array2::zeros((m, self.d));
        for mut row in out.outer_iter_mut() {
            let w = self.sample_frequency(rng)?;
            row.assign(&ndarray::ArrayView1::from(&w));
        }
        Ok(out)
    }

    /// Largest eigenvalue of `-Hess k0(0)`, in closed form.
    fn hessian_lambda_max(&self) -> Result<f64> {
        let d = self.d as f64;
        match &self.family {
            KernelFamily::Gaussian { sigma, scale } => Ok(scale / (sigma * sigma)),
            KernelFamily::ConvRoot { alpha } => {
                let s = alpha.sigma();
                Ok((4.0 * PI * s * s).powf(-d / 2.0) / (2.0 * s * s))
            }
            KernelFamily::Matern { nu, sigma } => {
                if *nu <= 1.0 {
                    return Err(Error::NonSmoothAtZero(format!("Matérn with nu = {nu} <= 1")));
                }
                Ok(nu / ((nu - 1.0) * sigma * sigma))
            }
            KernelFamily::Laplacian { .. } => Err(Error::NonSmoothAtZero("Laplacian kernel".into())),
            KernelFamily::Sliced { base, thetas } => {
                let lb = base.hessian_lambda_max()?;
                let n = self.d;
                let mut m = DMatrix::<f64>::zeros(n, n);
                for t in thetas {
                    for i in 0..n {
                        for j in 0..n {
                            m[(i, j)] += t[i] * t[j];
                        }
                    }
                }
                m /= thetas.len() as f64;
                let top = SymmetricEigen::new(m).eigenvalues.max();
                Ok(lb * top.max(0.0))
            }
            KernelFamily::Modified { .. } => {
                Err(Error::UnsupportedKernel("modified kernel is not translation invariant".into()))
            }
        }
    }

    /// Constant `C` with `MMD <= C * W_p`: the square root of the largest
    /// eigenvalue of `-Hess k0(0)`.
    pub fn hessian_constant(&self) -> Result<f64> {
        Ok(self.hessian_lambda_max()?.sqrt())
    }

    /// Same constant from a Richardson-extrapolated central-difference Hessian.
    pub fn hessian_constant_fd(&self, step: f64) -> Result<f64> {
        if !self.is_translation_invariant() {
            return Err(Error::UnsupportedKernel("modified kernel is not translation invariant".into()));
        }
        if let KernelFamily::Laplacian { .. } = self.family {
            return Err(Error::NonSmoothAtZero("Laplacian kernel".into()));
        }
        if let KernelFamily::Matern { nu, .. } = self.family {
            if nu <= 1.0 {
                return Err(Error::NonSmoothAtZero(format!("Matérn with nu = {nu} <= 1")));
            }
        }
        let n = self.d;
        let hess = |h: f64| {
            let mut m = DMatrix::<f64>::zeros(n, n);
            let at = |i: usize, si: f64, j: usize, sj: f64| {
                let mut z = vec![0.0; n];
                z[i] += si * h;
                z[j] += sj * h;
                self.k0(&z)
            };
            for i in 0..n {
                for j in 0..n {
                    m[(i, j)] = -(at(i, 1.0, j, 1.0) - at(i, 1.0, j, -1.0) - at(i, -1.0, j, 1.0) + at(i, -1.0, j, -1.0))
                        / (4.0 * h * h);
                }
            }
            m
        };
        let m = (hess(step / 2.0) * 4.0 - hess(step)) / 3.0;
        let m = (&m + m.transpose()) * 0.5;
        let top = SymmetricEigen::new(m).eigenvalues.max();
        Ok(top.max(0.0).sqrt())
    }
}

fn matern_profile(nu: f64, t: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let half = |k: f64| (nu - k).abs() < 1e-15;
    if half(0.5) {
        (-t).exp()
    } else if half(1.5) {
        let u = 3f64.sqrt() * t;
        (1.0 + u) * (-u).exp()
    } else if half(2.5) {
        let u = 5f64.sqrt() * t;
        (1.0 + u + u * u / 3.0) * (-u).exp()
    } else {
        let u = (2.0 * nu).sqrt() * t;
        if u > 700.0 {
            return 0.0;
        }
        2f64.powf(1.0 - nu) / gamma(nu) * u.powf(nu) * bessel_k(nu, u)
    }
}

/// Multivariate Student-t with `dof` degrees of freedom and scale `s`.
fn student_t<R: Rng + ?Sized>(rng: &mut R, d: usize, dof: f64, s: f64) -> Vec<f64> {
    let chi = ChiSquared::new(dof).expect("positive degrees of freedom");
    let v: f64 = chi.sample(rng);
    let f = s / (v / dof).sqrt();
    (0..d).map(|_| f * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// `t` deterministic directions on the unit sphere of `R^d`: evenly spaced on
/// the circle for `d = 2`, a spherical Fibonacci lattice for `d = 3`, and
/// normalized Gaussian draws otherwise. `seed` rotates the set.
pub fn sphere_directions(d: usize, t: usize, seed: u64) -> Result<Array2<f64>> {
    if d == 0 || t == 0 {
        return Err(Error::Empty("direction set"));
    }
    let mut r = rng::stream(seed, 0x5ee_d1f);
    let mut out = Array2::zeros((t, d));
    match d {
        1 => {
            for (i, mut row) in out.outer_iter_mut().enumerate() {
                row[0] = if i % 2 == 0 { 1.0 } else { -1.0 };
            }
        }
        2 => {
            let offset: f64 = r.random::<f64>() * 2.0 * PI / t as f64;
            for (i, mut row) in out.outer_iter_mut().enumerate() {
                let a = offset + 2.0 * PI * i as f64 / t as f64;
                row[0] = a.cos();
                row[1] = a.sin();
            }
        }
        3 => {
            let golden = PI * (3.0 - 5f64.sqrt());
            let offset: f64 = r.random::<f64>() * 2.0 * PI;
            for (i, mut row) in out.outer_iter_mut().enumerate() {
                let z = 1.0 - (2.0 * i as f64 + 1.0) / t as f64;
                let rho = (1.0 - z * z).sqrt();
                let a = offset + golden * i as f64;
                row[0] = rho * a.cos();
                row[1] = rho * a.sin();
                row[2] = z;
            }
        }
        _ => {
            for mut row in out.outer_iter_mut() {
                let g: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
                let n = numerics::norm(&g);
                row.assign(&ndarray::ArrayView1::from(&g).mapv(|v| v / n));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn families(d: usize) -> Vec<KernelSpec> {
        vec![
            KernelSpec::gaussian(0.7, d).unwrap(),
            KernelSpec::laplacian(1.3, d).unwrap(),
            KernelSpec::matern(1.5, 0.8, d).unwrap(),
            KernelSpec::matern(2.2, 1.1, d).unwrap(),
            KernelSpec::conv_root(Regularizer::gaussian(0.6).unwrap(), d).unwrap(),
        ]
    }

    #[test]
    fn fourier_derivative_matches_difference_quotient() {
        for k in families(2) {
            for &w in &[0.3, 1.0, 4.0] {
                let h = 1e-5;
                let fd = (k.fourier_radial(w + h).unwrap() - k.fourier_radial(w - h).unwrap()) / (2.0 * h);
                let an = k.fourier_radial_deriv(w).unwrap();
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{}", k.name());
            }
        }
    }

    #[test]
    fn closed_form_values() {
        let g = KernelSpec::gaussian(1.0, 1).unwrap();
        assert_eq!(g.eval(&[0.3], &[0.3]).unwrap(), 1.0);
        let l = KernelSpec::laplacian(1.0, 1).unwrap();
        assert_relative_eq!(l.kappa0(&[1.0]).unwrap(), 0.367_879_441_171_442_3, max_relative = 1e-15);
        assert!(matches!(g.eval(&[0.0, 1.0], &[0.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn matern_general_nu_matches_half_integer_forms() {
        // evaluate nu slightly away from the closed forms through the Bessel path
        for &(nu, t) in &[(0.5, 0.7), (1.5, 0.3), (2.5, 2.0)] {
            let u = (2.0 * nu as f64).sqrt() * t;
            let bessel = 2f64.powf(1.0 - nu) / gamma(nu) * u.powf(nu) * bessel_k(nu, u);
            assert_relative_eq!(matern_profile(nu, t), bessel, max_relative = 1e-9);
        }
    }

    #[test]
    fn conv_root_matches_grid_convolution() {
        let s = 0.5;
        let a = Regularizer::gaussian(s).unwrap();
        let k = KernelSpec::conv_root(a, 1).unwrap();
        let h = 1e-3;
        for &z in &[0.0, 0.4, 1.3] {
            let grid: f64 = (-8000..=8000)
                .map(|i| {
                    let t = i as f64 * h;
                    a.density(&[t]) * a.density(&[z - t]) * h
                })
                .sum();
            assert!((k.kappa0(&[z]).unwrap() - grid).abs() < 1e-6);
        }
    }

    #[test]
    fn fourier_examples() {
        let l = KernelSpec::laplacian(1.0, 1).unwrap();
        assert_relative_eq!(l.fourier(&[0.0]).unwrap(), 2.0, max_relative = 1e-14);
        let m = KernelSpec::matern(0.5, 1.0, 1).unwrap();
        assert_relative_eq!(m.fourier(&[1.0]).unwrap(), 1.0, max_relative = 1e-14);
        for d in 1..=3 {
            let l = KernelSpec::laplacian(0.7, d).unwrap();
            let m = KernelSpec::matern(0.5, 0.7, d).unwrap();
            for &w in &[0.0, 0.5, 3.0] {
                assert_relative_eq!(l.fourier_radial(w).unwrap(), m.fourier_radial(w).unwrap(), max_relative = 1e-12);
            }
        }
        let c = KernelSpec::conv_root(Regularizer::gaussian(0.8).unwrap(), 2).unwrap();
        assert_relative_eq!(c.fourier(&[0.3, 0.4]).unwrap(), (-0.64f64 * 0.25).exp(), max_relative = 1e-14);
    }

    #[test]
    fn fourier_inverts_to_kernel_in_one_dimension() {
        // k0(z) = (1/pi) ∫_0^∞ k̂(w) cos(wz) dw
        for k in families(1).into_iter().filter(|k| k.name() != "laplacian") {
            for &z in &[0.0, 0.5, 1.7] {
                let q = numerics::integrate_pieces(
                    |w| k.fourier_radial(w).unwrap() * (w * z).cos(),
                    &[0.0, 1.0, 10.0, 100.0, 1e3, 1e4],
                    1e-10,
                    1e-9,
                    100_000,
                )
                .unwrap();
                // Matérn tails beyond 1e4 contribute below 1e-8
                assert!((q.value / PI - k.k0(&[z])).abs() < 1e-7, "{} z={z}", k.name());
            }
        }
    }

    #[test]
    fn spectral_variance_gaussian() {
        let k = KernelSpec::gaussian(1.0, 1).unwrap();
        let w = k.spectral_sample(100_000, &mut stream(1, 0)).unwrap();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var - 1.0).abs() < 0.02);
    }

    #[test]
    fn bochner_reconstruction_all_families() {
        let m = 100_000;
        let tol = 4.0 / (m as f64).sqrt();
        for d in [1, 2, 3] {
            let mut ks = families(d);
            if d >= 2 {
                let thetas = sphere_directions(d, 16, 3).unwrap();
                ks.push(KernelSpec::sliced(KernelSpec::gaussian(0.9, 1).unwrap(), &thetas).unwrap());
            }
            for (fi, k) in ks.iter().enumerate() {
                let w = k.spectral_sample(m, &mut stream(17, (d * 10 + fi) as u64)).unwrap();
                let k00 = k.diagonal().unwrap();
                for probe in [0.3, 0.8, 1.5] {
                    let z: Vec<f64> = (0..d).map(|j| probe / (j as f64 + 1.0)).collect();
                    let mc = w.outer_iter().map(|r| r.dot(&ndarray::ArrayView1::from(&z)).cos()).sum::<f64>() / m as f64;
                    let exact = k.k0(&z) / k00;
                    assert!((mc - exact).abs() < tol, "{} d={d} z={probe}: {mc} vs {exact}", k.name());
                }
            }
        }
    }

    #[test]
    fn matern_half_and_laplacian_samplers_agree() {
        let a = KernelSpec::laplacian(1.0, 1).unwrap();
        let b = KernelSpec::matern(0.5, 1.0, 1).unwrap();
        let m = 50_000;
        let wa = a.spectral_sample(m, &mut stream(5, 1)).unwrap();
        let wb = b.spectral_sample(m, &mut stream(5, 2)).unwrap();
        let mut xa: Vec<f64> = wa.iter().map(|v| v.abs()).collect();
        let mut xb: Vec<f64> = wb.iter().map(|v| v.abs()).collect();
        xa.sort_by(f64::total_cmp);
        xb.sort_by(f64::total_cmp);
        // two-sample Kolmogorov–Smirnov statistic at the 0.1% level
        let mut ks: f64 = 0.0;
        let (mut i, mut j) = (0, 0);
        while i < m && j < m {
            if xa[i] <= xb[j] {
                i += 1;
            } else {
                j += 1;
            }
            ks = ks.max((i as f64 - j as f64).abs() / m as f64);
        }
        assert!(ks < 1.95 * (2.0 / m as f64).sqrt());
    }

    #[test]
    fn hessian_constants() {
        assert_relative_eq!(KernelSpec::gaussian(1.0, 3).unwrap().hessian_constant().unwrap(), 1.0);
        let g2 = KernelSpec::gaussian(2.0, 2).unwrap();
        assert!((g2.hessian_constant().unwrap() - 0.5).abs() < 1e-6);
        assert!((g2.hessian_constant_fd(1e-4).unwrap() - 0.5).abs() < 1e-6);
        assert!(matches!(KernelSpec::laplacian(1.0, 1).unwrap().hessian_constant(), Err(Error::NonSmoothAtZero(_))));
        assert!(matches!(KernelSpec::matern(1.0, 1.0, 1).unwrap().hessian_constant(), Err(Error::NonSmoothAtZero(_))));
        let thetas = sphere_directions(2, 5, 0).unwrap();
        let cases = vec![
            KernelSpec::gaussian_scaled(0.7, 2.5, 2).unwrap(),
            KernelSpec::matern(2.5, 0.9, 2).unwrap(),
            KernelSpec::matern(1.7, 1.2, 1).unwrap(),
            KernelSpec::conv_root(Regularizer::gaussian(0.4).unwrap(), 3).unwrap(),
            KernelSpec::sliced(KernelSpec::gaussian(0.5, 1).unwrap(), &thetas).unwrap(),
        ];
        for k in cases {
            let a = k.hessian_constant().unwrap();
            let f = k.hessian_constant_fd(1e-4).unwrap();
            assert!(((a - f) / a).abs() < 1e-5, "{}: {a} vs {f}", k.name());
        }
    }

    #[test]
    fn gaussian_lipschitz_condition() {
        let k = KernelSpec::gaussian(0.8, 1).unwrap();
        for i in 0..200 {
            let z = -5.0 + 0.05 * i as f64;
            assert!(2.0 * (1.0 - k.k0(&[z])) <= z * z / 0.64 + 1e-15);
        }
    }

    #[test]
    fn sliced_and_modified_eval() {
        let base = KernelSpec::gaussian(1.0, 1).unwrap();
        let e1 = ndarray::array![[1.0, 0.0]];
        let s = KernelSpec::sliced(base.clone(), &e1).unwrap();
        assert_relative_eq!(s.eval(&[0.5, 9.0], &[1.5, -3.0]).unwrap(), (-0.5f64).exp(), max_relative = 1e-15);
        let g = KernelSpec::gaussian(1.0, 2).unwrap();
        let m = KernelSpec::modified(g, 0.5).unwrap();
        assert_relative_eq!(m.eval(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0 + 0.5 * 5.0);
        assert!(m.kappa0(&[0.0, 0.0]).is_err());
        assert!(matches!(m.hessian_constant(), Err(Error::UnsupportedKernel(_))));
        assert!(KernelSpec::sliced(base, &Array2::zeros((0, 2))).is_err());
    }

    fn min_gram_eig(k: &KernelSpec, pts: &[Vec<f64>]) -> (f64, f64) {
        let n = pts.len();
        let g = DMatrix::from_fn(n, n, |i, j| k.k(&pts[i], &pts[j]));
        let tr = g.trace();
        (SymmetricEigen::new(g).eigenvalues.min(), tr)
    }

    #[test]
    fn sliced_gram_is_psd() {
        let thetas = sphere_directions(2, 64, 9).unwrap();
        let k = KernelSpec::sliced(KernelSpec::laplacian(0.5, 1).unwrap(), &thetas).unwrap();
        let mut r = stream(2, 2);
        let pts: Vec<Vec<f64>> = (0..8).map(|_| vec![r.random::<f64>(), r.random::<f64>()]).collect();
        let (e, tr) = min_gram_eig(&k, &pts);
        assert!(e >= -1e-8 * tr);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let thetas = sphere_directions(3, 7, 4).unwrap();
        let specs = vec![
            KernelSpec::gaussian_scaled(0.1 + 0.2, 1.0 / 3.0, 2).unwrap(),
            KernelSpec::matern(2.0f64.sqrt(), std::f64::consts::E, 1).unwrap(),
            KernelSpec::sliced(KernelSpec::laplacian(0.3, 1).unwrap(), &thetas).unwrap(),
            KernelSpec::modified(KernelSpec::conv_root(Regularizer::gaussian(0.7).unwrap(), 2).unwrap(), 0.5).unwrap(),
        ];
        for k in specs {
            let back = KernelSpec::from_json(&k.to_json()).unwrap();
            assert_eq!(back, k);
        }
        let k = KernelSpec::from_json(r#"{"family":"gaussian","sigma":1,"d":1}"#).unwrap();
        assert_eq!(k, KernelSpec::gaussian(1.0, 1).unwrap());
        assert!(KernelSpec::from_json(r#"{"family":"gaussian","sigma":-1,"d":1}"#).is_err());
        assert!(KernelSpec::from_json(r#"{"family":"cauchy","sigma":1,"d":1}"#).is_err());
    }

    #[test]
    fn sphere_directions_are_unit() {
        for d in 1..=5 {
            let t = sphere_directions(d, 33, 1).unwrap();
            for r in t.outer_iter() {
                assert!((r.dot(&r) - 1.0).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn symmetric_and_bounded_by_diagonal(
            x in prop::collection::vec(-3.0f64..3.0, 2),
            y in prop::collection::vec(-3.0f64..3.0, 2),
        ) {
            for k in families(2) {
                let a = k.eval(&x, &y).unwrap();
                let b = k.eval(&y, &x).unwrap();
                prop_assert_eq!(a, b);
                prop_assert!(a.abs() <= k.eval(&x, &x).unwrap() + 1e-15);
                prop_assert_eq!(a, k.kappa0(&[x[0] - y[0], x[1] - y[1]]).unwrap());
            }
        }

        #[test]
        fn random_grams_are_psd(seed in 0u64..1000) {
            let mut r = stream(seed, 0);
            let pts: Vec<Vec<f64>> = (0..8).map(|_| (0..3).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
            for k in families(3) {
                let (e, tr) = min_gram_eig(&k, &pts);
                prop_assert!(e >= -1e-8 * tr, "{}: {}", k.name(), e);
            }
        }
    }
}
