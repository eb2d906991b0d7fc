//! Probability measures on R^d: weighted point clouds, isotropic Gaussian
//! mixtures, Gaussian smoothing and dataset I/O.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{invalid, Error, Result};
use crate::numerics::{self, integrate, integrate_pieces};

/// Finite mixture of Dirac masses, `sum_i w_i delta_{x_i}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteMeasure {
    points: Array2<f64>,
    weights: Array1<f64>,
}

fn normalize_weights(weights: &[f64]) -> Result<Array1<f64>> {
    if weights.is_empty() {
        return Err(Error::Empty("weights"));
    }
    for (index, &value) in weights.iter().enumerate() {
        if value < 0.0 || value.is_nan() {
            return Err(Error::NegativeWeight { index, value });
        }
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0 && total.is_finite()) {
        return Err(Error::ZeroMass(total));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

impl DiscreteMeasure {
    /// Builds a measure from an `n x d` array and `n` nonnegative weights,
    /// renormalized to unit mass.
    pub fn new(points: Array2<f64>, weights: &[f64]) -> Result<Self> {
        if points.nrows() == 0 {
            return Err(Error::Empty("points"));
        }
        if points.ncols() == 0 {
            return Err(invalid("points must have dimension at least 1"));
        }
        if weights.len() != points.nrows() {
            return Err(Error::DimensionMismatch { expected: points.nrows(), got: weights.len() });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        let weights = normalize_weights(weights)?;
        let points = points.as_standard_layout().into_owned();
        Ok(Self { points, weights })
    }

    /// Builds a measure from row vectors, rejecting ragged input.
    pub fn from_rows(rows: &[Vec<f64>], weights: &[f64]) -> Result<Self> {
        Self::new(rows_to_array(rows)?, weights)
    }

    /// Empirical measure `(1/n) sum delta_{x_i}`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        Self::new(points, &vec![1.0; n])
    }

    pub fn uniform_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::uniform(rows_to_array(rows)?)
    }

    pub fn dirac(x: &[f64]) -> Result<Self> {
        Self::from_rows(&[x.to_vec()], &[1.0])
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn weight_slice(&self) -> &[f64] {
        self.weights.as_slice().expect("weights are contiguous")
    }

    pub fn point(&self, i: usize) -> &[f64] {
        self.points.row(i).to_slice().expect("points are in standard layout")
    }

    /// True if all weights equal `1/n` within round-off.
    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|&w| (w - w0).abs() <= 1e-12 * w0.max(1e-300) + 1e-15)
    }

    pub fn mean(&self) -> Array1<f64> {
        self.points.t().dot(&self.weights)
    }

    /// `E ||x||^s` for `s >= 1`.
    pub fn moment(&self, s: f64) -> Result<f64> {
        if !(s >= 1.0) {
            return Err(invalid(format!("moment order {s} < 1")));
        }
        Ok(self
            .points
            .outer_iter()
            .zip(&self.weights)
            .map(|(x, w)| w * x.dot(&x).sqrt().powf(s))
            .sum())
    }

    /// Pushforward under `x -> <x, theta>`; atoms are kept, weights unchanged.
    pub fn project(&self, theta: &[f64]) -> Result<Self> {
        if theta.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: theta.len() });
        }
        let norm = numerics::norm(theta);
        if (norm - 1.0).abs() > 1e-9 {
            return Err(Error::NonUnitDirection(norm));
        }
        let proj = self.points.dot(&ArrayView1::from(theta));
        let points = proj.insert_axis(Axis(1));
        Ok(Self { points, weights: self.weights.clone() })
    }

    /// Pushforward under `x -> x + t`.
    pub fn translate(&self, t: &[f64]) -> Result<Self> {
        if t.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: t.len() });
        }
        let points = &self.points + &ArrayView1::from(t);
        Ok(Self { points, weights: self.weights.clone() })
    }

    /// Translate so that the mean is zero.
    pub fn centered(&self) -> Self {
        let m = self.mean();
        let points = &self.points - &m;
        Self { points, weights: self.weights.clone() }
    }

    /// The convex combination `a * self + (1 - a) * other` as a concatenated atom list.
    pub fn mix(&self, a: f64, other: &Self) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) {
            return Err(invalid(format!("mixing weight {a} outside [0, 1]")));
        }
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let points = ndarray::concatenate(Axis(0), &[self.points.view(), other.points.view()])
            .expect("equal column counts");
        let weights: Vec<f64> = self
            .weights
            .iter()
            .map(|w| a * w)
            .chain(other.weights.iter().map(|w| (1.0 - a) * w))
            .collect();
        Self::new(points, &weights)
    }

    /// Merges coincident atoms and drops zero weights. The order of first
    /// appearance is kept.
    pub fn merged(&self) -> Self {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut weights: Vec<f64> = Vec::new();
        for (x, &w) in self.points.outer_iter().zip(&self.weights) {
            if w == 0.0 {
                continue;
            }
            match rows.iter().position(|r| r.as_slice() == x.as_slice().expect("standard layout")) {
                Some(j) => weights[j] += w,
                None => {
                    rows.push(x.to_vec());
                    weights.push(w);
                }
            }
        }
        Self::from_rows(&rows, &weights).expect("merging preserves validity")
    }

    /// `n` i.i.d. draws, returned as a uniform empirical measure.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Self> {
        if n == 0 {
            return Err(Error::Empty("sample size"));
        }
        let idx = WeightedIndex::new(self.weights.iter().copied()).map_err(|e| invalid(e.to_string()))?;
        let mut out = Array2::zeros((n, self.dim()));
        for mut row in out.outer_iter_mut() {
            row.assign(&self.points.row(idx.sample(rng)));
        }
        Self::uniform(out)
    }

    /// `E exp(-i <omega, x>)`.
    pub fn char_fn(&self, omega: &[f64]) -> Complex64 {
        self.points
            .outer_iter()
            .zip(&self.weights)
            .map(|(x, &w)| Complex64::from_polar(w, -x.dot(&ArrayView1::from(omega))))
            .sum()
    }
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>> {
    let first = rows.first().ok_or(Error::Empty("points"))?;
    let d = first.len();
    let mut flat = Vec::with_capacity(rows.len() * d);
    for (row, r) in rows.iter().enumerate() {
        if r.len() != d {
            return Err(Error::RaggedDimensions { row, expected: d, got: r.len() });
        }
        flat.extend_from_slice(r);
    }
    Array2::from_shape_vec((rows.len(), d), flat).map_err(|e| invalid(e.to_string()))
}

/// Mixture of isotropic Gaussians `sum_k w_k N(c_k, sigma_k^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    weights: Array1<f64>,
    means: Array2<f64>,
    sigmas: Array1<f64>,
}

impl GaussianMixture {
    pub fn new(weights: &[f64], means: Array2<f64>, sigmas: &[f64]) -> Result<Self> {
        if means.nrows() == 0 {
            return Err(Error::Empty("components"));
        }
        if weights.len() != means.nrows() || sigmas.len() != means.nrows() {
            return Err(Error::DimensionMismatch { expected: means.nrows(), got: weights.len().min(sigmas.len()) });
        }
        if let Some(s) = sigmas.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(invalid(format!("component sigma {s} must be positive")));
        }
        let weights = normalize_weights(weights)?;
        Ok(Self { weights, means: means.as_standard_layout().into_owned(), sigmas: Array1::from(sigmas.to_vec()) })
    }

    /// One-dimensional mixture from parallel slices.
    pub fn new_1d(weights: &[f64], means: &[f64], sigmas: &[f64]) -> Result<Self> {
        let means = Array2::from_shape_vec((means.len(), 1), means.to_vec()).map_err(|e| invalid(e.to_string()))?;
        Self::new(weights, means, sigmas)
    }

    pub fn gaussian(mean: &[f64], sigma: f64) -> Result<Self> {
        let means = Array2::from_shape_vec((1, mean.len()), mean.to_vec()).map_err(|e| invalid(e.to_string()))?;
        Self::new(&[1.0], means, &[sigma])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn sigmas(&self) -> &Array1<f64> {
        &self.sigmas
    }

    pub fn mean(&self) -> Array1<f64> {
        self.means.t().dot(&self.weights)
    }

    /// `E exp(-i <omega, x>)`.
    pub fn char_fn(&self, omega: &[f64]) -> Complex64 {
        let w2 = numerics::dot(omega, omega);
        let omega = ArrayView1::from(omega);
        self.means
            .outer_iter()
            .zip(&self.weights)
            .zip(&self.sigmas)
            .map(|((c, &a), &s)| Complex64::from_polar(a * (-0.5 * s * s * w2).exp(), -c.dot(&omega)))
            .sum()
    }

    fn require_1d(&self) -> Result<()> {
        if self.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.dim() });
        }
        Ok(())
    }

    fn comps_1d(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(self.means.column(0))
            .zip(&self.sigmas)
            .map(|((&w, &c), &s)| (w, c, s))
    }

    /// Density on the real line (d = 1 only; panics otherwise).
    pub fn pdf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.dim(), 1);
        self.comps_1d().map(|(w, c, s)| w * numerics::normal_pdf((x - c) / s) / s).sum()
    }

    pub fn cdf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.dim(), 1);
        self.comps_1d().map(|(w, c, s)| w * numerics::normal_cdf((x - c) / s)).sum()
    }

    /// Upper tail `1 - F(x)`, accurate for large `x`.
    pub fn sf_1d(&self, x: f64) -> f64 {
        assert_eq!(self.dim(), 1);
        self.comps_1d().map(|(w, c, s)| w * numerics::normal_sf((x - c) / s)).sum()
    }

    /// Interval outside of which every component has negligible mass.
    pub fn support_bracket(&self, width: f64) -> (f64, f64) {
        let smax = self.sigmas.iter().cloned().fold(0.0, f64::max);
        let lo = self.means.column(0).iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = self.means.column(0).iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo - width * smax, hi + width * smax)
    }

    /// Breakpoints clustering quadrature nodes around each component.
    pub(crate) fn quadrature_breaks(&self, width: f64) -> Vec<f64> {
        let mut b: Vec<f64> = Vec::new();
        for (_, c, s) in self.comps_1d() {
            for k in [-width, -4.0, -1.0, 0.0, 1.0, 4.0, width] {
                b.push(c + k * s);
            }
        }
        b.sort_by(f64::total_cmp);
        b.dedup();
        b
    }

    /// Quantile function by bisection, `|F(x) - q| <= 1e-12`.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        self.require_1d()?;
        if !(q > 0.0 && q < 1.0) {
            return Err(invalid(format!("quantile level {q} outside (0, 1)")));
        }
        let smax = self.sigmas.iter().cloned().fold(0.0, f64::max);
        let cmax = self.means.column(0).iter().fold(0.0f64, |a, c| a.max(c.abs()));
        let mean = self.mean()[0];
        let lo = mean - 12.0 * smax - cmax - 1.0;
        let hi = mean + 12.0 * smax + cmax + 1.0;
        let (mut lo, mut hi) = (lo, hi);
        // widen for extreme levels; the cdf may saturate below q in floating point
        for _ in 0..64 {
            if self.cdf_1d(lo) <= q {
                break;
            }
            lo -= hi - lo;
        }
        for _ in 0..64 {
            if self.cdf_1d(hi) >= q {
                break;
            }
            hi += hi - lo;
        }
        Ok(numerics::bisect_monotone(|x| self.cdf_1d(x), lo, hi, q, 1e-12))
    }

    /// `E ||x||^s` by deterministic quadrature (relative accuracy about 1e-8).
    pub fn moment(&self, s: f64) -> Result<f64> {
        if !(s >= 1.0) {
            return Err(invalid(format!("moment order {s} < 1")));
        }
        let d = self.dim();
        let mut total = 0.0;
        for ((c, &w), &sig) in self.means.outer_iter().zip(&self.weights).zip(&self.sigmas) {
            let r0 = c.dot(&c).sqrt();
            total += w * gaussian_norm_moment(r0, sig, d, s)?;
        }
        Ok(total)
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DiscreteMeasure> {
        if n == 0 {
            return Err(Error::Empty("sample size"));
        }
        let idx = WeightedIndex::new(self.weights.iter().copied()).map_err(|e| invalid(e.to_string()))?;
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for mut row in out.outer_iter_mut() {
            let k = idx.sample(rng);
            let s = self.sigmas[k];
            for (j, v) in row.iter_mut().enumerate() {
                let z: f64 = rng.sample(StandardNormal);
                *v = self.means[[k, j]] + s * z;
            }
        }
        DiscreteMeasure::uniform(out)
    }
}

/// `E ||c + sigma Z||^s` for `Z ~ N(0, I_d)` with `||c|| = r0`. The norm is split
/// into the coordinate along `c` and a chi-distributed orthogonal remainder.
fn gaussian_norm_moment(r0: f64, sigma: f64, d: usize, s: f64) -> Result<f64> {
    let outer = |z: f64| -> f64 {
        let a = r0 + sigma * z;
        if d == 1 {
            return a.abs().powf(s) * numerics::normal_pdf(z);
        }
        let k = (d - 1) as f64;
        let log_norm = (k / 2.0 - 1.0) * std::f64::consts::LN_2 + ln_gamma(k / 2.0);
        let chi = |r: f64| {
            if r <= 0.0 {
                return if k == 1.0 { (-log_norm).exp() * (a * a).powf(s / 2.0) } else { 0.0 };
            }
            let dens = ((k - 1.0) * r.ln() - 0.5 * r * r - log_norm).exp();
            (a * a + sigma * sigma * r * r).powf(s / 2.0) * dens
        };
        let upper = k.sqrt() + 12.0;
        integrate(chi, 0.0, upper, 1e-10, 0.0).map(|q| q.value).unwrap_or(f64::NAN) * numerics::normal_pdf(z)
    };
    let mut breaks = vec![-12.0, -4.0, 0.0, 4.0, 12.0];
    if sigma > 0.0 {
        let z0 = -r0 / sigma;
        if z0 > -12.0 {
            breaks.push(z0);
        }
        breaks.sort_by(f64::total_cmp);
        breaks.dedup();
    }
    let q = integrate_pieces(outer, &breaks, 1e-9, 0.0, 20_000)?;
    if !q.value.is_finite() {
        return Err(Error::QuadratureNonConvergence("moment integrand".into()));
    }
    Ok(q.value)
}

/// Smoothing density used to regularize a measure before comparing it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Regularizer {
    Gaussian { sigma: f64 },
}

impl Regularizer {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid(format!("regularizer sigma {sigma} must be positive")));
        }
        Ok(Regularizer::Gaussian { sigma })
    }

    pub fn sigma(&self) -> f64 {
        match *self {
            Regularizer::Gaussian { sigma } => sigma,
        }
    }

    /// `∫ ||z||^p alpha(z) dz` in dimension `d`.
    pub fn abs_moment(&self, p: f64, d: usize) -> f64 {
        let sigma = self.sigma();
        let d = d as f64;
        sigma.powf(p) * (0.5 * p * std::f64::consts::LN_2 + ln_gamma((p + d) / 2.0) - ln_gamma(d / 2.0)).exp()
    }

    /// Density of the regularizer at `z`.
    pub fn density(&self, z: &[f64]) -> f64 {
        let sigma = self.sigma();
        let d = z.len() as f64;
        (2.0 * std::f64::consts::PI * sigma * sigma).powf(-d / 2.0) * (-numerics::dot(z, z) / (2.0 * sigma * sigma)).exp()
    }
}

/// `alpha * mu`: one Gaussian component per atom.
pub fn smooth(mu: &DiscreteMeasure, alpha: &Regularizer) -> GaussianMixture {
    let s = alpha.sigma();
    GaussianMixture {
        weights: mu.weights.clone(),
        means: mu.points.clone(),
        sigmas: Array1::from_elem(mu.len(), s),
    }
}

/// A measure that can be sampled and whose characteristic function is known.
#[derive(Debug, Clone, PartialEq)]
pub enum Measure {
    Discrete(DiscreteMeasure),
    Gmm(GaussianMixture),
}

impl Measure {
    pub fn dim(&self) -> usize {
        match self {
            Measure::Discrete(m) => m.dim(),
            Measure::Gmm(g) => g.dim(),
        }
    }

    pub fn mean(&self) -> Array1<f64> {
        match self {
            Measure::Discrete(m) => m.mean(),
            Measure::Gmm(g) => g.mean(),
        }
    }

    pub fn moment(&self, s: f64) -> Result<f64> {
        match self {
            Measure::Discrete(m) => m.moment(s),
            Measure::Gmm(g) => g.moment(s),
        }
    }

    pub fn char_fn(&self, omega: &[f64]) -> Complex64 {
        match self {
            Measure::Discrete(m) => m.char_fn(omega),
            Measure::Gmm(g) => g.char_fn(omega),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<DiscreteMeasure> {
        match self {
            Measure::Discrete(m) => m.sample(n, rng),
            Measure::Gmm(g) => g.sample(n, rng),
        }
    }

    /// Components as `(weight, mean, sigma)`, with `sigma = 0` for atoms.
    pub fn components(&self) -> Vec<(f64, &[f64], f64)> {
        match self {
            Measure::Discrete(m) => (0..m.len()).map(|i| (m.weights[i], m.point(i), 0.0)).collect(),
            Measure::Gmm(g) => (0..g.len())
                .map(|i| (g.weights[i], g.means.row(i).to_slice().expect("standard layout"), g.sigmas[i]))
                .collect(),
        }
    }
}

impl From<DiscreteMeasure> for Measure {
    fn from(m: DiscreteMeasure) -> Self {
        Measure::Discrete(m)
    }
}

impl From<GaussianMixture> for Measure {
    fn from(g: GaussianMixture) -> Self {
        Measure::Gmm(g)
    }
}

/// Families of measures on which embeddability is probed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum ModelSet {
    /// Mixtures of `k` Diracs inside the ball `B(center, radius)`.
    DiracMixture { k: usize, center: Vec<f64>, radius: f64 },
    /// One-dimensional mixtures of `k` Gaussians, sigmas in `[sigma_min, 2 sigma_min]`
    /// and means in `[-mean_window, mean_window]`.
    Gmm1d { k: usize, sigma_min: f64, mean_window: f64 },
    /// Measures with `E ||x||^s <= m`.
    BoundedMoment { s: f64, m: f64 },
}

impl ModelSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSet::DiracMixture { k, center, radius } => {
                if *k == 0 || center.is_empty() || !(*radius > 0.0) {
                    return Err(invalid("dirac mixture needs k >= 1, d >= 1 and radius > 0"));
                }
            }
            ModelSet::Gmm1d { k, sigma_min, mean_window } => {
                if *k == 0 || !(*sigma_min > 0.0) || !(*mean_window >= 0.0) {
                    return Err(invalid("gmm model set needs k >= 1, sigma_min > 0, mean_window >= 0"));
                }
            }
            ModelSet::BoundedMoment { s, m } => {
                if !(*s > 1.0) || !(*m > 0.0) {
                    return Err(invalid("bounded-moment model set needs s > 1 and M > 0"));
                }
            }
        }
        Ok(())
    }
}

const BINARY_MAGIC: &[u8; 5] = b"WMMD1";

/// Reads an `n x d` dataset: binary if the file starts with the `WMMD1` tag,
/// CSV otherwise (one row per sample, optional header).
pub fn read_dataset(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(&bytes)
    } else {
        parse_csv(&bytes)
    }
}

pub fn parse_csv(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(bytes);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let parsed: std::result::Result<Vec<f64>, _> = record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(r) => rows.push(r),
            // a non-numeric first row is a header
            Err(_) if i == 0 => continue,
            Err(e) => return Err(Error::Parse(format!("row {}: {e}", i + 1))),
        }
    }
    rows_to_array(&rows)
}

fn decode_binary(bytes: &[u8]) -> Result<Array2<f64>> {
    let mut cursor = &bytes[BINARY_MAGIC.len()..];
    let mut buf = [0u8; 8];
    cursor.read_exact(&mut buf)?;
    let n = u64::from_le_bytes(buf) as usize;
    cursor.read_exact(&mut buf)?;
    let d = u64::from_le_bytes(buf) as usize;
    let count = n.checked_mul(d).ok_or_else(|| Error::Parse("header size overflow".into()))?;
    if cursor.len() != count * 8 {
        return Err(Error::Parse(format!("expected {count} values, found {} bytes", cursor.len())));
    }
    let values: Vec<f64> = cursor
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    if n == 0 {
        return Err(Error::Empty("points"));
    }
    Array2::from_shape_vec((n, d), values).map_err(|e| Error::Parse(e.to_string()))
}

pub fn write_binary(path: impl AsRef<Path>, points: &Array2<f64>) -> Result<()> {
    let mut out = Vec::with_capacity(21 + points.len() * 8);
    out.extend_from_slice(BINARY_MAGIC);
    out.extend_from_slice(&(points.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(points.ncols() as u64).to_le_bytes());
    for v in points.as_standard_layout().iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

/// Writes points as headerless CSV with round-trip float formatting.
pub fn write_csv(path: impl AsRef<Path>, points: &Array2<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    for row in points.outer_iter() {
        w.write_record(row.iter().map(|v| format!("{v:e}")))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use ndarray::array;

    #[test]
    fn construction_normalizes_and_validates() {
        let m = DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0]], &[2.0, 2.0]).unwrap();
        assert_eq!(m.weight_slice(), &[0.5, 0.5]);
        let err = DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0]], &[1.0, -1.0]).unwrap_err();
        assert!(matches!(err, Error::NegativeWeight { index: 1, .. }));
        let err = DiscreteMeasure::from_rows(&[vec![0.0], vec![1.0, 2.0]], &[1.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::RaggedDimensions { row: 1, .. }));
        assert!(matches!(DiscreteMeasure::from_rows(&[], &[]).unwrap_err(), Error::Empty(_)));
        let d = DiscreteMeasure::dirac(&[0.0]).unwrap();
        assert_eq!(d.weight_slice(), &[1.0]);
    }

    #[test]
    fn projection_examples() {
        let m = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        assert_eq!(m.project(&[1.0, 0.0]).unwrap().point(0), &[3.0]);
        let m = DiscreteMeasure::dirac(&[1.0, 1.0]).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(m.project(&[h, h]).unwrap().point(0)[0], 2f64.sqrt(), epsilon = 1e-15);
        let m = DiscreteMeasure::uniform_rows(&[vec![0.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let p = m.project(&[1.0, 0.0]).unwrap().merged();
        assert_eq!(p.len(), 1);
        assert_eq!(p.weight_slice(), &[1.0]);
        assert!(matches!(m.project(&[1.0, 1.0]), Err(Error::NonUnitDirection(_))));
    }

    #[test]
    fn mean_and_moment() {
        let m = DiscreteMeasure::uniform_rows(&[vec![0.0], vec![2.0]]).unwrap();
        assert_eq!(m.mean()[0], 1.0);
        let d = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        assert_relative_eq!(d.moment(3.0).unwrap(), 125.0, max_relative = 1e-14);
        assert!(d.moment(0.5).is_err());
    }

    #[test]
    fn gaussian_moments_by_quadrature() {
        let g = GaussianMixture::gaussian(&[0.0], 1.0).unwrap();
        assert_relative_eq!(g.moment(2.0).unwrap(), 1.0, max_relative = 1e-6);
        // E||Z||^2 = d and E||c + Z||^2 = ||c||^2 + d
        let g = GaussianMixture::gaussian(&[1.0, 2.0, 2.0], 1.0).unwrap();
        assert_relative_eq!(g.moment(2.0).unwrap(), 12.0, max_relative = 1e-6);
        let g = GaussianMixture::gaussian(&[0.0, 0.0], 0.5).unwrap();
        // chi with 2 dof: E R^4 = 8, scaled by sigma^4
        assert_relative_eq!(g.moment(4.0).unwrap(), 8.0 * 0.5f64.powi(4), max_relative = 1e-6);
    }

    #[test]
    fn gmm_moment_matches_monte_carlo() {
        let g = GaussianMixture::new(&[0.3, 0.7], array![[1.0, -0.5], [-0.2, 0.4]], &[0.5, 1.2]).unwrap();
        let exact = g.moment(3.0).unwrap();
        let s = g.sample(400_000, &mut stream(11, 0)).unwrap();
        let mc = s.moment(3.0).unwrap();
        assert_relative_eq!(exact, mc, max_relative = 2e-2);
    }

    #[test]
    fn smoothing_keeps_mean() {
        let m = DiscreteMeasure::uniform_rows(&[vec![0.0], vec![1.0]]).unwrap();
        let g = smooth(&m, &Regularizer::gaussian(0.5).unwrap());
        assert_eq!(g.sigmas().to_vec(), vec![0.5, 0.5]);
        assert_eq!(g.mean(), m.mean());
    }

    #[test]
    fn regularizer_moments() {
        let a = Regularizer::gaussian(2.0).unwrap();
        assert_relative_eq!(a.abs_moment(2.0, 3), 12.0, max_relative = 1e-12);
        assert_relative_eq!(a.abs_moment(1.0, 1), 2.0 * (2.0 / std::f64::consts::PI).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn quantiles() {
        // levels the cdf cannot reach in floating point still terminate
        let g = GaussianMixture::new_1d(&[0.1, 0.2, 0.7], &[0.0, 1.0, 2.0], &[0.5, 0.6, 0.7]).unwrap();
        assert!(g.quantile(1.0 - 1e-16).unwrap().is_finite());
        let g = GaussianMixture::gaussian(&[0.0], 1.0).unwrap();
        assert!(g.quantile(0.5).unwrap().abs() < 1e-9);
        let g = GaussianMixture::gaussian(&[2.0], 1.0).unwrap();
        assert!((g.quantile(0.5).unwrap() - 2.0).abs() < 1e-9);
        assert!(g.quantile(1.0).is_err());
        let g = GaussianMixture::new_1d(&[0.5, 0.5], &[-5.0, 5.0], &[1.0, 1.0]).unwrap();
        let x = g.quantile(0.25).unwrap();
        assert!((g.cdf_1d(x) - 0.25).abs() <= 1e-12);
        // left mode quantile at level 1/2 of its own mass, corrected by the right mode's tail
        assert!((x + 5.0).abs() < 1e-6);
    }

    #[test]
    fn sampling_is_deterministic() {
        let g = GaussianMixture::gaussian(&[0.0], 1.0).unwrap();
        let a = g.sample(100, &mut stream(3, 9)).unwrap();
        let b = g.sample(100, &mut stream(3, 9)).unwrap();
        assert_eq!(a, b);
        let d = DiscreteMeasure::dirac(&[0.0]).unwrap().sample(5, &mut stream(0, 0)).unwrap();
        assert_eq!(d.len(), 5);
        assert!(d.points().iter().all(|&v| v == 0.0));
        assert!(matches!(g.sample(0, &mut stream(0, 0)), Err(Error::Empty(_))));
    }

    #[test]
    fn char_fn_at_zero_is_one() {
        let g = GaussianMixture::new_1d(&[0.2, 0.8], &[-1.0, 3.0], &[0.4, 2.0]).unwrap();
        assert_relative_eq!(g.char_fn(&[0.0]).re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn csv_and_binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let pts = array![[0.1, -2.5], [1e-300, 3.0 / 7.0]];
        let b = dir.path().join("x.bin");
        write_binary(&b, &pts).unwrap();
        assert_eq!(read_dataset(&b).unwrap(), pts);
        let c = dir.path().join("x.csv");
        write_csv(&c, &pts).unwrap();
        assert_eq!(read_dataset(&c).unwrap(), pts);
        let with_header = parse_csv(b"x,y\n1,2\n3,4\n").unwrap();
        assert_eq!(with_header, array![[1.0, 2.0], [3.0, 4.0]]);
        assert!(parse_csv(b"1,2\n3,x\n").is_err());
    }
}
