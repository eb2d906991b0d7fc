//! Random Fourier feature sketches `A(pi) = E_pi Phi(x)` with
//! `Phi(x)_j = exp(-i <omega_j, x>) / sqrt(m)`.

use std::path::Path;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{DiscreteMeasure, Measure};
use crate::rng;

pub const SKETCH_FORMAT: &str = "wmmd-sketch-v1";

/// Frequencies drawn from a kernel's spectral measure. Frequency `j` comes
/// from stream `(seed, j)`, so growing `m` keeps earlier rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    kernel: KernelSpec,
    seed: u64,
    omega: Array2<f64>,
}

pub fn draw_features(kernel: &KernelSpec, m: usize, seed: u64) -> Result<FeatureMap> {
    if m == 0 {
        return Err(Error::Empty("frequency count"));
    }
    let rows: Vec<Vec<f64>> =
        (0..m).map(|j| kernel.sample_frequency(&mut rng::stream(seed, j as u64))).collect::<Result<_>>()?;
    let d = kernel.dim();
    let omega = Array2::from_shape_vec((m, d), rows.concat()).expect("rows have kernel dimension");
    Ok(FeatureMap { kernel: kernel.clone(), seed, omega })
}

impl FeatureMap {
    pub fn m(&self) -> usize {
        self.omega.nrows()
    }

    pub fn dim(&self) -> usize {
        self.omega.ncols()
    }

    pub fn omega(&self) -> &Array2<f64> {
        &self.omega
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// `Phi(x)` as `m` complex numbers.
    pub fn features(&self, x: &[f64]) -> Vec<Complex64> {
        let s = 1.0 / (self.m() as f64).sqrt();
        self.omega.outer_iter().map(|w| Complex64::from_polar(s, -crate::numerics::dot(w.as_slice().unwrap(), x))).collect()
    }

    /// `sqrt(sum_j ||omega_j||^2) / sqrt(m)`, a Lipschitz constant of `Phi`.
    pub fn rkhs_lipschitz(&self) -> f64 {
        (self.omega.iter().map(|v| v * v).sum::<f64>() / self.m() as f64).sqrt()
    }

    /// The kernel `(1/m) sum_j cos(<omega_j, x - y>)` whose MMD the sketch distance reproduces.
    pub fn empirical_kernel(&self, x: &[f64], y: &[f64]) -> f64 {
        let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.omega.outer_iter().map(|w| crate::numerics::dot(w.as_slice().unwrap(), &z).cos()).sum::<f64>()
            / self.m() as f64
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: d });
        }
        Ok(())
    }
}

/// A normalized sketch together with the number of samples behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct Sketch {
    map: FeatureMap,
    values: Vec<Complex64>,
    n_samples: u64,
}

impl Sketch {
    /// The sketch of no data, the identity for [`merge`].
    pub fn empty(map: &FeatureMap) -> Self {
        Sketch { map: map.clone(), values: vec![Complex64::new(0.0, 0.0); map.m()], n_samples: 0 }
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn n_samples(&self) -> u64 {
        self.n_samples
    }

    pub fn feature_map(&self) -> &FeatureMap {
        &self.map
    }

    pub fn m(&self) -> usize {
        self.values.len()
    }

    pub fn to_json(&self) -> String {
        let file = SketchFile {
            format: SKETCH_FORMAT.to_string(),
            kernel: self.map.kernel.clone(),
            d: self.map.dim(),
            m: self.m(),
            seed: self.map.seed,
            n_samples: self.n_samples,
            omega: self.map.omega.outer_iter().map(|r| r.to_vec()).collect(),
            re: self.values.iter().map(|v| v.re).collect(),
            im: self.values.iter().map(|v| v.im).collect(),
        };
        serde_json::to_string(&file).expect("sketch serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(s)?;
        match raw.get("format").and_then(|f| f.as_str()) {
            Some(SKETCH_FORMAT) => {}
            Some(other) => return Err(Error::UnknownFormat(other.to_string())),
            None => return Err(Error::UnknownFormat(String::new())),
        }
        let f: SketchFile = serde_json::from_value(raw)?;
        let kernel = f.kernel.validated()?;
        if kernel.dim() != f.d {
            return Err(Error::DimensionMismatch { expected: f.d, got: kernel.dim() });
        }
        if f.omega.len() != f.m || f.re.len() != f.m || f.im.len() != f.m {
            return Err(Error::Parse(format!("sketch arrays do not have length m = {}", f.m)));
        }
        if let Some((row, r)) = f.omega.iter().enumerate().find(|(_, r)| r.len() != f.d) {
            return Err(Error::RaggedDimensions { row, expected: f.d, got: r.len() });
        }
        let omega = Array2::from_shape_vec((f.m, f.d), f.omega.concat()).expect("checked shape");
        let values = f.re.iter().zip(&f.im).map(|(&re, &im)| Complex64::new(re, im)).collect();
        Ok(Sketch { map: FeatureMap { kernel, seed: f.seed, omega }, values, n_samples: f.n_samples })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SketchFile {
    format: String,
    kernel: KernelSpec,
    d: usize,
    m: usize,
    seed: u64,
    n_samples: u64,
    omega: Vec<Vec<f64>>,
    re: Vec<f64>,
    im: Vec<f64>,
}

/// Streaming accumulator of unnormalized phase sums; normalization happens in [`finish`](Self::finish).
#[derive(Debug, Clone)]
pub struct SketchAccumulator {
    map: FeatureMap,
    sums: Vec<Complex64>,
    count: u64,
}

impl SketchAccumulator {
    pub fn new(map: &FeatureMap) -> Self {
        SketchAccumulator { map: map.clone(), sums: vec![Complex64::new(0.0, 0.0); map.m()], count: 0 }
    }

    pub fn push(&mut self, x: ArrayView2<f64>) -> Result<()> {
        if x.nrows() == 0 {
            return Ok(());
        }
        self.map.check_dim(x.ncols())?;
        let omega = &self.map.omega;
        let add: Vec<Complex64> = (0..omega.nrows())
            .into_par_iter()
            .map(|j| {
                let w = omega.row(j);
                x.outer_iter().map(|row| Complex64::from_polar(1.0, -row.dot(&w))).sum()
            })
            .collect();
        for (s, a) in self.sums.iter_mut().zip(add) {
            *s += a;
        }
        self.count += x.nrows() as u64;
        Ok(())
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn finish(&self) -> Sketch {
        if self.count == 0 {
            return Sketch::empty(&self.map);
        }
        let s = 1.0 / (self.count as f64 * (self.map.m() as f64).sqrt());
        Sketch { map: self.map.clone(), values: self.sums.iter().map(|v| v * s).collect(), n_samples: self.count }
    }
}

/// `(1 / (n sqrt(m))) sum_i exp(-i <omega_j, x_i>)`.
pub fn sketch_samples(map: &FeatureMap, x: ArrayView2<f64>) -> Result<Sketch> {
    if x.nrows() == 0 {
        return Err(Error::Empty("sample set"));
    }
    let mut acc = SketchAccumulator::new(map);
    acc.push(x)?;
    Ok(acc.finish())
}

/// Exact `E_pi Phi(x)`, through the characteristic function. A population
/// sketch counts as one sample when merged.
pub fn sketch_measure(map: &FeatureMap, measure: &Measure) -> Result<Sketch> {
    map.check_dim(measure.dim())?;
    let s = 1.0 / (map.m() as f64).sqrt();
    let values = map.omega.outer_iter().map(|w| measure.char_fn(w.as_slice().unwrap()) * s).collect();
    Ok(Sketch { map: map.clone(), values, n_samples: 1 })
}

/// Sketch of a discrete measure, weighting atoms by their masses.
pub fn sketch_discrete(map: &FeatureMap, mu: &DiscreteMeasure) -> Result<Sketch> {
    sketch_measure(map, &Measure::Discrete(mu.clone()))
}

/// Count-weighted average of sketches sharing one feature map.
pub fn merge(sketches: &[Sketch]) -> Result<Sketch> {
    let first = sketches.first().ok_or(Error::Empty("sketch list"))?;
    if sketches.iter().any(|s| s.map != first.map) {
        return Err(Error::MismatchedFeatureMaps);
    }
    let total: u64 = sketches.iter().map(|s| s.n_samples).sum();
    if total == 0 {
        return Ok(Sketch::empty(&first.map));
    }
    let mut values = vec![Complex64::new(0.0, 0.0); first.m()];
    for s in sketches {
        let w = s.n_samples as f64 / total as f64;
        for (v, x) in values.iter_mut().zip(&s.values) {
            *v += x * w;
        }
    }
    Ok(Sketch { map: first.map.clone(), values, n_samples: total })
}

/// `||a - b||_2` over the complex entries.
pub fn sketch_distance(a: &Sketch, b: &Sketch) -> Result<f64> {
    if a.map != b.map {
        return Err(Error::MismatchedFeatureMaps);
    }
    Ok(a.values.iter().zip(&b.values).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discrepancy::mmd_discrete;
    use crate::measures::GaussianMixture;
    use crate::rng::stream;
    use crate::transport::w_exact;
    use ndarray::{concatenate, s, Axis};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn data(seed: u64, n: usize, d: usize) -> Array2<f64> {
        let mut r = stream(seed, 0);
        Array2::from_shape_fn((n, d), |_| r.sample::<f64, _>(StandardNormal) * 2.0)
    }

    fn map(m: usize, d: usize, seed: u64) -> FeatureMap {
        draw_features(&KernelSpec::gaussian(1.0, d).unwrap(), m, seed).unwrap()
    }

    fn max_diff(a: &Sketch, b: &Sketch) -> f64 {
        a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
    }

    #[test]
    fn draws_are_deterministic_and_prefix_stable() {
        let k = KernelSpec::matern(1.5, 0.7, 3).unwrap();
        let a = draw_features(&k, 16, 5).unwrap();
        assert_eq!(a, draw_features(&k, 16, 5).unwrap());
        let b = draw_features(&k, 32, 5).unwrap();
        assert_eq!(a.omega(), &b.omega().slice(s![..16, ..]).to_owned());
        let wide = draw_features(&KernelSpec::gaussian(1e6, 1).unwrap(), 1, 0).unwrap();
        assert!(wide.omega()[[0, 0]].abs() < 1e-4);
        assert!(draw_features(&KernelSpec::modified(KernelSpec::gaussian(1.0, 1).unwrap(), 1.0).unwrap(), 4, 0).is_err());
        assert!(draw_features(&k, 0, 0).is_err());
    }

    #[test]
    fn features_approximate_the_kernel() {
        let k = KernelSpec::laplacian(1.0, 2).unwrap();
        let m = 4096;
        let f = draw_features(&k, m, 11).unwrap();
        let mut r = stream(12, 0);
        let mut err = 0.0;
        let probes = 20;
        for _ in 0..probes {
            let x = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let y = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
            let ip: Complex64 = f.features(&x).iter().zip(f.features(&y)).map(|(a, b)| a * b.conj()).sum();
            err += (ip.re - k.eval(&x, &y).unwrap() / k.diagonal().unwrap()).abs();
        }
        assert!(err / probes as f64 <= 4.0 / (m as f64).sqrt());
    }

    #[test]
    fn single_zero_sample_and_modulus_bound() {
        let f = map(8, 2, 1);
        let s = sketch_samples(&f, Array2::zeros((1, 2)).view()).unwrap();
        for v in s.values() {
            assert!((v - Complex64::new(1.0 / 8f64.sqrt(), 0.0)).norm() < 1e-15);
        }
        let s = sketch_samples(&f, data(1, 50, 2).view()).unwrap();
        assert!(s.values().iter().all(|v| v.norm() <= 1.0 / 8f64.sqrt() + 1e-12));
        assert!(sketch_samples(&f, Array2::zeros((0, 2)).view()).is_err());
        assert!(sketch_samples(&f, Array2::zeros((3, 3)).view()).is_err());
    }

    #[test]
    fn samples_match_measure_sketch() {
        let f = map(64, 3, 2);
        let x = data(2, 40, 3);
        let a = sketch_samples(&f, x.view()).unwrap();
        let b = sketch_discrete(&f, &DiscreteMeasure::uniform(x).unwrap()).unwrap();
        assert!(max_diff(&a, &b) < 1e-14);
        let dirac = sketch_discrete(&f, &DiscreteMeasure::dirac(&[0.1, -0.2, 0.3]).unwrap()).unwrap();
        for (v, p) in dirac.values().iter().zip(f.features(&[0.1, -0.2, 0.3])) {
            assert!((v - p).norm() < 1e-15);
        }
    }

    #[test]
    fn gaussian_sketch_closed_form_and_monte_carlo() {
        let f = map(32, 1, 3);
        let g: Measure = GaussianMixture::gaussian(&[0.0], 0.8).unwrap().into();
        let s = sketch_measure(&f, &g).unwrap();
        for (v, w) in s.values().iter().zip(f.omega().column(0)) {
            let want = (-0.32 * w * w).exp() / 32f64.sqrt();
            assert!((v.re - want).abs() < 1e-15 && v.im.abs() < 1e-15);
        }
        let mix = GaussianMixture::new_1d(&[0.3, 0.7], &[-1.0, 2.0], &[0.5, 1.0]).unwrap();
        let exact = sketch_measure(&f, &mix.clone().into()).unwrap();
        let n = 1_000_000;
        let mc = sketch_discrete(&f, &mix.sample(n, &mut stream(3, 1)).unwrap()).unwrap();
        assert!(sketch_distance(&exact, &mc).unwrap() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn merging_is_exact_associative_and_has_identity() {
        let f = map(128, 2, 4);
        let x = data(4, 1000, 2);
        let whole = sketch_samples(&f, x.view()).unwrap();
        let a = sketch_samples(&f, x.slice(s![..300, ..])).unwrap();
        let b = sketch_samples(&f, x.slice(s![300..700, ..])).unwrap();
        let c = sketch_samples(&f, x.slice(s![700.., ..])).unwrap();
        let m1 = merge(&[a.clone(), b.clone(), c.clone()]).unwrap();
        let m2 = merge(&[c.clone(), merge(&[b.clone(), a.clone()]).unwrap()]).unwrap();
        assert!(max_diff(&m1, &whole) < 1e-12);
        assert!(max_diff(&m1, &m2) < 1e-12);
        assert_eq!(m1.n_samples(), 1000);
        assert_eq!(merge(&[a.clone(), Sketch::empty(&f)]).unwrap(), a);
        let other = sketch_samples(&map(128, 2, 5), x.view()).unwrap();
        assert!(matches!(merge(&[a.clone(), other.clone()]), Err(Error::MismatchedFeatureMaps)));
        assert!(sketch_distance(&a, &other).is_err());
        let joined = concatenate(Axis(0), &[x.view(), x.slice(s![..10, ..])]).unwrap();
        let avg = merge(&[whole.clone(), sketch_samples(&f, x.slice(s![..10, ..])).unwrap()]).unwrap();
        assert!(max_diff(&avg, &sketch_samples(&f, joined.view()).unwrap()) < 1e-12);
    }

    #[test]
    fn accumulator_streams_in_chunks() {
        let f = map(16, 2, 6);
        let x = data(6, 100, 2);
        let mut acc = SketchAccumulator::new(&f);
        assert_eq!(acc.finish(), Sketch::empty(&f));
        for i in 0..10 {
            acc.push(x.slice(s![i * 10..(i + 1) * 10, ..])).unwrap();
        }
        assert_eq!(acc.count(), 100);
        assert!(max_diff(&acc.finish(), &sketch_samples(&f, x.view()).unwrap()) < 1e-14);
    }

    #[test]
    fn json_round_trip_and_format_tag() {
        let f = draw_features(&KernelSpec::matern(2.5, 0.5, 2).unwrap(), 8, 7).unwrap();
        let s = sketch_samples(&f, data(7, 20, 2).view()).unwrap();
        let text = s.to_json();
        assert_eq!(Sketch::from_json(&text).unwrap(), s);
        assert_eq!(Sketch::from_json(&text).unwrap().to_json(), text);
        let bad = text.replace(SKETCH_FORMAT, "wmmd-sketch-v0");
        assert!(matches!(Sketch::from_json(&bad), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn sketch_distance_examples() {
        let f = map(16, 2, 8);
        let s = sketch_samples(&f, data(8, 10, 2).view()).unwrap();
        assert_eq!(sketch_distance(&s, &s).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn linear_and_matches_empirical_kernel_mmd(seed in 0u64..10_000, lam in 0.0f64..1.0) {
            let f = map(32, 2, seed);
            let mut r = stream(seed, 9);
            let mut meas = || {
                let n = r.random_range(1..6);
                let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-2.0..2.0), r.random_range(-2.0..2.0)]).collect();
                let w: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
                DiscreteMeasure::from_rows(&rows, &w).unwrap()
            };
            let (mu, nu) = (meas(), meas());
            let (a, b) = (sketch_discrete(&f, &mu).unwrap(), sketch_discrete(&f, &nu).unwrap());
            let mixed = sketch_discrete(&f, &mu.mix(1.0 - lam, &nu).unwrap()).unwrap();
            for ((x, y), z) in a.values().iter().zip(b.values()).zip(mixed.values()) {
                prop_assert!((x * (1.0 - lam) + y * lam - z).norm() <= 1e-12);
            }
            // ||A(mu) - A(nu)||^2 equals the double-sum MMD^2 under the empirical kernel
            let dist = sketch_distance(&a, &b).unwrap();
            let mut sq = 0.0;
            for (p, q, sgn) in [(&mu, &mu, 1.0), (&nu, &nu, 1.0), (&mu, &nu, -2.0)] {
                for i in 0..p.len() {
                    for j in 0..q.len() {
                        sq += sgn * p.weights()[i] * q.weights()[j] * f.empirical_kernel(p.point(i), q.point(j));
                    }
                }
            }
            prop_assert!((dist * dist - sq).abs() <= 1e-10);
            // Lipschitz bound through W1
            let w1 = w_exact(1.0, &mu, &nu).unwrap().0;
            prop_assert!(dist <= f.rkhs_lipschitz() * w1 + 1e-12);
            // feature components are (|omega_j| / sqrt m)-Lipschitz
            let (x, y) = (mu.point(0), nu.point(0));
            let gap = crate::numerics::sq_dist(x, y).sqrt();
            for ((fx, fy), w) in f.features(x).iter().zip(f.features(y)).zip(f.omega().outer_iter()) {
                let lip = w.dot(&w).sqrt() / 32f64.sqrt();
                prop_assert!((fx - fy).norm() <= lip * gap + 1e-9);
            }
        }
    }

    #[test]
    fn empirical_kernel_agrees_with_mmd_discrete_when_exact() {
        // with all frequencies at zero the empirical kernel is constant and MMD vanishes
        let k = KernelSpec::gaussian(1e9, 1).unwrap();
        let f = draw_features(&k, 4, 0).unwrap();
        let a = sketch_discrete(&f, &DiscreteMeasure::dirac(&[0.0]).unwrap()).unwrap();
        let b = sketch_discrete(&f, &DiscreteMeasure::dirac(&[1.0]).unwrap()).unwrap();
        let m = mmd_discrete(&k, &DiscreteMeasure::dirac(&[0.0]).unwrap(), &DiscreteMeasure::dirac(&[1.0]).unwrap()).unwrap();
        assert!(sketch_distance(&a, &b).unwrap() < 1e-8 && m.value < 1e-8);
    }
}
