//! Learning tasks, their risks, the task semi-norm probe, Lloyd's algorithm
//! and the compressive K-means pipeline.

pub mod decoder;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, ArrayView1};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::kernels::KernelSpec;
use crate::measures::{DiscreteMeasure, Measure};
use crate::numerics::{self, sq_dist};
use crate::rng;
use crate::sketch::{self, draw_features};

pub use decoder::{centroids, decode_diracs, nnls, Decoded, DecoderOptions, Domain};

/// A learning task. Supervised tasks read the label(s) from the last
/// coordinate(s) of each point: `x = (z, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case", deny_unknown_fields)]
pub enum TaskSpec {
    KMeans { k: usize },
    KMedians { k: usize },
    LinearRegression { r_bound: f64 },
    MultiOutputRegression { r_bound: f64, k_out: usize },
    /// `h(z) = tanh(w.z + b)` with `||w|| <= lipschitz_l`, hinge loss on `y h(z)`.
    BinaryClassification { lipschitz_l: f64 },
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TaskSpec::KMeans { k } | TaskSpec::KMedians { k } if k == 0 => Err(invalid("K must be at least 1")),
            TaskSpec::LinearRegression { r_bound } | TaskSpec::MultiOutputRegression { r_bound, .. }
                if !(r_bound > 0.0 && r_bound.is_finite()) =>
            {
                Err(invalid(format!("norm bound {r_bound} must be positive")))
            }
            TaskSpec::MultiOutputRegression { k_out: 0, .. } => Err(invalid("K_out must be at least 1")),
            TaskSpec::BinaryClassification { lipschitz_l } if !(lipschitz_l > 0.0 && lipschitz_l.is_finite()) => {
                Err(invalid(format!("Lipschitz bound {lipschitz_l} must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// Loss exponent `p`.
    pub fn p(&self) -> f64 {
        match self {
            TaskSpec::KMeans { .. } | TaskSpec::LinearRegression { .. } | TaskSpec::MultiOutputRegression { .. } => 2.0,
            TaskSpec::KMedians { .. } | TaskSpec::BinaryClassification { .. } => 1.0,
        }
    }

    /// `C` in `|R^{1/p}(mu, h) - R^{1/p}(nu, h)| <= C W_p(mu, nu)`. For
    /// classification `W_1` is taken under `||z - z'|| + |y - y'|`.
    pub fn learnability_constant(&self) -> f64 {
        match *self {
            TaskSpec::KMeans { .. } | TaskSpec::KMedians { .. } => 1.0,
            TaskSpec::LinearRegression { r_bound } | TaskSpec::MultiOutputRegression { r_bound, .. } => {
                (r_bound * r_bound + 1.0).sqrt()
            }
            // hinge is 1-Lipschitz
            TaskSpec::BinaryClassification { lipschitz_l } => lipschitz_l.max(1.0),
        }
    }

    /// Number of label coordinates at the end of each point.
    pub fn label_dim(&self) -> usize {
        match *self {
            TaskSpec::KMeans { .. } | TaskSpec::KMedians { .. } => 0,
            TaskSpec::LinearRegression { .. } | TaskSpec::BinaryClassification { .. } => 1,
            TaskSpec::MultiOutputRegression { k_out, .. } => k_out,
        }
    }

    /// Ground metric under which the task is Wasserstein learnable.
    pub fn ground_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        match self {
            TaskSpec::BinaryClassification { .. } => {
                let n = x.len() - 1;
                sq_dist(&x[..n], &y[..n]).sqrt() + (x[n] - y[n]).abs()
            }
            _ => sq_dist(x, y).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Hypothesis {
    Centroids(Array2<f64>),
    Linear(Array1<f64>),
    Matrix(Array2<f64>),
    Classifier { w: Array1<f64>, b: f64 },
}

const CONSTRAINT_TOL: f64 = 1e-9;

fn op_norm(m: &Array2<f64>) -> f64 {
    let a = DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]]);
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

impl Hypothesis {
    /// Checks shape against data dimension `d` and the norm constraint.
    pub fn check(&self, task: &TaskSpec, d: usize) -> Result<()> {
        let dz = d.checked_sub(task.label_dim()).filter(|&v| v > 0).ok_or(Error::DimensionMismatch { expected: task.label_dim() + 1, got: d })?;
        let shape_err = |what: &str| Err(Error::ConstraintViolation(format!("{what} does not fit task {task:?} in dimension {d}")));
        match (task, self) {
            (TaskSpec::KMeans { k } | TaskSpec::KMedians { k }, Hypothesis::Centroids(c)) => {
                if c.nrows() == 0 {
                    return Err(Error::Empty("centroid list"));
                }
                if c.nrows() > *k || c.ncols() != d {
                    return shape_err("centroid array");
                }
            }
            (TaskSpec::LinearRegression { r_bound }, Hypothesis::Linear(t)) => {
                if t.len() != dz {
                    return shape_err("weight vector");
                }
                let n = t.dot(t).sqrt();
                if n > r_bound + CONSTRAINT_TOL {
                    return Err(Error::ConstraintViolation(format!("||theta|| = {n} > {r_bound}")));
                }
            }
            (TaskSpec::MultiOutputRegression { r_bound, k_out }, Hypothesis::Matrix(m)) => {
                if m.nrows() != *k_out || m.ncols() != dz {
                    return shape_err("matrix");
                }
                let n = op_norm(m);
                if n > r_bound + CONSTRAINT_TOL {
                    return Err(Error::ConstraintViolation(format!("||M||_op = {n} > {r_bound}")));
                }
            }
            (TaskSpec::BinaryClassification { lipschitz_l }, Hypothesis::Classifier { w, b }) => {
                if w.len() != dz || !b.is_finite() {
                    return shape_err("classifier");
                }
                let n = w.dot(w).sqrt();
                if n > lipschitz_l + CONSTRAINT_TOL {
                    return Err(Error::ConstraintViolation(format!("||w|| = {n} > {lipschitz_l}")));
                }
            }
            _ => return shape_err("hypothesis kind"),
        }
        Ok(())
    }

    fn loss(&self, task: &TaskSpec, x: &[f64]) -> f64 {
        let dz = x.len() - task.label_dim();
        let (z, y) = x.split_at(dz);
        match self {
            Hypothesis::Centroids(c) => {
                let m = nearest(c, x).1;
                if matches!(task, TaskSpec::KMedians { .. }) { m.sqrt() } else { m }
            }
            Hypothesis::Linear(t) => (y[0] - numerics::dot(t.as_slice().unwrap(), z)).powi(2),
            Hypothesis::Matrix(m) => m
                .outer_iter()
                .zip(y)
                .map(|(row, yi)| (yi - row.dot(&ArrayView1::from(z))).powi(2))
                .sum(),
            Hypothesis::Classifier { w, b } => {
                let h = (numerics::dot(w.as_slice().unwrap(), z) + b).tanh();
                (1.0 - y[0] * h).max(0.0)
            }
        }
    }

    fn params(&self) -> Vec<f64> {
        match self {
            Hypothesis::Centroids(c) => c.iter().copied().collect(),
            Hypothesis::Linear(t) => t.to_vec(),
            Hypothesis::Matrix(m) => m.iter().copied().collect(),
            Hypothesis::Classifier { w, b } => w.iter().copied().chain(std::iter::once(*b)).collect(),
        }
    }

    fn with_params(&self, v: &[f64]) -> Hypothesis {
        match self {
            Hypothesis::Centroids(c) => Hypothesis::Centroids(Array2::from_shape_vec(c.raw_dim(), v.to_vec()).unwrap()),
            Hypothesis::Linear(_) => Hypothesis::Linear(Array1::from_vec(v.to_vec())),
            Hypothesis::Matrix(m) => Hypothesis::Matrix(Array2::from_shape_vec(m.raw_dim(), v.to_vec()).unwrap()),
            Hypothesis::Classifier { w, .. } => {
                Hypothesis::Classifier { w: Array1::from_vec(v[..w.len()].to_vec()), b: v[w.len()] }
            }
        }
    }

    /// Scales the hypothesis back onto its constraint set.
    fn clamp(self, task: &TaskSpec) -> Hypothesis {
        match (self, task) {
            (Hypothesis::Linear(t), TaskSpec::LinearRegression { r_bound }) => {
                let n = t.dot(&t).sqrt();
                Hypothesis::Linear(if n > *r_bound { t * (r_bound / n) } else { t })
            }
            (Hypothesis::Matrix(m), TaskSpec::MultiOutputRegression { r_bound, .. }) => {
                let n = op_norm(&m);
                Hypothesis::Matrix(if n > *r_bound { m * (r_bound / n) } else { m })
            }
            (Hypothesis::Classifier { w, b }, TaskSpec::BinaryClassification { lipschitz_l }) => {
                let n = w.dot(&w).sqrt();
                Hypothesis::Classifier { w: if n > *lipschitz_l { w * (lipschitz_l / n) } else { w }, b }
            }
            (h, _) => h,
        }
    }
}

/// Index of the nearest centroid (lowest index on ties) and the squared distance.
fn nearest(c: &Array2<f64>, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, row) in c.outer_iter().enumerate() {
        let d2 = sq_dist(row.as_slice().unwrap(), x);
        if d2 < best.1 {
            best = (i, d2);
        }
    }
    best
}

/// `R(pi, h) = E_pi l(x, h)`.
pub fn risk(task: &TaskSpec, mu: &DiscreteMeasure, h: &Hypothesis) -> Result<f64> {
    task.validate()?;
    h.check(task, mu.dim())?;
    Ok(risk_unchecked(task, mu, h))
}

fn risk_unchecked(task: &TaskSpec, mu: &DiscreteMeasure, h: &Hypothesis) -> f64 {
    let parts: Vec<f64> = (0..mu.len()).into_par_iter().map(|i| mu.weights()[i] * h.loss(task, mu.point(i))).collect();
    parts.iter().sum()
}

/// Pushforward of `mu` under the nearest-centroid map.
pub fn kmeans_project(h: &Hypothesis, mu: &DiscreteMeasure) -> Result<DiscreteMeasure> {
    let Hypothesis::Centroids(c) = h else {
        return Err(invalid("projection needs a centroid hypothesis"));
    };
    if c.nrows() == 0 {
        return Err(Error::Empty("centroid list"));
    }
    if c.ncols() != mu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: c.ncols() });
    }
    let mut mass = vec![0.0; c.nrows()];
    for i in 0..mu.len() {
        mass[nearest(c, mu.point(i)).0] += mu.weights()[i];
    }
    let keep: Vec<usize> = (0..c.nrows()).filter(|&i| mass[i] > 0.0).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| c.row(i).to_vec()).collect();
    let w: Vec<f64> = keep.iter().map(|&i| mass[i]).collect();
    DiscreteMeasure::from_rows(&rows, &w)
}

fn gap(task: &TaskSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure, h: &Hypothesis) -> f64 {
    let p = task.p();
    (risk_unchecked(task, mu, h).powf(1.0 / p) - risk_unchecked(task, nu, h).powf(1.0 / p)).abs()
}

fn random_hypothesis<R: Rng>(task: &TaskSpec, lo: &[f64], hi: &[f64], r: &mut R) -> Hypothesis {
    let d = lo.len();
    let dz = d - task.label_dim();
    let ball = |r: &mut R, n: usize, rad: f64| -> Array1<f64> {
        let g: Array1<f64> = (0..n).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let len = g.dot(&g).sqrt().max(f64::MIN_POSITIVE);
        g * (rad * r.random::<f64>().powf(1.0 / n as f64) / len)
    };
    match *task {
        TaskSpec::KMeans { k } | TaskSpec::KMedians { k } => {
            let kk = r.random_range(1..=k);
            Hypothesis::Centroids(Array2::from_shape_fn((kk, d), |(_, j)| r.random_range(lo[j] - 1.0..=hi[j] + 1.0)))
        }
        TaskSpec::LinearRegression { r_bound } => Hypothesis::Linear(ball(r, dz, r_bound)),
        TaskSpec::MultiOutputRegression { r_bound, k_out } => {
            let m = Array2::from_shape_fn((k_out, dz), |_| r.sample::<f64, _>(StandardNormal));
            let n = op_norm(&m).max(f64::MIN_POSITIVE);
            Hypothesis::Matrix(m * (r_bound * r.random::<f64>() / n))
        }
        TaskSpec::BinaryClassification { lipschitz_l } => {
            Hypothesis::Classifier { w: ball(r, dz, lipschitz_l), b: r.random_range(-2.0..2.0) }
        }
    }
}

/// Lower bound on `sup_h |R^{1/p}(mu, h) - R^{1/p}(nu, h)|`: the best of
/// `n_hypotheses` random hypotheses, with the top few refined by coordinate
/// ascent inside the constraint set.
pub fn task_metric_probe(task: &TaskSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure, n_hypotheses: usize, seed: u64) -> Result<f64> {
    task.validate()?;
    if n_hypotheses == 0 {
        return Err(invalid("probe needs at least one hypothesis"));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let d = mu.dim();
    if d <= task.label_dim() {
        return Err(Error::DimensionMismatch { expected: task.label_dim() + 1, got: d });
    }
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for m in [mu, nu] {
        for i in 0..m.len() {
            for (j, v) in m.point(i).iter().enumerate() {
                lo[j] = lo[j].min(*v);
                hi[j] = hi[j].max(*v);
            }
        }
    }
    let mut cands: Vec<(f64, Hypothesis)> = (0..n_hypotheses)
        .into_par_iter()
        .map(|i| {
            let h = random_hypothesis(task, &lo, &hi, &mut rng::stream(seed, i as u64));
            (gap(task, mu, nu, &h), h)
        })
        .collect();
    cands.sort_by(|a, b| b.0.total_cmp(&a.0));
    cands.truncate(4);
    let span = lo.iter().zip(&hi).map(|(a, b)| b - a).fold(1.0, f64::max);
    let refined: Vec<f64> = cands.into_par_iter().map(|(g, h)| coordinate_ascent(task, mu, nu, h, g, span)).collect();
    Ok(refined.into_iter().fold(0.0, f64::max))
}

fn coordinate_ascent(task: &TaskSpec, mu: &DiscreteMeasure, nu: &DiscreteMeasure, h: Hypothesis, g0: f64, span: f64) -> f64 {
    let mut v = h.params();
    let mut best = g0;
    let mut step = 0.25 * span;
    for _ in 0..60 {
        let mut moved = false;
        for i in 0..v.len() {
            for sgn in [1.0, -1.0] {
                let mut t = v.clone();
                t[i] += sgn * step;
                let cand = h.with_params(&t).clamp(task);
                let g = gap(task, mu, nu, &cand);
                if g > best {
                    best = g;
                    v = cand.params();
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            step *= 0.5;
            if step < 1e-6 * span {
                break;
            }
        }
    }
    best
}

/// Weighted Lloyd iterations from the best of `inits` k-means++ seedings;
/// each run stops once no centroid moves by more than `1e-9`.
pub fn lloyd(mu: &DiscreteMeasure, k: usize, inits: usize, seed: u64) -> Result<Hypothesis> {
    if k == 0 || inits == 0 {
        return Err(invalid("lloyd needs K >= 1 and at least one initialization"));
    }
    let distinct = mu.merged().len();
    if k > distinct {
        return Err(invalid(format!("K = {k} exceeds the {distinct} distinct atoms")));
    }
    let task = TaskSpec::KMeans { k };
    let runs: Vec<(f64, Array2<f64>)> = (0..inits)
        .into_par_iter()
        .map(|i| {
            let c = lloyd_run(mu, k, &mut rng::stream(seed, i as u64));
            (risk_unchecked(&task, mu, &Hypothesis::Centroids(c.clone())), c)
        })
        .collect();
    let best = runs.into_iter().fold(None::<(f64, Array2<f64>)>, |acc, r| match acc {
        Some(a) if a.0 <= r.0 => Some(a),
        _ => Some(r),
    });
    Ok(Hypothesis::Centroids(best.expect("inits >= 1").1))
}

fn kmeans_pp<R: Rng>(mu: &DiscreteMeasure, k: usize, r: &mut R) -> Array2<f64> {
    let d = mu.dim();
    let mut c = Array2::zeros((k, d));
    let first = WeightedIndex::new(mu.weights().iter().copied()).expect("valid weights").sample(r);
    c.row_mut(0).assign(&mu.points().row(first));
    let mut d2: Vec<f64> = (0..mu.len()).map(|i| sq_dist(mu.point(i), c.row(0).as_slice().unwrap())).collect();
    for j in 1..k {
        let scores: Vec<f64> = (0..mu.len()).map(|i| mu.weights()[i] * d2[i]).collect();
        let idx = match WeightedIndex::new(scores.iter().copied()) {
            Ok(dist) => dist.sample(r),
            Err(_) => (0..mu.len()).max_by(|&a, &b| d2[a].total_cmp(&d2[b])).unwrap(),
        };
        c.row_mut(j).assign(&mu.points().row(idx));
        for i in 0..mu.len() {
            d2[i] = d2[i].min(sq_dist(mu.point(i), c.row(j).as_slice().unwrap()));
        }
    }
    c
}

fn lloyd_run<R: Rng>(mu: &DiscreteMeasure, k: usize, r: &mut R) -> Array2<f64> {
    let d = mu.dim();
    let mut c = kmeans_pp(mu, k, r);
    for _ in 0..10_000 {
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut mass = vec![0.0; k];
        for i in 0..mu.len() {
            let j = nearest(&c, mu.point(i)).0;
            let w = mu.weights()[i];
            mass[j] += w;
            for (s, x) in sums.row_mut(j).iter_mut().zip(mu.point(i)) {
                *s += w * x;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if mass[j] > 0.0 {
                let new: Vec<f64> = sums.row(j).iter().map(|s| s / mass[j]).collect();
                shift = shift.max(sq_dist(&new, c.row(j).as_slice().unwrap()).sqrt());
                c.row_mut(j).assign(&ArrayView1::from(&new));
            }
        }
        if shift < 1e-9 {
            break;
        }
    }
    c
}

/// Settings for the compressive K-means pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CkmeansOptions {
    pub kernel: KernelSpec,
    pub m: usize,
    pub seed: u64,
    #[serde(default)]
    pub decoder: DecoderOptions,
    #[serde(default = "default_inits")]
    pub lloyd_inits: usize,
}

fn default_inits() -> usize {
    10
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcessRiskReport {
    pub k: usize,
    pub m: usize,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// `R(pi_test, h_sketch)`.
    pub risk_sketch: f64,
    /// `R(pi_test, h_lloyd)`.
    pub risk_lloyd: f64,
    /// `risk_sketch / risk_lloyd` (1 when both vanish).
    pub ratio: f64,
    /// `||A(pi_ref) - A(pi_n)||_2`.
    pub sketch_distance: f64,
    /// Residual of the decoded mixture against the training sketch.
    pub residual: f64,
    #[serde(skip)]
    pub centroids_sketch: Array2<f64>,
    #[serde(skip)]
    pub centroids_lloyd: Array2<f64>,
}

/// Sketches `train`, decodes `K` centroids, runs Lloyd on `train`, and
/// evaluates both on `test`. The sketch distance compares the training
/// sketch with the sketch of `reference` (the population when known).
pub fn excess_risk_report(
    train: &DiscreteMeasure,
    test: &DiscreteMeasure,
    reference: &Measure,
    task: &TaskSpec,
    opts: &CkmeansOptions,
) -> Result<ExcessRiskReport> {
    let TaskSpec::KMeans { k } = *task else {
        return Err(invalid("compressive learning is implemented for K-means"));
    };
    task.validate()?;
    let map = draw_features(&opts.kernel, opts.m, opts.seed)?;
    let s = sketch::sketch_discrete(&map, train)?;
    let s_ref = sketch::sketch_measure(&map, reference)?;
    let dec = decode_diracs(&s, k, &Domain::enclosing(train)?, &DecoderOptions { seed: opts.seed, ..opts.decoder.clone() })?;
    let cs = decoder::centroids(&dec, k);
    let hs = Hypothesis::Centroids(cs.clone());
    let hl = lloyd(train, k, opts.lloyd_inits, opts.seed)?;
    let risk_sketch = risk(task, test, &hs)?;
    let risk_lloyd = risk(task, test, &hl)?;
    let ratio = if risk_lloyd == 0.0 {
        if risk_sketch == 0.0 { 1.0 } else { f64::INFINITY }
    } else {
        risk_sketch / risk_lloyd
    };
    let Hypothesis::Centroids(cl) = hl else { unreachable!() };
    Ok(ExcessRiskReport {
        k,
        m: opts.m,
        seed: opts.seed,
        n_train: train.len(),
        n_test: test.len(),
        risk_sketch,
        risk_lloyd,
        ratio,
        sketch_distance: sketch::sketch_distance(&s_ref, &s)?,
        residual: dec.residual,
        centroids_sketch: cs,
        centroids_lloyd: cl,
    })
}
