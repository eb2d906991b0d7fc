//! Greedy Dirac-mixture decoding of a sketch: atoms are added one at a time
//! by maximizing their correlation with the residual, weights are fitted by
//! nonnegative least squares, and atoms and weights are refined jointly.

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::measures::DiscreteMeasure;
use crate::rng;
use crate::sketch::Sketch;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecoderOptions {
    /// Random starts per atom search.
    pub starts: usize,
    /// Each start is the best of this many uniform draws in the domain.
    pub candidates_per_start: usize,
    /// Gradient-ascent iterations per start.
    pub ascent_iters: usize,
    /// Joint refinement iterations.
    pub refine_iters: usize,
    /// Relative improvement below which refinement stops.
    pub refine_tol: f64,
    pub seed: u64,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        DecoderOptions { starts: 16, candidates_per_start: 32, ascent_iters: 200, refine_iters: 500, refine_tol: 1e-10, seed: 0 }
    }
}

/// Closed ball the atoms are confined to.
#[derive(Debug, Clone, PartialEq)]
pub struct Domain {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Domain {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(Error::Empty("domain center"));
        }
        if !(radius.is_finite() && radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(invalid(format!("degenerate domain: radius {radius}")));
        }
        Ok(Domain { center, radius })
    }

    /// Smallest ball around the mean containing all atoms, slightly inflated.
    pub fn enclosing(mu: &DiscreteMeasure) -> Result<Self> {
        let c = mu.mean().to_vec();
        let r = (0..mu.len()).map(|i| crate::numerics::sq_dist(mu.point(i), &c).sqrt()).fold(0.0, f64::max);
        Self::new(c, (r * 1.01).max(1e-6))
    }

    fn project(&self, x: &mut [f64]) {
        let dist = crate::numerics::sq_dist(x, &self.center).sqrt();
        if dist > self.radius {
            let s = self.radius / dist;
            for (v, c) in x.iter_mut().zip(&self.center) {
                *v = c + (*v - c) * s;
            }
        }
    }

    fn draw<R: Rng>(&self, r: &mut R) -> Vec<f64> {
        let d = self.center.len();
        let g: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
        let n = crate::numerics::norm(&g).max(f64::MIN_POSITIVE);
        let rad = self.radius * r.random::<f64>().powf(1.0 / d as f64);
        g.iter().zip(&self.center).map(|(v, c)| c + v / n * rad).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Decoded {
    /// Atoms with weights normalized to one.
    pub measure: DiscreteMeasure,
    /// `||A(measure) - s||_2` for the returned measure.
    pub residual: f64,
    /// Residual norms (with unnormalized weights) after each refinement step.
    pub history: Vec<f64>,
}

/// Sketch and frequencies in real form: `m x d` frequencies and the target
/// stacked as `[re; im]`.
struct Problem<'a> {
    omega: &'a Array2<f64>,
    target: Vec<f64>,
    scale: f64,
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.omega.nrows()
    }

    fn phases(&self, theta: &[f64]) -> Vec<f64> {
        self.omega.outer_iter().map(|w| crate::numerics::dot(w.as_slice().unwrap(), theta)).collect()
    }

    /// `Phi(theta)` stacked as `[cos; -sin] / sqrt(m)`.
    fn atom(&self, theta: &[f64]) -> Vec<f64> {
        let ph = self.phases(theta);
        let m = self.m();
        let mut a = vec![0.0; 2 * m];
        for j in 0..m {
            a[j] = ph[j].cos() * self.scale;
            a[m + j] = -ph[j].sin() * self.scale;
        }
        a
    }

    fn residual(&self, atoms: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let mut r = self.target.clone();
        for (t, &w) in atoms.iter().zip(weights) {
            for (ri, ai) in r.iter_mut().zip(self.atom(t)) {
                *ri -= w * ai;
            }
        }
        r
    }

    /// `<r, Phi(theta)>` and its gradient in `theta`.
    fn correlation(&self, r: &[f64], theta: &[f64]) -> (f64, Vec<f64>) {
        let ph = self.phases(theta);
        let m = self.m();
        let mut g = vec![0.0; theta.len()];
        let mut val = 0.0;
        for j in 0..m {
            let (s, c) = ph[j].sin_cos();
            val += r[j] * c - r[m + j] * s;
            let coef = -r[j] * s - r[m + j] * c;
            for (gi, wi) in g.iter_mut().zip(self.omega.row(j)) {
                *gi += coef * wi;
            }
        }
        (val * self.scale, g.into_iter().map(|v| v * self.scale).collect())
    }
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Maximizes `<r, Phi(theta)>` over the domain by projected gradient ascent
/// with step halving, from one starting point.
fn ascend(p: &Problem, dom: &Domain, r: &[f64], start: Vec<f64>, iters: usize) -> (f64, Vec<f64>) {
    let mut x = start;
    let (mut val, mut grad) = p.correlation(r, &x);
    let mut step = dom.radius / (1.0 + crate::numerics::norm(&grad));
    for _ in 0..iters {
        let mut improved = false;
        while step > 1e-14 * dom.radius {
            let mut y: Vec<f64> = x.iter().zip(&grad).map(|(a, g)| a + step * g).collect();
            dom.project(&mut y);
            let (v, g) = p.correlation(r, &y);
            if v > val {
                x = y;
                val = v;
                grad = g;
                step *= 2.0;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    (val, x)
}

/// Lawson–Hanson nonnegative least squares `min ||A x - b||, x >= 0`.
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = a.ncols();
    let mut x = DVector::zeros(n);
    let mut passive = vec![false; n];
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let solve_passive = |passive: &[bool]| -> DVector<f64> {
        let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
        let sub = a.select_columns(&idx);
        let sol = sub.clone().svd(true, true).solve(b, 1e-14).expect("svd with both factors");
        let mut z = DVector::zeros(n);
        for (k, &i) in idx.iter().enumerate() {
            z[i] = sol[k];
        }
        z
    };
    for _ in 0..3 * n + 10 {
        let w = a.transpose() * (b - a * &x);
        let cand = (0..n).filter(|&i| !passive[i] && w[i] > tol).max_by(|&i, &j| w[i].total_cmp(&w[j]));
        let Some(j) = cand else { break };
        passive[j] = true;
        loop {
            let z = solve_passive(&passive);
            if (0..n).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                x = z;
                break;
            }
            // step back to the boundary and drop the variables that hit zero
            let mut alpha = f64::INFINITY;
            for i in (0..n).filter(|&i| passive[i] && z[i] <= 0.0) {
                alpha = alpha.min(x[i] / (x[i] - z[i]));
            }
            x = &x + (z - &x) * alpha;
            for i in 0..n {
                if passive[i] && x[i] <= 1e-15 {
                    passive[i] = false;
                    x[i] = 0.0;
                }
            }
            if !passive.iter().any(|&v| v) {
                break;
            }
        }
    }
    x
}

fn fit_weights(p: &Problem, atoms: &[Vec<f64>]) -> Vec<f64> {
    let cols: Vec<Vec<f64>> = atoms.iter().map(|t| p.atom(t)).collect();
    let a = DMatrix::from_fn(2 * p.m(), atoms.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(&p.target);
    nnls(&a, &b).iter().copied().collect()
}

/// Alternates a projected gradient step on all atoms with an exact NNLS
/// weight update. Each accepted step lowers the residual.
fn refine(p: &Problem, dom: &Domain, atoms: &mut [Vec<f64>], weights: &mut Vec<f64>, opts: &DecoderOptions, history: &mut Vec<f64>) {
    let mut f = sq_norm(&p.residual(atoms, weights));
    history.push(f.sqrt());
    let mut step = dom.radius;
    for _ in 0..opts.refine_iters {
        let r = p.residual(atoms, weights);
        // d F / d theta_k = -2 w_k grad <r, Phi(theta_k)>
        let grads: Vec<Vec<f64>> = atoms.iter().zip(weights.iter()).map(|(t, &w)| {
            p.correlation(&r, t).1.into_iter().map(|g| 2.0 * w * g).collect()
        }).collect();
        let mut accepted = None;
        while step > 1e-14 * dom.radius {
            let moved: Vec<Vec<f64>> = atoms
                .iter()
                .zip(&grads)
                .map(|(t, g)| {
                    let mut y: Vec<f64> = t.iter().zip(g).map(|(a, gi)| a + step * gi).collect();
                    dom.project(&mut y);
                    y
                })
                .collect();
            let w = fit_weights(p, &moved);
            let fy = sq_norm(&p.residual(&moved, &w));
            if fy < f {
                accepted = Some((moved, w, fy));
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        let Some((moved, w, fy)) = accepted else { break };
        let rel = (f - fy) / f.max(f64::MIN_POSITIVE);
        atoms.clone_from_slice(&moved);
        *weights = w;
        f = fy;
        history.push(f.sqrt());
        if rel < opts.refine_tol {
            break;
        }
    }
}

/// Decodes a `k`-atom Dirac mixture from `s`, restricted to `domain`.
///
/// Runs `2k` greedy rounds; once more than `k` atoms are present the ones
/// with the smallest NNLS weights are dropped.
pub fn decode_diracs(s: &Sketch, k: usize, domain: &Domain, opts: &DecoderOptions) -> Result<Decoded> {
    if k == 0 {
        return Err(invalid("number of atoms must be at least 1"));
    }
    let map = s.feature_map();
    if domain.center.len() != map.dim() {
        return Err(Error::DimensionMismatch { expected: map.dim(), got: domain.center.len() });
    }
    if opts.starts == 0 || opts.candidates_per_start == 0 {
        return Err(invalid("decoder needs at least one start and one candidate"));
    }
    let m = s.m();
    let mut target = vec![0.0; 2 * m];
    for (j, v) in s.values().iter().enumerate() {
        target[j] = v.re;
        target[m + j] = v.im;
    }
    let p = Problem { omega: map.omega(), target, scale: 1.0 / (m as f64).sqrt() };

    let mut atoms: Vec<Vec<f64>> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    let mut history = vec![sq_norm(&p.target).sqrt()];
    for round in 0..2 * k {
        let r = p.residual(&atoms, &weights);
        let best = (0..opts.starts)
            .into_par_iter()
            .map(|st| {
                let mut g = rng::stream(opts.seed, rng::substream(round as u64, st as u64));
                let start = (0..opts.candidates_per_start)
                    .map(|_| domain.draw(&mut g))
                    .map(|x| (p.correlation(&r, &x).0, x))
                    .max_by(|a, b| a.0.total_cmp(&b.0))
                    .expect("at least one candidate")
                    .1;
                ascend(&p, domain, &r, start, opts.ascent_iters)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(None::<(f64, Vec<f64>)>, |acc, c| match acc {
                Some(a) if a.0 >= c.0 => Some(a),
                _ => Some(c),
            })
            .expect("at least one start");
        if best.0 <= 0.0 && !atoms.is_empty() {
            // no direction left that lowers the residual
            break;
        }
        atoms.push(best.1);
        weights = fit_weights(&p, &atoms);
        if atoms.len() > k {
            let mut order: Vec<usize> = (0..atoms.len()).collect();
            order.sort_by(|&i, &j| weights[j].total_cmp(&weights[i]).then(i.cmp(&j)));
            order.truncate(k);
            order.sort_unstable();
            atoms = order.iter().map(|&i| atoms[i].clone()).collect();
            weights = fit_weights(&p, &atoms);
        }
        refine(&p, domain, &mut atoms, &mut weights, opts, &mut history);
    }

    let total: f64 = weights.iter().sum();
    let norm_w: Vec<f64> = if total > 0.0 {
        weights.iter().map(|w| w / total).collect()
    } else {
        vec![1.0 / atoms.len() as f64; atoms.len()]
    };
    let residual = sq_norm(&p.residual(&atoms, &norm_w)).sqrt();
    let d = map.dim();
    let points = Array2::from_shape_vec((atoms.len(), d), atoms.concat()).expect("atoms have dimension d");
    let measure = DiscreteMeasure::new(points, &norm_w)?;
    Ok(Decoded { measure, residual, history })
}

/// Centroids of a decoded measure as a `k x d` array, padded by repeating the
/// heaviest atom when fewer than `k` atoms were kept.
pub fn centroids(decoded: &Decoded, k: usize) -> Array2<f64> {
    let mu = &decoded.measure;
    let heavy = (0..mu.len()).max_by(|&i, &j| mu.weights()[i].total_cmp(&mu.weights()[j])).unwrap_or(0);
    Array2::from_shape_fn((k, mu.dim()), |(i, c)| if i < mu.len() { mu.points()[[i, c]] } else { mu.points()[[heavy, c]] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::sketch::{draw_features, sketch_discrete, sketch_distance};

    #[test]
    fn nnls_matches_known_solutions() {
        // unconstrained optimum already nonnegative
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let x = nnls(&a, &b);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 2.0).abs() < 1e-12);
        // optimum on the boundary: least squares would give a negative weight
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let x = nnls(&a, &b);
        // with x1 = 0 the best x0 is 1; with x0 = 0 the best x1 is 0
        assert!((x[0] - 1.0).abs() < 1e-12 && x[1].abs() < 1e-12);
        let kkt = a.transpose() * (&b - &a * &x);
        assert!(kkt.iter().all(|&g| g <= 1e-12));
    }

    fn grid_oracle_single(f: &crate::sketch::FeatureMap, s: &Sketch, lo: f64, hi: f64) -> f64 {
        let n = 20_001;
        (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .map(|x| (x, sketch_distance(&sketch_discrete(f, &DiscreteMeasure::dirac(&[x]).unwrap()).unwrap(), s).unwrap()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap()
            .0
    }

    #[test]
    fn recovers_a_single_dirac() {
        let f = draw_features(&KernelSpec::gaussian(0.5, 1).unwrap(), 64, 1).unwrap();
        let c = 0.37;
        let s = sketch_discrete(&f, &DiscreteMeasure::dirac(&[c]).unwrap()).unwrap();
        let dom = Domain::new(vec![0.0], 2.0).unwrap();
        let dec = decode_diracs(&s, 1, &dom, &DecoderOptions::default()).unwrap();
        let oracle = grid_oracle_single(&f, &s, -2.0, 2.0);
        assert!((oracle - c).abs() < 1e-3);
        assert!((dec.measure.point(0)[0] - c).abs() < 1e-3);
        assert!(dec.residual < 1e-6);
    }

    #[test]
    fn recovers_two_far_diracs() {
        let f = draw_features(&KernelSpec::gaussian(0.5, 2).unwrap(), 128, 2).unwrap();
        let truth = DiscreteMeasure::uniform_rows(&[vec![-3.0, 1.0], vec![2.5, -2.0]]).unwrap();
        let s = sketch_discrete(&f, &truth).unwrap();
        let dom = Domain::new(vec![0.0, 0.0], 5.0).unwrap();
        let dec = decode_diracs(&s, 2, &dom, &DecoderOptions { seed: 3, ..Default::default() }).unwrap();
        for i in 0..2 {
            let t = truth.point(i);
            let j = (0..2).min_by(|&a, &b| {
                crate::numerics::sq_dist(dec.measure.point(a), t).total_cmp(&crate::numerics::sq_dist(dec.measure.point(b), t))
            }).unwrap();
            assert!(crate::numerics::sq_dist(dec.measure.point(j), t).sqrt() < 1e-2);
            assert!((dec.measure.weights()[j] - 0.5).abs() < 1e-2);
        }
        // monotone refinement history
        for w in dec.history.windows(2) {
            assert!(w[1] <= w[0] + 1e-15);
        }
        let more = decode_diracs(&s, 3, &dom, &DecoderOptions { seed: 3, ..Default::default() }).unwrap();
        assert!(more.residual <= dec.residual + 1e-9);
    }

    #[test]
    fn deterministic_and_inside_domain() {
        let f = draw_features(&KernelSpec::gaussian(1.0, 2).unwrap(), 32, 4).unwrap();
        let truth = DiscreteMeasure::uniform_rows(&[vec![0.0, 0.0], vec![10.0, 0.0]]).unwrap();
        let s = sketch_discrete(&f, &truth).unwrap();
        let dom = Domain::new(vec![0.0, 0.0], 1.0).unwrap();
        let a = decode_diracs(&s, 2, &dom, &DecoderOptions::default()).unwrap();
        let b = decode_diracs(&s, 2, &dom, &DecoderOptions::default()).unwrap();
        assert_eq!(a.measure, b.measure);
        for i in 0..a.measure.len() {
            assert!(crate::numerics::norm(a.measure.point(i)) <= 1.0 + 1e-12);
        }
        assert!(a.residual <= a.history[0] + 1e-12);
        assert!(decode_diracs(&s, 0, &dom, &DecoderOptions::default()).is_err());
        assert!(Domain::new(vec![0.0, 0.0], 0.0).is_err());
        assert!(decode_diracs(&s, 1, &Domain::new(vec![0.0], 1.0).unwrap(), &DecoderOptions::default()).is_err());
    }
}
