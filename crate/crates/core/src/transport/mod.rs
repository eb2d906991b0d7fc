//! Wasserstein distances: exact one-dimensional quantile coupling, an exact
//! network-simplex solver for discrete measures, a permutation oracle, sliced
//! distances and the translation split of `W_2`.

pub mod network_simplex;

use std::path::Path;

use ndarray::Array2;

use crate::error::{invalid, Error, Result};
use crate::measures::{DiscreteMeasure, GaussianMixture, Measure};
use crate::numerics::{self, integrate_pieces};

/// Largest `n * m` accepted by [`w_exact`].
pub const SIZE_GUARD: usize = 1_000_000;

/// An optimal coupling with its transport cost `sum P_ij ||x_i - y_j||^p`.
#[derive(Debug, Clone)]
pub struct TransportPlan {
    pub coupling: Array2<f64>,
    pub cost: f64,
    pub p: f64,
}

impl TransportPlan {
    /// Writes the nonzero entries as `i,j,mass` rows.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["i", "j", "mass"])?;
        for ((i, j), &v) in self.coupling.indexed_iter() {
            if v != 0.0 {
                w.write_record([i.to_string(), j.to_string(), format!("{v:e}")])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(invalid(format!("transport order p = {p} must be >= 1")));
    }
    Ok(())
}

fn pow_dist(x: &[f64], y: &[f64], p: f64) -> f64 {
    let d = numerics::sq_dist(x, y).sqrt();
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

fn sorted_atoms(mu: &DiscreteMeasure) -> Vec<(f64, f64)> {
    let mut v: Vec<(f64, f64)> = mu.points().column(0).iter().copied().zip(mu.weights().iter().copied()).collect();
    v.sort_by(|a, b| a.0.total_cmp(&b.0));
    v
}

/// `W_p^p` between two sorted one-dimensional atom lists via the quantile coupling.
fn w1d_sorted_cost(a: &[(f64, f64)], b: &[(f64, f64)], p: f64) -> f64 {
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0].1, b[0].1);
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        let gap = (a[i].0 - b[j].0).abs();
        cost += mass * if p == 1.0 { gap } else { gap.powf(p) };
        ra -= mass;
        rb -= mass;
        // advance whichever cumulative breakpoint comes first; ties advance both
        let adv_a = ra <= rb;
        let adv_b = rb <= ra;
        if adv_a {
            i += 1;
            if i == a.len() {
                break;
            }
            ra = a[i].1;
        }
        if adv_b {
            j += 1;
            if j == b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    cost
}

/// `W_p` between one-dimensional discrete measures, exact via merged
/// cumulative-weight breakpoints.
pub fn w1d(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    Ok(w1d_cost(p, mu, nu)?.powf(1.0 / p))
}

/// `W_p^p` for one-dimensional discrete measures.
pub fn w1d_cost(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_p(p)?;
    for m in [mu, nu] {
        if m.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
        }
    }
    Ok(w1d_sorted_cost(&sorted_atoms(mu), &sorted_atoms(nu), p))
}

/// A one-dimensional reference measure sorted once, for repeated comparisons.
#[derive(Debug, Clone)]
pub struct SortedLine {
    atoms: Vec<(f64, f64)>,
}

impl SortedLine {
    pub fn new(mu: &DiscreteMeasure) -> Result<Self> {
        if mu.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: mu.dim() });
        }
        Ok(Self { atoms: sorted_atoms(mu) })
    }

    pub fn wp(&self, p: f64, other: &SortedLine) -> Result<f64> {
        check_p(p)?;
        Ok(w1d_sorted_cost(&self.atoms, &other.atoms, p).powf(1.0 / p))
    }
}

/// Transport map `x -> G^{-1}(F(x))` between one-dimensional mixtures, using
/// the upper tail for `F(x) > 1/2` to keep precision.
fn gmm_map(f: &GaussianMixture, g: &GaussianMixture, x: f64) -> f64 {
    let (lo0, hi0) = g.support_bracket(12.0);
    let fx = f.cdf_1d(x);
    let (mut lo, mut hi) = (lo0 - 1.0, hi0 + 1.0);
    if fx <= 0.5 {
        while g.cdf_1d(lo) > fx {
            lo -= hi - lo;
        }
        while g.cdf_1d(hi) < fx {
            hi += hi - lo;
        }
        numerics::bisect_monotone(|y| g.cdf_1d(y), lo, hi, fx, 0.0)
    } else {
        let sx = f.sf_1d(x);
        while g.sf_1d(lo) < sx {
            lo -= hi - lo;
        }
        while g.sf_1d(hi) > sx {
            hi += hi - lo;
        }
        numerics::bisect_monotone(|y| -g.sf_1d(y), lo, hi, -sx, 0.0)
    }
}

/// `W_p^p` between two one-dimensional Gaussian mixtures:
/// `∫ |x - G^{-1}(F(x))|^p f(x) dx` by adaptive quadrature.
pub fn w1d_gmm_cost(p: f64, f: &GaussianMixture, g: &GaussianMixture) -> Result<f64> {
    check_p(p)?;
    for m in [f, g] {
        if m.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: m.dim() });
        }
    }
    if f == g {
        return Ok(0.0);
    }
    let breaks = f.quadrature_breaks(14.0);
    let smax = f.sigmas().iter().chain(g.sigmas().iter()).cloned().fold(0.0, f64::max);
    let integrand = |x: f64| {
        let dens = f.pdf_1d(x);
        if dens == 0.0 {
            return 0.0;
        }
        (x - gmm_map(f, g, x)).abs().powf(p) * dens
    };
    let q = integrate_pieces(integrand, &breaks, 1e-10, 1e-14 * smax.powf(p), 50_000)?;
    Ok(q.value)
}

/// `W_p^p` between a one-dimensional discrete measure and a mixture, summing
/// `∫ |x_i - y|^p g(y) dy` over the quantile interval owned by each atom.
pub fn w1d_mixed_cost(p: f64, mu: &DiscreteMeasure, g: &GaussianMixture) -> Result<f64> {
    check_p(p)?;
    if mu.dim() != 1 || g.dim() != 1 {
        return Err(Error::DimensionMismatch { expected: 1, got: mu.dim().max(g.dim()) });
    }
    let atoms = sorted_atoms(mu);
    let (lo, hi) = g.support_bracket(14.0);
    let gbreaks = g.quadrature_breaks(14.0);
    let smax = g.sigmas().iter().cloned().fold(0.0, f64::max);
    let mut cum = 0.0;
    let mut left = lo;
    let mut total = 0.0;
    for (k, &(x, w)) in atoms.iter().enumerate() {
        cum += w;
        let right = if k + 1 == atoms.len() || cum >= 1.0 { hi } else { g.quantile(cum.min(1.0 - 1e-16))? };
        if right > left {
            let mut b: Vec<f64> = std::iter::once(left)
                .chain(gbreaks.iter().copied().filter(|&t| t > left && t < right))
                .chain((x > left && x < right).then_some(x))
                .chain(std::iter::once(right))
                .collect();
            b.sort_by(f64::total_cmp);
            b.dedup();
            let q = integrate_pieces(|y| (x - y).abs().powf(p) * g.pdf_1d(y), &b, 1e-10, 1e-15 * smax.powf(p), 20_000)?;
            total += q.value;
        }
        left = right.max(left);
    }
    Ok(total)
}

/// `W_p` between one-dimensional measures of either kind.
pub fn w1d_measures(p: f64, mu: &Measure, nu: &Measure) -> Result<f64> {
    let cost = match (mu, nu) {
        (Measure::Discrete(a), Measure::Discrete(b)) => w1d_cost(p, a, b)?,
        (Measure::Gmm(f), Measure::Gmm(g)) => w1d_gmm_cost(p, f, g)?,
        (Measure::Discrete(a), Measure::Gmm(g)) | (Measure::Gmm(g), Measure::Discrete(a)) => w1d_mixed_cost(p, a, g)?,
    };
    Ok(cost.max(0.0).powf(1.0 / p))
}

fn cost_matrix(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Vec<f64> {
    let (n, m) = (mu.len(), nu.len());
    let mut c = Vec::with_capacity(n * m);
    for i in 0..n {
        let x = mu.point(i);
        for j in 0..m {
            c.push(pow_dist(x, nu.point(j), p));
        }
    }
    c
}

/// Exact `W_p` between discrete measures with its optimal plan.
pub fn w_exact(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, TransportPlan)> {
    w_exact_with_limit(p, mu, nu, SIZE_GUARD)
}

/// As [`w_exact`] with a caller-chosen size guard.
pub fn w_exact_with_limit(
    p: f64,
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    limit: usize,
) -> Result<(f64, TransportPlan)> {
    check_p(p)?;
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let (n, m) = (mu.len(), nu.len());
    if n.saturating_mul(m) > limit {
        return Err(Error::SizeGuard { n, m, limit });
    }
    let cost = cost_matrix(p, mu, nu);
    let (total, coupling) = solve_plan(mu, nu, &cost)?;
    Ok((total.powf(1.0 / p), TransportPlan { coupling, cost: total, p }))
}

fn solve_plan(mu: &DiscreteMeasure, nu: &DiscreteMeasure, cost: &[f64]) -> Result<(f64, Array2<f64>)> {
    let (n, m) = (mu.len(), nu.len());
    let a = mu.weight_slice();
    // push the float imbalance onto the largest demand so both totals agree
    let mut b = nu.weight_slice().to_vec();
    let diff = a.iter().sum::<f64>() - b.iter().sum::<f64>();
    let jmax = (0..m).max_by(|&i, &j| b[i].total_cmp(&b[j])).expect("m >= 1");
    b[jmax] += diff;
    let sol = network_simplex::solve(a, &b, cost, 100 * (n + m) * (n + m) + 10_000)
        .ok_or_else(|| Error::QuadratureNonConvergence("network simplex iteration cap".into()))?;
    let coupling = Array2::from_shape_vec((n, m), sol.flow).expect("n x m flows");
    Ok((sol.cost.max(0.0), coupling))
}

/// Minimal transport cost `min_P sum P_ij c(x_i, y_j)` for an arbitrary ground cost.
pub fn optimal_cost<C: Fn(&[f64], &[f64]) -> f64>(mu: &DiscreteMeasure, nu: &DiscreteMeasure, c: C) -> Result<f64> {
    let (n, m) = (mu.len(), nu.len());
    if n.saturating_mul(m) > SIZE_GUARD {
        return Err(Error::SizeGuard { n, m, limit: SIZE_GUARD });
    }
    let mut cost = Vec::with_capacity(n * m);
    for i in 0..n {
        for j in 0..m {
            cost.push(c(mu.point(i), nu.point(j)));
        }
    }
    Ok(solve_plan(mu, nu, &cost)?.0)
}

/// Minimum over all `n!` matchings of uniform equal-size measures (`n <= 8`).
pub fn w_brute(p: f64, mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<f64> {
    check_p(p)?;
    let n = mu.len();
    if nu.len() != n {
        return Err(Error::BruteForcePrecondition(format!("sizes {n} and {}", nu.len())));
    }
    if n > 8 {
        return Err(Error::BruteForcePrecondition(format!("{n} atoms")));
    }
    if !mu.is_uniform() || !nu.is_uniform() {
        return Err(Error::BruteForcePrecondition("nonuniform weights".into()));
    }
    if mu.dim() != nu.dim() {
        return Err(Error::DimensionMismatch { expected: mu.dim(), got: nu.dim() });
    }
    let cost = cost_matrix(p, mu, nu);
    let mut perm: Vec<usize> = (0..n).collect();
    let eval = |perm: &[usize]| perm.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>();
    let mut best = eval(&perm);
    // Heap's algorithm
    let mut c = vec![0usize; n];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(eval(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok((best / n as f64).powf(1.0 / p))
}

/// Average of one-dimensional `W_1` over the projections on `thetas` (rows).
pub fn sliced_w1(mu: &DiscreteMeasure, nu: &DiscreteMeasure, thetas: &Array2<f64>) -> Result<f64> {
    if thetas.nrows() == 0 {
        return Err(Error::Empty("theta set"));
    }
    let mut total = 0.0;
    for t in thetas.outer_iter() {
        let t = t.to_vec();
        total += w1d_cost(1.0, &mu.project(&t)?, &nu.project(&t)?)?;
    }
    Ok(total / thetas.nrows() as f64)
}

/// `(W_2^2(centered mu, centered nu), ||m(mu) - m(nu)||^2)`.
pub fn translation_split(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> Result<(f64, f64)> {
    let (_, plan) = w_exact(2.0, &mu.centered(), &nu.centered())?;
    let gap = &mu.mean() - &nu.mean();
    Ok((plan.cost, gap.dot(&gap)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn line(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::from_rows(&xs.iter().map(|&x| vec![x]).collect::<Vec<_>>(), ws).unwrap()
    }

    fn random_measure<R: Rng>(r: &mut R, n: usize, d: usize, uniform: bool) -> DiscreteMeasure {
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
        let w: Vec<f64> = (0..n).map(|_| if uniform { 1.0 } else { r.random_range(0.05..1.0) }).collect();
        DiscreteMeasure::from_rows(&rows, &w).unwrap()
    }

    fn random_sized<R: Rng>(r: &mut R, max_n: usize, d: usize, uniform: bool) -> DiscreteMeasure {
        let n = r.random_range(1..max_n);
        random_measure(r, n, d, uniform)
    }

    #[test]
    fn one_dimensional_examples() {
        let d0 = line(&[0.0], &[1.0]);
        let d1 = line(&[1.0], &[1.0]);
        for p in [1.0, 1.5, 2.0, 3.0] {
            assert_eq!(w1d(p, &d0, &d1).unwrap(), 1.0);
        }
        let u = line(&[0.0, 2.0], &[1.0, 1.0]);
        assert_eq!(w1d(1.0, &u, &d1).unwrap(), 1.0);
        assert_eq!(w1d(2.0, &u, &d1).unwrap(), 1.0);
        assert!(w1d(0.5, &u, &d1).is_err());
    }

    #[test]
    fn exact_examples() {
        let a = line(&[0.0, 1.0], &[1.0, 1.0]);
        let b = line(&[2.0, 3.0], &[1.0, 1.0]);
        assert_relative_eq!(w_exact(1.0, &a, &b).unwrap().0, 2.0, max_relative = 1e-15);
        let (w, plan) = w_exact(2.0, &a, &a).unwrap();
        assert_eq!(w, 0.0);
        assert_eq!(plan.coupling[[0, 1]], 0.0);
        assert_eq!(plan.coupling[[0, 0]], 0.5);
        let big = DiscreteMeasure::uniform(Array2::zeros((1001, 1))).unwrap();
        assert!(matches!(w_exact(1.0, &big, &big), Err(Error::SizeGuard { .. })));
    }

    #[test]
    fn brute_examples() {
        let x = DiscreteMeasure::dirac(&[0.0, 0.0]).unwrap();
        let y = DiscreteMeasure::dirac(&[3.0, 4.0]).unwrap();
        assert_eq!(w_brute(2.0, &x, &y).unwrap(), 5.0);
        let a = line(&[0.0, 1.0], &[1.0, 1.0]);
        assert_eq!(w_brute(1.0, &a, &a).unwrap(), 0.0);
        assert!(w_brute(1.0, &a, &line(&[0.0, 1.0], &[1.0, 2.0])).is_err());
        let nine = DiscreteMeasure::uniform(Array2::zeros((9, 1))).unwrap();
        assert!(w_brute(1.0, &nine, &nine).is_err());
    }

    #[test]
    fn translation_examples() {
        let a = line(&[0.0], &[1.0]);
        let b = line(&[0.0, 2.0], &[1.0, 1.0]);
        let (c, g) = translation_split(&a, &b).unwrap();
        assert_relative_eq!(c, 1.0, max_relative = 1e-14);
        assert_relative_eq!(g, 1.0, max_relative = 1e-14);
        let mut r = stream(4, 4);
        let m = random_measure(&mut r, 5, 2, false);
        let (c, g) = translation_split(&m, &m.translate(&[0.3, -1.2]).unwrap()).unwrap();
        assert!(c.abs() < 1e-12);
        assert_relative_eq!(g, 0.09 + 1.44, max_relative = 1e-12);
    }

    #[test]
    fn exact_matches_brute_force() {
        let mut r = stream(1, 1);
        for _ in 0..100 {
            let n = r.random_range(1..=7);
            let d = r.random_range(1..=3);
            let p = [1.0, 2.0, 1.5][r.random_range(0..3)];
            let a = random_measure(&mut r, n, d, true);
            let b = random_measure(&mut r, n, d, true);
            let e = w_exact(p, &a, &b).unwrap().0;
            let o = w_brute(p, &a, &b).unwrap();
            assert!((e - o).abs() <= 1e-12 * o.max(1e-300), "{e} vs {o}");
        }
    }

    #[test]
    fn one_dimensional_matches_exact() {
        let mut r = stream(2, 1);
        for _ in 0..100 {
            let a = random_sized(&mut r, 12, 1, false);
            let b = random_sized(&mut r, 12, 1, false);
            let p = [1.0, 2.0, 3.0][r.random_range(0..3)];
            let e = w_exact(p, &a, &b).unwrap().0;
            let q = w1d(p, &a, &b).unwrap();
            assert!((e - q).abs() <= 1e-10 * e.max(1e-12), "{e} vs {q}");
        }
    }

    #[test]
    fn plans_are_feasible_and_cost_consistent() {
        let mut r = stream(3, 1);
        for _ in 0..30 {
            let a = random_sized(&mut r, 20, 2, false);
            let b = random_sized(&mut r, 20, 2, false);
            let (_, plan) = w_exact(2.0, &a, &b).unwrap();
            assert!(plan.coupling.iter().all(|&v| v >= 0.0));
            for (row, &w) in plan.coupling.outer_iter().zip(a.weights()) {
                assert!((row.sum() - w).abs() < 1e-9);
            }
            for (col, &w) in plan.coupling.columns().into_iter().zip(b.weights()) {
                assert!((col.sum() - w).abs() < 1e-9);
            }
            let recomputed: f64 = plan
                .coupling
                .indexed_iter()
                .map(|((i, j), &v)| v * numerics::sq_dist(a.point(i), b.point(j)))
                .sum();
            assert!((recomputed - plan.cost).abs() < 1e-9);
        }
    }

    #[test]
    fn larger_instance_is_optimal_against_dual_bound() {
        // compare with the 1-D closed form on a moderately large problem
        let mut r = stream(9, 0);
        let a = random_measure(&mut r, 300, 1, true);
        let b = random_measure(&mut r, 250, 1, false);
        let e = w_exact(1.0, &a, &b).unwrap().0;
        assert_relative_eq!(e, w1d(1.0, &a, &b).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn gmm_wasserstein_examples() {
        // W_2 between Gaussians: sqrt((m1-m2)^2 + (s1-s2)^2); W_1 between translates: |m1-m2|
        let f = GaussianMixture::gaussian(&[0.0], 1.0).unwrap();
        let g = GaussianMixture::gaussian(&[0.7], 1.5).unwrap();
        let w2 = w1d_measures(2.0, &f.clone().into(), &g.clone().into()).unwrap();
        assert_relative_eq!(w2, (0.49f64 + 0.25).sqrt(), max_relative = 1e-8);
        let h = GaussianMixture::gaussian(&[-2.0], 1.0).unwrap();
        assert_relative_eq!(w1d_measures(1.0, &f.clone().into(), &h.into()).unwrap(), 2.0, max_relative = 1e-8);
        assert_eq!(w1d_measures(2.0, &f.clone().into(), &f.clone().into()).unwrap(), 0.0);
        // discrete vs Gaussian: W_2^2(delta_c, N(m, s^2)) = (c-m)^2 + s^2
        let d = line(&[0.5], &[1.0]);
        let w = w1d_measures(2.0, &d.into(), &g.clone().into()).unwrap();
        assert_relative_eq!(w * w, 0.04 + 2.25, max_relative = 1e-8);
    }

    #[test]
    fn gmm_wasserstein_matches_large_samples() {
        let f = GaussianMixture::new_1d(&[0.4, 0.6], &[-1.0, 1.5], &[0.5, 0.8]).unwrap();
        let g = GaussianMixture::new_1d(&[0.5, 0.5], &[0.0, 0.3], &[1.0, 0.6]).unwrap();
        let exact = w1d_measures(2.0, &f.clone().into(), &g.clone().into()).unwrap();
        let n = 200_000;
        let sf = f.sample(n, &mut stream(5, 0)).unwrap();
        let sg = g.sample(n, &mut stream(5, 1)).unwrap();
        let mc = w1d(2.0, &sf, &sg).unwrap();
        assert!((exact - mc).abs() < 0.01, "{exact} vs {mc}");
        // mixed path agrees with the quantile definition on a fine grid
        let d = line(&[-1.0, 0.2, 2.0], &[0.2, 0.5, 0.3]);
        let mixed = w1d_measures(1.0, &d.clone().into(), &g.clone().into()).unwrap();
        let k = 200_000;
        let mut grid = 0.0;
        let atoms = sorted_atoms(&d);
        for i in 0..k {
            let q = (i as f64 + 0.5) / k as f64;
            let mut c = 0.0;
            let x = atoms.iter().find(|a| { c += a.1; c >= q }).unwrap().0;
            grid += (x - g.quantile(q).unwrap()).abs() / k as f64;
        }
        assert!((mixed - grid).abs() < 1e-5, "{mixed} vs {grid}");
    }

    #[test]
    fn sliced_examples() {
        let a = line(&[0.0, 1.0], &[1.0, 3.0]);
        let b = line(&[2.0, -1.0], &[1.0, 1.0]);
        let t = ndarray::array![[1.0]];
        assert_eq!(sliced_w1(&a, &b, &t).unwrap(), w1d(1.0, &a, &b).unwrap());
        assert_eq!(sliced_w1(&a, &a, &t).unwrap(), 0.0);
        assert!(sliced_w1(&a, &b, &Array2::zeros((0, 1))).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn metric_axioms_and_bounds(seed in 0u64..10_000) {
            let mut r = stream(seed, 7);
            let d = r.random_range(1..=3);
            let a = random_sized(&mut r, 8, d, false);
            let b = random_sized(&mut r, 8, d, false);
            let c = random_sized(&mut r, 8, d, false);
            let ab = w_exact(2.0, &a, &b).unwrap().0;
            let ba = w_exact(2.0, &b, &a).unwrap().0;
            prop_assert!((ab - ba).abs() <= 1e-10);
            let ac = w_exact(2.0, &a, &c).unwrap().0;
            let cb = w_exact(2.0, &c, &b).unwrap().0;
            prop_assert!(ab <= ac + cb + 1e-8);
            let w1 = w_exact(1.0, &a, &b).unwrap().0;
            prop_assert!(w1 <= ab + 1e-10);
            let gap = &a.mean() - &b.mean();
            prop_assert!(gap.dot(&gap).sqrt() <= w1 + 1e-10);
            // all atoms lie in B(0, sqrt(d))
            let r_ball = (d as f64).sqrt();
            prop_assert!(ab <= (2.0 * r_ball).sqrt() * w1.sqrt() + 1e-10);
            let (centered, mean_gap) = translation_split(&a, &b).unwrap();
            prop_assert!((centered + mean_gap - ab * ab).abs() <= 1e-8);
        }
    }
}
