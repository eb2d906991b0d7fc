//! Compressive K-means on separated Gaussian clusters, with a shard-merge check.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::{all_pass, flag};
use crate::error::{invalid, Result};
use crate::kernels::KernelSpec;
use crate::measures::{DiscreteMeasure, GaussianMixture};
use crate::report::Report;
use crate::rng;
use crate::sketch::{draw_features, merge, sketch_samples};
use crate::tasks::{excess_risk_report, CkmeansOptions, DecoderOptions, TaskSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CkmeansConfig {
    pub seeds: Vec<u64>,
    pub n: usize,
    pub n_test: usize,
    pub clusters: usize,
    pub d: usize,
    /// Cluster means sit on a circle of this radius (first two coordinates).
    pub separation: f64,
    pub cluster_sigma: f64,
    pub m: usize,
    pub kernel: KernelSpec,
    pub decoder: DecoderOptions,
    pub lloyd_inits: usize,
    pub shards: usize,
    /// Largest allowed median of `risk_sketch / risk_lloyd`.
    pub max_ratio: f64,
    pub merge_tol: f64,
}

impl Default for CkmeansConfig {
    fn default() -> Self {
        Self {
            seeds: (0..10).collect(),
            n: 10_000,
            n_test: 10_000,
            clusters: 3,
            d: 2,
            separation: 10.0,
            cluster_sigma: 1.0,
            m: 1024,
            kernel: KernelSpec::gaussian(2.0, 2).expect("valid"),
            decoder: DecoderOptions::default(),
            lloyd_inits: 10,
            shards: 4,
            max_ratio: 1.2,
            merge_tol: 1e-12,
        }
    }
}

impl CkmeansConfig {
    pub fn population(&self) -> Result<GaussianMixture> {
        if self.clusters == 0 || self.d == 0 {
            return Err(invalid("need at least one cluster and one dimension"));
        }
        let mut means = Array2::zeros((self.clusters, self.d));
        for c in 0..self.clusters {
            let t = 2.0 * std::f64::consts::PI * c as f64 / self.clusters as f64;
            means[[c, 0]] = self.separation * t.cos();
            if self.d > 1 {
                means[[c, 1]] = self.separation * t.sin();
            }
        }
        GaussianMixture::new(&vec![1.0; self.clusters], means, &vec![self.cluster_sigma; self.clusters])
    }
}

fn median(v: &[f64]) -> f64 {
    let mut v = v.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Largest entrywise gap between the merged shard sketches and the sketch of all samples.
fn merge_gap(map: &crate::sketch::FeatureMap, x: &Array2<f64>, shards: usize) -> Result<f64> {
    let n = x.nrows();
    let parts: Vec<_> = (0..shards)
        .map(|i| sketch_samples(map, x.slice(s![i * n / shards..(i + 1) * n / shards, ..])))
        .collect::<Result<_>>()?;
    let merged = merge(&parts)?;
    let whole = sketch_samples(map, x.view())?;
    Ok(merged.values().iter().zip(whole.values()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// Median over seeds of the decoded-to-Lloyd risk ratio on held-out data,
/// plus an exact merge check per seed.
pub fn ckmeans(cfg: &CkmeansConfig) -> Result<Report> {
    if cfg.seeds.is_empty() {
        return Err(invalid("no seeds"));
    }
    if cfg.shards == 0 || cfg.shards > cfg.n {
        return Err(invalid(format!("{} shards for {} samples", cfg.shards, cfg.n)));
    }
    let kernel = cfg.kernel.clone().validated()?;
    let pop = cfg.population()?;
    let task = TaskSpec::KMeans { k: cfg.clusters };
    let mut rep = Report::new(
        "ckmeans",
        cfg.seeds[0],
        &["seed", "risk_sketch", "risk_lloyd", "ratio", "sketch_distance", "residual", "merge_gap", "pass"],
    );
    for &seed in &cfg.seeds {
        let train = pop.sample(cfg.n, &mut rng::stream(seed, 0))?;
        let test = pop.sample(cfg.n_test, &mut rng::stream(seed, 1))?;
        let opts = CkmeansOptions {
            kernel: kernel.clone(),
            m: cfg.m,
            seed,
            decoder: cfg.decoder.clone(),
            lloyd_inits: cfg.lloyd_inits,
        };
        let r = excess_risk_report(&train, &test, &pop.clone().into(), &task, &opts)?;
        let gap = merge_gap(&draw_features(&kernel, cfg.m, seed)?, &points(&train), cfg.shards)?;
        rep.push(vec![
            seed as f64,
            r.risk_sketch,
            r.risk_lloyd,
            r.ratio,
            r.sketch_distance,
            r.residual,
            gap,
            flag(gap <= cfg.merge_tol),
        ]);
    }
    let ratios = rep.column("ratio").expect("ratio column");
    let med = median(&ratios);
    let worst_gap = rep.column("merge_gap").expect("merge column").into_iter().fold(0.0, f64::max);
    rep.margin("median_ratio", cfg.max_ratio - med);
    rep.margin("merge", cfg.merge_tol - worst_gap);
    rep.require(med <= cfg.max_ratio && all_pass(&rep));
    rep.note("median_ratio", med);
    rep.note("max_merge_gap", worst_gap);
    rep.note("max_ratio", cfg.max_ratio);
    Ok(rep)
}

fn points(mu: &DiscreteMeasure) -> Array2<f64> {
    mu.points().clone()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn small_run_passes() {
        let cfg = CkmeansConfig { seeds: vec![3, 4, 5], n: 1500, n_test: 1500, m: 128, lloyd_inits: 3, ..Default::default() };
        let rep = ckmeans(&cfg).unwrap();
        assert!(rep.pass, "{:?} {:?}", rep.margins, rep.rows);
        assert_eq!(rep.rows.len(), 3);
    }

    #[test]
    fn population_means_on_circle() {
        let g = CkmeansConfig::default().population().unwrap();
        for row in g.means().outer_iter() {
            assert!((row.dot(&row).sqrt() - 10.0).abs() < 1e-12);
        }
    }
}
