//! Cross-module properties of the transport solvers, discrepancies and sketches.

use ndarray::Array2;
use proptest::prelude::*;
use wmmd_core::discrepancy::{mmd, mmd_discrete};
use wmmd_core::kernels::KernelSpec;
use wmmd_core::measures::DiscreteMeasure;
use wmmd_core::sketch::{draw_features, merge, sketch_discrete, sketch_distance, sketch_samples};
use wmmd_core::transport::{w1d, w_brute, w_exact};

fn measure(max_atoms: usize, d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    (1..=max_atoms).prop_flat_map(move |n| {
        (prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n), prop::collection::vec(0.1f64..1.0, n))
            .prop_map(|(rows, w)| DiscreteMeasure::from_rows(&rows, &w).unwrap())
    })
}

fn uniform(n: usize, d: usize) -> impl Strategy<Value = DiscreteMeasure> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), n).prop_map(|rows| DiscreteMeasure::uniform_rows(&rows).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wasserstein_is_a_metric_on_samples(a in measure(6, 2), b in measure(6, 2), c in measure(6, 2)) {
        let w = |x: &DiscreteMeasure, y: &DiscreteMeasure| w_exact(1.0, x, y).unwrap().0;
        prop_assert!(w(&a, &a).abs() < 1e-12);
        prop_assert!((w(&a, &b) - w(&b, &a)).abs() < 1e-12);
        prop_assert!(w(&a, &c) <= w(&a, &b) + w(&b, &c) + 1e-10);
    }

    #[test]
    fn wasserstein_increases_with_p(a in measure(6, 2), b in measure(6, 2)) {
        let w1 = w_exact(1.0, &a, &b).unwrap().0;
        let w2 = w_exact(2.0, &a, &b).unwrap().0;
        let w3 = w_exact(3.0, &a, &b).unwrap().0;
        prop_assert!(w1 <= w2 * (1.0 + 1e-10) + 1e-14);
        prop_assert!(w2 <= w3 * (1.0 + 1e-10) + 1e-14);
    }

    #[test]
    fn translation_moves_w_p_by_the_shift(a in measure(6, 3), t in prop::collection::vec(-3.0f64..3.0, 3), p in 1.0f64..3.0) {
        let b = a.translate(&t).unwrap();
        let norm = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!((w_exact(p, &a, &b).unwrap().0 - norm).abs() <= 1e-9 * (1.0 + norm));
    }

    #[test]
    fn simplex_matches_permutation_oracle((a, b) in (1usize..=6).prop_flat_map(|n| (uniform(n, 2), uniform(n, 2)))) {
        for p in [1.0, 2.0] {
            let exact = w_exact(p, &a, &b).unwrap().0;
            let brute = w_brute(p, &a, &b).unwrap();
            prop_assert!((exact - brute).abs() <= 1e-12 * brute.max(1e-300));
        }
    }

    #[test]
    fn line_formula_matches_simplex(a in measure(8, 1), b in measure(8, 1), p in 1.0f64..3.0) {
        let x = w1d(p, &a, &b).unwrap();
        let y = w_exact(p, &a, &b).unwrap().0;
        prop_assert!((x - y).abs() <= 1e-10 * x.max(y).max(1e-12));
    }

    #[test]
    fn gaussian_mmd_is_dominated_by_w1(a in measure(6, 2), b in measure(6, 2), sigma in 0.3f64..3.0) {
        let k = KernelSpec::gaussian(sigma, 2).unwrap();
        let m = mmd_discrete(&k, &a, &b).unwrap().value;
        let w = w_exact(1.0, &a, &b).unwrap().0;
        prop_assert!(m <= w / sigma + 1e-9);
    }

    #[test]
    fn merge_is_order_free_and_count_weighted(a in measure(5, 2), b in measure(5, 2), seed in 0u64..100) {
        let k = KernelSpec::gaussian(1.0, 2).unwrap();
        let map = draw_features(&k, 16, seed).unwrap();
        let sa = sketch_samples(&map, a.points().view()).unwrap();
        let sb = sketch_samples(&map, b.points().view()).unwrap();
        let ab = merge(&[sa.clone(), sb.clone()]).unwrap();
        let ba = merge(&[sb, sa]).unwrap();
        prop_assert!(sketch_distance(&ab, &ba).unwrap() < 1e-15);
        let stacked = ndarray::concatenate(ndarray::Axis(0), &[a.points().view(), b.points().view()]).unwrap();
        let whole = sketch_samples(&map, stacked.view()).unwrap();
        prop_assert!(sketch_distance(&ab, &whole).unwrap() < 1e-12);
    }
}

#[test]
fn sketch_distance_approximates_mmd() {
    // E ||A(mu) - A(nu)||^2 = MMD^2 for features drawn from the spectral measure
    let a = DiscreteMeasure::uniform_rows(&[vec![0.0, 0.0], vec![1.0, 0.5]]).unwrap();
    let b = DiscreteMeasure::uniform_rows(&[vec![0.3, -0.2], vec![-1.0, 1.0], vec![2.0, 0.0]]).unwrap();
    let k = KernelSpec::gaussian(1.0, 2).unwrap();
    let exact = mmd(&k, &a.clone().into(), &b.clone().into()).unwrap().value;
    let mean_sq: f64 = (0..8)
        .map(|s| {
            let map = draw_features(&k, 4096, s).unwrap();
            sketch_distance(&sketch_discrete(&map, &a).unwrap(), &sketch_discrete(&map, &b).unwrap()).unwrap().powi(2)
        })
        .sum::<f64>()
        / 8.0;
    assert!((mean_sq.sqrt() - exact).abs() < 0.03 * exact, "{} vs {exact}", mean_sq.sqrt());
}

#[test]
fn sample_sketch_equals_measure_sketch_for_uniform_weights() {
    let rows = vec![vec![0.5, 1.0], vec![-0.25, 2.0], vec![1.0, -1.0]];
    let mu = DiscreteMeasure::uniform_rows(&rows).unwrap();
    let x = Array2::from_shape_vec((3, 2), rows.concat()).unwrap();
    let map = draw_features(&KernelSpec::laplacian(1.0, 2).unwrap(), 64, 9).unwrap();
    let d = sketch_distance(&sketch_samples(&map, x.view()).unwrap(), &sketch_discrete(&map, &mu).unwrap()).unwrap();
    assert!(d < 1e-14);
}
