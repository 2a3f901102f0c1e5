//! Property tests over the declared invariants.

mod common;

use proptest::prelude::*;
use spma_core::linalg::{kmeans, pairwise_euclidean, pearson, softmax_temp, top_r_eigen, Matrix};
use spma_core::metrics::harmonic_mean;
use spma_core::objective::normalized_distances;
use spma_core::seeding::substream;
use spma_core::selftest::random_orthogonal;

fn finite_vec(len: usize, range: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-range..range, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_shift_invariant_and_normalized(
        scores in finite_vec(6, 50.0),
        shift in -500.0..500.0f64,
        tau in 0.05..5.0f64,
        negate in any::<bool>(),
    ) {
        let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
        let a = softmax_temp(&scores, tau, negate).unwrap();
        let b = softmax_temp(&shifted, tau, negate).unwrap();
        let sum: f64 = a.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12);
            prop_assert!(*x >= 0.0);
        }
    }

    #[test]
    fn pairwise_distances_respect_orthogonal_maps_and_scaling(
        data in finite_vec(24, 5.0),
        rot_seed in 0u64..1000,
        scale in 0.1..10.0f64,
    ) {
        let x = Matrix::from_vec(8, 3, data).unwrap();
        let d = pairwise_euclidean(&x).unwrap();

        let mut rng = substream(rot_seed, &[1]);
        let q = random_orthogonal(3, &mut rng);
        let rotated = x.matmul(&q).unwrap();
        let dr = pairwise_euclidean(&rotated).unwrap();
        prop_assert!(d.max_abs_diff(&dr) <= 1e-9);

        let mut scaled = x.clone();
        scaled.scale(scale);
        let ds = pairwise_euclidean(&scaled).unwrap();
        for (a, b) in d.data().iter().zip(ds.data()) {
            prop_assert!((a * scale - b).abs() <= 1e-9 * scale.max(1.0));
        }
    }

    #[test]
    fn pearson_of_positive_affine_image_is_one(
        base in finite_vec(12, 10.0),
        p in 0.01..20.0f64,
        q in -50.0..50.0f64,
    ) {
        // Ensure the input has real variance before correlating.
        let mut a = base;
        a[0] += 30.0;
        let b: Vec<f64> = a.iter().map(|x| p * x + q).collect();
        let r = pearson(&a, &b).unwrap();
        prop_assert!((r - 1.0).abs() <= 1e-10, "r = {}", r);
    }

    #[test]
    fn eigen_full_rank_reconstruction(data in finite_vec(20, 2.0), dim in 2usize..5) {
        let a = Matrix::from_vec(dim, dim, data[..dim * dim].to_vec()).unwrap();
        let mut s = a.transpose().matmul(&a).unwrap();
        // Symmetrize exactly against rounding in the product.
        for i in 0..dim {
            for j in (i + 1)..dim {
                let v = 0.5 * (s.get(i, j) + s.get(j, i));
                s.set(i, j, v);
                s.set(j, i, v);
            }
        }
        let e = top_r_eigen(&s, dim).unwrap();
        let mut lam = Matrix::zeros(dim, dim);
        for (i, &v) in e.values.iter().enumerate() {
            lam.set(i, i, v);
        }
        let recon = e.vectors.matmul(&lam).unwrap().matmul(&e.vectors.transpose()).unwrap();
        let mut err = 0.0f64;
        for (x, y) in recon.data().iter().zip(s.data()) {
            err += (x - y) * (x - y);
        }
        prop_assert!(err.sqrt() <= 1e-6 * s.frob_norm().max(1e-12));
        for w in e.values.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn kmeans_objective_never_increases(
        data in finite_vec(40, 4.0),
        k in 1usize..6,
        seed in 0u64..500,
    ) {
        let x = Matrix::from_vec(20, 2, data).unwrap();
        let km = kmeans(&x, k, seed).unwrap();
        for w in km.objective_trace.windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9, "trace rose: {:?}", w);
        }
    }

    #[test]
    fn normalized_distances_cancel_uniform_scale(
        data in finite_vec(15, 3.0),
        scale in 0.05..50.0f64,
    ) {
        let x = Matrix::from_vec(5, 3, data.clone()).unwrap();
        // Skip the degenerate all-identical case.
        prop_assume!(data.windows(2).any(|w| (w[0] - w[1]).abs() > 1e-6));
        let d1 = match normalized_distances(&x) {
            Ok(d) => d,
            Err(_) => return Ok(()),
        };
        let mut scaled = x.clone();
        scaled.scale(scale);
        let d2 = normalized_distances(&scaled).unwrap();
        prop_assert!(d1.values.max_abs_diff(&d2.values) <= 1e-10);
        // Off-diagonal mean is 1 by construction.
        let n = d1.values.rows();
        let mut sum = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    sum += d1.values.get(i, j);
                }
            }
        }
        prop_assert!((sum / (n * (n - 1)) as f64 - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn harmonic_mean_bounds(a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let h = harmonic_mean(a, b);
        prop_assert!(h >= 0.0);
        prop_assert!(h <= a.max(b) + 1e-15);
        let eq = harmonic_mean(a, a);
        prop_assert!((eq - a).abs() <= 1e-15);
    }
}
