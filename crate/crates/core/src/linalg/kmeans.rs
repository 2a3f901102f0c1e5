//! Lloyd's algorithm with k-means++ seeding.
//!
//! Fully deterministic for a fixed seed: ties in assignment break to the
//! lowest index, empty clusters are re-seeded from the point farthest from
//! its own center, and iteration stops when the assignment set is stable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::linalg::matrix::{squared_euclidean, Matrix};

pub const MAX_LLOYD_ITERS: usize = 100;

/// Clustering output. `objective_trace` records the within-cluster sum of
/// squares after every assignment phase, which is non-increasing for Lloyd.
#[derive(Clone, Debug)]
pub struct Kmeans {
    pub assignments: Vec<usize>,
    pub centers: Matrix,
    pub objective: f64,
    pub objective_trace: Vec<f64>,
}

pub fn kmeans(x: &Matrix, k: usize, seed: u64) -> Result<Kmeans> {
    let n = x.rows();
    if k == 0 || k > n {
        return Err(CoreError::validation(format!(
            "kmeans: K={k} out of range [1, {n}]"
        )));
    }
    if !x.all_finite() {
        return Err(CoreError::validation("kmeans: non-finite input"));
    }
    let mut rng = crate::seeding::substream(seed, &[crate::seeding::tag::ATLAS_KMEANS]);

    let mut centers = plus_plus_init(x, k, &mut rng);
    let mut assignments = assign_all(x, &centers);
    let mut trace = vec![wcss(x, &centers, &assignments)];

    for _ in 0..MAX_LLOYD_ITERS {
        update_centers(x, &assignments, &mut centers);
        reseed_empty_clusters(x, &assignments, &mut centers);
        let next = assign_all(x, &centers);
        trace.push(wcss(x, &centers, &next));
        let stable = next == assignments;
        assignments = next;
        if stable {
            break;
        }
    }

    let objective = *trace.last().unwrap();
    Ok(Kmeans {
        assignments,
        centers,
        objective,
        objective_trace: trace,
    })
}

fn plus_plus_init(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let d = x.cols();
    let mut centers = Matrix::zeros(k, d);

    let first = rng.gen_range(0..n);
    centers.row_mut(0).copy_from_slice(x.row(first));

    let mut d2: Vec<f64> = (0..n)
        .map(|i| squared_euclidean(x.row(i), centers.row(0)))
        .collect();

    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let target = rng.gen::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc >= target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            // All points coincide with existing centers; any pick works.
            rng.gen_range(0..n)
        };
        centers.row_mut(c).copy_from_slice(x.row(idx));
        for i in 0..n {
            let dist = squared_euclidean(x.row(i), centers.row(c));
            if dist < d2[i] {
                d2[i] = dist;
            }
        }
    }
    centers
}

fn assign_all(x: &Matrix, centers: &Matrix) -> Vec<usize> {
    (0..x.rows())
        .map(|i| nearest_center(x.row(i), centers).0)
        .collect()
}

/// Index and squared distance of the nearest center; ties go to lowest index.
pub fn nearest_center(point: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = squared_euclidean(point, centers.row(0));
    for c in 1..centers.rows() {
        let d = squared_euclidean(point, centers.row(c));
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    (best, best_d)
}

fn update_centers(x: &Matrix, assignments: &[usize], centers: &mut Matrix) {
    let k = centers.rows();
    let d = centers.cols();
    let mut counts = vec![0usize; k];
    let mut sums = vec![0.0; k * d];
    for (i, &a) in assignments.iter().enumerate() {
        counts[a] += 1;
        for (s, &v) in sums[a * d..(a + 1) * d].iter_mut().zip(x.row(i)) {
            *s += v;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            continue; // handled by reseed_empty_clusters
        }
        let inv = 1.0 / counts[c] as f64;
        for j in 0..d {
            centers.set(c, j, sums[c * d + j] * inv);
        }
    }
}

/// Move each empty cluster's center onto the point currently farthest from
/// its assigned center (ties to the lowest index), one point per cluster.
fn reseed_empty_clusters(x: &Matrix, assignments: &[usize], centers: &mut Matrix) {
    let k = centers.rows();
    let mut counts = vec![0usize; k];
    for &a in assignments {
        counts[a] += 1;
    }
    let mut taken: Vec<usize> = Vec::new();
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut far_idx = usize::MAX;
        let mut far_d = -1.0;
        for i in 0..x.rows() {
            if taken.contains(&i) {
                continue;
            }
            let d = squared_euclidean(x.row(i), centers.row(assignments[i]));
            if d > far_d {
                far_d = d;
                far_idx = i;
            }
        }
        if far_idx != usize::MAX {
            centers.row_mut(c).copy_from_slice(x.row(far_idx));
            taken.push(far_idx);
        }
    }
}

fn wcss(x: &Matrix, centers: &Matrix, assignments: &[usize]) -> f64 {
    assignments
        .iter()
        .enumerate()
        .map(|(i, &a)| squared_euclidean(x.row(i), centers.row(a)))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn saturation_every_point_its_own_center() {
        let x = Matrix::from_vec(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let km = kmeans(&x, 4, 1).unwrap();
        assert!(km.objective.abs() < 1e-12);
        let mut seen = km.assignments.clone();
        seen.sort_unstable();
        assert_eq!(seen, vec![0, 1, 2, 3]);
    }

    #[test]
    fn two_separated_blobs_recover_means() {
        let x = Matrix::from_vec(
            4,
            2,
            vec![0.0, 0.0, 0.0, 1.0, 10.0, 0.0, 10.0, 1.0],
        )
        .unwrap();
        let km = kmeans(&x, 2, 9).unwrap();
        let mut centers: Vec<(f64, f64)> = (0..2)
            .map(|c| (km.centers.get(c, 0), km.centers.get(c, 1)))
            .collect();
        centers.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        assert!((centers[0].0 - 0.0).abs() < 1e-12 && (centers[0].1 - 0.5).abs() < 1e-12);
        assert!((centers[1].0 - 10.0).abs() < 1e-12 && (centers[1].1 - 0.5).abs() < 1e-12);
        assert_eq!(km.assignments[0], km.assignments[1]);
        assert_eq!(km.assignments[2], km.assignments[3]);
        assert_ne!(km.assignments[0], km.assignments[2]);
    }

    #[test]
    fn objective_monotone_and_assignments_optimal() {
        let mut rng = crate::seeding::substream(123, &[4]);
        let data: Vec<f64> = (0..60).map(|_| rng.gen::<f64>() * 5.0).collect();
        let x = Matrix::from_vec(30, 2, data).unwrap();
        let km = kmeans(&x, 3, 7).unwrap();
        for w in km.objective_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {w:?}");
        }
        assert!(km.objective <= km.objective_trace[0] + 1e-12);
        // Post-hoc argmin re-verification of final assignments.
        for i in 0..30 {
            let (best, _) = nearest_center(x.row(i), &km.centers);
            assert_eq!(km.assignments[i], best);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let mut rng = crate::seeding::substream(5, &[5]);
        let data: Vec<f64> = (0..40).map(|_| rng.gen::<f64>()).collect();
        let x = Matrix::from_vec(20, 2, data).unwrap();
        let a = kmeans(&x, 4, 11).unwrap();
        let b = kmeans(&x, 4, 11).unwrap();
        assert_eq!(a.assignments, b.assignments);
        assert_eq!(a.centers, b.centers);
    }

    #[test]
    fn rejects_k_larger_than_n() {
        let x = Matrix::zeros(3, 2);
        assert!(kmeans(&x, 4, 0).is_err());
        assert!(kmeans(&x, 0, 0).is_err());
    }
}
