//! Shared test oracles, deliberately independent of the production kernels.
#![allow(dead_code)]

use rand_chacha::ChaCha8Rng;
use spma_core::linalg::Matrix;
use spma_core::seeding::draw_normal;

/// Full dense symmetric eigendecomposition by cyclic Jacobi sweeps.
///
/// Returns (values, vectors) with values sorted non-increasing and vectors
/// as columns. This is the reference route for anything spectral; the
/// production code never calls it.
pub fn jacobi_eigen(s: &Matrix) -> (Vec<f64>, Matrix) {
    let d = s.rows();
    assert_eq!(d, s.cols(), "jacobi: square input");
    let mut a = s.clone();
    let mut v = Matrix::identity(d);

    let off = |a: &Matrix| -> f64 {
        let mut o = 0.0;
        for i in 0..d {
            for j in 0..d {
                if i != j {
                    o += a.get(i, j) * a.get(i, j);
                }
            }
        }
        o.sqrt()
    };

    let scale = s.frob_norm().max(1.0);
    for _sweep in 0..100 {
        if off(&a) <= 1e-14 * scale {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = a.get(p, q);
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (1.0 + theta * theta).sqrt())
                } else {
                    1.0 / (theta - (1.0 + theta * theta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                // Rotate rows/columns p and q of A and columns of V.
                for k in 0..d {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - sn * akq);
                    a.set(k, q, sn * akp + c * akq);
                }
                for k in 0..d {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - sn * aqk);
                    a.set(q, k, sn * apk + c * aqk);
                }
                for k in 0..d {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - sn * vkq);
                    v.set(k, q, sn * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(d, d);
    for (col, &i) in order.iter().enumerate() {
        for row in 0..d {
            vectors.set(row, col, v.get(row, i));
        }
    }
    (values, vectors)
}

/// Dense chart score oracle: materialize Sigma, full eigendecomposition for
/// the log-determinant, and an explicit inverse application for the
/// Mahalanobis term.
pub fn jacobi_chart_score(chart: &spma_core::Chart, z: &[f64]) -> f64 {
    let d = chart.dim();
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = if i == j { chart.resid_var() } else { 0.0 };
            for r in 0..chart.rank() {
                s += chart.basis().get(i, r) * chart.factor_vars()[r] * chart.basis().get(j, r);
            }
            sigma.set(i, j, s);
        }
    }
    let (vals, vecs) = jacobi_eigen(&sigma);
    let logdet: f64 = vals.iter().map(|&l| l.ln()).sum();
    let diff: Vec<f64> = z.iter().zip(chart.mu()).map(|(&a, &b)| a - b).collect();
    // Sigma^{-1} diff = V diag(1/vals) V^T diff
    let vt_diff = vecs.transpose().matvec(&diff).unwrap();
    let scaled: Vec<f64> = vt_diff.iter().zip(&vals).map(|(&x, &l)| x / l).collect();
    let inv_diff = vecs.matvec(&scaled).unwrap();
    let mahal: f64 = diff.iter().zip(&inv_diff).map(|(&a, &b)| a * b).sum();
    (mahal + logdet) / d as f64
}

pub fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = scale * draw_normal(rng);
    }
    m
}

pub fn apply_rigid_motion(
    x: &Matrix,
    rotation: &Matrix,
    scale: f64,
    shift: &[f64],
) -> Matrix {
    let mut out = x.matmul(rotation).unwrap();
    for i in 0..out.rows() {
        for (v, &t) in out.row_mut(i).iter_mut().zip(shift) {
            *v = scale * *v + t;
        }
    }
    out
}
