//! Statistics kernels shared across the pipeline: pairwise distances,
//! tempered softmax, Pearson correlation, sample covariance.

use crate::error::{CoreError, Result};
use crate::linalg::matrix::{euclidean, Matrix};

/// Full pairwise Euclidean distance table of the rows of `x`.
///
/// Symmetric with zero diagonal; each unordered pair is computed once.
pub fn pairwise_euclidean(x: &Matrix) -> Result<Matrix> {
    if x.rows() == 0 {
        return Err(CoreError::validation("pairwise_euclidean: empty matrix"));
    }
    if !x.all_finite() {
        return Err(CoreError::validation(
            "pairwise_euclidean: non-finite input",
        ));
    }
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean(x.row(i), x.row(j));
            d.set(i, j, dist);
            d.set(j, i, dist);
        }
    }
    Ok(d)
}

/// Tempered softmax with max-shift stabilization.
///
/// With `negate` set, returns `exp(-s_k/tau) / sum_j exp(-s_j/tau)`, the form
/// used for chart assignments where lower scores mean higher probability.
pub fn softmax_temp(scores: &[f64], tau: f64, negate: bool) -> Result<Vec<f64>> {
    if !(tau > 0.0) {
        return Err(CoreError::validation(format!(
            "softmax temperature must be positive, got {tau}"
        )));
    }
    if scores.is_empty() {
        return Err(CoreError::validation("softmax on empty score vector"));
    }
    if !scores.iter().all(|s| s.is_finite()) {
        return Err(CoreError::validation("softmax: non-finite scores"));
    }
    let sign = if negate { -1.0 } else { 1.0 };
    let logits: Vec<f64> = scores.iter().map(|&s| sign * s / tau).collect();
    Ok(softmax(&logits))
}

/// Plain softmax with max-shift; input assumed finite.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for v in &mut out {
        *v /= sum;
    }
    out
}

/// log(sum(exp(logits))) with max-shift.
pub fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln()
}

/// Pearson correlation coefficient, two-pass form.
///
/// A vector with zero variance has no defined correlation; that case is
/// reported as a degenerate-statistic error rather than silently mapped to 0.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(CoreError::validation("pearson: length mismatch"));
    }
    if a.len() < 2 {
        return Err(CoreError::validation("pearson: need at least 2 samples"));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        cov += dx * dy;
        va += dx * dx;
        vb += dy * dy;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(CoreError::degenerate(
            "pearson undefined: zero-variance input",
        ));
    }
    Ok(cov / (va.sqrt() * vb.sqrt()))
}

/// Unbiased sample covariance of the rows of `x` (divisor n-1).
pub fn sample_covariance(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(CoreError::validation(
            "sample_covariance: need at least 2 rows",
        ));
    }
    let d = x.cols();
    let means = x.col_means();
    let mut s = Matrix::zeros(d, d);
    let mut centered = vec![0.0; d];
    for i in 0..n {
        for (c, (&v, &m)) in centered.iter_mut().zip(x.row(i).iter().zip(&means)) {
            *c = v - m;
        }
        for p in 0..d {
            let cp = centered[p];
            if cp == 0.0 {
                continue;
            }
            for q in p..d {
                let add = cp * centered[q];
                s.set(p, q, s.get(p, q) + add);
            }
        }
    }
    let denom = (n - 1) as f64;
    for p in 0..d {
        for q in p..d {
            let v = s.get(p, q) / denom;
            s.set(p, q, v);
            s.set(q, p, v);
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::substream;
    use rand::Rng;

    #[test]
    fn pairwise_two_points_1d() {
        let x = Matrix::from_vec(2, 1, vec![0.0, 3.0]).unwrap();
        let d = pairwise_euclidean(&x).unwrap();
        assert_eq!(d.data(), &[0.0, 3.0, 3.0, 0.0]);
    }

    #[test]
    fn pairwise_symmetric_zero_diag() {
        let mut rng = substream(42, &[1]);
        let data: Vec<f64> = (0..24).map(|_| rng.gen::<f64>()).collect();
        let x = Matrix::from_vec(8, 3, data).unwrap();
        let d = pairwise_euclidean(&x).unwrap();
        for i in 0..8 {
            assert_eq!(d.get(i, i), 0.0);
            for j in 0..8 {
                assert_eq!(d.get(i, j), d.get(j, i));
                assert!(d.get(i, j) >= 0.0);
            }
        }
    }

    #[test]
    fn pairwise_matches_scalar_loop_oracle() {
        let mut rng = substream(7, &[2]);
        let data: Vec<f64> = (0..15).map(|_| rng.gen::<f64>() * 4.0 - 2.0).collect();
        let x = Matrix::from_vec(5, 3, data).unwrap();
        let d = pairwise_euclidean(&x).unwrap();
        // Independent scalar double loop.
        for i in 0..5 {
            for j in 0..5 {
                let mut s = 0.0;
                for k in 0..3 {
                    let diff = x.get(i, k) - x.get(j, k);
                    s += diff * diff;
                }
                assert!((d.get(i, j) - s.sqrt()).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn pairwise_rejects_nonfinite() {
        let mut x = Matrix::zeros(2, 2);
        x.data_mut()[3] = f64::NAN;
        assert!(pairwise_euclidean(&x).is_err());
    }

    #[test]
    fn softmax_uniform_on_constant_scores() {
        let p = softmax_temp(&[5.0, 5.0, 5.0], 0.7, false).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
        let q = softmax_temp(&[5.0, 5.0, 5.0], 0.7, true).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn softmax_hand_case() {
        // e^0 / (e^0 + e^{ln 3}) = 1/4.
        let p = softmax_temp(&[0.0, 3.0f64.ln()], 1.0, false).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-14);
        assert!((p[1] - 0.75).abs() < 1e-14);
    }

    #[test]
    fn softmax_shift_invariance() {
        let scores = [1.0, -0.5, 2.5, 0.0];
        let shifted: Vec<f64> = scores.iter().map(|s| s + 1000.0).collect();
        let p = softmax_temp(&scores, 0.3, true).unwrap();
        let q = softmax_temp(&shifted, 0.3, true).unwrap();
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() <= 1e-12);
        }
        let sum: f64 = p.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn softmax_rejects_nonpositive_tau() {
        assert!(softmax_temp(&[1.0], 0.0, false).is_err());
        assert!(softmax_temp(&[1.0], -1.0, false).is_err());
    }

    #[test]
    fn pearson_self_and_anti() {
        let a = [1.0, 2.0, 3.0];
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        let b = [3.0, 2.0, 1.0];
        assert!((pearson(&a, &b).unwrap() + 1.0).abs() < 1e-15);
    }

    #[test]
    fn pearson_matches_zscore_oracle() {
        let mut rng = substream(11, &[3]);
        let a: Vec<f64> = (0..20).map(|_| rng.gen::<f64>() * 10.0).collect();
        let b: Vec<f64> = (0..20).map(|_| rng.gen::<f64>() * 10.0).collect();
        let r = pearson(&a, &b).unwrap();
        // Oracle: mean of products of z-scores with population std.
        let n = 20.0;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let sa = (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n).sqrt();
        let sb = (b.iter().map(|x| (x - mb).powi(2)).sum::<f64>() / n).sqrt();
        let oracle = a
            .iter()
            .zip(&b)
            .map(|(x, y)| ((x - ma) / sa) * ((y - mb) / sb))
            .sum::<f64>()
            / n;
        assert!((r - oracle).abs() <= 1e-12, "{r} vs {oracle}");
    }

    #[test]
    fn pearson_zero_variance_is_degenerate() {
        let a = [1.0, 1.0, 1.0];
        let b = [1.0, 2.0, 3.0];
        assert!(matches!(
            pearson(&a, &b),
            Err(crate::error::CoreError::Degenerate(_))
        ));
    }

    #[test]
    fn covariance_of_two_points() {
        let x = Matrix::from_vec(2, 1, vec![0.0, 2.0]).unwrap();
        let s = sample_covariance(&x).unwrap();
        assert!((s.get(0, 0) - 2.0).abs() < 1e-15); // ((0-1)^2+(2-1)^2)/1
    }
}
