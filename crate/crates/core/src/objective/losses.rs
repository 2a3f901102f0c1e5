//! Individual loss terms and their gradients.
//!
//! Teacher-side quantities (latents, logits, assignments, distance matrices,
//! kNN weights) are constants: no gradient is ever computed with respect to
//! them. Gradients for the relational terms flow through both the per-pair
//! distance and the batch mean-off-diagonal normalizer.

use serde::{Deserialize, Serialize};

use crate::chart::{chart_score_with_grad, score_all, ChartAtlas};
use crate::error::{CoreError, Result};
use crate::linalg::stats::{log_sum_exp, pairwise_euclidean, softmax_temp};
use crate::linalg::Matrix;

/// Pairwise distances divided by their mean off-diagonal value, so the
/// off-diagonal mean is exactly 1 and uniform rescaling of the inputs cancels.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NormalizedDistanceMatrix {
    pub values: Matrix,
    pub mean_offdiag: f64,
}

pub fn normalized_distances(z: &Matrix) -> Result<NormalizedDistanceMatrix> {
    let m = z.rows();
    if m < 2 {
        return Err(CoreError::validation(
            "normalized_distances: need at least 2 points",
        ));
    }
    let mut d = pairwise_euclidean(z)?;
    let mut sum = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                sum += d.get(i, j);
            }
        }
    }
    let mean = sum / (m * (m - 1)) as f64;
    if mean <= 0.0 {
        return Err(CoreError::degenerate(
            "normalized_distances: all points identical",
        ));
    }
    d.scale(1.0 / mean);
    Ok(NormalizedDistanceMatrix {
        values: d,
        mean_offdiag: mean,
    })
}

/// Mean cross-entropy with log-sum-exp stabilization.
pub fn loss_ce(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    Ok(ce_impl(logits, labels, false)?.0)
}

/// Cross-entropy and its gradient with respect to the logits.
pub fn loss_ce_with_grad(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let (v, g) = ce_impl(logits, labels, true)?;
    Ok((v, g.expect("grad requested")))
}

fn ce_impl(logits: &Matrix, labels: &[usize], want_grad: bool) -> Result<(f64, Option<Matrix>)> {
    let m = logits.rows();
    let c = logits.cols();
    if m == 0 || labels.len() != m {
        return Err(CoreError::validation("loss_ce: batch/label mismatch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(CoreError::validation(format!(
            "loss_ce: label {bad} out of range for {c} classes"
        )));
    }
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Matrix::zeros(m, c));
    for i in 0..m {
        let row = logits.row(i);
        let lse = log_sum_exp(row);
        total += lse - row[labels[i]];
        if let Some(g) = grad.as_mut() {
            for j in 0..c {
                let p = (row[j] - lse).exp();
                let target = if j == labels[i] { 1.0 } else { 0.0 };
                g.set(i, j, (p - target) / m as f64);
            }
        }
    }
    Ok((total / m as f64, grad))
}

/// Temperature-scaled distillation: `T^2 * mean KL(teacher_T || student_T)`.
pub fn loss_kd(student_logits: &Matrix, teacher_logits: &Matrix, temperature: f64) -> Result<f64> {
    Ok(kd_impl(student_logits, teacher_logits, temperature, false)?.0)
}

pub fn loss_kd_with_grad(
    student_logits: &Matrix,
    teacher_logits: &Matrix,
    temperature: f64,
) -> Result<(f64, Matrix)> {
    let (v, g) = kd_impl(student_logits, teacher_logits, temperature, true)?;
    Ok((v, g.expect("grad requested")))
}

fn kd_impl(
    student: &Matrix,
    teacher: &Matrix,
    temperature: f64,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    if student.rows() != teacher.rows() || student.cols() != teacher.cols() {
        return Err(CoreError::validation("loss_kd: shape mismatch"));
    }
    if !(temperature > 0.0) {
        return Err(CoreError::validation("loss_kd: temperature must be > 0"));
    }
    let m = student.rows();
    let c = student.cols();
    if m == 0 {
        return Err(CoreError::validation("loss_kd: empty batch"));
    }
    let t = temperature;
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Matrix::zeros(m, c));
    let mut tl = vec![0.0; c];
    let mut sl = vec![0.0; c];
    for i in 0..m {
        for j in 0..c {
            tl[j] = teacher.get(i, j) / t;
            sl[j] = student.get(i, j) / t;
        }
        let lse_t = log_sum_exp(&tl);
        let lse_s = log_sum_exp(&sl);
        let mut kl = 0.0;
        for j in 0..c {
            let log_pt = tl[j] - lse_t;
            let log_ps = sl[j] - lse_s;
            let pt = log_pt.exp();
            kl += pt * (log_pt - log_ps);
            if let Some(g) = grad.as_mut() {
                let ps = log_ps.exp();
                // d/d(student logit) of T^2 * KL / m.
                g.set(i, j, t * (ps - pt) / m as f64);
            }
        }
        // KL is non-negative; rounding near identical distributions can
        // leave a few negative ulps behind.
        total += kl.max(0.0);
    }
    Ok((t * t * total / m as f64, grad))
}

/// Global relational term: mean squared discrepancy of normalized pairwise
/// distances over ordered off-diagonal pairs.
pub fn loss_geo(
    student_latents: &Matrix,
    teacher_dist: &NormalizedDistanceMatrix,
) -> Result<f64> {
    Ok(geo_impl(student_latents, teacher_dist, false)?.0)
}

pub fn loss_geo_with_grad(
    student_latents: &Matrix,
    teacher_dist: &NormalizedDistanceMatrix,
) -> Result<(f64, Matrix)> {
    let (v, g) = geo_impl(student_latents, teacher_dist, true)?;
    Ok((v, g.expect("grad requested")))
}

fn geo_impl(
    z: &Matrix,
    teacher: &NormalizedDistanceMatrix,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let m = z.rows();
    if teacher.values.rows() != m {
        return Err(CoreError::validation("loss_geo: batch size mismatch"));
    }
    let student = normalized_distances(z)?;
    let pairs = (m * (m - 1)) as f64;

    let mut loss = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            let e = student.values.get(i, j) - teacher.values.get(i, j);
            loss += 2.0 * e * e;
        }
    }
    loss /= pairs;

    let grad = if want_grad {
        // dL/dD_ab on unordered pairs, including the path through the mean
        // normalizer: (4 / (pairs * mu)) * (e_ab - G) with
        // G = (2/pairs) * sum_{i<j} e_ij * Dtilde_ij.
        let mut g_sum = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                let e = student.values.get(i, j) - teacher.values.get(i, j);
                g_sum += e * student.values.get(i, j);
            }
        }
        let g_mean = 2.0 * g_sum / pairs;
        let mut grad = Matrix::zeros(m, z.cols());
        let raw = |i: usize, j: usize| student.values.get(i, j) * student.mean_offdiag;
        for a in 0..m {
            for b in (a + 1)..m {
                let d_ab = raw(a, b);
                if d_ab <= 0.0 {
                    continue; // coincident points: subgradient 0
                }
                let e_ab = student.values.get(a, b) - teacher.values.get(a, b);
                let dl_dd = 4.0 / (pairs * student.mean_offdiag) * (e_ab - g_mean);
                for k in 0..z.cols() {
                    let dir = (z.get(a, k) - z.get(b, k)) / d_ab;
                    let upd = dl_dd * dir;
                    grad.set(a, k, grad.get(a, k) + upd);
                    grad.set(b, k, grad.get(b, k) - upd);
                }
            }
        }
        Some(grad)
    } else {
        None
    };
    Ok((loss, grad))
}

/// Union-symmetrized k-nearest-neighbor mask from teacher distances.
///
/// Row-major m*m booleans, diagonal false. Ties break to the lower index.
pub fn teacher_knn_mask(teacher_dist: &NormalizedDistanceMatrix, k_nn: usize) -> Result<Vec<bool>> {
    let m = teacher_dist.values.rows();
    if k_nn == 0 || k_nn >= m {
        return Err(CoreError::validation(format!(
            "teacher_knn_mask: k_nn {k_nn} out of range [1, {})",
            m
        )));
    }
    let mut mask = vec![false; m * m];
    let mut order: Vec<usize> = Vec::with_capacity(m - 1);
    for i in 0..m {
        order.clear();
        order.extend((0..m).filter(|&j| j != i));
        order.sort_by(|&a, &b| {
            teacher_dist
                .values
                .get(i, a)
                .partial_cmp(&teacher_dist.values.get(i, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        for &j in order.iter().take(k_nn) {
            mask[i * m + j] = true;
            mask[j * m + i] = true;
        }
    }
    Ok(mask)
}

/// Local relational term: kNN-masked, teacher-weighted mean of squared
/// normalized-distance discrepancies. Weights `w = exp(-Dtilde0 / tau_s)`
/// are teacher constants.
pub fn loss_smooth(
    student_latents: &Matrix,
    teacher_dist: &NormalizedDistanceMatrix,
    mask: &[bool],
    tau_s: f64,
) -> Result<f64> {
    Ok(smooth_impl(student_latents, teacher_dist, mask, tau_s, false)?.0)
}

pub fn loss_smooth_with_grad(
    student_latents: &Matrix,
    teacher_dist: &NormalizedDistanceMatrix,
    mask: &[bool],
    tau_s: f64,
) -> Result<(f64, Matrix)> {
    let (v, g) = smooth_impl(student_latents, teacher_dist, mask, tau_s, true)?;
    Ok((v, g.expect("grad requested")))
}

fn smooth_impl(
    z: &Matrix,
    teacher: &NormalizedDistanceMatrix,
    mask: &[bool],
    tau_s: f64,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let m = z.rows();
    if teacher.values.rows() != m || mask.len() != m * m {
        return Err(CoreError::validation("loss_smooth: shape mismatch"));
    }
    if !(tau_s > 0.0) {
        return Err(CoreError::validation("loss_smooth: tau_s must be > 0"));
    }
    if !mask.iter().any(|&b| b) {
        return Err(CoreError::degenerate("loss_smooth: empty neighbor mask"));
    }
    let student = normalized_distances(z)?;

    let mut weight_sum = 0.0;
    let mut num = 0.0;
    for i in 0..m {
        for j in (i + 1)..m {
            if !mask[i * m + j] {
                continue;
            }
            let w = (-teacher.values.get(i, j) / tau_s).exp();
            let e = student.values.get(i, j) - teacher.values.get(i, j);
            weight_sum += w;
            num += w * e * e;
        }
    }
    let loss = num / weight_sum;

    let grad = if want_grad {
        let pairs = (m * (m - 1)) as f64;
        // Mean-normalizer path aggregated over masked pairs.
        let mut h = 0.0;
        for i in 0..m {
            for j in (i + 1)..m {
                if !mask[i * m + j] {
                    continue;
                }
                let w = (-teacher.values.get(i, j) / tau_s).exp();
                let e = student.values.get(i, j) - teacher.values.get(i, j);
                h += w * e * student.values.get(i, j);
            }
        }
        let h_mean = 2.0 * h / pairs;
        let mut grad = Matrix::zeros(m, z.cols());
        for a in 0..m {
            for b in (a + 1)..m {
                let d_ab = student.values.get(a, b) * student.mean_offdiag;
                if d_ab <= 0.0 {
                    continue;
                }
                let direct = if mask[a * m + b] {
                    let w = (-teacher.values.get(a, b) / tau_s).exp();
                    let e = student.values.get(a, b) - teacher.values.get(a, b);
                    w * e
                } else {
                    0.0
                };
                let dl_dd = 2.0 / (weight_sum * student.mean_offdiag) * (direct - h_mean);
                for k in 0..z.cols() {
                    let dir = (z.get(a, k) - z.get(b, k)) / d_ab;
                    let upd = dl_dd * dir;
                    grad.set(a, k, grad.get(a, k) + upd);
                    grad.set(b, k, grad.get(b, k) - upd);
                }
            }
        }
        Some(grad)
    } else {
        None
    };
    Ok((loss, grad))
}

/// Chart-assignment preservation: `tau_c^2 * mean KL(p(z0) || p(z))`.
///
/// Teacher assignments are passed in precomputed; only student scores are
/// evaluated here, and the gradient flows through them alone.
pub fn loss_chart(
    student_latents: &Matrix,
    teacher_assign: &Matrix,
    atlas: &ChartAtlas,
) -> Result<f64> {
    Ok(chart_impl(student_latents, teacher_assign, atlas, false)?.0)
}

pub fn loss_chart_with_grad(
    student_latents: &Matrix,
    teacher_assign: &Matrix,
    atlas: &ChartAtlas,
) -> Result<(f64, Matrix)> {
    let (v, g) = chart_impl(student_latents, teacher_assign, atlas, true)?;
    Ok((v, g.expect("grad requested")))
}

fn chart_impl(
    z: &Matrix,
    teacher_assign: &Matrix,
    atlas: &ChartAtlas,
    want_grad: bool,
) -> Result<(f64, Option<Matrix>)> {
    let m = z.rows();
    let k = atlas.len();
    if z.cols() != atlas.feature_dim() {
        return Err(CoreError::validation("loss_chart: feature dim mismatch"));
    }
    if teacher_assign.rows() != m || teacher_assign.cols() != k {
        return Err(CoreError::validation("loss_chart: assignment shape mismatch"));
    }
    let tau = atlas.tau_c();
    let mut total = 0.0;
    let mut grad = want_grad.then(|| Matrix::zeros(m, z.cols()));

    for i in 0..m {
        let (scores, grads) = if want_grad {
            let mut s = Vec::with_capacity(k);
            let mut g = Vec::with_capacity(k);
            for chart in atlas.charts() {
                let (sc, gr) = chart_score_with_grad(chart, z.row(i))?;
                s.push(sc);
                g.push(gr);
            }
            (s, Some(g))
        } else {
            (score_all(atlas, z.row(i))?.scores, None)
        };
        let student_probs = softmax_temp(&scores, tau, true)?;
        // log p via log-softmax of -s/tau for numerical parity with softmax.
        let logits: Vec<f64> = scores.iter().map(|&s| -s / tau).collect();
        let lse = log_sum_exp(&logits);
        let mut kl = 0.0;
        for j in 0..k {
            let pt = teacher_assign.get(i, j);
            // Bit-identical probabilities contribute exactly zero; the
            // log-softmax route would leave rounding residue at identity.
            if pt > 0.0 && pt != student_probs[j] {
                kl += pt * (pt.ln() - (logits[j] - lse));
            }
        }
        total += kl.max(0.0);
        if let Some(g) = grad.as_mut() {
            let chart_grads = grads.as_ref().unwrap();
            for j in 0..k {
                let coeff =
                    tau / m as f64 * (teacher_assign.get(i, j) - student_probs[j]);
                if coeff == 0.0 {
                    continue;
                }
                for (col, &gv) in chart_grads[j].iter().enumerate() {
                    g.set(i, col, g.get(i, col) + coeff * gv);
                }
            }
        }
    }
    Ok((tau * tau * total / m as f64, grad))
}

/// Parameter drift penalty: mean squared difference, so the scale does not
/// depend on the parameter count.
pub fn loss_reg(theta: &[f64], theta0: &[f64]) -> Result<f64> {
    if theta.len() != theta0.len() {
        return Err(CoreError::validation("loss_reg: parameter shape mismatch"));
    }
    if theta.is_empty() {
        return Err(CoreError::validation("loss_reg: empty parameter vector"));
    }
    let p = theta.len() as f64;
    Ok(theta
        .iter()
        .zip(theta0)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<f64>()
        / p)
}

pub fn loss_reg_grad(theta: &[f64], theta0: &[f64]) -> Result<Vec<f64>> {
    if theta.len() != theta0.len() {
        return Err(CoreError::validation("loss_reg: parameter shape mismatch"));
    }
    let p = theta.len() as f64;
    Ok(theta
        .iter()
        .zip(theta0)
        .map(|(&a, &b)| 2.0 * (a - b) / p)
        .collect())
}
