//! Evaluation metrics: accuracies, forgetting, harmonic mean, linear CKA,
//! pairwise-distance correlation, and empirical support inclusion.

use serde::{Deserialize, Serialize};

use crate::chart::{score_all, ChartAtlas};
use crate::error::{CoreError, Result};
use crate::linalg::{pairwise_euclidean, pearson, Matrix};
use crate::model::MlpModel;
use crate::synthetic::BenchmarkBundle;

/// Fraction of rows whose argmax logit equals the label; ties break low.
pub fn accuracy(logits: &Matrix, labels: &[usize]) -> Result<f64> {
    let n = logits.rows();
    if n == 0 || labels.len() != n {
        return Err(CoreError::validation("accuracy: batch/label mismatch"));
    }
    let mut correct = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        let row = logits.row(i);
        let mut best = 0usize;
        for (j, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = j;
            }
        }
        if best == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / n as f64)
}

/// 2ab / (a + b), defined as 0 when both arguments are 0.
pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

pub fn forgetting(old_before: f64, old_after: f64) -> f64 {
    old_before - old_after
}

/// Centered linear CKA between two feature blocks on the same samples:
/// `||Yc^T Xc||_F^2 / (||Xc^T Xc||_F * ||Yc^T Yc||_F)`.
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(CoreError::validation("linear_cka: sample count mismatch"));
    }
    if x.rows() < 2 {
        return Err(CoreError::validation("linear_cka: need at least 2 samples"));
    }
    let xc = center_columns(x);
    let yc = center_columns(y);
    let cross = yc.transpose().matmul(&xc)?.frob_norm();
    let xx = xc.transpose().matmul(&xc)?.frob_norm();
    let yy = yc.transpose().matmul(&yc)?.frob_norm();
    if xx == 0.0 || yy == 0.0 {
        return Err(CoreError::degenerate(
            "linear_cka undefined: zero-variance features",
        ));
    }
    Ok(cross * cross / (xx * yy))
}

fn center_columns(m: &Matrix) -> Matrix {
    let means = m.col_means();
    let mut out = m.clone();
    for i in 0..out.rows() {
        for (v, &mu) in out.row_mut(i).iter_mut().zip(&means) {
            *v -= mu;
        }
    }
    out
}

/// Pearson correlation between the upper-triangular pairwise distances of
/// two feature blocks over the same samples.
pub fn distance_correlation(x: &Matrix, y: &Matrix) -> Result<f64> {
    if x.rows() != y.rows() {
        return Err(CoreError::validation(
            "distance_correlation: sample count mismatch",
        ));
    }
    if x.rows() < 3 {
        return Err(CoreError::validation(
            "distance_correlation: need at least 3 samples",
        ));
    }
    let dx = pairwise_euclidean(x)?;
    let dy = pairwise_euclidean(y)?;
    let n = x.rows();
    let mut vx = Vec::with_capacity(n * (n - 1) / 2);
    let mut vy = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            vx.push(dx.get(i, j));
            vy.push(dy.get(i, j));
        }
    }
    pearson(&vx, &vy)
}

/// Best (minimum) chart score of each row.
pub fn min_chart_scores(atlas: &ChartAtlas, features: &Matrix) -> Result<Vec<f64>> {
    (0..features.rows())
        .map(|i| {
            let sv = score_all(atlas, features.row(i))?;
            Ok(sv
                .scores
                .iter()
                .cloned()
                .fold(f64::INFINITY, f64::min))
        })
        .collect()
}

/// Empirical support inclusion.
///
/// The threshold is the q-quantile of the teacher anchors' best chart scores,
/// so the anchors themselves score about q by construction; the returned
/// value is the fraction of probe rows at or below that threshold.
pub fn support_inclusion(
    atlas: &ChartAtlas,
    teacher_anchor_features: &Matrix,
    probe_features: &Matrix,
    q: f64,
) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(CoreError::validation("support_inclusion: q must lie in (0, 1)"));
    }
    let mut anchor_scores = min_chart_scores(atlas, teacher_anchor_features)?;
    if anchor_scores.is_empty() {
        return Err(CoreError::validation("support_inclusion: no anchors"));
    }
    anchor_scores.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = anchor_scores.len();
    let idx = ((q * n as f64).ceil() as usize).clamp(1, n) - 1;
    let threshold = anchor_scores[idx];

    let probe_scores = min_chart_scores(atlas, probe_features)?;
    let hits = probe_scores.iter().filter(|&&s| s <= threshold).count();
    Ok(hits as f64 / probe_scores.len() as f64)
}

/// One table row: accuracies plus representation-preservation metrics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub old_before: f64,
    pub old_after: f64,
    pub new_after: f64,
    pub forgetting: f64,
    pub harmonic_mean: f64,
    pub cka: f64,
    pub dist_corr: f64,
    pub support_in: f64,
}

/// Evaluate a (teacher, student) pair on the bundle.
///
/// CKA and distance correlation compare student and teacher latents on the
/// anchor set; support inclusion probes student old-test latents against the
/// teacher-calibrated atlas threshold.
pub fn evaluate_run(
    teacher: &MlpModel,
    student: &MlpModel,
    bundle: &BenchmarkBundle,
    atlas: &ChartAtlas,
    q: f64,
) -> Result<RunResult> {
    let (teacher_old_logits, _) = teacher.forward(&bundle.old_test.inputs)?;
    let old_before = accuracy(&teacher_old_logits, &bundle.old_test.labels)?;

    let (student_old_logits, student_old_latents) = student.forward(&bundle.old_test.inputs)?;
    let old_after = accuracy(&student_old_logits, &bundle.old_test.labels)?;
    let (student_new_logits, _) = student.forward(&bundle.new_test.inputs)?;
    let new_after = accuracy(&student_new_logits, &bundle.new_test.labels)?;

    let anchors = bundle.anchor_split();
    let (_, teacher_anchor_latents) = teacher.forward(&anchors.inputs)?;
    let (_, student_anchor_latents) = student.forward(&anchors.inputs)?;
    let cka = linear_cka(&student_anchor_latents, &teacher_anchor_latents)?;
    let dist_corr = distance_correlation(&student_anchor_latents, &teacher_anchor_latents)?;

    let support_in = support_inclusion(atlas, &teacher_anchor_latents, &student_old_latents, q)?;

    Ok(RunResult {
        old_before,
        old_after,
        new_after,
        forgetting: forgetting(old_before, old_after),
        harmonic_mean: harmonic_mean(old_after, new_after),
        cka,
        dist_corr,
        support_in,
    })
}
