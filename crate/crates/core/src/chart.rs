//! Chart memory: local low-rank Gaussian factor models over frozen teacher
//! features.
//!
//! Each chart models its cluster as `z ~ mu + U a + eps` with `a ~ N(0, L)`
//! and isotropic residual `eps ~ N(0, sigma^2 I)`, giving the covariance
//! `Sigma = U L U^T + sigma^2 I`. Scores are average Mahalanobis-plus-logdet
//! energies evaluated in the factored form, and soft assignments are a
//! tempered softmax over negated scores. An atlas is built once from teacher
//! features and never mutated afterwards.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::matrix::dot;
use crate::linalg::{kmeans, sample_covariance, softmax_temp, top_r_eigen, Matrix};

/// Floor applied to the residual variance so degenerate clusters cannot blow
/// up the quadratic form.
pub const VARIANCE_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChartConfig {
    /// Number of clusters K.
    pub charts: usize,
    /// Retained rank per chart.
    pub rank: usize,
    /// Assignment temperature.
    pub tau_c: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        crate::experiment::defaults::chart()
    }
}

/// One local factor model. Immutable after construction.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chart {
    mu: Vec<f64>,
    basis: Matrix,
    factor_vars: Vec<f64>,
    resid_var: f64,
    rank: usize,
}

impl Chart {
    /// Assemble a chart from explicit parameters, checking the invariants
    /// (orthonormal basis, non-increasing non-negative factor variances,
    /// floored residual variance).
    pub fn from_parts(
        mu: Vec<f64>,
        basis: Matrix,
        factor_vars: Vec<f64>,
        resid_var: f64,
    ) -> Result<Chart> {
        let d = mu.len();
        let rank = factor_vars.len();
        if basis.rows() != d || basis.cols() != rank {
            return Err(CoreError::validation("chart: basis shape mismatch"));
        }
        if rank == 0 || rank > d {
            return Err(CoreError::validation("chart: rank out of range"));
        }
        if !(resid_var >= VARIANCE_FLOOR) {
            return Err(CoreError::validation("chart: residual variance below floor"));
        }
        if factor_vars.windows(2).any(|w| w[1] > w[0]) || factor_vars.iter().any(|&l| l < 0.0) {
            return Err(CoreError::validation(
                "chart: factor variances must be non-negative and non-increasing",
            ));
        }
        let gram = basis.transpose().matmul(&basis)?;
        if gram.max_abs_diff(&Matrix::identity(rank)) > 1e-8 {
            return Err(CoreError::validation("chart: basis not orthonormal"));
        }
        Ok(Chart {
            mu,
            basis,
            factor_vars,
            resid_var,
            rank,
        })
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn factor_vars(&self) -> &[f64] {
        &self.factor_vars
    }

    pub fn resid_var(&self) -> f64 {
        self.resid_var
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// The collection of charts plus the assignment temperature.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ChartAtlas {
    charts: Vec<Chart>,
    tau_c: f64,
    feature_dim: usize,
}

impl ChartAtlas {
    pub fn charts(&self) -> &[Chart] {
        &self.charts
    }

    pub fn len(&self) -> usize {
        self.charts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.charts.is_empty()
    }

    pub fn tau_c(&self) -> f64 {
        self.tau_c
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

/// Per-chart scores for one feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartScoreVector {
    pub scores: Vec<f64>,
}

/// Softmax of negated scores; entries are non-negative and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftAssignment {
    pub probs: Vec<f64>,
}

/// Fit a single chart to a cluster block (rows = samples).
///
/// The residual variance is the trace residual of the covariance spectrum
/// spread over the trailing `d - r` directions, floored at `VARIANCE_FLOOR`;
/// factor variances are the leading eigenvalues with that residual removed.
pub fn fit_chart(z: &Matrix, rank: usize) -> Result<Chart> {
    let n = z.rows();
    let d = z.cols();
    if n < 2 {
        return Err(CoreError::degenerate(format!(
            "fit_chart: cluster of size {n} cannot support a factor model"
        )));
    }
    if rank == 0 || rank > (n - 1).min(d) {
        return Err(CoreError::validation(format!(
            "fit_chart: rank {rank} out of range [1, min({}, {d})]",
            n - 1
        )));
    }
    let mu = z.col_means();
    let cov = sample_covariance(z)?;
    let eig = top_r_eigen(&cov, rank)?;

    let trace: f64 = (0..d).map(|i| cov.get(i, i)).sum();
    let leading: f64 = eig.values.iter().sum();
    let resid_var = if rank < d {
        ((trace - leading) / (d - rank) as f64).max(VARIANCE_FLOOR)
    } else {
        VARIANCE_FLOOR
    };
    let factor_vars: Vec<f64> = eig
        .values
        .iter()
        .map(|&v| (v - resid_var).max(0.0))
        .collect();

    Ok(Chart {
        mu,
        basis: eig.vectors,
        factor_vars,
        resid_var,
        rank,
    })
}

/// Factor-model score of `z` under one chart:
/// average of the factored Mahalanobis energy and the log-determinant.
pub fn chart_score(chart: &Chart, z: &[f64]) -> Result<f64> {
    let (score, _) = score_parts(chart, z, false)?;
    Ok(score)
}

/// Score plus its gradient with respect to `z`.
///
/// The gradient is `(2/d) Sigma^{-1} (z - mu)` evaluated through the same
/// factored form used by the score itself.
pub fn chart_score_with_grad(chart: &Chart, z: &[f64]) -> Result<(f64, Vec<f64>)> {
    let (score, grad) = score_parts(chart, z, true)?;
    Ok((score, grad.expect("grad requested")))
}

fn score_parts(chart: &Chart, z: &[f64], want_grad: bool) -> Result<(f64, Option<Vec<f64>>)> {
    let d = chart.dim();
    if z.len() != d {
        return Err(CoreError::validation(format!(
            "chart_score: feature dim {} != chart dim {d}",
            z.len()
        )));
    }
    let r = chart.rank;
    let sigma2 = chart.resid_var;

    let diff: Vec<f64> = z.iter().zip(&chart.mu).map(|(&a, &b)| a - b).collect();
    // a = U^T diff
    let mut a = vec![0.0; r];
    for (j, aj) in a.iter_mut().enumerate() {
        let mut s = 0.0;
        for (i, &di) in diff.iter().enumerate() {
            s += chart.basis.get(i, j) * di;
        }
        *aj = s;
    }

    let mut quad_factor = 0.0;
    for (aj, &lam) in a.iter().zip(&chart.factor_vars) {
        quad_factor += aj * aj / (lam + sigma2);
    }

    // residual = diff - U a
    let mut resid = diff.clone();
    for (j, &aj) in a.iter().enumerate() {
        for (i, ri) in resid.iter_mut().enumerate() {
            *ri -= chart.basis.get(i, j) * aj;
        }
    }
    let quad_resid = dot(&resid, &resid) / sigma2;

    let logdet: f64 = chart
        .factor_vars
        .iter()
        .map(|&lam| (lam + sigma2).ln())
        .sum::<f64>()
        + (d - r) as f64 * sigma2.ln();

    let score = (quad_factor + quad_resid + logdet) / d as f64;

    let grad = if want_grad {
        // Sigma^{-1} diff = (diff - U diag(lam/(lam+sigma^2)) a) / sigma^2
        let mut g = diff;
        for (j, &aj) in a.iter().enumerate() {
            let shrink = chart.factor_vars[j] / (chart.factor_vars[j] + sigma2);
            for (i, gi) in g.iter_mut().enumerate() {
                *gi -= chart.basis.get(i, j) * shrink * aj;
            }
        }
        let c = 2.0 / (d as f64 * sigma2);
        for gi in &mut g {
            *gi *= c;
        }
        Some(g)
    } else {
        None
    };

    Ok((score, grad))
}

/// Scores of `z` under every chart in the atlas.
pub fn score_all(atlas: &ChartAtlas, z: &[f64]) -> Result<ChartScoreVector> {
    let scores = atlas
        .charts
        .iter()
        .map(|c| chart_score(c, z))
        .collect::<Result<Vec<f64>>>()?;
    Ok(ChartScoreVector { scores })
}

/// Soft chart assignment: softmax of negated scores at the atlas temperature.
pub fn soft_assign(atlas: &ChartAtlas, z: &[f64]) -> Result<SoftAssignment> {
    let scores = score_all(atlas, z)?;
    let probs = softmax_temp(&scores.scores, atlas.tau_c, true)?;
    Ok(SoftAssignment { probs })
}

/// Build the atlas: cluster the feature block, merge undersized clusters into
/// their nearest neighbor, then fit one chart per surviving cluster.
///
/// Returns the atlas and the per-point cluster index (into `atlas.charts()`),
/// which the trainer uses for cluster-stratified replay.
pub fn build_atlas(
    z: &Matrix,
    cfg: &ChartConfig,
    seed: u64,
) -> Result<(ChartAtlas, Vec<usize>)> {
    let n = z.rows();
    let d = z.cols();
    let k = cfg.charts;
    if n < 2 * k {
        return Err(CoreError::validation(format!(
            "build_atlas: need at least 2K = {} points, got {n}",
            2 * k
        )));
    }
    if cfg.rank == 0 || cfg.rank > d {
        return Err(CoreError::validation(format!(
            "build_atlas: rank {} out of range [1, {d}]",
            cfg.rank
        )));
    }
    if n < cfg.rank + 2 {
        return Err(CoreError::validation(
            "build_atlas: too few points for the requested rank",
        ));
    }
    if !(cfg.tau_c > 0.0) {
        return Err(CoreError::validation("build_atlas: tau_c must be positive"));
    }

    let km = kmeans(z, k, seed)?;
    let mut assignments = km.assignments;

    // Cluster bookkeeping for the merge pass.
    let mut alive: Vec<bool> = vec![true; k];
    let mut sizes = vec![0usize; k];
    for &a in &assignments {
        sizes[a] += 1;
    }
    let mut centers: Vec<Vec<f64>> = (0..k).map(|c| km.centers.row(c).to_vec()).collect();
    let min_size = cfg.rank + 2;

    loop {
        // Smallest undersized live cluster, lowest index on ties.
        let mut victim: Option<usize> = None;
        for c in 0..k {
            if alive[c] && sizes[c] < min_size {
                match victim {
                    Some(v) if sizes[c] >= sizes[v] => {}
                    _ => victim = Some(c),
                }
            }
        }
        let Some(victim) = victim else { break };
        let live_count = alive.iter().filter(|&&a| a).count();
        if live_count == 1 {
            // Cannot happen: n >= rank + 2 was validated and the sole
            // survivor holds every point.
            return Err(CoreError::degenerate(
                "build_atlas: no mergeable cluster left",
            ));
        }
        // Nearest other live cluster by center distance, lowest index on ties.
        let mut target = usize::MAX;
        let mut best = f64::INFINITY;
        for c in 0..k {
            if c == victim || !alive[c] {
                continue;
            }
            let dist = crate::linalg::matrix::squared_euclidean(&centers[c], &centers[victim]);
            if dist < best {
                best = dist;
                target = c;
            }
        }
        for a in assignments.iter_mut() {
            if *a == victim {
                *a = target;
            }
        }
        sizes[target] += sizes[victim];
        sizes[victim] = 0;
        alive[victim] = false;
        // Refresh the merged center from its member points.
        let mut mean = vec![0.0; d];
        let mut count = 0usize;
        for (i, &a) in assignments.iter().enumerate() {
            if a == target {
                for (m, &v) in mean.iter_mut().zip(z.row(i)) {
                    *m += v;
                }
                count += 1;
            }
        }
        for m in &mut mean {
            *m /= count as f64;
        }
        centers[target] = mean;
    }

    // Compact live clusters to consecutive indices, preserving order.
    let mut remap = vec![usize::MAX; k];
    let mut live_order = Vec::new();
    for c in 0..k {
        if alive[c] {
            remap[c] = live_order.len();
            live_order.push(c);
        }
    }
    for a in assignments.iter_mut() {
        *a = remap[*a];
    }

    let mut charts = Vec::with_capacity(live_order.len());
    for new_idx in 0..live_order.len() {
        let member_rows: Vec<usize> = assignments
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == new_idx)
            .map(|(i, _)| i)
            .collect();
        let block = z.select_rows(&member_rows);
        charts.push(fit_chart(&block, cfg.rank)?);
    }

    Ok((
        ChartAtlas {
            charts,
            tau_c: cfg.tau_c,
            feature_dim: d,
        },
        assignments,
    ))
}

pub const ATLAS_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct AtlasDoc {
    schema_version: u32,
    tau_c: f64,
    feature_dim: usize,
    charts: Vec<Chart>,
}

impl ChartAtlas {
    pub fn to_json(&self) -> Result<String> {
        let doc = AtlasDoc {
            schema_version: ATLAS_SCHEMA_VERSION,
            tau_c: self.tau_c,
            feature_dim: self.feature_dim,
            charts: self.charts.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<ChartAtlas> {
        let doc: AtlasDoc = serde_json::from_str(text)?;
        if doc.schema_version != ATLAS_SCHEMA_VERSION {
            return Err(CoreError::validation(format!(
                "atlas: unsupported schema version {}",
                doc.schema_version
            )));
        }
        Ok(ChartAtlas {
            charts: doc.charts,
            tau_c: doc.tau_c,
            feature_dim: doc.feature_dim,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{draw_normal, substream};

    fn gaussian_block(n: usize, stds: &[f64], seed: u64) -> Matrix {
        let mut rng = substream(seed, &[71]);
        let d = stds.len();
        let mut m = Matrix::zeros(n, d);
        for i in 0..n {
            for (j, &s) in stds.iter().enumerate() {
                m.set(i, j, s * draw_normal(&mut rng));
            }
        }
        m
    }

    #[test]
    fn fit_chart_recovers_dominant_factor() {
        let stds = [3.0, 1.0, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1];
        let z = gaussian_block(50, &stds, 0);
        let c = fit_chart(&z, 1).unwrap();
        let mu_norm: f64 = c.mu().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(mu_norm <= 0.5, "mean norm {mu_norm}");
        let align = c.basis().get(0, 0).abs();
        assert!(align >= 0.95, "basis alignment {align}");
    }

    #[test]
    fn fit_chart_identical_rows_hits_variance_floor() {
        let z = Matrix::from_rows(&vec![vec![1.0, 2.0, 3.0]; 5]).unwrap();
        let c = fit_chart(&z, 1).unwrap();
        assert_eq!(c.resid_var(), VARIANCE_FLOOR);
        assert!(c.factor_vars().iter().all(|&l| l == 0.0));
    }

    #[test]
    fn fit_chart_trace_identity() {
        let stds = [2.0, 1.5, 1.0, 0.5];
        let z = gaussian_block(40, &stds, 5);
        let c = fit_chart(&z, 2).unwrap();
        let cov = sample_covariance(&z).unwrap();
        let trace_s: f64 = (0..4).map(|i| cov.get(i, i)).sum();
        // trace(U L U^T + sigma^2 I) = sum(lambda) + d sigma^2
        let trace_model: f64 =
            c.factor_vars().iter().sum::<f64>() + 4.0 * c.resid_var();
        assert!((trace_s - trace_model).abs() <= 1e-8, "{trace_s} vs {trace_model}");
    }

    #[test]
    fn fit_chart_rejects_degenerate_and_bad_rank() {
        let z = Matrix::zeros(1, 3);
        assert!(matches!(fit_chart(&z, 1), Err(CoreError::Degenerate(_))));
        let z = Matrix::zeros(4, 3);
        assert!(fit_chart(&z, 0).is_err());
        assert!(fit_chart(&z, 4).is_err());
    }

    #[test]
    fn score_at_center_is_average_logdet() {
        let stds = [2.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        let z = gaussian_block(60, &stds, 9);
        let c = fit_chart(&z, 2).unwrap();
        let s = chart_score(&c, c.mu()).unwrap();
        let d = 6.0;
        let logdet: f64 = c
            .factor_vars()
            .iter()
            .map(|&l| (l + c.resid_var()).ln())
            .sum::<f64>()
            + 4.0 * c.resid_var().ln();
        assert!((s - logdet / d).abs() <= 1e-12);
    }

    #[test]
    fn score_quadratic_growth_along_leading_factor() {
        let stds = [2.0, 1.0, 0.5, 0.5, 0.5, 0.5];
        let z = gaussian_block(60, &stds, 13);
        let c = fit_chart(&z, 2).unwrap();
        let s0 = chart_score(&c, c.mu()).unwrap();
        let score_at = |t: f64| {
            let z: Vec<f64> = c
                .mu()
                .iter()
                .enumerate()
                .map(|(i, &m)| m + t * c.basis().get(i, 0))
                .collect();
            chart_score(&c, &z).unwrap()
        };
        let g1 = score_at(1.0) - s0;
        let g2 = score_at(2.0) - s0;
        assert!((g2 / g1 - 4.0).abs() <= 1e-6, "ratio {}", g2 / g1);
    }

    #[test]
    fn score_rejects_dim_mismatch() {
        let z = gaussian_block(10, &[1.0, 1.0], 1);
        let c = fit_chart(&z, 1).unwrap();
        assert!(chart_score(&c, &[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn score_gradient_matches_finite_differences() {
        let stds = [2.0, 1.0, 0.5, 0.4, 0.3];
        let zb = gaussian_block(50, &stds, 21);
        let c = fit_chart(&zb, 2).unwrap();
        let mut rng = substream(5, &[72]);
        let z: Vec<f64> = (0..5).map(|_| draw_normal(&mut rng)).collect();
        let (_, grad) = chart_score_with_grad(&c, &z).unwrap();
        let h = 1e-6;
        for i in 0..5 {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let fd =
                (chart_score(&c, &zp).unwrap() - chart_score(&c, &zm).unwrap()) / (2.0 * h);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * fd.abs().max(1.0),
                "coord {i}: fd {fd} vs grad {}",
                grad[i]
            );
        }
    }

    fn two_blob_features(seed: u64) -> Matrix {
        let mut rng = substream(seed, &[73]);
        let mut m = Matrix::zeros(80, 3);
        for i in 0..80 {
            let offset = if i < 40 { -5.0 } else { 5.0 };
            for j in 0..3 {
                m.set(i, j, offset + 0.5 * draw_normal(&mut rng));
            }
        }
        m
    }

    #[test]
    fn soft_assign_single_chart_and_symmetry() {
        let z = gaussian_block(30, &[1.0, 1.0, 1.0], 2);
        let cfg = ChartConfig {
            charts: 1,
            rank: 1,
            tau_c: 1.0,
        };
        let (atlas, _) = build_atlas(&z, &cfg, 0).unwrap();
        let sa = soft_assign(&atlas, &[0.2, -0.1, 0.4]).unwrap();
        assert_eq!(sa.probs, vec![1.0]);

        // Two identical charts -> exactly even split.
        let c = fit_chart(&z, 1).unwrap();
        let twin = ChartAtlas {
            charts: vec![c.clone(), c],
            tau_c: 1.0,
            feature_dim: 3,
        };
        let sa = soft_assign(&twin, &[0.3, 0.3, -0.2]).unwrap();
        assert!((sa.probs[0] - 0.5).abs() <= 1e-12);
        assert!((sa.probs[1] - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn cold_assignment_concentrates_on_argmin() {
        let z = two_blob_features(4);
        let cfg = ChartConfig {
            charts: 2,
            rank: 1,
            tau_c: 0.01,
        };
        let (atlas, _) = build_atlas(&z, &cfg, 7).unwrap();
        let sa = soft_assign(&atlas, z.row(0)).unwrap();
        let max = sa.probs.iter().cloned().fold(0.0, f64::max);
        assert!(max >= 0.99, "max prob {max}");
    }

    #[test]
    fn build_atlas_recovers_blob_means_and_is_deterministic() {
        let z = two_blob_features(8);
        let cfg = ChartConfig {
            charts: 2,
            rank: 1,
            tau_c: 1.0,
        };
        let (atlas, assign) = build_atlas(&z, &cfg, 7).unwrap();
        assert_eq!(atlas.len(), 2);
        // 3 sigma / sqrt(n_k) = 3 * 0.5 / sqrt(40)
        let tol = 3.0 * 0.5 / (40.0f64).sqrt();
        let mut means: Vec<f64> = atlas.charts().iter().map(|c| c.mu()[0]).collect();
        means.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((means[0] + 5.0).abs() <= tol);
        assert!((means[1] - 5.0).abs() <= tol);

        let (atlas2, assign2) = build_atlas(&z, &cfg, 7).unwrap();
        assert_eq!(assign, assign2);
        assert_eq!(atlas.to_json().unwrap(), atlas2.to_json().unwrap());
    }

    #[test]
    fn hard_and_soft_assignment_agree_on_easy_data() {
        let z = two_blob_features(15);
        let cfg = ChartConfig {
            charts: 2,
            rank: 1,
            tau_c: 1.0,
        };
        let (atlas, assign) = build_atlas(&z, &cfg, 3).unwrap();
        let mut agree = 0usize;
        for i in 0..z.rows() {
            let sa = soft_assign(&atlas, z.row(i)).unwrap();
            let argmax = sa
                .probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            if argmax == assign[i] {
                agree += 1;
            }
        }
        assert!(agree as f64 / z.rows() as f64 >= 0.95);
    }

    #[test]
    fn tiny_clusters_are_merged_not_dropped() {
        // 2 dense blobs plus one stray point force a merge at K = 3.
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut rng = substream(6, &[74]);
        for _ in 0..20 {
            rows.push(vec![-4.0 + 0.1 * draw_normal(&mut rng), 0.0]);
        }
        for _ in 0..20 {
            rows.push(vec![4.0 + 0.1 * draw_normal(&mut rng), 0.0]);
        }
        rows.push(vec![0.0, 8.0]);
        let z = Matrix::from_rows(&rows).unwrap();
        let cfg = ChartConfig {
            charts: 3,
            rank: 1,
            tau_c: 1.0,
        };
        let (atlas, assign) = build_atlas(&z, &cfg, 2).unwrap();
        assert!(atlas.len() < 3, "stray point cluster should merge");
        assert_eq!(assign.len(), 41);
        assert!(assign.iter().all(|&a| a < atlas.len()));
        // Probabilities still sum to 1 over the surviving charts.
        let sa = soft_assign(&atlas, z.row(40)).unwrap();
        let sum: f64 = sa.probs.iter().sum();
        assert!((sum - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn build_atlas_rejects_too_few_points() {
        let z = Matrix::zeros(5, 2);
        let cfg = ChartConfig {
            charts: 3,
            rank: 1,
            tau_c: 1.0,
        };
        assert!(build_atlas(&z, &cfg, 0).is_err());
    }

    #[test]
    fn atlas_json_roundtrip() {
        let z = two_blob_features(99);
        let cfg = ChartConfig {
            charts: 2,
            rank: 1,
            tau_c: 0.7,
        };
        let (atlas, _) = build_atlas(&z, &cfg, 1).unwrap();
        let text = atlas.to_json().unwrap();
        let back = ChartAtlas::from_json(&text).unwrap();
        assert_eq!(back.tau_c(), atlas.tau_c());
        assert_eq!(back.feature_dim(), atlas.feature_dim());
        for (a, b) in atlas.charts().iter().zip(back.charts()) {
            assert_eq!(a.mu(), b.mu());
            assert_eq!(a.basis(), b.basis());
            assert_eq!(a.factor_vars(), b.factor_vars());
            assert_eq!(a.resid_var(), b.resid_var());
        }
    }
}
