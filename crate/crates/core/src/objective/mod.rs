//! The retention objective family and its composition.
//!
//! The full objective is
//! `L_new + beta(t) * la * L_anchor + alpha(t) * (lkd*L_KD + lgeo*L_geo +
//! lsm*L_smooth + lch*L_chart + lreg*L_reg)`,
//! with linearly decayed schedules alpha(t), beta(t). Method presets force
//! subsets of the weights to zero; a zero weight disables both the term and
//! its computation.

pub mod losses;

use serde::{Deserialize, Serialize};

use crate::chart::ChartAtlas;
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
pub use losses::{
    loss_ce, loss_ce_with_grad, loss_chart, loss_chart_with_grad, loss_geo, loss_geo_with_grad,
    loss_kd, loss_kd_with_grad, loss_reg, loss_reg_grad, loss_smooth, loss_smooth_with_grad,
    normalized_distances, teacher_knn_mask, NormalizedDistanceMatrix,
};

/// Linear schedule endpoints for the retention multipliers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub alpha_start: f64,
    pub alpha_end: f64,
    pub beta_start: f64,
    pub beta_end: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        crate::experiment::defaults::schedule()
    }
}

/// All loss weights and term hyperparameters.
///
/// `lambda_cont` and `lambda_support` are reserved names for the broader
/// objective family; they are accepted in config files but must stay zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveConfig {
    pub lambda_kd: f64,
    pub lambda_anchor: f64,
    pub lambda_geo: f64,
    pub lambda_smooth: f64,
    pub lambda_chart: f64,
    pub lambda_reg: f64,
    pub lambda_cont: f64,
    pub lambda_support: f64,
    /// Distillation temperature T.
    pub kd_temperature: f64,
    /// Smoothing weight temperature tau_s.
    pub tau_smooth: f64,
    /// Neighbor count for the teacher kNN graph.
    pub k_nn: usize,
    pub schedule: ScheduleConfig,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        crate::experiment::defaults::objective()
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_kd", self.lambda_kd),
            ("lambda_anchor", self.lambda_anchor),
            ("lambda_geo", self.lambda_geo),
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_chart", self.lambda_chart),
            ("lambda_reg", self.lambda_reg),
        ];
        for (name, w) in weights {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(CoreError::validation(format!(
                    "{name} must be a finite non-negative number, got {w}"
                )));
            }
        }
        if self.lambda_cont != 0.0 || self.lambda_support != 0.0 {
            return Err(CoreError::validation(
                "lambda_cont and lambda_support are reserved and must stay 0",
            ));
        }
        if !(self.kd_temperature > 0.0) {
            return Err(CoreError::validation("kd_temperature must be > 0"));
        }
        if !(self.tau_smooth > 0.0) {
            return Err(CoreError::validation("tau_smooth must be > 0"));
        }
        if self.k_nn == 0 {
            return Err(CoreError::validation("k_nn must be >= 1"));
        }
        let s = &self.schedule;
        for (name, v) in [
            ("alpha_start", s.alpha_start),
            ("alpha_end", s.alpha_end),
            ("beta_start", s.beta_start),
            ("beta_end", s.beta_end),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CoreError::validation(format!(
                    "schedule {name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Linear interpolation from `start` at t=0 to `end` at t=t_total.
pub fn schedule_value(start: f64, end: f64, t: usize, t_total: usize) -> f64 {
    if t_total == 0 {
        return start;
    }
    debug_assert!(t <= t_total);
    start + (end - start) * t as f64 / t_total as f64
}

/// The five method presets compared in the synthetic benchmark.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    PlainFt,
    AnchorCe,
    ReplayAnchor,
    OldGeometry,
    SpmaOg,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::PlainFt,
        Method::AnchorCe,
        Method::ReplayAnchor,
        Method::OldGeometry,
        Method::SpmaOg,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::PlainFt => "PlainFT",
            Method::AnchorCe => "AnchorCE",
            Method::ReplayAnchor => "Replay-Anchor",
            Method::OldGeometry => "OldGeometry",
            Method::SpmaOg => "SPMA-OG",
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        let norm: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match norm.as_str() {
            "plainft" | "ft" => Ok(Method::PlainFt),
            "anchorce" => Ok(Method::AnchorCe),
            "replayanchor" | "er" | "replay" => Ok(Method::ReplayAnchor),
            "oldgeometry" | "oldgeo" => Ok(Method::OldGeometry),
            "spmaog" => Ok(Method::SpmaOg),
            _ => Err(CoreError::validation(format!("unknown method '{s}'"))),
        }
    }

    pub fn uses_replay(self) -> bool {
        !matches!(self, Method::PlainFt)
    }

    /// Replay budget per step. AnchorCE uses half the shared budget, matching
    /// the halved replay count relative to the ER-style baselines.
    pub fn replay_batch(self, base: usize) -> usize {
        match self {
            Method::PlainFt => 0,
            Method::AnchorCe => (base / 2).max(1),
            _ => base,
        }
    }

    /// Resolve schedule values and per-term weights for step `t`.
    pub fn effective_weights(
        self,
        cfg: &ObjectiveConfig,
        t: usize,
        t_total: usize,
    ) -> EffectiveWeights {
        let s = &cfg.schedule;
        let alpha_sched = schedule_value(s.alpha_start, s.alpha_end, t, t_total);
        let beta_sched = schedule_value(s.beta_start, s.beta_end, t, t_total);
        let (alpha, beta) = match self {
            Method::PlainFt => (0.0, 0.0),
            // Plain replay baselines keep full anchor pressure to the end.
            Method::AnchorCe | Method::ReplayAnchor => (0.0, 1.0),
            Method::OldGeometry | Method::SpmaOg => (alpha_sched, beta_sched),
        };
        let retention = |on: bool, lambda: f64| if on { alpha * lambda } else { 0.0 };
        let geo_on = matches!(self, Method::OldGeometry | Method::SpmaOg);
        let full = matches!(self, Method::SpmaOg);
        EffectiveWeights {
            alpha,
            beta,
            anchor: if self.uses_replay() {
                beta * cfg.lambda_anchor
            } else {
                0.0
            },
            kd: retention(full, cfg.lambda_kd),
            geo: retention(geo_on, cfg.lambda_geo),
            smooth: retention(geo_on, cfg.lambda_smooth),
            chart: retention(full, cfg.lambda_chart),
            reg: retention(full, cfg.lambda_reg),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Method::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Schedule values and final per-term multipliers for one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectiveWeights {
    pub alpha: f64,
    pub beta: f64,
    pub anchor: f64,
    pub kd: f64,
    pub geo: f64,
    pub smooth: f64,
    pub chart: f64,
    pub reg: f64,
}

impl EffectiveWeights {
    pub fn needs_geometry(&self) -> bool {
        self.geo > 0.0 || self.smooth > 0.0
    }

    pub fn needs_chart(&self) -> bool {
        self.chart > 0.0
    }

    pub fn needs_anchor_batch(&self) -> bool {
        self.anchor > 0.0
            || self.kd > 0.0
            || self.geo > 0.0
            || self.smooth > 0.0
            || self.chart > 0.0
    }
}

/// Student outputs on the new-task batch.
#[derive(Clone, Debug)]
pub struct NewBatchContext {
    pub student_logits: Matrix,
    pub labels: Vec<usize>,
}

/// Everything the retention terms see for one anchor batch.
///
/// Teacher blocks are constants. The geometry fields are only populated when
/// some active term needs them, so disabled terms cost nothing and cannot
/// raise degenerate-batch errors.
#[derive(Clone, Debug)]
pub struct AnchorBatchContext {
    pub student_latents: Matrix,
    pub teacher_latents: Matrix,
    pub student_logits: Matrix,
    pub teacher_logits: Matrix,
    pub labels: Vec<usize>,
    /// Normalized teacher distances, when geo or smooth is active.
    pub teacher_dist: Option<NormalizedDistanceMatrix>,
    /// Teacher kNN mask (row-major m*m), when smooth is active.
    pub knn_mask: Option<Vec<bool>>,
    /// Teacher soft chart assignments (m x K), when chart is active.
    pub teacher_assign: Option<Matrix>,
}

impl AnchorBatchContext {
    /// Assemble the context, computing only what the active weights need.
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        student_latents: Matrix,
        teacher_latents: Matrix,
        student_logits: Matrix,
        teacher_logits: Matrix,
        labels: Vec<usize>,
        teacher_assign: Option<Matrix>,
        weights: &EffectiveWeights,
        k_nn: usize,
    ) -> Result<Self> {
        let m = student_latents.rows();
        if teacher_latents.rows() != m
            || student_logits.rows() != m
            || teacher_logits.rows() != m
            || labels.len() != m
        {
            return Err(CoreError::validation(
                "anchor context: inconsistent batch sizes",
            ));
        }
        let teacher_dist = if weights.needs_geometry() {
            Some(normalized_distances(&teacher_latents)?)
        } else {
            None
        };
        let knn_mask = if weights.smooth > 0.0 {
            Some(teacher_knn_mask(teacher_dist.as_ref().unwrap(), k_nn)?)
        } else {
            None
        };
        if weights.needs_chart() && teacher_assign.is_none() {
            return Err(CoreError::validation(
                "anchor context: chart term active but teacher assignments missing",
            ));
        }
        Ok(AnchorBatchContext {
            student_latents,
            teacher_latents,
            student_logits,
            teacher_logits,
            labels,
            teacher_dist,
            knn_mask,
            teacher_assign: if weights.needs_chart() {
                teacher_assign
            } else {
                None
            },
        })
    }
}

/// Raw (pre-weighting) term values plus the schedule state and the total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub new: f64,
    pub anchor: f64,
    pub kd: f64,
    pub geo: f64,
    pub smooth: f64,
    pub chart: f64,
    pub reg: f64,
    pub alpha: f64,
    pub beta: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Recombine raw terms with the given weights; the composition oracle.
    pub fn weighted_total(&self, w: &EffectiveWeights) -> f64 {
        self.new
            + w.anchor * self.anchor
            + w.kd * self.kd
            + w.geo * self.geo
            + w.smooth * self.smooth
            + w.chart * self.chart
            + w.reg * self.reg
    }
}

/// Gradients of the total loss with respect to the student-side inputs.
#[derive(Clone, Debug)]
pub struct ObjectiveGrads {
    pub new_logits: Matrix,
    pub anchor_logits: Option<Matrix>,
    pub anchor_latents: Option<Matrix>,
    pub theta_direct: Option<Vec<f64>>,
}

/// Evaluate the composite objective for one step.
#[allow(clippy::too_many_arguments)]
pub fn total_loss(
    new_batch: &NewBatchContext,
    anchor: Option<&AnchorBatchContext>,
    atlas: Option<&ChartAtlas>,
    cfg: &ObjectiveConfig,
    theta: &[f64],
    theta0: &[f64],
    t: usize,
    t_total: usize,
    method: Method,
) -> Result<LossBreakdown> {
    let (breakdown, _) = total_loss_impl(
        new_batch, anchor, atlas, cfg, theta, theta0, t, t_total, method, false,
    )?;
    Ok(breakdown)
}

/// Evaluate the composite objective and its input-side gradients.
#[allow(clippy::too_many_arguments)]
pub fn total_loss_with_grads(
    new_batch: &NewBatchContext,
    anchor: Option<&AnchorBatchContext>,
    atlas: Option<&ChartAtlas>,
    cfg: &ObjectiveConfig,
    theta: &[f64],
    theta0: &[f64],
    t: usize,
    t_total: usize,
    method: Method,
) -> Result<(LossBreakdown, ObjectiveGrads)> {
    let (breakdown, grads) = total_loss_impl(
        new_batch, anchor, atlas, cfg, theta, theta0, t, t_total, method, true,
    )?;
    Ok((breakdown, grads.expect("grads requested")))
}

#[allow(clippy::too_many_arguments)]
fn total_loss_impl(
    new_batch: &NewBatchContext,
    anchor: Option<&AnchorBatchContext>,
    atlas: Option<&ChartAtlas>,
    cfg: &ObjectiveConfig,
    theta: &[f64],
    theta0: &[f64],
    t: usize,
    t_total: usize,
    method: Method,
    want_grads: bool,
) -> Result<(LossBreakdown, Option<ObjectiveGrads>)> {
    cfg.validate()?;
    let w = method.effective_weights(cfg, t, t_total);
    let mut bd = LossBreakdown {
        alpha: w.alpha,
        beta: w.beta,
        ..LossBreakdown::default()
    };

    let mut grads = ObjectiveGrads {
        new_logits: Matrix::zeros(0, 0),
        anchor_logits: None,
        anchor_latents: None,
        theta_direct: None,
    };

    if want_grads {
        let (v, g) = loss_ce_with_grad(&new_batch.student_logits, &new_batch.labels)?;
        bd.new = v;
        grads.new_logits = g;
    } else {
        bd.new = loss_ce(&new_batch.student_logits, &new_batch.labels)?;
    }

    if w.needs_anchor_batch() {
        let ctx = anchor.ok_or_else(|| {
            CoreError::validation("method requires an anchor batch but none was provided")
        })?;
        let m = ctx.student_latents.rows();
        let mut logit_grad = want_grads.then(|| Matrix::zeros(m, ctx.student_logits.cols()));
        let mut latent_grad = want_grads.then(|| Matrix::zeros(m, ctx.student_latents.cols()));

        if w.anchor > 0.0 {
            if want_grads {
                let (v, g) = loss_ce_with_grad(&ctx.student_logits, &ctx.labels)?;
                bd.anchor = v;
                accumulate(logit_grad.as_mut().unwrap(), &g, w.anchor);
            } else {
                bd.anchor = loss_ce(&ctx.student_logits, &ctx.labels)?;
            }
        }
        if w.kd > 0.0 {
            if want_grads {
                let (v, g) = loss_kd_with_grad(
                    &ctx.student_logits,
                    &ctx.teacher_logits,
                    cfg.kd_temperature,
                )?;
                bd.kd = v;
                accumulate(logit_grad.as_mut().unwrap(), &g, w.kd);
            } else {
                bd.kd = loss_kd(&ctx.student_logits, &ctx.teacher_logits, cfg.kd_temperature)?;
            }
        }
        if w.geo > 0.0 {
            let td = ctx
                .teacher_dist
                .as_ref()
                .ok_or_else(|| CoreError::validation("geo term active without teacher_dist"))?;
            if want_grads {
                let (v, g) = loss_geo_with_grad(&ctx.student_latents, td)?;
                bd.geo = v;
                accumulate(latent_grad.as_mut().unwrap(), &g, w.geo);
            } else {
                bd.geo = loss_geo(&ctx.student_latents, td)?;
            }
        }
        if w.smooth > 0.0 {
            let td = ctx
                .teacher_dist
                .as_ref()
                .ok_or_else(|| CoreError::validation("smooth term active without teacher_dist"))?;
            let mask = ctx
                .knn_mask
                .as_ref()
                .ok_or_else(|| CoreError::validation("smooth term active without knn mask"))?;
            if want_grads {
                let (v, g) =
                    loss_smooth_with_grad(&ctx.student_latents, td, mask, cfg.tau_smooth)?;
                bd.smooth = v;
                accumulate(latent_grad.as_mut().unwrap(), &g, w.smooth);
            } else {
                bd.smooth = loss_smooth(&ctx.student_latents, td, mask, cfg.tau_smooth)?;
            }
        }
        if w.chart > 0.0 {
            let atlas = atlas.ok_or_else(|| {
                CoreError::validation("chart term active but no atlas was provided")
            })?;
            let assign = ctx
                .teacher_assign
                .as_ref()
                .ok_or_else(|| CoreError::validation("chart term active without assignments"))?;
            if want_grads {
                let (v, g) = loss_chart_with_grad(&ctx.student_latents, assign, atlas)?;
                bd.chart = v;
                accumulate(latent_grad.as_mut().unwrap(), &g, w.chart);
            } else {
                bd.chart = loss_chart(&ctx.student_latents, assign, atlas)?;
            }
        }
        grads.anchor_logits = logit_grad;
        grads.anchor_latents = latent_grad;
    }

    if w.reg > 0.0 {
        bd.reg = loss_reg(theta, theta0)?;
        if want_grads {
            let mut g = loss_reg_grad(theta, theta0)?;
            for v in &mut g {
                *v *= w.reg;
            }
            grads.theta_direct = Some(g);
        }
    }

    bd.total = bd.weighted_total(&w);
    Ok((bd, want_grads.then_some(grads)))
}

fn accumulate(dst: &mut Matrix, src: &Matrix, weight: f64) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d += weight * s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::{draw_normal, substream};

    fn randn(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = substream(seed, &[93]);
        let mut m = Matrix::zeros(rows, cols);
        for v in m.data_mut() {
            *v = draw_normal(&mut rng);
        }
        m
    }

    #[test]
    fn schedule_trivial_points() {
        assert_eq!(schedule_value(1.0, 0.0, 0, 100), 1.0);
        assert_eq!(schedule_value(1.0, 0.0, 100, 100), 0.0);
        assert!((schedule_value(1.0, 0.0, 50, 100) - 0.5).abs() <= 1e-15);
        assert_eq!(schedule_value(0.9, 0.2, 0, 0), 0.9);
    }

    #[test]
    fn method_names_roundtrip_and_aliases() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()).unwrap(), m);
        }
        assert_eq!(Method::parse("ER").unwrap(), Method::ReplayAnchor);
        assert_eq!(Method::parse("replay-anchor").unwrap(), Method::ReplayAnchor);
        assert_eq!(Method::parse("spma_og").unwrap(), Method::SpmaOg);
        assert!(Method::parse("nonsense").is_err());
    }

    #[test]
    fn preset_weight_gating() {
        let cfg = ObjectiveConfig::default();
        let w = Method::PlainFt.effective_weights(&cfg, 0, 10);
        assert_eq!(
            (w.anchor, w.kd, w.geo, w.smooth, w.chart, w.reg),
            (0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
        );
        assert!(!w.needs_anchor_batch());

        // Replay baselines keep beta pinned to 1 with only the anchor term.
        for m in [Method::AnchorCe, Method::ReplayAnchor] {
            let w = m.effective_weights(&cfg, 7, 10);
            assert_eq!(w.beta, 1.0);
            assert_eq!(w.anchor, cfg.lambda_anchor);
            assert_eq!((w.kd, w.geo, w.smooth, w.chart, w.reg), (0.0, 0.0, 0.0, 0.0, 0.0));
        }

        let w = Method::OldGeometry.effective_weights(&cfg, 0, 10);
        assert!(w.geo > 0.0 && w.smooth > 0.0 && w.anchor > 0.0);
        assert_eq!((w.kd, w.chart, w.reg), (0.0, 0.0, 0.0));

        let w = Method::SpmaOg.effective_weights(&cfg, 5, 10);
        assert!((w.alpha - 0.5).abs() <= 1e-12);
        assert!((w.beta - 0.75).abs() <= 1e-12);
        assert!((w.kd - 0.5 * cfg.lambda_kd).abs() <= 1e-12);
        assert!((w.anchor - 0.75 * cfg.lambda_anchor).abs() <= 1e-12);
    }

    #[test]
    fn replay_budget_per_method() {
        assert_eq!(Method::PlainFt.replay_batch(64), 0);
        assert_eq!(Method::AnchorCe.replay_batch(64), 32);
        assert_eq!(Method::AnchorCe.replay_batch(1), 1);
        assert_eq!(Method::ReplayAnchor.replay_batch(64), 64);
        assert_eq!(Method::SpmaOg.replay_batch(64), 64);
    }

    #[test]
    fn reserved_weights_rejected() {
        let mut cfg = ObjectiveConfig::default();
        cfg.lambda_cont = 0.1;
        assert!(cfg.validate().is_err());
        let mut cfg = ObjectiveConfig::default();
        cfg.lambda_support = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ObjectiveConfig::default();
        cfg.lambda_geo = -1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn plain_ft_total_is_exactly_new_ce() {
        let logits = randn(6, 4, 1);
        let labels = vec![0, 1, 2, 3, 0, 1];
        let new_ctx = NewBatchContext {
            student_logits: logits.clone(),
            labels: labels.clone(),
        };
        let theta = vec![0.5; 10];
        let bd = total_loss(
            &new_ctx,
            None,
            None,
            &ObjectiveConfig::default(),
            &theta,
            &theta,
            0,
            10,
            Method::PlainFt,
        )
        .unwrap();
        let ce = loss_ce(&logits, &labels).unwrap();
        assert_eq!(bd.total, ce);
        assert_eq!(bd.new, ce);
        assert_eq!(bd.anchor, 0.0);
    }

    #[test]
    fn total_equals_breakdown_dotted_with_weights() {
        use crate::chart::{build_atlas, ChartConfig};
        let cfg = ObjectiveConfig::default();
        let method = Method::SpmaOg;
        let (t, t_total) = (2usize, 9usize);
        let w = method.effective_weights(&cfg, t, t_total);

        let pool = randn(30, 3, 2);
        let (atlas, _) = build_atlas(
            &pool,
            &ChartConfig {
                charts: 2,
                rank: 1,
                tau_c: 1.0,
            },
            1,
        )
        .unwrap();
        let m = 6;
        let z0 = randn(m, 3, 3);
        let z = randn(m, 3, 4);
        let mut assign = Matrix::zeros(m, atlas.len());
        for i in 0..m {
            let sa = crate::chart::soft_assign(&atlas, z0.row(i)).unwrap();
            assign.row_mut(i).copy_from_slice(&sa.probs);
        }
        let ctx = AnchorBatchContext::build(
            z,
            z0,
            randn(m, 4, 5),
            randn(m, 4, 6),
            vec![0, 1, 2, 3, 0, 1],
            Some(assign),
            &w,
            2,
        )
        .unwrap();
        let new_ctx = NewBatchContext {
            student_logits: randn(5, 4, 7),
            labels: vec![0, 1, 2, 3, 0],
        };
        let theta: Vec<f64> = (0..20).map(|i| i as f64 * 0.1).collect();
        let theta0 = vec![0.0; 20];
        let bd = total_loss(
            &new_ctx,
            Some(&ctx),
            Some(&atlas),
            &cfg,
            &theta,
            &theta0,
            t,
            t_total,
            method,
        )
        .unwrap();
        assert!((bd.total - bd.weighted_total(&w)).abs() <= 1e-12);
        assert!(bd.geo > 0.0 && bd.kd > 0.0 && bd.chart > 0.0 && bd.reg > 0.0);
        assert!([bd.new, bd.anchor, bd.kd, bd.geo, bd.smooth, bd.chart, bd.reg]
            .iter()
            .all(|&v| v >= 0.0));
    }

    #[test]
    fn anchor_required_when_weights_need_it() {
        let new_ctx = NewBatchContext {
            student_logits: randn(4, 3, 8),
            labels: vec![0, 1, 2, 0],
        };
        let theta = vec![0.0; 5];
        let err = total_loss(
            &new_ctx,
            None,
            None,
            &ObjectiveConfig::default(),
            &theta,
            &theta,
            0,
            10,
            Method::ReplayAnchor,
        );
        assert!(err.is_err());
    }
}
