//! Teacher training, cluster-stratified replay sampling, and fine-tuning.
//!
//! The teacher is trained on the old view with plain cross-entropy, then
//! frozen: its parameter snapshot, anchor latents and anchor logits are
//! cached once and never recomputed. Fine-tuning starts the student from the
//! snapshot and walks the composite objective with the step index driving
//! the retention schedules. Everything is single-threaded and keyed off
//! dedicated RNG streams, so a (seed, config, method) triple pins every
//! logged number.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chart::{soft_assign, ChartAtlas};
use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::model::mlp::{MlpModel, ParameterVector};
use crate::model::optim::{Optimizer, OptimizerKind};
use crate::objective::{
    total_loss_with_grads, AnchorBatchContext, LossBreakdown, Method, NewBatchContext,
    ObjectiveConfig,
};
use crate::seeding::{self, tag};
use crate::synthetic::BenchmarkBundle;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub optimizer: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub replay_batch_size: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(CoreError::validation("learning_rate must be finite and >= 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(CoreError::validation("batch_size and epochs must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(CoreError::validation("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// The frozen teacher: model, snapshot, and cached anchor-side constants.
#[derive(Clone, Debug)]
pub struct TeacherArtifacts {
    pub model: MlpModel,
    pub theta0: ParameterVector,
    pub anchor_latents: Matrix,
    pub anchor_logits: Matrix,
}

/// One logged fine-tuning step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub breakdown: LossBreakdown,
}

#[derive(Clone, Debug)]
pub struct FinetuneOutput {
    pub model: MlpModel,
    pub log: Vec<StepRecord>,
}

/// Train the teacher on the old view with plain cross-entropy, then freeze it
/// and cache its anchor features and logits.
pub fn train_teacher(
    bundle: &BenchmarkBundle,
    cfg: &TrainConfig,
    hidden_dims: &[usize],
    seed: u64,
) -> Result<TeacherArtifacts> {
    cfg.validate()?;
    if hidden_dims.is_empty() {
        return Err(CoreError::validation("teacher: need at least one hidden layer"));
    }
    let c = bundle.config.classes;
    let mut dims = Vec::with_capacity(hidden_dims.len() + 2);
    dims.push(bundle.config.input_dim);
    dims.extend_from_slice(hidden_dims);
    dims.push(c);
    let latent_layer = hidden_dims.len() - 1;

    let mut model = MlpModel::new(&dims, latent_layer, seed)?;
    let mut opt = Optimizer::new(
        cfg.optimizer,
        cfg.learning_rate,
        cfg.momentum,
        model.params().len(),
    );
    let mut rng = seeding::substream(seed, &[tag::TEACHER_SHUFFLE]);
    let n = bundle.old_train.inputs.rows();
    let mut order: Vec<usize> = (0..n).collect();

    let mut step = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let x = bundle.old_train.inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| bundle.old_train.labels[i]).collect();
            let cache = model.forward_cached(&x)?;
            let (loss, dlogits) = crate::objective::loss_ce_with_grad(cache.logits(), &y)?;
            if !loss.is_finite() {
                return Err(CoreError::Training {
                    step,
                    detail: format!("teacher loss became {loss}"),
                });
            }
            let grad = model.backward(&cache, &dlogits, None)?;
            opt.step(model.params_mut(), &grad);
            step += 1;
        }
    }

    let anchors = bundle.anchor_split();
    let (anchor_logits, anchor_latents) = model.forward(&anchors.inputs)?;
    let theta0 = model.params().to_vec();
    Ok(TeacherArtifacts {
        model,
        theta0,
        anchor_latents,
        anchor_logits,
    })
}

/// Round-robin over clusters, uniform without replacement inside each.
///
/// `clusters` holds anchor positions grouped by atlas cluster. Clusters that
/// run dry inside a batch are skipped; `size` must not exceed the total.
pub fn sample_anchor_batch(
    clusters: &[Vec<usize>],
    size: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<usize>> {
    let total: usize = clusters.iter().map(Vec::len).sum();
    if size == 0 || size > total {
        return Err(CoreError::validation(format!(
            "sample_anchor_batch: size {size} out of range [1, {total}]"
        )));
    }
    let k = clusters.len();
    let mut pools: Vec<Vec<usize>> = clusters.to_vec();
    let mut out = Vec::with_capacity(size);
    let mut cursor = 0usize;
    while out.len() < size {
        let mut probed = 0;
        while pools[cursor % k].is_empty() {
            cursor += 1;
            probed += 1;
            debug_assert!(probed <= k, "total count guarantees a nonempty pool");
        }
        let pool = &mut pools[cursor % k];
        let j = rng.gen_range(0..pool.len());
        out.push(pool.swap_remove(j));
        cursor += 1;
    }
    Ok(out)
}

/// Group anchor positions (0..n_anchors) by their atlas cluster.
pub fn group_anchors_by_cluster(assignments: &[usize], n_clusters: usize) -> Vec<Vec<usize>> {
    let mut clusters = vec![Vec::new(); n_clusters];
    for (i, &c) in assignments.iter().enumerate() {
        clusters[c].push(i);
    }
    clusters
}

/// Fine-tune a student (initialized from the teacher snapshot) on the new
/// view under the given method preset.
#[allow(clippy::too_many_arguments)]
pub fn finetune(
    teacher: &TeacherArtifacts,
    bundle: &BenchmarkBundle,
    atlas: &ChartAtlas,
    anchor_clusters: &[Vec<usize>],
    obj_cfg: &ObjectiveConfig,
    train_cfg: &TrainConfig,
    method: Method,
    seed: u64,
) -> Result<FinetuneOutput> {
    obj_cfg.validate()?;
    train_cfg.validate()?;
    let anchors = bundle.anchor_split();
    let n_anchors = anchors.inputs.rows();
    let replay_size = method.replay_batch(train_cfg.replay_batch_size);
    if method.uses_replay() && replay_size > n_anchors {
        return Err(CoreError::validation(format!(
            "replay batch {replay_size} exceeds anchor count {n_anchors}"
        )));
    }

    let mut student = teacher.model.clone();
    let theta0 = &teacher.theta0;
    let mut opt = Optimizer::new(
        train_cfg.optimizer,
        train_cfg.learning_rate,
        train_cfg.momentum,
        student.params().len(),
    );

    // Teacher soft assignments over the full anchor set, once, if the chart
    // term can ever fire for this run.
    let teacher_assign_full: Option<Matrix> = if method == Method::SpmaOg
        && obj_cfg.lambda_chart > 0.0
    {
        let mut m = Matrix::zeros(n_anchors, atlas.len());
        for i in 0..n_anchors {
            let sa = soft_assign(atlas, teacher.anchor_latents.row(i))?;
            m.row_mut(i).copy_from_slice(&sa.probs);
        }
        Some(m)
    } else {
        None
    };

    let n = bundle.new_train.inputs.rows();
    let batches_per_epoch = n.div_ceil(train_cfg.batch_size);
    let total_steps = train_cfg.epochs * batches_per_epoch;
    let t_total = total_steps.saturating_sub(1);

    let mut shuffle_rng = seeding::substream(seed, &[tag::FINETUNE_SHUFFLE]);
    let mut replay_rng = seeding::substream(seed, &[tag::REPLAY]);
    let mut order: Vec<usize> = (0..n).collect();
    let mut log = Vec::with_capacity(total_steps);
    let mut t = 0usize;

    for _ in 0..train_cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        for chunk in order.chunks(train_cfg.batch_size) {
            let x = bundle.new_train.inputs.select_rows(chunk);
            let y: Vec<usize> = chunk.iter().map(|&i| bundle.new_train.labels[i]).collect();
            let new_cache = student.forward_cached(&x)?;
            let new_ctx = NewBatchContext {
                student_logits: new_cache.logits().clone(),
                labels: y,
            };

            let weights = method.effective_weights(obj_cfg, t, t_total);
            let mut anchor_pack = None;
            if weights.needs_anchor_batch() {
                let batch_idx = sample_anchor_batch(anchor_clusters, replay_size, &mut replay_rng)?;
                let a_inputs = anchors.inputs.select_rows(&batch_idx);
                let a_labels: Vec<usize> =
                    batch_idx.iter().map(|&i| anchors.labels[i]).collect();
                let a_cache = student.forward_cached(&a_inputs)?;
                let ctx = AnchorBatchContext::build(
                    a_cache.latents(student.latent_layer()).clone(),
                    teacher.anchor_latents.select_rows(&batch_idx),
                    a_cache.logits().clone(),
                    teacher.anchor_logits.select_rows(&batch_idx),
                    a_labels,
                    teacher_assign_full
                        .as_ref()
                        .map(|m| m.select_rows(&batch_idx)),
                    &weights,
                    obj_cfg.k_nn,
                )?;
                anchor_pack = Some((ctx, a_cache));
            }

            let (breakdown, grads) = total_loss_with_grads(
                &new_ctx,
                anchor_pack.as_ref().map(|(ctx, _)| ctx),
                Some(atlas),
                obj_cfg,
                student.params(),
                theta0,
                t,
                t_total,
                method,
            )?;
            if !breakdown.total.is_finite() {
                return Err(CoreError::Training {
                    step: t,
                    detail: format!("non-finite loss; breakdown: {breakdown:?}"),
                });
            }

            let mut grad = vec![0.0; student.params().len()];
            student.backward_into(&new_cache, &grads.new_logits, None, &mut grad)?;
            if let Some((_, a_cache)) = anchor_pack.as_ref() {
                student.backward_into(
                    a_cache,
                    grads.anchor_logits.as_ref().expect("anchor grads present"),
                    grads.anchor_latents.as_ref(),
                    &mut grad,
                )?;
            }
            if let Some(direct) = grads.theta_direct.as_ref() {
                for (g, &d) in grad.iter_mut().zip(direct) {
                    *g += d;
                }
            }
            opt.step(student.params_mut(), &grad);
            log.push(StepRecord {
                step: t,
                breakdown,
            });
            t += 1;
        }
    }

    Ok(FinetuneOutput {
        model: student,
        log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chart::{build_atlas, ChartConfig};
    use crate::metrics::accuracy;
    use crate::synthetic::{make_benchmark, BenchmarkConfig};

    fn small_bench() -> (BenchmarkConfig, BenchmarkBundle) {
        let cfg = BenchmarkConfig {
            n_train: 240,
            n_test: 120,
            classes: 3,
            input_dim: 8,
            anchors_per_class: 16,
            sigma_obs: 0.02,
            warp_gain: 0.3,
        };
        let bundle = make_benchmark(&cfg, 7).unwrap();
        (cfg, bundle)
    }

    fn small_train(epochs: usize) -> TrainConfig {
        TrainConfig {
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            epochs,
            replay_batch_size: 16,
        }
    }

    #[test]
    fn teacher_training_is_deterministic_and_caches_frozen_features() {
        let (_, bundle) = small_bench();
        let cfg = small_train(4);
        let a = train_teacher(&bundle, &cfg, &[16, 8], 7).unwrap();
        let b = train_teacher(&bundle, &cfg, &[16, 8], 7).unwrap();
        assert_eq!(a.model.params(), b.model.params());
        // Recomputing anchor features post-freeze reproduces the cache
        // bit-for-bit.
        let anchors = bundle.anchor_split();
        let (logits, latents) = a.model.forward(&anchors.inputs).unwrap();
        assert_eq!(logits, a.anchor_logits);
        assert_eq!(latents, a.anchor_latents);
        assert_eq!(a.theta0, a.model.params());
    }

    #[test]
    fn teacher_learns_the_small_benchmark() {
        let (_, bundle) = small_bench();
        let teacher = train_teacher(&bundle, &small_train(20), &[16, 8], 7).unwrap();
        let (logits, _) = teacher.model.forward(&bundle.old_test.inputs).unwrap();
        let acc = accuracy(&logits, &bundle.old_test.labels).unwrap();
        assert!(acc >= 0.80, "teacher old-test accuracy {acc}");
    }

    #[test]
    fn anchor_batches_round_robin_and_exhaust() {
        let clusters = vec![vec![0, 1, 2], vec![3, 4], vec![5]];
        let mut rng = seeding::substream(1, &[tag::REPLAY]);
        // Saturation: one batch covering all anchors exactly once.
        let batch = sample_anchor_batch(&clusters, 6, &mut rng).unwrap();
        let mut sorted = batch.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 3, 4, 5]);
        // size == K: exactly one per cluster.
        let batch = sample_anchor_batch(&clusters, 3, &mut rng).unwrap();
        assert!(batch[0] <= 2 && (3..=4).contains(&batch[1]) && batch[2] == 5);
        // Oversized requests are rejected.
        assert!(sample_anchor_batch(&clusters, 7, &mut rng).is_err());
    }

    #[test]
    fn stratified_frequencies_are_balanced() {
        let clusters: Vec<Vec<usize>> = (0..4).map(|c| (c * 8..(c + 1) * 8).collect()).collect();
        let mut rng = seeding::substream(3, &[tag::REPLAY]);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            for idx in sample_anchor_batch(&clusters, 8, &mut rng).unwrap() {
                counts[idx / 8] += 1;
            }
        }
        for c in counts {
            let f = c as f64 / (draws * 8) as f64;
            assert!((f - 0.25).abs() <= 0.02, "cluster frequency {f}");
        }
    }

    #[test]
    fn zeroed_spma_matches_plain_ft_bit_for_bit() {
        let (_, bundle) = small_bench();
        let teacher = train_teacher(&bundle, &small_train(3), &[16, 8], 7).unwrap();
        let chart_cfg = ChartConfig {
            charts: 3,
            rank: 2,
            tau_c: 1.0,
        };
        let (atlas, assign) =
            build_atlas(&teacher.anchor_latents, &chart_cfg, 7).unwrap();
        let clusters = group_anchors_by_cluster(&assign, atlas.len());

        let mut zeroed = ObjectiveConfig::default();
        zeroed.lambda_anchor = 0.0;
        zeroed.lambda_kd = 0.0;
        zeroed.lambda_geo = 0.0;
        zeroed.lambda_smooth = 0.0;
        zeroed.lambda_chart = 0.0;
        zeroed.lambda_reg = 0.0;
        zeroed.schedule.beta_start = 0.0;
        zeroed.schedule.beta_end = 0.0;

        let tc = small_train(2);
        let spma = finetune(
            &teacher, &bundle, &atlas, &clusters, &zeroed, &tc, Method::SpmaOg, 7,
        )
        .unwrap();
        let plain = finetune(
            &teacher,
            &bundle,
            &atlas,
            &clusters,
            &ObjectiveConfig::default(),
            &tc,
            Method::PlainFt,
            7,
        )
        .unwrap();
        assert_eq!(spma.model.params(), plain.model.params());
    }

    #[test]
    fn step_zero_retention_terms_vanish() {
        let (_, bundle) = small_bench();
        let teacher = train_teacher(&bundle, &small_train(3), &[16, 8], 7).unwrap();
        let chart_cfg = ChartConfig {
            charts: 3,
            rank: 2,
            tau_c: 1.0,
        };
        let (atlas, assign) = build_atlas(&teacher.anchor_latents, &chart_cfg, 7).unwrap();
        let clusters = group_anchors_by_cluster(&assign, atlas.len());
        let out = finetune(
            &teacher,
            &bundle,
            &atlas,
            &clusters,
            &ObjectiveConfig::default(),
            &small_train(1),
            Method::SpmaOg,
            7,
        )
        .unwrap();
        let first = &out.log[0].breakdown;
        assert!(first.kd.abs() <= 1e-10, "kd {}", first.kd);
        assert!(first.geo.abs() <= 1e-10, "geo {}", first.geo);
        assert!(first.smooth.abs() <= 1e-10, "smooth {}", first.smooth);
        assert!(first.chart.abs() <= 1e-10, "chart {}", first.chart);
        assert!(first.reg.abs() <= 1e-10, "reg {}", first.reg);
    }
}
