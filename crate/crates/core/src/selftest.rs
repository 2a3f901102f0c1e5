//! Runtime verification battery behind the `selftest` CLI verb.
//!
//! Each check pits a production kernel against an independent route
//! (scalar loops, dense factorizations, Gram-form identities, finite
//! differences) or asserts a declared invariant. The acceptance test suite
//! reuses the heavier harnesses exported here.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::chart::{build_atlas, fit_chart, soft_assign, chart_score, Chart, ChartAtlas, ChartConfig};
use crate::error::{CoreError, Result};
use crate::linalg::matrix::dot;
use crate::linalg::{kmeans, pairwise_euclidean, softmax_temp, top_r_eigen, Matrix};
use crate::metrics::{harmonic_mean, forgetting, linear_cka, support_inclusion};
use crate::model::MlpModel;
use crate::objective::{
    loss_ce, loss_geo, loss_kd, loss_smooth, normalized_distances, schedule_value,
    teacher_knn_mask, total_loss, total_loss_with_grads, AnchorBatchContext, Method,
    NewBatchContext, ObjectiveConfig,
};
use crate::seeding::{draw_normal, substream};

#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, result: Result<String>) -> CheckOutcome {
    match result {
        Ok(detail) => CheckOutcome {
            name: name.to_string(),
            passed: true,
            detail,
        },
        Err(e) => CheckOutcome {
            name: name.to_string(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn ensure(cond: bool, msg: impl Into<String>) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(CoreError::validation(msg.into()))
    }
}

pub fn run_all() -> Vec<CheckOutcome> {
    let mut out = vec![
        check("softmax shift invariance", softmax_check()),
        check("pairwise distances vs scalar loop", pairwise_check()),
        check("eigen reconstruction and orthonormality", eigen_check()),
        check("kmeans objective monotonicity", kmeans_check()),
        check("chart score vs dense Cholesky oracle", chart_dense_check()),
        check("distillation hand value", kd_check()),
        check("cross-entropy uniform value", ce_check()),
        check("relational losses under isometry", isometry_check()),
        check("linear CKA Gram-form identity", cka_check()),
        check("metric table vectors", table_vector_check()),
        check("schedule endpoints", schedule_check()),
        check("retention terms vanish at identity", identity_check()),
        check("support inclusion calibration", support_check()),
    ];
    for method in Method::ALL {
        out.push(check(
            &format!("gradient check [{method}]"),
            gradient_check_result(method),
        ));
    }
    out
}

fn randn_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = scale * draw_normal(rng);
    }
    m
}

/// Random orthogonal matrix via Gram-Schmidt on a Gaussian draw.
pub fn random_orthogonal(d: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| draw_normal(rng)).collect();
        for u in &q {
            let c = dot(&v, u);
            for (x, &ui) in v.iter_mut().zip(u) {
                *x -= c * ui;
            }
        }
        let n = dot(&v, &v).sqrt();
        if n > 1e-8 {
            for x in &mut v {
                *x /= n;
            }
            q.push(v);
        }
    }
    Matrix::from_rows(&q).unwrap()
}

fn softmax_check() -> Result<String> {
    let scores = [0.4, -1.2, 3.3, 0.0, 2.2];
    let shifted: Vec<f64> = scores.iter().map(|s| s + 1000.0).collect();
    let a = softmax_temp(&scores, 0.7, true)?;
    let b = softmax_temp(&shifted, 0.7, true)?;
    let max_diff = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    ensure(max_diff <= 1e-12, format!("shift diff {max_diff}"))?;
    let sum: f64 = a.iter().sum();
    ensure((sum - 1.0).abs() <= 1e-12, format!("sum {sum}"))?;
    Ok(format!("max shift diff {max_diff:.2e}"))
}

fn pairwise_check() -> Result<String> {
    let mut rng = substream(101, &[1]);
    let x = randn_matrix(&mut rng, 12, 5, 1.7);
    let d = pairwise_euclidean(&x)?;
    let mut worst = 0.0f64;
    for i in 0..12 {
        for j in 0..12 {
            let mut s = 0.0;
            for k in 0..5 {
                let diff = x.get(i, k) - x.get(j, k);
                s += diff * diff;
            }
            worst = worst.max((d.get(i, j) - s.sqrt()).abs());
        }
    }
    ensure(worst <= 1e-12, format!("worst {worst}"))?;
    Ok(format!("max abs error {worst:.2e}"))
}

fn eigen_check() -> Result<String> {
    let mut rng = substream(102, &[2]);
    let a = randn_matrix(&mut rng, 8, 6, 1.0);
    let s = a.transpose().matmul(&a)?;
    let e = top_r_eigen(&s, 6)?;
    let mut lam = Matrix::zeros(6, 6);
    for (i, &v) in e.values.iter().enumerate() {
        lam.set(i, i, v);
    }
    let recon = e.vectors.matmul(&lam)?.matmul(&e.vectors.transpose())?;
    let mut err = 0.0;
    for (x, y) in recon.data().iter().zip(s.data()) {
        err += (x - y) * (x - y);
    }
    let rel = err.sqrt() / s.frob_norm();
    ensure(rel <= 1e-6, format!("reconstruction rel {rel}"))?;
    let vtv = e.vectors.transpose().matmul(&e.vectors)?;
    let ortho = vtv.max_abs_diff(&Matrix::identity(6));
    ensure(ortho <= 1e-8, format!("orthonormality {ortho}"))?;
    Ok(format!("recon rel {rel:.2e}, ortho {ortho:.2e}"))
}

fn kmeans_check() -> Result<String> {
    let mut rng = substream(103, &[3]);
    let x = randn_matrix(&mut rng, 40, 3, 2.0);
    let km = kmeans(&x, 4, 9)?;
    for w in km.objective_trace.windows(2) {
        ensure(w[1] <= w[0] + 1e-9, format!("objective rose: {w:?}"))?;
    }
    for i in 0..40 {
        let (best, _) = crate::linalg::kmeans::nearest_center(x.row(i), &km.centers);
        ensure(best == km.assignments[i], "assignment not argmin")?;
    }
    Ok(format!("{} Lloyd iterations", km.objective_trace.len() - 1))
}

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
fn cholesky(s: &Matrix) -> Result<Matrix> {
    let d = s.rows();
    let mut l = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            let mut sum = s.get(i, j);
            for k in 0..j {
                sum -= l.get(i, k) * l.get(j, k);
            }
            if i == j {
                if sum <= 0.0 {
                    return Err(CoreError::degenerate("cholesky: not positive definite"));
                }
                l.set(i, j, sum.sqrt());
            } else {
                l.set(i, j, sum / l.get(j, j));
            }
        }
    }
    Ok(l)
}

fn chol_solve(l: &Matrix, b: &[f64]) -> Vec<f64> {
    let d = l.rows();
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in (i + 1)..d {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Dense-route chart score: materialize Sigma, factorize, and evaluate the
/// Mahalanobis-plus-logdet energy directly.
pub fn dense_chart_score(chart: &Chart, z: &[f64]) -> Result<f64> {
    let d = chart.dim();
    let mut sigma = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut v = if i == j { chart.resid_var() } else { 0.0 };
            for r in 0..chart.rank() {
                v += chart.basis().get(i, r) * chart.factor_vars()[r] * chart.basis().get(j, r);
            }
            sigma.set(i, j, v);
        }
    }
    let l = cholesky(&sigma)?;
    let logdet: f64 = (0..d).map(|i| 2.0 * l.get(i, i).ln()).sum();
    let diff: Vec<f64> = z.iter().zip(chart.mu()).map(|(&a, &b)| a - b).collect();
    let x = chol_solve(&l, &diff);
    let mahal = dot(&diff, &x);
    Ok((mahal + logdet) / d as f64)
}

fn chart_dense_check() -> Result<String> {
    let mut rng = substream(104, &[4]);
    let mut worst = 0.0f64;
    for &(d, r) in &[(4usize, 1usize), (6, 2), (16, 2)] {
        let data = randn_matrix(&mut rng, 3 * d, d, 1.3);
        let c = fit_chart(&data, r)?;
        for _ in 0..20 {
            let z: Vec<f64> = (0..d).map(|_| 2.0 * draw_normal(&mut rng)).collect();
            let fast = chart_score(&c, &z)?;
            let dense = dense_chart_score(&c, &z)?;
            let rel = (fast - dense).abs() / dense.abs().max(1.0);
            worst = worst.max(rel);
        }
    }
    ensure(worst <= 1e-8, format!("worst rel {worst}"))?;
    Ok(format!("worst rel {worst:.2e}"))
}

fn kd_check() -> Result<String> {
    let teacher = Matrix::from_vec(1, 2, vec![0.0, 0.0])?;
    let student = Matrix::from_vec(1, 2, vec![3.0f64.ln(), 0.0])?;
    let v = loss_kd(&student, &teacher, 1.0)?;
    let expect = 0.5 * (0.5f64 / 0.75).ln() + 0.5 * (0.5f64 / 0.25).ln();
    ensure((v - expect).abs() <= 1e-12, format!("{v} vs {expect}"))?;
    let zero = loss_kd(&teacher, &teacher, 2.0)?;
    ensure(zero == 0.0, format!("identity loss {zero}"))?;
    Ok(format!("hand value {v:.6}"))
}

fn ce_check() -> Result<String> {
    let logits = Matrix::zeros(3, 4);
    let v = loss_ce(&logits, &[0, 1, 2])?;
    let expect = 4.0f64.ln();
    ensure((v - expect).abs() <= 1e-12, format!("{v} vs ln 4"))?;
    Ok(format!("uniform CE {v:.6}"))
}

fn isometry_check() -> Result<String> {
    let mut rng = substream(105, &[5]);
    let m = 10;
    let d = 4;
    let teacher_latents = randn_matrix(&mut rng, m, d, 1.0);
    let student_latents = randn_matrix(&mut rng, m, d, 1.0);
    let teacher_dist = normalized_distances(&teacher_latents)?;
    let mask = teacher_knn_mask(&teacher_dist, 3)?;

    let base_geo = loss_geo(&student_latents, &teacher_dist)?;
    let base_smooth = loss_smooth(&student_latents, &teacher_dist, &mask, 1.0)?;

    let rot = random_orthogonal(d, &mut rng);
    let shift: Vec<f64> = (0..d).map(|_| 3.0 * draw_normal(&mut rng)).collect();
    let scale = 2.7;
    let mut moved = student_latents.matmul(&rot)?;
    for i in 0..m {
        for (v, &t) in moved.row_mut(i).iter_mut().zip(&shift) {
            *v = scale * *v + t;
        }
    }
    let geo = loss_geo(&moved, &teacher_dist)?;
    let smooth = loss_smooth(&moved, &teacher_dist, &mask, 1.0)?;
    ensure(
        (geo - base_geo).abs() <= 1e-9,
        format!("geo moved {}", (geo - base_geo).abs()),
    )?;
    ensure(
        (smooth - base_smooth).abs() <= 1e-9,
        format!("smooth moved {}", (smooth - base_smooth).abs()),
    )?;
    Ok(format!(
        "geo drift {:.2e}, smooth drift {:.2e}",
        (geo - base_geo).abs(),
        (smooth - base_smooth).abs()
    ))
}

/// Gram/HSIC-form linear CKA used as the independent route.
pub fn gram_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    let n = x.rows();
    ensure(y.rows() == n, "gram_cka: sample mismatch")?;
    let center = |g: &Matrix| -> Matrix {
        let n = g.rows();
        let row_means: Vec<f64> = (0..n)
            .map(|i| g.row(i).iter().sum::<f64>() / n as f64)
            .collect();
        let total: f64 = row_means.iter().sum::<f64>() / n as f64;
        let mut out = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, g.get(i, j) - row_means[i] - row_means[j] + total);
            }
        }
        out
    };
    let k = center(&x.matmul(&x.transpose())?);
    let l = center(&y.matmul(&y.transpose())?);
    let tr = |a: &Matrix, b: &Matrix| -> f64 {
        let mut s = 0.0;
        for i in 0..a.rows() {
            for j in 0..a.cols() {
                s += a.get(i, j) * b.get(j, i);
            }
        }
        s
    };
    let kl = tr(&k, &l);
    let kk = tr(&k, &k);
    let ll = tr(&l, &l);
    if kk <= 0.0 || ll <= 0.0 {
        return Err(CoreError::degenerate("gram_cka: zero-variance features"));
    }
    Ok(kl / (kk.sqrt() * ll.sqrt()))
}

fn cka_check() -> Result<String> {
    let mut rng = substream(106, &[6]);
    let x = randn_matrix(&mut rng, 15, 4, 1.0);
    let y = randn_matrix(&mut rng, 15, 6, 1.0);
    let feature = linear_cka(&x, &y)?;
    let gram = gram_cka(&x, &y)?;
    ensure(
        (feature - gram).abs() <= 1e-8,
        format!("{feature} vs {gram}"),
    )?;

    let rot = random_orthogonal(4, &mut rng);
    let mut moved = x.matmul(&rot)?;
    for i in 0..moved.rows() {
        for v in moved.row_mut(i) {
            *v = 0.3 * *v + 5.0;
        }
    }
    let invariant = linear_cka(&moved, &x)?;
    ensure(
        (invariant - 1.0).abs() <= 1e-8,
        format!("invariance {invariant}"),
    )?;
    Ok(format!("gram diff {:.2e}", (feature - gram).abs()))
}

fn table_vector_check() -> Result<String> {
    let cases = [
        (0.9269, 0.8875, 0.9068),
        (0.5800, 0.8994, 0.7052),
        (0.8195, 0.7906, 0.8048),
    ];
    for (a, b, expect) in cases {
        let h = harmonic_mean(a, b);
        ensure((h - expect).abs() <= 5e-4, format!("harmonic({a},{b})={h}"))?;
    }
    ensure(
        (forgetting(0.3482, 0.3059) - 0.0423).abs() <= 5e-4,
        "forgetting row 1",
    )?;
    ensure(
        (forgetting(0.3482, 0.0838) - 0.2644).abs() <= 5e-4,
        "forgetting row 2",
    )?;
    Ok("5 vectors exact to 5e-4".to_string())
}

fn schedule_check() -> Result<String> {
    ensure(schedule_value(1.0, 0.0, 0, 10) == 1.0, "start")?;
    ensure(schedule_value(1.0, 0.0, 10, 10) == 0.0, "end")?;
    ensure((schedule_value(1.0, 0.0, 5, 10) - 0.5).abs() <= 1e-15, "mid")?;
    ensure(schedule_value(0.7, 0.1, 0, 0) == 0.7, "degenerate horizon")?;
    Ok("endpoints exact".to_string())
}

/// Reduced teacher/student fixture shared by the identity and gradient checks.
pub struct ReducedSetup {
    pub teacher: MlpModel,
    pub atlas: ChartAtlas,
    pub new_inputs: Matrix,
    pub new_labels: Vec<usize>,
    pub anchor_inputs: Matrix,
    pub anchor_labels: Vec<usize>,
    pub teacher_latents: Matrix,
    pub teacher_logits: Matrix,
    pub teacher_assign: Matrix,
}

pub fn reduced_setup(seed: u64) -> Result<ReducedSetup> {
    let mut rng = substream(seed, &[107]);
    let teacher = MlpModel::new(&[4, 6, 5, 3], 1, seed)?;
    let m = 8;

    let new_inputs = randn_matrix(&mut rng, m, 4, 1.0);
    let new_labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..3)).collect();
    let anchor_inputs = randn_matrix(&mut rng, m, 4, 1.0);
    let anchor_labels: Vec<usize> = (0..m).map(|_| rng.gen_range(0..3)).collect();

    // Atlas built over a wider pool of teacher latents.
    let pool = randn_matrix(&mut rng, 24, 4, 1.0);
    let (_, pool_latents) = teacher.forward(&pool)?;
    let (atlas, _) = build_atlas(
        &pool_latents,
        &ChartConfig {
            charts: 2,
            rank: 1,
            tau_c: 1.0,
        },
        seed,
    )?;

    let (teacher_logits, teacher_latents) = teacher.forward(&anchor_inputs)?;
    let mut teacher_assign = Matrix::zeros(m, atlas.len());
    for i in 0..m {
        let sa = soft_assign(&atlas, teacher_latents.row(i))?;
        teacher_assign.row_mut(i).copy_from_slice(&sa.probs);
    }

    Ok(ReducedSetup {
        teacher,
        atlas,
        new_inputs,
        new_labels,
        anchor_inputs,
        anchor_labels,
        teacher_latents,
        teacher_logits,
        teacher_assign,
    })
}

/// Full-composition loss at a parameter point, matching the trainer's path.
fn composite_loss(
    setup: &ReducedSetup,
    params: &[f64],
    theta0: &[f64],
    cfg: &ObjectiveConfig,
    method: Method,
    t: usize,
    t_total: usize,
) -> Result<f64> {
    let mut student = setup.teacher.clone();
    student.set_params(params)?;
    let new_cache = student.forward_cached(&setup.new_inputs)?;
    let new_ctx = NewBatchContext {
        student_logits: new_cache.logits().clone(),
        labels: setup.new_labels.clone(),
    };
    let weights = method.effective_weights(cfg, t, t_total);
    let ctx = if weights.needs_anchor_batch() {
        let a_cache = student.forward_cached(&setup.anchor_inputs)?;
        Some(AnchorBatchContext::build(
            a_cache.latents(student.latent_layer()).clone(),
            setup.teacher_latents.clone(),
            a_cache.logits().clone(),
            setup.teacher_logits.clone(),
            setup.anchor_labels.clone(),
            Some(setup.teacher_assign.clone()),
            &weights,
            cfg.k_nn,
        )?)
    } else {
        None
    };
    let bd = total_loss(
        &new_ctx,
        ctx.as_ref(),
        Some(&setup.atlas),
        cfg,
        params,
        theta0,
        t,
        t_total,
        method,
    )?;
    Ok(bd.total)
}

/// Analytic parameter gradient through the production composition.
fn composite_grad(
    setup: &ReducedSetup,
    params: &[f64],
    theta0: &[f64],
    cfg: &ObjectiveConfig,
    method: Method,
    t: usize,
    t_total: usize,
) -> Result<Vec<f64>> {
    let mut student = setup.teacher.clone();
    student.set_params(params)?;
    let new_cache = student.forward_cached(&setup.new_inputs)?;
    let new_ctx = NewBatchContext {
        student_logits: new_cache.logits().clone(),
        labels: setup.new_labels.clone(),
    };
    let weights = method.effective_weights(cfg, t, t_total);
    let anchor_pack = if weights.needs_anchor_batch() {
        let a_cache = student.forward_cached(&setup.anchor_inputs)?;
        let ctx = AnchorBatchContext::build(
            a_cache.latents(student.latent_layer()).clone(),
            setup.teacher_latents.clone(),
            a_cache.logits().clone(),
            setup.teacher_logits.clone(),
            setup.anchor_labels.clone(),
            Some(setup.teacher_assign.clone()),
            &weights,
            cfg.k_nn,
        )?;
        Some((ctx, a_cache))
    } else {
        None
    };
    let (_, grads) = total_loss_with_grads(
        &new_ctx,
        anchor_pack.as_ref().map(|(c, _)| c),
        Some(&setup.atlas),
        cfg,
        params,
        theta0,
        t,
        t_total,
        method,
    )?;
    let mut grad = vec![0.0; params.len()];
    student.backward_into(&new_cache, &grads.new_logits, None, &mut grad)?;
    if let Some((_, a_cache)) = anchor_pack.as_ref() {
        student.backward_into(
            a_cache,
            grads.anchor_logits.as_ref().unwrap(),
            grads.anchor_latents.as_ref(),
            &mut grad,
        )?;
    }
    if let Some(direct) = grads.theta_direct {
        for (g, d) in grad.iter_mut().zip(direct) {
            *g += d;
        }
    }
    Ok(grad)
}

/// Max relative error between analytic and central-difference gradients over
/// `n_points` random parameter points (step 1e-4).
pub fn gradient_check_method(method: Method, n_points: usize, seed: u64) -> Result<f64> {
    let setup = reduced_setup(seed)?;
    let cfg = ObjectiveConfig::default();
    let theta0 = setup.teacher.params().to_vec();
    let (t, t_total) = (3usize, 10usize);
    let h = 1e-4;
    let mut rng = substream(seed, &[108]);
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let point: Vec<f64> = theta0
            .iter()
            .map(|&p| p + 0.1 * draw_normal(&mut rng))
            .collect();
        let analytic = composite_grad(&setup, &point, &theta0, &cfg, method, t, t_total)?;
        for i in 0..point.len() {
            let mut plus = point.clone();
            plus[i] += h;
            let mut minus = point.clone();
            minus[i] -= h;
            let fp = composite_loss(&setup, &plus, &theta0, &cfg, method, t, t_total)?;
            let fm = composite_loss(&setup, &minus, &theta0, &cfg, method, t, t_total)?;
            let fd = (fp - fm) / (2.0 * h);
            let rel = (fd - analytic[i]).abs() / fd.abs().max(analytic[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

fn gradient_check_result(method: Method) -> Result<String> {
    let worst = gradient_check_method(method, 3, 11)?;
    ensure(worst <= 1e-4, format!("max rel error {worst}"))?;
    Ok(format!("max rel error {worst:.2e}"))
}

fn identity_check() -> Result<String> {
    let setup = reduced_setup(13)?;
    let theta0 = setup.teacher.params().to_vec();
    let bd_total = composite_breakdown_at_identity(&setup, &theta0)?;
    for (name, v) in [
        ("kd", bd_total.kd),
        ("geo", bd_total.geo),
        ("smooth", bd_total.smooth),
        ("chart", bd_total.chart),
        ("reg", bd_total.reg),
    ] {
        ensure(v.abs() <= 1e-10, format!("{name} = {v} at identity"))?;
    }
    Ok("all retention terms <= 1e-10".to_string())
}

fn composite_breakdown_at_identity(
    setup: &ReducedSetup,
    theta0: &[f64],
) -> Result<crate::objective::LossBreakdown> {
    let student = setup.teacher.clone();
    let new_cache = student.forward_cached(&setup.new_inputs)?;
    let new_ctx = NewBatchContext {
        student_logits: new_cache.logits().clone(),
        labels: setup.new_labels.clone(),
    };
    let method = Method::SpmaOg;
    let cfg = ObjectiveConfig::default();
    let weights = method.effective_weights(&cfg, 0, 10);
    let a_cache = student.forward_cached(&setup.anchor_inputs)?;
    let ctx = AnchorBatchContext::build(
        a_cache.latents(student.latent_layer()).clone(),
        setup.teacher_latents.clone(),
        a_cache.logits().clone(),
        setup.teacher_logits.clone(),
        setup.anchor_labels.clone(),
        Some(setup.teacher_assign.clone()),
        &weights,
        cfg.k_nn,
    )?;
    total_loss(
        &new_ctx,
        Some(&ctx),
        Some(&setup.atlas),
        &cfg,
        student.params(),
        theta0,
        0,
        10,
        method,
    )
}

fn support_check() -> Result<String> {
    let mut rng = substream(109, &[9]);
    let features = randn_matrix(&mut rng, 150, 5, 1.0);
    let (atlas, _) = build_atlas(
        &features,
        &ChartConfig {
            charts: 3,
            rank: 2,
            tau_c: 1.0,
        },
        4,
    )?;
    let q = 0.95;
    let self_frac = support_inclusion(&atlas, &features, &features, q)?;
    ensure(
        (self_frac - q).abs() <= 1.0 / 150.0 + 1e-12,
        format!("self calibration {self_frac}"),
    )?;
    let mut far = features.clone();
    for v in far.data_mut() {
        *v += 100.0;
    }
    let off = support_inclusion(&atlas, &features, &far, q)?;
    ensure(off == 0.0, format!("far fraction {off}"))?;
    Ok(format!("self {self_frac:.4}, far 0.0000"))
}
