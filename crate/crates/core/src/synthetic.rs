//! Warped-ribbon benchmark generator.
//!
//! One latent surface, fixed classes, two observation maps. A latent sample
//! (u, v) on the unit square is embedded as a warped ribbon in R^3 and then
//! observed through a view-specific nonlinear map into R^{D_in}. The Old and
//! New views share the surface and the labels; only the observation
//! parameters differ, which is exactly the compatible-shift regime the
//! retention losses target.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::seeding::{self, tag};

/// Dimension of the quadratic feature lift applied before mixing:
/// (x, y, z, x^2, y^2, z^2, xy, xz, yz).
pub const LIFT_DIM: usize = 9;

/// Scale of the mixing-matrix entries; keeps pre-tanh activations in a range
/// where the map is nonlinear but not fully saturated.
const MIXING_SCALE: f64 = 3.0;
const BIAS_SCALE: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViewId {
    Old,
    New,
}

/// A point on the latent surface with its class label.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentSample {
    pub u: f64,
    pub v: f64,
    pub label: usize,
}

/// Observation map for one view: quadratic lift, linear mixing, bias, tanh,
/// plus additive Gaussian noise at observation time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViewMap {
    pub view_id: ViewId,
    pub mixing: Matrix,
    pub bias: Vec<f64>,
    pub warp_gain: f64,
    pub sigma_obs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub input_dim: usize,
    pub anchors_per_class: usize,
    pub sigma_obs: f64,
    pub warp_gain: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        crate::experiment::defaults::benchmark()
    }
}

/// One labelled split in input space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Split {
    pub inputs: Matrix,
    pub labels: Vec<usize>,
}

/// Everything a run consumes: four splits plus the class-stratified anchor
/// subset of `old_train`.
#[derive(Clone, Debug)]
pub struct BenchmarkBundle {
    pub config: BenchmarkConfig,
    pub seed: u64,
    pub old_train: Split,
    pub old_test: Split,
    pub new_train: Split,
    pub new_test: Split,
    /// Indices into `old_train` rows.
    pub anchor_indices: Vec<usize>,
}

impl BenchmarkBundle {
    pub fn anchor_split(&self) -> Split {
        Split {
            inputs: self.old_train.inputs.select_rows(&self.anchor_indices),
            labels: self
                .anchor_indices
                .iter()
                .map(|&i| self.old_train.labels[i])
                .collect(),
        }
    }
}

/// Draw `n` latent samples i.i.d. uniform on the unit square.
///
/// Labels are sector bins along u: `floor(u * C)` clamped to `C-1`, so classes
/// stretch across the full ribbon.
pub fn sample_latent(n: usize, classes: usize, seed: u64) -> Result<Vec<LatentSample>> {
    if n == 0 {
        return Err(CoreError::validation("sample_latent: n must be >= 1"));
    }
    if classes == 0 {
        return Err(CoreError::validation("sample_latent: classes must be >= 1"));
    }
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u: f64 = rng.gen();
        let v: f64 = rng.gen();
        out.push(LatentSample {
            u,
            v,
            label: label_for(u, classes),
        });
    }
    Ok(out)
}

pub fn label_for(u: f64, classes: usize) -> usize {
    ((u * classes as f64).floor() as usize).min(classes - 1)
}

/// Embed a latent sample on the warped ribbon in R^3.
pub fn embed_ribbon(s: &LatentSample, warp_gain: f64) -> [f64; 3] {
    let two_pi_u = std::f64::consts::TAU * s.u;
    [
        s.u,
        two_pi_u.sin() * warp_gain + 0.5 * s.v,
        two_pi_u.cos() * warp_gain * s.v,
    ]
}

impl ViewMap {
    /// Build the observation map for a view. For a fixed (seed, view) the map
    /// is bit-reproducible; the two views draw independent parameters.
    pub fn generate(view_id: ViewId, cfg: &BenchmarkConfig, seed: u64) -> ViewMap {
        let view_tag = match view_id {
            ViewId::Old => tag::VIEW_OLD,
            ViewId::New => tag::VIEW_NEW,
        };
        let mut rng = seeding::substream(seed, &[view_tag]);
        let d_in = cfg.input_dim;
        let mut mixing = Matrix::zeros(d_in, LIFT_DIM);
        for v in mixing.data_mut() {
            *v = MIXING_SCALE * seeding::draw_normal(&mut rng);
        }
        let mut bias = vec![0.0; d_in];
        seeding::fill_normal(&mut rng, &mut bias, BIAS_SCALE);
        ViewMap {
            view_id,
            mixing,
            bias,
            warp_gain: cfg.warp_gain,
            sigma_obs: cfg.sigma_obs,
        }
    }
}

fn lift(p: &[f64; 3]) -> [f64; LIFT_DIM] {
    let [x, y, z] = *p;
    [x, y, z, x * x, y * y, z * z, x * y, x * z, y * z]
}

/// Observe an ambient point through a view: `tanh(M lift(p) + b) + eps`,
/// with `eps ~ N(0, sigma_obs^2)` drawn from a stream keyed by `noise_seed`.
pub fn observe(view: &ViewMap, p: &[f64; 3], noise_seed: u64) -> Vec<f64> {
    let lifted = lift(p);
    let mut out = view.mixing.matvec(&lifted).expect("lift dim fixed");
    for (o, &b) in out.iter_mut().zip(&view.bias) {
        *o = (*o + b).tanh();
    }
    if view.sigma_obs > 0.0 {
        let mut rng = seeding::substream(noise_seed, &[tag::OBS_NOISE]);
        for o in out.iter_mut() {
            *o += view.sigma_obs * seeding::draw_normal(&mut rng);
        }
    }
    out
}

fn generate_split(
    view: &ViewMap,
    cfg: &BenchmarkConfig,
    seed: u64,
    latent_tag: u64,
    n: usize,
) -> Result<Split> {
    let latents = sample_latent(n, cfg.classes, seeding::derive_seed(seed, &[latent_tag]))?;
    let mut inputs = Matrix::zeros(n, cfg.input_dim);
    let mut labels = Vec::with_capacity(n);
    for (i, s) in latents.iter().enumerate() {
        let p = embed_ribbon(s, cfg.warp_gain);
        let noise_seed = seeding::derive_seed(seed, &[latent_tag, i as u64]);
        let x = observe(view, &p, noise_seed);
        inputs.row_mut(i).copy_from_slice(&x);
        labels.push(s.label);
    }
    Ok(Split { inputs, labels })
}

/// Generate the full benchmark bundle for one seed.
pub fn make_benchmark(cfg: &BenchmarkConfig, seed: u64) -> Result<BenchmarkBundle> {
    validate_config(cfg)?;
    let old_view = ViewMap::generate(ViewId::Old, cfg, seed);
    let new_view = ViewMap::generate(ViewId::New, cfg, seed);

    let old_train = generate_split(&old_view, cfg, seed, tag::LATENT_OLD_TRAIN, cfg.n_train)?;
    let old_test = generate_split(&old_view, cfg, seed, tag::LATENT_OLD_TEST, cfg.n_test)?;
    let new_train = generate_split(&new_view, cfg, seed, tag::LATENT_NEW_TRAIN, cfg.n_train)?;
    let new_test = generate_split(&new_view, cfg, seed, tag::LATENT_NEW_TEST, cfg.n_test)?;

    let anchor_indices = pick_anchors(&old_train.labels, cfg, seed)?;

    Ok(BenchmarkBundle {
        config: cfg.clone(),
        seed,
        old_train,
        old_test,
        new_train,
        new_test,
        anchor_indices,
    })
}

fn validate_config(cfg: &BenchmarkConfig) -> Result<()> {
    if cfg.n_train == 0 || cfg.n_test == 0 {
        return Err(CoreError::validation("benchmark: empty splits"));
    }
    if cfg.classes < 2 {
        return Err(CoreError::validation("benchmark: need at least 2 classes"));
    }
    if cfg.input_dim == 0 {
        return Err(CoreError::validation("benchmark: input_dim must be >= 1"));
    }
    if cfg.anchors_per_class * cfg.classes > cfg.n_train {
        return Err(CoreError::validation(format!(
            "benchmark: {} anchors per class x {} classes exceeds n_train {}",
            cfg.anchors_per_class, cfg.classes, cfg.n_train
        )));
    }
    if !(cfg.sigma_obs >= 0.0) || !cfg.warp_gain.is_finite() {
        return Err(CoreError::validation("benchmark: bad noise/warp settings"));
    }
    Ok(())
}

/// Class-stratified anchor selection: `anchors_per_class` uniform draws
/// without replacement inside each class.
fn pick_anchors(labels: &[usize], cfg: &BenchmarkConfig, seed: u64) -> Result<Vec<usize>> {
    let mut rng = seeding::substream(seed, &[tag::ANCHOR_PICK]);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); cfg.classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut anchors = Vec::with_capacity(cfg.anchors_per_class * cfg.classes);
    for (class, pool) in by_class.iter_mut().enumerate() {
        if pool.len() < cfg.anchors_per_class {
            return Err(CoreError::degenerate(format!(
                "class {class} has only {} training samples, need {} anchors",
                pool.len(),
                cfg.anchors_per_class
            )));
        }
        // Partial Fisher-Yates: the first anchors_per_class slots.
        for k in 0..cfg.anchors_per_class {
            let j = rng.gen_range(k..pool.len());
            pool.swap(k, j);
            anchors.push(pool[k]);
        }
    }
    Ok(anchors)
}

// ---------------------------------------------------------------------------
// Bundle persistence: config echo + base64 row-major float blocks + labels.
// ---------------------------------------------------------------------------

pub const BUNDLE_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SplitDoc {
    rows: usize,
    cols: usize,
    inputs_b64: String,
    labels: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct BundleDoc {
    schema_version: u32,
    config: BenchmarkConfig,
    seed: u64,
    old_train: SplitDoc,
    old_test: SplitDoc,
    new_train: SplitDoc,
    new_test: SplitDoc,
    anchor_indices: Vec<usize>,
}

fn encode_split(s: &Split) -> SplitDoc {
    let mut bytes = Vec::with_capacity(s.inputs.data().len() * 8);
    for v in s.inputs.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    SplitDoc {
        rows: s.inputs.rows(),
        cols: s.inputs.cols(),
        inputs_b64: B64.encode(bytes),
        labels: s.labels.clone(),
    }
}

fn decode_split(doc: &SplitDoc) -> Result<Split> {
    let bytes = B64
        .decode(&doc.inputs_b64)
        .map_err(|e| CoreError::validation(format!("bundle: bad base64: {e}")))?;
    if bytes.len() != doc.rows * doc.cols * 8 {
        return Err(CoreError::validation("bundle: blob length mismatch"));
    }
    if doc.labels.len() != doc.rows {
        return Err(CoreError::validation("bundle: label count mismatch"));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(Split {
        inputs: Matrix::from_vec(doc.rows, doc.cols, data)?,
        labels: doc.labels.clone(),
    })
}

impl BenchmarkBundle {
    pub fn to_json(&self) -> Result<String> {
        let doc = BundleDoc {
            schema_version: BUNDLE_SCHEMA_VERSION,
            config: self.config.clone(),
            seed: self.seed,
            old_train: encode_split(&self.old_train),
            old_test: encode_split(&self.old_test),
            new_train: encode_split(&self.new_train),
            new_test: encode_split(&self.new_test),
            anchor_indices: self.anchor_indices.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<BenchmarkBundle> {
        let doc: BundleDoc = serde_json::from_str(text)?;
        if doc.schema_version != BUNDLE_SCHEMA_VERSION {
            return Err(CoreError::validation(format!(
                "bundle: unsupported schema version {}",
                doc.schema_version
            )));
        }
        Ok(BenchmarkBundle {
            config: doc.config,
            seed: doc.seed,
            old_train: decode_split(&doc.old_train)?,
            old_test: decode_split(&doc.old_test)?,
            new_train: decode_split(&doc.new_train)?,
            new_test: decode_split(&doc.new_test)?,
            anchor_indices: doc.anchor_indices,
        })
    }
}
