//! Small feed-forward network with a designated latent layer.
//!
//! Parameters live in one flat vector with per-layer views (weights then
//! bias, layer by layer). Hidden activations are tanh, logits are linear.
//! `backward` takes a gradient at the logits and an optional gradient
//! injected at the latent layer's post-activation output, which is how the
//! relational losses reach the weights.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::Matrix;
use crate::seeding;

/// Flat parameter vector; clones of it serve as frozen snapshots.
pub type ParameterVector = Vec<f64>;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MlpModel {
    layer_dims: Vec<usize>,
    /// Hidden layer whose post-activation output is the latent z.
    latent_layer: usize,
    params: ParameterVector,
}

/// Post-activation outputs of every layer for one batch, input included.
pub struct ForwardCache {
    activations: Vec<Matrix>,
}

impl ForwardCache {
    pub fn logits(&self) -> &Matrix {
        self.activations.last().unwrap()
    }

    pub fn latents(&self, latent_layer: usize) -> &Matrix {
        &self.activations[latent_layer + 1]
    }
}

impl MlpModel {
    /// Seeded init: uniform in +-1/sqrt(fan_in), biases zero.
    pub fn new(layer_dims: &[usize], latent_layer: usize, seed: u64) -> Result<MlpModel> {
        if layer_dims.len() < 2 {
            return Err(CoreError::validation("mlp: need at least input and output"));
        }
        if layer_dims.iter().any(|&d| d == 0) {
            return Err(CoreError::validation("mlp: zero-width layer"));
        }
        let n_layers = layer_dims.len() - 1;
        // The latent must be a hidden layer, never the logits head.
        if n_layers < 2 || latent_layer > n_layers - 2 {
            return Err(CoreError::validation(format!(
                "mlp: latent layer {latent_layer} is not a hidden layer"
            )));
        }
        let mut rng = seeding::substream(seed, &[seeding::tag::TEACHER_INIT]);
        let mut params = vec![0.0; Self::param_count(layer_dims)];
        let mut offset = 0;
        for l in 0..n_layers {
            let fan_in = layer_dims[l];
            let fan_out = layer_dims[l + 1];
            let scale = 1.0 / (fan_in as f64).sqrt();
            for p in params[offset..offset + fan_in * fan_out].iter_mut() {
                use rand::Rng;
                *p = rng.gen_range(-scale..scale);
            }
            offset += fan_in * fan_out + fan_out; // biases stay zero
        }
        Ok(MlpModel {
            layer_dims: layer_dims.to_vec(),
            latent_layer,
            params,
        })
    }

    /// Total parameter count is a pure function of the layer dims.
    pub fn param_count(layer_dims: &[usize]) -> usize {
        layer_dims
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn latent_layer(&self) -> usize {
        self.latent_layer
    }

    pub fn latent_dim(&self) -> usize {
        self.layer_dims[self.latent_layer + 1]
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(CoreError::validation("mlp: parameter length mismatch"));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    fn layer_offset(&self, layer: usize) -> usize {
        let mut off = 0;
        for l in 0..layer {
            off += self.layer_dims[l] * self.layer_dims[l + 1] + self.layer_dims[l + 1];
        }
        off
    }

    fn weights(&self, layer: usize) -> &[f64] {
        let off = self.layer_offset(layer);
        let len = self.layer_dims[layer] * self.layer_dims[layer + 1];
        &self.params[off..off + len]
    }

    fn biases(&self, layer: usize) -> &[f64] {
        let off = self.layer_offset(layer) + self.layer_dims[layer] * self.layer_dims[layer + 1];
        &self.params[off..off + self.layer_dims[layer + 1]]
    }

    /// Forward pass caching every post-activation block.
    pub fn forward_cached(&self, x: &Matrix) -> Result<ForwardCache> {
        if x.cols() != self.input_dim() {
            return Err(CoreError::validation(format!(
                "mlp forward: input dim {} != {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let m = x.rows();
        let mut activations = Vec::with_capacity(self.n_layers() + 1);
        activations.push(x.clone());
        for l in 0..self.n_layers() {
            let d_out = self.layer_dims[l + 1];
            let w = self.weights(l);
            let b = self.biases(l);
            let prev = &activations[l];
            let mut out = Matrix::zeros(m, d_out);
            for i in 0..m {
                let row_in = prev.row(i);
                let row_out = out.row_mut(i);
                row_out.copy_from_slice(b);
                for (k, &a) in row_in.iter().enumerate() {
                    if a == 0.0 {
                        continue;
                    }
                    let wrow = &w[k * d_out..(k + 1) * d_out];
                    for (o, &wv) in row_out.iter_mut().zip(wrow) {
                        *o += a * wv;
                    }
                }
                if l + 1 < self.layer_dims.len() - 1 {
                    for o in row_out.iter_mut() {
                        *o = o.tanh();
                    }
                }
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Logits and latents in one pass.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Matrix)> {
        let cache = self.forward_cached(x)?;
        Ok((
            cache.logits().clone(),
            cache.latents(self.latent_layer).clone(),
        ))
    }

    /// Reverse-mode gradient of a scalar loss given its gradient at the
    /// logits and, optionally, a gradient injected at the latent output.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        dlogits: &Matrix,
        dlatent: Option<&Matrix>,
    ) -> Result<ParameterVector> {
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(cache, dlogits, dlatent, &mut grad)?;
        Ok(grad)
    }

    /// Same as `backward`, accumulating into an existing gradient buffer.
    pub fn backward_into(
        &self,
        cache: &ForwardCache,
        dlogits: &Matrix,
        dlatent: Option<&Matrix>,
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(CoreError::validation("mlp backward: grad buffer size"));
        }
        let n_layers = self.n_layers();
        let logits = cache.logits();
        if dlogits.rows() != logits.rows() || dlogits.cols() != logits.cols() {
            return Err(CoreError::validation("mlp backward: dlogits shape"));
        }
        let m = logits.rows();

        let mut d_act = dlogits.clone();
        for l in (0..n_layers).rev() {
            let d_in = self.layer_dims[l];
            let d_out = self.layer_dims[l + 1];
            let act = &cache.activations[l + 1];

            if l == self.latent_layer {
                if let Some(inj) = dlatent {
                    if inj.rows() != m || inj.cols() != d_out {
                        return Err(CoreError::validation("mlp backward: dlatent shape"));
                    }
                    for (d, &s) in d_act.data_mut().iter_mut().zip(inj.data()) {
                        *d += s;
                    }
                }
            }

            // dZ = dA * act'(A); hidden layers are tanh, the head is linear.
            let mut dz = d_act;
            if l < n_layers - 1 {
                for (dv, &av) in dz.data_mut().iter_mut().zip(act.data()) {
                    *dv *= 1.0 - av * av;
                }
            }

            let prev = &cache.activations[l];
            let w_off = self.layer_offset(l);
            let b_off = w_off + d_in * d_out;

            for i in 0..m {
                let dzr = dz.row(i);
                let pr = prev.row(i);
                for (k, &a) in pr.iter().enumerate() {
                    if a != 0.0 {
                        let wg = &mut grad[w_off + k * d_out..w_off + (k + 1) * d_out];
                        for (g, &d) in wg.iter_mut().zip(dzr) {
                            *g += a * d;
                        }
                    }
                }
                let bg = &mut grad[b_off..b_off + d_out];
                for (g, &d) in bg.iter_mut().zip(dzr) {
                    *g += d;
                }
            }

            if l > 0 {
                let w = self.weights(l);
                let mut d_prev = Matrix::zeros(m, d_in);
                for i in 0..m {
                    let dzr = dz.row(i);
                    let dpr = d_prev.row_mut(i);
                    for (k, dp) in dpr.iter_mut().enumerate() {
                        let wrow = &w[k * d_out..(k + 1) * d_out];
                        *dp = wrow.iter().zip(dzr).map(|(&wv, &dv)| wv * dv).sum();
                    }
                }
                d_act = d_prev;
            } else {
                break;
            }
        }
        Ok(())
    }
}
