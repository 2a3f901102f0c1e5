//! Deterministic seed derivation and Gaussian sampling.
//!
//! Every random decision in the pipeline draws from a ChaCha8 stream keyed by
//! `(master seed, purpose tags)`. Keeping streams separate per purpose means
//! that e.g. replay sampling never perturbs the new-task shuffle order, which
//! is what makes zero-weight method presets bit-identical to their baselines.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream tags. New tags may be appended; existing values are frozen because
/// they participate in reproducibility guarantees.
pub mod tag {
    pub const LATENT_OLD_TRAIN: u64 = 1;
    pub const LATENT_OLD_TEST: u64 = 2;
    pub const LATENT_NEW_TRAIN: u64 = 3;
    pub const LATENT_NEW_TEST: u64 = 4;
    pub const VIEW_OLD: u64 = 5;
    pub const VIEW_NEW: u64 = 6;
    pub const OBS_NOISE: u64 = 7;
    pub const ANCHOR_PICK: u64 = 8;
    pub const TEACHER_INIT: u64 = 9;
    pub const TEACHER_SHUFFLE: u64 = 10;
    pub const ATLAS_KMEANS: u64 = 11;
    pub const FINETUNE_SHUFFLE: u64 = 12;
    pub const REPLAY: u64 = 13;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Fold a tag sequence into a master seed.
pub fn derive_seed(master: u64, tags: &[u64]) -> u64 {
    let mut x = splitmix64(master ^ 0xA076_1D64_78BD_642F);
    for &t in tags {
        x = splitmix64(x ^ splitmix64(t));
    }
    x
}

/// A ChaCha8 stream keyed by `(master, tags)`.
pub fn substream(master: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tags))
}

/// One standard normal draw (Box-Muller).
pub fn draw_normal<R: Rng>(rng: &mut R) -> f64 {
    // gen() is in [0,1); shift to (0,1] so ln() stays finite.
    let u1: f64 = 1.0 - rng.gen::<f64>();
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Fill `out` with N(0, sigma^2) draws.
pub fn fill_normal<R: Rng>(rng: &mut R, out: &mut [f64], sigma: f64) {
    for v in out.iter_mut() {
        *v = sigma * draw_normal(rng);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_stable_and_tag_sensitive() {
        let a = derive_seed(7, &[tag::VIEW_OLD]);
        let b = derive_seed(7, &[tag::VIEW_OLD]);
        let c = derive_seed(7, &[tag::VIEW_NEW]);
        let d = derive_seed(8, &[tag::VIEW_OLD]);
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
    }

    #[test]
    fn normal_draws_have_sane_moments() {
        let mut rng = substream(123, &[99]);
        let n = 20_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z = draw_normal(&mut rng);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.03, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }
}
