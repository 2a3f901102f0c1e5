//! Deterministic dense linear-algebra and statistics kernels.

pub mod eigen;
pub mod kmeans;
pub mod matrix;
pub mod stats;

pub use eigen::{top_r_eigen, EigenResult};
pub use kmeans::{kmeans, Kmeans};
pub use matrix::Matrix;
pub use stats::{pairwise_euclidean, pearson, sample_covariance, softmax, softmax_temp};
