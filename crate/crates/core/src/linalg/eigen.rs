//! Leading eigenpairs of symmetric PSD matrices.
//!
//! Production path is power iteration with deflation: deterministic starting
//! vectors, re-orthogonalization against already-found pairs every step, and
//! a relative residual stopping rule. Only the top-r pairs are ever needed,
//! so a full dense solver is reserved for test oracles.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::linalg::matrix::{dot, Matrix};

pub const MAX_ITERS: usize = 10_000;
pub const RESIDUAL_TOL: f64 = 1e-10;
const SYMMETRY_TOL: f64 = 1e-10;

/// Leading eigenpairs: `values` non-increasing, `vectors` holds one
/// orthonormal column per retained value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

/// Top `r` eigenpairs of a symmetric PSD matrix.
pub fn top_r_eigen(s: &Matrix, r: usize) -> Result<EigenResult> {
    let d = s.rows();
    if s.cols() != d {
        return Err(CoreError::validation("top_r_eigen: matrix not square"));
    }
    if !s.all_finite() {
        return Err(CoreError::validation("top_r_eigen: non-finite input"));
    }
    if !s.is_symmetric(SYMMETRY_TOL) {
        return Err(CoreError::validation(
            "top_r_eigen: matrix not symmetric within 1e-10",
        ));
    }
    if r == 0 || r > d {
        return Err(CoreError::validation(format!(
            "top_r_eigen: rank {r} out of range [1, {d}]"
        )));
    }

    let scale = s.frob_norm().max(1.0);
    let mut deflated = s.clone();
    let mut values = Vec::with_capacity(r);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(r);

    for _ in 0..r {
        let (lambda, v) = dominant_pair(&deflated, &basis, scale)?;
        // Deflate: B <- B - lambda v v^T.
        for i in 0..d {
            for j in 0..d {
                let upd = deflated.get(i, j) - lambda * v[i] * v[j];
                deflated.set(i, j, upd);
            }
        }
        values.push(lambda);
        basis.push(v);
    }

    // Deflation order already gives non-increasing values up to rounding on
    // clustered spectra; enforce the ordering invariant exactly.
    let mut order: Vec<usize> = (0..r).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).unwrap());
    let sorted_values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let mut vectors = Matrix::zeros(d, r);
    for (col, &i) in order.iter().enumerate() {
        for row in 0..d {
            vectors.set(row, col, basis[i][row]);
        }
    }

    Ok(EigenResult {
        values: sorted_values,
        vectors,
    })
}

/// Dominant eigenpair of `b` restricted to the orthogonal complement of
/// `found`. The iterated operator is `P B P` for the complement projector P,
/// so earlier deflation rounding does not floor the attainable residual.
fn dominant_pair(b: &Matrix, found: &[Vec<f64>], scale: f64) -> Result<(f64, Vec<f64>)> {
    let d = b.rows();
    let mut v = starting_vector(d, found);

    let mut last_residual = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        // v is kept in the complement, so P B P v == P B v.
        let mut w = b.matvec(&v).expect("shape fixed");
        orthogonalize(&mut w, found);
        let lambda = dot(&v, &w);
        let residual = w
            .iter()
            .zip(&v)
            .map(|(&wi, &vi)| {
                let r = wi - lambda * vi;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        if residual <= RESIDUAL_TOL * lambda.abs().max(1.0) {
            return Ok((lambda, v));
        }
        last_residual = residual;
        let norm = l2(&w);
        if norm <= scale * 1e-300 {
            // Annihilated direction: v is an exact null vector of P B P.
            return Ok((0.0, v));
        }
        for x in &mut w {
            *x /= norm;
        }
        v = w;
    }
    Err(CoreError::Convergence {
        iterations: MAX_ITERS,
        residual: last_residual,
    })
}

/// Deterministic start: the all-ones direction, falling back to coordinate
/// axes when the candidate collapses under orthogonalization.
fn starting_vector(d: usize, found: &[Vec<f64>]) -> Vec<f64> {
    let mut candidates: Vec<Vec<f64>> = Vec::with_capacity(d + 1);
    candidates.push(vec![1.0 / (d as f64).sqrt(); d]);
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        candidates.push(e);
    }
    for mut c in candidates {
        orthogonalize(&mut c, found);
        let n = l2(&c);
        if n > 1e-8 {
            for x in &mut c {
                *x /= n;
            }
            return c;
        }
    }
    unreachable!("fewer than d orthonormal vectors cannot annihilate all of R^d")
}

fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for u in basis {
        let c = dot(v, u);
        for (x, &ui) in v.iter_mut().zip(u) {
            *x -= c * ui;
        }
    }
}

fn l2(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}
