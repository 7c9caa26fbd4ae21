//! Numerical kernels shared by the estimators and the population oracle.

mod linalg;
mod quadrature;
mod rng;

pub use linalg::{spd_solve, top_eigenpair, Cholesky, EigenPair, SymMatrix};
pub use quadrature::{gauss_hermite_rule, QuadratureRule, MAX_ORDER, MIN_ORDER};
pub use rng::{mix_seed, random_unit_vector, GaussianStream};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Cosine of the angle between two vectors; 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        0.0
    } else {
        (dot(a, b) / denom).clamp(-1.0, 1.0)
    }
}
