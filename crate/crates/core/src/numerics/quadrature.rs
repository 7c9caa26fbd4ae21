use crate::error::{Error, Result};

pub const MIN_ORDER: usize = 2;
pub const MAX_ORDER: usize = 256;

/// Gauss–Hermite rule normalized for expectations under `N(0, 1)`.
///
/// `rule.expect(f)` approximates `E[f(Z)]`; a rule of order `m` is exact for
/// polynomials of degree up to `2m − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes in strictly increasing order.
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.pairs().map(|(z, w)| w * f(z)).sum()
    }

    /// `E[f(Z₁, Z₂)]` for independent standard normals via the tensor rule.
    pub fn expect2(&self, f: impl Fn(f64, f64) -> f64) -> f64 {
        self.pairs()
            .map(|(z1, w1)| w1 * self.pairs().map(|(z2, w2)| w2 * f(z1, z2)).sum::<f64>())
            .sum()
    }

    /// `E[f(Z₁, Z₂, Z₃)]` for independent standard normals.
    pub fn expect3(&self, f: impl Fn(f64, f64, f64) -> f64) -> f64 {
        self.pairs()
            .map(|(z1, w1)| w1 * self.expect2(|z2, z3| f(z1, z2, z3)))
            .sum()
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        gauss_hermite_rule(64).expect("order 64 is in range")
    }
}

/// Probabilists' Gauss–Hermite rule of the given order (2 ≤ order ≤ 256).
///
/// Nodes are the eigenvalues of the Jacobi matrix of the probabilists'
/// Hermite polynomials (zero diagonal, off-diagonal `√k`), located by Sturm
/// bisection and polished with one Newton step. Weights follow from the
/// Christoffel numbers `1/Σₖ pₖ(x)²` of the orthonormal polynomials. Nodes
/// are mirrored so the rule is exactly symmetric.
pub fn gauss_hermite_rule(order: usize) -> Result<QuadratureRule> {
    if !(MIN_ORDER..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "quadrature order {order} outside [{MIN_ORDER}, {MAX_ORDER}]"
        )));
    }
    let m = order;
    let bound = 2.0 * (m as f64).sqrt();
    let half = m / 2;
    // Positive roots, largest first: root j has exactly m − 1 − j eigenvalues below it.
    let mut positive = Vec::with_capacity(half);
    for j in 0..half {
        let rank = m - 1 - j;
        let (mut lo, mut hi) = (0.0, bound);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if eigenvalues_below(m, mid) > rank {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        let (p_m, p_prev) = orthonormal_pair(m, x);
        let step = p_m / ((m as f64).sqrt() * p_prev);
        positive.push(if step.abs() < hi - lo + 1e-12 * x {
            x - step
        } else {
            x
        });
    }
    let mut nodes: Vec<f64> = positive.iter().map(|x| -x).collect();
    if m % 2 == 1 {
        nodes.push(0.0);
    }
    nodes.extend(positive.iter().rev());
    let mut weights: Vec<f64> = nodes.iter().map(|&x| 1.0 / christoffel_sum(m, x)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(QuadratureRule { nodes, weights })
}

/// Number of eigenvalues of the order-`m` Jacobi matrix below `x`.
fn eigenvalues_below(m: usize, x: f64) -> usize {
    let mut count = 0;
    let mut d = -x;
    for k in 1..=m {
        if d == 0.0 {
            d = -f64::EPSILON * (1.0 + x.abs());
        }
        if d < 0.0 {
            count += 1;
        }
        if k == m {
            break;
        }
        d = -x - k as f64 / d;
    }
    count
}

/// `(p_m(x), p_{m−1}(x))` for the orthonormal probabilists' Hermite family.
fn orthonormal_pair(m: usize, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (0.0, 1.0);
    for k in 0..m {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `Σ_{k<m} p_k(x)²`
fn christoffel_sum(m: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (0.0, 1.0);
    let mut sum = 1.0;
    for k in 0..m - 1 {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
        sum += cur * cur;
    }
    sum
}
