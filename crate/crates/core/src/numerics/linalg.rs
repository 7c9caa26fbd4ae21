use crate::error::{Error, Result};
use crate::numerics::{dot, norm, GaussianStream};

/// Dense symmetric matrix stored row-major.
///
/// Symmetry is enforced at construction. Positive definiteness is only
/// checked when a factorization is requested.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatrix {
    dim: usize,
    data: Vec<f64>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl SymMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("matrix dimension must be at least 1"));
        }
        if data.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                got: data.len(),
            });
        }
        let scale = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (data[i * dim + j], data[j * dim + i]);
                if (a - b).abs() > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
                    return Err(Error::invalid(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        Ok(SymMatrix { dim, data })
    }

    pub fn identity(dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            data[i * dim + i] = 1.0;
        }
        SymMatrix { dim, data }
    }

    /// Builds a matrix from the upper triangle of `f(i, j)`, mirroring it.
    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let v = f(i, j);
                data[i * dim + j] = v;
                data[j * dim + i] = v;
            }
        }
        SymMatrix { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.dim)
            .map(|row| dot(row, v))
            .collect()
    }

    fn frobenius(&self) -> f64 {
        norm(&self.data)
    }

    pub fn cholesky(&self) -> Result<Cholesky> {
        Cholesky::factor(self)
    }
}

/// Lower-triangular factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    /// Fails when a pivot drops to `1e-12 · trace(A) / d` or below.
    pub fn factor(a: &SymMatrix) -> Result<Self> {
        let n = a.dim;
        let floor = 1e-12 * a.trace() / n as f64;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut diag = a.get(j, j);
            for k in 0..j {
                diag -= l[j * n + k] * l[j * n + k];
            }
            if !(diag > floor) || diag <= 0.0 {
                return Err(Error::NotPositiveDefinite {
                    row: j,
                    pivot: diag,
                });
            }
            let ljj = diag.sqrt();
            l[j * n + j] = ljj;
            for i in (j + 1)..n {
                let mut s = a.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / ljj;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim;
        let l = &self.lower;
        for i in 0..n {
            let mut s = x[i];
            for k in 0..i {
                s -= l[i * n + k] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in (i + 1)..n {
                s -= l[k * n + i] * x[k];
            }
            x[i] = s / l[i * n + i];
        }
    }
}

pub fn spd_solve(a: &SymMatrix, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != a.dim {
        return Err(Error::DimensionMismatch {
            expected: a.dim,
            got: b.len(),
        });
    }
    Ok(a.cholesky()?.solve(b))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    /// Unit vector whose largest-magnitude entry is positive.
    pub vector: Vec<f64>,
}

/// Largest (algebraic) eigenvalue of a symmetric matrix and its eigenvector.
///
/// The matrix is shifted to be positive semidefinite and then raised to
/// successive powers `B, B², B⁴, …` by repeated squaring, which is power
/// iteration run at doubling speed; each squaring counts as one iteration.
/// A few ordinary power steps polish the vector before the residual test
/// `‖Av − λv‖ ≤ tol·max(1, |λ|)`.
pub fn top_eigenpair(a: &SymMatrix, tol: f64, max_iters: usize, seed: u64) -> Result<EigenPair> {
    let n = a.dim;
    if !(tol > 0.0) {
        return Err(Error::invalid("eigen tolerance must be positive"));
    }
    let scale = a.frobenius();
    if scale == 0.0 {
        let mut v = vec![0.0; n];
        v[0] = 1.0;
        return Ok(EigenPair {
            value: 0.0,
            vector: v,
        });
    }
    // Gershgorin lower bound on the spectrum
    let lowest = (0..n)
        .map(|i| {
            let off: f64 = (0..n).filter(|&j| j != i).map(|j| a.get(i, j).abs()).sum();
            a.get(i, i) - off
        })
        .fold(f64::INFINITY, f64::min);
    // The margin keeps the shifted matrix nonzero when `a` is a negative multiple of I.
    let shift = (0.01 * scale - lowest).max(0.0);
    let shifted = SymMatrix::from_fn(n, |i, j| a.get(i, j) + if i == j { shift } else { 0.0 });

    let mut start = vec![0.0; n];
    GaussianStream::new(seed).fill(&mut start);

    let mut power = shifted.data.clone();
    rescale(&mut power);
    let mut residual = f64::INFINITY;
    let mut iters = 0;
    for iter in 1..=max_iters {
        power = square(&power, n);
        if !rescale(&mut power) {
            break;
        }
        let mut v = project(&power, &start, n);
        for _ in 0..3 {
            let w = shifted.matvec(&v);
            let len = norm(&w);
            if len == 0.0 {
                break;
            }
            v = w.into_iter().map(|x| x / len).collect();
        }
        let av = a.matvec(&v);
        let value = dot(&v, &av);
        residual = av
            .iter()
            .zip(&v)
            .map(|(x, y)| (x - value * y).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= tol * value.abs().max(1.0) {
            canonicalize_sign(&mut v);
            return Ok(EigenPair { value, vector: v });
        }
        iters = iter;
    }
    Err(Error::NoConvergence { iters, residual })
}

fn square(p: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let s: f64 = (0..n).map(|k| p[i * n + k] * p[k * n + j]).sum();
            out[i * n + j] = s;
            out[j * n + i] = s;
        }
    }
    out
}

fn rescale(p: &mut [f64]) -> bool {
    let f = norm(p);
    if f == 0.0 || !f.is_finite() {
        return false;
    }
    p.iter_mut().for_each(|x| *x /= f);
    true
}

/// Applies the (near-projector) power to the start vector, falling back to the
/// dominant column when the start is nearly orthogonal to the top eigenspace.
fn project(power: &[f64], start: &[f64], n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = power.chunks_exact(n).map(|row| dot(row, start)).collect();
    let len = norm(&v);
    if len < 1e-8 * norm(start) {
        let best = (0..n)
            .max_by(|&i, &j| {
                let ci: f64 = (0..n).map(|k| power[k * n + i].powi(2)).sum();
                let cj: f64 = (0..n).map(|k| power[k * n + j].powi(2)).sum();
                ci.total_cmp(&cj)
            })
            .unwrap_or(0);
        v = (0..n).map(|k| power[k * n + best]).collect();
    }
    let len = norm(&v);
    v.iter_mut().for_each(|x| *x /= len);
    v
}

fn canonicalize_sign(v: &mut [f64]) {
    let lead = v
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()))
        .unwrap_or(0.0);
    if lead < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_system() {
        let x = spd_solve(&SymMatrix::identity(3), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn two_by_two_hand_elimination() {
        let a = SymMatrix::new(2, vec![2.0, 1.0, 1.0, 2.0]).unwrap();
        let x = spd_solve(&a, &[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(x[0], 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(x[1], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = SymMatrix::new(2, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            spd_solve(&a, &[1.0, 1.0]),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn asymmetric_input_rejected() {
        assert!(SymMatrix::new(2, vec![1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(matches!(
            SymMatrix::new(2, vec![1.0; 3]),
            Err(Error::DimensionMismatch {
                expected: 4,
                got: 3
            })
        ));
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = spd_solve(&SymMatrix::identity(2), &[1.0]).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn diagonal_top_pair() {
        let a = SymMatrix::new(2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let p = top_eigenpair(&a, 1e-12, 100, 1).unwrap();
        assert_abs_diff_eq!(p.value, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.vector[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.vector[1], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rank_one_update_spectrum() {
        // I + 2θθᵀ with θ = e₁ has spectrum {3, 1}
        let a = SymMatrix::from_fn(2, |i, j| {
            let t = [1.0, 0.0];
            (if i == j { 1.0 } else { 0.0 }) + 2.0 * t[i] * t[j]
        });
        let p = top_eigenpair(&a, 1e-12, 100, 9).unwrap();
        assert_abs_diff_eq!(p.value, 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.vector[0], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn indefinite_matrix_picks_largest_algebraic() {
        let a = SymMatrix::new(2, vec![-5.0, 0.0, 0.0, 1.0]).unwrap();
        let p = top_eigenpair(&a, 1e-12, 100, 3).unwrap();
        assert_abs_diff_eq!(p.value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p.vector[1], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn repeated_eigenvalue_converges() {
        let p = top_eigenpair(&SymMatrix::identity(4), 1e-12, 100, 5).unwrap();
        assert_abs_diff_eq!(p.value, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(norm(&p.vector), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_iteration_budget_reports_no_convergence() {
        let a = SymMatrix::new(2, vec![2.0, 0.3, 0.3, 1.0]).unwrap();
        assert!(matches!(
            top_eigenpair(&a, 1e-12, 0, 0),
            Err(Error::NoConvergence { .. })
        ));
    }
}
