//! Population EM operators evaluated by quadrature in the plane spanned by
//! `θ` and `θ*`, plus the diagnostics built on them.
//!
//! Writing `v₁ = θ/‖θ‖` and `v₂` for the unit vector completing `θ*` in that
//! plane, `y | x₁ ~ N(x₁b₁*, σ₂²)` with `b₁* = θ*ᵀv₁`, `b₂* = θ*ᵀv₂` and
//! `σ₂² = 1 + b₂*²`, so every expectation reduces to two dimensions.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::em::fmt_f64;
use crate::error::{Error, Result};
use crate::numerics::{cosine, distance, dot, norm, GaussianStream, QuadratureRule};

/// Largest `‖θ‖` or `‖θ*‖` the quadrature oracle accepts.
pub const MAX_NORM: f64 = 25.0;
/// Smallest admissible `1 + ‖θ*‖² − ‖θ‖²` for the unknown-variance operator.
pub const MIN_DENOMINATOR: f64 = 0.05;
/// Lowest quadrature order accepted by the operators.
pub const MIN_OPERATOR_ORDER: usize = 16;
/// Lowest quadrature order accepted by the diagnostics.
pub const MIN_DIAGNOSTIC_ORDER: usize = 32;
/// Growth constant of the small-norm lower bound `‖θ‖(1 + d₁·min{1, ‖θ‖²})`.
pub const GROWTH_D1: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PopulationVariant {
    KnownVariance,
    UnknownVariance,
}

/// Reduced coordinates of a `(θ, θ*)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformedCoords {
    pub norm_theta: f64,
    pub b1_star: f64,
    pub b2_star: f64,
    pub sigma2_sq: f64,
    v1: Vec<f64>,
    /// Zero when `θ*` lies on the `v₁` axis.
    v2: Vec<f64>,
}

impl TransformedCoords {
    pub fn new(theta: &[f64], theta_star: &[f64]) -> Result<Self> {
        if theta.len() != theta_star.len() {
            return Err(Error::DimensionMismatch {
                expected: theta_star.len(),
                got: theta.len(),
            });
        }
        if theta.is_empty() {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let d = theta.len();
        let norm_theta = norm(theta);
        let norm_star = norm(theta_star);
        let v1: Vec<f64> = if norm_theta > 0.0 {
            theta.iter().map(|v| v / norm_theta).collect()
        } else if norm_star > 0.0 {
            theta_star.iter().map(|v| v / norm_star).collect()
        } else {
            let mut e1 = vec![0.0; d];
            e1[0] = 1.0;
            e1
        };
        let b1_star = dot(theta_star, &v1);
        let perp: Vec<f64> = theta_star
            .iter()
            .zip(&v1)
            .map(|(s, v)| s - b1_star * v)
            .collect();
        let perp_norm = norm(&perp);
        // Treat round-off sized remainders as collinear.
        let (b2_star, v2) = if perp_norm > 1e-14 * norm_star.max(1.0) {
            (perp_norm, perp.iter().map(|p| p / perp_norm).collect())
        } else {
            (0.0, vec![0.0; d])
        };
        Ok(TransformedCoords {
            norm_theta,
            b1_star,
            b2_star,
            sigma2_sq: 1.0 + b2_star * b2_star,
            v1,
            v2,
        })
    }

    pub fn v1(&self) -> &[f64] {
        &self.v1
    }

    pub fn v2(&self) -> &[f64] {
        &self.v2
    }

    pub fn norm_theta_star(&self) -> f64 {
        self.b1_star.hypot(self.b2_star)
    }

    /// Cosine of the angle between `θ` and `θ*`.
    pub fn cos_alpha(&self) -> f64 {
        let ns = self.norm_theta_star();
        if ns == 0.0 {
            0.0
        } else {
            (self.b1_star / ns).clamp(-1.0, 1.0)
        }
    }

    /// `(E[y x₁ tanh(c y x₁)], E[y x₂ tanh(c y x₁)])`
    fn components(&self, c: f64, quad: &QuadratureRule) -> (f64, f64) {
        if c == 0.0 {
            return (0.0, 0.0);
        }
        let s2 = self.sigma2_sq.sqrt();
        let b1 = self.b1_star;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (x1, wx) in quad.pairs() {
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            for (w, ww) in quad.pairs() {
                let y = x1 * b1 + s2 * w;
                let t = (c * y * x1).tanh();
                a1 += ww * y * x1 * t;
                a2 += ww * y * t * w;
            }
            m1 += wx * a1;
            m2 += wx * a2;
        }
        // E[x₂ | x₁, y] = b₂*(y − x₁b₁*)/σ₂²
        (m1, self.b2_star / s2 * m2)
    }

    fn assemble(&self, m1: f64, m2: f64) -> Vec<f64> {
        self.v1
            .iter()
            .zip(&self.v2)
            .map(|(a, b)| m1 * a + m2 * b)
            .collect()
    }
}

fn check_inputs(
    theta: &[f64],
    theta_star: &[f64],
    quad: &QuadratureRule,
    min_order: usize,
) -> Result<TransformedCoords> {
    if quad.order() < min_order {
        return Err(Error::invalid(format!(
            "quadrature order {} below the required {min_order}",
            quad.order()
        )));
    }
    let coords = TransformedCoords::new(theta, theta_star)?;
    for n in [coords.norm_theta, norm(theta_star)] {
        if n > MAX_NORM {
            return Err(Error::Range { norm: n });
        }
    }
    Ok(coords)
}

/// Population EM operator `E[XY tanh(YXᵀθ)]` under unit noise.
pub fn pop_em_mlr(theta: &[f64], theta_star: &[f64], quad: &QuadratureRule) -> Result<Vec<f64>> {
    let coords = check_inputs(theta, theta_star, quad, MIN_OPERATOR_ORDER)?;
    let (m1, m2) = coords.components(coords.norm_theta, quad);
    Ok(coords.assemble(m1, m2))
}

/// Population operator of the joint `(θ, σ²)` iteration:
/// `E[XY tanh(YXᵀθ / (1 + ‖θ*‖² − ‖θ‖²))]`.
pub fn pop_em_unknown_variance(
    theta: &[f64],
    theta_star: &[f64],
    quad: &QuadratureRule,
) -> Result<Vec<f64>> {
    let coords = check_inputs(theta, theta_star, quad, MIN_OPERATOR_ORDER)?;
    let denom = 1.0 + dot(theta_star, theta_star) - coords.norm_theta * coords.norm_theta;
    if !(denom > MIN_DENOMINATOR) {
        return Err(Error::DenominatorTooSmall { value: denom });
    }
    let (m1, m2) = coords.components(coords.norm_theta / denom, quad);
    Ok(coords.assemble(m1, m2))
}

/// Monte Carlo estimate of a population operator with per-coordinate
/// standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct McEstimate {
    pub estimate: Vec<f64>,
    pub std_err: Vec<f64>,
}

/// Samples `(X, Y)` from the model with unit noise and averages
/// `XY tanh(YXᵀθ / s)`, with `s = 1` or `s = 1 + ‖θ*‖² − ‖θ‖²`.
pub fn mc_em_oracle(
    theta: &[f64],
    theta_star: &[f64],
    variant: PopulationVariant,
    samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if theta.len() != theta_star.len() {
        return Err(Error::DimensionMismatch {
            expected: theta_star.len(),
            got: theta.len(),
        });
    }
    if samples < 10_000 {
        return Err(Error::invalid(format!(
            "need at least 10^4 samples, got {samples}"
        )));
    }
    let d = theta.len();
    let scale = match variant {
        PopulationVariant::KnownVariance => 1.0,
        PopulationVariant::UnknownVariance => {
            let denom = 1.0 + dot(theta_star, theta_star) - dot(theta, theta);
            if !(denom > MIN_DENOMINATOR) {
                return Err(Error::DenominatorTooSmall { value: denom });
            }
            denom
        }
    };
    let mut stream = GaussianStream::new(seed);
    let mut x = vec![0.0; d];
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    for _ in 0..samples {
        stream.fill(&mut x);
        let nu = f64::from(stream.next_sign());
        let y = nu * dot(&x, theta_star) + stream.next_normal();
        let w = y * (y * dot(&x, theta) / scale).tanh();
        for k in 0..d {
            let f = w * x[k];
            sum[k] += f;
            sum_sq[k] += f * f;
        }
    }
    let n = samples as f64;
    let estimate: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = sum_sq
        .iter()
        .zip(&estimate)
        .map(|(sq, m)| ((sq / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt())
        .collect();
    Ok(McEstimate { estimate, std_err })
}

/// Angle contraction coefficient `(1 + min{σ₂²‖θ‖, ‖θ*‖cos α}²/σ₂²)^{-1/2}`.
fn angle_kappa(c: &TransformedCoords) -> f64 {
    let m = (c.sigma2_sq * c.norm_theta).min(c.b1_star);
    1.0 / (1.0 + m * m / c.sigma2_sq).sqrt()
}

/// One population step from `θ` with norm, angle and residual diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub norm_before: f64,
    pub norm_after: f64,
    pub cos_before: f64,
    pub cos_after: f64,
    /// `‖θ − θ*‖`
    pub residual_before: f64,
    /// `‖M(θ) − θ*‖`
    pub residual_after: f64,
    pub kappa: f64,
    /// `‖θ‖(1 − 4‖θ‖²)`, only when `θ* = 0`.
    pub null_lower: Option<f64>,
    /// `‖θ‖(1 − ‖θ‖²)`, only when `θ* = 0`.
    pub null_upper: Option<f64>,
    /// `(‖M‖/‖θ‖ − 1 + ‖θ‖²)/‖θ*‖²` when `θ*, θ ≠ 0`.
    pub implied_constant: Option<f64>,
    /// `‖θ‖(1 + 0.25·min{1, ‖θ‖²})`, only when `‖θ‖ ≤ ‖θ*‖/10`.
    pub growth_lower: Option<f64>,
    /// `‖M(θ) − θ*‖·‖θ*‖ / ‖θ − θ*‖²`, absent at `θ = θ*`.
    pub superlinear_ratio: Option<f64>,
}

pub fn contraction_diagnostics(
    theta: &[f64],
    theta_star: &[f64],
    quad: &QuadratureRule,
) -> Result<ContractionReport> {
    let coords = check_inputs(theta, theta_star, quad, MIN_DIAGNOSTIC_ORDER)?;
    let m = pop_em_mlr(theta, theta_star, quad)?;
    let nt = coords.norm_theta;
    let ns = norm(theta_star);
    let norm_after = norm(&m);
    let residual_before = distance(theta, theta_star);
    let residual_after = distance(&m, theta_star);
    let (null_lower, null_upper) = if ns == 0.0 {
        (Some(nt * (1.0 - 4.0 * nt * nt)), Some(nt * (1.0 - nt * nt)))
    } else {
        (None, None)
    };
    let implied_constant =
        (ns > 0.0 && nt > 0.0).then(|| (norm_after / nt - 1.0 + nt * nt) / (ns * ns));
    let growth_lower = (nt <= ns / 10.0).then(|| nt * (1.0 + GROWTH_D1 * (nt * nt).min(1.0)));
    let superlinear_ratio =
        (residual_before > 0.0).then(|| residual_after * ns / (residual_before * residual_before));
    Ok(ContractionReport {
        norm_before: nt,
        norm_after,
        cos_before: cosine(theta, theta_star),
        cos_after: cosine(&m, theta_star),
        residual_before,
        residual_after,
        kappa: angle_kappa(&coords),
        null_lower,
        null_upper,
        implied_constant,
        growth_lower,
        superlinear_ratio,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngleReport {
    pub cos_before: f64,
    pub cos_after: f64,
    /// Angle contraction coefficient.
    pub kappa: f64,
    /// `√(1 + sin²α/(cos²α + ½(1 + η⁻²)))`
    pub kappa_cos: f64,
    /// `(1 + 2η²cos²α/(1 + η²))⁻¹`
    pub kappa_prime: f64,
}

/// Angle between the iterate and `θ*` before and after one population step.
pub fn angle_dynamics(
    theta: &[f64],
    theta_star: &[f64],
    quad: &QuadratureRule,
) -> Result<AngleReport> {
    if norm(theta) == 0.0 || norm(theta_star) == 0.0 {
        return Err(Error::ZeroVector);
    }
    let coords = check_inputs(theta, theta_star, quad, MIN_OPERATOR_ORDER)?;
    let m = pop_em_mlr(theta, theta_star, quad)?;
    let cos = coords.cos_alpha();
    let cos_sq = cos * cos;
    let sin_sq = 1.0 - cos_sq;
    let eta_sq = dot(theta_star, theta_star);
    Ok(AngleReport {
        cos_before: cosine(theta, theta_star),
        cos_after: cosine(&m, theta_star),
        kappa: angle_kappa(&coords),
        kappa_cos: (1.0 + sin_sq / (cos_sq + 0.5 * (1.0 + 1.0 / eta_sq))).sqrt(),
        kappa_prime: 1.0 / (1.0 + 2.0 * eta_sq / (1.0 + eta_sq) * cos_sq),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaylorCheck {
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
    pub holds: bool,
}

/// `x² − x⁴/3 ≤ x·tanh(x) ≤ x² − x⁴/3 + 2x⁶/15`
pub fn taylor_bounds_check(x: f64) -> TaylorCheck {
    let x2 = x * x;
    let lower = x2 - x2 * x2 / 3.0;
    let upper = lower + 2.0 * x2 * x2 * x2 / 15.0;
    let value = x * x.tanh();
    let slack = 1e-15;
    TaylorCheck {
        lower,
        value,
        upper,
        holds: lower - slack <= value && value <= upper + slack,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteinCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
}

/// Evaluates both sides of the Stein identity for the `v₂` component by
/// separate quadratures.
///
/// Left: `E[tanh(y x₁‖θ‖) y x₂]` over `(x₁, x₂, z̄)` with
/// `y = x₁b₁* + x₂b₂* + z̄`. Right:
/// `b₂*·E[x₁² tanh(u) − ‖θ‖b₁* x₁² tanh′(u)]`, `u = x₁‖θ‖(z + x₁b₁*)`,
/// `z ~ N(0, 1 + b₂*²)`.
///
/// The integrand is smooth but not analytic across `x₁y = 0`, so tensor
/// Gauss-Hermite converges slowly here: at `‖θ*‖ = 2` a 64-node rule leaves
/// gaps near `1e-4` while 256 nodes bring them below `1e-7`.
pub fn stein_identity_check(
    theta: &[f64],
    theta_star: &[f64],
    quad: &QuadratureRule,
) -> Result<SteinCheck> {
    let coords = check_inputs(theta, theta_star, quad, MIN_OPERATOR_ORDER)?;
    let c = coords.norm_theta;
    let (b1, b2) = (coords.b1_star, coords.b2_star);
    let lhs = quad.expect(|x1| {
        quad.expect2(|x2, zbar| {
            let y = x1 * b1 + x2 * b2 + zbar;
            (c * y * x1).tanh() * y * x2
        })
    });
    let s2 = coords.sigma2_sq.sqrt();
    let rhs = b2
        * quad.expect(|x1| {
            quad.expect(|w| {
                let t = (x1 * c * (s2 * w + x1 * b1)).tanh();
                x1 * x1 * t - c * b1 * x1 * x1 * (1.0 - t * t)
            })
        });
    Ok(SteinCheck {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
    })
}

/// A point of the population-check grid, placed in the plane `(e₁, e₂)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopGridPoint {
    pub norm_theta: f64,
    pub norm_theta_star: f64,
    pub cos_alpha: f64,
}

impl PopGridPoint {
    /// `(θ, θ*)` with `θ* = ‖θ*‖e₁`.
    pub fn vectors(&self) -> (Vec<f64>, Vec<f64>) {
        let c = self.cos_alpha.clamp(-1.0, 1.0);
        let s = (1.0 - c * c).max(0.0).sqrt();
        (
            vec![self.norm_theta * c, self.norm_theta * s],
            vec![self.norm_theta_star, 0.0],
        )
    }
}

/// Default grid: the `θ* = 0` bracket points plus a sweep over
/// `‖θ*‖ × ‖θ‖ × cos α`.
pub fn default_pop_grid() -> Vec<PopGridPoint> {
    let mut grid = Vec::new();
    for nt in [0.01, 0.05, 0.1, 0.15, 0.2] {
        grid.push(PopGridPoint {
            norm_theta: nt,
            norm_theta_star: 0.0,
            cos_alpha: 1.0,
        });
    }
    for ns in [0.3, 1.0, 2.0, 5.0] {
        for rel in [0.05, 0.5, 0.9, 1.1] {
            for cos in [0.0, 0.5, 0.9, 1.0] {
                grid.push(PopGridPoint {
                    norm_theta: rel * ns,
                    norm_theta_star: ns,
                    cos_alpha: cos,
                });
            }
        }
    }
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopCheckRow {
    pub point: PopGridPoint,
    pub norm_after: f64,
    pub cos_after: f64,
    pub resid_after: f64,
    pub kappa: f64,
    pub l4_lower: Option<f64>,
    pub l4_upper: Option<f64>,
    pub l6_lower: Option<f64>,
    pub superlinear_ratio: Option<f64>,
    pub stein_gap: f64,
}

pub fn pop_check_point(point: PopGridPoint, quad: &QuadratureRule) -> Result<PopCheckRow> {
    let (theta, star) = point.vectors();
    let report = contraction_diagnostics(&theta, &star, quad)?;
    let stein = stein_identity_check(&theta, &star, quad)?;
    Ok(PopCheckRow {
        point,
        norm_after: report.norm_after,
        cos_after: report.cos_after,
        resid_after: report.residual_after,
        kappa: report.kappa,
        l4_lower: report.null_lower,
        l4_upper: report.null_upper,
        l6_lower: report.growth_lower,
        superlinear_ratio: report.superlinear_ratio,
        stein_gap: stein.gap,
    })
}

/// Evaluates every grid point; rows come back in grid order.
pub fn pop_check_grid(points: &[PopGridPoint], quad: &QuadratureRule) -> Result<Vec<PopCheckRow>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|p| pop_check_point(*p, quad))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(|p| pop_check_point(*p, quad)).collect()
    }
}

pub const POP_CHECK_HEADER: [&str; 12] = [
    "norm_theta",
    "norm_theta_star",
    "cos_alpha",
    "norm_after",
    "cos_after",
    "resid_after",
    "kappa",
    "l4_lower",
    "l4_upper",
    "l6_lower",
    "superlinear_ratio",
    "stein_gap",
];

/// Writes rows under [`POP_CHECK_HEADER`]; absent bounds are empty fields.
pub fn write_pop_check_csv<W: Write>(rows: &[PopCheckRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| Error::invalid(format!("pop-check serialization failed: {e}"));
    w.write_record(POP_CHECK_HEADER).map_err(err)?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            fmt_f64(r.point.norm_theta),
            fmt_f64(r.point.norm_theta_star),
            fmt_f64(r.point.cos_alpha),
            fmt_f64(r.norm_after),
            fmt_f64(r.cos_after),
            fmt_f64(r.resid_after),
            fmt_f64(r.kappa),
            opt(r.l4_lower),
            opt(r.l4_upper),
            opt(r.l6_lower),
            opt(r.superlinear_ratio),
            fmt_f64(r.stein_gap),
        ])
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| Error::invalid(format!("pop-check flush failed: {e}")))?;
    Ok(())
}
