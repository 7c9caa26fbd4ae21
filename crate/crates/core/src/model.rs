//! Generating model, datasets and the error metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{distance, norm, GaussianStream};

/// True location parameter `θ*` and noise scale `σ*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    theta_star: Vec<f64>,
    sigma_star: f64,
}

impl GroundTruth {
    pub fn new(theta_star: Vec<f64>, sigma_star: f64) -> Result<Self> {
        if theta_star.is_empty() {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if !(sigma_star > 0.0) || !sigma_star.is_finite() {
            return Err(Error::invalid(format!(
                "sigma_star must be positive, got {sigma_star}"
            )));
        }
        if theta_star.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("theta_star must be finite"));
        }
        Ok(GroundTruth {
            theta_star,
            sigma_star,
        })
    }

    /// Known-variance truth (`σ* = 1`).
    pub fn with_unit_noise(theta_star: Vec<f64>) -> Result<Self> {
        Self::new(theta_star, 1.0)
    }

    /// `θ* = snr · e₁` in dimension `d`, unit noise.
    pub fn on_first_axis(d: usize, snr: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        let mut theta = vec![0.0; d];
        theta[0] = snr;
        Self::new(theta, 1.0)
    }

    pub fn theta_star(&self) -> &[f64] {
        &self.theta_star
    }

    pub fn sigma_star(&self) -> f64 {
        self.sigma_star
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }

    pub fn snr(&self) -> f64 {
        norm(&self.theta_star) / self.sigma_star
    }
}

/// Covariates and responses: everything an estimator is allowed to see.
#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    dim: usize,
    /// Row-major `n × d`.
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Observations {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be at least 1"));
        }
        if y.is_empty() {
            return Err(Error::invalid("dataset must contain at least one sample"));
        }
        if x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch {
                expected: y.len() * dim,
                got: x.len(),
            });
        }
        Ok(Observations { dim, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.dim).zip(self.y.iter().copied())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Observations plus the latent labels used to generate them.
///
/// Estimators take [`Observations`]; the labels are reachable only through
/// [`Dataset::hidden_labels`], which no estimator signature accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Observations,
    hidden_labels: Vec<i8>,
}

impl Dataset {
    pub fn observations(&self) -> &Observations {
        &self.observations
    }

    pub fn into_observations(self) -> Observations {
        self.observations
    }

    /// Latent component sign `ν ∈ {−1, +1}` per row, for diagnostics only.
    pub fn hidden_labels(&self) -> &[i8] {
        &self.hidden_labels
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.observations.dim()
    }
}

/// Draws `n` samples `Y = ν·Xᵀθ* + σ*·Z`.
///
/// Each row consumes, in order, `d` covariate normals, one sign and one noise
/// normal from a single ChaCha stream seeded by `seed`.
pub fn generate_dataset(truth: &GroundTruth, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    let d = truth.dim();
    let mut stream = GaussianStream::new(seed);
    let mut x = vec![0.0; n * d];
    let mut y = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for row in x.chunks_exact_mut(d) {
        stream.fill(row);
        let nu = stream.next_sign();
        let z = stream.next_normal();
        let signal: f64 = row.iter().zip(truth.theta_star()).map(|(a, b)| a * b).sum();
        y.push(f64::from(nu) * signal + truth.sigma_star() * z);
        labels.push(nu);
    }
    Ok(Dataset {
        observations: Observations { dim: d, x, y },
        hidden_labels: labels,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrRegime {
    High,
    Middle,
    Low,
}

/// Sample-size-relative regime: `Low` if `‖θ*‖ ≤ c0·(d/n)^{1/4}`, `High` if
/// `‖θ*‖ ≥ 1`, `Middle` otherwise. `Low` wins when both apply.
pub fn classify_snr_regime(truth: &GroundTruth, n: usize, c0: f64) -> Result<SnrRegime> {
    if n == 0 || !(c0 > 0.0) {
        return Err(Error::invalid("classification needs n ≥ 1 and c0 > 0"));
    }
    let snr = truth.snr();
    let low_cut = c0 * (truth.dim() as f64 / n as f64).powf(0.25);
    Ok(if snr <= low_cut {
        SnrRegime::Low
    } else if snr >= 1.0 {
        SnrRegime::High
    } else {
        SnrRegime::Middle
    })
}

/// `min(‖θ − θ*‖, ‖θ + θ*‖)`; the mixture cannot tell `θ*` from `−θ*`.
pub fn residual_error(theta: &[f64], truth: &GroundTruth) -> Result<f64> {
    check_dim(theta, truth)?;
    let ts = truth.theta_star();
    let minus = distance(theta, ts);
    let plus = theta
        .iter()
        .zip(ts)
        .map(|(a, b)| (a + b) * (a + b))
        .sum::<f64>()
        .sqrt();
    Ok(minus.min(plus))
}

/// Plain `‖θ − θ*‖`, appropriate when the run starts next to `+θ*`.
pub fn signed_error(theta: &[f64], truth: &GroundTruth) -> Result<f64> {
    check_dim(theta, truth)?;
    Ok(distance(theta, truth.theta_star()))
}

fn check_dim(theta: &[f64], truth: &GroundTruth) -> Result<()> {
    if theta.len() != truth.dim() {
        return Err(Error::DimensionMismatch {
            expected: truth.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}
