//! Initialization schemes: spectral, random direction on a sphere, and a
//! small perturbation of the truth.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroundTruth, Observations};
use crate::numerics::{norm, random_unit_vector, top_eigenpair, SymMatrix};

/// Minimum norm of a spectral initializer.
pub const SPECTRAL_FLOOR: f64 = 0.2;
/// Default radius factor of [`perturbed_truth_init`].
pub const DEFAULT_PERTURB_REL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "kebab-case")]
pub enum InitScheme {
    Spectral,
    RandomSphere { norm: f64 },
    PerturbedTruth { rel: f64 },
}

impl Default for InitScheme {
    fn default() -> Self {
        InitScheme::RandomSphere { norm: 1.0 }
    }
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Spectral => Ok(()),
            InitScheme::RandomSphere { norm } if norm > 0.0 && norm.is_finite() => Ok(()),
            InitScheme::PerturbedTruth { rel } if rel > 0.0 && rel.is_finite() => Ok(()),
            other => Err(Error::invalid(format!(
                "{other} needs a positive finite parameter"
            ))),
        }
    }
}

/// Accepts `spectral`, `sphere`, `sphere:NORM`, `perturb` and `perturb:REL`.
impl FromStr for InitScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let value = |default: f64| -> Result<f64> {
            arg.map_or(Ok(default), |a| {
                a.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad init parameter `{a}`")))
            })
        };
        let scheme = match name {
            "spectral" if arg.is_none() => InitScheme::Spectral,
            "sphere" => InitScheme::RandomSphere { norm: value(1.0)? },
            "perturb" => InitScheme::PerturbedTruth {
                rel: value(DEFAULT_PERTURB_REL)?,
            },
            _ => {
                return Err(Error::invalid(format!(
                    "unknown init `{s}` (expected spectral, sphere:NORM or perturb)"
                )))
            }
        };
        scheme.validate()?;
        Ok(scheme)
    }
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Spectral => f.write_str("spectral"),
            InitScheme::RandomSphere { norm } => write!(f, "sphere:{norm}"),
            InitScheme::PerturbedTruth { rel } if *rel == DEFAULT_PERTURB_REL => {
                f.write_str("perturb")
            }
            InitScheme::PerturbedTruth { rel } => write!(f, "perturb:{rel}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    pub theta0: Vec<f64>,
    /// Raw top eigenvalue, an estimate of `‖θ*‖²`.
    pub lambda1: f64,
    /// Unit top eigenvector with canonical sign.
    pub v1: Vec<f64>,
    /// Set when `n < d`, where the moment matrix is too noisy to trust.
    pub low_confidence: bool,
}

/// Top eigenpair of `((1/n) Σ yᵢ² xᵢxᵢᵀ − ȳ² I) / 2`, where `ȳ²` is the mean of `yᵢ²`.
///
/// By Isserlis' theorem `E[Y²XXᵀ] = (1 + ‖θ*‖²) I + 2θ*θ*ᵀ`, so this matrix
/// estimates `θ*θ*ᵀ`: its top eigenvalue estimates `‖θ*‖²` and its top
/// eigenvector the direction of `θ*`. Returns
/// `θ⁰ = max{0.2, √max(λ₁, 0)}·v₁`.
pub fn spectral_init(obs: &Observations, seed: u64) -> Result<SpectralInit> {
    let d = obs.dim();
    let n = obs.len() as f64;
    let mut acc = vec![0.0; d * d];
    let mut y_sq_sum = 0.0;
    for (x, y) in obs.rows() {
        let y2 = y * y;
        y_sq_sum += y2;
        for i in 0..d {
            let a = y2 * x[i];
            for j in i..d {
                acc[i * d + j] += a * x[j];
            }
        }
    }
    let mean_y_sq = y_sq_sum / n;
    let m = SymMatrix::from_fn(d, |i, j| {
        let diag = if i == j { mean_y_sq } else { 0.0 };
        0.5 * (acc[i * d + j] / n - diag)
    });
    let pair = top_eigenpair(&m, 1e-10, 10_000, seed)?;
    let scale = SPECTRAL_FLOOR.max(pair.value.max(0.0).sqrt());
    Ok(SpectralInit {
        theta0: pair.vector.iter().map(|v| scale * v).collect(),
        lambda1: pair.value,
        v1: pair.vector,
        low_confidence: obs.len() < d,
    })
}

/// Uniform direction scaled to `norm`.
pub fn random_sphere_init(d: usize, norm: f64, seed: u64) -> Result<Vec<f64>> {
    if d == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::invalid(format!(
            "sphere norm must be positive, got {norm}"
        )));
    }
    Ok(random_unit_vector(d, seed)
        .into_iter()
        .map(|v| norm * v)
        .collect())
}

/// `θ* + r·u` with `r = rel·max{1, ‖θ*‖}` and `u` uniform on the sphere.
pub fn perturbed_truth_init(truth: &GroundTruth, rel: f64, seed: u64) -> Result<Vec<f64>> {
    if !(rel > 0.0) || !rel.is_finite() {
        return Err(Error::invalid(format!(
            "perturbation must be positive, got {rel}"
        )));
    }
    let r = rel * norm(truth.theta_star()).max(1.0);
    Ok(random_unit_vector(truth.dim(), seed)
        .into_iter()
        .zip(truth.theta_star())
        .map(|(u, t)| t + r * u)
        .collect())
}

/// Applies a scheme. `truth` is required only by `PerturbedTruth`.
pub fn initialize(
    scheme: &InitScheme,
    obs: &Observations,
    truth: Option<&GroundTruth>,
    seed: u64,
) -> Result<Vec<f64>> {
    match *scheme {
        InitScheme::Spectral => Ok(spectral_init(obs, seed)?.theta0),
        InitScheme::RandomSphere { norm } => random_sphere_init(obs.dim(), norm, seed),
        InitScheme::PerturbedTruth { rel } => {
            let truth = truth
                .ok_or_else(|| Error::invalid("perturbed-truth init needs the true parameter"))?;
            perturbed_truth_init(truth, rel, seed)
        }
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::model::generate_dataset;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn spectral_norm_respects_floor(seed in any::<u64>(), snr in 0.0f64..2.0, n in 5usize..300) {
            let truth = GroundTruth::on_first_axis(3, snr).unwrap();
            let ds = generate_dataset(&truth, n, seed).unwrap();
            let s = spectral_init(ds.observations(), seed).unwrap();
            let nrm = norm(&s.theta0);
            prop_assert!(nrm >= 0.2 - 1e-15);
            if s.lambda1 >= 0.04 {
                prop_assert!((nrm - s.lambda1.sqrt()).abs() < 1e-12);
            }
            prop_assert_eq!(s, spectral_init(ds.observations(), seed).unwrap());
        }

        #[test]
        fn schemes_are_deterministic(seed in any::<u64>(), d in 1usize..8) {
            prop_assert_eq!(random_sphere_init(d, 1.0, seed).unwrap(), random_sphere_init(d, 1.0, seed).unwrap());
            let truth = GroundTruth::on_first_axis(d, 0.5).unwrap();
            prop_assert_eq!(perturbed_truth_init(&truth, 0.1, seed).unwrap(), perturbed_truth_init(&truth, 0.1, seed).unwrap());
        }
    }
}
