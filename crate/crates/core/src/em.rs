//! Finite-sample EM operators and the iteration drivers.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{residual_error, GroundTruth, Observations};
use crate::numerics::{cosine, distance, dot, norm, Cholesky, SymMatrix};

/// Floor below which an unknown-variance update aborts.
pub const MIN_SIGMA_SQ: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmVariant {
    Standard,
    Easy,
    #[serde(rename = "unknown-var")]
    UnknownVariance,
}

impl FromStr for EmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "standard" => Ok(EmVariant::Standard),
            "easy" => Ok(EmVariant::Easy),
            "unknown-var" | "unknown-variance" => Ok(EmVariant::UnknownVariance),
            other => Err(Error::invalid(format!(
                "unknown EM variant `{other}` (expected standard, easy or unknown-var)"
            ))),
        }
    }
}

impl fmt::Display for EmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmVariant::Standard => "standard",
            EmVariant::Easy => "easy",
            EmVariant::UnknownVariance => "unknown-var",
        })
    }
}

/// Current iterate. `sigma_sq` stays at 1 unless the variance is estimated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmState {
    pub theta: Vec<f64>,
    pub sigma_sq: f64,
    pub iter: usize,
}

impl EmState {
    pub fn new(theta: Vec<f64>) -> Self {
        EmState {
            theta,
            sigma_sq: 1.0,
            iter: 0,
        }
    }

    pub fn with_sigma_sq(theta: Vec<f64>, sigma_sq: f64) -> Self {
        EmState {
            theta,
            sigma_sq,
            iter: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    pub variant: EmVariant,
    pub tol: f64,
    pub max_iters: usize,
    pub record_trajectory: bool,
    /// Easy-EM warm-up length used by [`two_phase_run`].
    pub phase1_iters: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            variant: EmVariant::Standard,
            tol: 1e-4,
            max_iters: 20_000,
            record_trajectory: false,
            phase1_iters: 0,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Converged,
    MaxItersReached,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Init,
    Warmup,
    Main,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Init => "init",
            Phase::Warmup => "warmup",
            Phase::Main => "main",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iter: usize,
    pub norm_theta: f64,
    pub err: Option<f64>,
    pub cos_angle: Option<f64>,
    pub step_size: Option<f64>,
    pub sigma_sq: Option<f64>,
    pub phase: Phase,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    pub records: Vec<TraceRecord>,
}

impl EmTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// CSV with header `iter,norm_theta,err,cos_angle,step_size,sigma_sq,phase`;
    /// absent values are empty fields.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::invalid(format!("trace serialization failed: {e}"));
        w.write_record([
            "iter",
            "norm_theta",
            "err",
            "cos_angle",
            "step_size",
            "sigma_sq",
            "phase",
        ])
        .map_err(io)?;
        let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
        for r in &self.records {
            w.write_record([
                r.iter.to_string(),
                fmt_f64(r.norm_theta),
                opt(r.err),
                opt(r.cos_angle),
                opt(r.step_size),
                opt(r.sigma_sq),
                r.phase.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()
            .map_err(|e| Error::invalid(format!("trace flush failed: {e}")))?;
        Ok(())
    }
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmOutcome {
    pub state: EmState,
    pub trace: EmTrace,
    pub status: RunStatus,
}

/// `(1/n) Σ tanh(yᵢxᵢᵀθ / σ²) yᵢxᵢ`
fn weighted_moment(obs: &Observations, theta: &[f64], sigma_sq: f64) -> Vec<f64> {
    let mut acc = vec![0.0; obs.dim()];
    for (x, y) in obs.rows() {
        let w = (y * dot(x, theta) / sigma_sq).tanh() * y;
        for (a, xi) in acc.iter_mut().zip(x) {
            *a += w * xi;
        }
    }
    let n = obs.len() as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    acc
}

/// `(1/n) Σ xᵢxᵢᵀ`
pub fn sample_covariance(obs: &Observations) -> SymMatrix {
    let d = obs.dim();
    let mut acc = vec![0.0; d * d];
    for (x, _) in obs.rows() {
        for i in 0..d {
            for j in i..d {
                acc[i * d + j] += x[i] * x[j];
            }
        }
    }
    let n = obs.len() as f64;
    SymMatrix::from_fn(d, |i, j| acc[i * d + j] / n)
}

fn check_dim(obs: &Observations, theta: &[f64]) -> Result<()> {
    if theta.len() != obs.dim() {
        return Err(Error::DimensionMismatch {
            expected: obs.dim(),
            got: theta.len(),
        });
    }
    Ok(())
}

fn mean_y_sq(obs: &Observations) -> f64 {
    obs.y().iter().map(|y| y * y).sum::<f64>() / obs.len() as f64
}

/// One EM update with the inverse sample covariance.
pub fn standard_em_step(obs: &Observations, theta: &[f64]) -> Result<Vec<f64>> {
    EmOperator::new(obs, EmVariant::Standard)?.theta_update(theta, 1.0)
}

/// One Easy-EM update: the moment term without the covariance inverse.
pub fn easy_em_step(obs: &Observations, theta: &[f64]) -> Result<Vec<f64>> {
    check_dim(obs, theta)?;
    Ok(weighted_moment(obs, theta, 1.0))
}

/// Joint `(θ, σ²)` update: `θ` uses the incoming `σ²`, then `σ²` uses the new `θ`.
pub fn unknown_variance_em_step(obs: &Observations, state: &EmState) -> Result<EmState> {
    EmOperator::new(obs, EmVariant::UnknownVariance)?.step(state)
}

/// `(1/n) Σ yᵢ² − 1`, an unbiased estimate of `‖θ*‖²` under unit noise.
pub fn estimate_snr_sq(obs: &Observations) -> f64 {
    mean_y_sq(obs) - 1.0
}

/// `⌈max(1, 1/max(η̂², 10⁻⁶)) · ln d⌉` with `η̂²` from [`estimate_snr_sq`].
pub fn suggested_phase1_iters(obs: &Observations) -> usize {
    let eta_sq = estimate_snr_sq(obs).max(1e-6);
    let iters = (1.0f64).max(1.0 / eta_sq) * (obs.dim() as f64).ln();
    iters.ceil().max(0.0) as usize
}

/// A dataset bound to one variant, with the covariance factor cached.
#[derive(Debug, Clone)]
pub struct EmOperator<'a> {
    obs: &'a Observations,
    variant: EmVariant,
    chol: Option<Cholesky>,
    mean_y_sq: f64,
}

impl<'a> EmOperator<'a> {
    pub fn new(obs: &'a Observations, variant: EmVariant) -> Result<Self> {
        let chol = match variant {
            EmVariant::Easy => None,
            EmVariant::Standard | EmVariant::UnknownVariance => {
                Some(sample_covariance(obs).cholesky()?)
            }
        };
        Ok(EmOperator {
            obs,
            variant,
            chol,
            mean_y_sq: mean_y_sq(obs),
        })
    }

    pub fn variant(&self) -> EmVariant {
        self.variant
    }

    fn theta_update(&self, theta: &[f64], sigma_sq: f64) -> Result<Vec<f64>> {
        check_dim(self.obs, theta)?;
        let mut m = weighted_moment(self.obs, theta, sigma_sq);
        if let Some(chol) = &self.chol {
            chol.solve_in_place(&mut m);
        }
        Ok(m)
    }

    pub fn step(&self, state: &EmState) -> Result<EmState> {
        match self.variant {
            EmVariant::Standard | EmVariant::Easy => Ok(EmState {
                theta: self.theta_update(&state.theta, 1.0)?,
                sigma_sq: 1.0,
                iter: state.iter + 1,
            }),
            EmVariant::UnknownVariance => {
                if !(state.sigma_sq > 0.0) {
                    return Err(Error::invalid(format!(
                        "sigma_sq must be positive, got {}",
                        state.sigma_sq
                    )));
                }
                let theta = self.theta_update(&state.theta, state.sigma_sq)?;
                let fitted = self
                    .obs
                    .rows()
                    .map(|(x, _)| {
                        let f = dot(x, &theta);
                        f * f
                    })
                    .sum::<f64>()
                    / self.obs.len() as f64;
                let sigma_sq = self.mean_y_sq - fitted;
                if !(sigma_sq > MIN_SIGMA_SQ) {
                    return Err(Error::DegenerateVariance {
                        iter: state.iter + 1,
                        value: sigma_sq,
                    });
                }
                Ok(EmState {
                    theta,
                    sigma_sq,
                    iter: state.iter + 1,
                })
            }
        }
    }
}

struct Recorder<'t> {
    enabled: bool,
    truth: Option<&'t GroundTruth>,
    track_sigma: bool,
    trace: EmTrace,
}

impl Recorder<'_> {
    fn push(&mut self, state: &EmState, step: Option<f64>, phase: Phase) {
        if !self.enabled {
            return;
        }
        let (err, cos) = match self.truth {
            Some(t) => (
                residual_error(&state.theta, t).ok(),
                Some(cosine(&state.theta, t.theta_star())),
            ),
            None => (None, None),
        };
        self.trace.records.push(TraceRecord {
            iter: state.iter,
            norm_theta: norm(&state.theta),
            err,
            cos_angle: cos,
            step_size: step,
            sigma_sq: self.track_sigma.then_some(state.sigma_sq),
            phase,
        });
    }
}

fn check_run_inputs(
    obs: &Observations,
    init: &EmState,
    config: &EmConfig,
    truth: Option<&GroundTruth>,
) -> Result<()> {
    config.validate()?;
    check_dim(obs, &init.theta)?;
    if let Some(t) = truth {
        if t.dim() != obs.dim() {
            return Err(Error::DimensionMismatch {
                expected: obs.dim(),
                got: t.dim(),
            });
        }
    }
    Ok(())
}

/// Iterates `config.variant` until `‖θᵗ⁺¹ − θᵗ‖ < tol` or `max_iters` steps.
///
/// `truth` only feeds the error and angle columns of the trace.
pub fn run_em(
    obs: &Observations,
    init: EmState,
    config: &EmConfig,
    truth: Option<&GroundTruth>,
) -> Result<EmOutcome> {
    check_run_inputs(obs, &init, config, truth)?;
    let mut rec = Recorder {
        enabled: config.record_trajectory,
        truth,
        track_sigma: config.variant == EmVariant::UnknownVariance,
        trace: EmTrace::default(),
    };
    rec.push(&init, None, Phase::Init);
    let op = EmOperator::new(obs, config.variant)?;
    let (state, status) = iterate(&op, init, config, &mut rec, Phase::Main)?;
    Ok(EmOutcome {
        state,
        trace: rec.trace,
        status,
    })
}

fn iterate(
    op: &EmOperator<'_>,
    mut state: EmState,
    config: &EmConfig,
    rec: &mut Recorder<'_>,
    phase: Phase,
) -> Result<(EmState, RunStatus)> {
    for _ in 0..config.max_iters {
        let next = op.step(&state)?;
        let step = distance(&next.theta, &state.theta);
        state = next;
        rec.push(&state, Some(step), phase);
        if step < config.tol {
            return Ok((state, RunStatus::Converged));
        }
    }
    Ok((state, RunStatus::MaxItersReached))
}

/// `phase1_iters` Easy-EM steps, then `config.variant` under [`run_em`] rules.
///
/// The warm-up never stops early; `max_iters` bounds the second phase only.
pub fn two_phase_run(
    obs: &Observations,
    init: EmState,
    config: &EmConfig,
    truth: Option<&GroundTruth>,
) -> Result<EmOutcome> {
    check_run_inputs(obs, &init, config, truth)?;
    let floor = (obs.dim() as f64 / obs.len() as f64).powf(0.25);
    let init_norm = norm(&init.theta);
    if init_norm < floor {
        log::warn!(
            "initial norm {init_norm:.4} is below (d/n)^(1/4) = {floor:.4}; convergence guarantees may not apply"
        );
    }
    let mut rec = Recorder {
        enabled: config.record_trajectory,
        truth,
        track_sigma: config.variant == EmVariant::UnknownVariance,
        trace: EmTrace::default(),
    };
    rec.push(&init, None, Phase::Init);
    let mut state = init;
    if config.phase1_iters > 0 {
        let easy = EmOperator::new(obs, EmVariant::Easy)?;
        for _ in 0..config.phase1_iters {
            let next = easy.step(&state)?;
            let step = distance(&next.theta, &state.theta);
            state = EmState {
                sigma_sq: state.sigma_sq,
                ..next
            };
            rec.push(&state, Some(step), Phase::Warmup);
        }
    }
    let op = EmOperator::new(obs, config.variant)?;
    let (state, status) = iterate(&op, state, config, &mut rec, Phase::Main)?;
    Ok(EmOutcome {
        state,
        trace: rec.trace,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::generate_dataset;

    fn two_point() -> Observations {
        Observations::new(1, vec![1.0, -1.0], vec![1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_is_fixed_for_every_variant() {
        let truth = GroundTruth::on_first_axis(3, 1.0).unwrap();
        let ds = generate_dataset(&truth, 200, 1).unwrap();
        let obs = ds.observations();
        let z = vec![0.0; 3];
        assert!(standard_em_step(obs, &z).unwrap().iter().all(|v| *v == 0.0));
        assert!(easy_em_step(obs, &z).unwrap().iter().all(|v| *v == 0.0));
        let s = unknown_variance_em_step(obs, &EmState::with_sigma_sq(z, 0.7)).unwrap();
        assert!(s.theta.iter().all(|v| *v == 0.0));
        let my = obs.y().iter().map(|y| y * y).sum::<f64>() / 200.0;
        assert_eq!(s.sigma_sq, my);
    }

    #[test]
    fn two_point_hand_evaluations() {
        let obs = two_point();
        // Σ xᵢyᵢ tanh(yᵢxᵢθ) / Σ xᵢ² = 2 tanh(1) / 2
        let t1 = 1f64.tanh();
        assert!((standard_em_step(&obs, &[1.0]).unwrap()[0] - t1).abs() < 1e-15);
        assert!((easy_em_step(&obs, &[1.0]).unwrap()[0] - t1).abs() < 1e-15);
        let s = unknown_variance_em_step(&obs, &EmState::with_sigma_sq(vec![1.0], 1.0)).unwrap();
        assert!((s.theta[0] - t1).abs() < 1e-15);
        assert!((s.sigma_sq - (1.0 - t1 * t1)).abs() < 1e-15);
        assert!((s.sigma_sq - 0.4199743416140261).abs() < 1e-12);
        assert_eq!(s.iter, 1);
    }

    #[test]
    fn identity_covariance_makes_easy_and_standard_coincide() {
        let obs =
            Observations::new(1, vec![1.0, -1.0, 1.0, -1.0], vec![0.3, -1.2, 2.0, 0.1]).unwrap();
        for theta in [0.4, -1.3, 2.5] {
            assert_eq!(
                standard_em_step(&obs, &[theta]).unwrap(),
                easy_em_step(&obs, &[theta]).unwrap()
            );
        }
    }

    #[test]
    fn truth_is_near_fixed_point_on_large_sample() {
        let truth = GroundTruth::on_first_axis(5, 2.0).unwrap();
        let ds = generate_dataset(&truth, 100_000, 21).unwrap();
        let next = standard_em_step(ds.observations(), truth.theta_star()).unwrap();
        assert!(distance(&next, truth.theta_star()) <= 0.05);
    }

    #[test]
    fn unknown_variance_truth_is_near_fixed_point() {
        let truth = GroundTruth::with_unit_noise(vec![0.1, 0.0, 0.0]).unwrap();
        let ds = generate_dataset(&truth, 100_000, 22).unwrap();
        let s = unknown_variance_em_step(
            ds.observations(),
            &EmState::with_sigma_sq(truth.theta_star().to_vec(), 1.0),
        )
        .unwrap();
        assert!(distance(&s.theta, truth.theta_star()) <= 0.05);
        assert!((s.sigma_sq - 1.0).abs() <= 0.05);
    }

    #[test]
    fn degenerate_variance_aborts() {
        // A perfect linear fit leaves no residual variance.
        let obs = Observations::new(1, vec![1.0, 2.0], vec![1.0, 2.0]).unwrap();
        let err =
            unknown_variance_em_step(&obs, &EmState::with_sigma_sq(vec![50.0], 1e-3)).unwrap_err();
        assert!(matches!(err, Error::DegenerateVariance { iter: 1, .. }));
    }

    #[test]
    fn too_few_samples_for_standard_step() {
        let obs = Observations::new(3, vec![1.0, 2.0, 3.0], vec![1.0]).unwrap();
        assert!(matches!(
            standard_em_step(&obs, &[0.1, 0.1, 0.1]),
            Err(Error::NotPositiveDefinite { .. })
        ));
        assert!(easy_em_step(&obs, &[0.1, 0.1, 0.1]).is_ok());
        assert!(matches!(
            easy_em_step(&obs, &[0.1]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn snr_estimate_examples() {
        let obs = Observations::new(1, vec![0.5], vec![3.0]).unwrap();
        assert_eq!(estimate_snr_sq(&obs), 8.0);
        let zero = GroundTruth::on_first_axis(3, 0.0).unwrap();
        let ds = generate_dataset(&zero, 100_000, 5).unwrap();
        assert!(estimate_snr_sq(ds.observations()).abs() < 0.05);
        let two = GroundTruth::on_first_axis(3, 2.0).unwrap();
        let ds = generate_dataset(&two, 100_000, 6).unwrap();
        assert!((estimate_snr_sq(ds.observations()) - 4.0).abs() < 0.2);
    }

    #[test]
    fn suggested_warmup_length() {
        // η̂² = 8, d = 1 → ln 1 = 0
        let obs = Observations::new(1, vec![0.5], vec![3.0]).unwrap();
        assert_eq!(suggested_phase1_iters(&obs), 0);
        // η̂² = 3 → max(1, 1/3)·ln 4 = 1.386 → 2
        let obs = Observations::new(4, vec![0.0; 4], vec![2.0]).unwrap();
        assert_eq!(suggested_phase1_iters(&obs), 2);
        // η̂² floored at 1e-6 → 1e6·ln 2 → 693148
        let obs = Observations::new(2, vec![0.0; 2], vec![0.0]).unwrap();
        assert_eq!(
            suggested_phase1_iters(&obs),
            (1e6 * 2f64.ln()).ceil() as usize
        );
    }

    #[test]
    fn run_from_zero_stops_after_one_step() {
        let truth = GroundTruth::on_first_axis(2, 1.0).unwrap();
        let ds = generate_dataset(&truth, 100, 2).unwrap();
        let cfg = EmConfig {
            record_trajectory: true,
            ..EmConfig::default()
        };
        let out = run_em(
            ds.observations(),
            EmState::new(vec![0.0; 2]),
            &cfg,
            Some(&truth),
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert_eq!(out.state.iter, 1);
        assert_eq!(out.state.theta, vec![0.0; 2]);
        assert_eq!(out.trace.len(), 2);
        assert_eq!(out.trace.records[0].phase, Phase::Init);
        assert_eq!(out.trace.records[1].step_size, Some(0.0));
    }

    #[test]
    fn high_snr_run_converges_quickly() {
        let truth = GroundTruth::on_first_axis(5, 2.0).unwrap();
        let ds = generate_dataset(&truth, 8192, 3).unwrap();
        let mut init = truth.theta_star().to_vec();
        init[1] += 0.2;
        let out = run_em(
            ds.observations(),
            EmState::new(init),
            &EmConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::Converged);
        assert!(out.state.iter < 50);
        assert!(residual_error(&out.state.theta, &truth).unwrap() < 0.1);
        assert!(out.trace.is_empty());
    }

    #[test]
    fn low_snr_run_is_slow() {
        let truth = GroundTruth::on_first_axis(5, 0.05).unwrap();
        let ds = generate_dataset(&truth, 8192, 4).unwrap();
        let init = crate::numerics::random_unit_vector(5, 40)
            .into_iter()
            .map(|v| 0.2 * v)
            .collect();
        let out = run_em(
            ds.observations(),
            EmState::new(init),
            &EmConfig::default(),
            Some(&truth),
        )
        .unwrap();
        assert!(out.state.iter > 100, "iterations {}", out.state.iter);
        assert!(residual_error(&out.state.theta, &truth).unwrap() < 0.35);
    }

    #[test]
    fn max_iters_is_a_status_not_an_error() {
        let truth = GroundTruth::on_first_axis(3, 0.05).unwrap();
        let ds = generate_dataset(&truth, 1000, 8).unwrap();
        let cfg = EmConfig {
            max_iters: 3,
            record_trajectory: true,
            ..EmConfig::default()
        };
        let out = run_em(
            ds.observations(),
            EmState::new(vec![0.5, 0.5, 0.0]),
            &cfg,
            None,
        )
        .unwrap();
        assert_eq!(out.status, RunStatus::MaxItersReached);
        assert_eq!(out.state.iter, 3);
        assert_eq!(out.trace.len(), 4);
        assert!(out.trace.records.iter().all(|r| r.err.is_none()));
    }

    #[test]
    fn config_validation() {
        let obs = two_point();
        let bad = EmConfig {
            tol: 0.0,
            ..EmConfig::default()
        };
        assert!(run_em(&obs, EmState::new(vec![1.0]), &bad, None).is_err());
        let bad = EmConfig {
            max_iters: 0,
            ..EmConfig::default()
        };
        assert!(run_em(&obs, EmState::new(vec![1.0]), &bad, None).is_err());
        assert!(run_em(
            &obs,
            EmState::new(vec![1.0, 2.0]),
            &EmConfig::default(),
            None
        )
        .is_err());
    }

    #[test]
    fn empty_warmup_matches_plain_run() {
        let truth = GroundTruth::on_first_axis(4, 0.8).unwrap();
        let ds = generate_dataset(&truth, 2000, 9).unwrap();
        let cfg = EmConfig {
            record_trajectory: true,
            ..EmConfig::default()
        };
        let init = EmState::new(vec![0.3, -0.2, 0.1, 0.4]);
        let a = run_em(ds.observations(), init.clone(), &cfg, Some(&truth)).unwrap();
        let b = two_phase_run(ds.observations(), init, &cfg, Some(&truth)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn warmup_steps_are_marked() {
        let truth = GroundTruth::on_first_axis(4, 0.8).unwrap();
        let ds = generate_dataset(&truth, 2000, 10).unwrap();
        let cfg = EmConfig {
            record_trajectory: true,
            phase1_iters: 5,
            ..EmConfig::default()
        };
        let out = two_phase_run(
            ds.observations(),
            EmState::new(vec![0.3, -0.2, 0.1, 0.4]),
            &cfg,
            None,
        )
        .unwrap();
        let phases: Vec<Phase> = out.trace.records.iter().map(|r| r.phase).collect();
        assert_eq!(phases[0], Phase::Init);
        assert!(phases[1..6].iter().all(|p| *p == Phase::Warmup));
        assert!(phases[6..].iter().all(|p| *p == Phase::Main));
        assert_eq!(out.trace.records[5].iter, 5);
    }

    #[test]
    fn unknown_variance_replay_matches_sub_updates() {
        let truth = GroundTruth::on_first_axis(3, 0.5).unwrap();
        let ds = generate_dataset(&truth, 3000, 12).unwrap();
        let obs = ds.observations();
        let mut state = EmState::with_sigma_sq(vec![0.2, 0.1, -0.1], 1.0);
        let chol = sample_covariance(obs).cholesky().unwrap();
        for _ in 0..5 {
            let next = unknown_variance_em_step(obs, &state).unwrap();
            // hand-applied θ sub-update with the incoming σ²
            let mut m = vec![0.0; 3];
            for (x, y) in obs.rows() {
                let w = (y * dot(x, &state.theta) / state.sigma_sq).tanh() * y;
                for k in 0..3 {
                    m[k] += w * x[k];
                }
            }
            m.iter_mut().for_each(|v| *v /= obs.len() as f64);
            chol.solve_in_place(&mut m);
            assert_eq!(m, next.theta);
            // σ² sub-update with the outgoing θ
            let my = obs.y().iter().map(|y| y * y).sum::<f64>() / obs.len() as f64;
            let fit = obs.rows().map(|(x, _)| dot(x, &m).powi(2)).sum::<f64>() / obs.len() as f64;
            assert_eq!(my - fit, next.sigma_sq);
            state = next;
        }
    }

    #[test]
    fn trace_csv_layout() {
        let truth = GroundTruth::on_first_axis(2, 1.0).unwrap();
        let ds = generate_dataset(&truth, 500, 13).unwrap();
        let cfg = EmConfig {
            record_trajectory: true,
            variant: EmVariant::UnknownVariance,
            ..EmConfig::default()
        };
        let out = run_em(
            ds.observations(),
            EmState::new(vec![0.5, 0.5]),
            &cfg,
            Some(&truth),
        )
        .unwrap();
        let mut buf = Vec::new();
        out.trace.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "iter,norm_theta,err,cos_angle,step_size,sigma_sq,phase"
        );
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first[0], "0");
        assert_eq!(first[4], "");
        assert_eq!(first[6], "init");
        assert_eq!(text.lines().count(), out.trace.len() + 1);
    }

    #[test]
    fn variant_names_round_trip() {
        for v in [
            EmVariant::Standard,
            EmVariant::Easy,
            EmVariant::UnknownVariance,
        ] {
            assert_eq!(v.to_string().parse::<EmVariant>().unwrap(), v);
        }
        assert!("fast".parse::<EmVariant>().is_err());
    }
}
