//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Each export returns a JSON string; the page parses it and draws on a
//! canvas. The plain functions underneath are usable natively.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use mlr_em::em::{run_em, EmConfig, EmState, EmVariant, RunStatus};
use mlr_em::harness::{fit_loglog_slope, run_rate_sweep, ErrorMetric, NGrid, SweepSpec};
use mlr_em::init::{initialize, InitScheme};
use mlr_em::model::{generate_dataset, GroundTruth};
use mlr_em::numerics::{gauss_hermite_rule, norm};
use mlr_em::population::{pop_em_mlr, PopGridPoint};

/// Iteration cap for in-browser fits.
pub const DEMO_MAX_ITERS: usize = 5000;

#[derive(Debug, Clone, Serialize)]
pub struct ContractionCurve {
    pub norm_theta: Vec<f64>,
    pub norm_after: Vec<f64>,
    pub resid_before: Vec<f64>,
    pub resid_after: Vec<f64>,
}

/// One population-EM step from `points` iterates with norms spread over
/// `(0, max_norm]`, all at angle `acos(cos_alpha)` to `θ*`.
pub fn contraction_curve(
    norm_theta_star: f64,
    cos_alpha: f64,
    max_norm: f64,
    points: usize,
) -> mlr_em::Result<ContractionCurve> {
    if points == 0 || max_norm.is_nan() || max_norm <= 0.0 {
        return Err(mlr_em::Error::InvalidArgument(
            "need at least one point and a positive maximum norm".into(),
        ));
    }
    let quad = gauss_hermite_rule(64)?;
    let mut curve = ContractionCurve {
        norm_theta: Vec::with_capacity(points),
        norm_after: Vec::with_capacity(points),
        resid_before: Vec::with_capacity(points),
        resid_after: Vec::with_capacity(points),
    };
    for k in 1..=points {
        let nt = max_norm * k as f64 / points as f64;
        let (theta, star) = PopGridPoint {
            norm_theta: nt,
            norm_theta_star,
            cos_alpha,
        }
        .vectors();
        let next = pop_em_mlr(&theta, &star, &quad)?;
        let resid = |v: &[f64]| {
            let minus: f64 = v.iter().zip(&star).map(|(a, b)| (a - b).powi(2)).sum();
            let plus: f64 = v.iter().zip(&star).map(|(a, b)| (a + b).powi(2)).sum();
            minus.min(plus).sqrt()
        };
        curve.norm_theta.push(nt);
        curve.norm_after.push(norm(&next));
        curve.resid_before.push(resid(&theta));
        curve.resid_after.push(resid(&next));
    }
    Ok(curve)
}

#[derive(Debug, Clone, Serialize)]
pub struct Trajectory {
    pub err: Vec<f64>,
    pub norm_theta: Vec<f64>,
    pub sigma_sq: Vec<f64>,
    pub converged: bool,
}

/// Samples a dataset with `θ* = snr·e₁` and records one EM run on it.
pub fn em_trajectory(
    d: usize,
    n: usize,
    snr: f64,
    variant: &str,
    init: &str,
    seed: u64,
) -> mlr_em::Result<Trajectory> {
    let variant: EmVariant = variant.parse()?;
    let init: InitScheme = init.parse()?;
    let truth = GroundTruth::on_first_axis(d, snr)?;
    let data = generate_dataset(&truth, n, seed)?;
    let obs = data.observations();
    let theta0 = initialize(&init, obs, Some(&truth), seed ^ 0x9e37_79b9)?;
    let config = EmConfig {
        variant,
        max_iters: DEMO_MAX_ITERS,
        record_trajectory: true,
        ..EmConfig::default()
    };
    let out = run_em(obs, EmState::new(theta0), &config, Some(&truth))?;
    let records = &out.trace.records;
    Ok(Trajectory {
        err: records.iter().filter_map(|r| r.err).collect(),
        norm_theta: records.iter().map(|r| r.norm_theta).collect(),
        sigma_sq: records.iter().filter_map(|r| r.sigma_sq).collect(),
        converged: out.status == RunStatus::Converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SmallSweep {
    pub n: Vec<usize>,
    pub mean_err: Vec<f64>,
    pub mean_iters: Vec<f64>,
    pub slope: f64,
}

/// Mean final error over `reps` runs at `n = 128, 256, ..., 4096`, `d = 5`.
/// Low SNR starts from a sphere of radius 0.2, otherwise near the truth.
pub fn small_rate_sweep(snr: f64, reps: usize, seed: u64) -> mlr_em::Result<SmallSweep> {
    let init = if snr < 0.5 {
        InitScheme::RandomSphere { norm: 0.2 }
    } else {
        InitScheme::PerturbedTruth { rel: 0.1 }
    };
    let spec = SweepSpec {
        d: 5,
        n_list: NGrid::Pow2.sizes(128, 6),
        snr_list: vec![snr],
        reps,
        init,
        base_seed: seed,
        error_metric: ErrorMetric::SignSymmetric,
        em_config: EmConfig {
            max_iters: DEMO_MAX_ITERS,
            ..EmConfig::default()
        },
        ..SweepSpec::default()
    };
    let rows = run_rate_sweep(&spec)?.rows;
    let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.n as f64, r.mean_err)).collect();
    Ok(SmallSweep {
        n: rows.iter().map(|r| r.n).collect(),
        mean_err: rows.iter().map(|r| r.mean_err).collect(),
        mean_iters: rows.iter().map(|r| r.mean_iters).collect(),
        slope: fit_loglog_slope(&points)?.slope,
    })
}

fn to_js<T: Serialize>(r: mlr_em::Result<T>) -> Result<String, JsError> {
    let value = r.map_err(|e| JsError::new(&e.to_string()))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen(js_name = contractionCurve)]
pub fn contraction_curve_js(
    norm_theta_star: f64,
    cos_alpha: f64,
    max_norm: f64,
    points: usize,
) -> Result<String, JsError> {
    to_js(contraction_curve(
        norm_theta_star,
        cos_alpha,
        max_norm,
        points,
    ))
}

#[wasm_bindgen(js_name = emTrajectory)]
pub fn em_trajectory_js(
    d: usize,
    n: usize,
    snr: f64,
    variant: &str,
    init: &str,
    seed: u32,
) -> Result<String, JsError> {
    to_js(em_trajectory(d, n, snr, variant, init, seed as u64))
}

#[wasm_bindgen(js_name = smallRateSweep)]
pub fn small_rate_sweep_js(snr: f64, reps: usize, seed: u32) -> Result<String, JsError> {
    to_js(small_rate_sweep(snr, reps, seed as u64))
}
