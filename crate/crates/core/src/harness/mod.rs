//! Seeded experiment sweeps over `(snr, n)` grids.
//!
//! Every replication derives its seed from `(base_seed, snr index, n index,
//! rep)`, and results are assembled into pre-indexed slots, so the output does
//! not depend on how many threads ran the work.

mod stats;

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::em::{
    fmt_f64, run_em, two_phase_run, EmConfig, EmOutcome, EmState, EmVariant, RunStatus,
};
use crate::error::{Error, Result};
use crate::init::{initialize, InitScheme};
use crate::model::{generate_dataset, residual_error, signed_error, GroundTruth};
use crate::numerics::{mix_seed, random_unit_vector};

pub use stats::{fit_loglog_slope, mean, median, quantile, SlopeFit};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorMetric {
    /// `‖θ − θ*‖`
    Signed,
    /// `min(‖θ − θ*‖, ‖θ + θ*‖)`
    #[default]
    SignSymmetric,
}

impl ErrorMetric {
    pub fn eval(&self, theta: &[f64], truth: &GroundTruth) -> Result<f64> {
        match self {
            ErrorMetric::Signed => signed_error(theta, truth),
            ErrorMetric::SignSymmetric => residual_error(theta, truth),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaStarDirection {
    #[default]
    FirstAxis,
    RandomPerRep,
}

/// Sample-size ladders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NGrid {
    /// `n₀·2^k`
    Pow2,
    /// `2·⌊(n₀/2)·2^{k/2}⌋`: 128, 180, 256, 362, ... for `n₀ = 128`
    Sqrt2,
}

impl FromStr for NGrid {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pow2" => Ok(NGrid::Pow2),
            "sqrt2" => Ok(NGrid::Sqrt2),
            other => Err(Error::invalid(format!(
                "unknown grid `{other}` (expected pow2 or sqrt2)"
            ))),
        }
    }
}

impl NGrid {
    pub fn sizes(&self, n0: usize, count: usize) -> Vec<usize> {
        (0..count)
            .map(|k| match self {
                NGrid::Pow2 => n0 << k,
                NGrid::Sqrt2 => {
                    2 * ((n0 as f64 / 2.0) * 2f64.powf(k as f64 / 2.0)).floor() as usize
                }
            })
            .collect()
    }
}

/// Declarative description of a sweep.
///
/// `variant` overrides `em_config.variant`. A positive
/// `em_config.phase1_iters` switches runs to the Easy-EM warm-up schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub d: usize,
    pub n_list: Vec<usize>,
    pub snr_list: Vec<f64>,
    pub reps: usize,
    pub init: InitScheme,
    pub variant: EmVariant,
    pub em_config: EmConfig,
    pub base_seed: u64,
    pub error_metric: ErrorMetric,
    pub theta_star_direction: ThetaStarDirection,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            d: 5,
            n_list: NGrid::Pow2.sizes(128, 8),
            snr_list: vec![2.0],
            reps: 200,
            init: InitScheme::PerturbedTruth { rel: 0.1 },
            variant: EmVariant::Standard,
            em_config: EmConfig::default(),
            base_seed: 0,
            error_metric: ErrorMetric::SignSymmetric,
            theta_star_direction: ThetaStarDirection::FirstAxis,
        }
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::invalid("d must be at least 1"));
        }
        if self.n_list.is_empty() || self.snr_list.is_empty() {
            return Err(Error::invalid("n_list and snr_list must be non-empty"));
        }
        if self.n_list.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("n_list must be strictly ascending"));
        }
        if self.n_list[0] < self.d {
            return Err(Error::invalid(format!(
                "every n must be at least d = {}, got {}",
                self.d, self.n_list[0]
            )));
        }
        if self.snr_list.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::invalid("snr values must be positive and finite"));
        }
        if self.reps == 0 {
            return Err(Error::invalid("reps must be at least 1"));
        }
        self.init.validate()?;
        self.run_config().validate()
    }

    pub fn run_config(&self) -> EmConfig {
        EmConfig {
            variant: self.variant,
            ..self.em_config.clone()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::invalid(format!("bad sweep spec: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    fn truth(&self, snr: f64, seed: u64) -> Result<GroundTruth> {
        match self.theta_star_direction {
            ThetaStarDirection::FirstAxis => GroundTruth::on_first_axis(self.d, snr),
            ThetaStarDirection::RandomPerRep => GroundTruth::with_unit_noise(
                random_unit_vector(self.d, seed)
                    .into_iter()
                    .map(|u| snr * u)
                    .collect(),
            ),
        }
    }
}

/// Outcome of one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub snr_index: usize,
    pub n_index: usize,
    pub rep: usize,
    pub seed: u64,
    pub final_err: Option<f64>,
    pub sigma_sq_err: Option<f64>,
    pub iters: usize,
    pub status: Option<RunStatus>,
    /// Error message of an aborted run.
    pub aborted: Option<String>,
}

struct RunDetail {
    record: RunRecord,
    outcome: Option<EmOutcome>,
}

fn run_one(
    spec: &SweepSpec,
    snr_index: usize,
    n_index: usize,
    rep: usize,
    record_trajectory: bool,
) -> RunDetail {
    let seed = mix_seed(
        spec.base_seed,
        &[snr_index as u64, n_index as u64, rep as u64],
    );
    let mut record = RunRecord {
        snr_index,
        n_index,
        rep,
        seed,
        final_err: None,
        sigma_sq_err: None,
        iters: 0,
        status: None,
        aborted: None,
    };
    let result = (|| -> Result<(EmOutcome, GroundTruth)> {
        let truth = spec.truth(spec.snr_list[snr_index], mix_seed(seed, &[2]))?;
        let ds = generate_dataset(&truth, spec.n_list[n_index], mix_seed(seed, &[0]))?;
        let obs = ds.observations();
        let theta0 = initialize(&spec.init, obs, Some(&truth), mix_seed(seed, &[1]))?;
        let config = EmConfig {
            record_trajectory,
            ..spec.run_config()
        };
        let outcome = if config.phase1_iters > 0 {
            two_phase_run(obs, EmState::new(theta0), &config, Some(&truth))?
        } else {
            run_em(obs, EmState::new(theta0), &config, Some(&truth))?
        };
        Ok((outcome, truth))
    })();
    match result {
        Ok((outcome, truth)) => {
            record.final_err = spec.error_metric.eval(&outcome.state.theta, &truth).ok();
            if spec.variant == EmVariant::UnknownVariance {
                record.sigma_sq_err =
                    Some((outcome.state.sigma_sq - truth.sigma_star().powi(2)).abs());
            }
            record.iters = outcome.state.iter;
            record.status = Some(outcome.status);
            RunDetail {
                record,
                outcome: Some(outcome),
            }
        }
        Err(e) => {
            record.aborted = Some(e.to_string());
            RunDetail {
                record,
                outcome: None,
            }
        }
    }
}

fn run_all(spec: &SweepSpec, record_trajectory: bool) -> Vec<RunDetail> {
    let tasks: Vec<(usize, usize, usize)> = (0..spec.snr_list.len())
        .flat_map(|s| {
            (0..spec.n_list.len()).flat_map(move |n| (0..spec.reps).map(move |r| (s, n, r)))
        })
        .collect();
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        tasks
            .par_iter()
            .map(|&(s, n, r)| run_one(spec, s, n, r, record_trajectory))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        tasks
            .iter()
            .map(|&(s, n, r)| run_one(spec, s, n, r, record_trajectory))
            .collect()
    }
}

/// Aggregates over the replications of one `(snr, n)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr: f64,
    pub n: usize,
    pub mean_err: f64,
    pub median_err: f64,
    /// Standard error of `mean_err`.
    pub sem: f64,
    pub mean_iters: f64,
    pub p90_iters: f64,
    /// Runs that hit `max_iters` or aborted.
    pub failures: usize,
    pub max_iters_reached: usize,
    pub aborted: usize,
    /// Mean `|σ̂² − σ*²|`, unknown-variance runs only.
    pub mean_sigma_sq_err: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<SweepRow>,
    #[serde(skip)]
    pub runs: Vec<RunRecord>,
}

fn aggregate(spec: &SweepSpec, runs: &[RunRecord]) -> Vec<SweepRow> {
    let mut rows = Vec::with_capacity(spec.snr_list.len() * spec.n_list.len());
    for (si, &snr) in spec.snr_list.iter().enumerate() {
        for (ni, &n) in spec.n_list.iter().enumerate() {
            let cell: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.snr_index == si && r.n_index == ni)
                .collect();
            let errs: Vec<f64> = cell.iter().filter_map(|r| r.final_err).collect();
            let iters: Vec<f64> = cell
                .iter()
                .filter(|r| r.status.is_some())
                .map(|r| r.iters as f64)
                .collect();
            let sig: Vec<f64> = cell.iter().filter_map(|r| r.sigma_sq_err).collect();
            let max_iters_reached = cell
                .iter()
                .filter(|r| r.status == Some(RunStatus::MaxItersReached))
                .count();
            let aborted = cell.iter().filter(|r| r.aborted.is_some()).count();
            let m = mean(&errs);
            let sem = if errs.len() > 1 {
                let var =
                    errs.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (errs.len() - 1) as f64;
                (var / errs.len() as f64).sqrt()
            } else {
                0.0
            };
            rows.push(SweepRow {
                snr,
                n,
                mean_err: m,
                median_err: median(&errs),
                sem,
                mean_iters: mean(&iters),
                p90_iters: quantile(&iters, 0.9),
                failures: max_iters_reached + aborted,
                max_iters_reached,
                aborted,
                mean_sigma_sq_err: (!sig.is_empty()).then(|| mean(&sig)),
            });
        }
    }
    rows
}

/// Runs every `(snr, n, rep)` replication and aggregates per cell.
///
/// Failed replications are recorded in the cell's counters; they never abort
/// the sweep.
pub fn run_rate_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let runs: Vec<RunRecord> = run_all(spec, false).into_iter().map(|d| d.record).collect();
    Ok(SweepResult {
        spec: spec.clone(),
        rows: aggregate(spec, &runs),
        runs,
    })
}

/// Per-iteration error profile across replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub iter: usize,
    pub mean_err: f64,
    pub p10_err: f64,
    pub p90_err: f64,
}

/// Records every replication's trajectory at a single `(snr, n)` and returns
/// per-iteration statistics of the sign-symmetric error. Runs that stop early
/// carry their final error forward.
pub fn run_trajectory_experiment(spec: &SweepSpec) -> Result<Vec<TrajectoryRow>> {
    spec.validate()?;
    if spec.n_list.len() != 1 || spec.snr_list.len() != 1 {
        return Err(Error::invalid(
            "trajectory experiments take exactly one n and one snr",
        ));
    }
    let curves: Vec<Vec<f64>> = run_all(spec, true)
        .into_iter()
        .filter_map(|d| d.outcome)
        .map(|o| o.trace.records.iter().filter_map(|r| r.err).collect())
        .filter(|c: &Vec<f64>| !c.is_empty())
        .collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    let mut rows = Vec::with_capacity(len);
    let mut column = Vec::with_capacity(curves.len());
    for t in 0..len {
        column.clear();
        column.extend(curves.iter().map(|c| c[t.min(c.len() - 1)]));
        rows.push(TrajectoryRow {
            iter: t,
            mean_err: mean(&column),
            p10_err: quantile(&column, 0.1),
            p90_err: quantile(&column, 0.9),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub snr: f64,
    pub n: usize,
    pub mean_iters: f64,
}

/// Mean stopping iteration per `(snr, n)`.
pub fn run_iteration_scaling(spec: &SweepSpec) -> Result<Vec<IterationRow>> {
    Ok(run_rate_sweep(spec)?
        .rows
        .into_iter()
        .map(|r| IterationRow {
            snr: r.snr,
            n: r.n,
            mean_iters: r.mean_iters,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ExportFormat::Csv),
            "json" => Ok(ExportFormat::Json),
            other => Err(Error::invalid(format!("unknown format `{other}`"))),
        }
    }
}

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "snr",
    "n",
    "mean_err",
    "median_err",
    "sem",
    "mean_iters",
    "p90_iters",
    "failures",
];

impl SweepResult {
    pub fn write_csv<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let err = |e: csv::Error| Error::invalid(format!("sweep serialization failed: {e}"));
        w.write_record(SWEEP_CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                fmt_f64(r.snr),
                r.n.to_string(),
                fmt_f64(r.mean_err),
                fmt_f64(r.median_err),
                fmt_f64(r.sem),
                fmt_f64(r.mean_iters),
                fmt_f64(r.p90_iters),
                r.failures.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush()
            .map_err(|e| Error::invalid(format!("sweep flush failed: {e}")))?;
        Ok(())
    }

    /// `{"spec": ..., "rows": [...]}`
    pub fn write_json<W: Write + ?Sized>(&self, out: &mut W) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self)
            .map_err(|e| Error::invalid(format!("sweep serialization failed: {e}")))?;
        writeln!(out).map_err(|e| Error::invalid(e.to_string()))?;
        Ok(())
    }
}

/// Atomically writes a sweep result to `path`.
pub fn export(result: &SweepResult, path: &Path, format: ExportFormat) -> Result<()> {
    crate::io::write_atomic(path, None, |w| match format {
        ExportFormat::Csv => result.write_csv(w),
        ExportFormat::Json => result.write_json(w),
    })
}

#[cfg(test)]
mod tests;
