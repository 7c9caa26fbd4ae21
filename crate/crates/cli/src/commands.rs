use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use mlr_em::em::{run_em, two_phase_run, EmConfig, EmState};
use mlr_em::harness::{
    run_iteration_scaling, run_rate_sweep, run_trajectory_experiment, ExportFormat, NGrid,
    SweepSpec,
};
use mlr_em::init::{initialize, spectral_init};
use mlr_em::io::{read_comment_header, read_dataset_csv, write_atomic, write_dataset_csv};
use mlr_em::model::{generate_dataset, GroundTruth};
use mlr_em::numerics::{cosine, gauss_hermite_rule, mix_seed};
use mlr_em::population::{default_pop_grid, pop_check_grid, write_pop_check_csv, PopGridPoint};
use mlr_em::{Error, Result};

use crate::{Command, FitArgs, GenerateArgs, InitCheckArgs, PopCheckArgs, SweepArgs};

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(a) => generate(&a),
        Command::Fit(a) => fit(&a),
        Command::RateSweep(a) => rate_sweep(&a),
        Command::Trajectory(a) => trajectory(&a),
        Command::IterScaling(a) => iter_scaling(&a),
        Command::PopCheck(a) => pop_check(&a),
        Command::InitCheck(a) => init_check(&a),
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}

/// `{"command": name, ...fields}` rendered for a `#` comment header.
fn header(command: &str, config: &impl Serialize) -> String {
    let mut value = json!({ "command": command });
    if let (Value::Object(map), Ok(Value::Object(fields))) =
        (&mut value, serde_json::to_value(config))
    {
        map.extend(fields);
    }
    serde_json::to_string_pretty(&value).expect("config serializes")
}

fn first_axis_truth(d: usize, snr: f64, sigma_star: f64) -> Result<GroundTruth> {
    if d == 0 {
        return Err(invalid("d must be at least 1"));
    }
    if !snr.is_finite() || snr < 0.0 {
        return Err(invalid(format!(
            "snr must be non-negative and finite, got {snr}"
        )));
    }
    let mut theta = vec![0.0; d];
    theta[0] = snr * sigma_star;
    GroundTruth::new(theta, sigma_star)
}

fn generate(a: &GenerateArgs) -> Result<()> {
    let truth = first_axis_truth(a.d, a.snr, a.sigma_star)?;
    let data = generate_dataset(&truth, a.n, a.seed)?;
    write_atomic(&a.out, Some(&header("generate", a)), |w| {
        write_dataset_csv(data.observations(), w)
    })
}

/// `sigma_star` recorded by `generate`, if the dataset carries its header.
fn recorded_sigma_star(path: &Path) -> Option<f64> {
    let text = read_comment_header(path).ok()?;
    serde_json::from_str::<Value>(&text)
        .ok()?
        .get("sigma_star")?
        .as_f64()
}

#[derive(Serialize)]
struct FitSummary<'a> {
    config: &'a Value,
    theta: &'a [f64],
    sigma_sq: f64,
    iters: usize,
    status: mlr_em::em::RunStatus,
    err: Option<f64>,
}

fn fit(a: &FitArgs) -> Result<()> {
    let obs = read_dataset_csv(&a.data)?;
    let truth = match a.snr_truth {
        Some(snr) => {
            let sigma = recorded_sigma_star(&a.data).unwrap_or(1.0);
            Some(first_axis_truth(obs.dim(), snr, sigma)?)
        }
        None => None,
    };
    let config = EmConfig {
        variant: a.variant,
        tol: a.tol,
        max_iters: a.max_iters,
        record_trajectory: a.trace.is_some(),
        phase1_iters: a.phase1_iters,
    };
    let theta0 = initialize(&a.init, &obs, truth.as_ref(), a.seed)?;
    let init = EmState::new(theta0);
    let outcome = if a.phase1_iters > 0 {
        two_phase_run(&obs, init, &config, truth.as_ref())?
    } else {
        run_em(&obs, init, &config, truth.as_ref())?
    };
    let resolved: Value = serde_json::from_str(&header("fit", a)).expect("header is JSON");
    if let Some(path) = &a.trace {
        write_atomic(path, Some(&header("fit", a)), |w| {
            outcome.trace.write_csv(w)
        })?;
    }
    let err = match &truth {
        Some(t) => Some(mlr_em::model::residual_error(&outcome.state.theta, t)?),
        None => None,
    };
    let summary = FitSummary {
        config: &resolved,
        theta: &outcome.state.theta,
        sigma_sq: outcome.state.sigma_sq,
        iters: outcome.state.iter,
        status: outcome.status,
        err,
    };
    let mut stdout = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, &summary).map_err(|e| invalid(e.to_string()))?;
    writeln!(stdout).map_err(|e| invalid(e.to_string()))?;
    Ok(())
}

/// Config file first, then flag overrides.
fn resolve_spec(a: &SweepArgs) -> Result<SweepSpec> {
    let mut spec = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            SweepSpec::from_json(&text)?
        }
        None => SweepSpec::default(),
    };
    if let Some(d) = a.d {
        spec.d = d;
    }
    if let Some(n) = &a.n_list {
        spec.n_list = n.clone();
    }
    if let Some(s) = &a.snr_list {
        spec.snr_list = s.clone();
    }
    if let Some(r) = a.reps {
        spec.reps = r;
    }
    if let Some(v) = a.variant {
        spec.variant = v;
    }
    if let Some(i) = a.init {
        spec.init = i;
    }
    if let Some(s) = a.seed {
        spec.base_seed = s;
    }
    if let Some(grid) = a.grid {
        spec.n_list = ladder(grid, &spec.n_list)?;
    }
    spec.validate()?;
    Ok(spec)
}

fn ladder(grid: NGrid, n_list: &[usize]) -> Result<Vec<usize>> {
    let (&lo, &hi) = match (n_list.first(), n_list.last()) {
        (Some(lo), Some(hi)) if lo > &0 && hi >= lo => (lo, hi),
        _ => return Err(invalid("--grid needs a non-empty ascending n list")),
    };
    let octaves = (hi as f64 / lo as f64).log2();
    let count = match grid {
        NGrid::Pow2 => octaves.floor() as usize + 1,
        NGrid::Sqrt2 => (2.0 * octaves + 1e-9).floor() as usize + 1,
    };
    Ok(grid.sizes(lo, count))
}

fn format_of(path: &Path) -> ExportFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("json") => ExportFormat::Json,
        _ => ExportFormat::Csv,
    }
}

/// CSV gets the resolved spec as a comment header; JSON embeds it.
fn write_rows<R: Serialize>(
    path: &Path,
    command: &str,
    spec: &SweepSpec,
    rows: &[R],
    csv_body: impl FnOnce(&mut dyn Write) -> Result<()>,
) -> Result<()> {
    match format_of(path) {
        ExportFormat::Csv => write_atomic(path, Some(&header(command, spec)), csv_body),
        ExportFormat::Json => write_atomic(path, None, |w| {
            let doc = json!({ "command": command, "spec": spec, "rows": rows });
            serde_json::to_writer_pretty(&mut *w, &doc).map_err(|e| invalid(e.to_string()))?;
            writeln!(w).map_err(|e| io_error(path, e))
        }),
    }
}

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: PathBuf::from(path),
        source,
    }
}

fn csv_error(e: csv::Error) -> Error {
    invalid(format!("csv serialization failed: {e}"))
}

fn rate_sweep(a: &SweepArgs) -> Result<()> {
    let spec = resolve_spec(a)?;
    let result = run_rate_sweep(&spec)?;
    write_rows(&a.out, "rate-sweep", &spec, &result.rows, |w| {
        result.write_csv(w)
    })
}

fn trajectory(a: &SweepArgs) -> Result<()> {
    let spec = resolve_spec(a)?;
    let rows = run_trajectory_experiment(&spec)?;
    write_rows(&a.out, "trajectory", &spec, &rows, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["iter", "mean_err", "p10_err", "p90_err"])
            .map_err(csv_error)?;
        for r in &rows {
            out.write_record([
                r.iter.to_string(),
                fmt(r.mean_err),
                fmt(r.p10_err),
                fmt(r.p90_err),
            ])
            .map_err(csv_error)?;
        }
        out.flush().map_err(|e| invalid(e.to_string()))
    })
}

fn iter_scaling(a: &SweepArgs) -> Result<()> {
    let spec = resolve_spec(a)?;
    let rows = run_iteration_scaling(&spec)?;
    write_rows(&a.out, "iter-scaling", &spec, &rows, |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["snr", "n", "mean_iters"])
            .map_err(csv_error)?;
        for r in &rows {
            out.write_record([fmt(r.snr), r.n.to_string(), fmt(r.mean_iters)])
                .map_err(csv_error)?;
        }
        out.flush().map_err(|e| invalid(e.to_string()))
    })
}

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

fn read_grid(path: &Path) -> Result<Vec<PopGridPoint>> {
    let parse = |message: String| Error::Parse {
        path: path.to_path_buf(),
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse(e.to_string()))?;
    let points = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<PopGridPoint>, _>>()
        .map_err(|e| parse(e.to_string()))?;
    if points.is_empty() {
        return Err(parse("grid has no points".into()));
    }
    Ok(points)
}

fn pop_check(a: &PopCheckArgs) -> Result<()> {
    let points = match a.grid.as_str() {
        "default" => default_pop_grid(),
        file => read_grid(Path::new(file))?,
    };
    let quad = gauss_hermite_rule(a.quad_order)?;
    let rows = pop_check_grid(&points, &quad)?;
    let resolved = json!({ "grid": a.grid, "quad_order": a.quad_order, "points": points });
    write_atomic(&a.out, Some(&header("pop-check", &resolved)), |w| {
        write_pop_check_csv(&rows, w)
    })
}

fn init_check(a: &InitCheckArgs) -> Result<()> {
    if a.seeds == 0 {
        return Err(invalid("--seeds must be at least 1"));
    }
    let truth = first_axis_truth(a.d, a.snr, 1.0)?;
    let mut rows = Vec::with_capacity(a.seeds);
    for i in 0..a.seeds {
        let base = mix_seed(a.seed, &[i as u64]);
        let data = generate_dataset(&truth, a.n, mix_seed(base, &[0]))?;
        let s = spectral_init(data.observations(), mix_seed(base, &[1]))?;
        let c = cosine(&s.v1, truth.theta_star());
        rows.push([
            i.to_string(),
            fmt(s.lambda1),
            fmt((1.0 - c * c).max(0.0).sqrt()),
            fmt(mlr_em::numerics::norm(&s.theta0)),
            s.low_confidence.to_string(),
        ]);
    }
    write_atomic(&a.out, Some(&header("init-check", a)), |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "seed_index",
            "lambda1",
            "sin_angle",
            "norm_theta0",
            "low_confidence",
        ])
        .map_err(csv_error)?;
        for r in &rows {
            out.write_record(r).map_err(csv_error)?;
        }
        out.flush().map_err(|e| invalid(e.to_string()))
    })
}
