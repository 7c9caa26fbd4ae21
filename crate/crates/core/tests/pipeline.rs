use mlr_em::em::{run_em, two_phase_run, EmConfig, EmState, EmVariant, RunStatus};
use mlr_em::harness::{export, run_rate_sweep, ExportFormat, SweepSpec};
use mlr_em::init::{initialize, InitScheme};
use mlr_em::io::{read_comment_header, read_dataset_csv, write_atomic, write_dataset_csv};
use mlr_em::model::{generate_dataset, residual_error, GroundTruth};

#[test]
fn dataset_round_trips_through_csv_and_fits_identically() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    let truth = GroundTruth::on_first_axis(4, 1.5).unwrap();
    let data = generate_dataset(&truth, 3000, 11).unwrap();
    write_atomic(&path, Some("{\"seed\": 11}"), |w| {
        write_dataset_csv(data.observations(), w)
    })
    .unwrap();

    let read = read_dataset_csv(&path).unwrap();
    assert_eq!(read.x(), data.observations().x());
    assert_eq!(read.y(), data.observations().y());
    assert_eq!(read_comment_header(&path).unwrap().trim(), "{\"seed\": 11}");

    let config = EmConfig::default();
    let theta0 = initialize(&InitScheme::Spectral, &read, None, 3).unwrap();
    let a = run_em(&read, EmState::new(theta0.clone()), &config, Some(&truth)).unwrap();
    let b = run_em(
        data.observations(),
        EmState::new(theta0),
        &config,
        Some(&truth),
    )
    .unwrap();
    assert_eq!(a.state, b.state);
    assert_eq!(a.status, RunStatus::Converged);
    assert!(residual_error(&a.state.theta, &truth).unwrap() < 0.15);
}

#[test]
fn every_variant_recovers_a_strong_signal() {
    let truth = GroundTruth::new(vec![1.6, -1.2, 0.0], 1.0).unwrap();
    let data = generate_dataset(&truth, 20_000, 5).unwrap();
    let obs = data.observations();
    for variant in [
        EmVariant::Standard,
        EmVariant::Easy,
        EmVariant::UnknownVariance,
    ] {
        let config = EmConfig {
            variant,
            ..EmConfig::default()
        };
        let theta0 = initialize(&InitScheme::RandomSphere { norm: 1.0 }, obs, None, 8).unwrap();
        let out = two_phase_run(
            obs,
            EmState::new(theta0),
            &EmConfig {
                phase1_iters: 5,
                ..config
            },
            None,
        )
        .unwrap();
        let err = residual_error(&out.state.theta, &truth).unwrap();
        assert!(err < 0.1, "{variant}: error {err}");
        if variant == EmVariant::UnknownVariance {
            assert!(
                (out.state.sigma_sq - 1.0).abs() < 0.1,
                "sigma_sq {}",
                out.state.sigma_sq
            );
        }
    }
}

#[test]
fn sweep_exports_agree_between_formats() {
    let dir = tempfile::tempdir().unwrap();
    let spec = SweepSpec {
        n_list: vec![256, 1024],
        snr_list: vec![1.0, 2.0],
        reps: 6,
        base_seed: 4,
        ..SweepSpec::default()
    };
    let result = run_rate_sweep(&spec).unwrap();
    export(&result, &dir.path().join("s.csv"), ExportFormat::Csv).unwrap();
    export(&result, &dir.path().join("s.json"), ExportFormat::Json).unwrap();

    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("s.json")).unwrap()).unwrap();
    let replayed: SweepSpec = serde_json::from_value(json["spec"].clone()).unwrap();
    assert_eq!(replayed, spec);

    let mut rdr = csv::Reader::from_path(dir.path().join("s.csv")).unwrap();
    let csv_rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(csv_rows.len(), result.rows.len());
    for (rec, row) in csv_rows.iter().zip(json["rows"].as_array().unwrap()) {
        let mean: f64 = rec[2].parse().unwrap();
        assert_eq!(mean, row["mean_err"].as_f64().unwrap());
        assert_eq!(rec[1].parse::<u64>().unwrap(), row["n"].as_u64().unwrap());
    }
    assert_eq!(run_rate_sweep(&replayed).unwrap().rows, result.rows);
}
