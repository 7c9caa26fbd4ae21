use super::*;

fn small_spec() -> SweepSpec {
    SweepSpec {
        d: 3,
        n_list: vec![128],
        snr_list: vec![1.0],
        reps: 1,
        base_seed: 17,
        ..SweepSpec::default()
    }
}

#[test]
fn single_cell_shape() {
    let r = run_rate_sweep(&small_spec()).unwrap();
    assert_eq!(r.rows.len(), 1);
    assert_eq!(r.runs.len(), 1);
    assert_eq!(r.rows[0].sem, 0.0);
    assert_eq!(r.rows[0].mean_err, r.rows[0].median_err);
}

#[test]
fn grids() {
    assert_eq!(NGrid::Sqrt2.sizes(128, 5), vec![128, 180, 256, 362, 512]);
    assert_eq!(NGrid::Pow2.sizes(128, 3), vec![128, 256, 512]);
    assert_eq!("sqrt2".parse::<NGrid>().unwrap(), NGrid::Sqrt2);
    assert!("cubic".parse::<NGrid>().is_err());
}

#[test]
fn spec_validation() {
    let ok = small_spec();
    assert!(ok.validate().is_ok());
    for bad in [
        SweepSpec {
            n_list: vec![256, 128],
            ..ok.clone()
        },
        SweepSpec {
            n_list: vec![2],
            ..ok.clone()
        },
        SweepSpec {
            reps: 0,
            ..ok.clone()
        },
        SweepSpec {
            snr_list: vec![-1.0],
            ..ok.clone()
        },
        SweepSpec {
            snr_list: vec![],
            ..ok.clone()
        },
        SweepSpec { d: 0, ..ok.clone() },
    ] {
        assert!(run_rate_sweep(&bad).is_err());
    }
}

#[test]
fn failures_are_counted_not_raised() {
    let spec = SweepSpec {
        n_list: vec![256, 512],
        snr_list: vec![0.05],
        reps: 3,
        init: InitScheme::RandomSphere { norm: 0.2 },
        em_config: EmConfig {
            max_iters: 2,
            ..EmConfig::default()
        },
        ..small_spec()
    };
    let r = run_rate_sweep(&spec).unwrap();
    assert_eq!(r.rows.len(), 2);
    for row in &r.rows {
        assert_eq!(row.failures, 3);
        assert_eq!(row.max_iters_reached, 3);
        assert_eq!(row.mean_iters, 2.0);
        assert!(row.mean_err.is_finite());
    }
}

#[test]
fn aborted_runs_are_recorded() {
    // n = d makes the spectral moment matrix and the covariance barely usable;
    // a huge variance-free signal drives σ² to collapse.
    let spec = SweepSpec {
        d: 2,
        n_list: vec![2],
        snr_list: vec![1.0],
        reps: 4,
        variant: EmVariant::UnknownVariance,
        init: InitScheme::RandomSphere { norm: 1.0 },
        ..small_spec()
    };
    let r = run_rate_sweep(&spec).unwrap();
    let row = &r.rows[0];
    assert_eq!(row.failures, row.aborted + row.max_iters_reached);
    assert_eq!(r.runs.len(), 4);
    assert!(r.runs.iter().filter(|x| x.aborted.is_some()).count() == row.aborted);
}

#[cfg(feature = "parallel")]
#[test]
fn results_do_not_depend_on_thread_count() {
    let spec = SweepSpec {
        n_list: vec![128, 256],
        snr_list: vec![0.5, 2.0],
        reps: 4,
        ..small_spec()
    };
    let single = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let many = rayon::ThreadPoolBuilder::new()
        .num_threads(4)
        .build()
        .unwrap();
    let a = single.install(|| run_rate_sweep(&spec)).unwrap();
    let b = many.install(|| run_rate_sweep(&spec)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn trajectory_single_rep_quantiles_collapse() {
    let spec = SweepSpec {
        reps: 1,
        ..small_spec()
    };
    let rows = run_trajectory_experiment(&spec).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(rows[0].iter, 0);
    for r in &rows {
        assert_eq!(r.p10_err, r.mean_err);
        assert_eq!(r.p90_err, r.mean_err);
    }
    let two_n = SweepSpec {
        n_list: vec![128, 256],
        ..small_spec()
    };
    assert!(run_trajectory_experiment(&two_n).is_err());
}

#[test]
fn trajectory_carries_final_values_forward() {
    let spec = SweepSpec {
        reps: 5,
        snr_list: vec![2.0],
        ..small_spec()
    };
    let rows = run_trajectory_experiment(&spec).unwrap();
    let last = rows.last().unwrap();
    let sweep = run_rate_sweep(&spec).unwrap();
    assert!((last.mean_err - sweep.rows[0].mean_err).abs() < 1e-12);
}

#[test]
fn iteration_scaling_singleton() {
    let rows = run_iteration_scaling(&small_spec()).unwrap();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].mean_iters >= 1.0);
}

#[test]
fn csv_export_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let empty = SweepResult {
        spec: small_spec(),
        rows: vec![],
        runs: vec![],
    };
    let path = dir.path().join("empty.csv");
    export(&empty, &path, ExportFormat::Csv).unwrap();
    assert_eq!(
        std::fs::read_to_string(&path).unwrap(),
        SWEEP_CSV_HEADER.join(",") + "\n"
    );

    let r = run_rate_sweep(&small_spec()).unwrap();
    let path = dir.path().join("one.csv");
    export(&r, &path, ExportFormat::Csv).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2);
    let mut rdr = csv::Reader::from_path(&path).unwrap();
    let rec = rdr.records().next().unwrap().unwrap();
    let row = &r.rows[0];
    assert_eq!(rec[0].parse::<f64>().unwrap(), row.snr);
    assert_eq!(rec[1].parse::<usize>().unwrap(), row.n);
    assert_eq!(rec[2].parse::<f64>().unwrap(), row.mean_err);
    assert_eq!(rec[3].parse::<f64>().unwrap(), row.median_err);
    assert_eq!(rec[4].parse::<f64>().unwrap(), row.sem);
    assert_eq!(rec[5].parse::<f64>().unwrap(), row.mean_iters);
    assert_eq!(rec[6].parse::<f64>().unwrap(), row.p90_iters);
    assert_eq!(rec[7].parse::<usize>().unwrap(), row.failures);
}

#[test]
fn json_export_replays_bitwise() {
    let spec = SweepSpec {
        n_list: vec![128, 256],
        snr_list: vec![0.3],
        reps: 3,
        variant: EmVariant::UnknownVariance,
        init: InitScheme::RandomSphere { norm: 0.7 },
        ..small_spec()
    };
    let r = run_rate_sweep(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    export(&r, &path, ExportFormat::Json).unwrap();
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let echoed: SweepSpec = serde_json::from_value(v["spec"].clone()).unwrap();
    assert_eq!(echoed, spec);
    let rows: Vec<SweepRow> = serde_json::from_value(v["rows"].clone()).unwrap();
    let replay = run_rate_sweep(&echoed).unwrap();
    assert_eq!(rows, replay.rows);
    assert!(replay.rows[0].mean_sigma_sq_err.is_some());
}

#[test]
fn spec_json_defaults_fill_missing_fields() {
    let spec =
        SweepSpec::from_json(r#"{"d": 4, "snr_list": [0.5], "init": {"scheme": "spectral"}}"#)
            .unwrap();
    assert_eq!(spec.d, 4);
    assert_eq!(spec.reps, 200);
    assert_eq!(spec.init, InitScheme::Spectral);
    assert_eq!(spec.em_config.tol, 1e-4);
    assert!(SweepSpec::from_json("{\"d\": \"five\"}").is_err());
    assert_eq!(SweepSpec::from_json(&spec.to_json()).unwrap(), spec);
}

#[test]
fn random_direction_truth_is_used() {
    let spec = SweepSpec {
        theta_star_direction: ThetaStarDirection::RandomPerRep,
        reps: 2,
        ..small_spec()
    };
    let r = run_rate_sweep(&spec).unwrap();
    assert!(r.rows[0].mean_err < 0.5);
}

#[test]
fn seed_change_moves_individual_runs() {
    let a = run_rate_sweep(&small_spec()).unwrap();
    let b = run_rate_sweep(&SweepSpec {
        base_seed: 18,
        ..small_spec()
    })
    .unwrap();
    assert_ne!(a.runs[0].final_err, b.runs[0].final_err);
}
