use std::fs;
use std::path::Path;

use iadbench_core::detector::MemoryBank;
use iadbench_runner::results::LatencyRecord;
use iadbench_runner::{
    emit_report, parse_config, run_experiment, CellStatus, MetricName, MetricValue, ReportFormat,
    RunOptions, RunResults, RunnerError,
};
use serde_json::{json, Value};

/// A small synthetic experiment; `settings` replaces the setting list.
fn config_json(settings: Value, out: &Path) -> String {
    json!({
        "schema": 1,
        "seed": 7,
        "dataset": {"synthetic": {
            "categories": 2,
            "normals_train": 10,
            "normals_test": 5,
            "abnormals_test": 6,
            "image_size": 32,
            "defect_kinds": ["scratch", "blob", "missing-patch"]
        }},
        "setting": settings,
        "detector": {"feature": {"patch_size": 8, "stride": 4}, "coreset": {"fraction": 0.25}, "smoothing_sigma": 2.0},
        "output_dir": out
    })
    .to_string()
}

fn run(settings: Value, threads: usize, save_banks: bool) -> (RunResults, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&config_json(settings, dir.path())).unwrap();
    let r = run_experiment(
        &cfg,
        &RunOptions {
            threads,
            save_banks,
        },
    )
    .unwrap();
    (r, dir)
}

fn without_timings(text: &str) -> Value {
    let mut v: Value = serde_json::from_str(text).unwrap();
    v.as_object_mut().unwrap().remove("timings");
    v
}

#[test]
fn unsupervised_cell_has_every_metric() {
    let (r, dir) = run(json!([{"type": "unsupervised"}]), 2, false);
    assert_eq!(r.cells.len(), 2);
    for c in &r.cells {
        assert_eq!(c.status, CellStatus::Ok);
        for m in MetricName::ALL {
            assert!(
                matches!(c.metric(m), Some(MetricValue::Value(_))),
                "{m:?} missing in {}",
                c.id
            );
        }
    }
    for f in ["results.json", "results.csv", "report.md"] {
        assert!(dir.path().join(f).is_file(), "{f} not written");
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let settings = json!([{"type": "unsupervised"}, {"type": "noisy", "noise_ratios": [0.1]}, {"type": "continual"}]);
    let (a, _da) = run(settings.clone(), 1, false);
    let (b, _db) = run(settings, 4, false);
    assert_eq!(
        without_timings(&a.to_canonical_json()),
        without_timings(&b.to_canonical_json())
    );
}

#[test]
fn results_round_trip_and_hash_is_checked() {
    let (r, dir) = run(json!([{"type": "unsupervised"}]), 2, false);
    let text = fs::read_to_string(dir.path().join("results.json")).unwrap();
    let back = RunResults::from_json(&text).unwrap();
    assert_eq!(back, r);

    let mut tampered: Value = serde_json::from_str(&text).unwrap();
    tampered["config"]["seed"] = json!(8);
    let err = RunResults::from_json(&tampered.to_string()).unwrap_err();
    assert!(matches!(err, RunnerError::HashMismatch { .. }));
    assert_eq!(err.exit_code(), 3);

    for format in [ReportFormat::Csv, ReportFormat::Markdown] {
        let on_disk = fs::read_to_string(dir.path().join(format.file_name())).unwrap();
        assert_eq!(emit_report(&back, format).unwrap(), on_disk);
    }
}

#[test]
fn noise_sweep_yields_four_cells_per_category() {
    let ratios = [0.05, 0.1, 0.15, 0.2];
    let (r, _d) = run(json!([{"type": "noisy", "noise_ratios": ratios}]), 4, false);
    assert_eq!(r.cells.len(), 8);
    for cat in ["synth00", "synth01"] {
        let cells: Vec<_> = r.cells.iter().filter(|c| c.category == cat).collect();
        assert_eq!(cells.len(), 4);
        for (c, ratio) in cells.iter().zip(ratios) {
            let p = c.provenance.as_ref().unwrap();
            let achieved = p.achieved_noise_ratio.unwrap();
            assert!((achieved - ratio).abs() <= 1.0 / p.train_count as f64 + 1e-12);
            let injected = p.train_count - 10;
            assert_eq!(p.moves.len(), injected);
        }
    }
}

#[test]
fn bank_bytes_match_snapshot_payload() {
    let (r, dir) = run(
        json!([{"type": "unsupervised"}, {"type": "supervised", "n": 2}]),
        2,
        true,
    );
    for c in &r.cells {
        let stem = if c.setting == "unsupervised" {
            c.category.clone()
        } else {
            format!("{}.supervised_n2", c.category)
        };
        let path = dir.path().join("banks").join(format!("{stem}.iadb"));
        let bank = MemoryBank::read_snapshot(&path).unwrap();
        assert_eq!(bank.payload_bytes(), c.bank_bytes);
        assert_eq!(bank.len() * bank.dim() * 4, c.bank_bytes);
        let header = 18 + 4 * bank.len();
        assert_eq!(
            fs::metadata(&path).unwrap().len() as usize,
            header + c.bank_bytes
        );
    }
}

#[test]
fn latency_percentiles_are_ordered() {
    let (r, _d) = run(json!([{"type": "unsupervised"}]), 1, false);
    assert_eq!(r.timings.cells.len(), 2);
    for rec in r.timings.cells.values() {
        let LatencyRecord::Stats(s) = rec else {
            panic!("expected latency stats")
        };
        assert_eq!(s.samples, 11 - 3);
        assert!(s.p50_ms > 0.0 && s.p50_ms <= s.p95_ms);
    }
}

#[test]
fn csv_has_one_row_per_cell() {
    let (_r, dir) = run(json!([{"type": "unsupervised"}]), 2, false);
    let csv = fs::read_to_string(dir.path().join("results.csv")).unwrap();
    let lines: Vec<_> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(
        lines[0],
        "category,setting,image_auroc,image_ap,pixel_auroc,pixel_ap,aupro,spro,fm,latency_p50_ms,bank_bytes"
    );
}

#[test]
fn continual_fills_lower_triangle() {
    let dir = tempfile::tempdir().unwrap();
    let text = config_json(json!([{"type": "continual"}]), dir.path())
        .replace("\"categories\":2", "\"categories\":3");
    let cfg = parse_config(&text).unwrap();
    let r = run_experiment(
        &cfg,
        &RunOptions {
            threads: 2,
            save_banks: false,
        },
    )
    .unwrap();
    let c = r.continual.as_ref().unwrap();
    assert_eq!(c.task_matrix.iter().map(Vec::len).sum::<usize>(), 6);
    assert_eq!(c.fm_per_task.len(), 2);
    assert_eq!(r.cells.len(), 3);
    assert!(matches!(r.cells[2].fm, Some(MetricValue::Na(_))));
    let md = fs::read_to_string(dir.path().join("report.md")).unwrap();
    assert!(md.contains("AUC↑ / FM↓"));
}

#[test]
fn failing_cell_does_not_abort_the_matrix() {
    let (r, dir) = run(
        json!([{"type": "unsupervised"}, {"type": "supervised", "n": 50}]),
        2,
        false,
    );
    assert_eq!(r.cells.len(), 4);
    assert_eq!(r.failed_cells(), 2);
    assert!(r
        .cells
        .iter()
        .filter(|c| c.setting == "unsupervised")
        .all(|c| c.status == CellStatus::Ok));
    let failed = r
        .cells
        .iter()
        .find(|c| c.status == CellStatus::Failed)
        .unwrap();
    assert!(failed.error.is_some());
    assert!(fs::read_to_string(dir.path().join("report.md"))
        .unwrap()
        .contains("Failed cells"));
}

#[test]
fn unreadable_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value =
        serde_json::from_str(&config_json(json!([{"type": "unsupervised"}]), dir.path())).unwrap();
    v["dataset"] = json!({"path": dir.path().join("nowhere")});
    let err = run_experiment(
        &parse_config(&v.to_string()).unwrap(),
        &RunOptions::default(),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn unknown_category_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value =
        serde_json::from_str(&config_json(json!([{"type": "unsupervised"}]), dir.path())).unwrap();
    v["categories"] = json!(["nope"]);
    let err = run_experiment(
        &parse_config(&v.to_string()).unwrap(),
        &RunOptions::default(),
    )
    .unwrap_err();
    assert!(
        matches!(err, RunnerError::Data(ref m) if m.contains("nope")),
        "{err}"
    );
}

#[test]
fn efficiency_needs_warmup_plus_five() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = parse_config(&config_json(json!([{"type": "unsupervised"}]), dir.path())).unwrap();
    let ds = iadbench_runner::load_source(&cfg).unwrap();
    let train: Vec<_> = ds.train["synth00"].iter().collect();
    let det = iadbench_runner::Detector::fit(&cfg.detector, &train, 1).unwrap();
    let test = &ds.test["synth00"];
    let stats = iadbench_runner::measure_efficiency(&det, &test[..10], 3).unwrap();
    assert_eq!(stats.latency.samples, 7);
    assert_eq!(stats.bank_bytes, det.bank().len() * det.bank().dim() * 4);
    assert!(matches!(
        iadbench_runner::measure_efficiency(&det, &test[..4], 3),
        Err(RunnerError::TooFewSamples { needed: 8, got: 4 })
    ));
}
