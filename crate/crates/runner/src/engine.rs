use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use iadbench_core::dataset::{load_dataset, Dataset, Sample};
use iadbench_core::detector::MemoryBank;
use iadbench_core::metrics::{
    aupro, auroc, average_precision, connected_regions, forgetting_measure, mean_spro,
    pixel_scores, LabeledScores, MetricError, RegionSet, Saturation, ScoreMap, TaskMatrix,
};
use iadbench_core::protocols::{
    augment_rotations, inject_noise, make_continual, make_fewshot, make_fewshot_any,
    make_supervised, make_unsupervised, Split,
};
use iadbench_core::rng::derive_seed;
use iadbench_core::synth::synth_dataset;

use crate::config::{
    config_hash, hash_seed, ExperimentConfig, MetricName, SettingEntry, DATA_ROOT_ENV,
    SCHEMA_VERSION,
};
use crate::efficiency::{peak_rss_bytes, summarize_latencies, DEFAULT_WARMUP};
use crate::pipeline::{Detector, Inference};
use crate::report::write_reports;
use crate::results::{
    CellResult, CellStatus, ContinualResult, LatencyRecord, MetricValue, Provenance, RunResults,
    Timings,
};
use crate::RunnerError;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub threads: usize,
    /// Write every cell's bank under `<output_dir>/banks/`.
    pub save_banks: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: std::thread::available_parallelism().map_or(1, |n| n.get()),
            save_banks: false,
        }
    }
}

/// One non-continual setting instance.
#[derive(Debug, Clone, PartialEq)]
pub enum CellSetting {
    Unsupervised,
    Supervised {
        n: usize,
    },
    Fewshot {
        m: usize,
        rotation_k: usize,
        off_grid: bool,
    },
    Noisy {
        ratio: f64,
        off_grid: bool,
    },
}

impl CellSetting {
    pub fn label(&self) -> String {
        match self {
            CellSetting::Unsupervised => "unsupervised".into(),
            CellSetting::Supervised { n } => format!("supervised n={n}"),
            CellSetting::Fewshot { m, rotation_k, .. } => format!("fewshot m={m} k={rotation_k}"),
            CellSetting::Noisy { ratio, .. } => format!("noisy r={ratio}"),
        }
    }
}

pub const CONTINUAL_LABEL: &str = "continual";

enum Job {
    Cell {
        category: String,
        setting: CellSetting,
    },
    Continual {
        order: Vec<String>,
    },
}

#[derive(Default)]
struct JobOutput {
    cells: Vec<CellResult>,
    timings: Vec<(String, LatencyRecord)>,
    banks: Vec<(String, MemoryBank)>,
    continual: Option<ContinualResult>,
}

/// Loads the dataset named by the config.
pub fn load_source(cfg: &ExperimentConfig) -> Result<Dataset, RunnerError> {
    if let Some(spec) = &cfg.dataset.synthetic {
        return synth_dataset(spec, cfg.dataset.seed.unwrap_or(cfg.seed)).map_err(|e| {
            RunnerError::Config {
                path: "dataset.synthetic".into(),
                message: e.to_string(),
            }
        });
    }
    let root: PathBuf = match &cfg.dataset.path {
        Some(p) => p.clone(),
        None => std::env::var_os(DATA_ROOT_ENV)
            .map(PathBuf::from)
            .ok_or_else(|| RunnerError::Config {
                path: "dataset".into(),
                message: format!("no `path` or `synthetic` given and {DATA_ROOT_ENV} is unset"),
            })?,
    };
    let wanted = wanted_categories(cfg);
    load_dataset(&root, wanted.as_deref()).map_err(|e| RunnerError::Data(e.to_string()))
}

fn wanted_categories(cfg: &ExperimentConfig) -> Option<Vec<String>> {
    if cfg.categories.is_empty() {
        return None;
    }
    let mut all = cfg.categories.clone();
    for s in &cfg.setting {
        if let SettingEntry::Continual { order } = s {
            all.extend(
                order
                    .iter()
                    .filter(|c| !cfg.categories.contains(c))
                    .cloned(),
            );
        }
    }
    Some(all)
}

fn resolve_categories(cfg: &ExperimentConfig, ds: &Dataset) -> Result<Vec<String>, RunnerError> {
    let cats = if cfg.categories.is_empty() {
        ds.categories.clone()
    } else {
        cfg.categories.clone()
    };
    for c in cats.iter().chain(cfg.setting.iter().flat_map(|s| match s {
        SettingEntry::Continual { order } => order.as_slice(),
        _ => &[],
    })) {
        if !ds.categories.contains(c) {
            return Err(RunnerError::Data(format!("unknown category {c}")));
        }
    }
    Ok(cats)
}

fn plan(cfg: &ExperimentConfig, categories: &[String]) -> Vec<Job> {
    let mut jobs = Vec::new();
    for entry in &cfg.setting {
        let settings: Vec<CellSetting> = match entry {
            SettingEntry::Unsupervised => vec![CellSetting::Unsupervised],
            SettingEntry::Supervised { n } => vec![CellSetting::Supervised { n: *n }],
            SettingEntry::Fewshot {
                m,
                rotation_k,
                allow_off_grid,
            } => vec![CellSetting::Fewshot {
                m: *m,
                rotation_k: *rotation_k,
                off_grid: *allow_off_grid,
            }],
            SettingEntry::Noisy {
                noise_ratios,
                allow_off_grid,
            } => noise_ratios
                .iter()
                .map(|&ratio| CellSetting::Noisy {
                    ratio,
                    off_grid: *allow_off_grid,
                })
                .collect(),
            SettingEntry::Continual { order } => {
                let order = if order.is_empty() {
                    categories.to_vec()
                } else {
                    order.clone()
                };
                jobs.push(Job::Continual { order });
                continue;
            }
        };
        for setting in settings {
            for category in categories {
                jobs.push(Job::Cell {
                    category: category.clone(),
                    setting: setting.clone(),
                });
            }
        }
    }
    jobs
}

/// Runs the whole matrix and writes `results.json`, `results.csv` and
/// `report.md` under the output directory. Failing cells are recorded, not
/// propagated; only config, data and I/O problems abort.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
) -> Result<RunResults, RunnerError> {
    cfg.validate()?;
    let dataset = load_source(cfg)?;
    let categories = resolve_categories(cfg, &dataset)?;
    let hash = config_hash(cfg);
    let root_seed = hash_seed(&hash);
    let jobs = plan(cfg, &categories);

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| RunnerError::ThreadPool(e.to_string()))?;
    let outputs: Vec<JobOutput> = pool.install(|| {
        jobs.par_iter()
            .map(|job| match job {
                Job::Cell { category, setting } => {
                    run_cell(&dataset, cfg, category, setting, root_seed)
                }
                Job::Continual { order } => run_continual(
                    &dataset,
                    cfg,
                    order,
                    derive_seed(root_seed, CONTINUAL_LABEL),
                ),
            })
            .collect()
    });

    let mut results = RunResults {
        schema: SCHEMA_VERSION,
        config_hash: hash,
        config: cfg.canonical_value(),
        seed: cfg.seed,
        metrics: cfg.requested_metrics(),
        cells: Vec::new(),
        continual: None,
        timings: Timings {
            threads: opts.threads.max(1),
            ..Timings::default()
        },
    };
    let mut banks = Vec::new();
    for out in outputs {
        results.cells.extend(out.cells);
        results.timings.cells.extend(out.timings);
        banks.extend(out.banks);
        if out.continual.is_some() {
            results.continual = out.continual;
        }
    }
    results.timings.peak_rss_bytes = peak_rss_bytes();

    write_reports(&results, &cfg.output_dir)?;
    if opts.save_banks {
        save_banks(&cfg.output_dir.join("banks"), &banks)?;
    }
    Ok(results)
}

fn save_banks(dir: &Path, banks: &[(String, MemoryBank)]) -> Result<(), RunnerError> {
    fs::create_dir_all(dir).map_err(|e| RunnerError::io(dir, e))?;
    for (name, bank) in banks {
        let path = dir.join(format!("{name}.iadb"));
        bank.write_snapshot(&path).map_err(|e| RunnerError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    }
    Ok(())
}

/// Snapshot file stem for a cell: the bare category for the unsupervised
/// cell, `<category>.<setting>` otherwise.
pub fn bank_file_stem(category: &str, label: &str) -> String {
    if label == "unsupervised" {
        return category.to_string();
    }
    let slug: String = label
        .chars()
        .map(|c| if c == ' ' { '_' } else { c })
        .filter(|c| *c != '=')
        .collect();
    format!("{category}.{slug}")
}

fn failed_cell(
    id: String,
    category: &str,
    setting: &str,
    seed: u64,
    err: &RunnerError,
) -> CellResult {
    CellResult {
        id,
        category: category.to_string(),
        setting: setting.to_string(),
        seed,
        status: CellStatus::Failed,
        error: Some(err.to_string()),
        metrics: BTreeMap::new(),
        fm: None,
        bank_vectors: 0,
        bank_bytes: 0,
        provenance: None,
    }
}

fn build_split(
    ds: &Dataset,
    category: &str,
    setting: &CellSetting,
    seed: u64,
) -> Result<Split, RunnerError> {
    let split = match setting {
        CellSetting::Unsupervised => make_unsupervised(ds, category),
        CellSetting::Supervised { n } => make_supervised(ds, category, *n, seed),
        CellSetting::Fewshot {
            m,
            rotation_k,
            off_grid,
        } => {
            let base = if *off_grid {
                make_fewshot_any(ds, category, *m, seed)
            } else {
                make_fewshot(ds, category, *m, seed)
            };
            base.and_then(|s| augment_rotations(&s, *rotation_k))
        }
        CellSetting::Noisy { ratio, .. } => inject_noise(ds, category, *ratio, seed),
    }
    .map_err(|e| RunnerError::Protocol(e.to_string()))?;
    split
        .verify_conservation(
            ds.train_of(category)
                .map_err(|e| RunnerError::Data(e.to_string()))?,
            ds.test_of(category)
                .map_err(|e| RunnerError::Data(e.to_string()))?,
        )
        .map_err(|e| RunnerError::Protocol(e.to_string()))?;
    Ok(split)
}

fn run_cell(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    category: &str,
    setting: &CellSetting,
    root_seed: u64,
) -> JobOutput {
    let label = setting.label();
    let id = format!("{category}/{label}");
    let seed = derive_seed(root_seed, &id);
    let attempt = || -> Result<JobOutput, RunnerError> {
        let split = build_split(ds, category, setting, derive_seed(seed, "split"))?;
        let train: Vec<&Sample> = split.observed_normals().collect();
        let det = Detector::fit(&cfg.detector, &train, derive_seed(seed, "coreset"))?;
        let outputs = infer_all(&det, &split.test)?;
        let metrics = compute_metrics(&outputs, &split.test, ds, cfg);
        let cell = CellResult {
            id: id.clone(),
            category: category.to_string(),
            setting: label.clone(),
            seed,
            status: CellStatus::Ok,
            error: None,
            metrics,
            fm: None,
            bank_vectors: det.bank().len(),
            bank_bytes: det.bank().payload_bytes(),
            provenance: Some(Provenance {
                train_count: split.train.len(),
                observed_normals: train.len(),
                test_count: split.test.len(),
                achieved_noise_ratio: split.achieved_noise_ratio(),
                moves: split.provenance.clone(),
            }),
        };
        Ok(JobOutput {
            cells: vec![cell],
            timings: vec![(id.clone(), latency_record(&outputs))],
            banks: vec![(bank_file_stem(category, &label), det.bank().clone())],
            continual: None,
        })
    };
    attempt().unwrap_or_else(|e| JobOutput {
        cells: vec![failed_cell(id.clone(), category, &label, seed, &e)],
        ..JobOutput::default()
    })
}

fn run_continual(ds: &Dataset, cfg: &ExperimentConfig, order: &[String], seed: u64) -> JobOutput {
    continual_inner(ds, cfg, order, seed).unwrap_or_else(|e| JobOutput {
        cells: order
            .iter()
            .map(|c| {
                failed_cell(
                    format!("{c}/{CONTINUAL_LABEL}"),
                    c,
                    CONTINUAL_LABEL,
                    seed,
                    &e,
                )
            })
            .collect(),
        ..JobOutput::default()
    })
}

fn continual_inner(
    ds: &Dataset,
    cfg: &ExperimentConfig,
    order: &[String],
    seed: u64,
) -> Result<JobOutput, RunnerError> {
    let seq = make_continual(ds, order, seed).map_err(|e| RunnerError::Protocol(e.to_string()))?;
    let k = seq.tasks.len();
    let mut det = Detector::empty(&cfg.detector);
    let mut matrix = TaskMatrix::new(k);
    let mut final_outputs = Vec::with_capacity(k);
    for task in &seq.tasks {
        let train: Vec<&Sample> = task.split.observed_normals().collect();
        det.extend(
            &train,
            task.index as u32,
            derive_seed(seed, &format!("task/{}", task.index)),
        )?;
        for earlier in &seq.tasks[..task.index] {
            let outputs = infer_all(&det, &earlier.split.test)?;
            let a = image_scores(&outputs, &earlier.split.test)
                .and_then(|s| auroc(&s))
                .map_err(|e| {
                    RunnerError::Metric(format!("image AUROC on task {}: {e}", earlier.index))
                })?;
            matrix
                .set(task.index, earlier.index, a)
                .map_err(|e| RunnerError::Metric(e.to_string()))?;
            if task.index == k {
                final_outputs.push(outputs);
            }
        }
    }
    let fm = forgetting_measure(&matrix).map_err(|e| RunnerError::Metric(e.to_string()))?;

    let mut out = JobOutput::default();
    for (task, outputs) in seq.tasks.iter().zip(&final_outputs) {
        let id = format!("{}/{CONTINUAL_LABEL}", task.category);
        let fm_value = match fm.per_task.get(task.index - 1) {
            Some(v) => MetricValue::Value(*v),
            None => MetricValue::Na("last-task".into()),
        };
        out.cells.push(CellResult {
            id: id.clone(),
            category: task.category.clone(),
            setting: CONTINUAL_LABEL.into(),
            seed,
            status: CellStatus::Ok,
            error: None,
            metrics: compute_metrics(outputs, &task.split.test, ds, cfg),
            fm: Some(fm_value),
            bank_vectors: det.bank().len(),
            bank_bytes: det.bank().payload_bytes(),
            provenance: Some(Provenance {
                train_count: task.split.train.len(),
                observed_normals: task.split.observed_normals().count(),
                test_count: task.split.test.len(),
                achieved_noise_ratio: None,
                moves: task.split.provenance.clone(),
            }),
        });
        out.timings.push((id, latency_record(outputs)));
    }
    out.banks
        .push((CONTINUAL_LABEL.to_string(), det.bank().clone()));
    out.continual = Some(ContinualResult {
        order: order.to_vec(),
        task_matrix: matrix
            .rows()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|v| v.expect("every entry was set"))
                    .collect()
            })
            .collect(),
        fm_per_task: fm.per_task,
        fm_mean: fm.mean,
    });
    Ok(out)
}

fn infer_all(det: &Detector, samples: &[Sample]) -> Result<Vec<Inference>, RunnerError> {
    samples.iter().map(|s| det.infer(s)).collect()
}

fn latency_record(outputs: &[Inference]) -> LatencyRecord {
    let timings: Vec<_> = outputs.iter().map(|o| o.elapsed).collect();
    match summarize_latencies(&timings, DEFAULT_WARMUP) {
        Ok(s) => LatencyRecord::Stats(s),
        Err(e) => LatencyRecord::Na(e.to_string()),
    }
}

fn image_scores(outputs: &[Inference], test: &[Sample]) -> Result<LabeledScores, MetricError> {
    LabeledScores::new(
        outputs.iter().map(|o| o.score).collect(),
        test.iter().map(|s| s.label.is_abnormal()).collect(),
    )
}

fn na_reason(e: &MetricError) -> String {
    match e {
        MetricError::DegenerateLabels => "degenerate-labels".into(),
        MetricError::NoPositives => "no-positives".into(),
        MetricError::NoRegions => "no-regions".into(),
        MetricError::NoNormalPixels => "no-normal-pixels".into(),
        other => format!("error: {other}"),
    }
}

fn as_value(r: Result<f64, MetricError>) -> MetricValue {
    match r {
        Ok(v) => MetricValue::Value(v),
        Err(e) => MetricValue::Na(na_reason(&e)),
    }
}

fn ranked(
    data: &Result<LabeledScores, MetricError>,
    f: fn(&LabeledScores) -> Result<f64, MetricError>,
) -> MetricValue {
    match data {
        Ok(d) => as_value(f(d)),
        Err(e) => MetricValue::Na(na_reason(e)),
    }
}

/// Region sets for sPRO; `None` when the dataset publishes no saturations.
/// Defect types absent from the table saturate at their full region area.
fn spro_regions(test: &[Sample], ds: &Dataset) -> Option<Vec<RegionSet>> {
    if ds.saturation_table.is_empty() {
        return None;
    }
    let sets = test
        .iter()
        .map(|s| {
            let sat = ds
                .saturation_table
                .get(&s.defect_type)
                .map(|&a| Saturation::Relative(a));
            connected_regions(&s.eval_mask(), sat)
        })
        .collect();
    Some(sets)
}

fn compute_metrics(
    outputs: &[Inference],
    test: &[Sample],
    ds: &Dataset,
    cfg: &ExperimentConfig,
) -> BTreeMap<String, MetricValue> {
    let maps: Vec<ScoreMap> = outputs.iter().map(|o| o.map.clone()).collect();
    let masks: Vec<_> = test.iter().map(|s| s.eval_mask()).collect();
    let image = image_scores(outputs, test);
    let pixel = pixel_scores(&maps, &masks);
    let mut out = BTreeMap::new();
    for m in cfg.requested_metrics() {
        let v = match m {
            MetricName::ImageAuroc => ranked(&image, auroc),
            MetricName::ImageAp => ranked(&image, average_precision),
            MetricName::PixelAuroc => ranked(&pixel, auroc),
            MetricName::PixelAp => ranked(&pixel, average_precision),
            MetricName::Aupro => as_value(aupro(&maps, &masks, cfg.metrics.pro_limit)),
            MetricName::Spro => match spro_regions(test, ds) {
                Some(sets) => as_value(mean_spro(&maps, &sets, cfg.metrics.spro_limit)),
                None => MetricValue::Na("no-saturations".into()),
            },
        };
        out.insert(m.key().to_string(), v);
    }
    out
}
