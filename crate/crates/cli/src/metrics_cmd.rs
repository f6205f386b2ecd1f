//! `iadbench metrics`: metrics over externally produced scores.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use iadbench_core::image::{ImageGrid, PixelMask};
use iadbench_core::metrics::{
    aupro, auroc, average_precision, connected_regions, mean_spro, pixel_scores, LabeledScores,
    MetricError, Saturation, ScoreMap,
};
use iadbench_runner::report::fmt4;

use crate::Failure;

pub struct Args {
    pub scores: Option<PathBuf>,
    pub maps: Option<PathBuf>,
    pub masks: Option<PathBuf>,
    pub pro_limit: f64,
    pub spro_limit: f64,
    pub saturation: Option<f64>,
}

pub fn run(args: Args) -> Result<u8, Failure> {
    for (name, v) in [
        ("--pro-limit", args.pro_limit),
        ("--spro-limit", args.spro_limit),
    ] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Failure::config(format!(
                "{name} must be in (0, 1], got {v}"
            )));
        }
    }
    if let Some(s) = args.saturation {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Failure::config(format!(
                "--saturation must be in (0, 1], got {s}"
            )));
        }
    }
    let fields = match (&args.scores, &args.maps, &args.masks) {
        (Some(scores), None, None) => ranking_fields(scores)?,
        (None, Some(maps), Some(masks)) => map_fields(maps, masks, &args)?,
        _ => {
            return Err(Failure::config(
                "give either --scores or both --maps and --masks",
            ))
        }
    };
    println!("{}", render(&fields));
    Ok(0)
}

type Field = (&'static str, Result<f64, MetricError>);

/// Flat JSON object in field order with four-decimal numbers; inapplicable
/// metrics are `null` and explained on standard error.
fn render(fields: &[Field]) -> String {
    let body: Vec<String> = fields
        .iter()
        .map(|(k, v)| match v {
            Ok(x) => format!("\"{k}\": {}", fmt4(*x)),
            Err(e) => {
                eprintln!("iadbench: {k} not applicable: {e}");
                format!("\"{k}\": null")
            }
        })
        .collect();
    format!("{{{}}}", body.join(", "))
}

fn parse_label(raw: &str) -> Option<bool> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "1" | "true" => Some(true),
        "0" | "false" => Some(false),
        _ => None,
    }
}

fn ranking_fields(path: &Path) -> Result<Vec<Field>, Failure> {
    let data = read_scores(path)?;
    Ok(vec![
        ("auroc", auroc(&data)),
        ("ap", average_precision(&data)),
    ])
}

fn read_scores(path: &Path) -> Result<LabeledScores, Failure> {
    let at = |msg: String| Failure::data(format!("{}: {msg}", path.display()));
    let mut reader = csv::Reader::from_path(path).map_err(|e| at(e.to_string()))?;
    let headers = reader.headers().map_err(|e| at(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| at(format!("missing `{name}` column")))
    };
    let (si, li) = (col("score")?, col("label")?);
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| at(e.to_string()))?;
        let line = row + 2;
        let score: f64 = rec
            .get(si)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| at(format!("line {line}: bad score")))?;
        let label = rec
            .get(li)
            .and_then(parse_label)
            .ok_or_else(|| at(format!("line {line}: label must be 0/1 or false/true")))?;
        scores.push(score);
        labels.push(label);
    }
    LabeledScores::new(scores, labels).map_err(|e| at(e.to_string()))
}

fn map_fields(maps_dir: &Path, masks_dir: &Path, args: &Args) -> Result<Vec<Field>, Failure> {
    let (maps, masks) = read_maps(maps_dir, masks_dir)?;
    let mut fields = vec![
        (
            "pixel_auroc",
            pixel_scores(&maps, &masks).and_then(|d| auroc(&d)),
        ),
        (
            "pixel_ap",
            pixel_scores(&maps, &masks).and_then(|d| average_precision(&d)),
        ),
        ("aupro", aupro(&maps, &masks, args.pro_limit)),
    ];
    if let Some(s) = args.saturation {
        let sets: Vec<_> = masks
            .iter()
            .map(|m| connected_regions(m, Some(Saturation::Relative(s))))
            .collect();
        fields.push(("spro", mean_spro(&maps, &sets, args.spro_limit)));
    }
    Ok(fields)
}

/// Score maps keyed by file stem, each paired with `<stem>.pgm` or
/// `<stem>_mask.pgm` from the mask directory.
fn read_maps(
    maps_dir: &Path,
    masks_dir: &Path,
) -> Result<(Vec<ScoreMap>, Vec<PixelMask>), Failure> {
    let entries = fs::read_dir(maps_dir)
        .map_err(|e| Failure::data(format!("{}: {e}", maps_dir.display())))?;
    let mut files = BTreeMap::new();
    for entry in entries {
        let path = entry
            .map_err(|e| Failure::data(format!("{}: {e}", maps_dir.display())))?
            .path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .unwrap_or_default();
        if ext == "pgm" || ext == "csv" {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or_default()
                .to_string();
            files.insert(stem, path);
        }
    }
    if files.is_empty() {
        return Err(Failure::data(format!(
            "{}: no .pgm or .csv score maps",
            maps_dir.display()
        )));
    }
    let mut maps = Vec::with_capacity(files.len());
    let mut masks = Vec::with_capacity(files.len());
    for (stem, path) in files {
        let map = read_map(&path)?;
        let mask = [format!("{stem}.pgm"), format!("{stem}_mask.pgm")]
            .iter()
            .map(|f| masks_dir.join(f))
            .find(|p| p.is_file());
        let mask = match mask {
            Some(p) => PixelMask::read_pgm(&p).map_err(|e| Failure::data(e.to_string()))?,
            None => PixelMask::empty(map.height(), map.width())
                .map_err(|e| Failure::data(e.to_string()))?,
        };
        if (mask.height(), mask.width()) != (map.height(), map.width()) {
            return Err(Failure::data(format!(
                "{}: map is {}x{} but its mask is {}x{}",
                path.display(),
                map.height(),
                map.width(),
                mask.height(),
                mask.width()
            )));
        }
        maps.push(map);
        masks.push(mask);
    }
    Ok((maps, masks))
}

fn read_map(path: &Path) -> Result<ScoreMap, Failure> {
    let at = |msg: String| Failure::data(format!("{}: {msg}", path.display()));
    if path.extension().is_some_and(|e| e == "pgm") {
        let img = ImageGrid::read_pgm(path).map_err(|e| Failure::data(e.to_string()))?;
        let values = img.values().iter().map(|&v| f64::from(v)).collect();
        return ScoreMap::new(img.height(), img.width(), values).map_err(|e| at(e.to_string()));
    }
    let text = fs::read_to_string(path).map_err(|e| at(e.to_string()))?;
    let mut width = None;
    let mut values = Vec::new();
    let mut height = 0;
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Vec<f64> = line
            .split(',')
            .map(|v| v.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| at(format!("row {}: {e}", i + 1)))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(at(format!(
                "row {} has {} values, expected {}",
                i + 1,
                row.len(),
                width.unwrap_or(0)
            )));
        }
        values.extend(row);
        height += 1;
    }
    ScoreMap::new(height, width.unwrap_or(0), values).map_err(|e| at(e.to_string()))
}
