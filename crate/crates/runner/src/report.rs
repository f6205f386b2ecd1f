//! Rendering results as JSON, CSV or Markdown.
//!
//! Every number is printed with four decimals (`{:.4}`, which rounds half to
//! even on exact ties); absent values print as `NA`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::config::MetricName;
use crate::engine::CONTINUAL_LABEL;
use crate::results::{CellResult, CellStatus, LatencyRecord, MetricValue, RunResults};
use crate::RunnerError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn file_name(self) -> &'static str {
        match self {
            ReportFormat::Json => "results.json",
            ReportFormat::Csv => "results.csv",
            ReportFormat::Markdown => "report.md",
        }
    }
}

pub const NA: &str = "NA";

pub fn fmt4(v: f64) -> String {
    let s = format!("{v:.4}");
    if s == "-0.0000" {
        "0.0000".into()
    } else {
        s
    }
}

fn fmt_value(v: Option<&MetricValue>) -> String {
    v.and_then(MetricValue::value)
        .map_or_else(|| NA.to_string(), fmt4)
}

fn latency_p50(results: &RunResults, id: &str) -> Option<f64> {
    match results.timings.cells.get(id)? {
        LatencyRecord::Stats(s) => Some(s.p50_ms),
        LatencyRecord::Na(_) => None,
    }
}

pub fn emit_report(results: &RunResults, format: ReportFormat) -> Result<String, RunnerError> {
    if results.cells.is_empty() {
        return Err(RunnerError::EmptyResults);
    }
    match format {
        ReportFormat::Json => Ok(results.to_canonical_json()),
        ReportFormat::Csv => emit_csv(results),
        ReportFormat::Markdown => Ok(emit_markdown(results)),
    }
}

/// Writes all three formats into `dir`.
pub fn write_reports(results: &RunResults, dir: &Path) -> Result<(), RunnerError> {
    fs::create_dir_all(dir).map_err(|e| RunnerError::io(dir, e))?;
    for format in [
        ReportFormat::Json,
        ReportFormat::Csv,
        ReportFormat::Markdown,
    ] {
        let path = dir.join(format.file_name());
        fs::write(&path, emit_report(results, format)?).map_err(|e| RunnerError::io(&path, e))?;
    }
    Ok(())
}

fn emit_csv(results: &RunResults) -> Result<String, RunnerError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["category".to_string(), "setting".to_string()];
    header.extend(results.metrics.iter().map(|m| m.key().to_string()));
    header.extend(["fm", "latency_p50_ms", "bank_bytes"].map(String::from));
    let csv_err = |e: csv::Error| RunnerError::InvalidResults(e.to_string());
    w.write_record(&header).map_err(csv_err)?;
    for cell in &results.cells {
        let mut row = vec![cell.category.clone(), cell.setting.clone()];
        row.extend(results.metrics.iter().map(|m| fmt_value(cell.metric(*m))));
        row.push(fmt_value(cell.fm.as_ref()));
        row.push(latency_p50(results, &cell.id).map_or_else(|| NA.to_string(), fmt4));
        row.push(if cell.status == CellStatus::Ok {
            cell.bank_bytes.to_string()
        } else {
            NA.to_string()
        });
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| RunnerError::InvalidResults(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| RunnerError::InvalidResults(e.to_string()))
}

/// Cells grouped by setting label, in first-appearance order.
fn by_setting(cells: &[CellResult]) -> Vec<(&str, Vec<&CellResult>)> {
    let mut groups: Vec<(&str, Vec<&CellResult>)> = Vec::new();
    for c in cells {
        match groups.iter_mut().find(|(s, _)| *s == c.setting) {
            Some((_, v)) => v.push(c),
            None => groups.push((c.setting.as_str(), vec![c])),
        }
    }
    groups
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn emit_markdown(results: &RunResults) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Benchmark report\n");
    let _ = writeln!(out, "- config hash: `{}`", results.config_hash);
    let _ = writeln!(out, "- seed: {}", results.seed);
    let _ = writeln!(
        out,
        "- cells: {} ({} failed)\n",
        results.cells.len(),
        results.failed_cells()
    );

    for (setting, cells) in by_setting(&results.cells) {
        let _ = writeln!(out, "## {setting}\n");
        metric_table(&mut out, &results.metrics, &cells);
        if setting == CONTINUAL_LABEL {
            continual_table(&mut out, &cells);
        }
    }
    efficiency_table(&mut out, results);

    let failed: Vec<_> = results
        .cells
        .iter()
        .filter(|c| c.status == CellStatus::Failed)
        .collect();
    if !failed.is_empty() {
        let _ = writeln!(out, "## Failed cells\n");
        for c in failed {
            let _ = writeln!(
                out,
                "- `{}`: {}",
                c.id,
                c.error.as_deref().unwrap_or("unknown error")
            );
        }
        out.push('\n');
    }
    out
}

/// Categories as rows, metrics as columns; the best value of each column is
/// bold and the last row is the unweighted mean.
fn metric_table(out: &mut String, metrics: &[MetricName], cells: &[&CellResult]) {
    let _ = write!(out, "| Category |");
    for m in metrics {
        let _ = write!(out, " {} |", m.title());
    }
    let _ = write!(out, "\n|---|");
    for _ in metrics {
        let _ = write!(out, "---:|");
    }
    out.push('\n');

    let best: BTreeMap<&str, String> = metrics
        .iter()
        .filter_map(|m| {
            let top = cells
                .iter()
                .filter_map(|c| c.metric(*m).and_then(MetricValue::value))
                .max_by(f64::total_cmp)?;
            Some((m.key(), fmt4(top)))
        })
        .collect();
    for c in cells {
        let _ = write!(out, "| {} |", c.category);
        for m in metrics {
            let v = fmt_value(c.metric(*m));
            if best.get(m.key()) == Some(&v) {
                let _ = write!(out, " **{v}** |");
            } else {
                let _ = write!(out, " {v} |");
            }
        }
        out.push('\n');
    }
    let _ = write!(out, "| Mean |");
    for m in metrics {
        let v = mean(
            cells
                .iter()
                .map(|c| c.metric(*m).and_then(MetricValue::value)),
        );
        let _ = write!(out, " {} |", v.map_or_else(|| NA.to_string(), fmt4));
    }
    out.push_str("\n\n");
}

fn continual_table(out: &mut String, cells: &[&CellResult]) {
    let auc = |c: &CellResult| {
        c.metric(MetricName::ImageAuroc)
            .and_then(MetricValue::value)
    };
    let fm = |c: &CellResult| c.fm.as_ref().and_then(MetricValue::value);
    let pair = |a: Option<f64>, f: Option<f64>| {
        format!(
            "{} / {}",
            a.map_or_else(|| NA.to_string(), fmt4),
            f.map_or_else(|| NA.to_string(), fmt4)
        )
    };
    let _ = writeln!(out, "| Category | AUC↑ / FM↓ |\n|---|---:|");
    for c in cells {
        let _ = writeln!(out, "| {} | {} |", c.category, pair(auc(c), fm(c)));
    }
    let _ = writeln!(
        out,
        "| Mean | {} |\n",
        pair(
            mean(cells.iter().map(|c| auc(c))),
            mean(cells.iter().map(|c| fm(c)))
        )
    );
}

fn efficiency_table(out: &mut String, results: &RunResults) {
    let _ = writeln!(out, "## Efficiency\n");
    let _ = writeln!(
        out,
        "| Cell | p50 ms | p95 ms | Bank bytes |\n|---|---:|---:|---:|"
    );
    for c in results.cells.iter().filter(|c| c.status == CellStatus::Ok) {
        let (p50, p95) = match results.timings.cells.get(&c.id) {
            Some(LatencyRecord::Stats(s)) => (fmt4(s.p50_ms), fmt4(s.p95_ms)),
            _ => (NA.to_string(), NA.to_string()),
        };
        let _ = writeln!(out, "| {} | {p50} | {p95} | {} |", c.id, c.bank_bytes);
    }
    out.push('\n');
}
