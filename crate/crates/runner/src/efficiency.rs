use std::time::Duration;

use iadbench_core::dataset::Sample;

use crate::pipeline::Detector;
use crate::results::LatencyStats;
use crate::RunnerError;

pub const DEFAULT_WARMUP: usize = 3;
/// Timed samples required after warm-up.
pub const MIN_TIMED: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct EfficiencyStats {
    pub latency: LatencyStats,
    /// `vectors × dim × 4`.
    pub bank_bytes: usize,
    pub peak_rss_bytes: Option<u64>,
}

/// Scores every sample once, timing each, and summarizes after discarding
/// the first `warmup` timings.
pub fn measure_efficiency(
    detector: &Detector,
    samples: &[Sample],
    warmup: usize,
) -> Result<EfficiencyStats, RunnerError> {
    if samples.len() < warmup + MIN_TIMED {
        return Err(RunnerError::TooFewSamples {
            needed: warmup + MIN_TIMED,
            got: samples.len(),
        });
    }
    let mut timings = Vec::with_capacity(samples.len());
    for s in samples {
        timings.push(detector.infer(s)?.elapsed);
    }
    Ok(EfficiencyStats {
        latency: summarize_latencies(&timings, warmup)?,
        bank_bytes: detector.bank().payload_bytes(),
        peak_rss_bytes: peak_rss_bytes(),
    })
}

/// Mean and nearest-rank percentiles of the timings after `warmup`.
pub fn summarize_latencies(
    timings: &[Duration],
    warmup: usize,
) -> Result<LatencyStats, RunnerError> {
    if timings.len() < warmup + MIN_TIMED {
        return Err(RunnerError::TooFewSamples {
            needed: warmup + MIN_TIMED,
            got: timings.len(),
        });
    }
    let mut ms: Vec<f64> = timings[warmup..]
        .iter()
        .map(|d| d.as_secs_f64() * 1e3)
        .collect();
    ms.sort_by(f64::total_cmp);
    Ok(LatencyStats {
        samples: ms.len(),
        mean_ms: ms.iter().sum::<f64>() / ms.len() as f64,
        p50_ms: nearest_rank(&ms, 50.0),
        p95_ms: nearest_rank(&ms, 95.0),
    })
}

/// Nearest-rank percentile of sorted data: the value at rank `ceil(p/100·n)`.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// `VmHWM` from `/proc/self/status`; `None` where unavailable.
pub fn peak_rss_bytes() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}
