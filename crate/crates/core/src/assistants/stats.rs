use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::AssistantError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStats {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    /// Population standard deviation.
    pub std: f64,
    /// Ordinary least-squares slope against tick, in units per tick.
    pub slope: f64,
}

/// Summary statistics of `(tick, value)` points.
pub fn describe_stats(name: &str, points: &[(u64, f64)]) -> Result<SeriesStats, AssistantError> {
    if points.is_empty() {
        return Err(AssistantError::EmptySeries(name.to_string()));
    }
    let n = points.len() as f64;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / n;
    let min = points.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let max = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let var = points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / n;
    let x_mean = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - x_mean).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 as f64 - x_mean) * (p.1 - mean))
        .sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    Ok(SeriesStats {
        count: points.len(),
        mean,
        min,
        max,
        std: var.sqrt(),
        slope,
    })
}

/// A fixed-point table block for one series.
pub fn stats_block(name: &str, s: &SeriesStats) -> String {
    let mut out = String::new();
    writeln!(out, "| {name} | value |").unwrap();
    writeln!(out, "|---|---|").unwrap();
    writeln!(out, "| count | {} |", s.count).unwrap();
    for (label, v) in [
        ("mean", s.mean),
        ("min", s.min),
        ("max", s.max),
        ("std", s.std),
        ("slope", s.slope),
    ] {
        writeln!(out, "| {label} | {v:.6} |").unwrap();
    }
    out
}
