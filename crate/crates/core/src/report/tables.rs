//! Row types for every CSV table. Field order is column order.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

/// Hazard ratio of `treatment` against `comparator` at a landmark, with the
/// treatment's rank summaries for network analyses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectRow {
    pub analysis: String,
    pub treatment: String,
    pub comparator: String,
    pub landmark: String,
    pub hr_mean: f64,
    pub hr_median: f64,
    pub hr_lower: f64,
    pub hr_upper: f64,
    pub mean_rank: Option<f64>,
    pub rank_lower: Option<usize>,
    pub rank_upper: Option<usize>,
    pub prob_best: Option<f64>,
    /// Longest follow-up of any contributing study, in years.
    pub max_follow_up: Option<f64>,
    /// Studies whose follow-up ends before the landmark.
    pub studies_beyond_follow_up: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankRow {
    pub analysis: String,
    pub landmark: String,
    pub treatment: String,
    pub mean_rank: f64,
    pub rank_lower: usize,
    pub rank_upper: usize,
    pub prob_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankProbabilityRow {
    pub analysis: String,
    pub landmark: String,
    pub treatment: String,
    pub rank: usize,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhTestRow {
    pub study: String,
    pub covariate: String,
    pub chisq: f64,
    pub df: usize,
    pub p_value: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParameterRow {
    pub analysis: String,
    pub parameter: String,
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KmRow {
    pub study: String,
    pub arm: String,
    pub time: f64,
    pub at_risk: usize,
    pub events: usize,
    pub censored: usize,
    pub survival: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualRow {
    pub study: String,
    pub covariate: String,
    pub time: f64,
    pub scaled_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityRow {
    pub landmark: String,
    pub base_prior: String,
    pub base_mean: f64,
    pub base_lower: f64,
    pub base_upper: f64,
    pub alternative_prior: String,
    pub alternative_mean: f64,
    pub alternative_lower: f64,
    pub alternative_upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CurveRow {
    pub analysis: String,
    pub treatment: String,
    pub comparator: String,
    pub time: f64,
    pub mean: f64,
    pub median: f64,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityBestRow {
    pub analysis: String,
    pub month: usize,
    pub time: f64,
    pub treatment: String,
    pub prob_best: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRow {
    pub analysis: String,
    pub parameter: String,
    pub chain: usize,
    pub iteration: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AutocorrelationRow {
    pub analysis: String,
    pub parameter: String,
    pub chain: usize,
    pub lag: usize,
    pub value: f64,
}

/// Writes `rows` with a header taken from the field names.
pub(crate) fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes a matrix with a leading label column.
pub(crate) fn write_matrix(path: &Path, corner: &str, columns: &[String], rows: &[(String, Vec<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(std::iter::once(corner.to_string()).chain(columns.iter().cloned()))?;
    for (label, values) in rows {
        w.write_record(std::iter::once(label.clone()).chain(values.iter().map(|v| v.to_string())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
