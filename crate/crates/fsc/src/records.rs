//! CSV formats: evaluation records, embeddings, plot data and per-seed rows.

use std::collections::BTreeMap;
use std::path::Path;

use fsc_core::domain::{CurveSample, FactorCombo};
use fsc_core::proxy::{EmbeddingSet, EmbeddingVector, SetRole};
use serde::{Deserialize, Serialize};

use crate::config::Resolved;
use crate::{read_input, CliError, Result};

pub const EVAL_HEADER: [&str; 4] = ["combo", "n", "score", "trials"];

/// One `(n, score)` observation of a combo's curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecordRow {
    pub combo: String,
    pub n: u64,
    pub score: f64,
    pub trials: u32,
}

fn csv_reader(text: &str) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes())
}

fn line_of(record: &csv::StringRecord) -> u64 {
    record.position().map_or(0, csv::Position::line)
}

fn check_header(found: &csv::StringRecord, expected: &[&str], path: &Path) -> Result<()> {
    let found: Vec<&str> = found.iter().collect();
    if found != expected {
        return Err(CliError::invalid(format!(
            "{}: header must be `{}`, found `{}`",
            path.display(),
            expected.join(","),
            found.join(",")
        )));
    }
    Ok(())
}

/// Reads evaluation records and groups them by combo, in scheme order.
/// Every combo of the scheme needs at least `points_per_curve` rows.
pub fn read_eval_csv(path: &Path, config: &Resolved) -> Result<Vec<(FactorCombo, Vec<CurveSample>)>> {
    let text = read_input(path)?;
    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?.clone();
    check_header(&headers, &EVAL_HEADER, path)?;

    let mut by_combo: BTreeMap<FactorCombo, Vec<CurveSample>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        let line = line_of(&record);
        let at = |msg: String| CliError::invalid(format!("{}:{line}: {msg}", path.display()));
        let row: EvalRecordRow = record.deserialize(Some(&headers)).map_err(|e| at(e.to_string()))?;
        if !(0.0..=1.0).contains(&row.score) {
            return Err(at(format!("score {} is outside [0, 1]", row.score)));
        }
        if row.trials == 0 {
            return Err(at("trials must be at least 1".into()));
        }
        let combo = config.parse_combo(&row.combo).map_err(|e| at(e.to_string()))?;
        by_combo.entry(combo).or_default().push(CurveSample::new(row.n, row.score, row.trials));
    }

    let short: Vec<String> = config
        .scheme
        .combos
        .iter()
        .filter_map(|c| {
            let got = by_combo.get(c).map_or(0, Vec::len);
            (got < config.points_per_curve)
                .then(|| format!("{} has {got} of {} rows", config.label(c), config.points_per_curve))
        })
        .collect();
    if !short.is_empty() {
        return Err(CliError::invalid(format!("{}: too few points: {}", path.display(), short.join("; "))));
    }
    Ok(config
        .scheme
        .combos
        .iter()
        .map(|c| (c.clone(), by_combo.remove(c).unwrap_or_default()))
        .collect())
}

pub fn eval_csv_bytes(rows: &[EvalRecordRow]) -> Result<Vec<u8>> {
    serialize_rows(rows, Some(&EVAL_HEADER))
}

fn serialize_rows<T: Serialize>(rows: &[T], header_if_empty: Option<&[&str]>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        if let Some(h) = header_if_empty {
            w.write_record(h).map_err(|e| CliError::Runtime(e.to_string()))?;
        }
    }
    for r in rows {
        w.serialize(r).map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    w.into_inner().map_err(|e| CliError::Runtime(e.to_string()))
}

/// Reads `source_id,dim_0,...,dim_{d-1}` rows.
pub fn read_embeddings(path: &Path, role: SetRole) -> Result<EmbeddingSet> {
    let text = read_input(path)?;
    let mut rdr = csv_reader(&text);
    let headers = rdr.headers().map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?.clone();
    let expected: Vec<String> =
        std::iter::once("source_id".to_string()).chain((0..headers.len().saturating_sub(1)).map(|i| format!("dim_{i}"))).collect();
    let expected: Vec<&str> = expected.iter().map(String::as_str).collect();
    if headers.len() < 2 {
        return Err(CliError::invalid(format!("{}: header must be `source_id,dim_0,...`", path.display())));
    }
    check_header(&headers, &expected, path)?;

    let mut vectors = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
        let line = line_of(&record);
        let id = record.get(0).unwrap_or_default().to_string();
        let values = record
            .iter()
            .skip(1)
            .enumerate()
            .map(|(i, v)| {
                v.parse::<f64>().map_err(|_| {
                    CliError::invalid(format!("{}:{line}: row `{id}`: dim_{i} value `{v}` is not a number", path.display()))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        vectors.push(EmbeddingVector::new(id, values));
    }
    if vectors.is_empty() {
        return Err(CliError::invalid(format!("{}: no embedding rows", path.display())));
    }
    EmbeddingSet::new(vectors, role).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// One row of the plot CSV. Observed rows carry the measured score; grid
/// rows carry the fitted value inside the observed range and the
/// extrapolated value beyond it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub combo: String,
    pub n: u64,
    pub observed: Option<f64>,
    pub fitted: Option<f64>,
    pub extrapolated: Option<f64>,
}

pub fn plot_csv_bytes(rows: &[PlotRow]) -> Result<Vec<u8>> {
    serialize_rows(rows, Some(&["combo", "n", "observed", "fitted", "extrapolated"]))
}

/// Per-seed summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedRow {
    pub seed: u64,
    pub selected_top: String,
    pub true_top: String,
    pub equal_fallback: bool,
    pub initial_score: f64,
    pub fsc_score: f64,
    pub equal_score: f64,
    pub greedy_score: f64,
}

pub fn seed_csv_bytes(rows: &[SeedRow]) -> Result<Vec<u8>> {
    serialize_rows(rows, None)
}
