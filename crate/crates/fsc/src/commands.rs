//! The four subcommands. Each has an in-memory form returning its outputs
//! and a `run_*` form that reads inputs from disk and writes files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use fsc_core::allocator::{plan_allocation, AllocationOutcome, ComboSlope, Strategy};
use fsc_core::combos::training_size_schedule;
use fsc_core::curves::fit_power_law;
use fsc_core::domain::{CurveSample, FactorCombo, PowerLawFit, SchemeKind};
use fsc_core::proxy::{similarity_report, EmbeddingSet, SetRole};
use fsc_core::simharness::{aggregate, run_experiment, ExperimentReport, HarnessConfig, SweepAggregate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{load_config, Resolved};
use crate::records::{
    plot_csv_bytes, read_embeddings, read_eval_csv, seed_csv_bytes, PlotRow, SeedRow,
};
use crate::{read_input, to_json, write_output, CliError, Result};

const PLOT_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComboFit {
    pub combo: String,
    /// Demonstrations of this combo in the current dataset.
    pub current_n: u64,
    /// `|D \ D_combo|`, added to `n` before fitting.
    pub offset: u64,
    pub fit: PowerLawFit,
    pub samples: Vec<CurveSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitsFile {
    pub scheme: SchemeKind,
    pub budget: u64,
    pub fits: Vec<ComboFit>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub fits: FitsFile,
    pub plot: Vec<PlotRow>,
}

pub fn fit(config: &Resolved, records: &[(FactorCombo, Vec<CurveSample>)]) -> Result<FitOutput> {
    let mut fits = Vec::with_capacity(records.len());
    let mut plot = Vec::new();
    for (combo, samples) in records {
        let label = config.label(combo);
        let current_n = config.ledger.combo_total(combo)?;
        let offset = config.ledger.total() - current_n;
        let fit = fit_power_law(samples, offset, &config.fit)
            .map_err(|e| CliError::invalid(format!("combo {label}: {e}")))?;
        plot.extend(plot_rows(&label, &fit, samples, current_n + config.budget)?);
        fits.push(ComboFit { combo: label, current_n, offset, fit, samples: samples.clone() });
    }
    Ok(FitOutput { fits: FitsFile { scheme: config.scheme.kind, budget: config.budget, fits }, plot })
}

fn plot_rows(label: &str, fit: &PowerLawFit, samples: &[CurveSample], horizon: u64) -> Result<Vec<PlotRow>> {
    let max_observed = samples.iter().map(|s| s.n).max().unwrap_or(0);
    let mut rows: Vec<(u64, bool, PlotRow)> = samples
        .iter()
        .map(|s| {
            let row = PlotRow {
                combo: label.to_string(),
                n: s.n,
                observed: Some(s.score),
                fitted: Some(fit.predict(s.n)),
                extrapolated: None,
            };
            (s.n, false, row)
        })
        .collect();
    for n in training_size_schedule(horizon, PLOT_GRID_POINTS)? {
        let p = fit.predict(n);
        let inside = n <= max_observed;
        let row = PlotRow {
            combo: label.to_string(),
            n,
            observed: None,
            fitted: inside.then_some(p),
            extrapolated: (!inside).then_some(p),
        };
        rows.push((n, true, row));
    }
    rows.sort_by_key(|(n, grid, _)| (*n, *grid));
    Ok(rows.into_iter().map(|(_, _, r)| r).collect())
}

pub fn run_fit(config: &Path, eval_csv: &Path, out: &Path) -> Result<String> {
    let config = load_config(config)?;
    let records = read_eval_csv(eval_csv, &config)?;
    let output = fit(&config, &records)?;
    write_output(&out.join("fits.json"), &to_json(&output.fits)?)?;
    write_output(&out.join("plot.csv"), &plot_csv_bytes(&output.plot)?)?;
    let mut s = String::new();
    for f in &output.fits.fits {
        let _ = writeln!(
            s,
            "{}: a = {}, b = {}, offset = {}, rmse = {}{}",
            f.combo,
            f.fit.a,
            f.fit.b,
            f.offset,
            f.fit.rmse,
            if f.fit.degenerate { " (degenerate, slope 0)" } else { "" }
        );
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationEntry {
    pub factor: String,
    pub count: u64,
}

/// The plan as written to disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub budget: u64,
    pub allocations: Vec<AllocationEntry>,
    pub strategy: Strategy,
    pub scheme: SchemeKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocateOutput {
    pub outcome: AllocationOutcome,
    pub plan: PlanFile,
    pub summary: String,
}

/// Slopes at the configured budget for every fitted combo, checked against
/// the configured scheme and ledger.
pub fn slopes_from_fits(config: &Resolved, fits: &FitsFile) -> Result<Vec<ComboSlope>> {
    if fits.scheme != config.scheme.kind {
        return Err(CliError::invalid(format!(
            "fits are for the {} scheme but the config uses {}",
            fits.scheme, config.scheme.kind
        )));
    }
    let mut seen = BTreeSet::new();
    let mut slopes = Vec::with_capacity(fits.fits.len());
    for f in &fits.fits {
        let combo = config.parse_combo(&f.combo)?;
        if !seen.insert(combo.clone()) {
            return Err(CliError::invalid(format!("combo {} is fitted twice", f.combo)));
        }
        let current_n = config.ledger.combo_total(&combo)?;
        if current_n != f.current_n {
            return Err(CliError::invalid(format!(
                "combo {}: fits were made with {} demonstrations but the ledger has {current_n}",
                f.combo, f.current_n
            )));
        }
        slopes.push(ComboSlope { slope: f.fit.expected_slope(current_n, config.budget), combo, current_n });
    }
    let missing: Vec<String> =
        config.scheme.combos.iter().filter(|c| !seen.contains(*c)).map(|c| config.label(c)).collect();
    if !missing.is_empty() {
        return Err(CliError::invalid(format!("no fit for combo(s) {}", missing.join(", "))));
    }
    Ok(slopes)
}

pub fn allocate(config: &Resolved, fits: &FitsFile) -> Result<AllocateOutput> {
    let slopes = slopes_from_fits(config, fits)?;
    let outcome = plan_allocation(config.scheme.kind, &slopes, &config.strategy, config.budget, &config.ids())?;
    let plan = PlanFile {
        budget: config.budget,
        allocations: config
            .factors
            .iter()
            .map(|f| AllocationEntry { factor: f.name.clone(), count: outcome.plan.get(f.id) })
            .collect(),
        strategy: config.strategy.kind,
        scheme: config.scheme.kind,
    };
    let summary = allocation_summary(config, &outcome, &plan);
    Ok(AllocateOutput { outcome, plan, summary })
}

fn allocation_summary(config: &Resolved, outcome: &AllocationOutcome, plan: &PlanFile) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "scheme {}, strategy {}, budget {}",
        config.scheme.kind,
        config.strategy.kind.as_str(),
        config.budget
    );
    let _ = writeln!(s, "slopes (gain per demonstration over the budget):");
    for r in &outcome.ranked {
        let _ = writeln!(s, "  {:<32} {:>8}  {}", config.label(&r.combo), r.current_n, r.slope);
    }
    if outcome.equal_fallback {
        let _ = writeln!(s, "notice: every candidate slope is zero, falling back to the equal split");
    } else {
        let names: Vec<String> = outcome.included.iter().map(|c| config.label(&c.combo)).collect();
        let _ = writeln!(s, "included: {}", names.join(", "));
    }
    let _ = writeln!(s, "allocations:");
    for a in &plan.allocations {
        let _ = writeln!(s, "  {:<32} {:>8}", a.factor, a.count);
    }
    s
}

pub fn run_allocate(config: &Path, fits: &Path, out: &Path) -> Result<String> {
    let config = load_config(config)?;
    let text = read_input(fits)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let fits: FitsFile = serde_path_to_error::deserialize(&mut de)
        .map_err(|e| CliError::invalid(format!("{}: at `{}`: {}", fits.display(), e.path(), e.inner())))?;
    let output = allocate(&config, &fits)?;
    write_output(&out.join("plan.json"), &to_json(&output.plan)?)?;
    Ok(output.summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyPoint {
    pub source_id: String,
    pub raw: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProxyReport {
    pub k: usize,
    pub mean: f64,
    pub degenerate_normalization: bool,
    pub points: Vec<ProxyPoint>,
}

pub fn proxy(train: &EmbeddingSet, eval: &EmbeddingSet, k: usize) -> Result<ProxyReport> {
    let r = similarity_report(eval, train, k)?;
    let points = eval
        .vectors
        .iter()
        .zip(r.raw.iter().zip(&r.normalized))
        .map(|(v, (raw, normalized))| ProxyPoint { source_id: v.source_id.clone(), raw: *raw, normalized: *normalized })
        .collect();
    Ok(ProxyReport { k, mean: r.mean, degenerate_normalization: r.degenerate_normalization, points })
}

pub fn run_proxy(train: &Path, eval: &Path, k: usize, out: &Path) -> Result<String> {
    let train = read_embeddings(train, SetRole::Train)?;
    let eval = read_embeddings(eval, SetRole::Eval)?;
    let report = proxy(&train, &eval, k)?;
    write_output(&out.join("proxy.json"), &to_json(&report)?)?;
    let mut s = format!("mean normalized similarity {} over {} points (k = {k})\n", report.mean, report.points.len());
    if report.degenerate_normalization {
        s.push_str("notice: all raw similarities are equal, so every point normalizes to 1\n");
    }
    Ok(s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepFile {
    pub factors: Vec<String>,
    pub harness: HarnessConfig,
    pub aggregate: SweepAggregate,
    /// Sorted by seed.
    pub reports: Vec<ExperimentReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub sweep: SweepFile,
    pub rows: Vec<SeedRow>,
    pub summary: String,
}

/// Runs every seed (in parallel; each seed owns its random stream) and
/// aggregates in seed order.
pub fn simulate(config: &Resolved, seeds: &[u64]) -> Result<SimulateOutput> {
    let harness = config.harness()?;
    let unique: BTreeSet<u64> = seeds.iter().copied().collect();
    if unique.len() != seeds.len() {
        return Err(CliError::invalid("seeds must be distinct"));
    }
    let mut reports = seeds
        .par_iter()
        .map(|s| run_experiment(&harness, *s))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    reports.sort_by_key(|r| r.seed);
    let aggregate = aggregate(&reports).map_err(|e| CliError::Runtime(e.to_string()))?;

    let rows = reports
        .iter()
        .map(|r| SeedRow {
            seed: r.seed,
            selected_top: config.label(&r.selected_top),
            true_top: config.label(&r.true_top),
            equal_fallback: r.equal_fallback,
            initial_score: r.initial_score,
            fsc_score: r.fsc.realized_score,
            equal_score: r.equal.realized_score,
            greedy_score: r.greedy.realized_score,
        })
        .collect();
    let summary = sweep_summary(&harness, &aggregate);
    let sweep = SweepFile {
        factors: config.factors.iter().map(|f| f.name.clone()).collect(),
        harness,
        aggregate,
        reports,
    };
    Ok(SimulateOutput { sweep, rows, summary })
}

fn sweep_summary(h: &HarnessConfig, a: &SweepAggregate) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} seeds, scheme {}, strategy {}, budget {}",
        a.n_seeds,
        h.scheme,
        h.strategy.kind.as_str(),
        h.budget
    );
    let _ = writeln!(s, "{:<8} {:>10} {:>10} {:>14}", "policy", "mean", "std err", "FSC win rate");
    let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>14}", "fsc", a.fsc.mean, a.fsc.std_error, "-");
    let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>14.2}", "equal", a.equal.mean, a.equal.std_error, a.fsc_win_rate_vs_equal);
    let _ = writeln!(s, "{:<8} {:>10.4} {:>10.4} {:>14.2}", "greedy", a.greedy.mean, a.greedy.std_error, a.fsc_win_rate_vs_greedy);
    let _ = writeln!(s, "top combo selected correctly in {:.2} of seeds", a.top_selection_accuracy);
    if a.equal_fallbacks > 0 {
        let _ = writeln!(s, "notice: {} seed(s) fell back to the equal split", a.equal_fallbacks);
    }
    s
}

pub fn run_simulate(config: &Path, seed: Option<u64>, out: &Path) -> Result<String> {
    let config = load_config(config)?;
    let seeds = match seed {
        Some(s) => vec![s],
        None => config.seeds.clone(),
    };
    let output = simulate(&config, &seeds)?;
    write_output(&out.join("sweep.json"), &to_json(&output.sweep)?)?;
    write_output(&out.join("seeds.csv"), &seed_csv_bytes(&output.rows)?)?;
    Ok(output.summary)
}
