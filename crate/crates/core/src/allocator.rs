//! Turning curve slopes into a per-factor collection plan.
//!
//! Combos are ranked by their expected gain per demonstration, an inclusion
//! set is chosen (Top, Top-Half or All) and the budget is split in proportion
//! to slope. Real-valued shares are rounded with the largest-remainder
//! method so every plan spends exactly `K`.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::combos::apportion_integer;
use crate::domain::{AllocationPlan, FactorCombo, FactorEvalBreakdown, FactorId, SchemeKind};
use crate::{Error, Result};

/// Expected gain per demonstration of one combo at the budget horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComboSlope {
    pub combo: FactorCombo,
    pub slope: f64,
    pub current_n: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Top,
    TopHalf,
    All,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Top => "top",
            Strategy::TopHalf => "top_half",
            Strategy::All => "all",
        }
    }
}

/// How many combos Top-Half keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopHalfRule {
    /// `ceil(|combos| / 2)`.
    #[default]
    CeilHalfOfCombos,
    /// Explicit override.
    Fixed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyChoice {
    pub kind: Strategy,
    #[serde(default)]
    pub top_half_count_rule: TopHalfRule,
}

impl StrategyChoice {
    pub fn new(kind: Strategy) -> Self {
        StrategyChoice { kind, top_half_count_rule: TopHalfRule::CeilHalfOfCombos }
    }
}

/// Result of choosing which combos to fund.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Included(Vec<ComboSlope>),
    /// Every slope in the candidate set is zero.
    EqualFallback,
}

fn check_slopes(slopes: &[ComboSlope]) -> Result<()> {
    match slopes.iter().find(|s| !(s.slope.is_finite() && s.slope >= 0.0)) {
        Some(bad) => Err(Error::InvalidSlope(bad.slope)),
        None => Ok(()),
    }
}

/// Descending by slope; equal slopes keep lexicographic combo order.
pub fn rank_combos(slopes: &[ComboSlope]) -> Result<Vec<ComboSlope>> {
    if slopes.is_empty() {
        return Err(Error::Empty("slope list"));
    }
    check_slopes(slopes)?;
    let mut ranked = slopes.to_vec();
    ranked.sort_by(|x, y| y.slope.total_cmp(&x.slope).then_with(|| x.combo.members.cmp(&y.combo.members)));
    Ok(ranked)
}

pub fn select_inclusion(ranked: &[ComboSlope], strategy: &StrategyChoice) -> Selection {
    let count = match strategy.kind {
        Strategy::Top => 1,
        Strategy::TopHalf => match strategy.top_half_count_rule {
            TopHalfRule::CeilHalfOfCombos => ranked.len().div_ceil(2),
            TopHalfRule::Fixed(n) => n.max(1),
        },
        Strategy::All => ranked.len(),
    };
    let included: Vec<ComboSlope> =
        ranked.iter().take(count).filter(|s| s.slope > 0.0).cloned().collect();
    if included.is_empty() {
        Selection::EqualFallback
    } else {
        Selection::Included(included)
    }
}

// Fractional parts closer than this are treated as ties so that plans do not
// depend on last-bit rounding of the slope arithmetic.
const REMAINDER_RESOLUTION: f64 = 1e9;

/// Largest-remainder apportionment of `total` by real weights. Entries with
/// non-positive weight receive nothing; ties go to the lower index.
pub(crate) fn apportion_real(total: u64, weights: &[f64]) -> Vec<u64> {
    let sum: f64 = weights.iter().filter(|w| **w > 0.0).sum();
    let mut out = alloc::vec![0u64; weights.len()];
    if !(sum > 0.0) {
        return out;
    }
    let mut remainders: Vec<(u64, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        if !(w > 0.0) {
            continue;
        }
        let mut quota = total as f64 * (w / sum);
        let nearest = libm::round(quota);
        if libm::fabs(quota - nearest) <= 1e-9 * nearest.max(1.0) {
            quota = nearest;
        }
        let floor = libm::floor(quota);
        out[i] = floor as u64;
        remainders.push((libm::round((quota - floor) * REMAINDER_RESOLUTION) as u64, i));
    }
    let assigned: u64 = out.iter().sum();
    debug_assert!(assigned <= total);
    let mut left = total.saturating_sub(assigned);
    remainders.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    for (_, i) in remainders.iter().cycle() {
        if left == 0 {
            break;
        }
        out[*i] += 1;
        left -= 1;
    }
    out
}

fn positive(included: &[ComboSlope]) -> Result<Vec<&ComboSlope>> {
    check_slopes(included)?;
    let pos: Vec<&ComboSlope> = included.iter().filter(|s| s.slope > 0.0).collect();
    if pos.is_empty() {
        return Err(Error::AllSlopesZero);
    }
    Ok(pos)
}

/// Real-valued per-factor shares for disjoint combos: `K P_c / Σ P`, halved
/// between the members of a pair.
pub fn group_shares(included: &[ComboSlope], budget: u64) -> Result<BTreeMap<FactorId, f64>> {
    let pos = positive(included)?;
    let total: f64 = pos.iter().map(|s| s.slope).sum();
    let mut out = BTreeMap::new();
    for s in pos {
        let share = budget as f64 * s.slope / total / s.combo.len() as f64;
        for id in &s.combo.members {
            *out.entry(*id).or_insert(0.0) += share;
        }
    }
    Ok(out)
}

/// Allocates across disjoint combos. Each combo gets `K P_c / Σ P` (rounded
/// by largest remainder); a pair's amount is halved, lower id first.
pub fn allocate_group(included: &[ComboSlope], budget: u64) -> Result<AllocationPlan> {
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    let pos = positive(included)?;
    let weights: Vec<f64> = pos.iter().map(|s| s.slope).collect();
    let per_combo = apportion_real(budget, &weights);
    let mut plan = AllocationPlan::new(budget);
    for (s, amount) in pos.iter().zip(per_combo) {
        let halves = apportion_integer(amount, &alloc::vec![1; s.combo.len()]);
        for (id, c) in s.combo.members.iter().zip(halves) {
            plan.add(*id, c);
        }
    }
    for s in included {
        for id in &s.combo.members {
            plan.add(*id, 0);
        }
    }
    Ok(plan)
}

/// `|ΔD_i| = K P_i / Σ P` over singleton combos.
pub fn allocate_one_factor(included: &[ComboSlope], budget: u64) -> Result<AllocationPlan> {
    if let Some(s) = included.iter().find(|s| s.combo.len() != 1) {
        return Err(Error::InvalidCombo(format!("expected singleton combos, got {:?}", s.combo.members)));
    }
    allocate_group(included, budget)
}

fn pairwise_weights(included: &[ComboSlope]) -> Result<(BTreeMap<FactorId, f64>, f64)> {
    if let Some(s) = included.iter().find(|s| s.combo.len() != 2) {
        return Err(Error::InvalidCombo(format!("expected pair combos, got {:?}", s.combo.members)));
    }
    let pos = positive(included)?;
    let mut weights = BTreeMap::new();
    for s in &pos {
        for id in &s.combo.members {
            *weights.entry(*id).or_insert(0.0) += s.slope;
        }
    }
    Ok((weights, pos.iter().map(|s| s.slope).sum()))
}

/// Real-valued pairwise shares `K Σ_j P_ij / (2 Σ P)`.
pub fn pairwise_shares(included: &[ComboSlope], budget: u64) -> Result<BTreeMap<FactorId, f64>> {
    let (weights, total) = pairwise_weights(included)?;
    Ok(weights.into_iter().map(|(id, w)| (id, budget as f64 * w / (2.0 * total))).collect())
}

/// Allocates over overlapping pairs. Factors in no funded pair receive zero.
pub fn allocate_pairwise(included: &[ComboSlope], budget: u64) -> Result<AllocationPlan> {
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    let (weights, _) = pairwise_weights(included)?;
    let ids: Vec<FactorId> = weights.keys().copied().collect();
    let w: Vec<f64> = weights.values().copied().collect();
    let mut plan = AllocationPlan::new(budget);
    for (id, c) in ids.into_iter().zip(apportion_real(budget, &w)) {
        plan.add(id, c);
    }
    for s in included {
        for id in &s.combo.members {
            plan.add(*id, 0);
        }
    }
    Ok(plan)
}

/// `floor(K / N)` per factor, remainder to the lowest ids.
pub fn baseline_equal(factors: &[FactorId], budget: u64) -> Result<AllocationPlan> {
    if factors.is_empty() {
        return Err(Error::Empty("factor list"));
    }
    let mut ids = factors.to_vec();
    ids.sort();
    ids.dedup();
    let shares = apportion_integer(budget, &alloc::vec![1; ids.len()]);
    let mut plan = AllocationPlan::new(budget);
    for (id, c) in ids.into_iter().zip(shares) {
        plan.add(id, c);
    }
    Ok(plan)
}

/// Entire budget to the factor with the lowest score; lowest id on ties.
pub fn baseline_greedy(evals: &FactorEvalBreakdown, budget: u64) -> Result<AllocationPlan> {
    let mut worst: Option<(FactorId, f64)> = None;
    for (id, score) in &evals.per_factor_score {
        match worst {
            Some((_, w)) if score.partial_cmp(&w) != Some(Ordering::Less) => {}
            _ => worst = Some((*id, *score)),
        }
    }
    let (target, _) = worst.ok_or(Error::Empty("per-factor scores"))?;
    let mut plan = AllocationPlan::new(budget);
    for id in evals.per_factor_score.keys() {
        plan.add(*id, 0);
    }
    plan.add(target, budget);
    Ok(plan)
}

/// Everything decided while planning one allocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationOutcome {
    pub ranked: Vec<ComboSlope>,
    pub included: Vec<ComboSlope>,
    pub plan: AllocationPlan,
    /// Set when every candidate slope was zero and the equal split was used.
    pub equal_fallback: bool,
}

/// Ranks, selects and allocates for a scheme. Falls back to the equal
/// baseline, and says so, when every candidate slope is zero.
pub fn plan_allocation(
    kind: SchemeKind,
    slopes: &[ComboSlope],
    strategy: &StrategyChoice,
    budget: u64,
    factors: &[FactorId],
) -> Result<AllocationOutcome> {
    if budget == 0 {
        return Err(Error::ZeroBudget);
    }
    let ranked = rank_combos(slopes)?;
    let (included, plan, equal_fallback) = match select_inclusion(&ranked, strategy) {
        Selection::EqualFallback => (Vec::new(), baseline_equal(factors, budget)?, true),
        Selection::Included(included) => {
            let plan = match kind {
                SchemeKind::OneFactor => allocate_one_factor(&included, budget)?,
                SchemeKind::Group => allocate_group(&included, budget)?,
                SchemeKind::Pairwise => allocate_pairwise(&included, budget)?,
            };
            (included, plan, false)
        }
    };
    for id in plan.per_factor.keys() {
        if !factors.contains(id) {
            return Err(Error::UnknownFactor(*id));
        }
    }
    let plan = plan.fill_factors(factors.iter().copied());
    Ok(AllocationOutcome { ranked, included, plan, equal_fallback })
}
