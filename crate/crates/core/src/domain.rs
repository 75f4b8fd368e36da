//! Value types shared by every stage of the pipeline.
//!
//! Demonstrations are atomic, so every count here is an integer. Fractional
//! shares only exist transiently inside the allocator.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Index of an environment factor. Ids in one problem are `0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FactorId(pub u32);

impl FactorId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for FactorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for FactorId {
    fn from(id: u32) -> Self {
        FactorId(id)
    }
}

/// A named factor, e.g. `table_texture`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub id: FactorId,
    pub name: String,
}

/// Builds `N` factors with contiguous ids from a list of names.
pub fn factors_from_names<S: AsRef<str>>(names: &[S]) -> Result<Vec<Factor>> {
    let mut out: Vec<Factor> = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let name = name.as_ref();
        if out.iter().any(|f| f.name == name) {
            return Err(Error::DuplicateFactorName(name.into()));
        }
        out.push(Factor { id: FactorId(i as u32), name: name.into() });
    }
    Ok(out)
}

/// Checks that ids are distinct and contiguous from 0.
pub fn check_factor_ids(ids: &[FactorId]) -> Result<()> {
    let mut sorted = ids.to_vec();
    sorted.sort();
    for (i, id) in sorted.iter().enumerate() {
        if i > 0 && sorted[i - 1] == *id {
            return Err(Error::DuplicateFactor(*id));
        }
        if id.index() != i {
            return Err(Error::NonContiguousFactors { expected: i, found: *id });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    OneFactor,
    Pairwise,
    Group,
}

impl SchemeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SchemeKind::OneFactor => "one_factor",
            SchemeKind::Pairwise => "pairwise",
            SchemeKind::Group => "group",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One or two factors sharing a single scaling curve.
///
/// Members are kept sorted by id, so two combos over the same factors
/// compare equal and order lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FactorCombo {
    pub members: Vec<FactorId>,
    pub scheme_tag: SchemeKind,
}

impl FactorCombo {
    pub fn new(mut members: Vec<FactorId>, scheme_tag: SchemeKind) -> Result<Self> {
        members.sort();
        members.dedup();
        let ok = match scheme_tag {
            SchemeKind::OneFactor => members.len() == 1,
            SchemeKind::Pairwise => members.len() == 2,
            SchemeKind::Group => matches!(members.len(), 1 | 2),
        };
        if !ok {
            return Err(Error::InvalidCombo(format!(
                "{scheme_tag} combo cannot have {} distinct member(s)",
                members.len()
            )));
        }
        Ok(FactorCombo { members, scheme_tag })
    }

    pub fn single(id: FactorId) -> Self {
        FactorCombo { members: alloc::vec![id], scheme_tag: SchemeKind::OneFactor }
    }

    pub fn pair(a: FactorId, b: FactorId, scheme_tag: SchemeKind) -> Result<Self> {
        if a == b {
            return Err(Error::InvalidCombo(format!("pair members must differ, got {a} twice")));
        }
        Self::new(alloc::vec![a, b], scheme_tag)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, id: FactorId) -> bool {
        self.members.contains(&id)
    }
}

/// Demonstration counts: the nominal set plus one bucket per factor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetLedger {
    pub nominal_count: u64,
    pub factor_counts: BTreeMap<FactorId, u64>,
}

impl DatasetLedger {
    pub fn new(nominal_count: u64, counts: impl IntoIterator<Item = u64>) -> Self {
        let factor_counts = counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (FactorId(i as u32), c))
            .collect();
        DatasetLedger { nominal_count, factor_counts }
    }

    pub fn uniform(n_factors: usize, per_factor: u64, nominal_count: u64) -> Self {
        Self::new(nominal_count, core::iter::repeat_n(per_factor, n_factors))
    }

    /// `|D| = |D_nom| + Σ |D_i|`.
    pub fn total(&self) -> u64 {
        self.nominal_count + self.factor_counts.values().sum::<u64>()
    }

    pub fn count(&self, id: FactorId) -> Result<u64> {
        self.factor_counts.get(&id).copied().ok_or(Error::UnknownFactor(id))
    }

    pub fn factor_ids(&self) -> impl Iterator<Item = FactorId> + '_ {
        self.factor_counts.keys().copied()
    }

    pub fn n_factors(&self) -> usize {
        self.factor_counts.len()
    }

    /// Combined count of a combo's members.
    pub fn combo_total(&self, combo: &FactorCombo) -> Result<u64> {
        combo.members.iter().try_fold(0u64, |acc, id| Ok(acc + self.count(*id)?))
    }

    /// Returns a copy with `counts[id] = value`.
    pub fn with_count(&self, id: FactorId, value: u64) -> Result<Self> {
        let mut out = self.clone();
        *out.factor_counts.get_mut(&id).ok_or(Error::UnknownFactor(id))? = value;
        Ok(out)
    }

    /// `D ∪ ΔD`: adds every planned count to its factor. `self` is untouched.
    pub fn apply(&self, plan: &AllocationPlan) -> Result<Self> {
        let mut out = self.clone();
        for (id, extra) in &plan.per_factor {
            *out.factor_counts.get_mut(id).ok_or(Error::UnknownFactor(*id))? += extra;
        }
        Ok(out)
    }
}

/// One point on a scaling curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub n: u64,
    pub score: f64,
    pub trials: u32,
}

impl CurveSample {
    pub fn new(n: u64, score: f64, trials: u32) -> Self {
        CurveSample { n, score, trials }
    }
}

/// A fitted curve `1 - a (n + offset)^b`.
///
/// `a` and `b` always hold the unconstrained log-space regression. When the
/// regression slope is not negative the fit is `degenerate`: predictions
/// return `mean_score` and the expected gain is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub a: f64,
    pub b: f64,
    pub offset: u64,
    pub rmse: f64,
    pub degenerate: bool,
    pub mean_score: f64,
}

/// Additional demonstrations per factor. Missing factors receive zero.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub per_factor: BTreeMap<FactorId, u64>,
    pub budget: u64,
}

impl AllocationPlan {
    pub fn new(budget: u64) -> Self {
        AllocationPlan { per_factor: BTreeMap::new(), budget }
    }

    pub fn get(&self, id: FactorId) -> u64 {
        self.per_factor.get(&id).copied().unwrap_or(0)
    }

    pub fn allocated(&self) -> u64 {
        self.per_factor.values().sum()
    }

    /// Adds `count` to `id`.
    pub fn add(&mut self, id: FactorId, count: u64) {
        *self.per_factor.entry(id).or_insert(0) += count;
    }

    /// Per-factor sum of two plans; budgets add as well.
    pub fn merged(&self, other: &AllocationPlan) -> AllocationPlan {
        let mut out = self.clone();
        for (id, c) in &other.per_factor {
            out.add(*id, *c);
        }
        out.budget += other.budget;
        out
    }

    /// Inserts explicit zero entries so every listed factor appears.
    pub fn fill_factors(mut self, ids: impl IntoIterator<Item = FactorId>) -> Self {
        for id in ids {
            self.per_factor.entry(id).or_insert(0);
        }
        self
    }
}

/// Per-factor scores of an evaluated policy, used by the greedy baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorEvalBreakdown {
    pub per_factor_score: BTreeMap<FactorId, f64>,
    pub overall: f64,
}
