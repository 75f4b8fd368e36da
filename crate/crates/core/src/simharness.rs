//! Closed-loop simulation against a synthetic ground truth.
//!
//! A [`SyntheticWorld`] maps per-factor demonstration counts to a policy score.
//! It replaces training a policy and evaluating it on hardware: curves are
//! built from (optionally noisy) evaluations of the world, a plan is chosen
//! from the fitted slopes, and the plan is scored by the noiseless world
//! alongside the equal and greedy baselines.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::allocator::{baseline_equal, baseline_greedy, plan_allocation, ComboSlope, StrategyChoice};
use crate::combos::{apportion_integer, split_combo_count, training_size_schedule, ComboScheme};
use crate::curves::{fit_power_law, FitConfig};
use crate::domain::{
    AllocationPlan, CurveSample, DatasetLedger, FactorCombo, FactorEvalBreakdown, FactorId, PowerLawFit, SchemeKind,
};
use crate::proxy::{raw_similarities, shared_normalized_means, EmbeddingSet, EmbeddingVector, SetRole};
use crate::{Error, Result};

/// Saturating response `gain (1 - (1 + n / rate)^exponent)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorResponse {
    pub gain: f64,
    pub rate: f64,
    pub exponent: f64,
    /// Shift applied only to this factor's per-factor evaluation score.
    #[serde(default)]
    pub eval_offset: f64,
}

impl FactorResponse {
    /// Fraction of the gain still missing after `n` demonstrations.
    pub fn remaining(&self, n: u64) -> f64 {
        libm::pow(1.0 + n as f64 / self.rate, self.exponent)
    }

    pub fn contribution(&self, n: u64) -> f64 {
        self.gain * (1.0 - self.remaining(n))
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::InvalidWorld(format!("{what}: rate must be positive")));
        }
        if !(self.exponent < 0.0 && self.exponent.is_finite()) {
            return Err(Error::InvalidWorld(format!("{what}: exponent must be negative")));
        }
        if !(0.0..=1.0).contains(&self.gain) {
            return Err(Error::InvalidWorld(format!("{what}: gain must lie in [0, 1]")));
        }
        Ok(())
    }
}

/// Extra gain that needs both factors of a pair. It saturates in the smaller
/// of the two counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Interaction {
    pub factors: [FactorId; 2],
    pub gain: f64,
    pub rate: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Evaluations return the ground truth exactly.
    Noiseless,
    /// Mean of Bernoulli trial outcomes.
    #[default]
    Bernoulli,
    /// Mean of bounded partial-credit draws centred on the ground truth.
    Continuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub trials: u32,
    #[serde(default)]
    pub kind: NoiseKind,
}

impl NoiseModel {
    pub fn noiseless() -> Self {
        NoiseModel { trials: 1, kind: NoiseKind::Noiseless }
    }

    pub fn bernoulli(trials: u32) -> Self {
        NoiseModel { trials, kind: NoiseKind::Bernoulli }
    }
}

/// Ground-truth performance over per-factor counts:
/// `clamp(base + Σ_i gain_i (1 - (1 + n_i / rate_i)^exponent_i) + interactions, 0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticWorld {
    pub factors: Vec<FactorResponse>,
    pub base_score: f64,
    #[serde(default)]
    pub interactions: Vec<Interaction>,
    pub noise: NoiseModel,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticWorld {
    pub fn n_factors(&self) -> usize {
        self.factors.len()
    }

    pub fn factor_ids(&self) -> Vec<FactorId> {
        (0..self.factors.len() as u32).map(FactorId).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::InvalidWorld("at least one factor is required".into()));
        }
        if !(0.0..=1.0).contains(&self.base_score) {
            return Err(Error::InvalidWorld("base_score must lie in [0, 1]".into()));
        }
        for (i, f) in self.factors.iter().enumerate() {
            f.validate(&format!("factor {i}"))?;
        }
        for (i, t) in self.interactions.iter().enumerate() {
            let what = format!("interaction {i}");
            FactorResponse { gain: t.gain, rate: t.rate, exponent: t.exponent, eval_offset: 0.0 }.validate(&what)?;
            if t.factors[0] == t.factors[1] || t.factors.iter().any(|id| id.index() >= self.factors.len()) {
                return Err(Error::InvalidWorld(format!("{what}: needs two distinct known factors")));
            }
        }
        if self.noise.trials == 0 {
            return Err(Error::InvalidWorld("noise.trials must be at least 1".into()));
        }
        Ok(())
    }

    fn counts(&self, ledger: &DatasetLedger) -> Result<Vec<u64>> {
        let mut counts = alloc::vec![0u64; self.factors.len()];
        for (id, c) in &ledger.factor_counts {
            *counts.get_mut(id.index()).ok_or(Error::UnknownFactor(*id))? = *c;
        }
        Ok(counts)
    }

    fn interaction_sum(&self, counts: &[u64]) -> f64 {
        self.interactions
            .iter()
            .map(|t| {
                let n = counts[t.factors[0].index()].min(counts[t.factors[1].index()]);
                t.gain * (1.0 - libm::pow(1.0 + n as f64 / t.rate, t.exponent))
            })
            .sum()
    }

    /// Noiseless overall score of a policy trained on `ledger`.
    pub fn ground_truth_score(&self, ledger: &DatasetLedger) -> Result<f64> {
        let counts = self.counts(ledger)?;
        let additive: f64 = self.factors.iter().zip(&counts).map(|(f, n)| f.contribution(*n)).sum();
        Ok((self.base_score + additive + self.interaction_sum(&counts)).clamp(0.0, 1.0))
    }

    /// Noiseless score on environments that vary factor `i` only. Unclamped,
    /// the mean over factors equals the overall score when offsets sum to 0.
    pub fn per_factor_truth(&self, ledger: &DatasetLedger) -> Result<BTreeMap<FactorId, f64>> {
        let counts = self.counts(ledger)?;
        let inter = self.interaction_sum(&counts);
        let n = self.factors.len() as f64;
        Ok(self
            .factors
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(i, (f, c))| {
                let s = self.base_score + f.eval_offset + n * f.contribution(*c) + inter;
                (FactorId(i as u32), s.clamp(0.0, 1.0))
            })
            .collect())
    }

    /// Ground-truth gain per demonstration when `budget` more demonstrations
    /// are split evenly across the combo's members.
    pub fn true_combo_slope(&self, ledger: &DatasetLedger, combo: &FactorCombo, budget: u64) -> Result<f64> {
        let mut plan = AllocationPlan::new(budget);
        for (id, c) in combo.members.iter().zip(apportion_integer(budget, &alloc::vec![1; combo.len()])) {
            plan.add(*id, c);
        }
        let after = self.ground_truth_score(&ledger.apply(&plan)?)?;
        Ok((after - self.ground_truth_score(ledger)?) / budget as f64)
    }
}

pub fn ground_truth_score(world: &SyntheticWorld, ledger: &DatasetLedger) -> Result<f64> {
    world.ground_truth_score(ledger)
}

fn draw_score<R: Rng + ?Sized>(p: f64, trials: u32, kind: NoiseKind, rng: &mut R) -> f64 {
    match kind {
        NoiseKind::Noiseless => p,
        NoiseKind::Bernoulli => {
            let wins = (0..trials).filter(|_| rng.gen::<f64>() < p).count();
            wins as f64 / trials as f64
        }
        NoiseKind::Continuous => {
            let half_width = p.min(1.0 - p);
            let total: f64 = (0..trials).map(|_| p + half_width * (2.0 * rng.gen::<f64>() - 1.0)).sum();
            (total / trials as f64).clamp(0.0, 1.0)
        }
    }
}

/// Evaluates the policy trained on `ledger` over `trials` episodes. The
/// returned sample's `n` is the ledger total; callers relabel it.
pub fn noisy_evaluate<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    ledger: &DatasetLedger,
    trials: u32,
    rng: &mut R,
) -> Result<CurveSample> {
    if trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1".into()));
    }
    let p = world.ground_truth_score(ledger)?;
    Ok(CurveSample::new(ledger.total(), draw_score(p, trials, world.noise.kind, rng), trials))
}

/// Per-factor evaluation of the initial policy, as seen by the greedy baseline.
pub fn evaluate_per_factor<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    ledger: &DatasetLedger,
    trials: u32,
    rng: &mut R,
) -> Result<FactorEvalBreakdown> {
    let truth = world.per_factor_truth(ledger)?;
    let per_factor_score = truth
        .into_iter()
        .map(|(id, p)| (id, draw_score(p, trials, world.noise.kind, rng)))
        .collect::<BTreeMap<_, _>>();
    let overall = per_factor_score.values().sum::<f64>() / per_factor_score.len().max(1) as f64;
    Ok(FactorEvalBreakdown { per_factor_score, overall })
}

/// Synthetic embedding settings for the proxy metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxySettings {
    /// Neighbours averaged per evaluation point.
    pub k: usize,
    pub eval_points: usize,
    /// Per-coordinate uniform jitter added before normalizing.
    pub jitter: f64,
}

impl Default for ProxySettings {
    fn default() -> Self {
        ProxySettings { k: 1, eval_points: 64, jitter: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Metric {
    #[default]
    SuccessRate,
    Proxy(ProxySettings),
}

// Axis 0 is the nominal setting, axis i + 1 belongs to factor i and the last
// two axes only carry jitter.
fn embedding_dim(n_factors: usize) -> usize {
    n_factors + 3
}

fn jittered_unit<R: Rng + ?Sized>(mut v: Vec<f64>, jitter: f64, rng: &mut R) -> Vec<f64> {
    for x in v.iter_mut() {
        *x += jitter * (2.0 * rng.gen::<f64>() - 1.0);
    }
    let norm = libm::sqrt(v.iter().map(|x| x * x).sum());
    v.iter().map(|x| x / norm).collect()
}

/// Evaluation observations: each one varies a single factor, drawn with
/// probability proportional to the factor's gain.
fn synthetic_eval_set<R: Rng + ?Sized>(world: &SyntheticWorld, s: &ProxySettings, rng: &mut R) -> Result<EmbeddingSet> {
    let dim = embedding_dim(world.n_factors());
    let total_gain: f64 = world.factors.iter().map(|f| f.gain).sum();
    let mut vectors = Vec::with_capacity(s.eval_points);
    for p in 0..s.eval_points {
        let u = rng.gen::<f64>() * total_gain;
        let mut acc = 0.0;
        let mut which = world.n_factors() - 1;
        for (i, f) in world.factors.iter().enumerate() {
            acc += f.gain;
            if u < acc {
                which = i;
                break;
            }
        }
        let mut v = alloc::vec![0.0; dim];
        v[which + 1] = 1.0;
        vectors.push(EmbeddingVector::new(format!("eval_{p}"), jittered_unit(v, s.jitter, rng)));
    }
    EmbeddingSet::new(vectors, SetRole::Eval)
}

/// Training observations for a policy trained on `ledger`: factor-`i`
/// demonstrations sit at an angle from the factor axis that closes as the
/// factor's count grows.
fn synthetic_train_set<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    ledger: &DatasetLedger,
    s: &ProxySettings,
    rng: &mut R,
) -> Result<EmbeddingSet> {
    let dim = embedding_dim(world.n_factors());
    let counts = world.counts(ledger)?;
    let mut vectors = Vec::new();
    for p in 0..ledger.nominal_count.max(1) {
        let mut v = alloc::vec![0.0; dim];
        v[0] = 1.0;
        vectors.push(EmbeddingVector::new(format!("nominal_{p}"), jittered_unit(v, s.jitter, rng)));
    }
    for (i, (f, n)) in world.factors.iter().zip(&counts).enumerate() {
        let angle = core::f64::consts::FRAC_PI_2 * f.remaining(*n);
        for p in 0..*n {
            let mut v = alloc::vec![0.0; dim];
            v[0] = libm::sin(angle);
            v[i + 1] = libm::cos(angle);
            vectors.push(EmbeddingVector::new(format!("f{i}_{p}"), jittered_unit(v, s.jitter, rng)));
        }
    }
    EmbeddingSet::new(vectors, SetRole::Train)
}

/// One fitted curve plus the points it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRecord {
    pub combo: FactorCombo,
    pub samples: Vec<CurveSample>,
    pub fit: PowerLawFit,
}

/// Curve-construction knobs shared by every combo.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurveBuild<'a> {
    pub points_per_curve: usize,
    pub trials: u32,
    /// Independent evaluations averaged per schedule point.
    pub repeats: u32,
    pub metric: &'a Metric,
    pub fit: &'a FitConfig,
}

// Combo, its offset, and the ledger each schedule point trains on.
type ComboPlan = (FactorCombo, u64, Vec<(u64, DatasetLedger)>);

/// For each combo: drop the combo's data, add back `k` demonstrations for
/// every `k` on the schedule, evaluate, and fit with offset `|D \ D_combo|`.
pub fn build_curves<R: Rng + ?Sized>(
    world: &SyntheticWorld,
    ledger: &DatasetLedger,
    scheme: &ComboScheme,
    build: &CurveBuild<'_>,
    rng: &mut R,
) -> Result<Vec<CurveRecord>> {
    if build.points_per_curve < 2 {
        return Err(Error::ScheduleTooShort(build.points_per_curve));
    }
    if build.trials == 0 || build.repeats == 0 {
        return Err(Error::InvalidConfig("trials and repeats must be at least 1".into()));
    }
    let mut plans: Vec<ComboPlan> = Vec::with_capacity(scheme.len());
    for combo in &scheme.combos {
        let combo_total = ledger.combo_total(combo)?;
        if combo_total == 0 {
            return Err(Error::InvalidConfig(format!("combo {:?} has no demonstrations to remove", combo.members)));
        }
        let mut points = Vec::new();
        for k in training_size_schedule(combo_total, build.points_per_curve)? {
            let mut reduced = ledger.clone();
            for (id, c) in split_combo_count(k, combo, ledger)? {
                reduced = reduced.with_count(id, c)?;
            }
            points.push((k, reduced));
        }
        plans.push((combo.clone(), ledger.total() - combo_total, points));
    }

    let scores: Vec<Vec<(u64, f64, u32)>> = match build.metric {
        Metric::SuccessRate => {
            let mut all = Vec::with_capacity(plans.len());
            for (_, _, points) in &plans {
                let mut row = Vec::with_capacity(points.len());
                for (k, reduced) in points {
                    let mut total = 0.0;
                    for _ in 0..build.repeats {
                        total += noisy_evaluate(world, reduced, build.trials, rng)?.score;
                    }
                    row.push((*k, total / build.repeats as f64, build.trials * build.repeats));
                }
                all.push(row);
            }
            all
        }
        Metric::Proxy(settings) => {
            if settings.eval_points == 0 {
                return Err(Error::InvalidConfig("proxy eval_points must be at least 1".into()));
            }
            let evalset = synthetic_eval_set(world, settings, rng)?;
            let mut raw = Vec::new();
            for (_, _, points) in &plans {
                for (_, reduced) in points {
                    let trainset = synthetic_train_set(world, reduced, settings, rng)?;
                    raw.push(raw_similarities(&evalset, &trainset, settings.k)?);
                }
            }
            let mut means = shared_normalized_means(&raw).into_iter();
            plans
                .iter()
                .map(|(_, _, points)| {
                    points
                        .iter()
                        .map(|(k, _)| (*k, means.next().unwrap_or(0.0), settings.eval_points as u32))
                        .collect()
                })
                .collect()
        }
    };

    plans
        .into_iter()
        .zip(scores)
        .map(|((combo, offset, _), row)| {
            let samples: Vec<CurveSample> = row.into_iter().map(|(k, s, t)| CurveSample::new(k, s, t)).collect();
            let fit = fit_power_law(&samples, offset, build.fit)?;
            Ok(CurveRecord { combo, samples, fit })
        })
        .collect()
}

/// A family of worlds where one combo clearly dominates. Each draw marks a
/// random combo of the configured scheme as dominant, gives its members
/// strong gains, and redraws until that combo's true slope is at least
/// `min_ratio` times every other combo's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DominantFamily {
    pub n_factors: usize,
    pub base_score: f64,
    pub strong_gain: [f64; 2],
    pub weak_gain: [f64; 2],
    pub rate: [f64; 2],
    pub exponent: [f64; 2],
    /// Per-factor evaluation offsets are drawn from `[-spread, spread]`.
    pub eval_offset_spread: f64,
    pub min_ratio: f64,
    pub noise: NoiseModel,
}

impl Default for DominantFamily {
    fn default() -> Self {
        DominantFamily {
            n_factors: 4,
            base_score: 0.15,
            strong_gain: [0.25, 0.35],
            weak_gain: [0.02, 0.06],
            rate: [20.0, 40.0],
            exponent: [-1.2, -0.6],
            eval_offset_spread: 0.1,
            min_ratio: 3.0,
            noise: NoiseModel::bernoulli(60),
        }
    }
}

const MAX_FAMILY_DRAWS: usize = 1000;

fn uniform<R: Rng + ?Sized>(rng: &mut R, range: [f64; 2]) -> f64 {
    range[0] + (range[1] - range[0]) * rng.gen::<f64>()
}

impl DominantFamily {
    pub fn sample<R: Rng + ?Sized>(
        &self,
        scheme: &ComboScheme,
        ledger: &DatasetLedger,
        budget: u64,
        rng: &mut R,
    ) -> Result<(SyntheticWorld, FactorCombo)> {
        if scheme.len() < 2 {
            return Err(Error::InvalidWorld("dominant family needs at least two combos".into()));
        }
        for _ in 0..MAX_FAMILY_DRAWS {
            let dominant = scheme.combos[rng.gen_range(0..scheme.len())].clone();
            let factors = (0..self.n_factors)
                .map(|i| FactorResponse {
                    gain: uniform(rng, if dominant.contains(FactorId(i as u32)) { self.strong_gain } else { self.weak_gain }),
                    rate: uniform(rng, self.rate),
                    exponent: uniform(rng, self.exponent),
                    eval_offset: self.eval_offset_spread * (2.0 * rng.gen::<f64>() - 1.0),
                })
                .collect();
            let world = SyntheticWorld {
                factors,
                base_score: self.base_score,
                interactions: Vec::new(),
                noise: self.noise,
                seed: 0,
            };
            world.validate()?;
            let best = world.true_combo_slope(ledger, &dominant, budget)?;
            let mut ok = best > 0.0;
            for c in scheme.combos.iter().filter(|c| **c != dominant) {
                if world.true_combo_slope(ledger, c, budget)? * self.min_ratio > best {
                    ok = false;
                    break;
                }
            }
            if ok {
                return Ok((world, dominant));
            }
        }
        Err(Error::InvalidWorld(format!(
            "no dominant world with slope ratio {} found in {MAX_FAMILY_DRAWS} draws",
            self.min_ratio
        )))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WorldSpec {
    Fixed(SyntheticWorld),
    Dominant(DominantFamily),
}

/// Everything needed to run the closed loop for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessConfig {
    pub world: WorldSpec,
    pub ledger: DatasetLedger,
    pub scheme: SchemeKind,
    #[serde(default)]
    pub pairing: Option<Vec<Vec<FactorId>>>,
    pub strategy: StrategyChoice,
    pub budget: u64,
    pub points_per_curve: usize,
    #[serde(default = "one")]
    pub repeats: u32,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub master_seed: u64,
}

fn one() -> u32 {
    1
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.budget == 0 {
            return Err(Error::ZeroBudget);
        }
        if self.points_per_curve < 2 {
            return Err(Error::ScheduleTooShort(self.points_per_curve));
        }
        if self.repeats == 0 {
            return Err(Error::InvalidConfig("repeats must be at least 1".into()));
        }
        self.fit.validate()?;
        let ids: Vec<FactorId> = self.ledger.factor_ids().collect();
        crate::domain::check_factor_ids(&ids)?;
        let n = match &self.world {
            WorldSpec::Fixed(w) => {
                w.validate()?;
                w.n_factors()
            }
            WorldSpec::Dominant(f) => f.n_factors,
        };
        if n != ids.len() {
            return Err(Error::InvalidConfig(format!("world has {n} factors but the ledger has {}", ids.len())));
        }
        if let Metric::Proxy(p) = &self.metric {
            if p.k == 0 {
                return Err(Error::ZeroK);
            }
        }
        Ok(())
    }

    pub fn factor_ids(&self) -> Vec<FactorId> {
        self.ledger.factor_ids().collect()
    }
}

/// Independent stream for one seed of a sweep.
pub fn seed_stream(master_seed: u64, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(seed);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub combo: FactorCombo,
    pub samples: Vec<CurveSample>,
    pub fit: PowerLawFit,
    pub current_n: u64,
    /// Fitted gain per demonstration over the budget horizon.
    pub slope: f64,
    /// The same quantity computed from the ground truth.
    pub true_slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanResult {
    pub plan: AllocationPlan,
    pub realized_score: f64,
    pub realized_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub world: SyntheticWorld,
    pub scheme: SchemeKind,
    pub strategy: StrategyChoice,
    pub budget: u64,
    pub initial_score: f64,
    pub initial_total: u64,
    pub curves: Vec<CurveReport>,
    pub included: Vec<FactorCombo>,
    pub equal_fallback: bool,
    /// Highest fitted slope.
    pub selected_top: FactorCombo,
    /// Highest ground-truth slope.
    pub true_top: FactorCombo,
    pub fsc: PlanResult,
    pub equal: PlanResult,
    pub greedy: PlanResult,
    pub greedy_evals: FactorEvalBreakdown,
}

fn realize(world: &SyntheticWorld, ledger: &DatasetLedger, plan: AllocationPlan) -> Result<PlanResult> {
    let after = ledger.apply(&plan)?;
    Ok(PlanResult { realized_score: world.ground_truth_score(&after)?, realized_total: after.total(), plan })
}

fn top_by<F: Fn(&CurveReport) -> f64>(curves: &[CurveReport], key: F) -> FactorCombo {
    let mut best = &curves[0];
    for c in &curves[1..] {
        if key(c) > key(best) {
            best = c;
        }
    }
    best.combo.clone()
}

/// Builds curves, allocates, and scores the plan against both baselines.
pub fn run_experiment(config: &HarnessConfig, seed: u64) -> Result<ExperimentReport> {
    config.validate()?;
    let mut rng = seed_stream(config.master_seed, seed);
    let ids = config.factor_ids();
    let scheme = ComboScheme::build(config.scheme, &ids, config.pairing.as_deref())?;
    let ledger = &config.ledger;

    let world = match &config.world {
        WorldSpec::Fixed(w) => w.clone(),
        WorldSpec::Dominant(family) => family.sample(&scheme, ledger, config.budget, &mut rng)?.0,
    };
    let trials = world.noise.trials;
    let build = CurveBuild {
        points_per_curve: config.points_per_curve,
        trials,
        repeats: config.repeats,
        metric: &config.metric,
        fit: &config.fit,
    };
    let records = build_curves(&world, ledger, &scheme, &build, &mut rng)?;

    let mut curves = Vec::with_capacity(records.len());
    for r in records {
        let current_n = ledger.combo_total(&r.combo)?;
        let slope = r.fit.expected_slope(current_n, config.budget);
        let true_slope = world.true_combo_slope(ledger, &r.combo, config.budget)?;
        curves.push(CurveReport { combo: r.combo, samples: r.samples, fit: r.fit, current_n, slope, true_slope });
    }
    let slopes: Vec<ComboSlope> = curves
        .iter()
        .map(|c| ComboSlope { combo: c.combo.clone(), slope: c.slope, current_n: c.current_n })
        .collect();
    let outcome = plan_allocation(config.scheme, &slopes, &config.strategy, config.budget, &ids)?;

    let greedy_evals = evaluate_per_factor(&world, ledger, trials, &mut rng)?;
    let equal_plan = baseline_equal(&ids, config.budget)?;
    let greedy_plan = baseline_greedy(&greedy_evals, config.budget)?;

    Ok(ExperimentReport {
        seed,
        scheme: config.scheme,
        strategy: config.strategy,
        budget: config.budget,
        initial_score: world.ground_truth_score(ledger)?,
        initial_total: ledger.total(),
        included: outcome.included.iter().map(|s| s.combo.clone()).collect(),
        equal_fallback: outcome.equal_fallback,
        selected_top: outcome.ranked[0].combo.clone(),
        true_top: top_by(&curves, |c| c.true_slope),
        fsc: realize(&world, ledger, outcome.plan)?,
        equal: realize(&world, ledger, equal_plan)?,
        greedy: realize(&world, ledger, greedy_plan)?,
        greedy_evals,
        curves,
        world,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepAggregate {
    pub n_seeds: usize,
    pub fsc: ScoreStats,
    pub equal: ScoreStats,
    pub greedy: ScoreStats,
    /// Fraction of seeds where the first strategy scores strictly higher.
    pub fsc_win_rate_vs_equal: f64,
    pub fsc_win_rate_vs_greedy: f64,
    pub equal_win_rate_vs_fsc: f64,
    pub greedy_win_rate_vs_fsc: f64,
    /// Fraction of seeds whose top fitted combo is the true top combo.
    pub top_selection_accuracy: f64,
    pub equal_fallbacks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Sorted by seed.
    pub reports: Vec<ExperimentReport>,
    pub aggregate: SweepAggregate,
}

fn stats(values: &[f64]) -> ScoreStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std_error = if values.len() > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        libm::sqrt(var / n)
    } else {
        0.0
    };
    ScoreStats { mean, std_error }
}

fn win_rate(reports: &[ExperimentReport], f: impl Fn(&ExperimentReport) -> bool) -> f64 {
    reports.iter().filter(|r| f(r)).count() as f64 / reports.len() as f64
}

/// Aggregates per-seed reports. The fold runs over reports sorted by seed,
/// so the result does not depend on the order they were produced in.
pub fn aggregate(reports: &[ExperimentReport]) -> Result<SweepAggregate> {
    if reports.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let mut sorted: Vec<&ExperimentReport> = reports.iter().collect();
    sorted.sort_by_key(|r| r.seed);
    let sorted: Vec<ExperimentReport> = sorted.into_iter().cloned().collect();
    let col = |f: fn(&ExperimentReport) -> f64| sorted.iter().map(f).collect::<Vec<_>>();
    Ok(SweepAggregate {
        n_seeds: sorted.len(),
        fsc: stats(&col(|r| r.fsc.realized_score)),
        equal: stats(&col(|r| r.equal.realized_score)),
        greedy: stats(&col(|r| r.greedy.realized_score)),
        fsc_win_rate_vs_equal: win_rate(&sorted, |r| r.fsc.realized_score > r.equal.realized_score),
        fsc_win_rate_vs_greedy: win_rate(&sorted, |r| r.fsc.realized_score > r.greedy.realized_score),
        equal_win_rate_vs_fsc: win_rate(&sorted, |r| r.equal.realized_score > r.fsc.realized_score),
        greedy_win_rate_vs_fsc: win_rate(&sorted, |r| r.greedy.realized_score > r.fsc.realized_score),
        top_selection_accuracy: win_rate(&sorted, |r| r.selected_top == r.true_top),
        equal_fallbacks: sorted.iter().filter(|r| r.equal_fallback).count(),
    })
}

/// Runs one experiment per seed and aggregates them.
pub fn run_sweep(config: &HarnessConfig, seeds: &[u64]) -> Result<SweepReport> {
    if seeds.is_empty() {
        return Err(Error::Empty("seed list"));
    }
    let mut reports = seeds.iter().map(|s| run_experiment(config, *s)).collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|r| r.seed);
    let aggregate = aggregate(&reports)?;
    Ok(SweepReport { reports, aggregate })
}

/// Human-readable label for a report row, e.g. `0+1`.
pub fn combo_label(combo: &FactorCombo) -> String {
    let mut out = String::new();
    for (i, id) in combo.members.iter().enumerate() {
        if i > 0 {
            out.push('+');
        }
        out.push_str(&format!("{id}"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocator::Strategy;
    use alloc::vec;

    fn response(gain: f64, rate: f64, exponent: f64) -> FactorResponse {
        FactorResponse { gain, rate, exponent, eval_offset: 0.0 }
    }

    fn world(factors: Vec<FactorResponse>, base: f64, noise: NoiseModel) -> SyntheticWorld {
        SyntheticWorld { factors, base_score: base, interactions: vec![], noise, seed: 0 }
    }

    #[test]
    fn ground_truth_examples() {
        let w = world(vec![response(0.4, 30.0, -1.0)], 0.3, NoiseModel::noiseless());
        assert_eq!(w.ground_truth_score(&DatasetLedger::new(0, [0])).unwrap(), 0.3);
        assert!((w.ground_truth_score(&DatasetLedger::new(0, [30])).unwrap() - 0.5).abs() < 1e-15);
        let big = w.ground_truth_score(&DatasetLedger::new(0, [u32::MAX as u64])).unwrap();
        assert!((big - 0.7).abs() < 1e-6);

        let w2 = world(vec![response(0.6, 10.0, -2.0), response(0.6, 10.0, -2.0)], 0.3, NoiseModel::noiseless());
        let sat = w2.ground_truth_score(&DatasetLedger::new(0, [1 << 40, 1 << 40])).unwrap();
        assert_eq!(sat, 1.0);
    }

    #[test]
    fn unknown_factor_is_rejected() {
        let w = world(vec![response(0.4, 30.0, -1.0)], 0.3, NoiseModel::noiseless());
        assert_eq!(
            w.ground_truth_score(&DatasetLedger::new(0, [1, 2])),
            Err(Error::UnknownFactor(FactorId(1)))
        );
    }

    #[test]
    fn interactions_need_both_factors() {
        let mut w = world(vec![response(0.1, 10.0, -1.0), response(0.1, 10.0, -1.0)], 0.2, NoiseModel::noiseless());
        w.interactions.push(Interaction { factors: [FactorId(0), FactorId(1)], gain: 0.2, rate: 10.0, exponent: -1.0 });
        w.validate().unwrap();
        let only_one = w.ground_truth_score(&DatasetLedger::new(0, [10, 0])).unwrap();
        assert!((only_one - (0.2 + 0.05)).abs() < 1e-15);
        let both = w.ground_truth_score(&DatasetLedger::new(0, [10, 10])).unwrap();
        assert!((both - (0.2 + 0.05 + 0.05 + 0.1)).abs() < 1e-15);
    }

    #[test]
    fn world_validation() {
        let mut w = world(vec![response(0.4, 30.0, -1.0)], 0.3, NoiseModel::noiseless());
        assert!(w.validate().is_ok());
        w.factors[0].exponent = 0.5;
        assert!(w.validate().is_err());
        w.factors[0].exponent = -0.5;
        w.factors[0].rate = 0.0;
        assert!(w.validate().is_err());
    }

    #[test]
    fn degenerate_bernoulli() {
        let mut rng = seed_stream(1, 2);
        let one = world(vec![response(1.0, 1.0, -1.0)], 0.0, NoiseModel::bernoulli(10));
        let sure = DatasetLedger::new(0, [1 << 50]);
        assert_eq!(noisy_evaluate(&one, &sure, 37, &mut rng).unwrap().score, 1.0);
        let zero = world(vec![response(0.0, 1.0, -1.0)], 0.0, NoiseModel::bernoulli(10));
        assert_eq!(noisy_evaluate(&zero, &sure, 37, &mut rng).unwrap().score, 0.0);
        assert!(noisy_evaluate(&zero, &sure, 0, &mut rng).is_err());
    }

    #[test]
    fn bernoulli_mean_is_unbiased() {
        // p = 0.5: 3 standard errors of a 4000-trial mean is 3 sqrt(0.25 / 4000) ≈ 0.024.
        let w = world(vec![response(0.5, 10.0, -1.0)], 0.0, NoiseModel::bernoulli(4000));
        let ledger = DatasetLedger::new(0, [1 << 52]);
        assert!((w.ground_truth_score(&ledger).unwrap() - 0.5).abs() < 1e-9);
        let mut rng = seed_stream(7, 0);
        for _ in 0..100 {
            let s = noisy_evaluate(&w, &ledger, 4000, &mut rng).unwrap().score;
            assert!((s - 0.5).abs() < 0.024, "score {s}");
        }
    }

    #[test]
    fn continuous_noise_is_bounded() {
        let mut w = world(vec![response(0.5, 10.0, -1.0)], 0.1, NoiseModel::bernoulli(20));
        w.noise.kind = NoiseKind::Continuous;
        let mut rng = seed_stream(3, 3);
        let ledger = DatasetLedger::new(0, [25]);
        for _ in 0..200 {
            let s = noisy_evaluate(&w, &ledger, 20, &mut rng).unwrap().score;
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn schedule_points_per_curve() {
        let w = world(vec![response(0.3, 30.0, -0.8); 4], 0.2, NoiseModel::bernoulli(15));
        let ledger = DatasetLedger::uniform(4, 30, 0);
        let scheme = ComboScheme::build(SchemeKind::Group, &w.factor_ids(), None).unwrap();
        let fit = FitConfig::default();
        let build = CurveBuild { points_per_curve: 4, trials: 15, repeats: 1, metric: &Metric::SuccessRate, fit: &fit };
        let curves = build_curves(&w, &ledger, &scheme, &build, &mut seed_stream(0, 0)).unwrap();
        assert_eq!(curves.len(), 2);
        for c in &curves {
            assert_eq!(c.samples.iter().map(|s| s.n).collect::<Vec<_>>(), vec![0, 20, 40, 60]);
            assert_eq!(c.fit.offset, 60);
        }
    }

    #[test]
    fn noiseless_on_model_recovery() {
        // base + gain = 1 and rate = offset put the curve exactly on the model:
        // 1 - 0.8 (1 + n / 60)^-0.7 = 1 - 0.8 * 60^0.7 * (n + 60)^-0.7.
        let w = world(vec![response(0.8, 60.0, -0.7), response(0.0, 30.0, -1.0)], 0.2, NoiseModel::noiseless());
        let ledger = DatasetLedger::new(0, [60, 60]);
        let scheme = ComboScheme::build(SchemeKind::OneFactor, &w.factor_ids(), None).unwrap();
        let fit = FitConfig::default();
        let build = CurveBuild { points_per_curve: 4, trials: 1, repeats: 1, metric: &Metric::SuccessRate, fit: &fit };
        let curves = build_curves(&w, &ledger, &scheme, &build, &mut seed_stream(0, 0)).unwrap();
        let f = curves[0].fit;
        assert!((f.b + 0.7).abs() < 1e-9);
        assert!((f.a / (0.8 * 60f64.powf(0.7)) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dominant_factor_has_largest_fitted_slope() {
        let w = world(
            vec![response(0.5, 30.0, -1.0), response(0.05, 30.0, -1.0), response(0.05, 30.0, -1.0)],
            0.1,
            NoiseModel::noiseless(),
        );
        let ledger = DatasetLedger::uniform(3, 30, 0);
        let scheme = ComboScheme::build(SchemeKind::OneFactor, &w.factor_ids(), None).unwrap();
        let fit = FitConfig::default();
        let build = CurveBuild { points_per_curve: 4, trials: 1, repeats: 1, metric: &Metric::SuccessRate, fit: &fit };
        let curves = build_curves(&w, &ledger, &scheme, &build, &mut seed_stream(0, 0)).unwrap();
        let slopes: Vec<f64> = curves.iter().map(|c| c.fit.expected_slope(30, 100)).collect();
        assert!(slopes[0] > slopes[1] && slopes[0] > slopes[2]);
        let truth: Vec<f64> =
            scheme.combos.iter().map(|c| w.true_combo_slope(&ledger, c, 100).unwrap()).collect();
        assert!(truth[0] > truth[1] && truth[0] > truth[2]);
    }

    fn symmetric_config(strategy: Strategy) -> HarnessConfig {
        HarnessConfig {
            world: WorldSpec::Fixed(world(vec![response(0.2, 30.0, -0.8); 4], 0.1, NoiseModel::noiseless())),
            ledger: DatasetLedger::uniform(4, 30, 0),
            scheme: SchemeKind::Group,
            pairing: None,
            strategy: StrategyChoice::new(strategy),
            budget: 100,
            points_per_curve: 4,
            repeats: 1,
            fit: FitConfig::default(),
            metric: Metric::SuccessRate,
            master_seed: 0,
        }
    }

    #[test]
    fn symmetric_world_matches_equal() {
        let r = run_experiment(&symmetric_config(Strategy::All), 5).unwrap();
        assert_eq!(r.fsc.plan, r.equal.plan);
        assert_eq!(r.fsc.realized_score, r.equal.realized_score);
        assert_eq!(r.fsc.realized_total, r.initial_total + 100);
    }

    #[test]
    fn experiments_are_deterministic() {
        let mut cfg = symmetric_config(Strategy::Top);
        cfg.world = WorldSpec::Dominant(DominantFamily::default());
        let a = run_experiment(&cfg, 11).unwrap();
        let b = run_experiment(&cfg, 11).unwrap();
        assert_eq!(a, b);
        let c = run_experiment(&cfg, 12).unwrap();
        assert_ne!(a.world, c.world);
    }

    #[test]
    fn sweep_properties() {
        let mut cfg = symmetric_config(Strategy::Top);
        cfg.world = WorldSpec::Dominant(DominantFamily::default());
        let single = run_sweep(&cfg, &[4]).unwrap();
        assert_eq!(single.aggregate.fsc.mean, single.reports[0].fsc.realized_score);
        assert_eq!(single.aggregate.fsc.std_error, 0.0);

        let dup = run_sweep(&cfg, &[4, 4]).unwrap();
        assert_eq!(dup.reports[0], dup.reports[1]);

        let fwd = run_sweep(&cfg, &[1, 2, 3, 9]).unwrap();
        let rev = run_sweep(&cfg, &[9, 3, 2, 1]).unwrap();
        assert_eq!(fwd, rev);
        assert!(run_sweep(&cfg, &[]).is_err());
    }

    #[test]
    fn proxy_curves_increase_with_coverage() {
        let w = world(vec![response(0.4, 20.0, -1.0), response(0.1, 20.0, -1.0)], 0.1, NoiseModel::noiseless());
        let ledger = DatasetLedger::uniform(2, 30, 0);
        let scheme = ComboScheme::build(SchemeKind::OneFactor, &w.factor_ids(), None).unwrap();
        let fit = FitConfig::default();
        let metric = Metric::Proxy(ProxySettings::default());
        let build = CurveBuild { points_per_curve: 4, trials: 1, repeats: 1, metric: &metric, fit: &fit };
        let curves = build_curves(&w, &ledger, &scheme, &build, &mut seed_stream(0, 1)).unwrap();
        for c in &curves {
            assert!(c.samples.iter().all(|s| (0.0..=1.0).contains(&s.score)));
            assert!(c.samples.last().unwrap().score > c.samples[0].score);
        }
        assert!(!curves[0].fit.degenerate);
    }
}
