//! Embedding-similarity proxy for policy performance.
//!
//! Each evaluation observation is scored by its cosine similarity to the
//! closest training observations (mean of the `k` best), the per-point scores
//! are min-max normalized to `[0, 1]`, and the dataset score is their mean.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub values: Vec<f64>,
    pub source_id: String,
}

impl EmbeddingVector {
    pub fn new(source_id: impl Into<String>, values: Vec<f64>) -> Self {
        EmbeddingVector { values, source_id: source_id.into() }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// Finite entries and a non-zero norm.
    pub fn validate(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEmbedding { source_id: self.source_id.clone() });
        }
        if self.values.is_empty() || self.norm() == 0.0 {
            return Err(Error::ZeroNorm { source_id: self.source_id.clone() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SetRole {
    Train,
    Eval,
}

/// Observations of one role, all of the same dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSet {
    pub vectors: Vec<EmbeddingVector>,
    pub role: SetRole,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<EmbeddingVector>, role: SetRole) -> Result<Self> {
        let set = EmbeddingSet { vectors, role };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.vectors.first() else {
            return Ok(());
        };
        let dim = first.dim();
        for v in &self.vectors {
            if v.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: v.dim(), source_id: v.source_id.clone() });
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> Option<usize> {
        self.vectors.first().map(EmbeddingVector::dim)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub fn cosine_similarity(u: &EmbeddingVector, v: &EmbeddingVector) -> Result<f64> {
    if u.dim() != v.dim() {
        return Err(Error::DimensionMismatch { expected: u.dim(), got: v.dim(), source_id: v.source_id.clone() });
    }
    u.validate()?;
    v.validate()?;
    let c = dot(&u.values, &v.values) / (u.norm() * v.norm());
    Ok(c.clamp(-1.0, 1.0))
}

/// Mean of the `k` largest cosine similarities between `x` and `train`.
/// `k = 1` is the plain maximum.
pub fn point_to_set_similarity(x: &EmbeddingVector, train: &EmbeddingSet, k: usize) -> Result<f64> {
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if k == 0 {
        return Err(Error::ZeroK);
    }
    if k > train.len() {
        return Err(Error::KTooLarge { k, size: train.len() });
    }
    let mut sims = train.vectors.iter().map(|t| cosine_similarity(x, t)).collect::<Result<Vec<_>>>()?;
    if k == 1 {
        return Ok(sims.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }
    sims.sort_unstable_by(|a, b| b.total_cmp(a));
    Ok(sims[..k].iter().sum::<f64>() / k as f64)
}

// Cosines of identical directions can differ in the last bits; a min-max
// range narrower than this is treated as constant.
const MIN_RANGE: f64 = 1e-12;

fn degenerate_range(lo: f64, hi: f64) -> bool {
    !(hi - lo > MIN_RANGE)
}

/// Min-max normalization. A constant list maps to all ones.
pub fn normalize_scores(values: &[f64]) -> Vec<f64> {
    let (lo, hi) = min_max(values);
    normalize_with_range(values, lo, hi)
}

/// Min-max normalization against externally supplied bounds.
pub fn normalize_with_range(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    if degenerate_range(lo, hi) {
        return alloc::vec![1.0; values.len()];
    }
    values.iter().map(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)).collect()
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Per-point detail behind a dataset similarity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub mean: f64,
    pub k: usize,
    pub raw: Vec<f64>,
    pub normalized: Vec<f64>,
    /// All raw similarities were equal, so normalization carried no signal.
    pub degenerate_normalization: bool,
}

/// Raw point-to-set similarity of every evaluation observation.
pub fn raw_similarities(evalset: &EmbeddingSet, trainset: &EmbeddingSet, k: usize) -> Result<Vec<f64>> {
    if evalset.is_empty() {
        return Err(Error::Empty("evaluation set"));
    }
    if trainset.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let (de, dt) = (evalset.dim().unwrap_or(0), trainset.dim().unwrap_or(0));
    if de != dt {
        return Err(Error::DimensionMismatch {
            expected: dt,
            got: de,
            source_id: evalset.vectors[0].source_id.clone(),
        });
    }
    evalset.vectors.iter().map(|x| point_to_set_similarity(x, trainset, k)).collect()
}

pub fn similarity_report(evalset: &EmbeddingSet, trainset: &EmbeddingSet, k: usize) -> Result<SimilarityReport> {
    let raw = raw_similarities(evalset, trainset, k)?;
    let (lo, hi) = min_max(&raw);
    let normalized = normalize_with_range(&raw, lo, hi);
    let mean = normalized.iter().sum::<f64>() / normalized.len() as f64;
    Ok(SimilarityReport { mean, k, raw, normalized, degenerate_normalization: degenerate_range(lo, hi) })
}

/// Mean normalized similarity of the evaluation set to the training set.
pub fn dataset_similarity(evalset: &EmbeddingSet, trainset: &EmbeddingSet, k: usize) -> Result<f64> {
    Ok(similarity_report(evalset, trainset, k)?.mean)
}

/// Normalizes several evaluations (e.g. every policy along one curve) with
/// one shared min-max range, so their means stay comparable.
pub fn shared_normalized_means(raw_per_policy: &[Vec<f64>]) -> Vec<f64> {
    let all: Vec<f64> = raw_per_policy.iter().flatten().copied().collect();
    let (lo, hi) = min_max(&all);
    raw_per_policy
        .iter()
        .map(|raw| {
            let n = normalize_with_range(raw, lo, hi);
            if n.is_empty() {
                0.0
            } else {
                n.iter().sum::<f64>() / n.len() as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use alloc::format;
    use proptest::prelude::*;

    fn ev(id: &str, v: &[f64]) -> EmbeddingVector {
        EmbeddingVector::new(id, v.to_vec())
    }

    fn set(vs: &[&[f64]], role: SetRole) -> EmbeddingSet {
        EmbeddingSet::new(vs.iter().enumerate().map(|(i, v)| ev(&format!("p{i}"), v)).collect(), role).unwrap()
    }

    #[test]
    fn cosine_examples() {
        let u = ev("u", &[0.3, -1.2, 4.0]);
        assert!((cosine_similarity(&u, &u).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&ev("a", &[1.0, 0.0]), &ev("b", &[0.0, 1.0])).unwrap(), 0.0);
        let c = cosine_similarity(&ev("a", &[1.0, 2.0, 3.0]), &ev("b", &[4.0, 5.0, 6.0])).unwrap();
        assert!((c - 32.0 / (14f64.sqrt() * 77f64.sqrt())).abs() < 1e-15);
        assert!((c - 0.97463).abs() < 1e-5);
    }

    #[test]
    fn cosine_errors() {
        assert_eq!(
            cosine_similarity(&ev("a", &[1.0, 0.0]), &ev("z", &[0.0, 0.0])),
            Err(Error::ZeroNorm { source_id: "z".into() })
        );
        assert!(matches!(
            cosine_similarity(&ev("a", &[1.0, 0.0]), &ev("b", &[1.0, 0.0, 0.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(EmbeddingSet::new(vec![ev("a", &[1.0]), ev("b", &[1.0, 2.0])], SetRole::Train).is_err());
        assert!(EmbeddingSet::new(vec![ev("nan", &[f64::NAN])], SetRole::Train).is_err());
    }

    #[test]
    fn point_to_set_examples() {
        let train = set(&[&[1.0, 0.0], &[0.0, 1.0]], SetRole::Train);
        assert_eq!(point_to_set_similarity(&ev("x", &[0.0, 1.0]), &train, 1).unwrap(), 1.0);
        assert_eq!(point_to_set_similarity(&ev("x", &[1.0, 0.0]), &train, 2).unwrap(), 0.5);
        assert_eq!(point_to_set_similarity(&ev("x", &[1.0, 0.0]), &train, 3), Err(Error::KTooLarge { k: 3, size: 2 }));
        let empty = EmbeddingSet::new(vec![], SetRole::Train).unwrap();
        assert!(point_to_set_similarity(&ev("x", &[1.0, 0.0]), &empty, 1).is_err());

        let train3 = set(&[&[1.0, 0.0], &[1.0, 1.0], &[0.0, 1.0]], SetRole::Train);
        let x = ev("x", &[2.0, 1.0]);
        let all: f64 = train3.vectors.iter().map(|t| cosine_similarity(&x, t).unwrap()).sum::<f64>() / 3.0;
        assert!((point_to_set_similarity(&x, &train3, 3).unwrap() - all).abs() < 1e-15);
    }

    #[test]
    fn normalization_examples() {
        let n = normalize_scores(&[0.2, 0.6, 1.0]);
        assert!((n[0] - 0.0).abs() < 1e-15 && (n[1] - 0.5).abs() < 1e-15 && (n[2] - 1.0).abs() < 1e-15);
        assert_eq!(normalize_scores(&[0.3, 0.3, 0.3]), vec![1.0; 3]);
        assert_eq!(normalize_scores(&[0.0, 0.25, 1.0]), vec![0.0, 0.25, 1.0]);
        assert_eq!(normalize_scores(&[1.0, 1.0 - f64::EPSILON, 1.0]), vec![1.0; 3]);
    }

    #[test]
    fn dataset_similarity_examples() {
        let train = set(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0]], SetRole::Train);
        let eval = set(&[&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]], SetRole::Eval);
        let report = similarity_report(&eval, &train, 1).unwrap();
        assert_eq!(report.mean, 1.0);
        assert!(report.degenerate_normalization);

        let skew = [0.3, -1.7, 2.9, 0.01, 5.5];
        let train = set(&[&skew, &[1.0, 1.0, 1.0, 1.0, 1.0], &[0.2, 0.1, 0.0, 0.0, -4.0]], SetRole::Train);
        let eval = set(&[&skew, &[0.2, 0.1, 0.0, 0.0, -4.0]], SetRole::Eval);
        assert_eq!(dataset_similarity(&eval, &train, 1).unwrap(), 1.0);

        // raw similarities 0.4 and 0.8 → normalized 0 and 1 → mean 0.5
        let train = set(&[&[1.0, 0.0]], SetRole::Train);
        let a = [0.4, (1.0f64 - 0.16).sqrt()];
        let b = [0.8, (1.0f64 - 0.64).sqrt()];
        let eval = set(&[&a, &b], SetRole::Eval);
        let report = similarity_report(&eval, &train, 1).unwrap();
        assert!((report.raw[0] - 0.4).abs() < 1e-12 && (report.raw[1] - 0.8).abs() < 1e-12);
        assert_eq!(report.normalized, vec![0.0, 1.0]);
        assert_eq!(report.mean, 0.5);

        let single = set(&[&[0.3, 0.7]], SetRole::Eval);
        assert_eq!(dataset_similarity(&single, &train, 1).unwrap(), 1.0);
    }

    #[test]
    fn shared_normalization_keeps_order() {
        let means = shared_normalized_means(&[vec![0.2, 0.4], vec![0.6, 1.0]]);
        assert!((means[0] - 0.125).abs() < 1e-12);
        assert!((means[1] - 0.75).abs() < 1e-12);
    }

    fn vecs(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
            .prop_filter("non-zero", |vs| vs.iter().all(|v| v.iter().any(|x| x.abs() > 1e-3)))
    }

    proptest! {
        #[test]
        fn growth_never_lowers_best_match(train in vecs(4, 1..20), extra in vecs(4, 1..2), x in vecs(4, 1..2)) {
            let train_set = EmbeddingSet::new(train.iter().enumerate().map(|(i, v)| ev(&format!("t{i}"), v)).collect(), SetRole::Train).unwrap();
            let mut grown = train_set.clone();
            grown.vectors.push(ev("extra", &extra[0]));
            let x = ev("x", &x[0]);
            prop_assert!(point_to_set_similarity(&x, &grown, 1).unwrap() >= point_to_set_similarity(&x, &train_set, 1).unwrap());
        }

        #[test]
        fn scale_invariant_and_bounded(train in vecs(3, 1..10), eval in vecs(3, 1..10), scale in 0.01f64..100.0, k in 1usize..4) {
            let t = EmbeddingSet::new(train.iter().enumerate().map(|(i, v)| ev(&format!("t{i}"), v)).collect(), SetRole::Train).unwrap();
            let e = EmbeddingSet::new(eval.iter().enumerate().map(|(i, v)| ev(&format!("e{i}"), v)).collect(), SetRole::Eval).unwrap();
            let k = k.min(t.len());
            let scaled = |s: &EmbeddingSet| EmbeddingSet {
                vectors: s.vectors.iter().map(|v| ev(&v.source_id, &v.values.iter().map(|x| x * scale).collect::<Vec<_>>())).collect(),
                role: s.role,
            };
            let c = dataset_similarity(&e, &t, k).unwrap();
            let cs = dataset_similarity(&scaled(&e), &scaled(&t), k).unwrap();
            prop_assert!((0.0..=1.0).contains(&c));
            prop_assert!((c - cs).abs() < 1e-9);
        }
    }
}
