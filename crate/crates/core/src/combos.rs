//! Factor-combination schemes and the per-curve training schedules.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::domain::{check_factor_ids, DatasetLedger, FactorCombo, FactorId, SchemeKind};
use crate::{Error, Result};

/// A set of combos, one scaling curve each.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComboScheme {
    pub kind: SchemeKind,
    pub combos: Vec<FactorCombo>,
    /// The partition used for `group` schemes.
    pub pairing: Option<Vec<Vec<FactorId>>>,
}

impl ComboScheme {
    /// Builds a scheme of the given kind. `pairing` is only read for groups.
    pub fn build(kind: SchemeKind, factors: &[FactorId], pairing: Option<&[Vec<FactorId>]>) -> Result<Self> {
        match kind {
            SchemeKind::OneFactor => make_one_factor(factors),
            SchemeKind::Pairwise => make_pairwise(factors),
            SchemeKind::Group => make_group(factors, pairing),
        }
    }

    pub fn len(&self) -> usize {
        self.combos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.combos.is_empty()
    }
}

fn sorted_checked(factors: &[FactorId]) -> Result<Vec<FactorId>> {
    check_factor_ids(factors)?;
    let mut ids = factors.to_vec();
    ids.sort();
    Ok(ids)
}

pub fn make_one_factor(factors: &[FactorId]) -> Result<ComboScheme> {
    if factors.is_empty() {
        return Err(Error::Empty("factor list"));
    }
    let ids = sorted_checked(factors)?;
    Ok(ComboScheme {
        kind: SchemeKind::OneFactor,
        combos: ids.into_iter().map(FactorCombo::single).collect(),
        pairing: None,
    })
}

/// All `N(N-1)/2` unordered pairs in lexicographic order.
pub fn make_pairwise(factors: &[FactorId]) -> Result<ComboScheme> {
    if factors.len() < 2 {
        return Err(Error::TooFewFactors { needed: 2, got: factors.len() });
    }
    let ids = sorted_checked(factors)?;
    let mut combos = Vec::with_capacity(ids.len() * (ids.len() - 1) / 2);
    for (i, a) in ids.iter().enumerate() {
        for b in &ids[i + 1..] {
            combos.push(FactorCombo::pair(*a, *b, SchemeKind::Pairwise)?);
        }
    }
    Ok(ComboScheme { kind: SchemeKind::Pairwise, combos, pairing: None })
}

/// A disjoint cover by pairs. Without an explicit pairing, adjacent ids are
/// paired and an odd factor count leaves a trailing singleton.
pub fn make_group(factors: &[FactorId], pairing: Option<&[Vec<FactorId>]>) -> Result<ComboScheme> {
    if factors.is_empty() {
        return Err(Error::Empty("factor list"));
    }
    let ids = sorted_checked(factors)?;
    let parts: Vec<Vec<FactorId>> = match pairing {
        Some(parts) => {
            validate_pairing(&ids, parts)?;
            parts.to_vec()
        }
        None => ids.chunks(2).map(<[FactorId]>::to_vec).collect(),
    };
    let combos = parts
        .iter()
        .map(|p| FactorCombo::new(p.clone(), SchemeKind::Group))
        .collect::<Result<Vec<_>>>()?;
    Ok(ComboScheme { kind: SchemeKind::Group, combos, pairing: Some(parts) })
}

fn validate_pairing(ids: &[FactorId], parts: &[Vec<FactorId>]) -> Result<()> {
    let mut seen: BTreeMap<FactorId, usize> = BTreeMap::new();
    for (pi, part) in parts.iter().enumerate() {
        if part.is_empty() || part.len() > 2 {
            return Err(Error::InvalidPairing(format!(
                "part {pi} has {} members; parts must hold 1 or 2 factors",
                part.len()
            )));
        }
        for id in part {
            if ids.binary_search(id).is_err() {
                return Err(Error::InvalidPairing(format!("part {pi} names unknown factor {id}")));
            }
            if let Some(prev) = seen.insert(*id, pi) {
                return Err(Error::InvalidPairing(format!("factor {id} appears in parts {prev} and {pi}")));
            }
        }
    }
    if let Some(missing) = ids.iter().find(|id| !seen.contains_key(id)) {
        return Err(Error::InvalidPairing(format!("factor {missing} is not covered by any part")));
    }
    Ok(())
}

/// `{round(total (i - 1) / (m - 1)) : i = 1..m}`, deduplicated and ascending.
pub fn training_size_schedule(combo_total: u64, m: usize) -> Result<Vec<u64>> {
    if m < 2 {
        return Err(Error::ScheduleTooShort(m));
    }
    let denom = (m - 1) as u128;
    let mut out: Vec<u64> = (0..m as u128)
        .map(|i| ((2 * combo_total as u128 * i + denom) / (2 * denom)) as u64)
        .collect();
    out.dedup();
    Ok(out)
}

/// Largest-remainder apportionment of `total` by integer weights.
/// Ties go to the lower index. A zero-weight entry never receives units.
pub(crate) fn apportion_integer(total: u64, weights: &[u64]) -> Vec<u64> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return alloc::vec![0; weights.len()];
    }
    let mut out: Vec<u64> = Vec::with_capacity(weights.len());
    let mut remainders: Vec<(u128, usize)> = Vec::with_capacity(weights.len());
    for (i, &w) in weights.iter().enumerate() {
        let scaled = total as u128 * w as u128;
        out.push((scaled / sum) as u64);
        if w > 0 {
            remainders.push((scaled % sum, i));
        }
    }
    let mut left = total - out.iter().sum::<u64>();
    remainders.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
    for (_, i) in remainders {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

/// Splits `n` combo demonstrations across the combo's members in proportion
/// to their ledger counts. Equal counts split evenly, lower id first.
pub fn split_combo_count(n: u64, combo: &FactorCombo, ledger: &DatasetLedger) -> Result<BTreeMap<FactorId, u64>> {
    let counts = combo.members.iter().map(|id| ledger.count(*id)).collect::<Result<Vec<_>>>()?;
    let available: u64 = counts.iter().sum();
    if n > available {
        return Err(Error::SplitExceedsAvailable { requested: n, available });
    }
    let shares = apportion_integer(n, &counts);
    Ok(combo.members.iter().copied().zip(shares).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn ids(n: u32) -> Vec<FactorId> {
        (0..n).map(FactorId).collect()
    }

    #[test]
    fn one_factor_schemes() {
        for n in [1, 5, 8] {
            let s = make_one_factor(&ids(n)).unwrap();
            assert_eq!(s.len(), n as usize);
            assert!(s.combos.iter().enumerate().all(|(i, c)| c.members == vec![FactorId(i as u32)]));
        }
        assert_eq!(make_one_factor(&[]), Err(Error::Empty("factor list")));
    }

    #[test]
    fn pairwise_schemes() {
        assert_eq!(make_pairwise(&ids(5)).unwrap().len(), 10);
        assert_eq!(make_pairwise(&ids(4)).unwrap().len(), 6);
        let two = make_pairwise(&ids(2)).unwrap();
        assert_eq!(two.combos, vec![FactorCombo::pair(FactorId(0), FactorId(1), SchemeKind::Pairwise).unwrap()]);
        assert!(matches!(make_pairwise(&ids(1)), Err(Error::TooFewFactors { .. })));
        let s = make_pairwise(&ids(6)).unwrap();
        let mut sorted = s.combos.clone();
        sorted.sort();
        assert_eq!(sorted, s.combos);
    }

    #[test]
    fn group_schemes() {
        assert_eq!(make_group(&ids(6), None).unwrap().len(), 3);
        let odd = make_group(&ids(5), None).unwrap();
        assert_eq!(odd.len(), 3);
        assert_eq!(odd.combos[2].members, vec![FactorId(4)]);
        assert_eq!(odd.combos[1].members, vec![FactorId(2), FactorId(3)]);
    }

    #[test]
    fn explicit_group_pairing_is_kept() {
        let names = ["table_texture", "camera_pose", "lighting", "distractor", "robot_pose", "object_pose"];
        let factors = crate::domain::factors_from_names(&names).unwrap();
        let id = |n: &str| factors.iter().find(|f| f.name == n).unwrap().id;
        let pairing = vec![
            vec![id("table_texture"), id("lighting")],
            vec![id("camera_pose"), id("distractor")],
            vec![id("robot_pose"), id("object_pose")],
        ];
        let s = make_group(&ids(6), Some(&pairing)).unwrap();
        assert_eq!(s.pairing.as_ref().unwrap(), &pairing);
        assert_eq!(s.combos[0].members, vec![FactorId(0), FactorId(2)]);
        assert_eq!(s.combos[1].members, vec![FactorId(1), FactorId(3)]);
    }

    #[test]
    fn invalid_pairings_are_diagnosed() {
        let overlap = vec![vec![FactorId(0), FactorId(1)], vec![FactorId(1), FactorId(2)]];
        let err = make_group(&ids(3), Some(&overlap)).unwrap_err();
        assert!(matches!(err, Error::InvalidPairing(ref m) if m.contains("appears in parts")));

        let missing = vec![vec![FactorId(0), FactorId(1)]];
        let err = make_group(&ids(3), Some(&missing)).unwrap_err();
        assert!(matches!(err, Error::InvalidPairing(ref m) if m.contains("not covered")));

        let big = vec![vec![FactorId(0), FactorId(1), FactorId(2)]];
        let err = make_group(&ids(3), Some(&big)).unwrap_err();
        assert!(matches!(err, Error::InvalidPairing(ref m) if m.contains("3 members")));

        let unknown = vec![vec![FactorId(0), FactorId(9)], vec![FactorId(1)]];
        assert!(make_group(&ids(2), Some(&unknown)).is_err());
    }

    #[test]
    fn schedules() {
        assert_eq!(training_size_schedule(60, 4).unwrap(), vec![0, 20, 40, 60]);
        assert_eq!(training_size_schedule(0, 4).unwrap(), vec![0]);
        assert_eq!(training_size_schedule(50, 3).unwrap(), vec![0, 25, 50]);
        assert_eq!(training_size_schedule(10, 4).unwrap(), vec![0, 3, 7, 10]);
        assert_eq!(training_size_schedule(10, 1), Err(Error::ScheduleTooShort(1)));
    }

    #[test]
    fn splits() {
        let even = DatasetLedger::new(0, [30, 30]);
        let pair = FactorCombo::pair(FactorId(0), FactorId(1), SchemeKind::Group).unwrap();
        let get = |m: BTreeMap<FactorId, u64>| m.values().copied().collect::<Vec<_>>();
        assert_eq!(get(split_combo_count(40, &pair, &even).unwrap()), vec![20, 20]);
        assert_eq!(get(split_combo_count(30, &pair, &even).unwrap()), vec![15, 15]);
        assert_eq!(get(split_combo_count(31, &pair, &even).unwrap()), vec![16, 15]);
        let uneven = DatasetLedger::new(0, [40, 20]);
        assert_eq!(get(split_combo_count(30, &pair, &uneven).unwrap()), vec![20, 10]);
        assert_eq!(
            split_combo_count(61, &pair, &even),
            Err(Error::SplitExceedsAvailable { requested: 61, available: 60 })
        );
        let single = FactorCombo::single(FactorId(1));
        assert_eq!(get(split_combo_count(7, &single, &uneven).unwrap()), vec![7]);
    }

    proptest! {
        #[test]
        fn scheme_coverage(n in 2u32..12) {
            let f = ids(n);
            for scheme in [make_one_factor(&f).unwrap(), make_group(&f, None).unwrap()] {
                for id in &f {
                    prop_assert!(scheme.combos.iter().any(|c| c.contains(*id)));
                }
            }
            let g = make_group(&f, None).unwrap();
            prop_assert_eq!(g.len(), n.div_ceil(2) as usize);
            let total: usize = g.combos.iter().map(FactorCombo::len).sum();
            prop_assert_eq!(total, n as usize);
            let p = make_pairwise(&f).unwrap();
            prop_assert_eq!(p.len(), (n * (n - 1) / 2) as usize);
            for id in &f {
                prop_assert_eq!(p.combos.iter().filter(|c| c.contains(*id)).count(), (n - 1) as usize);
            }
        }

        #[test]
        fn schedule_shape(total in 0u64..10_000, m in 2usize..12) {
            let s = training_size_schedule(total, m).unwrap();
            prop_assert_eq!(s[0], 0);
            prop_assert_eq!(*s.last().unwrap(), total);
            prop_assert!(s.windows(2).all(|w| w[0] < w[1]));
        }

        #[test]
        fn split_is_exact(a in 0u64..500, b in 0u64..500, frac in 0.0f64..=1.0) {
            let ledger = DatasetLedger::new(0, [a, b]);
            let pair = FactorCombo::pair(FactorId(0), FactorId(1), SchemeKind::Pairwise).unwrap();
            let n = ((a + b) as f64 * frac) as u64;
            let split = split_combo_count(n, &pair, &ledger).unwrap();
            prop_assert_eq!(split.values().sum::<u64>(), n);
            prop_assert!(split[&FactorId(0)] <= a);
            prop_assert!(split[&FactorId(1)] <= b);
        }
    }
}
