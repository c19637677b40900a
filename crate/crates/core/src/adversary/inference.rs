use serde::Serialize;

use super::EveRecord;

/// What Eve can say about the key from her XOR records and the publicly
/// compared check bits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyInference {
    /// Decodings of the records under ψ1 = 0 and ψ1 = 1. Index `i` holds
    /// round `i + 1`; only recorded rounds are filled.
    pub candidate_keys: [Vec<Option<u8>>; 2],
    /// ψ1, once a leaked bit pins it down.
    pub psi1: Option<u8>,
    /// The candidate selected by `psi1`, overlaid with the leaked bits.
    pub resolved: Option<Vec<Option<u8>>>,
    /// Fraction of all session key bits Eve knows and has right.
    pub accuracy: f64,
}

/// Decodes Eve's records `ψ_r ⊕ ψ1` under both hypotheses for ψ1 and uses
/// leaked `(round, ψ)` pairs to pick one.
///
/// A leak on a recorded round votes for `record ⊕ ψ_r`; a leak on round 1 votes
/// for its own value. The hypothesis with strictly more votes wins; with no
/// votes or a tie ψ1 stays unresolved. Eve's known bits are then the resolved
/// record positions plus every leaked position; `accuracy` counts those that
/// match `true_key`, over the full key length. Round 1 only counts when it was
/// leaked.
pub fn infer_key(records: &[EveRecord], leaked_bits: &[(usize, u8)], true_key: &[u8]) -> KeyInference {
    let rounds = true_key
        .len()
        .max(records.iter().map(|r| r.round).max().unwrap_or(0))
        .max(leaked_bits.iter().map(|l| l.0).max().unwrap_or(0));

    let candidate_keys: [Vec<Option<u8>>; 2] = std::array::from_fn(|h| {
        let mut key = vec![None; rounds];
        for r in records {
            key[r.round - 1] = Some(r.bit ^ h as u8);
        }
        key
    });

    let mut votes = [0usize; 2];
    for &(round, value) in leaked_bits {
        if round == 1 {
            votes[value as usize] += 1;
        } else if let Some(r) = records.iter().find(|r| r.round == round) {
            votes[(r.bit ^ value) as usize] += 1;
        }
    }
    let psi1 = match votes[0].cmp(&votes[1]) {
        std::cmp::Ordering::Greater => Some(0u8),
        std::cmp::Ordering::Less => Some(1u8),
        std::cmp::Ordering::Equal => None,
    };

    let mut known: Vec<Option<u8>> = match psi1 {
        Some(h) => candidate_keys[h as usize].clone(),
        None => vec![None; rounds],
    };
    for &(round, value) in leaked_bits {
        known[round - 1] = Some(value);
    }

    let correct = known
        .iter()
        .zip(true_key)
        .filter(|(k, &t)| **k == Some(t))
        .count();
    let accuracy = if true_key.is_empty() { 0.0 } else { correct as f64 / true_key.len() as f64 };

    KeyInference {
        candidate_keys,
        psi1,
        resolved: psi1.map(|_| known),
        accuracy,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KEY: [u8; 9] = [1, 0, 1, 1, 0, 1, 0, 0, 1];

    fn records_for(key: &[u8]) -> Vec<EveRecord> {
        (3..=key.len())
            .step_by(2)
            .map(|r| EveRecord { round: r, bit: key[r - 1] ^ key[0] })
            .collect()
    }

    #[test]
    fn leak_on_record_resolves() {
        let recs = records_for(&KEY);
        let leaked = [(5, KEY[4]), (2, KEY[1]), (9, KEY[8])];
        let inf = infer_key(&recs, &leaked, &KEY);
        assert_eq!(inf.psi1, Some(KEY[0]));
        // records 3,5,7,9 plus distinct leaks {2}
        assert!((inf.accuracy - 5.0 / 9.0).abs() < 1e-15);
        let resolved = inf.resolved.unwrap();
        for r in [3, 5, 7, 9] {
            assert_eq!(resolved[r - 1], Some(KEY[r - 1]));
        }
    }

    /// Enumeration oracle: every leak set of size ≤ 3 over the 9 rounds.
    #[test]
    fn accuracy_matches_enumeration() {
        let recs = records_for(&KEY);
        let recorded: Vec<usize> = vec![3, 5, 7, 9];
        for mask in 0u32..(1 << 9) {
            if mask.count_ones() > 3 {
                continue;
            }
            let leaked: Vec<(usize, u8)> = (1..=9)
                .filter(|r| mask & (1 << (r - 1)) != 0)
                .map(|r| (r, KEY[r - 1]))
                .collect();
            let resolves = leaked.iter().any(|(r, _)| *r == 1 || recorded.contains(r));
            let mut known = std::collections::BTreeSet::new();
            if resolves {
                known.extend(recorded.iter().copied());
            }
            known.extend(leaked.iter().map(|l| l.0));
            let inf = infer_key(&recs, &leaked, &KEY);
            assert_eq!(inf.psi1.is_some(), resolves);
            assert!((inf.accuracy - known.len() as f64 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn no_leak_gives_complementary_candidates() {
        let recs = records_for(&KEY);
        let inf = infer_key(&recs, &[], &KEY);
        assert_eq!(inf.psi1, None);
        assert!(inf.resolved.is_none());
        assert_eq!(inf.accuracy, 0.0);
        for (i, (a, b)) in inf.candidate_keys[0].iter().zip(&inf.candidate_keys[1]).enumerate() {
            match (a, b) {
                (Some(x), Some(y)) => {
                    assert_eq!(x ^ y, 1);
                    assert!(recs.iter().any(|r| r.round == i + 1));
                }
                (None, None) => {}
                _ => panic!("candidates disagree on which positions are inferred"),
            }
        }
    }

    #[test]
    fn even_leaks_do_not_resolve() {
        let recs = records_for(&KEY);
        let leaked = [(2, KEY[1]), (4, KEY[3])];
        let inf = infer_key(&recs, &leaked, &KEY);
        assert_eq!(inf.psi1, None);
        assert!((inf.accuracy - 2.0 / 9.0).abs() < 1e-15);
    }
}
