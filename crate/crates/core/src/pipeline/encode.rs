use std::collections::HashMap;
use std::hash::Hash;

use crate::dataset::TransitionDataset;
use crate::error::{Error, Result};
use crate::fosae::{FosaeModel, PropositionalState};
use crate::scalar::Scalar;

/// Observations per encoding batch.
const ENCODE_CHUNK: usize = 1000;

/// One distinct encoded transition and how often it was observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedTransition {
    pub pre: PropositionalState,
    pub suc: PropositionalState,
    pub count: usize,
}

/// How faithfully distinct inputs map to distinct codes.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CollisionStats {
    pub distinct_inputs: usize,
    pub distinct_codes: usize,
    /// Distinct inputs whose code is shared with another distinct input.
    pub colliding_inputs: usize,
    /// Fraction of unordered pairs of distinct inputs that get distinct codes.
    pub distinct_pair_fraction: f64,
}

impl CollisionStats {
    pub fn from_codes<K: Hash + Eq>(items: impl IntoIterator<Item = (K, PropositionalState)>) -> Self {
        let mut inputs: HashMap<K, PropositionalState> = HashMap::new();
        for (k, code) in items {
            inputs.entry(k).or_insert(code);
        }
        let mut groups: HashMap<&PropositionalState, usize> = HashMap::new();
        for code in inputs.values() {
            *groups.entry(code).or_default() += 1;
        }
        let n = inputs.len();
        let colliding = groups.values().filter(|&&c| c > 1).sum();
        let total_pairs = n * n.saturating_sub(1) / 2;
        let same_pairs: usize = groups.values().map(|&c| c * (c - 1) / 2).sum();
        CollisionStats {
            distinct_inputs: n,
            distinct_codes: groups.len(),
            colliding_inputs: colliding,
            distinct_pair_fraction: if total_pairs == 0 {
                1.0
            } else {
                1.0 - same_pairs as f64 / total_pairs as f64
            },
        }
    }

    pub fn collision_rate(&self) -> f64 {
        if self.distinct_inputs == 0 {
            0.0
        } else {
            self.colliding_inputs as f64 / self.distinct_inputs as f64
        }
    }
}

/// Deduplicated encoded transitions in first-seen order.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionLog {
    pub num_propositions: usize,
    pub transitions: Vec<LoggedTransition>,
    pub collisions: CollisionStats,
}

impl TransitionLog {
    /// Merges equal `(pre, suc)` pairs, keeping first-seen order.
    pub fn from_pairs(num_propositions: usize, pairs: impl IntoIterator<Item = (PropositionalState, PropositionalState)>) -> Result<Self> {
        let mut index: HashMap<(PropositionalState, PropositionalState), usize> = HashMap::new();
        let mut transitions: Vec<LoggedTransition> = Vec::new();
        for (pre, suc) in pairs {
            if pre.len() != num_propositions || suc.len() != num_propositions {
                return Err(Error::dim("transition log", &[pre.len(), suc.len()], &[num_propositions]));
            }
            match index.get(&(pre.clone(), suc.clone())) {
                Some(&i) => transitions[i].count += 1,
                None => {
                    index.insert((pre.clone(), suc.clone()), transitions.len());
                    transitions.push(LoggedTransition { pre, suc, count: 1 });
                }
            }
        }
        Ok(TransitionLog {
            num_propositions,
            transitions,
            collisions: CollisionStats::default(),
        })
    }

    pub fn total_observations(&self) -> usize {
        self.transitions.iter().map(|t| t.count).sum()
    }

    /// `pre,suc,count` lines with states as 0/1 strings.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pre,suc,count\n");
        for t in &self.transitions {
            out.push_str(&format!("{},{},{}\n", t.pre, t.suc, t.count));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("pre,suc,count") {
            return Err(Error::Format("transition log must start with `pre,suc,count`".into()));
        }
        let mut transitions = Vec::new();
        let mut width = None;
        for (n, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let [pre, suc, count] = fields.as_slice() else {
                return Err(Error::Format(format!("line {}: expected 3 fields", n + 2)));
            };
            let pre: PropositionalState = pre.parse()?;
            let suc: PropositionalState = suc.parse()?;
            let count = count
                .parse()
                .map_err(|e| Error::Format(format!("line {}: bad count: {e}", n + 2)))?;
            let w = *width.get_or_insert(pre.len());
            if pre.len() != w || suc.len() != w {
                return Err(Error::Format(format!("line {}: state width differs", n + 2)));
            }
            transitions.push(LoggedTransition { pre, suc, count });
        }
        Ok(TransitionLog {
            num_propositions: width.unwrap_or(0),
            transitions,
            collisions: CollisionStats::default(),
        })
    }
}

/// Encodes raw observations (each `N·F` values) deterministically.
pub fn encode_observations<T: Scalar>(model: &FosaeModel<T>, data: &TransitionDataset, states: &[&[f32]]) -> Result<Vec<PropositionalState>> {
    let mut out = Vec::with_capacity(states.len());
    for chunk in states.chunks(ENCODE_CHUNK) {
        let x = data.stack::<T>(chunk);
        out.extend(model.encode_batch(&x)?.into_iter().map(|(s, _)| s));
    }
    Ok(out)
}

fn bits_key(obs: &[f32]) -> Vec<u32> {
    obs.iter().map(|v| v.to_bits()).collect()
}

/// Encodes every `(pre, suc)` pair of `pairs` and merges duplicates.
pub fn encode_dataset<T: Scalar>(model: &FosaeModel<T>, data: &TransitionDataset, pairs: std::ops::Range<usize>) -> Result<TransitionLog> {
    let observations: Vec<&[f32]> = pairs.clone().flat_map(|p| [2 * p, 2 * p + 1]).map(|i| data.state(i)).collect();
    let codes = encode_observations(model, data, &observations)?;
    let collisions = CollisionStats::from_codes(observations.iter().map(|o| bits_key(o)).zip(codes.iter().cloned()));
    let mut codes = codes.into_iter();
    let encoded = std::iter::from_fn(|| Some((codes.next()?, codes.next()?)));
    let mut log = TransitionLog::from_pairs(model.config().num_propositions(), encoded)?;
    log.collisions = collisions;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(s: &str) -> PropositionalState {
        s.parse().unwrap()
    }

    #[test]
    fn duplicates_merge_with_counts() {
        let log = TransitionLog::from_pairs(
            3,
            [(st("000"), st("001")), (st("001"), st("011")), (st("000"), st("001"))],
        )
        .unwrap();
        assert_eq!(log.transitions.len(), 2);
        assert_eq!(log.transitions[0].count, 2);
        assert_eq!(log.total_observations(), 3);
        assert!(TransitionLog::from_pairs(3, [(st("00"), st("001"))]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let log = TransitionLog::from_pairs(3, [(st("000"), st("001")), (st("001"), st("011"))]).unwrap();
        assert_eq!(TransitionLog::from_csv(&log.to_csv()).unwrap(), log);
        assert!(TransitionLog::from_csv("a,b\n").is_err());
        assert!(TransitionLog::from_csv("pre,suc,count\n01,011,1\n").is_err());
    }

    #[test]
    fn collision_statistics() {
        let stats = CollisionStats::from_codes([(1, st("00")), (2, st("00")), (3, st("01")), (1, st("00"))]);
        assert_eq!(stats.distinct_inputs, 3);
        assert_eq!(stats.distinct_codes, 2);
        assert_eq!(stats.colliding_inputs, 2);
        assert!((stats.distinct_pair_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert!((stats.collision_rate() - 2.0 / 3.0).abs() < 1e-12);
    }
}
