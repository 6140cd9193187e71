use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.7, 0.1, 0.2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSet {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
    pub fractions: [f64; 3],
}

impl SplitSet {
    pub fn get(&self, split: Split) -> &[Sample] {
        match split {
            Split::Train => &self.train,
            Split::Validation => &self.validation,
            Split::Test => &self.test,
        }
    }

    /// Split of every sample, indexed by sample id.
    pub fn assignments(&self) -> BTreeMap<usize, Split> {
        Split::ALL
            .iter()
            .flat_map(|&sp| self.get(sp).iter().map(move |s| (s.id, sp)))
            .collect()
    }

    /// Rebuilds a split set from persisted per-sample assignments.
    pub fn from_assignments(samples: &[Sample], splits: &[Split], fractions: [f64; 3]) -> Result<Self> {
        if samples.len() != splits.len() {
            return Err(Error::Input(format!(
                "{} samples but {} split assignments",
                samples.len(),
                splits.len()
            )));
        }
        let mut set = SplitSet {
            train: Vec::new(),
            validation: Vec::new(),
            test: Vec::new(),
            fractions,
        };
        for (s, sp) in samples.iter().zip(splits) {
            match sp {
                Split::Train => set.train.push(s.clone()),
                Split::Validation => set.validation.push(s.clone()),
                Split::Test => set.test.push(s.clone()),
            }
        }
        Ok(set)
    }
}

/// Largest-remainder apportionment of `n` items by `fractions`.
fn apportion(n: usize, fractions: &[f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    // The small slack keeps values like 0.7 * 250 from flooring to 174.
    let mut counts: [usize; 3] = [0; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = (e + 1e-9).floor() as usize;
    }
    let mut left = n - counts.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..3).collect();
    by_remainder.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in by_remainder.iter().cycle() {
        if left == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            counts[i] += 1;
            left -= 1;
        }
    }
    counts
}

/// Seeded, class-stratified, fact-disjoint train/validation/test split.
///
/// Samples are grouped by `fact_id`, so a member and the counterfactual built
/// from it always land together. Groups with the same member/non-member
/// composition are shuffled and apportioned by `fractions`; the result must be
/// exactly class-balanced in every split or the call fails. Empty splits are
/// refused unless `allow_empty` is set. Within a split, samples keep their
/// input order.
pub fn split(samples: &[Sample], fractions: [f64; 3], seed: u64, allow_empty: bool) -> Result<SplitSet> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::Input(format!("split fractions must be in [0, 1] and sum to 1, got {fractions:?}")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, s) in samples.iter().enumerate() {
        groups.entry(s.fact_id).or_default().push(i);
    }
    let mut by_shape: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (&fact, members) in &groups {
        let m = members.iter().filter(|&&i| samples[i].is_member()).count();
        by_shape.entry((m, members.len() - m)).or_default().push(fact);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "split", 0));
    let mut assigned = vec![Split::Train; samples.len()];
    for facts in by_shape.values_mut() {
        facts.shuffle(&mut rng);
        let counts = apportion(facts.len(), &fractions);
        let mut it = facts.iter();
        for (sp, &c) in Split::ALL.iter().zip(&counts) {
            for fact in it.by_ref().take(c) {
                for &i in &groups[fact] {
                    assigned[i] = *sp;
                }
            }
        }
    }
    let set = SplitSet::from_assignments(samples, &assigned, fractions)?;
    for sp in Split::ALL {
        let part = set.get(sp);
        let m = part.iter().filter(|s| s.is_member()).count();
        if m * 2 != part.len() {
            return Err(Error::Input(format!(
                "{} split would hold {m} members and {} non-members; cannot balance",
                sp.name(),
                part.len() - m
            )));
        }
        if part.is_empty() && !allow_empty {
            return Err(Error::Input(format!("{} split would be empty", sp.name())));
        }
    }
    Ok(set)
}
