//! Seeded, stratified train/val/test partitioning.
//!
//! Rows are grouped by class (or kept in one group when no task is given).
//! Groups are visited in lexicographic label order; each group's row list,
//! in original row order, is shuffled in place by one shared generator:
//! `Xoshiro256PlusPlus::seed_from_u64(seed)` (SplitMix64 seed expansion)
//! driving `rand`'s Fisher-Yates `shuffle`. A group of `n` rows then gives
//! `floor(n * r_val)` rows to val and `floor(n * r_test)` rows to test, taken
//! in that order after the train rows; the remainder goes to train.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingSet;

/// Guards `floor` against products like `n * 0.1` landing a hair below an
/// integer.
const FLOOR_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Fractions for train, val and test. They must sum to 1 within `1e-9`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, val: f64, test: f64) -> Result<Self> {
        let r = SplitRatios { train, val, test };
        if [train, val, test].iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::invalid(format!("split ratios must be non-negative, got {r}")));
        }
        if (train + val + test - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("split ratios must sum to 1, got {r}")));
        }
        Ok(r)
    }

    fn nonzero_buckets(&self) -> usize {
        [self.train, self.val, self.test].iter().filter(|&&x| x > 0.0).count()
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl fmt::Display for SplitRatios {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{}", self.train, self.val, self.test)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assigned {
    pub id: String,
    pub split: Split,
}

/// The partition of a set's ids, in the set's row order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub ratios: SplitRatios,
    /// Task used for stratification; `None` means one global group.
    pub stratify_by: Option<String>,
    pub assignment: Vec<Assigned>,
    /// Classes too small to fill every non-empty bucket; sent wholly to train.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl SplitAssignment {
    /// Row counts as `(train, val, test)`.
    pub fn sizes(&self) -> (usize, usize, usize) {
        let mut s = (0, 0, 0);
        for a in &self.assignment {
            match a.split {
                Split::Train => s.0 += 1,
                Split::Val => s.1 += 1,
                Split::Test => s.2 += 1,
            }
        }
        s
    }

    /// Row indices (into the split set) of one bucket, ascending.
    pub fn rows(&self, split: Split) -> Vec<usize> {
        self.assignment
            .iter()
            .enumerate()
            .filter(|(_, a)| a.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    /// The rows of `set` tagged `split`, original order preserved.
    ///
    /// `set` must be the set this assignment was computed from.
    pub fn apply(&self, set: &EmbeddingSet, split: Split) -> Result<EmbeddingSet> {
        if set.len() != self.assignment.len() || set.meta().iter().zip(&self.assignment).any(|(m, a)| m.id != a.id) {
            return Err(Error::invalid("split assignment does not match this set's ids"));
        }
        Ok(set.subset(&self.rows(split)))
    }
}

/// Partitions `set` into train/val/test, stratified by `stratify_by` labels.
pub fn split_dataset(
    set: &EmbeddingSet,
    ratios: SplitRatios,
    seed: u64,
    stratify_by: Option<&str>,
) -> Result<SplitAssignment> {
    let ratios = SplitRatios::new(ratios.train, ratios.val, ratios.test)?;
    if set.len() < 3 {
        return Err(Error::invalid(format!(
            "cannot split {} rows; at least 3 are required",
            set.len()
        )));
    }

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    match stratify_by {
        Some(task) => {
            for (i, label) in set.task_labels(task)?.into_iter().enumerate() {
                groups.entry(label).or_default().push(i);
            }
        }
        None => {
            groups.insert("", (0..set.len()).collect());
        }
    }

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut tags = vec![Split::Train; set.len()];
    let mut warnings = Vec::new();
    let buckets = ratios.nonzero_buckets();
    for (label, rows) in &mut groups {
        rows.shuffle(&mut rng);
        let n = rows.len();
        if n < buckets {
            warnings.push(format!(
                "class {label:?} has {n} rows, fewer than {buckets} buckets; all assigned to train"
            ));
            continue;
        }
        let n_val = (n as f64 * ratios.val + FLOOR_SLACK).floor() as usize;
        let n_test = (n as f64 * ratios.test + FLOOR_SLACK).floor() as usize;
        let n_train = n - n_val - n_test;
        for &r in &rows[n_train..n_train + n_val] {
            tags[r] = Split::Val;
        }
        for &r in &rows[n_train + n_val..] {
            tags[r] = Split::Test;
        }
    }

    Ok(SplitAssignment {
        seed,
        ratios,
        stratify_by: stratify_by.map(str::to_owned),
        assignment: set
            .meta()
            .iter()
            .zip(tags)
            .map(|(m, split)| Assigned {
                id: m.id.clone(),
                split,
            })
            .collect(),
        warnings,
    })
}
