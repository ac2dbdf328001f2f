//! Leave-one-patient-group-out fold plans.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::rng::SeedPath;
use crate::{Error, Result};

pub const DEFAULT_FOLDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub seed: u64,
    /// Patient ids per fold, sorted.
    pub folds: Vec<Vec<String>>,
}

/// Shuffles the distinct patient ids with `seed`, then deals them round-robin
/// into `n_folds` groups.
pub fn make_lopgo_folds(patient_ids: &[String], n_folds: usize, seed: u64) -> Result<FoldPlan> {
    let mut ids: Vec<String> = patient_ids.to_vec();
    ids.sort();
    ids.dedup();
    if n_folds < 2 || ids.len() < n_folds {
        return Err(Error::TooFewPatients {
            needed: n_folds.max(2),
            found: ids.len(),
        });
    }
    SeedPath::root(seed).child("lopgo").stream().shuffle(&mut ids);
    let mut folds = alloc::vec![Vec::new(); n_folds];
    for (i, id) in ids.into_iter().enumerate() {
        folds[i % n_folds].push(id);
    }
    folds.iter_mut().for_each(|f| f.sort());
    Ok(FoldPlan { n_folds, seed, folds })
}

impl FoldPlan {
    pub fn fold_of(&self) -> BTreeMap<&str, usize> {
        let mut map = BTreeMap::new();
        for (k, fold) in self.folds.iter().enumerate() {
            for id in fold {
                map.insert(id.as_str(), k);
            }
        }
        map
    }

    /// `(train, test)` row indices of `fold` for rows owned by `patients`.
    pub fn split(&self, patients: &[&str], fold: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        let map = self.fold_of();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (i, p) in patients.iter().enumerate() {
            match map.get(p) {
                Some(&k) if k == fold => test.push(i),
                Some(_) => train.push(i),
                None => return Err(Error::InvalidArgument(alloc::format!("patient `{p}` not in fold plan"))),
            }
        }
        Ok((train, test))
    }
}
