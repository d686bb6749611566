use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shuffles `0..n` with a seeded Fisher-Yates pass and cuts it into `k`
/// contiguous parts. The first `n % k` parts get one extra element.
pub fn shuffled_partition(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let k = k.max(1);
    let (base, extra) = (n / k, n % k);
    let mut out = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        out.push(idx[start..start + size].to_vec());
        start += size;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub seed: u64,
    pub k: usize,
    /// Media ids held out in each fold, sorted.
    pub folds: Vec<Vec<String>>,
}

impl FoldPlan {
    /// Fold index holding out `media_id`.
    pub fn fold_of(&self, media_id: &str) -> Option<usize> {
        self.folds.iter().position(|f| f.iter().any(|m| m == media_id))
    }

    /// Every media id not held out in `fold`, sorted.
    pub fn train_ids(&self, fold: usize) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(f, _)| *f != fold)
            .flat_map(|(_, ids)| ids.iter().cloned())
            .collect();
        ids.sort();
        ids
    }
}

/// Assigns media items to `k` folds. The ids are sorted and deduplicated
/// first, so the plan depends only on the set of ids and the seed.
pub fn make_folds(media_ids: &[String], k: usize, seed: u64) -> Result<FoldPlan> {
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let mut ids = media_ids.to_vec();
    ids.sort();
    ids.dedup();
    if ids.len() < k {
        return Err(Error::TooFewItems { needed: k, got: ids.len() });
    }
    let folds = shuffled_partition(ids.len(), k, seed)
        .into_iter()
        .map(|part| {
            let mut f: Vec<String> = part.into_iter().map(|i| ids[i].clone()).collect();
            f.sort();
            f
        })
        .collect();
    Ok(FoldPlan { seed, k, folds })
}
