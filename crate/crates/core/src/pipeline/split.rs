use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datamodel::Dataset;
use crate::error::{Error, Result};

/// Held-out subject plus the directions withheld from training in one fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub fold_subject_id: String,
    pub train_subject_ids: Vec<String>,
    /// Sorted ascending.
    pub seen_direction_indices: Vec<usize>,
    /// Sorted ascending; shared by every training subject.
    pub unseen_direction_indices: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    /// Number of (subject, direction) training examples.
    pub fn training_pool_size(&self) -> usize {
        self.train_subject_ids.len() * self.seen_direction_indices.len()
    }

    pub fn seen_eval_size(&self) -> usize {
        self.seen_direction_indices.len()
    }

    pub fn unseen_eval_size(&self) -> usize {
        self.unseen_direction_indices.len()
    }

    /// Seen flag per grid direction.
    pub fn seen_mask(&self, n_directions: usize) -> Vec<bool> {
        let mut seen = vec![true; n_directions];
        for &u in &self.unseen_direction_indices {
            seen[u] = false;
        }
        seen
    }

    pub fn validate(&self, n_directions: usize) -> Result<()> {
        let mut all: Vec<usize> = self
            .seen_direction_indices
            .iter()
            .chain(&self.unseen_direction_indices)
            .copied()
            .collect();
        all.sort_unstable();
        if all != (0..n_directions).collect::<Vec<_>>() {
            return Err(Error::Internal(
                "split plan does not partition the grid".into(),
            ));
        }
        if self.train_subject_ids.contains(&self.fold_subject_id) {
            return Err(Error::Internal(
                "held-out subject listed for training".into(),
            ));
        }
        Ok(())
    }
}

/// Stable 64-bit seed derived from a base seed and labels.
pub fn derive_seed(base: u64, labels: &[&str]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for l in labels {
        h.update((l.len() as u64).to_le_bytes());
        h.update(l.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Number of directions withheld for a grid of `n` directions.
pub fn unseen_count(n: usize, fraction: f64) -> usize {
    (n as f64 * fraction).round() as usize
}

/// Hold out `fold_subject` and a seeded uniform `unseen_fraction` of the grid.
pub fn make_split_plan(
    dataset: &Dataset,
    fold_subject: &str,
    seed: u64,
    unseen_fraction: f64,
) -> Result<SplitPlan> {
    if dataset.subject(fold_subject).is_none() {
        return Err(Error::InvalidArgument(format!(
            "fold subject {fold_subject} is not in the dataset"
        )));
    }
    if !(0.0..1.0).contains(&unseen_fraction) {
        return Err(Error::Config(format!(
            "unseen fraction {unseen_fraction} outside [0, 1)"
        )));
    }
    let n = dataset.grid.len();
    let k = unseen_count(n, unseen_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut unseen = index::sample(&mut rng, n, k).into_vec();
    unseen.sort_unstable();
    let mut is_unseen = vec![false; n];
    for &u in &unseen {
        is_unseen[u] = true;
    }
    let seen = (0..n).filter(|&i| !is_unseen[i]).collect();
    let plan = SplitPlan {
        fold_subject_id: fold_subject.to_string(),
        train_subject_ids: dataset
            .subjects
            .iter()
            .map(|s| s.id.clone())
            .filter(|id| id != fold_subject)
            .collect(),
        seen_direction_indices: seen,
        unseen_direction_indices: unseen,
        seed,
    };
    plan.validate(n)?;
    Ok(plan)
}
