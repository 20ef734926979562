use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetError, DatasetManifest, Provenance, Split};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    pub fn new(train: usize, val: usize, test: usize) -> Self {
        Self { train, val, test }
    }

    pub fn total(&self) -> usize {
        self.train + self.val + self.test
    }

    fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
        }
    }
}

impl DatasetManifest {
    /// Seeded shuffle of the active image ids (sorted first, so the result
    /// depends only on the id set), cut in order into train/val/test.
    ///
    /// With `group_by_prompt`, the quadrants of one prompt always share a
    /// split: prompt groups are shuffled, then placed largest-first into the
    /// first split with room. That can fail for awkward counts.
    pub fn assign_splits(
        &mut self,
        counts: SplitCounts,
        seed: u64,
        group_by_prompt: bool,
    ) -> Result<(), DatasetError> {
        let active = self.active_count();
        if counts.total() != active {
            return Err(DatasetError::SplitCountMismatch {
                requested: counts.total(),
                active,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let assignment = if group_by_prompt {
            self.grouped_assignment(counts, &mut rng)?
        } else {
            let mut ids: Vec<&str> = self.active_records().map(|r| r.image_id.as_str()).collect();
            ids.sort_unstable();
            ids.shuffle(&mut rng);
            let mut out = BTreeMap::new();
            let mut rest = ids.as_slice();
            for split in Split::ALL {
                let (head, tail) = rest.split_at(counts.get(split));
                out.extend(head.iter().map(|id| (id.to_string(), split)));
                rest = tail;
            }
            out
        };
        self.splits = assignment;
        self.split_seed = Some(seed);
        self.group_by_prompt = group_by_prompt;
        Ok(())
    }

    fn grouped_assignment(
        &self,
        counts: SplitCounts,
        rng: &mut ChaCha8Rng,
    ) -> Result<BTreeMap<String, Split>, DatasetError> {
        let mut groups: BTreeMap<String, Vec<&str>> = BTreeMap::new();
        for r in self.active_records() {
            let key = match r.provenance {
                Provenance::Generated { prompt_id, .. } => format!("prompt:{prompt_id}"),
                Provenance::External => format!("image:{}", r.image_id),
            };
            groups.entry(key).or_default().push(&r.image_id);
        }
        let mut groups: Vec<Vec<&str>> = groups.into_values().collect();
        groups.shuffle(rng);
        groups.sort_by_key(|g| std::cmp::Reverse(g.len()));

        let mut room = [counts.train, counts.val, counts.test];
        let mut out = BTreeMap::new();
        for group in groups {
            let slot = room
                .iter()
                .position(|&r| r >= group.len())
                .ok_or(DatasetError::GroupedSplitInfeasible(counts))?;
            room[slot] -= group.len();
            out.extend(group.iter().map(|id| (id.to_string(), Split::ALL[slot])));
        }
        Ok(out)
    }
}
