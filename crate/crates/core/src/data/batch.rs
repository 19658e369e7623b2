use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{DatasetBundle, DatasetRole};
use crate::{Error, Result};

/// Sample indices of one training step, one batch per dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MinibatchIndices {
    pub a: Vec<usize>,
    pub b: Vec<usize>,
    pub d: Vec<usize>,
    pub e: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Shuffled {
    order: Vec<usize>,
    cursor: usize,
}

impl Shuffled {
    fn new(len: usize) -> Self {
        Self {
            order: (0..len).collect(),
            cursor: len,
        }
    }

    fn take(&mut self, m: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
        if self.cursor + m > self.order.len() {
            self.order.shuffle(rng);
            self.cursor = 0;
        }
        let batch = self.order[self.cursor..self.cursor + m].to_vec();
        self.cursor += m;
        batch
    }
}

/// Endless seeded stream of minibatches.
///
/// Dataset A is walked in epochs: each epoch is a fresh permutation cut into
/// `floor(|A| / m)` batches. B, D and E are drawn from their own
/// permutations without replacement, reshuffled whenever fewer than `m`
/// unused samples remain.
#[derive(Debug, Clone)]
pub struct MinibatchSampler {
    batch: usize,
    streams: [Shuffled; 4],
    rng: ChaCha8Rng,
    steps_per_epoch: usize,
    step_in_epoch: usize,
}

impl MinibatchSampler {
    pub fn new(bundle: &DatasetBundle, batch: usize, seed: u64) -> Result<Self> {
        Self::from_sizes(
            [
                bundle.a.len(),
                bundle.b.len(),
                bundle.d.len(),
                bundle.e.len(),
            ],
            batch,
            seed,
        )
    }

    /// Sizes in A, B, D, E order.
    pub fn from_sizes(sizes: [usize; 4], batch: usize, seed: u64) -> Result<Self> {
        if batch == 0 {
            return Err(Error::InvalidConfig("batch size must be at least 1".into()));
        }
        let roles = [
            DatasetRole::A,
            DatasetRole::B,
            DatasetRole::D,
            DatasetRole::E,
        ];
        for (role, available) in roles.into_iter().zip(sizes) {
            if batch > available {
                return Err(Error::BatchTooLarge {
                    role,
                    batch,
                    available,
                });
            }
        }
        Ok(Self {
            batch,
            streams: sizes.map(Shuffled::new),
            rng: ChaCha8Rng::seed_from_u64(seed),
            steps_per_epoch: sizes[0] / batch,
            step_in_epoch: 0,
        })
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.steps_per_epoch
    }

    pub fn next_batch(&mut self) -> MinibatchIndices {
        if self.step_in_epoch == self.steps_per_epoch {
            self.step_in_epoch = 0;
            self.streams[0].cursor = self.streams[0].order.len();
        }
        self.step_in_epoch += 1;
        let m = self.batch;
        let [a, b, d, e] = &mut self.streams;
        MinibatchIndices {
            a: a.take(m, &mut self.rng),
            b: b.take(m, &mut self.rng),
            d: d.take(m, &mut self.rng),
            e: e.take(m, &mut self.rng),
        }
    }
}

impl Iterator for MinibatchSampler {
    type Item = MinibatchIndices;

    fn next(&mut self) -> Option<MinibatchIndices> {
        Some(self.next_batch())
    }
}
