use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::api::splitmix64;

/// Seeded mini-batch order: a fresh permutation per epoch, trailing
/// samples that do not fill a batch are skipped for that epoch.
#[derive(Clone, Debug)]
pub struct BatchSchedule {
    samples: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSchedule {
    pub fn new(samples: usize, batch: usize, seed: u64) -> Self {
        assert!(batch >= 1 && batch <= samples, "batch size must lie in 1..=samples");
        let mut s = Self {
            samples,
            batch,
            seed,
            epoch: 0,
            order: Vec::new(),
            cursor: 0,
        };
        s.shuffle();
        s
    }

    fn shuffle(&mut self) {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(self.seed) ^ self.epoch);
        self.order = (0..self.samples).collect();
        self.order.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn batches_per_epoch(&self) -> usize {
        self.samples / self.batch
    }

    /// Returns the batch's 0-based epoch and sample indices.
    pub fn next_batch(&mut self) -> (u64, Vec<usize>) {
        if self.cursor + self.batch > self.samples {
            self.epoch += 1;
            self.shuffle();
        }
        let idx = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        (self.epoch, idx)
    }
}
