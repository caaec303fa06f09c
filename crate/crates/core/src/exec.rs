//! Seeded substreams and the data-parallel batch map.
//!
//! Every random draw in the crate comes from a ChaCha8 stream selected by
//! `(seed, phase, iteration, batch)`. Work is cut into fixed-size batches
//! before it is handed to rayon, so the numbers a run produces depend only on
//! the seed and never on the thread count or on how rayon splits the work.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Draws per substream batch. Fixed so that results are partition-free.
pub const BATCH_SIZE: usize = 64;

/// Whether batch maps may fan out over the rayon pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Execution {
    Sequential,
    #[default]
    Parallel,
}

impl Execution {
    /// Downgrades to sequential when the work is not safe to run concurrently.
    pub fn restrict(self, concurrency_safe: bool) -> Self {
        if concurrency_safe {
            self
        } else {
            Execution::Sequential
        }
    }
}

/// Phase tags keep the substreams of different algorithm stages disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Phase {
    Onion = 1,
    Importance = 2,
    Cluster = 3,
    MonteCarlo = 4,
    Optimize = 5,
    Oracle = 6,
}

/// Independent stream for `(phase, iteration, batch)` under `seed`.
///
/// `iteration` is truncated to 24 bits and `batch` to 32 bits.
pub fn substream(seed: u64, phase: Phase, iteration: u64, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = ((phase as u64) << 56) | ((iteration & 0xff_ffff) << 32) | (batch & 0xffff_ffff);
    rng.set_stream(id);
    rng
}

/// Splits `n` items into `(batch index, start, len)` chunks of [`BATCH_SIZE`].
pub fn batches(n: usize) -> impl Iterator<Item = (usize, usize, usize)> {
    (0..n.div_ceil(BATCH_SIZE)).map(move |b| {
        let start = b * BATCH_SIZE;
        (b, start, BATCH_SIZE.min(n - start))
    })
}

/// Maps `f` over `0..n`, preserving order.
pub fn map_indexed<T, F>(exec: Execution, n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    match exec {
        #[cfg(feature = "parallel")]
        Execution::Parallel => {
            use rayon::prelude::*;
            (0..n).into_par_iter().map(f).collect()
        }
        _ => (0..n).map(f).collect(),
    }
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}
