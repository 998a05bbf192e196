// Copyright 2026 the ising-rg-spde authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Deterministic parallel random-number streams.
//!
//! Every replica owns a stream seeded as `mix(master_seed, replica_index)`,
//! where `mix` is the splitmix64 finalizer applied to
//! `master + (index + 1) * GOLDEN`. Streams are therefore independent of the
//! scheduling order, and ensemble reductions over replica-indexed results are
//! bitwise reproducible across thread counts.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;

/// Weyl increment used to decorrelate consecutive replica indices.
pub const MIX_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
/// First multiplier of the splitmix64 finalizer.
pub const MIX_MUL1: u64 = 0xBF58_476D_1CE4_E5B9;
/// Second multiplier of the splitmix64 finalizer.
pub const MIX_MUL2: u64 = 0x94D0_49BB_1331_11EB;

/// 64-bit avalanche mix of `(master_seed, replica_index)`.
pub fn mix_seed(master_seed: u64, replica_index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(replica_index.wrapping_add(1).wrapping_mul(MIX_GAMMA));
    z = (z ^ (z >> 30)).wrapping_mul(MIX_MUL1);
    z = (z ^ (z >> 27)).wrapping_mul(MIX_MUL2);
    z ^ (z >> 31)
}

/// The RNG used by every replica stream.
pub type ReplicaRng = ChaCha8Rng;

/// Build the stream for one replica.
pub fn replica_rng(master_seed: u64, replica_index: u64) -> ReplicaRng {
    ChaCha8Rng::seed_from_u64(mix_seed(master_seed, replica_index))
}

/// Run `f(replica_index, rng)` for every replica in parallel and collect the
/// results in replica order.
///
/// The fold order over the returned vector is fixed, so any reduction the
/// caller performs is deterministic regardless of thread count.
pub fn run_replicas<T, F>(replicas: usize, master_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, &mut ReplicaRng) -> Result<T> + Sync,
{
    (0..replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = replica_rng(master_seed, i as u64);
            f(i, &mut rng)
        })
        .collect()
}

/// Mean and standard error of a sample, accumulated in index order.
pub fn mean_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n as f64 - 1.0);
    (mean, (var / n as f64).sqrt())
}
