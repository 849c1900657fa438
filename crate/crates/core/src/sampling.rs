//! Seeded, portable random selection.
//!
//! All randomness goes through xoshiro256++ seeded from a `u64` by SplitMix64
//! (the reference seeding procedure), bounded integers use Lemire's
//! multiply-and-reject method, and subsets are drawn with reservoir
//! Algorithm R. Each piece is a few lines in any language, so pools and
//! splits can be reproduced outside this crate bit for bit.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type PortableRng = Xoshiro256PlusPlus;

pub fn rng_from_seed(seed: u64) -> PortableRng {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform integer in `0..n`. Panics if `n == 0`.
pub fn uniform_below<R: RngCore>(rng: &mut R, n: u64) -> u64 {
    assert!(n > 0, "uniform_below requires n > 0");
    let mut m = u128::from(rng.next_u64()) * u128::from(n);
    let mut low = m as u64;
    if low < n {
        let threshold = n.wrapping_neg() % n;
        while low < threshold {
            m = u128::from(rng.next_u64()) * u128::from(n);
            low = m as u64;
        }
    }
    (m >> 64) as u64
}

/// In-place Fisher-Yates shuffle, swapping from the back.
pub fn shuffle<T, R: RngCore>(rng: &mut R, items: &mut [T]) {
    for i in (1..items.len()).rev() {
        let j = uniform_below(rng, i as u64 + 1) as usize;
        items.swap(i, j);
    }
}

/// Streaming uniform sample of at most `capacity` items without replacement.
///
/// Every offered item gets a sequential candidate index. `finish` returns the
/// kept items sorted by that index.
pub struct Reservoir<T> {
    capacity: usize,
    seen: u64,
    items: Vec<(u64, T)>,
    rng: PortableRng,
}

impl<T> Reservoir<T> {
    pub fn new(capacity: usize, seed: u64) -> Self {
        Self {
            capacity,
            seen: 0,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            rng: rng_from_seed(seed),
        }
    }

    pub fn offer(&mut self, item: T) {
        self.offer_with(|| item);
    }

    /// Like `offer`, but only builds the item when it is kept.
    pub fn offer_with(&mut self, make: impl FnOnce() -> T) {
        let index = self.seen;
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push((index, make()));
        } else if self.capacity > 0 {
            let j = uniform_below(&mut self.rng, self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = (index, make());
            }
        }
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn finish(mut self) -> Vec<(u64, T)> {
        self.items.sort_by_key(|(i, _)| *i);
        self.items
    }
}

/// Indices of a uniform `min(capacity, count)` subset of `0..count`, sorted.
pub fn sample_indices(count: u64, capacity: usize, seed: u64) -> Vec<u64> {
    let mut r = Reservoir::new(capacity, seed);
    for i in 0..count {
        r.offer(i);
    }
    r.finish().into_iter().map(|(i, _)| i).collect()
}
