//! Seeded, forkable random streams.
//!
//! Every stochastic operation takes an [`RngStream`]. Work that may run in
//! parallel (particle blocks, design points, assets) draws from a child stream
//! obtained by [`RngStream::fork`] with a fixed key, so results do not depend
//! on scheduling or thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    rng: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream identified by `key`. Depends only on this
    /// stream's seed, never on how many draws have been taken from it.
    pub fn fork(&self, key: u64) -> RngStream {
        RngStream::new(splitmix64(splitmix64(self.seed) ^ splitmix64(key.wrapping_add(0x5851_F42D))))
    }

    pub fn fork2(&self, a: u64, b: u64) -> RngStream {
        self.fork(a).fork(b)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
