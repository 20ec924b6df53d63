//! Path-keyed random streams.
//!
//! Every random quantity in a test is drawn from a stream identified by a
//! seed and a path of integers, e.g. `[replicate, permutation, bootstrap]`.
//! The path is absorbed into a 128-bit key that seeds a xoshiro256++
//! generator, so a stream depends only on `(seed, path)` and never on the
//! order in which work is scheduled.

use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Generator handed out by [`RngStream::rng`].
pub type StreamRng = Xoshiro256PlusPlus;

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;
const LANE_B: u64 = 0xd1b5_4a32_d192_ed03;
const LANE_C: u64 = 0x8cb9_2ba7_2f3d_8dd7;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream keyed by `(seed, path)`.
///
/// Streams are cheap `Copy` values; deriving a child is a handful of integer
/// mixes. The path itself is not retained, only its key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    seed: u64,
    key: [u64; 2],
    depth: u32,
}

impl RngStream {
    /// The stream with an empty path.
    pub fn root(seed: u64) -> Self {
        RngStream {
            seed,
            key: [mix64(seed ^ LANE_B), mix64(seed.wrapping_add(LANE_C))],
            depth: 0,
        }
    }

    /// The stream whose path is this stream's path followed by `index`.
    #[inline]
    pub fn child(self, index: u64) -> Self {
        let a = mix64(self.key[0] ^ mix64(index.wrapping_add(GOLDEN)));
        let b = mix64(
            self.key[1].wrapping_add(index.wrapping_mul(LANE_B)) ^ a.rotate_left(29),
        );
        RngStream {
            seed: self.seed,
            key: [a, b],
            depth: self.depth + 1,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Length of the path this stream was derived with.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// A fresh generator positioned at the start of this stream.
    #[inline]
    pub fn rng(&self) -> StreamRng {
        let mut seed = [0u8; 32];
        let words = [
            mix64(self.key[0].wrapping_add(GOLDEN)),
            mix64(self.key[1].wrapping_add(GOLDEN.wrapping_mul(2))),
            mix64(self.key[0] ^ self.key[1].rotate_left(32) ^ LANE_C),
            mix64(self.key[1].wrapping_sub(self.key[0]) ^ LANE_B),
        ];
        for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        Xoshiro256PlusPlus::from_seed(seed)
    }
}

/// The stream for `(seed, path)`.
pub fn derive_stream(seed: u64, path: &[u64]) -> RngStream {
    path.iter()
        .fold(RngStream::root(seed), |stream, &i| stream.child(i))
}
