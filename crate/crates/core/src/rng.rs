//! Counter-based random stream derivation.
//!
//! Every random quantity in a run is addressed by a [`StreamKey`], a 64-bit
//! value derived by hashing a path such as `(master_seed, "iter", t, l)`.
//! Streams never share state, so the order in which batch members are
//! evaluated (sequentially or on a worker pool) cannot change any draw, and
//! both evaluations of a two-point pair see the same noise sample by
//! construction.

use rand::SeedableRng;
use rand_xoshiro::SplitMix64;

const ROOT_SALT: u64 = 0x5253_435a_4f2d_726e;
const INDEX_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
#[inline]
const fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn stream tags into salts.
const fn fnv1a(tag: &str) -> u64 {
    let bytes = tag.as_bytes();
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut i = 0;
    while i < bytes.len() {
        h ^= bytes[i] as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
        i += 1;
    }
    h
}

/// Address of an independent random stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StreamKey(u64);

impl StreamKey {
    /// Root of the key tree for one master seed.
    pub const fn root(master_seed: u64) -> Self {
        StreamKey(mix64(master_seed ^ ROOT_SALT))
    }

    /// Rebuilds a key from its raw value (e.g. a sample key received over
    /// the external-oracle protocol).
    pub const fn from_raw(raw: u64) -> Self {
        StreamKey(raw)
    }

    /// Child stream named by a tag.
    pub const fn stream(self, tag: &str) -> Self {
        StreamKey(mix64(self.0.rotate_left(17) ^ mix64(fnv1a(tag))))
    }

    /// Child stream addressed by an integer counter.
    pub const fn index(self, i: u64) -> Self {
        StreamKey(mix64(self.0.rotate_left(29) ^ mix64(i.wrapping_add(INDEX_SALT))))
    }

    pub const fn value(self) -> u64 {
        self.0
    }

    /// Generator positioned at the start of this stream.
    pub fn rng(self) -> StreamRng {
        SplitMix64::seed_from_u64(self.0)
    }
}

/// Generator type used for all keyed draws.
pub type StreamRng = SplitMix64;
