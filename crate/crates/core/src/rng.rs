//! Counter-based random streams.
//!
//! Every random quantity in the crate is drawn from a stream addressed by a
//! key path, e.g. `(seed, component, draw index)`. A [`RngKey`] mixes the
//! path into a ChaCha key; the final index selects one of ChaCha's 2^64
//! streams. Work items therefore own their randomness, and results do not
//! depend on how a thread pool schedules them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Domain tags keep unrelated consumers of one seed apart.
pub mod domain {
    pub const REJECTION: u64 = 0x7265_6a65_6374;
    pub const SIMULATION: u64 = 0x7369_6d75_6c61;
    pub const PRIOR: u64 = 0x0070_7269_6f72;
    pub const COST: u64 = 0x636f_7374;
    pub const PILOT: u64 = 0x0070_696c_6f74;
    pub const RESAMPLE: u64 = 0x7265_7361_6d70;
    pub const GP_RESTART: u64 = 0x6770_7273;
    pub const SPLIT: u64 = 0x0073_706c_6974;
    pub const OBSERVED: u64 = 0x6f62_7365_7276;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngKey(u64);

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RngKey {
    pub fn new(seed: u64) -> Self {
        RngKey(splitmix64(seed))
    }

    /// Derives an independent sub-key for the path component `tag`.
    pub fn child(self, tag: u64) -> Self {
        RngKey(splitmix64(self.0 ^ splitmix64(tag.wrapping_add(0x5851_f42d_4c95_7f2d))))
    }

    /// The stream for work item `index` under this key.
    pub fn stream(self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}
