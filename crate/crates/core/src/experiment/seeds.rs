//! Named, independent seed streams derived from one repetition seed.

/// Seed for the named stream of `seed`. Distinct names give unrelated seeds.
pub fn derive_seed(seed: u64, stream: &str) -> u64 {
    splitmix64(seed ^ splitmix64(fnv1a(stream.as_bytes())))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Every stochastic stream of one repetition.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub split: u64,
    pub init: u64,
    pub sampler: u64,
    pub mask: u64,
}

impl RunSeeds {
    pub fn new(repetition_seed: u64) -> Self {
        Self {
            split: derive_seed(repetition_seed, "split"),
            init: derive_seed(repetition_seed, "init"),
            sampler: derive_seed(repetition_seed, "sampler"),
            mask: derive_seed(repetition_seed, "mask"),
        }
    }
}
