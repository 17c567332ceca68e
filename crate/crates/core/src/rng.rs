//! Seed-stream derivation.
//!
//! Every random decision in a run flows from one base seed through
//! [`mix_seed`], so sub-streams (task generation, partitioning, per-session
//! shuffles) are independent and reproducible without threading RNG state.

/// Distinct stream tags keep derived seeds from colliding across purposes.
pub(crate) mod stream {
    pub const TASK: u64 = 1;
    pub const PARTITION: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const SESSION: u64 = 4;
    pub const SERVER_SPLIT: u64 = 5;
}

/// SplitMix64-style finalizer over a combined (base, tag, index) key.
pub(crate) fn mix_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut x =
        base ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ index.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distinct_keys_give_distinct_seeds() {
        let a = mix_seed(1, stream::TASK, 0);
        let b = mix_seed(1, stream::TASK, 1);
        let c = mix_seed(1, stream::PARTITION, 0);
        let d = mix_seed(2, stream::TASK, 0);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_ne!(a, d);
        assert_eq!(a, mix_seed(1, stream::TASK, 0));
    }
}
