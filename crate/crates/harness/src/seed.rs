//! Seed derivation. Every random stream of a sweep descends from the base seed.

/// One SplitMix64 output step.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `tag` into `seed`.
pub fn mix(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Seed of trial `trial` at sweep point `point`. Every estimator of a trial
/// sees the same realization.
pub fn trial_seed(base_seed: u64, trial: usize, point: usize) -> u64 {
    mix(
        mix(splitmix64(base_seed), trial as u64),
        point as u64 ^ 0xA5A5_0000,
    )
}
