//! Seeded randomness: one root seed fans out into named per-stage streams so
//! adding a stage never perturbs the draws of earlier stages.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Derive a stage seed from a root seed and a stage name (FNV-1a over the
/// name, mixed with the root). Stable across platforms and releases.
pub fn stage_seed(root: u64, name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ root.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// The crate-wide PRNG. ChaCha8 is seedable, portable and fast enough.
pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stage_rng(root: u64, name: &str) -> ChaCha8Rng {
    rng_from_seed(stage_seed(root, name))
}

/// One standard normal draw via Box-Muller. Explicit so that sampled values
/// are identical on every platform for a given stream position.
pub fn randn<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1], keeps ln finite
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn randn_vec<R: Rng>(rng: &mut R, n: usize, mean: f64, std: f64) -> Vec<f64> {
    (0..n).map(|_| mean + std * randn(rng)).collect()
}
