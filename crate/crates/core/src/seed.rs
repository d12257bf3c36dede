//! Seed derivation and the portable generator used for every random draw.
//!
//! All randomness descends from one 64-bit seed. A component playing a
//! named role gets the sub-seed `seed ^ fnv1a64(role)` and feeds it to
//! ChaCha8 (`rand_chacha::ChaCha8Rng::seed_from_u64`), whose output stream
//! is fixed across platforms.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// 64-bit FNV-1a over the UTF-8 bytes of `s`.
pub fn fnv1a64(s: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    s.bytes()
        .fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

pub fn derive_seed(seed: u64, role: &str) -> u64 {
    seed ^ fnv1a64(role)
}

pub fn rng_for(seed: u64, role: &str) -> SimRng {
    SimRng::seed_from_u64(derive_seed(seed, role))
}

/// Uniform index in `0..n` from one 64-bit draw via the multiply-shift map
/// `(x * n) >> 64`.
pub fn uniform_index(rng: &mut impl RngCore, n: usize) -> usize {
    debug_assert!(n > 0);
    ((rng.next_u64() as u128 * n as u128) >> 64) as usize
}

/// Uniform real in `[0, 1)` from the top 53 bits of one 64-bit draw.
pub fn unit_f64(rng: &mut impl RngCore) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Fisher-Yates shuffle, walking `i` from the end and swapping with
/// `uniform_index(rng, i + 1)`.
pub fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = uniform_index(rng, i + 1);
        items.swap(i, j);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn shuffle_is_seeded_permutation() {
        let mut a: Vec<u32> = (0..100).collect();
        let mut b = a.clone();
        shuffle(&mut a, &mut rng_for(7, "order"));
        shuffle(&mut b, &mut rng_for(7, "order"));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..100).collect::<Vec<_>>());
        let mut c: Vec<u32> = (0..100).collect();
        shuffle(&mut c, &mut rng_for(8, "order"));
        assert_ne!(a, c);
    }

    #[test]
    fn uniform_index_covers_range() {
        let mut rng = rng_for(1, "t");
        let mut seen = [0u32; 5];
        for _ in 0..5000 {
            seen[uniform_index(&mut rng, 5)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 800));
        for _ in 0..1000 {
            let u = unit_f64(&mut rng);
            assert!((0.0..1.0).contains(&u));
        }
    }
}
