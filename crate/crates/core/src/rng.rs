//! Deterministic random streams.
//!
//! Every stochastic component draws from a [`SimRng`] seeded through
//! [`derive_seed`], so a run is fully determined by the base seed, the
//! experiment identifier, the run index and the component index.

use rand::SeedableRng;

pub type SimRng = rand_chacha::ChaCha8Rng;

/// One round of the splitmix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// FNV-1a over the bytes of an identifier.
fn fnv1a(text: &str) -> u64 {
    text.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Seed for `(base_seed, experiment, run, component)`.
///
/// The mapping is part of the output format: changing it changes every CSV.
pub fn derive_seed(base_seed: u64, experiment: &str, run: u64, component: u64) -> u64 {
    let mut h = splitmix64(base_seed);
    h = splitmix64(h ^ fnv1a(experiment));
    h = splitmix64(h ^ run);
    splitmix64(h ^ component.rotate_left(32))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}

pub fn stream(base_seed: u64, experiment: &str, run: u64, component: u64) -> SimRng {
    seeded(derive_seed(base_seed, experiment, run, component))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_seeds_are_stable() {
        assert_eq!(derive_seed(7, "exp", 0, 0), derive_seed(7, "exp", 0, 0));
        assert_ne!(derive_seed(7, "exp", 0, 0), derive_seed(7, "exp", 1, 0));
        assert_ne!(derive_seed(7, "exp", 0, 0), derive_seed(7, "exp", 0, 1));
        assert_ne!(derive_seed(7, "exp", 0, 0), derive_seed(7, "other", 0, 0));
        assert_ne!(derive_seed(7, "exp", 0, 0), derive_seed(8, "exp", 0, 0));
    }

    #[test]
    fn streams_replay() {
        let a: Vec<u64> = stream(1, "x", 2, 3).random_iter().take(4).collect();
        let b: Vec<u64> = stream(1, "x", 2, 3).random_iter().take(4).collect();
        assert_eq!(a, b);
    }
}
