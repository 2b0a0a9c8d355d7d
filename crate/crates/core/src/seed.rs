//! Deterministic seed derivation.
//!
//! Replica `r` of a run with master seed `m` uses the 64-bit seed
//!
//! ```text
//! seed(m, r) = splitmix64( m XOR (r + 1) * 0x9E3779B97F4A7C15 )
//! ```
//!
//! where `splitmix64` is the finalizer of Steele/Lea/Flood (one round,
//! constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB). All arithmetic is
//! wrapping. Sub-streams of a replica (initial configuration, dynamics) are
//! derived the same way with fixed stream ids, see [`sub_seed`].

/// One round of the splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed for replica `replica_id` under `master`.
pub fn replica_seed(master: u64, replica_id: u64) -> u64 {
    splitmix64(master ^ replica_id.wrapping_add(1).wrapping_mul(0x9E3779B97F4A7C15))
}

/// Named sub-stream of a seed (0 = initial configuration, 1 = dynamics, ...).
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ stream.wrapping_mul(0xD1B54A32D192ED03))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: the derivation is documented as bit-exact.
        assert_eq!(splitmix64(0), 0xE220A8397B1DCDAF);
        assert_eq!(replica_seed(42, 0), replica_seed(42, 0));
        assert_ne!(replica_seed(42, 0), replica_seed(42, 1));
        assert_ne!(replica_seed(42, 0), replica_seed(43, 0));
        assert_ne!(sub_seed(7, 0), sub_seed(7, 1));
    }
}
