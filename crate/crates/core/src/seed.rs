//! Deterministic derivation of independent random streams from one seed.

/// Mixes `parts` into `base` with the splitmix64 finalizer, so that streams
/// for different `(epoch, iteration)` or `(view, pixel)` tuples are unrelated.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| {
        mix(acc ^ mix(p.wrapping_add(0x9E37_79B9_7F4A_7C15)))
    })
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
