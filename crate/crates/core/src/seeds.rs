//! Deterministic seed derivation for parallel work items.

/// Mixes `base` with each tag through SplitMix64. The result is kept below
/// 2^63 so it survives formats that only carry signed 64-bit integers.
pub fn derive_seed(base: u64, tags: &[u64]) -> u64 {
    let mut state = base;
    for &t in tags {
        state = splitmix(state ^ splitmix(t));
    }
    splitmix(state) >> 1
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn reference_values() {
        // SplitMix64 of 0 from the published reference generator.
        assert_eq!(splitmix(0), 0xe220_a839_7b1d_cdaf);
    }

    #[test]
    fn distinct_and_order_sensitive() {
        let mut seen = HashSet::new();
        for a in 0..20 {
            for b in 0..20 {
                let s = derive_seed(7, &[a, b]);
                assert!(s < 1 << 63);
                assert!(seen.insert(s));
            }
        }
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
        assert_ne!(derive_seed(7, &[]), derive_seed(8, &[]));
    }
}
