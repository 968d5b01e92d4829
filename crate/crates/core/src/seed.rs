//! Seed derivation. Every random component gets its own stream derived from a
//! master seed and a label, so adding a consumer never shifts another one.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `label` into `seed`.
pub fn derive(seed: u64, label: &str) -> u64 {
    let mut h = splitmix(seed);
    for chunk in label.as_bytes().chunks(8) {
        let mut buf = [0u8; 8];
        buf[..chunk.len()].copy_from_slice(chunk);
        h = splitmix(h ^ u64::from_le_bytes(buf));
    }
    splitmix(h ^ label.len() as u64)
}

/// Maps `(seed, label)` to a uniform value in `[0, 1)`.
pub fn unit_hash(seed: u64, label: &str) -> f64 {
    (derive(seed, label) >> 11) as f64 / (1u64 << 53) as f64
}
