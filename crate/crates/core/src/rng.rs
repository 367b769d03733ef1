//! Deterministic hashing and seeding helpers.
//!
//! Everything that needs randomness in this crate derives its stream from a
//! single base seed plus a string tag, so runs are reproducible regardless of
//! call order.

/// FNV-1a over a byte slice.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// SplitMix64 finalizer, used to decorrelate derived seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a tag.
pub fn seed_for(base: u64, tag: &str) -> u64 {
    splitmix64(base ^ fnv1a64(tag.as_bytes()))
}

/// Deterministic value in [0, 1) keyed by a seed and string parts.
pub fn hash01(seed: u64, parts: &[&str]) -> f64 {
    let mut h = splitmix64(seed);
    for p in parts {
        h = splitmix64(h ^ fnv1a64(p.as_bytes()));
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Fills a slice with N(0, std^2) samples via Box-Muller over a seeded stream.
pub fn fill_gaussian(out: &mut [f32], std: f64, seed: u64) {
    let mut state = splitmix64(seed);
    let mut next01 = move || {
        state = splitmix64(state);
        // Open interval (0, 1] so ln never sees zero.
        ((state >> 11) as f64 + 1.0) / (1u64 << 53) as f64
    };
    let mut i = 0;
    while i < out.len() {
        let u1 = next01();
        let u2 = next01();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        out[i] = (r * theta.cos() * std) as f32;
        if i + 1 < out.len() {
            out[i + 1] = (r * theta.sin() * std) as f32;
        }
        i += 2;
    }
}
