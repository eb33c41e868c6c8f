use sha2::{Digest, Sha256};

/// Collapses whitespace runs to single spaces and strips both ends.
pub fn normalize_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// 64-bit FNV-1a. Stable across platforms and releases, unlike `DefaultHasher`.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}


pub use rng::PortableRng;

mod rng {
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Seeded generator with a fixed, documented algorithm:
    /// ChaCha8 seeded through `SeedableRng::seed_from_u64`, bounded integers by
    /// Lemire's multiply-and-reject, shuffles by Fisher-Yates from the back.
    /// None of these depend on the host platform.
    #[derive(Debug, Clone)]
    pub struct PortableRng(ChaCha8Rng);

    impl PortableRng {
        pub fn new(seed: u64) -> Self {
            PortableRng(ChaCha8Rng::seed_from_u64(seed))
        }

        /// Derives an independent stream for `(seed, stream)`.
        pub fn with_stream(seed: u64, stream: u64) -> Self {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(stream);
            PortableRng(rng)
        }

        pub fn next_u64(&mut self) -> u64 {
            self.0.next_u64()
        }

        /// Uniform integer in `0..n`. Panics on `n == 0`.
        pub fn below(&mut self, n: usize) -> usize {
            assert!(n > 0, "below(0)");
            let n = n as u64;
            let threshold = n.wrapping_neg() % n;
            loop {
                let m = u128::from(self.next_u64()) * u128::from(n);
                if (m as u64) >= threshold {
                    return (m >> 64) as usize;
                }
            }
        }

        /// Uniform float in `[0, 1)` with 53 bits of precision.
        pub fn unit(&mut self) -> f64 {
            (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
        }

        pub fn shuffle<T>(&mut self, items: &mut [T]) {
            for i in (1..items.len()).rev() {
                let j = self.below(i + 1);
                items.swap(i, j);
            }
        }
    }

}
