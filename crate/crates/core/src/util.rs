//! Small helpers: deterministic arg-max reduction and seeded RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Running maximum that remembers a witness. Ties keep the smaller key so
/// that parallel reductions give the same witness as a serial scan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArgMax<K> {
    pub value: f64,
    pub key: Option<K>,
}

impl<K: Copy + PartialOrd> ArgMax<K> {
    pub fn new() -> Self {
        ArgMax { value: f64::NEG_INFINITY, key: None }
    }

    pub fn offer(&mut self, value: f64, key: K) {
        if self.better(value, key) {
            self.value = value;
            self.key = Some(key);
        }
    }

    fn better(&self, value: f64, key: K) -> bool {
        match self.key {
            None => !value.is_nan(),
            Some(k) => value > self.value || (value == self.value && key < k),
        }
    }

    pub fn merge(mut self, other: Self) -> Self {
        if let Some(k) = other.key {
            self.offer(other.value, k);
        }
        self
    }
}

impl<K: Copy + PartialOrd> Default for ArgMax<K> {
    fn default() -> Self {
        Self::new()
    }
}

/// RNG for trial `stream` of a run seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// FNV-1a, 64 bit.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Sorted, deduplicated copy of a float slice (no NaNs expected).
pub fn sorted_unique(values: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_tie_keeps_smaller_key() {
        let mut a = ArgMax::new();
        a.offer(1.0, 5usize);
        a.offer(1.0, 3usize);
        a.offer(0.5, 1usize);
        assert_eq!(a.key, Some(3));
        let mut b = ArgMax::new();
        b.offer(1.0, 2usize);
        assert_eq!(a.merge(b).key, Some(2));
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }
}
