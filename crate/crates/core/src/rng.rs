//! Seeded, platform-independent random streams.
//!
//! Every random decision in the toolkit is drawn from an [`RngStream`]
//! identified by a `(seed, stream id)` pair. The generator is ChaCha8, whose
//! output is specified bit-for-bit, so identical pairs give identical draws on
//! every platform and independently of thread scheduling.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { seed, stream, rng }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A child stream for sub-task `index`, independent of how many draws the
    /// parent has already made.
    pub fn derive(&self, index: u64) -> RngStream {
        let child = stable_hash(&[
            b"derive",
            &self.stream.to_le_bytes(),
            &index.to_le_bytes(),
        ]);
        RngStream::new(self.seed, child)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        self.rng.fill_bytes(dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.rng.try_fill_bytes(dest)
    }
}

/// Stable 64-bit hash of a sequence of byte strings (length-prefixed, so
/// `["ab", "c"]` and `["a", "bc"]` differ).
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    let digest = hasher.finalize();
    let mut word = [0u8; 8];
    word.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(word)
}

/// Stream id for one sample of one cross-validation iteration.
pub fn sample_stream_id(sample_id: &str, iteration: usize, purpose: &str) -> u64 {
    stable_hash(&[
        sample_id.as_bytes(),
        &(iteration as u64).to_le_bytes(),
        purpose.as_bytes(),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn identical_pairs_repeat() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        let xs: Vec<u64> = (0..16).map(|_| a.next_u64()).collect();
        let ys: Vec<u64> = (0..16).map(|_| b.next_u64()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn streams_differ() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 4);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn derive_ignores_parent_position() {
        let a = RngStream::new(1, 2);
        let mut b = a.clone();
        let _: f64 = b.gen();
        let mut c1 = a.derive(5);
        let mut c2 = b.derive(5);
        assert_eq!(c1.next_u64(), c2.next_u64());
    }

    #[test]
    fn hash_is_length_prefixed() {
        assert_ne!(stable_hash(&[b"ab", b"c"]), stable_hash(&[b"a", b"bc"]));
        // pinned so a dependency bump cannot silently change every seed
        // sha256(le64(1) || "x"), first eight bytes little-endian
        assert_eq!(stable_hash(&[b"x"]), 6578891248438090745);
    }
}
