//! Reproducible random streams.
//!
//! A [`SeededStream`] names a ChaCha8 key/stream pair. Child streams are
//! derived by hashing the parent identity with a role label and an index, so
//! independent jobs (replicates, trees, permutation reps) draw from
//! non-overlapping streams regardless of execution order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SeededStream {
    pub seed: u64,
    pub stream: u64,
}

impl SeededStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn from_seed(seed: u64) -> Self {
        Self { seed, stream: 0 }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream);
        r
    }

    /// Child stream for `(role, index)`.
    pub fn child(&self, role: &str, index: u64) -> SeededStream {
        hash_stream(&[
            &self.seed.to_le_bytes(),
            &self.stream.to_le_bytes(),
            role.as_bytes(),
            &index.to_le_bytes(),
        ])
    }
}

/// Stream for one `(replicate, role)` of an experiment with master seed
/// `master`.
pub fn derive_seed(master: u64, replicate: u64, role: &str) -> SeededStream {
    hash_stream(&[
        b"replicate",
        &master.to_le_bytes(),
        &replicate.to_le_bytes(),
        role.as_bytes(),
    ])
}

fn hash_stream(parts: &[&[u8]]) -> SeededStream {
    let mut h = Sha256::new();
    for p in parts {
        // length prefix keeps ("ab","c") distinct from ("a","bc")
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    let digest = h.finalize();
    let mut a = [0u8; 8];
    let mut b = [0u8; 8];
    a.copy_from_slice(&digest[..8]);
    b.copy_from_slice(&digest[8..16]);
    SeededStream {
        seed: u64::from_le_bytes(a),
        stream: u64::from_le_bytes(b),
    }
}
