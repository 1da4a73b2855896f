//! Counter-based random streams.
//!
//! Every draw in the library is addressed by a [`StreamKey`] plus a date
//! index. The key selects a ChaCha8 key (global seed and namespace), a
//! ChaCha stream (path index) and a block offset (replication and date), so
//! the numbers consumed at a given date never depend on how many draws were
//! taken elsewhere or on which thread ran the path.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Disjoint key spaces. Training and testing randomness can never collide
/// because the namespace is part of the cipher key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Namespace {
    Training(u32),
    Testing(u32),
    Pilot(u32),
}

impl Namespace {
    fn tag(self) -> u64 {
        match self {
            Namespace::Training(t) => (1u64 << 32) | t as u64,
            Namespace::Testing(t) => (2u64 << 32) | t as u64,
            Namespace::Pilot(t) => (3u64 << 32) | t as u64,
        }
    }

    pub fn is_training(self) -> bool {
        matches!(self, Namespace::Training(_))
    }
}

/// Replication index reserved for first-stage (trunk) paths.
pub const TRUNK_REPLICATION: u32 = 0;

const WORDS_PER_DATE_BITS: u32 = 16;
const MAX_DATES_BITS: u32 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub namespace: Namespace,
    pub path: u64,
    pub replication: u32,
}

impl StreamKey {
    pub fn new(seed: u64, namespace: Namespace, path: u64, replication: u32) -> Self {
        Self {
            seed,
            namespace,
            path,
            replication,
        }
    }

    pub fn trunk(seed: u64, namespace: Namespace, path: u64) -> Self {
        Self::new(seed, namespace, path, TRUNK_REPLICATION)
    }

    pub fn with_replication(self, replication: u32) -> Self {
        Self {
            replication,
            ..self
        }
    }

    /// Generator positioned at the start of the draws for `date`.
    pub fn rng_at(&self, date: usize) -> ChaCha8Rng {
        let mut rng = self.base_rng();
        self.seek(&mut rng, date);
        rng
    }

    /// Generator for this key without a date offset; reposition with [`StreamKey::seek`].
    pub fn base_rng(&self) -> ChaCha8Rng {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.namespace.tag().to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.path);
        rng
    }

    pub fn seek(&self, rng: &mut ChaCha8Rng, date: usize) {
        debug_assert!(date < (1usize << MAX_DATES_BITS));
        let block = ((self.replication as u128) << MAX_DATES_BITS) | date as u128;
        rng.set_word_pos(block << WORDS_PER_DATE_BITS);
    }
}
