//! Reproducible, independent random streams derived from one master seed.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Stream for `(master_seed, label)`: ChaCha8 keyed by SHA-256 of both.
pub fn seeded_stream(master_seed: u64, label: &str) -> ChaCha8Rng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(label.as_bytes());
    ChaCha8Rng::from_seed(h.finalize().into())
}

/// Hands out streams and refuses to reuse a label.
#[derive(Debug, Clone)]
pub struct StreamRegistry {
    master_seed: u64,
    used: BTreeSet<String>,
}

impl StreamRegistry {
    pub fn new(master_seed: u64) -> Self {
        Self {
            master_seed,
            used: BTreeSet::new(),
        }
    }

    pub fn stream(&mut self, label: &str) -> Result<ChaCha8Rng> {
        if !self.used.insert(label.to_owned()) {
            return Err(Error::Config(format!("random stream label {label:?} already in use")));
        }
        Ok(seeded_stream(self.master_seed, label))
    }
}
