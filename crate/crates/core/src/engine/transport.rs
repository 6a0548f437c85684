//! Directional message delays.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Delay source for one direction of one edge.
#[derive(Debug, Clone)]
pub struct DelaySampler {
    base: f64,
    jitter: f64,
    rng: ChaCha8Rng,
    script: Option<Vec<f64>>,
    next: usize,
}

impl DelaySampler {
    pub fn new(base: f64, jitter: f64, rng: ChaCha8Rng, script: Option<Vec<f64>>) -> Self {
        Self {
            base,
            jitter,
            rng,
            script: script.filter(|s| !s.is_empty()),
            next: 0,
        }
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Next delay: the scripted value if a script is set, otherwise
    /// `base + U[0, jitter]`.
    pub fn sample(&mut self) -> f64 {
        if let Some(s) = &self.script {
            let d = s[self.next % s.len()];
            self.next += 1;
            return d;
        }
        if self.jitter > 0.0 {
            self.base + self.rng.gen_range(0.0..=self.jitter)
        } else {
            self.base
        }
    }
}
