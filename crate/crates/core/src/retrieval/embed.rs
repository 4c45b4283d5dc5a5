//! Text embedders used to build query vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

/// Which embedding space a vector lives in. Image and text slots are never compared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Space {
    Image,
    Text,
}

impl Space {
    fn tag(self) -> &'static [u8] {
        match self {
            Space::Image => b"img",
            Space::Text => b"txt",
        }
    }
}

/// Maps text to a unit vector of the requested dimension. A real CLIP or
/// sentence-embedding model plugs in here.
pub trait TextEmbedder: Send + Sync {
    fn embed(&self, text: &str, space: Space, dim: usize) -> Vec<f64>;
}

/// Deterministic bag-of-words embedder: each lowercase token maps to a seeded
/// Gaussian vector; a text is the normalized sum of its token vectors.
#[derive(Debug, Clone, Copy, Default)]
pub struct PseudoEmbedder;

fn token_vector(token: &str, space: Space, dim: usize) -> Vec<f64> {
    let mut h = Sha256::new();
    h.update(space.tag());
    h.update((dim as u64).to_le_bytes());
    h.update(token.as_bytes());
    let seed: [u8; 32] = h.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(seed);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

impl TextEmbedder for PseudoEmbedder {
    fn embed(&self, text: &str, space: Space, dim: usize) -> Vec<f64> {
        let mut toks = tokens(text);
        if toks.is_empty() {
            toks.push(String::new());
        }
        let mut acc = vec![0.0; dim];
        for t in &toks {
            for (a, v) in acc.iter_mut().zip(token_vector(t, space, dim)) {
                *a += v;
            }
        }
        normalize(&mut acc);
        acc
    }
}
