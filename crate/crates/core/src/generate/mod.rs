//! Layout generators and the tiled expansion that stitches them together.

mod expand;
mod procedural;
mod remote;
mod simple;

pub use expand::{
    expand, expand_traced, independent_tiling, seam_discontinuity, tile_positions, ExpansionSpec,
    ExpansionTrace, Seam, TileRecord,
};
pub use procedural::{ProceduralBackend, ProceduralParams};
pub use remote::{RemoteBackend, RemoteConfig, RemoteRequest};
pub use simple::{largest_remainder, ConstantBackend, EchoBackend};

use crate::layout::{GenerationCondition, SemanticLayout};
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum GenError {
    #[error("backend '{backend}' does not support {what}")]
    UnsupportedCondition { backend: String, what: &'static str },
    #[error("backend failure: {0}")]
    BackendFailure(String),
    #[error("invalid expansion spec: {0}")]
    InvalidSpec(String),
    #[error("seam {0:?} out of range")]
    OutOfRange(Seam),
    #[error("requested size must be at least 1x1")]
    EmptySize,
}

/// What a backend can be conditioned on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Capabilities {
    pub supports_ratios: bool,
    pub supports_text: bool,
    /// Accepts a known-pixel canvas for outpainting.
    pub supports_partial: bool,
}

/// Pixels already fixed inside a tile that is about to be generated.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownRegion {
    pub width: usize,
    pub height: usize,
    /// Class ids; entries where `mask` is false are meaningless.
    pub labels: Vec<u8>,
    pub mask: Vec<bool>,
}

impl KnownRegion {
    #[inline]
    pub fn is_known(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }
}

/// A source of semantic layouts.
pub trait GeneratorBackend: Send + Sync {
    /// Stable identifier; part of the determinism key.
    fn id(&self) -> &str;

    fn capabilities(&self) -> Capabilities;

    /// Produce a `width`×`height` layout. With `known`, the result must agree
    /// with the known pixels wherever the caller keeps them.
    fn generate_tile(
        &self,
        condition: &GenerationCondition,
        width: usize,
        height: usize,
        known: Option<&KnownRegion>,
    ) -> Result<SemanticLayout, GenError>;
}

pub(crate) fn check_condition(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    partial: bool,
) -> Result<(), GenError> {
    let caps = backend.capabilities();
    let unsupported = |what| GenError::UnsupportedCondition {
        backend: backend.id().to_string(),
        what,
    };
    if condition.ratios.is_some() && !caps.supports_ratios {
        return Err(unsupported("class ratios"));
    }
    if condition.text.is_some() && !caps.supports_text {
        return Err(unsupported("text"));
    }
    if partial && !caps.supports_partial {
        return Err(unsupported("partial canvases"));
    }
    Ok(())
}

/// Generate one layout after checking the condition against the backend's capabilities.
pub fn generate(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    width: usize,
    height: usize,
) -> Result<SemanticLayout, GenError> {
    if width == 0 || height == 0 {
        return Err(GenError::EmptySize);
    }
    check_condition(backend, condition, false)?;
    backend.generate_tile(condition, width, height, None)
}

/// Seed for the `index`-th tile of an expansion. Tile 0 keeps the base seed so
/// a single-tile expansion equals a plain `generate` call.
pub fn tile_seed(seed: u64, index: usize) -> u64 {
    if index == 0 {
        return seed;
    }
    let mut h = Sha256::new();
    h.update(b"tile");
    h.update(seed.to_le_bytes());
    h.update((index as u64).to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{ClassRatios, LandClass};

    #[test]
    fn unsupported_conditions_are_rejected() {
        let backend = ConstantBackend::new(LandClass::Water, 0.5);
        let r = ClassRatios::new([1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let cond = GenerationCondition::unconditional(1).with_ratios(r);
        assert!(matches!(
            generate(&backend, &cond, 4, 4),
            Err(GenError::UnsupportedCondition { .. })
        ));
        assert!(matches!(
            generate(&backend, &GenerationCondition::unconditional(1), 0, 4),
            Err(GenError::EmptySize)
        ));
    }

    #[test]
    fn tile_zero_keeps_seed() {
        assert_eq!(tile_seed(42, 0), 42);
        assert_ne!(tile_seed(42, 1), 42);
        assert_ne!(tile_seed(42, 1), tile_seed(42, 2));
    }
}
