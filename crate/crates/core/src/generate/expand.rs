//! Tiled expansion beyond a single generator tile.
//!
//! Tiles are visited row-major. Each new tile sees the already-committed part
//! of its window as a known region. Committed pixels within `blend_band` of the
//! new area form the blend band; a band pixel keeps its committed label when it
//! is at least `blend_band / 2` away from the new area and takes the new
//! tile's label otherwise. Everything committed outside the band is copied
//! through unchanged.

use super::{check_condition, tile_seed, GenError, GeneratorBackend, KnownRegion};
use crate::instance::distance_transform_mask;
use crate::layout::{GenerationCondition, SemanticLayout};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionSpec {
    pub tile_size: usize,
    pub overlap: usize,
    pub target_width: usize,
    pub target_height: usize,
    pub blend_band: usize,
}

impl ExpansionSpec {
    pub fn new(target_width: usize, target_height: usize) -> Self {
        Self {
            tile_size: 768,
            overlap: 128,
            target_width,
            target_height,
            blend_band: 128,
        }
    }

    pub fn with_tile(mut self, tile_size: usize, overlap: usize) -> Self {
        self.tile_size = tile_size;
        self.overlap = overlap;
        self.blend_band = overlap;
        self
    }

    pub fn validate(&self) -> Result<(), GenError> {
        let fail = |m: String| Err(GenError::InvalidSpec(m));
        if self.overlap == 0 || self.overlap >= self.tile_size {
            return fail(format!(
                "overlap {} must be in (0, {})",
                self.overlap, self.tile_size
            ));
        }
        if self.target_width < self.tile_size || self.target_height < self.tile_size {
            return fail(format!(
                "target {}x{} is smaller than the {} px tile",
                self.target_width, self.target_height, self.tile_size
            ));
        }
        if self.blend_band > self.overlap {
            return fail(format!(
                "blend band {} exceeds overlap {}",
                self.blend_band, self.overlap
            ));
        }
        Ok(())
    }
}

/// Tile origins along one axis: steps of `tile - overlap`, with the last tile
/// flush against the far edge.
pub fn tile_positions(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    let step = tile - overlap;
    let mut out = vec![0];
    while out.last().unwrap() + tile < len {
        let next = out.last().unwrap() + step;
        out.push(next.min(len - tile));
    }
    out
}

/// A seam between column c-1 and c, or row r-1 and r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Seam {
    Column(usize),
    Row(usize),
}

/// Mean over seams of the fraction of pixel pairs straddling the seam whose
/// labels differ. An empty seam list scores 0.
pub fn seam_discontinuity(layout: &SemanticLayout, seams: &[Seam]) -> Result<f64, GenError> {
    let (w, h) = (layout.width(), layout.height());
    let labels = layout.labels();
    let mut total = 0.0;
    for &seam in seams {
        let frac = match seam {
            Seam::Column(c) => {
                if c == 0 || c >= w {
                    return Err(GenError::OutOfRange(seam));
                }
                let diff = (0..h)
                    .filter(|&y| labels[y * w + c - 1] != labels[y * w + c])
                    .count();
                diff as f64 / h as f64
            }
            Seam::Row(r) => {
                if r == 0 || r >= h {
                    return Err(GenError::OutOfRange(seam));
                }
                let diff = (0..w)
                    .filter(|&x| labels[(r - 1) * w + x] != labels[r * w + x])
                    .count();
                diff as f64 / w as f64
            }
        };
        total += frac;
    }
    if seams.is_empty() {
        Ok(0.0)
    } else {
        Ok(total / seams.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileRecord {
    pub index: usize,
    pub x: usize,
    pub y: usize,
    pub seed: u64,
}

/// Everything needed to audit an expansion after the fact.
#[derive(Debug, Clone)]
pub struct ExpansionTrace {
    pub layout: SemanticLayout,
    pub tiles: Vec<TileRecord>,
    /// Canvas labels after each tile was committed.
    pub snapshots: Vec<Vec<u8>>,
    /// Canvas indices of each tile's blend band.
    pub bands: Vec<Vec<u32>>,
    /// Label-switch lines and known-region frontiers, deduplicated.
    pub seams: Vec<Seam>,
}

/// Seams implied by the tile grid: for each boundary, the line where band
/// pixels switch from committed to new labels and the edge of the committed strip.
fn grid_seams(spec: &ExpansionSpec, xs: &[usize], ys: &[usize]) -> Vec<Seam> {
    let t = spec.tile_size;
    let switch = |strip: usize| {
        // first offset j in the strip with strip - j < band / 2
        let half = spec.blend_band as f64 / 2.0;
        (strip as f64 - half).floor() as usize + 1
    };
    let mut seams = Vec::new();
    for i in 1..xs.len() {
        let strip = xs[i - 1] + t - xs[i];
        if spec.blend_band > 0 {
            seams.push(Seam::Column(xs[i] + switch(strip).min(strip)));
        }
        seams.push(Seam::Column(xs[i] + strip));
    }
    for j in 1..ys.len() {
        let strip = ys[j - 1] + t - ys[j];
        if spec.blend_band > 0 {
            seams.push(Seam::Row(ys[j] + switch(strip).min(strip)));
        }
        seams.push(Seam::Row(ys[j] + strip));
    }
    seams.sort_unstable();
    seams.dedup();
    seams.retain(|s| match *s {
        Seam::Column(c) => c > 0 && c < spec.target_width,
        Seam::Row(r) => r > 0 && r < spec.target_height,
    });
    seams
}

fn compose(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    spec: &ExpansionSpec,
    outpaint: bool,
) -> Result<ExpansionTrace, GenError> {
    spec.validate()?;
    check_condition(backend, condition, outpaint)?;
    let (cw, ch, t) = (spec.target_width, spec.target_height, spec.tile_size);
    let xs = tile_positions(cw, t, spec.overlap);
    let ys = tile_positions(ch, t, spec.overlap);

    let mut canvas = vec![0u8; cw * ch];
    let mut committed = vec![false; cw * ch];
    let mut mpp = None;
    let mut tiles = Vec::new();
    let mut snapshots = Vec::new();
    let mut bands = Vec::new();

    for &ty in &ys {
        for &tx in &xs {
            let index = tiles.len();
            let seed = tile_seed(condition.seed, index);
            let cond = GenerationCondition {
                seed,
                ..condition.clone()
            };
            let mut known = KnownRegion {
                width: t,
                height: t,
                labels: vec![0; t * t],
                mask: vec![false; t * t],
            };
            for y in 0..t {
                for x in 0..t {
                    let c = (ty + y) * cw + tx + x;
                    known.mask[y * t + x] = committed[c];
                    known.labels[y * t + x] = canvas[c];
                }
            }
            let any_known = known.mask.iter().any(|&m| m);
            let tile = if outpaint && any_known {
                backend.generate_tile(&cond, t, t, Some(&known))?
            } else {
                backend.generate_tile(&cond, t, t, None)?
            };
            if tile.width() != t || tile.height() != t {
                return Err(GenError::BackendFailure(format!(
                    "backend returned {}x{} for a {t}x{t} tile",
                    tile.width(),
                    tile.height()
                )));
            }
            mpp.get_or_insert(tile.meters_per_pixel());

            // distance of each tile pixel to the new (uncommitted) area
            let fresh: Vec<bool> = known.mask.iter().map(|&m| !m).collect();
            let dist = distance_transform_mask(t, t, &fresh, 1.0);
            let band_w = spec.blend_band as f64;
            let mut band = Vec::new();
            let labels = tile.labels();
            for y in 0..t {
                for x in 0..t {
                    let i = y * t + x;
                    let c = (ty + y) * cw + tx + x;
                    if !known.mask[i] {
                        canvas[c] = labels[i];
                        committed[c] = true;
                        continue;
                    }
                    let d = dist.at_index(i);
                    if d <= band_w && spec.blend_band > 0 {
                        band.push(c as u32);
                        if d < band_w / 2.0 {
                            canvas[c] = labels[i];
                        }
                    }
                }
            }
            tiles.push(TileRecord {
                index,
                x: tx,
                y: ty,
                seed,
            });
            snapshots.push(canvas.clone());
            bands.push(band);
        }
    }

    let layout = SemanticLayout::new(cw, ch, canvas, mpp.unwrap_or(0.5))
        .map_err(|e| GenError::BackendFailure(e.to_string()))?;
    Ok(ExpansionTrace {
        layout,
        tiles,
        snapshots,
        bands,
        seams: grid_seams(spec, &xs, &ys),
    })
}

/// Expand with a full audit trail.
pub fn expand_traced(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    spec: &ExpansionSpec,
) -> Result<ExpansionTrace, GenError> {
    compose(backend, condition, spec, true)
}

pub fn expand(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    spec: &ExpansionSpec,
) -> Result<SemanticLayout, GenError> {
    Ok(expand_traced(backend, condition, spec)?.layout)
}

/// Baseline: the same tile grid and blend rule, but every tile is generated
/// without seeing its neighbors.
pub fn independent_tiling(
    backend: &dyn GeneratorBackend,
    condition: &GenerationCondition,
    spec: &ExpansionSpec,
) -> Result<ExpansionTrace, GenError> {
    compose(backend, condition, spec, false)
}
