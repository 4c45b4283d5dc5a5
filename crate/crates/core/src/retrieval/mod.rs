//! Asset catalog, hierarchical pre-filter and weighted multi-modal similarity.
//!
//! Modality slots are ordered `[image, text aspect 0, text aspect 1, ...]`.
//! The image slot scores the best of an asset's rendered views against the
//! query's image vector; each text slot compares like aspects only.

mod catalog;
pub mod embed;
pub mod synth;

pub use catalog::{AssetMeta, Catalog, CatalogMeta, MAGIC, NORM_TOLERANCE, VERSION};
pub use embed::{PseudoEmbedder, Space, TextEmbedder};
pub use synth::{synthetic_catalog, SynthSpec};

use crate::instance::InstanceId;
use crate::planner::{InstancePlan, PrimaryFunction, SizeClass};
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("catalog header mismatch: {0}")]
    HeaderMismatch(String),
    #[error("asset {asset_id}: embedding slot {slot} is not unit norm")]
    NormViolation { asset_id: String, slot: usize },
    #[error("asset {0}: unknown enum value '{1}'")]
    UnknownEnum(String, String),
    #[error("asset {0}: {1}")]
    InvalidRecord(String, String),
    #[error("catalog metadata: {0}")]
    Metadata(String),
    #[error("catalog is empty")]
    EmptyCatalog,
    #[error("modality slots do not line up: {0}")]
    SlotMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("k must be at least 1")]
    InvalidK,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssetRecord {
    pub asset_id: String,
    pub function: PrimaryFunction,
    pub size_class: SizeClass,
    pub floors: u32,
    /// Footprint width (local x) and depth (local y) in meters.
    pub footprint_dims_m: [f64; 2],
    pub style: String,
    pub annotations: Vec<String>,
    pub mesh: Option<String>,
    pub view_embeddings: Vec<Vec<f32>>,
    pub text_embeddings: Vec<Vec<f32>>,
}

/// Convex weights over modality slots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct RetrievalWeights(Vec<f64>);

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl RetrievalWeights {
    /// Already-normalized weights.
    pub fn new(weights: Vec<f64>) -> Result<Self, RetrievalError> {
        if weights.is_empty() {
            return Err(RetrievalError::InvalidWeights("no slots".into()));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RetrievalError::InvalidWeights(format!("{weights:?} has a negative or non-finite entry")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(RetrievalError::InvalidWeights(format!("weights sum to {sum}")));
        }
        Ok(Self(weights))
    }

    /// Scale non-negative weights to sum to 1.
    pub fn normalized(raw: Vec<f64>) -> Result<Self, RetrievalError> {
        if raw.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(RetrievalError::InvalidWeights(format!("{raw:?} has a negative or non-finite entry")));
        }
        let sum: f64 = raw.iter().sum();
        if sum <= 0.0 {
            return Err(RetrievalError::InvalidWeights("weights sum to zero".into()));
        }
        Self::new(raw.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(slots: usize) -> Result<Self, RetrievalError> {
        Self::normalized(vec![1.0; slots])
    }

    /// Comma-separated decimals, normalized.
    pub fn parse(text: &str) -> Result<Self, RetrievalError> {
        let raw = text
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|e| RetrievalError::InvalidWeights(format!("'{s}': {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Self::normalized(raw)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for RetrievalWeights {
    type Error = RetrievalError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<RetrievalWeights> for Vec<f64> {
    fn from(w: RetrievalWeights) -> Self {
        w.0
    }
}

/// Query vectors, one per modality slot; slot 0 is the image slot.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub slots: Vec<Vec<f64>>,
}

impl QueryEmbedding {
    /// Embed a plan's fields with the same aspect texts the library uses.
    pub fn from_plan(plan: &InstancePlan, d_img: usize, d_txt: usize, embedder: &dyn TextEmbedder) -> Self {
        let (f, s, st, sz) = (
            plan.primary_function,
            plan.secondary_function.as_str(),
            plan.style.as_str(),
            plan.size_class,
        );
        let mut slots = vec![embedder.embed(&synth::image_caption(f, s, st, sz), Space::Image, d_img)];
        for text in synth::aspect_texts(f, s, st, sz) {
            slots.push(embedder.embed(&text, Space::Text, d_txt));
        }
        Self { slots }
    }
}

/// Cosine of two vectors, clamped to [-1, 1].
pub fn cosine(a: &[f32], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let x = x as f64;
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Per-slot similarities: max over views for the image slot, then one per text aspect.
pub fn slot_similarities(asset: &AssetRecord, query: &QueryEmbedding) -> Result<Vec<f64>, RetrievalError> {
    let m = 1 + asset.text_embeddings.len();
    if query.slots.len() != m {
        return Err(RetrievalError::SlotMismatch(format!(
            "asset {} has {m} slots, query has {}",
            asset.asset_id,
            query.slots.len()
        )));
    }
    let dim_ok = |stored: &[f32], q: &[f64]| stored.len() == q.len();
    if asset.view_embeddings.iter().any(|v| !dim_ok(v, &query.slots[0]))
        || asset
            .text_embeddings
            .iter()
            .zip(&query.slots[1..])
            .any(|(v, q)| !dim_ok(v, q))
    {
        return Err(RetrievalError::SlotMismatch(format!(
            "dimension mismatch against asset {}",
            asset.asset_id
        )));
    }
    let image = asset
        .view_embeddings
        .iter()
        .map(|v| cosine(v, &query.slots[0]))
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::with_capacity(m);
    out.push(image);
    for (v, q) in asset.text_embeddings.iter().zip(&query.slots[1..]) {
        out.push(cosine(v, q));
    }
    Ok(out)
}

/// Weighted sum of per-slot similarities.
pub fn similarity(
    asset: &AssetRecord,
    query: &QueryEmbedding,
    weights: &RetrievalWeights,
) -> Result<f64, RetrievalError> {
    let sims = slot_similarities(asset, query)?;
    if weights.len() != sims.len() {
        return Err(RetrievalError::SlotMismatch(format!(
            "{} weights for {} slots",
            weights.len(),
            sims.len()
        )));
    }
    Ok(sims.iter().zip(weights.as_slice()).map(|(s, w)| s * w).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterResult {
    /// Indices into the catalog's asset list, in catalog order.
    pub candidates: Vec<usize>,
    pub relaxed_function: bool,
    pub relaxed_size: bool,
}

/// Narrow by function, then by size class, skipping any level that would
/// leave nothing.
pub fn tree_filter(
    catalog: &Catalog,
    function: PrimaryFunction,
    size_class: SizeClass,
) -> Result<FilterResult, RetrievalError> {
    if catalog.is_empty() {
        return Err(RetrievalError::EmptyCatalog);
    }
    let all: Vec<usize> = (0..catalog.len()).collect();
    let by_fn: Vec<usize> = all
        .iter()
        .copied()
        .filter(|&i| catalog.assets[i].function == function)
        .collect();
    let relaxed_function = by_fn.is_empty();
    let level1 = if relaxed_function { all } else { by_fn };
    let by_size: Vec<usize> = level1
        .iter()
        .copied()
        .filter(|&i| catalog.assets[i].size_class == size_class)
        .collect();
    let relaxed_size = by_size.is_empty();
    Ok(FilterResult {
        candidates: if relaxed_size { level1 } else { by_size },
        relaxed_function,
        relaxed_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub asset_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Retrieval {
    pub id: InstanceId,
    pub ranked: Vec<Ranked>,
    pub relaxed_function: bool,
    pub relaxed_size: bool,
}

impl Retrieval {
    pub fn best(&self) -> Option<&Ranked> {
        self.ranked.first()
    }
}

/// Filter, score and return the top `k` assets, best first; equal scores
/// order by ascending asset id.
pub fn retrieve(
    catalog: &Catalog,
    function: PrimaryFunction,
    size_class: SizeClass,
    query: &QueryEmbedding,
    weights: &RetrievalWeights,
    k: usize,
) -> Result<(Vec<Ranked>, FilterResult), RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let filter = tree_filter(catalog, function, size_class)?;
    let mut ranked = filter
        .candidates
        .iter()
        .map(|&i| {
            let a = &catalog.assets[i];
            Ok(Ranked {
                asset_id: a.asset_id.clone(),
                score: similarity(a, query, weights)?,
            })
        })
        .collect::<Result<Vec<_>, RetrievalError>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.asset_id.cmp(&b.asset_id)));
    ranked.truncate(k);
    Ok((ranked, filter))
}

/// Retrieve for one plan, embedding it with `embedder`.
pub fn retrieve_for_plan(
    catalog: &Catalog,
    plan: &InstancePlan,
    weights: &RetrievalWeights,
    k: usize,
    embedder: &dyn TextEmbedder,
) -> Result<Retrieval, RetrievalError> {
    let query = QueryEmbedding::from_plan(plan, catalog.d_img, catalog.d_txt, embedder);
    let (ranked, filter) = retrieve(catalog, plan.primary_function, plan.size_class, &query, weights, k)?;
    Ok(Retrieval {
        id: plan.id,
        ranked,
        relaxed_function: filter.relaxed_function,
        relaxed_size: filter.relaxed_size,
    })
}

pub fn write_retrievals<'a, W: Write>(
    mut out: W,
    items: impl IntoIterator<Item = &'a Retrieval>,
) -> std::io::Result<()> {
    for r in items {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_retrievals<R: BufRead>(input: R) -> Result<Vec<Retrieval>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("retrieval line {}: {e}", i + 1))?);
    }
    Ok(out)
}
