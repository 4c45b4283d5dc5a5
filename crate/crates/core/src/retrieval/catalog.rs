//! On-disk asset catalog: a JSON metadata document plus a packed binary of
//! embeddings.
//!
//! Binary layout, all little-endian:
//!
//! | field | type |
//! |---|---|
//! | magic `CCAE` | 4 bytes |
//! | version (1) | u32 |
//! | d_img, d_txt, n_assets | u32 ×3 |
//! | per asset: n_views, n_texts, byte offset of its vectors | u32, u32, u64 |
//! | vectors: each asset's views then its text vectors | f32 |

use super::{AssetRecord, RetrievalError};
use crate::planner::{PrimaryFunction, SizeClass};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const MAGIC: &[u8; 4] = b"CCAE";
pub const VERSION: u32 = 1;
pub const NORM_TOLERANCE: f64 = 1e-6;
const HEADER_FIXED: usize = 4 + 4 * 4;
const HEADER_PER_ASSET: usize = 4 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssetMeta {
    pub asset_id: String,
    pub function: String,
    pub size_class: String,
    pub floors: u32,
    pub footprint_dims_m: [f64; 2],
    pub style: String,
    pub annotations: Vec<String>,
    /// Mesh path relative to the catalog, if the library ships geometry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogMeta {
    pub version: u32,
    pub d_img: usize,
    pub d_txt: usize,
    /// Embedding binary, relative to the metadata file.
    pub embeddings: String,
    pub assets: Vec<AssetMeta>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Catalog {
    pub d_img: usize,
    pub d_txt: usize,
    pub assets: Vec<AssetRecord>,
}

fn mismatch(msg: impl Into<String>) -> RetrievalError {
    RetrievalError::HeaderMismatch(msg.into())
}

fn u32_at(b: &[u8], at: usize) -> Result<u32, RetrievalError> {
    b.get(at..at + 4)
        .map(|s| u32::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| mismatch("binary shorter than its header"))
}

fn u64_at(b: &[u8], at: usize) -> Result<u64, RetrievalError> {
    b.get(at..at + 8)
        .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| mismatch("binary shorter than its header"))
}

fn check_norm(asset: &str, slot: usize, v: &[f32]) -> Result<(), RetrievalError> {
    let n = v.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if (n - 1.0).abs() > NORM_TOLERANCE {
        return Err(RetrievalError::NormViolation {
            asset_id: asset.to_string(),
            slot,
        });
    }
    Ok(())
}

impl Catalog {
    pub fn len(&self) -> usize {
        self.assets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assets.is_empty()
    }

    /// Number of stored vectors across all assets.
    pub fn total_vectors(&self) -> usize {
        self.assets
            .iter()
            .map(|a| a.view_embeddings.len() + a.text_embeddings.len())
            .sum()
    }

    pub fn get(&self, asset_id: &str) -> Option<&AssetRecord> {
        self.assets.iter().find(|a| a.asset_id == asset_id)
    }

    /// Check every record invariant.
    pub fn validate(&self) -> Result<(), RetrievalError> {
        for a in &self.assets {
            if a.view_embeddings.is_empty() {
                return Err(RetrievalError::InvalidRecord(a.asset_id.clone(), "no view embeddings".into()));
            }
            if a.text_embeddings.len() != a.annotations.len() {
                return Err(mismatch(format!(
                    "{}: {} text vectors for {} annotations",
                    a.asset_id,
                    a.text_embeddings.len(),
                    a.annotations.len()
                )));
            }
            if !(a.footprint_dims_m[0] > 0.0 && a.footprint_dims_m[1] > 0.0) {
                return Err(RetrievalError::InvalidRecord(
                    a.asset_id.clone(),
                    "footprint dimensions must be positive".into(),
                ));
            }
            for (slot, v) in a.view_embeddings.iter().enumerate() {
                if v.len() != self.d_img {
                    return Err(mismatch(format!("{}: view {slot} has dimension {}", a.asset_id, v.len())));
                }
                check_norm(&a.asset_id, slot, v)?;
            }
            for (i, v) in a.text_embeddings.iter().enumerate() {
                let slot = a.view_embeddings.len() + i;
                if v.len() != self.d_txt {
                    return Err(mismatch(format!("{}: text {i} has dimension {}", a.asset_id, v.len())));
                }
                check_norm(&a.asset_id, slot, v)?;
            }
        }
        let mut ids: Vec<&str> = self.assets.iter().map(|a| a.asset_id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(RetrievalError::InvalidRecord(w[0].to_string(), "duplicate asset id".into()));
        }
        Ok(())
    }

    /// Pack the embeddings into the binary format.
    pub fn embedding_bytes(&self) -> Vec<u8> {
        let n = self.assets.len();
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        for v in [VERSION, self.d_img as u32, self.d_txt as u32, n as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let mut offset = (HEADER_FIXED + n * HEADER_PER_ASSET) as u64;
        for a in &self.assets {
            out.extend_from_slice(&(a.view_embeddings.len() as u32).to_le_bytes());
            out.extend_from_slice(&(a.text_embeddings.len() as u32).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += ((a.view_embeddings.len() * self.d_img + a.text_embeddings.len() * self.d_txt) * 4) as u64;
        }
        for a in &self.assets {
            for v in a.view_embeddings.iter().chain(&a.text_embeddings) {
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn meta(&self, embeddings: &str) -> CatalogMeta {
        CatalogMeta {
            version: VERSION,
            d_img: self.d_img,
            d_txt: self.d_txt,
            embeddings: embeddings.to_string(),
            assets: self
                .assets
                .iter()
                .map(|a| AssetMeta {
                    asset_id: a.asset_id.clone(),
                    function: a.function.name().to_string(),
                    size_class: a.size_class.name().to_string(),
                    floors: a.floors,
                    footprint_dims_m: a.footprint_dims_m,
                    style: a.style.clone(),
                    annotations: a.annotations.clone(),
                    mesh: a.mesh.clone(),
                })
                .collect(),
        }
    }

    /// Write `catalog.json` and `embeddings.bin` into `dir`; returns the metadata path.
    pub fn save(&self, dir: &Path) -> Result<PathBuf, RetrievalError> {
        std::fs::create_dir_all(dir)?;
        let meta_path = dir.join("catalog.json");
        let meta = serde_json::to_string_pretty(&self.meta("embeddings.bin"))
            .map_err(|e| RetrievalError::Metadata(e.to_string()))?;
        std::fs::write(&meta_path, meta + "\n")?;
        std::fs::write(dir.join("embeddings.bin"), self.embedding_bytes())?;
        Ok(meta_path)
    }

    /// Assemble a catalog from parsed metadata and the embedding binary.
    pub fn from_parts(meta: CatalogMeta, bin: &[u8]) -> Result<Self, RetrievalError> {
        if meta.version != VERSION {
            return Err(mismatch(format!("unsupported catalog version {}", meta.version)));
        }
        if bin.get(..4) != Some(MAGIC.as_slice()) {
            return Err(mismatch("bad magic"));
        }
        let version = u32_at(bin, 4)?;
        let d_img = u32_at(bin, 8)? as usize;
        let d_txt = u32_at(bin, 12)? as usize;
        let n = u32_at(bin, 16)? as usize;
        if version != VERSION || d_img != meta.d_img || d_txt != meta.d_txt || n != meta.assets.len() {
            return Err(mismatch(format!(
                "binary header (v{version}, d_img {d_img}, d_txt {d_txt}, {n} assets) disagrees with metadata \
                 (v{}, d_img {}, d_txt {}, {} assets)",
                meta.version,
                meta.d_img,
                meta.d_txt,
                meta.assets.len()
            )));
        }
        let mut expected = (HEADER_FIXED + n * HEADER_PER_ASSET) as u64;
        let mut assets = Vec::with_capacity(n);
        for (i, m) in meta.assets.into_iter().enumerate() {
            let at = HEADER_FIXED + i * HEADER_PER_ASSET;
            let n_views = u32_at(bin, at)? as usize;
            let n_texts = u32_at(bin, at + 4)? as usize;
            let offset = u64_at(bin, at + 8)?;
            if offset != expected {
                return Err(mismatch(format!("{}: offset {offset}, expected {expected}", m.asset_id)));
            }
            let len = (n_views * d_img + n_texts * d_txt) * 4;
            let start = offset as usize;
            let data = bin
                .get(start..start + len)
                .ok_or_else(|| mismatch(format!("{}: vectors run past the end of the binary", m.asset_id)))?;
            expected += len as u64;
            let floats: Vec<f32> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let (views, texts) = floats.split_at(n_views * d_img);
            let function: PrimaryFunction = m
                .function
                .parse()
                .map_err(|_| RetrievalError::UnknownEnum(m.asset_id.clone(), m.function.clone()))?;
            let size_class: SizeClass = m
                .size_class
                .parse()
                .map_err(|_| RetrievalError::UnknownEnum(m.asset_id.clone(), m.size_class.clone()))?;
            assets.push(AssetRecord {
                asset_id: m.asset_id,
                function,
                size_class,
                floors: m.floors,
                footprint_dims_m: m.footprint_dims_m,
                style: m.style,
                annotations: m.annotations,
                mesh: m.mesh,
                view_embeddings: views.chunks_exact(d_img.max(1)).map(<[f32]>::to_vec).collect(),
                text_embeddings: texts.chunks_exact(d_txt.max(1)).map(<[f32]>::to_vec).collect(),
            });
        }
        if expected as usize != bin.len() {
            return Err(mismatch(format!(
                "binary is {} bytes, header describes {expected}",
                bin.len()
            )));
        }
        let catalog = Catalog {
            d_img,
            d_txt,
            assets,
        };
        catalog.validate()?;
        Ok(catalog)
    }

    /// Load from a metadata file; the binary path is resolved next to it.
    pub fn load(path: &Path) -> Result<Self, RetrievalError> {
        let text = std::fs::read_to_string(path)?;
        let meta: CatalogMeta = serde_json::from_str(&text).map_err(|e| RetrievalError::Metadata(e.to_string()))?;
        let bin_path = path.parent().unwrap_or(Path::new(".")).join(&meta.embeddings);
        let bin = std::fs::read(&bin_path)?;
        Self::from_parts(meta, &bin)
    }
}
