//! Pipeline configuration, read from TOML. Only `seed` is required; relative
//! paths resolve against the working directory.

use super::PipelineError;
use crate::generate::{ExpansionSpec, ProceduralParams, RemoteConfig};
use crate::layout::ClassRatios;
use crate::placement::{PlacementOptions, PowellOptions, MAX_SCALE, MIN_SCALE};
use crate::planner::{LlmConfig, RuleConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    Procedural,
    Remote,
    Echo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    pub backend: GeneratorKind,
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    pub text: Option<String>,
    pub ratios: Option<ClassRatios>,
    pub procedural: ProceduralParams,
    pub remote: RemoteConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            backend: GeneratorKind::Procedural,
            width: 768,
            height: 768,
            meters_per_pixel: 0.5,
            text: None,
            ratios: None,
            procedural: ProceduralParams::default(),
            remote: RemoteConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    pub target_width: usize,
    pub target_height: usize,
    #[serde(default = "default_tile")]
    pub tile_size: usize,
    #[serde(default = "default_overlap")]
    pub overlap: usize,
    #[serde(default = "default_overlap")]
    pub blend_band: usize,
}

fn default_tile() -> usize {
    768
}

fn default_overlap() -> usize {
    128
}

impl ExpansionConfig {
    pub fn spec(&self) -> ExpansionSpec {
        ExpansionSpec {
            tile_size: self.tile_size,
            overlap: self.overlap,
            target_width: self.target_width,
            target_height: self.target_height,
            blend_band: self.blend_band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OsmConfig {
    pub path: PathBuf,
    #[serde(default = "default_tile")]
    pub size: usize,
    #[serde(default = "default_mpp")]
    pub meters_per_pixel: f64,
    /// Projection center; defaults to the mean node position.
    pub center_lat: Option<f64>,
    pub center_lon: Option<f64>,
}

fn default_mpp() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Rule,
    Llm,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub backend: PlannerKind,
    pub prompt: String,
    pub threshold: f64,
    pub max_rounds: u32,
    pub rules: RuleConfig,
    pub llm: LlmConfig,
    /// Recorded replies for the replay backend.
    pub replay: Option<PathBuf>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            backend: PlannerKind::Rule,
            prompt: "a residential district".into(),
            threshold: 0.05,
            max_rounds: 10,
            rules: RuleConfig::default(),
            llm: LlmConfig::default(),
            replay: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrievalConfig {
    pub catalog: PathBuf,
    /// Per-slot weights, normalized on use; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub k: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            catalog: PathBuf::from("fixtures/catalog/catalog.json"),
            weights: None,
            k: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub min_scale: f64,
    pub max_scale: f64,
    pub ftol: f64,
    pub xtol: f64,
    pub max_iters: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        let p = PowellOptions::default();
        Self {
            min_scale: MIN_SCALE,
            max_scale: MAX_SCALE,
            ftol: p.ftol,
            xtol: p.xtol,
            max_iters: p.max_iters,
        }
    }
}

impl PlacementConfig {
    pub fn options(&self) -> PlacementOptions {
        PlacementOptions {
            powell: PowellOptions {
                ftol: self.ftol,
                xtol: self.xtol,
                max_iters: self.max_iters,
                ..Default::default()
            },
            min_scale: self.min_scale,
            max_scale: self.max_scale,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScatterConfig {
    pub tree_density: f64,
    pub lamp_spacing_m: f64,
}

impl Default for ScatterConfig {
    fn default() -> Self {
        Self {
            tree_density: 1.0,
            lamp_spacing_m: 25.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub generator: GeneratorConfig,
    /// When present, the layout comes from tiled expansion.
    #[serde(default)]
    pub expansion: Option<ExpansionConfig>,
    /// When present, the layout comes from OSM instead of a generator.
    #[serde(default)]
    pub osm: Option<OsmConfig>,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub retrieval: RetrievalConfig,
    #[serde(default)]
    pub placement: PlacementConfig,
    #[serde(default)]
    pub scatter: ScatterConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn new(seed: u64, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            seed,
            output_dir: output_dir.into(),
            generator: GeneratorConfig::default(),
            expansion: None,
            osm: None,
            planner: PlannerConfig::default(),
            retrieval: RetrievalConfig::default(),
            placement: PlacementConfig::default(),
            scatter: ScatterConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let g = &self.generator;
        if g.width == 0 || g.height == 0 {
            return bad(format!("generator size {}x{}", g.width, g.height));
        }
        if !(g.meters_per_pixel.is_finite() && g.meters_per_pixel > 0.0) {
            return bad(format!("meters_per_pixel {}", g.meters_per_pixel));
        }
        let pc = &self.planner;
        if !(pc.threshold > 0.0 && pc.threshold < 1.0) {
            return bad(format!("planner threshold {} must be in (0, 1)", pc.threshold));
        }
        if pc.max_rounds == 0 {
            return bad("planner max_rounds must be at least 1".into());
        }
        if self.retrieval.k == 0 {
            return bad("retrieval k must be at least 1".into());
        }
        let pl = &self.placement;
        if !(pl.min_scale > 0.0 && pl.min_scale < pl.max_scale) {
            return bad(format!("scale bounds [{}, {}]", pl.min_scale, pl.max_scale));
        }
        if self.scatter.tree_density < 0.0 || self.scatter.lamp_spacing_m <= 0.0 {
            return bad("scatter densities must be non-negative and lamp spacing positive".into());
        }
        if let Some(e) = &self.expansion {
            e.spec().validate()?;
        }
        Ok(())
    }
}
