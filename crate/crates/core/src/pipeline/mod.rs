//! End-to-end orchestration. Each stage reads the previous stage's files from
//! the output directory and writes its own, so any stage can be rerun alone.
//!
//! | stage | reads | writes |
//! |---|---|---|
//! | generate / expand / ingest | | `layout.png`, `layout.ratios`, `layout.meta.json` |
//! | analyze | layout | `dossiers.jsonl` |
//! | plan | dossiers | `plans.jsonl`, `planning.json` |
//! | retrieve | plans, catalog | `retrievals.jsonl` |
//! | place | layout, retrievals, catalog | `placements.jsonl` |
//! | export | all of the above | `manifest.json` |
//!
//! Every stage also merges its section into `run_report.json` and its wall
//! time into `timings.json`. Only `timings.json` varies between identical runs.

pub mod config;
pub mod metrics;

pub use config::{
    ExpansionConfig, GeneratorConfig, GeneratorKind, OsmConfig, PipelineConfig, PlacementConfig, PlannerConfig,
    PlannerKind, RetrievalConfig, ScatterConfig,
};

use crate::generate::{
    expand_traced, generate, EchoBackend, GenError, GeneratorBackend, ProceduralBackend, RemoteBackend,
};
use crate::instance::{build_dossier, isolate_instances, read_dossiers, write_dossiers, InstanceDossier, InstanceId};
use crate::layout::{decode_png, encode_png, ratio_line, ClassRatios, GenerationCondition, LandClass, SemanticLayout};
use crate::osm::{parse_osm, rasterize, OsmError, Projection, RasterWindow};
use crate::placement::{
    place_asset, resolve_collisions, Fitted, Mask, Placement, PlacementError, PlacementParams,
};
use crate::planner::{
    read_plans, run_until_converged, write_plans, BackendError, GlobalPrompt, LlmBackend, PlanError, PlannerBackend,
    ReplayBackend, RuleBackend,
};
use crate::retrieval::{read_retrievals, retrieve_for_plan, write_retrievals, Catalog, PseudoEmbedder, RetrievalError, RetrievalWeights};
use crate::scene::{build_manifest, write_manifest, LayoutRef, PropScatterSpec, SceneError};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const LAYOUT_PNG: &str = "layout.png";
pub const LAYOUT_RATIOS: &str = "layout.ratios";
pub const LAYOUT_META: &str = "layout.meta.json";
pub const DOSSIERS: &str = "dossiers.jsonl";
pub const PLANS: &str = "plans.jsonl";
pub const PLANNING: &str = "planning.json";
pub const RETRIEVALS: &str = "retrievals.jsonl";
pub const PLACEMENTS: &str = "placements.jsonl";
pub const MANIFEST: &str = "manifest.json";
pub const REPORT: &str = "run_report.json";
pub const TIMINGS: &str = "timings.json";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad input: {0}")]
    Input(String),
    #[error(transparent)]
    Osm(#[from] OsmError),
    #[error(transparent)]
    Generation(#[from] GenError),
    #[error(transparent)]
    Planning(#[from] PlanError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error(transparent)]
    Placement(#[from] PlacementError),
    #[error(transparent)]
    Scene(#[from] SceneError),
}

impl PipelineError {
    /// Process exit code; one per error family.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Io { .. } => 3,
            Self::Input(_) | Self::Osm(_) => 4,
            Self::Generation(_) => 5,
            Self::Planning(_) => 6,
            Self::Retrieval(_) => 7,
            Self::Placement(_) => 8,
            Self::Scene(_) => 9,
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            Self::Config(_) => "config",
            Self::Io { .. } => "io",
            Self::Input(_) | Self::Osm(_) => "input",
            Self::Generation(_) => "generation",
            Self::Planning(_) => "planning",
            Self::Retrieval(_) => "retrieval",
            Self::Placement(_) => "placement",
            Self::Scene(_) => "scene",
        }
    }

    /// Finer-grained name, e.g. `Timeout` for a timed-out planner backend.
    pub fn kind(&self) -> String {
        match self {
            Self::Planning(PlanError::BackendFailure { source, .. }) => match source {
                BackendError::Timeout(_) => "Timeout",
                BackendError::AuthFailure(_) => "AuthFailure",
                BackendError::MalformedReply(_) => "MalformedReply",
                BackendError::Transport(_) => "Transport",
            }
            .to_string(),
            Self::Planning(e) => variant_name(e),
            Self::Generation(e) => variant_name(e),
            Self::Retrieval(e) => variant_name(e),
            Self::Placement(e) => variant_name(e),
            Self::Scene(e) => variant_name(e),
            Self::Osm(e) => variant_name(e),
            _ => self.family().to_string(),
        }
    }
}

fn variant_name(e: &impl std::fmt::Debug) -> String {
    let s = format!("{e:?}");
    s.split(|c: char| !c.is_alphanumeric()).next().unwrap_or_default().to_string()
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Seed for a named stage, derived from the run seed as the first eight
/// little-endian bytes of SHA-256("citycraft-stage" ‖ seed_le ‖ name).
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"citycraft-stage");
    h.update(seed.to_le_bytes());
    h.update(stage.as_bytes());
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}

/// Write through a temporary file in the same directory, then rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    std::fs::rename(&tmp, path).map_err(io_err(path))
}

fn json_bytes(v: &impl Serialize) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn read(path: &Path) -> Result<Vec<u8>, PipelineError> {
    std::fs::read(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutMeta {
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
    /// Generator backend id, `expand:<id>` or `osm`.
    pub source: String,
    pub seed: Option<u64>,
    pub target_ratios: Option<ClassRatios>,
    pub text: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportedError {
    pub stage: String,
    pub family: String,
    pub kind: String,
    pub message: String,
}

/// Machine-readable summary merged across stages.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: Option<u64>,
    pub stages: BTreeMap<String, Value>,
    /// Warnings per stage; rerunning a stage replaces its list.
    pub warnings: BTreeMap<String, Vec<String>>,
    pub error: Option<ReportedError>,
}

impl RunReport {
    pub fn load(out: &Path) -> Result<Self, PipelineError> {
        let path = out.join(REPORT);
        if !path.exists() {
            return Ok(Self::default());
        }
        serde_json::from_slice(&read(&path)?).map_err(|e| PipelineError::Input(format!("{}: {e}", path.display())))
    }

    pub fn all_warnings(&self) -> impl Iterator<Item = &String> {
        self.warnings.values().flatten()
    }
}

/// What a stage hands back to the report.
#[derive(Debug, Clone, Default)]
pub struct StageOutcome {
    pub details: Value,
    pub warnings: Vec<String>,
}

/// Stage context: the config, resolved output directory and stage seeds.
pub struct Pipeline {
    pub config: PipelineConfig,
}

impl Pipeline {
    pub fn new(config: PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn out(&self) -> &Path {
        &self.config.output_dir
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out().join(name)
    }

    /// Run `body` as stage `name`, recording its outcome, warnings and time.
    pub fn run_stage(
        &self,
        name: &str,
        outputs: &[&str],
        body: impl FnOnce(&Self) -> Result<StageOutcome, PipelineError>,
    ) -> Result<StageOutcome, PipelineError> {
        let out = self.out();
        std::fs::create_dir_all(out).map_err(io_err(out))?;
        let started = Instant::now();
        let result = body(self);
        let elapsed = started.elapsed().as_secs_f64();

        let mut report = RunReport::load(out)?;
        report.seed = Some(self.config.seed);
        match &result {
            Ok(o) => {
                report.stages.insert(name.to_string(), o.details.clone());
                report.warnings.insert(name.to_string(), o.warnings.clone());
                report.warnings.retain(|_, w| !w.is_empty());
                if report.error.as_ref().is_some_and(|e| e.stage == name) {
                    report.error = None;
                }
            }
            Err(e) => {
                // a failed stage leaves none of its outputs behind
                for f in outputs {
                    let _ = std::fs::remove_file(self.path(f));
                }
                report.stages.remove(name);
                report.warnings.remove(name);
                report.error = Some(ReportedError {
                    stage: name.to_string(),
                    family: e.family().to_string(),
                    kind: e.kind(),
                    message: e.to_string(),
                });
            }
        }
        write_atomic(&out.join(REPORT), &json_bytes(&report))?;

        let tpath = out.join(TIMINGS);
        let mut timings: BTreeMap<String, f64> = if tpath.exists() {
            serde_json::from_slice(&read(&tpath)?).unwrap_or_default()
        } else {
            BTreeMap::new()
        };
        timings.insert(name.to_string(), elapsed);
        write_atomic(&tpath, &json_bytes(&timings))?;
        result
    }

    fn write_layout(&self, layout: &SemanticLayout, meta: &LayoutMeta) -> Result<Value, PipelineError> {
        let png = encode_png(layout);
        write_atomic(&self.path(LAYOUT_PNG), &png)?;
        let ratios = layout.ratios();
        write_atomic(&self.path(LAYOUT_RATIOS), format!("{}\n", ratio_line(&ratios)).as_bytes())?;
        write_atomic(&self.path(LAYOUT_META), &json_bytes(meta))?;
        let named: BTreeMap<&str, f64> = LandClass::ALL.iter().map(|c| (c.name(), ratios.get(*c))).collect();
        Ok(json!({
            "width": layout.width(),
            "height": layout.height(),
            "source": meta.source,
            "ratios": named,
        }))
    }

    pub fn load_layout(&self) -> Result<(SemanticLayout, Vec<u8>), PipelineError> {
        let meta: LayoutMeta = serde_json::from_slice(&read(&self.path(LAYOUT_META))?)
            .map_err(|e| PipelineError::Input(format!("{LAYOUT_META}: {e}")))?;
        let png = read(&self.path(LAYOUT_PNG))?;
        let layout = decode_png(&png, meta.meters_per_pixel).map_err(|e| PipelineError::Input(format!("{LAYOUT_PNG}: {e}")))?;
        if (layout.width(), layout.height()) != (meta.width, meta.height) {
            return Err(PipelineError::Input(format!(
                "{LAYOUT_PNG} is {}x{}, metadata says {}x{}",
                layout.width(),
                layout.height(),
                meta.width,
                meta.height
            )));
        }
        Ok((layout, png))
    }

    fn generator(&self) -> Box<dyn GeneratorBackend> {
        let g = &self.config.generator;
        match g.backend {
            GeneratorKind::Procedural => {
                let mut params = g.procedural.clone();
                params.meters_per_pixel = g.meters_per_pixel;
                Box::new(ProceduralBackend::new(params))
            }
            GeneratorKind::Remote => {
                let mut rc = g.remote.clone();
                rc.meters_per_pixel = g.meters_per_pixel;
                Box::new(RemoteBackend::new(rc))
            }
            GeneratorKind::Echo => Box::new(EchoBackend::new(g.meters_per_pixel)),
        }
    }

    fn condition(&self) -> GenerationCondition {
        let g = &self.config.generator;
        let mut c = GenerationCondition::unconditional(derive_seed(self.config.seed, "generate"));
        if let Some(r) = g.ratios {
            c = c.with_ratios(r);
        }
        if let Some(t) = &g.text {
            c = c.with_text(t.clone());
        }
        c
    }

    pub fn stage_generate(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("generate", &[LAYOUT_PNG, LAYOUT_RATIOS, LAYOUT_META], |p| {
            let g = &p.config.generator;
            let backend = p.generator();
            let cond = p.condition();
            let layout = generate(backend.as_ref(), &cond, g.width, g.height)?;
            let meta = LayoutMeta {
                width: layout.width(),
                height: layout.height(),
                meters_per_pixel: layout.meters_per_pixel(),
                source: backend.id().to_string(),
                seed: Some(cond.seed),
                target_ratios: cond.ratios,
                text: cond.text.clone(),
            };
            Ok(StageOutcome {
                details: p.write_layout(&layout, &meta)?,
                warnings: vec![],
            })
        })
    }

    pub fn stage_expand(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("expand", &[LAYOUT_PNG, LAYOUT_RATIOS, LAYOUT_META], |p| {
            let spec = p
                .config
                .expansion
                .as_ref()
                .ok_or_else(|| PipelineError::Config("expansion settings missing".into()))?
                .spec();
            let backend = p.generator();
            let cond = p.condition();
            let trace = expand_traced(backend.as_ref(), &cond, &spec)?;
            let meta = LayoutMeta {
                width: trace.layout.width(),
                height: trace.layout.height(),
                meters_per_pixel: trace.layout.meters_per_pixel(),
                source: format!("expand:{}", backend.id()),
                seed: Some(cond.seed),
                target_ratios: cond.ratios,
                text: cond.text.clone(),
            };
            let mut details = p.write_layout(&trace.layout, &meta)?;
            details["tiles"] = json!(trace.tiles.len());
            details["seam_discontinuity"] =
                json!(crate::generate::seam_discontinuity(&trace.layout, &trace.seams)?);
            Ok(StageOutcome {
                details,
                warnings: vec![],
            })
        })
    }

    pub fn stage_ingest(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("ingest", &[LAYOUT_PNG, LAYOUT_RATIOS, LAYOUT_META], |p| {
            let osm = p
                .config
                .osm
                .as_ref()
                .ok_or_else(|| PipelineError::Config("osm settings missing".into()))?;
            let doc = parse_osm(&read(&osm.path)?)?;
            let (lat, lon) = match (osm.center_lat, osm.center_lon) {
                (Some(a), Some(b)) => (a, b),
                _ => doc
                    .center()
                    .ok_or_else(|| PipelineError::Input("OSM document has no nodes".into()))?,
            };
            let features = doc.features(&Projection::new(lat, lon));
            let layout = rasterize(&features, &RasterWindow::centered(osm.size, osm.meters_per_pixel))?;
            let meta = LayoutMeta {
                width: layout.width(),
                height: layout.height(),
                meters_per_pixel: layout.meters_per_pixel(),
                source: "osm".into(),
                seed: None,
                target_ratios: None,
                text: None,
            };
            let mut details = p.write_layout(&layout, &meta)?;
            details["features"] = json!(features.len());
            Ok(StageOutcome {
                details,
                warnings: vec![],
            })
        })
    }

    /// Produce the layout from whichever source the config selects.
    pub fn stage_layout(&self) -> Result<StageOutcome, PipelineError> {
        if self.config.osm.is_some() {
            self.stage_ingest()
        } else if self.config.expansion.is_some() {
            self.stage_expand()
        } else {
            self.stage_generate()
        }
    }

    fn load_dossiers(&self) -> Result<BTreeMap<InstanceId, InstanceDossier>, PipelineError> {
        let path = self.path(DOSSIERS);
        let f = std::fs::File::open(&path).map_err(io_err(&path))?;
        read_dossiers(BufReader::new(f)).map_err(|e| PipelineError::Input(format!("{DOSSIERS}: {e}")))
    }

    pub fn stage_analyze(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("analyze", &[DOSSIERS], |p| {
            let (layout, _) = p.load_layout()?;
            let instances = isolate_instances(&layout);
            let dossiers = build_dossier(&layout, &instances);
            let mut buf = Vec::new();
            write_dossiers(&mut buf, dossiers.values()).map_err(|e| PipelineError::Input(e.to_string()))?;
            write_atomic(&p.path(DOSSIERS), &buf)?;
            let mut per_class: BTreeMap<&str, usize> = BTreeMap::new();
            for id in dossiers.keys() {
                *per_class.entry(id.class.name()).or_default() += 1;
            }
            Ok(StageOutcome {
                details: json!({ "instances": dossiers.len(), "per_class": per_class }),
                warnings: vec![],
            })
        })
    }

    fn planner(&self) -> Result<Box<dyn PlannerBackend>, PipelineError> {
        let pc = &self.config.planner;
        Ok(match pc.backend {
            PlannerKind::Rule => {
                let mut rc = pc.rules.clone();
                rc.seed = derive_seed(self.config.seed, "planner");
                Box::new(RuleBackend::new(rc))
            }
            PlannerKind::Llm => Box::new(
                LlmBackend::new(pc.llm.clone())
                    .map_err(|e| PipelineError::Config(format!("planner recording file: {e}")))?,
            ),
            PlannerKind::Replay => {
                let path = pc
                    .replay
                    .as_ref()
                    .ok_or_else(|| PipelineError::Config("planner.replay path missing".into()))?;
                Box::new(ReplayBackend::from_path(path).map_err(PipelineError::Input)?)
            }
        })
    }

    pub fn stage_plan(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("plan", &[PLANS, PLANNING], |p| {
            let pc = &p.config.planner;
            let dossiers = p.load_dossiers()?;
            let prompt = GlobalPrompt::new(pc.prompt.clone())?;
            let backend = p.planner()?;
            let outcome = run_until_converged(&dossiers, &prompt, backend.as_ref(), pc.threshold, pc.max_rounds)?;
            let state = &outcome.state;
            let mut buf = Vec::new();
            write_plans(&mut buf, state.plans.values()).map_err(io_err(&p.path(PLANS)))?;
            write_atomic(&p.path(PLANS), &buf)?;
            let history: Vec<Value> = state
                .change_history
                .iter()
                .map(|r| json!({ "round": r.round, "changes": r.changes, "total": r.total, "ratio": r.ratio() }))
                .collect();
            let planning = json!({
                "backend": backend.id(),
                "prompt": pc.prompt,
                "rounds": state.round,
                "converged": outcome.converged,
                "change_history": history,
            });
            write_atomic(&p.path(PLANNING), &json_bytes(&planning))?;
            let mut warnings = vec![];
            if !outcome.converged {
                warnings.push(format!(
                    "planning did not converge within {} rounds (last change ratio {:.3})",
                    pc.max_rounds,
                    state.last_round().map(|r| r.ratio()).unwrap_or(0.0)
                ));
            }
            let shares = if state.plans.is_empty() {
                BTreeMap::new()
            } else {
                crate::planner::function_distribution(state)?
            };
            Ok(StageOutcome {
                details: json!({
                    "plans": state.plans.len(),
                    "rounds": state.round,
                    "converged": outcome.converged,
                    "function_shares": shares,
                }),
                warnings,
            })
        })
    }

    fn load_catalog(&self) -> Result<Catalog, PipelineError> {
        Ok(Catalog::load(&self.config.retrieval.catalog)?)
    }

    fn weights(&self, catalog: &Catalog) -> Result<RetrievalWeights, PipelineError> {
        let slots = 1 + catalog.assets.first().map_or(0, |a| a.text_embeddings.len());
        Ok(match &self.config.retrieval.weights {
            Some(w) => RetrievalWeights::normalized(w.clone())?,
            None => RetrievalWeights::uniform(slots)?,
        })
    }

    pub fn stage_retrieve(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("retrieve", &[RETRIEVALS], |p| {
            let path = p.path(PLANS);
            let f = std::fs::File::open(&path).map_err(io_err(&path))?;
            let plans = read_plans(BufReader::new(f)).map_err(PipelineError::Input)?;
            let catalog = p.load_catalog()?;
            let weights = p.weights(&catalog)?;
            let k = p.config.retrieval.k;
            let results = plans
                .values()
                .collect::<Vec<_>>()
                .par_iter()
                .map(|plan| retrieve_for_plan(&catalog, plan, &weights, k, &PseudoEmbedder))
                .collect::<Result<Vec<_>, _>>()?;
            let mut warnings = vec![];
            for r in &results {
                let plan = &plans[&r.id];
                if r.relaxed_function {
                    warnings.push(format!(
                        "{}: no {} assets, function filter relaxed",
                        r.id, plan.primary_function
                    ));
                }
                if r.relaxed_size {
                    warnings.push(format!("{}: no {} assets left, size filter relaxed", r.id, plan.size_class));
                }
            }
            let mut buf = Vec::new();
            write_retrievals(&mut buf, &results).map_err(io_err(&p.path(RETRIEVALS)))?;
            write_atomic(&p.path(RETRIEVALS), &buf)?;
            Ok(StageOutcome {
                details: json!({
                    "queries": results.len(),
                    "catalog_assets": catalog.len(),
                    "weights": weights.as_slice(),
                }),
                warnings,
            })
        })
    }

    pub fn stage_place(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("place", &[PLACEMENTS], |p| {
            let (layout, _) = p.load_layout()?;
            let mpp = layout.meters_per_pixel();
            let path = p.path(RETRIEVALS);
            let f = std::fs::File::open(&path).map_err(io_err(&path))?;
            let retrievals: BTreeMap<InstanceId, _> = read_retrievals(BufReader::new(f))
                .map_err(PipelineError::Input)?
                .into_iter()
                .map(|r| (r.id, r))
                .collect();
            let catalog = p.load_catalog()?;
            let opts = p.config.placement.options();
            let buildings: Vec<_> = isolate_instances(&layout)
                .into_iter()
                .filter(|i| i.id.class == LandClass::Building)
                .collect();
            let fitted = buildings
                .par_iter()
                .map(|inst| {
                    let r = retrievals
                        .get(&inst.id)
                        .ok_or_else(|| PipelineError::Input(format!("no retrieval for {}", inst.id)))?;
                    let best = r
                        .best()
                        .ok_or_else(|| PipelineError::Input(format!("empty retrieval for {}", inst.id)))?;
                    let asset = catalog
                        .get(&best.asset_id)
                        .ok_or_else(|| SceneError::AssetNotInCatalog(best.asset_id.clone()))?;
                    let mask = Mask::from_indices(&inst.pixels, layout.width())?;
                    let (placement, degenerate) = match place_asset(inst.id, &mask, asset, mpp, &opts) {
                        Ok(pl) => (pl, false),
                        Err(PlacementError::DegenerateFootprint) => (
                            Placement {
                                instance: inst.id,
                                asset_id: asset.asset_id.clone(),
                                params: PlacementParams::identity(),
                                iou: 0.0,
                                converged: false,
                            },
                            true,
                        ),
                        Err(e) => return Err(e.into()),
                    };
                    Ok((
                        Fitted {
                            placement,
                            mask,
                            dims_m: asset.footprint_dims_m,
                        },
                        degenerate,
                    ))
                })
                .collect::<Result<Vec<_>, PipelineError>>()?;
            let mut warnings = vec![];
            let mut items = Vec::with_capacity(fitted.len());
            for (f, degenerate) in fitted {
                if degenerate {
                    warnings.push(format!(
                        "{}: footprint of {} covers no pixels at any start, placed unfitted",
                        f.placement.instance, f.placement.asset_id
                    ));
                }
                items.push(f);
            }
            let collisions = resolve_collisions(&mut items, mpp, opts.min_scale);
            for c in &collisions {
                warnings.push(format!(
                    "{} collided with {}: shrunk {} steps, {}",
                    c.instance,
                    c.against,
                    c.shrink_steps,
                    if c.resolved { "resolved" } else { "unresolved" }
                ));
            }
            let placements: Vec<Placement> = items.into_iter().map(|f| f.placement).collect();
            let non_converged: Vec<String> = placements
                .iter()
                .filter(|pl| !pl.converged)
                .map(|pl| pl.instance.to_string())
                .collect();
            for pl in placements.iter().filter(|pl| !pl.converged) {
                warnings.push(format!("{}: placement IoU {:.3} below 0.5", pl.instance, pl.iou));
            }
            let mut buf = Vec::new();
            crate::placement::write_placements(&mut buf, &placements).map_err(io_err(&p.path(PLACEMENTS)))?;
            write_atomic(&p.path(PLACEMENTS), &buf)?;
            let mean_iou = if placements.is_empty() {
                0.0
            } else {
                placements.iter().map(|pl| pl.iou).sum::<f64>() / placements.len() as f64
            };
            Ok(StageOutcome {
                details: json!({
                    "placements": placements.len(),
                    "mean_iou": mean_iou,
                    "non_converged": non_converged,
                    "collisions": collisions,
                    "unresolved_collisions": collisions.iter().filter(|c| !c.resolved).count(),
                }),
                warnings,
            })
        })
    }

    pub fn stage_export(&self) -> Result<StageOutcome, PipelineError> {
        self.run_stage("export", &[MANIFEST], |p| {
            let (layout, png) = p.load_layout()?;
            let dossiers = p.load_dossiers()?;
            let path = p.path(PLANS);
            let f = std::fs::File::open(&path).map_err(io_err(&path))?;
            let plans = read_plans(BufReader::new(f)).map_err(PipelineError::Input)?;
            let path = p.path(PLACEMENTS);
            let f = std::fs::File::open(&path).map_err(io_err(&path))?;
            let placements = crate::placement::read_placements(BufReader::new(f)).map_err(PipelineError::Input)?;
            let catalog = p.load_catalog()?;
            let sc = &p.config.scatter;
            let scatter = PropScatterSpec {
                tree_density: sc.tree_density,
                lamp_spacing_m: sc.lamp_spacing_m,
                seed: derive_seed(p.config.seed, "scatter"),
            };
            let manifest = build_manifest(
                &layout,
                LayoutRef::new(LAYOUT_PNG, &png),
                &dossiers,
                &plans,
                &placements,
                &catalog,
                &scatter,
            )?;
            write_atomic(&p.path(MANIFEST), &write_manifest(&manifest))?;
            let count = |k| manifest.props.iter().filter(|pr| pr.kind == k).count();
            Ok(StageOutcome {
                details: json!({
                    "buildings": manifest.buildings.len(),
                    "surfaces": manifest.surfaces.len(),
                    "trees": count(crate::scene::PropKind::Tree),
                    "streetlights": count(crate::scene::PropKind::Streetlight),
                }),
                warnings: vec![],
            })
        })
    }

    /// Layout, analysis, planning, retrieval, placement and export in order.
    pub fn run_all(&self) -> Result<RunReport, PipelineError> {
        self.stage_layout()?;
        self.stage_analyze()?;
        self.stage_plan()?;
        self.stage_retrieve()?;
        self.stage_place()?;
        self.stage_export()?;
        RunReport::load(self.out())
    }
}
