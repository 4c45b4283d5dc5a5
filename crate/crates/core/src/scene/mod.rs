//! Scene manifest: buildings, textured surfaces and props, ready for a 3-D host.
//!
//! Coordinates are meters with x east and y north. The origin is the outer
//! corner of the layout's bottom-left pixel, so row 0 is the northernmost row
//! and spans y in [(H-1)·mpp, H·mpp]. Rotations are radians counter-clockwise
//! about the vertical axis.

pub mod props;

pub use props::{place_streetlights, scatter_trees, skeletonize, TREE_CLEARANCE_M};

use crate::instance::{InstanceDossier, InstanceId};
use crate::layout::{LandClass, SemanticLayout};
use crate::placement::{footprint_pixels, Placement};
use crate::planner::{InstancePlan, PrimaryFunction, SizeClass};
use crate::retrieval::Catalog;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::collections::{BTreeMap, BTreeSet};

pub const MANIFEST_VERSION: u32 = 1;

/// Fields a reader does not know, kept so they survive a round trip.
pub type Extra = BTreeMap<String, Value>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SceneError {
    #[error("no placement for building {0}")]
    MissingPlacement(InstanceId),
    #[error("no plan for building {0}")]
    MissingPlan(InstanceId),
    #[error("asset {0} is not in the catalog")]
    AssetNotInCatalog(String),
    #[error("invalid prop scatter settings: {0}")]
    InvalidScatter(String),
    #[error("schema violation at {path}: {message}")]
    SchemaViolation { path: String, message: String },
    #[error("manifest version {0} is not supported")]
    UnsupportedVersion(u32),
    #[error("{what} at {position:?} lies outside the layout")]
    OutOfExtent { what: String, position: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRef {
    pub path: String,
    /// Hex SHA-256 of the layout PNG.
    pub sha256: String,
}

impl LayoutRef {
    pub fn new(path: impl Into<String>, png_bytes: &[u8]) -> Self {
        let digest = Sha256::digest(png_bytes);
        Self {
            path: path.into(),
            sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSummary {
    pub primary_function: PrimaryFunction,
    pub secondary_function: String,
    pub size_class: SizeClass,
    pub style: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildingEntry {
    pub instance: InstanceId,
    pub asset_id: String,
    pub position: [f64; 2],
    pub rotation: f64,
    pub scale: f64,
    /// Unscaled catalog footprint, width along the local x axis.
    pub footprint_dims_m: [f64; 2],
    pub iou: f64,
    pub converged: bool,
    pub texture_tag: String,
    pub plan: PlanSummary,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceEntry {
    pub instance: InstanceId,
    pub class: LandClass,
    pub texture_tag: String,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropKind {
    Tree,
    Streetlight,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropEntry {
    pub kind: PropKind,
    pub position: [f64; 2],
    pub rotation: f64,
    pub scale: f64,
    #[serde(flatten)]
    pub extra: Extra,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneManifest {
    pub version: u32,
    pub meters_per_pixel: f64,
    /// Layout width and height in meters.
    pub extent_m: [f64; 2],
    pub layout_ref: LayoutRef,
    pub buildings: Vec<BuildingEntry>,
    pub surfaces: Vec<SurfaceEntry>,
    pub props: Vec<PropEntry>,
    #[serde(flatten)]
    pub extra: Extra,
}

impl SceneManifest {
    /// Check the structural invariants; with a catalog, also check asset references.
    pub fn validate(&self, catalog: Option<&Catalog>) -> Result<(), SceneError> {
        if self.version != MANIFEST_VERSION {
            return Err(SceneError::UnsupportedVersion(self.version));
        }
        let [ew, eh] = self.extent_m;
        let inside = |p: [f64; 2]| p[0] >= 0.0 && p[0] <= ew && p[1] >= 0.0 && p[1] <= eh;
        for b in &self.buildings {
            if !inside(b.position) {
                return Err(SceneError::OutOfExtent {
                    what: format!("building {}", b.instance),
                    position: b.position,
                });
            }
            if let Some(c) = catalog {
                if c.get(&b.asset_id).is_none() {
                    return Err(SceneError::AssetNotInCatalog(b.asset_id.clone()));
                }
            }
        }
        for p in &self.props {
            if !inside(p.position) {
                return Err(SceneError::OutOfExtent {
                    what: format!("{:?}", p.kind),
                    position: p.position,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropScatterSpec {
    /// Trees per 100 m² of vegetation.
    pub tree_density: f64,
    pub lamp_spacing_m: f64,
    pub seed: u64,
}

impl Default for PropScatterSpec {
    fn default() -> Self {
        Self {
            tree_density: 1.0,
            lamp_spacing_m: 25.0,
            seed: 0,
        }
    }
}

impl PropScatterSpec {
    pub fn validate(&self) -> Result<(), SceneError> {
        if !(self.tree_density.is_finite() && self.tree_density >= 0.0) {
            return Err(SceneError::InvalidScatter(format!("tree density {}", self.tree_density)));
        }
        if !(self.lamp_spacing_m.is_finite() && self.lamp_spacing_m > 0.0) {
            return Err(SceneError::InvalidScatter(format!("lamp spacing {}", self.lamp_spacing_m)));
        }
        Ok(())
    }
}

/// Symbolic material for a non-building surface.
pub fn surface_texture(d: &InstanceDossier) -> &'static str {
    match d.class {
        LandClass::Ground => "soil_compacted",
        LandClass::Vegetation if d.area_m2 >= 5000.0 => "forest_floor",
        LandClass::Vegetation => "grass_lush",
        LandClass::Building => "roof_generic",
        LandClass::Rail => "rail_ballast",
        LandClass::TrafficRoad if d.area_m2 >= 20000.0 => "asphalt_fresh",
        LandClass::TrafficRoad => "asphalt_worn",
        LandClass::Footpath => "paving_stones",
        // elongated water bodies read as rivers or canals
        LandClass::Water if d.compactness < 0.3 => "water_flowing",
        LandClass::Water => "water_calm",
    }
}

/// Facade material from a plan's style.
pub fn facade_texture(plan: &InstancePlan) -> String {
    let style: String = plan
        .style
        .trim()
        .to_ascii_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    if style.is_empty() {
        "facade_plain".into()
    } else {
        format!("facade_{style}")
    }
}

/// World position of a dossier centroid.
pub fn centroid_position(d: &InstanceDossier, layout_height: usize, mpp: f64) -> [f64; 2] {
    [
        (d.centroid[0] + 0.5) * mpp,
        (layout_height as f64 - (d.centroid[1] + 0.5)) * mpp,
    ]
}

/// Assemble the manifest. Every building dossier needs a plan and a placement.
pub fn build_manifest(
    layout: &SemanticLayout,
    layout_ref: LayoutRef,
    dossiers: &BTreeMap<InstanceId, InstanceDossier>,
    plans: &BTreeMap<InstanceId, InstancePlan>,
    placements: &[Placement],
    catalog: &Catalog,
    scatter: &PropScatterSpec,
) -> Result<SceneManifest, SceneError> {
    scatter.validate()?;
    let (w, h, mpp) = (layout.width(), layout.height(), layout.meters_per_pixel());
    let by_instance: BTreeMap<InstanceId, &Placement> = placements.iter().map(|p| (p.instance, p)).collect();
    let building = LandClass::Building.id();
    let mut blocked: Vec<bool> = layout.labels().iter().map(|&l| l == building).collect();
    let mut buildings = Vec::new();
    let mut surfaces = Vec::new();
    for (id, d) in dossiers {
        if d.class != LandClass::Building {
            surfaces.push(SurfaceEntry {
                instance: *id,
                class: d.class,
                texture_tag: surface_texture(d).to_string(),
                extra: Extra::new(),
            });
            continue;
        }
        let p = by_instance.get(id).ok_or(SceneError::MissingPlacement(*id))?;
        let plan = plans.get(id).ok_or(SceneError::MissingPlan(*id))?;
        let asset = catalog
            .get(&p.asset_id)
            .ok_or_else(|| SceneError::AssetNotInCatalog(p.asset_id.clone()))?;
        let center = [d.centroid[0] + 0.5, d.centroid[1] + 0.5];
        for (x, y) in footprint_pixels(center, asset.footprint_dims_m, &p.params, mpp) {
            if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                blocked[y as usize * w + x as usize] = true;
            }
        }
        let c = centroid_position(d, h, mpp);
        buildings.push(BuildingEntry {
            instance: *id,
            asset_id: p.asset_id.clone(),
            position: [c[0] + p.params.tx, c[1] + p.params.ty],
            rotation: p.params.rotation,
            scale: p.params.scale,
            footprint_dims_m: asset.footprint_dims_m,
            iou: p.iou,
            converged: p.converged,
            texture_tag: facade_texture(plan),
            plan: PlanSummary {
                primary_function: plan.primary_function,
                secondary_function: plan.secondary_function.clone(),
                size_class: plan.size_class,
                style: plan.style.clone(),
            },
            extra: Extra::new(),
        });
    }
    let mut props = scatter_trees(layout, &blocked, scatter);
    props.extend(place_streetlights(layout, scatter));
    let (ew, eh) = layout.extent_m();
    let manifest = SceneManifest {
        version: MANIFEST_VERSION,
        meters_per_pixel: mpp,
        extent_m: [ew, eh],
        layout_ref,
        buildings,
        surfaces,
        props,
        extra: Extra::new(),
    };
    manifest.validate(Some(catalog))?;
    Ok(manifest)
}

/// Pretty JSON with a trailing newline.
pub fn write_manifest(m: &SceneManifest) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(m).expect("manifest serializes");
    out.push(b'\n');
    out
}

pub fn read_manifest(bytes: &[u8]) -> Result<SceneManifest, SceneError> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    let m: SceneManifest = serde_path_to_error::deserialize(de).map_err(|e| SceneError::SchemaViolation {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    if m.version != MANIFEST_VERSION {
        return Err(SceneError::UnsupportedVersion(m.version));
    }
    Ok(m)
}

/// Instance ids of buildings with no entry in the manifest.
pub fn missing_buildings(m: &SceneManifest, dossiers: &BTreeMap<InstanceId, InstanceDossier>) -> Vec<InstanceId> {
    let present: BTreeSet<InstanceId> = m.buildings.iter().map(|b| b.instance).collect();
    dossiers
        .keys()
        .filter(|id| id.class == LandClass::Building && !present.contains(id))
        .copied()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::{build_dossier, isolate_instances};
    use crate::placement::{place_asset, Mask, PlacementOptions};
    use crate::retrieval::AssetRecord;

    fn one_building() -> (SemanticLayout, BTreeMap<InstanceId, InstanceDossier>) {
        let (w, h) = (40, 30);
        let labels = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if (10..30).contains(&x) && (5..25).contains(&y) {
                    LandClass::Building.id()
                } else {
                    LandClass::Ground.id()
                }
            })
            .collect();
        let layout = SemanticLayout::new(w, h, labels, 0.5).unwrap();
        let inst = isolate_instances(&layout);
        let d = build_dossier(&layout, &inst);
        (layout, d)
    }

    fn catalog() -> Catalog {
        Catalog {
            d_img: 1,
            d_txt: 1,
            assets: vec![AssetRecord {
                asset_id: "box".into(),
                function: PrimaryFunction::Residential,
                size_class: SizeClass::LowRise,
                floors: 2,
                footprint_dims_m: [10.0, 10.0],
                style: "brick".into(),
                annotations: vec!["x".into()],
                mesh: None,
                view_embeddings: vec![vec![1.0]],
                text_embeddings: vec![vec![1.0]],
            }],
        }
    }

    fn plan(id: InstanceId) -> InstancePlan {
        InstancePlan {
            id,
            primary_function: PrimaryFunction::Residential,
            secondary_function: "house".into(),
            size_class: SizeClass::LowRise,
            style: "Art Deco".into(),
            reasoning: String::new(),
            revision: 1,
        }
    }

    #[test]
    fn single_building_passes_through() {
        let (layout, dossiers) = one_building();
        let id = InstanceId::new(LandClass::Building, 0);
        let inst = isolate_instances(&layout);
        let b = inst.iter().find(|i| i.id == id).unwrap();
        let mask = Mask::from_indices(&b.pixels, layout.width()).unwrap();
        let cat = catalog();
        let p = place_asset(id, &mask, &cat.assets[0], 0.5, &PlacementOptions::default()).unwrap();
        let plans = BTreeMap::from([(id, plan(id))]);
        let m = build_manifest(
            &layout,
            LayoutRef::new("layout.png", b"x"),
            &dossiers,
            &plans,
            std::slice::from_ref(&p),
            &cat,
            &PropScatterSpec::default(),
        )
        .unwrap();
        assert_eq!(m.buildings.len(), 1);
        let e = &m.buildings[0];
        assert_eq!((e.rotation, e.scale), (p.params.rotation, p.params.scale));
        // centroid of columns 10..30, rows 5..25 in a 30-row layout
        assert!((e.position[0] - 10.0 - p.params.tx).abs() < 1e-12);
        assert!((e.position[1] - 7.5 - p.params.ty).abs() < 1e-12);
        assert_eq!(e.texture_tag, "facade_art_deco");
        assert_eq!(m.surfaces.len(), dossiers.len() - 1);
        assert!(m.props.is_empty());
        assert!(missing_buildings(&m, &dossiers).is_empty());

        let err = build_manifest(
            &layout,
            LayoutRef::new("layout.png", b"x"),
            &dossiers,
            &plans,
            &[],
            &cat,
            &PropScatterSpec::default(),
        );
        assert_eq!(err, Err(SceneError::MissingPlacement(id)));
    }

    #[test]
    fn trees_land_on_vegetation_at_density() {
        let (w, h) = (120, 60);
        // 100 x 40 px at 0.5 m = 1000 m² of vegetation
        let labels: Vec<u8> = (0..w * h)
            .map(|i| {
                let (x, y) = (i % w, i / w);
                if (10..110).contains(&x) && (10..50).contains(&y) {
                    LandClass::Vegetation.id()
                } else {
                    LandClass::Ground.id()
                }
            })
            .collect();
        let layout = SemanticLayout::new(w, h, labels, 0.5).unwrap();
        let veg = layout.class_counts()[LandClass::Vegetation.id() as usize];
        assert_eq!(veg as f64 * 0.25, 1000.0);
        let spec = PropScatterSpec {
            seed: 5,
            ..Default::default()
        };
        let blocked = vec![false; w * h];
        let trees = scatter_trees(&layout, &blocked, &spec);
        assert!((8..=12).contains(&trees.len()));
        assert_eq!(trees, scatter_trees(&layout, &blocked, &spec));
        for t in &trees {
            let px = (t.position[0] / 0.5).floor() as usize;
            let py = (h as f64 - t.position[1] / 0.5).floor() as usize;
            assert_eq!(layout.class_at(px, py), LandClass::Vegetation);
        }
        let bare = SemanticLayout::filled(10, 10, LandClass::Ground, 0.5).unwrap();
        assert!(scatter_trees(&bare, &[false; 100], &spec).is_empty());
    }

    #[test]
    fn manifest_schema() {
        let m = SceneManifest {
            version: 1,
            meters_per_pixel: 0.5,
            extent_m: [10.0, 10.0],
            layout_ref: LayoutRef::new("l.png", b""),
            buildings: vec![],
            surfaces: vec![],
            props: vec![PropEntry {
                kind: PropKind::Streetlight,
                position: [0.1 + 0.2, 3.0],
                rotation: 0.0,
                scale: 1.0,
                extra: Extra::new(),
            }],
            extra: Extra::new(),
        };
        assert_eq!(read_manifest(&write_manifest(&m)).unwrap(), m);

        let mut doc: Value = serde_json::from_slice(&write_manifest(&m)).unwrap();
        doc["future"] = serde_json::json!({"a": 1});
        doc["props"][0]["height"] = serde_json::json!(6.5);
        let back = read_manifest(&serde_json::to_vec(&doc).unwrap()).unwrap();
        assert_eq!(back.extra["future"], serde_json::json!({"a": 1}));
        assert_eq!(back.props[0].extra["height"], serde_json::json!(6.5));
        let again: Value = serde_json::from_slice(&write_manifest(&back)).unwrap();
        assert_eq!(again, doc);

        doc.as_object_mut().unwrap().remove("version");
        match read_manifest(&serde_json::to_vec(&doc).unwrap()) {
            Err(SceneError::SchemaViolation { message, .. }) => assert!(message.contains("version"), "{message}"),
            other => panic!("{other:?}"),
        }
        doc["version"] = serde_json::json!(2);
        assert_eq!(
            read_manifest(&serde_json::to_vec(&doc).unwrap()),
            Err(SceneError::UnsupportedVersion(2))
        );
        doc["version"] = serde_json::json!(1);
        doc["props"][0]["kind"] = serde_json::json!("bench");
        match read_manifest(&serde_json::to_vec(&doc).unwrap()) {
            Err(SceneError::SchemaViolation { path, .. }) => assert!(path.starts_with("props[0]"), "{path}"),
            other => panic!("{other:?}"),
        }
    }
}
