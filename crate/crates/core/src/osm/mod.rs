//! OpenStreetMap XML ingestion: parse nodes and ways, map tags onto the
//! seven land classes, and rasterize into a semantic layout.

mod parse;
mod raster;
pub mod tags;

pub use parse::parse_osm;
pub use raster::{rasterize, RasterWindow};
pub use tags::classify;

use crate::layout::LandClass;
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum OsmError {
    #[error("malformed xml at {row}:{col}: {message}")]
    MalformedXml { row: u32, col: u32, message: String },
    #[error("way {way} references missing node {node}")]
    DanglingNodeRef { way: i64, node: i64 },
    #[error("way {0} has a self-intersecting ring")]
    SelfIntersectingRing(i64),
    #[error("raster window invalid: {0}")]
    InvalidWindow(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OsmNode {
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OsmWay {
    pub id: i64,
    pub node_ids: Vec<i64>,
    pub tags: BTreeMap<String, String>,
}

impl OsmWay {
    /// A way is closed when it has at least four node refs and the first equals the last.
    pub fn is_closed(&self) -> bool {
        self.node_ids.len() >= 4 && self.node_ids.first() == self.node_ids.last()
    }

    pub fn tag(&self, key: &str) -> Option<&str> {
        self.tags.get(key).map(String::as_str)
    }
}

/// Parsed document; ways are kept in document order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OsmDocument {
    pub nodes: BTreeMap<i64, OsmNode>,
    pub ways: Vec<OsmWay>,
}

impl OsmDocument {
    /// Mean of node coordinates, used as the default projection center.
    pub fn center(&self) -> Option<(f64, f64)> {
        if self.nodes.is_empty() {
            return None;
        }
        let n = self.nodes.len() as f64;
        let (lat, lon) = self
            .nodes
            .values()
            .fold((0.0, 0.0), |(a, b), node| (a + node.lat, b + node.lon));
        Some((lat / n, lon / n))
    }

    /// Classify every way and project its geometry into local meters.
    pub fn features(&self, projection: &Projection) -> Vec<ClassifiedFeature> {
        self.ways
            .iter()
            .filter_map(|way| {
                let points: Vec<Point> = way
                    .node_ids
                    .iter()
                    .map(|id| projection.project(self.nodes[id]))
                    .collect();
                classify(way, points)
            })
            .collect()
    }
}

/// Local metric point: meters east and north of the projection center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

const EARTH_RADIUS_M: f64 = 6_371_008.8;

/// Local equirectangular projection about a center point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub center_lat: f64,
    pub center_lon: f64,
}

impl Projection {
    pub fn new(center_lat: f64, center_lon: f64) -> Self {
        Self {
            center_lat,
            center_lon,
        }
    }

    pub fn project(&self, node: OsmNode) -> Point {
        let cos_lat = self.center_lat.to_radians().cos();
        Point {
            x: EARTH_RADIUS_M * (node.lon - self.center_lon).to_radians() * cos_lat,
            y: EARTH_RADIUS_M * (node.lat - self.center_lat).to_radians(),
        }
    }

    pub fn unproject(&self, p: Point) -> OsmNode {
        let cos_lat = self.center_lat.to_radians().cos();
        OsmNode {
            lat: self.center_lat + (p.y / EARTH_RADIUS_M).to_degrees(),
            lon: self.center_lon + (p.x / (EARTH_RADIUS_M * cos_lat)).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Geometry {
    /// Closed ring; the closing vertex is not repeated.
    Polygon(Vec<Point>),
    Polyline { points: Vec<Point>, width_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassifiedFeature {
    pub way_id: i64,
    pub geometry: Geometry,
    pub class: LandClass,
    pub priority: u8,
}
