//! Tag-to-class mapping. Every constant that decides how OSM tags become
//! land classes, stroke widths and paint order lives in this file.

use super::{ClassifiedFeature, Geometry, OsmWay, Point};
use crate::layout::LandClass;

pub const RAIL_WIDTH_M: f64 = 3.0;
pub const FOOTPATH_WIDTH_M: f64 = 2.0;
pub const WATERWAY_WIDTH_M: f64 = 4.0;

pub const FOOTPATH_HIGHWAYS: &[&str] = &["footway", "path", "pedestrian", "steps", "cycleway"];
pub const RAIL_KINDS: &[&str] = &["rail", "tram", "subway"];

pub const VEGETATION_TAGS: &[(&str, &str)] = &[
    ("landuse", "forest"),
    ("landuse", "grass"),
    ("landuse", "meadow"),
    ("landuse", "recreation_ground"),
    ("natural", "wood"),
    ("natural", "scrub"),
    ("leisure", "park"),
    ("leisure", "garden"),
];

/// Stroke width of a drivable road by its highway class.
pub fn road_width_m(highway: &str) -> f64 {
    match highway {
        "motorway" | "motorway_link" | "trunk" | "trunk_link" => 12.0,
        "primary" | "primary_link" => 10.0,
        "secondary" | "secondary_link" => 8.0,
        _ => 6.0,
    }
}

/// Paint order, low to high. Higher priority overwrites.
pub fn priority(class: LandClass) -> u8 {
    match class {
        LandClass::Ground => 0,
        LandClass::Vegetation => 1,
        LandClass::Water => 2,
        LandClass::Footpath => 3,
        LandClass::TrafficRoad | LandClass::Rail => 4,
        LandClass::Building => 5,
    }
}

enum Shape {
    Area,
    Line(f64),
    /// Area when closed, stroked line otherwise.
    AreaOrLine(f64),
}

fn rule(way: &OsmWay) -> Option<(LandClass, Shape)> {
    if way.tag("building").is_some() {
        return Some((LandClass::Building, Shape::Area));
    }
    if let Some(kind) = way.tag("railway") {
        if RAIL_KINDS.contains(&kind) {
            return Some((LandClass::Rail, Shape::Line(RAIL_WIDTH_M)));
        }
    }
    if let Some(hw) = way.tag("highway") {
        if FOOTPATH_HIGHWAYS.contains(&hw) {
            return Some((LandClass::Footpath, Shape::Line(FOOTPATH_WIDTH_M)));
        }
        return Some((LandClass::TrafficRoad, Shape::Line(road_width_m(hw))));
    }
    if way.tag("natural") == Some("water") || way.tag("water").is_some() {
        return Some((LandClass::Water, Shape::Area));
    }
    if way.tag("waterway").is_some() {
        return Some((LandClass::Water, Shape::AreaOrLine(WATERWAY_WIDTH_M)));
    }
    if VEGETATION_TAGS
        .iter()
        .any(|(k, v)| way.tag(k) == Some(*v))
    {
        return Some((LandClass::Vegetation, Shape::Area));
    }
    None
}

/// Map a resolved way onto a feature, or `None` when its tags are unmapped or
/// its geometry does not fit the rule (e.g. an unclosed building outline).
pub fn classify(way: &OsmWay, mut points: Vec<Point>) -> Option<ClassifiedFeature> {
    let (class, shape) = rule(way)?;
    let closed = way.is_closed();
    let geometry = match shape {
        Shape::Area | Shape::AreaOrLine(_) if closed => {
            points.pop();
            Geometry::Polygon(points)
        }
        Shape::Area => return None,
        Shape::Line(width_m) | Shape::AreaOrLine(width_m) => {
            if points.len() < 2 {
                return None;
            }
            Geometry::Polyline { points, width_m }
        }
    };
    Some(ClassifiedFeature {
        way_id: way.id,
        geometry,
        class,
        priority: priority(class),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn way(closed: bool, tags: &[(&str, &str)]) -> (OsmWay, Vec<Point>) {
        let mut node_ids = vec![1, 2, 3, 4];
        let mut points = vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(0.0, 10.0),
        ];
        if closed {
            node_ids.push(1);
            points.push(points[0]);
        }
        let tags: BTreeMap<String, String> = tags
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect();
        (OsmWay { id: 7, node_ids, tags }, points)
    }

    #[test]
    fn building_polygon() {
        let (w, p) = way(true, &[("building", "yes")]);
        let f = classify(&w, p).unwrap();
        assert_eq!(f.class, LandClass::Building);
        assert_eq!(f.priority, 5);
        assert!(matches!(f.geometry, Geometry::Polygon(ref ring) if ring.len() == 4));
    }

    #[test]
    fn footway_polyline() {
        let (w, p) = way(false, &[("highway", "footway")]);
        let f = classify(&w, p).unwrap();
        assert_eq!(f.class, LandClass::Footpath);
        assert!(matches!(f.geometry, Geometry::Polyline { width_m, .. } if width_m == 2.0));
    }

    #[test]
    fn unmapped_is_skipped() {
        let (w, p) = way(true, &[("landuse", "retail")]);
        assert!(classify(&w, p).is_none());
        let (w, p) = way(false, &[("building", "yes")]);
        assert!(classify(&w, p).is_none());
    }

    #[test]
    fn road_widths_and_rail() {
        let (w, p) = way(false, &[("highway", "primary")]);
        let f = classify(&w, p).unwrap();
        assert_eq!(f.class, LandClass::TrafficRoad);
        assert!(matches!(f.geometry, Geometry::Polyline { width_m, .. } if width_m == 10.0));
        let (w, p) = way(false, &[("railway", "tram")]);
        assert_eq!(classify(&w, p).unwrap().class, LandClass::Rail);
        let (w, p) = way(false, &[("railway", "abandoned")]);
        assert!(classify(&w, p).is_none());
    }

    #[test]
    fn water_and_vegetation() {
        let (w, p) = way(true, &[("natural", "water")]);
        assert_eq!(classify(&w, p).unwrap().class, LandClass::Water);
        let (w, p) = way(false, &[("waterway", "river")]);
        let f = classify(&w, p).unwrap();
        assert!(matches!(f.geometry, Geometry::Polyline { width_m, .. } if width_m == 4.0));
        let (w, p) = way(true, &[("leisure", "park")]);
        let f = classify(&w, p).unwrap();
        assert_eq!((f.class, f.priority), (LandClass::Vegetation, 1));
    }
}
