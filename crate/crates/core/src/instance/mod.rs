//! Instance isolation and per-instance dossiers.
//!
//! An instance is a maximal 4-connected region of one non-ground class.

mod distance;
mod dossier;

pub use distance::{distance_transform, distance_transform_mask, DistanceField};
pub use dossier::{
    build_dossier, read_dossiers, write_dossiers, DossierError, InstanceDossier, Neighbor,
    NEIGHBOR_RADIUS,
};

use crate::layout::{LandClass, SemanticLayout};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

/// Identifies an instance by class and ordinal within that class.
///
/// Ordering is by class id, then index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InstanceId {
    pub class: LandClass,
    pub index: u32,
}

impl InstanceId {
    pub fn new(class: LandClass, index: u32) -> Self {
        Self { class, index }
    }
}

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class, self.index)
    }
}

impl FromStr for InstanceId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (class, index) = s
            .split_once(':')
            .ok_or_else(|| format!("instance id '{s}' is not class:index"))?;
        Ok(Self {
            class: class.parse()?,
            index: index
                .parse()
                .map_err(|e| format!("instance id '{s}': {e}"))?,
        })
    }
}

impl TryFrom<String> for InstanceId {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InstanceId> for String {
    fn from(id: InstanceId) -> Self {
        id.to_string()
    }
}

/// A connected component: its id and member pixels as ascending row-major indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: InstanceId,
    pub pixels: Vec<u32>,
}

/// Per-pixel owner table for a set of instances.
#[derive(Debug, Clone)]
pub struct OwnerMap {
    pub width: usize,
    pub height: usize,
    /// Index into the instance list, or `u32::MAX` for background.
    pub owner: Vec<u32>,
}

pub const NO_OWNER: u32 = u32::MAX;

impl OwnerMap {
    pub fn new(width: usize, height: usize, instances: &[Instance]) -> Self {
        let mut owner = vec![NO_OWNER; width * height];
        for (k, inst) in instances.iter().enumerate() {
            for &p in &inst.pixels {
                owner[p as usize] = k as u32;
            }
        }
        Self {
            width,
            height,
            owner,
        }
    }
}

/// Split a layout into 4-connected single-class components, skipping ground.
///
/// Components are sorted by class id and then by their first pixel in
/// row-major order, which is also the order indices are assigned in.
pub fn isolate_instances(layout: &SemanticLayout) -> Vec<Instance> {
    let (w, h) = (layout.width(), layout.height());
    let labels = layout.labels();
    let ground = LandClass::Ground.id();
    let mut seen = vec![false; w * h];
    let mut queue = VecDeque::new();
    let mut found: Vec<(u8, Vec<u32>)> = Vec::new();

    for start in 0..w * h {
        if seen[start] || labels[start] == ground {
            continue;
        }
        let class = labels[start];
        seen[start] = true;
        queue.push_back(start);
        let mut pixels = Vec::new();
        while let Some(p) = queue.pop_front() {
            pixels.push(p as u32);
            let (x, y) = (p % w, p / w);
            let mut visit = |q: usize| {
                if !seen[q] && labels[q] == class {
                    seen[q] = true;
                    queue.push_back(q);
                }
            };
            if x > 0 {
                visit(p - 1);
            }
            if x + 1 < w {
                visit(p + 1);
            }
            if y > 0 {
                visit(p - w);
            }
            if y + 1 < h {
                visit(p + w);
            }
        }
        pixels.sort_unstable();
        found.push((class, pixels));
    }

    // discovery order is already row-major by first pixel; a stable sort groups classes
    found.sort_by_key(|(class, _)| *class);
    let mut next_index = [0u32; crate::layout::NUM_CLASSES];
    found
        .into_iter()
        .map(|(class, pixels)| {
            let index = next_index[class as usize];
            next_index[class as usize] += 1;
            Instance {
                id: InstanceId::new(LandClass::ALL[class as usize], index),
                pixels,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_pixels_are_separate() {
        let b = LandClass::Building.id();
        let mut labels = vec![0u8; 9];
        labels[0] = b;
        labels[8] = b;
        let layout = SemanticLayout::new(3, 3, labels, 0.5).unwrap();
        let inst = isolate_instances(&layout);
        assert_eq!(inst.len(), 2);
        assert_eq!(inst[0].id, InstanceId::new(LandClass::Building, 0));
        assert_eq!(inst[0].pixels, vec![0]);
        assert_eq!(inst[1].pixels, vec![8]);
    }

    #[test]
    fn all_ground_has_no_instances() {
        let layout = SemanticLayout::filled(6, 4, LandClass::Ground, 0.5).unwrap();
        assert!(isolate_instances(&layout).is_empty());
    }

    #[test]
    fn ordering_by_class_then_first_pixel() {
        // water at top-left, building later in raster order
        let labels = vec![6, 0, 2, 2, 0, 6, 0, 0, 1];
        let layout = SemanticLayout::new(3, 3, labels, 0.5).unwrap();
        let ids: Vec<String> = isolate_instances(&layout)
            .iter()
            .map(|i| i.id.to_string())
            .collect();
        assert_eq!(ids, ["vegetation:0", "building:0", "building:1", "water:0", "water:1"]);
    }

    #[test]
    fn id_string_round_trip() {
        let id = InstanceId::new(LandClass::TrafficRoad, 12);
        assert_eq!(id.to_string(), "traffic_road:12");
        assert_eq!("traffic_road:12".parse::<InstanceId>(), Ok(id));
        assert!("road".parse::<InstanceId>().is_err());
    }
}
