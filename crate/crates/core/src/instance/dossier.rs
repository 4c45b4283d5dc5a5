use super::{distance_transform, Instance, InstanceId, OwnerMap, NO_OWNER};
use crate::layout::{LandClass, SemanticLayout};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::io::{BufRead, Write};

/// Chebyshev radius within which two instances count as neighbors.
pub const NEIGHBOR_RADIUS: usize = 2;

#[derive(Debug, thiserror::Error)]
pub enum DossierError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("dossier line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub id: InstanceId,
    /// Pixel pairs (one in each instance) within the neighbor radius.
    pub count: u64,
}

/// Facts about one instance. Field order here is the JSON field order of the
/// line-delimited export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceDossier {
    pub id: InstanceId,
    pub class: LandClass,
    pub pixel_count: u64,
    pub area_m2: f64,
    /// Inclusive pixel bounds: x0, y0, x1, y1.
    pub bbox: [usize; 4],
    /// Bounding-box width and height in pixels.
    pub size_px: [usize; 2],
    /// Mean pixel index (x, y); pixel (i, j) has its center at (i + 0.5, j + 0.5).
    pub centroid: [f64; 2],
    /// Smallest center-to-center distance to a traffic_road pixel; `null` in
    /// JSON when the layout has no roads.
    #[serde(serialize_with = "ser_distance", deserialize_with = "de_distance")]
    pub distance_to_road_m: f64,
    pub neighbors: Vec<Neighbor>,
    /// Pixel count over bounding-box area.
    pub compactness: f64,
}

impl InstanceDossier {
    pub fn size_m(&self, meters_per_pixel: f64) -> (f64, f64) {
        (
            self.size_px[0] as f64 * meters_per_pixel,
            self.size_px[1] as f64 * meters_per_pixel,
        )
    }
}

fn ser_distance<S: Serializer>(d: &f64, s: S) -> Result<S::Ok, S::Error> {
    if d.is_finite() {
        s.serialize_some(d)
    } else {
        s.serialize_none()
    }
}

fn de_distance<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
}

/// Build one dossier per instance.
pub fn build_dossier(
    layout: &SemanticLayout,
    instances: &[Instance],
) -> BTreeMap<InstanceId, InstanceDossier> {
    let (w, h) = (layout.width(), layout.height());
    let mpp = layout.meters_per_pixel();
    let owners = OwnerMap::new(w, h, instances);
    let road = distance_transform(layout, LandClass::TrafficRoad);

    // pair counts within the Chebyshev window, accumulated per instance
    let mut pairs: Vec<BTreeMap<u32, u64>> = vec![BTreeMap::new(); instances.len()];
    let r = NEIGHBOR_RADIUS as isize;
    for y in 0..h {
        for x in 0..w {
            let a = owners.owner[y * w + x];
            if a == NO_OWNER {
                continue;
            }
            for dy in -r..=r {
                let yy = y as isize + dy;
                if yy < 0 || yy >= h as isize {
                    continue;
                }
                for dx in -r..=r {
                    let xx = x as isize + dx;
                    if xx < 0 || xx >= w as isize {
                        continue;
                    }
                    let b = owners.owner[yy as usize * w + xx as usize];
                    if b != NO_OWNER && b != a {
                        *pairs[a as usize].entry(b).or_default() += 1;
                    }
                }
            }
        }
    }

    instances
        .iter()
        .zip(pairs)
        .map(|(inst, neigh)| {
            let n = inst.pixels.len();
            let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
            let (mut sx, mut sy) = (0f64, 0f64);
            let mut dist = f64::INFINITY;
            for &p in &inst.pixels {
                let p = p as usize;
                let (x, y) = (p % w, p / w);
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
                sx += x as f64;
                sy += y as f64;
                dist = dist.min(road.at_index(p));
            }
            let size_px = [x1 - x0 + 1, y1 - y0 + 1];
            let mut neighbors: Vec<Neighbor> = neigh
                .into_iter()
                .map(|(k, count)| Neighbor {
                    id: instances[k as usize].id,
                    count,
                })
                .collect();
            neighbors.sort_by_key(|nb| nb.id);
            let dossier = InstanceDossier {
                id: inst.id,
                class: inst.id.class,
                pixel_count: n as u64,
                area_m2: n as f64 * mpp * mpp,
                bbox: [x0, y0, x1, y1],
                size_px,
                centroid: [sx / n as f64, sy / n as f64],
                distance_to_road_m: dist,
                neighbors,
                compactness: n as f64 / (size_px[0] * size_px[1]) as f64,
            };
            (inst.id, dossier)
        })
        .collect()
}

/// Write dossiers as JSON lines in ascending id order.
pub fn write_dossiers<'a, W: Write>(
    mut out: W,
    dossiers: impl IntoIterator<Item = &'a InstanceDossier>,
) -> Result<(), DossierError> {
    for d in dossiers {
        serde_json::to_writer(&mut out, d).map_err(|e| DossierError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_dossiers<R: BufRead>(input: R) -> Result<BTreeMap<InstanceId, InstanceDossier>, DossierError> {
    let mut out = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let d: InstanceDossier =
            serde_json::from_str(&line).map_err(|source| DossierError::Parse { line: i + 1, source })?;
        out.insert(d.id, d);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::isolate_instances;

    fn layout(rows: &[&str]) -> SemanticLayout {
        // g=ground b=building r=road w=water v=vegetation
        let w = rows[0].len();
        let labels = rows
            .iter()
            .flat_map(|r| {
                r.chars().map(|c| match c {
                    'b' => 2,
                    'r' => 4,
                    'w' => 6,
                    'v' => 1,
                    _ => 0,
                })
            })
            .collect();
        SemanticLayout::new(w, rows.len(), labels, 0.5).unwrap()
    }

    #[test]
    fn adjacent_building_is_half_a_meter_from_road() {
        let l = layout(&["rb", "gg"]);
        let d = build_dossier(&l, &isolate_instances(&l));
        let b = &d[&InstanceId::new(LandClass::Building, 0)];
        assert_eq!(b.distance_to_road_m, 0.5);
        let r = &d[&InstanceId::new(LandClass::TrafficRoad, 0)];
        assert_eq!(r.distance_to_road_m, 0.0);
    }

    #[test]
    fn single_pixel_compactness() {
        let l = layout(&["ggg", "gbg", "ggg"]);
        let d = build_dossier(&l, &isolate_instances(&l));
        let b = d.values().next().unwrap();
        assert_eq!(b.compactness, 1.0);
        assert_eq!(b.centroid, [1.0, 1.0]);
        assert_eq!(b.bbox, [1, 1, 1, 1]);
        assert_eq!(b.area_m2, 0.25);
        assert!(b.distance_to_road_m.is_infinite());
    }

    #[test]
    fn one_pixel_gap_is_still_neighbor_and_symmetric() {
        let l = layout(&["bgbgggw", "bgbgggw"]);
        let d = build_dossier(&l, &isolate_instances(&l));
        let b0 = &d[&InstanceId::new(LandClass::Building, 0)];
        let b1 = &d[&InstanceId::new(LandClass::Building, 1)];
        assert_eq!(b0.neighbors.len(), 1);
        assert_eq!(b0.neighbors[0].id, b1.id);
        assert_eq!(b1.neighbors[0].count, b0.neighbors[0].count);
        // water is four columns away from building:1
        assert!(b1.neighbors.iter().all(|n| n.id.class != LandClass::Water));
    }

    #[test]
    fn jsonl_round_trip_keeps_infinity() {
        let l = layout(&["bbg", "gvv"]);
        let d = build_dossier(&l, &isolate_instances(&l));
        let mut buf = Vec::new();
        write_dossiers(&mut buf, d.values()).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"distance_to_road_m\":null"));
        assert_eq!(text.lines().count(), 2);
        let back = read_dossiers(buf.as_slice()).unwrap();
        assert_eq!(back, d);
    }
}
