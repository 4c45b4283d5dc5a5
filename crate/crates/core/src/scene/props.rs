//! Tree and streetlight scattering.

use super::{PropEntry, PropKind, PropScatterSpec};
use crate::instance::distance_transform_mask;
use crate::layout::{LandClass, SemanticLayout};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;
use std::f64::consts::TAU;

/// Trees keep at least this far from building pixels and placed footprints.
pub const TREE_CLEARANCE_M: f64 = 2.0;

/// Scatter trees uniformly over vegetation. `blocked` marks building pixels
/// (row-major, same size as the layout).
pub fn scatter_trees(layout: &SemanticLayout, blocked: &[bool], spec: &PropScatterSpec) -> Vec<PropEntry> {
    let (w, h, mpp) = (layout.width(), layout.height(), layout.meters_per_pixel());
    let veg = LandClass::Vegetation.id();
    let support: Vec<usize> = layout
        .labels()
        .iter()
        .enumerate()
        .filter(|(_, &l)| l == veg)
        .map(|(i, _)| i)
        .collect();
    if support.is_empty() || spec.tree_density <= 0.0 {
        return Vec::new();
    }
    let area = support.len() as f64 * mpp * mpp;
    let n = (spec.tree_density * area / 100.0).round() as usize;
    let clearance = distance_transform_mask(w, h, blocked, mpp);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let p = support[rng.random_range(0..support.len())];
        // keep offsets off pixel edges so the position maps back to this pixel
        let ox: f64 = rng.random_range(0.1..0.9);
        let oy: f64 = rng.random_range(0.1..0.9);
        let rotation = rng.random_range(0.0..TAU);
        let scale = rng.random_range(0.8..1.2);
        if clearance.at_index(p) < TREE_CLEARANCE_M {
            continue;
        }
        let (px, py) = (p % w, p / w);
        out.push(PropEntry {
            kind: PropKind::Tree,
            position: [(px as f64 + ox) * mpp, (h as f64 - (py as f64 + oy)) * mpp],
            rotation,
            scale,
            extra: Default::default(),
        });
    }
    out
}

/// Zhang-Suen thinning of a binary mask.
pub fn skeletonize(width: usize, height: usize, mask: &[bool]) -> Vec<bool> {
    let mut img = mask.to_vec();
    let at = |img: &[bool], x: isize, y: isize| -> bool {
        x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height && img[y as usize * width + x as usize]
    };
    loop {
        let mut changed = false;
        for pass in 0..2 {
            let mut remove = Vec::new();
            for y in 0..height as isize {
                for x in 0..width as isize {
                    if !img[y as usize * width + x as usize] {
                        continue;
                    }
                    // p2..p9 clockwise from north
                    let n = [
                        at(&img, x, y - 1),
                        at(&img, x + 1, y - 1),
                        at(&img, x + 1, y),
                        at(&img, x + 1, y + 1),
                        at(&img, x, y + 1),
                        at(&img, x - 1, y + 1),
                        at(&img, x - 1, y),
                        at(&img, x - 1, y - 1),
                    ];
                    let b = n.iter().filter(|&&v| v).count();
                    if !(2..=6).contains(&b) {
                        continue;
                    }
                    let a = (0..8).filter(|&i| !n[i] && n[(i + 1) % 8]).count();
                    if a != 1 {
                        continue;
                    }
                    let (p2, p4, p6, p8) = (n[0], n[2], n[4], n[6]);
                    let ok = if pass == 0 {
                        !(p2 && p4 && p6) && !(p4 && p6 && p8)
                    } else {
                        !(p2 && p4 && p8) && !(p2 && p6 && p8)
                    };
                    if ok {
                        remove.push(y as usize * width + x as usize);
                    }
                }
            }
            changed |= !remove.is_empty();
            for i in remove {
                img[i] = false;
            }
        }
        if !changed {
            return img;
        }
    }
}

/// Streetlights on the traffic-road skeleton, greedily picked in row-major
/// order so that no two are closer than the lamp spacing.
pub fn place_streetlights(layout: &SemanticLayout, spec: &PropScatterSpec) -> Vec<PropEntry> {
    let (w, h, mpp) = (layout.width(), layout.height(), layout.meters_per_pixel());
    let road = LandClass::TrafficRoad.id();
    let mask: Vec<bool> = layout.labels().iter().map(|&l| l == road).collect();
    let skel = skeletonize(w, h, &mask);
    let spacing_px = spec.lamp_spacing_m / mpp;
    let cell = spacing_px.max(1.0);
    let mut grid: HashMap<(i64, i64), Vec<(f64, f64)>> = HashMap::new();
    let mut out = Vec::new();
    for (i, _) in skel.iter().enumerate().filter(|(_, &s)| s) {
        let (x, y) = ((i % w) as f64 + 0.5, (i / w) as f64 + 0.5);
        let (gx, gy) = ((x / cell) as i64, (y / cell) as i64);
        let crowded = (gx - 1..=gx + 1).any(|cx| {
            (gy - 1..=gy + 1).any(|cy| {
                grid.get(&(cx, cy)).is_some_and(|pts| {
                    pts.iter()
                        .any(|&(px, py)| (px - x).powi(2) + (py - y).powi(2) < spacing_px * spacing_px)
                })
            })
        });
        if crowded {
            continue;
        }
        grid.entry((gx, gy)).or_default().push((x, y));
        out.push(PropEntry {
            kind: PropKind::Streetlight,
            position: [x * mpp, (h as f64 - y) * mpp],
            rotation: 0.0,
            scale: 1.0,
            extra: Default::default(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skeleton_of_a_bar_is_one_pixel_wide() {
        let (w, h) = (30, 9);
        let mask: Vec<bool> = (0..w * h).map(|i| (2..7).contains(&(i / w)) && (2..28).contains(&(i % w))).collect();
        let s = skeletonize(w, h, &mask);
        for x in 6..24 {
            let col: usize = (0..h).filter(|&y| s[y * w + x]).count();
            assert_eq!(col, 1, "column {x}");
        }
        assert!(s.iter().zip(&mask).all(|(a, b)| !a || *b));
    }

    #[test]
    fn lamps_respect_spacing() {
        let (w, h) = (200, 20);
        let labels: Vec<u8> = (0..w * h)
            .map(|i| if (8..12).contains(&(i / w)) { LandClass::TrafficRoad.id() } else { 0 })
            .collect();
        let layout = SemanticLayout::new(w, h, labels, 1.0).unwrap();
        let spec = PropScatterSpec::default();
        let lamps = place_streetlights(&layout, &spec);
        assert!((7..=9).contains(&lamps.len()), "{}", lamps.len());
        for (i, a) in lamps.iter().enumerate() {
            for b in &lamps[i + 1..] {
                let d = ((a.position[0] - b.position[0]).powi(2) + (a.position[1] - b.position[1]).powi(2)).sqrt();
                assert!(d >= spec.lamp_spacing_m);
            }
        }
    }
}
