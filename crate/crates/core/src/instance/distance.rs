//! Exact Euclidean distance transform (separable squared-distance method).

use crate::layout::{LandClass, SemanticLayout};

/// Stand-in for "no target" inside the transform; large but finite so the
/// parabola intersections stay well defined; FAR + d² stays exact below 2^53.
const FAR: f64 = 1e15;

/// Distances in meters from each pixel center to the nearest target pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceField {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl DistanceField {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn at_index(&self, i: usize) -> f64 {
        self.values[i]
    }
}

/// One-dimensional lower envelope of parabolas rooted at `f`.
fn transform_1d(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let n = f.len();
    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        let qf = q as f64;
        let mut s;
        loop {
            let pf = v[k] as f64;
            s = ((f[q] + qf * qf) - (f[v[k]] + pf * pf)) / (2.0 * qf - 2.0 * pf);
            // z[0] is -inf, so this never pops below the first parabola
            if s > z[k] {
                break;
            }
            k -= 1;
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while z[k + 1] < qf {
            k += 1;
        }
        let d = qf - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Distance transform of an arbitrary target mask.
pub fn distance_transform_mask(
    width: usize,
    height: usize,
    mask: &[bool],
    meters_per_pixel: f64,
) -> DistanceField {
    assert_eq!(mask.len(), width * height);
    if !mask.iter().any(|&m| m) {
        return DistanceField {
            width,
            height,
            values: vec![f64::INFINITY; width * height],
        };
    }
    let n = width.max(height);
    let mut v = vec![0usize; n];
    let mut z = vec![0f64; n + 1];
    let mut f = vec![0f64; n];
    let mut out = vec![0f64; n];
    let mut sq: Vec<f64> = mask.iter().map(|&m| if m { 0.0 } else { FAR }).collect();

    for x in 0..width {
        for y in 0..height {
            f[y] = sq[y * width + x];
        }
        transform_1d(&f[..height], &mut out[..height], &mut v, &mut z);
        for y in 0..height {
            sq[y * width + x] = out[y];
        }
    }
    for y in 0..height {
        let row = &mut sq[y * width..(y + 1) * width];
        f[..width].copy_from_slice(row);
        transform_1d(&f[..width], &mut out[..width], &mut v, &mut z);
        row.copy_from_slice(&out[..width]);
    }
    DistanceField {
        width,
        height,
        values: sq.into_iter().map(|d| d.sqrt() * meters_per_pixel).collect(),
    }
}

/// Distance from every pixel to the nearest pixel of `target`; all +∞ when the
/// class is absent.
pub fn distance_transform(layout: &SemanticLayout, target: LandClass) -> DistanceField {
    let id = target.id();
    let mask: Vec<bool> = layout.labels().iter().map(|&l| l == id).collect();
    distance_transform_mask(
        layout.width(),
        layout.height(),
        &mask,
        layout.meters_per_pixel(),
    )
}
