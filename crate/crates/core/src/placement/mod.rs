//! Fit asset footprints onto instance masks.
//!
//! A footprint is the asset's catalog rectangle, scaled uniformly, rotated
//! counter-clockwise (x east, y north) and translated from the mask centroid.
//! A pixel belongs to a footprint when its center lies inside or on the
//! rectangle.

pub mod powell;

pub use powell::{powell_minimize, PowellError, PowellOptions, PowellResult};

use crate::instance::InstanceId;
use crate::retrieval::AssetRecord;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::f64::consts::{FRAC_PI_2, PI};
use std::io::{BufRead, Write};

pub const MIN_SCALE: f64 = 0.3;
pub const MAX_SCALE: f64 = 3.0;
pub const CONVERGED_IOU: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlacementError {
    #[error("instance mask is empty")]
    EmptyMask,
    #[error("footprint dimensions must be positive, got {0:?}")]
    InvalidFootprint([f64; 2]),
    #[error("scaled footprint covers no pixel centers")]
    DegenerateFootprint,
    #[error(transparent)]
    Optimizer(#[from] PowellError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlacementParams {
    pub scale: f64,
    /// Radians, counter-clockwise from east.
    pub rotation: f64,
    /// Offset of the footprint center from the mask centroid, meters east.
    pub tx: f64,
    /// Offset of the footprint center from the mask centroid, meters north.
    pub ty: f64,
}

impl PlacementParams {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            rotation: 0.0,
            tx: 0.0,
            ty: 0.0,
        }
    }

    /// Same rectangle with rotation in (-π/2, π/2].
    pub fn canonical(self) -> Self {
        Self {
            rotation: canonical_rotation(self.rotation),
            ..self
        }
    }
}

/// Wrap an angle into (-π/2, π/2]; rectangles are symmetric under a half turn.
pub fn canonical_rotation(theta: f64) -> f64 {
    let mut t = theta.rem_euclid(PI);
    if t > FRAC_PI_2 {
        t -= PI;
    }
    t
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub instance: InstanceId,
    pub asset_id: String,
    pub params: PlacementParams,
    pub iou: f64,
    pub converged: bool,
}

/// Instance pixels in a bitmap over their bounding box, with per-row prefix counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask {
    x0: i64,
    y0: i64,
    w: usize,
    h: usize,
    bits: Vec<bool>,
    prefix: Vec<u32>,
    count: usize,
    center: [f64; 2],
}

impl Mask {
    /// From (x, y) pixel coordinates; duplicates are ignored.
    pub fn from_pixels(pixels: &[(usize, usize)]) -> Result<Self, PlacementError> {
        let (&(fx, fy), _) = pixels.split_first().ok_or(PlacementError::EmptyMask)?;
        let (mut x0, mut y0, mut x1, mut y1) = (fx, fy, fx, fy);
        for &(x, y) in pixels {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (w, h) = (x1 - x0 + 1, y1 - y0 + 1);
        let mut bits = vec![false; w * h];
        for &(x, y) in pixels {
            bits[(y - y0) * w + (x - x0)] = true;
        }
        let mut prefix = vec![0u32; h * (w + 1)];
        let (mut count, mut sx, mut sy) = (0usize, 0.0, 0.0);
        for r in 0..h {
            for c in 0..w {
                let on = bits[r * w + c];
                prefix[r * (w + 1) + c + 1] = prefix[r * (w + 1) + c] + on as u32;
                if on {
                    count += 1;
                    sx += (x0 + c) as f64;
                    sy += (y0 + r) as f64;
                }
            }
        }
        Ok(Self {
            x0: x0 as i64,
            y0: y0 as i64,
            w,
            h,
            bits,
            prefix,
            count,
            center: [sx / count as f64 + 0.5, sy / count as f64 + 0.5],
        })
    }

    /// From row-major pixel indices of a layout `width` pixels wide.
    pub fn from_indices(indices: &[u32], width: usize) -> Result<Self, PlacementError> {
        let px: Vec<(usize, usize)> = indices
            .iter()
            .map(|&i| (i as usize % width, i as usize / width))
            .collect();
        Self::from_pixels(&px)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Mean pixel center, in pixel units with y down.
    pub fn center(&self) -> [f64; 2] {
        self.center
    }

    pub fn contains(&self, x: i64, y: i64) -> bool {
        let (c, r) = (x - self.x0, y - self.y0);
        c >= 0 && r >= 0 && (c as usize) < self.w && (r as usize) < self.h && self.bits[r as usize * self.w + c as usize]
    }

    /// Mask pixels in row `y` with x in `lo..=hi`.
    fn row_count(&self, y: i64, lo: i64, hi: i64) -> usize {
        let r = y - self.y0;
        if r < 0 || r as usize >= self.h {
            return 0;
        }
        let lo = (lo - self.x0).max(0);
        let hi = (hi - self.x0).min(self.w as i64 - 1);
        if lo > hi {
            return 0;
        }
        let row = &self.prefix[r as usize * (self.w + 1)..];
        (row[hi as usize + 1] - row[lo as usize]) as usize
    }

    /// Direction of the major second-moment axis, radians counter-clockwise from east.
    pub fn principal_angle(&self) -> f64 {
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        for r in 0..self.h {
            for c in 0..self.w {
                if self.bits[r * self.w + c] {
                    let x = (self.x0 + c as i64) as f64 + 0.5 - self.center[0];
                    let y = -((self.y0 + r as i64) as f64 + 0.5 - self.center[1]);
                    sxx += x * x;
                    syy += y * y;
                    sxy += x * y;
                }
            }
        }
        0.5 * (2.0 * sxy).atan2(sxx - syy)
    }
}

/// Footprint rectangle in pixel units.
#[derive(Debug, Clone, Copy)]
struct Frame {
    cx: f64,
    cy: f64,
    cos: f64,
    sin: f64,
    hw: f64,
    hd: f64,
}

impl Frame {
    fn new(center: [f64; 2], dims_m: [f64; 2], p: &PlacementParams, mpp: f64) -> Self {
        Self {
            cx: center[0] + p.tx / mpp,
            cy: center[1] - p.ty / mpp,
            cos: p.rotation.cos(),
            sin: p.rotation.sin(),
            hw: p.scale * dims_m[0] / (2.0 * mpp),
            hd: p.scale * dims_m[1] / (2.0 * mpp),
        }
    }

    /// Local (u, v) of pixel (x, y)'s center.
    fn uv(&self, x: i64, y: i64) -> (f64, f64) {
        let dx = x as f64 + 0.5 - self.cx;
        let dy = -(y as f64 + 0.5 - self.cy);
        (dx * self.cos + dy * self.sin, -dx * self.sin + dy * self.cos)
    }

    fn inside(&self, x: i64, y: i64) -> bool {
        let (u, v) = self.uv(x, y);
        u.abs() <= self.hw && v.abs() <= self.hd
    }

    /// Pixel index bounds that can hold a center within `pad` of the rectangle.
    fn bounds(&self, pad: f64) -> (i64, i64, i64, i64) {
        let ex = self.cos.abs() * self.hw + self.sin.abs() * self.hd + pad;
        let ey = self.sin.abs() * self.hw + self.cos.abs() * self.hd + pad;
        (
            (self.cx - ex - 0.5).floor() as i64 - 1,
            (self.cy - ey - 0.5).floor() as i64 - 1,
            (self.cx + ex - 0.5).ceil() as i64 + 1,
            (self.cy + ey - 0.5).ceil() as i64 + 1,
        )
    }
}

fn check_dims(dims_m: [f64; 2]) -> Result<(), PlacementError> {
    if dims_m.iter().all(|d| d.is_finite() && *d > 0.0) {
        Ok(())
    } else {
        Err(PlacementError::InvalidFootprint(dims_m))
    }
}

/// Pixels whose centers fall inside the placed footprint, relative to a mask
/// whose centroid is `center`.
pub fn footprint_pixels(center: [f64; 2], dims_m: [f64; 2], params: &PlacementParams, mpp: f64) -> Vec<(i64, i64)> {
    let fr = Frame::new(center, dims_m, params, mpp);
    let (x0, y0, x1, y1) = fr.bounds(0.0);
    let mut out = Vec::new();
    for y in y0..=y1 {
        for x in x0..=x1 {
            if fr.inside(x, y) {
                out.push((x, y));
            }
        }
    }
    out
}

/// Exact pixel IoU between the mask and the placed footprint.
pub fn footprint_iou(mask: &Mask, dims_m: [f64; 2], params: &PlacementParams, mpp: f64) -> Result<f64, PlacementError> {
    check_dims(dims_m)?;
    let px = footprint_pixels(mask.center, dims_m, params, mpp);
    if px.is_empty() {
        return Err(PlacementError::DegenerateFootprint);
    }
    let inter = px.iter().filter(|&&(x, y)| mask.contains(x, y)).count();
    Ok(inter as f64 / (mask.count + px.len() - inter) as f64)
}

/// Open interval of x where |a + b x| < r, or None when empty.
fn band(a: f64, b: f64, r: f64) -> Option<(f64, f64)> {
    if r <= 0.0 {
        return None;
    }
    if b.abs() < 1e-12 {
        return (a.abs() < r).then_some((f64::NEG_INFINITY, f64::INFINITY));
    }
    let (p, q) = ((-r - a) / b, (r - a) / b);
    Some(if p < q { (p, q) } else { (q, p) })
}

fn pixel_range(u: Option<(f64, f64)>, v: Option<(f64, f64)>, lo: i64, hi: i64) -> Option<(i64, i64)> {
    let (ul, uh) = u?;
    let (vl, vh) = v?;
    let a = (ul.max(vl).ceil() as i64).max(lo);
    let b = (uh.min(vh).floor() as i64).min(hi);
    (a <= b).then_some((a, b))
}

/// IoU with each pixel weighted by its approximate area coverage, continuous
/// in the parameters. Work per call is proportional to the footprint's perimeter.
fn soft_iou(mask: &Mask, fr: &Frame) -> f64 {
    let (x0, y0, x1, y1) = fr.bounds(1.0);
    let cover = |x: i64, y: i64| {
        let (u, v) = fr.uv(x, y);
        (fr.hw - u.abs() + 0.5).clamp(0.0, 1.0) * (fr.hd - v.abs() + 0.5).clamp(0.0, 1.0)
    };
    let (mut inter, mut total) = (0.0, 0.0);
    for y in y0..=y1 {
        let dy = -(y as f64 + 0.5 - fr.cy);
        // pixel x's center offset is (x + 0.5 - cx)
        let ua = (0.5 - fr.cx) * fr.cos + dy * fr.sin;
        let va = -(0.5 - fr.cx) * fr.sin + dy * fr.cos;
        let (ub, vb) = (fr.cos, -fr.sin);
        let Some((o0, o1)) = pixel_range(band(ua, ub, fr.hw + 0.5), band(va, vb, fr.hd + 0.5), x0, x1) else {
            continue;
        };
        let inner = pixel_range(band(ua, ub, fr.hw - 0.5), band(va, vb, fr.hd - 0.5), o0, o1);
        let (e0, e1) = inner.unwrap_or((o1 + 1, o1));
        for x in (o0..e0).chain(e1 + 1..=o1) {
            let c = cover(x, y);
            total += c;
            if mask.contains(x, y) {
                inter += c;
            }
        }
        if let Some((n0, n1)) = inner {
            total += (n1 - n0 + 1) as f64;
            inter += mask.row_count(y, n0, n1) as f64;
        }
    }
    let union = mask.count as f64 + total - inter;
    if union > 0.0 {
        inter / union
    } else {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementOptions {
    pub powell: PowellOptions,
    pub min_scale: f64,
    pub max_scale: f64,
    /// Start rotations, degrees added to the mask's principal axis.
    pub start_offsets_deg: Vec<f64>,
}

impl Default for PlacementOptions {
    fn default() -> Self {
        Self {
            powell: PowellOptions::default(),
            min_scale: MIN_SCALE,
            max_scale: MAX_SCALE,
            start_offsets_deg: vec![0.0, 45.0, 90.0, 135.0],
        }
    }
}

/// Fit a rectangle of `dims_m` to `mask`, maximizing IoU over scale,
/// rotation and translation.
pub fn fit_footprint(
    mask: &Mask,
    dims_m: [f64; 2],
    mpp: f64,
    opts: &PlacementOptions,
) -> Result<(PlacementParams, f64), PlacementError> {
    check_dims(dims_m)?;
    let (lo, hi) = (opts.min_scale, opts.max_scale);
    let mask_area = mask.count as f64 * mpp * mpp;
    // translations are searched in units of the mask's linear size
    let ell = mask_area.sqrt();
    let s0 = (mask_area / (dims_m[0] * dims_m[1])).sqrt().clamp(lo, hi);
    let axis = mask.principal_angle() + if dims_m[0] >= dims_m[1] { 0.0 } else { FRAC_PI_2 };
    let decode = |x: &[f64]| PlacementParams {
        scale: x[0].clamp(lo, hi),
        rotation: x[1],
        tx: x[2] * ell,
        ty: x[3] * ell,
    };
    let mut objective = |x: &[f64]| {
        let p = decode(x);
        let over = x[0] - p.scale;
        1.0 - soft_iou(mask, &Frame::new(mask.center, dims_m, &p, mpp)) + 10.0 * over * over
    };
    let mut best: Option<(f64, f64, PlacementParams)> = None;
    for off in &opts.start_offsets_deg {
        let x0 = [s0, axis + off.to_radians(), 0.0, 0.0];
        let r = powell_minimize(&mut objective, &x0, &opts.powell)?;
        let params = decode(&r.x).canonical();
        let iou = match footprint_iou(mask, dims_m, &params, mpp) {
            Ok(v) => v,
            Err(PlacementError::DegenerateFootprint) => continue,
            Err(e) => return Err(e),
        };
        let better = match &best {
            None => true,
            Some((bi, bf, _)) => iou > *bi || (iou == *bi && r.f < *bf),
        };
        if better {
            best = Some((iou, r.f, params));
        }
    }
    best.map(|(iou, _, p)| (p, iou))
        .ok_or(PlacementError::DegenerateFootprint)
}

/// Place `asset` on the instance mask.
pub fn place_asset(
    instance: InstanceId,
    mask: &Mask,
    asset: &AssetRecord,
    mpp: f64,
    opts: &PlacementOptions,
) -> Result<Placement, PlacementError> {
    let (params, iou) = fit_footprint(mask, asset.footprint_dims_m, mpp, opts)?;
    Ok(Placement {
        instance,
        asset_id: asset.asset_id.clone(),
        params,
        iou,
        converged: iou >= CONVERGED_IOU,
    })
}

/// A placement with what is needed to re-rasterize it.
#[derive(Debug, Clone)]
pub struct Fitted {
    pub placement: Placement,
    pub mask: Mask,
    pub dims_m: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    /// The shrunk placement.
    pub instance: InstanceId,
    pub against: InstanceId,
    pub shrink_steps: u32,
    pub resolved: bool,
}

pub const COLLISION_SHARE: f64 = 0.05;
pub const SHRINK_FACTOR: f64 = 0.95;

/// Shrink later placements (ascending instance id) that overlap an earlier one
/// by more than 5% of the smaller footprint. IoU and `converged` are refreshed
/// for every shrunk placement.
pub fn resolve_collisions(items: &mut [Fitted], mpp: f64, min_scale: f64) -> Vec<CollisionEvent> {
    items.sort_by_key(|f| f.placement.instance);
    let raster = |f: &Fitted| -> HashSet<(i64, i64)> {
        footprint_pixels(f.mask.center, f.dims_m, &f.placement.params, mpp)
            .into_iter()
            .collect()
    };
    let mut sets: Vec<HashSet<(i64, i64)>> = Vec::with_capacity(items.len());
    let mut events = Vec::new();
    for j in 0..items.len() {
        let mut mine = raster(&items[j]);
        for i in 0..j {
            let collides = |a: &HashSet<(i64, i64)>, b: &HashSet<(i64, i64)>| {
                let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
                let overlap = small.iter().filter(|p| large.contains(p)).count();
                overlap as f64 > COLLISION_SHARE * small.len() as f64
            };
            if !collides(&sets[i], &mine) {
                continue;
            }
            let mut steps = 0;
            let mut resolved = false;
            while items[j].placement.params.scale > min_scale {
                let p = &mut items[j].placement.params;
                p.scale = (p.scale * SHRINK_FACTOR).max(min_scale);
                steps += 1;
                mine = raster(&items[j]);
                if !collides(&sets[i], &mine) {
                    resolved = true;
                    break;
                }
            }
            let f = &mut items[j];
            f.placement.iou = footprint_iou(&f.mask, f.dims_m, &f.placement.params, mpp).unwrap_or(0.0);
            f.placement.converged = f.placement.iou >= CONVERGED_IOU;
            events.push(CollisionEvent {
                instance: f.placement.instance,
                against: items[i].placement.instance,
                shrink_steps: steps,
                resolved,
            });
        }
        sets.push(mine);
    }
    events
}

pub fn write_placements<'a, W: Write>(
    mut out: W,
    items: impl IntoIterator<Item = &'a Placement>,
) -> std::io::Result<()> {
    for p in items {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_placements<R: BufRead>(input: R) -> Result<Vec<Placement>, String> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| format!("placement line {}: {e}", i + 1))?);
    }
    Ok(out)
}
