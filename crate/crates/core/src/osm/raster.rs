use super::{ClassifiedFeature, Geometry, OsmError, Point};
use crate::layout::{LandClass, SemanticLayout};

/// Placement of the output raster in local metric coordinates.
///
/// `origin` is the outer corner of the top-left (north-west) pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterWindow {
    pub origin: Point,
    pub width: usize,
    pub height: usize,
    pub meters_per_pixel: f64,
}

impl RasterWindow {
    /// Window of `size`×`size` pixels centred on the projection center.
    pub fn centered(size: usize, meters_per_pixel: f64) -> Self {
        let half = size as f64 * meters_per_pixel / 2.0;
        Self {
            origin: Point::new(-half, half),
            width: size,
            height: size,
            meters_per_pixel,
        }
    }

    #[inline]
    pub fn pixel_center(&self, col: usize, row: usize) -> Point {
        Point::new(
            self.origin.x + (col as f64 + 0.5) * self.meters_per_pixel,
            self.origin.y - (row as f64 + 0.5) * self.meters_per_pixel,
        )
    }

    /// Pixel columns/rows whose centers may fall in [min, max] metric bounds.
    fn pixel_span(&self, min: Point, max: Point) -> Option<(usize, usize, usize, usize)> {
        let m = self.meters_per_pixel;
        let c0 = ((min.x - self.origin.x) / m - 0.5).ceil().max(0.0);
        let c1 = ((max.x - self.origin.x) / m - 0.5).floor();
        let r0 = ((self.origin.y - max.y) / m - 0.5).ceil().max(0.0);
        let r1 = ((self.origin.y - min.y) / m - 0.5).floor();
        if c1 < c0 || r1 < r0 || c0 >= self.width as f64 || r0 >= self.height as f64 {
            return None;
        }
        let c1 = c1.min(self.width as f64 - 1.0);
        let r1 = r1.min(self.height as f64 - 1.0);
        Some((c0 as usize, c1 as usize, r0 as usize, r1 as usize))
    }
}

fn bounds(points: &[Point], pad: f64) -> (Point, Point) {
    let mut min = Point::new(f64::INFINITY, f64::INFINITY);
    let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
    for p in points {
        min.x = min.x.min(p.x);
        min.y = min.y.min(p.y);
        max.x = max.x.max(p.x);
        max.y = max.y.max(p.y);
    }
    (
        Point::new(min.x - pad, min.y - pad),
        Point::new(max.x + pad, max.y + pad),
    )
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point, b: Point, p: Point) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let o1 = orient(a, b, c);
    let o2 = orient(a, b, d);
    let o3 = orient(c, d, a);
    let o4 = orient(c, d, b);
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0))
        && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0))
    {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c))
        || (o2 == 0.0 && on_segment(a, b, d))
        || (o3 == 0.0 && on_segment(c, d, a))
        || (o4 == 0.0 && on_segment(c, d, b))
}

/// True when two non-adjacent edges of the ring touch or cross.
pub(crate) fn ring_self_intersects(ring: &[Point]) -> bool {
    let n = ring.len();
    if n < 4 {
        return false;
    }
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (c, d) = (ring[j], ring[(j + 1) % n]);
            if segments_intersect(a, b, c, d) {
                return true;
            }
        }
    }
    false
}

/// Even-odd crossing test with half-open edges.
#[cfg(test)]
fn point_in_ring(ring: &[Point], p: Point) -> bool {
    let mut inside = false;
    let n = ring.len();
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
    }
    inside
}

pub(crate) fn distance_to_segment(a: Point, b: Point, p: Point) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.x + t * dx, a.y + t * dy);
    ((p.x - qx).powi(2) + (p.y - qy).powi(2)).sqrt()
}

fn fill_polygon(labels: &mut [u8], window: &RasterWindow, ring: &[Point], id: u8) {
    let (min, max) = bounds(ring, 0.0);
    let Some((c0, c1, r0, r1)) = window.pixel_span(min, max) else {
        return;
    };
    let n = ring.len();
    let mut xs = Vec::new();
    for row in r0..=r1 {
        let y = window.pixel_center(0, row).y;
        xs.clear();
        for i in 0..n {
            let (a, b) = (ring[i], ring[(i + 1) % n]);
            if (a.y > y) != (b.y > y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        // a center is inside when an odd number of crossings lie strictly to its right
        let mut right = 0;
        for col in c0..=c1 {
            let x = window.pixel_center(col, row).x;
            while right < xs.len() && xs[right] <= x {
                right += 1;
            }
            if (xs.len() - right) % 2 == 1 {
                labels[row * window.width + col] = id;
            }
        }
    }
}

fn stroke_polyline(labels: &mut [u8], window: &RasterWindow, points: &[Point], width_m: f64, id: u8) {
    let half = width_m / 2.0;
    for seg in points.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let (min, max) = bounds(&[a, b], half);
        let Some((c0, c1, r0, r1)) = window.pixel_span(min, max) else {
            continue;
        };
        for row in r0..=r1 {
            for col in c0..=c1 {
                if distance_to_segment(a, b, window.pixel_center(col, row)) <= half {
                    labels[row * window.width + col] = id;
                }
            }
        }
    }
}

/// Paint features onto a ground background in ascending priority; ties keep
/// input order, so later features overwrite earlier ones. A pixel belongs to
/// a polygon when its center is inside, and to a polyline when its center is
/// within half the stroke width of some segment.
pub fn rasterize(
    features: &[ClassifiedFeature],
    window: &RasterWindow,
) -> Result<SemanticLayout, OsmError> {
    if window.width == 0 || window.height == 0 {
        return Err(OsmError::InvalidWindow("size must be at least 1".into()));
    }
    if !(window.meters_per_pixel.is_finite() && window.meters_per_pixel > 0.0) {
        return Err(OsmError::InvalidWindow("meters_per_pixel must be positive".into()));
    }
    for f in features {
        if let Geometry::Polygon(ring) = &f.geometry {
            if ring_self_intersects(ring) {
                return Err(OsmError::SelfIntersectingRing(f.way_id));
            }
        }
    }
    let mut order: Vec<&ClassifiedFeature> = features.iter().collect();
    order.sort_by_key(|f| f.priority);

    let mut labels = vec![LandClass::Ground.id(); window.width * window.height];
    for f in order {
        match &f.geometry {
            Geometry::Polygon(ring) => fill_polygon(&mut labels, window, ring, f.class.id()),
            Geometry::Polyline { points, width_m } => {
                stroke_polyline(&mut labels, window, points, *width_m, f.class.id())
            }
        }
    }
    SemanticLayout::new(window.width, window.height, labels, window.meters_per_pixel)
        .map_err(|e| OsmError::InvalidWindow(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, side: f64) -> Vec<Point> {
        vec![
            Point::new(x0, y0),
            Point::new(x0 + side, y0),
            Point::new(x0 + side, y0 + side),
            Point::new(x0, y0 + side),
        ]
    }

    fn poly(ring: Vec<Point>, class: LandClass, priority: u8) -> ClassifiedFeature {
        ClassifiedFeature {
            way_id: 1,
            geometry: Geometry::Polygon(ring),
            class,
            priority,
        }
    }

    fn window(size: usize) -> RasterWindow {
        // origin at (0, size*0.5): the raster covers [0, extent) east and north
        RasterWindow {
            origin: Point::new(0.0, size as f64 * 0.5),
            width: size,
            height: size,
            meters_per_pixel: 0.5,
        }
    }

    #[test]
    fn ten_meter_building_is_400_pixels() {
        let f = poly(square(0.0, 0.0, 10.0), LandClass::Building, 5);
        let layout = rasterize(&[f], &window(64)).unwrap();
        assert_eq!(layout.class_counts()[LandClass::Building as usize], 400);
    }

    #[test]
    fn no_features_is_all_ground() {
        let layout = rasterize(&[], &window(16)).unwrap();
        assert_eq!(layout.class_counts()[0], 256);
    }

    #[test]
    fn higher_priority_wins_and_matches_point_in_polygon() {
        let water = square(2.0, 2.0, 12.0);
        let building = square(8.3, 7.1, 9.0);
        let features = vec![
            poly(building.clone(), LandClass::Building, 5),
            poly(water.clone(), LandClass::Water, 2),
        ];
        let w = window(48);
        let layout = rasterize(&features, &w).unwrap();
        for row in 0..w.height {
            for col in 0..w.width {
                let c = w.pixel_center(col, row);
                let expected = if point_in_ring(&building, c) {
                    LandClass::Building
                } else if point_in_ring(&water, c) {
                    LandClass::Water
                } else {
                    LandClass::Ground
                };
                assert_eq!(layout.class_at(col, row), expected, "pixel {col},{row}");
            }
        }
    }

    #[test]
    fn self_intersecting_ring_rejected() {
        let bowtie = vec![
            Point::new(0.0, 0.0),
            Point::new(10.0, 10.0),
            Point::new(10.0, 0.0),
            Point::new(0.0, 10.0),
        ];
        let mut f = poly(bowtie, LandClass::Building, 5);
        f.way_id = 42;
        assert_eq!(
            rasterize(&[f], &window(8)),
            Err(OsmError::SelfIntersectingRing(42))
        );
    }

    #[test]
    fn stroke_width_rows() {
        let road = ClassifiedFeature {
            way_id: 2,
            geometry: Geometry::Polyline {
                points: vec![Point::new(-5.0, 8.0), Point::new(40.0, 8.0)],
                width_m: 6.0,
            },
            class: LandClass::TrafficRoad,
            priority: 4,
        };
        let layout = rasterize(&[road], &window(32)).unwrap();
        // 6 m at 0.5 m/px on a pixel-boundary centerline is 12 full rows
        assert_eq!(layout.class_counts()[LandClass::TrafficRoad as usize], 12 * 32);
    }

    #[test]
    fn invalid_window() {
        let mut w = window(4);
        w.meters_per_pixel = 0.0;
        assert!(rasterize(&[], &w).is_err());
    }
}
