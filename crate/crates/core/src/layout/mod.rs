//! Semantic layout rasters: the 7-class palette, the label raster itself,
//! per-class area ratios and the generation condition that carries them.

mod codec;
mod metrics;

pub use codec::{decode_png, encode_png, parse_ratio_line, ratio_line};
pub use metrics::average_class_error;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Number of semantic classes in every layout.
pub const NUM_CLASSES: usize = 7;

/// Canonical patch edge length in pixels.
pub const PATCH_SIZE: usize = 768;

/// Default ground sampling distance.
pub const DEFAULT_METERS_PER_PIXEL: f64 = 0.5;

/// Tolerance used when validating that ratios sum to one.
pub const RATIO_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LayoutError {
    #[error("layout dimensions must be at least 1x1, got {width}x{height}")]
    EmptyLayout { width: usize, height: usize },
    #[error("label buffer has {got} entries, expected {expected}")]
    LabelCount { expected: usize, got: usize },
    #[error("invalid class id {id} at index {index}")]
    InvalidClass { index: usize, id: u8 },
    #[error("meters_per_pixel must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("ratio entry {index} = {value} outside [0, 1]")]
    RatioOutOfRange { index: usize, value: f64 },
    #[error("ratios sum to {0}, expected 1")]
    RatioSum(f64),
    #[error("pixel ({x}, {y}) has color {rgb:?} which is not in the palette")]
    UnknownColor { x: usize, y: usize, rgb: [u8; 3] },
    #[error("png: {0}")]
    Png(String),
    #[error("ratio line: {0}")]
    RatioParse(String),
    #[error("ratio lists differ in length ({targets} vs {generated}) or are empty")]
    LengthMismatch { targets: usize, generated: usize },
}

/// One of the seven land classes. The discriminant is the class id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum LandClass {
    Ground = 0,
    Vegetation = 1,
    Building = 2,
    Rail = 3,
    TrafficRoad = 4,
    Footpath = 5,
    Water = 6,
}

impl LandClass {
    pub const ALL: [LandClass; NUM_CLASSES] = [
        LandClass::Ground,
        LandClass::Vegetation,
        LandClass::Building,
        LandClass::Rail,
        LandClass::TrafficRoad,
        LandClass::Footpath,
        LandClass::Water,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            LandClass::Ground => "ground",
            LandClass::Vegetation => "vegetation",
            LandClass::Building => "building",
            LandClass::Rail => "rail",
            LandClass::TrafficRoad => "traffic_road",
            LandClass::Footpath => "footpath",
            LandClass::Water => "water",
        }
    }

    /// Palette color of the class.
    pub fn color(self) -> [u8; 3] {
        PALETTE[self as usize]
    }

    pub fn from_color(rgb: [u8; 3]) -> Option<Self> {
        PALETTE
            .iter()
            .position(|c| *c == rgb)
            .map(|i| Self::ALL[i])
    }
}

impl fmt::Display for LandClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LandClass {
    type Err = String;

    /// Accepts canonical names plus a few aliases seen in source data.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        let class = match key.as_str() {
            "ground" | "terrain" => LandClass::Ground,
            "vegetation" => LandClass::Vegetation,
            "building" => LandClass::Building,
            "rail" | "railway" => LandClass::Rail,
            "traffic_road" | "traffic_roads" | "road" => LandClass::TrafficRoad,
            "footpath" => LandClass::Footpath,
            "water" => LandClass::Water,
            _ => return Err(format!("unknown class name '{s}'")),
        };
        Ok(class)
    }
}

/// Fixed RGB palette, indexed by class id.
pub const PALETTE: [[u8; 3]; NUM_CLASSES] = [
    [85, 107, 47],
    [0, 255, 0],
    [255, 165, 0],
    [255, 0, 255],
    [200, 200, 200],
    [255, 255, 0],
    [0, 191, 255],
];

/// A raster of class ids with a ground sampling distance.
///
/// Labels are stored row-major; row 0 is the northernmost row.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticLayout {
    width: usize,
    height: usize,
    labels: Vec<u8>,
    meters_per_pixel: f64,
}

impl SemanticLayout {
    pub fn new(
        width: usize,
        height: usize,
        labels: Vec<u8>,
        meters_per_pixel: f64,
    ) -> Result<Self, LayoutError> {
        if width == 0 || height == 0 {
            return Err(LayoutError::EmptyLayout { width, height });
        }
        if labels.len() != width * height {
            return Err(LayoutError::LabelCount {
                expected: width * height,
                got: labels.len(),
            });
        }
        if !(meters_per_pixel.is_finite() && meters_per_pixel > 0.0) {
            return Err(LayoutError::InvalidScale(meters_per_pixel));
        }
        if let Some(index) = labels.iter().position(|&l| l as usize >= NUM_CLASSES) {
            return Err(LayoutError::InvalidClass {
                index,
                id: labels[index],
            });
        }
        Ok(Self {
            width,
            height,
            labels,
            meters_per_pixel,
        })
    }

    /// Layout filled with a single class.
    pub fn filled(
        width: usize,
        height: usize,
        class: LandClass,
        meters_per_pixel: f64,
    ) -> Result<Self, LayoutError> {
        Self::new(width, height, vec![class.id(); width * height], meters_per_pixel)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn meters_per_pixel(&self) -> f64 {
        self.meters_per_pixel
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn into_labels(self) -> Vec<u8> {
        self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.labels[y * self.width + x]
    }

    #[inline]
    pub fn class_at(&self, x: usize, y: usize) -> LandClass {
        LandClass::ALL[self.get(x, y) as usize]
    }

    /// Extent in meters as (east, north).
    pub fn extent_m(&self) -> (f64, f64) {
        (
            self.width as f64 * self.meters_per_pixel,
            self.height as f64 * self.meters_per_pixel,
        )
    }

    /// Per-class pixel counts.
    pub fn class_counts(&self) -> [u64; NUM_CLASSES] {
        let mut counts = [0u64; NUM_CLASSES];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Copy out a sub-rectangle. The caller guarantees it is in range.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> SemanticLayout {
        assert!(x0 + w <= self.width && y0 + h <= self.height, "crop out of range");
        let mut labels = Vec::with_capacity(w * h);
        for y in y0..y0 + h {
            let row = y * self.width;
            labels.extend_from_slice(&self.labels[row + x0..row + x0 + w]);
        }
        SemanticLayout {
            width: w,
            height: h,
            labels,
            meters_per_pixel: self.meters_per_pixel,
        }
    }

    /// Fraction of pixels of each class.
    pub fn ratios(&self) -> ClassRatios {
        compute_ratios(self)
    }
}

/// Per-class area fractions of a layout.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassRatios([f64; NUM_CLASSES]);

impl ClassRatios {
    pub fn new(ratios: [f64; NUM_CLASSES]) -> Result<Self, LayoutError> {
        for (index, &value) in ratios.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(LayoutError::RatioOutOfRange { index, value });
            }
        }
        let sum: f64 = ratios.iter().sum();
        if (sum - 1.0).abs() > RATIO_SUM_TOLERANCE {
            return Err(LayoutError::RatioSum(sum));
        }
        Ok(Self(ratios))
    }

    /// Normalizes non-negative weights into ratios.
    pub fn from_weights(weights: [f64; NUM_CLASSES]) -> Result<Self, LayoutError> {
        if let Some(index) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LayoutError::RatioOutOfRange {
                index,
                value: weights[index],
            });
        }
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(LayoutError::RatioSum(sum));
        }
        Self::new(weights.map(|w| w / sum))
    }

    pub fn as_array(&self) -> &[f64; NUM_CLASSES] {
        &self.0
    }

    pub fn get(&self, class: LandClass) -> f64 {
        self.0[class as usize]
    }
}

impl TryFrom<Vec<f64>> for ClassRatios {
    type Error = LayoutError;

    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        let arr: [f64; NUM_CLASSES] = v.try_into().map_err(|v: Vec<f64>| {
            LayoutError::RatioParse(format!("expected {NUM_CLASSES} entries, got {}", v.len()))
        })?;
        Self::new(arr)
    }
}

impl From<ClassRatios> for Vec<f64> {
    fn from(r: ClassRatios) -> Self {
        r.0.to_vec()
    }
}

/// Conditioning inputs for a layout generator.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GenerationCondition {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ratios: Option<ClassRatios>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    pub seed: u64,
}

impl GenerationCondition {
    pub fn unconditional(seed: u64) -> Self {
        Self {
            ratios: None,
            text: None,
            seed,
        }
    }

    pub fn with_ratios(mut self, ratios: ClassRatios) -> Self {
        self.ratios = Some(ratios);
        self
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Per-class area fractions: count of each class over the pixel total.
pub fn compute_ratios(layout: &SemanticLayout) -> ClassRatios {
    let counts = layout.class_counts();
    let total = layout.len() as f64;
    ClassRatios(counts.map(|c| c as f64 / total))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn palette_is_unique_and_complete() {
        for (i, class) in LandClass::ALL.iter().enumerate() {
            assert_eq!(class.id() as usize, i);
            assert_eq!(LandClass::from_color(class.color()), Some(*class));
        }
        let mut colors = PALETTE.to_vec();
        colors.sort();
        colors.dedup();
        assert_eq!(colors.len(), NUM_CLASSES);
        assert_eq!(LandClass::Water.color(), [0, 191, 255]);
        assert_eq!(LandClass::Ground.color(), [85, 107, 47]);
    }

    #[test]
    fn terrain_alias_maps_to_ground() {
        assert_eq!("terrain".parse::<LandClass>(), Ok(LandClass::Ground));
        assert_eq!("Traffic Roads".parse::<LandClass>(), Ok(LandClass::TrafficRoad));
        assert!("lava".parse::<LandClass>().is_err());
    }

    #[test]
    fn ratios_two_by_two() {
        let b = LandClass::Building.id();
        let w = LandClass::Water.id();
        let layout = SemanticLayout::new(2, 2, vec![b, b, w, w], 0.5).unwrap();
        let r = compute_ratios(&layout);
        assert_eq!(r.get(LandClass::Building), 0.5);
        assert_eq!(r.get(LandClass::Water), 0.5);
        assert_eq!(r.as_array().iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn ratios_uniform_ground() {
        let layout = SemanticLayout::filled(5, 3, LandClass::Ground, 0.5).unwrap();
        let r = compute_ratios(&layout);
        assert_eq!(r.get(LandClass::Ground), 1.0);
        assert!(LandClass::ALL[1..].iter().all(|c| r.get(*c) == 0.0));
    }

    #[test]
    fn rejects_invalid_layouts() {
        assert!(matches!(
            SemanticLayout::new(0, 3, vec![], 0.5),
            Err(LayoutError::EmptyLayout { .. })
        ));
        assert!(matches!(
            SemanticLayout::new(2, 2, vec![0; 3], 0.5),
            Err(LayoutError::LabelCount { .. })
        ));
        assert_eq!(
            SemanticLayout::new(2, 1, vec![0, 7], 0.5),
            Err(LayoutError::InvalidClass { index: 1, id: 7 })
        );
        assert!(matches!(
            SemanticLayout::new(1, 1, vec![0], -1.0),
            Err(LayoutError::InvalidScale(_))
        ));
    }

    #[test]
    fn ratio_validation() {
        assert!(ClassRatios::new([0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).is_ok());
        assert!(matches!(
            ClassRatios::new([0.5, 0.6, 0.0, 0.0, 0.0, 0.0, -0.1]),
            Err(LayoutError::RatioOutOfRange { index: 6, .. })
        ));
        assert!(matches!(
            ClassRatios::new([0.5, 0.4, 0.0, 0.0, 0.0, 0.0, 0.0]),
            Err(LayoutError::RatioSum(_))
        ));
        let r = ClassRatios::from_weights([2.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(r.get(LandClass::Building), 0.5);
    }

    #[test]
    fn crop_copies_rows() {
        let labels: Vec<u8> = (0..12).map(|i| (i % 7) as u8).collect();
        let layout = SemanticLayout::new(4, 3, labels, 1.0).unwrap();
        let c = layout.crop(1, 1, 2, 2);
        assert_eq!(c.labels(), &[5, 6, 2, 3]);
    }
}
