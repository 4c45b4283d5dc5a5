//! Seeded synthetic asset libraries for tests, fixtures and benchmarks.

use super::embed::{normalize, PseudoEmbedder, Space, TextEmbedder};
use super::{AssetRecord, Catalog};
pub use crate::planner::typical_secondary as secondary_for;
use crate::planner::{PrimaryFunction, SizeClass};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub const STYLES: [&str; 8] = [
    "modern",
    "brick",
    "glass",
    "classical",
    "concrete",
    "timber",
    "art deco",
    "industrial",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_assets: usize,
    pub seed: u64,
    pub d_img: usize,
    pub d_txt: usize,
    pub n_views: usize,
    /// Standard deviation of per-view noise before renormalization.
    pub view_noise: f64,
}

impl SynthSpec {
    pub fn new(n_assets: usize, seed: u64) -> Self {
        Self {
            n_assets,
            seed,
            d_img: 32,
            d_txt: 32,
            n_views: 12,
            view_noise: 0.3,
        }
    }
}

/// The three text aspects shared by assets and queries: function, style, scale.
pub fn aspect_texts(
    function: PrimaryFunction,
    secondary: &str,
    style: &str,
    size: SizeClass,
) -> [String; 3] {
    [
        format!("{function} {secondary}"),
        format!("{style} architecture"),
        format!("{size} building"),
    ]
}

/// Caption used for the image slot.
pub fn image_caption(function: PrimaryFunction, secondary: &str, style: &str, size: SizeClass) -> String {
    format!("a {style} {secondary} {function} {size} building")
}

fn to_f32_unit(v: &[f64]) -> Vec<f32> {
    let mut f: Vec<f32> = v.iter().map(|&x| x as f32).collect();
    // renormalize after rounding so the stored vector is unit in f32
    let n = f.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    f.iter_mut().for_each(|x| *x = (*x as f64 / n) as f32);
    f
}

pub fn synthetic_catalog(spec: &SynthSpec) -> Catalog {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let emb = PseudoEmbedder;
    // residential-heavy mix, like a real building library
    let weights = [0.35, 0.25, 0.12, 0.08, 0.08, 0.08, 0.04];
    let mut assets = Vec::with_capacity(spec.n_assets);
    for i in 0..spec.n_assets {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut function = PrimaryFunction::Other;
        for (f, w) in PrimaryFunction::ALL.iter().zip(weights) {
            acc += w;
            if u < acc {
                function = *f;
                break;
            }
        }
        let size = SizeClass::ALL[rng.random_range(0..3)];
        let (floors, side) = match size {
            SizeClass::LowRise => (rng.random_range(1..=3), 8.0..25.0),
            SizeClass::MidRise => (rng.random_range(4..=12), 15.0..40.0),
            SizeClass::HighRise => (rng.random_range(13..=40), 20.0..60.0),
        };
        let w: f64 = rng.random_range(side.clone());
        let d: f64 = rng.random_range(side);
        let style = STYLES[rng.random_range(0..STYLES.len())];
        let secondary = secondary_for(function, size);
        let annotations = aspect_texts(function, secondary, style, size).to_vec();
        let text_embeddings = annotations
            .iter()
            .map(|t| to_f32_unit(&emb.embed(t, Space::Text, spec.d_txt)))
            .collect();
        let base = emb.embed(&image_caption(function, secondary, style, size), Space::Image, spec.d_img);
        let view_embeddings = (0..spec.n_views.max(1))
            .map(|_| {
                let mut v: Vec<f64> = base
                    .iter()
                    .map(|&b| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        b + spec.view_noise * z / (spec.d_img as f64).sqrt()
                    })
                    .collect();
                normalize(&mut v);
                to_f32_unit(&v)
            })
            .collect();
        assets.push(AssetRecord {
            asset_id: format!("asset_{i:05}"),
            function,
            size_class: size,
            floors,
            footprint_dims_m: [(w * 10.0).round() / 10.0, (d * 10.0).round() / 10.0],
            style: style.to_string(),
            annotations,
            mesh: None,
            view_embeddings,
            text_embeddings,
        });
    }
    Catalog {
        d_img: spec.d_img,
        d_txt: spec.d_txt,
        assets,
    }
}
