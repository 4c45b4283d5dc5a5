//! Deterministic rule-table planner.
//!
//! Commercial prompt: street-facing parcels of at least `commercial_min_area_m2`
//! become commercial, very large parcels public service, and from round 2 a
//! street-facing residential parcel whose planned neighbors are mostly
//! non-residential converts to commercial. Residential prompt: large
//! street-facing parcels become public service. In both, parcels farther than
//! `far_from_road_m` from any road stay residential, and the remainder is
//! spread over functions by a per-instance hash against the jitter shares.

use super::{
    typical_secondary,
    BackendError, BackendMode, PlanDecision, PlanDraft, PlanQuery, PlannerBackend, PrimaryFunction,
    SizeClass,
};
use crate::instance::InstanceId;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptProfile {
    Residential,
    Commercial,
}

impl PromptProfile {
    pub fn from_prompt(text: &str) -> Self {
        let t = text.to_ascii_lowercase();
        let commercial = ["commercial", "business", "downtown", "retail", "shopping"];
        if commercial.iter().any(|w| t.contains(w)) {
            PromptProfile::Commercial
        } else {
            PromptProfile::Residential
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RuleConfig {
    /// Salt for the per-instance jitter hash.
    pub seed: u64,
    /// A parcel this close to a road counts as street-facing.
    pub frontage_m: f64,
    pub commercial_min_area_m2: f64,
    pub public_min_area_m2: f64,
    pub far_from_road_m: f64,
    /// Neighbor-weighted non-residential share that converts a street-facing
    /// residential parcel under the commercial prompt.
    pub conversion_share: f64,
    pub commercial_jitter: BTreeMap<PrimaryFunction, f64>,
    pub residential_jitter: BTreeMap<PrimaryFunction, f64>,
    pub low_rise_max_m2: f64,
    pub mid_rise_max_m2: f64,
}

impl Default for RuleConfig {
    fn default() -> Self {
        use PrimaryFunction::*;
        Self {
            seed: 0,
            frontage_m: 6.0,
            commercial_min_area_m2: 1500.0,
            public_min_area_m2: 4000.0,
            far_from_road_m: 30.0,
            conversion_share: 0.5,
            commercial_jitter: BTreeMap::from([
                (Commercial, 0.25),
                (PublicService, 0.40),
                (Healthcare, 0.10),
            ]),
            residential_jitter: BTreeMap::from([
                (Commercial, 0.11),
                (PublicService, 0.13),
                (Healthcare, 0.08),
                (Education, 0.05),
            ]),
            low_rise_max_m2: 800.0,
            mid_rise_max_m2: 3000.0,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RuleBackend {
    pub config: RuleConfig,
}

impl RuleBackend {
    pub fn new(config: RuleConfig) -> Self {
        Self { config }
    }

    /// Uniform value in [0, 1) from the instance id, salt and stream tag.
    fn hash01(&self, id: InstanceId, stream: &str) -> f64 {
        let mut h = Sha256::new();
        h.update(self.config.seed.to_le_bytes());
        h.update(stream.as_bytes());
        h.update(id.to_string().as_bytes());
        let d = h.finalize();
        let v = u64::from_le_bytes(d[..8].try_into().unwrap());
        (v >> 11) as f64 / (1u64 << 53) as f64
    }

    fn jitter(&self, table: &BTreeMap<PrimaryFunction, f64>, u: f64) -> Option<PrimaryFunction> {
        let mut acc = 0.0;
        for (&f, &share) in table {
            acc += share;
            if u < acc {
                return Some(f);
            }
        }
        None
    }

    /// The rule-table function and a short justification.
    pub fn decide(&self, query: &PlanQuery<'_>) -> (PrimaryFunction, String) {
        let c = &self.config;
        let d = query.dossier;
        let area = d.area_m2;
        let dist = d.distance_to_road_m;
        let street = dist <= c.frontage_m;
        let u = self.hash01(d.id, "function");
        let profile = PromptProfile::from_prompt(query.prompt.text());
        use PrimaryFunction::*;
        match profile {
            PromptProfile::Commercial => {
                if street && area >= c.commercial_min_area_m2 {
                    return (Commercial, "large street-facing parcel in a commercial district".into());
                }
                if area >= c.public_min_area_m2 {
                    return (PublicService, "parcel large enough for a civic facility".into());
                }
                if dist > c.far_from_road_m {
                    return (Residential, "secluded parcel away from traffic".into());
                }
                if let Some(f) = self.jitter(&c.commercial_jitter, u) {
                    return (f, format!("district mix assigns {f}"));
                }
                if query.round >= 2 && street {
                    let (mut other, mut total) = (0u64, 0u64);
                    for n in &query.neighbors {
                        if let Some(p) = n.plan {
                            total += n.count;
                            if p.primary_function != Residential {
                                other += n.count;
                            }
                        }
                    }
                    if total > 0 && other as f64 >= c.conversion_share * total as f64 {
                        return (Commercial, "street frontage among non-residential neighbors".into());
                    }
                }
                (Residential, "housing fills the remaining parcels".into())
            }
            PromptProfile::Residential => {
                if street && area >= c.public_min_area_m2 {
                    return (PublicService, "large street-facing parcel serves the neighborhood".into());
                }
                if dist > c.far_from_road_m {
                    return (Residential, "secluded parcel away from traffic".into());
                }
                if let Some(f) = self.jitter(&c.residential_jitter, u) {
                    return (f, format!("neighborhood services include {f}"));
                }
                (Residential, "residential district".into())
            }
        }
    }

    fn draft(&self, query: &PlanQuery<'_>, function: PrimaryFunction, why: String) -> PlanDraft {
        let c = &self.config;
        let d = query.dossier;
        let size = SizeClass::from_area_with(d.area_m2, c.low_rise_max_m2, c.mid_rise_max_m2);
        let secondary = typical_secondary(function, size);
        const STYLES: [&str; 5] = ["modern", "brick", "glass", "classical", "concrete"];
        let style = STYLES[(self.hash01(d.id, "style") * STYLES.len() as f64) as usize];
        let road = if d.distance_to_road_m.is_finite() {
            format!("{:.1} m from road", d.distance_to_road_m)
        } else {
            "no road".to_string()
        };
        PlanDraft {
            primary_function: function,
            secondary_function: secondary.to_string(),
            size_class: size,
            style: style.to_string(),
            reasoning: format!("{:.0} m², {road}: {why}", d.area_m2),
        }
    }
}

impl PlannerBackend for RuleBackend {
    fn id(&self) -> &str {
        "rules"
    }

    fn mode(&self) -> BackendMode {
        BackendMode::Deterministic
    }

    fn plan(&self, query: &PlanQuery<'_>) -> Result<PlanDecision, BackendError> {
        let (function, why) = self.decide(query);
        if let Some(prior) = query.prior {
            if prior.primary_function == function {
                return Ok(PlanDecision::Keep);
            }
        }
        Ok(PlanDecision::Plan(self.draft(query, function, why)))
    }
}
