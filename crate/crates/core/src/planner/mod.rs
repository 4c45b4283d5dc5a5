//! Iterative land-use planning over building instances.
//!
//! Each round visits every building once. A query carries the instance's
//! dossier, its neighbors' plans from the previous round, the district prompt
//! and, from round 2 on, the instance's own prior plan. Rounds are
//! transactional: a backend failure leaves the input state untouched.

mod llm;
mod rules;

pub use llm::{parse_reply, LlmBackend, LlmConfig, ParsedReply, ReplayBackend};
pub use rules::{PromptProfile, RuleBackend, RuleConfig};

use crate::instance::{InstanceDossier, InstanceId};
use crate::layout::LandClass;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrimaryFunction {
    Residential,
    Commercial,
    PublicService,
    Healthcare,
    Education,
    Industrial,
    Other,
}

impl PrimaryFunction {
    pub const ALL: [PrimaryFunction; 7] = [
        PrimaryFunction::Residential,
        PrimaryFunction::Commercial,
        PrimaryFunction::PublicService,
        PrimaryFunction::Healthcare,
        PrimaryFunction::Education,
        PrimaryFunction::Industrial,
        PrimaryFunction::Other,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PrimaryFunction::Residential => "residential",
            PrimaryFunction::Commercial => "commercial",
            PrimaryFunction::PublicService => "public_service",
            PrimaryFunction::Healthcare => "healthcare",
            PrimaryFunction::Education => "education",
            PrimaryFunction::Industrial => "industrial",
            PrimaryFunction::Other => "other",
        }
    }
}

impl fmt::Display for PrimaryFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Lowercase, with spaces and hyphens folded to underscores.
fn normalize(s: &str) -> String {
    s.trim()
        .to_ascii_lowercase()
        .replace([' ', '-'], "_")
}

impl FromStr for PrimaryFunction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = normalize(s);
        Self::ALL
            .into_iter()
            .find(|f| f.name() == n)
            .ok_or_else(|| format!("unknown primary function '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizeClass {
    LowRise,
    MidRise,
    HighRise,
}

impl SizeClass {
    pub const ALL: [SizeClass; 3] = [SizeClass::LowRise, SizeClass::MidRise, SizeClass::HighRise];

    pub fn name(self) -> &'static str {
        match self {
            SizeClass::LowRise => "low_rise",
            SizeClass::MidRise => "mid_rise",
            SizeClass::HighRise => "high_rise",
        }
    }

    /// Footprint area thresholds: up to 800 m² low, up to 3000 m² mid.
    pub fn from_area(area_m2: f64) -> Self {
        Self::from_area_with(area_m2, 800.0, 3000.0)
    }

    pub fn from_area_with(area_m2: f64, low_max: f64, mid_max: f64) -> Self {
        if area_m2 <= low_max {
            SizeClass::LowRise
        } else if area_m2 <= mid_max {
            SizeClass::MidRise
        } else {
            SizeClass::HighRise
        }
    }
}

impl fmt::Display for SizeClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SizeClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let n = normalize(s);
        Self::ALL
            .into_iter()
            .find(|c| c.name() == n)
            .ok_or_else(|| format!("unknown size class '{s}'"))
    }
}

/// The content a backend proposes for one instance.
/// Free-text secondary function typical for a function and size.
pub fn typical_secondary(function: PrimaryFunction, size: SizeClass) -> &'static str {
    let tier = match size {
        SizeClass::LowRise => 0,
        SizeClass::MidRise => 1,
        SizeClass::HighRise => 2,
    };
    use PrimaryFunction::*;
    [
        ["house", "apartment", "apartment tower"],
        ["store", "office", "shopping mall"],
        ["police station", "library", "civic center"],
        ["clinic", "medical center", "hospital"],
        ["kindergarten", "school", "university"],
        ["workshop", "warehouse", "factory"],
        ["utility building", "utility building", "utility building"],
    ][match function {
        Residential => 0,
        Commercial => 1,
        PublicService => 2,
        Healthcare => 3,
        Education => 4,
        Industrial => 5,
        Other => 6,
    }][tier]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanDraft {
    pub primary_function: PrimaryFunction,
    pub secondary_function: String,
    pub size_class: SizeClass,
    pub style: String,
    pub reasoning: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePlan {
    pub id: InstanceId,
    pub primary_function: PrimaryFunction,
    pub secondary_function: String,
    pub size_class: SizeClass,
    pub style: String,
    pub reasoning: String,
    pub revision: u32,
}

impl InstancePlan {
    pub fn from_draft(id: InstanceId, draft: PlanDraft, revision: u32) -> Self {
        Self {
            id,
            primary_function: draft.primary_function,
            secondary_function: draft.secondary_function,
            size_class: draft.size_class,
            style: draft.style,
            reasoning: draft.reasoning,
            revision,
        }
    }

    /// Equality over the four fields that count as a change.
    pub fn same_content(&self, draft: &PlanDraft) -> bool {
        self.primary_function == draft.primary_function
            && self.secondary_function == draft.secondary_function
            && self.size_class == draft.size_class
            && self.style == draft.style
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanDecision {
    Keep,
    Plan(PlanDraft),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct GlobalPrompt(String);

impl GlobalPrompt {
    pub fn new(text: impl Into<String>) -> Result<Self, PlanError> {
        let text = text.into();
        if text.trim().is_empty() {
            return Err(PlanError::EmptyPrompt);
        }
        Ok(Self(text))
    }

    pub fn text(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for GlobalPrompt {
    type Error = PlanError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(s)
    }
}

impl From<GlobalPrompt> for String {
    fn from(p: GlobalPrompt) -> Self {
        p.0
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NeighborPlan<'a> {
    pub id: InstanceId,
    pub count: u64,
    pub plan: Option<&'a InstancePlan>,
}

/// Everything a backend sees when planning one instance.
#[derive(Debug, Clone, Serialize)]
pub struct PlanQuery<'a> {
    pub round: u32,
    pub dossier: &'a InstanceDossier,
    pub neighbors: Vec<NeighborPlan<'a>>,
    pub prompt: &'a GlobalPrompt,
    pub prior: Option<&'a InstancePlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendMode {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("timed out: {0}")]
    Timeout(String),
    #[error("authentication failed: {0}")]
    AuthFailure(String),
    #[error("malformed reply: {0}")]
    MalformedReply(String),
    #[error("transport: {0}")]
    Transport(String),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PlanError {
    #[error("planning {instance} failed: {source}")]
    BackendFailure {
        instance: InstanceId,
        source: BackendError,
    },
    #[error("no building plans")]
    NoBuildings,
    #[error("global prompt is empty")]
    EmptyPrompt,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub trait PlannerBackend: Send + Sync {
    fn id(&self) -> &str;
    fn mode(&self) -> BackendMode;
    fn plan(&self, query: &PlanQuery<'_>) -> Result<PlanDecision, BackendError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    pub changes: usize,
    pub total: usize,
}

impl RoundRecord {
    /// changes / total, with an empty round counting as 0.
    pub fn ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.changes as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanningState {
    pub plans: BTreeMap<InstanceId, InstancePlan>,
    pub round: u32,
    pub change_history: Vec<RoundRecord>,
}

impl PlanningState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_round(&self) -> Option<&RoundRecord> {
        self.change_history.last()
    }
}

/// Instances the planner is responsible for.
pub fn is_plannable(id: &InstanceId) -> bool {
    id.class == LandClass::Building
}

/// Run one planning round and return the next state.
pub fn plan_round(
    state: &PlanningState,
    dossiers: &BTreeMap<InstanceId, InstanceDossier>,
    prompt: &GlobalPrompt,
    backend: &dyn PlannerBackend,
) -> Result<PlanningState, PlanError> {
    let round = state.round + 1;
    let ids: Vec<&InstanceDossier> = dossiers.values().filter(|d| is_plannable(&d.id)).collect();

    let decisions: Vec<Result<PlanDecision, BackendError>> = ids
        .par_iter()
        .map(|d| {
            let query = PlanQuery {
                round,
                dossier: d,
                neighbors: d
                    .neighbors
                    .iter()
                    .map(|n| NeighborPlan {
                        id: n.id,
                        count: n.count,
                        plan: state.plans.get(&n.id),
                    })
                    .collect(),
                prompt,
                prior: state.plans.get(&d.id),
            };
            backend.plan(&query)
        })
        .collect();

    let mut plans = BTreeMap::new();
    let mut changes = 0;
    for (d, decision) in ids.iter().zip(decisions) {
        let decision = decision.map_err(|source| PlanError::BackendFailure {
            instance: d.id,
            source,
        })?;
        let prior = state.plans.get(&d.id);
        let plan = match (decision, prior) {
            (PlanDecision::Keep, Some(p)) => p.clone(),
            (PlanDecision::Keep, None) => {
                return Err(PlanError::BackendFailure {
                    instance: d.id,
                    source: BackendError::MalformedReply("keep without a prior plan".into()),
                })
            }
            (PlanDecision::Plan(draft), Some(p)) if p.same_content(&draft) => InstancePlan {
                reasoning: draft.reasoning,
                ..p.clone()
            },
            (PlanDecision::Plan(draft), Some(p)) => {
                changes += 1;
                InstancePlan::from_draft(d.id, draft, p.revision + 1)
            }
            (PlanDecision::Plan(draft), None) => {
                changes += 1;
                InstancePlan::from_draft(d.id, draft, 1)
            }
        };
        plans.insert(d.id, plan);
    }

    let mut change_history = state.change_history.clone();
    change_history.push(RoundRecord {
        round,
        changes,
        total: ids.len(),
    });
    Ok(PlanningState {
        plans,
        round,
        change_history,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanningOutcome {
    pub state: PlanningState,
    pub converged: bool,
}

/// Repeat rounds until the change ratio of some round r ≥ 2 drops below
/// `threshold`, or `max_rounds` is reached. A round with nothing to plan
/// converges immediately.
pub fn run_until_converged(
    dossiers: &BTreeMap<InstanceId, InstanceDossier>,
    prompt: &GlobalPrompt,
    backend: &dyn PlannerBackend,
    threshold: f64,
    max_rounds: u32,
) -> Result<PlanningOutcome, PlanError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(PlanError::InvalidArgument(format!(
            "threshold {threshold} must be in (0, 1)"
        )));
    }
    if max_rounds == 0 {
        return Err(PlanError::InvalidArgument("max_rounds must be at least 1".into()));
    }
    let mut state = PlanningState::new();
    loop {
        state = plan_round(&state, dossiers, prompt, backend)?;
        let last = *state.last_round().expect("a round was just recorded");
        if last.total == 0 || (last.round >= 2 && last.ratio() < threshold) {
            return Ok(PlanningOutcome {
                state,
                converged: true,
            });
        }
        if state.round >= max_rounds {
            return Ok(PlanningOutcome {
                state,
                converged: false,
            });
        }
    }
}

/// Share of each primary function among building plans.
pub fn function_distribution(
    state: &PlanningState,
) -> Result<BTreeMap<PrimaryFunction, f64>, PlanError> {
    let buildings: Vec<&InstancePlan> = state.plans.values().filter(|p| is_plannable(&p.id)).collect();
    if buildings.is_empty() {
        return Err(PlanError::NoBuildings);
    }
    let mut counts: BTreeMap<PrimaryFunction, usize> = BTreeMap::new();
    for p in &buildings {
        *counts.entry(p.primary_function).or_default() += 1;
    }
    let n = buildings.len() as f64;
    Ok(counts.into_iter().map(|(f, c)| (f, c as f64 / n)).collect())
}

pub fn write_plans<'a, W: std::io::Write>(
    mut out: W,
    plans: impl IntoIterator<Item = &'a InstancePlan>,
) -> std::io::Result<()> {
    for p in plans {
        serde_json::to_writer(&mut out, p)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_plans<R: std::io::BufRead>(input: R) -> Result<BTreeMap<InstanceId, InstancePlan>, String> {
    let mut out = BTreeMap::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| e.to_string())?;
        if line.trim().is_empty() {
            continue;
        }
        let p: InstancePlan = serde_json::from_str(&line).map_err(|e| format!("plan line {}: {e}", i + 1))?;
        out.insert(p.id, p);
    }
    Ok(out)
}
