//! The stand-in for the stochastic machine: planners that concretize trigger
//! events into execution specifications under injected context, plus the
//! jurisdictional guardrail that every plan must clear before any step
//! reaches the world.
//!
//! Two planners ship. [`RulePlanner`] is table-driven and fully
//! deterministic. [`SeededStochasticPlanner`] samples uniformly from the
//! context-filtered candidate set with a seeded generator; its support
//! shrinks as context facts ground more of the plan. Both prove the engine
//! is planner-agnostic.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ajd::{ActionPattern, CapabilitySpec, ScopeDecl};
use crate::fact::{ClaimPattern, FactTriple};
use crate::world::ActionInstance;

// ---------------------------------------------------------------------------
// Trigger events and context
// ---------------------------------------------------------------------------

/// The incoming event a mission starts from: a user utterance or a world
/// signal, inherently incomplete.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerEvent {
    pub id: String,
    pub source: String,
    pub payload: String,
    pub tick: u64,
}

const STOPWORDS: &[&str] = &[
    "a", "an", "and", "at", "for", "in", "my", "next", "of", "on", "the", "to", "with",
];

impl TriggerEvent {
    /// Lowercased keyword set of the payload, stopwords removed.
    pub fn keywords(&self) -> Vec<String> {
        let mut words: Vec<String> = self
            .payload
            .split(|c: char| !c.is_alphanumeric() && c != '_')
            .filter(|w| !w.is_empty())
            .map(|w| w.to_lowercase())
            .filter(|w| !STOPWORDS.contains(&w.as_str()))
            .collect();
        words.sort();
        words.dedup();
        words
    }
}

/// Where a retrieved context fact came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenancedFact {
    pub fact: FactTriple,
    pub source: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// Summary of a stored trajectory injected as memory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryRef {
    pub id: String,
    pub tags: Vec<String>,
    pub succeeded: bool,
    /// Claims the trajectory certified; usable as grounding.
    pub delta_claims: Vec<FactTriple>,
}

/// Everything injected into the planner for one cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub contexts: Vec<ProvenancedFact>,
    pub memory: Vec<TrajectoryRef>,
    pub capabilities: Vec<CapabilitySpec>,
    pub scope_excerpt: ScopeDecl,
}

impl ContextBundle {
    /// All facts visible to planning: retrieved contexts plus memory deltas.
    pub fn visible_facts(&self) -> impl Iterator<Item = &FactTriple> {
        self.contexts
            .iter()
            .map(|f| &f.fact)
            .chain(self.memory.iter().flat_map(|t| t.delta_claims.iter()))
    }

    pub fn entails(&self, pattern: &ClaimPattern) -> bool {
        self.visible_facts().any(|f| pattern.matches(f))
    }
}

// ---------------------------------------------------------------------------
// Execution specifications
// ---------------------------------------------------------------------------

/// How a slot binding was justified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingRef {
    Fact { source: String, fact: FactTriple },
    Memory { trajectory: String, fact: FactTriple },
    UserSupplied,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotBinding {
    Unbound,
    Bound(String),
}

impl SlotBinding {
    pub fn is_bound(&self) -> bool {
        matches!(self, SlotBinding::Bound(_))
    }
}

/// The bounded plan manifested for one cycle: ordered steps plus the
/// mandatory slots that gate their execution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutionSpec {
    pub id: String,
    pub cycle: u64,
    pub steps: Vec<ActionInstance>,
    pub mandatory_slots: BTreeMap<String, SlotBinding>,
    pub groundings: BTreeMap<String, Vec<GroundingRef>>,
}

impl ExecutionSpec {
    pub fn unbound_slots(&self) -> usize {
        self.mandatory_slots
            .values()
            .filter(|b| !b.is_bound())
            .count()
    }

    /// Executable as a whole: every mandatory slot bound.
    pub fn is_executable(&self) -> bool {
        self.unbound_slots() == 0
    }

    /// Mandatory slots the given step's capability declares.
    pub fn step_slots<'a>(
        &self,
        step: &ActionInstance,
        capabilities: &'a [CapabilitySpec],
    ) -> Vec<&'a str> {
        capabilities
            .iter()
            .find(|c| c.tool == step.verb && c.target == step.target)
            .map(|c| c.mandatory_slots().map(|s| s.name.as_str()).collect())
            .unwrap_or_default()
    }

    /// True when every mandatory slot this step depends on is bound.
    pub fn step_ready(&self, step: &ActionInstance, capabilities: &[CapabilitySpec]) -> bool {
        self.step_slots(step, capabilities)
            .iter()
            .all(|name| self.mandatory_slots.get(*name).is_some_and(SlotBinding::is_bound))
    }

    /// Step with bound slot values injected as parameters.
    pub fn resolved_step(
        &self,
        step: &ActionInstance,
        capabilities: &[CapabilitySpec],
    ) -> ActionInstance {
        let mut resolved = step.clone();
        for name in self.step_slots(step, capabilities) {
            if let Some(SlotBinding::Bound(value)) = self.mandatory_slots.get(name) {
                resolved
                    .params
                    .entry(name.to_string())
                    .or_insert_with(|| value.clone());
            }
        }
        resolved
    }

    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("spec serializes"));
        let out = hasher.finalize();
        out.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

// ---------------------------------------------------------------------------
// Planner interface and plan rules
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    /// The event cannot be mapped to any capability: insufficient
    /// jurisdictional context, surfaced instead of papered over.
    #[error("no capability covers intent of event {0}")]
    NoCapabilityCoversIntent(String),
    /// A planner emitted a step outside the injected capability set.
    #[error("planner emitted step {0} outside the capability set")]
    StepOutsideCapabilities(String),
}

/// Source of one plan-step parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamSource {
    /// Fixed literal.
    Literal(String),
    /// Finite choice set; a grounding fact fixes it, otherwise the rule
    /// planner takes the first option and the stochastic planner samples.
    Choice {
        choice: Vec<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prefer_from: Option<ClaimPattern>,
    },
    /// Copied from the newest context fact matching the pattern.
    FromFact { from_fact: ClaimPattern },
}

/// One step template in a plan rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRule {
    pub verb: String,
    pub target: String,
    #[serde(default)]
    pub params: BTreeMap<String, ParamSource>,
    /// Emit only while this claim is not yet entailed by the context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub until_fact: Option<ClaimPattern>,
    /// Emit only when this claim is entailed by the context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub require_fact: Option<ClaimPattern>,
    /// Emit only when this claim is absent from the context.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forbid_fact: Option<ClaimPattern>,
}

/// Keyword-gated plan rule: the fixture-shipped mapping from trigger events
/// to capability invocations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanRule {
    pub match_keywords: Vec<String>,
    pub steps: Vec<StepRule>,
}

impl PlanRule {
    fn matches(&self, keywords: &[String]) -> bool {
        self.match_keywords
            .iter()
            .any(|k| keywords.iter().any(|w| w == k))
    }
}

/// A planner turns `(event, context, seed)` into an execution specification.
/// Planners are pure: identical inputs yield identical output.
pub trait Planner {
    fn name(&self) -> &str;

    fn plan(
        &self,
        event: &TriggerEvent,
        context: &ContextBundle,
        cycle: u64,
        seed: u64,
    ) -> Result<ExecutionSpec, PlanError>;

    /// Size of the candidate-plan set for this input: how many distinct
    /// specifications the planner could emit. Grounding facts shrink it.
    fn candidate_support(&self, event: &TriggerEvent, context: &ContextBundle) -> u128 {
        let _ = (event, context);
        1
    }
}

fn step_guard_open(rule: &StepRule, context: &ContextBundle) -> bool {
    if let Some(p) = &rule.until_fact {
        if context.entails(p) {
            return false;
        }
    }
    if let Some(p) = &rule.require_fact {
        if !context.entails(p) {
            return false;
        }
    }
    if let Some(p) = &rule.forbid_fact {
        if context.entails(p) {
            return false;
        }
    }
    true
}

/// Newest visible fact matching the pattern (memory after contexts, so
/// fresher knowledge wins).
fn newest_match<'a>(context: &'a ContextBundle, pattern: &ClaimPattern) -> Option<&'a FactTriple> {
    context.visible_facts().filter(|f| pattern.matches(f)).last()
}

fn open_steps<'a>(rules: &'a [PlanRule], event: &TriggerEvent, context: &ContextBundle) -> Option<Vec<&'a StepRule>> {
    let keywords = event.keywords();
    let matched: Vec<&PlanRule> = rules.iter().filter(|r| r.matches(&keywords)).collect();
    if matched.is_empty() {
        return None;
    }
    Some(
        matched
            .iter()
            .flat_map(|r| r.steps.iter())
            .filter(|s| step_guard_open(s, context))
            .collect(),
    )
}

fn build_spec(
    steps: Vec<ActionInstance>,
    capabilities: &[CapabilitySpec],
    cycle: u64,
) -> ExecutionSpec {
    // Mandatory slots are the union over the planned steps' capabilities.
    let mut slots = BTreeMap::new();
    for step in &steps {
        if let Some(cap) = capabilities
            .iter()
            .find(|c| c.tool == step.verb && c.target == step.target)
        {
            for slot in cap.mandatory_slots() {
                slots.entry(slot.name.clone()).or_insert(SlotBinding::Unbound);
            }
        }
    }
    ExecutionSpec {
        id: format!("s{cycle}"),
        cycle,
        steps,
        mandatory_slots: slots,
        groundings: BTreeMap::new(),
    }
}

fn resolve_params(
    rule: &StepRule,
    context: &ContextBundle,
    mut pick: impl FnMut(&[String]) -> usize,
) -> BTreeMap<String, String> {
    let mut params = BTreeMap::new();
    for (name, source) in &rule.params {
        let value = match source {
            ParamSource::Literal(v) => Some(v.clone()),
            ParamSource::Choice { choice, prefer_from } => {
                let grounded = prefer_from
                    .as_ref()
                    .and_then(|p| newest_match(context, p))
                    .map(|f| f.object.clone())
                    .filter(|v| choice.contains(v));
                match grounded {
                    Some(v) => Some(v),
                    None if choice.is_empty() => None,
                    None => Some(choice[pick(choice)].clone()),
                }
            }
            ParamSource::FromFact { from_fact } => {
                newest_match(context, from_fact).map(|f| f.object.clone())
            }
        };
        if let Some(v) = value {
            params.insert(name.clone(), v);
        }
    }
    params
}

/// Table-driven, fully deterministic planner.
#[derive(Debug, Clone)]
pub struct RulePlanner {
    rules: Vec<PlanRule>,
}

impl RulePlanner {
    pub fn new(rules: Vec<PlanRule>) -> Self {
        Self { rules }
    }
}

impl Planner for RulePlanner {
    fn name(&self) -> &str {
        "rule"
    }

    fn plan(
        &self,
        event: &TriggerEvent,
        context: &ContextBundle,
        cycle: u64,
        _seed: u64,
    ) -> Result<ExecutionSpec, PlanError> {
        if context.capabilities.is_empty() {
            return Err(PlanError::NoCapabilityCoversIntent(event.id.clone()));
        }
        let open = open_steps(&self.rules, event, context)
            .ok_or_else(|| PlanError::NoCapabilityCoversIntent(event.id.clone()))?;
        let steps = open
            .iter()
            .map(|rule| ActionInstance {
                verb: rule.verb.clone(),
                target: rule.target.clone(),
                params: resolve_params(rule, context, |_| 0),
            })
            .collect();
        Ok(build_spec(steps, &context.capabilities, cycle))
    }
}

/// Samples uniformly from the context-filtered candidate set using a
/// splittable seeded generator: free finite parameters are drawn, step order
/// is shuffled. Grounding facts in context fix parameters, so the support
/// size is non-increasing in the number of bound slots.
#[derive(Debug, Clone)]
pub struct SeededStochasticPlanner {
    rules: Vec<PlanRule>,
}

impl SeededStochasticPlanner {
    pub fn new(rules: Vec<PlanRule>) -> Self {
        Self { rules }
    }

    fn rng(event: &TriggerEvent, cycle: u64, seed: u64) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(seed.to_le_bytes());
        hasher.update(cycle.to_le_bytes());
        hasher.update(event.id.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 8];
        key.copy_from_slice(&digest[..8]);
        ChaCha8Rng::seed_from_u64(u64::from_le_bytes(key))
    }
}

impl Planner for SeededStochasticPlanner {
    fn name(&self) -> &str {
        "stochastic"
    }

    fn plan(
        &self,
        event: &TriggerEvent,
        context: &ContextBundle,
        cycle: u64,
        seed: u64,
    ) -> Result<ExecutionSpec, PlanError> {
        if context.capabilities.is_empty() {
            return Err(PlanError::NoCapabilityCoversIntent(event.id.clone()));
        }
        let open = open_steps(&self.rules, event, context)
            .ok_or_else(|| PlanError::NoCapabilityCoversIntent(event.id.clone()))?;
        let mut rng = Self::rng(event, cycle, seed);
        let mut steps: Vec<ActionInstance> = open
            .iter()
            .map(|rule| ActionInstance {
                verb: rule.verb.clone(),
                target: rule.target.clone(),
                params: resolve_params(rule, context, |choices| rng.gen_range(0..choices.len())),
            })
            .collect();
        steps.shuffle(&mut rng);
        Ok(build_spec(steps, &context.capabilities, cycle))
    }

    fn candidate_support(&self, event: &TriggerEvent, context: &ContextBundle) -> u128 {
        let Some(open) = open_steps(&self.rules, event, context) else {
            return 0;
        };
        let mut support: u128 = 1;
        for rule in open {
            for source in rule.params.values() {
                if let ParamSource::Choice { choice, prefer_from } = source {
                    let grounded = prefer_from
                        .as_ref()
                        .and_then(|p| newest_match(context, p))
                        .map(|f| choice.contains(&f.object))
                        .unwrap_or(false);
                    if !grounded && choice.len() > 1 {
                        support = support.saturating_mul(choice.len() as u128);
                    }
                }
            }
        }
        support
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Run the planner and enforce capability closure: every emitted step's
/// (verb, target) must come from the injected capability set.
pub fn inject(
    event: &TriggerEvent,
    context: &ContextBundle,
    planner: &dyn Planner,
    cycle: u64,
    seed: u64,
) -> Result<ExecutionSpec, PlanError> {
    let spec = planner.plan(event, context, cycle, seed)?;
    for step in &spec.steps {
        let known = context
            .capabilities
            .iter()
            .any(|c| c.tool == step.verb && c.target == step.target);
        if !known {
            return Err(PlanError::StepOutsideCapabilities(step.to_string()));
        }
    }
    Ok(spec)
}

/// Why a step was blocked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockReason {
    /// No authority pattern covers the step.
    NoAuthority,
    /// The step matches a negative constraint (deny overrides).
    NegativeConstraint(ActionPattern),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeViolation {
    pub step_index: usize,
    pub step: ActionInstance,
    pub reason: BlockReason,
}

impl fmt::Display for ScopeViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            BlockReason::NoAuthority => write!(f, "step {} has no covering authority", self.step),
            BlockReason::NegativeConstraint(p) => {
                write!(f, "step {} matches negative constraint {p}", self.step)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScopeVerdict {
    Allowed,
    Blocked(Vec<ScopeViolation>),
}

impl ScopeVerdict {
    pub fn is_allowed(&self) -> bool {
        matches!(self, ScopeVerdict::Allowed)
    }
}

/// Check every step against the scope. Negative constraints are evaluated
/// first and override any authority; a step is allowed only when at least
/// one authority pattern covers it and no negative constraint matches.
pub fn check_scope(spec: &ExecutionSpec, scope: &ScopeDecl) -> ScopeVerdict {
    let mut violations = Vec::new();
    for (index, step) in spec.steps.iter().enumerate() {
        let denied = scope
            .negative_constraints
            .iter()
            .find(|p| p.matches(&step.verb, &step.target, &step.params));
        if let Some(constraint) = denied {
            violations.push(ScopeViolation {
                step_index: index,
                step: step.clone(),
                reason: BlockReason::NegativeConstraint(constraint.clone()),
            });
            continue;
        }
        let authorized = scope
            .authorities
            .iter()
            .any(|p| p.matches(&step.verb, &step.target, &step.params));
        if !authorized {
            violations.push(ScopeViolation {
                step_index: index,
                step: step.clone(),
                reason: BlockReason::NoAuthority,
            });
        }
    }
    if violations.is_empty() {
        ScopeVerdict::Allowed
    } else {
        ScopeVerdict::Blocked(violations)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BindError {
    #[error("unknown slot: {0}")]
    UnknownSlot(String),
    #[error("slot {0} is already bound")]
    AlreadyBound(String),
}

/// Bind one mandatory slot, recording its grounding. Returns a new spec;
/// all other fields are unchanged.
pub fn bind_slot(
    spec: &ExecutionSpec,
    slot: &str,
    value: &str,
    grounding: GroundingRef,
) -> Result<ExecutionSpec, BindError> {
    let mut next = spec.clone();
    match next.mandatory_slots.get_mut(slot) {
        None => return Err(BindError::UnknownSlot(slot.to_string())),
        Some(binding @ SlotBinding::Unbound) => {
            *binding = SlotBinding::Bound(value.to_string());
        }
        Some(SlotBinding::Bound(_)) => return Err(BindError::AlreadyBound(slot.to_string())),
    }
    next.groundings.entry(slot.to_string()).or_default().push(grounding);
    Ok(next)
}
