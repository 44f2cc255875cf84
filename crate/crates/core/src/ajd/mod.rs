//! Agentic Job Description documents: the engineering contract that bounds a
//! job performer.
//!
//! An AJD has exactly five components — mission, workplace, scope,
//! operational context, and evaluation method — carried as UTF-8 JSON with
//! those top-level keys plus `meta`. [`parse_ajd`] is strict about structural
//! well-formedness (all components present, references resolving, domain ids
//! unique, role/kind coherence); [`validate_ajd`] reports cross-component
//! semantic violations such as capabilities aimed at lexical domains or
//! requirement predicates no evidence channel can ever produce; [`lint_ajd`]
//! emits advisories for contracts that are valid but risky.

mod diagram;

pub use diagram::export_apf_diagram;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fact::{ClaimPattern, FactTriple};

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Identifier of a workplace domain.
pub type DomainId = String;

/// Response characteristic of a workplace domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainKind {
    /// Reacts deterministically to commands (APIs, hardware).
    Causal,
    /// Autonomous; may refuse. Controlled by bidding and confirmation.
    Biddable,
    /// Static information source; knowledge, never a control target.
    Lexical,
}

impl fmt::Display for DomainKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainKind::Causal => write!(f, "causal"),
            DomainKind::Biddable => write!(f, "biddable"),
            DomainKind::Lexical => write!(f, "lexical"),
        }
    }
}

/// Function a domain plays for the performer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DomainRole {
    ContextSource,
    InteractionTarget,
    VerificationChannel,
}

impl fmt::Display for DomainRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainRole::ContextSource => write!(f, "context_source"),
            DomainRole::InteractionTarget => write!(f, "interaction_target"),
            DomainRole::VerificationChannel => write!(f, "verification_channel"),
        }
    }
}

/// A workplace domain declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainDecl {
    pub id: DomainId,
    pub kind: DomainKind,
    #[serde(default)]
    pub roles: BTreeSet<DomainRole>,
    #[serde(default)]
    pub description: String,
}

/// One machine-checkable requirement: a claim pattern the ledger must entail.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementPredicate {
    pub id: String,
    pub target: DomainId,
    pub claim: ClaimPattern,
}

/// Mission component: goal prose plus the predicates that operationalize it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementSpec {
    pub goal_statement: String,
    pub predicates: Vec<RequirementPredicate>,
}

/// Constraint on one action parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamConstraint {
    pub name: String,
    #[serde(flatten)]
    pub matcher: ParamMatcher,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamMatcher {
    Equals(String),
    NotEquals(String),
    /// Parameter must be present (any value).
    Present(bool),
    /// Parameter must be absent.
    Absent(bool),
    /// Parameter parses as an integer strictly greater than the bound.
    Gt(i64),
    /// Parameter parses as an integer strictly less than the bound.
    Lt(i64),
}

impl ParamMatcher {
    fn satisfied_by(&self, value: Option<&str>) -> bool {
        match self {
            ParamMatcher::Equals(want) => value == Some(want.as_str()),
            ParamMatcher::NotEquals(want) => value.is_some_and(|v| v != want),
            ParamMatcher::Present(_) => value.is_some(),
            ParamMatcher::Absent(_) => value.is_none(),
            ParamMatcher::Gt(bound) => value
                .and_then(|v| v.parse::<i64>().ok())
                .is_some_and(|v| v > *bound),
            ParamMatcher::Lt(bound) => value
                .and_then(|v| v.parse::<i64>().ok())
                .is_some_and(|v| v < *bound),
        }
    }
}

/// A verb + target-domain pattern with parameter constraints, used for both
/// authorities and negative constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionPattern {
    pub verb: String,
    pub domain: DomainId,
    #[serde(default)]
    pub params: Vec<ParamConstraint>,
}

impl ActionPattern {
    /// Exact on verb and domain, predicate-based on parameters.
    pub fn matches(&self, verb: &str, domain: &str, params: &BTreeMap<String, String>) -> bool {
        self.verb == verb
            && self.domain == domain
            && self
                .params
                .iter()
                .all(|c| c.matcher.satisfied_by(params.get(&c.name).map(String::as_str)))
    }
}

impl fmt::Display for ActionPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb, self.domain)?;
        for c in &self.params {
            write!(f, "[{}]", c.name)?;
        }
        Ok(())
    }
}

/// A machine declared subordinate to this performer (e.g. an edge reflex
/// agent). The contract format permits any number; most jobs declare none.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubPerformer {
    pub id: String,
    #[serde(default)]
    pub description: String,
}

/// Scope component: identity, authorities, and negative constraints.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScopeDecl {
    pub identity: String,
    pub authorities: Vec<ActionPattern>,
    pub negative_constraints: Vec<ActionPattern>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sub_performers: Vec<SubPerformer>,
}

/// Knowledge-source reference: a lexical domain plus a tag filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSourceRef {
    pub domain: DomainId,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// Trajectory-store reference with its retrieval tag filter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemoryRef {
    pub store: String,
    #[serde(default)]
    pub tags: Vec<String>,
}

/// One declared tool parameter. Mandatory parameters are the execution
/// specification's slots: a step cannot run until they are bound, and
/// `bind_from` names the fact pattern a binding may be grounded in.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    #[serde(default)]
    pub mandatory: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bind_from: Option<ClaimPattern>,
}

/// A tool the performer may project onto the workplace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CapabilitySpec {
    pub tool: String,
    pub target: DomainId,
    #[serde(default)]
    pub params: Vec<SlotSpec>,
    #[serde(default)]
    pub side_effects: bool,
    /// What a naive performer would take on faith from a bare receipt.
    /// Consulted only when verification channels are disabled; the mismatch
    /// audit exists to catch exactly these.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub assumes: Vec<FactTriple>,
}

impl CapabilitySpec {
    pub fn mandatory_slots(&self) -> impl Iterator<Item = &SlotSpec> {
        self.params.iter().filter(|p| p.mandatory)
    }
}

/// Operational-context component: what gets injected at runtime.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextDecl {
    pub contexts: Vec<ContextSourceRef>,
    pub memory: MemoryRef,
    pub capabilities: Vec<CapabilitySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CallbackMode {
    /// Feedback over a designed path (a logged callback emission).
    Explicit,
    /// Detected by observing environmental side effects.
    Implicit,
}

/// Fact-verification channel declaration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallbackSpec {
    pub id: String,
    pub channel: DomainId,
    pub mode: CallbackMode,
    /// Which claims events on this channel can verify.
    pub matches: ClaimPattern,
    pub timeout_ticks: u64,
}

/// Value-verification channel declaration: approval by a distinct party.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmSpec {
    pub id: String,
    pub approver: DomainId,
    pub proposal_kind: String,
    /// Which claims a verdict from this approver can certify.
    pub certifies: ClaimPattern,
    /// Facts quoted into the proposal, by ledger lookup.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub proposal_params: Vec<ProposalParam>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalParam {
    pub name: String,
    pub from_fact: ClaimPattern,
}

/// Evaluation-method component: the epistemic acquisition rules.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationDecl {
    #[serde(default)]
    pub callbacks: Vec<CallbackSpec>,
    #[serde(default)]
    pub confirms: Vec<ConfirmSpec>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AjdMeta {
    pub name: String,
    pub version: String,
}

/// The parsed five-component job contract.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AjdSpec {
    pub meta: AjdMeta,
    pub mission: RequirementSpec,
    pub workplace: Vec<DomainDecl>,
    pub scope: ScopeDecl,
    pub operational_context: ContextDecl,
    pub evaluation: EvaluationDecl,
}

impl AjdSpec {
    pub fn domain(&self, id: &str) -> Option<&DomainDecl> {
        self.workplace.iter().find(|d| d.id == id)
    }

    pub fn capability(&self, verb: &str, target: &str) -> Option<&CapabilitySpec> {
        self.operational_context
            .capabilities
            .iter()
            .find(|c| c.tool == verb && c.target == target)
    }

    /// Evidence channels whose coverage declaration reaches `claim`.
    pub fn channels_covering(&self, claim: &FactTriple) -> CoveringChannels<'_> {
        CoveringChannels {
            callbacks: self
                .evaluation
                .callbacks
                .iter()
                .filter(|cb| cb.matches.matches(claim))
                .collect(),
            confirms: self
                .evaluation
                .confirms
                .iter()
                .filter(|cf| cf.certifies.matches(claim))
                .collect(),
        }
    }

    /// Total mandatory slots declared across all capabilities.
    pub fn declared_mandatory_slots(&self) -> usize {
        self.operational_context
            .capabilities
            .iter()
            .flat_map(|c| c.mandatory_slots())
            .count()
    }
}

/// Borrowed view of the channels that can certify one claim.
pub struct CoveringChannels<'a> {
    pub callbacks: Vec<&'a CallbackSpec>,
    pub confirms: Vec<&'a ConfirmSpec>,
}

impl CoveringChannels<'_> {
    pub fn is_empty(&self) -> bool {
        self.callbacks.is_empty() && self.confirms.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Errors rejected at parse time. Parsing is total over valid documents:
/// a returned `AjdSpec` satisfies every structural invariant.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("malformed document: {0}")]
    MalformedDocument(String),
    #[error("missing component: {0}")]
    MissingComponent(String),
    #[error("unknown domain kind: {0}")]
    UnknownDomainKind(String),
    #[error("dangling domain reference: {0}")]
    DanglingDomainRef(String),
    #[error("duplicate domain id: {0}")]
    DuplicateDomainId(String),
    #[error("domain {domain} of kind {kind} cannot carry role {role}")]
    InvalidDomainRole {
        domain: String,
        kind: DomainKind,
        role: DomainRole,
    },
    #[error("pattern {0} appears in both authorities and negative constraints")]
    ConflictingScopePattern(String),
}

// Permissive raw layer; presence and coherence are checked by hand so that
// error messages name the missing or offending component.
#[derive(Deserialize)]
struct RawAjd {
    meta: Option<AjdMeta>,
    mission: Option<RawMission>,
    workplace: Option<Vec<RawDomain>>,
    scope: Option<ScopeDecl>,
    operational_context: Option<ContextDecl>,
    evaluation: Option<EvaluationDecl>,
}

#[derive(Deserialize)]
struct RawMission {
    goal_statement: Option<String>,
    predicates: Option<Vec<RequirementPredicate>>,
}

#[derive(Deserialize)]
struct RawDomain {
    id: String,
    kind: String,
    #[serde(default)]
    roles: BTreeSet<DomainRole>,
    #[serde(default)]
    description: String,
}

/// Parse an AJD document. Deterministic; strict about structure.
pub fn parse_ajd(document: &[u8]) -> Result<AjdSpec, ParseError> {
    let text = std::str::from_utf8(document)
        .map_err(|e| ParseError::MalformedDocument(e.to_string()))?;
    let raw: RawAjd =
        serde_json::from_str(text).map_err(|e| ParseError::MalformedDocument(e.to_string()))?;

    let meta = raw.meta.ok_or(ParseError::MissingComponent("meta".into()))?;
    let raw_mission = raw
        .mission
        .ok_or(ParseError::MissingComponent("mission".into()))?;
    let workplace_raw = raw
        .workplace
        .ok_or(ParseError::MissingComponent("workplace".into()))?;
    let scope = raw
        .scope
        .ok_or(ParseError::MissingComponent("scope".into()))?;
    let operational_context = raw
        .operational_context
        .ok_or(ParseError::MissingComponent("operational_context".into()))?;
    let evaluation = raw
        .evaluation
        .ok_or(ParseError::MissingComponent("evaluation".into()))?;

    let goal_statement = raw_mission
        .goal_statement
        .ok_or(ParseError::MissingComponent("mission.goal_statement".into()))?;
    let predicates = raw_mission
        .predicates
        .ok_or(ParseError::MissingComponent("mission.predicates".into()))?;
    if predicates.is_empty() {
        // A mission with nothing checkable is a degenerate contract.
        return Err(ParseError::MissingComponent("mission.predicates".into()));
    }
    let mission = RequirementSpec {
        goal_statement,
        predicates,
    };

    if evaluation.callbacks.is_empty() && evaluation.confirms.is_empty() {
        return Err(ParseError::MissingComponent("evaluation.channels".into()));
    }

    let mut workplace = Vec::with_capacity(workplace_raw.len());
    let mut seen = BTreeSet::new();
    for d in workplace_raw {
        let kind = match d.kind.as_str() {
            "causal" => DomainKind::Causal,
            "biddable" => DomainKind::Biddable,
            "lexical" => DomainKind::Lexical,
            other => return Err(ParseError::UnknownDomainKind(other.to_string())),
        };
        if !seen.insert(d.id.clone()) {
            return Err(ParseError::DuplicateDomainId(d.id));
        }
        if kind == DomainKind::Lexical {
            for role in [DomainRole::InteractionTarget, DomainRole::VerificationChannel] {
                if d.roles.contains(&role) {
                    return Err(ParseError::InvalidDomainRole {
                        domain: d.id,
                        kind,
                        role,
                    });
                }
            }
        }
        workplace.push(DomainDecl {
            id: d.id,
            kind,
            roles: d.roles,
            description: d.description,
        });
    }

    let spec = AjdSpec {
        meta,
        mission,
        workplace,
        scope,
        operational_context,
        evaluation,
    };

    // Referential integrity across all components.
    for (id, site) in referenced_domains(&spec) {
        if spec.domain(&id).is_none() {
            return Err(ParseError::DanglingDomainRef(format!("{id} ({site})")));
        }
    }

    // Authorities and negative constraints must be disjoint pattern sets.
    for auth in &spec.scope.authorities {
        if spec.scope.negative_constraints.contains(auth) {
            return Err(ParseError::ConflictingScopePattern(auth.to_string()));
        }
    }

    Ok(spec)
}

/// Serialize an AJD back to its document form. `parse_ajd` of the output
/// yields a structurally equal spec.
pub fn serialize_ajd(spec: &AjdSpec) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(spec).expect("AJD serialization cannot fail");
    out.push(b'\n');
    out
}

fn referenced_domains(spec: &AjdSpec) -> Vec<(String, &'static str)> {
    let mut refs = Vec::new();
    for p in &spec.mission.predicates {
        refs.push((p.target.clone(), "mission.predicates"));
    }
    for a in spec
        .scope
        .authorities
        .iter()
        .chain(&spec.scope.negative_constraints)
    {
        refs.push((a.domain.clone(), "scope"));
    }
    for c in &spec.operational_context.contexts {
        refs.push((c.domain.clone(), "operational_context.contexts"));
    }
    for c in &spec.operational_context.capabilities {
        refs.push((c.target.clone(), "operational_context.capabilities"));
    }
    for cb in &spec.evaluation.callbacks {
        refs.push((cb.channel.clone(), "evaluation.callbacks"));
    }
    for cf in &spec.evaluation.confirms {
        refs.push((cf.approver.clone(), "evaluation.confirms"));
    }
    refs
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A semantic violation found by [`validate_ajd`]. Violations are report
/// entries, not failures; an empty report means the contract is sound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    UnresolvedDomainRef { site: String, id: DomainId },
    DuplicateDomainId(DomainId),
    /// Lexical domains are knowledge sources, never control targets.
    CapabilityOnLexical { tool: String, domain: DomainId },
    ContextSourceNotLexical { domain: DomainId },
    ApproverNotBiddable { confirm: String, domain: DomainId },
    /// No callback or confirm can ever produce this predicate's claim.
    UnverifiablePredicate(String),
    InvalidRole { domain: DomainId, role: DomainRole },
    EmptyPredicates,
    EmptyEvaluation,
    ScopePatternConflict(String),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnresolvedDomainRef { site, id } => {
                write!(f, "unresolved domain reference {id} at {site}")
            }
            Violation::DuplicateDomainId(id) => write!(f, "duplicate domain id {id}"),
            Violation::CapabilityOnLexical { tool, domain } => {
                write!(f, "capability {tool} targets lexical domain {domain}")
            }
            Violation::ContextSourceNotLexical { domain } => {
                write!(f, "context source {domain} is not a lexical domain")
            }
            Violation::ApproverNotBiddable { confirm, domain } => {
                write!(f, "confirm {confirm} approver {domain} is not biddable")
            }
            Violation::UnverifiablePredicate(id) => {
                write!(f, "predicate {id} has no covering evidence channel")
            }
            Violation::InvalidRole { domain, role } => {
                write!(f, "domain {domain} cannot carry role {role}")
            }
            Violation::EmptyPredicates => write!(f, "mission has no predicates"),
            Violation::EmptyEvaluation => write!(f, "evaluation declares no channels"),
            Violation::ScopePatternConflict(p) => {
                write!(f, "pattern {p} is both authority and negative constraint")
            }
        }
    }
}

/// Result of cross-component validation.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Validate a spec, including ones constructed programmatically rather than
/// parsed. Deterministic and insensitive to domain declaration order.
pub fn validate_ajd(spec: &AjdSpec) -> ValidationReport {
    let mut violations = Vec::new();

    let mut seen = BTreeSet::new();
    for d in &spec.workplace {
        if !seen.insert(&d.id) {
            violations.push(Violation::DuplicateDomainId(d.id.clone()));
        }
        if d.kind == DomainKind::Lexical {
            for role in [DomainRole::InteractionTarget, DomainRole::VerificationChannel] {
                if d.roles.contains(&role) {
                    violations.push(Violation::InvalidRole {
                        domain: d.id.clone(),
                        role,
                    });
                }
            }
        }
    }

    for (id, site) in referenced_domains(spec) {
        if spec.domain(&id).is_none() {
            violations.push(Violation::UnresolvedDomainRef {
                site: site.to_string(),
                id,
            });
        }
    }

    if spec.mission.predicates.is_empty() {
        violations.push(Violation::EmptyPredicates);
    }
    if spec.evaluation.callbacks.is_empty() && spec.evaluation.confirms.is_empty() {
        violations.push(Violation::EmptyEvaluation);
    }

    for cap in &spec.operational_context.capabilities {
        if let Some(d) = spec.domain(&cap.target) {
            if d.kind == DomainKind::Lexical {
                violations.push(Violation::CapabilityOnLexical {
                    tool: cap.tool.clone(),
                    domain: cap.target.clone(),
                });
            }
        }
    }

    for src in &spec.operational_context.contexts {
        if let Some(d) = spec.domain(&src.domain) {
            if d.kind != DomainKind::Lexical {
                violations.push(Violation::ContextSourceNotLexical {
                    domain: src.domain.clone(),
                });
            }
        }
    }

    for cf in &spec.evaluation.confirms {
        if let Some(d) = spec.domain(&cf.approver) {
            if d.kind != DomainKind::Biddable {
                violations.push(Violation::ApproverNotBiddable {
                    confirm: cf.id.clone(),
                    domain: cf.approver.clone(),
                });
            }
        }
    }

    // Schema-level verifiability: some channel's declaration overlaps the
    // predicate's claim pattern. Runtime refusals are out of static reach.
    for p in &spec.mission.predicates {
        let covered = spec
            .evaluation
            .callbacks
            .iter()
            .any(|cb| cb.matches.overlaps(&p.claim))
            || spec
                .evaluation
                .confirms
                .iter()
                .any(|cf| cf.certifies.overlaps(&p.claim));
        if !covered {
            violations.push(Violation::UnverifiablePredicate(p.id.clone()));
        }
    }

    for auth in &spec.scope.authorities {
        if spec.scope.negative_constraints.contains(auth) {
            violations.push(Violation::ScopePatternConflict(auth.to_string()));
        }
    }

    violations.sort_by_key(|v| format!("{v:?}"));
    ValidationReport { violations }
}

// ---------------------------------------------------------------------------
// Lint
// ---------------------------------------------------------------------------

/// Advisory from [`lint_ajd`]: the contract is valid but carries a known risk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Advisory {
    /// Mission prose opens with a device verb: it prescribes "how", not "what".
    HowNotWhat { verb: String },
    /// No negative constraints: nothing fences the performer in.
    ScopeCreepRisk,
    /// Memory declared without a retrieval filter: no flywheel.
    NoMemoryFilter,
}

impl fmt::Display for Advisory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Advisory::HowNotWhat { verb } => write!(
                f,
                "mission goal is phrased over device actions (\"{verb}\"); state the goal state instead"
            ),
            Advisory::ScopeCreepRisk => {
                write!(f, "scope declares no negative constraints; jurisdiction is unfenced")
            }
            Advisory::NoMemoryFilter => {
                write!(f, "memory has no retrieval tags; trajectories will never be re-injected")
            }
        }
    }
}

/// Imperative device verbs that signal "how" phrasing in mission prose.
const DEVICE_VERBS: &[&str] = &[
    "stop", "start", "restart", "halt", "shutdown", "press", "click", "send", "call", "invoke",
    "execute", "run", "set", "toggle", "trigger", "open", "close", "switch",
];

/// Lint a valid spec for guidance-level problems.
pub fn lint_ajd(spec: &AjdSpec) -> Vec<Advisory> {
    let mut advisories = Vec::new();

    // Strip a leading "[...]" headline before looking at the first word.
    let prose = spec.mission.goal_statement.trim();
    let prose = match prose.strip_prefix('[') {
        Some(rest) => rest.split_once(']').map(|(_, r)| r).unwrap_or(rest),
        None => prose,
    };
    if let Some(first) = prose.split_whitespace().next() {
        let lowered: String = first
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_lowercase();
        if DEVICE_VERBS.contains(&lowered.as_str()) {
            advisories.push(Advisory::HowNotWhat { verb: lowered });
        }
    }

    if spec.scope.negative_constraints.is_empty() {
        advisories.push(Advisory::ScopeCreepRisk);
    }

    if spec.operational_context.memory.tags.is_empty() {
        advisories.push(Advisory::NoMemoryFilter);
    }

    advisories
}

#[cfg(test)]
mod tests;
