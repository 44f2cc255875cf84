//! The typed simulated workplace.
//!
//! A [`WorldState`] owns a registry of domain states, a discrete tick
//! counter, and an append-only event log. Causal domains react to verbs
//! through fixture-declared transition tables and may emit delayed callbacks
//! into a channel domain's inbox; biddable domains queue bids and resolve
//! them through scripted approval policies during [`step_world`]; lexical
//! domains hold tagged facts and are never control targets.
//!
//! Everything is deterministic: given the same fixture, seed, fault schedule
//! and action sequence, the event log is identical across runs.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ajd::{DomainId, DomainKind};
use crate::fact::{ClaimPattern, FactTriple, TaggedFact};

// ---------------------------------------------------------------------------
// Values and actions
// ---------------------------------------------------------------------------

/// Scalar value of a causal state variable.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Scalar {
    Int(i64),
    Bool(bool),
    Str(String),
}

impl Scalar {
    pub fn as_int(&self) -> Option<i64> {
        match self {
            Scalar::Int(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::Int(v) => write!(f, "{v}"),
            Scalar::Bool(v) => write!(f, "{v}"),
            Scalar::Str(v) => write!(f, "{v}"),
        }
    }
}

/// Correlation id issued with every receipt; callbacks quote it back.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct CorrelationId(pub u64);

impl fmt::Display for CorrelationId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// A concrete action: verb, target domain, bound parameters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionInstance {
    pub verb: String,
    pub target: DomainId,
    #[serde(default)]
    pub params: BTreeMap<String, String>,
}

impl ActionInstance {
    pub fn new(verb: impl Into<String>, target: impl Into<String>) -> Self {
        Self {
            verb: verb.into(),
            target: target.into(),
            params: BTreeMap::new(),
        }
    }

    pub fn with_param(mut self, name: &str, value: &str) -> Self {
        self.params.insert(name.to_string(), value.to_string());
        self
    }
}

impl fmt::Display for ActionInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.verb, self.target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReceiptStatus {
    /// Causal effect applied.
    Accepted,
    /// Queued as a bid on a biddable domain; resolution comes later.
    Deferred,
}

/// Proof that an action reached the world. Carries the correlation id that
/// later callbacks or bid resolutions will quote.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub correlation: CorrelationId,
    pub status: ReceiptStatus,
    pub domain: DomainId,
    pub verb: String,
    pub tick: u64,
}

// ---------------------------------------------------------------------------
// Domain behaviour (fixture-declared)
// ---------------------------------------------------------------------------

/// Value written by a verb effect: a constant or copied from a parameter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueExpr {
    Const(Scalar),
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarAssign {
    pub var: String,
    pub value: ValueExpr,
    /// Domain to write into; defaults to the acting domain. Lets an
    /// intermediary (e.g. an edge controller) relay commands to equipment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<DomainId>,
}

/// Delayed callback emission scheduled by a verb.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallbackEmit {
    pub channel: DomainId,
    pub delay: u64,
    pub payload: Vec<FactTriple>,
}

/// Transition behaviour of one verb on a causal domain.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct VerbBehavior {
    #[serde(default)]
    pub sets: Vec<VarAssign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emits: Option<CallbackEmit>,
}

/// Autonomous per-tick drift of a causal state variable: a clamped seeded
/// random walk. Keeps fault-free dynamics inside a safe band.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomWalk {
    pub var: String,
    pub step: i64,
    pub min: i64,
    pub max: i64,
}

/// Scripted approval policy of a biddable domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalPolicy {
    /// Ticks between enqueue and resolution. At least 1: a bid never
    /// resolves in the same instant it is made.
    #[serde(default = "default_delay")]
    pub delay_ticks: u64,
    /// Parameters the proposal must cite, else the bid is refused.
    #[serde(default)]
    pub require_params: Vec<String>,
}

fn default_delay() -> u64 {
    1
}

impl Default for ApprovalPolicy {
    fn default() -> Self {
        Self {
            delay_ticks: 1,
            require_params: Vec::new(),
        }
    }
}

/// Hard-wired reflex: when `var` on `watch` exceeds `threshold` while the
/// equipment is running, stop it the same tick. Independent of any planner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflexRule {
    pub id: String,
    pub watch: DomainId,
    pub var: String,
    pub threshold: i64,
    pub running_var: String,
    pub stopped_value: Scalar,
    #[serde(default)]
    pub also_set: Vec<VarAssign>,
}

// ---------------------------------------------------------------------------
// Faults
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// Scheduled callback emissions matching a keyword never fire.
    VoucherDrop,
    /// A market fact is planted into a lexical domain.
    PriceSurge,
    /// A causal state variable jumps to a spike value.
    SensorSpike,
    /// The approver refuses every subsequent bid.
    ApproverReject,
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FaultKind::VoucherDrop => write!(f, "voucher_drop"),
            FaultKind::PriceSurge => write!(f, "price_surge"),
            FaultKind::SensorSpike => write!(f, "sensor_spike"),
            FaultKind::ApproverReject => write!(f, "approver_reject"),
        }
    }
}

/// A scheduled fault. Parameters are free-form; the keys each kind reads are
/// documented with the fixture format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub at_tick: u64,
    #[serde(default)]
    pub parameters: BTreeMap<String, String>,
}

// ---------------------------------------------------------------------------
// Queries and observations
// ---------------------------------------------------------------------------

/// Read-only query against one domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Query {
    /// Snapshot of one causal state variable.
    StateVar(String),
    /// Lexical facts matching the pattern.
    Facts(ClaimPattern),
    /// Inbox messages carrying a fact matching the pattern.
    Inbox(ClaimPattern),
    /// Status of a previously enqueued bid.
    Bid(CorrelationId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BidStatus {
    Pending,
    Accepted,
    Refused,
}

/// A message delivered into a causal domain's inbox by a callback emission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxMessage {
    pub tick: u64,
    pub correlation: CorrelationId,
    pub facts: Vec<FactTriple>,
}

/// Result of [`observe`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Observation {
    Vars(BTreeMap<String, Scalar>),
    Facts(Vec<FactTriple>),
    Messages(Vec<InboxMessage>),
    BidStatus(BidStatus),
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventPayload {
    /// An observation recorded while polling an implicit callback.
    Observed { summary: String },
    /// A causal effect, with the action that caused it.
    EffectApplied {
        action: String,
        verb: String,
        correlation: CorrelationId,
    },
    BidResolved {
        correlation: CorrelationId,
        approved: bool,
        reason: String,
    },
    CallbackEmitted {
        correlation: CorrelationId,
        facts: Vec<FactTriple>,
    },
    FaultFired { kind: FaultKind },
}

/// One entry in the append-only world log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorldEvent {
    pub tick: u64,
    pub domain: DomainId,
    pub payload: EventPayload,
}

// ---------------------------------------------------------------------------
// Domain and world state
// ---------------------------------------------------------------------------

/// A pending request to a biddable domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bid {
    pub correlation: CorrelationId,
    pub verb: String,
    pub params: BTreeMap<String, String>,
    pub enqueued_at: u64,
    pub status: BidStatus,
}

/// State of one domain. Facts only on lexical domains, state variables and
/// inboxes only on causal ones, bids only on biddable ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DomainState {
    pub id: DomainId,
    pub kind: DomainKind,
    #[serde(default)]
    pub facts: Vec<TaggedFact>,
    #[serde(default)]
    pub state_vars: BTreeMap<String, Scalar>,
    #[serde(default)]
    pub inbox: Vec<InboxMessage>,
    #[serde(default)]
    pub pending_bids: VecDeque<Bid>,
    #[serde(default)]
    pub verbs: BTreeMap<String, VerbBehavior>,
    #[serde(default)]
    pub dynamics: Vec<RandomWalk>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub policy: Option<ApprovalPolicy>,
    /// Set by a fault with `fail_requests=true`; affect then fails.
    #[serde(default)]
    pub faulted: bool,
    /// Set by an `approver_reject` fault.
    #[serde(default)]
    pub reject_all: bool,
}

impl DomainState {
    pub fn new(id: impl Into<String>, kind: DomainKind) -> Self {
        Self {
            id: id.into(),
            kind,
            facts: Vec::new(),
            state_vars: BTreeMap::new(),
            inbox: Vec::new(),
            pending_bids: VecDeque::new(),
            verbs: BTreeMap::new(),
            dynamics: Vec::new(),
            policy: None,
            faulted: false,
            reject_all: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct ScheduledEmit {
    due_tick: u64,
    channel: DomainId,
    source: DomainId,
    correlation: CorrelationId,
    payload: Vec<FactTriple>,
}

/// How a mission's trigger event materializes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerSource {
    /// Delivered at a fixed tick (e.g. a user utterance).
    AtTick { tick: u64 },
    /// Delivered when a reflex rule has fired (e.g. an anomaly report).
    OnReflex,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriggerSpec {
    pub source: DomainId,
    pub payload: String,
    pub when: TriggerSource,
}

/// Oracle check backing [`crate::avr::detect_mismatch`]: how to ask the real
/// world whether a claim holds. Test-only privilege; the performer itself
/// never reads these.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleRule {
    pub pattern: ClaimPattern,
    pub check: OracleCheck,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleCheck {
    /// Some inbox message on the domain carries the claim.
    InboxContains { domain: DomainId },
    /// An effect with this verb was applied on the domain.
    EffectLogged { domain: DomainId, verb: String },
    /// The state variable equals the claim's object.
    StateVarEquals { domain: DomainId, var: String },
    /// Some bid on the domain resolved approved.
    BidApproved { domain: DomainId },
}

/// The simulated workplace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub tick: u64,
    pub domains: BTreeMap<DomainId, DomainState>,
    pub event_log: Vec<WorldEvent>,
    pub seed: u64,
    pub trigger: Option<TriggerSpec>,
    /// World ticks consumed per slow-loop cycle, minimum.
    pub slow_loop_ticks: u64,
    pub reflex_rules: Vec<ReflexRule>,
    pub oracle: Vec<OracleRule>,
    fault_schedule: Vec<FaultSpec>,
    scheduled_emits: Vec<ScheduledEmit>,
    drop_filters: Vec<String>,
    next_correlation: u64,
    rng_state: u64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorldError {
    #[error("unknown domain: {0}")]
    UnknownDomain(String),
    #[error("unknown variable {var} on domain {domain}")]
    UnknownVariable { domain: String, var: String },
    #[error("lexical domain {0} cannot be a target of control")]
    LexicalTarget(String),
    #[error("domain {domain} does not know verb {verb}")]
    UnknownVerb { domain: String, verb: String },
    #[error("domain {domain} is faulted ({kind})")]
    DomainFault { domain: String, kind: FaultKind },
    #[error("fault scheduled at past tick {at} (now {now})")]
    PastTick { at: u64, now: u64 },
}

impl WorldState {
    pub fn new(seed: u64) -> Self {
        Self {
            tick: 0,
            domains: BTreeMap::new(),
            event_log: Vec::new(),
            seed,
            trigger: None,
            slow_loop_ticks: 1,
            reflex_rules: Vec::new(),
            oracle: Vec::new(),
            fault_schedule: Vec::new(),
            scheduled_emits: Vec::new(),
            drop_filters: Vec::new(),
            next_correlation: 0,
            rng_state: seed,
        }
    }

    pub fn add_domain(&mut self, domain: DomainState) {
        self.domains.insert(domain.id.clone(), domain);
    }

    pub fn domain(&self, id: &str) -> Result<&DomainState, WorldError> {
        self.domains
            .get(id)
            .ok_or_else(|| WorldError::UnknownDomain(id.to_string()))
    }

    fn next_correlation(&mut self) -> CorrelationId {
        self.next_correlation += 1;
        CorrelationId(self.next_correlation)
    }

    // Per-tick drift values come from a counter-keyed stream so cloning the
    // world preserves determinism.
    fn draw(&mut self, lo: i64, hi: i64) -> i64 {
        self.rng_state = self.rng_state.wrapping_add(1);
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.rng_state.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        rng.gen_range(lo..=hi)
    }

    pub fn log(&mut self, domain: &str, payload: EventPayload) {
        self.event_log.push(WorldEvent {
            tick: self.tick,
            domain: domain.to_string(),
            payload,
        });
    }

    /// Schedule a fault. Faults already due (tick 0 at build time) fire on
    /// the next step; [`inject_fault_now`] applies tick-0 faults immediately
    /// during scenario construction.
    pub fn schedule_fault(&mut self, fault: FaultSpec) -> Result<(), WorldError> {
        if fault.at_tick < self.tick {
            return Err(WorldError::PastTick {
                at: fault.at_tick,
                now: self.tick,
            });
        }
        self.fault_schedule.push(fault);
        self.fault_schedule.sort_by_key(|f| f.at_tick);
        Ok(())
    }

    /// Fire any faults due at the current tick. Used by scenario building
    /// for tick-0 faults and by `step_world` for the rest.
    pub fn fire_due_faults(&mut self) {
        let due: Vec<FaultSpec> = {
            let tick = self.tick;
            let (fire, keep): (Vec<_>, Vec<_>) = self
                .fault_schedule
                .drain(..)
                .partition(|f| f.at_tick <= tick);
            self.fault_schedule = keep;
            fire
        };
        for fault in due {
            self.apply_fault(&fault);
        }
    }

    fn apply_fault(&mut self, fault: &FaultSpec) {
        let domain = fault
            .parameters
            .get("domain")
            .cloned()
            .unwrap_or_default();
        match fault.kind {
            FaultKind::VoucherDrop => {
                let keyword = fault
                    .parameters
                    .get("match")
                    .cloned()
                    .unwrap_or_else(|| "voucher".to_string());
                self.scheduled_emits.retain(|e| !emit_mentions(e, &keyword));
                self.drop_filters.push(keyword);
            }
            FaultKind::PriceSurge => {
                let fact = FactTriple::new(
                    fault
                        .parameters
                        .get("subject")
                        .cloned()
                        .unwrap_or_else(|| "conference".into()),
                    fault
                        .parameters
                        .get("relation")
                        .cloned()
                        .unwrap_or_else(|| "price_surge".into()),
                    fault
                        .parameters
                        .get("object")
                        .cloned()
                        .unwrap_or_else(|| "active".into()),
                );
                let tags: Vec<String> = fault
                    .parameters
                    .get("tags")
                    .map(|t| t.split(',').map(|s| s.trim().to_string()).collect())
                    .unwrap_or_default();
                if let Some(d) = self.domains.get_mut(&domain) {
                    d.facts.push(TaggedFact { fact, tags });
                }
            }
            FaultKind::SensorSpike => {
                let var = fault
                    .parameters
                    .get("var")
                    .cloned()
                    .unwrap_or_else(|| "vibration".into());
                let value: i64 = fault
                    .parameters
                    .get("value")
                    .and_then(|v| v.parse().ok())
                    .unwrap_or(0);
                if let Some(d) = self.domains.get_mut(&domain) {
                    d.state_vars.insert(var, Scalar::Int(value));
                }
            }
            FaultKind::ApproverReject => {
                if let Some(d) = self.domains.get_mut(&domain) {
                    d.reject_all = true;
                }
            }
        }
        if fault.parameters.get("fail_requests").map(String::as_str) == Some("true") {
            if let Some(d) = self.domains.get_mut(&domain) {
                d.faulted = true;
            }
        }
        self.log(&domain, EventPayload::FaultFired { kind: fault.kind });
    }

    /// Apply one reflex pass: stop equipment whose watched variable exceeds
    /// its threshold. Idempotent; returns actions taken this call.
    pub fn run_reflexes(&mut self) -> Vec<ReflexAction> {
        let rules = self.reflex_rules.clone();
        let mut fired = Vec::new();
        for rule in &rules {
            let Some(d) = self.domains.get(&rule.watch) else {
                continue;
            };
            let over = d
                .state_vars
                .get(&rule.var)
                .and_then(Scalar::as_int)
                .is_some_and(|v| v > rule.threshold);
            let running = d
                .state_vars
                .get(&rule.running_var)
                .and_then(Scalar::as_int)
                .is_some_and(|v| v != 0);
            if over && running {
                let domain = self.domains.get_mut(&rule.watch).expect("checked above");
                domain
                    .state_vars
                    .insert(rule.running_var.clone(), rule.stopped_value.clone());
                for assign in &rule.also_set {
                    if let ValueExpr::Const(v) = &assign.value {
                        domain.state_vars.insert(assign.var.clone(), v.clone());
                    }
                }
                let correlation = self.next_correlation();
                let action = ReflexAction {
                    rule: rule.id.clone(),
                    domain: rule.watch.clone(),
                    tick: self.tick,
                    correlation,
                };
                self.log(
                    &rule.watch,
                    EventPayload::EffectApplied {
                        action: format!("reflex.{}", rule.id),
                        verb: format!("reflex.{}", rule.id),
                        correlation,
                    },
                );
                fired.push(action);
            }
        }
        fired
    }

    /// True if any reflex has fired so far (used by `OnReflex` triggers).
    pub fn reflex_has_fired(&self) -> bool {
        self.event_log.iter().any(|e| {
            matches!(&e.payload, EventPayload::EffectApplied { action, .. } if action.starts_with("reflex."))
        })
    }
}

/// Reflex intervention record returned by the fast loop.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReflexAction {
    pub rule: String,
    pub domain: DomainId,
    pub tick: u64,
    pub correlation: CorrelationId,
}

fn emit_mentions(emit: &ScheduledEmit, keyword: &str) -> bool {
    emit.payload.iter().any(|f| {
        f.subject.contains(keyword) || f.relation.contains(keyword) || f.object.contains(keyword)
    })
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Read one domain. Never mutates the world.
pub fn observe(world: &WorldState, domain: &str, query: &Query) -> Result<Observation, WorldError> {
    let d = world.domain(domain)?;
    match query {
        Query::StateVar(var) => {
            let value = d
                .state_vars
                .get(var)
                .cloned()
                .ok_or_else(|| WorldError::UnknownVariable {
                    domain: domain.to_string(),
                    var: var.clone(),
                })?;
            let mut vars = BTreeMap::new();
            vars.insert(var.clone(), value);
            Ok(Observation::Vars(vars))
        }
        Query::Facts(pattern) => Ok(Observation::Facts(
            d.facts
                .iter()
                .filter(|f| pattern.matches(&f.fact))
                .map(|f| f.fact.clone())
                .collect(),
        )),
        Query::Inbox(pattern) => Ok(Observation::Messages(
            d.inbox
                .iter()
                .filter(|m| m.facts.iter().any(|f| pattern.matches(f)))
                .cloned()
                .collect(),
        )),
        Query::Bid(correlation) => {
            let status = d
                .pending_bids
                .iter()
                .find(|b| b.correlation == *correlation)
                .map(|b| b.status)
                .ok_or_else(|| WorldError::UnknownVariable {
                    domain: domain.to_string(),
                    var: correlation.to_string(),
                })?;
            Ok(Observation::BidStatus(status))
        }
    }
}

/// Apply an action to a causal domain or enqueue a bid on a biddable one.
/// Lexical domains reject all actions.
pub fn affect(
    world: &mut WorldState,
    domain: &str,
    action: &ActionInstance,
) -> Result<Receipt, WorldError> {
    let kind = world.domain(domain)?.kind;
    if kind == DomainKind::Lexical {
        return Err(WorldError::LexicalTarget(domain.to_string()));
    }
    if world.domain(domain)?.faulted {
        return Err(WorldError::DomainFault {
            domain: domain.to_string(),
            kind: FaultKind::VoucherDrop,
        });
    }

    let correlation = world.next_correlation();
    let tick = world.tick;

    match kind {
        DomainKind::Causal => {
            let behavior = world
                .domain(domain)?
                .verbs
                .get(&action.verb)
                .cloned()
                .ok_or_else(|| WorldError::UnknownVerb {
                    domain: domain.to_string(),
                    verb: action.verb.clone(),
                })?;

            for assign in &behavior.sets {
                let value = match &assign.value {
                    ValueExpr::Const(v) => v.clone(),
                    ValueExpr::Param(p) => Scalar::Str(
                        action.params.get(p).cloned().unwrap_or_default(),
                    ),
                };
                let target = assign.domain.as_deref().unwrap_or(domain).to_string();
                if let Some(d) = world.domains.get_mut(&target) {
                    d.state_vars.insert(assign.var.clone(), value);
                }
            }

            if let Some(emit) = &behavior.emits {
                let dropped = world
                    .drop_filters
                    .iter()
                    .any(|k| emit.payload.iter().any(|f| {
                        f.subject.contains(k) || f.relation.contains(k) || f.object.contains(k)
                    }));
                if !dropped {
                    world.scheduled_emits.push(ScheduledEmit {
                        due_tick: tick + emit.delay,
                        channel: emit.channel.clone(),
                        source: domain.to_string(),
                        correlation,
                        payload: emit.payload.clone(),
                    });
                }
            }

            world.log(
                domain,
                EventPayload::EffectApplied {
                    action: action.to_string(),
                    verb: action.verb.clone(),
                    correlation,
                },
            );
            Ok(Receipt {
                correlation,
                status: ReceiptStatus::Accepted,
                domain: domain.to_string(),
                verb: action.verb.clone(),
                tick,
            })
        }
        DomainKind::Biddable => {
            let d = world.domains.get_mut(domain).expect("checked above");
            d.pending_bids.push_back(Bid {
                correlation,
                verb: action.verb.clone(),
                params: action.params.clone(),
                enqueued_at: tick,
                status: BidStatus::Pending,
            });
            Ok(Receipt {
                correlation,
                status: ReceiptStatus::Deferred,
                domain: domain.to_string(),
                verb: action.verb.clone(),
                tick,
            })
        }
        DomainKind::Lexical => unreachable!("rejected above"),
    }
}

/// Advance the world one tick: apply autonomous dynamics, fire due faults,
/// run reflex rules, deliver due callbacks, resolve due bids. Faults land
/// after drift so a spike survives into the reflex check the same tick.
pub fn step_world(world: &mut WorldState) {
    world.tick += 1;

    // Autonomous drift on causal domains.
    let walks: Vec<(DomainId, RandomWalk)> = world
        .domains
        .values()
        .flat_map(|d| d.dynamics.iter().map(|w| (d.id.clone(), w.clone())))
        .collect();
    for (id, walk) in walks {
        let delta = world.draw(-walk.step, walk.step);
        if let Some(d) = world.domains.get_mut(&id) {
            if let Some(Scalar::Int(v)) = d.state_vars.get(&walk.var) {
                let next = (v + delta).clamp(walk.min, walk.max);
                d.state_vars.insert(walk.var.clone(), Scalar::Int(next));
            }
        }
    }

    world.fire_due_faults();

    world.run_reflexes();

    // Deliver due callback emissions.
    let due: Vec<ScheduledEmit> = {
        let tick = world.tick;
        let (fire, keep): (Vec<_>, Vec<_>) = world
            .scheduled_emits
            .drain(..)
            .partition(|e| e.due_tick <= tick);
        world.scheduled_emits = keep;
        fire
    };
    for emit in due {
        if let Some(d) = world.domains.get_mut(&emit.channel) {
            d.inbox.push(InboxMessage {
                tick: world.tick,
                correlation: emit.correlation,
                facts: emit.payload.clone(),
            });
        }
        world.log(
            &emit.channel,
            EventPayload::CallbackEmitted {
                correlation: emit.correlation,
                facts: emit.payload,
            },
        );
    }

    // Resolve due bids per scripted policy.
    let tick = world.tick;
    let mut resolutions: Vec<(DomainId, CorrelationId, bool, String)> = Vec::new();
    for d in world.domains.values_mut() {
        let Some(policy) = d.policy.clone() else {
            continue;
        };
        for bid in d.pending_bids.iter_mut() {
            if bid.status != BidStatus::Pending || tick < bid.enqueued_at + policy.delay_ticks {
                continue;
            }
            let missing: Vec<&String> = policy
                .require_params
                .iter()
                .filter(|p| !bid.params.contains_key(*p))
                .collect();
            let (approved, reason) = if d.reject_all {
                (false, "approver rejected by script".to_string())
            } else if !missing.is_empty() {
                (false, format!("missing required params: {missing:?}"))
            } else {
                (true, String::new())
            };
            bid.status = if approved {
                BidStatus::Accepted
            } else {
                BidStatus::Refused
            };
            resolutions.push((d.id.clone(), bid.correlation, approved, reason));
        }
    }
    for (domain, correlation, approved, reason) in resolutions {
        world.log(
            &domain,
            EventPayload::BidResolved {
                correlation,
                approved,
                reason,
            },
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn causal_domain(id: &str) -> DomainState {
        let mut d = DomainState::new(id, DomainKind::Causal);
        d.verbs.insert(
            "poke".into(),
            VerbBehavior {
                sets: vec![VarAssign {
                    var: "poked".into(),
                    value: ValueExpr::Const(Scalar::Bool(true)),
                    domain: None,
                }],
                emits: None,
            },
        );
        d
    }

    fn small_world() -> WorldState {
        let mut w = WorldState::new(7);
        w.add_domain(causal_domain("api"));
        w.add_domain(DomainState::new("docs", DomainKind::Lexical));
        let mut user = DomainState::new("user", DomainKind::Biddable);
        user.policy = Some(ApprovalPolicy::default());
        w.add_domain(user);
        w
    }

    #[test]
    fn affect_on_lexical_is_rejected() {
        let mut w = small_world();
        let err = affect(&mut w, "docs", &ActionInstance::new("write", "docs")).unwrap_err();
        assert_eq!(err, WorldError::LexicalTarget("docs".into()));
    }

    #[test]
    fn affect_on_causal_applies_effect_and_logs() {
        let mut w = small_world();
        let receipt = affect(&mut w, "api", &ActionInstance::new("poke", "api")).unwrap();
        assert_eq!(receipt.status, ReceiptStatus::Accepted);
        assert_eq!(receipt.correlation, CorrelationId(1));
        assert_eq!(
            w.domain("api").unwrap().state_vars.get("poked"),
            Some(&Scalar::Bool(true))
        );
        assert!(matches!(
            w.event_log.last().unwrap().payload,
            EventPayload::EffectApplied { .. }
        ));
    }

    #[test]
    fn affect_unknown_verb_errors() {
        let mut w = small_world();
        let err = affect(&mut w, "api", &ActionInstance::new("nope", "api")).unwrap_err();
        assert!(matches!(err, WorldError::UnknownVerb { .. }));
    }

    #[test]
    fn biddable_defers_and_resolves_on_step() {
        let mut w = small_world();
        let receipt = affect(&mut w, "user", &ActionInstance::new("approve", "user")).unwrap();
        assert_eq!(receipt.status, ReceiptStatus::Deferred);
        let status = observe(&w, "user", &Query::Bid(receipt.correlation)).unwrap();
        assert_eq!(status, Observation::BidStatus(BidStatus::Pending));

        step_world(&mut w);
        let status = observe(&w, "user", &Query::Bid(receipt.correlation)).unwrap();
        assert_eq!(status, Observation::BidStatus(BidStatus::Accepted));
    }

    #[test]
    fn observe_is_pure() {
        let mut w = small_world();
        affect(&mut w, "api", &ActionInstance::new("poke", "api")).unwrap();
        let before = w.clone();
        observe(&w, "api", &Query::StateVar("poked".into())).unwrap();
        observe(&w, "docs", &Query::Facts(ClaimPattern::with_any_object("a", "b"))).unwrap();
        assert_eq!(before, w);
    }

    #[test]
    fn observe_empty_lexical_yields_empty_fact_set() {
        let w = small_world();
        let obs = observe(
            &w,
            "docs",
            &Query::Facts(ClaimPattern {
                subject: crate::fact::PatternTerm::Any,
                relation: crate::fact::PatternTerm::Any,
                object: crate::fact::PatternTerm::Any,
            }),
        )
        .unwrap();
        assert_eq!(obs, Observation::Facts(vec![]));
    }

    #[test]
    fn step_without_dynamics_only_advances_tick() {
        let mut w = small_world();
        let domains_before = w.domains.clone();
        step_world(&mut w);
        assert_eq!(w.tick, 1);
        assert_eq!(w.domains, domains_before);
    }

    #[test]
    fn scheduled_emit_fires_at_due_tick() {
        let mut w = small_world();
        w.domains.get_mut("api").unwrap().verbs.insert(
            "book".into(),
            VerbBehavior {
                sets: vec![],
                emits: Some(CallbackEmit {
                    channel: "api".into(),
                    delay: 2,
                    payload: vec![FactTriple::new("t", "voucher", "received")],
                }),
            },
        );
        affect(&mut w, "api", &ActionInstance::new("book", "api")).unwrap();
        step_world(&mut w);
        assert!(w.domain("api").unwrap().inbox.is_empty());
        step_world(&mut w);
        assert_eq!(w.domain("api").unwrap().inbox.len(), 1);
        assert!(w
            .event_log
            .iter()
            .any(|e| matches!(e.payload, EventPayload::CallbackEmitted { .. })));
    }

    #[test]
    fn past_tick_fault_rejected() {
        let mut w = small_world();
        step_world(&mut w);
        step_world(&mut w);
        let err = w
            .schedule_fault(FaultSpec {
                kind: FaultKind::SensorSpike,
                at_tick: 1,
                parameters: BTreeMap::new(),
            })
            .unwrap_err();
        assert_eq!(err, WorldError::PastTick { at: 1, now: 2 });
    }

    #[test]
    fn fail_requests_fault_makes_affect_fail() {
        let mut w = small_world();
        let mut params = BTreeMap::new();
        params.insert("domain".into(), "api".into());
        params.insert("fail_requests".into(), "true".into());
        w.schedule_fault(FaultSpec {
            kind: FaultKind::VoucherDrop,
            at_tick: 1,
            parameters: params,
        })
        .unwrap();
        step_world(&mut w);
        let err = affect(&mut w, "api", &ActionInstance::new("poke", "api")).unwrap_err();
        assert!(matches!(err, WorldError::DomainFault { .. }));
    }

    #[test]
    fn event_log_is_deterministic_for_same_seed_and_actions() {
        let run = |seed: u64| {
            let mut w = WorldState::new(seed);
            let mut eq = DomainState::new("equipment", DomainKind::Causal);
            eq.state_vars.insert("vibration".into(), Scalar::Int(40));
            eq.state_vars.insert("rpm".into(), Scalar::Int(1500));
            eq.dynamics.push(RandomWalk {
                var: "vibration".into(),
                step: 2,
                min: 30,
                max: 50,
            });
            w.add_domain(eq);
            for _ in 0..20 {
                step_world(&mut w);
            }
            (w.event_log.clone(), w.domains["equipment"].state_vars.clone())
        };
        assert_eq!(run(42), run(42));
        // Different seeds may diverge in drift but must stay in band.
        let (_, vars) = run(1);
        let v = vars["vibration"].as_int().unwrap();
        assert!((30..=50).contains(&v));
    }
}
