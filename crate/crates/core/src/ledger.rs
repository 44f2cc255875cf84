//! The knowledge base: append-only verified facts, retrieval, and trajectory
//! assetization.
//!
//! Facts enter only through certification (or, in deliberately open-loop
//! runs, through [`KnowledgeLedger::assume`], which flags them as unverified
//! so the mismatch audit can catch them). Nothing is ever removed or edited
//! in place; a contradicting fact supersedes its predecessor and reads are
//! recency-wins over supersedes chains.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ajd::AjdSpec;
use crate::fact::{ClaimPattern, FactTriple};
use crate::performer::{ContextBundle, ExecutionSpec, ProvenancedFact, TrajectoryRef, TriggerEvent};
use crate::verification::{CertifiedFact, ConfirmRecord, Evidence, EvidenceKind};
use crate::world::{CorrelationId, Receipt, WorldState};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

/// Index of a fact within the ledger.
pub type FactId = usize;

/// How a ledger fact is backed. `Assumed` appears only in open-loop runs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceRef {
    Callback {
        source: String,
        tick: u64,
        correlation: Option<CorrelationId>,
    },
    Confirm {
        approver: String,
        tick: u64,
        digest: String,
    },
    /// Taken on faith from a bare receipt; never produced by certify.
    Assumed { correlation: CorrelationId },
}

/// A fact the system may safely rely upon (or, if `assumed`, one it merely
/// believes — the difference is the whole point of the mismatch audit).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerifiedFact {
    pub id: FactId,
    pub claim: FactTriple,
    pub evidence: Vec<EvidenceRef>,
    pub cycle: u64,
    #[serde(default)]
    pub tags: Vec<String>,
    /// Earlier fact this one contradicts and replaces for reads.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supersedes: Option<FactId>,
    #[serde(default)]
    pub assumed: bool,
    /// Marked when an identical claim was already present.
    #[serde(default)]
    pub reconfirmation: bool,
}

/// Facts gained in one cycle, already certified.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeDelta {
    pub facts: Vec<CertifiedFact>,
    pub cycle: u64,
}

impl KnowledgeDelta {
    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrajectoryOutcome {
    Satisfied,
    Failed(String),
}

/// A verified trajectory: the spec that ran, what the world acknowledged,
/// and the knowledge it yielded. Stored only after its cycle's verification
/// completed; failures are stored too.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub id: String,
    pub spec: ExecutionSpec,
    pub receipts: Vec<Receipt>,
    pub delta_claims: Vec<FactTriple>,
    pub outcome: TrajectoryOutcome,
    pub tags: Vec<String>,
    /// Set when an identical-content trajectory was already stored.
    #[serde(default)]
    pub duplicate: bool,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LedgerError {
    #[error("delta contains a fact without evidence: {0}")]
    UncertifiedFact(String),
    #[error("trajectory {0} is incomplete")]
    IncompleteTrajectory(String),
}

/// Append-only store of verified facts and assetized trajectories.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KnowledgeLedger {
    pub facts: Vec<VerifiedFact>,
    pub trajectories: Vec<Trajectory>,
    pub cycle_high_water: u64,
}

impl KnowledgeLedger {
    pub fn new() -> Self {
        Self::default()
    }

    /// Start a new mission epoch: trajectories carry over as memory, facts
    /// belong to the finished mission and do not.
    pub fn rollover(&self) -> Self {
        Self {
            facts: Vec::new(),
            trajectories: self.trajectories.clone(),
            cycle_high_water: 0,
        }
    }

    /// Facts currently readable: not superseded by a later fact.
    pub fn live_facts(&self) -> impl Iterator<Item = &VerifiedFact> {
        let superseded: BTreeSet<FactId> =
            self.facts.iter().filter_map(|f| f.supersedes).collect();
        self.facts.iter().filter(move |f| !superseded.contains(&f.id))
    }

    /// Recency-wins entailment over live facts.
    pub fn entails(&self, pattern: &ClaimPattern) -> bool {
        self.live_facts().any(|f| pattern.matches(&f.claim))
    }

    pub fn newest_match(&self, pattern: &ClaimPattern) -> Option<&VerifiedFact> {
        self.live_facts().filter(|f| pattern.matches(&f.claim)).last()
    }

    /// Record an unverified belief (open-loop mode only).
    pub fn assume(&mut self, claim: FactTriple, correlation: CorrelationId, cycle: u64) {
        let id = self.facts.len();
        let supersedes = self.find_contradicted(&claim);
        let reconfirmation = self.facts.iter().any(|f| f.claim == claim);
        self.facts.push(VerifiedFact {
            id,
            claim,
            evidence: vec![EvidenceRef::Assumed { correlation }],
            cycle,
            tags: Vec::new(),
            supersedes,
            assumed: true,
            reconfirmation,
        });
        self.cycle_high_water = self.cycle_high_water.max(cycle);
    }

    fn find_contradicted(&self, claim: &FactTriple) -> Option<FactId> {
        let superseded: BTreeSet<FactId> =
            self.facts.iter().filter_map(|f| f.supersedes).collect();
        self.facts
            .iter()
            .filter(|f| !superseded.contains(&f.id))
            .filter(|f| {
                f.claim.subject == claim.subject
                    && f.claim.relation == claim.relation
                    && f.claim.object != claim.object
            })
            .map(|f| f.id)
            .last()
    }
}

fn evidence_ref(e: &Evidence) -> EvidenceRef {
    match &e.kind {
        EvidenceKind::Callback(ev) => EvidenceRef::Callback {
            source: ev.source.clone(),
            tick: ev.tick,
            correlation: ev.correlation,
        },
        EvidenceKind::Confirm(r) => EvidenceRef::Confirm {
            approver: r.approver.clone(),
            tick: r.tick,
            digest: r.proposal_digest.clone(),
        },
    }
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Integrate a delta: `K_{t+1} = K_t ∪ K_Δ`. The empty delta is an identity.
/// Contradicting claims supersede, identical claims are re-confirmations,
/// and every fact must carry evidence.
pub fn refine(
    ledger: &KnowledgeLedger,
    delta: &KnowledgeDelta,
) -> Result<KnowledgeLedger, LedgerError> {
    let mut next = ledger.clone();
    for certified in &delta.facts {
        if certified.evidence.is_empty() {
            return Err(LedgerError::UncertifiedFact(certified.claim.to_string()));
        }
        let id = next.facts.len();
        let supersedes = next.find_contradicted(&certified.claim);
        let reconfirmation = next.facts.iter().any(|f| f.claim == certified.claim);
        next.facts.push(VerifiedFact {
            id,
            claim: certified.claim.clone(),
            evidence: certified.evidence.iter().map(evidence_ref).collect(),
            cycle: delta.cycle,
            tags: Vec::new(),
            supersedes,
            assumed: false,
            reconfirmation,
        });
    }
    next.cycle_high_water = next.cycle_high_water.max(delta.cycle);
    Ok(next)
}

/// Assemble the context bundle for one cycle: lexical facts and ledger facts
/// whose tags intersect both the event keyword set and the declared filters,
/// memory trajectories with matching tags, and the capabilities verbatim.
/// Deterministic given its inputs.
pub fn retrieve_context(
    ledger: &KnowledgeLedger,
    world: &WorldState,
    event: &TriggerEvent,
    ajd: &AjdSpec,
) -> ContextBundle {
    let keywords = event.keywords();
    let mut contexts = Vec::new();

    for source in &ajd.operational_context.contexts {
        let Ok(domain) = world.domain(&source.domain) else {
            continue;
        };
        for tagged in &domain.facts {
            let hits_keywords = tagged.tags.iter().any(|t| keywords.contains(t));
            let hits_filter =
                source.tags.is_empty() || tagged.tags.iter().any(|t| source.tags.contains(t));
            if hits_keywords && hits_filter {
                contexts.push(ProvenancedFact {
                    fact: tagged.fact.clone(),
                    source: source.domain.clone(),
                    tags: tagged.tags.clone(),
                });
            }
        }
    }

    // Refined knowledge propagates into the next cycle's context. Assumed
    // beliefs propagate too: an open-loop run plans on what it believes.
    for fact in ledger.live_facts() {
        contexts.push(ProvenancedFact {
            fact: fact.claim.clone(),
            source: if fact.assumed {
                "ledger(assumed)".to_string()
            } else {
                "ledger".to_string()
            },
            tags: fact.tags.clone(),
        });
    }

    let memory_filter = &ajd.operational_context.memory.tags;
    let memory: Vec<TrajectoryRef> = ledger
        .trajectories
        .iter()
        .filter(|t| {
            let hits_keywords = t.tags.iter().any(|tag| keywords.contains(tag));
            let hits_filter =
                memory_filter.is_empty() || t.tags.iter().any(|tag| memory_filter.contains(tag));
            hits_keywords && hits_filter
        })
        .map(|t| TrajectoryRef {
            id: t.id.clone(),
            tags: t.tags.clone(),
            succeeded: matches!(t.outcome, TrajectoryOutcome::Satisfied),
            delta_claims: t.delta_claims.clone(),
        })
        .collect();

    ContextBundle {
        contexts,
        memory,
        capabilities: ajd.operational_context.capabilities.clone(),
        scope_excerpt: ajd.scope.clone(),
    }
}

/// Retrieval tags for a trajectory: event keywords that appear in its step
/// parameters, plus the stems of the domains its steps touched
/// (`rail_api` → `rail`).
pub fn derive_tags(event: &TriggerEvent, trajectory_spec: &ExecutionSpec) -> Vec<String> {
    let mut tags = BTreeSet::new();
    for kw in event.keywords() {
        let in_params = trajectory_spec
            .steps
            .iter()
            .flat_map(|s| s.params.values())
            .any(|v| v.to_lowercase().contains(&kw));
        if in_params {
            tags.insert(kw);
        }
    }
    for step in &trajectory_spec.steps {
        let stem = step
            .target
            .trim_end_matches("_api")
            .trim_end_matches("_system")
            .to_string();
        tags.insert(stem);
    }
    tags.into_iter().collect()
}

/// Append a finalized trajectory. Duplicate content is still appended (the
/// store is append-only) but flagged so audits can see the repeat.
pub fn assetize(
    ledger: &KnowledgeLedger,
    trajectory: Trajectory,
) -> Result<KnowledgeLedger, LedgerError> {
    if trajectory.id.is_empty() {
        return Err(LedgerError::IncompleteTrajectory("<unnamed>".to_string()));
    }
    let mut next = ledger.clone();
    let duplicate = next.trajectories.iter().any(|t| {
        t.spec == trajectory.spec
            && t.receipts == trajectory.receipts
            && t.delta_claims == trajectory.delta_claims
            && t.outcome == trajectory.outcome
    });
    let mut stored = trajectory;
    stored.duplicate = duplicate;
    next.trajectories.push(stored);
    Ok(next)
}

// ---------------------------------------------------------------------------
// Export / import
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum LedgerRecord {
    Fact(VerifiedFact),
    Trajectory(Trajectory),
}

/// Newline-delimited export for replay and audit: one fact or trajectory
/// per line, in append order.
pub fn export_ledger(ledger: &KnowledgeLedger) -> String {
    let mut out = String::new();
    for fact in &ledger.facts {
        out.push_str(&serde_json::to_string(&LedgerRecord::Fact(fact.clone())).unwrap());
        out.push('\n');
    }
    for t in &ledger.trajectories {
        out.push_str(&serde_json::to_string(&LedgerRecord::Trajectory(t.clone())).unwrap());
        out.push('\n');
    }
    out
}

pub fn import_ledger(text: &str) -> Result<KnowledgeLedger, serde_json::Error> {
    let mut ledger = KnowledgeLedger::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<LedgerRecord>(line)? {
            LedgerRecord::Fact(f) => {
                ledger.cycle_high_water = ledger.cycle_high_water.max(f.cycle);
                ledger.facts.push(f);
            }
            LedgerRecord::Trajectory(t) => ledger.trajectories.push(t),
        }
    }
    Ok(ledger)
}

/// Resolve every evidence reference against the world log and confirm
/// records. Used by the provenance-closure checks.
pub fn evidence_resolves(
    fact: &VerifiedFact,
    world: &WorldState,
    confirms: &[ConfirmRecord],
) -> bool {
    use crate::world::EventPayload;
    fact.evidence.iter().all(|r| match r {
        EvidenceRef::Callback { source, tick, correlation } => {
            world.event_log.iter().any(|e| {
                e.tick == *tick
                    && e.domain == *source
                    && match &e.payload {
                        EventPayload::CallbackEmitted { correlation: c, .. } => {
                            Some(*c) == *correlation
                        }
                        EventPayload::Observed { .. } => correlation.is_none(),
                        _ => false,
                    }
            })
        }
        EvidenceRef::Confirm { approver, tick, digest } => confirms
            .iter()
            .any(|c| c.approver == *approver && c.tick == *tick && c.proposal_digest == *digest),
        EvidenceRef::Assumed { .. } => false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ajd::CallbackMode;
    use crate::verification::{CallbackEvent, Evidence, EvidenceKind};

    fn certified(claim: FactTriple) -> CertifiedFact {
        CertifiedFact {
            claim: claim.clone(),
            evidence: vec![Evidence {
                kind: EvidenceKind::Callback(CallbackEvent {
                    correlation: Some(CorrelationId(1)),
                    mode: CallbackMode::Explicit,
                    source: "mail".into(),
                    facts: vec![claim.clone()],
                    tick: 2,
                }),
                claim,
            }],
        }
    }

    fn delta(cycle: u64, claims: &[FactTriple]) -> KnowledgeDelta {
        KnowledgeDelta {
            facts: claims.iter().cloned().map(certified).collect(),
            cycle,
        }
    }

    #[test]
    fn refine_unions_and_preserves_order() {
        let base = refine(
            &KnowledgeLedger::new(),
            &delta(
                0,
                &[
                    FactTriple::new("a", "r", "1"),
                    FactTriple::new("b", "r", "2"),
                    FactTriple::new("c", "r", "3"),
                ],
            ),
        )
        .unwrap();
        assert_eq!(base.facts.len(), 3);
        let next = refine(
            &base,
            &delta(1, &[FactTriple::new("d", "r", "4"), FactTriple::new("e", "r", "5")]),
        )
        .unwrap();
        assert_eq!(next.facts.len(), 5);
        let subjects: Vec<&str> = next.facts.iter().map(|f| f.claim.subject.as_str()).collect();
        assert_eq!(subjects, ["a", "b", "c", "d", "e"]);
    }

    #[test]
    fn refine_with_empty_delta_is_identity() {
        let base = refine(&KnowledgeLedger::new(), &delta(0, &[FactTriple::new("a", "r", "1")])).unwrap();
        let same = refine(&base, &KnowledgeDelta { facts: vec![], cycle: 1 }).unwrap();
        assert_eq!(base.facts, same.facts);
        assert_eq!(base.trajectories, same.trajectories);
    }

    #[test]
    fn refine_rejects_evidence_free_facts() {
        let bad = KnowledgeDelta {
            facts: vec![CertifiedFact {
                claim: FactTriple::new("a", "r", "1"),
                evidence: vec![],
            }],
            cycle: 0,
        };
        assert!(matches!(
            refine(&KnowledgeLedger::new(), &bad),
            Err(LedgerError::UncertifiedFact(_))
        ));
    }

    #[test]
    fn contradicting_fact_supersedes_and_reads_are_recency_wins() {
        let base = refine(
            &KnowledgeLedger::new(),
            &delta(0, &[FactTriple::new("equipment", "status", "safe")]),
        )
        .unwrap();
        let next = refine(
            &base,
            &delta(1, &[FactTriple::new("equipment", "status", "unsafe")]),
        )
        .unwrap();
        assert_eq!(next.facts.len(), 2);
        assert_eq!(next.facts[1].supersedes, Some(0));
        assert!(!next.entails(&ClaimPattern::exact("equipment", "status", "safe")));
        assert!(next.entails(&ClaimPattern::exact("equipment", "status", "unsafe")));
    }

    #[test]
    fn identical_claim_is_marked_reconfirmation() {
        let base = refine(
            &KnowledgeLedger::new(),
            &delta(0, &[FactTriple::new("a", "r", "1")]),
        )
        .unwrap();
        let next = refine(&base, &delta(1, &[FactTriple::new("a", "r", "1")])).unwrap();
        assert!(next.facts[1].reconfirmation);
        assert_eq!(next.facts[1].supersedes, None);
    }

    #[test]
    fn assetize_stores_failures_and_flags_duplicates() {
        let spec = ExecutionSpec {
            id: "s0".into(),
            cycle: 0,
            steps: vec![],
            mandatory_slots: Default::default(),
            groundings: Default::default(),
        };
        let traj = Trajectory {
            id: "traj-0".into(),
            spec,
            receipts: vec![],
            delta_claims: vec![],
            outcome: TrajectoryOutcome::Failed("confirm rejected".into()),
            tags: vec!["busan".into()],
            duplicate: false,
        };
        let one = assetize(&KnowledgeLedger::new(), traj.clone()).unwrap();
        assert_eq!(one.trajectories.len(), 1);
        assert!(!one.trajectories[0].duplicate);

        let mut again = traj;
        again.id = "traj-1".into();
        let two = assetize(&one, again).unwrap();
        assert_eq!(two.trajectories.len(), 2);
        assert!(two.trajectories[1].duplicate);
    }

    #[test]
    fn rollover_keeps_trajectories_drops_facts() {
        let base = refine(
            &KnowledgeLedger::new(),
            &delta(0, &[FactTriple::new("a", "r", "1")]),
        )
        .unwrap();
        let spec = ExecutionSpec {
            id: "s0".into(),
            cycle: 0,
            steps: vec![],
            mandatory_slots: Default::default(),
            groundings: Default::default(),
        };
        let with_traj = assetize(
            &base,
            Trajectory {
                id: "t".into(),
                spec,
                receipts: vec![],
                delta_claims: vec![],
                outcome: TrajectoryOutcome::Satisfied,
                tags: vec![],
                duplicate: false,
            },
        )
        .unwrap();
        let epoch = with_traj.rollover();
        assert!(epoch.facts.is_empty());
        assert_eq!(epoch.trajectories.len(), 1);
    }

    #[test]
    fn export_import_round_trips() {
        let base = refine(
            &KnowledgeLedger::new(),
            &delta(0, &[FactTriple::new("a", "r", "1"), FactTriple::new("b", "r", "2")]),
        )
        .unwrap();
        let text = export_ledger(&base);
        let back = import_ledger(&text).unwrap();
        assert_eq!(base, back);
    }
}
