//! The epistemic bridge between opaque world changes and certified evidence.
//!
//! Two channels. Callbacks do fact verification: explicit callbacks are
//! logged emissions on a designed path, implicit callbacks are observations
//! matched against a declared predicate. Confirms do value verification:
//! a biddable approver — never the executor itself — rules on a proposal.
//! [`certify`] turns collected evidence into a verified fact only when every
//! channel the contract declares for that claim has contributed.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ajd::{CallbackMode, CallbackSpec, DomainKind, EvaluationDecl};
use crate::fact::FactTriple;
use crate::world::{
    affect, observe, step_world, ActionInstance, BidStatus, CorrelationId, EventPayload,
    Observation, Query, WorldState,
};

// ---------------------------------------------------------------------------
// Evidence types
// ---------------------------------------------------------------------------

/// A callback that arrived: the channel's report of a world change.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallbackEvent {
    /// Correlation of the causing action; implicit callbacks have none.
    pub correlation: Option<CorrelationId>,
    pub mode: CallbackMode,
    pub source: String,
    pub facts: Vec<FactTriple>,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfirmVerdict {
    Approved,
    Rejected(String),
}

/// Ruling by an approver on a proposal. The approver is always a different
/// party from the executor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfirmRecord {
    pub approver: String,
    pub executor: String,
    pub proposal_digest: String,
    pub verdict: ConfirmVerdict,
    pub tick: u64,
}

/// One piece of evidence supporting exactly one claim.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Evidence {
    pub kind: EvidenceKind,
    pub claim: FactTriple,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceKind {
    Callback(CallbackEvent),
    Confirm(ConfirmRecord),
}

// ---------------------------------------------------------------------------
// Callback channel
// ---------------------------------------------------------------------------

/// Outcome of waiting past the budget: a possible open-loop condition, not
/// a crash. No knowledge is produced for the correlation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WaitTimeout {
    pub ticks_waited: u64,
}

/// Wait for a callback matching `spec`, stepping the world up to `budget`
/// ticks. Explicit mode scans the event log from the correlation's issue
/// point; implicit mode polls the observable predicate each tick.
pub fn await_callback(
    world: &mut WorldState,
    spec: &CallbackSpec,
    correlation: CorrelationId,
    issued_at: u64,
    budget: u64,
) -> Result<CallbackEvent, WaitTimeout> {
    let mut waited = 0;
    loop {
        if let Some(event) = scan_for_callback(world, spec, correlation, issued_at) {
            return Ok(event);
        }
        if waited >= budget {
            return Err(WaitTimeout { ticks_waited: waited });
        }
        step_world(world);
        waited += 1;
    }
}

fn scan_for_callback(
    world: &mut WorldState,
    spec: &CallbackSpec,
    correlation: CorrelationId,
    issued_at: u64,
) -> Option<CallbackEvent> {
    match spec.mode {
        CallbackMode::Explicit => world
            .event_log
            .iter()
            .filter(|e| e.tick >= issued_at && e.domain == spec.channel)
            .find_map(|e| match &e.payload {
                EventPayload::CallbackEmitted { correlation: c, facts }
                    if *c == correlation && facts.iter().any(|f| spec.matches.matches(f)) =>
                {
                    Some(CallbackEvent {
                        correlation: Some(*c),
                        mode: CallbackMode::Explicit,
                        source: spec.channel.clone(),
                        facts: facts.clone(),
                        tick: e.tick,
                    })
                }
                _ => None,
            }),
        CallbackMode::Implicit => {
            let obs = poll_implicit(world, &spec.channel, spec).ok()??;
            let facts = observation_facts(&obs, spec);
            // Record that the side effect was observed: implicit callbacks
            // are shared phenomena too.
            world.log(
                &spec.channel,
                EventPayload::Observed {
                    summary: format!("implicit callback {} matched", spec.id),
                },
            );
            Some(CallbackEvent {
                correlation: None,
                mode: CallbackMode::Implicit,
                source: spec.channel.clone(),
                facts,
                tick: world.tick,
            })
        }
    }
}

/// Check an implicit-callback predicate right now. Never blocks, never
/// mutates. `Ok(None)` means the predicate does not hold yet.
pub fn poll_implicit(
    world: &WorldState,
    domain: &str,
    spec: &CallbackSpec,
) -> Result<Option<Observation>, crate::world::WorldError> {
    let d = world.domain(domain)?;
    // State-variable reading: the claim (subject=domain, relation=var,
    // object=value) holds when the variable currently equals the object.
    if let (crate::fact::PatternTerm::Exact(var), crate::fact::PatternTerm::Exact(want)) =
        (&spec.matches.relation, &spec.matches.object)
    {
        if let Some(value) = d.state_vars.get(var) {
            if value.to_string() == *want {
                let obs = observe(world, domain, &Query::StateVar(var.clone()))?;
                return Ok(Some(obs));
            }
            return Ok(None);
        }
    }
    // Otherwise poll the inbox for a matching message.
    let obs = observe(world, domain, &Query::Inbox(spec.matches.clone()))?;
    match &obs {
        Observation::Messages(msgs) if !msgs.is_empty() => Ok(Some(obs)),
        _ => Ok(None),
    }
}

fn observation_facts(obs: &Observation, spec: &CallbackSpec) -> Vec<FactTriple> {
    match obs {
        Observation::Vars(vars) => vars
            .iter()
            .map(|(var, value)| {
                FactTriple::new(spec.channel.clone(), var.clone(), value.to_string())
            })
            .collect(),
        Observation::Messages(msgs) => msgs
            .iter()
            .flat_map(|m| m.facts.iter())
            .filter(|f| spec.matches.matches(f))
            .cloned()
            .collect(),
        Observation::Facts(facts) => facts.clone(),
        Observation::BidStatus(_) => Vec::new(),
    }
}

// ---------------------------------------------------------------------------
// Confirm channel
// ---------------------------------------------------------------------------

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfirmError {
    /// The executor does not approve their own work.
    #[error("self-approval rejected: {0} cannot approve its own proposal")]
    SelfApproval(String),
    #[error("approver {0} unavailable (missing or not biddable)")]
    ApproverUnavailable(String),
}

/// A proposal put to an approver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub kind: String,
    pub summary: String,
    pub params: std::collections::BTreeMap<String, String>,
}

impl Proposal {
    pub fn digest(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.kind.as_bytes());
        hasher.update([0]);
        hasher.update(self.summary.as_bytes());
        for (k, v) in &self.params {
            hasher.update([0]);
            hasher.update(k.as_bytes());
            hasher.update([0]);
            hasher.update(v.as_bytes());
        }
        let out = hasher.finalize();
        out.iter().take(16).map(|b| format!("{b:02x}")).collect()
    }
}

/// Put a proposal to a biddable approver and wait for the scripted policy to
/// resolve it on a subsequent world step. Returns the record either way;
/// a rejection is still a confirmed ruling.
pub fn request_confirm(
    world: &mut WorldState,
    approver: &str,
    proposal: &Proposal,
    executor: &str,
) -> Result<ConfirmRecord, ConfirmError> {
    if approver == executor {
        return Err(ConfirmError::SelfApproval(executor.to_string()));
    }
    let Ok(domain) = world.domain(approver) else {
        return Err(ConfirmError::ApproverUnavailable(approver.to_string()));
    };
    if domain.kind != DomainKind::Biddable {
        return Err(ConfirmError::ApproverUnavailable(approver.to_string()));
    }

    let mut action = ActionInstance::new(format!("confirm_{}", proposal.kind), approver);
    action.params = proposal.params.clone();
    action
        .params
        .insert("proposal_digest".into(), proposal.digest());
    let receipt = affect(world, approver, &action).expect("biddable affect cannot fail here");

    let delay = world
        .domain(approver)
        .map(|d| d.policy.as_ref().map(|p| p.delay_ticks).unwrap_or(1))
        .unwrap_or(1);
    // Policies resolve exactly at enqueue + delay; a small margin covers
    // fixtures that also gate on other per-tick work.
    let patience = delay + 8;

    for _ in 0..=patience {
        if let Ok(Observation::BidStatus(status)) =
            observe(world, approver, &Query::Bid(receipt.correlation))
        {
            match status {
                BidStatus::Pending => step_world(world),
                BidStatus::Accepted => {
                    return Ok(ConfirmRecord {
                        approver: approver.to_string(),
                        executor: executor.to_string(),
                        proposal_digest: proposal.digest(),
                        verdict: ConfirmVerdict::Approved,
                        tick: world.tick,
                    });
                }
                BidStatus::Refused => {
                    let reason = world
                        .event_log
                        .iter()
                        .rev()
                        .find_map(|e| match &e.payload {
                            EventPayload::BidResolved {
                                correlation,
                                approved: false,
                                reason,
                            } if *correlation == receipt.correlation => Some(reason.clone()),
                            _ => None,
                        })
                        .unwrap_or_else(|| "refused".to_string());
                    return Ok(ConfirmRecord {
                        approver: approver.to_string(),
                        executor: executor.to_string(),
                        proposal_digest: proposal.digest(),
                        verdict: ConfirmVerdict::Rejected(reason),
                        tick: world.tick,
                    });
                }
            }
        }
    }
    Err(ConfirmError::ApproverUnavailable(approver.to_string()))
}

// ---------------------------------------------------------------------------
// Certification
// ---------------------------------------------------------------------------

/// A claim certified with its supporting evidence, ready for the ledger.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CertifiedFact {
    pub claim: FactTriple,
    pub evidence: Vec<Evidence>,
}

/// Channels the contract requires for a claim that have not contributed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insufficient {
    pub missing: Vec<String>,
}

/// Certify a claim against the contract's evaluation declaration. Coverage
/// is conjunctive: every callback and confirm whose declaration reaches the
/// claim must have contributed one piece of evidence. A claim no channel
/// covers is never certifiable.
pub fn certify(
    evidence: &[Evidence],
    claim: &FactTriple,
    evaluation: &EvaluationDecl,
) -> Result<CertifiedFact, Insufficient> {
    let mut missing = Vec::new();
    let mut supporting = Vec::new();

    let mut any_channel = false;
    for cb in evaluation
        .callbacks
        .iter()
        .filter(|cb| cb.matches.matches(claim))
    {
        any_channel = true;
        let found = evidence.iter().find(|e| {
            e.claim == *claim
                && matches!(&e.kind, EvidenceKind::Callback(ev) if ev.source == cb.channel && ev.mode == cb.mode)
        });
        match found {
            Some(e) => supporting.push(e.clone()),
            None => missing.push(cb.id.clone()),
        }
    }
    for cf in evaluation
        .confirms
        .iter()
        .filter(|cf| cf.certifies.matches(claim))
    {
        any_channel = true;
        let found = evidence.iter().find(|e| {
            e.claim == *claim
                && matches!(&e.kind, EvidenceKind::Confirm(r) if r.approver == cf.approver)
        });
        match found {
            Some(e) => supporting.push(e.clone()),
            None => missing.push(cf.id.clone()),
        }
    }

    if !any_channel {
        return Err(Insufficient {
            missing: vec!["no declared channel covers this claim".to_string()],
        });
    }
    if !missing.is_empty() {
        return Err(Insufficient { missing });
    }
    Ok(CertifiedFact {
        claim: claim.clone(),
        evidence: supporting,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ajd::ConfirmSpec;
    use crate::fact::ClaimPattern;
    use crate::world::{
        ApprovalPolicy, CallbackEmit, DomainState, Scalar, VerbBehavior,
    };

    fn callback_spec(id: &str, channel: &str, pattern: ClaimPattern) -> CallbackSpec {
        CallbackSpec {
            id: id.into(),
            channel: channel.into(),
            mode: CallbackMode::Explicit,
            matches: pattern,
            timeout_ticks: 5,
        }
    }

    fn booking_world(voucher_delay: u64) -> WorldState {
        let mut w = WorldState::new(42);
        let mut rail = DomainState::new("rail_api", DomainKind::Causal);
        rail.verbs.insert(
            "book".into(),
            VerbBehavior {
                sets: vec![],
                emits: Some(CallbackEmit {
                    channel: "mail".into(),
                    delay: voucher_delay,
                    payload: vec![FactTriple::new("trip", "voucher", "received")],
                }),
            },
        );
        w.add_domain(rail);
        w.add_domain(DomainState::new("mail", DomainKind::Causal));
        w
    }

    #[test]
    fn explicit_callback_arrives_at_delivery_delay() {
        let mut w = booking_world(2);
        let receipt = affect(&mut w, "rail_api", &ActionInstance::new("book", "rail_api")).unwrap();
        let spec = callback_spec("voucher", "mail", ClaimPattern::with_any_object("trip", "voucher"));
        let event = await_callback(&mut w, &spec, receipt.correlation, receipt.tick, 5).unwrap();
        assert_eq!(event.tick, receipt.tick + 2);
        assert_eq!(event.facts, vec![FactTriple::new("trip", "voucher", "received")]);
    }

    #[test]
    fn zero_budget_times_out_immediately() {
        let mut w = booking_world(2);
        let spec = callback_spec("voucher", "mail", ClaimPattern::with_any_object("trip", "voucher"));
        let err = await_callback(&mut w, &spec, CorrelationId(99), 0, 0).unwrap_err();
        assert_eq!(err.ticks_waited, 0);
    }

    #[test]
    fn dropped_voucher_times_out_after_budget() {
        let mut w = booking_world(2);
        let mut params = std::collections::BTreeMap::new();
        params.insert("match".into(), "voucher".into());
        w.schedule_fault(crate::world::FaultSpec {
            kind: crate::world::FaultKind::VoucherDrop,
            at_tick: 0,
            parameters: params,
        })
        .unwrap();
        w.fire_due_faults();
        let receipt = affect(&mut w, "rail_api", &ActionInstance::new("book", "rail_api")).unwrap();
        let spec = callback_spec("voucher", "mail", ClaimPattern::with_any_object("trip", "voucher"));
        let err = await_callback(&mut w, &spec, receipt.correlation, receipt.tick, 5).unwrap_err();
        assert_eq!(err.ticks_waited, 5);
        // The booking was accepted; only the verification path is silent.
        assert!(w.domain("mail").unwrap().inbox.is_empty());
    }

    #[test]
    fn implicit_poll_reads_state_variable() {
        let mut w = WorldState::new(7);
        let mut eq = DomainState::new("equipment", DomainKind::Causal);
        eq.state_vars.insert("rpm".into(), Scalar::Int(0));
        w.add_domain(eq);
        let spec = CallbackSpec {
            id: "rpm_zero".into(),
            channel: "equipment".into(),
            mode: CallbackMode::Implicit,
            matches: ClaimPattern::exact("equipment", "rpm", "0"),
            timeout_ticks: 3,
        };
        let obs = poll_implicit(&w, "equipment", &spec).unwrap().unwrap();
        match obs {
            Observation::Vars(vars) => assert_eq!(vars["rpm"], Scalar::Int(0)),
            other => panic!("expected vars, got {other:?}"),
        }
    }

    #[test]
    fn implicit_poll_unsatisfied_on_untouched_world() {
        let mut w = WorldState::new(7);
        let mut eq = DomainState::new("equipment", DomainKind::Causal);
        eq.state_vars.insert("rpm".into(), Scalar::Int(1500));
        w.add_domain(eq);
        let spec = CallbackSpec {
            id: "rpm_zero".into(),
            channel: "equipment".into(),
            mode: CallbackMode::Implicit,
            matches: ClaimPattern::exact("equipment", "rpm", "0"),
            timeout_ticks: 3,
        };
        assert_eq!(poll_implicit(&w, "equipment", &spec).unwrap(), None);
    }

    #[test]
    fn inbox_predicate_flips_exactly_at_delivery_tick() {
        let mut w = booking_world(2);
        let _ = affect(&mut w, "rail_api", &ActionInstance::new("book", "rail_api")).unwrap();
        let spec = CallbackSpec {
            id: "voucher".into(),
            channel: "mail".into(),
            mode: CallbackMode::Implicit,
            matches: ClaimPattern::with_any_object("trip", "voucher"),
            timeout_ticks: 5,
        };
        step_world(&mut w); // tick 1: one tick before delivery
        assert_eq!(poll_implicit(&w, "mail", &spec).unwrap(), None);
        step_world(&mut w); // tick 2: delivered
        assert!(poll_implicit(&w, "mail", &spec).unwrap().is_some());
    }

    fn approver_world(require: &[&str]) -> WorldState {
        let mut w = WorldState::new(1);
        let mut mgr = DomainState::new("site_manager", DomainKind::Biddable);
        mgr.policy = Some(ApprovalPolicy {
            delay_ticks: 1,
            require_params: require.iter().map(|s| s.to_string()).collect(),
        });
        w.add_domain(mgr);
        w
    }

    #[test]
    fn confirm_resolves_per_policy() {
        let mut w = approver_world(&[]);
        let proposal = Proposal {
            kind: "itinerary".into(),
            summary: "rail + hotel within caps".into(),
            params: Default::default(),
        };
        let record = request_confirm(&mut w, "site_manager", &proposal, "assistant").unwrap();
        assert_eq!(record.verdict, ConfirmVerdict::Approved);
        assert_eq!(record.approver, "site_manager");
    }

    #[test]
    fn self_approval_is_rejected_before_enqueue() {
        let mut w = approver_world(&[]);
        let proposal = Proposal {
            kind: "itinerary".into(),
            summary: "s".into(),
            params: Default::default(),
        };
        let err = request_confirm(&mut w, "site_manager", &proposal, "site_manager").unwrap_err();
        assert_eq!(err, ConfirmError::SelfApproval("site_manager".into()));
        assert!(w.domain("site_manager").unwrap().pending_bids.is_empty());
    }

    #[test]
    fn missing_approver_is_unavailable() {
        let mut w = approver_world(&[]);
        let proposal = Proposal {
            kind: "x".into(),
            summary: "s".into(),
            params: Default::default(),
        };
        let err = request_confirm(&mut w, "ghost", &proposal, "assistant").unwrap_err();
        assert_eq!(err, ConfirmError::ApproverUnavailable("ghost".into()));
    }

    #[test]
    fn part_citing_proposal_is_approved_under_require_params() {
        let mut w = approver_world(&["part"]);
        let mut params = std::collections::BTreeMap::new();
        params.insert("part".into(), "bearing_kit_77".into());
        let proposal = Proposal {
            kind: "incident_report".into(),
            summary: "root cause: bearing wear".into(),
            params,
        };
        let record = request_confirm(&mut w, "site_manager", &proposal, "supervisor").unwrap();
        assert_eq!(record.verdict, ConfirmVerdict::Approved);

        // And without the part, the scripted policy refuses.
        let bare = Proposal {
            kind: "incident_report".into(),
            summary: "root cause: unknown".into(),
            params: Default::default(),
        };
        let record = request_confirm(&mut w, "site_manager", &bare, "supervisor").unwrap();
        assert!(matches!(record.verdict, ConfirmVerdict::Rejected(_)));
    }

    fn sample_evaluation() -> EvaluationDecl {
        EvaluationDecl {
            callbacks: vec![callback_spec(
                "voucher",
                "mail",
                ClaimPattern::with_any_object("trip", "voucher"),
            )],
            confirms: vec![ConfirmSpec {
                id: "user_ok".into(),
                approver: "user".into(),
                proposal_kind: "itinerary".into(),
                certifies: ClaimPattern::with_any_object("trip", "approval"),
                proposal_params: vec![],
            }],
        }
    }

    fn callback_evidence(claim: &FactTriple) -> Evidence {
        Evidence {
            kind: EvidenceKind::Callback(CallbackEvent {
                correlation: Some(CorrelationId(1)),
                mode: CallbackMode::Explicit,
                source: "mail".into(),
                facts: vec![claim.clone()],
                tick: 2,
            }),
            claim: claim.clone(),
        }
    }

    #[test]
    fn certify_accepts_fully_covered_claim() {
        let claim = FactTriple::new("trip", "voucher", "received");
        let certified = certify(&[callback_evidence(&claim)], &claim, &sample_evaluation()).unwrap();
        assert_eq!(certified.claim, claim);
        assert_eq!(certified.evidence.len(), 1);
    }

    #[test]
    fn certify_with_no_evidence_lists_all_channels() {
        let claim = FactTriple::new("trip", "voucher", "received");
        let err = certify(&[], &claim, &sample_evaluation()).unwrap_err();
        assert_eq!(err.missing, vec!["voucher".to_string()]);
    }

    #[test]
    fn certify_reports_missing_confirm() {
        // A claim covered by both a callback and a confirm needs both.
        let evaluation = EvaluationDecl {
            callbacks: vec![callback_spec(
                "safe_cb",
                "mail",
                ClaimPattern::with_any_object("equipment", "safe"),
            )],
            confirms: vec![ConfirmSpec {
                id: "mgr_ok".into(),
                approver: "site_manager".into(),
                proposal_kind: "safety".into(),
                certifies: ClaimPattern::with_any_object("equipment", "safe"),
                proposal_params: vec![],
            }],
        };
        let claim = FactTriple::new("equipment", "safe", "true");
        let err = certify(&[callback_evidence(&claim)], &claim, &evaluation).unwrap_err();
        assert_eq!(err.missing, vec!["mgr_ok".to_string()]);
    }

    #[test]
    fn uncovered_claim_is_never_certifiable() {
        let claim = FactTriple::new("moon", "phase", "full");
        assert!(certify(&[callback_evidence(&claim)], &claim, &sample_evaluation()).is_err());
    }
}
