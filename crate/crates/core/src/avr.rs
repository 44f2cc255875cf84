//! The Act–Verify–Refine loop engine.
//!
//! One mission run drives up to `T` cycles of: retrieve context → inject a
//! plan → bind slots → scope check → act → verify → refine → propagate. The
//! contract is enforced throughout: no step executes while its mandatory
//! slots are unbound or the scope verdict is blocked, and nothing enters the
//! ledger without certification. Epistemic uncertainty is tracked per cycle
//! and the run ends in an honest verdict: satisfied, exhausted, or blocked.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ajd::{AjdSpec, CallbackMode, CallbackSpec};
use crate::fact::{ClaimPattern, FactTriple, PatternTerm};
use crate::ledger::{
    assetize, derive_tags, refine, retrieve_context, KnowledgeDelta, KnowledgeLedger, Trajectory,
    TrajectoryOutcome,
};
use crate::performer::{
    bind_slot, check_scope, inject, ContextBundle, ExecutionSpec, GroundingRef, Planner,
    ScopeVerdict, TriggerEvent,
};
use crate::trace::{DeltaFactRecord, TraceRecord, TraceVerdict};
use crate::verification::{
    certify, request_confirm, CallbackEvent, ConfirmRecord, ConfirmVerdict, Evidence,
    EvidenceKind, Proposal,
};
use crate::world::{
    affect, observe, step_world, ActionInstance, CorrelationId, EventPayload, Observation, Query,
    Receipt, TriggerSource, WorldState,
};

// ---------------------------------------------------------------------------
// Records and reports
// ---------------------------------------------------------------------------

/// One executed AVR cycle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub t: u64,
    pub spec: ExecutionSpec,
    pub scope: ScopeVerdict,
    /// Steps actually executed, with slot values resolved.
    pub executed: Vec<ActionInstance>,
    pub receipts: Vec<Receipt>,
    /// Steps withheld because their mandatory slots were unbound.
    pub deferred: Vec<ActionInstance>,
    pub delta: KnowledgeDelta,
    /// Claims taken on faith from bare receipts (open-loop runs only).
    pub assumed: Vec<FactTriple>,
    pub timeouts: Vec<CorrelationId>,
    pub u_after: u64,
    pub satisfied_after: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// Satisfied after `t` cycles.
    Satisfied(u64),
    /// Budget of `T` cycles spent without satisfaction.
    Exhausted(u64),
    /// Unrecoverable planning condition; nothing more the loop can do.
    Blocked(String),
}

impl Verdict {
    pub fn is_satisfied(&self) -> bool {
        matches!(self, Verdict::Satisfied(_))
    }
}

/// A divergence between what the ledger asserts and what the world shows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mismatch {
    pub claim: FactTriple,
    pub assumed: bool,
    pub detail: String,
}

/// Full record of one mission run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionReport {
    pub mission: String,
    pub planner: String,
    pub seed: u64,
    pub budget: u64,
    pub verification_enabled: bool,
    pub verdict: Verdict,
    pub u_curve: Vec<u64>,
    pub cycles: Vec<CycleRecord>,
    pub confirm_records: Vec<ConfirmRecord>,
    pub mismatches: Vec<Mismatch>,
    pub final_tick: u64,
    pub trace: Vec<TraceRecord>,
}

// ---------------------------------------------------------------------------
// Uncertainty and satisfaction
// ---------------------------------------------------------------------------

/// Epistemic uncertainty: unmet requirement predicates plus unbound
/// mandatory slots in the current spec (zero when there is none). Zero
/// implies the satisfaction check passes.
pub fn uncertainty(ajd: &AjdSpec, ledger: &KnowledgeLedger, spec: Option<&ExecutionSpec>) -> u64 {
    let unmet = ajd
        .mission
        .predicates
        .iter()
        .filter(|p| !ledger.entails(&p.claim))
        .count() as u64;
    let unbound = spec.map(|s| s.unbound_slots() as u64).unwrap_or(0);
    unmet + unbound
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SatisfactionCheck {
    pub satisfied: bool,
    pub per_predicate: BTreeMap<String, bool>,
}

/// True iff every requirement predicate is entailed by a live ledger fact
/// (recency wins over supersedes chains).
pub fn check_satisfaction(ajd: &AjdSpec, ledger: &KnowledgeLedger) -> SatisfactionCheck {
    let per_predicate: BTreeMap<String, bool> = ajd
        .mission
        .predicates
        .iter()
        .map(|p| (p.id.clone(), ledger.entails(&p.claim)))
        .collect();
    SatisfactionCheck {
        satisfied: per_predicate.values().all(|v| *v),
        per_predicate,
    }
}

/// Compare every ledger claim against the world through the scenario's
/// oracle rules. Oracle access to the full world is a test-time privilege;
/// the performer itself never sees this.
pub fn detect_mismatch(world: &WorldState, ledger: &KnowledgeLedger) -> Vec<Mismatch> {
    let mut out = Vec::new();
    for fact in ledger.live_facts() {
        let Some(rule) = world.oracle.iter().find(|r| r.pattern.matches(&fact.claim)) else {
            continue;
        };
        let holds = oracle_holds(world, &rule.check, &fact.claim);
        if !holds {
            out.push(Mismatch {
                claim: fact.claim.clone(),
                assumed: fact.assumed,
                detail: format!("world check failed: {:?}", rule.check),
            });
        }
    }
    out
}

fn oracle_holds(world: &WorldState, check: &crate::world::OracleCheck, claim: &FactTriple) -> bool {
    use crate::world::OracleCheck;
    match check {
        OracleCheck::InboxContains { domain } => world
            .domain(domain)
            .map(|d| d.inbox.iter().any(|m| m.facts.contains(claim)))
            .unwrap_or(false),
        OracleCheck::EffectLogged { domain, verb } => world.event_log.iter().any(|e| {
            e.domain == *domain
                && matches!(&e.payload, EventPayload::EffectApplied { verb: v, .. } if v == verb)
        }),
        OracleCheck::StateVarEquals { domain, var } => world
            .domain(domain)
            .ok()
            .and_then(|d| d.state_vars.get(var))
            .map(|v| v.to_string() == claim.object)
            .unwrap_or(false),
        OracleCheck::BidApproved { domain } => world.event_log.iter().any(|e| {
            e.domain == *domain
                && matches!(e.payload, EventPayload::BidResolved { approved: true, .. })
        }),
    }
}

// ---------------------------------------------------------------------------
// Mission runner
// ---------------------------------------------------------------------------

/// Configurable mission execution. [`run_mission`] is the plain entry point;
/// the builder form exposes the open-loop switch used by fault experiments.
pub struct MissionRunner<'a> {
    ajd: &'a AjdSpec,
    planner: &'a dyn Planner,
    seed: u64,
    budget: u64,
    verification: bool,
}

struct PendingCallback {
    correlation: CorrelationId,
    issued_at: u64,
}

impl<'a> MissionRunner<'a> {
    pub fn new(ajd: &'a AjdSpec, planner: &'a dyn Planner, seed: u64, budget: u64) -> Self {
        Self {
            ajd,
            planner,
            seed,
            budget,
            verification: true,
        }
    }

    /// Disable the verification channels: the run trusts bare receipts.
    /// The guardrail stays on; this switch reproduces open-loop failure.
    pub fn verification(mut self, enabled: bool) -> Self {
        self.verification = enabled;
        self
    }

    pub fn run(&self, world: &mut WorldState) -> MissionReport {
        self.run_with_ledger(world, KnowledgeLedger::new()).0
    }

    /// Run with a starting ledger (carried memory); returns the final ledger
    /// so missions can be chained.
    pub fn run_with_ledger(
        &self,
        world: &mut WorldState,
        ledger: KnowledgeLedger,
    ) -> (MissionReport, KnowledgeLedger) {
        let mut ledger = ledger;
        let mut cycles: Vec<CycleRecord> = Vec::new();
        let mut u_curve: Vec<u64> = Vec::new();
        let mut confirm_records: Vec<ConfirmRecord> = Vec::new();
        let mut trace: Vec<TraceRecord> = Vec::new();
        let mut pending: Vec<PendingCallback> = Vec::new();
        let mut processed_log_upto: usize = 0;

        let initially_entailed: Vec<String> = self
            .ajd
            .mission
            .predicates
            .iter()
            .filter(|p| ledger.entails(&p.claim))
            .map(|p| p.id.clone())
            .collect();

        // The trace is assembled at the end: the header needs the initial
        // uncertainty, which is only known once the first spec manifests.
        let finish = |verdict: Verdict,
                      u_curve: Vec<u64>,
                      cycles: Vec<CycleRecord>,
                      confirm_records: Vec<ConfirmRecord>,
                      trace_cycles: Vec<TraceRecord>,
                      world: &WorldState,
                      ledger: KnowledgeLedger| {
            let mut trace = Vec::with_capacity(trace_cycles.len() + 2);
            trace.push(TraceRecord::Header {
                schema_version: crate::trace::SCHEMA_VERSION,
                mission: self.ajd.meta.name.clone(),
                planner: self.planner.name().to_string(),
                seed: self.seed,
                budget: self.budget,
                verification: self.verification,
                predicates: self
                    .ajd
                    .mission
                    .predicates
                    .iter()
                    .map(|p| (p.id.clone(), p.claim.clone()))
                    .collect(),
                initially_entailed: initially_entailed.clone(),
                initial_u: u_curve.first().copied().unwrap_or(0),
            });
            trace.extend(trace_cycles);
            trace.push(TraceRecord::Verdict {
                verdict: TraceVerdict::from(&verdict),
                cycles: cycles.len() as u64,
            });
            let mismatches = detect_mismatch(world, &ledger);
            (
                MissionReport {
                    mission: self.ajd.meta.name.clone(),
                    planner: self.planner.name().to_string(),
                    seed: self.seed,
                    budget: self.budget,
                    verification_enabled: self.verification,
                    verdict,
                    u_curve,
                    cycles,
                    confirm_records,
                    mismatches,
                    final_tick: world.tick,
                    trace,
                },
                ledger,
            )
        };

        // Pre-flight: an already-satisfied contract needs no cycle.
        if check_satisfaction(self.ajd, &ledger).satisfied {
            u_curve.push(0);
            return finish(
                Verdict::Satisfied(0),
                u_curve,
                cycles,
                confirm_records,
                trace,
                world,
                ledger,
            );
        }

        if self.budget == 0 {
            u_curve.push(uncertainty(self.ajd, &ledger, None));
            return finish(
                Verdict::Exhausted(0),
                u_curve,
                cycles,
                confirm_records,
                trace,
                world,
                ledger,
            );
        }

        // Wait for the trigger event declared by the scenario.
        let Some(event) = self.await_trigger(world) else {
            u_curve.push(uncertainty(self.ajd, &ledger, None));
            return finish(
                Verdict::Blocked("trigger never materialized".to_string()),
                u_curve,
                cycles,
                confirm_records,
                trace,
                world,
                ledger,
            );
        };

        let wait_bound = self
            .ajd
            .evaluation
            .callbacks
            .iter()
            .filter(|cb| cb.mode == CallbackMode::Explicit)
            .map(|cb| cb.timeout_ticks)
            .max()
            .unwrap_or(0);

        for t in 0..self.budget {
            let cycle_start_tick = world.tick;
            let bundle = retrieve_context(&ledger, world, &event, self.ajd);

            // Inject: manifest this cycle's execution specification.
            let mut spec = match inject(&event, &bundle, self.planner, t, self.seed) {
                Ok(spec) => spec,
                Err(e) => {
                    if t == 0 {
                        u_curve.push(uncertainty(self.ajd, &ledger, None));
                    }
                    return finish(
                        Verdict::Blocked(e.to_string()),
                        u_curve,
                        cycles,
                        confirm_records,
                        trace,
                        world,
                        ledger,
                    );
                }
            };

            if t == 0 {
                // Initial uncertainty is read off the freshly manifested
                // spec, before anything has been grounded.
                u_curve.push(uncertainty(self.ajd, &ledger, Some(&spec)));
            }

            spec = self.bind_pass(spec, &bundle);

            let scope = check_scope(&spec, &self.ajd.scope);

            let mut executed: Vec<ActionInstance> = Vec::new();
            let mut receipts: Vec<Receipt> = Vec::new();
            let mut deferred: Vec<ActionInstance> = Vec::new();
            let mut timeouts: Vec<CorrelationId> = Vec::new();
            let mut assumed_claims: Vec<FactTriple> = Vec::new();
            let mut delta = KnowledgeDelta {
                facts: vec![],
                cycle: t,
            };
            let mut cycle_failures: Vec<String> = Vec::new();

            if scope.is_allowed() {
                // Act: execute the steps whose slots are bound.
                let steps = spec.steps.clone();
                for step in &steps {
                    if !spec.step_ready(step, &bundle.capabilities) {
                        deferred.push(step.clone());
                        continue;
                    }
                    let resolved = spec.resolved_step(step, &bundle.capabilities);
                    match affect(world, &resolved.target, &resolved) {
                        Ok(receipt) => {
                            let cap = self.ajd.capability(&resolved.verb, &resolved.target);
                            if self.verification {
                                if cap.is_some_and(|c| c.side_effects) {
                                    pending.push(PendingCallback {
                                        correlation: receipt.correlation,
                                        issued_at: receipt.tick,
                                    });
                                }
                            } else if let Some(cap) = cap {
                                // Open loop: execution equals success.
                                for claim in &cap.assumes {
                                    ledger.assume(claim.clone(), receipt.correlation, t);
                                    assumed_claims.push(claim.clone());
                                }
                            }
                            executed.push(resolved);
                            receipts.push(receipt);
                        }
                        Err(e) => cycle_failures.push(e.to_string()),
                    }
                }

                if self.verification {
                    // Verify: harvest callbacks, then value confirmation.
                    let mut evidence = self.collect_callbacks(
                        world,
                        &mut pending,
                        &mut processed_log_upto,
                        wait_bound,
                        &mut timeouts,
                    );
                    evidence.extend(self.poll_implicit_channels(world, &ledger));
                    evidence.extend(self.confirm_phase(
                        world,
                        &ledger,
                        &mut confirm_records,
                        &mut cycle_failures,
                    ));

                    // Certify per claim; only fully covered claims survive.
                    let mut by_claim: BTreeMap<FactTriple, Vec<Evidence>> = BTreeMap::new();
                    for e in evidence {
                        by_claim.entry(e.claim.clone()).or_default().push(e);
                    }
                    for (claim, support) in by_claim {
                        if let Ok(certified) = certify(&support, &claim, &self.ajd.evaluation) {
                            delta.facts.push(certified);
                        }
                    }
                }
            } else {
                cycle_failures.push("scope blocked".to_string());
            }

            // Refine: K_{t+1} = K_t ∪ K_Δ. Certification happened above, so
            // this cannot reject in closed-loop runs.
            ledger = refine(&ledger, &delta).expect("delta facts are certified");

            // Post-refine rebinding: freshly certified knowledge may ground
            // slots that were unbound at act time.
            spec = self.bind_pass(spec, &retrieve_context(&ledger, world, &event, self.ajd));

            if !timeouts.is_empty() {
                cycle_failures.push(format!("callback timeout for {timeouts:?}"));
            }

            let satisfied = check_satisfaction(self.ajd, &ledger).satisfied;
            let u_after = uncertainty(self.ajd, &ledger, Some(&spec));
            u_curve.push(u_after);

            // Assetize the cycle's trajectory once its verification settled.
            if self.verification {
                let outcome = if cycle_failures.is_empty() {
                    TrajectoryOutcome::Satisfied
                } else {
                    TrajectoryOutcome::Failed(cycle_failures.join("; "))
                };
                let claims: Vec<FactTriple> =
                    delta.facts.iter().map(|f| f.claim.clone()).collect();
                let tags = derive_tags(&event, &spec);
                let trajectory = Trajectory {
                    id: format!("traj-{}-{}", self.seed, t),
                    spec: spec.clone(),
                    receipts: receipts.clone(),
                    delta_claims: claims,
                    outcome,
                    tags,
                    duplicate: false,
                };
                ledger = assetize(&ledger, trajectory).expect("trajectory is complete");
            }

            let record = CycleRecord {
                t,
                spec: spec.clone(),
                scope: scope.clone(),
                executed,
                receipts,
                deferred,
                delta: delta.clone(),
                assumed: assumed_claims.clone(),
                timeouts,
                u_after,
                satisfied_after: satisfied,
            };
            debug_assert!(hoare_holds(&record));
            trace.push(TraceRecord::Cycle {
                t,
                scope_allowed: scope.is_allowed(),
                receipts: record.receipts.len() as u64,
                delta: delta
                    .facts
                    .iter()
                    .map(|f| DeltaFactRecord {
                        claim: f.claim.clone(),
                        assumed: false,
                    })
                    .chain(assumed_claims.iter().map(|c| DeltaFactRecord {
                        claim: c.clone(),
                        assumed: true,
                    }))
                    .collect(),
                unbound_slots_after: spec.unbound_slots() as u64,
                u_after,
            });
            cycles.push(record);

            if satisfied {
                // Early stop: no further world effects once satisfied.
                return finish(
                    Verdict::Satisfied(t + 1),
                    u_curve,
                    cycles,
                    confirm_records,
                    trace,
                    world,
                    ledger,
                );
            }

            // Pad out the slow-loop period.
            while world.tick < cycle_start_tick + world.slow_loop_ticks {
                step_world(world);
            }
        }

        finish(
            Verdict::Exhausted(self.budget),
            u_curve,
            cycles,
            confirm_records,
            trace,
            world,
            ledger,
        )
    }

    fn await_trigger(&self, world: &mut WorldState) -> Option<TriggerEvent> {
        const TRIGGER_WAIT_CAP: u64 = 500;
        let trigger = world.trigger.clone()?;
        match trigger.when {
            TriggerSource::AtTick { tick } => {
                while world.tick < tick {
                    step_world(world);
                }
            }
            TriggerSource::OnReflex => {
                let mut waited = 0;
                while !world.reflex_has_fired() {
                    if waited >= TRIGGER_WAIT_CAP {
                        return None;
                    }
                    step_world(world);
                    waited += 1;
                }
            }
        }
        Some(TriggerEvent {
            id: "evt-0".to_string(),
            source: trigger.source,
            payload: trigger.payload,
            tick: world.tick,
        })
    }

    /// Ground unbound mandatory slots from the bundle: context facts first
    /// (newest wins), then memory trajectories.
    fn bind_pass(&self, spec: ExecutionSpec, bundle: &ContextBundle) -> ExecutionSpec {
        let mut spec = spec;
        let unbound: Vec<String> = spec
            .mandatory_slots
            .iter()
            .filter(|(_, b)| !b.is_bound())
            .map(|(name, _)| name.clone())
            .collect();
        for slot in unbound {
            let Some(pattern) = self.slot_bind_pattern(&slot) else {
                continue;
            };
            let from_context = bundle
                .contexts
                .iter()
                .filter(|f| pattern.matches(&f.fact))
                .last()
                .map(|f| {
                    (
                        f.fact.object.clone(),
                        GroundingRef::Fact {
                            source: f.source.clone(),
                            fact: f.fact.clone(),
                        },
                    )
                });
            let from_memory = || {
                bundle.memory.iter().find_map(|t| {
                    t.delta_claims
                        .iter()
                        .filter(|c| pattern.matches(c))
                        .last()
                        .map(|c| {
                            (
                                c.object.clone(),
                                GroundingRef::Memory {
                                    trajectory: t.id.clone(),
                                    fact: c.clone(),
                                },
                            )
                        })
                })
            };
            if let Some((value, grounding)) = from_context.or_else(from_memory) {
                spec = bind_slot(&spec, &slot, &value, grounding)
                    .expect("slot exists and is unbound");
            }
        }
        spec
    }

    fn slot_bind_pattern(&self, slot: &str) -> Option<ClaimPattern> {
        self.ajd
            .operational_context
            .capabilities
            .iter()
            .flat_map(|c| c.params.iter())
            .find(|p| p.mandatory && p.name == slot)
            .and_then(|p| p.bind_from.clone())
    }

    /// Step the world until every pending explicit callback has either
    /// arrived or aged past the wait bound, harvesting evidence as
    /// emissions land.
    fn collect_callbacks(
        &self,
        world: &mut WorldState,
        pending: &mut Vec<PendingCallback>,
        processed_log_upto: &mut usize,
        wait_bound: u64,
        timeouts: &mut Vec<CorrelationId>,
    ) -> Vec<Evidence> {
        let mut evidence = Vec::new();
        loop {
            // Scan the unprocessed log tail for emissions we are waiting on.
            let tail: Vec<(u64, String, CorrelationId, Vec<FactTriple>)> = world.event_log
                [*processed_log_upto..]
                .iter()
                .filter_map(|e| match &e.payload {
                    EventPayload::CallbackEmitted { correlation, facts } => Some((
                        e.tick,
                        e.domain.clone(),
                        *correlation,
                        facts.clone(),
                    )),
                    _ => None,
                })
                .collect();
            *processed_log_upto = world.event_log.len();

            for (tick, channel, correlation, facts) in tail {
                let was_pending = pending.iter().any(|p| p.correlation == correlation);
                if !was_pending {
                    continue;
                }
                pending.retain(|p| p.correlation != correlation);
                for spec in self
                    .ajd
                    .evaluation
                    .callbacks
                    .iter()
                    .filter(|cb| cb.mode == CallbackMode::Explicit && cb.channel == channel)
                {
                    for fact in facts.iter().filter(|f| spec.matches.matches(f)) {
                        evidence.push(Evidence {
                            kind: EvidenceKind::Callback(CallbackEvent {
                                correlation: Some(correlation),
                                mode: CallbackMode::Explicit,
                                source: channel.clone(),
                                facts: facts.clone(),
                                tick,
                            }),
                            claim: fact.clone(),
                        });
                    }
                }
            }

            // Expire correlations past the wait bound; timeouts yield no
            // knowledge for the correlation.
            let now = world.tick;
            let (expired, alive): (Vec<_>, Vec<_>) = pending
                .drain(..)
                .partition(|p| now.saturating_sub(p.issued_at) >= wait_bound);
            *pending = alive;
            for p in &expired {
                timeouts.push(p.correlation);
            }

            if pending.is_empty() {
                return evidence;
            }
            step_world(world);
        }
    }

    /// Poll implicit channels whose claims are not yet entailed.
    fn poll_implicit_channels(
        &self,
        world: &mut WorldState,
        ledger: &KnowledgeLedger,
    ) -> Vec<Evidence> {
        let mut evidence = Vec::new();
        for spec in self
            .ajd
            .evaluation
            .callbacks
            .iter()
            .filter(|cb| cb.mode == CallbackMode::Implicit)
        {
            if ledger.entails(&spec.matches) {
                continue;
            }
            if let Some(event) = poll_implicit_event(world, spec) {
                for fact in event.facts.clone() {
                    evidence.push(Evidence {
                        kind: EvidenceKind::Callback(event.clone()),
                        claim: fact,
                    });
                }
            }
        }
        evidence
    }

    /// Request value confirmation once every fact-verified predicate is in
    /// the refined ledger. Proposals rest on refined knowledge, never on
    /// same-cycle unprocessed evidence.
    fn confirm_phase(
        &self,
        world: &mut WorldState,
        ledger: &KnowledgeLedger,
        confirm_records: &mut Vec<ConfirmRecord>,
        failures: &mut Vec<String>,
    ) -> Vec<Evidence> {
        let mut evidence = Vec::new();

        let confirm_covered = |claim: &ClaimPattern| {
            self.ajd
                .evaluation
                .confirms
                .iter()
                .any(|cf| cf.certifies.overlaps(claim))
        };
        let fact_predicates_met = self
            .ajd
            .mission
            .predicates
            .iter()
            .filter(|p| !confirm_covered(&p.claim))
            .all(|p| ledger.entails(&p.claim));
        if !fact_predicates_met {
            return evidence;
        }

        for cf in &self.ajd.evaluation.confirms {
            let unmet: Vec<&crate::ajd::RequirementPredicate> = self
                .ajd
                .mission
                .predicates
                .iter()
                .filter(|p| cf.certifies.overlaps(&p.claim) && !ledger.entails(&p.claim))
                .collect();
            if unmet.is_empty() {
                continue;
            }

            let mut params = BTreeMap::new();
            for pp in &cf.proposal_params {
                if let Some(fact) = ledger.newest_match(&pp.from_fact) {
                    params.insert(pp.name.clone(), fact.claim.object.clone());
                }
            }
            let summary = format!(
                "{}: {}",
                cf.proposal_kind,
                params
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            let proposal = Proposal {
                kind: cf.proposal_kind.clone(),
                summary,
                params,
            };

            match request_confirm(world, &cf.approver, &proposal, &self.ajd.meta.name) {
                Ok(record) => {
                    for predicate in unmet {
                        let claim = match &record.verdict {
                            ConfirmVerdict::Approved => concrete_claim(&predicate.claim),
                            ConfirmVerdict::Rejected(_) => {
                                rejected_claim(&predicate.claim)
                            }
                        };
                        if let Some(claim) = claim {
                            evidence.push(Evidence {
                                kind: EvidenceKind::Confirm(record.clone()),
                                claim,
                            });
                        }
                    }
                    if let ConfirmVerdict::Rejected(reason) = &record.verdict {
                        failures.push(format!("confirm {} rejected: {reason}", cf.id));
                    }
                    confirm_records.push(record);
                }
                Err(e) => failures.push(e.to_string()),
            }
        }
        evidence
    }
}

fn poll_implicit_event(world: &mut WorldState, spec: &CallbackSpec) -> Option<CallbackEvent> {
    let channel = spec.channel.clone();
    // State-variable claims: (channel, var, value).
    if let (PatternTerm::Exact(var), PatternTerm::Exact(want)) =
        (&spec.matches.relation, &spec.matches.object)
    {
        if let Ok(Observation::Vars(vars)) = observe(world, &channel, &Query::StateVar(var.clone()))
        {
            let value = vars.get(var)?;
            if value.to_string() == *want {
                world.log(
                    &channel,
                    EventPayload::Observed {
                        summary: format!("implicit callback {} matched", spec.id),
                    },
                );
                return Some(CallbackEvent {
                    correlation: None,
                    mode: CallbackMode::Implicit,
                    source: channel.clone(),
                    facts: vec![FactTriple::new(
                        spec.matches_subject_or(&channel),
                        var.clone(),
                        want.clone(),
                    )],
                    tick: world.tick,
                });
            }
            return None;
        }
    }
    // Inbox claims.
    if let Ok(Observation::Messages(msgs)) =
        observe(world, &channel, &Query::Inbox(spec.matches.clone()))
    {
        if !msgs.is_empty() {
            let facts: Vec<FactTriple> = msgs
                .iter()
                .flat_map(|m| m.facts.iter())
                .filter(|f| spec.matches.matches(f))
                .cloned()
                .collect();
            world.log(
                &channel,
                EventPayload::Observed {
                    summary: format!("implicit callback {} matched", spec.id),
                },
            );
            return Some(CallbackEvent {
                correlation: None,
                mode: CallbackMode::Implicit,
                source: channel,
                facts,
                tick: world.tick,
            });
        }
    }
    None
}

trait MatchesSubject {
    fn matches_subject_or(&self, fallback: &str) -> String;
}

impl MatchesSubject for CallbackSpec {
    fn matches_subject_or(&self, fallback: &str) -> String {
        match &self.matches.subject {
            PatternTerm::Exact(s) => s.clone(),
            PatternTerm::Any => fallback.to_string(),
        }
    }
}

/// Instantiate a fully exact pattern as a concrete claim.
fn concrete_claim(pattern: &ClaimPattern) -> Option<FactTriple> {
    match (&pattern.subject, &pattern.relation, &pattern.object) {
        (PatternTerm::Exact(s), PatternTerm::Exact(r), PatternTerm::Exact(o)) => {
            Some(FactTriple::new(s.clone(), r.clone(), o.clone()))
        }
        _ => None,
    }
}

/// The failure counterpart of a predicate claim: same subject and relation,
/// object `rejected`. A refusal, once confirmed, is knowledge too.
fn rejected_claim(pattern: &ClaimPattern) -> Option<FactTriple> {
    match (&pattern.subject, &pattern.relation) {
        (PatternTerm::Exact(s), PatternTerm::Exact(r)) => {
            Some(FactTriple::new(s.clone(), r.clone(), "rejected"))
        }
        _ => None,
    }
}

/// The per-cycle contract: receipts only under an allowed scope verdict
/// with every executed step's slots bound, and only certified facts in the
/// delta.
pub fn hoare_holds(record: &CycleRecord) -> bool {
    if !record.receipts.is_empty() && !record.scope.is_allowed() {
        return false;
    }
    // A mandatory slot left unbound may belong only to deferred steps: no
    // executed step carries a parameter for it.
    for (name, binding) in &record.spec.mandatory_slots {
        if binding.is_bound() {
            continue;
        }
        if record.executed.iter().any(|s| s.params.contains_key(name)) {
            return false;
        }
    }
    record.delta.facts.iter().all(|f| !f.evidence.is_empty())
}

/// Run one mission to completion over a scenario-built world.
pub fn run_mission(
    ajd: &AjdSpec,
    world: &mut WorldState,
    planner: &dyn Planner,
    seed: u64,
    budget: u64,
) -> MissionReport {
    MissionRunner::new(ajd, planner, seed, budget).run(world)
}
