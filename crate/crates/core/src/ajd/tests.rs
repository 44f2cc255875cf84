use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::fact::PatternTerm;
use crate::scenario::{INDUSTRIAL_AJD_JSON, TRAVEL_AJD_JSON};

fn travel() -> AjdSpec {
    parse_ajd(TRAVEL_AJD_JSON.as_bytes()).expect("travel contract parses")
}

fn industrial() -> AjdSpec {
    parse_ajd(INDUSTRIAL_AJD_JSON.as_bytes()).expect("industrial contract parses")
}

#[test]
fn travel_fixture_parses_with_expected_mission_and_boundary() {
    let spec = travel();
    assert!(spec
        .mission
        .goal_statement
        .starts_with("[Minimize Administrative Effort]"));
    assert_eq!(spec.workplace.len(), 7);
    let business_block = spec.scope.negative_constraints.iter().any(|p| {
        p.verb == "book_flight"
            && p.params
                .iter()
                .any(|c| matches!(&c.matcher, ParamMatcher::Equals(v) if v == "business"))
    });
    assert!(business_block, "business-class bookings must be fenced off");
}

#[test]
fn industrial_fixture_restricts_restarts_and_names_the_manager() {
    let spec = industrial();
    let restart_block = spec
        .scope
        .negative_constraints
        .iter()
        .any(|p| p.verb == "restart" && p.domain == "equipment");
    assert!(restart_block, "unauthorized restarts must be fenced off");
    assert!(spec
        .evaluation
        .confirms
        .iter()
        .all(|c| c.approver == "site_manager"));
    assert_eq!(spec.scope.sub_performers.len(), 1);
    assert_eq!(spec.scope.sub_performers[0].id, "edge_agent");
}

#[test]
fn empty_predicates_are_a_missing_component() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc["mission"]["predicates"] = serde_json::json!([]);
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(
        err,
        ParseError::MissingComponent("mission.predicates".into())
    );
}

#[test]
fn missing_evaluation_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc.as_object_mut().unwrap().remove("evaluation");
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err, ParseError::MissingComponent("evaluation".into()));
}

#[test]
fn empty_evaluation_channels_are_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc["evaluation"]["callbacks"] = serde_json::json!([]);
    doc["evaluation"]["confirms"] = serde_json::json!([]);
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err, ParseError::MissingComponent("evaluation.channels".into()));
}

#[test]
fn unknown_domain_kind_is_named() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc["workplace"][0]["kind"] = serde_json::json!("quantum");
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err, ParseError::UnknownDomainKind("quantum".into()));
}

#[test]
fn duplicate_domain_ids_are_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    let first = doc["workplace"][0].clone();
    doc["workplace"].as_array_mut().unwrap().push(first);
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert_eq!(err, ParseError::DuplicateDomainId("user".into()));
}

#[test]
fn dangling_reference_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc["mission"]["predicates"][0]["target"] = serde_json::json!("ghost_api");
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert!(matches!(err, ParseError::DanglingDomainRef(r) if r.starts_with("ghost_api")));
}

#[test]
fn lexical_domain_cannot_be_an_interaction_target() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    doc["workplace"][5]["roles"] = serde_json::json!(["context_source", "interaction_target"]);
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert!(matches!(err, ParseError::InvalidDomainRole { .. }));
}

#[test]
fn conflicting_scope_pattern_is_rejected() {
    let mut doc: serde_json::Value = serde_json::from_str(TRAVEL_AJD_JSON).unwrap();
    let negative = doc["scope"]["negative_constraints"][0].clone();
    doc["scope"]["authorities"].as_array_mut().unwrap().push(negative);
    let err = parse_ajd(doc.to_string().as_bytes()).unwrap_err();
    assert!(matches!(err, ParseError::ConflictingScopePattern(_)));
}

#[test]
fn malformed_json_is_malformed_document() {
    let err = parse_ajd(b"{ this is not json").unwrap_err();
    assert!(matches!(err, ParseError::MalformedDocument(_)));
}

// ---------------------------------------------------------------------------
// validate_ajd
// ---------------------------------------------------------------------------

#[test]
fn bundled_fixtures_validate_clean() {
    assert!(validate_ajd(&travel()).is_clean());
    assert!(validate_ajd(&industrial()).is_clean());
}

#[test]
fn predicate_without_any_covering_channel_is_unverifiable() {
    let mut spec = travel();
    spec.mission.predicates.push(RequirementPredicate {
        id: "phantom".into(),
        target: "rail_api".into(),
        claim: ClaimPattern::exact("trip_busan", "limo", "booked"),
    });
    let report = validate_ajd(&spec);
    assert!(report
        .violations
        .contains(&Violation::UnverifiablePredicate("phantom".into())));
}

#[test]
fn capability_on_lexical_domain_is_a_violation() {
    let mut spec = travel();
    spec.operational_context.capabilities.push(CapabilitySpec {
        tool: "write_policy".into(),
        target: "policy_docs".into(),
        params: vec![],
        side_effects: true,
        assumes: vec![],
    });
    let report = validate_ajd(&spec);
    assert!(report.violations.iter().any(|v| matches!(
        v,
        Violation::CapabilityOnLexical { tool, domain }
            if tool == "write_policy" && domain == "policy_docs"
    )));
}

#[test]
fn approver_must_be_biddable() {
    let mut spec = travel();
    spec.evaluation.confirms[0].approver = "mail_system".into();
    let report = validate_ajd(&spec);
    assert!(report
        .violations
        .iter()
        .any(|v| matches!(v, Violation::ApproverNotBiddable { .. })));
}

#[test]
fn validation_is_order_insensitive() {
    let mut spec = travel();
    spec.operational_context.capabilities.push(CapabilitySpec {
        tool: "write_policy".into(),
        target: "policy_docs".into(),
        params: vec![],
        side_effects: true,
        assumes: vec![],
    });
    let baseline = validate_ajd(&spec);
    let mut shuffled = spec.clone();
    shuffled.workplace.reverse();
    assert_eq!(baseline.violations, validate_ajd(&shuffled).violations);
}

// ---------------------------------------------------------------------------
// lint_ajd
// ---------------------------------------------------------------------------

#[test]
fn pristine_fixtures_lint_clean() {
    assert!(lint_ajd(&travel()).is_empty());
    assert!(lint_ajd(&industrial()).is_empty());
}

#[test]
fn removing_negative_constraints_flags_scope_creep() {
    let mut spec = travel();
    spec.scope.negative_constraints.clear();
    assert!(lint_ajd(&spec).contains(&Advisory::ScopeCreepRisk));
}

#[test]
fn device_verb_mission_is_how_not_what() {
    let mut spec = industrial();
    spec.mission.goal_statement = "Stop equipment".into();
    let advisories = lint_ajd(&spec);
    assert!(advisories
        .iter()
        .any(|a| matches!(a, Advisory::HowNotWhat { verb } if verb == "stop")));
}

#[test]
fn missing_memory_filter_is_flagged() {
    let mut spec = travel();
    spec.operational_context.memory.tags.clear();
    assert!(lint_ajd(&spec).contains(&Advisory::NoMemoryFilter));
}

// ---------------------------------------------------------------------------
// Diagram export
// ---------------------------------------------------------------------------

#[test]
fn travel_diagram_has_dashed_user_and_dotted_mail_edge() {
    let dot = export_apf_diagram(&travel());
    assert!(dot.contains("user [shape=box style=dashed"));
    assert!(dot.contains("mail_system -> travel_assistant [style=dotted];"));
}

#[test]
fn industrial_diagram_draws_two_machine_nodes() {
    let dot = export_apf_diagram(&industrial());
    let machines = dot.matches("peripheries=2").count();
    assert_eq!(machines, 2, "central and edge performers are both machines");
    assert!(dot.contains("site_manager [shape=box style=dashed"));
}

#[test]
fn minimal_spec_yields_two_nodes_and_one_dashed_edge() {
    let spec = AjdSpec {
        meta: AjdMeta {
            name: "mini".into(),
            version: "0".into(),
        },
        mission: RequirementSpec {
            goal_statement: "Know the one thing".into(),
            predicates: vec![RequirementPredicate {
                id: "p".into(),
                target: "docs".into(),
                claim: ClaimPattern::exact("a", "b", "c"),
            }],
        },
        workplace: vec![DomainDecl {
            id: "docs".into(),
            kind: DomainKind::Lexical,
            roles: BTreeSet::from([DomainRole::ContextSource]),
            description: String::new(),
        }],
        scope: ScopeDecl {
            identity: "reader".into(),
            authorities: vec![],
            negative_constraints: vec![],
            sub_performers: vec![],
        },
        operational_context: ContextDecl {
            contexts: vec![ContextSourceRef {
                domain: "docs".into(),
                tags: vec![],
            }],
            memory: MemoryRef {
                store: "trajectories".into(),
                tags: vec![],
            },
            capabilities: vec![],
        },
        evaluation: EvaluationDecl {
            callbacks: vec![],
            confirms: vec![],
        },
    };
    let dot = export_apf_diagram(&spec);
    let nodes = dot.lines().filter(|l| l.contains("[shape=")).count();
    assert_eq!(nodes, 2);
    let dashed_edges = dot
        .lines()
        .filter(|l| l.contains("->") && l.contains("style=dashed"))
        .count();
    assert_eq!(dashed_edges, 1);
    assert!(dot.contains("docs -> mini [style=dashed];"));
}

#[test]
fn diagram_export_is_byte_stable() {
    let spec = travel();
    let first = export_apf_diagram(&spec);
    for _ in 0..5 {
        assert_eq!(first, export_apf_diagram(&spec));
    }
}

// ---------------------------------------------------------------------------
// Round-trip property
// ---------------------------------------------------------------------------

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,8}".prop_map(|s| s)
}

fn pattern_term() -> impl Strategy<Value = PatternTerm> {
    prop_oneof![
        Just(PatternTerm::Any),
        ident().prop_map(PatternTerm::Exact),
    ]
}

fn claim_pattern() -> impl Strategy<Value = ClaimPattern> {
    (pattern_term(), pattern_term(), pattern_term()).prop_map(|(subject, relation, object)| {
        ClaimPattern {
            subject,
            relation,
            object,
        }
    })
}

prop_compose! {
    fn arb_domains()(
        kinds in prop::collection::vec(0u8..3, 2..6),
    ) -> Vec<DomainDecl> {
        // At least one lexical, one causal, one biddable so every reference
        // class has a valid target.
        let mut domains = vec![
            DomainDecl { id: "lex0".into(), kind: DomainKind::Lexical,
                roles: BTreeSet::from([DomainRole::ContextSource]), description: String::new() },
            DomainDecl { id: "cau0".into(), kind: DomainKind::Causal,
                roles: BTreeSet::from([DomainRole::InteractionTarget, DomainRole::VerificationChannel]),
                description: String::new() },
            DomainDecl { id: "bid0".into(), kind: DomainKind::Biddable,
                roles: BTreeSet::from([DomainRole::VerificationChannel]), description: String::new() },
        ];
        for (i, k) in kinds.into_iter().enumerate() {
            let kind = match k { 0 => DomainKind::Causal, 1 => DomainKind::Biddable, _ => DomainKind::Lexical };
            let roles = match kind {
                DomainKind::Lexical => BTreeSet::from([DomainRole::ContextSource]),
                _ => BTreeSet::from([DomainRole::InteractionTarget]),
            };
            domains.push(DomainDecl { id: format!("d{i}"), kind, roles, description: format!("domain {i}") });
        }
        domains
    }
}

fn arb_spec() -> impl Strategy<Value = AjdSpec> {
    (
        arb_domains(),
        prop::collection::vec((ident(), claim_pattern()), 1..4),
        prop::collection::vec(ident(), 1..4),
        ident(),
    )
        .prop_map(|(domains, preds, verbs, name)| {
            let causal = domains
                .iter()
                .find(|d| d.kind == DomainKind::Causal)
                .unwrap()
                .id
                .clone();
            let biddable = domains
                .iter()
                .find(|d| d.kind == DomainKind::Biddable)
                .unwrap()
                .id
                .clone();
            let lexical = domains
                .iter()
                .find(|d| d.kind == DomainKind::Lexical)
                .unwrap()
                .id
                .clone();
            let predicates: Vec<RequirementPredicate> = preds
                .into_iter()
                .enumerate()
                .map(|(i, (id, claim))| RequirementPredicate {
                    id: format!("{id}{i}"),
                    target: causal.clone(),
                    claim,
                })
                .collect();
            // One covering wildcard callback keeps every predicate verifiable.
            let evaluation = EvaluationDecl {
                callbacks: vec![CallbackSpec {
                    id: "any".into(),
                    channel: causal.clone(),
                    mode: CallbackMode::Explicit,
                    matches: ClaimPattern {
                        subject: PatternTerm::Any,
                        relation: PatternTerm::Any,
                        object: PatternTerm::Any,
                    },
                    timeout_ticks: 3,
                }],
                confirms: vec![ConfirmSpec {
                    id: "ok".into(),
                    approver: biddable.clone(),
                    proposal_kind: "proposal".into(),
                    certifies: ClaimPattern::with_any_object("goal", "approval"),
                    proposal_params: vec![],
                }],
            };
            let capabilities: Vec<CapabilitySpec> = verbs
                .iter()
                .enumerate()
                .map(|(i, v)| CapabilitySpec {
                    tool: format!("{v}{i}"),
                    target: causal.clone(),
                    params: vec![SlotSpec {
                        name: format!("slot{i}"),
                        mandatory: i == 0,
                        bind_from: None,
                    }],
                    side_effects: i % 2 == 0,
                    assumes: vec![],
                })
                .collect();
            AjdSpec {
                meta: AjdMeta {
                    name,
                    version: "1.0".into(),
                },
                mission: RequirementSpec {
                    goal_statement: "Reach the goal state".into(),
                    predicates,
                },
                workplace: domains,
                scope: ScopeDecl {
                    identity: "performer".into(),
                    authorities: capabilities
                        .iter()
                        .map(|c| ActionPattern {
                            verb: c.tool.clone(),
                            domain: c.target.clone(),
                            params: vec![],
                        })
                        .collect(),
                    negative_constraints: vec![ActionPattern {
                        verb: "forbidden".into(),
                        domain: causal.clone(),
                        params: vec![],
                    }],
                    sub_performers: vec![],
                },
                operational_context: ContextDecl {
                    contexts: vec![ContextSourceRef {
                        domain: lexical,
                        tags: vec!["topic".into()],
                    }],
                    memory: MemoryRef {
                        store: "trajectories".into(),
                        tags: vec!["topic".into()],
                    },
                    capabilities,
                },
                evaluation,
            }
        })
}

proptest! {
    #[test]
    fn parse_serialize_round_trip(spec in arb_spec()) {
        let bytes = serialize_ajd(&spec);
        let back = parse_ajd(&bytes).expect("generated specs are structurally valid");
        prop_assert_eq!(&spec, &back);
        // Serialization is a fixpoint.
        prop_assert_eq!(serialize_ajd(&back), bytes);
    }

    #[test]
    fn generated_specs_validate_clean(spec in arb_spec()) {
        prop_assert!(validate_ajd(&spec).is_clean());
    }
}

#[test]
fn bundled_fixture_round_trip_fixpoint() {
    for doc in [TRAVEL_AJD_JSON, INDUSTRIAL_AJD_JSON] {
        let spec = parse_ajd(doc.as_bytes()).unwrap();
        let bytes = serialize_ajd(&spec);
        let again = parse_ajd(&bytes).unwrap();
        assert_eq!(spec, again);
        assert_eq!(serialize_ajd(&again), bytes);
    }
}
