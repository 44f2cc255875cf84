//! Executable scenario fixtures: the delegated-proxy travel workplace and the
//! autonomous-supervisor industrial workplace, plus fault injection.
//!
//! A fixture file declares domains with their transition tables, callback
//! delays, approval policies, reflex rules, fault schedule, oracle rules for
//! the mismatch audit, and the plan-rule table the planners run on. Fixtures
//! use the same JSON encoding family as AJD documents and reference their
//! matching AJD by relative path.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ajd::{parse_ajd, AjdSpec, ParseError};
use crate::performer::{PlanRule, RulePlanner, SeededStochasticPlanner};
use crate::world::{
    DomainState, FaultSpec, OracleRule, ReflexAction, ReflexRule, TriggerSpec, WorldError,
    WorldState,
};

/// A scenario fixture as read from disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFixture {
    pub name: String,
    /// Path to the matching AJD document, relative to the fixture file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ajd: Option<String>,
    #[serde(default = "default_slow_loop")]
    pub slow_loop_ticks: u64,
    pub trigger: TriggerSpec,
    pub domains: Vec<DomainState>,
    #[serde(default)]
    pub reflex_rules: Vec<ReflexRule>,
    #[serde(default)]
    pub faults: Vec<FaultSpec>,
    #[serde(default)]
    pub oracle: Vec<OracleRule>,
    #[serde(default)]
    pub plan_rules: Vec<PlanRule>,
}

fn default_slow_loop() -> u64 {
    1
}

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("fixture parse error: dangling domain reference {0}")]
    DanglingRef(String),
    #[error("fixture parse error: {0}")]
    Ajd(#[from] ParseError),
    #[error("fixture parse error: fixture names no AJD document")]
    MissingAjd,
}

/// A built scenario: the world, its matching contract, and the planner table.
#[derive(Debug, Clone)]
pub struct ScenarioBundle {
    pub name: String,
    pub world: WorldState,
    pub ajd: AjdSpec,
    pub plan_rules: Vec<PlanRule>,
}

impl ScenarioBundle {
    pub fn rule_planner(&self) -> RulePlanner {
        RulePlanner::new(self.plan_rules.clone())
    }

    pub fn stochastic_planner(&self) -> SeededStochasticPlanner {
        SeededStochasticPlanner::new(self.plan_rules.clone())
    }
}

/// Build a world and its matching AJD from a fixture file. The same seed
/// yields an identical world.
pub fn build_scenario(fixture_path: &Path, seed: u64) -> Result<ScenarioBundle, FixtureError> {
    let text = std::fs::read_to_string(fixture_path)?;
    let fixture: ScenarioFixture = serde_json::from_str(&text)?;
    let ajd_rel = fixture.ajd.clone().ok_or(FixtureError::MissingAjd)?;
    let ajd_path = fixture_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(ajd_rel);
    let ajd_text = std::fs::read_to_string(&ajd_path)?;
    let ajd = parse_ajd(ajd_text.as_bytes())?;
    build_from_parts(fixture, ajd, seed)
}

/// Build from already-parsed pieces (used for the bundled fixtures).
pub fn build_from_parts(
    fixture: ScenarioFixture,
    ajd: AjdSpec,
    seed: u64,
) -> Result<ScenarioBundle, FixtureError> {
    let has_domain = |id: &str| fixture.domains.iter().any(|d| d.id == id);

    if !has_domain(&fixture.trigger.source) {
        return Err(FixtureError::DanglingRef(fixture.trigger.source.clone()));
    }
    for rule in &fixture.reflex_rules {
        if !has_domain(&rule.watch) {
            return Err(FixtureError::DanglingRef(rule.watch.clone()));
        }
    }
    for decl in &ajd.workplace {
        if !has_domain(&decl.id) {
            return Err(FixtureError::DanglingRef(decl.id.clone()));
        }
    }
    for step in fixture.plan_rules.iter().flat_map(|r| r.steps.iter()) {
        if !has_domain(&step.target) {
            return Err(FixtureError::DanglingRef(step.target.clone()));
        }
    }

    let mut world = WorldState::new(seed);
    for domain in &fixture.domains {
        world.add_domain(domain.clone());
    }
    world.trigger = Some(fixture.trigger.clone());
    world.slow_loop_ticks = fixture.slow_loop_ticks;
    world.reflex_rules = fixture.reflex_rules.clone();
    world.oracle = fixture.oracle.clone();
    for fault in &fixture.faults {
        world
            .schedule_fault(fault.clone())
            .expect("fixture faults start at tick >= 0");
    }
    // Tick-zero faults shape the initial world (e.g. a standing market
    // notice planted into a lexical domain).
    world.fire_due_faults();

    Ok(ScenarioBundle {
        name: fixture.name.clone(),
        world,
        ajd,
        plan_rules: fixture.plan_rules,
    })
}

/// One pass of the edge reflex, independent of any planner state. Returns
/// the intervention if the rule fired this call.
pub fn run_fast_loop(world: &mut WorldState) -> Option<ReflexAction> {
    world.run_reflexes().into_iter().next()
}

/// Schedule a fault; it fires during `step_world` at its tick.
pub fn inject_fault(world: &mut WorldState, fault: FaultSpec) -> Result<(), WorldError> {
    world.schedule_fault(fault)
}

// ---------------------------------------------------------------------------
// Bundled fixtures
// ---------------------------------------------------------------------------

pub const TRAVEL_AJD_JSON: &str = include_str!("../fixtures/travel.ajd.json");
pub const TRAVEL_SCENARIO_JSON: &str = include_str!("../fixtures/travel.scenario.json");
pub const INDUSTRIAL_AJD_JSON: &str = include_str!("../fixtures/industrial.ajd.json");
pub const INDUSTRIAL_SCENARIO_JSON: &str = include_str!("../fixtures/industrial.scenario.json");

/// The delegated-proxy travel workplace with its bundled contract.
pub fn build_travel(seed: u64) -> ScenarioBundle {
    let fixture: ScenarioFixture =
        serde_json::from_str(TRAVEL_SCENARIO_JSON).expect("bundled travel fixture is valid");
    let ajd = parse_ajd(TRAVEL_AJD_JSON.as_bytes()).expect("bundled travel contract is valid");
    build_from_parts(fixture, ajd, seed).expect("bundled travel fixture is coherent")
}

/// The autonomous-supervisor industrial workplace with its bundled contract.
pub fn build_industrial(seed: u64) -> ScenarioBundle {
    let fixture: ScenarioFixture =
        serde_json::from_str(INDUSTRIAL_SCENARIO_JSON).expect("bundled industrial fixture is valid");
    let ajd =
        parse_ajd(INDUSTRIAL_AJD_JSON.as_bytes()).expect("bundled industrial contract is valid");
    build_from_parts(fixture, ajd, seed).expect("bundled industrial fixture is coherent")
}
