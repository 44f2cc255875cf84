//! Mission trace: newline-delimited records with a schema-version header.
//!
//! The trace is the system of record; reports are derived. [`replay`]
//! recomputes the uncertainty curve and verdict from the trace alone and
//! cross-checks them against what was recorded, so an audit needs nothing
//! but the file.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::avr::{MissionReport, Verdict};
use crate::fact::{ClaimPattern, FactTriple};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeltaFactRecord {
    pub claim: FactTriple,
    #[serde(default)]
    pub assumed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceVerdict {
    Satisfied { at: u64 },
    Exhausted { budget: u64 },
    Blocked { reason: String },
}

impl From<&Verdict> for TraceVerdict {
    fn from(v: &Verdict) -> Self {
        match v {
            Verdict::Satisfied(at) => TraceVerdict::Satisfied { at: *at },
            Verdict::Exhausted(budget) => TraceVerdict::Exhausted { budget: *budget },
            Verdict::Blocked(reason) => TraceVerdict::Blocked {
                reason: reason.clone(),
            },
        }
    }
}

impl From<&TraceVerdict> for Verdict {
    fn from(v: &TraceVerdict) -> Self {
        match v {
            TraceVerdict::Satisfied { at } => Verdict::Satisfied(*at),
            TraceVerdict::Exhausted { budget } => Verdict::Exhausted(*budget),
            TraceVerdict::Blocked { reason } => Verdict::Blocked(reason.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceRecord {
    Header {
        schema_version: u32,
        mission: String,
        planner: String,
        seed: u64,
        budget: u64,
        verification: bool,
        predicates: Vec<(String, ClaimPattern)>,
        /// Predicates already entailed by a carried-over ledger.
        initially_entailed: Vec<String>,
        /// Uncertainty before the first cycle. Its slot component is the
        /// planner's output and cannot be re-derived from the trace.
        initial_u: u64,
    },
    Cycle {
        t: u64,
        scope_allowed: bool,
        receipts: u64,
        delta: Vec<DeltaFactRecord>,
        unbound_slots_after: u64,
        u_after: u64,
    },
    Verdict {
        verdict: TraceVerdict,
        cycles: u64,
    },
}

/// Serialize trace records, one JSON object per line.
pub fn write_trace(records: &[TraceRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("trace record serializes"));
        out.push('\n');
    }
    out
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReplayError {
    #[error("trace is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("trace truncated after line {line}: no verdict record")]
    Truncated { line: usize },
    #[error("line {line}: recomputed uncertainty {computed} disagrees with recorded {recorded}")]
    CurveMismatch {
        line: usize,
        computed: u64,
        recorded: u64,
    },
    #[error("recomputed verdict {computed:?} disagrees with recorded {recorded:?}")]
    VerdictMismatch {
        computed: TraceVerdict,
        recorded: TraceVerdict,
    },
}

/// What a replay reconstructs; comparable against the original report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplaySummary {
    pub mission: String,
    pub planner: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub u_curve: Vec<u64>,
    pub cycles: Vec<CycleSummary>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleSummary {
    pub t: u64,
    pub scope_allowed: bool,
    pub receipts: u64,
    pub delta_claims: Vec<FactTriple>,
    pub u_after: u64,
}

impl MissionReport {
    /// The view of this report that a trace replay can reconstruct.
    pub fn summary(&self) -> ReplaySummary {
        ReplaySummary {
            mission: self.mission.clone(),
            planner: self.planner.clone(),
            seed: self.seed,
            verdict: self.verdict.clone(),
            u_curve: self.u_curve.clone(),
            cycles: self
                .cycles
                .iter()
                .map(|c| CycleSummary {
                    t: c.t,
                    scope_allowed: c.scope.is_allowed(),
                    receipts: c.receipts.len() as u64,
                    delta_claims: c
                        .delta
                        .facts
                        .iter()
                        .map(|f| f.claim.clone())
                        .chain(c.assumed.iter().cloned())
                        .collect(),
                    u_after: c.u_after,
                })
                .collect(),
        }
    }
}

/// Reconstruct a report from a trace, recomputing the uncertainty curve and
/// the verdict from first principles and cross-checking every recorded
/// value. Any disagreement or structural defect is an error.
pub fn replay(text: &str) -> Result<ReplaySummary, ReplayError> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    if lines.is_empty() {
        return Err(ReplayError::Empty);
    }

    let parse = |idx: usize, line: &str| -> Result<TraceRecord, ReplayError> {
        serde_json::from_str(line).map_err(|e| ReplayError::Schema {
            line: idx + 1,
            message: e.to_string(),
        })
    };

    let header = parse(0, lines[0])?;
    let TraceRecord::Header {
        schema_version,
        mission,
        planner,
        seed,
        budget,
        predicates,
        initially_entailed,
        initial_u,
        ..
    } = header
    else {
        return Err(ReplayError::Schema {
            line: 1,
            message: "first record must be a header".to_string(),
        });
    };
    if schema_version != SCHEMA_VERSION {
        return Err(ReplayError::Schema {
            line: 1,
            message: format!("unsupported schema version {schema_version}"),
        });
    }

    // Entailment state rebuilt from deltas, recency-wins over contradictions.
    let mut facts: Vec<FactTriple> = Vec::new();
    let entailed = |facts: &[FactTriple], pattern: &ClaimPattern| {
        let mut live: Vec<&FactTriple> = Vec::new();
        for f in facts {
            live.retain(|g| !(g.subject == f.subject && g.relation == f.relation));
            live.push(f);
        }
        live.iter().any(|f| pattern.matches(f))
    };

    let unmet = |facts: &[FactTriple]| -> u64 {
        predicates
            .iter()
            .filter(|(id, claim)| {
                !initially_entailed.contains(id) && !entailed(facts, claim)
            })
            .count() as u64
    };

    let mut cycles: Vec<CycleSummary> = Vec::new();
    let mut u_curve: Vec<u64> = vec![initial_u];
    let mut recorded_verdict: Option<TraceVerdict> = None;
    let mut satisfied_at: Option<u64> = if unmet(&[]) == 0 { Some(0) } else { None };
    let mut last_line = 1;

    for (idx, line) in lines.iter().enumerate().skip(1) {
        last_line = idx + 1;
        match parse(idx, line)? {
            TraceRecord::Header { .. } => {
                return Err(ReplayError::Schema {
                    line: idx + 1,
                    message: "duplicate header".to_string(),
                });
            }
            TraceRecord::Cycle {
                t,
                scope_allowed,
                receipts,
                delta,
                unbound_slots_after,
                u_after,
            } => {
                // The first cycle's record implies the initial uncertainty:
                // all predicates unmet plus the slots the spec carried.
                for d in &delta {
                    facts.push(d.claim.clone());
                }
                let computed = unmet(&facts) + unbound_slots_after;
                if computed != u_after {
                    return Err(ReplayError::CurveMismatch {
                        line: idx + 1,
                        computed,
                        recorded: u_after,
                    });
                }
                u_curve.push(u_after);
                cycles.push(CycleSummary {
                    t,
                    scope_allowed,
                    receipts,
                    delta_claims: delta.into_iter().map(|d| d.claim).collect(),
                    u_after,
                });
                if satisfied_at.is_none() && unmet(&facts) == 0 {
                    satisfied_at = Some(cycles.len() as u64);
                }
            }
            TraceRecord::Verdict { verdict, cycles: n } => {
                if n != cycles.len() as u64 {
                    return Err(ReplayError::Schema {
                        line: idx + 1,
                        message: format!(
                            "verdict claims {n} cycles, trace carries {}",
                            cycles.len()
                        ),
                    });
                }
                recorded_verdict = Some(verdict);
            }
        }
    }

    let Some(recorded) = recorded_verdict else {
        return Err(ReplayError::Truncated { line: last_line });
    };

    // Recompute the verdict from the reconstructed entailment state.
    let computed = if let TraceVerdict::Blocked { .. } = &recorded {
        // A blocked run carries the planner's reason; nothing to recompute.
        recorded.clone()
    } else if let Some(at) = satisfied_at {
        TraceVerdict::Satisfied { at }
    } else {
        TraceVerdict::Exhausted { budget }
    };
    if computed != recorded {
        return Err(ReplayError::VerdictMismatch {
            computed,
            recorded,
        });
    }

    Ok(ReplaySummary {
        mission,
        planner,
        seed,
        verdict: Verdict::from(&recorded),
        u_curve,
        cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn header() -> TraceRecord {
        TraceRecord::Header {
            schema_version: SCHEMA_VERSION,
            mission: "m".into(),
            planner: "rule".into(),
            seed: 1,
            budget: 5,
            verification: true,
            predicates: vec![(
                "p".into(),
                ClaimPattern::exact("trip", "rail", "booked"),
            )],
            initially_entailed: vec![],
            initial_u: 1,
        }
    }

    #[test]
    fn empty_trace_is_rejected() {
        assert_eq!(replay(""), Err(ReplayError::Empty));
    }

    #[test]
    fn truncated_trace_names_the_line() {
        let text = write_trace(&[
            header(),
            TraceRecord::Cycle {
                t: 0,
                scope_allowed: true,
                receipts: 1,
                delta: vec![DeltaFactRecord {
                    claim: FactTriple::new("trip", "rail", "booked"),
                    assumed: false,
                }],
                unbound_slots_after: 0,
                u_after: 0,
            },
        ]);
        assert_eq!(replay(&text), Err(ReplayError::Truncated { line: 2 }));
    }

    #[test]
    fn garbage_line_is_a_schema_error_with_line_number() {
        let mut text = write_trace(&[header()]);
        text.push_str("this is not json\n");
        match replay(&text) {
            Err(ReplayError::Schema { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn replay_recomputes_and_accepts_consistent_traces() {
        let text = write_trace(&[
            header(),
            TraceRecord::Cycle {
                t: 0,
                scope_allowed: true,
                receipts: 1,
                delta: vec![DeltaFactRecord {
                    claim: FactTriple::new("trip", "rail", "booked"),
                    assumed: false,
                }],
                unbound_slots_after: 0,
                u_after: 0,
            },
            TraceRecord::Verdict {
                verdict: TraceVerdict::Satisfied { at: 1 },
                cycles: 1,
            },
        ]);
        let summary = replay(&text).unwrap();
        assert_eq!(summary.verdict, Verdict::Satisfied(1));
        assert_eq!(summary.u_curve, vec![1, 0]);
    }

    #[test]
    fn doctored_uncertainty_is_caught() {
        let text = write_trace(&[
            header(),
            TraceRecord::Cycle {
                t: 0,
                scope_allowed: true,
                receipts: 0,
                delta: vec![],
                unbound_slots_after: 0,
                u_after: 0, // should be 1: predicate unmet
            },
            TraceRecord::Verdict {
                verdict: TraceVerdict::Satisfied { at: 1 },
                cycles: 1,
            },
        ]);
        assert!(matches!(
            replay(&text),
            Err(ReplayError::CurveMismatch { line: 2, .. })
        ));
    }
}
