//! Operator surface for the job-performer kernel.
//!
//! Exit codes are stable; scripts may branch on them:
//!   0  success (mission satisfied / clean lint / artifact written)
//!   1  usage error (unreadable file, bad flags)
//!   2  mission exhausted its cycle budget
//!   3  mission blocked
//!   4  contract validation failed
//!   5  trace schema violation on replay

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use apf_core::ajd::{export_apf_diagram, lint_ajd, parse_ajd, validate_ajd};
use apf_core::avr::{MissionReport, MissionRunner, Verdict};
use apf_core::performer::Planner;
use apf_core::scenario::{build_scenario, inject_fault};
use apf_core::trace::{replay, write_trace};
use apf_core::world::FaultSpec;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_EXHAUSTED: i32 = 2;
pub const EXIT_BLOCKED: i32 = 3;
pub const EXIT_INVALID: i32 = 4;
pub const EXIT_TRACE: i32 = 5;

#[derive(Parser)]
#[command(name = "apf", version, about = "Run, lint, diagram and replay contract-bounded missions")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mission over a scenario fixture.
    Run(RunArgs),
    /// Validate and lint a job contract.
    Lint {
        /// Path to the AJD document.
        ajd: PathBuf,
    },
    /// Export the contract's machine/workplace topology as DOT.
    Diagram {
        /// Path to the AJD document.
        ajd: PathBuf,
        /// Output path for the DOT file.
        out: PathBuf,
    },
    /// Reconstruct a report from a trace file alone.
    Replay {
        /// Path to the trace file.
        trace: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Contract to run under; defaults to the scenario's bundled contract.
    #[arg(long)]
    ajd: Option<PathBuf>,
    /// Scenario fixture file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, value_enum, default_value_t = PlannerKind::Rule)]
    planner: PlannerKind,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Cycle budget T.
    #[arg(long, default_value_t = 10)]
    max_cycles: u64,
    /// Disable the verification channels (the guardrail stays on).
    #[arg(long)]
    no_verify: bool,
    /// Extra fault schedule: a JSON array of fault records.
    #[arg(long)]
    faults: Option<PathBuf>,
    /// Write the mission trace here.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlannerKind {
    Rule,
    Stochastic,
}

pub fn run(cli: Cli) -> i32 {
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Lint { ajd } => cmd_lint(&ajd),
        Command::Diagram { ajd, out } => cmd_diagram(&ajd, &out),
        Command::Replay { trace } => cmd_replay(&trace),
    }
}

fn cmd_run(args: RunArgs) -> i32 {
    let mut bundle = match build_scenario(&args.scenario, args.seed) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };

    if let Some(path) = &args.ajd {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_USAGE;
            }
        };
        match parse_ajd(&bytes) {
            Ok(spec) => bundle.ajd = spec,
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_INVALID;
            }
        }
    }

    let report = validate_ajd(&bundle.ajd);
    if !report.is_clean() {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        return EXIT_INVALID;
    }

    if let Some(path) = &args.faults {
        let text = match fs::read_to_string(path) {
            Ok(t) => t,
            Err(e) => {
                eprintln!("error: cannot read {}: {e}", path.display());
                return EXIT_USAGE;
            }
        };
        let faults: Vec<FaultSpec> = match serde_json::from_str(&text) {
            Ok(f) => f,
            Err(e) => {
                eprintln!("error: fault schedule: {e}");
                return EXIT_USAGE;
            }
        };
        for fault in faults {
            if let Err(e) = inject_fault(&mut bundle.world, fault) {
                eprintln!("error: {e}");
                return EXIT_USAGE;
            }
        }
    }

    let rule_planner;
    let stochastic_planner;
    let planner: &dyn Planner = match args.planner {
        PlannerKind::Rule => {
            rule_planner = bundle.rule_planner();
            &rule_planner
        }
        PlannerKind::Stochastic => {
            stochastic_planner = bundle.stochastic_planner();
            &stochastic_planner
        }
    };

    let runner = MissionRunner::new(&bundle.ajd, planner, args.seed, args.max_cycles)
        .verification(!args.no_verify);
    let report = runner.run(&mut bundle.world);

    if let Some(path) = &args.trace_out {
        if let Err(e) = fs::write(path, write_trace(&report.trace)) {
            eprintln!("error: cannot write trace {}: {e}", path.display());
            return EXIT_USAGE;
        }
    }

    print_report(&report);

    match report.verdict {
        Verdict::Satisfied(_) => EXIT_OK,
        Verdict::Exhausted(_) => EXIT_EXHAUSTED,
        Verdict::Blocked(_) => EXIT_BLOCKED,
    }
}

fn print_report(report: &MissionReport) {
    match &report.verdict {
        Verdict::Satisfied(t) => println!("Satisfied at t={t}"),
        Verdict::Exhausted(t) => println!("Exhausted after {t} cycles"),
        Verdict::Blocked(reason) => println!("Blocked: {reason}"),
    }
    println!(
        "U curve: [{}]",
        report
            .u_curve
            .iter()
            .map(u64::to_string)
            .collect::<Vec<_>>()
            .join(", ")
    );
    for c in &report.cycles {
        println!(
            "cycle {}: scope={} executed={} deferred={} delta={} assumed={} U={}",
            c.t,
            if c.scope.is_allowed() { "allowed" } else { "blocked" },
            c.executed.len(),
            c.deferred.len(),
            c.delta.facts.len(),
            c.assumed.len(),
            c.u_after
        );
    }
    println!("mismatch audit: {} entries", report.mismatches.len());
    for m in &report.mismatches {
        println!(
            "  mismatch: {}{} — {}",
            m.claim,
            if m.assumed { " (assumed)" } else { "" },
            m.detail
        );
    }
}

fn cmd_lint(path: &PathBuf) -> i32 {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    let spec = match parse_ajd(&bytes) {
        Ok(s) => s,
        Err(e) => {
            println!("invalid: {e}");
            return EXIT_INVALID;
        }
    };
    let report = validate_ajd(&spec);
    if !report.is_clean() {
        for v in &report.violations {
            println!("violation: {v}");
        }
        return EXIT_INVALID;
    }
    let advisories = lint_ajd(&spec);
    for a in &advisories {
        println!("warning: {a}");
    }
    if advisories.is_empty() {
        println!("clean");
    }
    EXIT_OK
}

fn cmd_diagram(ajd: &PathBuf, out: &PathBuf) -> i32 {
    let bytes = match fs::read(ajd) {
        Ok(b) => b,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", ajd.display());
            return EXIT_USAGE;
        }
    };
    let spec = match parse_ajd(&bytes) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let report = validate_ajd(&spec);
    if !report.is_clean() {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        return EXIT_INVALID;
    }
    let dot = export_apf_diagram(&spec);
    if let Err(e) = fs::write(out, dot) {
        eprintln!("error: cannot write {}: {e}", out.display());
        return EXIT_USAGE;
    }
    EXIT_OK
}

fn cmd_replay(path: &PathBuf) -> i32 {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return EXIT_USAGE;
        }
    };
    match replay(&text) {
        Ok(summary) => {
            println!("mission: {} (planner {})", summary.mission, summary.planner);
            match &summary.verdict {
                Verdict::Satisfied(t) => println!("Satisfied at t={t}"),
                Verdict::Exhausted(t) => println!("Exhausted after {t} cycles"),
                Verdict::Blocked(reason) => println!("Blocked: {reason}"),
            }
            println!(
                "U curve: [{}]",
                summary
                    .u_curve
                    .iter()
                    .map(u64::to_string)
                    .collect::<Vec<_>>()
                    .join(", ")
            );
            EXIT_OK
        }
        Err(e) => {
            eprintln!("trace error: {e}");
            EXIT_TRACE
        }
    }
}
