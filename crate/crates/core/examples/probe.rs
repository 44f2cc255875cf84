use apf_core::avr::run_mission;
use apf_core::scenario::{build_travel, build_industrial};

fn main() {
    let mut b = build_travel(42);
    let planner = b.rule_planner();
    let report = run_mission(&b.ajd, &mut b.world, &planner, 42, 10);
    println!("travel/rule: verdict={:?} curve={:?} mismatches={}", report.verdict, report.u_curve, report.mismatches.len());
    for c in &report.cycles {
        println!("  t={} executed={:?} deferred={} delta={:?} timeouts={:?} U={}",
            c.t,
            c.executed.iter().map(|s| s.verb.clone()).collect::<Vec<_>>(),
            c.deferred.len(),
            c.delta.facts.iter().map(|f| f.claim.to_string()).collect::<Vec<_>>(),
            c.timeouts, c.u_after);
    }

    let mut b = build_industrial(7);
    let planner = b.rule_planner();
    let report = run_mission(&b.ajd, &mut b.world, &planner, 7, 20);
    println!("industrial/rule: verdict={:?} curve={:?} mismatches={}", report.verdict, report.u_curve, report.mismatches.len());
    for c in &report.cycles {
        println!("  t={} executed={:?} delta={:?} U={}",
            c.t,
            c.executed.iter().map(|s| s.verb.clone()).collect::<Vec<_>>(),
            c.delta.facts.iter().map(|f| f.claim.to_string()).collect::<Vec<_>>(),
            c.u_after);
    }
}
