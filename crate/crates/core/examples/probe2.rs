use apf_core::avr::{run_mission, MissionRunner};
use apf_core::scenario::{build_travel, build_industrial, inject_fault};
use apf_core::world::{FaultKind, FaultSpec};
use std::collections::BTreeMap;

fn voucher_drop() -> FaultSpec {
    let mut p = BTreeMap::new();
    p.insert("match".into(), "voucher".into());
    FaultSpec { kind: FaultKind::VoucherDrop, at_tick: 0, parameters: p }
}

fn main() {
    // Open-loop with voucher fault
    let mut b = build_travel(42);
    inject_fault(&mut b.world, voucher_drop()).unwrap();
    b.world.fire_due_faults();
    let planner = b.rule_planner();
    let report = MissionRunner::new(&b.ajd, &planner, 42, 10).verification(false).run(&mut b.world);
    println!("open-loop+fault: verdict={:?} mismatches={:?}", report.verdict,
        report.mismatches.iter().map(|m| m.claim.to_string()).collect::<Vec<_>>());
    let asserted: Vec<String> = report.cycles.iter().flat_map(|c| c.assumed.iter().map(|f| f.to_string())).collect();
    println!("  asserted: {asserted:?}");

    // Closed-loop with same fault
    let mut b = build_travel(42);
    inject_fault(&mut b.world, voucher_drop()).unwrap();
    b.world.fire_due_faults();
    let planner = b.rule_planner();
    let report = run_mission(&b.ajd, &mut b.world, &planner, 42, 6);
    println!("closed-loop+fault: verdict={:?} mismatches={} curve={:?}", report.verdict, report.mismatches.len(), report.u_curve);

    // Stochastic over seeds
    let mut ok = 0;
    for seed in 0..20 {
        let mut b = build_travel(seed);
        let planner = b.stochastic_planner();
        let r = run_mission(&b.ajd, &mut b.world, &planner, seed, 20);
        let monotone = r.u_curve.windows(2).all(|w| w[1] <= w[0]);
        if r.verdict.is_satisfied() && monotone && r.u_curve.last() == Some(&0) { ok += 1; }
        else { println!("  seed {seed}: {:?} {:?}", r.verdict, r.u_curve); }
    }
    println!("stochastic travel: {ok}/20 converged");
    let mut ok = 0;
    for seed in 0..20 {
        let mut b = build_industrial(seed);
        let planner = b.stochastic_planner();
        let r = run_mission(&b.ajd, &mut b.world, &planner, seed, 20);
        let monotone = r.u_curve.windows(2).all(|w| w[1] <= w[0]);
        if r.verdict.is_satisfied() && monotone && r.u_curve.last() == Some(&0) { ok += 1; }
        else { println!("  seed {seed}: {:?} {:?}", r.verdict, r.u_curve); }
    }
    println!("stochastic industrial: {ok}/20 converged");

    // Flywheel: run twice with carried memory
    let mut b = build_travel(42);
    let planner = b.rule_planner();
    let (r1, ledger1) = MissionRunner::new(&b.ajd, &planner, 42, 10).run_with_ledger(&mut b.world, Default::default());
    let mut b2 = build_travel(42);
    let (r2, _) = MissionRunner::new(&b2.ajd, &planner, 42, 10).run_with_ledger(&mut b2.world, ledger1.rollover());
    println!("flywheel: run1={:?} run2={:?}", r1.verdict, r2.verdict);
    println!("  run1 confirms={} run2 confirms={}", r1.confirm_records.len(), r2.confirm_records.len());
}
