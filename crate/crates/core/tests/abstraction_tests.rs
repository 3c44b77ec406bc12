//! Abstraction tests: criticality, the fib abstraction set, counterexample
//! detection, the heuristic, and the soundness of an Equivalent verdict
//! (identical WCET to the cycle).

mod common;

use std::collections::BTreeSet;

use common::{bundled, load, TestRng, FIB, FIB_ABS};
use wcet_core::abstraction::{
    check_equivalence, heuristic_map, is_critical, AbstractionMap, AbstractionError, Verdict,
};
use wcet_core::isa::{Addr, Reg};
use wcet_core::machine::{init_state, step, ExecCtx, IssueRecord, StepOutcome};
use wcet_core::search::{compute_wcet, AnalysisConfig};

#[test]
fn criticality_follows_flags_and_memory() {
    let (bs, _) = load(common::BS);
    assert!(is_critical(bs.instr(0x2c).unwrap())); // cmp r3, r0
    assert!(is_critical(bs.instr(0x24).unwrap())); // ldr r3, [r4, r2, lsl #3]
    assert!(is_critical(bs.instr(0x8).unwrap())); // stmdb
    assert!(!is_critical(bs.instr(0x20).unwrap())); // mov r2, r3, asr #1
    assert!(!is_critical(bs.instr(0x4).unwrap())); // b
}

#[test]
fn critical_instructions_cannot_be_abstracted() {
    let (fib, _) = load(FIB);
    match AbstractionMap::from_addrs(&fib, [0x4]) {
        Err(AbstractionError::CriticalInstruction { address: 0x4 }) => {}
        other => panic!("{other:?}"),
    }
    match AbstractionMap::from_addrs(&fib, [0x400]) {
        Err(AbstractionError::UnknownAddress { address: 0x400 }) => {}
        other => panic!("{other:?}"),
    }
}

#[test]
fn abstracted_step_only_advances_pc_with_the_same_footprint() {
    let (p, meta) = load(FIB);
    let cfg = wcet_core::machine::MachineConfig::default();
    let abstracted: BTreeSet<Addr> = [0xc_u32].into_iter().collect();
    let concrete_ctx = ExecCtx::new(&p, &meta, &cfg);
    let abstract_ctx = ExecCtx { abstracted: Some(&abstracted), ..concrete_ctx };

    // Drive both machines to 0xc (mov r0, #1) deterministically.
    let mut mc = init_state(&concrete_ctx);
    let mut ma = init_state(&abstract_ctx);
    loop {
        if mc.pc() == wcet_core::machine::ExtValue::Known(0xc) {
            break;
        }
        let (StepOutcome::Deterministic { next: nc, .. }, StepOutcome::Deterministic { next: na, .. }) =
            (step(&concrete_ctx, &mc), step(&abstract_ctx, &ma))
        else {
            panic!("deterministic prefix expected");
        };
        mc = nc;
        ma = na;
    }
    let (StepOutcome::Deterministic { next: nc, issue: ic }, StepOutcome::Deterministic { next: na, issue: ia }) =
        (step(&concrete_ctx, &mc), step(&abstract_ctx, &ma))
    else {
        panic!("deterministic step expected");
    };
    // Identical dispatch record (class, schedule, footprint)...
    assert_eq!(ic, ia);
    // ...but the abstracted instruction leaves r0 untouched.
    assert_eq!(nc.reg(Reg(0)), wcet_core::machine::ExtValue::Known(1));
    assert_eq!(na.reg(Reg(0)), ma.reg(Reg(0)));
    assert_eq!(na.pc(), wcet_core::machine::ExtValue::Known(0x10));
}

#[test]
fn fib_register_abstraction_is_equivalent_with_identical_wcet() {
    let (p, meta) = load(FIB);
    let cfg = AnalysisConfig::default();
    let map = AbstractionMap::parse_file(&p, FIB_ABS).unwrap();
    assert_eq!(map.len(), 5);
    let verdict = check_equivalence(&p, &meta, &cfg.machine, &map, &cfg.limits).unwrap();
    assert!(verdict.is_equivalent());

    let concrete = compute_wcet(&p, &meta, &cfg).unwrap();
    let mut abs_cfg = cfg.clone();
    abs_cfg.abstracted = Some(map.addrs().clone());
    let abstracted = compute_wcet(&p, &meta, &abs_cfg).unwrap();
    assert_eq!(concrete.wcet, abstracted.wcet, "to the cycle");
    assert_eq!(concrete.bcet, abstracted.bcet);
    assert_eq!(concrete.leaves, abstracted.leaves);
}

#[test]
fn abstracting_the_loop_counter_yields_a_counterexample() {
    let (p, meta) = load(FIB);
    let cfg = AnalysisConfig::default();
    // add r2, r2, #1 feeds the critical compare at 0x20.
    let map = AbstractionMap::from_addrs(&p, [0x18]).unwrap();
    match check_equivalence(&p, &meta, &cfg.machine, &map, &cfg.limits).unwrap() {
        Verdict::CounterExample { address, register, .. } => {
            assert_eq!(address, 0x20);
            assert_eq!(register, Reg(2));
        }
        Verdict::Equivalent => panic!("must not be equivalent"),
    }
}

#[test]
fn empty_map_is_always_equivalent() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let verdict =
            check_equivalence(&p, &meta, &cfg.machine, &AbstractionMap::empty(), &cfg.limits)
                .unwrap();
        assert!(verdict.is_equivalent(), "{name}");
    }
}

#[test]
fn heuristic_output_passes_the_check_on_every_bundled_program() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let map = heuristic_map(&p, &meta);
        let verdict = check_equivalence(&p, &meta, &cfg.machine, &map, &cfg.limits).unwrap();
        assert!(verdict.is_equivalent(), "{name}: heuristic set {:x?}", map.addrs());

        let concrete = compute_wcet(&p, &meta, &cfg).unwrap();
        let mut abs_cfg = cfg.clone();
        abs_cfg.abstracted = Some(map.addrs().clone());
        let abstracted = compute_wcet(&p, &meta, &abs_cfg).unwrap();
        assert_eq!(concrete.wcet, abstracted.wcet, "{name}");
    }
}

#[test]
fn heuristic_recovers_the_fib_register_abstraction() {
    // r0, r1 and r3 inside the fib body never reach a critical
    // instruction; the trailing result move in main is equally dead.
    let (p, meta) = load(FIB);
    let map = heuristic_map(&p, &meta);
    let expect: BTreeSet<Addr> = [0xc, 0x10, 0x1c, 0x28, 0x2c, 0x50].into_iter().collect();
    assert_eq!(map.addrs(), &expect);
}

/// Randomized abstraction sets: whenever the check says Equivalent, the
/// WCET must match exactly; counterexamples are allowed. Subsets of the
/// heuristic fixpoint stay equivalent (declaring a member concrete only
/// kills flows), so those exercise the sound side.
#[test]
fn equivalent_verdicts_are_sound_on_random_sets() {
    let mut rng = TestRng::new(0xAB5);
    for (name, p, meta) in bundled() {
        let candidates: Vec<Addr> = p
            .instructions
            .values()
            .filter(|i| !is_critical(i))
            .map(|i| i.address)
            .collect();
        let safe: Vec<Addr> = heuristic_map(&p, &meta).addrs().iter().copied().collect();
        let cfg = AnalysisConfig::default();
        let base = compute_wcet(&p, &meta, &cfg).unwrap();
        for trial in 0..12 {
            let mut subset: Vec<Addr> =
                safe.iter().copied().filter(|_| rng.chance(60)).collect();
            let noisy = trial % 2 == 1;
            if noisy {
                subset.extend(candidates.iter().copied().filter(|_| rng.chance(30)));
            }
            let Ok(map) = AbstractionMap::from_addrs(&p, subset) else { continue };
            let verdict =
                check_equivalence(&p, &meta, &cfg.machine, &map, &cfg.limits).unwrap();
            if !noisy {
                assert!(verdict.is_equivalent(), "{name}: subset of the fixpoint");
            }
            if verdict.is_equivalent() {
                let mut abs_cfg = cfg.clone();
                abs_cfg.abstracted = Some(map.addrs().clone());
                let abstracted = compute_wcet(&p, &meta, &abs_cfg).unwrap();
                assert_eq!(base.wcet, abstracted.wcet, "{name}: {:x?}", map.addrs());
            }
        }
    }
}

/// With the register abstraction applied, the fib body never writes r1 or
/// r3: they stay unknown for the whole run, while the concrete run leaves
/// Fibonacci values in them.
#[test]
fn abstracted_fib_leaves_its_result_registers_unknown() {
    let (p, meta) = load(FIB);
    let cfg = AnalysisConfig::default();
    let map = AbstractionMap::parse_file(&p, FIB_ABS).unwrap();
    let abstracted = map.addrs().clone();

    let run = |abs: Option<&std::collections::BTreeSet<wcet_core::isa::Addr>>| {
        let ctx = ExecCtx { program: &p, meta: &meta, cfg: &cfg.machine, abstracted: abs };
        let mut s = init_state(&ctx);
        loop {
            match step(&ctx, &s) {
                StepOutcome::Deterministic { next, .. } => {
                    assert!(
                        abs.is_none()
                            || (next.reg(Reg(1)) == wcet_core::machine::ExtValue::Unknown
                                && next.reg(Reg(3)) == wcet_core::machine::ExtValue::Unknown),
                        "abstracted run must never define r1/r3"
                    );
                    s = next;
                }
                StepOutcome::Terminated => return s,
                other => panic!("{other:?}"),
            }
        }
    };
    let concrete_end = run(None);
    assert_ne!(concrete_end.reg(Reg(1)), wcet_core::machine::ExtValue::Unknown);
    run(Some(&abstracted));
}

/// Footprint preservation behind the equivalence argument: on mirrored
/// paths the dispatch records agree in address, schedule and transfers.
#[test]
fn equivalent_abstraction_preserves_dispatch_footprints() {
    let (p, meta) = load(FIB);
    let cfg = AnalysisConfig::default();
    let map = AbstractionMap::parse_file(&p, FIB_ABS).unwrap();
    let abstracted = map.addrs().clone();

    let concrete_ctx = ExecCtx::new(&p, &meta, &cfg.machine);
    let abstract_ctx = ExecCtx { abstracted: Some(&abstracted), ..concrete_ctx };
    let mut mc = init_state(&concrete_ctx);
    let mut ma = init_state(&abstract_ctx);
    let mut records: Vec<(IssueRecord, IssueRecord)> = Vec::new();
    loop {
        match (step(&concrete_ctx, &mc), step(&abstract_ctx, &ma)) {
            (StepOutcome::Terminated, StepOutcome::Terminated) => break,
            (
                StepOutcome::Deterministic { next: nc, issue: ic },
                StepOutcome::Deterministic { next: na, issue: ia },
            ) => {
                records.push((ic, ia));
                mc = nc;
                ma = na;
            }
            other => panic!("fib is single-path: {other:?}"),
        }
    }
    for (ic, ia) in records {
        assert_eq!(ic, ia);
    }
}
