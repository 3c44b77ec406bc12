//! Shared test support: bundled listings, a brute-force adversary oracle
//! independent of the search engine, concrete-input builders and a random
//! multi-path program generator.
#![allow(dead_code)]

use std::collections::BTreeMap;

use wcet_core::arch::ArchState;
use wcet_core::isa::{parse_listing, Program, ProgramMeta};
use wcet_core::machine::{
    init_state, step, ConcreteInputs, ExecCtx, MachineState, StepOutcome,
};
use wcet_core::search::{build_arch, AnalysisConfig};

pub const FIB: &str = include_str!("../../../../programs/fib.arm");
pub const BS: &str = include_str!("../../../../programs/bs.arm");
pub const STALL: &str = include_str!("../../../../programs/stall.arm");
pub const DIAMOND: &str = include_str!("../../../../programs/diamond.arm");
pub const FIB_ABS: &str = include_str!("../../../../programs/fib_abs.txt");

pub fn load(text: &str) -> (Program, ProgramMeta) {
    let p = parse_listing(text).expect("bundled program parses");
    let (meta, warnings) = ProgramMeta::build(&p).expect("metadata builds");
    assert!(warnings.is_empty(), "bundled programs carry no metadata warnings: {warnings:?}");
    (p, meta)
}

/// The three bundled programs every whole-suite criterion iterates over.
pub fn bundled() -> Vec<(&'static str, Program, ProgramMeta)> {
    let mut out = Vec::new();
    for (name, text) in [("fib", FIB), ("bs", BS), ("stall", STALL), ("diamond", DIAMOND)] {
        let (p, meta) = load(text);
        out.push((name, p, meta));
    }
    out
}

/// Concrete inputs for the binary-search program: (key, value) pairs at
/// its literal-pool base address. The probe range is indices 0..=14, so
/// fifteen slots are populated.
pub fn bs_inputs(pairs: &[(i32, i32)]) -> ConcreteInputs {
    assert_eq!(pairs.len(), 15);
    let mut mem = BTreeMap::new();
    for (i, (k, v)) in pairs.iter().enumerate() {
        let base = 0x158 + 8 * i as u32;
        mem.insert(base, *k);
        mem.insert(base + 4, *v);
    }
    ConcreteInputs { regs: BTreeMap::new(), mem }
}

/// Sorted array containing the searched key (9) somewhere.
pub fn bs_sorted_with_key() -> ConcreteInputs {
    let pairs: Vec<(i32, i32)> = (0..15).map(|i| (i * 2 - 3, 100 + i)).collect();
    // keys: -3,-1,1,3,5,7,9,... contains 9 at index 6
    bs_inputs(&pairs)
}

#[derive(Debug, Clone, Default)]
pub struct BruteResult {
    pub wcet: u64,
    pub bcet: u64,
    pub leaves: u64,
    pub max_moves: u64,
}

/// Exhaustive oracle: enumerates every consistent outcome assignment and
/// simulates each as a fixed trace from scratch, never reusing the
/// engine's incremental exploration.
pub fn brute_force(p: &Program, meta: &ProgramMeta, cfg: &AnalysisConfig) -> BruteResult {
    let mut result = BruteResult { bcet: u64::MAX, ..Default::default() };
    let mut prefix: Vec<usize> = Vec::new();
    enumerate(p, meta, cfg, &mut prefix, &mut result);
    result
}

fn enumerate(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    prefix: &mut Vec<usize>,
    result: &mut BruteResult,
) {
    match run_with_choices(p, meta, cfg, prefix) {
        RunResult::Leaf { time, moves } => {
            result.leaves += 1;
            result.wcet = result.wcet.max(time);
            result.bcet = result.bcet.min(time);
            result.max_moves = result.max_moves.max(moves);
        }
        RunResult::NeedsChoice { arity } => {
            for i in 0..arity {
                prefix.push(i);
                enumerate(p, meta, cfg, prefix, result);
                prefix.pop();
            }
        }
    }
}

pub enum RunResult {
    Leaf { time: u64, moves: u64 },
    NeedsChoice { arity: usize },
}

/// One full run taking the `choices[k]`-th branch at the k-th adversary
/// point; reports the arity of the first point beyond the given prefix.
pub fn run_with_choices(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    choices: &[usize],
) -> RunResult {
    let ctx = ExecCtx::new(p, meta, &cfg.machine);
    let mut machine: MachineState = init_state(&ctx);
    let mut arch: ArchState = build_arch(p, cfg);
    let mut taken = 0usize;
    let mut moves = 0u64;
    loop {
        match step(&ctx, &machine) {
            StepOutcome::Deterministic { next, issue } => {
                arch.feed(&issue);
                machine = next;
            }
            StepOutcome::Terminated => {
                let (time, _) = arch.drain();
                return RunResult::Leaf { time, moves };
            }
            StepOutcome::Fault(f) => panic!("oracle run faulted: {f}"),
            StepOutcome::AdversaryChoice { issue, choices: opts, .. } => {
                arch.feed(&issue);
                if taken == choices.len() {
                    return RunResult::NeedsChoice { arity: opts.len() };
                }
                if opts.len() > 1 {
                    moves += 1;
                }
                machine = opts[choices[taken]].1.clone();
                taken += 1;
            }
        }
    }
}

/// Tiny deterministic generator (xorshift) so generated programs are
/// stable across runs without pinning an RNG crate version.
pub struct TestRng(u64);

impl TestRng {
    pub fn new(seed: u64) -> Self {
        TestRng(seed.wrapping_mul(0x9E3779B97F4A7C15).max(1))
    }

    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x << 13;
        x ^= x >> 7;
        x ^= x << 17;
        self.0 = x;
        x
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next_u64() % n
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }
}

/// Generates a loop-free multi-path listing with `splits` comparisons on
/// loaded (unknown) data, forward conditional branches, a few stores and a
/// stack push/pop pair. Every path terminates via `mov pc, lr`.
pub fn gen_program(seed: u64, splits: usize) -> String {
    let mut rng = TestRng::new(seed.wrapping_add(1));
    let mut lines: Vec<String> = Vec::new();
    let mut addr: u32 = 0;
    let emit = |lines: &mut Vec<String>, addr: &mut u32, text: String| {
        lines.push(format!("  {:x}:\t{}", addr, text));
        *addr += 4;
    };

    emit(&mut lines, &mut addr, "mov\tr0, #1536".into()); // data base 0x600
    emit(&mut lines, &mut addr, format!("mov\tr4, #{}", rng.below(64)));
    if rng.chance(60) {
        emit(&mut lines, &mut addr, "stmdb\tsp!, {r4, r5, lr}".into());
    } else {
        emit(&mut lines, &mut addr, "sub\tsp, sp, #12".into());
        emit(&mut lines, &mut addr, "str\tr4, [sp]".into());
    }

    let conds = ["eq", "ne", "le", "gt", "lt", "ge"];
    for j in 0..splits {
        let rd = 1 + (j % 3) as u32; // r1..r3
        emit(
            &mut lines,
            &mut addr,
            format!("ldr\tr{rd}, [r0, #{}]", 4 * (rng.below(12))),
        );
        if rng.chance(40) {
            emit(&mut lines, &mut addr, format!("add\tr{rd}, r{rd}, #{}", rng.below(8)));
        }
        emit(&mut lines, &mut addr, format!("cmp\tr{rd}, #{}", rng.below(32)));
        let cond = conds[rng.below(conds.len() as u64) as usize];
        // Forward skip over 1..3 filler instructions.
        let fillers = 1 + rng.below(3) as u32;
        let target = addr + 4 + 4 * fillers;
        emit(&mut lines, &mut addr, format!("b{cond}\t{target:x}"));
        for k in 0..fillers {
            match rng.below(3) {
                0 => emit(&mut lines, &mut addr, format!("mov\tr5, #{}", rng.below(100))),
                1 => emit(&mut lines, &mut addr, format!("add\tr4, r4, #{}", 1 + k)),
                _ => emit(
                    &mut lines,
                    &mut addr,
                    format!("str\tr4, [r0, #{}]", 4 * (16 + rng.below(8))),
                ),
            }
        }
        if rng.chance(30) {
            emit(
                &mut lines,
                &mut addr,
                format!("mov{}\tr5, r4", conds[rng.below(conds.len() as u64) as usize]),
            );
        }
    }

    if lines.iter().any(|l| l.contains("stmdb")) {
        emit(&mut lines, &mut addr, "ldmia\tsp!, {r4, r5, lr}".into());
    } else {
        emit(&mut lines, &mut addr, "ldr\tr4, [sp]".into());
        emit(&mut lines, &mut addr, "add\tsp, sp, #12".into());
    }
    emit(&mut lines, &mut addr, "mov\tpc, lr".into());

    format!("00000000 <main>:\n{}\n", lines.join("\n"))
}
