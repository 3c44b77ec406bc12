//! Small-step semantics over the extended domain.

use std::collections::BTreeSet;

use crate::isa::{
    classify, cond_predicate, Addr, Instruction, InstrClass, MemOffset, Op, Operand, Pred,
    Program, ProgramMeta, Reg, ShiftOp,
};

use super::choice::consistent_outcomes;
use super::{
    ConcreteInputs, ExtValue, Fault, IssueRecord, MachineConfig, MachineState, Preds, RunError,
    StepOutcome, STACK_GUARD_BYTES,
};

/// Everything a step needs besides the state. All parts are immutable and
/// shared freely across search workers.
#[derive(Clone, Copy)]
pub struct ExecCtx<'a> {
    pub program: &'a Program,
    pub meta: &'a ProgramMeta,
    pub cfg: &'a MachineConfig,
    /// Addresses whose instructions are replaced by footprint-identical
    /// no-ops that only advance pc.
    pub abstracted: Option<&'a BTreeSet<Addr>>,
}

impl<'a> ExecCtx<'a> {
    pub fn new(program: &'a Program, meta: &'a ProgramMeta, cfg: &'a MachineConfig) -> Self {
        ExecCtx { program, meta, cfg, abstracted: None }
    }

    fn is_abstracted(&self, addr: Addr) -> bool {
        self.abstracted.is_some_and(|set| set.contains(&addr))
    }
}

/// All registers unknown except pc at the entry point, sp at the stack base
/// and lr at the termination sentinel.
pub fn init_state(ctx: &ExecCtx) -> MachineState {
    let mut s = MachineState {
        regs: [ExtValue::Unknown; 16],
        preds: Preds::default(),
        stack: Default::default(),
        mem: Default::default(),
        concrete_mem: false,
        step_count: 0,
        max_stack_words: 0,
    };
    s.set_reg(Reg::PC, ExtValue::Known(ctx.program.entry as i32));
    s.set_reg(Reg::SP, ExtValue::Known(ctx.cfg.stack_base as i32));
    s.set_reg(Reg::LR, ExtValue::Known(ctx.cfg.init_lr as i32));
    s
}

/// Reading pc as an operand yields the instruction address plus 8, which is
/// what makes pc-relative literal loads resolve to the right image word.
fn read_reg(s: &MachineState, r: Reg, at: Addr) -> ExtValue {
    if r == Reg::PC {
        ExtValue::Known(at.wrapping_add(8) as i32)
    } else {
        s.reg(r)
    }
}

fn shift(v: i32, op: ShiftOp, n: u8) -> i32 {
    let n = (n as u32) & 31;
    match op {
        ShiftOp::Lsl => ((v as u32) << n) as i32,
        ShiftOp::Lsr => ((v as u32) >> n) as i32,
        ShiftOp::Asr => v >> n,
    }
}

fn operand_value(s: &MachineState, op: &Operand, at: Addr) -> ExtValue {
    match op {
        Operand::Reg(r) => read_reg(s, *r, at),
        Operand::Imm(v) => ExtValue::Known(*v),
        Operand::Shifted(r, sop, n) => match read_reg(s, *r, at) {
            ExtValue::Known(v) => ExtValue::Known(shift(v, *sop, *n)),
            ExtValue::Unknown => ExtValue::Unknown,
        },
        Operand::Target(a) => ExtValue::Known(*a as i32),
    }
}

/// Values feeding a flag computation: every source operand.
fn flag_source_values(s: &MachineState, i: &Instruction) -> Vec<ExtValue> {
    let sources: &[Operand] = if i.op.is_compare() { &i.operands } else { &i.operands[1..] };
    sources.iter().map(|o| operand_value(s, o, i.address)).collect()
}

/// True iff `i` sets status predicates and some operand is unknown in `s`:
/// the undetermined-comparison test that hands the move to the adversary.
pub fn ndcmp(_ctx: &ExecCtx, i: &Instruction, s: &MachineState) -> bool {
    i.sets_flags && flag_source_values(s, i).iter().any(|v| v.is_unknown())
}

fn flags_from_cmp(a: i32, b: i32) -> Preds {
    Preds { eq: a == b, lt: a < b, le: a <= b, ls: (a as u32) <= (b as u32) }
}

fn flags_from_sum(a: i32, b: i32) -> Preds {
    let sum = a as i64 + b as i64;
    let carry = (a as u32 as u64) + (b as u32 as u64) > u32::MAX as u64;
    let wrapped = a.wrapping_add(b);
    Preds { eq: sum == 0, lt: sum < 0, le: sum <= 0, ls: !carry || wrapped == 0 }
}

/// Logical operations leave the carry bit alone; we approximate `ls` after
/// them as the zero test. No supported listing consumes `ls` from one.
fn flags_from_result(r: i32) -> Preds {
    Preds { eq: r == 0, lt: r < 0, le: r <= 0, ls: r == 0 }
}

fn eval_cond(i: &Instruction, preds: &Preds) -> bool {
    match cond_predicate(i.cond) {
        None => true,
        Some((p, want)) => preds.get(p) == want,
    }
}

fn stack_band_fault(cfg: &MachineConfig, addr: u32, at: Addr) -> Option<Fault> {
    let low = cfg.stack_low();
    if addr >= cfg.stack_base && addr < cfg.stack_base.saturating_add(STACK_GUARD_BYTES) {
        return Some(Fault::StackUnderflow { at, addr });
    }
    if addr < low && addr >= low.saturating_sub(STACK_GUARD_BYTES) {
        return Some(Fault::StackOverflow { at, addr });
    }
    None
}

fn read_mem(ctx: &ExecCtx, s: &MachineState, addr: u32, at: Addr) -> Result<ExtValue, Fault> {
    if ctx.cfg.in_stack_region(addr) {
        return Ok(s.stack.get(&addr).copied().unwrap_or(ExtValue::Unknown));
    }
    if let Some(f) = stack_band_fault(ctx.cfg, addr, at) {
        return Err(f);
    }
    if s.concrete_mem {
        if let Some(v) = s.mem.get(&addr) {
            return Ok(*v);
        }
    }
    // Words of the program image (literal pools, encodings) read back as
    // their known values; everything else is input-dependent.
    Ok(ctx
        .program
        .image_word(addr)
        .map(|w| ExtValue::Known(w as i32))
        .unwrap_or(ExtValue::Unknown))
}

fn write_mem(
    ctx: &ExecCtx,
    next: &mut MachineState,
    addr: u32,
    value: ExtValue,
    at: Addr,
) -> Result<(), Fault> {
    if ctx.cfg.in_stack_region(addr) {
        next.stack.insert(addr, value);
        next.max_stack_words = next.max_stack_words.max(next.stack.len() as u32);
        return Ok(());
    }
    if let Some(f) = stack_band_fault(ctx.cfg, addr, at) {
        return Err(f);
    }
    if next.concrete_mem {
        next.mem.insert(addr, value);
    }
    // Non-stack memory in the adversarial run is opaque: its contents are
    // unknown before and after the store.
    Ok(())
}

fn resolve_mem_addr(s: &MachineState, i: &Instruction, at: Addr) -> Result<u32, Fault> {
    let mem = i.mem.expect("load/store has an address expression");
    let base = read_reg(s, mem.base, at);
    let offset = match mem.offset {
        MemOffset::None => ExtValue::Known(0),
        MemOffset::Imm(v) => ExtValue::Known(v),
        MemOffset::Reg(r, sh) => match read_reg(s, r, at) {
            ExtValue::Known(v) => {
                ExtValue::Known(sh.map(|(op, n)| shift(v, op, n)).unwrap_or(v))
            }
            ExtValue::Unknown => ExtValue::Unknown,
        },
    };
    match base.map2(offset, |b, o| b.wrapping_add(o)) {
        ExtValue::Known(a) => Ok(a as u32),
        ExtValue::Unknown => Err(Fault::UnknownAddress { at }),
    }
}

/// Transfer addresses of an ldm/stm in register-number order.
fn multi_addrs(base: u32, mode: crate::isa::AddrMode, n: u32) -> Vec<u32> {
    let start = match mode {
        crate::isa::AddrMode::Ia => base,
        crate::isa::AddrMode::Db => base.wrapping_sub(4 * n),
    };
    (0..n).map(|k| start.wrapping_add(4 * k)).collect()
}

/// One step of the machine. Pure: the input state is never mutated.
pub fn step(ctx: &ExecCtx, s: &MachineState) -> StepOutcome {
    let pc = match s.pc() {
        ExtValue::Known(v) => v as u32,
        ExtValue::Unknown => return StepOutcome::Fault(Fault::UnknownPc { at: 0 }),
    };
    if pc == ctx.cfg.init_lr {
        return StepOutcome::Terminated;
    }
    let Some(instr) = ctx.program.instr(pc) else {
        let fault = if ctx.program.data_words.contains_key(&pc) {
            Fault::NonExecutable { at: pc }
        } else {
            Fault::PcOutsideProgram { at: pc }
        };
        return StepOutcome::Fault(fault);
    };
    if s.step_count >= ctx.cfg.k_p {
        return StepOutcome::Fault(Fault::RunBound { at: pc });
    }

    let class = classify(instr);
    let cond_true = eval_cond(instr, &s.preds);
    let mut rec = IssueRecord {
        instr_addr: pc,
        scheduled: cond_true,
        data_addrs: Vec::new(),
        branch_taken: class == InstrClass::CondBranch && cond_true,
    };

    let mut next = s.clone();
    next.step_count += 1;
    next.set_reg(Reg::PC, ExtValue::Known(pc.wrapping_add(4) as i32));

    if !cond_true || ctx.is_abstracted(pc) {
        return StepOutcome::Deterministic { next, issue: rec };
    }

    match exec_scheduled(ctx, s, &mut next, instr, &mut rec) {
        Ok(Exec::Done) => StepOutcome::Deterministic { next, issue: rec },
        Ok(Exec::Adversary) => build_choice(ctx, next, rec),
        Err(fault) => StepOutcome::Fault(fault),
    }
}

enum Exec {
    Done,
    /// The instruction sets flags from an unknown operand.
    Adversary,
}

fn exec_scheduled(
    ctx: &ExecCtx,
    s: &MachineState,
    next: &mut MachineState,
    instr: &Instruction,
    rec: &mut IssueRecord,
) -> Result<Exec, Fault> {
    let at = instr.address;
    match instr.op {
        Op::Mov | Op::Mvn | Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor => {
            let Some(Operand::Reg(dest)) = instr.operands.first().copied() else {
                unreachable!("data-processing has a register destination");
            };
            let srcs: Vec<ExtValue> = instr.operands[1..]
                .iter()
                .map(|o| operand_value(s, o, at))
                .collect();
            let value = dataproc_value(instr.op, &srcs);
            if dest == Reg::PC {
                let target = value.known().ok_or(Fault::UnknownPc { at })?;
                next.set_reg(Reg::PC, ExtValue::Known(target));
            } else {
                next.set_reg(dest, value);
            }
            if instr.sets_flags {
                if srcs.iter().any(|v| v.is_unknown()) {
                    return Ok(Exec::Adversary);
                }
                let known: Vec<i32> = srcs.iter().map(|v| v.known().unwrap()).collect();
                let preds = dataproc_flags(instr.op, &known, value);
                set_needed(ctx, next, at, preds);
            }
            Ok(Exec::Done)
        }
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => {
            let a = operand_value(s, &instr.operands[0], at);
            let b = operand_value(s, &instr.operands[1], at);
            match (a.known(), b.known()) {
                (Some(a), Some(b)) => {
                    let preds = match instr.op {
                        Op::Cmp => flags_from_cmp(a, b),
                        Op::Cmn => flags_from_sum(a, b),
                        Op::Tst => flags_from_result(a & b),
                        Op::Teq => flags_from_result(a ^ b),
                        _ => unreachable!(),
                    };
                    set_needed(ctx, next, at, preds);
                    Ok(Exec::Done)
                }
                _ => Ok(Exec::Adversary),
            }
        }
        Op::Ldr => {
            let addr = resolve_mem_addr(s, instr, at)?;
            rec.data_addrs.push(addr);
            let value = read_mem(ctx, s, addr, at)?;
            if instr.mem.unwrap().writeback {
                next.set_reg(instr.mem.unwrap().base, ExtValue::Known(addr as i32));
            }
            let Some(Operand::Reg(rt)) = instr.operands.first().copied() else {
                unreachable!("load has a transfer register");
            };
            if rt == Reg::PC {
                let target = value.known().ok_or(Fault::UnknownPc { at })?;
                next.set_reg(Reg::PC, ExtValue::Known(target));
            } else {
                next.set_reg(rt, value);
            }
            Ok(Exec::Done)
        }
        Op::Str => {
            let addr = resolve_mem_addr(s, instr, at)?;
            rec.data_addrs.push(addr);
            let Some(Operand::Reg(rt)) = instr.operands.first().copied() else {
                unreachable!("store has a transfer register");
            };
            let value = read_reg(s, rt, at);
            write_mem(ctx, next, addr, value, at)?;
            if instr.mem.unwrap().writeback {
                next.set_reg(instr.mem.unwrap().base, ExtValue::Known(addr as i32));
            }
            Ok(Exec::Done)
        }
        Op::Ldm => {
            let Some(Operand::Reg(base_reg)) = instr.operands.first().copied() else {
                unreachable!("ldm has a base register");
            };
            let base = read_reg(s, base_reg, at)
                .known()
                .ok_or(Fault::UnknownAddress { at })? as u32;
            let n = instr.reg_list.len() as u32;
            let addrs = multi_addrs(base, instr.addr_mode, n);
            let mut values = Vec::with_capacity(addrs.len());
            for &a in &addrs {
                values.push(read_mem(ctx, s, a, at)?);
            }
            rec.data_addrs.extend(addrs.iter().copied());
            if instr.list_writeback {
                let moved = match instr.addr_mode {
                    crate::isa::AddrMode::Ia => base.wrapping_add(4 * n),
                    crate::isa::AddrMode::Db => base.wrapping_sub(4 * n),
                };
                next.set_reg(base_reg, ExtValue::Known(moved as i32));
            }
            for (reg, value) in instr.reg_list.iter().zip(values) {
                if *reg == Reg::PC {
                    let target = value.known().ok_or(Fault::UnknownPc { at })?;
                    next.set_reg(Reg::PC, ExtValue::Known(target));
                } else {
                    next.set_reg(*reg, value);
                }
            }
            Ok(Exec::Done)
        }
        Op::Stm => {
            let Some(Operand::Reg(base_reg)) = instr.operands.first().copied() else {
                unreachable!("stm has a base register");
            };
            let base = read_reg(s, base_reg, at)
                .known()
                .ok_or(Fault::UnknownAddress { at })? as u32;
            let n = instr.reg_list.len() as u32;
            let addrs = multi_addrs(base, instr.addr_mode, n);
            let values: Vec<ExtValue> =
                instr.reg_list.iter().map(|r| read_reg(s, *r, at)).collect();
            for (&a, v) in addrs.iter().zip(values) {
                write_mem(ctx, next, a, v, at)?;
            }
            rec.data_addrs.extend(addrs.iter().copied());
            if instr.list_writeback {
                let moved = match instr.addr_mode {
                    crate::isa::AddrMode::Ia => base.wrapping_add(4 * n),
                    crate::isa::AddrMode::Db => base.wrapping_sub(4 * n),
                };
                next.set_reg(base_reg, ExtValue::Known(moved as i32));
            }
            Ok(Exec::Done)
        }
        Op::B => {
            let target = instr.branch_target().expect("branch target validated at parse");
            next.set_reg(Reg::PC, ExtValue::Known(target as i32));
            Ok(Exec::Done)
        }
        Op::Bl => {
            let target = instr.branch_target().expect("branch target validated at parse");
            next.set_reg(Reg::LR, ExtValue::Known(at.wrapping_add(4) as i32));
            next.set_reg(Reg::PC, ExtValue::Known(target as i32));
            Ok(Exec::Done)
        }
    }
}

fn dataproc_value(op: Op, srcs: &[ExtValue]) -> ExtValue {
    match op {
        Op::Mov => srcs[0],
        Op::Mvn => match srcs[0] {
            ExtValue::Known(v) => ExtValue::Known(!v),
            ExtValue::Unknown => ExtValue::Unknown,
        },
        Op::Add => srcs[0].map2(srcs[1], i32::wrapping_add),
        Op::Sub => srcs[0].map2(srcs[1], i32::wrapping_sub),
        Op::Rsb => srcs[1].map2(srcs[0], i32::wrapping_sub),
        Op::And => srcs[0].map2(srcs[1], |a, b| a & b),
        Op::Orr => srcs[0].map2(srcs[1], |a, b| a | b),
        Op::Eor => srcs[0].map2(srcs[1], |a, b| a ^ b),
        _ => unreachable!(),
    }
}

fn dataproc_flags(op: Op, srcs: &[i32], result: ExtValue) -> Preds {
    match op {
        Op::Sub => flags_from_cmp(srcs[0], srcs[1]),
        Op::Rsb => flags_from_cmp(srcs[1], srcs[0]),
        Op::Add => flags_from_sum(srcs[0], srcs[1]),
        _ => flags_from_result(result.known().unwrap_or(0)),
    }
}

/// Only the predicates some later instruction consumes are updated; the
/// rest keep their previous values, mirroring the generated setters.
fn set_needed(ctx: &ExecCtx, next: &mut MachineState, at: Addr, computed: Preds) {
    for &p in ctx.meta.flags_of(at) {
        next.preds.set(p, computed.get(p));
    }
}

fn build_choice(ctx: &ExecCtx, pending: MachineState, issue: IssueRecord) -> StepOutcome {
    let flag_set = ctx.meta.flags_of(issue.instr_addr).clone();
    let flags: Vec<Pred> = flag_set.iter().copied().collect();
    let choices = consistent_outcomes(&flag_set)
        .into_iter()
        .map(|outcome| {
            let mut m = pending.clone();
            outcome.apply(&mut m.preds, &flags);
            (outcome, m)
        })
        .collect();
    StepOutcome::AdversaryChoice { pending, issue, flags, choices }
}

/// Runs the program on a fully determined input, returning the instruction
/// dispatch trace. Fails if any comparison outcome is left to the adversary.
pub fn run_concrete(
    program: &Program,
    meta: &ProgramMeta,
    cfg: &MachineConfig,
    inputs: &ConcreteInputs,
) -> Result<Vec<IssueRecord>, RunError> {
    let ctx = ExecCtx::new(program, meta, cfg);
    let mut s = init_state(&ctx);
    s.concrete_mem = true;
    for (&r, &v) in &inputs.regs {
        if r != Reg::PC {
            s.set_reg(r, ExtValue::Known(v));
        }
    }
    for (&a, &v) in &inputs.mem {
        s.mem.insert(a, ExtValue::Known(v));
    }
    let mut trace = Vec::new();
    loop {
        match step(&ctx, &s) {
            StepOutcome::Deterministic { next, issue } => {
                trace.push(issue);
                s = next;
            }
            StepOutcome::Terminated => return Ok(trace),
            StepOutcome::AdversaryChoice { issue, .. } => {
                return Err(RunError::NondeterministicRun { at: issue.instr_addr })
            }
            StepOutcome::Fault(f) => return Err(RunError::Fault(f)),
        }
    }
}
