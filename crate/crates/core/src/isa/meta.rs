//! Static per-instruction metadata: register footprints, classification,
//! predicate-usage analysis and the stage-duration table.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Addr, Cond, Instruction, InstrClass, IsaError, MemOffset, Op, Operand, Pred, Program, Reg};

/// Pipeline stage identifiers, in flow order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    Fetch,
    Decode,
    Execute,
    Memory,
    Writeback,
}

pub const STAGES: [Stage; 5] = [
    Stage::Fetch,
    Stage::Decode,
    Stage::Execute,
    Stage::Memory,
    Stage::Writeback,
];

impl Stage {
    pub fn index(self) -> usize {
        match self {
            Stage::Fetch => 0,
            Stage::Decode => 1,
            Stage::Execute => 2,
            Stage::Memory => 3,
            Stage::Writeback => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Decode => "decode",
            Stage::Execute => "execute",
            Stage::Memory => "memory",
            Stage::Writeback => "writeback",
        }
    }
}

/// Per-(class, stage) base durations in cycles. The memory stage of a
/// multiple load/store contributes `multi_per_register` cycles per listed
/// register instead of its base entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DurationTable {
    pub base: [[u32; 5]; 9],
    pub multi_per_register: u32,
}

impl Default for DurationTable {
    fn default() -> Self {
        DurationTable { base: [[1; 5]; 9], multi_per_register: 1 }
    }
}

impl DurationTable {
    fn class_row(&self, class: InstrClass) -> &[u32; 5] {
        let idx = match class {
            InstrClass::DataProc => 0,
            InstrClass::Load => 1,
            InstrClass::Store => 2,
            InstrClass::MultiLoad => 3,
            InstrClass::MultiStore => 4,
            InstrClass::Branch => 5,
            InstrClass::CondBranch => 6,
            InstrClass::BranchLink => 7,
            InstrClass::Compare => 8,
        };
        &self.base[idx]
    }
}

/// Configured duration of `i` in one pipeline stage. Cache latencies are
/// charged by the pipeline model on top of this.
pub fn stage_duration(i: &Instruction, stage: Stage, table: &DurationTable) -> u32 {
    let class = classify(i);
    if stage == Stage::Memory
        && matches!(class, InstrClass::MultiLoad | InstrClass::MultiStore)
    {
        return table.multi_per_register * i.reg_list.len() as u32;
    }
    table.class_row(class)[stage.index()]
}

/// Total classification over the supported subset.
pub fn classify(i: &Instruction) -> InstrClass {
    match i.op {
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => InstrClass::Compare,
        Op::Ldr => InstrClass::Load,
        Op::Str => InstrClass::Store,
        Op::Ldm => InstrClass::MultiLoad,
        Op::Stm => InstrClass::MultiStore,
        Op::B if i.cond == Cond::Al => InstrClass::Branch,
        Op::B => InstrClass::CondBranch,
        Op::Bl => InstrClass::BranchLink,
        _ => InstrClass::DataProc,
    }
}

/// The predicate a condition code reads, and the value that makes the
/// condition true. `Al` reads nothing.
pub fn cond_predicate(cond: Cond) -> Option<(Pred, bool)> {
    Some(match cond {
        Cond::Al => return None,
        Cond::Eq => (Pred::Eq, true),
        Cond::Ne => (Pred::Eq, false),
        Cond::Le => (Pred::Le, true),
        Cond::Gt => (Pred::Le, false),
        Cond::Lt => (Pred::Lt, true),
        Cond::Ge => (Pred::Lt, false),
        Cond::Ls => (Pred::Ls, true),
        Cond::Hi => (Pred::Ls, false),
    })
}

fn operand_regs(ops: &[Operand]) -> BTreeSet<Reg> {
    let mut set = BTreeSet::new();
    for op in ops {
        match op {
            Operand::Reg(r) | Operand::Shifted(r, _, _) => {
                set.insert(*r);
            }
            _ => {}
        }
    }
    set
}

fn mem_regs(i: &Instruction) -> BTreeSet<Reg> {
    let mut set = BTreeSet::new();
    if let Some(mem) = &i.mem {
        set.insert(mem.base);
        if let MemOffset::Reg(r, _) = mem.offset {
            set.insert(r);
        }
    }
    set
}

/// Registers an instruction reads from.
pub fn reg_read_set(i: &Instruction) -> BTreeSet<Reg> {
    let mut set = match i.op {
        Op::Mov | Op::Mvn => operand_regs(&i.operands[1..]),
        Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor => {
            operand_regs(&i.operands[1..])
        }
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => operand_regs(&i.operands),
        Op::Ldr => mem_regs(i),
        Op::Str => {
            let mut s = operand_regs(&i.operands[..1]);
            s.extend(mem_regs(i));
            s
        }
        Op::Ldm => operand_regs(&i.operands[..1]),
        Op::Stm => {
            let mut s = operand_regs(&i.operands[..1]);
            s.extend(i.reg_list.iter().copied());
            s
        }
        Op::B | Op::Bl => BTreeSet::new(),
    };
    // The status predicates of a condition are not registers.
    let _ = &mut set;
    set
}

/// Registers an instruction writes to. Status predicates are never
/// included; they live in the machine state only.
pub fn reg_write_set(i: &Instruction) -> BTreeSet<Reg> {
    let mut set = BTreeSet::new();
    match i.op {
        Op::Mov | Op::Mvn | Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor => {
            if let Some(Operand::Reg(rd)) = i.operands.first() {
                set.insert(*rd);
            }
        }
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => {}
        Op::Ldr => {
            if let Some(Operand::Reg(rt)) = i.operands.first() {
                set.insert(*rt);
            }
            if i.mem.is_some_and(|m| m.writeback) {
                set.insert(i.mem.unwrap().base);
            }
        }
        Op::Str => {
            if i.mem.is_some_and(|m| m.writeback) {
                set.insert(i.mem.unwrap().base);
            }
        }
        Op::Ldm => {
            set.extend(i.reg_list.iter().copied());
            if i.list_writeback {
                if let Some(Operand::Reg(base)) = i.operands.first() {
                    set.insert(*base);
                }
            }
        }
        Op::Stm => {
            if i.list_writeback {
                if let Some(Operand::Reg(base)) = i.operands.first() {
                    set.insert(*base);
                }
            }
        }
        Op::B => {
            set.insert(Reg::PC);
        }
        Op::Bl => {
            set.insert(Reg::PC);
            set.insert(Reg::LR);
        }
    }
    set
}

/// True when the instruction redirects control through a dynamic value:
/// a pc-writing move/load, or a multiple load that pops pc.
pub fn writes_pc_dynamic(i: &Instruction) -> bool {
    match i.op {
        Op::B | Op::Bl => false,
        _ => reg_write_set(i).contains(&Reg::PC),
    }
}

/// Static control-flow successors within the listing. Dynamic targets
/// (returns through lr, pops of pc) yield no edge.
pub fn successors(i: &Instruction) -> Vec<Addr> {
    let next = i.address.wrapping_add(4);
    match i.op {
        Op::B => match (i.cond, i.branch_target()) {
            (Cond::Al, Some(t)) => vec![t],
            (_, Some(t)) => vec![next, t],
            (_, None) => vec![next],
        },
        Op::Bl => match i.branch_target() {
            Some(t) => vec![next, t],
            None => vec![next],
        },
        _ if writes_pc_dynamic(i) => {
            if i.cond == Cond::Al {
                vec![]
            } else {
                vec![next]
            }
        }
        _ => vec![next],
    }
}

/// Predicates consumed downstream of the flag-setting instruction `i`:
/// a forward scan over static successors, collecting the predicate of every
/// conditional instruction, stopping where an unconditional flag setter
/// overwrites the result or control leaves the listing.
pub fn flags_needed(p: &Program, i: &Instruction) -> Result<BTreeSet<Pred>, IsaError> {
    let mut out = BTreeSet::new();
    let mut visited: BTreeSet<Addr> = BTreeSet::new();
    let mut work: Vec<Addr> = successors(i);
    let budget = p.instructions.len() * 4 + 16;
    let mut steps = 0usize;
    while let Some(a) = work.pop() {
        steps += 1;
        if steps > budget {
            return Err(IsaError::FlagScanDiverged { address: i.address });
        }
        if !visited.insert(a) {
            continue;
        }
        let Some(instr) = p.instructions.get(&a) else { continue };
        if let Some((pred, _)) = cond_predicate(instr.cond) {
            out.insert(pred);
        }
        // A conditional setter overwrites the flags only when executed, so
        // the scan continues past it along the skipped path.
        if instr.sets_flags && instr.cond == Cond::Al {
            continue;
        }
        work.extend(successors(instr));
    }
    Ok(out)
}

/// A non-fatal finding from the metadata pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Warning {
    AnnotationMismatch {
        address: Addr,
        annotated: BTreeSet<Pred>,
        computed: BTreeSet<Pred>,
    },
    AnnotationOnNonSetter { address: Addr },
}

impl std::fmt::Display for Warning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Warning::AnnotationMismatch { address, annotated, computed } => {
                let fmt_set = |s: &BTreeSet<Pred>| {
                    s.iter().map(|p| p.name()).collect::<Vec<_>>().join(",")
                };
                write!(
                    f,
                    "{address:#x}: annotated predicates {{{}}} differ from computed {{{}}}",
                    fmt_set(annotated),
                    fmt_set(computed)
                )
            }
            Warning::AnnotationOnNonSetter { address } => {
                write!(f, "{address:#x}: annotation on an instruction that sets no flags")
            }
        }
    }
}

/// Precomputed per-program metadata shared by the machine and the search.
#[derive(Debug, Clone)]
pub struct ProgramMeta {
    /// Effective predicate set per flag-setting address (annotated set when
    /// present, computed set otherwise).
    pub flags: BTreeMap<Addr, BTreeSet<Pred>>,
    /// Return-site edges: return instruction -> addresses after `bl` calls
    /// into its function.
    pub return_edges: BTreeMap<Addr, Vec<Addr>>,
}

impl ProgramMeta {
    pub fn build(p: &Program) -> Result<(ProgramMeta, Vec<Warning>), IsaError> {
        let mut warnings = Vec::new();
        let mut flags = BTreeMap::new();
        for instr in p.instructions.values() {
            if !instr.sets_flags {
                if !instr.annotations.is_empty() {
                    warnings.push(Warning::AnnotationOnNonSetter { address: instr.address });
                }
                continue;
            }
            let computed = flags_needed(p, instr)?;
            let effective = if instr.annotations.is_empty() {
                computed
            } else {
                if instr.annotations != computed {
                    warnings.push(Warning::AnnotationMismatch {
                        address: instr.address,
                        annotated: instr.annotations.clone(),
                        computed,
                    });
                }
                instr.annotations.clone()
            };
            flags.insert(instr.address, effective);
        }
        let return_edges = build_return_edges(p);
        Ok((ProgramMeta { flags, return_edges }, warnings))
    }

    pub fn flags_of(&self, addr: Addr) -> &BTreeSet<Pred> {
        static EMPTY: BTreeSet<Pred> = BTreeSet::new();
        self.flags.get(&addr).unwrap_or(&EMPTY)
    }
}

/// Links each return instruction of a `bl`-called function to the
/// instruction after every call site.
fn build_return_edges(p: &Program) -> BTreeMap<Addr, Vec<Addr>> {
    let mut edges: BTreeMap<Addr, Vec<Addr>> = BTreeMap::new();
    for instr in p.instructions.values() {
        if instr.op != Op::Bl {
            continue;
        }
        let Some(target) = instr.branch_target() else { continue };
        let Some(func) = p.function_of(target) else { continue };
        for callee_instr in p.instructions.range(func.start..=func.end) {
            if writes_pc_dynamic(callee_instr.1) {
                edges
                    .entry(*callee_instr.0)
                    .or_default()
                    .push(instr.address.wrapping_add(4));
            }
        }
    }
    edges
}
