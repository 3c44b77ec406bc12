//! Network-of-timed-automata export for cross-checking against an
//! external timed-game solver.
//!
//! The generated model contains the program automaton with the adversary
//! edge for undetermined comparisons, C-like generated functions (one
//! `if (val[pc]==A)` update block per instruction, `SetStatusB`, `cmpU`,
//! `setcmp`, `NDcmp`, static metadata tables), five pipeline-stage
//! templates and a cache template instantiated for the instruction and
//! data caches. The companion query asks for the optimal time to force
//! termination, given a rough upper bound on it.

use std::fmt::Write;

use crate::abstraction::AbstractionMap;
use crate::arch::ArchConfig;
use crate::cache::{CacheConfig, Replacement};
use crate::isa::{
    classify, reg_read_set, reg_write_set, Addr, Cond, Instruction, InstrClass, MemOffset, Op,
    Operand, Pred, Program, ProgramMeta, Reg, ShiftOp, Stage,
};
use crate::machine::MachineConfig;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExportError {
    #[error("{address:#x}: cannot express `{reason}` in the generated dialect")]
    Unsupported { address: Addr, reason: String },
}

fn unsupported(address: Addr, reason: impl Into<String>) -> ExportError {
    ExportError::Unsupported { address, reason: reason.into() }
}

/// The two emitted documents.
#[derive(Debug, Clone)]
pub struct ExportOutput {
    pub model_xml: String,
    pub query: String,
}

/// Emits the model and query for `p`. `wcet_hint` seeds the query's upper
/// bound (doubled, since the solver only needs a rough bound) and
/// `stack_words` sizes the model's stack array, normally from a prior
/// analysis report.
pub fn export_model(
    p: &Program,
    meta: &ProgramMeta,
    arch: &ArchConfig,
    machine: &MachineConfig,
    abstraction: Option<&AbstractionMap>,
    wcet_hint: u64,
    stack_words: u32,
) -> Result<ExportOutput, ExportError> {
    let decls = generate_declarations(p, meta, arch, machine, abstraction, stack_words)?;
    let model_xml = build_xml(&decls);
    let bound = (2 * wcet_hint).max(1);
    let query = format!("control({bound},0) : A [ true U WriteBackStage.DONE ]\n");
    Ok(ExportOutput { model_xml, query })
}

const REG_NAMES: [&str; 16] = [
    "r0", "r1", "r2", "r3", "r4", "r5", "r6", "r7", "r8", "r9", "sl", "fp", "ip", "sp", "lr",
    "pc",
];

fn reg(r: Reg) -> &'static str {
    REG_NAMES[r.index()]
}

/// Reading pc as a source operand always yields the instruction address
/// plus 8; the generator folds it to the constant.
fn reg_value_expr(i: &Instruction, r: Reg) -> String {
    if r == Reg::PC {
        format!("({})", i.address.wrapping_add(8))
    } else {
        format!("val[{}]", reg(r))
    }
}

/// Value expression of an operand in the generated dialect.
fn operand_expr(i: &Instruction, op: &Operand) -> Result<String, ExportError> {
    Ok(match op {
        Operand::Reg(r) => reg_value_expr(i, *r),
        Operand::Imm(v) => format!("({v})"),
        Operand::Shifted(r, ShiftOp::Lsl, n) => format!("({}<<{n})", reg_value_expr(i, *r)),
        Operand::Shifted(r, ShiftOp::Asr, n) => format!("({}>>{n})", reg_value_expr(i, *r)),
        Operand::Shifted(_, ShiftOp::Lsr, _) => {
            return Err(unsupported(i.address, "logical right shift"))
        }
        Operand::Target(t) => format!("({t})"),
    })
}

/// Registers whose unknownness poisons an expression. pc is always known.
fn expr_regs(ops: &[Operand]) -> Vec<Reg> {
    let mut v: Vec<Reg> = ops
        .iter()
        .filter_map(|o| match o {
            Operand::Reg(r) | Operand::Shifted(r, _, _) if *r != Reg::PC => Some(*r),
            _ => None,
        })
        .collect();
    v.sort();
    v.dedup();
    v
}

fn unknown_guard(regs: &[Reg]) -> String {
    regs.iter()
        .map(|r| format!("val[{}]==UNKNOWN", reg(*r)))
        .collect::<Vec<_>>()
        .join("||")
}

/// The condition helper a suffix reads, e.g. `le()` for Cond::Le.
fn cond_fn(c: Cond) -> &'static str {
    match c {
        Cond::Al => "",
        Cond::Eq => "eq()",
        Cond::Ne => "ne()",
        Cond::Le => "le()",
        Cond::Lt => "lt()",
        Cond::Ge => "ge()",
        Cond::Gt => "gt()",
        Cond::Ls => "ls()",
        Cond::Hi => "hi()",
    }
}

/// Flag-producing expression of a setter: the comparison or result value
/// whose sign encodes the predicates.
fn flag_expr(i: &Instruction) -> Result<String, ExportError> {
    let srcs: Vec<String> = match i.op {
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => i
            .operands
            .iter()
            .map(|o| operand_expr(i, o))
            .collect::<Result<_, _>>()?,
        _ => i.operands[1..]
            .iter()
            .map(|o| operand_expr(i, o))
            .collect::<Result<_, _>>()?,
    };
    Ok(match i.op {
        Op::Cmp | Op::Sub => format!("({}-({}))", srcs[0], srcs[1]),
        Op::Rsb => format!("({}-({}))", srcs[1], srcs[0]),
        Op::Cmn | Op::Add => format!("(({})+({}))", srcs[0], srcs[1]),
        Op::Tst | Op::And => format!("({}&({}))", srcs[0], srcs[1]),
        Op::Teq | Op::Eor => format!("({}^({}))", srcs[0], srcs[1]),
        Op::Orr => format!("({}|({}))", srcs[0], srcs[1]),
        Op::Mov => format!("({})", srcs[0]),
        Op::Mvn => format!("(~({}))", srcs[0]),
        _ => return Err(unsupported(i.address, "flags of a memory instruction")),
    })
}

/// Predicate assignments of a flag setter, in the target dialect's
/// `if (EXPR<=0) cmple=1 ; else cmple=0;` shape. Computed unconditionally;
/// when an operand is unknown the adversary edge overrides them right
/// after the update step.
fn flag_assignments(i: &Instruction, meta: &ProgramMeta, out: &mut String) -> Result<(), ExportError> {
    let needed = meta.flags_of(i.address);
    if needed.is_empty() {
        return Ok(());
    }
    let expr = flag_expr(i)?;
    let _ = writeln!(out, "        // Should set the status predicates");
    for p in needed {
        let (var, rel) = match p {
            Pred::Eq => ("cmpeq", "=="),
            Pred::Lt => ("cmplt", "<"),
            Pred::Le => ("cmple", "<="),
            Pred::Ls => return Err(unsupported(i.address, "unsigned predicate ls")),
        };
        let _ = writeln!(out, "        if ({expr}{rel}0) {var}=1 ; else {var}=0;");
    }
    Ok(())
}

/// Whether address arithmetic treats this base register as a tracked
/// stack access.
fn stack_base(r: Reg) -> bool {
    r == Reg::SP || r == Reg::FP
}

struct MemAccess {
    /// Address expression.
    addr: String,
    /// Registers that must be known for the address.
    guard_regs: Vec<Reg>,
    stack: bool,
    /// Statically folded address, for pc-relative loads.
    folded: Option<u32>,
}

fn mem_access(i: &Instruction) -> Result<MemAccess, ExportError> {
    let mem = i.mem.expect("load/store address expression");
    if mem.base == Reg::PC {
        let off = match mem.offset {
            MemOffset::None => 0,
            MemOffset::Imm(v) => v,
            MemOffset::Reg(..) => {
                return Err(unsupported(i.address, "pc-relative register offset"))
            }
        };
        let addr = i.address.wrapping_add(8).wrapping_add(off as u32);
        return Ok(MemAccess {
            addr: format!("({addr})"),
            guard_regs: vec![],
            stack: false,
            folded: Some(addr),
        });
    }
    let base = format!("val[{}]", reg(mem.base));
    let (addr, mut guard_regs) = match mem.offset {
        MemOffset::None => (base, vec![]),
        MemOffset::Imm(v) if v >= 0 => (format!("({base}+{v})"), vec![]),
        MemOffset::Imm(v) => (format!("({base}-{})", -(v as i64)), vec![]),
        MemOffset::Reg(r, None) => (format!("({base}+val[{}])", reg(r)), vec![r]),
        MemOffset::Reg(r, Some((ShiftOp::Lsl, n))) => {
            (format!("({base}+(val[{}]<<{n}))", reg(r)), vec![r])
        }
        MemOffset::Reg(r, Some((ShiftOp::Asr, n))) => {
            (format!("({base}+(val[{}]>>{n}))", reg(r)), vec![r])
        }
        MemOffset::Reg(_, Some((ShiftOp::Lsr, _))) => {
            return Err(unsupported(i.address, "logical right shift"))
        }
    };
    // sp- and fp-based addresses are known by construction; anything else
    // must be guarded against unknown registers.
    if !stack_base(mem.base) {
        guard_regs.insert(0, mem.base);
    } else {
        guard_regs.clear();
    }
    Ok(MemAccess { addr, guard_regs, stack: stack_base(mem.base), folded: None })
}

/// The effect lines plus the SET call of a scheduled instruction.
fn scheduled_effect(
    p: &Program,
    meta: &ProgramMeta,
    i: &Instruction,
    sched: &str,
) -> Result<String, ExportError> {
    let at = i.address;
    let mut eff = String::new();
    // The address is latched before the effect runs: writebacks and push
    // sequences move the base register underneath the SET call otherwise.
    let guard = |eff: &str, regs: &[Reg], set_mem: &str| -> String {
        if regs.is_empty() {
            format!("    memadr={set_mem};\n{eff}    SET({at},memadr,{sched});\n")
        } else {
            format!(
                "    if ({g}) {{ badAddr=1; SET({at},-1,{sched}); }} else {{\n    memadr={set_mem};\n{eff}    SET({at},memadr,{sched}); }}\n",
                g = unknown_guard(regs)
            )
        }
    };

    match i.op {
        Op::Mov | Op::Mvn | Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor => {
            let Some(Operand::Reg(dest)) = i.operands.first().copied() else { unreachable!() };
            let srcs: Vec<String> = i.operands[1..]
                .iter()
                .map(|o| operand_expr(i, o))
                .collect::<Result<_, _>>()?;
            let value = match i.op {
                Op::Mov => format!("({})", srcs[0]),
                Op::Mvn => format!("(~({}))", srcs[0]),
                Op::Add => format!("({}+({}))", srcs[0], srcs[1]),
                Op::Sub => format!("({}-({}))", srcs[0], srcs[1]),
                Op::Rsb => format!("({}-({}))", srcs[1], srcs[0]),
                Op::And => format!("({}&({}))", srcs[0], srcs[1]),
                Op::Orr => format!("({}|({}))", srcs[0], srcs[1]),
                Op::Eor => format!("({}^({}))", srcs[0], srcs[1]),
                _ => unreachable!(),
            };
            let src_regs = expr_regs(&i.operands[1..]);
            let _ = writeln!(eff, "    if (!is_abstracted(val[pc])) {{");
            let target = if dest == Reg::PC { "nextpc" } else { reg(dest) };
            let assign = if dest == Reg::PC {
                format!("nextpc={value};")
            } else {
                format!("val[{target}]={value};")
            };
            if src_regs.is_empty() {
                let _ = writeln!(eff, "        {assign}");
            } else {
                let unknown_target = if dest == Reg::PC {
                    "nextpc=UNKNOWN;".to_string()
                } else {
                    format!("val[{target}]=UNKNOWN;")
                };
                let _ = writeln!(eff, "        if ({}) {{", unknown_guard(&src_regs));
                let _ = writeln!(eff, "            {unknown_target}");
                let _ = writeln!(eff, "        }}");
                let _ = writeln!(eff, "        else {{");
                let _ = writeln!(eff, "            {assign}");
                let _ = writeln!(eff, "        }}");
            }
            if i.sets_flags {
                flag_assignments(i, meta, &mut eff)?;
            }
            let _ = writeln!(eff, "    }}");
            let _ = writeln!(eff, "    SET({at},-1,{sched});");
            Ok(eff)
        }
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => {
            let _ = writeln!(eff, "    if (!is_abstracted(val[pc])) {{");
            flag_assignments(i, meta, &mut eff)?;
            let _ = writeln!(eff, "    }}");
            let _ = writeln!(eff, "    SET({at},-1,{sched});");
            Ok(eff)
        }
        Op::Ldr => {
            let Some(Operand::Reg(rt)) = i.operands.first().copied() else { unreachable!() };
            let access = mem_access(i)?;
            let assign = if let Some(folded) = access.folded {
                // Constant address into the program image: the loaded word
                // is known at generation time.
                match p.image_word(folded) {
                    Some(w) => format!("val[{}]=({});", reg(rt), w as i32),
                    None => format!("val[{}]=UNKNOWN;", reg(rt)),
                }
            } else if access.stack {
                if rt == Reg::PC {
                    format!("nextpc=stackread({});", access.addr)
                } else {
                    format!("val[{}]=stackread({});", reg(rt), access.addr)
                }
            } else if rt == Reg::PC {
                "nextpc=UNKNOWN;".to_string()
            } else {
                format!("val[{}]=UNKNOWN;", reg(rt))
            };
            let mut body = String::new();
            let _ = writeln!(body, "    if (!is_abstracted(val[pc])) {{");
            let _ = writeln!(body, "        {assign}");
            if i.mem.unwrap().writeback {
                let _ = writeln!(body, "        val[{}]={};", reg(i.mem.unwrap().base), access.addr);
            }
            let _ = writeln!(body, "    }}");
            let _ = write!(eff, "{}", guard(&body, &access.guard_regs, &access.addr));
            Ok(eff)
        }
        Op::Str => {
            let Some(Operand::Reg(rt)) = i.operands.first().copied() else { unreachable!() };
            let access = mem_access(i)?;
            let mut body = String::new();
            if access.stack || i.mem.unwrap().writeback {
                let _ = writeln!(body, "    if (!is_abstracted(val[pc])) {{");
                if access.stack {
                    let _ = writeln!(
                        body,
                        "        stackwrite({},{});",
                        access.addr,
                        reg_value_expr(i, rt)
                    );
                }
                if i.mem.unwrap().writeback {
                    let _ = writeln!(body, "        val[{}]={};", reg(i.mem.unwrap().base), access.addr);
                }
                let _ = writeln!(body, "    }}");
            }
            // A store to opaque memory has no register effect.
            let _ = write!(eff, "{}", guard(&body, &access.guard_regs, &access.addr));
            Ok(eff)
        }
        Op::Ldm | Op::Stm => multi_effect(i, sched),
        Op::B => {
            let t = i.branch_target().unwrap();
            let _ = writeln!(eff, "    nextpc={t}; // to {t:#x}");
            let _ = writeln!(eff, "    SET({at},-1,{sched}) ;");
            Ok(eff)
        }
        Op::Bl => {
            let t = i.branch_target().unwrap();
            let _ = writeln!(eff, "    nextpc={t}; // to {t:#x}");
            let _ = writeln!(eff, "    val[lr]={};", at + 4);
            let _ = writeln!(eff, "    SET({at},-1,{sched}) ;");
            Ok(eff)
        }
    }
}

fn multi_effect(i: &Instruction, sched: &str) -> Result<String, ExportError> {
    let at = i.address;
    let Some(Operand::Reg(base)) = i.operands.first().copied() else { unreachable!() };
    if !stack_base(base) {
        return Err(unsupported(at, "multiple transfer outside the tracked stack"));
    }
    let n = i.reg_list.len() as i64;
    let b = reg(base);
    let first_addr = match i.addr_mode {
        crate::isa::AddrMode::Ia => format!("(val[{b}])"),
        crate::isa::AddrMode::Db => format!("(val[{b}]-{})", 4 * n),
    };
    let mut eff = String::new();
    let _ = writeln!(eff, "    memadr={first_addr};");
    let _ = writeln!(eff, "    if (!is_abstracted(val[pc])) {{");
    match i.op {
        Op::Stm => {
            if i.list_writeback && i.addr_mode == crate::isa::AddrMode::Db {
                // Classic descending push: highest register stored first.
                for r in i.reg_list.iter().rev() {
                    let _ = writeln!(eff, "        push({});", reg_value_expr(i, *r));
                }
            } else {
                for (k, r) in i.reg_list.iter().enumerate() {
                    let _ = writeln!(
                        eff,
                        "        stackwrite(memadr+{},{});",
                        4 * k,
                        reg_value_expr(i, *r)
                    );
                }
                if i.list_writeback {
                    let delta = 4 * n;
                    let sign = if i.addr_mode == crate::isa::AddrMode::Ia { "+" } else { "-" };
                    let _ = writeln!(eff, "        val[{b}]=val[{b}]{sign}{delta};");
                }
            }
        }
        Op::Ldm => {
            let mut deferred_base: Option<String> = None;
            let mut loads = String::new();
            for (k, r) in i.reg_list.iter().enumerate() {
                let addr = format!("memadr+{}", 4 * k);
                if *r == Reg::PC {
                    let _ = writeln!(loads, "        nextpc=stackread({addr});");
                } else if *r == base {
                    let _ = writeln!(loads, "        next{b}=stackread({addr});");
                    deferred_base = Some(format!("        val[{b}]=next{b};"));
                } else {
                    let _ = writeln!(loads, "        val[{}]=stackread({addr});", reg(*r));
                }
            }
            let _ = write!(eff, "{loads}");
            if i.list_writeback && deferred_base.is_none() {
                let delta = 4 * n;
                let sign = if i.addr_mode == crate::isa::AddrMode::Ia { "+" } else { "-" };
                let _ = writeln!(eff, "        val[{b}]=val[{b}]{sign}{delta};");
            }
            if let Some(d) = deferred_base {
                let _ = writeln!(eff, "{d}");
            }
        }
        _ => unreachable!(),
    }
    let _ = writeln!(eff, "    }}");
    let _ = writeln!(eff, "    SET({at},memadr,{sched});");
    Ok(eff)
}

/// One `if (val[pc]==A)` block per instruction: compute nextpc, apply the
/// (possibly conditional) effect, SET the fetch-stage payload.
pub fn update_block(
    p: &Program,
    meta: &ProgramMeta,
    i: &Instruction,
) -> Result<String, ExportError> {
    let at = i.address;
    let mn = i.mnemonic();
    let mut out = String::new();
    if classify(i) == InstrClass::CondBranch {
        let t = i.branch_target().unwrap();
        let c = cond_fn(i.cond);
        let _ = writeln!(out, "if (val[pc]=={at} && (!{c})) {{ // {mn} {t:x} at {at:#x}");
        let _ = writeln!(out, "    nextpc=val[pc]+4;");
        let _ = writeln!(out, "    SET({at},-1,0) ; // instruction scheduled, no mem access, no branching");
        let _ = writeln!(out, "}} // end {mn} at {at:#x} [cond false]");
        let _ = writeln!(out, "if (val[pc]=={at} && {c}) {{ // {mn} {t:x} at {at:#x}");
        let _ = writeln!(out, "    nextpc={t}; // to {t:#x}");
        let _ = writeln!(out, "    SET({at},-1,1) ; // instruction scheduled, no mem access, branching");
        let _ = writeln!(out, "}} // end {mn} at {at:#x} [cond true]");
        return Ok(out);
    }

    let _ = writeln!(out, "if (val[pc]=={at}) {{ // {} at {at:#x}", describe(i));
    let _ = writeln!(out, "    nextpc=val[pc]+4;");
    if i.cond == Cond::Al {
        let _ = write!(out, "{}", scheduled_effect(p, meta, i, "1")?);
    } else {
        let effect = scheduled_effect(p, meta, i, "1")?;
        let indented: String = effect
            .lines()
            .map(|l| format!("    {l}\n"))
            .collect();
        let _ = writeln!(out, "    if ({}) {{", cond_fn(i.cond));
        let _ = write!(out, "{indented}");
        let _ = writeln!(out, "    }}");
        let _ = writeln!(out, "    else SET({at},-1,0) ; // instruction not scheduled, no mem access");
    }
    let _ = writeln!(out, "}} // end {mn} at {at:#x}");
    Ok(out)
}

fn describe(i: &Instruction) -> String {
    let ops: Vec<String> = i.operands.iter().map(|o| o.to_string()).collect();
    format!("Instruction {} {}", i.mnemonic(), ops.join(", "))
}

/// Whole generated declaration section: constants, state, helpers and the
/// program-derived functions.
pub fn generate_declarations(
    p: &Program,
    meta: &ProgramMeta,
    arch: &ArchConfig,
    machine: &MachineConfig,
    abstraction: Option<&AbstractionMap>,
    stack_words: u32,
) -> Result<String, ExportError> {
    let mut d = String::new();
    // The stack array is sized from a prior analysis report's high-water
    // mark (plus headroom), keeping the model state compact.
    let stack_words = (stack_words + 4).max(16).min(machine.stack_size / 4 + 4);
    let stack_low = machine.stack_base as i64 - 4 * stack_words as i64;

    let _ = writeln!(d, "// Generated model of the program and architecture.");
    let _ = writeln!(d, "const int UNKNOWN = -1073741824;");
    let _ = writeln!(d, "const int INIT_LR = {};", machine.init_lr as i32);
    let _ = writeln!(d, "const int ENTRY = {};", p.entry);
    let _ = writeln!(d, "const int EMPTY = -1;");
    let _ = writeln!(d, "const int STACK_BASE = {};", machine.stack_base as i32);
    let _ = writeln!(d, "const int STACK_LOW = {stack_low};");
    let _ = writeln!(d, "const int STACK_WORDS = {stack_words};");
    for (idx, name) in REG_NAMES.iter().enumerate() {
        let _ = writeln!(d, "const int {name} = {idx};");
    }
    let _ = writeln!(d, "const int G1=0, G2LDR=1, G2STR=2, G2LDM=3, G2STM=4, G4=5, G4c=6;");
    let _ = writeln!(d, "const int INSTR_CACHE = 0;");
    let _ = writeln!(d, "const int DATA_CACHE = 1;");
    let _ = writeln!(d, "const int FETCH_STAGE = 0;");
    emit_cache_consts(&mut d, "IC", &arch.icache);
    emit_cache_consts(&mut d, "DC", &arch.dcache);
    let _ = writeln!(d);
    let _ = writeln!(d, "int val[16];");
    let _ = writeln!(d, "bool cmpeq, cmplt, cmple, cmpls;");
    let _ = writeln!(d, "int stackMem[STACK_WORDS];");
    let _ = writeln!(d, "int nextfp, nextsp;");
    let _ = writeln!(d, "bool badAddr = 0;");
    let _ = writeln!(d, "bool progDone = 0;");
    let _ = writeln!(d, "int pPC[5] = {{EMPTY, EMPTY, EMPTY, EMPTY, EMPTY}};");
    let _ = writeln!(d, "bool Todo[5];");
    let _ = writeln!(d, "int dataAdr[5] = {{-1, -1, -1, -1, -1}};");
    let _ = writeln!(d, "chan fetch, decode, execute, memory, writeback;");
    let _ = writeln!(d, "chan CacheReadStart[2], CacheReadDone[2];");
    let _ = writeln!(d, "int cacheReq[2] = {{-1, -1}};");
    let _ = writeln!(d, "bool cacheWrite[2];");
    let _ = writeln!(d);

    // Condition helpers over the tracked predicates.
    let _ = writeln!(d, "bool eq() {{ return cmpeq; }}");
    let _ = writeln!(d, "bool ne() {{ return !cmpeq; }}");
    let _ = writeln!(d, "bool lt() {{ return cmplt; }}");
    let _ = writeln!(d, "bool ge() {{ return !cmplt; }}");
    let _ = writeln!(d, "bool le() {{ return cmple; }}");
    let _ = writeln!(d, "bool gt() {{ return !cmple; }}");
    let _ = writeln!(d, "bool ls() {{ return cmpls; }}");
    let _ = writeln!(d, "bool hi() {{ return !cmpls; }}");
    let _ = writeln!(d);
    let _ = writeln!(d, "void stackwrite(int a, int v) {{ stackMem[(a-STACK_LOW)/4]=v; }}");
    let _ = writeln!(d, "int stackread(int a) {{ return stackMem[(a-STACK_LOW)/4]; }}");
    let _ = writeln!(
        d,
        "// push first decreases val[sp] and then stores at the new top\nvoid push(int v) {{ val[sp]=val[sp]-4; stackwrite(val[sp],v); }}"
    );
    let _ = writeln!(
        d,
        "void SET(int label, int memaddr, bool sched) {{ pPC[FETCH_STAGE]=label; dataAdr[FETCH_STAGE]=memaddr; Todo[FETCH_STAGE]=sched; }}"
    );
    let _ = writeln!(
        d,
        "void copy(int from, int to) {{ pPC[to]=pPC[from]; Todo[to]=Todo[from]; dataAdr[to]=dataAdr[from]; pPC[from]=EMPTY; }}"
    );
    let _ = writeln!(d, "void init_val() {{ int k; for (k=0;k<16;k++) val[k]=UNKNOWN; val[pc]=ENTRY; val[sp]=STACK_BASE; val[lr]=INIT_LR; }}");
    let _ = writeln!(d);

    emit_is_abstracted(&mut d, abstraction);
    emit_set_status(&mut d, p);
    emit_cmp_u(&mut d, p);
    emit_setcmp(&mut d, p, meta)?;
    let _ = writeln!(d, "bool NDcmp(int i) {{");
    let _ = writeln!(d, "\treturn SetStatusB(i) && cmpU(i) ;");
    let _ = writeln!(d, "}}");
    let _ = writeln!(d);
    emit_static_tables(&mut d, p, arch);
    emit_update(&mut d, p, meta)?;
    Ok(d)
}

fn emit_cache_consts(d: &mut String, prefix: &str, cfg: &CacheConfig) {
    let policy = match cfg.replacement {
        Replacement::Fifo => 0,
        Replacement::Lru => 1,
        Replacement::AlwaysMiss => 2,
    };
    let _ = writeln!(d, "const int {prefix}_SETS = {};", cfg.sets());
    let _ = writeln!(d, "const int {prefix}_WAYS = {};", cfg.ways);
    let _ = writeln!(d, "const int {prefix}_LINE = {};", cfg.line_bytes);
    let _ = writeln!(d, "const int {prefix}_PMT = {};", cfg.pmt());
    let _ = writeln!(d, "const int {prefix}_SPEED = {};", cfg.hit_latency);
    let _ = writeln!(d, "const int {prefix}_TRANS = {};", cfg.mem_transaction_cycles);
    let _ = writeln!(d, "const int {prefix}_POLICY = {policy}; // 0=FIFO 1=LRU 2=ALWAYS_MISS");
}

fn emit_is_abstracted(d: &mut String, abstraction: Option<&AbstractionMap>) {
    let _ = writeln!(d, "/* effect of an instruction is null if abstracted */");
    let _ = writeln!(d, "bool is_abstracted(int i) {{");
    match abstraction {
        Some(map) if !map.is_empty() => {
            for a in map.addrs() {
                let _ = writeln!(d, "    if (i=={a}) return true; // [{a:#x}]");
            }
        }
        _ => {}
    }
    let _ = writeln!(d, "    return false;");
    let _ = writeln!(d, "}}");
    let _ = writeln!(d);
}

fn emit_set_status(d: &mut String, p: &Program) {
    let _ = writeln!(d, "/* function to determine whether status bits should be set */");
    let _ = writeln!(d, "bool SetStatusB(int i) {{");
    for f in &p.functions {
        let _ = writeln!(d, "// comparisons for function {}", f.name);
        for instr in p.instructions.range(f.start..=f.end).map(|(_, i)| i) {
            if instr.sets_flags {
                let _ = writeln!(
                    d,
                    "if (i=={0}) {{ // setting status bits for instruction {1} at {0} [{0:#x}]",
                    instr.address,
                    instr.mnemonic()
                );
                let _ = writeln!(d, "    return true ;");
                let _ = writeln!(d, "}}");
            }
        }
    }
    let _ = writeln!(d, "return false ; ");
    let _ = writeln!(d, "}}");
    let _ = writeln!(d);
}

fn emit_cmp_u(d: &mut String, p: &Program) {
    let _ = writeln!(d, "/*  comparisons for instructions used in the program */");
    let _ = writeln!(d, "bool cmpU(int i) {{ ");
    for f in &p.functions {
        let _ = writeln!(
            d,
            "/* comparisons for function {} starting {} ending {} */",
            f.name, f.start, f.end
        );
        for instr in p.instructions.range(f.start..=f.end).map(|(_, i)| i) {
            if !instr.sets_flags {
                continue;
            }
            let regs = expr_regs(if instr.op.is_compare() {
                &instr.operands
            } else {
                &instr.operands[1..]
            });
            let body = if regs.is_empty() { "false".to_string() } else { unknown_guard(&regs) };
            let _ = writeln!(d, "if (i=={0}) return {1}; // [{0:#x}]", instr.address, body);
        }
    }
    let _ = writeln!(d, "return false; // none if not found");
    let _ = writeln!(d, "}} // end comp of instruction ");
    let _ = writeln!(d);
}

/// Adversary payload decoding: n1 carries the `le` side, n1 && n2 refines
/// it to equality, so eq implies le and the encoded outcomes stay
/// consistent.
fn emit_setcmp(d: &mut String, p: &Program, meta: &ProgramMeta) -> Result<(), ExportError> {
    let _ = writeln!(d, "/*  setcmp for instructions used in the program */");
    let _ = writeln!(d, "void setcmp(int  i,bool n1,bool n2) {{ ");
    for f in &p.functions {
        let _ = writeln!(
            d,
            "/* setcmp for function {} starting {} ending {} */",
            f.name, f.start, f.end
        );
        for instr in p.instructions.range(f.start..=f.end).map(|(_, i)| i) {
            if !instr.sets_flags {
                continue;
            }
            let needed = meta.flags_of(instr.address);
            if needed.is_empty() {
                continue;
            }
            let _ = writeln!(
                d,
                "    if (i=={0}) {{ // instruction  {1} at {0} [{0:#x}]",
                instr.address,
                instr.mnemonic()
            );
            for pred in needed {
                let line = match pred {
                    Pred::Le => "cmple=n1;",
                    Pred::Eq => "cmpeq=n1&&n2;",
                    Pred::Lt => "cmplt=n1&&(!n2);",
                    Pred::Ls => {
                        return Err(unsupported(instr.address, "unsigned predicate ls"))
                    }
                };
                let _ = writeln!(d, "        {line}");
            }
            let _ = writeln!(d, "    }}");
        }
    }
    let _ = writeln!(d, "}} // end setcmp of instruction ");
    let _ = writeln!(d);
    Ok(())
}

fn emit_static_tables(d: &mut String, p: &Program, arch: &ArchConfig) {
    let _ = writeln!(d, "/* static instruction metadata */");
    let _ = writeln!(d, "int type_of(int i) {{");
    for instr in p.instructions.values() {
        let ty = match classify(instr) {
            InstrClass::Load => "G2LDR",
            InstrClass::Store => "G2STR",
            InstrClass::MultiLoad => "G2LDM",
            InstrClass::MultiStore => "G2STM",
            InstrClass::Branch | InstrClass::BranchLink => "G4",
            InstrClass::CondBranch => "G4c",
            _ => "G1",
        };
        let _ = writeln!(d, "    if (i=={}) return {ty};", instr.address);
    }
    let _ = writeln!(d, "    return G1;");
    let _ = writeln!(d, "}}");

    let table = &arch.durations;
    let _ = writeln!(d, "int dur(int i) {{ // execute-stage duration");
    for instr in p.instructions.values() {
        let dur = crate::isa::stage_duration(instr, Stage::Execute, table);
        let _ = writeln!(d, "    if (i=={}) return {dur};", instr.address);
    }
    let _ = writeln!(d, "    return 1;");
    let _ = writeln!(d, "}}");

    let _ = writeln!(d, "int tcount(int i) {{ // memory-stage transfer count");
    for instr in p.instructions.values() {
        let n = match classify(instr) {
            InstrClass::Load | InstrClass::Store => 1,
            InstrClass::MultiLoad | InstrClass::MultiStore => instr.reg_list.len(),
            _ => 0,
        };
        let _ = writeln!(d, "    if (i=={}) return {n};", instr.address);
    }
    let _ = writeln!(d, "    return 0;");
    let _ = writeln!(d, "}}");

    let mask = |set: std::collections::BTreeSet<Reg>| -> u16 {
        set.iter().fold(0, |m, r| m | 1 << r.index())
    };
    let _ = writeln!(d, "int regR_mask(int i) {{");
    for instr in p.instructions.values() {
        let _ = writeln!(d, "    if (i=={}) return {};", instr.address, mask(reg_read_set(instr)));
    }
    let _ = writeln!(d, "    return 0;");
    let _ = writeln!(d, "}}");
    let _ = writeln!(d, "int regW_mask(int i) {{");
    for instr in p.instructions.values() {
        let _ = writeln!(d, "    if (i=={}) return {};", instr.address, mask(reg_write_set(instr)));
    }
    let _ = writeln!(d, "    return 0;");
    let _ = writeln!(d, "}}");

    let _ = writeln!(d, "/* load-use and multiple-transfer stalls at the execute stage */");
    let _ = writeln!(d, "bool exeStall() {{");
    let _ = writeln!(d, "    if (pPC[3]==EMPTY || !Todo[3]) return false;");
    let _ = writeln!(d, "    if (type_of(pPC[3])==G2LDM || type_of(pPC[3])==G2STM) return true;");
    let _ = writeln!(
        d,
        "    if (type_of(pPC[3])==G2LDR && pPC[2]!=EMPTY && Todo[2] && (regW_mask(pPC[3]) & regR_mask(pPC[2])) != 0) return true;"
    );
    let _ = writeln!(d, "    return false;");
    let _ = writeln!(d, "}}");
    let _ = writeln!(d);
}

fn emit_update(d: &mut String, p: &Program, meta: &ProgramMeta) -> Result<(), ExportError> {
    let _ = writeln!(d, "void update() {{ // update function ");
    let _ = writeln!(d, "int nextpc;");
    let _ = writeln!(d, "int memadr;");
    for f in &p.functions {
        let _ = writeln!(d, "/*\n updates for function {} starting {} ending {}\n*/", f.name, f.start, f.end);
        for instr in p.instructions.range(f.start..=f.end).map(|(_, i)| i) {
            let block = update_block(p, meta, instr)?;
            let _ = write!(d, "{block}");
        }
        let _ = writeln!(d, "/*\n end of updates for function {}\n*/", f.name);
    }
    let _ = writeln!(d, "val[pc]=nextpc;");
    let _ = writeln!(d, "}} // end update ");
    Ok(())
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Template {
    name: String,
    parameter: Option<String>,
    declaration: String,
    locations: Vec<(String, String, Option<String>)>, // id, name, invariant
    init: String,
    transitions: Vec<Transition>,
}

#[derive(Default)]
struct Transition {
    source: String,
    target: String,
    controllable: bool,
    select: Option<String>,
    guard: Option<String>,
    sync: Option<String>,
    assign: Option<String>,
}

impl Template {
    fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "  <template>");
        let _ = writeln!(out, "    <name>{}</name>", self.name);
        if let Some(par) = &self.parameter {
            let _ = writeln!(out, "    <parameter>{}</parameter>", xml_escape(par));
        }
        if !self.declaration.is_empty() {
            let _ = writeln!(out, "    <declaration>{}</declaration>", xml_escape(&self.declaration));
        }
        for (id, name, invariant) in &self.locations {
            let _ = writeln!(out, "    <location id=\"{id}\">");
            let _ = writeln!(out, "      <name>{name}</name>");
            if let Some(inv) = invariant {
                let _ = writeln!(out, "      <label kind=\"invariant\">{}</label>", xml_escape(inv));
            }
            let _ = writeln!(out, "    </location>");
        }
        let _ = writeln!(out, "    <init ref=\"{}\"/>", self.init);
        for t in &self.transitions {
            let ctrl = if t.controllable { "" } else { " controllable=\"false\"" };
            let _ = writeln!(out, "    <transition{ctrl}>");
            let _ = writeln!(out, "      <source ref=\"{}\"/>", t.source);
            let _ = writeln!(out, "      <target ref=\"{}\"/>", t.target);
            if let Some(s) = &t.select {
                let _ = writeln!(out, "      <label kind=\"select\">{}</label>", xml_escape(s));
            }
            if let Some(g) = &t.guard {
                let _ = writeln!(out, "      <label kind=\"guard\">{}</label>", xml_escape(g));
            }
            if let Some(s) = &t.sync {
                let _ = writeln!(out, "      <label kind=\"synchronisation\">{}</label>", xml_escape(s));
            }
            if let Some(a) = &t.assign {
                let _ = writeln!(out, "      <label kind=\"assignment\">{}</label>", xml_escape(a));
            }
            let _ = writeln!(out, "    </transition>");
        }
        let _ = writeln!(out, "  </template>");
        out
    }
}

fn tr(
    source: &str,
    target: &str,
    guard: Option<&str>,
    sync: Option<&str>,
    assign: Option<&str>,
) -> Transition {
    Transition {
        source: source.into(),
        target: target.into(),
        controllable: true,
        select: None,
        guard: guard.map(Into::into),
        sync: sync.map(Into::into),
        assign: assign.map(Into::into),
    }
}

fn build_xml(declarations: &str) -> String {
    let mut xml = String::new();
    let _ = writeln!(xml, "<?xml version=\"1.0\" encoding=\"utf-8\"?>");
    let _ = writeln!(
        xml,
        "<!DOCTYPE nta PUBLIC '-//Uppaal Team//DTD Flat System 1.1//EN' 'http://www.it.uu.se/research/group/darts/uppaal/flat-1_2.dtd'>"
    );
    let _ = writeln!(xml, "<nta>");
    let _ = writeln!(xml, "  <declaration>{}</declaration>", xml_escape(declarations));

    for t in [
        prog_template(),
        fetch_template(),
        plain_stage_template("DecodeStage", "decode", "execute", 1),
        execute_template(),
        memory_template(),
        writeback_template(),
        cache_template(),
    ] {
        let _ = write!(xml, "{}", t.render());
    }

    let _ = writeln!(xml, "  <system>");
    let _ = writeln!(
        xml,
        "{}",
        xml_escape(
            "ICache = Cache(INSTR_CACHE);\nDCache = Cache(DATA_CACHE);\nsystem Prog, FetchStage, DecodeStage, ExecuteStage, MemoryStage, WriteBackStage, ICache, DCache;"
        )
    );
    let _ = writeln!(xml, "  </system>");
    let _ = writeln!(xml, "</nta>");
    xml
}

/// The program automaton: feed the current instruction to the fetch stage
/// and compute the next state; when the comparison outcome is undetermined
/// the adversary resolves it on the uncontrollable edge.
fn prog_template() -> Template {
    Template {
        name: "Prog".into(),
        parameter: None,
        declaration: String::new(),
        locations: vec![
            ("p0".into(), "start".into(), None),
            ("p1".into(), "idle".into(), None),
            ("p2".into(), "fed".into(), None),
            ("p3".into(), "done".into(), None),
            ("p4".into(), "error".into(), None),
        ],
        init: "p0".into(),
        transitions: vec![
            tr("p0", "p1", None, None, Some("init_val()")),
            tr(
                "p1",
                "p2",
                Some("val[pc]!=INIT_LR && val[pc]!=UNKNOWN && !badAddr && pPC[FETCH_STAGE]==EMPTY"),
                Some("fetch!"),
                Some("update()"),
            ),
            tr("p2", "p1", Some("!NDcmp(pPC[FETCH_STAGE])"), None, None),
            Transition {
                source: "p2".into(),
                target: "p1".into(),
                controllable: false,
                select: Some("n1 : int[0,1], n2 : int[0,1]".into()),
                guard: Some("NDcmp(pPC[FETCH_STAGE])".into()),
                sync: None,
                assign: Some("setcmp(pPC[FETCH_STAGE], n1, n2)".into()),
            },
            tr("p1", "p3", Some("val[pc]==INIT_LR"), None, Some("progDone=1")),
            tr("p1", "p4", Some("val[pc]==UNKNOWN || badAddr"), None, None),
        ],
    }
}

/// Fetch: read the instruction through the instruction cache; on a taken
/// conditional branch replay the two never-taken-predicted sequential
/// reads before handing over.
fn fetch_template() -> Template {
    Template {
        name: "FetchStage".into(),
        parameter: None,
        declaration: "const int me = 0;".into(),
        locations: vec![
            ("f0".into(), "Wait".into(), None),
            ("f1".into(), "Request".into(), None),
            ("f2".into(), "Reading".into(), None),
            ("f3".into(), "Got".into(), None),
            ("f4".into(), "FlushReq1".into(), None),
            ("f5".into(), "FlushWait1".into(), None),
            ("f6".into(), "FlushReq2".into(), None),
            ("f7".into(), "FlushWait2".into(), None),
            ("f8".into(), "Ready".into(), None),
        ],
        init: "f0".into(),
        transitions: vec![
            tr("f0", "f1", None, Some("fetch?"), Some("cacheReq[INSTR_CACHE]=pPC[me]")),
            tr("f1", "f2", None, Some("CacheReadStart[INSTR_CACHE]!"), None),
            tr("f2", "f3", None, Some("CacheReadDone[INSTR_CACHE]?"), None),
            tr(
                "f3",
                "f8",
                Some("!(type_of(pPC[me])==G4c && Todo[me])"),
                None,
                None,
            ),
            tr(
                "f3",
                "f4",
                Some("type_of(pPC[me])==G4c && Todo[me]"),
                None,
                Some("cacheReq[INSTR_CACHE]=pPC[me]+4"),
            ),
            tr("f4", "f5", None, Some("CacheReadStart[INSTR_CACHE]!"), None),
            tr(
                "f5",
                "f6",
                None,
                Some("CacheReadDone[INSTR_CACHE]?"),
                Some("cacheReq[INSTR_CACHE]=pPC[me]+8"),
            ),
            tr("f6", "f7", None, Some("CacheReadStart[INSTR_CACHE]!"), None),
            tr("f7", "f8", None, Some("CacheReadDone[INSTR_CACHE]?"), None),
            tr("f8", "f0", None, Some("decode!"), Some("copy(me, me+1)")),
        ],
    }
}

/// A stage with a fixed duration and a handoff channel.
fn plain_stage_template(name: &str, accept: &str, pass: &str, me: usize) -> Template {
    Template {
        name: name.into(),
        parameter: None,
        declaration: format!("const int me = {me};\nclock x;"),
        locations: vec![
            ("s0".into(), "Wait".into(), None),
            ("s1".into(), "Busy".into(), Some("x<=1".into())),
        ],
        init: "s0".into(),
        transitions: vec![
            tr("s0", "s1", None, Some(&format!("{accept}?")), Some("x=0")),
            tr("s1", "s0", Some("x==1"), Some(&format!("{pass}!")), Some("copy(me, me+1)")),
        ],
    }
}

/// Execute: configured duration plus the load-use / multiple-transfer
/// stalls; the stage may wait past its duration while stalled.
fn execute_template() -> Template {
    Template {
        name: "ExecuteStage".into(),
        parameter: None,
        declaration: "const int me = 2;\nclock x;".into(),
        locations: vec![
            ("e0".into(), "Wait".into(), None),
            ("e1".into(), "Busy".into(), None),
        ],
        init: "e0".into(),
        transitions: vec![
            tr("e0", "e1", None, Some("execute?"), Some("x=0")),
            tr(
                "e1",
                "e0",
                Some("x>=dur(pPC[me]) && !exeStall()"),
                Some("memory!"),
                Some("copy(me, me+1)"),
            ),
        ],
    }
}

/// Memory: scheduled loads and stores synchronize with the data cache,
/// one transfer per round; everything else is a one-cycle transit.
fn memory_template() -> Template {
    Template {
        name: "MemoryStage".into(),
        parameter: None,
        declaration: "const int me = 3;\nclock x;\nint left = 0;".into(),
        locations: vec![
            ("m0".into(), "Wait".into(), None),
            ("m1".into(), "Busy".into(), Some("x<=1".into())),
            ("m2".into(), "Transfer".into(), None),
            ("m3".into(), "Waiting".into(), None),
        ],
        init: "m0".into(),
        transitions: vec![
            tr(
                "m0",
                "m1",
                None,
                Some("memory?"),
                Some("x=0, left=tcount(pPC[me])"),
            ),
            tr(
                "m1",
                "m0",
                Some("x==1 && !(Todo[me] && left>0 && (type_of(pPC[me])==G2LDR || type_of(pPC[me])==G2STR || type_of(pPC[me])==G2LDM || type_of(pPC[me])==G2STM))"),
                Some("writeback!"),
                Some("copy(me, me+1)"),
            ),
            tr(
                "m1",
                "m2",
                Some("x==1 && Todo[me] && left>0 && (type_of(pPC[me])==G2LDR || type_of(pPC[me])==G2STR || type_of(pPC[me])==G2LDM || type_of(pPC[me])==G2STM)"),
                None,
                None,
            ),
            tr(
                "m2",
                "m3",
                Some("left>0"),
                Some("CacheReadStart[DATA_CACHE]!"),
                Some("cacheReq[DATA_CACHE]=dataAdr[me]+4*(tcount(pPC[me])-left), cacheWrite[DATA_CACHE]=(type_of(pPC[me])==G2STR || type_of(pPC[me])==G2STM)"),
            ),
            tr(
                "m3",
                "m2",
                None,
                Some("CacheReadDone[DATA_CACHE]?"),
                Some("left=left-1"),
            ),
            tr("m2", "m0", Some("left==0"), Some("writeback!"), Some("copy(me, me+1)")),
        ],
    }
}

/// Writeback: one cycle, never stalls; DONE is reached when the program
/// automaton has finished and the pipeline is empty.
fn writeback_template() -> Template {
    Template {
        name: "WriteBackStage".into(),
        parameter: None,
        declaration: "const int me = 4;\nclock x;".into(),
        locations: vec![
            ("w0".into(), "Wait".into(), None),
            ("w1".into(), "Busy".into(), Some("x<=1".into())),
            ("w2".into(), "DONE".into(), None),
        ],
        init: "w0".into(),
        transitions: vec![
            tr("w0", "w1", None, Some("writeback?"), Some("x=0")),
            tr("w1", "w0", Some("x==1"), None, Some("pPC[me]=EMPTY")),
            tr(
                "w0",
                "w2",
                Some("progDone && pPC[0]==EMPTY && pPC[1]==EMPTY && pPC[2]==EMPTY && pPC[3]==EMPTY && pPC[4]==EMPTY"),
                None,
                None,
            ),
        ],
    }
}

/// Cache: on a request, a hit costs the transfer time; a miss performs the
/// line's memory transactions one after the other (twice the rounds when a
/// dirty victim is written back), then the transfer.
fn cache_template() -> Template {
    let decl = r#"const int id;
clock x;
int pending = 0;
int tags[IC_SETS > DC_SETS ? IC_SETS : DC_SETS][IC_WAYS > DC_WAYS ? IC_WAYS : DC_WAYS];
int order[IC_SETS > DC_SETS ? IC_SETS : DC_SETS][IC_WAYS > DC_WAYS ? IC_WAYS : DC_WAYS];
bool dirty[IC_SETS > DC_SETS ? IC_SETS : DC_SETS][IC_WAYS > DC_WAYS ? IC_WAYS : DC_WAYS];
int stamp = 0;
bool inited = 0;

int nsets() { return id==INSTR_CACHE ? IC_SETS : DC_SETS; }
int nways() { return id==INSTR_CACHE ? IC_WAYS : DC_WAYS; }
int nline() { return id==INSTR_CACHE ? IC_LINE : DC_LINE; }
int npmt() { return id==INSTR_CACHE ? IC_PMT : DC_PMT; }
int nspeed() { return id==INSTR_CACHE ? IC_SPEED : DC_SPEED; }
int ntrans() { return id==INSTR_CACHE ? IC_TRANS : DC_TRANS; }
int npolicy() { return id==INSTR_CACHE ? IC_POLICY : DC_POLICY; }

void initCache() {
    int s; int w;
    for (s=0; s<nsets(); s++) for (w=0; w<nways(); w++) { tags[s][w]=-1; order[s][w]=0; dirty[s][w]=0; }
    inited=1;
}
int setOf(int a) { return (a/nline())%nsets(); }
int tagOf(int a) { return (a/nline())/nsets(); }
bool isHit(int a) {
    int w; int s = setOf(a);
    if (npolicy()==2) return false;
    for (w=0; w<nways(); w++) if (tags[s][w]==tagOf(a)) return true;
    return false;
}
void touch(int a) {
    int w; int s = setOf(a);
    for (w=0; w<nways(); w++) if (tags[s][w]==tagOf(a)) {
        if (cacheWrite[id]) dirty[s][w]=1;
        if (npolicy()==1) { stamp=stamp+1; order[s][w]=stamp; }
    }
}
int victimOf(int s) {
    int w; int victim = 0; int best;
    best = order[s][0];
    for (w=0; w<nways(); w++) {
        if (tags[s][w]==-1) { return w; }
        if (order[s][w]<best) { best=order[s][w]; victim=w; }
    }
    return victim;
}
// Transaction rounds for a miss: the line fill, doubled when the victim
// must be written back first.
int missRounds(int a) {
    int s = setOf(a); int v;
    if (npolicy()==2) return npmt();
    v = victimOf(s);
    if (tags[s][v]!=-1 && dirty[s][v]) return 2*npmt();
    return npmt();
}
void fill(int a) {
    int victim;
    int s = setOf(a);
    if (npolicy()==2) return;
    victim = victimOf(s);
    stamp=stamp+1;
    tags[s][victim]=tagOf(a);
    order[s][victim]=stamp;
    dirty[s][victim]=cacheWrite[id];
}"#;
    Template {
        name: "Cache".into(),
        parameter: Some("const int id".into()),
        declaration: decl.into(),
        locations: vec![
            ("c0".into(), "Start".into(), None),
            ("c1".into(), "Idle".into(), None),
            ("c2".into(), "Hit".into(), None),
            ("c3".into(), "PMT".into(), None),
            ("c4".into(), "Deliver".into(), None),
        ],
        init: "c0".into(),
        transitions: vec![
            tr("c0", "c1", None, None, Some("initCache()")),
            tr(
                "c1",
                "c2",
                Some("isHit(cacheReq[id])"),
                Some("CacheReadStart[id]?"),
                Some("x=0, touch(cacheReq[id])"),
            ),
            tr(
                "c1",
                "c3",
                Some("!isHit(cacheReq[id])"),
                Some("CacheReadStart[id]?"),
                Some("x=0, pending=missRounds(cacheReq[id])"),
            ),
            tr(
                "c3",
                "c3",
                Some("pending>1 && x==ntrans()"),
                None,
                Some("pending=pending-1, x=0"),
            ),
            tr(
                "c3",
                "c4",
                Some("pending==1 && x==ntrans()"),
                None,
                Some("pending=0, x=0, fill(cacheReq[id])"),
            ),
            tr("c2", "c1", Some("x==nspeed()"), Some("CacheReadDone[id]!"), None),
            tr("c4", "c1", Some("x==nspeed()"), Some("CacheReadDone[id]!"), None),
        ],
    }
}
