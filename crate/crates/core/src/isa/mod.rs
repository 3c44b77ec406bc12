//! Instruction set frontend: parsing of annotated objdump-style ARM9
//! disassembly and static per-instruction metadata (register footprints,
//! predicate usage, classification, stage durations).
//!
//! Only the subset of ARM9 needed by the supported programs is decoded:
//! `mov mvn add sub rsb and orr eor cmp cmn tst teq ldr str ldm stm b bl`,
//! each with an optional condition suffix and optional `s` flag. Everything
//! else is rejected at parse time.

mod meta;
mod parse;
mod pretty;

pub use meta::{
    classify, cond_predicate, flags_needed, reg_read_set, reg_write_set, stage_duration,
    successors, writes_pc_dynamic, DurationTable, ProgramMeta, Stage, Warning, STAGES,
};
pub use parse::parse_listing;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

pub type Addr = u32;

/// One of the 16 general registers, r0..r12 plus sp, lr, pc.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Reg(pub u8);

impl Reg {
    pub const SL: Reg = Reg(10);
    pub const FP: Reg = Reg(11);
    pub const IP: Reg = Reg(12);
    pub const SP: Reg = Reg(13);
    pub const LR: Reg = Reg(14);
    pub const PC: Reg = Reg(15);

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn parse(s: &str) -> Option<Reg> {
        let s = s.trim();
        match s {
            "sl" => return Some(Reg::SL),
            "fp" => return Some(Reg::FP),
            "ip" => return Some(Reg::IP),
            "sp" => return Some(Reg::SP),
            "lr" => return Some(Reg::LR),
            "pc" => return Some(Reg::PC),
            _ => {}
        }
        let n: u8 = s.strip_prefix('r')?.parse().ok()?;
        (n < 16).then_some(Reg(n))
    }
}

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Reg::SL => write!(f, "sl"),
            Reg::FP => write!(f, "fp"),
            Reg::IP => write!(f, "ip"),
            Reg::SP => write!(f, "sp"),
            Reg::LR => write!(f, "lr"),
            Reg::PC => write!(f, "pc"),
            Reg(n) => write!(f, "r{n}"),
        }
    }
}

/// Condition codes of the supported subset. `Al` is the unconditional case.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Cond {
    Al,
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
    Ls,
    Hi,
}

impl Cond {
    pub fn suffix(self) -> &'static str {
        match self {
            Cond::Al => "",
            Cond::Eq => "eq",
            Cond::Ne => "ne",
            Cond::Le => "le",
            Cond::Lt => "lt",
            Cond::Ge => "ge",
            Cond::Gt => "gt",
            Cond::Ls => "ls",
            Cond::Hi => "hi",
        }
    }

    pub fn from_suffix(s: &str) -> Option<Cond> {
        Some(match s {
            "" | "al" => Cond::Al,
            "eq" => Cond::Eq,
            "ne" => Cond::Ne,
            "le" => Cond::Le,
            "lt" => Cond::Lt,
            "ge" => Cond::Ge,
            "gt" => Cond::Gt,
            "ls" => Cond::Ls,
            "hi" => Cond::Hi,
            _ => return None,
        })
    }
}

/// The four tracked status predicates. Condition codes come in
/// complementary pairs, each pair resolved by a single predicate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pred {
    Eq,
    Lt,
    Le,
    Ls,
}

impl Pred {
    pub fn name(self) -> &'static str {
        match self {
            Pred::Eq => "eq",
            Pred::Lt => "lt",
            Pred::Le => "le",
            Pred::Ls => "ls",
        }
    }

    pub fn parse(s: &str) -> Option<Pred> {
        Some(match s {
            "eq" => Pred::Eq,
            "lt" => Pred::Lt,
            "le" => Pred::Le,
            "ls" => Pred::Ls,
            _ => return None,
        })
    }
}

/// Base opcode, without condition or `s` suffix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Op {
    Mov,
    Mvn,
    Add,
    Sub,
    Rsb,
    And,
    Orr,
    Eor,
    Cmp,
    Cmn,
    Tst,
    Teq,
    Ldr,
    Str,
    Ldm,
    Stm,
    B,
    Bl,
}

impl Op {
    pub fn name(self) -> &'static str {
        match self {
            Op::Mov => "mov",
            Op::Mvn => "mvn",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Rsb => "rsb",
            Op::And => "and",
            Op::Orr => "orr",
            Op::Eor => "eor",
            Op::Cmp => "cmp",
            Op::Cmn => "cmn",
            Op::Tst => "tst",
            Op::Teq => "teq",
            Op::Ldr => "ldr",
            Op::Str => "str",
            Op::Ldm => "ldm",
            Op::Stm => "stm",
            Op::B => "b",
            Op::Bl => "bl",
        }
    }

    /// Comparison-style opcodes always set flags and never write a register.
    pub fn is_compare(self) -> bool {
        matches!(self, Op::Cmp | Op::Cmn | Op::Tst | Op::Teq)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ShiftOp {
    Lsl,
    Lsr,
    Asr,
}

impl ShiftOp {
    pub fn name(self) -> &'static str {
        match self {
            ShiftOp::Lsl => "lsl",
            ShiftOp::Lsr => "lsr",
            ShiftOp::Asr => "asr",
        }
    }

    pub fn parse(s: &str) -> Option<ShiftOp> {
        Some(match s {
            "lsl" => ShiftOp::Lsl,
            "lsr" => ShiftOp::Lsr,
            "asr" => ShiftOp::Asr,
            _ => return None,
        })
    }
}

/// A data-processing or branch operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Operand {
    Reg(Reg),
    Imm(i32),
    /// Register shifted by an immediate, e.g. `r3, asr #1`.
    Shifted(Reg, ShiftOp, u8),
    /// Immediate branch target (byte address).
    Target(Addr),
}

impl fmt::Display for Operand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Operand::Reg(r) => write!(f, "{r}"),
            Operand::Imm(v) => write!(f, "#{v}"),
            Operand::Shifted(r, op, n) => write!(f, "{r}, {} #{n}", op.name()),
            Operand::Target(a) => write!(f, "{a:x}"),
        }
    }
}

/// Offset part of a load/store address expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MemOffset {
    None,
    Imm(i32),
    Reg(Reg, Option<(ShiftOp, u8)>),
}

/// Address expression of a single load/store: `[base, offset]{!}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemExpr {
    pub base: Reg,
    pub offset: MemOffset,
    pub writeback: bool,
}

/// Addressing mode for multiple load/store. `Ia` is the `ldm`/`stm` default.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AddrMode {
    Ia,
    Db,
}

/// One decoded assembly line.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Instruction {
    pub address: Addr,
    pub op: Op,
    pub cond: Cond,
    pub sets_flags: bool,
    pub operands: Vec<Operand>,
    pub mem: Option<MemExpr>,
    pub reg_list: Vec<Reg>,
    /// `!` on the base register of an ldm/stm.
    pub list_writeback: bool,
    pub addr_mode: AddrMode,
    /// Predicates from a trailing `/ pred ... /` comment.
    pub annotations: BTreeSet<Pred>,
    /// Raw machine word from the encoding column, when present.
    pub encoding: Option<u32>,
}

impl Instruction {
    /// Full mnemonic including condition and `s` suffix, plus the
    /// addressing-mode suffix for ldm/stm.
    pub fn mnemonic(&self) -> String {
        let mut s = String::from(self.op.name());
        if matches!(self.op, Op::Ldm | Op::Stm) {
            s.push_str(match self.addr_mode {
                AddrMode::Ia => "ia",
                AddrMode::Db => "db",
            });
        }
        s.push_str(self.cond.suffix());
        if self.sets_flags && !self.op.is_compare() {
            s.push('s');
        }
        s
    }

    /// Immediate branch target, if this is a `b`/`bl` with one.
    pub fn branch_target(&self) -> Option<Addr> {
        if !matches!(self.op, Op::B | Op::Bl) {
            return None;
        }
        self.operands.iter().find_map(|o| match o {
            Operand::Target(a) => Some(*a),
            _ => None,
        })
    }
}

/// Instruction classification used by the timing model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum InstrClass {
    DataProc,
    Load,
    Store,
    MultiLoad,
    MultiStore,
    Branch,
    CondBranch,
    BranchLink,
    Compare,
}

/// A function span from a disassembly section header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Function {
    pub name: String,
    pub start: Addr,
    /// Address of the last line (instruction or data word) of the function.
    pub end: Addr,
}

/// A parsed program: decoded instructions plus retained data-in-code words.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: BTreeMap<Addr, Instruction>,
    /// Non-executable words embedded in the code (literal pools). Executing
    /// one is a runtime fault; loading from one yields its value.
    pub data_words: BTreeMap<Addr, u32>,
    pub functions: Vec<Function>,
    pub entry: Addr,
}

impl Program {
    pub fn instr(&self, addr: Addr) -> Option<&Instruction> {
        self.instructions.get(&addr)
    }

    /// Word readable at `addr` from the program image: a data word, or the
    /// encoding of an instruction when the listing carried one.
    pub fn image_word(&self, addr: Addr) -> Option<u32> {
        if let Some(w) = self.data_words.get(&addr) {
            return Some(*w);
        }
        self.instructions.get(&addr).and_then(|i| i.encoding)
    }

    /// True if `addr` lies inside the span covered by the listing.
    pub fn in_image(&self, addr: Addr) -> bool {
        let lo = self.min_addr();
        let hi = self.max_addr();
        match (lo, hi) {
            (Some(lo), Some(hi)) => addr >= lo && addr < hi + 4,
            _ => false,
        }
    }

    pub fn min_addr(&self) -> Option<Addr> {
        let i = self.instructions.keys().next().copied();
        let d = self.data_words.keys().next().copied();
        match (i, d) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (x, y) => x.or(y),
        }
    }

    pub fn max_addr(&self) -> Option<Addr> {
        let i = self.instructions.keys().next_back().copied();
        let d = self.data_words.keys().next_back().copied();
        match (i, d) {
            (Some(a), Some(b)) => Some(a.max(b)),
            (x, y) => x.or(y),
        }
    }

    pub fn function_of(&self, addr: Addr) -> Option<&Function> {
        self.functions.iter().find(|f| addr >= f.start && addr <= f.end)
    }

    pub fn pretty_print(&self) -> String {
        pretty::print_program(self)
    }
}

/// Errors from the parser and static analyses.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum IsaError {
    #[error("line {line}: syntax error: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("address {address:#x}: unsupported mnemonic `{mnemonic}`")]
    UnsupportedMnemonic { address: Addr, mnemonic: String },
    #[error("line {line}: duplicate address {address:#x}")]
    DuplicateAddress { line: usize, address: Addr },
    #[error("address {address:#x}: misaligned (must be a multiple of 4)")]
    Misaligned { address: Addr },
    #[error("program has no instructions (missing entry)")]
    MissingEntry,
    #[error("address {address:#x}: branch target {target:#x} is not an instruction")]
    BadBranchTarget { address: Addr, target: Addr },
    #[error("line {line}: unknown annotation predicate `{name}`")]
    UnknownAnnotation { line: usize, name: String },
    #[error("address {address:#x}: flag usage scan diverged")]
    FlagScanDiverged { address: Addr },
}
