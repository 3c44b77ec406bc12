//! Execution of a program over the extended domain: machine words plus an
//! unknown value. Deterministic updates, dynamic address resolution, stack
//! tracking, and detection of adversary choice points (flag-setting
//! instructions with an unknown operand).

mod choice;
mod step;

pub use choice::{consistent_outcomes, outcome_compatible, OutcomeClass, SignedOutcome, UnsignedOutcome};
pub use step::{init_state, ndcmp, run_concrete, step, ExecCtx};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::isa::{Addr, Pred, Reg};

/// A register or memory value: a known 32-bit word or unknown.
///
/// Words are held in their signed reading; `lt`/`le` comparisons are signed
/// and `ls` is unsigned. Arithmetic on known values wraps modulo 2^32, and
/// any operation with an unknown operand yields unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ExtValue {
    Known(i32),
    Unknown,
}

impl ExtValue {
    pub fn known(self) -> Option<i32> {
        match self {
            ExtValue::Known(v) => Some(v),
            ExtValue::Unknown => None,
        }
    }

    pub fn is_unknown(self) -> bool {
        matches!(self, ExtValue::Unknown)
    }

    pub fn map2(self, other: ExtValue, f: impl FnOnce(i32, i32) -> i32) -> ExtValue {
        match (self, other) {
            (ExtValue::Known(a), ExtValue::Known(b)) => ExtValue::Known(f(a, b)),
            _ => ExtValue::Unknown,
        }
    }
}

/// The four status predicates tracked instead of hardware N/Z/C/V bits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Preds {
    pub eq: bool,
    pub lt: bool,
    pub le: bool,
    pub ls: bool,
}

impl Preds {
    pub fn get(&self, p: Pred) -> bool {
        match p {
            Pred::Eq => self.eq,
            Pred::Lt => self.lt,
            Pred::Le => self.le,
            Pred::Ls => self.ls,
        }
    }

    pub fn set(&mut self, p: Pred, v: bool) {
        match p {
            Pred::Eq => self.eq = v,
            Pred::Lt => self.lt = v,
            Pred::Le => self.le = v,
            Pred::Ls => self.ls = v,
        }
    }
}

/// State of the computation: 16 registers, status predicates, tracked stack
/// contents, and an optional concrete-memory overlay for simulation runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MachineState {
    pub regs: [ExtValue; 16],
    pub preds: Preds,
    /// Tracked words of the stack region, keyed by address.
    pub stack: BTreeMap<u32, ExtValue>,
    /// Concrete non-stack memory. Consulted and updated only when
    /// `concrete_mem` is set (simulation of a fixed input).
    pub mem: BTreeMap<u32, ExtValue>,
    pub concrete_mem: bool,
    pub step_count: u64,
    /// High-water mark of tracked stack words.
    pub max_stack_words: u32,
}

impl MachineState {
    pub fn reg(&self, r: Reg) -> ExtValue {
        self.regs[r.index()]
    }

    pub fn set_reg(&mut self, r: Reg, v: ExtValue) {
        self.regs[r.index()] = v;
    }

    pub fn pc(&self) -> ExtValue {
        self.regs[Reg::PC.index()]
    }
}

/// Machine-level configuration: stack geometry, termination sentinel and
/// the run-length bound.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineConfig {
    pub stack_base: u32,
    pub stack_size: u32,
    /// Return-address sentinel outside the program range; reaching it in pc
    /// terminates the run.
    pub init_lr: u32,
    /// Bound on the number of instructions any run may execute.
    pub k_p: u64,
}

impl Default for MachineConfig {
    fn default() -> Self {
        MachineConfig {
            stack_base: 0x0100_0000,
            stack_size: 4096,
            init_lr: 0xFFFF_FFFC,
            k_p: 1_000_000,
        }
    }
}

/// Accesses just past either end of the stack region fault instead of
/// falling through to opaque memory.
pub const STACK_GUARD_BYTES: u32 = 1024;

impl MachineConfig {
    pub fn stack_low(&self) -> u32 {
        self.stack_base.wrapping_sub(self.stack_size)
    }

    pub fn in_stack_region(&self, addr: u32) -> bool {
        addr >= self.stack_low() && addr < self.stack_base
    }
}

/// What one instruction dispatch looks like to the pipeline.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IssueRecord {
    pub instr_addr: Addr,
    /// False exactly for condition-false conditional instructions. For a
    /// conditional branch this doubles as the condition's truth value.
    pub scheduled: bool,
    /// Known word addresses touched, in transfer order.
    pub data_addrs: Vec<u32>,
    /// Meaningful only for conditional branches.
    pub branch_taken: bool,
}

/// Runtime faults of the extended-domain machine.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, thiserror::Error)]
pub enum Fault {
    #[error("{at:#x}: load/store address is unknown")]
    UnknownAddress { at: Addr },
    #[error("{at:#x}: pc would become unknown")]
    UnknownPc { at: Addr },
    #[error("{at:#x}: stack overflow at {addr:#x}")]
    StackOverflow { at: Addr, addr: u32 },
    #[error("{at:#x}: stack underflow at {addr:#x}")]
    StackUnderflow { at: Addr, addr: u32 },
    #[error("{at:#x}: run-length bound exhausted")]
    RunBound { at: Addr },
    #[error("{at:#x}: executing a data word")]
    NonExecutable { at: Addr },
    #[error("pc {at:#x} is outside the program")]
    PcOutsideProgram { at: Addr },
}

/// Result of one machine step.
#[derive(Debug, Clone)]
pub enum StepOutcome {
    Deterministic {
        next: MachineState,
        issue: IssueRecord,
    },
    /// A flag-setting instruction with an unknown operand: the adversary
    /// resolves the comparison. `choices` enumerates exactly the consistent
    /// predicate assignments over the instruction's needed flags, each with
    /// its complete successor state.
    AdversaryChoice {
        pending: MachineState,
        issue: IssueRecord,
        flags: Vec<Pred>,
        choices: Vec<(OutcomeClass, MachineState)>,
    },
    Terminated,
    Fault(Fault),
}

/// Errors from a fully concrete run.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Fault(#[from] Fault),
    #[error("{at:#x}: comparison outcome depends on unknown data")]
    NondeterministicRun { at: Addr },
}

/// Initial register/memory assignment for a concrete run.
#[derive(Debug, Clone, Default)]
pub struct ConcreteInputs {
    pub regs: BTreeMap<Reg, i32>,
    pub mem: BTreeMap<u32, i32>,
}
