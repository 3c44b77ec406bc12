//! Abstraction mapping and the lockstep equivalence check.
//!
//! An abstracted instruction keeps its class, durations and register
//! footprint but its only effect is advancing pc. The check runs the
//! concrete and abstracted programs over the full adversary tree with
//! mirrored choices and verifies, before every critical instruction, that
//! both sides agree on the registers the critical instruction touches.
//! When they do on every path, the two programs are time-equivalent and
//! their WCETs coincide exactly.

use std::collections::BTreeSet;
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::isa::{
    classify, reg_read_set, reg_write_set, writes_pc_dynamic, Addr, InstrClass, Instruction,
    Program, ProgramMeta, Reg,
};
use crate::machine::{init_state, step, ExecCtx, ExtValue, Fault, MachineConfig, MachineState, StepOutcome};
use crate::search::{LimitKind, Limits, SearchError, WitnessStep};

/// True iff the instruction sets status predicates or references memory.
/// Critical instructions anchor the equivalence check and are never
/// abstractable.
pub fn is_critical(i: &Instruction) -> bool {
    i.sets_flags
        || matches!(
            classify(i),
            InstrClass::Load | InstrClass::Store | InstrClass::MultiLoad | InstrClass::MultiStore
        )
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbstractionError {
    #[error("{address:#x} is not an instruction of the program")]
    UnknownAddress { address: Addr },
    #[error("{address:#x} is critical (sets flags or references memory) and cannot be abstracted")]
    CriticalInstruction { address: Addr },
    #[error("line {line}: bad address `{text}`")]
    BadLine { line: usize, text: String },
}

/// The set of abstracted instruction addresses, validated against a
/// program.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AbstractionMap {
    addrs: BTreeSet<Addr>,
}

impl AbstractionMap {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_addrs(
        p: &Program,
        addrs: impl IntoIterator<Item = Addr>,
    ) -> Result<Self, AbstractionError> {
        let mut set = BTreeSet::new();
        for address in addrs {
            let Some(instr) = p.instr(address) else {
                return Err(AbstractionError::UnknownAddress { address });
            };
            if is_critical(instr) {
                return Err(AbstractionError::CriticalInstruction { address });
            }
            set.insert(address);
        }
        Ok(AbstractionMap { addrs: set })
    }

    /// Parses the abstraction file format: one hex address per line,
    /// `#` comments.
    pub fn parse_file(p: &Program, text: &str) -> Result<Self, AbstractionError> {
        let mut addrs = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let t = line.strip_prefix("0x").unwrap_or(line);
            let addr = Addr::from_str_radix(t, 16).map_err(|_| AbstractionError::BadLine {
                line: idx + 1,
                text: line.to_string(),
            })?;
            addrs.push(addr);
        }
        Self::from_addrs(p, addrs)
    }

    pub fn addrs(&self) -> &BTreeSet<Addr> {
        &self.addrs
    }

    pub fn len(&self) -> usize {
        self.addrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addrs.is_empty()
    }
}

/// Verdict of the synchronized-product check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Equivalent,
    CounterExample {
        /// Mirrored adversary choices leading to the divergence.
        path: Vec<WitnessStep>,
        address: Addr,
        register: Reg,
    },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

/// Heuristic abstraction set: every non-critical, non-control instruction
/// none of whose written registers can reach a critical instruction's
/// register footprint along any static forward path. Shrinks to a fixpoint
/// because declaring an instruction concrete can only block more flows.
/// The output must still pass `check_equivalence`.
pub fn heuristic_map(p: &Program, meta: &ProgramMeta) -> AbstractionMap {
    let mut candidates: BTreeSet<Addr> = p
        .instructions
        .values()
        .filter(|i| !is_critical(i) && !reg_write_set(i).contains(&Reg::PC))
        .map(|i| i.address)
        .collect();

    loop {
        let exposed: Vec<Addr> = candidates
            .iter()
            .copied()
            .filter(|&a| {
                let instr = &p.instructions[&a];
                reg_write_set(instr)
                    .iter()
                    .any(|&r| register_reaches_critical(p, meta, instr, r, &candidates))
            })
            .collect();
        if exposed.is_empty() {
            break;
        }
        for a in exposed {
            candidates.remove(&a);
        }
    }
    AbstractionMap { addrs: candidates }
}

/// Whether a write of `r` at `from` can reach a critical instruction that
/// touches `r` before a concrete (non-abstracted) instruction redefines it.
fn register_reaches_critical(
    p: &Program,
    meta: &ProgramMeta,
    from: &Instruction,
    r: Reg,
    abstracted: &BTreeSet<Addr>,
) -> bool {
    let mut visited: BTreeSet<Addr> = BTreeSet::new();
    let mut work = flow_successors(p, meta, from);
    while let Some(a) = work.pop() {
        if !visited.insert(a) {
            continue;
        }
        let Some(instr) = p.instr(a) else { continue };
        if is_critical(instr) {
            let mut touched = reg_read_set(instr);
            touched.extend(reg_write_set(instr));
            if touched.contains(&r) {
                return true;
            }
        }
        // A concrete redefinition kills the flow; an abstracted one will
        // not write, so the scan continues through it.
        if !abstracted.contains(&a) && reg_write_set(instr).contains(&r) {
            continue;
        }
        work.extend(flow_successors(p, meta, instr));
    }
    false
}

/// Static successors including return edges from `bl`-called functions.
fn flow_successors(p: &Program, meta: &ProgramMeta, i: &Instruction) -> Vec<Addr> {
    let mut out = crate::isa::successors(i);
    if writes_pc_dynamic(i) {
        if let Some(returns) = meta.return_edges.get(&i.address) {
            out.extend(returns.iter().copied());
        }
    }
    let _ = p;
    out
}

/// Lockstep product of the concrete and abstracted adversary trees with
/// mirrored choices, checking the register condition before every
/// critical instruction.
pub fn check_equivalence(
    p: &Program,
    meta: &ProgramMeta,
    machine_cfg: &MachineConfig,
    map: &AbstractionMap,
    limits: &Limits,
) -> Result<Verdict, SearchError> {
    let concrete = ExecCtx::new(p, meta, machine_cfg);
    let abstracted = ExecCtx {
        program: p,
        meta,
        cfg: machine_cfg,
        abstracted: Some(&map.addrs),
    };
    let states = AtomicU64::new(0);
    let splits = AtomicU64::new(0);
    let mut path = Vec::new();
    lockstep(
        &concrete,
        &abstracted,
        init_state(&concrete),
        init_state(&abstracted),
        limits,
        &states,
        &splits,
        &mut path,
    )
}

#[allow(clippy::too_many_arguments)]
fn lockstep(
    concrete: &ExecCtx,
    abstracted: &ExecCtx,
    mut mc: MachineState,
    mut ma: MachineState,
    limits: &Limits,
    states: &AtomicU64,
    splits: &AtomicU64,
    path: &mut Vec<WitnessStep>,
) -> Result<Verdict, SearchError> {
    loop {
        let (pc_c, pc_a) = (mc.pc().known(), ma.pc().known());
        if pc_c != pc_a {
            return Ok(Verdict::CounterExample {
                path: path.clone(),
                address: pc_c.or(pc_a).unwrap_or(0) as Addr,
                register: Reg::PC,
            });
        }
        if states.fetch_add(1, Ordering::Relaxed) + 1 > limits.max_states {
            return Err(SearchError::LimitExceeded {
                which: LimitKind::MaxStates,
                states: states.load(Ordering::Relaxed),
                splits: splits.load(Ordering::Relaxed),
                pending: pc_c.map(|a| vec![a as Addr]).unwrap_or_default(),
            });
        }

        // The register condition, checked on the state preceding every
        // critical instruction: unknown equals unknown, and a known value
        // must match exactly.
        if let Some(pc) = pc_c {
            if let Some(instr) = concrete.program.instr(pc as Addr) {
                if is_critical(instr) {
                    let mut touched = reg_read_set(instr);
                    touched.extend(reg_write_set(instr));
                    for r in touched {
                        let (vc, va) = (read_for_check(&mc, r), read_for_check(&ma, r));
                        if vc != va {
                            return Ok(Verdict::CounterExample {
                                path: path.clone(),
                                address: pc as Addr,
                                register: r,
                            });
                        }
                    }
                }
            }
        }

        let sc = step(concrete, &mc);
        let sa = step(abstracted, &ma);
        match (sc, sa) {
            (StepOutcome::Terminated, StepOutcome::Terminated) => return Ok(Verdict::Equivalent),
            (
                StepOutcome::Deterministic { next: nc, .. },
                StepOutcome::Deterministic { next: na, .. },
            ) => {
                mc = nc;
                ma = na;
            }
            (
                StepOutcome::AdversaryChoice { issue, choices: cc, .. },
                StepOutcome::AdversaryChoice { choices: ca, .. },
            ) => {
                let at = issue.instr_addr;
                if cc.len() > 1 {
                    let n = splits.fetch_add(1, Ordering::Relaxed) + 1;
                    if n > limits.max_splits {
                        return Err(SearchError::LimitExceeded {
                            which: LimitKind::MaxSplits,
                            states: states.load(Ordering::Relaxed),
                            splits: n,
                            pending: vec![at],
                        });
                    }
                }
                // Both sides were built from the same needed-flag set, so
                // the choice lists line up outcome for outcome.
                for ((oc, m_c), (oa, m_a)) in cc.into_iter().zip(ca) {
                    debug_assert_eq!(oc, oa);
                    path.push(WitnessStep { address: at, outcome: oc });
                    let verdict = lockstep(
                        concrete, abstracted, m_c, m_a, limits, states, splits, path,
                    )?;
                    path.pop();
                    if !verdict.is_equivalent() {
                        return Ok(verdict);
                    }
                }
                return Ok(Verdict::Equivalent);
            }
            (StepOutcome::Fault(Fault::RunBound { at }), _)
            | (_, StepOutcome::Fault(Fault::RunBound { at })) => {
                return Err(SearchError::LimitExceeded {
                    which: LimitKind::RunBound,
                    states: states.load(Ordering::Relaxed),
                    splits: splits.load(Ordering::Relaxed),
                    pending: vec![at],
                });
            }
            (StepOutcome::Fault(fault), StepOutcome::Fault(fault_a)) => {
                // Identical faults on both sides keep the runs mirrored up
                // to the fault; anything else is a divergence below.
                if fault == fault_a {
                    return Err(SearchError::Fault { fault, path: path.clone() });
                }
                return Ok(divergence(path, &mc));
            }
            // One side terminated, faulted or branched while the other did
            // not: the abstraction changed observable control.
            _ => return Ok(divergence(path, &mc)),
        }
    }
}

fn divergence(path: &[WitnessStep], mc: &MachineState) -> Verdict {
    Verdict::CounterExample {
        path: path.to_vec(),
        address: mc.pc().known().unwrap_or(0) as Addr,
        register: Reg::PC,
    }
}

/// Register view for the equivalence condition: pc always agrees (checked
/// separately), other registers compare as stored.
fn read_for_check(s: &MachineState, r: Reg) -> ExtValue {
    if r == Reg::PC {
        s.pc()
    } else {
        s.reg(r)
    }
}
