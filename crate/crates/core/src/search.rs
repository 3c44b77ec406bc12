//! The game solver: exhaustive exploration of the adversary tree, each
//! path simulated cycle-accurately, the WCET being the maximum completion
//! time with a witness strategy attached.
//!
//! The program never revisits a state (runs are bounded and loop-free in
//! state space), so no visited set is kept; an optional exact memo over
//! (machine, architecture) states can be enabled for programs whose
//! adversary branches reconverge.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::arch::{ArchConfig, ArchState};
use crate::isa::{Addr, IsaError, Program, ProgramMeta};
use crate::machine::{
    init_state, outcome_compatible, step, ConcreteInputs, ExecCtx, Fault, MachineConfig,
    MachineState, OutcomeClass, StepOutcome,
};
use crate::pipeline::{TimingTables, TraceEvent};

/// Exploration bounds. The run-length bound `k_p` lives in the machine
/// configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Limits {
    pub max_states: u64,
    pub max_splits: u64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits { max_states: 10_000_000, max_splits: 1 << 20 }
    }
}

/// Forced outcome subsets per comparison address, pruning the adversary
/// tree. Unsound if the constraints are wrong; reports flag their use.
pub type ConstraintMap = BTreeMap<Addr, Vec<OutcomeClass>>;

/// Full analysis configuration.
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub arch: ArchConfig,
    pub machine: MachineConfig,
    pub limits: Limits,
    /// Search worker count; results are independent of it.
    pub jobs: usize,
    /// Exact memoization over (machine, architecture) states.
    pub memo: bool,
    pub constraints: Option<ConstraintMap>,
    /// Addresses executed as footprint-identical no-ops.
    pub abstracted: Option<BTreeSet<Addr>>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            arch: ArchConfig::default(),
            machine: MachineConfig::default(),
            limits: Limits::default(),
            jobs: 1,
            memo: false,
            constraints: None,
            abstracted: None,
        }
    }
}

/// One adversary move of the winning strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WitnessStep {
    pub address: Addr,
    pub outcome: OutcomeClass,
}

/// Analysis result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcetReport {
    /// Worst-case completion time in wall cycles.
    pub wcet: u64,
    /// Best case over the same leaves, informational.
    pub bcet: u64,
    /// Adversary choices achieving `wcet`; ties break toward the
    /// lexicographically smallest sequence.
    pub witness: Vec<WitnessStep>,
    /// Choice points with at least two consistent outcomes, total.
    pub splits: u64,
    /// Number of explored paths.
    pub leaves: u64,
    /// Machine steps executed over the whole tree.
    pub states: u64,
    /// High-water mark of tracked stack words over all paths.
    pub max_stack_depth: u32,
    /// Maximum adversary moves along any single path.
    pub max_moves_per_path: u64,
    /// Non-fatal diagnostics (pruned infeasible paths and the like).
    pub faults: Vec<String>,
    /// True when user constraints pruned the tree.
    pub constrained: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LimitKind {
    MaxStates,
    MaxSplits,
    RunBound,
}

impl std::fmt::Display for LimitKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LimitKind::MaxStates => write!(f, "max_states"),
            LimitKind::MaxSplits => write!(f, "max_splits"),
            LimitKind::RunBound => write!(f, "k_p"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("{which} limit exceeded after {states} states / {splits} splits; pending comparisons at {pending:x?}")]
    LimitExceeded {
        which: LimitKind,
        states: u64,
        splits: u64,
        pending: Vec<Addr>,
    },
    #[error("fault on an explored path: {fault}")]
    Fault { fault: Fault, path: Vec<WitnessStep> },
    #[error("{at:#x}: run is not input-determined")]
    NondeterministicRun { at: Addr },
    #[error("witness does not match the adversary tree{}", .at.map(|a| format!(" at {a:#x}")).unwrap_or_default())]
    WitnessMismatch { at: Option<Addr> },
    #[error("the outcome constraints exclude every path")]
    AllPathsPruned,
    #[error(transparent)]
    Isa(#[from] IsaError),
}

/// Per-subtree result; merging is associative and commutative thanks to
/// the total tie-break order, so worker count cannot affect it.
#[derive(Debug, Clone)]
struct SubtreeStats {
    wcet: u64,
    witness: Vec<WitnessStep>,
    bcet: u64,
    leaves: u64,
    splits: u64,
    moves: u64,
    max_stack: u32,
}

impl SubtreeStats {
    fn leaf(time: u64, witness: Vec<WitnessStep>, moves: u64, max_stack: u32) -> Self {
        SubtreeStats { wcet: time, witness, bcet: time, leaves: 1, splits: 0, moves, max_stack }
    }

    fn merge(a: Option<SubtreeStats>, b: Option<SubtreeStats>) -> Option<SubtreeStats> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(mut a), Some(b)) => {
                if b.wcet > a.wcet || (b.wcet == a.wcet && b.witness < a.witness) {
                    a.wcet = b.wcet;
                    a.witness = b.witness;
                }
                a.bcet = a.bcet.min(b.bcet);
                a.leaves += b.leaves;
                a.splits += b.splits;
                a.moves = a.moves.max(b.moves);
                a.max_stack = a.max_stack.max(b.max_stack);
                Some(a)
            }
        }
    }
}

struct MemoEntry {
    wcet_delta: u64,
    bcet_delta: u64,
    witness_suffix: Vec<WitnessStep>,
    leaves: u64,
    splits: u64,
    moves_below: u64,
    max_stack: u32,
}

type MemoKey = (MachineState, crate::arch::ArchKey);

struct Shared<'a> {
    ctx: ExecCtx<'a>,
    limits: Limits,
    constraints: Option<&'a ConstraintMap>,
    states: AtomicU64,
    splits: AtomicU64,
    pruned: AtomicU64,
    parallel: bool,
    memo: Option<Mutex<HashMap<MemoKey, MemoEntry>>>,
}

impl Shared<'_> {
    fn bump_states(&self, at: Addr) -> Result<(), SearchError> {
        let n = self.states.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.limits.max_states {
            return Err(self.limit(LimitKind::MaxStates, vec![at]));
        }
        Ok(())
    }

    fn bump_splits(&self, at: Addr) -> Result<(), SearchError> {
        let n = self.splits.fetch_add(1, Ordering::Relaxed) + 1;
        if n > self.limits.max_splits {
            return Err(self.limit(LimitKind::MaxSplits, vec![at]));
        }
        Ok(())
    }

    fn limit(&self, which: LimitKind, pending: Vec<Addr>) -> SearchError {
        SearchError::LimitExceeded {
            which,
            states: self.states.load(Ordering::Relaxed),
            splits: self.splits.load(Ordering::Relaxed),
            pending,
        }
    }
}

/// Builds the timing tables and initial architecture for a configuration.
pub fn build_arch(p: &Program, cfg: &AnalysisConfig) -> ArchState {
    let tables = Arc::new(TimingTables::from_program(p, &cfg.arch.durations));
    ArchState::new(&cfg.arch, tables, false)
}

/// Computes the WCET of `p` under `cfg` by exhaustive adversarial search.
pub fn compute_wcet(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
) -> Result<WcetReport, SearchError> {
    let ctx = ExecCtx {
        program: p,
        meta,
        cfg: &cfg.machine,
        abstracted: cfg.abstracted.as_ref(),
    };
    // Memoized subtree times are reused as clock-relative deltas, which is
    // only valid while the clock rate is uniform.
    let memo_enabled = cfg.memo && cfg.arch.schedule.switch_time == 0;
    let shared = Shared {
        ctx,
        limits: cfg.limits,
        constraints: cfg.constraints.as_ref(),
        states: AtomicU64::new(0),
        splits: AtomicU64::new(0),
        pruned: AtomicU64::new(0),
        parallel: cfg.jobs > 1,
        memo: memo_enabled.then(|| Mutex::new(HashMap::new())),
    };
    let machine = init_state(&ctx);
    let arch = build_arch(p, cfg);

    let run = || explore(&shared, machine, arch, Vec::new(), 0);
    let result = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .expect("worker pool");
        pool.install(run)?
    } else {
        run()?
    };

    // No surviving leaf means the constraints contradicted each other.
    let Some(stats) = result else { return Err(SearchError::AllPathsPruned) };

    let mut faults = Vec::new();
    let pruned = shared.pruned.load(Ordering::Relaxed);
    if pruned > 0 {
        faults.push(format!("{pruned} outcome branch(es) pruned by constraints"));
    }
    Ok(WcetReport {
        wcet: stats.wcet,
        bcet: stats.bcet,
        witness: stats.witness,
        splits: stats.splits,
        leaves: stats.leaves,
        states: shared.states.load(Ordering::Relaxed),
        max_stack_depth: stats.max_stack,
        max_moves_per_path: stats.moves,
        faults,
        constrained: cfg.constraints.is_some(),
    })
}

/// Depth-first exploration. Deterministic segments run in a loop; the
/// recursion happens only at adversary choice points.
fn explore(
    shared: &Shared,
    mut machine: MachineState,
    mut arch: ArchState,
    path: Vec<WitnessStep>,
    moves: u64,
) -> Result<Option<SubtreeStats>, SearchError> {
    loop {
        match step(&shared.ctx, &machine) {
            StepOutcome::Deterministic { next, issue } => {
                shared.bump_states(issue.instr_addr)?;
                arch.feed(&issue);
                machine = next;
            }
            StepOutcome::Terminated => {
                let (time, _) = arch.drain();
                return Ok(Some(SubtreeStats::leaf(
                    time,
                    path,
                    moves,
                    machine.max_stack_words,
                )));
            }
            StepOutcome::Fault(Fault::RunBound { at }) => {
                return Err(shared.limit(LimitKind::RunBound, vec![at]));
            }
            StepOutcome::Fault(fault) => {
                return Err(SearchError::Fault { fault, path });
            }
            StepOutcome::AdversaryChoice { issue, choices, .. } => {
                let at = issue.instr_addr;
                shared.bump_states(at)?;
                arch.feed(&issue);

                let mut kept: Vec<(OutcomeClass, MachineState)> = choices;
                if let Some(allowed) = shared.constraints.and_then(|c| c.get(&at)) {
                    let before = kept.len();
                    kept.retain(|(o, _)| allowed.iter().any(|a| outcome_compatible(o, a)));
                    let dropped = (before - kept.len()) as u64;
                    if dropped > 0 {
                        shared.pruned.fetch_add(dropped, Ordering::Relaxed);
                    }
                }
                if kept.is_empty() {
                    // Every outcome at this comparison was declared
                    // infeasible: the path contributes no leaf.
                    return Ok(None);
                }

                let real_split = kept.len() > 1;
                let child_moves = moves + real_split as u64;
                if real_split {
                    shared.bump_splits(at)?;
                }

                // The pre-choice machine state determines the whole
                // subtree together with the post-feed architecture state.
                let memo_key = shared
                    .memo
                    .as_ref()
                    .map(|_| (machine.clone(), arch.memo_key()));
                if let (Some(memo), Some(key)) = (&shared.memo, &memo_key) {
                    if let Some(entry) = memo.lock().unwrap().get(key) {
                        return Ok(Some(subtree_from_memo(entry, &arch, &path, moves)));
                    }
                }

                let base_clock = arch.clock();
                let branch = |(outcome, m): &(OutcomeClass, MachineState)| {
                    let mut child_path = path.clone();
                    child_path.push(WitnessStep { address: at, outcome: *outcome });
                    explore(shared, m.clone(), arch.clone(), child_path, child_moves)
                };

                let results: Vec<Result<Option<SubtreeStats>, SearchError>> =
                    if shared.parallel && real_split {
                        use rayon::prelude::*;
                        kept.par_iter().map(branch).collect()
                    } else {
                        kept.iter().map(branch).collect()
                    };

                let mut merged: Option<SubtreeStats> = None;
                for r in results {
                    merged = SubtreeStats::merge(merged, r?);
                }
                let merged = merged.map(|mut s| {
                    s.splits += real_split as u64;
                    s
                });

                if let (Some(memo), Some(key), Some(stats)) = (&shared.memo, memo_key, &merged)
                {
                    memo.lock().unwrap().insert(
                        key,
                        MemoEntry {
                            wcet_delta: stats.wcet.saturating_sub(base_clock),
                            bcet_delta: stats.bcet.saturating_sub(base_clock),
                            witness_suffix: stats.witness[path.len()..].to_vec(),
                            leaves: stats.leaves,
                            splits: stats.splits,
                            moves_below: stats.moves - moves,
                            max_stack: stats.max_stack,
                        },
                    );
                }
                return Ok(merged);
            }
        }
    }
}

fn subtree_from_memo(
    entry: &MemoEntry,
    arch: &ArchState,
    path: &[WitnessStep],
    moves: u64,
) -> SubtreeStats {
    let mut witness = path.to_vec();
    witness.extend_from_slice(&entry.witness_suffix);
    SubtreeStats {
        wcet: arch.clock() + entry.wcet_delta,
        bcet: arch.clock() + entry.bcet_delta,
        witness,
        leaves: entry.leaves,
        splits: entry.splits,
        moves: moves + entry.moves_below,
        max_stack: entry.max_stack,
    }
}

/// Deterministic re-simulation of a witness; the returned time equals the
/// report's WCET for the report's own witness.
pub fn replay(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    witness: &[WitnessStep],
) -> Result<(u64, Vec<TraceEvent>), SearchError> {
    let ctx = ExecCtx {
        program: p,
        meta,
        cfg: &cfg.machine,
        abstracted: cfg.abstracted.as_ref(),
    };
    let mut machine = init_state(&ctx);
    let mut arch = build_arch(p, cfg);
    let mut events = Vec::new();
    let mut next_choice = 0usize;
    loop {
        match step(&ctx, &machine) {
            StepOutcome::Deterministic { next, issue } => {
                events.extend(arch.feed(&issue));
                machine = next;
            }
            StepOutcome::Terminated => {
                let (time, ev) = arch.drain();
                events.extend(ev);
                if next_choice != witness.len() {
                    return Err(SearchError::WitnessMismatch { at: None });
                }
                return Ok((time, events));
            }
            StepOutcome::Fault(fault) => {
                return Err(SearchError::Fault { fault, path: witness[..next_choice].to_vec() })
            }
            StepOutcome::AdversaryChoice { issue, choices, .. } => {
                let at = issue.instr_addr;
                events.extend(arch.feed(&issue));
                let Some(step_taken) = witness.get(next_choice) else {
                    return Err(SearchError::WitnessMismatch { at: Some(at) });
                };
                if step_taken.address != at {
                    return Err(SearchError::WitnessMismatch { at: Some(at) });
                }
                let Some((_, m)) = choices.iter().find(|(o, _)| *o == step_taken.outcome)
                else {
                    return Err(SearchError::WitnessMismatch { at: Some(at) });
                };
                machine = m.clone();
                next_choice += 1;
            }
        }
    }
}

/// Cycle count of the unique run on fully determined inputs, with the
/// per-cycle trace when `trace` is set. Dispatches stream straight into
/// the pipeline; an adversary point means the inputs left a comparison
/// undetermined.
pub fn simulate_single(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    inputs: &ConcreteInputs,
    trace: bool,
) -> Result<(u64, Vec<TraceEvent>), SearchError> {
    let ctx = ExecCtx::new(p, meta, &cfg.machine);
    let mut machine = init_state(&ctx);
    machine.concrete_mem = true;
    for (&r, &v) in &inputs.regs {
        if r != crate::isa::Reg::PC {
            machine.set_reg(r, crate::machine::ExtValue::Known(v));
        }
    }
    for (&a, &v) in &inputs.mem {
        machine.mem.insert(a, crate::machine::ExtValue::Known(v));
    }
    let tables = Arc::new(TimingTables::from_program(p, &cfg.arch.durations));
    let mut arch = ArchState::new(&cfg.arch, tables, trace);
    let mut events = Vec::new();
    loop {
        match step(&ctx, &machine) {
            StepOutcome::Deterministic { next, issue } => {
                events.extend(arch.feed(&issue));
                machine = next;
            }
            StepOutcome::Terminated => {
                let (time, ev) = arch.drain();
                events.extend(ev);
                return Ok((time, events));
            }
            StepOutcome::AdversaryChoice { issue, .. } => {
                return Err(SearchError::NondeterministicRun { at: issue.instr_addr })
            }
            StepOutcome::Fault(fault) => {
                return Err(SearchError::Fault { fault, path: vec![] })
            }
        }
    }
}
