//! Cycle-accurate five-stage in-order pipeline with stall rules,
//! never-taken branch prediction and mispredict flush.
//!
//! Stage occupancy is charged as wall-time memory transactions first, then
//! core-clock work: a fetch or data access that misses waits out the bus
//! transactions (fixed wall units) before the transfer (core cycles). With
//! a flat clock schedule the two ledgers coincide with plain cycles.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cache::{AccessCost, AccessKind, CacheState};
use crate::isa::{
    classify, reg_read_set, reg_write_set, stage_duration, Addr, DurationTable, InstrClass,
    Program, Reg, Stage, STAGES,
};
use crate::machine::IssueRecord;

/// Core-clock schedule: cycles starting before `switch_time` (wall units)
/// cost `slow_factor` wall units, later ones cost 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClockSchedule {
    pub slow_factor: u64,
    pub switch_time: u64,
}

impl Default for ClockSchedule {
    fn default() -> Self {
        ClockSchedule { slow_factor: 4, switch_time: 0 }
    }
}

impl ClockSchedule {
    pub fn rate(&self, wall_now: u64) -> u64 {
        if wall_now < self.switch_time {
            self.slow_factor.max(1)
        } else {
            1
        }
    }
}

/// Static timing facts for one instruction address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct InstrTiming {
    pub class: InstrClass,
    /// Bitmask over r0..r15 of registers read.
    pub reads: u16,
    /// Bitmask over r0..r15 of registers written.
    pub writes: u16,
    /// Per-stage configured durations; the memory entry is the total for
    /// multiple transfers.
    pub durations: [u32; 5],
    /// Base core cycles per individual memory transfer.
    pub per_transfer: u32,
}

fn mask(set: &std::collections::BTreeSet<Reg>) -> u16 {
    set.iter().fold(0u16, |m, r| m | 1 << r.index())
}

/// Address-indexed timing facts, precomputed from a program or assembled
/// by hand for synthetic traces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TimingTables {
    map: BTreeMap<Addr, InstrTiming>,
}

impl TimingTables {
    pub fn from_program(p: &Program, table: &DurationTable) -> Self {
        let mut map = BTreeMap::new();
        for (addr, instr) in &p.instructions {
            let class = classify(instr);
            let durations: [u32; 5] =
                STAGES.map(|stage| stage_duration(instr, stage, table));
            let per_transfer = match class {
                InstrClass::MultiLoad | InstrClass::MultiStore => table.multi_per_register,
                _ => durations[Stage::Memory.index()],
            };
            map.insert(
                *addr,
                InstrTiming {
                    class,
                    reads: mask(&reg_read_set(instr)),
                    writes: mask(&reg_write_set(instr)),
                    durations,
                    per_transfer,
                },
            );
        }
        TimingTables { map }
    }

    pub fn insert(&mut self, addr: Addr, timing: InstrTiming) {
        self.map.insert(addr, timing);
    }

    pub fn get(&self, addr: Addr) -> &InstrTiming {
        self.map
            .get(&addr)
            .unwrap_or_else(|| panic!("no timing entry for {addr:#x}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TraceAction {
    Enter,
    Retire,
    Stall,
    PhantomFetch,
}

/// One line of the per-cycle event log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub cycle: u64,
    pub stage: Stage,
    pub instr_addr: Option<Addr>,
    pub action: TraceAction,
}

impl std::fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let action = match self.action {
            TraceAction::Enter => "enter",
            TraceAction::Retire => "retire",
            TraceAction::Stall => "stall",
            TraceAction::PhantomFetch => "phantom-fetch",
        };
        let addr = match self.instr_addr {
            Some(a) => format!("{a:#x}"),
            None => "-".into(),
        };
        write!(f, "{},{},{},{}", self.cycle, self.stage.name(), addr, action)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
struct Occupant {
    rec: IssueRecord,
    wall_left: u64,
    core_left: u64,
    seq: u64,
}

/// Tried to issue into an occupied or flush-busy fetch stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Busy;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineState {
    stages: [Option<Occupant>; 5],
    /// Global clock in wall units.
    pub clock: u64,
    schedule: ClockSchedule,
    /// Pending phantom instruction reads from a mispredicted branch; the
    /// fetch stage must drain them before accepting the branch target.
    phantoms: VecDeque<AccessCost>,
    next_seq: u64,
    retired: u64,
    trace_enabled: bool,
}

impl PipelineState {
    pub fn new(schedule: ClockSchedule, trace_enabled: bool) -> Self {
        PipelineState {
            stages: Default::default(),
            clock: 0,
            schedule,
            phantoms: VecDeque::new(),
            next_seq: 0,
            retired: 0,
            trace_enabled,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.stages.iter().all(Option::is_none)
    }

    pub fn retired(&self) -> u64 {
        self.retired
    }

    pub fn can_issue(&self) -> bool {
        self.stages[0].is_none() && self.phantoms.is_empty()
    }

    /// Places `rec` in the fetch stage, charging the instruction-cache
    /// access for its address.
    pub fn issue(
        &mut self,
        rec: IssueRecord,
        tables: &TimingTables,
        icache: &mut CacheState,
        events: &mut Vec<TraceEvent>,
    ) -> Result<(), Busy> {
        if !self.can_issue() {
            return Err(Busy);
        }
        let timing = tables.get(rec.instr_addr);
        let access = icache.access(rec.instr_addr, AccessKind::Read);
        let occ = Occupant {
            wall_left: access.wall,
            core_left: (timing.durations[Stage::Fetch.index()] as u64).max(access.core),
            seq: self.next_seq,
            rec,
        };
        self.next_seq += 1;
        if self.trace_enabled {
            events.push(TraceEvent {
                cycle: self.clock,
                stage: Stage::Fetch,
                instr_addr: Some(occ.rec.instr_addr),
                action: TraceAction::Enter,
            });
        }
        self.stages[0] = Some(occ);
        Ok(())
    }

    /// Charges the two never-taken-predicted sequential fetches of a taken
    /// conditional branch. The phantom reads update the instruction cache
    /// but inject nothing downstream.
    pub fn apply_branch_flush(&mut self, branch_addr: Addr, icache: &mut CacheState) {
        for offset in [4u32, 8u32] {
            let cost = icache.access(branch_addr.wrapping_add(offset), AccessKind::Read);
            self.phantoms.push_back(cost);
        }
    }

    /// Advances one processor cycle.
    pub fn tick(&mut self, tables: &TimingTables, dcache: &mut CacheState) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        let rate = self.schedule.rate(self.clock);
        self.clock += rate;

        // The fetch unit does one thing per cycle: it replays a phantom
        // read only when the fetch stage was free at the start of it.
        let fetch_free_at_start = self.stages[0].is_none();

        // Hazards are judged against start-of-cycle occupancy.
        let mem_snapshot = self.stages[Stage::Memory.index()]
            .as_ref()
            .filter(|o| o.rec.scheduled)
            .map(|o| {
                let t = tables.get(o.rec.instr_addr);
                (t.class, t.writes)
            });

        for k in (0..5).rev() {
            let Some(occ) = self.stages[k].as_mut() else { continue };
            if occ.wall_left > 0 {
                occ.wall_left = occ.wall_left.saturating_sub(rate);
            } else if occ.core_left > 0 {
                let stalled = k == Stage::Execute.index()
                    && occ.rec.scheduled
                    && hazard_stall(tables.get(occ.rec.instr_addr), mem_snapshot);
                if stalled {
                    if self.trace_enabled {
                        events.push(TraceEvent {
                            cycle: self.clock,
                            stage: Stage::Execute,
                            instr_addr: Some(occ.rec.instr_addr),
                            action: TraceAction::Stall,
                        });
                    }
                } else {
                    occ.core_left -= 1;
                }
            }
            let done = {
                let occ = self.stages[k].as_ref().unwrap();
                occ.wall_left == 0 && occ.core_left == 0
            };
            if !done {
                continue;
            }
            if k == Stage::Writeback.index() {
                let occ = self.stages[k].take().unwrap();
                self.retired += 1;
                if self.trace_enabled {
                    events.push(TraceEvent {
                        cycle: self.clock,
                        stage: Stage::Writeback,
                        instr_addr: Some(occ.rec.instr_addr),
                        action: TraceAction::Retire,
                    });
                }
            } else if self.stages[k + 1].is_none() {
                let mut occ = self.stages[k].take().unwrap();
                let stage = STAGES[k + 1];
                let (wall, core) = stage_entry_cost(&occ.rec, stage, tables, dcache);
                occ.wall_left = wall;
                occ.core_left = core;
                if self.trace_enabled {
                    events.push(TraceEvent {
                        cycle: self.clock,
                        stage,
                        instr_addr: Some(occ.rec.instr_addr),
                        action: TraceAction::Enter,
                    });
                }
                self.stages[k + 1] = Some(occ);
            }
            // Otherwise the downstream stage is full: the occupant waits,
            // and the stall propagates backwards by occupancy.
        }

        debug_assert!(self.in_order());

        // The fetch unit replays the mispredicted sequential reads while
        // stage 1 is free.
        if fetch_free_at_start {
            if let Some(front) = self.phantoms.front_mut() {
                if front.wall > 0 {
                    front.wall = front.wall.saturating_sub(rate);
                } else if front.core > 0 {
                    front.core -= 1;
                }
                if self.trace_enabled {
                    events.push(TraceEvent {
                        cycle: self.clock,
                        stage: Stage::Fetch,
                        instr_addr: None,
                        action: TraceAction::PhantomFetch,
                    });
                }
                if front.wall == 0 && front.core == 0 {
                    self.phantoms.pop_front();
                }
            }
        }

        events
    }

    /// Ticks until every stage is empty; returns the completion clock.
    pub fn drain(
        &mut self,
        tables: &TimingTables,
        dcache: &mut CacheState,
        events: &mut Vec<TraceEvent>,
    ) -> u64 {
        while !self.is_empty() {
            events.extend(self.tick(tables, dcache));
        }
        self.clock
    }

    /// Issue order is preserved across stages.
    fn in_order(&self) -> bool {
        let seqs: Vec<u64> = self.stages.iter().flatten().map(|o| o.seq).collect();
        seqs.windows(2).all(|w| w[0] > w[1])
    }

    /// Occupancy fingerprint without the clock or issue sequence numbers,
    /// for state memoization.
    pub fn memo_parts(&self) -> PipelineMemoParts {
        PipelineMemoParts {
            stages: self
                .stages
                .iter()
                .map(|s| s.as_ref().map(|o| (o.rec.clone(), o.wall_left, o.core_left)))
                .collect(),
            phantoms: self.phantoms.iter().copied().collect(),
        }
    }
}

/// Owned pipeline fingerprint for memo keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PipelineMemoParts {
    stages: Vec<Option<(IssueRecord, u64, u64)>>,
    phantoms: Vec<AccessCost>,
}

/// Stage-entry costs. The memory stage of a scheduled load/store performs
/// its data-cache transfers here, one per cycle at best; every other entry
/// costs the configured duration.
fn stage_entry_cost(
    rec: &IssueRecord,
    stage: Stage,
    tables: &TimingTables,
    dcache: &mut CacheState,
) -> (u64, u64) {
    let timing = tables.get(rec.instr_addr);
    if stage == Stage::Memory && rec.scheduled && !rec.data_addrs.is_empty() {
        let kind = match timing.class {
            InstrClass::Store | InstrClass::MultiStore => AccessKind::Write,
            _ => AccessKind::Read,
        };
        let mut wall = 0u64;
        let mut core = 0u64;
        for &addr in &rec.data_addrs {
            let cost = dcache.access(addr, kind);
            wall += cost.wall;
            core += (timing.per_transfer as u64).max(cost.core);
        }
        return (wall, core);
    }
    (0, timing.durations[stage.index()] as u64)
}

/// The two stall sources: a load-use dependency on a load in the memory
/// stage, and any multiple transfer occupying the memory stage.
fn hazard_stall(exec: &InstrTiming, mem: Option<(InstrClass, u16)>) -> bool {
    let Some((mem_class, mem_writes)) = mem else { return false };
    match mem_class {
        InstrClass::MultiLoad | InstrClass::MultiStore => true,
        InstrClass::Load => exec.reads & mem_writes != 0,
        _ => false,
    }
}
