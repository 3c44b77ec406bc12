//! Combined architecture state: pipeline plus the two caches, with the
//! driver contract shared by the search, the simulator and the oracles
//! (issue when the fetch stage frees, flush on taken conditional branches,
//! drain at program end).

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::cache::{CacheConfig, CacheState};
use crate::isa::{DurationTable, InstrClass};
use crate::machine::IssueRecord;
use crate::pipeline::{ClockSchedule, PipelineState, TimingTables, TraceEvent};

/// Everything that defines the hardware: pipeline timing, the two caches
/// and the clock schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub icache: CacheConfig,
    pub dcache: CacheConfig,
    pub durations: DurationTable,
    pub schedule: ClockSchedule,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            icache: CacheConfig::icache_default(),
            dcache: CacheConfig::dcache_default(),
            durations: DurationTable::default(),
            schedule: ClockSchedule::default(),
        }
    }
}

/// Pipeline occupancy, cache contents and the global clock, cloned per
/// search branch.
#[derive(Debug, Clone)]
pub struct ArchState {
    pub pipeline: PipelineState,
    pub icache: CacheState,
    pub dcache: CacheState,
    tables: Arc<TimingTables>,
}

impl ArchState {
    pub fn new(cfg: &ArchConfig, tables: Arc<TimingTables>, trace_enabled: bool) -> Self {
        ArchState {
            pipeline: PipelineState::new(cfg.schedule, trace_enabled),
            icache: CacheState::new(cfg.icache),
            dcache: CacheState::new(cfg.dcache),
            tables,
        }
    }

    pub fn tables(&self) -> &Arc<TimingTables> {
        &self.tables
    }

    pub fn clock(&self) -> u64 {
        self.pipeline.clock
    }

    /// Feeds one dispatch into the pipeline, ticking until the fetch stage
    /// accepts it, then charges the mispredict flush for a taken
    /// conditional branch.
    pub fn feed(&mut self, rec: &IssueRecord) -> Vec<TraceEvent> {
        let mut events = Vec::new();
        let tables = self.tables.clone();
        loop {
            match self.pipeline.issue(rec.clone(), &tables, &mut self.icache, &mut events) {
                Ok(()) => break,
                Err(_) => events.extend(self.pipeline.tick(&tables, &mut self.dcache)),
            }
        }
        let class = tables.get(rec.instr_addr).class;
        if class == InstrClass::CondBranch && rec.branch_taken {
            self.pipeline.apply_branch_flush(rec.instr_addr, &mut self.icache);
        }
        events
    }

    /// Runs the pipeline dry and returns the completion clock.
    pub fn drain(&mut self) -> (u64, Vec<TraceEvent>) {
        let mut events = Vec::new();
        let tables = self.tables.clone();
        let t = self.pipeline.drain(&tables, &mut self.dcache, &mut events);
        (t, events)
    }

    /// Exact state key without clocks, statistics or sequence numbers, for
    /// memoization. Two states with equal keys evolve identically modulo a
    /// constant time shift.
    pub fn memo_key(&self) -> ArchKey {
        ArchKey {
            pipeline: self.pipeline.memo_parts(),
            icache: self.icache.contents(),
            dcache: self.dcache.contents(),
        }
    }
}

/// Owned, exact architecture fingerprint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ArchKey {
    pipeline: crate::pipeline::PipelineMemoParts,
    icache: Vec<Vec<(u32, bool)>>,
    dcache: Vec<Vec<(u32, bool)>>,
}

/// Completion time of a fixed dispatch trace on a fresh architecture.
pub fn simulate_trace(
    trace: &[IssueRecord],
    tables: &TimingTables,
    cfg: &ArchConfig,
) -> u64 {
    let mut arch = ArchState::new(cfg, Arc::new(tables.clone()), false);
    for rec in trace {
        arch.feed(rec);
    }
    arch.drain().0
}
