//! Parameterized set-associative caches over a transaction-counted main
//! memory. A miss costs one bus transaction per `bus_width_bytes` slice of
//! the line (the PMT count), then the hit-speed transfer to the core. Bus
//! transactions are wall-clock time (memory speed is independent of the
//! core clock); the transfer is core-clock time.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Replacement {
    Fifo,
    Lru,
    /// Every access misses and no state is kept. Also the worst-case
    /// reading of a random-replacement cache.
    AlwaysMiss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteHit {
    WriteThrough,
    WriteBack,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WriteMiss {
    Allocate,
    NoAllocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheConfig {
    pub size_bytes: u32,
    pub line_bytes: u32,
    pub ways: u32,
    pub replacement: Replacement,
    pub write_hit: WriteHit,
    pub write_miss: WriteMiss,
    /// Core cycles for the cache-to-register transfer.
    pub hit_latency: u64,
    /// Wall units per main-memory bus transaction.
    pub mem_transaction_cycles: u64,
    /// Bytes moved per bus transaction.
    pub bus_width_bytes: u32,
}

impl CacheConfig {
    pub fn lines(&self) -> u32 {
        self.size_bytes / self.line_bytes
    }

    pub fn sets(&self) -> u32 {
        self.lines() / self.ways
    }

    /// Main-memory transactions needed to move one line.
    pub fn pmt(&self) -> u64 {
        self.line_bytes.div_ceil(self.bus_width_bytes) as u64
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.line_bytes == 0 || self.size_bytes == 0 || self.ways == 0 {
            return Err("cache geometry must be nonzero".into());
        }
        if !self.size_bytes.is_multiple_of(self.line_bytes) {
            return Err("cache size must be a multiple of the line size".into());
        }
        if !self.lines().is_multiple_of(self.ways) {
            return Err("way count must divide the line count".into());
        }
        if self.bus_width_bytes == 0 {
            return Err("bus width must be nonzero".into());
        }
        Ok(())
    }

    pub fn icache_default() -> Self {
        CacheConfig {
            size_bytes: 4096,
            line_bytes: 32,
            ways: 4,
            replacement: Replacement::Fifo,
            write_hit: WriteHit::WriteBack,
            write_miss: WriteMiss::Allocate,
            hit_latency: 1,
            mem_transaction_cycles: 10,
            bus_width_bytes: 4,
        }
    }

    pub fn dcache_default() -> Self {
        Self::icache_default()
    }
}

/// Split cost of one access: `core` ticks on the processor clock after
/// `wall` units of memory-transaction time.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AccessCost {
    pub core: u64,
    pub wall: u64,
}

impl AccessCost {
    /// Total latency in cycles when the core runs at full rate.
    pub fn total(&self) -> u64 {
        self.core + self.wall
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessKind {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Line {
    tag: u32,
    dirty: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheStats {
    pub hits: u64,
    pub misses: u64,
    pub writebacks: u64,
}

/// Cache contents: per set, an ordered line list with the eviction victim
/// at the front. FIFO order changes only on fill; LRU also moves a line to
/// the back on hit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheState {
    cfg: CacheConfig,
    sets: Vec<Vec<Line>>,
    pub stats: CacheStats,
}

impl CacheState {
    pub fn new(cfg: CacheConfig) -> Self {
        let sets = match cfg.replacement {
            Replacement::AlwaysMiss => Vec::new(),
            _ => vec![Vec::new(); cfg.sets() as usize],
        };
        CacheState { cfg, sets, stats: CacheStats::default() }
    }

    pub fn config(&self) -> &CacheConfig {
        &self.cfg
    }

    fn set_and_tag(&self, addr: u32) -> (usize, u32) {
        let block = addr / self.cfg.line_bytes;
        let set = (block % self.cfg.sets()) as usize;
        let tag = block / self.cfg.sets();
        (set, tag)
    }

    /// One access. Updates contents and statistics, returns the cost.
    pub fn access(&mut self, addr: u32, kind: AccessKind) -> AccessCost {
        let cfg = self.cfg;
        let fill_wall = cfg.pmt() * cfg.mem_transaction_cycles;
        if cfg.replacement == Replacement::AlwaysMiss {
            self.stats.misses += 1;
            return AccessCost { core: cfg.hit_latency, wall: fill_wall };
        }

        let (set_idx, tag) = self.set_and_tag(addr);
        let set = &mut self.sets[set_idx];
        if let Some(pos) = set.iter().position(|l| l.tag == tag) {
            self.stats.hits += 1;
            if cfg.replacement == Replacement::Lru {
                let line = set.remove(pos);
                set.push(line);
            }
            return match kind {
                AccessKind::Read => AccessCost { core: cfg.hit_latency, wall: 0 },
                AccessKind::Write => match cfg.write_hit {
                    WriteHit::WriteBack => {
                        let pos = set.iter().position(|l| l.tag == tag).unwrap();
                        set[pos].dirty = true;
                        AccessCost { core: cfg.hit_latency, wall: 0 }
                    }
                    // The word still goes out on the bus.
                    WriteHit::WriteThrough => {
                        AccessCost { core: cfg.hit_latency, wall: cfg.mem_transaction_cycles }
                    }
                },
            };
        }

        self.stats.misses += 1;
        if kind == AccessKind::Write && cfg.write_miss == WriteMiss::NoAllocate {
            // Memory write only, no fill.
            return AccessCost { core: 0, wall: cfg.mem_transaction_cycles };
        }

        let mut wall = fill_wall;
        if set.len() as u32 == cfg.ways {
            let victim = set.remove(0);
            if victim.dirty {
                // Serialized: write the dirty line back, then fill.
                wall += fill_wall;
                self.stats.writebacks += 1;
            }
        }
        let dirty = kind == AccessKind::Write && cfg.write_hit == WriteHit::WriteBack;
        set.push(Line { tag, dirty });
        if kind == AccessKind::Write && cfg.write_hit == WriteHit::WriteThrough {
            wall += cfg.mem_transaction_cycles;
        }
        AccessCost { core: cfg.hit_latency, wall }
    }

    /// Occupancy (tags, order, dirty bits) without statistics, for state
    /// memoization and reference-model comparison.
    pub fn contents(&self) -> Vec<Vec<(u32, bool)>> {
        self.sets
            .iter()
            .map(|set| set.iter().map(|l| (l.tag, l.dirty)).collect())
            .collect()
    }

    pub fn total_lines(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    pub fn max_set_len(&self) -> usize {
        self.sets.iter().map(Vec::len).max().unwrap_or(0)
    }
}

/// Whether the completion time of a fixed dispatch trace under `cfg` stays
/// at or below the completion time under always-miss caches with identical
/// other parameters.
pub fn worst_equivalence_check(
    trace: &[crate::machine::IssueRecord],
    tables: &crate::pipeline::TimingTables,
    cfg: &crate::arch::ArchConfig,
) -> bool {
    let mut miss_cfg = cfg.clone();
    miss_cfg.icache.replacement = Replacement::AlwaysMiss;
    miss_cfg.dcache.replacement = Replacement::AlwaysMiss;
    let real = crate::arch::simulate_trace(trace, tables, cfg);
    let worst = crate::arch::simulate_trace(trace, tables, &miss_cfg);
    real <= worst
}
