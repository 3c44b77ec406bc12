//! Slow-clock window analysis: the processor starts at a fraction of full
//! rate and switches to full rate at a configurable wall time. Memory
//! transactions cost fixed wall time regardless of the core rate, so an
//! initial window hidden under cold-miss fills is free; this module finds
//! the longest such window.

use serde::Serialize;

pub use crate::pipeline::ClockSchedule;

use crate::isa::{Program, ProgramMeta};
use crate::search::{compute_wcet, AnalysisConfig, SearchError};

/// WCET in wall units under a clock schedule: identical adversarial
/// search, with core cycles before the switch costing `slow_factor` wall
/// units each.
pub fn wcet_under_schedule(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    sched: ClockSchedule,
) -> Result<u64, SearchError> {
    let mut c = cfg.clone();
    c.arch.schedule = sched;
    compute_wcet(p, meta, &c).map(|r| r.wcet)
}

/// Result of the window search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlowWindowReport {
    /// Largest switch time leaving the WCET unchanged, in wall units.
    pub t_star: u64,
    /// Baseline WCET (no slow window).
    pub wcet: u64,
    /// t_star / wcet.
    pub ratio: f64,
    pub slow_factor: u64,
}

/// Binary search for the largest switch time with an unchanged WCET.
/// Valid because the WCET is nondecreasing in the switch time on this
/// anomaly-free model.
pub fn max_free_slow_window(
    p: &Program,
    meta: &ProgramMeta,
    cfg: &AnalysisConfig,
    slow_factor: u64,
) -> Result<SlowWindowReport, SearchError> {
    let base = wcet_under_schedule(
        p,
        meta,
        cfg,
        ClockSchedule { slow_factor, switch_time: 0 },
    )?;
    let eval = |t: u64| -> Result<u64, SearchError> {
        wcet_under_schedule(p, meta, cfg, ClockSchedule { slow_factor, switch_time: t })
    };

    let mut lo = 0u64;
    let mut hi = base;
    if eval(hi)? == base {
        lo = hi;
    } else {
        while lo < hi {
            let mid = lo + (hi - lo).div_ceil(2);
            if eval(mid)? == base {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
    }
    Ok(SlowWindowReport {
        t_star: lo,
        wcet: base,
        ratio: if base == 0 { 0.0 } else { lo as f64 / base as f64 },
        slow_factor,
    })
}
