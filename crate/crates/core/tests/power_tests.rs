//! Slow-clock window tests: schedule identities, monotonicity in the
//! switch time, and hand-computed windows on toy programs.

mod common;

use common::{bundled, load};
use wcet_core::power::{max_free_slow_window, wcet_under_schedule, ClockSchedule};
use wcet_core::search::{compute_wcet, AnalysisConfig};

#[test]
fn zero_window_is_the_plain_wcet() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let base = compute_wcet(&p, &meta, &cfg).unwrap().wcet;
        let under =
            wcet_under_schedule(&p, &meta, &cfg, ClockSchedule { slow_factor: 4, switch_time: 0 })
                .unwrap();
        assert_eq!(base, under, "{name}");
    }
}

#[test]
fn unit_factor_is_the_identity() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let base = compute_wcet(&p, &meta, &cfg).unwrap().wcet;
        for t in [1u64, 17, 1000, 100_000] {
            let under = wcet_under_schedule(
                &p,
                &meta,
                &cfg,
                ClockSchedule { slow_factor: 1, switch_time: t },
            )
            .unwrap();
            assert_eq!(base, under, "{name} at t={t}");
        }
    }
}

#[test]
fn wcet_is_nondecreasing_in_the_switch_time() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let base = compute_wcet(&p, &meta, &cfg).unwrap().wcet;
        let mut prev = 0u64;
        let samples = 9;
        for k in 0..=samples {
            let t = base * k / samples;
            let w = wcet_under_schedule(
                &p,
                &meta,
                &cfg,
                ClockSchedule { slow_factor: 4, switch_time: t },
            )
            .unwrap();
            assert!(w >= prev, "{name}: wcet({t}) = {w} < {prev}");
            prev = w;
        }
    }
}

/// Single-return toy: the first fetch is one cold miss (80 wall units of
/// bus transactions, then the 1-cycle transfer), followed by four 1-cycle
/// stages. Core work starts at wall 80, so any window up to 80 is free and
/// 81 is not, by hand:
///   wcet(0)  = 80 + 1 + 4 = 85
///   wcet(80) = 85, wcet(81) = 80 + 4 + 4 = 88.
#[test]
fn cold_miss_toy_window_by_hand() {
    let text = "00000000 <main>:\n 0: mov pc, lr\n";
    let (p, meta) = load(text);
    let cfg = AnalysisConfig::default();
    let base = compute_wcet(&p, &meta, &cfg).unwrap().wcet;
    assert_eq!(base, 85);
    let at = |t: u64| {
        wcet_under_schedule(&p, &meta, &cfg, ClockSchedule { slow_factor: 4, switch_time: t })
            .unwrap()
    };
    assert_eq!(at(80), 85);
    assert_eq!(at(81), 88);
    let report = max_free_slow_window(&p, &meta, &cfg, 4).unwrap();
    assert_eq!(report.t_star, 80);
    assert_eq!(report.wcet, 85);
    assert!((report.ratio - 80.0 / 85.0).abs() < 1e-9);
}

/// With zero-cost memory transactions every cycle is core work, so no
/// slow window is free.
#[test]
fn no_memory_latency_means_no_free_window() {
    let text = "00000000 <main>:\n 0: mov r1, #7\n 4: add r1, r1, #1\n 8: mov pc, lr\n";
    let (p, meta) = load(text);
    let mut cfg = AnalysisConfig::default();
    cfg.arch.icache.mem_transaction_cycles = 0;
    cfg.arch.dcache.mem_transaction_cycles = 0;
    let report = max_free_slow_window(&p, &meta, &cfg, 4).unwrap();
    assert_eq!(report.t_star, 0);
    assert_eq!(report.ratio, 0.0);
}

#[test]
fn window_search_is_tight_on_bundled_programs() {
    for (name, p, meta) in bundled() {
        let cfg = AnalysisConfig::default();
        let report = max_free_slow_window(&p, &meta, &cfg, 4).unwrap();
        let at = |t: u64| {
            wcet_under_schedule(&p, &meta, &cfg, ClockSchedule { slow_factor: 4, switch_time: t })
                .unwrap()
        };
        assert_eq!(at(report.t_star), report.wcet, "{name}: T* leaves the WCET unchanged");
        if report.t_star < report.wcet {
            assert!(
                at(report.t_star + 1) > report.wcet,
                "{name}: T* must be maximal"
            );
        }
        assert!(report.ratio >= 0.0 && report.ratio <= 1.0);
    }
}

#[test]
fn larger_slow_factors_never_shrink_the_wcet() {
    let (p, meta) = load(common::DIAMOND);
    let cfg = AnalysisConfig::default();
    let t = 40;
    let mut prev = 0;
    for factor in 1..=6 {
        let w = wcet_under_schedule(
            &p,
            &meta,
            &cfg,
            ClockSchedule { slow_factor: factor, switch_time: t },
        )
        .unwrap();
        assert!(w >= prev, "factor {factor}");
        prev = w;
    }
}
