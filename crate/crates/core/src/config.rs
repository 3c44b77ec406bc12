//! INI-style configuration loading: sections `[icache]`, `[dcache]`,
//! `[memory]`, `[pipeline]`, `[limits]`, `[machine]`, `[power]`, plus the
//! constraint-file format and the `arm9-paper` preset.

use std::collections::BTreeMap;

use crate::cache::{CacheConfig, Replacement, WriteHit, WriteMiss};
use crate::isa::Addr;
use crate::machine::OutcomeClass;
use crate::search::{AnalysisConfig, ConstraintMap};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`")]
    BadLine { line: usize },
    #[error("line {line}: unknown section `{name}`")]
    UnknownSection { line: usize, name: String },
    #[error("[{section}] {key}: {msg}")]
    BadValue { section: String, key: String, msg: String },
    #[error("[{section}]: unknown key `{key}`")]
    UnknownKey { section: String, key: String },
    #[error("invalid cache geometry: {0}")]
    Geometry(String),
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
}

/// Parses the INI text into an analysis configuration, starting from the
/// defaults.
pub fn load_ini(text: &str) -> Result<AnalysisConfig, ConfigError> {
    let mut cfg = AnalysisConfig::default();
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = name.trim().to_lowercase();
            if !matches!(
                section.as_str(),
                "icache" | "dcache" | "memory" | "pipeline" | "limits" | "machine" | "power"
            ) {
                return Err(ConfigError::UnknownSection { line: line_no, name: section });
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine { line: line_no });
        };
        let key = key.trim().to_lowercase();
        let value = value.trim();
        apply_key(&mut cfg, &section, &key, value)?;
    }
    cfg.arch.icache.validate().map_err(ConfigError::Geometry)?;
    cfg.arch.dcache.validate().map_err(ConfigError::Geometry)?;
    Ok(cfg)
}

fn strip_comment(line: &str) -> &str {
    match line.find(['#', ';']) {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn bad(section: &str, key: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::BadValue { section: section.into(), key: key.into(), msg: msg.into() }
}

fn parse_num(section: &str, key: &str, value: &str) -> Result<u64, ConfigError> {
    let v = value.replace('_', "");
    if let Some(hex) = v.strip_prefix("0x") {
        u64::from_str_radix(hex, 16).map_err(|e| bad(section, key, e.to_string()))
    } else {
        v.parse().map_err(|e: std::num::ParseIntError| bad(section, key, e.to_string()))
    }
}

fn apply_key(
    cfg: &mut AnalysisConfig,
    section: &str,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    match section {
        "icache" | "dcache" => {
            let cache = if section == "icache" { &mut cfg.arch.icache } else { &mut cfg.arch.dcache };
            apply_cache_key(cache, section, key, value)
        }
        "memory" => {
            let n = parse_num(section, key, value)?;
            match key {
                "transaction_cycles" => {
                    cfg.arch.icache.mem_transaction_cycles = n;
                    cfg.arch.dcache.mem_transaction_cycles = n;
                }
                "bus_width" => {
                    cfg.arch.icache.bus_width_bytes = n as u32;
                    cfg.arch.dcache.bus_width_bytes = n as u32;
                }
                _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
            }
            Ok(())
        }
        "pipeline" => {
            let n = parse_num(section, key, value)? as u32;
            let table = &mut cfg.arch.durations;
            match key {
                "fetch" | "decode" | "execute" | "memory" | "writeback" => {
                    let idx = match key {
                        "fetch" => 0,
                        "decode" => 1,
                        "execute" => 2,
                        "memory" => 3,
                        _ => 4,
                    };
                    for row in table.base.iter_mut() {
                        row[idx] = n;
                    }
                }
                "multi_per_register" => table.multi_per_register = n,
                _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
            }
            Ok(())
        }
        "limits" => {
            let n = parse_num(section, key, value)?;
            match key {
                "max_states" => cfg.limits.max_states = n,
                "max_splits" => cfg.limits.max_splits = n,
                "k_p" | "kp" => cfg.machine.k_p = n,
                _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
            }
            Ok(())
        }
        "machine" => {
            let n = parse_num(section, key, value)?;
            match key {
                "stack_base" => cfg.machine.stack_base = n as u32,
                "stack_size" => cfg.machine.stack_size = n as u32,
                "init_lr" => cfg.machine.init_lr = n as u32,
                "k_p" | "kp" => cfg.machine.k_p = n,
                _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
            }
            Ok(())
        }
        "power" => {
            let n = parse_num(section, key, value)?;
            match key {
                "slow_factor" => cfg.arch.schedule.slow_factor = n,
                "switch_time" => cfg.arch.schedule.switch_time = n,
                _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
            }
            Ok(())
        }
        "" => Err(ConfigError::UnknownSection { line: 0, name: format!("(none) key {key}") }),
        _ => unreachable!("section validated on entry"),
    }
}

fn apply_cache_key(
    cache: &mut CacheConfig,
    section: &str,
    key: &str,
    value: &str,
) -> Result<(), ConfigError> {
    match key {
        "size" => cache.size_bytes = parse_num(section, key, value)? as u32,
        "line" => cache.line_bytes = parse_num(section, key, value)? as u32,
        "ways" => cache.ways = parse_num(section, key, value)? as u32,
        "hit_latency" => cache.hit_latency = parse_num(section, key, value)?,
        "transaction_cycles" => cache.mem_transaction_cycles = parse_num(section, key, value)?,
        "bus_width" => cache.bus_width_bytes = parse_num(section, key, value)? as u32,
        "policy" => {
            cache.replacement = match value.to_lowercase().as_str() {
                "fifo" => Replacement::Fifo,
                "lru" => Replacement::Lru,
                "always-miss" | "always_miss" | "random" => Replacement::AlwaysMiss,
                other => return Err(bad(section, key, format!("unknown policy `{other}`"))),
            }
        }
        "write_hit" => {
            cache.write_hit = match value.to_lowercase().as_str() {
                "write-through" | "write_through" => WriteHit::WriteThrough,
                "write-back" | "write_back" => WriteHit::WriteBack,
                other => return Err(bad(section, key, format!("unknown write-hit policy `{other}`"))),
            }
        }
        "write_miss" => {
            cache.write_miss = match value.to_lowercase().as_str() {
                "allocate" => WriteMiss::Allocate,
                "no-allocate" | "no_allocate" => WriteMiss::NoAllocate,
                other => return Err(bad(section, key, format!("unknown write-miss policy `{other}`"))),
            }
        }
        _ => return Err(ConfigError::UnknownKey { section: section.into(), key: key.into() }),
    }
    Ok(())
}

/// Named timing presets. `arm9-paper` pins the reference timings: 1-cycle
/// cache speed and 10-cycle memory transactions.
pub fn apply_preset(cfg: &mut AnalysisConfig, name: &str) -> Result<(), ConfigError> {
    match name {
        "arm9-paper" => {
            for cache in [&mut cfg.arch.icache, &mut cfg.arch.dcache] {
                cache.hit_latency = 1;
                cache.mem_transaction_cycles = 10;
            }
            Ok(())
        }
        other => Err(ConfigError::UnknownPreset(other.to_string())),
    }
}

/// Constraint file: `ADDR outcome[,outcome...]` per line, `#` comments.
/// Addresses are hex; outcomes use the witness vocabulary (`lt`, `eq`,
/// `gt`, `ls`, `hi`, combined with `+`).
pub fn parse_constraints(text: &str) -> Result<ConstraintMap, ConfigError> {
    let mut map: ConstraintMap = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let addr_tok = parts.next().ok_or(ConfigError::BadLine { line: line_no })?;
        let outcomes_tok = parts.next().ok_or(ConfigError::BadLine { line: line_no })?;
        let t = addr_tok.strip_prefix("0x").unwrap_or(addr_tok);
        let addr = Addr::from_str_radix(t, 16).map_err(|_| ConfigError::BadLine { line: line_no })?;
        let mut outcomes = Vec::new();
        for tok in outcomes_tok.split(',') {
            let o: OutcomeClass = tok
                .trim()
                .parse()
                .map_err(|msg| bad("constraints", addr_tok, msg))?;
            outcomes.push(o);
        }
        map.insert(addr, outcomes);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_sections_and_overrides() {
        let text = "
[icache]
size = 2048
ways = 2
policy = lru

[memory]
transaction_cycles = 5
bus_width = 8

[limits]
max_splits = 64
k_p = 1000

[machine]
stack_base = 0x200000
";
        let cfg = load_ini(text).unwrap();
        assert_eq!(cfg.arch.icache.size_bytes, 2048);
        assert_eq!(cfg.arch.icache.ways, 2);
        assert_eq!(cfg.arch.icache.replacement, Replacement::Lru);
        assert_eq!(cfg.arch.icache.mem_transaction_cycles, 5);
        assert_eq!(cfg.arch.dcache.bus_width_bytes, 8);
        assert_eq!(cfg.limits.max_splits, 64);
        assert_eq!(cfg.machine.k_p, 1000);
        assert_eq!(cfg.machine.stack_base, 0x20_0000);
    }

    #[test]
    fn rejects_bad_geometry() {
        let text = "[icache]\nsize = 100\nline = 32\n";
        assert!(matches!(load_ini(text), Err(ConfigError::Geometry(_))));
    }

    #[test]
    fn preset_pins_reference_timings() {
        let mut cfg = AnalysisConfig::default();
        cfg.arch.icache.mem_transaction_cycles = 99;
        apply_preset(&mut cfg, "arm9-paper").unwrap();
        assert_eq!(cfg.arch.icache.mem_transaction_cycles, 10);
        assert_eq!(cfg.arch.icache.hit_latency, 1);
        assert!(apply_preset(&mut cfg, "bogus").is_err());
    }

    #[test]
    fn parses_constraint_lines() {
        let map = parse_constraints("# force the first compare\n2c gt,eq\n44 lt\n").unwrap();
        assert_eq!(map[&0x2c].len(), 2);
        assert_eq!(map[&0x44].len(), 1);
    }
}
