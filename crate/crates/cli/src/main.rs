//! Command-line front door: analyze, simulate, check-abs, export, power.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};

use wcet_core::abstraction::{check_equivalence, heuristic_map, AbstractionMap, Verdict};
use wcet_core::config::{apply_preset, load_ini, parse_constraints};
use wcet_core::isa::{parse_listing, Program, ProgramMeta, Reg};
use wcet_core::machine::ConcreteInputs;
use wcet_core::power::max_free_slow_window;
use wcet_core::search::{
    compute_wcet, simulate_single, AnalysisConfig, SearchError, WcetReport,
};

const EXIT_PARSE: u8 = 1;
const EXIT_LIMITS: u8 = 2;
const EXIT_FAULT: u8 = 3;
const EXIT_NONDET: u8 = 4;
const EXIT_NOT_EQUIVALENT: u8 = 5;

#[derive(Parser)]
#[command(name = "wcet", about = "Game-based WCET analysis for an ARM9 subset", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// INI configuration file ([icache]/[dcache]/[memory]/[pipeline]/[limits]/[machine]/[power]).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named timing preset applied after the config file (e.g. arm9-paper).
    #[arg(long)]
    preset: Option<String>,
    /// Write the JSON report here ("-" for stdout).
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the WCET by exhaustive adversarial search.
    Analyze {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Constraint file: `ADDR outcome[,outcome...]` per line.
        #[arg(long)]
        constraints: Option<PathBuf>,
        /// Abstraction file applied before the search (one hex address per line).
        #[arg(long)]
        abs: Option<PathBuf>,
        /// Search worker count (results are independent of it).
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Enable exact state memoization.
        #[arg(long)]
        memo: bool,
        #[arg(long)]
        max_states: Option<u64>,
        #[arg(long)]
        max_splits: Option<u64>,
        /// Run-length bound per path.
        #[arg(long)]
        kp: Option<u64>,
        /// Where to write the `.info` summary (defaults to FILE.info).
        #[arg(long)]
        info: Option<PathBuf>,
        /// Skip writing the `.info` summary.
        #[arg(long)]
        no_info: bool,
    },
    /// Simulate one concrete run and print the per-cycle pipeline trace.
    Simulate {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Initial register value, e.g. --reg r0=30 (repeatable).
        #[arg(long = "reg")]
        regs: Vec<String>,
        /// Initial memory word, e.g. --mem 0x158=7 (repeatable).
        #[arg(long = "mem")]
        mems: Vec<String>,
        /// Write the cycle trace here instead of stdout.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Check an abstraction mapping for time-equivalence (YES/NO).
    CheckAbs {
        file: PathBuf,
        /// Abstraction file; omit to use the built-in heuristic.
        absfile: Option<PathBuf>,
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Emit the timed-automata model and the optimal-reachability query.
    Export {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        /// Abstraction file folded into the generated functions.
        #[arg(long)]
        abs: Option<PathBuf>,
        /// Upper bound seed for the query; computed by analysis when absent.
        #[arg(long)]
        bound: Option<u64>,
        /// Output directory (defaults to the input's directory).
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Find the longest initial slow-clock window with an unchanged WCET.
    Power {
        file: PathBuf,
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, default_value_t = 4)]
        slow_factor: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARSE)
        }
    }
}

fn load_program(path: &Path) -> Result<(Program, ProgramMeta)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let program = parse_listing(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    let (meta, warnings) =
        ProgramMeta::build(&program).map_err(|e| anyhow!("{}: {e}", path.display()))?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok((program, meta))
}

fn load_config(common: &CommonOpts) -> Result<AnalysisConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            load_ini(&text).map_err(|e| anyhow!("{}: {e}", path.display()))?
        }
        None => AnalysisConfig::default(),
    };
    if let Some(preset) = &common.preset {
        apply_preset(&mut cfg, preset)?;
    }
    Ok(cfg)
}

fn write_json(common: &CommonOpts, value: &impl serde::Serialize) -> Result<()> {
    let Some(path) = &common.json else { return Ok(()) };
    let text = serde_json::to_string_pretty(value)?;
    if path.as_os_str() == "-" {
        println!("{text}");
    } else {
        std::fs::write(path, text + "\n")?;
    }
    Ok(())
}

fn search_exit(e: &SearchError) -> u8 {
    match e {
        SearchError::LimitExceeded { .. } | SearchError::AllPathsPruned => EXIT_LIMITS,
        SearchError::Fault { .. } => EXIT_FAULT,
        SearchError::NondeterministicRun { .. } => EXIT_NONDET,
        SearchError::WitnessMismatch { .. } | SearchError::Isa(_) => EXIT_PARSE,
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Analyze {
            file,
            common,
            constraints,
            abs,
            jobs,
            memo,
            max_states,
            max_splits,
            kp,
            info,
            no_info,
        } => {
            let (program, meta) = load_program(&file)?;
            let mut cfg = load_config(&common)?;
            cfg.jobs = jobs.max(1);
            cfg.memo = memo;
            if let Some(n) = max_states {
                cfg.limits.max_states = n;
            }
            if let Some(n) = max_splits {
                cfg.limits.max_splits = n;
            }
            if let Some(n) = kp {
                cfg.machine.k_p = n;
            }
            if let Some(path) = &constraints {
                let text = std::fs::read_to_string(path)?;
                cfg.constraints = Some(parse_constraints(&text)?);
            }
            if let Some(path) = &abs {
                let text = std::fs::read_to_string(path)?;
                let map = AbstractionMap::parse_file(&program, &text)
                    .map_err(|e| anyhow!("{e}"))?;
                // Abstractions are folded in only after they check out.
                match check_equivalence(&program, &meta, &cfg.machine, &map, &cfg.limits) {
                    Ok(Verdict::Equivalent) => cfg.abstracted = Some(map.addrs().clone()),
                    Ok(Verdict::CounterExample { address, register, .. }) => {
                        eprintln!(
                            "{}: abstraction is not time-equivalent (diverges at {address:#x} on {register})",
                            path.display()
                        );
                        return Ok(ExitCode::from(EXIT_NOT_EQUIVALENT));
                    }
                    Err(e) => {
                        eprintln!("{}: abstraction check failed: {e}", path.display());
                        return Ok(ExitCode::from(search_exit(&e)));
                    }
                }
            }
            let info_path = info.unwrap_or_else(|| {
                let mut p = file.clone().into_os_string();
                p.push(".info");
                PathBuf::from(p)
            });
            match compute_wcet(&program, &meta, &cfg) {
                Ok(report) => {
                    print_report(&file, &report);
                    write_json(&common, &report)?;
                    if !no_info {
                        std::fs::write(&info_path, info_text(&file, Ok(&report)))?;
                    }
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    if !no_info {
                        std::fs::write(&info_path, info_text(&file, Err(&e)))?;
                    }
                    Ok(ExitCode::from(search_exit(&e)))
                }
            }
        }
        Command::Simulate { file, common, regs, mems, trace } => {
            let (program, meta) = load_program(&file)?;
            let cfg = load_config(&common)?;
            let inputs = parse_inputs(&regs, &mems)?;
            match simulate_single(&program, &meta, &cfg, &inputs, true) {
                Ok((cycles, events)) => {
                    let mut log = String::from("cycle,stage,instr_addr,action\n");
                    for e in &events {
                        log.push_str(&e.to_string());
                        log.push('\n');
                    }
                    match &trace {
                        Some(path) => std::fs::write(path, log)?,
                        None => print!("{log}"),
                    }
                    println!("cycles: {cycles}");
                    write_json(&common, &serde_json::json!({ "cycles": cycles }))?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    Ok(ExitCode::from(search_exit(&e)))
                }
            }
        }
        Command::CheckAbs { file, absfile, common } => {
            let (program, meta) = load_program(&file)?;
            let cfg = load_config(&common)?;
            let map = match &absfile {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    AbstractionMap::parse_file(&program, &text).map_err(|e| anyhow!("{e}"))?
                }
                None => {
                    let m = heuristic_map(&program, &meta);
                    eprintln!(
                        "using heuristic abstraction of {} instruction(s): {:x?}",
                        m.len(),
                        m.addrs()
                    );
                    m
                }
            };
            match check_equivalence(&program, &meta, &cfg.machine, &map, &cfg.limits) {
                Ok(verdict) => {
                    write_json(&common, &verdict)?;
                    match verdict {
                        Verdict::Equivalent => {
                            println!("YES");
                            Ok(ExitCode::SUCCESS)
                        }
                        Verdict::CounterExample { path, address, register } => {
                            println!("NO");
                            println!(
                                "counterexample at {address:#x} on {register}, after choices {}",
                                format_path(&path)
                            );
                            Ok(ExitCode::from(EXIT_NOT_EQUIVALENT))
                        }
                    }
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    Ok(ExitCode::from(search_exit(&e)))
                }
            }
        }
        Command::Export { file, common, abs, bound, out_dir } => {
            let (program, meta) = load_program(&file)?;
            let cfg = load_config(&common)?;
            let map = match &abs {
                Some(path) => {
                    let text = std::fs::read_to_string(path)?;
                    Some(AbstractionMap::parse_file(&program, &text).map_err(|e| anyhow!("{e}"))?)
                }
                None => None,
            };
            let mut run_cfg = cfg.clone();
            run_cfg.abstracted = map.as_ref().map(|m| m.addrs().clone());
            let (bound, stack_words) = match bound {
                Some(b) => (b, cfg.machine.stack_size / 4),
                None => match compute_wcet(&program, &meta, &run_cfg) {
                    Ok(r) => (r.wcet, r.max_stack_depth.max(4)),
                    Err(e) => {
                        eprintln!(
                            "{}: {e}\nhint: pass --bound to export without a prior analysis",
                            file.display()
                        );
                        return Ok(ExitCode::from(search_exit(&e)));
                    }
                },
            };
            let out = wcet_core::export::export_model(
                &program,
                &meta,
                &cfg.arch,
                &cfg.machine,
                map.as_ref(),
                bound,
                stack_words,
            )
            .map_err(|e| anyhow!("{e}"))?;
            let dir = out_dir.unwrap_or_else(|| {
                file.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
            });
            std::fs::create_dir_all(&dir)?;
            let stem = file.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
            let xml_path = dir.join(format!("{stem}.xml"));
            let q_path = dir.join(format!("{stem}.q"));
            std::fs::write(&xml_path, &out.model_xml)?;
            std::fs::write(&q_path, &out.query)?;
            println!("wrote {} and {}", xml_path.display(), q_path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Power { file, common, slow_factor } => {
            let (program, meta) = load_program(&file)?;
            let cfg = load_config(&common)?;
            match max_free_slow_window(&program, &meta, &cfg, slow_factor) {
                Ok(report) => {
                    println!(
                        "T* = {} wall units of {} (ratio {:.1}%), slow factor {}",
                        report.t_star,
                        report.wcet,
                        report.ratio * 100.0,
                        report.slow_factor
                    );
                    write_json(&common, &report)?;
                    Ok(ExitCode::SUCCESS)
                }
                Err(e) => {
                    eprintln!("{}: {e}", file.display());
                    Ok(ExitCode::from(search_exit(&e)))
                }
            }
        }
    }
}

fn print_report(file: &Path, r: &WcetReport) {
    println!("{}: WCET {} cycles", file.display(), r.wcet);
    println!(
        "  bcet {} | splits {} | leaves {} | states {} | max stack {} words | max moves/path {}",
        r.bcet, r.splits, r.leaves, r.states, r.max_stack_depth, r.max_moves_per_path
    );
    if !r.witness.is_empty() {
        println!("  witness: {}", format_path(&r.witness));
    }
    if r.constrained {
        println!("  NOTE: outcome constraints pruned the tree; result is relative to them");
    }
    for f in &r.faults {
        println!("  note: {f}");
    }
}

fn format_path(path: &[wcet_core::search::WitnessStep]) -> String {
    if path.is_empty() {
        return "(none)".into();
    }
    path.iter()
        .map(|w| format!("{:#x}:{}", w.address, w.outcome))
        .collect::<Vec<_>>()
        .join(" ")
}

fn info_text(file: &Path, outcome: Result<&WcetReport, &SearchError>) -> String {
    let mut out = format!("program: {}\n", file.display());
    match outcome {
        Ok(r) => {
            out.push_str(&format!("status: ok\nwcet: {}\nbcet: {}\n", r.wcet, r.bcet));
            out.push_str(&format!(
                "splits: {}\nleaves: {}\nstates: {}\nmax-stack-words: {}\nmax-moves-per-path: {}\n",
                r.splits, r.leaves, r.states, r.max_stack_depth, r.max_moves_per_path
            ));
            out.push_str(&format!("witness: {}\n", format_path(&r.witness)));
        }
        Err(e) => {
            out.push_str("status: failed\n");
            out.push_str(&format!("error: {e}\n"));
            if let SearchError::LimitExceeded { pending, .. } = e {
                let addrs: Vec<String> = pending.iter().map(|a| format!("{a:#x}")).collect();
                out.push_str(&format!("pending-comparisons: {}\n", addrs.join(" ")));
            }
        }
    }
    out
}

fn parse_inputs(regs: &[String], mems: &[String]) -> Result<ConcreteInputs> {
    let mut inputs = ConcreteInputs { regs: BTreeMap::new(), mem: BTreeMap::new() };
    for spec in regs {
        let (name, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--reg expects NAME=VALUE, got `{spec}`"))?;
        let reg = Reg::parse(name.trim()).ok_or_else(|| anyhow!("unknown register `{name}`"))?;
        inputs.regs.insert(reg, parse_int(value)? as i32);
    }
    for spec in mems {
        let (addr, value) = spec
            .split_once('=')
            .ok_or_else(|| anyhow!("--mem expects ADDR=VALUE, got `{spec}`"))?;
        inputs
            .mem
            .insert(parse_int(addr)? as u32, parse_int(value)? as i32);
    }
    Ok(inputs)
}

fn parse_int(s: &str) -> Result<i64> {
    let s = s.trim();
    let (neg, t) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = t.strip_prefix("0x") {
        i64::from_str_radix(hex, 16)?
    } else {
        t.parse::<i64>()?
    };
    Ok(if neg { -v } else { v })
}
