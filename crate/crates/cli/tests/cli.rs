//! End-to-end CLI tests: exit codes, report artifacts and output
//! determinism, driving the built binary on the bundled programs.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn programs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

fn wcet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wcet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn program(name: &str) -> String {
    programs_dir().join(name).to_string_lossy().into_owned()
}

#[test]
fn analyze_fib_is_single_path() {
    let out = wcet(&["analyze", &program("fib.arm"), "--no-info"]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("WCET 526 cycles"), "{stdout}");
    assert!(stdout.contains("splits 0"), "{stdout}");
}

#[test]
fn analyze_bs_respects_the_move_bound() {
    let out = wcet(&["analyze", &program("bs.arm"), "--no-info"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("max moves/path 4"), "{stdout}");
}

#[test]
fn exit_codes_cover_the_outcome_categories() {
    // Parse error -> 1.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.arm");
    std::fs::write(&bad, "00000000 <main>:\n 0: mull r0, r1, r2, r3\n").unwrap();
    let out = wcet(&["analyze", bad.to_str().unwrap(), "--no-info"]);
    assert_eq!(out.status.code(), Some(1));

    // Limits -> 2, naming the pending comparison.
    let out = wcet(&["analyze", &program("bs.arm"), "--no-info", "--max-splits", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("2c"), "{stderr}");

    // Fault -> 3 (an unknown load address).
    let faulty = dir.path().join("fault.arm");
    std::fs::write(&faulty, "00000000 <main>:\n 0: ldr r1, [r4]\n 4: mov pc, lr\n").unwrap();
    let out = wcet(&["analyze", faulty.to_str().unwrap(), "--no-info"]);
    assert_eq!(out.status.code(), Some(3));

    // Nondeterministic simulation -> 4, at the first undetermined compare.
    let out = wcet(&["simulate", &program("bs.arm")]);
    assert_eq!(out.status.code(), Some(4));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("0x2c"), "{stderr}");
}

#[test]
fn simulate_runs_with_concrete_inputs() {
    let mut args = vec!["simulate".to_string(), program("diamond.arm")];
    for (addr, value) in [(0x200, 3), (0x204, 7)] {
        args.push("--mem".into());
        args.push(format!("{addr:#x}={value}"));
    }
    let out = wcet(&args.iter().map(String::as_str).collect::<Vec<_>>());
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cycle,stage,instr_addr,action"), "{stdout}");
    assert!(stdout.contains("cycles: "), "{stdout}");
}

#[test]
fn check_abs_answers_yes_and_no() {
    let out = wcet(&["check-abs", &program("fib.arm"), &program("fib_abs.txt")]);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("YES"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad_abs.txt");
    std::fs::write(&bad, "18\n").unwrap();
    let out = wcet(&["check-abs", &program("fib.arm"), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(5));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("NO"), "{stdout}");
    assert!(stdout.contains("0x20"), "{stdout}");

    // An empty abstraction file is trivially equivalent.
    let empty = dir.path().join("empty.txt");
    std::fs::write(&empty, "# nothing\n").unwrap();
    let out = wcet(&["check-abs", &program("fib.arm"), empty.to_str().unwrap()]);
    assert!(out.status.success());
}

#[test]
fn analyze_gates_abstractions_behind_the_equivalence_check() {
    // A valid set analyzes to the same WCET.
    let out = wcet(&[
        "analyze",
        &program("fib.arm"),
        "--no-info",
        "--abs",
        &program("fib_abs.txt"),
    ]);
    assert!(out.status.success(), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("WCET 526 cycles"), "{stdout}");

    // An invalid one is refused before any search runs.
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    std::fs::write(&bad, "18\n").unwrap();
    let out = wcet(&[
        "analyze",
        &program("fib.arm"),
        "--no-info",
        "--abs",
        bad.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn analyze_writes_the_info_summary() {
    let dir = tempfile::tempdir().unwrap();
    let copy = dir.path().join("fib.arm");
    std::fs::copy(programs_dir().join("fib.arm"), &copy).unwrap();
    let out = wcet(&["analyze", copy.to_str().unwrap()]);
    assert!(out.status.success());
    let info = std::fs::read_to_string(dir.path().join("fib.arm.info")).unwrap();
    assert!(info.contains("wcet: 526"), "{info}");
    assert!(info.contains("max-stack-words: 5"), "{info}");

    // On a limit failure the summary names the pending comparisons.
    let copy = dir.path().join("bs.arm");
    std::fs::copy(programs_dir().join("bs.arm"), &copy).unwrap();
    let out = wcet(&["analyze", copy.to_str().unwrap(), "--max-splits", "0"]);
    assert_eq!(out.status.code(), Some(2));
    let info = std::fs::read_to_string(dir.path().join("bs.arm.info")).unwrap();
    assert!(info.contains("status: failed"), "{info}");
    assert!(info.contains("pending-comparisons: 0x2c"), "{info}");
}

#[test]
fn json_reports_are_bit_identical_across_runs_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for (i, jobs) in ["1", "4", "1"].iter().enumerate() {
        let json = dir.path().join(format!("r{i}.json"));
        let out = wcet(&[
            "analyze",
            &program("bs.arm"),
            "--no-info",
            "--jobs",
            jobs,
            "--json",
            json.to_str().unwrap(),
        ]);
        assert!(out.status.success());
        outputs.push(std::fs::read(json).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn export_writes_model_and_query() {
    let dir = tempfile::tempdir().unwrap();
    let out = wcet(&[
        "export",
        &program("fib.arm"),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{out:?}");
    let xml = std::fs::read_to_string(dir.path().join("fib.xml")).unwrap();
    assert!(xml.starts_with("<?xml"));
    let q = std::fs::read_to_string(dir.path().join("fib.q")).unwrap();
    assert_eq!(q, "control(1052,0) : A [ true U WriteBackStage.DONE ]\n");
}

#[test]
fn simulate_fib_matches_the_single_path_analysis() {
    let out = wcet(&["simulate", &program("fib.arm"), "--trace", "/dev/null"]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("cycles: 526"), "{stdout}");
}

#[test]
fn power_reports_the_free_window() {
    let out = wcet(&["power", &program("diamond.arm")]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.starts_with("T* = "), "{stdout}");
}

#[test]
fn constraints_flow_through_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let constraints = dir.path().join("c.txt");
    std::fs::write(&constraints, "2c eq\n").unwrap();
    let out = wcet(&[
        "analyze",
        &program("bs.arm"),
        "--no-info",
        "--constraints",
        constraints.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("constraints pruned"), "{stdout}");
}

#[test]
fn config_and_preset_load() {
    let dir = tempfile::tempdir().unwrap();
    let ini = dir.path().join("slow.ini");
    std::fs::write(&ini, "[memory]\ntransaction_cycles = 20\n").unwrap();
    let out = wcet(&[
        "analyze",
        &program("fib.arm"),
        "--no-info",
        "--config",
        ini.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let slow = String::from_utf8(out.stdout).unwrap();
    assert!(!slow.contains("WCET 526"), "slower memory must change the WCET: {slow}");

    // The preset restores the reference timings over the config.
    let out = wcet(&[
        "analyze",
        &program("fib.arm"),
        "--no-info",
        "--config",
        ini.to_str().unwrap(),
        "--preset",
        "arm9-paper",
    ]);
    let fast = String::from_utf8(out.stdout).unwrap();
    assert!(fast.contains("WCET 526"), "{fast}");
}
