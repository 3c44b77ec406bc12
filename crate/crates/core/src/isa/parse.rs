//! Parser for annotated objdump-style disassembly listings.
//!
//! Accepted line shapes:
//!
//! ```text
//! 00000008 <binary_search>:
//!  2c:   e1530000  cmp     r3, r0   ; comment   / eq le /
//!  30:   ldr     r3, [r4, r2, lsl #3]
//!  54:   .word 0x00000158
//! ```
//!
//! The encoding column is optional. A trailing `/ pred ... /` group names
//! the predicates set by a flag-setting instruction. Undecodable lines that
//! carry an encoding are retained as data words when they sit after the
//! last reachable instruction of their function and nothing branches to
//! them; otherwise the decode error is reported.

use std::collections::{BTreeMap, BTreeSet};

use super::meta::successors;
use super::{
    Addr, AddrMode, Cond, Function, Instruction, IsaError, MemExpr, MemOffset, Op, Operand,
    Pred, Program, Reg, ShiftOp,
};

pub fn parse_listing(text: &str) -> Result<Program, IsaError> {
    let mut instructions: BTreeMap<Addr, Instruction> = BTreeMap::new();
    let mut data_candidates: Vec<DataCandidate> = Vec::new();
    let mut functions: Vec<Function> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some((name, start)) = parse_function_header(line) {
            functions.push(Function { name, start, end: start });
            continue;
        }
        let (body, annotations) = split_annotations(line, line_no)?;
        let body = body.split(';').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let (address, rest) = split_address(body, line_no)?;
        if address % 4 != 0 {
            return Err(IsaError::Misaligned { address });
        }
        if instructions.contains_key(&address)
            || data_candidates.iter().any(|c| c.address == address)
        {
            return Err(IsaError::DuplicateAddress { line: line_no, address });
        }
        if let Some(f) = functions.last_mut() {
            f.end = f.end.max(address);
        }

        let (encoding, text_part) = split_encoding(rest);
        if let Some(word) = text_part.strip_prefix(".word") {
            let value = parse_word_literal(word.trim())
                .ok_or_else(|| syntax(line_no, "bad .word literal"))?;
            data_candidates.push(DataCandidate {
                address,
                value,
                error: None,
            });
            continue;
        }
        match decode_instruction(address, text_part, annotations, encoding, line_no) {
            Ok(instr) => {
                instructions.insert(address, instr);
            }
            Err(err) => match encoding {
                // Literal-pool words decode as junk (`andeq r0, r0, r8, asr r1`);
                // keep the raw word and decide legality after the full pass.
                Some(value) => data_candidates.push(DataCandidate {
                    address,
                    value,
                    error: Some(err),
                }),
                None => return Err(err),
            },
        }
    }

    if instructions.is_empty() {
        return Err(IsaError::MissingEntry);
    }

    let entry = functions
        .iter()
        .find(|f| f.name == "main")
        .map(|f| f.start)
        .unwrap_or_else(|| *instructions.keys().next().unwrap());
    if !instructions.contains_key(&entry) {
        return Err(IsaError::MissingEntry);
    }

    let mut program = Program {
        instructions,
        data_words: BTreeMap::new(),
        functions,
        entry,
    };
    admit_data_words(&mut program, data_candidates)?;
    validate_branch_targets(&program)?;
    Ok(program)
}

struct DataCandidate {
    address: Addr,
    value: u32,
    /// The decode failure, for lines that were not explicit `.word`s.
    error: Option<IsaError>,
}

/// A data candidate is legal when it is not a branch target and sits after
/// the last statically reachable instruction of its function.
fn admit_data_words(
    program: &mut Program,
    candidates: Vec<DataCandidate>,
) -> Result<(), IsaError> {
    if candidates.is_empty() {
        return Ok(());
    }
    let targets: BTreeSet<Addr> = program
        .instructions
        .values()
        .filter_map(Instruction::branch_target)
        .collect();
    for cand in candidates {
        if targets.contains(&cand.address) {
            // Something branches into it: a decoded-line failure surfaces
            // as-is, an explicit `.word` turns into a bad-target error in
            // the branch validation pass.
            match cand.error {
                Some(e) => return Err(e),
                None => continue,
            }
        }
        let last_reachable = program
            .function_of(cand.address)
            .map(|f| (f.start, f.end))
            .map(|(start, end)| last_reachable_in_span(program, start, end));
        let ok = match last_reachable {
            Some(Some(last)) => cand.address > last,
            // No reachable instruction in the span, or no function header
            // at all: accept only explicit `.word` lines.
            _ => cand.error.is_none(),
        };
        if ok {
            program.data_words.insert(cand.address, cand.value);
        } else {
            return Err(cand.error.unwrap_or(IsaError::Syntax {
                line: 0,
                msg: format!("data word at {:#x} is reachable", cand.address),
            }));
        }
    }
    Ok(())
}

fn last_reachable_in_span(program: &Program, start: Addr, end: Addr) -> Option<Addr> {
    let mut seen: BTreeSet<Addr> = BTreeSet::new();
    let mut work = vec![start];
    while let Some(a) = work.pop() {
        if a < start || a > end || !seen.insert(a) {
            continue;
        }
        if let Some(i) = program.instructions.get(&a) {
            for s in successors(i) {
                work.push(s);
            }
        }
    }
    seen.iter()
        .rev()
        .find(|a| program.instructions.contains_key(a))
        .copied()
}

fn validate_branch_targets(program: &Program) -> Result<(), IsaError> {
    for instr in program.instructions.values() {
        if let Some(target) = instr.branch_target() {
            if !program.instructions.contains_key(&target) {
                return Err(IsaError::BadBranchTarget {
                    address: instr.address,
                    target,
                });
            }
        }
    }
    Ok(())
}

fn syntax(line: usize, msg: impl Into<String>) -> IsaError {
    IsaError::Syntax { line, msg: msg.into() }
}

fn parse_function_header(line: &str) -> Option<(String, Addr)> {
    let mut parts = line.split_whitespace();
    let addr_tok = parts.next()?;
    let name_tok = parts.next()?;
    if parts.next().is_some() || addr_tok.len() < 4 {
        return None;
    }
    let start = Addr::from_str_radix(addr_tok, 16).ok()?;
    let name = name_tok.strip_prefix('<')?.strip_suffix(">:")?;
    Some((name.to_string(), start))
}

/// Extracts the trailing `/ pred ... /` group, if any.
fn split_annotations(line: &str, line_no: usize) -> Result<(&str, BTreeSet<Pred>), IsaError> {
    let trimmed = line.trim_end();
    let mut preds = BTreeSet::new();
    if !trimmed.ends_with('/') {
        return Ok((line, preds));
    }
    let inner_end = trimmed.len() - 1;
    let Some(open) = trimmed[..inner_end].rfind('/') else {
        return Ok((line, preds));
    };
    for name in trimmed[open + 1..inner_end].split_whitespace() {
        match Pred::parse(name) {
            Some(p) => {
                preds.insert(p);
            }
            None => {
                return Err(IsaError::UnknownAnnotation { line: line_no, name: name.to_string() })
            }
        }
    }
    Ok((&trimmed[..open], preds))
}

fn split_address(body: &str, line_no: usize) -> Result<(Addr, &str), IsaError> {
    let colon = body.find(':').ok_or_else(|| syntax(line_no, "missing `addr:`"))?;
    let address = Addr::from_str_radix(body[..colon].trim(), 16)
        .map_err(|_| syntax(line_no, "bad address"))?;
    Ok((address, body[colon + 1..].trim()))
}

/// Peels the 8-hex-digit encoding column when present. No mnemonic in the
/// subset is eight hex characters long, so the test is unambiguous.
fn split_encoding(rest: &str) -> (Option<u32>, &str) {
    let tok = rest.split_whitespace().next().unwrap_or("");
    if tok.len() == 8 && tok.chars().all(|c| c.is_ascii_hexdigit()) {
        let value = u32::from_str_radix(tok, 16).unwrap();
        (Some(value), rest[rest.find(tok).unwrap() + 8..].trim())
    } else {
        (None, rest)
    }
}

fn parse_word_literal(s: &str) -> Option<u32> {
    if let Some(hex) = s.strip_prefix("0x") {
        u32::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn decode_instruction(
    address: Addr,
    text: &str,
    annotations: BTreeSet<Pred>,
    encoding: Option<u32>,
    line_no: usize,
) -> Result<Instruction, IsaError> {
    let mut it = text.splitn(2, char::is_whitespace);
    let mnemonic = it.next().unwrap_or("").trim();
    let operand_text = it.next().unwrap_or("").trim();
    if mnemonic.is_empty() {
        return Err(syntax(line_no, "missing mnemonic"));
    }
    let (op, addr_mode, cond, s_flag) =
        decode_mnemonic(mnemonic).ok_or_else(|| IsaError::UnsupportedMnemonic {
            address,
            mnemonic: mnemonic.to_string(),
        })?;

    let mut instr = Instruction {
        address,
        op,
        cond,
        sets_flags: s_flag || op.is_compare(),
        operands: Vec::new(),
        mem: None,
        reg_list: Vec::new(),
        list_writeback: false,
        addr_mode,
        annotations,
        encoding,
    };

    let pieces = split_operands(operand_text);
    match op {
        Op::Mov | Op::Mvn => {
            let ops = parse_dataproc_operands(&pieces, line_no)?;
            if ops.len() != 2 || !matches!(ops[0], Operand::Reg(_)) {
                return Err(syntax(line_no, "mov needs `rd, op2`"));
            }
            instr.operands = ops;
        }
        Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor => {
            let ops = parse_dataproc_operands(&pieces, line_no)?;
            if ops.len() != 3
                || !matches!(ops[0], Operand::Reg(_))
                || !matches!(ops[1], Operand::Reg(_))
            {
                return Err(syntax(line_no, "arithmetic needs `rd, rn, op2`"));
            }
            instr.operands = ops;
        }
        Op::Cmp | Op::Cmn | Op::Tst | Op::Teq => {
            let ops = parse_dataproc_operands(&pieces, line_no)?;
            if ops.len() != 2 || !matches!(ops[0], Operand::Reg(_)) {
                return Err(syntax(line_no, "compare needs `rn, op2`"));
            }
            instr.operands = ops;
        }
        Op::Ldr | Op::Str => {
            if pieces.len() < 2 {
                return Err(syntax(line_no, "load/store needs `rt, [..]`"));
            }
            let rt = Reg::parse(&pieces[0])
                .ok_or_else(|| syntax(line_no, "bad transfer register"))?;
            instr.operands = vec![Operand::Reg(rt)];
            instr.mem = Some(parse_mem_expr(&pieces[1..], line_no)?);
        }
        Op::Ldm | Op::Stm => {
            if pieces.len() != 2 {
                return Err(syntax(line_no, "ldm/stm needs `base, {list}`"));
            }
            let (base_txt, writeback) = match pieces[0].strip_suffix('!') {
                Some(b) => (b.trim(), true),
                None => (pieces[0].as_str(), false),
            };
            let base =
                Reg::parse(base_txt).ok_or_else(|| syntax(line_no, "bad base register"))?;
            instr.operands = vec![Operand::Reg(base)];
            instr.list_writeback = writeback;
            instr.reg_list = parse_reg_list(&pieces[1], line_no)?;
            if instr.reg_list.is_empty() {
                return Err(syntax(line_no, "empty register list"));
            }
        }
        Op::B | Op::Bl => {
            if pieces.len() != 1 {
                return Err(syntax(line_no, "branch needs one target"));
            }
            let tok = pieces[0].split_whitespace().next().unwrap_or("");
            let target = parse_hex_target(tok)
                .ok_or_else(|| syntax(line_no, "bad branch target"))?;
            instr.operands = vec![Operand::Target(target)];
        }
    }
    Ok(instr)
}

/// Splits `mnemonic` into base op, addressing mode, condition and `s` flag.
/// Longer base ops are tried first, with backtracking: `bls` is `b` + `ls`,
/// not `bl` + `s`.
fn decode_mnemonic(m: &str) -> Option<(Op, AddrMode, Cond, bool)> {
    const BASES: &[(&str, Op)] = &[
        ("ldm", Op::Ldm),
        ("stm", Op::Stm),
        ("ldr", Op::Ldr),
        ("str", Op::Str),
        ("mov", Op::Mov),
        ("mvn", Op::Mvn),
        ("add", Op::Add),
        ("sub", Op::Sub),
        ("rsb", Op::Rsb),
        ("and", Op::And),
        ("orr", Op::Orr),
        ("eor", Op::Eor),
        ("cmp", Op::Cmp),
        ("cmn", Op::Cmn),
        ("tst", Op::Tst),
        ("teq", Op::Teq),
        ("bl", Op::Bl),
        ("b", Op::B),
    ];
    for &(base, op) in BASES {
        let Some(mut rest) = m.strip_prefix(base) else { continue };
        let mut mode = AddrMode::Ia;
        if matches!(op, Op::Ldm | Op::Stm) {
            // `fd`/`ea` are the stack-oriented aliases objdump sometimes emits.
            let (m2, r2) = match rest {
                r if r.starts_with("ia") => (AddrMode::Ia, &r[2..]),
                r if r.starts_with("db") => (AddrMode::Db, &r[2..]),
                r if r.starts_with("fd") => {
                    (if op == Op::Ldm { AddrMode::Ia } else { AddrMode::Db }, &r[2..])
                }
                r if r.starts_with("ea") => {
                    (if op == Op::Ldm { AddrMode::Db } else { AddrMode::Ia }, &r[2..])
                }
                r => (AddrMode::Ia, r),
            };
            mode = m2;
            rest = r2;
        }
        // Condition and `s` flag, in either order.
        let candidates: &[(&str, bool)] = &[
            (rest, false),
            (rest.strip_suffix('s').unwrap_or(rest), rest.ends_with('s')),
            (rest.strip_prefix('s').unwrap_or(rest), rest.starts_with('s')),
        ];
        for &(cond_part, s_flag) in candidates {
            if s_flag && cond_part.len() == rest.len() {
                continue;
            }
            if s_flag && !matches!(op, Op::Mov | Op::Mvn | Op::Add | Op::Sub | Op::Rsb | Op::And | Op::Orr | Op::Eor) {
                continue;
            }
            if let Some(cond) = Cond::from_suffix(cond_part) {
                return Some((op, mode, cond, s_flag));
            }
        }
    }
    None
}

/// Splits operand text at top-level commas, respecting `[..]` and `{..}`.
fn split_operands(text: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut depth = 0i32;
    let mut cur = String::new();
    for c in text.chars() {
        match c {
            '[' | '{' => depth += 1,
            ']' | '}' => depth -= 1,
            ',' if depth == 0 => {
                pieces.push(cur.trim().to_string());
                cur.clear();
                continue;
            }
            _ => {}
        }
        cur.push(c);
    }
    if !cur.trim().is_empty() {
        pieces.push(cur.trim().to_string());
    }
    pieces
}

/// Turns comma pieces into operands, merging `lsl #n`-style shift pieces
/// into the preceding register.
fn parse_dataproc_operands(pieces: &[String], line_no: usize) -> Result<Vec<Operand>, IsaError> {
    let mut ops: Vec<Operand> = Vec::new();
    for piece in pieces {
        if let Some((shift, amount)) = parse_shift_piece(piece) {
            match ops.pop() {
                Some(Operand::Reg(r)) => ops.push(Operand::Shifted(r, shift, amount)),
                _ => return Err(syntax(line_no, "shift without preceding register")),
            }
            continue;
        }
        ops.push(parse_simple_operand(piece).ok_or_else(|| {
            syntax(line_no, format!("bad operand `{piece}`"))
        })?);
    }
    Ok(ops)
}

fn parse_shift_piece(piece: &str) -> Option<(ShiftOp, u8)> {
    let mut it = piece.split_whitespace();
    let op = ShiftOp::parse(it.next()?)?;
    let amount = it.next()?.strip_prefix('#')?.parse().ok()?;
    if it.next().is_some() {
        return None;
    }
    Some((op, amount))
}

fn parse_simple_operand(piece: &str) -> Option<Operand> {
    if let Some(imm) = piece.strip_prefix('#') {
        return parse_imm(imm).map(Operand::Imm);
    }
    Reg::parse(piece).map(Operand::Reg)
}

fn parse_imm(s: &str) -> Option<i32> {
    let (neg, s) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let v = if let Some(hex) = s.strip_prefix("0x") {
        i64::from_str_radix(hex, 16).ok()?
    } else {
        s.parse::<i64>().ok()?
    };
    let v = if neg { -v } else { v };
    if !(-(1i64 << 32)..(1i64 << 32)).contains(&v) {
        return None;
    }
    Some(v as i32)
}

/// Branch targets are printed by objdump as bare hex, e.g. `1c <fib+0x14>`.
fn parse_hex_target(tok: &str) -> Option<Addr> {
    let t = tok.strip_prefix("0x").unwrap_or(tok);
    Addr::from_str_radix(t, 16).ok()
}

fn parse_mem_expr(pieces: &[String], line_no: usize) -> Result<MemExpr, IsaError> {
    let joined = pieces.join(", ");
    let (inner, writeback) = match joined.strip_suffix('!') {
        Some(rest) => (rest.trim(), true),
        None => (joined.as_str(), false),
    };
    let inner = inner
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or_else(|| syntax(line_no, "bad address expression"))?;
    let parts = split_operands(inner);
    if parts.is_empty() {
        return Err(syntax(line_no, "empty address expression"));
    }
    let base = Reg::parse(&parts[0]).ok_or_else(|| syntax(line_no, "bad base register"))?;
    let offset = match parts.len() {
        1 => MemOffset::None,
        2 => {
            if let Some(imm) = parts[1].strip_prefix('#') {
                MemOffset::Imm(parse_imm(imm).ok_or_else(|| syntax(line_no, "bad offset"))?)
            } else {
                let r = Reg::parse(&parts[1])
                    .ok_or_else(|| syntax(line_no, "bad index register"))?;
                MemOffset::Reg(r, None)
            }
        }
        3 => {
            let r = Reg::parse(&parts[1])
                .ok_or_else(|| syntax(line_no, "bad index register"))?;
            let shift = parse_shift_piece(&parts[2])
                .ok_or_else(|| syntax(line_no, "bad index shift"))?;
            MemOffset::Reg(r, Some(shift))
        }
        _ => return Err(syntax(line_no, "too many address components")),
    };
    Ok(MemExpr { base, offset, writeback })
}

fn parse_reg_list(piece: &str, line_no: usize) -> Result<Vec<Reg>, IsaError> {
    let inner = piece
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| syntax(line_no, "bad register list"))?;
    let mut regs = Vec::new();
    for part in inner.split(',') {
        let part = part.trim();
        if part.is_empty() {
            continue;
        }
        regs.push(Reg::parse(part).ok_or_else(|| syntax(line_no, "bad list register"))?);
    }
    regs.sort();
    regs.dedup();
    Ok(regs)
}
