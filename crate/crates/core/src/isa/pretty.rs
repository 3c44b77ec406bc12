//! Canonical listing printer. `parse_listing(print_program(p)) == p`.

use std::fmt::Write;

use super::{Instruction, MemOffset, Op, Operand, Program};

pub fn print_program(p: &Program) -> String {
    let mut out = String::new();
    let mut addrs: Vec<u32> = p
        .instructions
        .keys()
        .chain(p.data_words.keys())
        .copied()
        .collect();
    addrs.sort();
    addrs.dedup();
    for addr in addrs {
        if let Some(f) = p.functions.iter().find(|f| f.start == addr) {
            if !out.is_empty() {
                out.push('\n');
            }
            let _ = writeln!(out, "{:08x} <{}>:", f.start, f.name);
        }
        if let Some(instr) = p.instructions.get(&addr) {
            let _ = writeln!(out, "{}", print_instruction(instr));
        } else if let Some(word) = p.data_words.get(&addr) {
            let _ = writeln!(out, "{addr:4x}:\t.word 0x{word:08x}");
        }
    }
    out
}

fn print_instruction(i: &Instruction) -> String {
    let mut line = format!("{:4x}:\t", i.address);
    if let Some(enc) = i.encoding {
        let _ = write!(line, "{enc:08x} \t");
    }
    let _ = write!(line, "{}\t{}", i.mnemonic(), print_operands(i));
    if !i.annotations.is_empty() {
        let preds: Vec<&str> = i.annotations.iter().map(|p| p.name()).collect();
        let _ = write!(line, "\t/ {} /", preds.join(" "));
    }
    line
}

fn print_operands(i: &Instruction) -> String {
    match i.op {
        Op::Ldr | Op::Str => {
            let rt = &i.operands[0];
            let mem = i.mem.expect("load/store carries an address expression");
            let mut s = format!("{rt}, [{}", mem.base);
            match mem.offset {
                MemOffset::None => {}
                MemOffset::Imm(v) => {
                    let _ = write!(s, ", #{v}");
                }
                MemOffset::Reg(r, None) => {
                    let _ = write!(s, ", {r}");
                }
                MemOffset::Reg(r, Some((op, n))) => {
                    let _ = write!(s, ", {r}, {} #{n}", op.name());
                }
            }
            s.push(']');
            if mem.writeback {
                s.push('!');
            }
            s
        }
        Op::Ldm | Op::Stm => {
            let base = &i.operands[0];
            let list: Vec<String> = i.reg_list.iter().map(|r| r.to_string()).collect();
            format!(
                "{base}{}, {{{}}}",
                if i.list_writeback { "!" } else { "" },
                list.join(", ")
            )
        }
        Op::B | Op::Bl => match i.operands.first() {
            Some(Operand::Target(t)) => format!("{t:x}"),
            _ => String::new(),
        },
        _ => {
            let parts: Vec<String> = i.operands.iter().map(|o| o.to_string()).collect();
            parts.join(", ")
        }
    }
}
