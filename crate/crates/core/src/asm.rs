//! Two-pass assembler for the line-oriented program format.
//!
//! A program is split into sections by `.rtos`, `.sw` and `.task <i>`
//! directives; each section is placed at the origin supplied by the caller
//! (normally the start of the matching memory region). `.entry` marks the
//! section entry point, `.ibt` declares valid indirect-branch targets for a
//! call/jump site, and `.stack` declares a task's stack region. Labels end
//! with `:` and resolve to absolute, 4-byte-aligned program addresses.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::layout::MemoryLayout;
use crate::machine::{encode, Instr, INSTR_BYTES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum SectionKind {
    Rtos,
    Sw,
    Task(u8),
}

impl std::fmt::Display for SectionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SectionKind::Rtos => write!(f, ".rtos"),
            SectionKind::Sw => write!(f, ".sw"),
            SectionKind::Task(i) => write!(f, ".task {i}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Section {
    pub kind: SectionKind,
    pub origin: u16,
    pub bytes: Vec<u8>,
}

/// Declared stack region of one task; `base` is the initial stack pointer and
/// the stack grows downward toward `limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StackDecl {
    pub base: u16,
    pub limit: u16,
}

/// Assembled program: section images plus the metadata the simulator needs
/// to build task control blocks and the integrity monitor tables.
#[derive(Debug, Clone, Default)]
pub struct ProgramImage {
    pub sections: Vec<Section>,
    pub rtos_entry: Option<u16>,
    pub task_entries: BTreeMap<u8, u16>,
    pub ibt: BTreeMap<u8, BTreeMap<u16, BTreeSet<u16>>>,
    pub stacks: BTreeMap<u8, StackDecl>,
    pub symbols: BTreeMap<String, u16>,
}

impl ProgramImage {
    pub fn section(&self, kind: SectionKind) -> Option<&Section> {
        self.sections.iter().find(|s| s.kind == kind)
    }

    pub fn symbol(&self, name: &str) -> Option<u16> {
        self.symbols.get(name).copied()
    }
}

/// Section base addresses handed to the assembler; normally derived from a
/// validated memory layout.
#[derive(Debug, Clone)]
pub struct SectionOrigins {
    pub rtos: u16,
    pub sw: u16,
    pub tasks: Vec<u16>,
}

impl SectionOrigins {
    pub fn from_layout(layout: &MemoryLayout) -> Self {
        Self {
            rtos: layout.rtos.start,
            sw: layout.sw.start,
            tasks: layout.task_bounds.iter().map(|b| b.t_min).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct AsmError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum ImmRef {
    Num(u16),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Operand {
    Reg(u8),
    Mem(u8),
    Imm(ImmRef),
    Target(ImmRef),
}

/// Instruction with possibly unresolved label operands.
#[derive(Debug, Clone)]
enum Stmt {
    Instr { line: usize, mnemonic: String, ops: Vec<Operand> },
}

fn parse_num(s: &str) -> Option<u16> {
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        u16::from_str_radix(hex, 16).ok()
    } else {
        s.parse().ok()
    }
}

fn is_label_ident(s: &str) -> bool {
    !s.is_empty()
        && s.chars().next().map(|c| c.is_ascii_alphabetic() || c == '_') == Some(true)
        && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse_operand(tok: &str, line: usize) -> Result<Operand, AsmError> {
    let err = |msg: String| AsmError { line, msg };
    if let Some(rest) = tok.strip_prefix('#') {
        if let Some(n) = parse_num(rest) {
            return Ok(Operand::Imm(ImmRef::Num(n)));
        }
        if is_label_ident(rest) {
            return Ok(Operand::Imm(ImmRef::Label(rest.to_string())));
        }
        return Err(err(format!("bad immediate `{tok}`")));
    }
    if let Some(inner) = tok.strip_prefix('[').and_then(|t| t.strip_suffix(']')) {
        if let Some(r) = parse_reg(inner) {
            return Ok(Operand::Mem(r));
        }
        return Err(err(format!("bad memory operand `{tok}`")));
    }
    if let Some(r) = parse_reg(tok) {
        return Ok(Operand::Reg(r));
    }
    if let Some(n) = parse_num(tok) {
        return Ok(Operand::Target(ImmRef::Num(n)));
    }
    if is_label_ident(tok) {
        return Ok(Operand::Target(ImmRef::Label(tok.to_string())));
    }
    Err(err(format!("unrecognized operand `{tok}`")))
}

fn parse_reg(s: &str) -> Option<u8> {
    let rest = s.strip_prefix('r').or_else(|| s.strip_prefix('R'))?;
    let n: u8 = rest.parse().ok()?;
    (n < 8).then_some(n)
}

struct SectionBuilder {
    kind: SectionKind,
    origin: u16,
    stmts: Vec<Stmt>,
    entry_label: Option<String>,
    ibt_decls: Vec<(usize, String, Vec<String>)>,
    stack: Option<StackDecl>,
}

/// Assembles `src`, placing each section at the origin given for its kind.
pub fn assemble(src: &str, origins: &SectionOrigins) -> Result<ProgramImage, AsmError> {
    let mut sections: Vec<SectionBuilder> = Vec::new();
    let mut symbols: BTreeMap<String, u16> = BTreeMap::new();

    let origin_for = |kind: SectionKind, line: usize| -> Result<u16, AsmError> {
        match kind {
            SectionKind::Rtos => Ok(origins.rtos),
            SectionKind::Sw => Ok(origins.sw),
            SectionKind::Task(i) => origins
                .tasks
                .get(usize::from(i))
                .copied()
                .ok_or_else(|| AsmError {
                    line,
                    msg: format!("no origin for task {i} (layout declares {})", origins.tasks.len()),
                }),
        }
    };

    // Pass 1: split into sections, collect label addresses and raw statements.
    for (idx, raw) in src.lines().enumerate() {
        let line_no = idx + 1;
        let mut text = raw.split(';').next().unwrap_or("").trim().to_string();
        if text.is_empty() {
            continue;
        }
        let err = |msg: String| AsmError { line: line_no, msg };

        if let Some(rest) = text.strip_prefix('.') {
            let mut parts = rest.split_whitespace();
            let dir = parts.next().unwrap_or("");
            match dir {
                "rtos" | "sw" | "task" => {
                    let kind = match dir {
                        "rtos" => SectionKind::Rtos,
                        "sw" => SectionKind::Sw,
                        _ => {
                            let i: u8 = parts
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| err("`.task` needs an index".into()))?;
                            SectionKind::Task(i)
                        }
                    };
                    if sections.iter().any(|s| s.kind == kind) {
                        return Err(err(format!("duplicate section {kind}")));
                    }
                    let origin = origin_for(kind, line_no)?;
                    if !origin.is_multiple_of(INSTR_BYTES) {
                        return Err(err(format!("section origin {origin:04x} not 4-byte aligned")));
                    }
                    sections.push(SectionBuilder {
                        kind,
                        origin,
                        stmts: Vec::new(),
                        entry_label: None,
                        ibt_decls: Vec::new(),
                        stack: None,
                    });
                    continue;
                }
                _ => {}
            }
            let cur = sections
                .last_mut()
                .ok_or_else(|| err(format!("`.{dir}` before any section directive")))?;
            match dir {
                "entry" => {
                    let label = parts
                        .next()
                        .ok_or_else(|| err("`.entry` needs a label".into()))?;
                    cur.entry_label = Some(label.to_string());
                }
                "ibt" => {
                    if !matches!(cur.kind, SectionKind::Task(_)) {
                        return Err(err("`.ibt` only valid inside a task section".into()));
                    }
                    let site = parts
                        .next()
                        .ok_or_else(|| err("`.ibt` needs a site label".into()))?
                        .to_string();
                    let targets: Vec<String> = parts.map(str::to_string).collect();
                    if targets.is_empty() {
                        return Err(err("`.ibt` needs at least one target".into()));
                    }
                    cur.ibt_decls.push((line_no, site, targets));
                }
                "stack" => {
                    if !matches!(cur.kind, SectionKind::Task(_)) {
                        return Err(err("`.stack` only valid inside a task section".into()));
                    }
                    let base = parts
                        .next()
                        .and_then(parse_num)
                        .ok_or_else(|| err("`.stack` needs base and limit".into()))?;
                    let limit = parts
                        .next()
                        .and_then(parse_num)
                        .ok_or_else(|| err("`.stack` needs base and limit".into()))?;
                    if base < limit {
                        return Err(err("stack base must be >= limit (descending stack)".into()));
                    }
                    cur.stack = Some(StackDecl { base, limit });
                }
                other => return Err(err(format!("unknown directive `.{other}`"))),
            }
            continue;
        }

        // Optional `label:` prefix, possibly followed by an instruction.
        while let Some(colon) = text.find(':') {
            let (label, rest) = text.split_at(colon);
            let label = label.trim();
            if !is_label_ident(label) {
                return Err(err(format!("bad label `{label}`")));
            }
            let cur = sections
                .last_mut()
                .ok_or_else(|| err("label before any section directive".into()))?;
            let addr = cur.origin + (cur.stmts.len() as u16) * INSTR_BYTES;
            if symbols.insert(label.to_string(), addr).is_some() {
                return Err(err(format!("duplicate label `{label}`")));
            }
            text = rest[1..].trim().to_string();
            if text.is_empty() {
                break;
            }
        }
        if text.is_empty() {
            continue;
        }

        let cur = sections
            .last_mut()
            .ok_or_else(|| err("instruction before any section directive".into()))?;
        let mut split = text.splitn(2, char::is_whitespace);
        let mnemonic = split.next().unwrap().to_ascii_uppercase();
        let ops: Vec<Operand> = match split.next() {
            None => Vec::new(),
            Some(rest) => rest
                .split(',')
                .map(|t| parse_operand(t.trim(), line_no))
                .collect::<Result<_, _>>()?,
        };
        cur.stmts.push(Stmt::Instr { line: line_no, mnemonic, ops });
    }

    // Pass 2: encode with all labels known.
    let resolve = |imm: &ImmRef, line: usize| -> Result<u16, AsmError> {
        match imm {
            ImmRef::Num(n) => Ok(*n),
            ImmRef::Label(l) => symbols.get(l).copied().ok_or_else(|| AsmError {
                line,
                msg: format!("undefined label `{l}`"),
            }),
        }
    };

    let mut image = ProgramImage::default();
    for sb in &sections {
        let mut bytes = Vec::with_capacity(sb.stmts.len() * 4);
        for stmt in &sb.stmts {
            let Stmt::Instr { line, mnemonic, ops } = stmt;
            let instr = build_instr(mnemonic, ops, *line, &resolve)?;
            bytes.extend_from_slice(&encode(&instr));
        }
        if let Some(entry) = &sb.entry_label {
            let addr = symbols.get(entry).copied().ok_or_else(|| AsmError {
                line: 0,
                msg: format!("entry label `{entry}` undefined"),
            })?;
            match sb.kind {
                SectionKind::Rtos => image.rtos_entry = Some(addr),
                SectionKind::Sw => {}
                SectionKind::Task(i) => {
                    image.task_entries.insert(i, addr);
                }
            }
        }
        if let SectionKind::Task(i) = sb.kind {
            image.task_entries.entry(i).or_insert(sb.origin);
            if let Some(stack) = sb.stack {
                image.stacks.insert(i, stack);
            }
            for (line, site, targets) in &sb.ibt_decls {
                let site_addr = resolve(&ImmRef::Label(site.clone()), *line)?;
                let entry = image.ibt.entry(i).or_default().entry(site_addr).or_default();
                for t in targets {
                    entry.insert(resolve(&ImmRef::Label(t.clone()), *line)?);
                }
            }
        }
        image.sections.push(Section {
            kind: sb.kind,
            origin: sb.origin,
            bytes,
        });
    }
    image.symbols = symbols;
    Ok(image)
}

fn build_instr(
    mnemonic: &str,
    ops: &[Operand],
    line: usize,
    resolve: &dyn Fn(&ImmRef, usize) -> Result<u16, AsmError>,
) -> Result<Instr, AsmError> {
    let err = |msg: String| AsmError { line, msg };
    let bad = || err(format!("bad operands for {mnemonic}"));

    // Branch-style operands accept `label`, `0x...` or `#imm` interchangeably.
    fn as_target(op: &Operand) -> Option<&ImmRef> {
        match op {
            Operand::Target(t) | Operand::Imm(t) => Some(t),
            _ => None,
        }
    }

    Ok(match (mnemonic, ops) {
        ("NOP", []) => Instr::Nop,
        ("HALT", []) => Instr::Halt,
        ("RET", []) => Instr::Ret,
        ("YIELD", []) => Instr::Yield,
        ("MOVI", [Operand::Reg(rd), imm]) => {
            let imm = as_target(imm).ok_or_else(bad)?;
            Instr::Movi { rd: *rd, imm: resolve(imm, line)? }
        }
        ("MOV", [Operand::Reg(rd), Operand::Reg(rs)]) => Instr::Mov { rd: *rd, rs: *rs },
        ("LD", [Operand::Reg(rd), Operand::Mem(rs)]) => Instr::Ld { rd: *rd, rs: *rs },
        ("ST", [Operand::Mem(rd), Operand::Reg(rs)]) => Instr::St { rd: *rd, rs: *rs },
        ("ADD", [Operand::Reg(rd), Operand::Reg(rs)]) => Instr::Add { rd: *rd, rs: *rs },
        ("SUB", [Operand::Reg(rd), Operand::Reg(rs)]) => Instr::Sub { rd: *rd, rs: *rs },
        ("CMP", [Operand::Reg(r1), Operand::Reg(r2)]) => Instr::Cmp { r1: *r1, r2: *r2 },
        ("BEQ", [t]) => Instr::Beq { target: resolve(as_target(t).ok_or_else(bad)?, line)? },
        ("BNE", [t]) => Instr::Bne { target: resolve(as_target(t).ok_or_else(bad)?, line)? },
        ("JMP", [t]) => Instr::Jmp { target: resolve(as_target(t).ok_or_else(bad)?, line)? },
        ("CALL", [t]) => Instr::Call { target: resolve(as_target(t).ok_or_else(bad)?, line)? },
        ("JMPI", [Operand::Reg(rs)]) => Instr::Jmpi { rs: *rs },
        ("CALLI", [Operand::Reg(rs)]) => Instr::Calli { rs: *rs },
        (
            "NOP" | "HALT" | "RET" | "YIELD" | "MOVI" | "MOV" | "LD" | "ST" | "ADD" | "SUB"
            | "CMP" | "BEQ" | "BNE" | "JMP" | "CALL" | "JMPI" | "CALLI",
            _,
        ) => return Err(bad()),
        (m, _) => return Err(err(format!("unknown mnemonic `{m}`"))),
    })
}
