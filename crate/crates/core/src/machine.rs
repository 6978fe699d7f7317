//! Cycle-stepped 16-bit MCU core.
//!
//! Fixed four-byte instruction cells, eight general registers with `r7` as a
//! descending stack pointer, separate program and data memories, and a
//! non-maskable interrupt that vectors to a fixed handler address. One call
//! to [`MachineState::step`] retires exactly one instruction (or one
//! interrupt-entry micro-operation) and reports the externally observable
//! signals for that cycle.
//!
//! Memory writes are not committed by `step`; they come back as a
//! [`PendingWrite`] that the caller either commits or squashes via
//! [`MachineState::commit_write`]. Reads are performed directly. Interrupt
//! entry saves the interrupted pc to a status word in data memory through a
//! hardware-internal path that does not raise the write-enable signal.
//!
//! Instruction semantics (Z = zero flag, all arithmetic wrapping, words are
//! little-endian, `pc+` means `pc + 4`):
//!
//! | instruction    | effect                                          | signals               |
//! |----------------|-------------------------------------------------|-----------------------|
//! | `NOP` `YIELD`  | pc+                                             |                       |
//! | `HALT`         | halted := 1                                     |                       |
//! | `MOVI rd,#imm` | rd := imm; pc+                                  |                       |
//! | `MOV rd,rs`    | rd := rs; pc+                                   |                       |
//! | `LD rd,\[rs\]` | rd := mem\[rs\]; pc+                            | r_en, d_addr = rs     |
//! | `ST \[rd\],rs` | pending mem\[rd\] := rs; pc+                    | w_en, d_addr = rd     |
//! | `ADD/SUB rd,rs`| rd := rd op rs; Z := (rd = 0); pc+              |                       |
//! | `CMP r1,r2`    | Z := (r1 = r2); pc+                             |                       |
//! | `BEQ/BNE t`    | pc := t if Z / if not Z, else pc+               |                       |
//! | `JMP t`        | pc := t                                         |                       |
//! | `JMPI rs`      | pc := rs                                        |                       |
//! | `CALL t`       | r7 -= 2; pending mem\[r7\] := pc+; pc := t      | w_en, d_addr = new r7 |
//! | `CALLI rs`     | like `CALL` with pc := rs                       | w_en, d_addr = new r7 |
//! | `RET`          | pc := mem\[r7\]; r7 += 2                        | r_en, d_addr = old r7 |
//! | interrupt entry| save resume pc; pc := vector; one cycle         | irq                   |

use thiserror::Error;

use crate::asm::{ProgramImage, SectionKind};
use crate::layout::{Interval, MemoryLayout};

pub type Word = u16;
pub type Addr = u16;

/// Stack pointer register index.
pub const SP: usize = 7;
pub const NUM_REGS: usize = 8;
pub const INSTR_BYTES: u16 = 4;

/// Sentinel stored in the latched-task status word when no task is latched.
pub const NO_TASK_SENTINEL: u16 = 0xFFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Nop,
    Halt,
    Movi { rd: u8, imm: u16 },
    Mov { rd: u8, rs: u8 },
    Ld { rd: u8, rs: u8 },
    St { rd: u8, rs: u8 },
    Add { rd: u8, rs: u8 },
    Sub { rd: u8, rs: u8 },
    Cmp { r1: u8, r2: u8 },
    Beq { target: u16 },
    Bne { target: u16 },
    Jmp { target: u16 },
    Jmpi { rs: u8 },
    Call { target: u16 },
    Calli { rs: u8 },
    Ret,
    Yield,
}

mod opcode {
    pub const NOP: u8 = 0x00;
    pub const HALT: u8 = 0x01;
    pub const MOVI: u8 = 0x02;
    pub const MOV: u8 = 0x03;
    pub const LD: u8 = 0x04;
    pub const ST: u8 = 0x05;
    pub const ADD: u8 = 0x06;
    pub const SUB: u8 = 0x07;
    pub const CMP: u8 = 0x08;
    pub const BEQ: u8 = 0x09;
    pub const BNE: u8 = 0x0A;
    pub const JMP: u8 = 0x0B;
    pub const JMPI: u8 = 0x0C;
    pub const CALL: u8 = 0x0D;
    pub const CALLI: u8 = 0x0E;
    pub const RET: u8 = 0x0F;
    pub const YIELD: u8 = 0x10;
}

/// Encodes an instruction into its four-byte cell:
/// opcode, register byte (`r1 | r2 << 4`), immediate low, immediate high.
pub fn encode(instr: &Instr) -> [u8; 4] {
    let (op, r1, r2, imm) = match *instr {
        Instr::Nop => (opcode::NOP, 0, 0, 0),
        Instr::Halt => (opcode::HALT, 0, 0, 0),
        Instr::Movi { rd, imm } => (opcode::MOVI, rd, 0, imm),
        Instr::Mov { rd, rs } => (opcode::MOV, rd, rs, 0),
        Instr::Ld { rd, rs } => (opcode::LD, rd, rs, 0),
        Instr::St { rd, rs } => (opcode::ST, rd, rs, 0),
        Instr::Add { rd, rs } => (opcode::ADD, rd, rs, 0),
        Instr::Sub { rd, rs } => (opcode::SUB, rd, rs, 0),
        Instr::Cmp { r1, r2 } => (opcode::CMP, r1, r2, 0),
        Instr::Beq { target } => (opcode::BEQ, 0, 0, target),
        Instr::Bne { target } => (opcode::BNE, 0, 0, target),
        Instr::Jmp { target } => (opcode::JMP, 0, 0, target),
        Instr::Jmpi { rs } => (opcode::JMPI, rs, 0, 0),
        Instr::Call { target } => (opcode::CALL, 0, 0, target),
        Instr::Calli { rs } => (opcode::CALLI, rs, 0, 0),
        Instr::Ret => (opcode::RET, 0, 0, 0),
        Instr::Yield => (opcode::YIELD, 0, 0, 0),
    };
    [op, r1 | (r2 << 4), imm as u8, (imm >> 8) as u8]
}

/// Decodes a four-byte cell. Unused register or immediate fields must be
/// zero; anything else is a decode error (`None`).
pub fn decode(cell: [u8; 4]) -> Option<Instr> {
    let op = cell[0];
    let r1 = cell[1] & 0x0F;
    let r2 = cell[1] >> 4;
    let imm = u16::from(cell[2]) | (u16::from(cell[3]) << 8);
    let regs_zero = cell[1] == 0;
    let imm_zero = imm == 0;
    let reg_ok = |r: u8| r < 8;
    let instr = match op {
        opcode::NOP if regs_zero && imm_zero => Instr::Nop,
        opcode::HALT if regs_zero && imm_zero => Instr::Halt,
        opcode::RET if regs_zero && imm_zero => Instr::Ret,
        opcode::YIELD if regs_zero && imm_zero => Instr::Yield,
        opcode::MOVI if reg_ok(r1) && r2 == 0 => Instr::Movi { rd: r1, imm },
        opcode::MOV if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::Mov { rd: r1, rs: r2 },
        opcode::LD if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::Ld { rd: r1, rs: r2 },
        opcode::ST if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::St { rd: r1, rs: r2 },
        opcode::ADD if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::Add { rd: r1, rs: r2 },
        opcode::SUB if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::Sub { rd: r1, rs: r2 },
        opcode::CMP if reg_ok(r1) && reg_ok(r2) && imm_zero => Instr::Cmp { r1, r2 },
        opcode::BEQ if regs_zero => Instr::Beq { target: imm },
        opcode::BNE if regs_zero => Instr::Bne { target: imm },
        opcode::JMP if regs_zero => Instr::Jmp { target: imm },
        opcode::CALL if regs_zero => Instr::Call { target: imm },
        opcode::JMPI if reg_ok(r1) && r2 == 0 && imm_zero => Instr::Jmpi { rs: r1 },
        opcode::CALLI if reg_ok(r1) && r2 == 0 && imm_zero => Instr::Calli { rs: r1 },
        _ => return None,
    };
    Some(instr)
}

/// Coarse class of the operation retired in a cycle, as exposed to the
/// monitors and the trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InstrClass {
    Plain,
    Call,
    CallIndirect,
    Return,
    JumpIndirect,
    Store,
    Load,
    InterruptEntry,
    Halted,
}

impl InstrClass {
    pub fn token(&self) -> &'static str {
        match self {
            InstrClass::Plain => "PLAIN",
            InstrClass::Call => "CALL",
            InstrClass::CallIndirect => "CALL_INDIRECT",
            InstrClass::Return => "RETURN",
            InstrClass::JumpIndirect => "JUMP_INDIRECT",
            InstrClass::Store => "STORE",
            InstrClass::Load => "LOAD",
            InstrClass::InterruptEntry => "IRQ_ENTRY",
            InstrClass::Halted => "HALTED",
        }
    }

    pub fn from_token(s: &str) -> Option<InstrClass> {
        Some(match s {
            "PLAIN" => InstrClass::Plain,
            "CALL" => InstrClass::Call,
            "CALL_INDIRECT" => InstrClass::CallIndirect,
            "RETURN" => InstrClass::Return,
            "JUMP_INDIRECT" => InstrClass::JumpIndirect,
            "STORE" => InstrClass::Store,
            "LOAD" => InstrClass::Load,
            "IRQ_ENTRY" => InstrClass::InterruptEntry,
            "HALTED" => InstrClass::Halted,
            _ => return None,
        })
    }
}

/// Per-cycle observable signal tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SignalSnapshot {
    pub cycle: u64,
    pub pc: Addr,
    pub w_en: bool,
    pub r_en: bool,
    /// Meaningful only when `w_en` or `r_en` is set.
    pub d_addr: Addr,
    pub irq: bool,
    pub instr_class: InstrClass,
}

/// Memory write produced but not yet committed by a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingWrite {
    pub addr: Addr,
    pub value: Word,
}

#[derive(Debug, Clone)]
pub struct StepOut {
    pub snapshot: SignalSnapshot,
    pub pending: Option<PendingWrite>,
    /// Decoded instruction, absent on interrupt-entry and halted cycles.
    pub retired: Option<Instr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MachineFault {
    #[error("decode error at {pc:04x}: cell {cell:02x?}")]
    Decode { pc: Addr, cell: [u8; 4] },
    #[error("pc {pc:04x} outside program memory")]
    PcOutOfRange { pc: Addr },
    #[error("pc {pc:04x} not 4-byte aligned")]
    PcMisaligned { pc: Addr },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LoadError {
    #[error("section {section} ({have} bytes) exceeds its region {region}")]
    SectionOverflow {
        section: String,
        region: String,
        have: usize,
    },
    #[error("{what} entry {addr:04x} not 4-byte aligned")]
    MisalignedEntry { what: String, addr: Addr },
    #[error("program declares no RTOS entry")]
    MissingRtosEntry,
}

#[derive(Debug, Clone)]
pub struct MachineState {
    pub pc: Addr,
    pub regs: [Word; NUM_REGS],
    pub zero_flag: bool,
    pub halted: bool,
    pub nmi_pending: bool,
    pub cycle: u64,
    pmem: Vec<u8>,
    dmem: Vec<u8>,
    pmem_iv: Interval,
    dmem_iv: Interval,
    nmi_vector: Addr,
    saved_pc_addr: Addr,
}

/// Builds the initial machine state: program sections copied into program
/// memory, data memory zeroed, and the protected data block provisioned with
/// the task count, bounds table, update key and a cleared status block.
pub fn load_image(program: &ProgramImage, layout: &MemoryLayout) -> Result<MachineState, LoadError> {
    let mut m = MachineState {
        pc: 0,
        regs: [0; NUM_REGS],
        zero_flag: false,
        halted: false,
        nmi_pending: false,
        cycle: 0,
        pmem: vec![0; layout.pmem.byte_len() as usize],
        dmem: vec![0; layout.dmem.byte_len() as usize],
        pmem_iv: layout.pmem,
        dmem_iv: layout.dmem,
        nmi_vector: layout.trampoline_entry,
        saved_pc_addr: layout.dpair_saved_pc_addr(),
    };

    for sec in &program.sections {
        let region = match sec.kind {
            SectionKind::Rtos => layout.rtos,
            SectionKind::Sw => layout.sw,
            SectionKind::Task(i) => layout
                .task_bounds
                .get(usize::from(i))
                .map(|b| b.as_interval())
                .unwrap_or(Interval::new(0, 0)),
        };
        let end = u32::from(sec.origin) + sec.bytes.len() as u32;
        let fits = sec.bytes.is_empty()
            || (region.contains(sec.origin)
                && end >= 1
                && end - 1 <= u32::from(region.end)
                && region.contains((end - 1) as u16));
        if !fits {
            return Err(LoadError::SectionOverflow {
                section: sec.kind.to_string(),
                region: region.to_string(),
                have: sec.bytes.len(),
            });
        }
        let off = usize::from(sec.origin - layout.pmem.start);
        m.pmem[off..off + sec.bytes.len()].copy_from_slice(&sec.bytes);
    }

    let rtos_entry = program.rtos_entry.ok_or(LoadError::MissingRtosEntry)?;
    for (what, addr) in std::iter::once(("rtos".to_string(), rtos_entry)).chain(
        program
            .task_entries
            .iter()
            .map(|(i, a)| (format!("task {i}"), *a)),
    ) {
        if !addr.is_multiple_of(INSTR_BYTES) {
            return Err(LoadError::MisalignedEntry { what, addr });
        }
    }
    m.pc = rtos_entry;

    // Provision the protected data block.
    m.poke_word(layout.dpair_n_addr(), u16::from(layout.n_tasks));
    for (i, b) in layout.task_bounds.iter().enumerate() {
        let base = layout.dpair_bounds_addr() + 4 * i as u16;
        m.poke_word(base, b.t_min);
        m.poke_word(base + 2, b.t_max);
    }
    for (i, byte) in layout.key.iter().enumerate() {
        m.poke_byte(layout.dpair_key_addr() + i as u16, *byte);
    }
    m.poke_word(layout.dpair_latched_addr(), NO_TASK_SENTINEL);
    m.poke_word(layout.dpair_saved_pc_addr(), 0);
    Ok(m)
}

impl MachineState {
    /// Latches the non-maskable interrupt; idempotent, accepted even when
    /// halted. The next step performs interrupt entry before any fetch.
    pub fn assert_nmi(&mut self) {
        self.nmi_pending = true;
    }

    /// Retires one instruction or one interrupt-entry micro-operation.
    pub fn step(&mut self) -> Result<StepOut, MachineFault> {
        let cycle = self.cycle;
        self.cycle += 1;

        if self.nmi_pending {
            let resume = self.pc;
            self.nmi_pending = false;
            self.halted = false;
            self.pc = self.nmi_vector;
            // Hardware-internal save of the resume pc; no w_en raised.
            self.poke_word(self.saved_pc_addr, resume);
            return Ok(StepOut {
                snapshot: SignalSnapshot {
                    cycle,
                    pc: self.nmi_vector,
                    w_en: false,
                    r_en: false,
                    d_addr: 0,
                    irq: true,
                    instr_class: InstrClass::InterruptEntry,
                },
                pending: None,
                retired: None,
            });
        }

        if self.halted {
            return Ok(StepOut {
                snapshot: SignalSnapshot {
                    cycle,
                    pc: self.pc,
                    w_en: false,
                    r_en: false,
                    d_addr: 0,
                    irq: false,
                    instr_class: InstrClass::Halted,
                },
                pending: None,
                retired: None,
            });
        }

        let pc = self.pc;
        if !pc.is_multiple_of(INSTR_BYTES) {
            return Err(MachineFault::PcMisaligned { pc });
        }
        if !self.pmem_iv.contains(pc) || u32::from(pc) + 3 > u32::from(self.pmem_iv.end) {
            return Err(MachineFault::PcOutOfRange { pc });
        }
        let off = usize::from(pc - self.pmem_iv.start);
        let cell = [
            self.pmem[off],
            self.pmem[off + 1],
            self.pmem[off + 2],
            self.pmem[off + 3],
        ];
        let instr = decode(cell).ok_or(MachineFault::Decode { pc, cell })?;

        let mut next_pc = pc.wrapping_add(INSTR_BYTES);
        let mut w_en = false;
        let mut r_en = false;
        let mut d_addr = 0;
        let mut pending = None;
        let mut class = InstrClass::Plain;
        let r = |i: u8| usize::from(i);

        match instr {
            Instr::Nop | Instr::Yield => {}
            Instr::Halt => self.halted = true,
            Instr::Movi { rd, imm } => self.regs[r(rd)] = imm,
            Instr::Mov { rd, rs } => self.regs[r(rd)] = self.regs[r(rs)],
            Instr::Ld { rd, rs } => {
                let addr = self.regs[r(rs)];
                r_en = true;
                d_addr = addr;
                self.regs[r(rd)] = self.read_word(addr);
                class = InstrClass::Load;
            }
            Instr::St { rd, rs } => {
                let addr = self.regs[r(rd)];
                w_en = true;
                d_addr = addr;
                pending = Some(PendingWrite { addr, value: self.regs[r(rs)] });
                class = InstrClass::Store;
            }
            Instr::Add { rd, rs } => {
                let v = self.regs[r(rd)].wrapping_add(self.regs[r(rs)]);
                self.regs[r(rd)] = v;
                self.zero_flag = v == 0;
            }
            Instr::Sub { rd, rs } => {
                let v = self.regs[r(rd)].wrapping_sub(self.regs[r(rs)]);
                self.regs[r(rd)] = v;
                self.zero_flag = v == 0;
            }
            Instr::Cmp { r1, r2 } => self.zero_flag = self.regs[r(r1)] == self.regs[r(r2)],
            Instr::Beq { target } => {
                if self.zero_flag {
                    next_pc = target;
                }
            }
            Instr::Bne { target } => {
                if !self.zero_flag {
                    next_pc = target;
                }
            }
            Instr::Jmp { target } => next_pc = target,
            Instr::Jmpi { rs } => {
                next_pc = self.regs[r(rs)];
                class = InstrClass::JumpIndirect;
            }
            Instr::Call { target } => {
                let sp = self.regs[SP].wrapping_sub(2);
                self.regs[SP] = sp;
                w_en = true;
                d_addr = sp;
                pending = Some(PendingWrite { addr: sp, value: pc.wrapping_add(4) });
                next_pc = target;
                class = InstrClass::Call;
            }
            Instr::Calli { rs } => {
                let sp = self.regs[SP].wrapping_sub(2);
                self.regs[SP] = sp;
                w_en = true;
                d_addr = sp;
                pending = Some(PendingWrite { addr: sp, value: pc.wrapping_add(4) });
                next_pc = self.regs[r(rs)];
                class = InstrClass::CallIndirect;
            }
            Instr::Ret => {
                let sp = self.regs[SP];
                r_en = true;
                d_addr = sp;
                next_pc = self.read_word(sp);
                self.regs[SP] = sp.wrapping_add(2);
                class = InstrClass::Return;
            }
        }

        self.pc = next_pc;
        Ok(StepOut {
            snapshot: SignalSnapshot {
                cycle,
                pc,
                w_en,
                r_en,
                d_addr,
                irq: false,
                instr_class: class,
            },
            pending,
            retired: Some(instr),
        })
    }

    /// Commits or squashes a pending write. When squashed, memory is
    /// bit-identical to before.
    pub fn commit_write(&mut self, pw: PendingWrite, allowed: bool) {
        if allowed {
            self.poke_word(pw.addr, pw.value);
        }
    }

    /// Reads a little-endian word; each byte routes by address range and
    /// unmapped bytes read as zero.
    pub fn read_word(&self, addr: Addr) -> Word {
        let lo = self.read_byte(addr);
        let hi = self.read_byte(addr.wrapping_add(1));
        u16::from(lo) | (u16::from(hi) << 8)
    }

    pub fn read_byte(&self, addr: Addr) -> u8 {
        if self.pmem_iv.contains(addr) {
            self.pmem[usize::from(addr - self.pmem_iv.start)]
        } else if self.dmem_iv.contains(addr) {
            self.dmem[usize::from(addr - self.dmem_iv.start)]
        } else {
            0
        }
    }

    /// Host-level byte write, bypassing the architectural write path. Used
    /// for image loading, the hardware-owned status block, and scenario
    /// memory-corruption injection.
    pub fn poke_byte(&mut self, addr: Addr, value: u8) {
        if self.pmem_iv.contains(addr) {
            self.pmem[usize::from(addr - self.pmem_iv.start)] = value;
        } else if self.dmem_iv.contains(addr) {
            self.dmem[usize::from(addr - self.dmem_iv.start)] = value;
        }
    }

    pub fn poke_word(&mut self, addr: Addr, value: Word) {
        self.poke_byte(addr, value as u8);
        self.poke_byte(addr.wrapping_add(1), (value >> 8) as u8);
    }

    pub fn set_cycle(&mut self, cycle: u64) {
        self.cycle = cycle;
    }

    pub fn pmem_snapshot(&self) -> Vec<u8> {
        self.pmem.clone()
    }

    /// Copies the bytes of an address interval (clipped to mapped memory).
    pub fn region_snapshot(&self, iv: Interval) -> Vec<u8> {
        (iv.start..=iv.end).map(|a| self.read_byte(a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::asm::{assemble, SectionOrigins};
    use crate::layout::{Interval, MemoryLayout, TaskBounds};
    use proptest::prelude::*;

    fn layout() -> MemoryLayout {
        MemoryLayout {
            pmem: Interval::new(0x8000, 0xBFFF),
            dmem: Interval::new(0x0000, 0x2FFF),
            tr: Interval::new(0x8100, 0x9FFF),
            rtos: Interval::new(0x8000, 0x80FF),
            sw: Interval::new(0xA000, 0xA3FF),
            d: Interval::new(0x0100, 0x28FF),
            d_pair: Interval::new(0x2900, 0x29FF),
            sw_exit: 0xA1FC,
            trampoline_entry: 0xA000,
            updater_entry: 0xA040,
            n_tasks: 1,
            task_bounds: vec![TaskBounds { t_min: 0x8100, t_max: 0x82FF }],
            key: *b"0123456789abcdef",
        }
    }

    fn machine_with(src: &str) -> MachineState {
        let l = layout();
        let img = assemble(src, &SectionOrigins::from_layout(&l)).unwrap();
        load_image(&img, &l).unwrap()
    }

    #[test]
    fn load_zero_initializes() {
        let m = machine_with(".rtos\n.entry e\ne: NOP\n");
        assert_eq!(m.pc, 0x8000);
        assert_eq!(m.regs, [0; 8]);
        assert!(!m.halted);
    }

    #[test]
    fn load_places_task_bytes() {
        let l = layout();
        let img = assemble(
            ".rtos\n.entry e\ne: NOP\n.task 0\n MOVI r1, #7\n NOP\n",
            &SectionOrigins::from_layout(&l),
        )
        .unwrap();
        let m = load_image(&img, &l).unwrap();
        let expected = img.section(crate::asm::SectionKind::Task(0)).unwrap();
        let in_pmem = m.region_snapshot(Interval::new(0x8100, 0x8100 + expected.bytes.len() as u16 - 1));
        assert_eq!(in_pmem, expected.bytes);
    }

    #[test]
    fn load_rejects_oversized_section() {
        let l = layout();
        // Task 0 owns 0x200 bytes = 128 cells; 129 instructions overflow it.
        let mut src = String::from(".rtos\n.entry e\ne: NOP\n.task 0\n");
        for _ in 0..129 {
            src.push_str(" NOP\n");
        }
        let img = assemble(&src, &SectionOrigins::from_layout(&l)).unwrap();
        assert!(matches!(
            load_image(&img, &l),
            Err(LoadError::SectionOverflow { .. })
        ));
    }

    #[test]
    fn load_provisions_protected_block() {
        let l = layout();
        let m = machine_with(".rtos\n.entry e\ne: NOP\n");
        assert_eq!(m.read_word(l.dpair_n_addr()), 1);
        assert_eq!(m.read_word(l.dpair_bounds_addr()), 0x8100);
        assert_eq!(m.read_word(l.dpair_bounds_addr() + 2), 0x82FF);
        assert_eq!(m.read_byte(l.dpair_key_addr()), b'0');
        assert_eq!(m.read_word(l.dpair_latched_addr()), NO_TASK_SENTINEL);
    }

    #[test]
    fn nop_advances_without_signals() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n NOP\n");
        let out = m.step().unwrap();
        assert_eq!(m.pc, 0x8004);
        assert!(!out.snapshot.w_en && !out.snapshot.r_en);
        assert!(out.pending.is_none());
        assert_eq!(out.snapshot.instr_class, InstrClass::Plain);
    }

    #[test]
    fn store_is_pending_until_commit() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n");
        m.regs[1] = 0x0300;
        m.regs[2] = 7;
        m.poke_byte(0x8000, encode(&Instr::St { rd: 1, rs: 2 })[0]);
        let cell = encode(&Instr::St { rd: 1, rs: 2 });
        for (i, b) in cell.iter().enumerate() {
            m.poke_byte(0x8000 + i as u16, *b);
        }
        let out = m.step().unwrap();
        assert!(out.snapshot.w_en);
        assert_eq!(out.snapshot.d_addr, 0x0300);
        assert_eq!(out.pending, Some(PendingWrite { addr: 0x0300, value: 7 }));
        assert_eq!(m.read_word(0x0300), 0, "memory unchanged before commit");
        m.commit_write(out.pending.unwrap(), true);
        assert_eq!(m.read_word(0x0300), 7);
    }

    #[test]
    fn allowed_write_can_patch_program_memory() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n");
        m.commit_write(PendingWrite { addr: 0x8100, value: 0x1234 }, true);
        assert_eq!(m.read_word(0x8100), 0x1234);
    }

    #[test]
    fn squashed_write_leaves_memory_identical() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n");
        let before = m.region_snapshot(Interval::new(0x2900, 0x29FF));
        m.commit_write(PendingWrite { addr: 0x2910, value: 0xBEEF }, false);
        assert_eq!(m.region_snapshot(Interval::new(0x2900, 0x29FF)), before);
    }

    #[test]
    fn call_pushes_return_address() {
        // CALL 0x8100 from pc=0x8020 with sp=0x02FE pushes 0x8024 at 0x02FC.
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n");
        let cell = encode(&Instr::Call { target: 0x8100 });
        for (i, b) in cell.iter().enumerate() {
            m.poke_byte(0x8020 + i as u16, *b);
        }
        m.pc = 0x8020;
        m.regs[SP] = 0x02FE;
        let out = m.step().unwrap();
        assert_eq!(out.pending, Some(PendingWrite { addr: 0x02FC, value: 0x8024 }));
        assert!(out.snapshot.w_en);
        assert_eq!(out.snapshot.d_addr, 0x02FC);
        assert_eq!(out.snapshot.instr_class, InstrClass::Call);
        assert_eq!(m.pc, 0x8100);
        assert_eq!(m.regs[SP], 0x02FC);
    }

    #[test]
    fn nmi_entry_preempts_fetch() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n NOP\n");
        m.step().unwrap();
        m.assert_nmi();
        let out = m.step().unwrap();
        assert!(out.snapshot.irq);
        assert_eq!(out.snapshot.instr_class, InstrClass::InterruptEntry);
        assert_eq!(out.snapshot.pc, 0xA000);
        assert!(!out.snapshot.w_en);
        assert_eq!(m.pc, 0xA000);
        // Interrupted pc saved to the status block.
        assert_eq!(m.read_word(layout().dpair_saved_pc_addr()), 0x8004);
    }

    #[test]
    fn nmi_unhalts_machine() {
        let mut m = machine_with(".rtos\n.entry e\ne: HALT\n");
        m.step().unwrap();
        assert!(m.halted);
        let idle = m.step().unwrap();
        assert_eq!(idle.snapshot.instr_class, InstrClass::Halted);
        m.assert_nmi();
        let out = m.step().unwrap();
        assert_eq!(out.snapshot.instr_class, InstrClass::InterruptEntry);
        assert!(!m.halted);
    }

    #[test]
    fn double_nmi_assert_is_one_entry() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n NOP\n NOP\n");
        m.assert_nmi();
        m.assert_nmi();
        let first = m.step().unwrap();
        assert_eq!(first.snapshot.instr_class, InstrClass::InterruptEntry);
        let second = m.step().unwrap();
        assert_ne!(second.snapshot.instr_class, InstrClass::InterruptEntry);
    }

    #[test]
    fn decode_error_is_a_fault() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n");
        m.poke_byte(0x8000, 0xEE);
        assert!(matches!(m.step(), Err(MachineFault::Decode { pc: 0x8000, .. })));
    }

    #[test]
    fn non_writing_steps_leave_memory_untouched() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\n MOV r1, r2\n CMP r1, r2\nx: JMP x\n");
        m.regs[2] = 0x0300;
        for _ in 0..8 {
            let pmem = m.pmem_snapshot();
            let dmem = m.region_snapshot(Interval::new(0x0000, 0x2FFF));
            let out = m.step().unwrap();
            assert!(!out.snapshot.w_en);
            assert_eq!(m.pmem_snapshot(), pmem);
            assert_eq!(m.region_snapshot(Interval::new(0x0000, 0x2FFF)), dmem);
        }
    }

    #[test]
    fn cycles_strictly_increase() {
        let mut m = machine_with(".rtos\n.entry e\ne: NOP\nx: JMP x\n");
        for expect in 0..8 {
            let out = m.step().unwrap();
            assert_eq!(out.snapshot.cycle, expect);
        }
    }

    fn arb_instr() -> impl Strategy<Value = Instr> {
        let reg = 0u8..8;
        prop_oneof![
            Just(Instr::Nop),
            Just(Instr::Halt),
            Just(Instr::Ret),
            Just(Instr::Yield),
            (reg.clone(), any::<u16>()).prop_map(|(rd, imm)| Instr::Movi { rd, imm }),
            (reg.clone(), reg.clone()).prop_map(|(rd, rs)| Instr::Mov { rd, rs }),
            (reg.clone(), reg.clone()).prop_map(|(rd, rs)| Instr::Ld { rd, rs }),
            (reg.clone(), reg.clone()).prop_map(|(rd, rs)| Instr::St { rd, rs }),
            (reg.clone(), reg.clone()).prop_map(|(rd, rs)| Instr::Add { rd, rs }),
            (reg.clone(), reg.clone()).prop_map(|(rd, rs)| Instr::Sub { rd, rs }),
            (reg.clone(), reg.clone()).prop_map(|(r1, r2)| Instr::Cmp { r1, r2 }),
            any::<u16>().prop_map(|target| Instr::Beq { target }),
            any::<u16>().prop_map(|target| Instr::Bne { target }),
            any::<u16>().prop_map(|target| Instr::Jmp { target }),
            any::<u16>().prop_map(|target| Instr::Call { target }),
            reg.clone().prop_map(|rs| Instr::Jmpi { rs }),
            reg.prop_map(|rs| Instr::Calli { rs }),
        ]
    }

    proptest! {
        #[test]
        fn encode_decode_round_trip(instr in arb_instr()) {
            prop_assert_eq!(decode(encode(&instr)), Some(instr));
        }
    }
}
