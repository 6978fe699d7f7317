//! Scenario catalog: workload programs, layouts, injected events and
//! expected outcomes for the simulation harness.
//!
//! Attacks are ordinary assembly programs plus, where needed, a scenario
//! event that corrupts a data word at a fixed cycle (standing in for the
//! memory-vulnerability exploit that a real attacker would use). The monitor
//! only ever sees architectural signals.
//!
//! Program and layout sources are generated from one shared geometry so the
//! trusted-software entry points in the layout always line up with the
//! assembled code. Event addresses are symbolic and resolve against the
//! assembled program at run time.

use std::collections::BTreeMap;

use crate::asm::{assemble, ProgramImage, SectionOrigins};
use crate::layout::{self, MemoryLayout};
use crate::rtos::{SchedPolicy, SchedulerConfig};

/// Address not yet resolved against an assembled program.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AddrRef {
    Abs(u16),
    Label(String),
    /// `words_down` words below a task's initial stack pointer; slot 1 is the
    /// first pushed return address.
    StackSlot { task: u8, words_down: u16 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ValueRef {
    Abs(u16),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioEvent {
    /// Overwrites one data word, modeling an exploited memory vulnerability.
    CorruptWord { cycle: u64, addr: AddrRef, value: ValueRef },
    /// Delivers a software-update request to the mailbox.
    PostUpdate { cycle: u64, task: u8, token: [u8; 16], image: Vec<u8> },
    /// Redirects control into an RTOS-resident routine, modeling a scheduler
    /// bug that executes a violating code path.
    ForceRtosRoutine { cycle: u64, label: String },
}

impl ScenarioEvent {
    pub fn cycle(&self) -> u64 {
        match self {
            ScenarioEvent::CorruptWord { cycle, .. }
            | ScenarioEvent::PostUpdate { cycle, .. }
            | ScenarioEvent::ForceRtosRoutine { cycle, .. } => *cycle,
        }
    }
}

/// Outcomes a scenario is expected to produce; validated after every run.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Expected {
    pub revoked_ever: Vec<u8>,
    pub revoked_final: Vec<u8>,
    pub reinstates: usize,
    pub resets: usize,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub program_text: String,
    pub layout_text: String,
    pub scheduler: SchedulerConfig,
    pub events: Vec<ScenarioEvent>,
    pub run_cycles: u64,
    /// Per-task job-counter word addresses; one committed store to the
    /// counter marks one completed job.
    pub job_counters: BTreeMap<u8, u16>,
    pub mailbox_addr: u16,
    pub expected: Expected,
}

/// Shared address-space geometry for all generated scenarios.
#[derive(Debug, Clone, Copy)]
pub struct Geometry {
    pub n_tasks: u8,
}

impl Geometry {
    pub const PMEM: (u16, u16) = (0x8000, 0xBFFF);
    pub const DMEM: (u16, u16) = (0x0000, 0x2FFF);
    pub const RTOS: (u16, u16) = (0x8000, 0x80FF);
    pub const TR: (u16, u16) = (0x8100, 0x9FFF);
    pub const SW: (u16, u16) = (0xA000, 0xA3FF);
    pub const D: (u16, u16) = (0x0100, 0x28FF);
    pub const DPAIR: (u16, u16) = (0x2900, 0x29FF);
    pub const MAILBOX: u16 = 0x2000;

    pub fn key() -> [u8; 16] {
        let mut k = [0u8; 16];
        for (i, b) in k.iter_mut().enumerate() {
            *b = i as u8;
        }
        k
    }

    pub fn key_hex() -> String {
        Self::key().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn task_bounds(i: u8) -> (u16, u16) {
        let min = Self::TR.0 + 0x0200 * u16::from(i);
        (min, min + 0x01FF)
    }

    /// Initial stack pointer and lowest stack address of a task.
    pub fn stack(i: u8) -> (u16, u16) {
        let limit = 0x0400 + 0x0100 * u16::from(i);
        (limit + 0xFE, limit)
    }

    pub fn counter(i: u8) -> u16 {
        0x0300 + 0x10 * u16::from(i)
    }

    pub fn fnptr(i: u8) -> u16 {
        0x0308 + 0x10 * u16::from(i)
    }

    pub fn dpair_bounds_addr(&self) -> u16 {
        Self::DPAIR.0 + 2
    }

    pub fn dpair_key_addr(&self) -> u16 {
        Self::DPAIR.0 + 2 + 4 * u16::from(self.n_tasks)
    }

    pub fn dpair_latched_addr(&self) -> u16 {
        Self::DPAIR.0 + 18 + 4 * u16::from(self.n_tasks)
    }

    pub fn origins(&self) -> SectionOrigins {
        SectionOrigins {
            rtos: Self::RTOS.0,
            sw: Self::SW.0,
            tasks: (0..self.n_tasks).map(|i| Self::task_bounds(i).0).collect(),
        }
    }

    /// Scheduler loop stub plus an always-present buggy routine that touches
    /// protected data; only the rtos-violation scenario ever reaches it.
    fn rtos_block(&self) -> String {
        let mut s = String::from(".rtos\n.entry rtos_entry\nrtos_entry:\n");
        for _ in 0..16 {
            s.push_str("  NOP\n");
        }
        s.push_str("rtos_idle:\n  JMP rtos_idle\n");
        s.push_str(&format!(
            "rtos_bug:\n  MOVI r1, #0x{:04X}\n  MOVI r2, #0xDEAD\n  ST [r1], r2\n  JMP rtos_idle\n",
            self.dpair_key_addr()
        ));
        s
    }

    /// Trusted software: the kill-and-yield trampoline and the updater. The
    /// updater authenticates the mailbox token against the key, copies the
    /// image into the target task's bounds, and exits through its final
    /// instruction (the availability-reset point) only on success.
    fn sw_block(&self) -> String {
        format!(
            "\
.sw
sw_tramp:
  MOVI r1, #0x{latched:04X}
  LD r0, [r1]
  NOP
  YIELD
sw_updater:
  MOVI r0, #0x{mailbox:04X}
  MOVI r5, #2
  MOV r1, r0
  ADD r1, r5
  ADD r1, r5
  MOVI r2, #0x{key:04X}
  MOVI r3, #16
u_tok:
  LD r4, [r1]
  LD r6, [r2]
  CMP r4, r6
  BNE u_fail
  ADD r1, r5
  ADD r2, r5
  SUB r3, r5
  MOVI r6, #0
  CMP r3, r6
  BNE u_tok
  LD r3, [r0]
  ADD r3, r3
  ADD r3, r3
  MOVI r2, #0x{bounds:04X}
  ADD r2, r3
  LD r2, [r2]
  MOV r1, r0
  ADD r1, r5
  LD r3, [r1]
  MOVI r4, #18
  ADD r1, r4
  MOVI r6, #0
  CMP r3, r6
  BEQ u_done
u_copy:
  LD r4, [r1]
  ST [r2], r4
  ADD r1, r5
  ADD r2, r5
  SUB r3, r5
  MOVI r6, #0
  CMP r3, r6
  BNE u_copy
u_done:
  YIELD
u_fail:
  YIELD
",
            latched = self.dpair_latched_addr(),
            mailbox = Self::MAILBOX,
            key = self.dpair_key_addr(),
            bounds = self.dpair_bounds_addr(),
        )
    }
}

fn task_header(i: u8, geom: &Geometry) -> String {
    let _ = geom;
    let (base, limit) = Geometry::stack(i);
    format!(".task {i}\n.entry t{i}_main\n.stack 0x{base:04X} 0x{limit:04X}\n")
}

/// Plain worker: spin loop, a helper call, a job-counter store, yield.
fn benign_task(i: u8, geom: &Geometry) -> String {
    format!(
        "\
{header}t{i}_main:
  MOVI r4, #1
  MOVI r5, #0
  MOVI r1, #0x{counter:04X}
t{i}_job:
  MOVI r3, #8
t{i}_work:
  SUB r3, r4
  CMP r3, r5
  BNE t{i}_work
  CALL t{i}_helper
  LD r6, [r1]
  ADD r6, r4
  ST [r1], r6
  YIELD
  JMP t{i}_job
t{i}_helper:
  NOP
  NOP
  RET
",
        header = task_header(i, geom),
        counter = Geometry::counter(i),
    )
}

/// Worker that behaves for `benign_jobs` jobs and then performs one attack
/// instruction against `target`.
fn attacker_task(i: u8, geom: &Geometry, benign_jobs: u16, target: u16, write: bool) -> String {
    let attack = if write { "ST [r1], r2" } else { "LD r2, [r1]" };
    format!(
        "\
{header}t{i}_main:
  MOVI r4, #1
  MOVI r5, #0
  MOVI r1, #0x{counter:04X}
  MOVI r6, #{benign_jobs}
t{i}_job:
  MOVI r3, #8
t{i}_work:
  SUB r3, r4
  CMP r3, r5
  BNE t{i}_work
  LD r2, [r1]
  ADD r2, r4
  ST [r1], r2
  YIELD
  SUB r6, r4
  CMP r6, r5
  BNE t{i}_job
  MOVI r1, #0x{target:04X}
  MOVI r2, #0xBEEF
  {attack}
t{i}_trap:
  JMP t{i}_trap
",
        header = task_header(i, geom),
        counter = Geometry::counter(i),
    )
}

/// Worker with a long-running callee; its in-memory return slot is the
/// corruption target for the return-hijack scenario.
fn rop_task(i: u8, geom: &Geometry) -> String {
    format!(
        "\
{header}t{i}_main:
  MOVI r4, #1
  MOVI r5, #0
  MOVI r1, #0x{counter:04X}
t{i}_job:
  CALL t{i}_victim
  LD r6, [r1]
  ADD r6, r4
  ST [r1], r6
  YIELD
  JMP t{i}_job
t{i}_victim:
  MOVI r3, #300
t{i}_spin:
  SUB r3, r4
  CMP r3, r5
  BNE t{i}_spin
  RET
t{i}_gadget:
  NOP
t{i}_gtrap:
  JMP t{i}_gtrap
",
        header = task_header(i, geom),
        counter = Geometry::counter(i),
    )
}

/// Worker driving an indirect call through a function-pointer word in data
/// memory; the pointer is the corruption target for the jump-hijack scenario.
fn jop_task(i: u8, geom: &Geometry) -> String {
    format!(
        "\
{header}t{i}_main:
  MOVI r4, #1
  MOVI r5, #0
  MOVI r1, #0x{fnptr:04X}
  MOVI r2, #t{i}_ok
  ST [r1], r2
  MOVI r6, #0x{counter:04X}
t{i}_job:
  LD r2, [r1]
t{i}_site:
  CALLI r2
  LD r3, [r6]
  ADD r3, r4
  ST [r6], r3
  YIELD
  JMP t{i}_job
t{i}_ok:
  NOP
  RET
t{i}_evil:
  NOP
  RET
.ibt t{i}_site t{i}_ok
",
        header = task_header(i, geom),
        fnptr = Geometry::fnptr(i),
        counter = Geometry::counter(i),
    )
}

/// Worker that completes one job and then recurses without bound; the shadow
/// stack's capacity turns the runaway call chain into a violation.
fn recursion_task(i: u8, geom: &Geometry) -> String {
    format!(
        "\
{header}t{i}_main:
  MOVI r4, #1
  MOVI r5, #0
  MOVI r1, #0x{counter:04X}
t{i}_job:
  LD r6, [r1]
  ADD r6, r4
  ST [r1], r6
  YIELD
  CALL t{i}_rec
  JMP t{i}_job
t{i}_rec:
  NOP
  CALL t{i}_rec
  RET
",
        header = task_header(i, geom),
        counter = Geometry::counter(i),
    )
}

/// Renders the layout config for a generated program, reading the
/// trusted-software entry points out of the assembled symbol table.
fn render_layout(geom: &Geometry, image: &ProgramImage) -> String {
    let sym = |name: &str| image.symbol(name).expect("generated program symbol");
    let mut s = String::new();
    let iv = |(a, b): (u16, u16)| format!("0x{a:04X}..0x{b:04X}");
    s.push_str(&format!("pmem = {}\n", iv(Geometry::PMEM)));
    s.push_str(&format!("dmem = {}\n", iv(Geometry::DMEM)));
    s.push_str(&format!("tr = {}\n", iv(Geometry::TR)));
    s.push_str(&format!("rtos = {}\n", iv(Geometry::RTOS)));
    s.push_str(&format!("sw = {}\n", iv(Geometry::SW)));
    s.push_str(&format!("d = {}\n", iv(Geometry::D)));
    s.push_str(&format!("dpair = {}\n", iv(Geometry::DPAIR)));
    s.push_str(&format!("sw_exit = 0x{:04X}\n", sym("u_done")));
    s.push_str(&format!("trampoline_entry = 0x{:04X}\n", sym("sw_tramp")));
    s.push_str(&format!("updater_entry = 0x{:04X}\n", sym("sw_updater")));
    s.push_str(&format!("ntasks = {}\n", geom.n_tasks));
    for i in 0..geom.n_tasks {
        let (lo, hi) = Geometry::task_bounds(i);
        s.push_str(&format!("task{i} = 0x{lo:04X}..0x{hi:04X}\n"));
    }
    s.push_str(&format!("key = {}\n", Geometry::key_hex()));
    s
}

struct Builder {
    geom: Geometry,
    tasks: Vec<String>,
}

impl Builder {
    fn new(n_tasks: u8) -> Self {
        Self { geom: Geometry { n_tasks }, tasks: Vec::new() }
    }

    fn push(&mut self, text: String) -> &mut Self {
        self.tasks.push(text);
        self
    }

    fn build(
        &self,
        name: &str,
        description: &str,
        scheduler: SchedulerConfig,
        events: Vec<ScenarioEvent>,
        run_cycles: u64,
        expected: Expected,
    ) -> Scenario {
        let mut program_text = self.geom.rtos_block();
        program_text.push_str(&self.geom.sw_block());
        for t in &self.tasks {
            program_text.push_str(t);
        }
        let image = assemble(&program_text, &self.geom.origins())
            .expect("generated program must assemble");
        let layout_text = render_layout(&self.geom, &image);
        let job_counters = (0..self.geom.n_tasks)
            .map(|i| (i, Geometry::counter(i)))
            .collect();
        Scenario {
            name: name.to_string(),
            description: description.to_string(),
            program_text,
            layout_text,
            scheduler,
            events,
            run_cycles,
            job_counters,
            mailbox_addr: Geometry::MAILBOX,
            expected,
        }
    }
}

/// Assembled image of a benign replacement for one task, used as the payload
/// of update requests.
pub fn patch_image_for(task: u8) -> Vec<u8> {
    let geom = Geometry { n_tasks: task + 1 };
    let src = benign_task(task, &geom);
    let image = assemble(&src, &geom.origins()).expect("patch must assemble");
    image
        .section(crate::asm::SectionKind::Task(task))
        .expect("patch section")
        .bytes
        .clone()
}

fn compliant(time_slice: u32) -> SchedulerConfig {
    SchedulerConfig { time_slice, policy: SchedPolicy::Compliant }
}

/// The shipped scenario catalog.
pub fn catalog() -> Vec<Scenario> {
    let mut out = Vec::new();

    {
        let mut b = Builder::new(3);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(benign_task(1, &b.geom.clone()));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "benign_multitask",
            "three well-behaved workers; no violations expected",
            compliant(200),
            vec![],
            100_000,
            Expected::default(),
        ));
    }

    {
        let mut b = Builder::new(3);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(rop_task(1, &b.geom.clone()));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "rop_return_corruption",
            "task 1's in-memory return slot is corrupted mid-call; its return hijacks control",
            compliant(200),
            vec![ScenarioEvent::CorruptWord {
                cycle: 700,
                addr: AddrRef::StackSlot { task: 1, words_down: 1 },
                value: ValueRef::Label("t1_gadget".into()),
            }],
            20_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(3);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(jop_task(1, &b.geom.clone()));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "jop_indirect",
            "task 1's function pointer is corrupted; its indirect call leaves the declared targets",
            compliant(200),
            vec![ScenarioEvent::CorruptWord {
                cycle: 5_000,
                addr: AddrRef::Abs(Geometry::fnptr(1)),
                value: ValueRef::Label("t1_evil".into()),
            }],
            20_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(3);
        let key_addr = b.geom.dpair_key_addr();
        b.push(benign_task(0, &b.geom.clone()));
        b.push(attacker_task(1, &b.geom.clone(), 3, key_addr, true));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "dpair_write",
            "task 1 writes into the protected data region; the write is squashed and the task revoked",
            compliant(200),
            vec![],
            15_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(3);
        let target = Geometry::task_bounds(0).0;
        b.push(benign_task(0, &b.geom.clone()));
        b.push(attacker_task(1, &b.geom.clone(), 3, target, true));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "pmem_write",
            "task 1 attempts code injection by writing program memory; squashed and revoked",
            compliant(200),
            vec![],
            15_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(3);
        let victim_slot = Geometry::stack(1).1;
        b.push(attacker_task(0, &b.geom.clone(), 3, victim_slot, true));
        b.push(benign_task(1, &b.geom.clone()));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "cross_stack_write",
            "task 0 writes into task 1's stack region; the integrity monitor flags it",
            compliant(200),
            vec![],
            15_000,
            Expected { revoked_ever: vec![0], revoked_final: vec![0], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(2);
        let key_addr = b.geom.dpair_key_addr();
        b.push(benign_task(0, &b.geom.clone()));
        b.push(attacker_task(1, &b.geom.clone(), 3, key_addr, true));
        out.push(b.build(
            "reentry_malicious_scheduler",
            "a malicious scheduler re-dispatches the killed task 100 times; each attempt dies in one instruction",
            SchedulerConfig {
                time_slice: 200,
                policy: SchedPolicy::MaliciousReenter { max_attempts: 100 },
            },
            vec![],
            20_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(2);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(rop_task(1, &b.geom.clone()));
        out.push(b.build(
            "update_and_reinstate",
            "task 1 is revoked, then a correctly authenticated update patches and reinstates it",
            compliant(200),
            vec![
                ScenarioEvent::CorruptWord {
                    cycle: 700,
                    addr: AddrRef::StackSlot { task: 1, words_down: 1 },
                    value: ValueRef::Label("t1_gadget".into()),
                },
                ScenarioEvent::PostUpdate {
                    cycle: 8_000,
                    task: 1,
                    token: Geometry::key(),
                    image: patch_image_for(1),
                },
            ],
            30_000,
            Expected {
                revoked_ever: vec![1],
                revoked_final: vec![],
                reinstates: 1,
                resets: 0,
            },
        ));
    }

    {
        let mut b = Builder::new(2);
        let mut bad = Geometry::key();
        bad[0] ^= 0xFF;
        b.push(benign_task(0, &b.geom.clone()));
        b.push(rop_task(1, &b.geom.clone()));
        out.push(b.build(
            "update_wrong_token",
            "an update with a bad token is rejected inside trusted software; availability is unchanged",
            compliant(200),
            vec![
                ScenarioEvent::CorruptWord {
                    cycle: 700,
                    addr: AddrRef::StackSlot { task: 1, words_down: 1 },
                    value: ValueRef::Label("t1_gadget".into()),
                },
                ScenarioEvent::PostUpdate {
                    cycle: 8_000,
                    task: 1,
                    token: bad,
                    image: patch_image_for(1),
                },
            ],
            20_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(2);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(benign_task(1, &b.geom.clone()));
        out.push(b.build(
            "violation_in_rtos",
            "a scheduler-resident bug touches protected data; no task is attributable, so the system resets",
            compliant(200),
            vec![ScenarioEvent::ForceRtosRoutine { cycle: 5_000, label: "rtos_bug".into() }],
            15_000,
            Expected { resets: 1, ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(3);
        let key_addr = b.geom.dpair_key_addr();
        let pmem_target = Geometry::task_bounds(2).0;
        b.push(attacker_task(0, &b.geom.clone(), 3, key_addr, false));
        b.push(attacker_task(1, &b.geom.clone(), 6, pmem_target, true));
        b.push(benign_task(2, &b.geom.clone()));
        out.push(b.build(
            "multi_violation",
            "task 0 reads protected data, task 1 later writes program memory; both are revoked, task 2 continues",
            compliant(200),
            vec![],
            20_000,
            Expected { revoked_ever: vec![0, 1], revoked_final: vec![0, 1], ..Default::default() },
        ));
    }

    {
        let mut b = Builder::new(2);
        b.push(benign_task(0, &b.geom.clone()));
        b.push(recursion_task(1, &b.geom.clone()));
        out.push(b.build(
            "shadow_stack_overflow",
            "task 1 recurses past the shadow stack capacity; the overflow is a violation and the task is revoked",
            compliant(200),
            vec![],
            15_000,
            Expected { revoked_ever: vec![1], revoked_final: vec![1], ..Default::default() },
        ));
    }

    out
}

pub fn find(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name == name)
}

/// Resolves a symbolic address against an assembled program.
pub fn resolve_addr(addr: &AddrRef, image: &ProgramImage) -> Result<u16, String> {
    match addr {
        AddrRef::Abs(a) => Ok(*a),
        AddrRef::Label(l) => image
            .symbol(l)
            .ok_or_else(|| format!("label `{l}` required by the scenario is not in the program")),
        AddrRef::StackSlot { task, words_down } => {
            let stack = image
                .stacks
                .get(task)
                .ok_or_else(|| format!("task {task} declares no stack"))?;
            Ok(stack.base - 2 * words_down)
        }
    }
}

pub fn resolve_value(value: &ValueRef, image: &ProgramImage) -> Result<u16, String> {
    match value {
        ValueRef::Abs(v) => Ok(*v),
        ValueRef::Label(l) => image
            .symbol(l)
            .ok_or_else(|| format!("label `{l}` required by the scenario is not in the program")),
    }
}

/// Parses and validates a scenario's layout text.
pub fn scenario_layout(s: &Scenario) -> Result<MemoryLayout, String> {
    let layout = layout::parse_config(&s.layout_text).map_err(|e| e.to_string())?;
    layout
        .validate()
        .map_err(|errs| errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_at_least_ten_scenarios() {
        assert!(catalog().len() >= 10);
    }

    #[test]
    fn every_scenario_assembles_and_validates() {
        for s in catalog() {
            let layout = scenario_layout(&s).unwrap();
            let image = assemble(&s.program_text, &SectionOrigins::from_layout(&layout))
                .unwrap_or_else(|e| panic!("{}: {e}", s.name));
            for ev in &s.events {
                match ev {
                    ScenarioEvent::CorruptWord { addr, value, .. } => {
                        resolve_addr(addr, &image).unwrap();
                        resolve_value(value, &image).unwrap();
                    }
                    ScenarioEvent::ForceRtosRoutine { label, .. } => {
                        assert!(image.symbol(label).is_some());
                    }
                    ScenarioEvent::PostUpdate { image: img, .. } => {
                        assert!(img.len() % 2 == 0 && !img.is_empty());
                    }
                }
            }
        }
    }

    #[test]
    fn layout_exit_points_match_symbols() {
        let s = find("benign_multitask").unwrap();
        let layout = scenario_layout(&s).unwrap();
        let image = assemble(&s.program_text, &SectionOrigins::from_layout(&layout)).unwrap();
        assert_eq!(Some(layout.sw_exit), image.symbol("u_done"));
        assert_eq!(Some(layout.trampoline_entry), image.symbol("sw_tramp"));
        assert_eq!(Some(layout.updater_entry), image.symbol("sw_updater"));
    }

    #[test]
    fn scenario_names_are_unique() {
        let names: Vec<_> = catalog().into_iter().map(|s| s.name).collect();
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(names.len(), dedup.len());
    }
}
