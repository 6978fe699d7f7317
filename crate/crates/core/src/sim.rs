//! Composed simulation: machine, integrity monitor, availability monitor and
//! the RTOS model wired together, one trace record per cycle.
//!
//! Per-cycle order: scenario events land first, then the machine retires one
//! operation, the integrity monitor classifies it, the availability monitor
//! steps, the pending memory write is committed or squashed, the interrupt
//! line is latched, and the record is emitted. The trace carries the monitor
//! registers as they were *during* the cycle, so next-state obligations read
//! exactly one row ahead.
//!
//! The RTOS model drives control flow between cycles: context switches move
//! the pc through the scheduler stub in the RTOS region, the trampoline and
//! updater run as real trusted-software code, and `YIELD` is the signal by
//! which any of them hands control back to the model.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::asm::{assemble, AsmError, ProgramImage, SectionOrigins};
use crate::im::{ImConfig, ImState, StackRegion};
use crate::layout::{self, MemoryLayout};
use crate::machine::{
    self, Instr, InstrClass, LoadError, MachineFault, MachineState, SignalSnapshot, StepOut,
    NO_TASK_SENTINEL, SP,
};
use crate::pair::{self, MonitorFault, MonitorState};
use crate::report::{RunReport, UpdateOutcome};
use crate::rtos::{
    kill_and_yield, schedule, validate_update, KillOutcome, RunState, SavedContext, SchedulerConfig,
    SchedulerState, Tcb, UpdateRequest,
};
use crate::scenario::{resolve_addr, resolve_value, Scenario, ScenarioEvent};
use crate::trace::{TraceMeta, TraceRecord};

/// Scheduler-stub length: cycles spent in the RTOS region per dispatch.
pub const STUB_CYCLES: u32 = 6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("layout: {0}")]
    Layout(String),
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("cycle {cycle}: {fault}")]
    Machine { cycle: u64, fault: MachineFault },
    #[error("scenario event: {0}")]
    Event(String),
    #[error("program declares no code for task {0}")]
    MissingTask(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    Stub { remaining: u32 },
    Task { id: u8 },
    Trampoline,
    Updater { task: u8 },
}

#[derive(Debug, Clone)]
enum ResolvedEvent {
    Corrupt { addr: u16, value: u16 },
    Update { task: u8, token: [u8; 16], image: Vec<u8> },
    ForcePc { pc: u16 },
}

/// Everything a finished run produces: the trace, the report, and the
/// before/after images used by the write-squash checks.
#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub scenario_name: String,
    pub meta: TraceMeta,
    pub records: Vec<TraceRecord>,
    pub report: RunReport,
    pub pmem_before: Vec<u8>,
    pub pmem_after: Vec<u8>,
    pub dpair_before: Vec<u8>,
    pub dpair_after: Vec<u8>,
    /// Offsets within the protected-data image owned by hardware (the status
    /// block); the only bytes there that may legitimately change.
    pub status_block_offsets: std::ops::Range<usize>,
}

pub struct Simulation {
    layout: MemoryLayout,
    program: ProgramImage,
    machine: MachineState,
    monitor: MonitorState,
    im: ImState,
    tcbs: Vec<Tcb>,
    sched_cfg: SchedulerConfig,
    sched: SchedulerState,
    phase: Phase,
    slice_used: u32,
    pending_update: Option<u8>,
    events: BTreeMap<u64, Vec<ResolvedEvent>>,
    records: Vec<TraceRecord>,
    revocations: Vec<(u64, u8)>,
    reinstates: Vec<u64>,
    resets: Vec<u64>,
    update_outcomes: Vec<(u64, UpdateOutcome)>,
    counter_owner: BTreeMap<u16, u8>,
    mailbox_addr: u16,
    fault: Option<MonitorFault>,
    cycle: u64,
    scenario_name: String,
    expected: crate::scenario::Expected,
    pmem_before: Vec<u8>,
    dpair_before: Vec<u8>,
}

fn build_tcbs(
    image: &ProgramImage,
    layout: &MemoryLayout,
    cfg: &SchedulerConfig,
) -> Result<Vec<Tcb>, RunError> {
    let mut tcbs = Vec::new();
    for i in 0..layout.n_tasks {
        let entry = image
            .task_entries
            .get(&i)
            .copied()
            .ok_or(RunError::MissingTask(i))?;
        let stack = image
            .stacks
            .get(&i)
            .map(|s| StackRegion { base: s.base, limit: s.limit })
            .ok_or(RunError::MissingTask(i))?;
        tcbs.push(Tcb::new(i, 1, entry, stack, cfg.time_slice));
    }
    Ok(tcbs)
}

fn build_im(image: &ProgramImage, layout: &MemoryLayout) -> ImState {
    let stacks: BTreeMap<u8, StackRegion> = image
        .stacks
        .iter()
        .map(|(i, s)| (*i, StackRegion { base: s.base, limit: s.limit }))
        .collect();
    ImState::new(layout.n_tasks, &ImConfig::default(), &image.ibt, &stacks)
}

impl Simulation {
    pub fn new(scenario: &Scenario, fault: Option<MonitorFault>) -> Result<Self, RunError> {
        Self::from_sources(scenario, &scenario.program_text, &scenario.layout_text, fault)
    }

    /// Builds a simulation from explicit program/layout sources (the CLI path
    /// where both come from files) bound to a scenario's events and policy.
    pub fn from_sources(
        scenario: &Scenario,
        program_text: &str,
        layout_text: &str,
        fault: Option<MonitorFault>,
    ) -> Result<Self, RunError> {
        let layout = layout::parse_config(layout_text).map_err(|e| RunError::Layout(e.to_string()))?;
        layout.validate().map_err(|errs| {
            RunError::Layout(errs.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))
        })?;
        let program = assemble(program_text, &SectionOrigins::from_layout(&layout))?;
        let machine = machine::load_image(&program, &layout)?;
        let im = build_im(&program, &layout);
        let tcbs = build_tcbs(&program, &layout, &scenario.scheduler)?;

        let mut events: BTreeMap<u64, Vec<ResolvedEvent>> = BTreeMap::new();
        for ev in &scenario.events {
            let resolved = match ev {
                ScenarioEvent::CorruptWord { addr, value, .. } => ResolvedEvent::Corrupt {
                    addr: resolve_addr(addr, &program).map_err(RunError::Event)?,
                    value: resolve_value(value, &program).map_err(RunError::Event)?,
                },
                ScenarioEvent::PostUpdate { task, token, image, .. } => ResolvedEvent::Update {
                    task: *task,
                    token: *token,
                    image: image.clone(),
                },
                ScenarioEvent::ForceRtosRoutine { label, .. } => ResolvedEvent::ForcePc {
                    pc: program
                        .symbol(label)
                        .ok_or_else(|| RunError::Event(format!("no symbol `{label}`")))?,
                },
            };
            events.entry(ev.cycle()).or_default().push(resolved);
        }

        let pmem_before = machine.pmem_snapshot();
        let dpair_before = machine.region_snapshot(layout.d_pair);
        let counter_owner = scenario.job_counters.iter().map(|(t, a)| (*a, *t)).collect();

        Ok(Self {
            monitor: MonitorState::reset(layout.n_tasks),
            im,
            tcbs,
            sched_cfg: scenario.scheduler,
            sched: SchedulerState::default(),
            phase: Phase::Stub { remaining: STUB_CYCLES },
            slice_used: 0,
            pending_update: None,
            events,
            records: Vec::new(),
            revocations: Vec::new(),
            reinstates: Vec::new(),
            resets: Vec::new(),
            update_outcomes: Vec::new(),
            counter_owner,
            mailbox_addr: scenario.mailbox_addr,
            fault,
            cycle: 0,
            scenario_name: scenario.name.clone(),
            expected: scenario.expected.clone(),
            pmem_before,
            dpair_before,
            layout,
            program,
            machine,
        })
    }

    pub fn machine(&self) -> &MachineState {
        &self.machine
    }

    pub fn monitor(&self) -> &MonitorState {
        &self.monitor
    }

    pub fn im(&self) -> &ImState {
        &self.im
    }

    pub fn tcbs(&self) -> &[Tcb] {
        &self.tcbs
    }

    pub fn layout(&self) -> &MemoryLayout {
        &self.layout
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    fn apply_event(&mut self, ev: ResolvedEvent) {
        match ev {
            ResolvedEvent::Corrupt { addr, value } => {
                self.machine.poke_word(addr, value);
            }
            ResolvedEvent::Update { task, token, image } => {
                let req = UpdateRequest { task, image, token };
                if let Err(e) = validate_update(&req, &self.layout) {
                    self.update_outcomes
                        .push((self.cycle, UpdateOutcome::Rejected { task, reason: e.to_string() }));
                    return;
                }
                let end = u32::from(self.mailbox_addr) + 20 + req.image.len() as u32;
                if end - 1 > u32::from(self.layout.d.end) {
                    self.update_outcomes.push((
                        self.cycle,
                        UpdateOutcome::Rejected { task, reason: "image exceeds the mailbox".into() },
                    ));
                    return;
                }
                let mb = self.mailbox_addr;
                self.machine.poke_word(mb, u16::from(req.task));
                self.machine.poke_word(mb + 2, req.image.len() as u16);
                for (i, b) in req.token.iter().enumerate() {
                    self.machine.poke_byte(mb + 4 + i as u16, *b);
                }
                for (i, b) in req.image.iter().enumerate() {
                    self.machine.poke_byte(mb + 20 + i as u16, *b);
                }
                self.pending_update = Some(task);
            }
            ResolvedEvent::ForcePc { pc } => {
                if let Phase::Task { id } = self.phase {
                    self.save_context(id);
                }
                self.machine.pc = pc;
                self.phase = Phase::Stub { remaining: 16 };
            }
        }
    }

    /// Integrity-monitor evaluation for one retired operation. Bypassed
    /// entirely outside task bounds.
    fn eval_im(&mut self, snap: &SignalSnapshot, new_pc: u16) -> bool {
        let task = match self.layout.task_of(snap.pc) {
            Some(t) => t,
            None => return false,
        };
        let mut v = false;
        match snap.instr_class {
            InstrClass::Call => {
                v |= self.im.im_call(task, snap.pc.wrapping_add(4));
            }
            InstrClass::CallIndirect => {
                v |= self.im.im_branch(task, snap.pc, new_pc);
                v |= self.im.im_call(task, snap.pc.wrapping_add(4));
            }
            InstrClass::Return => {
                v |= self.im.im_ret(task, new_pc);
            }
            InstrClass::JumpIndirect => {
                v |= self.im.im_branch(task, snap.pc, new_pc);
            }
            _ => {}
        }
        if snap.w_en {
            v |= self.im.im_data(task, true, snap.d_addr);
        }
        v
    }

    pub fn step_cycle(&mut self) -> Result<(), RunError> {
        let cycle = self.cycle;
        if let Some(events) = self.events.remove(&cycle) {
            for ev in events {
                self.apply_event(ev);
            }
        }

        let out = self
            .machine
            .step()
            .map_err(|fault| RunError::Machine { cycle, fault })?;
        let snap = out.snapshot;
        debug_assert_eq!(snap.cycle, cycle);

        let violation_im = self.eval_im(&snap, self.machine.pc);

        let pre = self.monitor;
        let (next_monitor, mon_out) =
            pair::step_monitor(&pre, &snap, violation_im, &self.layout, self.fault);

        if let Some(pw) = out.pending {
            self.machine.commit_write(pw, !mon_out.block_write);
        }

        if mon_out.assert_nmi {
            self.machine.assert_nmi();
            let encoded = next_monitor.latched_task.map_or(NO_TASK_SENTINEL, u16::from);
            self.machine
                .poke_word(self.layout.dpair_latched_addr(), encoded);
        }

        self.records.push(TraceRecord {
            cycle,
            pc: snap.pc,
            region: self.layout.classify(snap.pc),
            task_id: self.layout.task_of(snap.pc),
            latched_task: pre.latched_task,
            instr_class: snap.instr_class,
            w_en: snap.w_en,
            r_en: snap.r_en,
            d_addr: snap.d_addr,
            irq: snap.irq,
            violation_im,
            violation_pair: next_monitor.violation_pair,
            trigger: mon_out.trigger,
            ar_en: pre.ar_en.raw(),
            trigger_state: pre.trigger_state,
            ar_state: pre.ar_state,
        });

        if pre.ar_state == pair::ArState::Revoke {
            if let Some(t) = pre.latched_task {
                self.revocations.push((cycle, t));
            }
        }
        if pre.ar_state == pair::ArState::Reinstate {
            self.reinstates.push(cycle);
        }
        if snap.w_en && !mon_out.block_write {
            if let Some(&task) = self.counter_owner.get(&snap.d_addr) {
                if snap.instr_class == InstrClass::Store {
                    self.tcbs[usize::from(task)].jobs_completed += 1;
                }
            }
        }

        self.monitor = next_monitor;
        self.rtos_hooks(&out);
        self.cycle += 1;
        Ok(())
    }

    fn save_context(&mut self, id: u8) {
        let tcb = &mut self.tcbs[usize::from(id)];
        tcb.saved = Some(SavedContext {
            regs: self.machine.regs,
            pc: self.machine.pc,
            zero_flag: self.machine.zero_flag,
        });
        if tcb.run_state == RunState::Running {
            tcb.run_state = RunState::Ready;
        }
    }

    fn enter_stub(&mut self) {
        self.phase = Phase::Stub { remaining: STUB_CYCLES };
        self.machine.pc = self.program.rtos_entry.expect("validated at load");
        self.slice_used = 0;
    }

    fn dispatch(&mut self, id: u8) {
        let tcb = &mut self.tcbs[usize::from(id)];
        if tcb.run_state == RunState::Ready {
            tcb.run_state = RunState::Running;
        }
        let ctx = tcb.saved.unwrap_or_else(|| {
            let mut regs = [0u16; machine::NUM_REGS];
            regs[SP] = tcb.stack.base;
            SavedContext { regs, pc: tcb.entry, zero_flag: false }
        });
        self.machine.regs = ctx.regs;
        self.machine.pc = ctx.pc;
        self.machine.zero_flag = ctx.zero_flag;
        self.slice_used = 0;
        self.phase = Phase::Task { id };
    }

    fn dispatch_updater(&mut self, task: u8) {
        self.machine.regs = [0; machine::NUM_REGS];
        self.machine.zero_flag = false;
        self.machine.pc = self.layout.updater_entry;
        self.phase = Phase::Updater { task };
    }

    /// Full system reset: machine reloaded, monitors cleared, every task back
    /// to its entry. Cycle numbering continues.
    fn system_reset(&mut self) -> Result<(), RunError> {
        let jobs: Vec<u64> = self.tcbs.iter().map(|t| t.jobs_completed).collect();
        self.machine = machine::load_image(&self.program, &self.layout)?;
        self.machine.set_cycle(self.cycle + 1);
        self.monitor = MonitorState::reset(self.layout.n_tasks);
        self.im.reset_all();
        self.tcbs = build_tcbs(&self.program, &self.layout, &self.sched_cfg)?;
        for (tcb, j) in self.tcbs.iter_mut().zip(jobs) {
            tcb.jobs_completed = j;
        }
        self.sched = SchedulerState::default();
        self.slice_used = 0;
        self.pending_update = None;
        self.phase = Phase::Stub { remaining: STUB_CYCLES };
        self.resets.push(self.cycle);
        Ok(())
    }

    fn rtos_hooks(&mut self, out: &StepOut) {
        if out.snapshot.instr_class == InstrClass::InterruptEntry {
            // Vectored into the trampoline; the interrupted context is dead.
            self.phase = Phase::Trampoline;
            self.slice_used = 0;
            return;
        }
        if self.machine.halted {
            return;
        }
        let yielded = out.retired == Some(Instr::Yield);
        match self.phase {
            Phase::Task { id } => {
                if yielded {
                    self.save_context(id);
                    self.enter_stub();
                } else {
                    self.slice_used += 1;
                    if self.slice_used >= self.sched_cfg.time_slice {
                        self.save_context(id);
                        self.enter_stub();
                    }
                }
            }
            Phase::Trampoline => {
                if yielded {
                    match kill_and_yield(self.monitor.latched_task, &mut self.tcbs) {
                        KillOutcome::Killed(t) => {
                            self.im.reset_task(t);
                            self.enter_stub();
                        }
                        KillOutcome::AlreadyKilled(_) => self.enter_stub(),
                        KillOutcome::FallbackReset => {
                            let _ = self.system_reset();
                        }
                    }
                }
            }
            Phase::Updater { task } => {
                if yielded {
                    if out.snapshot.pc == self.layout.sw_exit {
                        let tcb = &mut self.tcbs[usize::from(task)];
                        tcb.run_state = RunState::Ready;
                        tcb.saved = None;
                        self.im.reset_task(task);
                        self.update_outcomes
                            .push((self.cycle, UpdateOutcome::Applied { task }));
                    } else {
                        self.update_outcomes
                            .push((self.cycle, UpdateOutcome::AuthFailed { task }));
                    }
                    self.pending_update = None;
                    self.enter_stub();
                }
            }
            Phase::Stub { remaining } => {
                if remaining > 1 {
                    self.phase = Phase::Stub { remaining: remaining - 1 };
                } else if let Some(task) = self.pending_update.take() {
                    self.dispatch_updater(task);
                } else {
                    match schedule(&self.tcbs, &self.sched_cfg, &mut self.sched) {
                        Some(id) => self.dispatch(id),
                        None => self.phase = Phase::Stub { remaining: STUB_CYCLES },
                    }
                }
            }
        }
    }

    pub fn run(&mut self, cycles: u64) -> Result<(), RunError> {
        for _ in 0..cycles {
            self.step_cycle()?;
        }
        Ok(())
    }

    pub fn finish(self) -> ScenarioRun {
        let meta = TraceMeta::from_layout(&self.layout);
        let status_start = usize::from(self.layout.dpair_latched_addr() - self.layout.d_pair.start);
        let report = RunReport::build(
            &self.scenario_name,
            &self.records,
            &meta,
            &self.layout,
            &self.sched_cfg,
            &self.expected,
            &self.revocations,
            &self.reinstates,
            &self.resets,
            &self.update_outcomes,
            &self.counter_owner,
        );
        ScenarioRun {
            scenario_name: self.scenario_name.clone(),
            meta,
            pmem_after: self.machine.pmem_snapshot(),
            dpair_after: self.machine.region_snapshot(self.layout.d_pair),
            pmem_before: self.pmem_before,
            dpair_before: self.dpair_before,
            status_block_offsets: status_start..status_start + 4,
            records: self.records,
            report,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub cycles: Option<u64>,
    pub monitor_fault: Option<MonitorFault>,
}

/// Runs a scenario to completion with its embedded program and layout.
pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioRun, RunError> {
    run_scenario_with(scenario, &RunOptions::default())
}

pub fn run_scenario_with(scenario: &Scenario, opts: &RunOptions) -> Result<ScenarioRun, RunError> {
    let mut sim = Simulation::new(scenario, opts.monitor_fault)?;
    sim.run(opts.cycles.unwrap_or(scenario.run_cycles))?;
    Ok(sim.finish())
}
