//! Minimal RTOS model: task control blocks, the priority scheduler with
//! round-robin among equal priorities, the kill-and-yield decision taken by
//! the trusted trampoline, and update-request validation.
//!
//! The scheduler is deliberately available in a malicious flavor that keeps
//! re-dispatching a killed task; the monitor, not the scheduler, is what
//! keeps revoked tasks from running.

use thiserror::Error;

use crate::im::StackRegion;
use crate::layout::MemoryLayout;
use crate::machine::{Word, NUM_REGS};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunState {
    Ready,
    Running,
    Killed,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SavedContext {
    pub regs: [Word; NUM_REGS],
    pub pc: u16,
    pub zero_flag: bool,
}

/// Task control block.
#[derive(Debug, Clone)]
pub struct Tcb {
    pub id: u8,
    pub priority: u8,
    pub entry: u16,
    pub stack: StackRegion,
    pub run_state: RunState,
    pub saved: Option<SavedContext>,
    pub jobs_completed: u64,
    pub period: u32,
}

impl Tcb {
    pub fn new(id: u8, priority: u8, entry: u16, stack: StackRegion, period: u32) -> Self {
        Self {
            id,
            priority,
            entry,
            stack,
            run_state: RunState::Ready,
            saved: None,
            jobs_completed: 0,
            period,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedPolicy {
    Compliant,
    /// Alternates between a compliant pick and a deliberate dispatch of a
    /// killed task, up to `max_attempts` re-entries.
    MaliciousReenter { max_attempts: u32 },
}

#[derive(Debug, Clone, Copy)]
pub struct SchedulerConfig {
    pub time_slice: u32,
    pub policy: SchedPolicy,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self { time_slice: 200, policy: SchedPolicy::Compliant }
    }
}

/// Mutable scheduler bookkeeping: round-robin cursor and malicious-attempt
/// accounting.
#[derive(Debug, Clone, Copy, Default)]
pub struct SchedulerState {
    pub rr_cursor: usize,
    pub attempts_used: u32,
    flip: bool,
}

/// Picks the next task to run, or `None` for idle. Compliant policy: highest
/// priority among Ready tasks, round-robin within a priority level.
pub fn schedule(tcbs: &[Tcb], config: &SchedulerConfig, state: &mut SchedulerState) -> Option<u8> {
    if let SchedPolicy::MaliciousReenter { max_attempts } = config.policy {
        if state.attempts_used < max_attempts {
            state.flip = !state.flip;
            if state.flip {
                if let Some(victim) = tcbs.iter().find(|t| t.run_state == RunState::Killed) {
                    state.attempts_used += 1;
                    return Some(victim.id);
                }
            }
        }
    }
    let best = tcbs
        .iter()
        .filter(|t| t.run_state == RunState::Ready)
        .map(|t| t.priority)
        .max()?;
    let n = tcbs.len();
    // Round-robin scan starting after the previous pick.
    for off in 0..n {
        let idx = (state.rr_cursor + 1 + off) % n;
        let t = &tcbs[idx];
        if t.run_state == RunState::Ready && t.priority == best {
            state.rr_cursor = idx;
            return Some(t.id);
        }
    }
    None
}

/// Outcome of the trampoline's kill-and-yield decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KillOutcome {
    Killed(u8),
    AlreadyKilled(u8),
    /// No task id was latched (violation outside any task's bounds); the
    /// fallback policy is a full system reset.
    FallbackReset,
}

/// Applies the trampoline decision to the control blocks: mark the latched
/// task killed (idempotent) or demand a system reset when nothing is latched.
pub fn kill_and_yield(latched: Option<u8>, tcbs: &mut [Tcb]) -> KillOutcome {
    match latched {
        Some(id) => {
            let tcb = &mut tcbs[usize::from(id)];
            if tcb.run_state == RunState::Killed {
                KillOutcome::AlreadyKilled(id)
            } else {
                tcb.run_state = RunState::Killed;
                KillOutcome::Killed(id)
            }
        }
        None => KillOutcome::FallbackReset,
    }
}

/// Software-update request delivered through the mailbox.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateRequest {
    pub task: u8,
    pub image: Vec<u8>,
    pub token: [u8; 16],
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum UpdateError {
    #[error("update image ({have} bytes) exceeds task {task} bounds ({max} bytes)")]
    ImageTooLarge { task: u8, have: usize, max: usize },
    #[error("update targets unknown task {task}")]
    UnknownTask { task: u8 },
    #[error("update image length {0} is odd")]
    OddLength(usize),
}

/// Structural validation the scheduler performs before dispatching the
/// trusted updater; token authentication happens inside trusted software.
pub fn validate_update(req: &UpdateRequest, layout: &MemoryLayout) -> Result<(), UpdateError> {
    let bounds = layout
        .task_bounds
        .get(usize::from(req.task))
        .ok_or(UpdateError::UnknownTask { task: req.task })?;
    if !req.image.len().is_multiple_of(2) {
        return Err(UpdateError::OddLength(req.image.len()));
    }
    let max = bounds.as_interval().byte_len() as usize;
    if req.image.len() > max {
        return Err(UpdateError::ImageTooLarge { task: req.task, have: req.image.len(), max });
    }
    Ok(())
}
