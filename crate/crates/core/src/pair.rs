//! Availability/integrity monitor hardware model.
//!
//! Two small state machines run in lockstep with the MCU. The trigger FSM
//! raises the non-maskable interrupt line one cycle after any violation
//! (illegal access, integrity-monitor report, or re-entry of a revoked task)
//! and drops it once the MCU accepts the interrupt. The availability FSM
//! maintains the availability bitvector: it clears the latched violator's bit
//! on a trigger and restores all bits when the trusted updater retires its
//! exit instruction.
//!
//! Both FSMs are exposed as pure next-state functions so that the exhaustive
//! checker in [`crate::fsm_check`] can drive every state/input combination
//! directly. [`MonitorFault`] can seed one of six single-condition mutations
//! into the transition logic for sensitivity testing; production callers pass
//! `None`.

use thiserror::Error;

use crate::layout::MemoryLayout;
use crate::machine::SignalSnapshot;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MonitorError {
    #[error("task id {id} out of range for {width} tasks")]
    OutOfRangeId { id: u8, width: u8 },
}

/// Availability bitvector; bit `i` set means task `i` may execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArEnable {
    bits: u16,
    width: u8,
}

impl ArEnable {
    /// All tasks available; the reset value.
    pub fn all_set(width: u8) -> Self {
        assert!((1..=16).contains(&width), "width {width} out of range");
        let bits = (((1u32 << width) - 1) & 0xFFFF) as u16;
        Self { bits, width }
    }

    pub fn bit(&self, id: u8) -> Result<bool, MonitorError> {
        if id >= self.width {
            return Err(MonitorError::OutOfRangeId { id, width: self.width });
        }
        Ok(self.bits & (1 << id) != 0)
    }

    pub fn cleared(&self, id: u8) -> Self {
        Self { bits: self.bits & !(1 << id), width: self.width }
    }

    pub fn is_all_set(&self) -> bool {
        *self == Self::all_set(self.width)
    }

    pub fn raw(&self) -> u16 {
        self.bits
    }

    pub fn width(&self) -> u8 {
        self.width
    }
}

/// Single-bit mask for a task id, the unit of availability bookkeeping.
pub fn mask(id: u8, width: u8) -> Result<u16, MonitorError> {
    if id >= width || width > 16 {
        return Err(MonitorError::OutOfRangeId { id, width });
    }
    Ok(1 << id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TriggerState {
    Exec,
    Trigger,
}

impl TriggerState {
    pub fn token(&self) -> &'static str {
        match self {
            TriggerState::Exec => "EXEC",
            TriggerState::Trigger => "TRIGGER",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Some(match s {
            "EXEC" => TriggerState::Exec,
            "TRIGGER" => TriggerState::Trigger,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArState {
    Exec,
    Revoke,
    Reinstate,
}

impl ArState {
    pub fn token(&self) -> &'static str {
        match self {
            ArState::Exec => "EXEC",
            ArState::Revoke => "REVOKE",
            ArState::Reinstate => "REINSTATE",
        }
    }

    pub fn from_token(s: &str) -> Option<Self> {
        Some(match s {
            "EXEC" => ArState::Exec,
            "REVOKE" => ArState::Revoke,
            "REINSTATE" => ArState::Reinstate,
            _ => return None,
        })
    }
}

/// Registered monitor state, held across a cycle. `violation_pair` is a pure
/// function of the current snapshot, recomputed every step and never carried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorState {
    pub trigger_state: TriggerState,
    pub ar_state: ArState,
    pub ar_en: ArEnable,
    pub latched_task: Option<u8>,
    pub violation_pair: bool,
}

impl MonitorState {
    pub fn reset(width: u8) -> Self {
        Self {
            trigger_state: TriggerState::Exec,
            ar_state: ArState::Exec,
            ar_en: ArEnable::all_set(width),
            latched_task: None,
            violation_pair: false,
        }
    }
}

/// Signals the monitor drives during the current cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonitorOutput {
    /// Level of the trigger line this cycle (state of the trigger FSM).
    pub trigger: bool,
    /// Pulses exactly on the Exec -> Trigger transition.
    pub assert_nmi: bool,
    /// Gates the cycle's pending memory write.
    pub block_write: bool,
}

/// Raw inputs of the trigger FSM, one combination per cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TriggerInputs {
    pub violation_im: bool,
    pub violation_pair: bool,
    pub irq: bool,
    pub reset: bool,
    pub revoked_reentry: bool,
}

/// Raw inputs of the availability FSM.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArInputs {
    pub trigger: bool,
    pub pc_at_sw_exit: bool,
    pub latched_valid: bool,
}

/// Availability-word update performed on a transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArUpdate {
    Keep,
    ClearLatched,
    SetAll,
}

/// Seeded single-condition mutations of the transition logic, one per
/// monitored property, for sensitivity testing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MonitorFault {
    /// Access violations no longer raise the trigger (eq4).
    DropAccessTrigger,
    /// Integrity-monitor violations no longer raise the trigger (eq5).
    DropImTrigger,
    /// Interrupt acceptance no longer clears the trigger (eq6).
    StuckTrigger,
    /// A trigger no longer revokes the latched task (eq7).
    SkipRevoke,
    /// Re-entry of a revoked task no longer raises the trigger (eq8).
    DropReentryTrigger,
    /// Retiring the updater exit no longer reinstates the region (eq9).
    SkipReinstate,
}

pub const ALL_FAULTS: [MonitorFault; 6] = [
    MonitorFault::DropAccessTrigger,
    MonitorFault::DropImTrigger,
    MonitorFault::StuckTrigger,
    MonitorFault::SkipRevoke,
    MonitorFault::DropReentryTrigger,
    MonitorFault::SkipReinstate,
];

/// Trigger FSM next-state function. Reset dominates; in `Exec` any of the
/// three violation inputs moves to `Trigger`; `Trigger` holds until the MCU's
/// interrupt acknowledge.
pub fn trigger_next(
    state: TriggerState,
    inputs: TriggerInputs,
    fault: Option<MonitorFault>,
) -> TriggerState {
    if inputs.reset {
        return TriggerState::Exec;
    }
    match state {
        TriggerState::Exec => {
            let vp = inputs.violation_pair && fault != Some(MonitorFault::DropAccessTrigger);
            let vi = inputs.violation_im && fault != Some(MonitorFault::DropImTrigger);
            let re = inputs.revoked_reentry && fault != Some(MonitorFault::DropReentryTrigger);
            if vp || vi || re {
                TriggerState::Trigger
            } else {
                TriggerState::Exec
            }
        }
        TriggerState::Trigger => {
            if inputs.irq && fault != Some(MonitorFault::StuckTrigger) {
                TriggerState::Exec
            } else {
                TriggerState::Trigger
            }
        }
    }
}

/// Availability FSM next-state function. `Revoke` and `Reinstate` last one
/// cycle; the availability-word update lands on the edge into them so the new
/// value is visible in the very next state. A pending trigger outranks the
/// updater exit.
pub fn ar_next(state: ArState, inputs: ArInputs, fault: Option<MonitorFault>) -> (ArState, ArUpdate) {
    match state {
        ArState::Exec => {
            if inputs.trigger && inputs.latched_valid && fault != Some(MonitorFault::SkipRevoke) {
                (ArState::Revoke, ArUpdate::ClearLatched)
            } else if inputs.pc_at_sw_exit && fault != Some(MonitorFault::SkipReinstate) {
                (ArState::Reinstate, ArUpdate::SetAll)
            } else {
                (ArState::Exec, ArUpdate::Keep)
            }
        }
        ArState::Revoke | ArState::Reinstate => (ArState::Exec, ArUpdate::Keep),
    }
}

/// Access-control predicate over one cycle's signals: any read or write that
/// targets the protected data region, or any write into program memory, from
/// code outside the trusted software region.
pub fn check_access(snap: &SignalSnapshot, layout: &MemoryLayout) -> bool {
    let outside_sw = !layout.sw.contains(snap.pc);
    let dpair_access = (snap.r_en || snap.w_en) && layout.d_pair.contains(snap.d_addr);
    let pmem_write = snap.w_en && layout.pmem.contains(snap.d_addr);
    (dpair_access || pmem_write) && outside_sw
}

/// Advances the monitor by one cycle. Returns the next registered state and
/// the output signals driven during this cycle.
pub fn step_monitor(
    m: &MonitorState,
    snap: &SignalSnapshot,
    violation_im: bool,
    layout: &MemoryLayout,
    fault: Option<MonitorFault>,
) -> (MonitorState, MonitorOutput) {
    let violation_pair = check_access(snap, layout);
    let task_here = layout.task_of(snap.pc);
    let revoked_reentry = match task_here {
        Some(i) => !m.ar_en.bit(i).unwrap_or(true),
        None => false,
    };

    let trigger_level = m.trigger_state == TriggerState::Trigger;
    let next_trigger = trigger_next(
        m.trigger_state,
        TriggerInputs {
            violation_im,
            violation_pair,
            irq: snap.irq,
            reset: false,
            revoked_reentry,
        },
        fault,
    );
    let assert_nmi = m.trigger_state == TriggerState::Exec && next_trigger == TriggerState::Trigger;

    // The violator's id is latched at the trigger edge; the interrupt and the
    // revoke happen on later cycles, after the pc has left the task.
    let latched_task = if assert_nmi { task_here } else { m.latched_task };

    let (next_ar, update) = ar_next(
        m.ar_state,
        ArInputs {
            trigger: trigger_level,
            pc_at_sw_exit: snap.pc == layout.sw_exit,
            latched_valid: m.latched_task.is_some(),
        },
        fault,
    );
    let next_ar_en = match update {
        ArUpdate::Keep => m.ar_en,
        ArUpdate::ClearLatched => m.ar_en.cleared(m.latched_task.expect("revoke without latch")),
        ArUpdate::SetAll => ArEnable::all_set(m.ar_en.width()),
    };

    let block_write = snap.w_en
        && (layout.pmem.contains(snap.d_addr) || layout.d_pair.contains(snap.d_addr))
        && !layout.sw.contains(snap.pc);

    (
        MonitorState {
            trigger_state: next_trigger,
            ar_state: next_ar,
            ar_en: next_ar_en,
            latched_task,
            violation_pair,
        },
        MonitorOutput { trigger: trigger_level, assert_nmi, block_write },
    )
}

/// Whether a task currently belongs to the availability region.
pub fn is_available(m: &MonitorState, task: u8) -> Result<bool, MonitorError> {
    m.ar_en.bit(task)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{Interval, MemoryLayout, TaskBounds};
    use crate::machine::InstrClass;
    use proptest::prelude::*;

    fn layout(n: u8) -> MemoryLayout {
        let mut bounds = Vec::new();
        for i in 0..n {
            let min = 0x8100 + 0x0200 * u16::from(i);
            bounds.push(TaskBounds { t_min: min, t_max: min + 0x01FF });
        }
        MemoryLayout {
            pmem: Interval::new(0x8000, 0xBFFF),
            dmem: Interval::new(0x0000, 0x2FFF),
            tr: Interval::new(0x8100, 0x9FFF),
            rtos: Interval::new(0x8000, 0x80FF),
            sw: Interval::new(0xA000, 0xA3FF),
            d: Interval::new(0x0100, 0x28FF),
            d_pair: Interval::new(0x2900, 0x29FF),
            sw_exit: 0xA0FC,
            trampoline_entry: 0xA000,
            updater_entry: 0xA040,
            n_tasks: n,
            task_bounds: bounds,
            key: [0; 16],
        }
    }

    fn snap(pc: u16, w_en: bool, r_en: bool, d_addr: u16, irq: bool) -> SignalSnapshot {
        SignalSnapshot {
            cycle: 0,
            pc,
            w_en,
            r_en,
            d_addr,
            irq,
            instr_class: InstrClass::Plain,
        }
    }

    #[test]
    fn mask_values() {
        assert_eq!(mask(0, 4).unwrap(), 0b0001);
        assert_eq!(mask(3, 4).unwrap(), 0b1000);
        assert!(mask(4, 4).is_err());
        for i in 0..4u8 {
            for j in 0..4u8 {
                if i != j {
                    assert_eq!(mask(i, 4).unwrap() & mask(j, 4).unwrap(), 0);
                }
            }
        }
    }

    #[test]
    fn access_checks() {
        let l = layout(2);
        // Write to protected data from a task: violation.
        assert!(check_access(&snap(0x8100, true, false, 0x2910, false), &l));
        // Same write from trusted software: allowed.
        assert!(!check_access(&snap(0xA040, true, false, 0x2910, false), &l));
        // No memory access at all.
        assert!(!check_access(&snap(0x8100, false, false, 0, false), &l));
        // Write into program memory from the scheduler region: violation.
        assert!(check_access(&snap(0x8004, true, false, 0x8100, false), &l));
        // Read of protected data from a task: violation.
        assert!(check_access(&snap(0x8100, false, true, 0x2902, false), &l));
    }

    #[test]
    fn im_violation_raises_trigger_next_cycle() {
        let l = layout(2);
        let m0 = MonitorState::reset(2);
        let (m1, out0) = step_monitor(&m0, &snap(0x8100, false, false, 0, false), true, &l, None);
        assert!(!out0.trigger, "trigger raises on the next state, not this one");
        assert!(out0.assert_nmi);
        assert_eq!(m1.trigger_state, TriggerState::Trigger);
        assert_eq!(m1.latched_task, Some(0));
        let (m2, out1) = step_monitor(&m1, &snap(0xA000, false, false, 0, true), false, &l, None);
        assert!(out1.trigger);
        assert_eq!(m2.trigger_state, TriggerState::Exec, "irq clears the trigger");
    }

    #[test]
    fn trigger_revokes_latched_task() {
        let l = layout(4);
        let m0 = MonitorState::reset(4);
        // Violation from task 2.
        let (m1, _) = step_monitor(&m0, &snap(0x8500, true, false, 0x2910, false), false, &l, None);
        assert_eq!(m1.latched_task, Some(2));
        // Interrupt-entry cycle: the availability FSM sees the trigger.
        let (m2, _) = step_monitor(&m1, &snap(0xA000, false, false, 0, true), false, &l, None);
        assert_eq!(m2.ar_state, ArState::Revoke);
        assert_eq!(m2.ar_en.raw() & mask(2, 4).unwrap(), 0);
        assert!(m2.ar_en.bit(0).unwrap() && m2.ar_en.bit(1).unwrap() && m2.ar_en.bit(3).unwrap());
        // One-cycle state.
        let (m3, _) = step_monitor(&m2, &snap(0xA004, false, false, 0, false), false, &l, None);
        assert_eq!(m3.ar_state, ArState::Exec);
    }

    #[test]
    fn revoked_reentry_raises_trigger() {
        let l = layout(2);
        let mut m = MonitorState::reset(2);
        m.ar_en = m.ar_en.cleared(1);
        let (m1, _) = step_monitor(&m, &snap(0x8304, false, false, 0, false), false, &l, None);
        assert_eq!(m1.trigger_state, TriggerState::Trigger);
    }

    #[test]
    fn sw_exit_reinstates_all() {
        let l = layout(2);
        let mut m = MonitorState::reset(2);
        m.ar_en = m.ar_en.cleared(0);
        m.latched_task = None;
        let (m1, _) = step_monitor(&m, &snap(l.sw_exit, false, false, 0, false), false, &l, None);
        assert_eq!(m1.ar_state, ArState::Reinstate);
        assert!(m1.ar_en.is_all_set());
    }

    #[test]
    fn benign_cycle_is_a_self_loop() {
        let l = layout(2);
        let m0 = MonitorState::reset(2);
        let (m1, out) = step_monitor(&m0, &snap(0x8100, false, false, 0, false), false, &l, None);
        assert_eq!(m1, m0);
        assert!(!out.trigger && !out.assert_nmi && !out.block_write);
    }

    #[test]
    fn availability_queries() {
        let l = layout(3);
        let m0 = MonitorState::reset(3);
        for t in 0..3 {
            assert!(is_available(&m0, t).unwrap());
        }
        assert!(is_available(&m0, 3).is_err());
        let (m1, _) = step_monitor(&m0, &snap(0x8500, true, false, 0x2910, false), false, &l, None);
        let (m2, _) = step_monitor(&m1, &snap(0xA000, false, false, 0, true), false, &l, None);
        assert!(!is_available(&m2, 2).unwrap());
        assert!(is_available(&m2, 0).unwrap() && is_available(&m2, 1).unwrap());
    }

    #[test]
    fn rtos_origin_violation_latches_none() {
        let l = layout(2);
        let m0 = MonitorState::reset(2);
        let (m1, _) = step_monitor(&m0, &snap(0x8004, true, false, 0x2910, false), false, &l, None);
        assert_eq!(m1.trigger_state, TriggerState::Trigger);
        assert_eq!(m1.latched_task, None);
        // With no latch, the availability FSM does not revoke.
        let (m2, _) = step_monitor(&m1, &snap(0xA000, false, false, 0, true), false, &l, None);
        assert_eq!(m2.ar_state, ArState::Exec);
        assert!(m2.ar_en.is_all_set());
    }

    #[test]
    fn block_write_gates_protected_targets_only() {
        let l = layout(2);
        let m = MonitorState::reset(2);
        let (_, out) = step_monitor(&m, &snap(0x8100, true, false, 0x2910, false), false, &l, None);
        assert!(out.block_write);
        let (_, out) = step_monitor(&m, &snap(0x8100, true, false, 0x0400, false), false, &l, None);
        assert!(!out.block_write, "plain data writes pass through");
        let (_, out) = step_monitor(&m, &snap(0xA040, true, false, 0x8100, false), false, &l, None);
        assert!(!out.block_write, "trusted software may patch program memory");
    }

    proptest! {
        /// Without an updater exit or reset, availability bits only ever clear.
        #[test]
        fn ar_bits_non_increasing(seq in proptest::collection::vec((0u8..4, any::<bool>(), any::<bool>()), 1..64)) {
            let l = layout(4);
            let mut m = MonitorState::reset(4);
            let mut prev = m.ar_en.raw();
            for (task, violate, irq) in seq {
                let pc = 0x8100 + 0x0200 * u16::from(task);
                let s = snap(pc, violate, false, if violate { 0x2910 } else { 0 }, irq);
                let (next, _) = step_monitor(&m, &s, false, &l, None);
                let now = next.ar_en.raw();
                prop_assert_eq!(now & !prev, 0, "bits may only clear");
                prev = now;
                m = next;
            }
        }
    }
}
