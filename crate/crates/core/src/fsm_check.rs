//! Exhaustive verification of the monitor state machines.
//!
//! Every (state, input-combination) pair of both FSMs is driven through the
//! production transition functions and compared against an independently
//! written expected-edge table. The trigger FSM has 2 states x 32 input
//! combinations, the availability FSM 3 states x 8; a mismatch names the
//! offending edge, its input vector, and the property the edge realizes.

use std::fmt;

use crate::pair::{
    ar_next, trigger_next, ArInputs, ArState, ArUpdate, MonitorFault, TriggerInputs, TriggerState,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EdgeMismatch {
    Trigger {
        state: TriggerState,
        inputs: TriggerInputs,
        expected: TriggerState,
        got: TriggerState,
        governs: &'static str,
    },
    Ar {
        state: ArState,
        inputs: ArInputs,
        expected: (ArState, ArUpdate),
        got: (ArState, ArUpdate),
        governs: &'static str,
    },
}

impl fmt::Display for EdgeMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeMismatch::Trigger { state, inputs, expected, got, governs } => write!(
                f,
                "trigger fsm: state {:?} inputs {:?} expected {:?} got {:?} ({governs})",
                state, inputs, expected, got
            ),
            EdgeMismatch::Ar { state, inputs, expected, got, governs } => write!(
                f,
                "availability fsm: state {:?} inputs {:?} expected {:?} got {:?} ({governs})",
                state, inputs, expected, got
            ),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FsmVerifyReport {
    pub trigger_edges: usize,
    pub ar_edges: usize,
    pub mismatches: Vec<EdgeMismatch>,
}

impl FsmVerifyReport {
    pub fn clean(&self) -> bool {
        self.mismatches.is_empty()
    }
}

impl fmt::Display for FsmVerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "trigger fsm: {} edges checked; availability fsm: {} edges checked",
            self.trigger_edges, self.ar_edges
        )?;
        if self.clean() {
            write!(f, "0 mismatching edges")
        } else {
            writeln!(f, "{} mismatching edges:", self.mismatches.len())?;
            for m in &self.mismatches {
                writeln!(f, "  {m}")?;
            }
            Ok(())
        }
    }
}

/// Expected trigger-FSM edge, written from the edge conditions directly:
/// reset dominates, any violation input leaves Exec, interrupt acceptance
/// leaves Trigger.
fn expected_trigger(state: TriggerState, i: TriggerInputs) -> TriggerState {
    if i.reset {
        return TriggerState::Exec;
    }
    match state {
        TriggerState::Exec => {
            if i.violation_pair || i.violation_im || i.revoked_reentry {
                TriggerState::Trigger
            } else {
                TriggerState::Exec
            }
        }
        TriggerState::Trigger => {
            // The trigger line is high in this state, so `trigger && irq`
            // reduces to the irq input alone.
            if i.irq {
                TriggerState::Exec
            } else {
                TriggerState::Trigger
            }
        }
    }
}

/// Expected availability-FSM edge: a pending trigger with a valid latch
/// revokes; the updater exit reinstates; both action states last one cycle.
fn expected_ar(state: ArState, i: ArInputs) -> (ArState, ArUpdate) {
    match state {
        ArState::Exec => {
            if i.trigger && i.latched_valid {
                (ArState::Revoke, ArUpdate::ClearLatched)
            } else if i.pc_at_sw_exit {
                (ArState::Reinstate, ArUpdate::SetAll)
            } else {
                (ArState::Exec, ArUpdate::Keep)
            }
        }
        ArState::Revoke | ArState::Reinstate => (ArState::Exec, ArUpdate::Keep),
    }
}

fn trigger_edge_property(state: TriggerState, i: TriggerInputs) -> &'static str {
    if i.reset {
        return "reset";
    }
    match state {
        TriggerState::Exec => {
            if i.violation_pair {
                "eq4"
            } else if i.violation_im {
                "eq5"
            } else if i.revoked_reentry {
                "eq8"
            } else {
                "benign self-loop"
            }
        }
        TriggerState::Trigger => {
            if i.irq {
                "eq6"
            } else {
                "trigger hold"
            }
        }
    }
}

fn ar_edge_property(state: ArState, i: ArInputs) -> &'static str {
    match state {
        ArState::Exec => {
            if i.trigger && i.latched_valid {
                "eq7"
            } else if i.pc_at_sw_exit {
                "eq9"
            } else {
                "benign self-loop"
            }
        }
        ArState::Revoke | ArState::Reinstate => "single-cycle action state",
    }
}

/// Drives every edge of both FSMs and reports mismatches against the
/// expected tables. `fault` injects one of the seeded mutations; `None`
/// verifies the production logic.
pub fn fsm_verify_with(fault: Option<MonitorFault>) -> FsmVerifyReport {
    let mut mismatches = Vec::new();
    let mut trigger_edges = 0;

    for state in [TriggerState::Exec, TriggerState::Trigger] {
        for bits in 0u8..32 {
            let inputs = TriggerInputs {
                violation_im: bits & 1 != 0,
                violation_pair: bits & 2 != 0,
                irq: bits & 4 != 0,
                reset: bits & 8 != 0,
                revoked_reentry: bits & 16 != 0,
            };
            trigger_edges += 1;
            let expected = expected_trigger(state, inputs);
            let got = trigger_next(state, inputs, fault);
            if got != expected {
                mismatches.push(EdgeMismatch::Trigger {
                    state,
                    inputs,
                    expected,
                    got,
                    governs: trigger_edge_property(state, inputs),
                });
            }
        }
    }

    let mut ar_edges = 0;
    for state in [ArState::Exec, ArState::Revoke, ArState::Reinstate] {
        for bits in 0u8..8 {
            let inputs = ArInputs {
                trigger: bits & 1 != 0,
                pc_at_sw_exit: bits & 2 != 0,
                latched_valid: bits & 4 != 0,
            };
            ar_edges += 1;
            let expected = expected_ar(state, inputs);
            let got = ar_next(state, inputs, fault);
            if got != expected {
                mismatches.push(EdgeMismatch::Ar {
                    state,
                    inputs,
                    expected,
                    got,
                    governs: ar_edge_property(state, inputs),
                });
            }
        }
    }

    FsmVerifyReport { trigger_edges, ar_edges, mismatches }
}

/// Exhaustive check of the production monitor FSMs.
pub fn fsm_verify() -> FsmVerifyReport {
    fsm_verify_with(None)
}
