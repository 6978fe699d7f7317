//! Deterministic simulator of a small 16-bit MCU extended with the PAIR
//! availability/integrity monitor, plus a finite-trace LTL checker for the
//! monitor's guarantees.
//!
//! The crate is organized around a per-cycle pipeline: the machine retires one
//! instruction ([`machine`]), the integrity monitor classifies it ([`im`]),
//! the PAIR hardware model updates its two state machines and gates the
//! pending memory write ([`pair`]), and the composed simulation ([`sim`])
//! emits one trace record per cycle ([`trace`]). Temporal properties over
//! those traces live in [`ltl`], and [`fsm_check`] exhaustively compares the
//! monitor state machines against their expected transition relations.
//!
//! [`scenario`] ships a catalog of benign and attack workloads; the `pair-sim`
//! binary exposes the whole thing on the command line.

pub mod asm;
pub mod fsm_check;
pub mod im;
pub mod layout;
pub mod ltl;
pub mod machine;
pub mod pair;
pub mod report;
pub mod rtos;
pub mod scenario;
pub mod sim;
pub mod trace;
